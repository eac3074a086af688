//! Virtual camera: oblique capture of the screen, four-point perspective
//! calibration, rectification and background subtraction.
//!
//! Pixel `(x, y)` of an image has its center at continuous coordinate
//! `(x, y)`. A homography maps source-image coordinates to destination-image
//! coordinates; warping samples the source at the inverse-mapped position.

use nalgebra::{Matrix3, SMatrix, SVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::RealGrid;
use crate::hologram::normalize_minmax;

pub type Point2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    /// Normalizes so the bottom-right entry is 1 and checks invertibility.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self> {
        let s = m[2][2];
        if s == 0.0 || !s.is_finite() {
            return Err(Error::Degenerate("homography has zero bottom-right entry".into()));
        }
        let mut n = m;
        for row in &mut n {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let h = Self { m: n };
        if !(h.det().abs() > 1e-12) || n.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("homography is singular".into()));
        }
        Ok(h)
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    fn as_na(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.m[r][c])
    }

    pub fn det(&self) -> f64 {
        self.as_na().determinant()
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let m = &self.m;
        let w = m[2][0] * p[0] + m[2][1] * p[1] + m[2][2];
        [
            (m[0][0] * p[0] + m[0][1] * p[1] + m[0][2]) / w,
            (m[1][0] * p[0] + m[1][1] * p[1] + m[1][2]) / w,
        ]
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .as_na()
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("homography is singular".into()))?;
        Self::from_matrix(std::array::from_fn(|r| std::array::from_fn(|c| inv[(r, c)])))
    }

    pub fn compose(&self, then: &Self) -> Result<Self> {
        let p = then.as_na() * self.as_na();
        Self::from_matrix(std::array::from_fn(|r| std::array::from_fn(|c| p[(r, c)])))
    }
}

fn collinear(a: Point2, b: Point2, c: Point2) -> bool {
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let scale = ((b[0] - a[0]).hypot(b[1] - a[1])) * ((c[0] - a[0]).hypot(c[1] - a[1]));
    cross.abs() <= 1e-12 * scale.max(1e-300)
}

/// Exact homography through four correspondences: the 8×8 linear system
/// with `h33 = 1`.
pub fn estimate_homography(src: &[Point2; 4], dst: &[Point2; 4]) -> Result<Homography> {
    for pts in [src, dst] {
        for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
            if collinear(pts[i], pts[j], pts[k]) {
                return Err(Error::Degenerate("three of the four points are collinear".into()));
            }
        }
    }
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let (x, y, u, v) = (s[0], s[1], d[0], d[1]);
        let r = 2 * i;
        a.set_row(r, &SMatrix::<f64, 1, 8>::from_row_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]));
        a.set_row(r + 1, &SMatrix::<f64, 1, 8>::from_row_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]));
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Degenerate("singular correspondence system".into()))?;
    Homography::from_matrix([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])
}

/// Bilinear sample; positions outside `[0, w-1] × [0, h-1]` read as 0.
#[inline]
fn sample(img: &RealGrid, u: f64, v: f64) -> f64 {
    let (w, h) = img.dims();
    if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
        return 0.0;
    }
    let (x0, y0) = (u.floor() as usize, v.floor() as usize);
    let (fx, fy) = (u - x0 as f64, v - y0 as f64);
    let mut top = *img.get(x0, y0);
    if fx != 0.0 {
        top = top * (1.0 - fx) + img.get(x0 + 1, y0) * fx;
    }
    if fy == 0.0 {
        return top;
    }
    let mut bottom = *img.get(x0, y0 + 1);
    if fx != 0.0 {
        bottom = bottom * (1.0 - fx) + img.get(x0 + 1, y0 + 1) * fx;
    }
    top * (1.0 - fy) + bottom * fy
}

/// Warps into an output of the same size as `img`.
pub fn warp_image(img: &RealGrid, h: &Homography) -> Result<RealGrid> {
    warp_image_to(img, h, img.width(), img.height())
}

/// `out(p) = img(H⁻¹ p)` over a `width × height` output.
pub fn warp_image_to(img: &RealGrid, h: &Homography, width: usize, height: usize) -> Result<RealGrid> {
    let inv = h.inverse()?;
    Ok(RealGrid::from_fn(width, height, |x, y| {
        let [u, v] = inv.apply([x as f64, y as f64]);
        sample(img, u, v)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptureConfig {
    /// Maps rectified (screen) pixels to raw camera pixels.
    pub homography: Homography,
    pub raw_width: usize,
    pub raw_height: usize,
    pub noise_sigma: f64,
    pub background_offset: f64,
    pub seed: u64,
}

impl CaptureConfig {
    pub const DEFAULT_NOISE: f64 = 0.01;
    pub const DEFAULT_OFFSET: f64 = 0.01;

    /// A camera looking at a `width × height` screen from an oblique angle.
    /// The raw frame is 30% larger than the screen so the keystoned view is
    /// never minified.
    pub fn oblique(width: usize, height: usize) -> Result<Self> {
        let rw = (width as f64 * 1.3).round() as usize;
        let rh = (height as f64 * 1.3).round() as usize;
        let (w, h) = ((width - 1) as f64, (height - 1) as f64);
        let (fw, fh) = (rw as f64, rh as f64);
        let src = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]];
        let dst = [
            [0.06 * fw, 0.10 * fh],
            [0.94 * fw, 0.04 * fh],
            [0.97 * fw, 0.96 * fh],
            [0.03 * fw, 0.90 * fh],
        ];
        Ok(Self {
            homography: estimate_homography(&src, &dst)?,
            raw_width: rw,
            raw_height: rh,
            noise_sigma: Self::DEFAULT_NOISE,
            background_offset: Self::DEFAULT_OFFSET,
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise sigma must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.background_offset) {
            return Err(Error::invalid("background offset must lie in [0, 1)"));
        }
        if self.raw_width == 0 || self.raw_height == 0 {
            return Err(Error::invalid("raw frame must be non-empty"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Raw camera frame of a caustic: normalize, keystone, add the background
/// level and sensor noise, clip.
pub fn capture(caustic: &RealGrid, cfg: &CaptureConfig) -> Result<RealGrid> {
    cfg.validate()?;
    let clean = normalize_minmax(caustic);
    let mut raw = warp_image_to(&clean, &cfg.homography, cfg.raw_width, cfg.raw_height)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    for v in raw.as_mut_slice() {
        let n = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        *v = (*v + cfg.background_offset + n).clamp(0.0, 1.0);
    }
    Ok(raw)
}

/// Frame captured with no caustic light, used for background subtraction.
pub fn capture_background(width: usize, height: usize, cfg: &CaptureConfig) -> Result<RealGrid> {
    capture(&RealGrid::zeros(width, height), cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rectified {
    /// Inverted so shadows are high: the target-image convention.
    pub values: RealGrid,
    /// The background-subtracted image was constant and was not rescaled.
    pub degenerate: bool,
}

/// Unwarps `raw` and `background` into a `width × height` frontal view,
/// subtracts the background (clamped at zero), rescales to `[0, 1]` and
/// inverts.
pub fn rectify(
    raw: &RealGrid,
    h_est: &Homography,
    background: &RealGrid,
    width: usize,
    height: usize,
) -> Result<Rectified> {
    raw.ensure_same_dims(background)?;
    let unwarp = h_est.inverse()?;
    let frontal = warp_image_to(raw, &unwarp, width, height)?;
    let bg = warp_image_to(background, &unwarp, width, height)?;
    let diff = RealGrid::from_vec(
        width,
        height,
        frontal
            .as_slice()
            .iter()
            .zip(bg.as_slice())
            .map(|(a, b)| (a - b).max(0.0))
            .collect(),
    )?;
    let (min, _, max, _) = diff.extrema();
    let degenerate = !(max > min);
    let scaled = if degenerate { diff } else { diff.map(|v| (v - min) / (max - min)) };
    Ok(Rectified {
        values: scaled.map(|v| 1.0 - v),
        degenerate,
    })
}

/// Simulated checkerboard calibration: the outer corners of a board seen
/// frontally are matched with where the camera images them.
pub fn calibrate(cfg: &CaptureConfig, width: usize, height: usize) -> Result<Homography> {
    let (w, h) = ((width - 1) as f64, (height - 1) as f64);
    let frontal = [
        [0.125 * w, 0.125 * h],
        [0.875 * w, 0.125 * h],
        [0.875 * w, 0.875 * h],
        [0.125 * w, 0.875 * h],
    ];
    let observed = frontal.map(|p| cfg.homography.apply(p));
    estimate_homography(&frontal, &observed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_translation_estimates() {
        let src = [[0.0, 0.0], [4.0, 0.5], [3.5, 5.0], [-0.5, 3.0]];
        let h = estimate_homography(&src, &src).unwrap();
        for (a, b) in h.matrix().iter().flatten().zip(Homography::identity().matrix().iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
        let dst = src.map(|p| [p[0] + 2.5, p[1] - 1.0]);
        let t = estimate_homography(&src, &dst).unwrap().matrix();
        let want = Homography::translation(2.5, -1.0).matrix();
        for (a, b) in t.iter().flatten().zip(want.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_points_rejected() {
        let src = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [0.0, 1.0]];
        assert!(matches!(estimate_homography(&src, &src), Err(Error::Degenerate(_))));
    }

    #[test]
    fn identity_warp_is_exact() {
        let img = RealGrid::from_fn(7, 5, |x, y| (x * 3 + y * 11) as f64 * 0.013);
        assert_eq!(warp_image(&img, &Homography::identity()).unwrap(), img);
    }

    #[test]
    fn integer_translation_shifts() {
        let img = RealGrid::from_fn(6, 6, |x, y| (x + 10 * y) as f64);
        let out = warp_image(&img, &Homography::translation(2.0, 1.0)).unwrap();
        for y in 0..6 {
            for x in 0..6 {
                let want = if x >= 2 && y >= 1 { *img.get(x - 2, y - 1) } else { 0.0 };
                assert_eq!(*out.get(x, y), want);
            }
        }
    }

    #[test]
    fn raw_equal_background_is_degenerate() {
        let cfg = CaptureConfig::oblique(16, 16).unwrap();
        let bg = capture_background(16, 16, &cfg).unwrap();
        let r = rectify(&bg, &cfg.homography, &bg, 16, 16).unwrap();
        assert!(r.degenerate);
        assert!(r.values.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rectify_dimension_mismatch() {
        let a = RealGrid::zeros(4, 4);
        let b = RealGrid::zeros(4, 5);
        assert!(matches!(
            rectify(&a, &Homography::identity(), &b, 4, 4),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn calibration_recovers_true_view() {
        let cfg = CaptureConfig::oblique(64, 48).unwrap();
        let est = calibrate(&cfg, 64, 48).unwrap();
        for (a, b) in est.matrix().iter().flatten().zip(cfg.homography.matrix().iter().flatten()) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }
}
