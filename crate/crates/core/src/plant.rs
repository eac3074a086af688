//! Simulated liquid surface and caustic optics.
//!
//! The time-averaged pressure pushes the oil surface down by an amount
//! proportional to a Gaussian-smoothed radiation-pressure proxy `p²`.
//! Collimated light enters from below, refracts from oil into air at the
//! deformed surface and lands on a screen `screen_distance` above it, where
//! each ray is deposited with bilinear weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{AmplitudeField, SamplingPlane};
use crate::grid::{Grid, RealGrid};

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Surface depression per unit of smoothed `p²`, in m / (pressure unit)².
    pub coupling: f64,
    /// Standard deviation of the smoothing kernel, meters.
    pub smoothing_radius: f64,
    pub refractive_index: f64,
    /// Height of the screen above the undisturbed surface, meters.
    pub screen_distance: f64,
    /// Rays per surface cell along each axis (`n × n` rays per cell).
    pub rays_per_cell: usize,
}

impl PlantParams {
    pub const DEFAULT_COUPLING: f64 = 3.25e-7;

    pub fn validate(&self) -> Result<()> {
        if !(self.coupling >= 0.0) || !self.coupling.is_finite() {
            return Err(Error::invalid("coupling must be finite and non-negative"));
        }
        if !(self.smoothing_radius >= 0.0) || !self.smoothing_radius.is_finite() {
            return Err(Error::invalid("smoothing radius must be finite and non-negative"));
        }
        if !(self.refractive_index > 1.0 && self.refractive_index < 2.0) {
            return Err(Error::invalid("refractive index must lie in (1, 2)"));
        }
        if !(self.screen_distance > 0.0) {
            return Err(Error::invalid("screen distance must be positive"));
        }
        if self.rays_per_cell == 0 {
            return Err(Error::invalid("rays per cell must be at least 1"));
        }
        Ok(())
    }
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            coupling: Self::DEFAULT_COUPLING,
            smoothing_radius: 0.012,
            refractive_index: 1.40,
            screen_distance: 0.10,
            rays_per_cell: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    pub plane: SamplingPlane,
    /// Surface height in meters; negative values are depressions.
    pub h: RealGrid,
    pub mean_free: bool,
}

impl HeightField {
    pub fn flat(plane: SamplingPlane) -> Self {
        Self {
            plane,
            h: RealGrid::zeros(plane.width(), plane.height()),
            mean_free: false,
        }
    }

    pub fn without_mean(&self) -> Self {
        let mean = self.h.mean();
        Self {
            plane: self.plane,
            h: self.h.map(|v| v - mean),
            mean_free: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausticImage {
    /// Deposited ray energy per screen pixel.
    pub values: RealGrid,
    /// Physical screen size, meters.
    pub extent: [f64; 2],
    pub launched: usize,
    pub landed: usize,
}

fn gaussian_kernel(sigma_px: f64) -> Vec<f64> {
    if sigma_px <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma_px).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma_px).powi(2)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    for v in &mut k {
        *v /= total;
    }
    k
}

/// Separable convolution with edge replication.
fn blur(src: &RealGrid, kx: &[f64], ky: &[f64]) -> RealGrid {
    let (w, h) = src.dims();
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let rows = RealGrid::from_fn(w, h, |x, y| {
        kx.iter()
            .enumerate()
            .map(|(i, k)| {
                let sx = (x as isize + i as isize - rx).clamp(0, w as isize - 1) as usize;
                k * src.get(sx, y)
            })
            .sum()
    });
    RealGrid::from_fn(w, h, |x, y| {
        ky.iter()
            .enumerate()
            .map(|(i, k)| {
                let sy = (y as isize + i as isize - ry).clamp(0, h as isize - 1) as usize;
                k * rows.get(x, sy)
            })
            .sum()
    })
}

/// `h = -α · (G_σ ∗ p²)`.
pub fn deform_surface(p_avg: &AmplitudeField, params: &PlantParams) -> Result<HeightField> {
    params.validate()?;
    if !p_avg.values.all_finite() {
        return Err(Error::invalid("pressure field must be finite"));
    }
    let (dx, dy) = p_avg.plane.spacing();
    let kx = gaussian_kernel(params.smoothing_radius / dx);
    let ky = gaussian_kernel(params.smoothing_radius / dy);
    let squared = p_avg.values.map(|p| p * p);
    let smoothed = blur(&squared, &kx, &ky);
    Ok(HeightField {
        plane: p_avg.plane,
        h: smoothed.map(|v| -params.coupling * v),
        mean_free: false,
    })
}

/// Height gradient `(∂h/∂x, ∂h/∂y)` by central differences, one-sided at
/// the borders.
fn height_gradient(h: &HeightField) -> Result<Grid<[f64; 2]>> {
    let (w, ht) = h.h.dims();
    if w < 2 || ht < 2 {
        return Err(Error::invalid("height field needs at least 2x2 samples"));
    }
    let (dx, dy) = h.plane.spacing();
    let g = &h.h;
    Ok(Grid::from_fn(w, ht, |x, y| {
        let gx = if x == 0 {
            (g.get(1, y) - g.get(0, y)) / dx
        } else if x == w - 1 {
            (g.get(w - 1, y) - g.get(w - 2, y)) / dx
        } else {
            (g.get(x + 1, y) - g.get(x - 1, y)) / (2.0 * dx)
        };
        let gy = if y == 0 {
            (g.get(x, 1) - g.get(x, 0)) / dy
        } else if y == ht - 1 {
            (g.get(x, ht - 1) - g.get(x, ht - 2)) / dy
        } else {
            (g.get(x, y + 1) - g.get(x, y - 1)) / (2.0 * dy)
        };
        [gx, gy]
    }))
}

#[inline]
fn normal_from_gradient(gx: f64, gy: f64) -> Vec3 {
    let n = (gx * gx + gy * gy + 1.0).sqrt();
    [-gx / n, -gy / n, 1.0 / n]
}

/// Upward unit normals of the surface.
pub fn surface_normals(h: &HeightField) -> Result<Grid<Vec3>> {
    Ok(height_gradient(h)?.map(|g| normal_from_gradient(g[0], g[1])))
}

/// Largest surface slope `|∇h|`.
pub fn peak_slope(h: &HeightField) -> Result<f64> {
    Ok(height_gradient(h)?
        .as_slice()
        .iter()
        .map(|g| g[0].hypot(g[1]))
        .fold(0.0, f64::max))
}

/// Slope at which a vertical ray inside the liquid meets the surface at the
/// critical angle.
pub fn critical_slope(refractive_index: f64) -> f64 {
    (1.0 / refractive_index).asin().tan()
}

/// Peak slope, as a fraction of the critical slope, used to set the drive
/// level of a scene.
pub const DEFAULT_SLOPE_FRACTION: f64 = 0.1;

/// Coupling at which `p_avg` deforms the surface up to `fraction` of the
/// critical slope. The other parameters are taken from `params`.
pub fn coupling_for_slope(p_avg: &AmplitudeField, params: &PlantParams, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid("slope fraction must lie in (0, 1)"));
    }
    let unit = PlantParams { coupling: 1.0, ..*params };
    let slope = peak_slope(&deform_surface(p_avg, &unit)?)?;
    if !(slope > 0.0) {
        return Err(Error::Degenerate("pressure field does not deform the surface".into()));
    }
    Ok(fraction * critical_slope(params.refractive_index) / slope)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Refraction {
    Transmitted(Vec3),
    TotalInternalReflection,
}

#[inline]
fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Vector Snell refraction of unit `dir` at a surface with unit `normal`
/// facing the incoming ray (`dir · normal < 0`), from index `n1` into `n2`.
pub fn refract_ray(dir: Vec3, normal: Vec3, n1: f64, n2: f64) -> Refraction {
    let eta = n1 / n2;
    let cos_i = -dot(dir, normal);
    let sin2_t = eta * eta * (1.0 - cos_i * cos_i);
    if sin2_t > 1.0 {
        return Refraction::TotalInternalReflection;
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    let k = eta * cos_i - cos_t;
    Refraction::Transmitted([
        eta * dir[0] + k * normal[0],
        eta * dir[1] + k * normal[1],
        eta * dir[2] + k * normal[2],
    ])
}

/// Bilinear sample of a grid at continuous cell coordinates, clamped to the
/// grid.
fn sample_clamped<const N: usize>(g: &Grid<[f64; N]>, u: f64, v: f64) -> [f64; N] {
    let (w, h) = g.dims();
    let u = u.clamp(0.0, (w - 1) as f64);
    let v = v.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (u.floor() as usize, v.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (u - x0 as f64, v - y0 as f64);
    let mut out = [0.0; N];
    for (i, o) in out.iter_mut().enumerate() {
        let top = g.get(x0, y0)[i] * (1.0 - fx) + g.get(x1, y0)[i] * fx;
        let bottom = g.get(x0, y1)[i] * (1.0 - fx) + g.get(x1, y1)[i] * fx;
        *o = top * (1.0 - fy) + bottom * fy;
    }
    out
}

/// Deposits unit energy at continuous pixel `(u, v)`. Returns false, and
/// deposits nothing, unless all four bilinear taps are on the grid.
#[inline]
fn splat(img: &mut RealGrid, u: f64, v: f64) -> bool {
    let (w, h) = img.dims();
    if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
        return false;
    }
    let (x0, y0) = (u.floor() as usize, v.floor() as usize);
    let (fx, fy) = (u - x0 as f64, v - y0 as f64);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let w11 = fx * fy;
    let w10 = fx - w11;
    let w01 = fy - w11;
    let w00 = 1.0 - fx - w01;
    *img.get_mut(x0, y0) += w00;
    *img.get_mut(x1, y0) += w10;
    *img.get_mut(x0, y1) += w01;
    *img.get_mut(x1, y1) += w11;
    true
}

/// Traces vertical rays through the surface onto the screen.
pub fn render_caustics(h: &HeightField, params: &PlantParams) -> Result<CausticImage> {
    params.validate()?;
    let gradient = height_gradient(h)?;
    let heights = h.h.map(|v| [*v]);
    let plane = h.plane;
    let (w, ht) = h.h.dims();
    let (dx, dy) = plane.spacing();
    let n = params.rays_per_cell;
    let up = [0.0, 0.0, 1.0];
    let mut img = RealGrid::zeros(w, ht);
    let mut landed = 0;
    for y in 0..ht {
        for x in 0..w {
            for j in 0..n {
                for i in 0..n {
                    // continuous cell coordinates of this sub-ray
                    let u = x as f64 - 0.5 + (i as f64 + 0.5) / n as f64;
                    let v = y as f64 - 0.5 + (j as f64 + 0.5) / n as f64;
                    let [gx, gy] = sample_clamped(&gradient, u, v);
                    let [z] = sample_clamped(&heights, u, v);
                    let nrm = normal_from_gradient(gx, gy);
                    let inward = [-nrm[0], -nrm[1], -nrm[2]];
                    let dir = match refract_ray(up, inward, params.refractive_index, 1.0) {
                        Refraction::Transmitted(d) => d,
                        Refraction::TotalInternalReflection => continue,
                    };
                    if dir[2] <= 0.0 {
                        continue;
                    }
                    let t = (params.screen_distance - z) / dir[2];
                    let su = u + t * dir[0] / dx;
                    let sv = v + t * dir[1] / dy;
                    if splat(&mut img, su, sv) {
                        landed += 1;
                    }
                }
            }
        }
    }
    Ok(CausticImage {
        values: img,
        extent: plane.extent,
        launched: w * ht * n * n,
        landed,
    })
}
