//! Target images in the optimizer's convention: dark image regions (where
//! the liquid should be pushed down and the caustic should be shadowed)
//! carry high values, light regions low values, all within `[0, 1]`.

use crate::error::{Error, Result};
use crate::field::SamplingPlane;
use crate::grid::RealGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetImage {
    values: RealGrid,
}

impl TargetImage {
    /// Wraps a grid that is already inverted and scaled to `[0, 1]`.
    pub fn new(values: RealGrid) -> Result<Self> {
        if values.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("target values must lie in [0, 1]"));
        }
        Ok(Self { values })
    }

    /// Prepares a grayscale picture in the usual convention (0 = black,
    /// `max_value` = white): inverts it, resizes it bicubically to
    /// `width × height` and scales to `[0, 1]`.
    pub fn from_grayscale(
        src_width: usize,
        src_height: usize,
        pixels: &[f64],
        max_value: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if pixels.len() != src_width * src_height || pixels.is_empty() {
            return Err(Error::invalid("pixel buffer does not match image size"));
        }
        if !(max_value > 0.0) {
            return Err(Error::invalid("max_value must be positive"));
        }
        let inverted = RealGrid::from_vec(
            src_width,
            src_height,
            pixels.iter().map(|v| max_value - v).collect(),
        )?;
        let resized = resize_bicubic(&inverted, width, height);
        Ok(Self {
            values: resized.map(|v| (v / max_value).clamp(0.0, 1.0)),
        })
    }

    pub fn values(&self) -> &RealGrid {
        &self.values
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn matches(&self, plane: &SamplingPlane) -> bool {
        self.values.dims() == (plane.width(), plane.height())
    }

    pub const DEFAULT_CHECKER_CELLS: usize = 2;

    /// Default checkerboard scene at the plane's resolution.
    pub fn default_checkerboard(plane: &SamplingPlane) -> Self {
        Self::checkerboard(plane.width(), plane.height(), Self::DEFAULT_CHECKER_CELLS)
    }

    /// `cells × cells` board; squares with odd `cx + cy` are dark (value 1).
    pub fn checkerboard(width: usize, height: usize, cells: usize) -> Self {
        let cells = cells.max(1);
        Self {
            values: RealGrid::from_fn(width, height, |x, y| {
                let cx = x * cells / width;
                let cy = y * cells / height;
                ((cx + cy) % 2) as f64
            }),
        }
    }

    /// Dark disks of `radius` (meters) at the given plane positions.
    pub fn disks(plane: &SamplingPlane, centers: &[[f64; 2]], radius: f64) -> Self {
        Self {
            values: RealGrid::from_fn(plane.width(), plane.height(), |x, y| {
                let p = plane.point(x, y);
                let inside = centers.iter().any(|c| {
                    let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
                    dx * dx + dy * dy <= radius * radius
                });
                if inside {
                    1.0
                } else {
                    0.0
                }
            }),
        }
    }
}

/// Keys cubic kernel with `a = -0.5`.
fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Separable bicubic resampling with half-pixel centers and clamped edges.
/// No antialiasing prefilter is applied when shrinking.
pub fn resize_bicubic(src: &RealGrid, width: usize, height: usize) -> RealGrid {
    let taps = |out: usize, src_len: usize| -> Vec<([usize; 4], [f64; 4])> {
        let scale = src_len as f64 / out as f64;
        (0..out)
            .map(|i| {
                let x = (i as f64 + 0.5) * scale - 0.5;
                let base = x.floor();
                let t = x - base;
                let mut idx = [0usize; 4];
                let mut w = [0.0; 4];
                for k in 0..4 {
                    let off = k as f64 - 1.0;
                    let j = (base + off).clamp(0.0, src_len as f64 - 1.0) as usize;
                    idx[k] = j;
                    w[k] = cubic_weight(off - t);
                }
                (idx, w)
            })
            .collect()
    };
    let tx = taps(width, src.width());
    let ty = taps(height, src.height());
    let rows = RealGrid::from_fn(width, src.height(), |x, y| {
        let (idx, w) = tx[x];
        (0..4).map(|k| w[k] * src.get(idx[k], y)).sum()
    });
    RealGrid::from_fn(width, height, |x, y| {
        let (idx, w) = ty[y];
        (0..4).map(|k| w[k] * rows.get(x, idx[k])).sum()
    })
}
