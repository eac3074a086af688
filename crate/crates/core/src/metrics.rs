//! Weber contrast with target/background segmentation, and the two-circle
//! resolution harness.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{SamplingPlane, TransducerArray};
use crate::grid::{Grid, RealGrid};
use crate::hologram::{HologramModel, OptimConfig};
use crate::plant::{coupling_for_slope, deform_surface, render_caustics, PlantParams, DEFAULT_SLOPE_FRACTION};
use crate::target::TargetImage;
use crate::twin::{run_twin, TwinConfig};

pub type Mask = Grid<bool>;

pub const DEFAULT_MASK_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContrastReport {
    pub target_mean: f64,
    pub background_mean: f64,
    /// Signed Weber contrast `(L_target - L_background) / L_background`.
    pub contrast: f64,
}

impl ContrastReport {
    pub fn magnitude(&self) -> f64 {
        self.contrast.abs()
    }
}

/// Target region: pixels whose target value exceeds `threshold`.
pub fn make_target_mask(target: &TargetImage, threshold: f64) -> Result<Mask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid("mask threshold must lie in (0, 1)"));
    }
    let mask = target.values().map(|&v| v > threshold);
    let on = mask.as_slice().iter().filter(|&&m| m).count();
    if on == 0 {
        return Err(Error::EmptyRegion("target"));
    }
    if on == mask.len() {
        return Err(Error::EmptyRegion("background"));
    }
    Ok(mask)
}

pub fn weber_contrast(image: &RealGrid, mask: &Mask) -> Result<ContrastReport> {
    image.ensure_same_dims(mask)?;
    let (mut st, mut nt, mut sb, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &m) in image.as_slice().iter().zip(mask.as_slice()) {
        if m {
            st += v;
            nt += 1;
        } else {
            sb += v;
            nb += 1;
        }
    }
    if nt == 0 {
        return Err(Error::EmptyRegion("target"));
    }
    if nb == 0 {
        return Err(Error::EmptyRegion("background"));
    }
    let target_mean = st / nt as f64;
    let background_mean = sb / nb as f64;
    if background_mean == 0.0 {
        return Err(Error::ZeroBackground);
    }
    Ok(ContrastReport {
        target_mean,
        background_mean,
        contrast: (target_mean - background_mean) / background_mean,
    })
}

/// Number of 4-connected components of set pixels.
pub fn connected_components(mask: &Mask) -> usize {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.as_slice()[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask.as_slice()[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
    }
    count
}

/// Two equal circles on the horizontal axis through the plane center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolutionScene {
    /// Circle radius, meters.
    pub radius: f64,
    /// Gap between the facing edges, meters; 0 is tangent, negative overlaps.
    pub separation: f64,
    pub frames: usize,
}

impl ResolutionScene {
    pub const DEFAULT_RADIUS: f64 = 0.010;

    pub fn centers(&self, plane: &SamplingPlane) -> [[f64; 2]; 2] {
        let half = self.radius + 0.5 * self.separation;
        let (cx, cy) = (plane.center[0], plane.center[1]);
        [[cx - half, cy], [cx + half, cy]]
    }

    pub fn target(&self, plane: &SamplingPlane) -> Result<TargetImage> {
        if !(self.radius > 0.0) {
            return Err(Error::invalid("circle radius must be positive"));
        }
        Ok(TargetImage::disks(plane, &self.centers(plane), self.radius))
    }
}

fn box3(profile: &[f64]) -> Vec<f64> {
    let n = profile.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            profile[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Minimum ridge height between the two dips, relative to the profile range.
pub const MIN_RIDGE_PROMINENCE: f64 = 0.05;

/// Looks for two separate intensity minima along the line through both
/// circle centers, from the outer edge of one circle to the outer edge of
/// the other, after 3-pixel box smoothing.
pub fn distinguishable(caustic: &RealGrid, plane: &SamplingPlane, scene: &ResolutionScene) -> bool {
    let [c1, c2] = scene.centers(plane);
    let (dx, dy) = plane.spacing();
    let to_px = |x: f64| (x - (plane.center[0] - 0.5 * plane.extent[0])) / dx - 0.5;
    let row = ((c1[1] - (plane.center[1] - 0.5 * plane.extent[1])) / dy - 0.5).round();
    if row < 0.0 || row >= caustic.height() as f64 {
        return false;
    }
    let row = row as usize;
    let lo = to_px(c1[0] - scene.radius).floor().max(0.0) as usize;
    let hi = (to_px(c2[0] + scene.radius).ceil() as usize).min(caustic.width() - 1);
    if hi <= lo + 3 {
        return false;
    }
    let raw: Vec<f64> = (lo..=hi).map(|x| *caustic.get(x, row)).collect();
    let p = box3(&raw);
    let mid = ((to_px(0.5 * (c1[0] + c2[0])).round() as usize).clamp(lo + 1, hi - 1)) - lo;
    let argmin = |r: std::ops::Range<usize>| {
        r.min_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap()).unwrap()
    };
    let m1 = argmin(0..mid);
    let m2 = argmin(mid..p.len());
    let is_local_min = |i: usize| i > 0 && i + 1 < p.len() && p[i] < p[i - 1] && p[i] <= p[i + 1];
    if !is_local_min(m1) || !is_local_min(m2) {
        return false;
    }
    let ridge = p[m1..=m2].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - p.iter().cloned().fold(f64::INFINITY, f64::min);
    range > 0.0 && ridge - p[m1].max(p[m2]) >= MIN_RIDGE_PROMINENCE * range
}

#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub plane: SamplingPlane,
    pub optim: OptimConfig,
    pub plant: PlantParams,
    /// Scales the coupling of each scene so its surface reaches this
    /// fraction of the critical slope; `None` keeps `plant.coupling`.
    pub slope_fraction: Option<f64>,
    pub radius: f64,
    /// Facing-edge gaps, meters.
    pub separations: Vec<f64>,
    pub frame_counts: Vec<usize>,
    pub mask_threshold: f64,
    /// Runs the digital twin after the numeric optimization when set.
    pub twin: Option<TwinConfig>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            // 80 mm window around the pair at ~1.25 mm per sample
            plane: SamplingPlane::square(SamplingPlane::DEFAULT_DISTANCE, 0.080, 64)
                .expect("harness plane is valid"),
            optim: OptimConfig {
                steps: 300,
                ..OptimConfig::default()
            },
            plant: PlantParams::default(),
            slope_fraction: Some(DEFAULT_SLOPE_FRACTION),
            radius: ResolutionScene::DEFAULT_RADIUS,
            separations: [1.0, 0.0, -1.0, -2.0, -3.0, -4.0].iter().map(|mm| mm * 1e-3).collect(),
            frame_counts: vec![1, 3, 9, 24],
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            twin: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HarnessRow {
    pub separation_mm: f64,
    pub frames: usize,
    pub weber_before: f64,
    pub weber_after: Option<f64>,
    pub distinguishable: bool,
    /// Coupling the scene was rendered with.
    pub coupling: f64,
    pub target_components: usize,
    #[serde(skip)]
    pub caustic: RealGrid,
}

/// For every separation and frame count: synthesize the two-circle target,
/// optimize, render, and score contrast and distinguishability.
pub fn two_circle_harness(array: &TransducerArray, cfg: &HarnessConfig) -> Result<Vec<HarnessRow>> {
    let model = HologramModel::new(array, &cfg.plane)?;
    let mut rows = Vec::new();
    for &separation in &cfg.separations {
        for &frames in &cfg.frame_counts {
            let scene = ResolutionScene {
                radius: cfg.radius,
                separation,
                frames,
            };
            let target = scene.target(&cfg.plane)?;
            let mask = make_target_mask(&target, cfg.mask_threshold)?;
            let trace = model.optimize(&target, frames, &cfg.optim)?;
            let p_avg = model.time_avg_amplitude(&trace.plan)?;
            let plant = match cfg.slope_fraction {
                Some(f) => PlantParams {
                    coupling: coupling_for_slope(&p_avg, &cfg.plant, f)?,
                    ..cfg.plant
                },
                None => cfg.plant,
            };
            let caustic = render_caustics(&deform_surface(&p_avg, &plant)?, &plant)?;
            let weber_before = weber_contrast(&caustic.values, &mask)?.contrast;
            let (weber_after, image) = match &cfg.twin {
                Some(tc) => {
                    let tt = run_twin(&model, &target, trace.plan, &TwinConfig { plant, ..*tc })?;
                    let after = model.time_avg_amplitude(&tt.plan)?;
                    let img = render_caustics(&deform_surface(&after, &plant)?, &plant)?;
                    (Some(weber_contrast(&img.values, &mask)?.contrast), img.values)
                }
                None => (None, caustic.values),
            };
            rows.push(HarnessRow {
                separation_mm: separation * 1e3,
                frames,
                weber_before,
                weber_after,
                distinguishable: distinguishable(&image, &cfg.plane, &scene),
                coupling: plant.coupling,
                target_components: connected_components(&mask),
                caustic: image,
            });
        }
    }
    Ok(rows)
}
