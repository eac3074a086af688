//! Complex pressure field of a phased transducer array on a sampling plane.
//!
//! Each emitter is a circular piston facing `-z`. A sample at distance `d`
//! and angle `θ` off the piston axis receives
//! `P_ref / d · D(θ) · exp(i(k d + φ))`, and the field is the sum over
//! emitters.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bessel::directivity;
use crate::error::{Error, Result};
use crate::grid::{Grid, RealGrid};

/// Samples per work unit when evaluating fields in parallel. Chunk
/// boundaries are fixed so reductions are independent of the thread count.
pub(crate) const SAMPLE_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct TransducerArray {
    positions: Vec<[f64; 3]>,
    radius: f64,
    frequency: f64,
    sound_speed: f64,
    ref_pressure: f64,
}

impl TransducerArray {
    pub const DEFAULT_RADIUS: f64 = 0.005;
    pub const DEFAULT_FREQUENCY: f64 = 40_000.0;
    pub const DEFAULT_SOUND_SPEED: f64 = 346.0;
    pub const DEFAULT_PITCH: f64 = 0.010;

    pub fn new(
        positions: Vec<[f64; 3]>,
        radius: f64,
        frequency: f64,
        sound_speed: f64,
        ref_pressure: f64,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("array needs at least one transducer"));
        }
        let z0 = positions[0][2];
        if positions.iter().any(|p| p[2] != z0) {
            return Err(Error::invalid("transducers must share one emitter plane"));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("transducer positions must be finite"));
        }
        if !(radius > 0.0) || !(frequency > 0.0) || !(sound_speed > 0.0) {
            return Err(Error::invalid(
                "radius, frequency and sound speed must be positive",
            ));
        }
        if !ref_pressure.is_finite() {
            return Err(Error::invalid("reference pressure must be finite"));
        }
        Ok(Self {
            positions,
            radius,
            frequency,
            sound_speed,
            ref_pressure,
        })
    }

    /// `nx × ny` emitters at `pitch` spacing, centered on the origin in the
    /// plane `z = 0`, with the default transducer constants.
    pub fn grid(nx: usize, ny: usize, pitch: f64) -> Result<Self> {
        let positions = (0..ny)
            .flat_map(|j| {
                (0..nx).map(move |i| {
                    [
                        (i as f64 - (nx as f64 - 1.0) / 2.0) * pitch,
                        (j as f64 - (ny as f64 - 1.0) / 2.0) * pitch,
                        0.0,
                    ]
                })
            })
            .collect();
        Self::new(
            positions,
            Self::DEFAULT_RADIUS,
            Self::DEFAULT_FREQUENCY,
            Self::DEFAULT_SOUND_SPEED,
            1.0,
        )
    }

    pub fn with_ref_pressure(mut self, ref_pressure: f64) -> Self {
        self.ref_pressure = ref_pressure;
        self
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }

    pub fn ref_pressure(&self) -> f64 {
        self.ref_pressure
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI * self.frequency / self.sound_speed
    }

    pub fn emitter_z(&self) -> f64 {
        self.positions[0][2]
    }

    /// Complex contribution of transducer `m` at `point` for zero phase.
    #[inline]
    pub(crate) fn transfer(&self, m: usize, point: [f64; 3]) -> Option<Complex64> {
        let t = self.positions[m];
        let (dx, dy, dz) = (point[0] - t[0], point[1] - t[1], point[2] - t[2]);
        let lateral = (dx * dx + dy * dy).sqrt();
        let d = (lateral * lateral + dz * dz).sqrt();
        if d == 0.0 {
            return None;
        }
        let k = self.wavenumber();
        let sin_theta = lateral / d;
        let gain = self.ref_pressure / d * directivity(sin_theta.asin(), k, self.radius);
        Some(Complex64::from_polar(gain, k * d))
    }
}

impl Default for TransducerArray {
    fn default() -> Self {
        Self::grid(16, 16, Self::DEFAULT_PITCH).expect("default array is valid")
    }
}

/// Rectangular grid of sample points parallel to the emitter plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingPlane {
    pub center: [f64; 3],
    pub extent: [f64; 2],
    pub resolution: [usize; 2],
}

impl SamplingPlane {
    pub const DEFAULT_DISTANCE: f64 = 0.200;
    pub const DEFAULT_EXTENT: f64 = 0.155;
    pub const DEFAULT_RESOLUTION: usize = 192;

    pub fn new(center: [f64; 3], extent: [f64; 2], resolution: [usize; 2]) -> Result<Self> {
        if resolution[0] == 0 || resolution[1] == 0 {
            return Err(Error::invalid("plane resolution must be at least 1x1"));
        }
        if !(extent[0] > 0.0 && extent[1] > 0.0) {
            return Err(Error::invalid("plane extent must be positive"));
        }
        Ok(Self {
            center,
            extent,
            resolution,
        })
    }

    /// Square plane centered on the array axis, `distance` below `z = 0`.
    pub fn square(distance: f64, extent: f64, resolution: usize) -> Result<Self> {
        Self::new(
            [0.0, 0.0, -distance],
            [extent, extent],
            [resolution, resolution],
        )
    }

    pub fn width(&self) -> usize {
        self.resolution[0]
    }

    pub fn height(&self) -> usize {
        self.resolution[1]
    }

    pub fn len(&self) -> usize {
        self.resolution[0] * self.resolution[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sample spacing `(dx, dy)` in meters.
    pub fn spacing(&self) -> (f64, f64) {
        (
            self.extent[0] / self.resolution[0] as f64,
            self.extent[1] / self.resolution[1] as f64,
        )
    }

    /// Cell-center coordinates of sample `(x, y)`.
    #[inline]
    pub fn point(&self, x: usize, y: usize) -> [f64; 3] {
        let (dx, dy) = self.spacing();
        [
            self.center[0] - 0.5 * self.extent[0] + (x as f64 + 0.5) * dx,
            self.center[1] - 0.5 * self.extent[1] + (y as f64 + 0.5) * dy,
            self.center[2],
        ]
    }

    #[inline]
    pub fn point_at(&self, index: usize) -> [f64; 3] {
        self.point(index % self.resolution[0], index / self.resolution[0])
    }

    /// Distance between the plane and the emitter plane of `array`.
    pub fn offset_from(&self, array: &TransducerArray) -> f64 {
        (array.emitter_z() - self.center[2]).abs()
    }
}

impl Default for SamplingPlane {
    fn default() -> Self {
        Self::square(
            Self::DEFAULT_DISTANCE,
            Self::DEFAULT_EXTENT,
            Self::DEFAULT_RESOLUTION,
        )
        .expect("default plane is valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub plane: SamplingPlane,
    pub values: Grid<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeField {
    pub plane: SamplingPlane,
    pub values: RealGrid,
}

impl AmplitudeField {
    pub fn new(plane: SamplingPlane, values: RealGrid) -> Result<Self> {
        if values.dims() != (plane.width(), plane.height()) {
            return Err(Error::DimensionMismatch {
                expected: (plane.width(), plane.height()),
                got: values.dims(),
            });
        }
        Ok(Self { plane, values })
    }
}

/// Direct evaluation of the array field at every plane sample.
pub fn pressure_field(
    array: &TransducerArray,
    phases: &[f64],
    plane: &SamplingPlane,
) -> Result<ComplexField> {
    if phases.len() != array.len() {
        return Err(Error::PhaseCount {
            expected: array.len(),
            got: phases.len(),
        });
    }
    let k = array.wavenumber();
    let values: Vec<Complex64> = (0..plane.len())
        .into_par_iter()
        .with_min_len(SAMPLE_CHUNK)
        .map(|s| {
            let p = plane.point_at(s);
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, &phi) in phases.iter().enumerate() {
                let t = array.positions[m];
                let (dx, dy, dz) = (p[0] - t[0], p[1] - t[1], p[2] - t[2]);
                let lateral = (dx * dx + dy * dy).sqrt();
                let d = (lateral * lateral + dz * dz).sqrt();
                if d == 0.0 {
                    return Err(Error::CoincidentSample {
                        index: s,
                        transducer: m,
                    });
                }
                let theta = (lateral / d).asin();
                let gain = array.ref_pressure / d * directivity(theta, k, array.radius);
                acc += Complex64::from_polar(gain, k * d + phi);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(ComplexField {
        plane: *plane,
        values: Grid::from_vec(plane.width(), plane.height(), values)?,
    })
}

pub fn amplitude(field: &ComplexField) -> AmplitudeField {
    AmplitudeField {
        plane: field.plane,
        values: field.values.map(|c| c.norm()),
    }
}

/// Precomputed per-sample, per-transducer transfer coefficients.
///
/// Phases only enter the field through `exp(iφ_m)`, so the propagation
/// terms are evaluated once and every subsequent field or gradient
/// evaluation is a complex matrix product. Storage is split into real and
/// imaginary planes, row-major by sample.
#[derive(Debug, Clone)]
pub struct Propagator {
    plane: SamplingPlane,
    transducers: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Complex pressure of each frame at every sample, stored `[frame][sample]`.
#[derive(Debug, Clone)]
pub struct FrameFields {
    pub frames: usize,
    pub samples: usize,
    pub values: Vec<Complex64>,
}

impl FrameFields {
    pub fn frame(&self, f: usize) -> &[Complex64] {
        &self.values[f * self.samples..(f + 1) * self.samples]
    }
}

impl Propagator {
    pub fn new(array: &TransducerArray, plane: &SamplingPlane) -> Result<Self> {
        let m_count = array.len();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..plane.len())
            .into_par_iter()
            .with_min_len(SAMPLE_CHUNK)
            .map(|s| {
                let p = plane.point_at(s);
                let mut re = Vec::with_capacity(m_count);
                let mut im = Vec::with_capacity(m_count);
                for m in 0..m_count {
                    let c = array.transfer(m, p).ok_or(Error::CoincidentSample {
                        index: s,
                        transducer: m,
                    })?;
                    re.push(c.re);
                    im.push(c.im);
                }
                Ok((re, im))
            })
            .collect::<Result<_>>()?;
        let mut re = Vec::with_capacity(plane.len() * m_count);
        let mut im = Vec::with_capacity(plane.len() * m_count);
        for (r, i) in rows {
            re.extend(r);
            im.extend(i);
        }
        Ok(Self {
            plane: *plane,
            transducers: m_count,
            re,
            im,
        })
    }

    pub fn plane(&self) -> &SamplingPlane {
        &self.plane
    }

    pub fn transducers(&self) -> usize {
        self.transducers
    }

    pub fn samples(&self) -> usize {
        self.plane.len()
    }

    /// Fields of all frames; `phases` is `frames × transducers`, row-major.
    pub fn fields(&self, phases: &[f64], frames: usize) -> Result<FrameFields> {
        let m_count = self.transducers;
        if phases.len() != frames * m_count {
            return Err(Error::PhaseCount {
                expected: frames * m_count,
                got: phases.len(),
            });
        }
        let (cos, sin): (Vec<f64>, Vec<f64>) = phases.iter().map(|p| (p.cos(), p.sin())).unzip();
        let samples = self.samples();
        let (cos, sin) = (&cos, &sin);
        let per_sample: Vec<Complex64> = (0..samples)
            .into_par_iter()
            .with_min_len(SAMPLE_CHUNK)
            .flat_map_iter(|s| {
                let gr = &self.re[s * m_count..(s + 1) * m_count];
                let gi = &self.im[s * m_count..(s + 1) * m_count];
                (0..frames).map(move |f| {
                    let c = &cos[f * m_count..(f + 1) * m_count];
                    let sn = &sin[f * m_count..(f + 1) * m_count];
                    dot_complex(gr, gi, c, sn)
                })
            })
            .collect();
        // transpose [sample][frame] -> [frame][sample]
        let mut values = vec![Complex64::new(0.0, 0.0); samples * frames];
        for (s, chunk) in per_sample.chunks_exact(frames).enumerate() {
            for (f, v) in chunk.iter().enumerate() {
                values[f * samples + s] = *v;
            }
        }
        Ok(FrameFields {
            frames,
            samples,
            values,
        })
    }

    /// Field of a single phase vector.
    pub fn field(&self, phases: &[f64]) -> Result<ComplexField> {
        let fields = self.fields(phases, 1)?;
        Ok(ComplexField {
            plane: self.plane,
            values: Grid::from_vec(self.plane.width(), self.plane.height(), fields.values)?,
        })
    }

    /// Back-propagates `weights` (`[frame][sample]`, complex) through the
    /// transfer matrix: returns `z[f][m] = Σ_s G[s][m] · w[f][s]`.
    pub(crate) fn adjoint(&self, weights: &[Complex64], frames: usize) -> Vec<Complex64> {
        let m_count = self.transducers;
        let samples = self.samples();
        debug_assert_eq!(weights.len(), frames * samples);
        let chunks = samples.div_ceil(SAMPLE_CHUNK);
        let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut zr = vec![0.0; frames * m_count];
                let mut zi = vec![0.0; frames * m_count];
                let lo = c * SAMPLE_CHUNK;
                let hi = (lo + SAMPLE_CHUNK).min(samples);
                for s in lo..hi {
                    let gr = &self.re[s * m_count..(s + 1) * m_count];
                    let gi = &self.im[s * m_count..(s + 1) * m_count];
                    for f in 0..frames {
                        let w = weights[f * samples + s];
                        if w.re == 0.0 && w.im == 0.0 {
                            continue;
                        }
                        let ar = &mut zr[f * m_count..(f + 1) * m_count];
                        let ai = &mut zi[f * m_count..(f + 1) * m_count];
                        axpy_complex(ar, ai, gr, gi, w);
                    }
                }
                (zr, zi)
            })
            .collect();
        let mut zr = vec![0.0; frames * m_count];
        let mut zi = vec![0.0; frames * m_count];
        for (pr, pi) in &partials {
            for (a, b) in zr.iter_mut().zip(pr) {
                *a += b;
            }
            for (a, b) in zi.iter_mut().zip(pi) {
                *a += b;
            }
        }
        zr.into_iter()
            .zip(zi)
            .map(|(r, i)| Complex64::new(r, i))
            .collect()
    }
}

/// `Σ_m (gr + i gi)(c + i s)` with four independent lanes.
#[inline]
fn dot_complex(gr: &[f64], gi: &[f64], c: &[f64], s: &[f64]) -> Complex64 {
    let mut re = [0.0f64; 4];
    let mut im = [0.0f64; 4];
    let n = gr.len() / 4 * 4;
    for (((gr4, gi4), c4), s4) in gr[..n]
        .chunks_exact(4)
        .zip(gi[..n].chunks_exact(4))
        .zip(c[..n].chunks_exact(4))
        .zip(s[..n].chunks_exact(4))
    {
        for l in 0..4 {
            re[l] += gr4[l] * c4[l] - gi4[l] * s4[l];
            im[l] += gr4[l] * s4[l] + gi4[l] * c4[l];
        }
    }
    let mut acc = Complex64::new((re[0] + re[1]) + (re[2] + re[3]), (im[0] + im[1]) + (im[2] + im[3]));
    for m in n..gr.len() {
        acc.re += gr[m] * c[m] - gi[m] * s[m];
        acc.im += gr[m] * s[m] + gi[m] * c[m];
    }
    acc
}

#[inline]
fn axpy_complex(ar: &mut [f64], ai: &mut [f64], gr: &[f64], gi: &[f64], w: Complex64) {
    for (((a_r, a_i), g_r), g_i) in ar.iter_mut().zip(ai.iter_mut()).zip(gr).zip(gi) {
        *a_r += g_r * w.re - g_i * w.im;
        *a_i += g_r * w.im + g_i * w.re;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single() -> TransducerArray {
        TransducerArray::new(vec![[0.0, 0.0, 0.0]], 0.005, 40_000.0, 346.0, 1.0).unwrap()
    }

    #[test]
    fn wavenumber_from_constants() {
        let k = TransducerArray::default().wavenumber();
        assert!((k - 726.379804298218).abs() < 1e-9);
    }

    #[test]
    fn default_geometry() {
        let a = TransducerArray::default();
        assert_eq!(a.len(), 256);
        assert!((a.positions()[0][0] + 0.075).abs() < 1e-15);
        assert!((a.positions()[255][1] - 0.075).abs() < 1e-15);
        let p = SamplingPlane::default();
        assert_eq!(p.len(), 192 * 192);
        assert!((p.offset_from(&a) - 0.2).abs() < 1e-15);
        let first = p.point(0, 0);
        assert!((first[0] + 0.0775 - 0.5 * 0.155 / 192.0).abs() < 1e-15);
    }

    #[test]
    fn single_on_axis() {
        let a = single();
        let plane = SamplingPlane::new([0.0, 0.0, -0.2], [1e-3, 1e-3], [1, 1]).unwrap();
        let f = pressure_field(&a, &[0.0], &plane).unwrap();
        let v = f.values.as_slice()[0];
        assert!((v.norm() - 1.0 / 0.2).abs() < 1e-12);
        let want = (a.wavenumber() * 0.2).rem_euclid(2.0 * PI);
        assert!((v.arg().rem_euclid(2.0 * PI) - want).abs() < 1e-9);
    }

    #[test]
    fn mirror_pair_is_constructive() {
        let a = TransducerArray::new(
            vec![[-0.01, 0.0, 0.0], [0.01, 0.0, 0.0]],
            0.005,
            40_000.0,
            346.0,
            1.0,
        )
        .unwrap();
        let plane = SamplingPlane::new([0.0, 0.0, -0.2], [1e-3, 1e-3], [1, 1]).unwrap();
        let f = pressure_field(&a, &[0.7, 0.7], &plane).unwrap();
        let d = (0.01f64.powi(2) + 0.04).sqrt();
        let theta = (0.01 / d).asin();
        let want = 2.0 / d * directivity(theta, a.wavenumber(), 0.005);
        assert!((f.values.as_slice()[0].norm() - want).abs() < 1e-12 * want);
    }

    #[test]
    fn coincident_sample_rejected() {
        let a = single();
        let plane = SamplingPlane::new([0.0, 0.0, 0.0], [1e-3, 1e-3], [1, 1]).unwrap();
        assert!(matches!(
            pressure_field(&a, &[0.0], &plane),
            Err(Error::CoincidentSample { .. })
        ));
        assert!(Propagator::new(&a, &plane).is_err());
    }

    #[test]
    fn phase_count_checked() {
        let a = TransducerArray::grid(2, 2, 0.01).unwrap();
        let plane = SamplingPlane::square(0.1, 0.05, 4).unwrap();
        assert!(matches!(
            pressure_field(&a, &[0.0; 3], &plane),
            Err(Error::PhaseCount { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn amplitude_is_modulus() {
        let plane = SamplingPlane::square(0.1, 0.01, 2).unwrap();
        let values = Grid::from_vec(
            1,
            2,
            vec![Complex64::new(3.0, 4.0), Complex64::new(0.0, 0.0)],
        )
        .unwrap();
        let a = amplitude(&ComplexField { plane, values });
        assert_eq!(a.values.as_slice(), &[5.0, 0.0]);
    }

    #[test]
    fn propagator_matches_direct() {
        let a = TransducerArray::grid(3, 2, 0.01).unwrap();
        let plane = SamplingPlane::square(0.15, 0.1, 7).unwrap();
        let phases = [0.1, 1.2, 2.3, 3.4, 4.5, 5.6];
        let direct = pressure_field(&a, &phases, &plane).unwrap();
        let fast = Propagator::new(&a, &plane).unwrap().field(&phases).unwrap();
        for (x, y) in direct.values.as_slice().iter().zip(fast.values.as_slice()) {
            assert!((x - y).norm() <= 1e-12 * x.norm());
        }
    }

    #[test]
    fn adjoint_is_transpose() {
        let a = TransducerArray::grid(3, 3, 0.01).unwrap();
        let plane = SamplingPlane::square(0.15, 0.1, 5).unwrap();
        let prop = Propagator::new(&a, &plane).unwrap();
        let w: Vec<Complex64> = (0..plane.len())
            .map(|s| Complex64::new((s as f64).sin(), (s as f64 * 0.3).cos()))
            .collect();
        let z = prop.adjoint(&w, 1);
        for m in 0..a.len() {
            let mut want = Complex64::new(0.0, 0.0);
            for s in 0..plane.len() {
                want += a.transfer(m, plane.point_at(s)).unwrap() * w[s];
            }
            assert!((z[m] - want).norm() < 1e-10 * want.norm().max(1.0));
        }
    }
}
