//! Bessel function of the first kind, order one, and the piston directivity
//! built from it.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Below this magnitude the power series is used; above it the Hankel
/// asymptotic expansion. At 12 both branches stay under ~1e-11 absolute error.
const SERIES_LIMIT: f64 = 12.0;

/// `J₁(x)`.
pub fn bessel_j1(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_LIMIT {
        x * half_jinc_series(ax)
    } else {
        let v = asymptotic_j1(ax);
        if x < 0.0 {
            -v
        } else {
            v
        }
    }
}

/// `J₁(x) / x` via `Σ (-1)^k (x²/4)^k / (2 · k! (k+1)!)`.
fn half_jinc_series(ax: f64) -> f64 {
    let q = -0.25 * ax * ax;
    let mut term = 0.5;
    let mut sum = term;
    for k in 0..64 {
        let kf = k as f64;
        term *= q / ((kf + 1.0) * (kf + 2.0));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn asymptotic_j1(x: f64) -> f64 {
    // a_k = Π_{j=1..k} (μ - (2j-1)²) / (k! 8^k), μ = 4ν² = 4.
    let mu = 4.0;
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut prev = f64::INFINITY;
    for k in 0..40 {
        let term = a / x.powi(k);
        if term.abs() > prev {
            break;
        }
        prev = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        if term.abs() < 1e-17 {
            break;
        }
        let kf = (k + 1) as f64;
        let odd = 2.0 * kf - 1.0;
        a *= (mu - odd * odd) / (kf * 8.0);
    }
    let (s, c) = x.sin_cos();
    // cos(x - 3π/4) and sin(x - 3π/4) without forming the shifted argument.
    let cos_chi = (s - c) * FRAC_1_SQRT_2;
    let sin_chi = -(s + c) * FRAC_1_SQRT_2;
    (2.0 / (PI * x)).sqrt() * (p * cos_chi - q * sin_chi)
}

/// `2·J₁(x)/x`, equal to exactly 1 at `x = 0`.
pub fn jinc(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_LIMIT {
        2.0 * half_jinc_series(ax)
    } else {
        2.0 * asymptotic_j1(ax) / ax
    }
}

/// Far-field directivity of a circular piston of radius `radius` at angle
/// `theta` off its axis.
pub fn directivity(theta: f64, wavenumber: f64, radius: f64) -> f64 {
    jinc(wavenumber * radius * theta.sin())
}
