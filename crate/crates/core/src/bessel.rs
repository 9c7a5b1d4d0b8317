//! Bessel function of the first kind, order zero.

use std::f64::consts::PI;

/// `J₀(x)` from `J₀(x) = (1/2π)∫₀^{2π} cos(x sin θ) dθ`.
///
/// The integrand is smooth and periodic, so the midpoint rule converges
/// exponentially once the node count exceeds `|x|` by a few multiples of
/// `|x|^{1/3}`; the error is bounded by `2|J_N(x)|`.
pub fn j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1e-8 {
        return 1.0 - 0.25 * ax * ax;
    }
    let n = (ax + 20.0 * ax.cbrt() + 30.0).ceil() as usize;
    // cos(x sin θ) is even about θ = π/2 on [0, π]; sample a quarter period
    let mut acc = 0.0;
    for k in 0..n {
        let theta = 0.5 * PI * (k as f64 + 0.5) / n as f64;
        acc += (ax * theta.sin()).cos();
    }
    acc / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_values() {
        // scipy.special.j0
        let table = [
            (0.0, 1.0),
            (0.5, 0.938469807240813),
            (1.0, 0.7651976865579665),
            (2.404825557695773, -9.586882554916807e-17),
            (5.0, -0.1775967713143383),
            (10.0, -0.24593576445134832),
            (20.0, 0.16702466434058322),
            (50.0, 0.055812327669252086),
            (123.4, -0.07152553671926014),
            (1000.0, 0.02478668615242003),
        ];
        for (x, want) in table {
            let got = j0(x);
            assert!((got - want).abs() < 1e-13, "j0({x}) = {got}, want {want}");
            assert!((j0(-x) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn matches_power_series_for_small_arguments() {
        for i in 0..40 {
            let x = 0.1 * i as f64;
            let q = -0.25 * x * x;
            let (mut term, mut sum) = (1.0, 1.0);
            for k in 1..40 {
                term *= q / (k * k) as f64;
                sum += term;
            }
            assert!((j0(x) - sum).abs() < 1e-14, "x = {x}");
        }
    }
}
