//! Small quadrature and differencing kernels shared by the solvers.

use std::ops::{Add, Mul, Sub};

/// Trapezoid weights for `n + 1` equally spaced nodes with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n + 1];
    w[0] = 0.5 * h;
    w[n] = 0.5 * h;
    w
}

/// Second-order derivative of uniformly sampled data: central differences in
/// the interior, one-sided three-point stencils at both ends.
///
/// Requires at least three samples.
pub fn second_order_derivative<T>(samples: &[T], h: f64) -> Vec<T>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    let n = samples.len();
    assert!(n >= 3, "at least three samples are needed for a second-order stencil");
    let inv2h = 0.5 / h;
    let mut out = Vec::with_capacity(n);
    out.push((samples[1] * 4.0 - samples[0] * 3.0 - samples[2]) * inv2h);
    for i in 1..n - 1 {
        out.push((samples[i + 1] - samples[i - 1]) * inv2h);
    }
    out.push((samples[n - 1] * 3.0 - samples[n - 2] * 4.0 + samples[n - 3]) * inv2h);
    out
}

/// Eight-point Gauss–Legendre rule on `[-1, 1]`.
pub(crate) const GAUSS_LEGENDRE_8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_48),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_48),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

/// Stable `ln Σ exp(x_i)`; returns `-∞` for an empty or all `-∞` input.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
