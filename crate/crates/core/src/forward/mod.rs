//! Exact modal solution of the heat equation with separable source
//! `F(t, x) = σ(t) β(x)` and zero initial/lateral data.
//!
//! Each lattice coefficient obeys `u' + E u = σ(t) β` with `E = λ_ℓ + k²`, so
//! the solution is the Duhamel integral `β ∫_0^t σ(s) e^{-E(t-s)} ds`. For the
//! constant profile `σ ≡ 1` the integral is evaluated in closed form; any
//! other profile uses the trapezoid rule on the time grid.

mod energy;
mod trace;

pub use energy::{check_energy_estimates, EnergyReport};
pub use trace::{add_noise, neumann_trace, trace_h1_norm, trace_l2_norm, NeumannTrace, Provenance, TraceSidecar};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cross_section::CrossSection;
use crate::error::{ensure, Error, Result};
use crate::modal::{mode_energy, KGrid, ModalField};
use crate::quadrature::second_order_derivative;

/// Uniform grid `t_i = i T / n_t`, `i = 0..=n_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    n_t: usize,
}

impl TimeGrid {
    pub const MIN_INTERVALS: usize = 8;

    pub fn new(t_final: f64, n_t: usize) -> Result<Self> {
        ensure!(t_final.is_finite() && t_final > 0.0, InvalidArgument, "final time must be positive, got {t_final}");
        ensure!(
            n_t >= Self::MIN_INTERVALS,
            InvalidArgument,
            "time grid needs at least {} intervals, got {n_t}",
            Self::MIN_INTERVALS
        );
        Ok(Self { t_final, n_t })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_nodes(&self) -> usize {
        self.n_t + 1
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_t as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_t {
            self.t_final
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_t).map(|i| self.node(i)).collect()
    }

    /// Same horizon with twice as many intervals.
    pub fn refined(&self) -> TimeGrid {
        TimeGrid { t_final: self.t_final, n_t: 2 * self.n_t }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ProfileKind {
    ConstantOne,
    Sampled,
}

/// Known time factor `σ` of the source, sampled on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SourceProfile {
    kind: ProfileKind,
    tg: TimeGrid,
    values: Vec<f64>,
    derivative: Vec<f64>,
}

impl SourceProfile {
    pub fn constant_one(tg: TimeGrid) -> Self {
        Self {
            kind: ProfileKind::ConstantOne,
            tg,
            values: vec![1.0; tg.n_nodes()],
            derivative: vec![0.0; tg.n_nodes()],
        }
    }

    /// Samples `sigma` and its derivative `dsigma` at the grid nodes.
    pub fn from_fn(tg: TimeGrid, sigma: impl Fn(f64) -> f64, dsigma: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = tg.nodes().into_iter().map(&sigma).collect();
        let derivative: Vec<f64> = tg.nodes().into_iter().map(&dsigma).collect();
        ensure!(
            values.iter().chain(&derivative).all(|v| v.is_finite()),
            InvalidArgument,
            "source profile samples must be finite"
        );
        Ok(Self { kind: ProfileKind::Sampled, tg, values, derivative })
    }

    /// Decay-heat profile `σ(t) = e^{-μt}`.
    pub fn exp_decay(tg: TimeGrid, mu: f64) -> Result<Self> {
        ensure!(mu.is_finite(), InvalidArgument, "decay rate must be finite");
        Self::from_fn(tg, |t| (-mu * t).exp(), |t| -mu * (-mu * t).exp())
    }

    /// Raw samples; the derivative is estimated with second-order differences.
    pub fn from_samples(tg: TimeGrid, values: Vec<f64>) -> Result<Self> {
        ensure!(
            values.len() == tg.n_nodes(),
            InvalidArgument,
            "expected {} source samples, got {}",
            tg.n_nodes(),
            values.len()
        );
        ensure!(values.iter().all(|v| v.is_finite()), InvalidArgument, "source profile samples must be finite");
        let derivative = second_order_derivative(&values, tg.dt());
        Ok(Self { kind: ProfileKind::Sampled, tg, values, derivative })
    }

    pub fn is_constant_one(&self) -> bool {
        self.kind == ProfileKind::ConstantOne
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.tg
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn sigma0(&self) -> f64 {
        self.values[0]
    }

    /// `sup |σ| + sup |σ'|` over the grid.
    pub fn c1_norm(&self) -> f64 {
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        sup(&self.values) + sup(&self.derivative)
    }

    /// Trapezoid value of `‖σ‖_{L²(0,T)}`.
    pub fn l2_norm(&self) -> f64 {
        trapezoid(&self.values.iter().map(|v| v * v).collect::<Vec<_>>(), self.tg.dt()).sqrt()
    }

    /// Trapezoid value of `‖σ'‖_{L²(0,T)}`.
    pub fn derivative_l2_norm(&self) -> f64 {
        trapezoid(&self.derivative.iter().map(|v| v * v).collect::<Vec<_>>(), self.tg.dt()).sqrt()
    }

    /// Duhamel factors `∫_0^{t_i} σ(s) e^{-E(t_i-s)} ds` at every node.
    pub fn duhamel_series(&self, energy: f64) -> Vec<f64> {
        let tg = self.tg;
        match self.kind {
            ProfileKind::ConstantOne => tg.nodes().into_iter().map(|t| closed_form_duhamel(energy, t)).collect(),
            ProfileKind::Sampled => {
                // Trapezoid sums obey I_{i+1} = e^{-E dt} I_i + dt/2 (σ_i e^{-E dt} + σ_{i+1}).
                let dt = tg.dt();
                let decay = (-energy * dt).exp();
                let mut out = Vec::with_capacity(tg.n_nodes());
                let mut acc = 0.0;
                out.push(acc);
                for i in 0..tg.n_t() {
                    acc = decay * acc + 0.5 * dt * (self.values[i] * decay + self.values[i + 1]);
                    out.push(acc);
                }
                out
            }
        }
    }
}

fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
}

#[inline]
fn closed_form_duhamel(energy: f64, t: f64) -> f64 {
    -(-energy * t).exp_m1() / energy
}

/// `∫_0^t σ(s) e^{-E(t-s)} ds` for a single time `t ∈ [0, T]`.
///
/// Closed form for `σ ≡ 1`; otherwise the trapezoid rule over the grid
/// nodes in `[0, t]`, with a final partial panel using linear interpolation
/// of `σ` when `t` falls between nodes.
pub fn duhamel_coefficient(sigma: &SourceProfile, energy: f64, t: f64) -> Result<f64> {
    ensure!(energy > 0.0 && energy.is_finite(), InvalidArgument, "mode energy must be positive, got {energy}");
    let tg = sigma.tg;
    ensure!((0.0..=tg.t_final()).contains(&t), InvalidArgument, "time {t} outside [0, {}]", tg.t_final());
    if sigma.is_constant_one() {
        return Ok(closed_form_duhamel(energy, t));
    }
    let dt = tg.dt();
    let last = ((t / dt).floor() as usize).min(tg.n_t());
    let kernel = |s: f64| (-energy * (t - s)).exp();
    let mut acc = 0.0;
    for i in 0..last {
        let (s0, s1) = (tg.node(i), tg.node(i + 1));
        acc += 0.5 * dt * (sigma.values[i] * kernel(s0) + sigma.values[i + 1] * kernel(s1));
    }
    let tail = t - tg.node(last);
    if last < tg.n_t() && tail > 0.0 {
        let w = tail / dt;
        let sig_t = (1.0 - w) * sigma.values[last] + w * sigma.values[last + 1];
        acc += 0.5 * tail * (sigma.values[last] * kernel(tg.node(last)) + sig_t);
    }
    Ok(acc)
}

/// Time samples of every lattice coefficient of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalTrajectory {
    cs: CrossSection,
    kgrid: KGrid,
    tg: TimeGrid,
    // Layout: ((j * l_max + ℓ - 1) * n_nodes + i).
    data: Vec<Complex64>,
}

impl ModalTrajectory {
    fn from_series(cs: CrossSection, kgrid: KGrid, tg: TimeGrid, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), kgrid.n_k() * cs.l_max() * tg.n_nodes());
        Self { cs, kgrid, tg, data }
    }

    pub fn cross_section(&self) -> &CrossSection {
        &self.cs
    }

    pub fn kgrid(&self) -> &KGrid {
        &self.kgrid
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.tg
    }

    /// Time series of coefficient `(j, ℓ)`.
    pub fn series(&self, j: usize, l: usize) -> &[Complex64] {
        let n = self.tg.n_nodes();
        let start = (j * self.cs.l_max() + l - 1) * n;
        &self.data[start..start + n]
    }

    pub fn at(&self, i: usize, j: usize, l: usize) -> Complex64 {
        self.series(j, l)[i]
    }

    /// The solution at time node `i` as a field.
    pub fn snapshot(&self, i: usize) -> ModalField {
        let n = self.tg.n_nodes();
        let coeffs = self.data.iter().skip(i).step_by(n).copied().collect();
        ModalField::from_coeffs(self.cs, self.kgrid, coeffs).expect("snapshot has lattice shape")
    }

    pub fn final_state(&self) -> ModalField {
        self.snapshot(self.tg.n_t())
    }

    #[cfg(test)]
    pub(crate) fn data(&self) -> &[Complex64] {
        &self.data
    }
}

fn check_profile_grid(sigma: &SourceProfile, tg: &TimeGrid) -> Result<()> {
    if sigma.tg == *tg {
        Ok(())
    } else {
        Err(Error::GridMismatch("source profile is sampled on a different time grid".into()))
    }
}

/// Solves `∂_t u - Δu = σ(t) β(x)`, `u(0) = 0`, `u = 0` on the lateral boundary.
pub fn solve_forward(beta: &ModalField, sigma: &SourceProfile, tg: &TimeGrid) -> Result<ModalTrajectory> {
    check_profile_grid(sigma, tg)?;
    let cs = *beta.cross_section();
    let kgrid = *beta.kgrid();
    let l_max = cs.l_max();
    let n = tg.n_nodes();
    let mut data = vec![Complex64::new(0.0, 0.0); kgrid.n_k() * l_max * n];
    data.par_chunks_mut(n).enumerate().for_each(|(idx, out)| {
        let (j, l) = (idx / l_max, idx % l_max + 1);
        let b = beta.get(j, l);
        if b == Complex64::new(0.0, 0.0) {
            return;
        }
        let series = sigma.duhamel_series(mode_energy(&cs, &kgrid, j, l));
        for (o, s) in out.iter_mut().zip(series) {
            *o = b * s;
        }
    });
    Ok(ModalTrajectory::from_series(cs, kgrid, *tg, data))
}

/// Free decay `v_{k,ℓ}(t) = v0_{k,ℓ} e^{-(λ_ℓ + k²) t}`.
pub fn solve_homogeneous(v0: &ModalField, tg: &TimeGrid) -> Result<ModalTrajectory> {
    let cs = *v0.cross_section();
    let kgrid = *v0.kgrid();
    let l_max = cs.l_max();
    let n = tg.n_nodes();
    let times = tg.nodes();
    let mut data = vec![Complex64::new(0.0, 0.0); kgrid.n_k() * l_max * n];
    data.par_chunks_mut(n).enumerate().for_each(|(idx, out)| {
        let (j, l) = (idx / l_max, idx % l_max + 1);
        let c = v0.get(j, l);
        let e = mode_energy(&cs, &kgrid, j, l);
        for (o, t) in out.iter_mut().zip(&times) {
            // exp underflows to zero for large E t; that is the intended flush.
            *o = c * (-e * t).exp();
        }
    });
    Ok(ModalTrajectory::from_series(cs, kgrid, *tg, data))
}

/// `v = ∂_t u` through the modal identity `v = σ β - E u`.
pub fn time_derivative(u: &ModalTrajectory, beta: &ModalField, sigma: &SourceProfile) -> Result<ModalTrajectory> {
    ensure!(
        u.cs == *beta.cross_section() && u.kgrid == *beta.kgrid(),
        GridMismatch,
        "trajectory and source live on different lattices"
    );
    check_profile_grid(sigma, &u.tg)?;
    let l_max = u.cs.l_max();
    let n = u.tg.n_nodes();
    let mut data = u.data.clone();
    data.par_chunks_mut(n).enumerate().for_each(|(idx, out)| {
        let (j, l) = (idx / l_max, idx % l_max + 1);
        let b = beta.get(j, l);
        let e = mode_energy(&u.cs, &u.kgrid, j, l);
        for (i, o) in out.iter_mut().enumerate() {
            *o = b * sigma.values[i] - *o * e;
        }
    });
    Ok(ModalTrajectory::from_series(u.cs, u.kgrid, u.tg, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cross_section::GammaSide;
    use crate::modal::random_field;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn tg(t: f64, n: usize) -> TimeGrid {
        TimeGrid::new(t, n).unwrap()
    }

    /// Lattice with a single point of energy exactly `e`: `a` chosen so that
    /// `λ_1 + k_0² = e` on the grid `{±0.5}`.
    fn single_energy_lattice(e: f64) -> (CrossSection, KGrid) {
        let kg = KGrid::new(1.0, 2).unwrap();
        let a = PI / (e - 0.25).sqrt();
        (CrossSection::new(a, GammaSide::RightEnd, 1).unwrap(), kg)
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::new(1.0, 7).is_err());
        assert!(TimeGrid::new(0.0, 8).is_err());
        let g = tg(2.0, 8);
        assert_eq!(g.node(8), 2.0);
        assert_eq!(g.refined().n_t(), 16);
    }

    #[test]
    fn duhamel_examples() {
        let one = SourceProfile::constant_one(tg(1.0, 10));
        assert_relative_eq!(
            duhamel_coefficient(&one, 2.0, 1.0).unwrap(),
            (1.0 - (-2.0f64).exp()) / 2.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            duhamel_coefficient(&one, 2.0, 1.0).unwrap(),
            0.432_332_358_381_693_6,
            max_relative = 1e-14
        );
        assert_eq!(duhamel_coefficient(&one, 5.0, 0.0).unwrap(), 0.0);
        assert!((duhamel_coefficient(&one, 100.0, 1.0).unwrap() - 0.01).abs() < 1e-6);
        assert!(duhamel_coefficient(&one, 0.0, 0.5).is_err());
        assert!(duhamel_coefficient(&one, -1.0, 0.5).is_err());
        assert!(duhamel_coefficient(&one, 1.0, 1.5).is_err());
    }

    #[test]
    fn sampled_duhamel_converges_to_closed_form() {
        // σ(t) = e^{-μt}: ∫_0^t e^{-μs} e^{-E(t-s)} ds = (e^{-μt} - e^{-Et}) / (E - μ).
        let (mu, e, t) = (0.7f64, 3.0f64, 0.8f64);
        let exact = ((-mu * t).exp() - (-e * t).exp()) / (e - mu);
        let mut prev = f64::INFINITY;
        for n in [40usize, 80, 160] {
            let s = SourceProfile::exp_decay(tg(1.0, n), mu).unwrap();
            let err = (duhamel_coefficient(&s, e, t).unwrap() - exact).abs();
            assert!(err < 2.0 / (n * n) as f64, "n={n} err={err}");
            assert!(err < prev);
            prev = err;
        }
        // Partial final panel: t between nodes.
        let s = SourceProfile::exp_decay(tg(1.0, 400), mu).unwrap();
        let t = 0.8137;
        let exact = ((-mu * t).exp() - (-e * t).exp()) / (e - mu);
        assert_relative_eq!(duhamel_coefficient(&s, e, t).unwrap(), exact, max_relative = 1e-4);
    }

    #[test]
    fn duhamel_series_agrees_with_pointwise_rule() {
        let g = tg(1.5, 30);
        let s = SourceProfile::from_fn(g, |t| 1.0 + t.sin(), |t| t.cos()).unwrap();
        let series = s.duhamel_series(2.5);
        for (i, v) in series.iter().enumerate() {
            assert_relative_eq!(
                *v,
                duhamel_coefficient(&s, 2.5, g.node(i)).unwrap(),
                max_relative = 1e-12,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn solve_forward_examples() {
        let g = tg(1.0, 16);
        let one = SourceProfile::constant_one(g);
        let (cs, kg) = single_energy_lattice(1.0);
        let zero = ModalField::zeros(cs, kg);
        let u0 = solve_forward(&zero, &one, &g).unwrap();
        assert!(u0.data().iter().all(|c| c.norm() == 0.0));

        let mut beta = ModalField::zeros(cs, kg);
        beta.set(1, 1, Complex64::new(1.0, 0.0));
        let u = solve_forward(&beta, &one, &g).unwrap();
        assert_relative_eq!(u.at(16, 1, 1).re, 1.0 - (-1.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(u.at(16, 1, 1).re, 0.632_120_558_828_557_7, max_relative = 1e-14);
        assert_eq!(u.at(0, 1, 1), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn solve_forward_satisfies_modal_ode() {
        let g = tg(1.0, 2000);
        let cs = CrossSection::new(PI, GammaSide::RightEnd, 3).unwrap();
        let kg = KGrid::new(2.0, 8).unwrap();
        let beta = random_field(cs, kg, 12.0, 4).unwrap();
        let one = SourceProfile::constant_one(g);
        let u = solve_forward(&beta, &one, &g).unwrap();
        let h = g.dt();
        for j in 0..kg.n_k() {
            for l in 1..=3 {
                let e = beta.energy(j, l);
                let s = u.series(j, l);
                for i in 1..g.n_t() {
                    let du = (s[i + 1] - s[i - 1]) / (2.0 * h);
                    let resid = du - (beta.get(j, l) - s[i] * e);
                    assert!(resid.norm() <= 1e-4 * (1.0 + beta.get(j, l).norm()) * e.max(1.0).powi(2));
                }
            }
        }
        assert!(u.snapshot(700).is_hermitian(1e-14));
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let (cs, kg) = single_energy_lattice(2.0);
        let beta = ModalField::zeros(cs, kg);
        let s = SourceProfile::constant_one(tg(1.0, 10));
        assert!(matches!(solve_forward(&beta, &s, &tg(1.0, 12)), Err(Error::GridMismatch(_))));
        let u = solve_forward(&beta, &s, &tg(1.0, 10)).unwrap();
        let other = ModalField::zeros(CrossSection::new(1.0, GammaSide::LeftEnd, 1).unwrap(), kg);
        assert!(time_derivative(&u, &other, &s).is_err());
    }

    #[test]
    fn solve_homogeneous_examples() {
        let g = tg(1.0, 10);
        let (cs, kg) = single_energy_lattice(1.0);
        let mut v0 = ModalField::zeros(cs, kg);
        v0.set(0, 1, Complex64::new(1.0, 0.0));
        let v = solve_homogeneous(&v0, &g).unwrap();
        assert_relative_eq!(v.at(10, 0, 1).re, (-1.0f64).exp(), max_relative = 1e-14);
        assert_eq!(v.snapshot(0), v0);
        let s = v.series(0, 1);
        assert!(s.windows(2).all(|w| w[1].norm() < w[0].norm()));
    }

    #[test]
    fn homogeneous_semigroup_and_contraction() {
        let cs = CrossSection::new(2.0, GammaSide::LeftEnd, 5).unwrap();
        let kg = KGrid::new(3.0, 12).unwrap();
        let v0 = random_field(cs, kg, 40.0, 8).unwrap();
        let g = tg(1.0, 20);
        let v = solve_homogeneous(&v0, &g).unwrap();
        let half = v.snapshot(10);
        let restarted = solve_homogeneous(&half, &tg(0.5, 10)).unwrap().final_state();
        let direct = v.final_state();
        assert!(restarted.sub(&direct).unwrap().l2_norm() <= 1e-12 * direct.l2_norm().max(1e-300));
        let norms: Vec<f64> = (0..=20).map(|i| v.snapshot(i).l2_norm()).collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn time_derivative_examples() {
        let g = tg(1.0, 10);
        let one = SourceProfile::constant_one(g);
        let cs = CrossSection::new(PI, GammaSide::RightEnd, 3).unwrap();
        let kg = KGrid::new(2.0, 4).unwrap();
        let beta = random_field(cs, kg, 20.0, 1).unwrap();
        let u = solve_forward(&beta, &one, &g).unwrap();
        let v = time_derivative(&u, &beta, &one).unwrap();
        assert_eq!(v.snapshot(0), beta);

        let (cs1, kg1) = single_energy_lattice(1.0);
        let mut b1 = ModalField::zeros(cs1, kg1);
        b1.set(0, 1, Complex64::new(2.0, -1.0));
        let u1 = solve_forward(&b1, &one, &g).unwrap();
        let v1 = time_derivative(&u1, &b1, &one).unwrap();
        let expect = b1.get(0, 1) * (-1.0f64).exp();
        assert!((v1.at(10, 0, 1) - expect).norm() < 1e-14);

        let z = ModalField::zeros(cs, kg);
        let uz = solve_forward(&z, &one, &g).unwrap();
        assert!(time_derivative(&uz, &z, &one).unwrap().data().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn source_profile_norms() {
        let g = tg(2.0, 200);
        let s = SourceProfile::exp_decay(g, 1.0).unwrap();
        assert_relative_eq!(s.sigma0(), 1.0);
        assert_relative_eq!(s.c1_norm(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(s.l2_norm(), ((1.0 - (-4.0f64).exp()) / 2.0).sqrt(), max_relative = 1e-4);
        let one = SourceProfile::constant_one(g);
        assert_relative_eq!(one.l2_norm(), 2f64.sqrt(), max_relative = 1e-14);
        assert_eq!(one.c1_norm(), 1.0);
        let raw = SourceProfile::from_samples(g, g.nodes().iter().map(|t| t * t).collect()).unwrap();
        assert_relative_eq!(raw.c1_norm(), 4.0 + 4.0, max_relative = 1e-10);
        assert!(SourceProfile::from_samples(g, vec![1.0; 3]).is_err());
    }
}
