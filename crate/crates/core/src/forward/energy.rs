//! Numerical check of the forward energy estimates.
//!
//! With `‖·‖` the `H¹(Ω)` norm and `β` the spatial factor:
//!
//! * free decay from `v0 = β`: `‖v(t)‖ ≤ ‖v0‖`;
//! * driven problem `f = σβ`, `u(0) = 0`: `‖u(t)‖ ≤ ‖f‖_{L²(0,T;H¹)}`;
//! * `v = ∂_t u` solves the driven problem with `v0 = σ(0)β`, `f = σ'β`,
//!   so `‖v(t)‖ ≤ |σ(0)|‖β‖ + ‖σ'‖_{L²}‖β‖`;
//! * and `‖∂_t u(t)‖ ≤ (1 + T^{1/2}) ‖σ‖_{C¹} ‖β‖`.
//!
//! Each margin is `min_i (rhs - lhs(t_i))`. The first and third bounds are
//! attained at `t = 0`, so margins are compared against a roundoff tolerance
//! relative to the largest right-hand side.

use serde::{Deserialize, Serialize};

use super::{solve_forward, time_derivative, ModalTrajectory, SourceProfile, TimeGrid};
use crate::error::Result;
use crate::modal::{mode_energy, ModalField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub homogeneous_margin: f64,
    pub driven_margin: f64,
    pub derivative_margin: f64,
    pub derivative_bound_margin: f64,
    /// Smallest of the four margins.
    pub worst_margin: f64,
    pub beta_h1: f64,
    pub tolerance: f64,
}

impl EnergyReport {
    pub fn passed(&self) -> bool {
        self.worst_margin >= -self.tolerance
    }
}

fn h1_norms_over_time(traj: &ModalTrajectory) -> Vec<f64> {
    let cs = traj.cross_section();
    let kg = traj.kgrid();
    let n = traj.time_grid().n_nodes();
    let mut acc = vec![0.0; n];
    for j in 0..kg.n_k() {
        for l in 1..=cs.l_max() {
            let w = 1.0 + mode_energy(cs, kg, j, l);
            for (a, c) in acc.iter_mut().zip(traj.series(j, l)) {
                *a += w * c.norm_sqr();
            }
        }
    }
    acc.into_iter().map(|s| (kg.dk() * s).sqrt()).collect()
}

fn margin(rhs: f64, lhs: &[f64]) -> f64 {
    lhs.iter().map(|l| rhs - l).fold(f64::INFINITY, f64::min)
}

pub fn check_energy_estimates(beta: &ModalField, sigma: &SourceProfile, tg: &TimeGrid) -> Result<EnergyReport> {
    let b = beta.h1_norm();
    let free = super::solve_homogeneous(beta, tg)?;
    let homogeneous_margin = margin(b, &h1_norms_over_time(&free));

    let u = solve_forward(beta, sigma, tg)?;
    let driven_margin = margin(sigma.l2_norm() * b, &h1_norms_over_time(&u));

    let v = time_derivative(&u, beta, sigma)?;
    let v_norms = h1_norms_over_time(&v);
    let derivative_rhs = (sigma.sigma0().abs() + sigma.derivative_l2_norm()) * b;
    let derivative_margin = margin(derivative_rhs, &v_norms);
    let bound_rhs = (1.0 + tg.t_final().sqrt()) * sigma.c1_norm() * b;
    let derivative_bound_margin = margin(bound_rhs, &v_norms);
    let tolerance = 1e-12 * b.max(sigma.l2_norm() * b).max(derivative_rhs).max(bound_rhs);

    let worst_margin = homogeneous_margin.min(driven_margin).min(derivative_margin).min(derivative_bound_margin);
    Ok(EnergyReport {
        homogeneous_margin,
        driven_margin,
        derivative_margin,
        derivative_bound_margin,
        worst_margin,
        beta_h1: b,
        tolerance,
    })
}
