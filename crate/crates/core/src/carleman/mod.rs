//! The Carleman weight `Φ_ρ(t, x') = g(t) (e^{ρψ(x')} - e^{2ρ‖ψ‖∞})` with
//! `g(t) = 1 / (t (T - t))`, its derivative identities, a verifier for the
//! structural weight inequalities, and a quadrature evaluator for both sides
//! of the Carleman inequality on analytic test functions.
//!
//! The transverse profile is affine, `ψ(x') = dist(x', far end) + c`, so it is
//! positive, has unit slope and its normal derivative at the unobserved end is
//! `-1`. It is maximal on the observed endpoint `γ'`.

mod lemma;
mod sides;

pub use lemma::{verify_lemma, IdentityResiduals, ItemRecord, LemmaGrid, LemmaReport};
pub use sides::{carleman_sides, constant_scan, CarlemanSides, ScanRow, ScanSummary, ScanTable, TestFunction};

use serde::{Deserialize, Serialize};

use crate::cross_section::{CrossSection, GammaSide};
use crate::error::{ensure, Result};

/// Default lower bound on `ρ` used by the lemma verifier.
pub const DEFAULT_RHO0: f64 = 4.0;

/// `g(t) = 1 / (t (T - t))` on the open interval `(0, T)`.
pub fn g(t_final: f64, t: f64) -> Result<f64> {
    ensure!(t > 0.0 && t < t_final, InvalidArgument, "g is singular outside (0, {t_final}); got t = {t}");
    Ok(g_unchecked(t_final, t))
}

#[inline]
pub(crate) fn g_unchecked(t_final: f64, t: f64) -> f64 {
    1.0 / (t * (t_final - t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    a: f64,
    gamma_side: GammaSide,
    c_shift: f64,
    rho: f64,
    lambda: f64,
    t_final: f64,
    rho0: f64,
}

/// Result of checking the three admissibility conditions on `ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiConditions {
    pub min_psi: f64,
    pub min_slope: f64,
    pub normal_derivative_off_gamma: f64,
    pub positive: bool,
    pub nondegenerate: bool,
    pub outflow_off_gamma: bool,
}

impl WeightParams {
    pub fn new(cs: &CrossSection, c_shift: f64, rho: f64, lambda: f64, t_final: f64) -> Result<Self> {
        ensure!(c_shift.is_finite() && c_shift > 0.0, InvalidArgument, "c_shift must be positive, got {c_shift}");
        ensure!(rho.is_finite() && rho > 0.0, InvalidArgument, "rho must be positive, got {rho}");
        ensure!(lambda.is_finite() && lambda > 0.0, InvalidArgument, "lambda must be positive, got {lambda}");
        ensure!(t_final.is_finite() && t_final > 0.0, InvalidArgument, "final time must be positive, got {t_final}");
        Ok(Self { a: cs.a(), gamma_side: cs.gamma_side(), c_shift, rho, lambda, t_final, rho0: DEFAULT_RHO0 })
    }

    /// Same weight with `λ = λ_0(ρ)`.
    pub fn at_threshold(cs: &CrossSection, c_shift: f64, rho: f64, t_final: f64) -> Result<Self> {
        let mut p = Self::new(cs, c_shift, rho, 1.0, t_final)?;
        p.lambda = p.lambda0();
        ensure!(p.lambda.is_finite(), Overflow, "lambda_0 = exp(4 rho psi_max) overflows for rho = {rho}");
        Ok(p)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        ensure!(lambda.is_finite() && lambda > 0.0, InvalidArgument, "lambda must be positive, got {lambda}");
        self.lambda = lambda;
        Ok(self)
    }

    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        ensure!(rho.is_finite() && rho > 0.0, InvalidArgument, "rho must be positive, got {rho}");
        self.rho = rho;
        Ok(self)
    }

    pub fn with_rho0(mut self, rho0: f64) -> Result<Self> {
        ensure!(rho0.is_finite() && rho0 > 0.0, InvalidArgument, "rho0 must be positive, got {rho0}");
        self.rho0 = rho0;
        Ok(self)
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn gamma_side(&self) -> GammaSide {
        self.gamma_side
    }
    pub fn c_shift(&self) -> f64 {
        self.c_shift
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn t_final(&self) -> f64 {
        self.t_final
    }
    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    /// Lower bound `α_0` of `|ψ'|`.
    pub fn alpha0(&self) -> f64 {
        1.0
    }

    pub fn psi_max(&self) -> f64 {
        self.a + self.c_shift
    }

    /// `λ_0(ρ) = e^{4ρ‖ψ‖∞}`.
    pub fn lambda0(&self) -> f64 {
        (4.0 * self.rho * self.psi_max()).exp()
    }

    /// Distance from `x'` to the observed endpoint.
    #[inline]
    pub fn distance_to_gamma(&self, x: f64) -> f64 {
        match self.gamma_side {
            GammaSide::RightEnd => self.a - x,
            GammaSide::LeftEnd => x,
        }
    }

    /// `ψ(x') = x' + c` when `γ' = {a}`, `a - x' + c` when `γ' = {0}`.
    #[inline]
    pub fn psi(&self, x: f64) -> f64 {
        self.psi_max() - self.distance_to_gamma(x)
    }

    /// `dψ/dx'`.
    #[inline]
    pub fn psi_slope(&self) -> f64 {
        match self.gamma_side {
            GammaSide::RightEnd => 1.0,
            GammaSide::LeftEnd => -1.0,
        }
    }

    pub fn check_psi_conditions(&self) -> PsiConditions {
        let min_psi = self.psi(0.0).min(self.psi(self.a));
        let min_slope = self.psi_slope().abs();
        // The unobserved endpoint has outward normal opposite to γ's.
        let normal_derivative_off_gamma = -self.gamma_side.outward_normal() * self.psi_slope();
        PsiConditions {
            min_psi,
            min_slope,
            normal_derivative_off_gamma,
            positive: min_psi > 0.0,
            nondegenerate: min_slope >= self.alpha0(),
            outflow_off_gamma: normal_derivative_off_gamma <= 0.0,
        }
    }

    fn check_point(&self, t: f64, x: f64) -> Result<()> {
        ensure!(t > 0.0 && t < self.t_final, InvalidArgument, "time {t} outside (0, {})", self.t_final);
        ensure!((0.0..=self.a).contains(&x), InvalidArgument, "transverse coordinate {x} outside [0, {}]", self.a);
        Ok(())
    }

    pub fn g(&self, t: f64) -> Result<f64> {
        g(self.t_final, t)
    }

    /// `Φ_ρ(t, x')`, strictly negative.
    pub fn phi_rho(&self, t: f64, x: f64) -> Result<f64> {
        self.check_point(t, x)?;
        let (dep, indep) = self.split_unchecked(t, x);
        Ok(dep + indep)
    }

    /// `Φ_ρ` split as `(g e^{ρψ(x')}, -g e^{2ρ‖ψ‖∞})`; the second part does
    /// not depend on `x'`.
    pub fn phi_rho_split(&self, t: f64, x: f64) -> Result<(f64, f64)> {
        self.check_point(t, x)?;
        Ok(self.split_unchecked(t, x))
    }

    #[inline]
    fn split_unchecked(&self, t: f64, x: f64) -> (f64, f64) {
        let gt = g_unchecked(self.t_final, t);
        (gt * (self.rho * self.psi(x)).exp(), -gt * (2.0 * self.rho * self.psi_max()).exp())
    }

    /// Transverse gradient `ρ g e^{ρψ} ψ'`; the longitudinal component is zero.
    pub fn grad_phi_rho(&self, t: f64, x: f64) -> Result<f64> {
        self.check_point(t, x)?;
        Ok(self.rho * g_unchecked(self.t_final, t) * (self.rho * self.psi(x)).exp() * self.psi_slope())
    }

    /// `∂_t Φ_ρ = (2t - T) g Φ_ρ`.
    pub fn dt_phi_rho(&self, t: f64, x: f64) -> Result<f64> {
        let phi = self.phi_rho(t, x)?;
        Ok((2.0 * t - self.t_final) * g_unchecked(self.t_final, t) * phi)
    }

    /// `∂_t² Φ_ρ = 2 (1 + (2t - T)² g) g Φ_ρ`.
    pub fn dtt_phi_rho(&self, t: f64, x: f64) -> Result<f64> {
        let phi = self.phi_rho(t, x)?;
        let gt = g_unchecked(self.t_final, t);
        let c = 2.0 * t - self.t_final;
        Ok(2.0 * (1.0 + c * c * gt) * gt * phi)
    }

    /// Upper bound `-c₂ g(t)` of `Φ_ρ` on `γ'`, with `c₂ = e^{2ρ‖ψ‖∞} - e^{ρ‖ψ‖∞}`.
    pub fn gamma_bound_constant(&self) -> f64 {
        let r = self.rho * self.psi_max();
        (2.0 * r).exp() - r.exp()
    }
}
