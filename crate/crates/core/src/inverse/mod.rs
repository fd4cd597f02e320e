//! Reconstruction of the spatial source factor `β` and the associated
//! stability diagnostics: the log-stability modulus, the spectral cutoff
//! rule, final-state inversion, the energy-splitting bound, observability
//! ratios, boundary-data inversion and the noise sweep.

mod fit;
mod observability;
mod sweep;

pub use fit::{
    reconstruct_from_trace, CutoffPolicy, FiberDiagnostics, InversionConfig, InversionDiagnostics, InversionRegime,
};
pub use observability::{empirical_observability_constant, observability_ratio};
pub use sweep::{spread_energy_field, stability_sweep, SweepRecord, SweepReport};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::modal::ModalField;

/// Largest `E T` accepted when inflating coefficients by `e^{E T}`.
pub const MAX_INFLATION_EXPONENT: f64 = 700.0;

/// `Φ(r) = r^{1/2} + |ln r|^{-1/2}` with `Φ(0) = 0`.
pub fn phi_modulus(r: f64) -> Result<f64> {
    ensure!(r.is_finite() && r >= 0.0, InvalidArgument, "modulus argument must be a nonnegative number, got {r}");
    ensure!(r != 1.0, InvalidArgument, "modulus is undefined at r = 1");
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(r.sqrt() + r.ln().abs().powf(-0.5))
}

/// Energy threshold defining the recoverable set `{λ_ℓ + k² ≤ λ_cut}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCutoff(f64);

impl EnergyCutoff {
    pub fn new(lambda_cut: f64) -> Result<Self> {
        ensure!(lambda_cut > 0.0 && !lambda_cut.is_nan(), InvalidArgument, "cutoff must be positive, got {lambda_cut}");
        Ok(Self(lambda_cut))
    }

    /// Keeps every lattice point.
    pub fn unlimited() -> Self {
        Self(f64::INFINITY)
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn admits(&self, energy: f64) -> bool {
        energy <= self.0
    }
}

/// Outcome of the cutoff rule for a data size `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum CutoffRegime {
    Zero,
    Cutoff {
        lambda_cut: f64,
    },
    /// `κ ≥ e^{-2 T λ_1}`: only the budget bound is available.
    Saturated,
}

/// `κ = 0` gives `Zero`, `0 < κ < e^{-2Tλ_1}` gives `λ = -ln κ / (2T)`,
/// anything larger is saturated.
pub fn choose_cutoff(kappa: f64, t_final: f64, lambda_1: f64) -> Result<CutoffRegime> {
    ensure!(kappa.is_finite() && kappa >= 0.0, InvalidArgument, "data norm must be nonnegative, got {kappa}");
    ensure!(t_final > 0.0, InvalidArgument, "final time must be positive, got {t_final}");
    if kappa == 0.0 {
        return Ok(CutoffRegime::Zero);
    }
    if kappa >= (-2.0 * t_final * lambda_1).exp() {
        return Ok(CutoffRegime::Saturated);
    }
    Ok(CutoffRegime::Cutoff { lambda_cut: -kappa.ln() / (2.0 * t_final) })
}

/// `β̂ = e^{E T} v(T)` on lattice points admitted by the cutoff, zero elsewhere.
pub fn reconstruct_from_final_state(v_final: &ModalField, t_final: f64, cut: EnergyCutoff) -> Result<ModalField> {
    ensure!(t_final > 0.0 && t_final.is_finite(), InvalidArgument, "final time must be positive, got {t_final}");
    let mut out = ModalField::zeros(*v_final.cross_section(), *v_final.kgrid());
    for j in 0..v_final.kgrid().n_k() {
        for l in 1..=v_final.l_max() {
            let e = v_final.energy(j, l);
            if !cut.admits(e) {
                continue;
            }
            ensure!(
                e * t_final <= MAX_INFLATION_EXPONENT,
                Overflow,
                "inflation factor exp({}) exceeds the representable range at (j={j}, l={l})",
                e * t_final
            );
            out.set(j, l, v_final.get(j, l) * (e * t_final).exp());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySplit {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// `‖β‖² ≤ e^{2λT} ‖v(T)‖² + |β|²_{H¹} / λ` for `λ > λ_1`, where `v(T)` is
/// the free evolution of `β`.
pub fn energy_split_check(beta: &ModalField, v_final: &ModalField, lambda: f64, t_final: f64) -> Result<EnergySplit> {
    beta.check_same_lattice(v_final)?;
    let lambda_1 = beta.cross_section().lambda_1();
    ensure!(lambda > lambda_1, Precondition, "lambda > lambda_1 violated: {lambda} <= {lambda_1}");
    let lhs = beta.l2_norm().powi(2);
    let first = (2.0 * lambda * t_final).exp() * v_final.l2_norm().powi(2);
    let rhs = first + beta.h1_seminorm().powi(2) / lambda;
    Ok(EnergySplit { lhs, rhs, margin: rhs - lhs })
}
