use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{choose_cutoff, CutoffRegime, EnergyCutoff};
use crate::cross_section::CrossSection;
use crate::error::{ensure, Result};
use crate::forward::{trace_h1_norm, NeumannTrace, Provenance, SourceProfile};
use crate::modal::{mode_energy, ModalField};
use crate::quadrature::{second_order_derivative, trapezoid_weights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum CutoffPolicy {
    /// `λ = -ln κ / (2T)` with `κ` the noise level of the data.
    PaperRule,
    Fixed {
        lambda_cut: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    /// Largest transverse mode index fitted at each `k`.
    pub l_fit: usize,
    /// Tikhonov weight; `None` uses the noise level `κ`.
    pub ridge: Option<f64>,
    pub cutoff_policy: CutoffPolicy,
    /// `H¹` budget `M` used as the error bound in the saturated regime.
    pub m_budget: f64,
    /// Noise level `κ` of the data; `None` reads it from the trace provenance
    /// (zero for clean traces).
    pub noise_level: Option<f64>,
}

impl InversionConfig {
    pub fn new(l_fit: usize) -> Self {
        Self { l_fit, ridge: None, cutoff_policy: CutoffPolicy::PaperRule, m_budget: 1.0, noise_level: None }
    }

    pub fn validate(&self, cs: &CrossSection) -> Result<()> {
        ensure!(self.l_fit >= 1, InvalidArgument, "l_fit must be at least 1");
        ensure!(self.l_fit <= cs.l_max(), InvalidArgument, "l_fit = {} exceeds l_max = {}", self.l_fit, cs.l_max());
        if let Some(r) = self.ridge {
            ensure!(r.is_finite() && r >= 0.0, InvalidArgument, "ridge must be nonnegative, got {r}");
        }
        if let Some(k) = self.noise_level {
            ensure!(k.is_finite() && k >= 0.0, InvalidArgument, "noise level must be nonnegative, got {k}");
        }
        if let CutoffPolicy::Fixed { lambda_cut } = self.cutoff_policy {
            EnergyCutoff::new(lambda_cut)?;
        }
        ensure!(self.m_budget > 0.0, InvalidArgument, "m_budget must be positive, got {}", self.m_budget);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum InversionRegime {
    /// The trace vanishes identically; the reconstruction is zero.
    ZeroData,
    /// Noise-free data: no cutoff, no ridge.
    Noiseless,
    Cutoff {
        lambda_cut: f64,
    },
    /// Only the budget bound `‖β‖ ≤ M` is available; `λ_cut = λ_1`.
    Saturated {
        lambda_cut: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberDiagnostics {
    pub j: usize,
    pub k: f64,
    pub fitted_modes: usize,
    /// Fitted modes inside the energy cutoff; the others are discarded.
    pub kept_modes: usize,
    /// Ratio of extreme singular values of the weighted design, absent if
    /// the design is singular.
    pub condition_number: Option<f64>,
    /// Weighted residual norm of the fit.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionDiagnostics {
    pub regime: InversionRegime,
    /// `trace_h1_norm` of the data.
    pub data_norm: f64,
    pub noise_level: f64,
    pub ridge: f64,
    pub l_fit: usize,
    pub general_sigma: bool,
    /// Error bound available in the saturated regime.
    pub budget_bound: Option<f64>,
    pub fibers: Vec<FiberDiagnostics>,
}

/// Ridge solution `V diag(s / (s² + r)) Uᵀ b` of the weighted problem,
/// for the real and imaginary parts of `b` at once.
fn ridge_solve(
    a: &DMatrix<f64>,
    b_re: &DVector<f64>,
    b_im: &DVector<f64>,
    ridge: f64,
) -> (Vec<Complex64>, Option<f64>) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let vt = svd.v_t.as_ref().expect("right singular vectors requested");
    let s = &svd.singular_values;
    let s_max = s.max();
    let s_min = s.min();
    let cond = if s_min > 0.0 { Some(s_max / s_min) } else { None };
    // Singular values below roundoff relative to the largest carry no information.
    let floor = s_max * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    let filter = |si: f64| if si <= floor { 0.0 } else { si / (si * si + ridge) };
    let proj_re = u.transpose() * b_re;
    let proj_im = u.transpose() * b_im;
    let n = a.ncols();
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for (r, &si) in s.iter().enumerate() {
        let f = filter(si);
        if f == 0.0 {
            continue;
        }
        let c = Complex64::new(proj_re[r] * f, proj_im[r] * f);
        for (col, xc) in x.iter_mut().enumerate() {
            *xc += c * vt[(r, col)];
        }
    }
    (x, cond)
}

/// Reconstructs `β` from the Neumann trace of the driven problem.
///
/// Per fiber `k_j`, the time derivative of the trace (second-order stencils)
/// is fitted by a ridge-regularized weighted least-squares problem whose
/// columns are the same stencil applied to the modelled trace of each mode,
/// `∂_ν'φ_ℓ(γ') ∫_0^t σ(s) e^{-E(t-s)} ds`. For `σ ≡ 1` these columns
/// approximate `e^{-Et} ∂_ν'φ_ℓ(γ')`. All modes `ℓ ≤ l_fit` are fitted so
/// that faster modes present in the data are not aliased onto slower ones;
/// afterwards only coefficients inside the energy cutoff are kept and every
/// other coefficient is zero.
pub fn reconstruct_from_trace(
    d: &NeumannTrace,
    sigma: &SourceProfile,
    cs: &CrossSection,
    cfg: &InversionConfig,
) -> Result<(ModalField, InversionDiagnostics)> {
    cfg.validate(cs)?;
    ensure!(sigma.sigma0() != 0.0, Precondition, "sigma(0) != 0 violated: the source profile vanishes at t = 0");
    let tg = *d.time_grid();
    ensure!(*sigma.time_grid() == tg, GridMismatch, "source profile and trace use different time grids");
    let kgrid = *d.kgrid();
    let data_norm = trace_h1_norm(d);
    let noise_level = cfg.noise_level.unwrap_or(match d.provenance() {
        Provenance::Clean => 0.0,
        Provenance::Noisy { delta, .. } => delta,
    });
    let general_sigma = !sigma.is_constant_one();
    let lambda_1 = cs.lambda_1();
    let t_final = tg.t_final();

    let regime = if data_norm == 0.0 {
        InversionRegime::ZeroData
    } else {
        match cfg.cutoff_policy {
            CutoffPolicy::Fixed { lambda_cut } => InversionRegime::Cutoff { lambda_cut },
            CutoffPolicy::PaperRule => match choose_cutoff(noise_level, t_final, lambda_1)? {
                CutoffRegime::Zero => InversionRegime::Noiseless,
                CutoffRegime::Cutoff { lambda_cut } => InversionRegime::Cutoff { lambda_cut },
                CutoffRegime::Saturated => InversionRegime::Saturated { lambda_cut: lambda_1 },
            },
        }
    };
    let ridge = cfg.ridge.unwrap_or(noise_level);
    let mut diag = InversionDiagnostics {
        regime,
        data_norm,
        noise_level,
        ridge,
        l_fit: cfg.l_fit,
        general_sigma,
        budget_bound: matches!(regime, InversionRegime::Saturated { .. }).then_some(cfg.m_budget),
        fibers: Vec::new(),
    };
    let mut beta = ModalField::zeros(*cs, kgrid);
    let cut = match regime {
        InversionRegime::ZeroData => return Ok((beta, diag)),
        InversionRegime::Noiseless => EnergyCutoff::unlimited(),
        InversionRegime::Cutoff { lambda_cut } | InversionRegime::Saturated { lambda_cut } => {
            EnergyCutoff::new(lambda_cut)?
        }
    };

    let n = tg.n_nodes();
    let dt = tg.dt();
    let sqrt_w: Vec<f64> = trapezoid_weights(tg.n_t(), dt).into_iter().map(f64::sqrt).collect();
    let dn = cs.normal_derivatives();

    let fits: Vec<(Vec<(usize, Complex64)>, FiberDiagnostics)> = (0..kgrid.n_k())
        .into_par_iter()
        .map(|j| {
            let modes: Vec<usize> = (1..=cfg.l_fit).collect();
            let k = kgrid.node(j);
            let mut a = DMatrix::<f64>::zeros(n, modes.len());
            for (c, &l) in modes.iter().enumerate() {
                let series = sigma.duhamel_series(mode_energy(cs, &kgrid, j, l));
                let col = second_order_derivative(&series, dt);
                for i in 0..n {
                    a[(i, c)] = sqrt_w[i] * dn[l - 1] * col[i];
                }
            }
            let y = d.fiber_time_derivative(j);
            let b_re = DVector::from_iterator(n, (0..n).map(|i| sqrt_w[i] * y[i].re));
            let b_im = DVector::from_iterator(n, (0..n).map(|i| sqrt_w[i] * y[i].im));
            let (x, condition_number) = ridge_solve(&a, &b_re, &b_im, ridge);
            let mut res = 0.0;
            for i in 0..n {
                let mut m = Complex64::new(0.0, 0.0);
                for (c, xc) in x.iter().enumerate() {
                    m += xc * a[(i, c)];
                }
                res += (m - Complex64::new(b_re[i], b_im[i])).norm_sqr();
            }
            let kept: Vec<(usize, Complex64)> =
                modes.into_iter().zip(x).filter(|&(l, _)| cut.admits(mode_energy(cs, &kgrid, j, l))).collect();
            let diag = FiberDiagnostics {
                j,
                k,
                fitted_modes: cfg.l_fit,
                kept_modes: kept.len(),
                condition_number,
                residual: res.sqrt(),
            };
            (kept, diag)
        })
        .collect();

    for (coeffs, fd) in fits {
        for (l, c) in coeffs {
            beta.set(fd.j, l, c);
        }
        diag.fibers.push(fd);
    }
    Ok((beta, diag))
}
