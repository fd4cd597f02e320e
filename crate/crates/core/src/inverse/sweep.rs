use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fit::{reconstruct_from_trace, InversionConfig, InversionRegime};
use super::phi_modulus;
use crate::cross_section::CrossSection;
use crate::error::{ensure, Result};
use crate::forward::{add_noise, neumann_trace, solve_forward, trace_h1_norm, SourceProfile, TimeGrid};
use crate::modal::{KGrid, ModalField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub delta: f64,
    /// `trace_h1_norm` of the injected perturbation.
    pub kappa: f64,
    /// `‖β - β̂‖_{L²}`.
    pub err: f64,
    /// `C_fit Φ(κ)` in the cutoff regime, the budget `M` when saturated.
    pub bound: Option<f64>,
    /// `err / κ`, absent for `κ = 0`.
    pub ratio: Option<f64>,
    pub regime: InversionRegime,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub records: Vec<SweepRecord>,
    /// `max err / Φ(κ)` over non-saturated records with `κ > 0`.
    pub c_fit: Option<f64>,
    pub beta_l2: f64,
    pub beta_h1: f64,
    pub seed: u64,
}

impl SweepReport {
    /// Rows sorted by decreasing noise, as `delta,kappa,err,bound,ratio`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["delta", "kappa", "err", "bound", "ratio"])?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_default();
        for r in &self.records {
            wtr.write_record([
                format!("{:.16e}", r.delta),
                format!("{:.16e}", r.kappa),
                format!("{:.16e}", r.err),
                opt(r.bound),
                opt(r.ratio),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Reconstructs `β` from its trace perturbed at each noise level of
/// `deltas` (draw `i` uses seed `seed + i`) and calibrates `C_fit`.
pub fn stability_sweep(
    beta: &ModalField,
    deltas: &[f64],
    sigma: &SourceProfile,
    tg: &TimeGrid,
    cfg: &InversionConfig,
    seed: u64,
) -> Result<SweepReport> {
    for &d in deltas {
        ensure!(d.is_finite() && d >= 0.0, InvalidArgument, "noise levels must be nonnegative, got {d}");
    }
    let beta_h1 = beta.h1_norm();
    ensure!(
        beta_h1 <= cfg.m_budget * (1.0 + 1e-12),
        Precondition,
        "h1 norm of beta ({beta_h1}) exceeds the budget M = {}",
        cfg.m_budget
    );
    let cs = *beta.cross_section();
    let clean = neumann_trace(&solve_forward(beta, sigma, tg)?);

    let mut records = Vec::with_capacity(deltas.len());
    for (i, &delta) in deltas.iter().enumerate() {
        let noisy = add_noise(&clean, delta, seed.wrapping_add(i as u64))?;
        let kappa = trace_h1_norm(&noisy.sub(&clean)?);
        let run_cfg = InversionConfig { noise_level: Some(kappa), ..*cfg };
        let (est, diag) = reconstruct_from_trace(&noisy, sigma, &cs, &run_cfg)?;
        let err = est.sub(beta)?.l2_norm();
        let saturated = matches!(diag.regime, InversionRegime::Saturated { .. });
        records.push(SweepRecord {
            delta,
            kappa,
            err,
            bound: None,
            ratio: (kappa > 0.0).then(|| err / kappa),
            regime: diag.regime,
            saturated,
        });
    }

    let mut c_fit: Option<f64> = None;
    for r in records.iter().filter(|r| !r.saturated && r.kappa > 0.0) {
        // Rounded up so that `C_fit Φ(κ) ≥ err` survives the multiplication.
        let c = r.err / phi_modulus(r.kappa)? * (1.0 + 4.0 * f64::EPSILON);
        c_fit = Some(c_fit.map_or(c, |m| m.max(c)));
    }
    for r in &mut records {
        r.bound = if r.saturated {
            Some(cfg.m_budget)
        } else if r.kappa > 0.0 {
            c_fit.map(|c| c * phi_modulus(r.kappa).expect("kappa below the saturation threshold"))
        } else {
            None
        };
    }
    Ok(SweepReport { records, c_fit, beta_l2: beta.l2_norm(), beta_h1, seed })
}

/// Hermitian field with `n_active` active lattice pairs whose energies are
/// spread geometrically over `[λ_1, e_max]`, with moduli uniform in
/// `[0.5, 1]`, uniform phases, rescaled to `‖β‖_{H¹} = m`.
pub fn spread_energy_field(
    cs: CrossSection,
    kgrid: KGrid,
    n_active: usize,
    e_max: f64,
    m: f64,
    seed: u64,
) -> Result<ModalField> {
    let lambda_1 = cs.lambda_1();
    ensure!(n_active >= 1, InvalidArgument, "need at least one active mode");
    ensure!(e_max > lambda_1, InvalidArgument, "energy range [{lambda_1}, {e_max}] is empty");
    ensure!(m > 0.0, InvalidArgument, "H1 budget must be positive, got {m}");
    let half = kgrid.n_k() / 2;
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for j in half..kgrid.n_k() {
        for l in 1..=cs.l_max() {
            let e = cs.eigenvalue_unchecked(l) + kgrid.node(j).powi(2);
            if e <= e_max {
                candidates.push((j, l, e));
            }
        }
    }
    ensure!(
        candidates.len() >= n_active,
        InvalidArgument,
        "only {} lattice points have energy <= {e_max}, {n_active} requested",
        candidates.len()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut beta = ModalField::zeros(cs, kgrid);
    let ratio = e_max / lambda_1;
    for i in 0..n_active {
        let frac = if n_active == 1 { 0.0 } else { i as f64 / (n_active - 1) as f64 };
        let target = lambda_1 * ratio.powf(frac);
        let (idx, _) = candidates
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 .2 - target).abs().total_cmp(&(b.1 .2 - target).abs()))
            .expect("candidate list is nonempty");
        let (j, l, _) = candidates.swap_remove(idx);
        let modulus: f64 = rng.random_range(0.5..=1.0);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        beta.set_hermitian(j, l, Complex64::from_polar(modulus, phase));
    }
    Ok(beta.rescaled_to_h1(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cross_section::GammaSide;
    use crate::modal::random_field;
    use std::f64::consts::PI;

    fn problem() -> (ModalField, TimeGrid) {
        let cs = CrossSection::new(PI, GammaSide::RightEnd, 6).unwrap();
        let kg = KGrid::new(3.0, 16).unwrap();
        (random_field(cs, kg, 20.0, 5).unwrap().rescaled_to_h1(1.0), TimeGrid::new(1.0, 400).unwrap())
    }

    #[test]
    fn noiseless_sweep_is_exact() {
        let (beta, tg) = problem();
        let one = SourceProfile::constant_one(tg);
        let r = stability_sweep(&beta, &[0.0], &one, &tg, &InversionConfig::new(4), 1).unwrap();
        assert!(r.records[0].err <= 1e-8);
        assert!(r.c_fit.is_none());
    }

    #[test]
    fn records_respect_calibrated_bound() {
        let (beta, tg) = problem();
        let one = SourceProfile::constant_one(tg);
        let deltas = [1e-2, 1e-3, 1e-4, 0.5];
        let r = stability_sweep(&beta, &deltas, &one, &tg, &InversionConfig::new(6), 3).unwrap();
        assert!(r.c_fit.unwrap() > 0.0);
        for rec in &r.records {
            assert!((rec.kappa / rec.delta - 1.0).abs() < 1e-10);
            assert!(rec.err <= rec.bound.unwrap() * (1.0 + 1e-12), "{rec:?}");
        }
        assert!(r.records[3].saturated);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("delta,kappa,err,bound,ratio\n"));
    }

    #[test]
    fn spread_field_has_requested_energies() {
        let cs = CrossSection::new(PI, GammaSide::RightEnd, 16).unwrap();
        let kg = KGrid::new(6.0, 64).unwrap();
        let b = spread_energy_field(cs, kg, 6, 30.0, 1.0, 4).unwrap();
        let mut es = Vec::new();
        for j in 32..64 {
            for l in 1..=16 {
                if b.get(j, l).norm() > 0.0 {
                    es.push(b.energy(j, l));
                }
            }
        }
        assert_eq!(es.len(), 6);
        assert!(es.iter().all(|&e| (1.0..=30.0).contains(&e)));
        assert!(b.is_hermitian(0.0));
        assert!((b.h1_norm() - 1.0).abs() < 1e-12);
        assert!(spread_energy_field(cs, kg, 6, 0.5, 1.0, 4).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let (beta, tg) = problem();
        let one = SourceProfile::constant_one(tg);
        let r = stability_sweep(&beta.scaled(2.0), &[1e-3], &one, &tg, &InversionConfig::new(3), 0);
        assert!(matches!(r, Err(crate::Error::Precondition(_))));
    }
}
