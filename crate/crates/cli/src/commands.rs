use std::path::{Path, PathBuf};

use serde::Serialize;
use wgheat_core::carleman::{CarlemanSides, PsiConditions, ScanTable};
use wgheat_core::inverse::{spread_energy_field, InversionDiagnostics, SweepReport};
use wgheat_core::{
    add_noise, carleman_sides, check_energy_estimates, constant_scan, empirical_observability_constant, neumann_trace,
    random_field, reconstruct_from_trace, solve_forward, stability_sweep, trace_h1_norm, verify_lemma, EnergyReport,
    LemmaReport, ModalField, NeumannTrace, TestFunction, TraceSidecar,
};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{sweep_plot_data, RunOutput};

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Loads a modal field and checks it lives on the configured lattice.
fn load_field(path: &Path, cfg: &ExperimentConfig) -> Result<ModalField, CliError> {
    let field = ModalField::from_json(&read_text(path)?)?;
    if *field.cross_section() != cfg.cross_section()? || *field.kgrid() != cfg.kgrid()? {
        return Err(CliError::Precondition(format!(
            "{}: field lattice does not match cross_section/grids in the config",
            path.display()
        )));
    }
    Ok(field)
}

/// `β` from `forward.beta`, or a seeded random field rescaled to the budget.
fn forward_beta(cfg: &ExperimentConfig) -> Result<ModalField, CliError> {
    match &cfg.forward.beta {
        Some(p) => load_field(p, cfg),
        None => {
            let cap = cfg.forward.energy_cap / cfg.grids.t_final;
            let field = random_field(cfg.cross_section()?, cfg.kgrid()?, cap, cfg.seed)?;
            if field.h1_norm() == 0.0 {
                return Err(CliError::Precondition(format!(
                    "forward.energy_cap = {} admits no lattice point",
                    cfg.forward.energy_cap
                )));
            }
            Ok(field.rescaled_to_h1(cfg.inverse.m_budget))
        }
    }
}

fn sidecar_path(trace: &Path) -> PathBuf {
    trace.with_extension("json")
}

#[derive(Serialize)]
struct ForwardSummary {
    seed: u64,
    beta_l2: f64,
    beta_h1: f64,
    final_state_l2: f64,
    clean_kappa: f64,
    noise_delta: f64,
    kappa: f64,
}

pub fn forward(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let tg = cfg.time_grid()?;
    let sigma = cfg.source_profile(tg)?;
    let beta = forward_beta(cfg)?;
    let traj = solve_forward(&beta, &sigma, &tg)?;
    let clean = neumann_trace(&traj);
    let trace = if cfg.forward.noise_delta > 0.0 {
        add_noise(&clean, cfg.forward.noise_delta, cfg.seed)?
    } else {
        clean.clone()
    };
    let summary = ForwardSummary {
        seed: cfg.seed,
        beta_l2: beta.l2_norm(),
        beta_h1: beta.h1_norm(),
        final_state_l2: traj.final_state().l2_norm(),
        clean_kappa: trace_h1_norm(&clean),
        noise_delta: cfg.forward.noise_delta,
        kappa: trace_h1_norm(&trace),
    };
    out.write_bytes("beta.json", format!("{}\n", beta.to_json()?).as_bytes())?;
    out.write_with("trace.csv", |buf| trace.write_csv(buf))?;
    out.write_json("trace.json", &trace.sidecar())?;
    out.write_json("forward.json", &summary)?;
    Ok(())
}

#[derive(Serialize)]
struct InversionSummary {
    trace: String,
    beta_hat_l2: f64,
    beta_hat_h1: f64,
    /// `‖β - β̂‖_{L²}` when a reference field is configured.
    reference_error: Option<f64>,
    diagnostics: InversionDiagnostics,
}

pub fn invert(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let trace_path =
        cfg.inverse.trace.as_deref().ok_or_else(|| CliError::Config("`invert` needs inverse.trace".into()))?;
    let sidecar_file = sidecar_path(trace_path);
    let sidecar: TraceSidecar = serde_json::from_str(&read_text(&sidecar_file)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", sidecar_file.display())))?;
    let file = std::fs::File::open(trace_path).map_err(|e| CliError::Io(format!("{}: {e}", trace_path.display())))?;
    let trace = NeumannTrace::read_csv(file, &sidecar)?;

    let cs = cfg.cross_section()?;
    let sigma = cfg.source_profile(*trace.time_grid())?;
    let (beta_hat, diagnostics) = reconstruct_from_trace(&trace, &sigma, &cs, &cfg.inversion_config())?;
    let reference_error = match &cfg.inverse.reference {
        Some(p) => Some(ModalField::from_json(&read_text(p)?)?.sub(&beta_hat)?.l2_norm()),
        None => None,
    };
    let summary = InversionSummary {
        trace: trace_path.display().to_string(),
        beta_hat_l2: beta_hat.l2_norm(),
        beta_hat_h1: beta_hat.h1_norm(),
        reference_error,
        diagnostics,
    };
    out.write_bytes("beta_hat.json", format!("{}\n", beta_hat.to_json()?).as_bytes())?;
    out.write_json("inversion.json", &summary)?;
    Ok(())
}

#[derive(Serialize)]
struct SweepSummary {
    beta_source: String,
    c_fit: Option<f64>,
    /// Whether `err / κ` is nondecreasing as `δ` decreases over non-saturated rows.
    ratio_nondecreasing: bool,
    report: SweepReport,
}

pub fn sweep(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let tg = cfg.time_grid()?;
    let sigma = cfg.source_profile(tg)?;
    let seed = cfg.sweep_seed();
    let (beta, beta_source) = match &cfg.sweep.beta {
        Some(p) => (load_field(p, cfg)?, p.display().to_string()),
        None => {
            let e_max = 30.0 / cfg.grids.t_final;
            let field = spread_energy_field(
                cfg.cross_section()?,
                cfg.kgrid()?,
                cfg.sweep.n_active,
                e_max,
                cfg.inverse.m_budget,
                seed,
            )?;
            (field, format!("spread_energy_field(n_active={}, e_max={e_max})", cfg.sweep.n_active))
        }
    };
    let report = stability_sweep(&beta, &cfg.sweep.deltas, &sigma, &tg, &cfg.inversion_config(), seed)?;

    let mut by_delta: Vec<_> = report.records.iter().filter(|r| !r.saturated).collect();
    by_delta.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let ratios: Vec<f64> = by_delta.iter().filter_map(|r| r.ratio).collect();
    let ratio_nondecreasing = ratios.windows(2).all(|w| w[1] >= w[0]);

    let rows: Vec<_> = report.records.iter().map(|r| (r.kappa, r.err, r.bound)).collect();
    out.write_with("sweep.csv", |buf| report.write_csv(buf))?;
    out.write_bytes("sweep.dat", sweep_plot_data(&rows).as_bytes())?;
    out.write_bytes("beta.json", format!("{}\n", beta.to_json()?).as_bytes())?;
    out.write_json("sweep.json", &SweepSummary { beta_source, c_fit: report.c_fit, ratio_nondecreasing, report })?;
    Ok(())
}

#[derive(Serialize)]
struct SingleSides {
    test: TestFunction,
    sides: CarlemanSides,
}

#[derive(Serialize)]
struct CarlemanSummary {
    psi_conditions: PsiConditions,
    lemma: LemmaReport,
    /// Sides at `λ = λ_0(ρ)` for the lowest test function.
    reference_sides: Option<SingleSides>,
    scan: ScanTable,
}

pub fn carleman(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let p = cfg.weight_params()?;
    let lemma = verify_lemma(&p, cfg.carleman.grid.n_t, cfg.carleman.grid.n_x)?;
    let family = TestFunction::default_family(&cfg.carleman.k_nodes);
    let lambdas: Vec<f64> = cfg.carleman.lambda_list.iter().map(|f| f * p.lambda0()).collect();
    let scan = constant_scan(&family, &p, &lambdas, cfg.carleman.allow_sub_threshold)?;
    let reference_sides = match family.first() {
        Some(u) => Some(SingleSides { test: *u, sides: carleman_sides(u, &p)? }),
        None => None,
    };

    out.write_json("lemma.json", &lemma)?;
    out.write_with("scan.csv", |buf| scan.write_csv(buf))?;
    out.write_json(
        "carleman.json",
        &CarlemanSummary { psi_conditions: p.check_psi_conditions(), lemma, reference_sides, scan },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ObservabilitySummary {
    seed: u64,
    sample_size: usize,
    energy_cap: f64,
    n_t: usize,
    constant: f64,
    refined_n_t: usize,
    refined_constant: f64,
    relative_change: f64,
}

pub fn observability(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let (cs, kg, tg) = (cfg.cross_section()?, cfg.kgrid()?, cfg.time_grid()?);
    if cfg.observability.sample_size == 0 {
        return Err(CliError::Precondition("observability.sample_size must be positive".into()));
    }
    let cap = cfg.observability.energy_cap / cfg.grids.t_final;
    let n = cfg.observability.sample_size;
    let constant = empirical_observability_constant(cs, kg, n, cap, &tg, cfg.seed)?;
    let fine = tg.refined();
    let refined_constant = empirical_observability_constant(cs, kg, n, cap, &fine, cfg.seed)?;
    out.write_json(
        "observability.json",
        &ObservabilitySummary {
            seed: cfg.seed,
            sample_size: n,
            energy_cap: cap,
            n_t: tg.n_t(),
            constant,
            refined_n_t: fine.n_t(),
            refined_constant,
            relative_change: (refined_constant - constant).abs() / constant,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct EnergySummary {
    passed: bool,
    report: EnergyReport,
}

pub fn check_energy(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let tg = cfg.time_grid()?;
    let sigma = cfg.source_profile(tg)?;
    let beta = forward_beta(cfg)?;
    let report = check_energy_estimates(&beta, &sigma, &tg)?;
    out.write_json("energy.json", &EnergySummary { passed: report.passed(), report })?;
    Ok(())
}
