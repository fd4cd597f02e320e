use rayon::prelude::*;

use crate::cross_section::CrossSection;
use crate::error::{ensure, Result};
use crate::forward::{neumann_trace, solve_homogeneous, trace_l2_norm, TimeGrid};
use crate::modal::{random_field, KGrid, ModalField};

/// `‖v(T)‖_{H¹(Ω)} / ‖∂_ν v‖_{L²((0,T) × γ)}` for the free evolution of `v0`.
pub fn observability_ratio(v0: &ModalField, tg: &TimeGrid) -> Result<f64> {
    ensure!(v0.l2_norm() > 0.0, InvalidArgument, "observability ratio needs a nonzero initial state");
    let traj = solve_homogeneous(v0, tg)?;
    let num = traj.final_state().h1_norm();
    let den = trace_l2_norm(&neumann_trace(&traj));
    ensure!(den > 0.0 && den.is_finite(), Precondition, "boundary flux norm underflowed for a nonzero initial state");
    Ok(num / den)
}

/// Largest observability ratio over `sample_size` random initial states with
/// energies up to `energy_cap`; draw `i` uses seed `seed + i`.
pub fn empirical_observability_constant(
    cs: CrossSection,
    kgrid: KGrid,
    sample_size: usize,
    energy_cap: f64,
    tg: &TimeGrid,
    seed: u64,
) -> Result<f64> {
    let ratios: Vec<f64> = (0..sample_size as u64)
        .into_par_iter()
        .map(|i| observability_ratio(&random_field(cs, kgrid, energy_cap, seed.wrapping_add(i))?, tg))
        .collect::<Result<_>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}
