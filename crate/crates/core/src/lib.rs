//! Numerical toolkit for the heat equation in a straight waveguide
//! `Ω = ω × ℝ` with an interval cross-section `ω = (0, a)`.
//!
//! Fields are represented by their coefficients in the transverse Dirichlet
//! eigenbasis and a Fourier grid in the longitudinal variable. On top of that
//! representation the crate provides exact modal forward solves for sources
//! of the form `σ(t) β(x)`, partial Neumann traces on one end of the
//! cross-section, Carleman weight diagnostics, and reconstruction of `β`
//! from the trace with a spectral energy cutoff.

// `ensure!(!(x > 0.0))`-style guards are written so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;

pub mod carleman;
pub mod cross_section;
pub mod forward;
pub mod inverse;
pub mod modal;
pub mod quadrature;

pub use error::{Error, Result};

pub use carleman::{carleman_sides, constant_scan, verify_lemma, LemmaReport, TestFunction, WeightParams};
pub use cross_section::{CrossSection, GammaSide};
pub use forward::{
    add_noise, check_energy_estimates, neumann_trace, solve_forward, solve_homogeneous, trace_h1_norm, EnergyReport,
    ModalTrajectory, NeumannTrace, Provenance, SourceProfile, TimeGrid, TraceSidecar,
};
pub use inverse::{
    choose_cutoff, empirical_observability_constant, energy_split_check, observability_ratio, phi_modulus,
    reconstruct_from_final_state, reconstruct_from_trace, stability_sweep, CutoffPolicy, CutoffRegime, EnergyCutoff,
    InversionConfig, SweepReport,
};
pub use modal::{random_field, KGrid, ModalField};

pub use num_complex::Complex64;
