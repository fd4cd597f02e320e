//! Experiment configuration: one TOML file, every key optional, unknown keys
//! rejected. `--set section.key=value` overrides are applied to the parsed
//! table before it is deserialized.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wgheat_core::carleman::WeightParams;
use wgheat_core::inverse::{CutoffPolicy, InversionConfig};
use wgheat_core::{CrossSection, GammaSide, KGrid, SourceProfile, TimeGrid};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Not part of the canonical form: moving a run must not change its hash.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub cross_section: CrossSectionConfig,
    pub grids: GridsConfig,
    pub source: SourceConfig,
    pub forward: ForwardConfig,
    pub carleman: CarlemanConfig,
    pub inverse: InverseConfig,
    pub sweep: SweepConfig,
    pub observability: ObservabilityConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            cross_section: CrossSectionConfig::default(),
            grids: GridsConfig::default(),
            source: SourceConfig::default(),
            forward: ForwardConfig::default(),
            carleman: CarlemanConfig::default(),
            inverse: InverseConfig::default(),
            sweep: SweepConfig::default(),
            observability: ObservabilityConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossSectionConfig {
    pub a: f64,
    pub gamma_side: GammaSide,
    pub l_max: usize,
}

impl Default for CrossSectionConfig {
    fn default() -> Self {
        Self { a: std::f64::consts::PI, gamma_side: GammaSide::RightEnd, l_max: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridsConfig {
    pub k_max: f64,
    pub n_k: usize,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub n_t: usize,
}

impl Default for GridsConfig {
    fn default() -> Self {
        Self { k_max: 6.0, n_k: 64, t_final: 1.0, n_t: 400 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    ConstantOne,
    ExpDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub profile: ProfileKind,
    /// Decay rate for `exp_decay`.
    pub mu: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self { profile: ProfileKind::ConstantOne, mu: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardConfig {
    /// Modal field JSON for `β`; a seeded random field is drawn if absent.
    pub beta: Option<PathBuf>,
    /// Energy cap of the random `β` in units of `1/T`.
    pub energy_cap: f64,
    /// Noise level added to the written trace (0 writes the clean trace).
    pub noise_delta: f64,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self { beta: None, energy_cap: 30.0, noise_delta: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarlemanGrid {
    pub n_t: usize,
    pub n_x: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarlemanConfig {
    pub rho: f64,
    pub rho0: f64,
    pub c_shift: f64,
    /// Values of `λ` as multiples of `λ_0(ρ)`.
    pub lambda_list: Vec<f64>,
    pub allow_sub_threshold: bool,
    /// Longitudinal wavenumbers of the test family.
    pub k_nodes: Vec<f64>,
    pub grid: CarlemanGrid,
}

impl Default for CarlemanGrid {
    fn default() -> Self {
        Self { n_t: 64, n_x: 64 }
    }
}

impl Default for CarlemanConfig {
    fn default() -> Self {
        Self {
            rho: 4.0,
            rho0: 4.0,
            c_shift: 1.0,
            lambda_list: vec![1.0, 2.0, 4.0, 8.0],
            allow_sub_threshold: false,
            k_nodes: vec![0.5, 2.0],
            grid: CarlemanGrid::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffPolicyName {
    PaperRule,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverseConfig {
    pub l_fit: usize,
    /// Tikhonov weight; the noise level is used when absent.
    pub ridge: Option<f64>,
    pub cutoff_policy: CutoffPolicyName,
    /// Threshold for the `fixed` policy.
    pub lambda_cut: Option<f64>,
    pub m_budget: f64,
    pub noise_level: Option<f64>,
    /// Trace CSV for `invert`; the sidecar is the same path with a `.json` extension.
    pub trace: Option<PathBuf>,
    /// Optional true `β` to report the reconstruction error against.
    pub reference: Option<PathBuf>,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            l_fit: 16,
            ridge: None,
            cutoff_policy: CutoffPolicyName::PaperRule,
            lambda_cut: None,
            m_budget: 1.0,
            noise_level: None,
            trace: None,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub deltas: Vec<f64>,
    /// Defaults to the top-level seed.
    pub seed: Option<u64>,
    /// Modal field JSON for `β`; otherwise six energies spread over `[λ_1, 30/T]`.
    pub beta: Option<PathBuf>,
    pub n_active: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { deltas: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6], seed: None, beta: None, n_active: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservabilityConfig {
    pub sample_size: usize,
    /// Energy cap in units of `1/T`.
    pub energy_cap: f64,
}

impl Default for ObservabilityConfig {
    fn default() -> Self {
        Self { sample_size: 50, energy_cap: 30.0 }
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in path {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override key `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses `key=value`, reading the value as TOML and falling back to a bare string.
pub fn parse_override(raw: &str) -> Result<(String, toml::Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{raw}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Config(format!("override `{raw}` has an empty key")));
    }
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.trim().to_string()));
    Ok((key.to_string(), parsed))
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {}", p.display(), e.to_string().trim_end())))?
            }
            None => toml::Table::new(),
        };
        for raw in overrides {
            let (key, value) = parse_override(raw)?;
            set_dotted(&mut table, &key, value)?;
        }
        let cfg: ExperimentConfig =
            table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.cross_section().map_err(|e| CliError::Config(e.to_string()))?;
        self.kgrid().map_err(|e| CliError::Config(e.to_string()))?;
        self.time_grid().map_err(|e| CliError::Config(e.to_string()))?;
        if self.inverse.cutoff_policy == CutoffPolicyName::Fixed && self.inverse.lambda_cut.is_none() {
            return bad("inverse.cutoff_policy = \"fixed\" requires inverse.lambda_cut".into());
        }
        self.inversion_config()
            .validate(&self.cross_section().expect("validated above"))
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.carleman.grid.n_t < 3 || self.carleman.grid.n_x < 2 {
            return bad("carleman.grid needs n_t >= 3 and n_x >= 2".into());
        }
        if self.carleman.lambda_list.iter().any(|&f| !(f.is_finite() && f > 0.0)) {
            return bad("carleman.lambda_list entries must be positive".into());
        }
        if self.sweep.deltas.iter().any(|&d| !(d.is_finite() && d >= 0.0)) {
            return bad("sweep.deltas entries must be nonnegative".into());
        }
        if !(self.source.mu.is_finite()) {
            return bad("source.mu must be finite".into());
        }
        Ok(())
    }

    pub fn cross_section(&self) -> wgheat_core::Result<CrossSection> {
        CrossSection::new(self.cross_section.a, self.cross_section.gamma_side, self.cross_section.l_max)
    }

    pub fn kgrid(&self) -> wgheat_core::Result<KGrid> {
        KGrid::new(self.grids.k_max, self.grids.n_k)
    }

    pub fn time_grid(&self) -> wgheat_core::Result<TimeGrid> {
        TimeGrid::new(self.grids.t_final, self.grids.n_t)
    }

    pub fn source_profile(&self, tg: TimeGrid) -> wgheat_core::Result<SourceProfile> {
        match self.source.profile {
            ProfileKind::ConstantOne => Ok(SourceProfile::constant_one(tg)),
            ProfileKind::ExpDecay => SourceProfile::exp_decay(tg, self.source.mu),
        }
    }

    pub fn inversion_config(&self) -> InversionConfig {
        let cutoff_policy = match (self.inverse.cutoff_policy, self.inverse.lambda_cut) {
            (CutoffPolicyName::Fixed, Some(lambda_cut)) => CutoffPolicy::Fixed { lambda_cut },
            _ => CutoffPolicy::PaperRule,
        };
        InversionConfig {
            l_fit: self.inverse.l_fit,
            ridge: self.inverse.ridge,
            cutoff_policy,
            m_budget: self.inverse.m_budget,
            noise_level: self.inverse.noise_level,
        }
    }

    pub fn weight_params(&self) -> wgheat_core::Result<WeightParams> {
        WeightParams::at_threshold(
            &self.cross_section()?,
            self.carleman.c_shift,
            self.carleman.rho,
            self.grids.t_final,
        )?
        .with_rho0(self.carleman.rho0)
    }

    pub fn sweep_seed(&self) -> u64 {
        self.sweep.seed.unwrap_or(self.seed)
    }

    /// Canonical JSON (sorted keys, shortest round-trip floats) used for hashing.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = ExperimentConfig::load(None, &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn overrides_apply_and_parse_types() {
        let cfg = ExperimentConfig::load(
            None,
            &["carleman.rho=8".into(), "sweep.deltas=[1e-3, 1e-4]".into(), "cross_section.gamma_side=left_end".into()],
        )
        .unwrap();
        assert_eq!(cfg.carleman.rho, 8.0);
        assert_eq!(cfg.sweep.deltas, vec![1e-3, 1e-4]);
        assert_eq!(cfg.cross_section.gamma_side, GammaSide::LeftEnd);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(ExperimentConfig::load(None, &["grids.nk=3".into()]), Err(CliError::Config(_))));
        assert!(matches!(ExperimentConfig::load(None, &["bogus=1".into()]), Err(CliError::Config(_))));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(matches!(ExperimentConfig::load(None, &["grids.n_k=3".into()]), Err(CliError::Config(_))));
        assert!(matches!(
            ExperimentConfig::load(None, &["inverse.cutoff_policy=fixed".into()]),
            Err(CliError::Config(_))
        ));
        assert!(matches!(ExperimentConfig::load(None, &["inverse.l_fit=40".into()]), Err(CliError::Config(_))));
    }

    #[test]
    fn canonical_json_is_stable() {
        let a = ExperimentConfig::default().canonical_json();
        let b = ExperimentConfig::load(None, &["seed=0".into()]).unwrap().canonical_json();
        assert_eq!(a, b);
    }
}
