//! Pipeline configuration: one TOML file with a section per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage derives its own streams from it.
    pub seed: u64,
    pub output: PathBuf,
    pub data: DataConfig,
    pub marginals: MarginalsConfig,
    pub episodes: EpisodesConfig,
    pub advection: AdvectionConfig,
    pub variogram: VariogramConfig,
    pub simulation: SimulationConfig,
    pub diagnostics: DiagnosticsConfig,
    pub recovery: RecoveryConfig,
    pub synthetic: SyntheticConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output: PathBuf::from("out"),
            data: DataConfig::default(),
            marginals: MarginalsConfig::default(),
            episodes: EpisodesConfig::default(),
            advection: AdvectionConfig::default(),
            variogram: VariogramConfig::default(),
            simulation: SimulationConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            recovery: RecoveryConfig::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    /// `sites` plus long-format gauge rainfall.
    Gauge,
    /// Long-format gridded rainfall.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DataKind,
    pub sites: Option<PathBuf>,
    pub rain: Option<PathBuf>,
    pub step_seconds: f64,
    /// Coarser gridded product used for advection, optional.
    pub radar: Option<PathBuf>,
    pub radar_step_seconds: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            kind: DataKind::Gauge,
            sites: None,
            rain: None,
            step_seconds: 300.0,
            radar: None,
            radar_step_seconds: 3600.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolConfig {
    Pooled,
    Averaged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginalsConfig {
    pub precision_mm: f64,
    /// Candidate censoring multipliers; more than one triggers selection.
    pub censoring_multipliers: Vec<u32>,
    pub pool: PoolConfig,
}

impl Default for MarginalsConfig {
    fn default() -> Self {
        Self {
            precision_mm: 0.2153,
            censoring_multipliers: vec![1, 2, 3],
            pool: PoolConfig::Pooled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodesConfig {
    pub q: f64,
    pub delta: usize,
    pub d_min_m: f64,
    pub max_episodes: Option<usize>,
    /// Quantile over positive values only, or over all values.
    pub positive_only: bool,
    /// Equal-count distance bins for irregular sites.
    pub n_distance_bins: usize,
    /// Grids for the episode-count trade-off table.
    pub tradeoff_delta: Vec<usize>,
    pub tradeoff_d_min_m: Vec<f64>,
    /// Episode configuration on the radar product.
    pub radar_q: f64,
    pub radar_delta: usize,
    pub radar_d_min_m: f64,
}

impl Default for EpisodesConfig {
    fn default() -> Self {
        Self {
            q: 0.95,
            delta: 12,
            d_min_m: 1200.0,
            max_episodes: None,
            positive_only: true,
            n_distance_bins: 10,
            tradeoff_delta: vec![6, 12, 24],
            tradeoff_d_min_m: vec![0.0, 600.0, 1200.0],
            radar_q: 0.95,
            radar_delta: 24,
            radar_d_min_m: 5000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvectionConfig {
    pub pad_hours: f64,
    /// Episodes with a larger empirical speed are discarded.
    pub max_empirical_speed_kmh: f64,
    /// Cap on the transformed speed during fitting.
    pub speed_cap_kmh: f64,
}

impl Default for AdvectionConfig {
    fn default() -> Self {
        Self {
            pad_hours: 2.0,
            max_empirical_speed_kmh: 5.6,
            speed_cap_kmh: 150.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodConfig {
    NelderMead,
    Bfgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariogramConfig {
    pub method: MethodConfig,
    pub max_evals: usize,
    /// Holds (η₁, η₂) at these canonical values instead of estimating them.
    pub fixed_eta: Option<[f64; 2]>,
    pub jackknife: bool,
    /// Fails with a non-convergence exit code when the optimizer stops early.
    pub require_convergence: bool,
}

impl Default for VariogramConfig {
    fn default() -> Self {
        Self {
            method: MethodConfig::NelderMead,
            max_evals: 3000,
            fixed_eta: None,
            jackknife: true,
            require_convergence: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub nx: usize,
    pub ny: usize,
    pub pixel_m: f64,
    pub x0_m: f64,
    pub y0_m: f64,
    /// Defaults to the episode duration.
    pub n_steps: Option<usize>,
    pub n_episodes: usize,
    pub n_replicates: usize,
    /// Fixed advection in km/h; otherwise fitted velocities are resampled.
    pub velocity_kmh: Option<[f64; 2]>,
    /// Fixed conditioning pixel (row-major index); otherwise uniform.
    pub conditioning_pixel: Option<usize>,
    pub discretization_correction: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            nx: 20,
            ny: 20,
            pixel_m: 100.0,
            x0_m: 0.0,
            y0_m: 0.0,
            n_steps: None,
            n_episodes: 10,
            n_replicates: 1,
            velocity_kmh: None,
            conditioning_pixel: None,
            discretization_correction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub n_bootstrap: usize,
    pub qq_points: usize,
    /// Site for the trivariate conditional table (id or pixel id).
    pub trivariate_site: Option<String>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            n_bootstrap: 500,
            qq_points: 100,
            trivariate_site: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryKind {
    /// Θ̃ including (η₁, η₂).
    Joint,
    /// Θ with η held at the truth.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    pub kind: RecoveryKind,
    /// β₁, β₂, α₁, α₂, η₁, η₂.
    pub truth: [f64; 6],
    pub n_runs: usize,
    pub n_episodes: usize,
    pub nx: usize,
    pub ny: usize,
    pub n_steps: usize,
    pub speed_range: [f64; 2],
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            kind: RecoveryKind::Joint,
            truth: [0.3, 0.6, 0.3, 0.8, 1.6, 5.2],
            n_runs: 10,
            n_episodes: 200,
            nx: 7,
            ny: 7,
            n_steps: 24,
            speed_range: [0.5, 1.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_sites: usize,
    pub extent_m: f64,
    pub n_days: usize,
    /// Start of the record, `YYYY-MM-DDTHH:MM:SS`.
    pub start: String,
    pub storms_per_day: f64,
    pub storm_steps: usize,
    /// Storm speeds in km/h, directions uniform.
    pub speed_kmh: [f64; 2],
    /// β₁, β₂, α₁, α₂ in m and steps.
    pub theta: [f64; 4],
    pub p0: f64,
    /// ξ, σ, κ.
    pub egpd: [f64; 3],
    /// Scale u in Z = uY for the storms.
    pub storm_scale: f64,
    pub radar_nx: usize,
    pub radar_ny: usize,
    pub radar_pixel_m: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_sites: 12,
            extent_m: 2000.0,
            n_days: 120,
            start: "2020-06-01T00:00:00".into(),
            storms_per_day: 1.0,
            storm_steps: 24,
            speed_kmh: [0.5, 5.0],
            theta: [0.01, 0.3, 0.8, 0.7],
            p0: 0.8,
            egpd: [0.262, 0.591, 0.270],
            storm_scale: 20.0,
            radar_nx: 6,
            radar_ny: 6,
            radar_pixel_m: 1000.0,
        }
    }
}

impl PipelineConfig {
    /// Parses TOML, applying `section.key=value` overrides first. Relative
    /// data paths are resolved against `base`.
    pub fn parse(text: &str, overrides: &[String], base: &Path) -> Result<Self, CliError> {
        let mut value: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: PipelineConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output);
        for p in [&mut self.data.sites, &mut self.data.rain, &mut self.data.radar]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if !(self.data.step_seconds > 0.0) || !(self.data.radar_step_seconds > 0.0) {
            return bad("data step lengths must be positive");
        }
        if !(self.marginals.precision_mm >= 0.0) || self.marginals.censoring_multipliers.is_empty() {
            return bad("marginals: precision_mm must be >= 0 and censoring_multipliers non-empty");
        }
        let e = &self.episodes;
        if !(e.q > 0.0 && e.q < 1.0) || !(e.radar_q > 0.0 && e.radar_q < 1.0) {
            return bad("episodes: quantiles must lie in (0, 1)");
        }
        if e.delta == 0 || e.radar_delta == 0 || !(e.d_min_m >= 0.0) || !(e.radar_d_min_m >= 0.0) {
            return bad("episodes: delta must be >= 1 and d_min_m >= 0");
        }
        if e.n_distance_bins == 0 {
            return bad("episodes: n_distance_bins must be >= 1");
        }
        let a = &self.advection;
        if !(a.pad_hours >= 0.0) || !(a.max_empirical_speed_kmh > 0.0) || !(a.speed_cap_kmh > 0.0) {
            return bad("advection: pad must be >= 0 and speed bounds positive");
        }
        let s = &self.simulation;
        if s.nx == 0 || s.ny == 0 || !(s.pixel_m > 0.0) || s.n_steps == Some(0) {
            return bad("simulation: grid and step counts must be positive");
        }
        let r = &self.recovery;
        if r.truth.iter().any(|v| !(*v > 0.0)) || r.nx * r.ny == 0 || r.n_steps == 0 {
            return bad("recovery: truth must be positive and the lattice non-empty");
        }
        if !(r.speed_range[0] > 0.0 && r.speed_range[0] <= r.speed_range[1]) {
            return bad("recovery: speed_range must be positive and increasing");
        }
        Ok(())
    }

    pub fn require<'a>(&self, p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
        let p = p
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("`{key}` is not set in the configuration")))?;
        if !p.exists() {
            return Err(CliError::Config(format!("{key}: {} does not exist", p.display())));
        }
        Ok(p)
    }
}

/// `section.key=value`, where the value is parsed as a TOML value and falls
/// back to a string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {spec:?} is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        cur = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override {key}: {part} is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.simulation.velocity_kmh = Some([-1.0, 2.0]);
        cfg.variogram.fixed_eta = Some([0.5, 1.6]);
        cfg.data.sites = Some("/data/sites.csv".into());
        cfg.output = "/runs/out".into();
        let text = cfg.to_toml();
        let back = PipelineConfig::parse(&text, &[], Path::new("/")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn defaults_and_overrides() {
        let cfg = PipelineConfig::parse("", &["episodes.q=0.9".into(), "seed=7".into()], Path::new("/tmp")).unwrap();
        assert_eq!(cfg.episodes.q, 0.9);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.episodes.delta, 12);
        assert_eq!(cfg.episodes.d_min_m, 1200.0);
        assert_eq!(cfg.advection.speed_cap_kmh, 150.0);
        assert_eq!(cfg.output, Path::new("/tmp/out"));
    }

    #[test]
    fn rejects_bad_values() {
        for o in [
            "episodes.q=1.5",
            "episodes.delta=0",
            "nonsense.key=1",
            "data.step_seconds=-1",
        ] {
            assert!(matches!(
                PipelineConfig::parse("", &[o.into()], Path::new("/")),
                Err(CliError::Config(_))
            ));
        }
        assert!(PipelineConfig::parse("seed = [", &[], Path::new("/")).is_err());
    }
}
