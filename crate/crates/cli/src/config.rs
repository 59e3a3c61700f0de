//! JSON run configuration: parsing, semantic validation with field paths,
//! and resolution into solver-ready objects.

use serde::{Deserialize, Serialize};

use kinlab::kinetic::{DepositRule, SpatialFactor, VelocityGrid};
use kinlab::model::{catalog_with_modes, InitialData};
use kinlab::solver::{fit_dt, stable_dt, RegularizationParams, SchemeTag};
use kinlab::{ProblemSpec, TorusGrid};

/// Validation failure with the config field it points at.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Problem selection: a catalog key or an inline coefficient spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemRef {
    Key(String),
    Inline(Box<ProblemSpec>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    pub scheme: SchemeTag,
    pub eta: f64,
    pub flux_radius: Option<f64>,
    pub tau: f64,
    /// For the cascade/energy/regularity sweeps.
    pub tau_list: Option<Vec<f64>>,
    /// Explicit step; when absent the largest stable step that divides
    /// t_end is used.
    pub dt: Option<f64>,
    pub t_end: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeTag::TauScheme,
            eta: 0.0,
            flux_radius: None,
            tau: 0.0,
            tau_list: None,
            dt: None,
            t_end: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Explicit snapshot times (multiples of dt); overrides `count`.
    pub times: Option<Vec<f64>>,
    /// Number of roughly uniform snapshot times.
    pub count: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            times: None,
            count: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Mode truncation K of the cylindrical series.
    pub modes: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { modes: 16, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub members: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { members: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityGridConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiKind {
    Identity,
    Square,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Lp exponent for the energy report.
    pub p: f64,
    /// Seminorm order of the relation fits.
    pub lambda: f64,
    /// Regularity order; defaults to half the regularity exponent of the
    /// problem constants.
    pub s: Option<f64>,
    /// Velocity radius for the measure tail mass.
    pub tail_radius: Option<f64>,
    /// Second initial profile for contraction pairs.
    pub initial_b: Option<InitialData>,
    pub test_time_power: u32,
    pub test_spatial: Option<Vec<SpatialFactor>>,
    pub test_xi: Option<[f64; 2]>,
    pub phi: PhiKind,
    pub deposit: DepositRule,
    pub include_ito_term: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            lambda: 0.5,
            s: None,
            tail_radius: None,
            initial_b: None,
            test_time_power: 2,
            test_spatial: None,
            test_xi: None,
            phi: PhiKind::Square,
            deposit: DepositRule::Nearest,
            include_ito_term: true,
        }
    }
}

fn default_state_range() -> f64 {
    8.0
}

/// One experiment's full configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemRef,
    pub grid: GridConfig,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    /// Expected state range for the stability bound and default grids.
    #[serde(default = "default_state_range")]
    pub state_range: f64,
    #[serde(default)]
    pub velocity_grid: Option<VelocityGridConfig>,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub out_dir: Option<String>,
}

/// Config resolved against the catalog and the stability bound.
#[derive(Debug)]
pub struct Resolved {
    pub spec: ProblemSpec,
    pub grid: TorusGrid,
    pub params: RegularizationParams,
    pub tau_list: Vec<f64>,
    pub vgrid: VelocityGrid,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text)
            .map_err(|e| ConfigError::new("<document>", format!("schema violation: {e}")))
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let spec = self.problem_spec()?;
        let grid = TorusGrid::new(self.grid.dim, self.grid.points)
            .map_err(|e| ConfigError::new("grid", e.to_string()))?;

        if !(self.state_range > 0.0) {
            return Err(ConfigError::new("state_range", "must be positive"));
        }
        if !(self.params.t_end > 0.0) {
            return Err(ConfigError::new("params.t_end", "must be positive"));
        }

        // Stability bound of the explicit flux and diffusion terms.
        let dt_max = stable_dt(&spec, grid, self.state_range);
        let dt = match self.params.dt {
            Some(dt) => {
                if !(dt > 0.0) {
                    return Err(ConfigError::new("params.dt", "must be positive"));
                }
                if dt > dt_max * (1.0 + 1e-12) {
                    return Err(ConfigError::new(
                        "params.dt",
                        format!("violates the stability bound {dt_max:.6e}"),
                    ));
                }
                dt
            }
            None => {
                let cap = if dt_max.is_finite() {
                    dt_max
                } else {
                    self.params.t_end / 64.0
                };
                fit_dt(self.params.t_end, cap.min(self.params.t_end))
            }
        };

        let params = RegularizationParams {
            scheme: self.params.scheme,
            eta: self.params.eta,
            flux_radius: self.params.flux_radius,
            tau: self.params.tau,
            dt,
            t_end: self.params.t_end,
        };
        params
            .validate()
            .map_err(|e| ConfigError::new("params", e.to_string()))?;
        params
            .n_steps()
            .map_err(|e| ConfigError::new("params.dt", e.to_string()))?;

        let tau_list = match &self.params.tau_list {
            Some(list) if !list.is_empty() => {
                if !list.iter().all(|t| *t >= 0.0) {
                    return Err(ConfigError::new("params.tau_list", "entries must be >= 0"));
                }
                list.clone()
            }
            Some(_) => return Err(ConfigError::new("params.tau_list", "must not be empty")),
            None => vec![self.params.tau],
        };

        let vgrid = match &self.velocity_grid {
            Some(v) => VelocityGrid::new(v.min, v.max, v.points)
                .map_err(|e| ConfigError::new("velocity_grid", e.to_string()))?,
            None => VelocityGrid::covering(-self.state_range, self.state_range, 128)
                .map_err(|e| ConfigError::new("velocity_grid", e.to_string()))?,
        };
        if !vgrid.covers_with_margin(-self.state_range, self.state_range) {
            return Err(ConfigError::new(
                "velocity_grid",
                format!(
                    "must cover the state range [-{0}, {0}] with a 2-spacing margin",
                    self.state_range
                ),
            ));
        }

        // s below the regularity exponent of the problem constants.
        if let Some(s) = self.experiment.s {
            let varsigma = spec
                .regularity_exponent()
                .map_err(|e| ConfigError::new("problem.constants", e.to_string()))?;
            if s >= varsigma {
                return Err(ConfigError::new(
                    "experiment.s",
                    format!("must lie below the regularity exponent {varsigma}"),
                ));
            }
        }
        if self.ensemble.members == 0 {
            return Err(ConfigError::new("ensemble.members", "must be at least 1"));
        }

        Ok(Resolved {
            spec,
            grid,
            params,
            tau_list,
            vgrid,
            seed: self.noise.seed,
        })
    }

    fn problem_spec(&self) -> Result<ProblemSpec, ConfigError> {
        match &self.problem {
            ProblemRef::Key(key) => catalog_with_modes(key, self.noise.modes)
                .ok_or_else(|| ConfigError::new("problem", format!("unknown catalog key {key:?}"))),
            ProblemRef::Inline(spec) => Ok(spec.as_ref().clone()),
        }
    }

    /// Snapshot times at step boundaries per the output section.
    pub fn output_times(&self, params: &RegularizationParams) -> Result<Vec<f64>, ConfigError> {
        match &self.output.times {
            Some(times) => Ok(times.clone()),
            None => kinlab::solver::uniform_output_times(params, self.output.count)
                .map_err(|e| ConfigError::new("output.count", e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_document_with_every_section_parses_and_resolves() {
        let text = r#"{
            "problem": "burgers-degenerate-multiplicative",
            "grid": { "dim": 1, "points": 128 },
            "params": {
                "scheme": "tau-scheme",
                "eta": 0.0,
                "flux_radius": null,
                "tau": 1e-3,
                "tau_list": [1e-1, 1e-2, 1e-3],
                "dt": null,
                "t_end": 0.1
            },
            "output": { "times": null, "count": 16 },
            "noise": { "modes": 16, "seed": 42 },
            "ensemble": { "members": 64 },
            "state_range": 2.0,
            "velocity_grid": { "min": -2.5, "max": 2.5, "points": 128 },
            "experiment": {
                "p": 2.0,
                "lambda": 0.5,
                "s": null,
                "tail_radius": null,
                "initial_b": { "kind": "sine", "mean": 0.3, "amplitude": 0.3, "mode": 1 },
                "test_time_power": 2,
                "test_spatial": [ { "cos": { "mode": 1 } } ],
                "test_xi": [-1.0, 1.0],
                "phi": "square",
                "deposit": "nearest",
                "include_ito_term": true
            },
            "out_dir": "results"
        }"#;
        let config = RunConfig::from_json(text).unwrap();
        let resolved = config.resolve().unwrap();
        assert_eq!(resolved.tau_list, vec![1e-1, 1e-2, 1e-3]);
        assert_eq!(resolved.spec.noise.modes(), 16);
        // Round trip through serde preserves equality.
        let back = RunConfig::from_json(&serde_json::to_string(&config).unwrap()).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn inline_problem_parses() {
        let text = r#"{
            "problem": {
                "flux": { "kind": "burgers", "direction": [1.0, 0.0] },
                "diffusion": { "kind": "porous-medium", "cap": 0.5 },
                "noise": { "kind": "multiplicative", "amplitudes": [0.5, 0.125], "scale": 0.5 },
                "initial": { "kind": "riemann-step", "left": 1.0, "right": 0.0, "interface": 0.5 },
                "constants": { "gamma": 1.0, "c_sigma": 1.0, "alpha": 1.0,
                               "c_h": 1.0, "c_g": 1.0, "p_b": 2.0, "c_b": 1.0 }
            },
            "grid": { "dim": 1, "points": 64 },
            "params": { "t_end": 0.01 },
            "noise": { "modes": 2, "seed": 0 },
            "state_range": 2.0
        }"#;
        let config = RunConfig::from_json(text).unwrap();
        let resolved = config.resolve().unwrap();
        assert_eq!(resolved.spec.noise.modes(), 2);
        assert!(resolved.params.dt <= stable_dt(&resolved.spec, resolved.grid, 2.0));
    }

    #[test]
    fn stability_violation_names_the_dt_field() {
        let text = r#"{
            "problem": "burgers-degenerate",
            "grid": { "dim": 1, "points": 64 },
            "params": { "t_end": 0.01, "dt": 0.01 },
            "noise": { "modes": 0, "seed": 0 },
            "state_range": 2.0
        }"#;
        let err = RunConfig::from_json(text).unwrap().resolve().unwrap_err();
        assert_eq!(err.field, "params.dt");
    }

    #[test]
    fn vgrid_must_cover_the_state_range() {
        let text = r#"{
            "problem": "heat",
            "grid": { "dim": 1, "points": 64 },
            "params": { "t_end": 0.01 },
            "noise": { "modes": 0, "seed": 0 },
            "state_range": 4.0,
            "velocity_grid": { "min": -1.0, "max": 1.0, "points": 32 }
        }"#;
        let err = RunConfig::from_json(text).unwrap().resolve().unwrap_err();
        assert_eq!(err.field, "velocity_grid");
    }
}
