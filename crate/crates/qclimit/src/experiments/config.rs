//! Experiment configuration, accepted as TOML or JSON.

use crate::error::{Error, Result};
use crate::field_model::DispersionRule;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode_set: ModeSetSpec,
    pub form_factor: FormFactorSpec,
    pub state_family: StateFamilySpec,
    pub schedule: ScheduleSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    pub output: OutputSpec,
    #[serde(default)]
    pub uniform_field: Option<UniformFieldSpec>,
    #[serde(default)]
    pub ground_state: Option<GroundStateSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModeSetSpec {
    pub d: usize,
    pub radial_nodes: Vec<f64>,
    pub angular_resolution: usize,
    #[serde(default)]
    pub dispersion: DispersionSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum DispersionSpec {
    /// "massless"
    Named(String),
    /// { mass = 0.5 }
    Massive { mass: f64 },
    /// { table = "path/to.csv" }
    Table { table: String },
}

impl Default for DispersionSpec {
    fn default() -> Self {
        DispersionSpec::Named("massless".into())
    }
}

impl DispersionSpec {
    pub fn to_rule(&self) -> Result<DispersionRule> {
        match self {
            DispersionSpec::Named(name) if name == "massless" => Ok(DispersionRule::Massless),
            DispersionSpec::Named(other) => Err(Error::Config(format!(
                "unknown dispersion '{other}' (expected \"massless\", {{ mass = .. }} or {{ table = .. }})"
            ))),
            DispersionSpec::Massive { mass } => Ok(DispersionRule::Massive { mass: *mass }),
            DispersionSpec::Table { table } => DispersionRule::table_from_csv(Path::new(table)),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FormFactorSpec {
    /// "gaussian-charge" | "constant"
    pub preset: String,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Plane-wave phase center; defaults to the box center.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateFamilySpec {
    /// Displaced vacuum at fixed z; limit measure delta_z.
    Coherent { z_re: Vec<f64>, z_im: Vec<f64> },
    /// Fixed occupation schedule n(eps) = round(occupation_times_eps/eps)
    /// in one mode; limit measure the phase circle of radius
    /// sqrt(occupation_times_eps).
    Number {
        mode: usize,
        occupation_times_eps: f64,
        #[serde(default = "default_circle_points")]
        circle_points: usize,
    },
    /// Superposition of displaced vacua; limit measure the |weight|^2
    /// mixture of the point masses.
    Superposition { branches: Vec<BranchSpec> },
}

fn default_circle_points() -> usize {
    32
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub weight_re: f64,
    #[serde(default)]
    pub weight_im: f64,
    pub z_re: Vec<f64>,
    pub z_im: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    /// Strictly decreasing values in (0, 1).
    pub epsilons: Vec<f64>,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    #[serde(default = "default_max_fock_dim")]
    pub max_fock_dim: usize,
}

fn default_tail_tol() -> f64 {
    1e-10
}

fn default_max_fock_dim() -> usize {
    200_000
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub box_len: f64,
    /// L / h; interior points per axis are divisions - 1.
    pub divisions: usize,
    #[serde(default = "one_usize")]
    pub spin: usize,
    #[serde(default = "one_usize")]
    pub particles: usize,
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    Zero,
    Harmonic {
        strength: f64,
        center: Vec<f64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_eig_count")]
    pub eig_count: usize,
    #[serde(default = "default_eig_tol")]
    pub eig_tol: f64,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_probes")]
    pub resolvent_probes: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            eig_count: default_eig_count(),
            eig_tol: default_eig_tol(),
            cg_tol: default_cg_tol(),
            resolvent_probes: default_probes(),
            seed: default_seed(),
        }
    }
}

fn default_eig_count() -> usize {
    3
}
fn default_eig_tol() -> f64 {
    // Near-degenerate levels (symmetric boxes under weak fields) stall
    // tighter certificates at the cluster splitting.
    1e-8
}
fn default_cg_tol() -> f64 {
    1e-11
}
fn default_probes() -> usize {
    2
}
fn default_seed() -> u64 {
    42
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: String,
}

/// Knobs of the uniform-field synthesis driver.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UniformFieldSpec {
    /// Mollifier widths, decreasing; the synthesized field support in
    /// momentum space is |k| <= width.
    pub widths: Vec<f64>,
    #[serde(default = "default_radial_points")]
    pub radial_points: usize,
    #[serde(default = "default_uf_angular")]
    pub angular_resolution: usize,
    /// Eigenvalues to compare between synthesized and exact operators.
    #[serde(default = "default_eig_count")]
    pub compare_eigs: usize,
    /// Extra eigenvalues computed on the exact operator to reach the
    /// second bulk level.
    #[serde(default = "default_level_eigs")]
    pub level_eigs: usize,
}

fn default_radial_points() -> usize {
    24
}
fn default_uf_angular() -> usize {
    32
}
fn default_level_eigs() -> usize {
    28
}

/// Knobs of the ground-state-energy driver.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GroundStateSpec {
    /// Coarse scan points per axis over the complex box.
    #[serde(default = "default_scan_points")]
    pub scan_points: usize,
    /// Half-width Z of the complex scan box [-Z, Z]^2.
    #[serde(default = "default_scan_halfwidth")]
    pub scan_halfwidth: f64,
    #[serde(default = "default_refine_iters")]
    pub refine_iters: usize,
    /// Random 2-point mixtures checked against the best single point.
    #[serde(default = "default_mixture_samples")]
    pub mixture_samples: usize,
}

impl Default for GroundStateSpec {
    fn default() -> Self {
        GroundStateSpec {
            scan_points: default_scan_points(),
            scan_halfwidth: default_scan_halfwidth(),
            refine_iters: default_refine_iters(),
            mixture_samples: default_mixture_samples(),
        }
    }
}

fn default_scan_points() -> usize {
    9
}
fn default_scan_halfwidth() -> f64 {
    0.75
}
fn default_refine_iters() -> usize {
    48
}
fn default_mixture_samples() -> usize {
    20
}

impl ExperimentConfig {
    /// Parse TOML or JSON, deciding by content (JSON must start with '{').
    pub fn from_str_auto(text: &str) -> Result<ExperimentConfig> {
        let trimmed = text.trim_start();
        let cfg: ExperimentConfig = if trimmed.starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(format!("json: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(format!("toml: {e}")))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_auto(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode_set.d != 2 && self.mode_set.d != 3 {
            return Err(Error::Config("mode_set.d must be 2 or 3".into()));
        }
        if self.mode_set.radial_nodes.iter().any(|&r| r <= 0.0) {
            return Err(Error::Config("radial nodes must be strictly positive".into()));
        }
        if self.mode_set.angular_resolution == 0 {
            return Err(Error::Config("angular_resolution must be >= 1".into()));
        }
        if self.schedule.epsilons.is_empty() {
            return Err(Error::Config("schedule needs at least one eps".into()));
        }
        for &e in &self.schedule.epsilons {
            if !(0.0 < e && e < 1.0) {
                return Err(Error::Config(format!("eps = {e} outside (0, 1)")));
            }
        }
        if !self
            .schedule
            .epsilons
            .windows(2)
            .all(|w| w[0] > w[1])
        {
            return Err(Error::Config("eps schedule must be strictly decreasing".into()));
        }
        if self.grid.divisions < 2 {
            return Err(Error::Config("grid.divisions must be >= 2".into()));
        }
        if self.grid.spin == 0 || self.grid.particles == 0 {
            return Err(Error::Config("grid.spin and grid.particles must be >= 1".into()));
        }
        match self.form_factor.preset.as_str() {
            "gaussian-charge" | "constant" => {}
            other => {
                return Err(Error::Config(format!("unknown form factor preset '{other}'")));
            }
        }
        if let Some(c) = &self.form_factor.center {
            if c.len() != self.mode_set.d {
                return Err(Error::Config("form_factor.center has wrong dimension".into()));
            }
        }
        Ok(())
    }

    /// Hex digest of the canonical JSON encoding; recorded in meta.json.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
