//! Experiment configuration: a TOML file with a `kind`, shared sections
//! for the covering, operator, and grids, and one kind-specific section.
//! The schema is documented in `configs/README.md` at the repository root.

use etalab_core::bvp::{EndCondition, GridParams};
use etalab_core::discretize::{OperatorSpec, TrigPolynomial};
use etalab_core::{CMat, Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

fn default_circumference() -> f64 {
    std::f64::consts::TAU
}

fn default_rank() -> usize {
    1
}

fn default_one() -> f64 {
    1.0
}

fn default_t_points() -> usize {
    24
}

fn default_eps() -> f64 {
    0.05
}

fn default_check_tol() -> f64 {
    1e-4
}

fn default_rank_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct CoveringSection {
    pub sheets: usize,
    #[serde(default)]
    pub base_points: Option<usize>,
    #[serde(default = "default_circumference")]
    pub circumference: f64,
}

impl Default for CoveringSection {
    fn default() -> Self {
        Self {
            sheets: 1,
            base_points: None,
            circumference: default_circumference(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct PotentialTerm {
    pub freq: i64,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    #[serde(default)]
    pub row: usize,
    #[serde(default)]
    pub col: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct OperatorSection {
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default)]
    pub holonomy: f64,
    pub fourier_cutoff: usize,
    #[serde(default)]
    pub potential: Vec<PotentialTerm>,
}

impl OperatorSection {
    pub fn build(&self) -> Result<OperatorSpec> {
        let mut terms: Vec<(i64, CMat)> = Vec::new();
        for t in &self.potential {
            if t.row >= self.rank || t.col >= self.rank {
                return Err(Error::Domain(format!(
                    "potential entry ({}, {}) outside rank {}",
                    t.row, t.col, self.rank
                )));
            }
            let mut m = CMat::zeros(self.rank, self.rank);
            m[(t.row, t.col)] = Complex64::new(t.re, t.im);
            terms.push((t.freq, m));
        }
        OperatorSpec::new(
            self.rank,
            self.holonomy,
            self.fourier_cutoff,
            TrigPolynomial::new(self.rank, terms)?,
        )
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct GridSection {
    #[serde(default = "default_t_points")]
    pub t_points: usize,
    #[serde(default = "default_one")]
    pub cylinder_length: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            t_points: default_t_points(),
            cylinder_length: default_one(),
        }
    }
}

impl GridSection {
    pub fn params(&self) -> GridParams {
        GridParams::new(self.t_points)
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct ToleranceSection {
    #[serde(default = "default_check_tol")]
    pub check: f64,
    #[serde(default = "default_rank_tol")]
    pub rank: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self {
            check: default_check_tol(),
            rank: default_rank_tol(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct EtaSection {
    #[serde(default)]
    pub expected: Option<f64>,
    #[serde(default = "default_eta_tol")]
    pub tolerance: f64,
}

fn default_eta_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct FlowSection {
    pub a_start: f64,
    pub a_end: f64,
    pub samples: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub expected: Option<i64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct IndexSection {
    pub start: String,
    pub end: String,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub lifted: bool,
    #[serde(default)]
    pub ramp: f64,
    #[serde(default)]
    pub expected: Option<i64>,
    /// Cross-check against the separation-of-variables oracle (on by
    /// default; disable for conditions the oracle cannot count).
    #[serde(default = "default_true")]
    pub oracle: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct HomotopySection {
    pub a_start: f64,
    pub a_end: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
pub struct DefectSection {
    #[serde(default)]
    pub expected_relative_eta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct LefschetzSection {
    #[serde(default = "default_mode_window")]
    pub mode_window: i64,
}

fn default_mode_window() -> i64 {
    12
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct HirzebruchSection {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_half_dim")]
    pub max_half_dim: usize,
}

fn default_trials() -> usize {
    100
}

fn default_half_dim() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct KprojSection {
    #[serde(default = "default_kproj_points")]
    pub base_points: usize,
}

fn default_kproj_points() -> usize {
    4
}

/// One experiment: the kind dispatches the runner, the sections feed it.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct ExperimentConfig {
    pub kind: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub covering: CoveringSection,
    #[serde(default)]
    pub operator: Option<OperatorSection>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
    #[serde(default)]
    pub eta: Option<EtaSection>,
    #[serde(default)]
    pub flow: Option<FlowSection>,
    #[serde(default)]
    pub index: Option<IndexSection>,
    #[serde(default)]
    pub homotopy: Option<HomotopySection>,
    #[serde(default)]
    pub defect: Option<DefectSection>,
    #[serde(default)]
    pub lefschetz: Option<LefschetzSection>,
    #[serde(default)]
    pub hirzebruch: Option<HirzebruchSection>,
    #[serde(default)]
    pub kproj: Option<KprojSection>,
}

pub const KINDS: &[&str] = &[
    "eta",
    "spectral-flow",
    "index",
    "defect",
    "lefschetz",
    "hirzebruch",
    "homotopy-scan",
    "kproj-verify",
    "sl-check",
];

impl ExperimentConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| format!("config parse error: {e}"))?;
        if !KINDS.contains(&config.kind.as_str()) {
            return Err(format!(
                "unknown experiment kind '{}' (expected one of {:?})",
                config.kind, KINDS
            ));
        }
        if config.tolerances.check <= 0.0 || config.tolerances.rank <= 0.0 {
            return Err("tolerances must be positive".into());
        }
        // Round-trip check: the configuration must serialize losslessly.
        let round = toml::to_string(&config).map_err(|e| format!("config not serializable: {e}"))?;
        let _: ExperimentConfig =
            toml::from_str(&round).map_err(|e| format!("config does not round-trip: {e}"))?;
        Ok(config)
    }

    pub fn operator_section(&self) -> std::result::Result<&OperatorSection, String> {
        self.operator
            .as_ref()
            .ok_or_else(|| "missing [operator] section".to_string())
    }

    /// Canonical serialized form used for digests.
    pub fn canonical(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

/// Parse an end-condition name: `aps-outward`, `spectral-plus`,
/// `spectral-minus`, `dirichlet`, `free`, `fiber-average`,
/// `fiber-complement`, or `single-sheet:<index>`.
pub fn parse_condition(name: &str, eps: f64) -> std::result::Result<EndCondition, String> {
    let name = name.trim();
    if let Some(rest) = name.strip_prefix("single-sheet:") {
        let sheet: usize = rest
            .parse()
            .map_err(|_| format!("bad sheet index in '{name}'"))?;
        return Ok(EndCondition::SingleSheet { sheet });
    }
    match name {
        "aps-outward" => Ok(EndCondition::ApsOutward { eps }),
        "spectral-plus" => Ok(EndCondition::SpectralPlus { eps }),
        "spectral-minus" => Ok(EndCondition::SpectralMinus { eps }),
        "dirichlet" => Ok(EndCondition::Dirichlet),
        "free" => Ok(EndCondition::Free),
        "fiber-average" => Ok(EndCondition::FiberAverage),
        "fiber-complement" => Ok(EndCondition::FiberComplement),
        other => Err(format!("unknown boundary condition '{other}'")),
    }
}
