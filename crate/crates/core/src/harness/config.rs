//! Experiment configuration: a flat TOML document with nested tables that
//! round-trips losslessly, plus dotted-path overrides and a content hash.

use crate::backward::PicardMetric;
use crate::error::{Error, Result};
use crate::forward::InitialSampler;
use crate::grid::TimeGrid;
use crate::pvi::FdBoundary;
use crate::regression::RegressionBasis;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Full deterministic description of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub particles: usize,
    /// Output directory; optional so library use never touches the disk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<String>,
    pub grid: TimeGrid,
    pub forward: ForwardSpec,
    pub initial: InitialSampler,
    pub operator: OperatorSpec,
    pub driver: DriverSpec,
    pub terminal: TerminalSpec,
    pub basis: RegressionBasis,
    pub penalization: PenalizationSpec,
    #[serde(default)]
    pub picard: PicardSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pvi: Option<PviSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSpec>,
    #[serde(default)]
    pub output_options: OutputOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForwardSpec {
    /// b = 0, σ = 0.
    Zero,
    /// b = 0, σ constant.
    Brownian { sigma: f64 },
    /// b = mean(μ), σ = 0.
    MeanOde,
    /// b = b0 + b_x·x + b_mean·mean(μ), σ = s0 + s_x·x.
    Affine {
        b0: f64,
        b_x: f64,
        b_mean: f64,
        s0: f64,
        s_x: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Zero,
    /// scale·I in one dimension.
    Linear { scale: f64 },
    SubdiffAbs,
    SubdiffHinge,
    NormalConeInterval { lo: f64, hi: f64 },
    NormalConeBox { lo: Vec<f64>, hi: Vec<f64> },
    Sum {
        scale: f64,
        inner: Box<OperatorSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverSpec {
    Zero,
    /// H = c_y·y + c_z·z + c_const (scalar z).
    Linear { c_y: f64, c_z: f64, c_const: f64 },
    /// H = scale · mean_θ(y): law dependence through the Y marginal.
    MeanY { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalSpec {
    /// Φ(x) = x.
    Identity,
    Constant { value: f64 },
    /// Φ(x) = x².
    Square,
    /// Φ(x) = 1 + x².
    OnePlusSquare,
    /// Φ(x) = max(x, 0).
    Relu,
    /// Φ(x) = max(x − strike, 0).
    Call { strike: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenalizationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSpec {
    pub max_iters: usize,
    pub tol: f64,
    pub metric: PicardMetric,
}

impl Default for PicardSpec {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-10,
            metric: PicardMetric::Synchronous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PviSpec {
    pub query_t: f64,
    pub query_xs: Vec<f64>,
    pub fd_x_lo: f64,
    pub fd_x_hi: f64,
    pub fd_n_x: usize,
    pub fd_boundary: FdBoundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputOptions {
    /// Number of particles written to paths.csv / solution.csv.
    pub paths_limit: usize,
    pub plot: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self {
            paths_limit: 64,
            plot: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(s).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_str(&s)
    }

    /// SHA-256 content hash of the resolved config document.
    pub fn content_hash(&self) -> String {
        let doc = self.to_toml_string();
        let mut hasher = Sha256::new();
        hasher.update(doc.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::Config("particles must be at least 2".into()));
        }
        if self.penalization.eps.is_none() && self.penalization.schedule.is_none() {
            return Err(Error::Config(
                "penalization needs eps or schedule".into(),
            ));
        }
        if let Some(e) = self.penalization.eps {
            if e <= 0.0 {
                return Err(Error::Config("eps must be positive".into()));
            }
        }
        if let Some(s) = &self.penalization.schedule {
            crate::backward::PenalizationSchedule::new(s.clone())
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Applies a `key=value` override with a dotted path, e.g.
    /// `penalization.eps=0.05` or `terminal.preset=relu`.
    pub fn with_overrides(&self, sets: &[String]) -> Result<Self> {
        if sets.is_empty() {
            return Ok(self.clone());
        }
        let mut value =
            toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for set in sets {
            let (key, raw) = set
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {set:?} is not key=value")))?;
            apply_override(&mut value, key.trim(), raw.trim())?;
        }
        let cfg: ExperimentConfig = value
            .try_into()
            .map_err(|e| Error::Config(format!("override produced invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_toml_scalar(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    if raw.starts_with('[') {
        if let Ok(v) = toml::from_str::<toml::Value>(&format!("x = {raw}")) {
            if let Some(t) = v.get("x") {
                return t.clone();
            }
        }
    }
    toml::Value::String(raw.to_string())
}

fn apply_override(value: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let mut cur = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            let table = cur
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("{key}: not a table")))?;
            // Setting a tagged-enum discriminant switches the variant: drop
            // the old variant's fields so later --set keys rebuild the table.
            if *part == "kind" || *part == "preset" {
                table.clear();
            }
            table.insert(part.to_string(), parse_toml_scalar(raw));
            return Ok(());
        }
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: not a table")))?;
        cur = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    Ok(())
}
