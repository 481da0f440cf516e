//! Run configuration: one JSON document, every field optional.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use emacflow_core::mesh::{BoundaryTag, MeshSpec, MshTagMap};
use emacflow_core::nonlinear::NewtonConfig;
use emacflow_core::quantities::PERIOD_WINDOW;
use emacflow_core::timeloop::{SchemeConfig, DEFAULT_CHECKPOINT_EVERY};
use emacflow_core::{ConvectiveForm, Scheme};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeshConfig {
    /// Built-in graded mesh of refinement level `level`.
    Cylinder { level: i32 },
    /// Gmsh 2.2 file; `tags` maps physical group names to boundary tags
    /// (groups named `cylinder` or `outer` need no entry).
    Import {
        path: PathBuf,
        #[serde(default)]
        tags: BTreeMap<String, String>,
    },
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig::Cylinder { level: 1 }
    }
}

impl MeshConfig {
    pub fn spec(&self) -> MeshSpec {
        match self {
            MeshConfig::Cylinder { level } => MeshSpec::CylinderBenchmark { level: *level },
            MeshConfig::Import { path, tags } => MeshSpec::Import {
                path: path.clone(),
                tag_map: MshTagMap {
                    by_name: tags
                        .iter()
                        .map(|(k, v)| (k.clone(), v.parse::<BoundaryTag>().unwrap()))
                        .collect(),
                    by_number: BTreeMap::new(),
                },
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonSettings {
    pub tol: f64,
    pub refactor_ratio: f64,
    pub damping: f64,
    pub max_line_search: usize,
    pub max_iterations: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        let c = NewtonConfig::default();
        NewtonSettings {
            tol: c.tol,
            refactor_ratio: c.refactor_ratio,
            damping: c.damping,
            max_line_search: c.max_line_search,
            max_iterations: c.max_iterations,
        }
    }
}

impl From<NewtonSettings> for NewtonConfig {
    fn from(s: NewtonSettings) -> Self {
        NewtonConfig {
            tol: s.tol,
            refactor_ratio: s.refactor_ratio,
            damping: s.damping,
            max_line_search: s.max_line_search,
            max_iterations: s.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub checkpoint: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            csv: "run.csv".into(),
            summary: "summary.json".into(),
            checkpoint: "run.ckpt".into(),
        }
    }
}

impl OutputPaths {
    /// Resolves relative paths against `dir`.
    pub fn under(&self, dir: &Path) -> Self {
        let j = |p: &PathBuf| if p.is_absolute() { p.clone() } else { dir.join(p) };
        OutputPaths {
            csv: j(&self.csv),
            summary: j(&self.summary),
            checkpoint: j(&self.checkpoint),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    /// Velocity degree `k`; the pressure has degree `k - 1`.
    pub order: usize,
    #[serde(with = "via_str")]
    pub form: ConvectiveForm,
    #[serde(with = "via_str")]
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    /// Reynolds number `2 / nu` based on the cylinder diameter.
    pub re: f64,
    /// Evaluation window for drag statistics and the period.
    pub window: (f64, f64),
    pub newton: NewtonSettings,
    pub output: OutputPaths,
    /// Steps between checkpoints; 0 disables them.
    pub checkpoint_every: usize,
    /// Single worker thread.
    pub deterministic: bool,
    /// Worker threads; `None` leaves the choice to the thread pool.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh: MeshConfig::default(),
            order: 2,
            form: ConvectiveForm::Emac,
            scheme: Scheme::Bdf3,
            dt: 0.01,
            t_end: 500.0,
            re: 500.0,
            window: PERIOD_WINDOW,
            newton: NewtonSettings::default(),
            output: OutputPaths::default(),
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
            deterministic: false,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn nu(&self) -> f64 {
        2.0 / self.re
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig {
            scheme: self.scheme,
            dt: self.dt,
            t_end: self.t_end,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.re > 0.0 && self.re.is_finite()) {
            return bad(format!("re must be positive, got {}", self.re));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= self.dt) {
            return bad(format!("t_end {} shorter than one step", self.t_end));
        }
        let (a, b) = self.window;
        if !(0.0 <= a && a < b && b <= self.t_end + 1e-9 * self.t_end) {
            return bad(format!("window [{a}, {b}] not inside [0, {}]", self.t_end));
        }
        if !(2..=4).contains(&self.order) {
            return bad(format!("order must be 2, 3 or 4, got {}", self.order));
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        NewtonConfig::from(self.newton)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// Serde through `Display` and `FromStr`.
mod via_str {
    use super::*;
    use serde::{de, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(de::Error::custom)
    }
}
