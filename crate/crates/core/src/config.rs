//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "model": "linear",
//!   "N": 50,
//!   "T": 50,
//!   "delta_n": 0.1,
//!   "theta": [0.5, 1.0, 1.0]
//! }
//! ```
//!
//! Optional keys: `euler_step` (0.01), `starts` (8), `mu0` (`"dirac:1"`),
//! `box` (`{"lower": [...], "upper": [...]}`, the model default otherwise),
//! `replications` (1), `seed` (0), `workers` (0 = all cores) and `cells`, a
//! list of `{"N", "T", "delta_n"}` replacing the single cell above.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::builtin_model;
use crate::error::{Error, Result};
use crate::model::{ClosedForm, ParamBox, ThetaVector};
use crate::montecarlo::{Cell, MCConfig};
use crate::panel::integer_ratio;
use crate::simulate::InitialLaw;

pub const SCHEMA_VERSION: u32 = 1;

fn default_euler_step() -> f64 {
    0.01
}

fn default_starts() -> usize {
    8
}

fn default_mu0() -> String {
    "dirac:1".into()
}

fn default_replications() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: String,
    #[serde(rename = "N")]
    pub n_particles: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub delta_n: f64,
    /// Flat parameter, drift components first.
    pub theta: Vec<f64>,
    #[serde(default = "default_euler_step")]
    pub euler_step: f64,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_mu0")]
    pub mu0: String,
    #[serde(default, rename = "box")]
    pub bounds: Option<BoxSpec>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub cells: Vec<Cell>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cells to run: the explicit list, or the single top-level cell.
    pub fn cell_list(&self) -> Vec<Cell> {
        if self.cells.is_empty() {
            vec![Cell::new(self.n_particles, self.horizon, self.delta_n)]
        } else {
            self.cells.clone()
        }
    }

    /// Checks everything and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errs.push(format!(
                "schema_version must be {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        if self.replications == 0 {
            errs.push("replications must be >= 1".into());
        }
        if self.starts == 0 {
            errs.push("starts must be >= 1".into());
        }
        if let Err(e) = self.mu0.parse::<InitialLaw>() {
            errs.push(format!("mu0: {e}"));
        }
        if !(self.euler_step > 0.0 && self.euler_step.is_finite()) {
            errs.push(format!("euler_step must be positive, got {}", self.euler_step));
        }
        for (k, c) in self.cell_list().iter().enumerate() {
            let at = if self.cells.is_empty() {
                String::new()
            } else {
                format!("cells[{k}].")
            };
            if c.n_particles == 0 {
                errs.push(format!("{at}N must be >= 1"));
            }
            if !(c.delta_n > 0.0 && c.delta_n.is_finite()) {
                errs.push(format!("{at}delta_n must be positive, got {}", c.delta_n));
            } else {
                if self.euler_step > 0.0 && integer_ratio(c.delta_n, self.euler_step).is_none() {
                    errs.push(format!(
                        "{at}delta_n = {} is not an integer multiple of euler_step = {}",
                        c.delta_n, self.euler_step
                    ));
                }
                if c.horizon > 0.0 && integer_ratio(c.horizon, c.delta_n).is_none() {
                    errs.push(format!(
                        "{at}T = {} is not an integer multiple of delta_n = {}",
                        c.horizon, c.delta_n
                    ));
                }
            }
            if !(c.horizon > 0.0 && c.horizon.is_finite()) {
                errs.push(format!("{at}T must be positive, got {}", c.horizon));
            }
        }

        match builtin_model(&self.model) {
            Err(e) => errs.push(e.to_string()),
            Ok(model) => {
                let p1 = model.p1();
                let p = p1 + model.p2();
                if self.theta.len() != p {
                    errs.push(format!(
                        "theta has {} components, model `{}` needs {p}",
                        self.theta.len(),
                        self.model
                    ));
                }
                let bounds = match &self.bounds {
                    Some(b) => match ParamBox::new(b.lower.clone(), b.upper.clone()) {
                        Ok(pb) => Some(pb),
                        Err(e) => {
                            errs.push(format!("box: {e}"));
                            None
                        }
                    },
                    None => model.default_box(),
                };
                match bounds {
                    Some(b) if b.dim() != p => {
                        errs.push(format!("box has {} components, model `{}` needs {p}", b.dim(), self.model))
                    }
                    Some(b) => {
                        // c = θ₂ · c₀ needs θ₂ > 0 everywhere in the box
                        let scaled = matches!(
                            model.closed_form(),
                            ClosedForm::LinearModel | ClosedForm::MultiplicativeTheta2
                        );
                        if scaled {
                            for k in p1..p {
                                if b.lower()[k] <= 0.0 {
                                    errs.push(format!(
                                        "box lower bound for diffusion component {} is {}, must be > 0",
                                        k - p1 + 1,
                                        b.lower()[k]
                                    ));
                                }
                            }
                        }
                        if self.theta.len() == p && !b.contains(&self.theta) {
                            errs.push(format!("theta {:?} lies outside the box {:?}..{:?}", self.theta, b.lower(), b.upper()));
                        }
                    }
                    None => errs.push(format!("model `{}` has no default box; give `box`", self.model)),
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Monte Carlo configuration for this experiment. Assumes [`validate`](Self::validate) passed.
    pub fn to_mc_config(&self) -> Result<MCConfig> {
        let model = builtin_model(&self.model)?;
        Ok(MCConfig {
            replications: self.replications,
            base_seed: self.seed,
            model: self.model.clone(),
            theta_true: ThetaVector::from_flat(&self.theta, model.p1())?,
            euler_step: self.euler_step,
            mu0: self.mu0.parse()?,
            cells: self.cell_list(),
            bounds: match &self.bounds {
                Some(b) => Some(ParamBox::new(b.lower.clone(), b.upper.clone())?),
                None => None,
            },
            starts: self.starts,
            workers: self.workers,
        })
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_json(&text)
}
