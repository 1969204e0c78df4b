//! Simulation and joint drift/diffusion estimation for McKean–Vlasov
//! interacting particle systems observed on a discrete time grid.

pub mod catalog;
pub mod cli;
pub mod config;
pub mod contrast;
pub mod error;
pub mod inference;
pub mod measure;
pub mod model;
pub mod montecarlo;
pub mod optim;
pub mod panel;
pub mod simulate;

pub use catalog::builtin_model;
pub use contrast::{contrast_gradient, contrast_value, minimize_contrast, EstimateOptions, EstimateResult};
pub use error::{Error, Result};
pub use measure::ParticleState;
pub use model::{InteractionModel, ParamBox, ThetaVector};
pub use panel::{ObservationGrid, TrajectoryPanel};
pub use simulate::{simulate_panel, InitialLaw, SimConfig};
