//! Euler–Maruyama simulation of the coupled particle system.
//!
//! Randomness: particle `i` owns the ChaCha8 stream `i` of the generator
//! seeded with `seed`. Its initial value is the first draw from that stream
//! and its Gaussian increments (ziggurat, `rand_distr::StandardNormal`)
//! follow. Changing `N` therefore never reshuffles the noise of the
//! remaining particles.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::ParticleState;
use crate::model::{InteractionModel, ThetaVector};
use crate::panel::{integer_ratio, ObservationGrid, TrajectoryPanel};

/// Positions with `|x|` above this abort the simulation.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

/// Law of the i.i.d. initial positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum InitialLaw {
    Dirac { at: f64 },
    Gaussian { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialLaw::Dirac { at } if !at.is_finite() => Err(Error::InvalidArgument(
                "dirac location must be finite".into(),
            )),
            InitialLaw::Gaussian { mean, sd } if !(mean.is_finite() && sd.is_finite() && sd > 0.0) => {
                Err(Error::InvalidArgument(format!(
                    "gaussian initial law needs finite mean and sd > 0, got sd = {sd}"
                )))
            }
            InitialLaw::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                Err(Error::InvalidArgument(format!(
                    "uniform initial law needs lo < hi, got [{lo}, {hi}]"
                )))
            }
            _ => Ok(()),
        }
    }

    /// One draw; assumes the law is valid.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitialLaw::Dirac { at } => at,
            InitialLaw::Gaussian { mean, sd } => Normal::new(mean, sd).unwrap().sample(rng),
            InitialLaw::Uniform { lo, hi } => Uniform::new(lo, hi).unwrap().sample(rng),
        }
    }
}

/// Parses `dirac:c`, `gaussian:mean,sd` or `uniform:lo,hi`.
impl FromStr for InitialLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').ok_or_else(|| {
            Error::InvalidArgument(format!("initial law `{s}`: expected kind:params"))
        })?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidArgument(format!("initial law `{s}`: bad number")))?;
        let law = match (kind.trim(), nums.as_slice()) {
            ("dirac", [at]) => InitialLaw::Dirac { at: *at },
            ("gaussian" | "normal", [mean, sd]) => InitialLaw::Gaussian { mean: *mean, sd: *sd },
            ("uniform", [lo, hi]) => InitialLaw::Uniform { lo: *lo, hi: *hi },
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "initial law `{s}`: expected dirac:c, gaussian:mean,sd or uniform:lo,hi"
                )))
            }
        };
        law.validate()?;
        Ok(law)
    }
}

impl fmt::Display for InitialLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialLaw::Dirac { at } => write!(f, "dirac:{at}"),
            InitialLaw::Gaussian { mean, sd } => write!(f, "gaussian:{mean},{sd}"),
            InitialLaw::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
        }
    }
}

/// `n` i.i.d. draws from `law`.
pub fn sample_mu0<R: Rng + ?Sized>(law: &InitialLaw, n: usize, rng: &mut R) -> Result<ParticleState> {
    law.validate()?;
    ParticleState::new((0..n).map(|_| law.sample(rng)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_particles: usize,
    pub horizon: f64,
    /// Fine integration step `h`.
    pub euler_step: f64,
    pub seed: u64,
    pub mu0: InitialLaw,
    /// Each Euler increment is the normalised sum of this many standard
    /// normal draws. Running step `h` with `k` substeps and step `h/k` with
    /// one substep drives both schemes with the same Brownian path.
    pub brownian_substeps: u32,
}

impl SimConfig {
    pub fn new(n_particles: usize, horizon: f64, euler_step: f64, seed: u64, mu0: InitialLaw) -> Self {
        Self {
            n_particles,
            horizon,
            euler_step,
            seed,
            mu0,
            brownian_substeps: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::InvalidArgument("need at least one particle".into()));
        }
        if !(self.euler_step > 0.0 && self.euler_step <= self.horizon && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < euler_step <= T, got euler_step = {}, T = {}",
                self.euler_step, self.horizon
            )));
        }
        if self.brownian_substeps == 0 {
            return Err(Error::InvalidArgument("brownian_substeps must be >= 1".into()));
        }
        self.mu0.validate()
    }
}

/// Generator for particle `stream` under `seed`.
pub fn particle_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Number of Euler steps per observation interval.
fn steps_per_observation(cfg: &SimConfig, grid: &ObservationGrid) -> Result<usize> {
    cfg.validate()?;
    let k = integer_ratio(grid.delta_n(), cfg.euler_step).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "delta_n = {} is not an integer multiple of euler_step = {}",
            grid.delta_n(),
            cfg.euler_step
        ))
    })?;
    let t = grid.horizon();
    if (t - cfg.horizon).abs() > 1e-9 * cfg.horizon.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "grid horizon {t} does not match T = {}",
            cfg.horizon
        )));
    }
    Ok(k)
}

/// Synchronous Euler stepper over a set of particles with their own streams.
struct Stepper<'a> {
    model: &'a dyn InteractionModel,
    theta: &'a ThetaVector,
    h: f64,
    sqrt_h: f64,
    substeps: u32,
    x: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
    drift: Vec<f64>,
    diff: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(
        model: &'a dyn InteractionModel,
        theta: &'a ThetaVector,
        cfg: &SimConfig,
        streams: &[u64],
    ) -> Self {
        let mut rngs: Vec<ChaCha8Rng> = streams.iter().map(|&s| particle_rng(cfg.seed, s)).collect();
        let x: Vec<f64> = rngs.iter_mut().map(|r| cfg.mu0.sample(r)).collect();
        let n = x.len();
        Self {
            model,
            theta,
            h: cfg.euler_step,
            sqrt_h: cfg.euler_step.sqrt(),
            substeps: cfg.brownian_substeps,
            x,
            rngs,
            drift: vec![0.0; n],
            diff: vec![0.0; n],
        }
    }

    fn noise(&mut self, i: usize) -> f64 {
        let rng = &mut self.rngs[i];
        if self.substeps == 1 {
            StandardNormal.sample(rng)
        } else {
            let s: f64 = (0..self.substeps)
                .map(|_| -> f64 { StandardNormal.sample(rng) })
                .sum();
            s / (self.substeps as f64).sqrt()
        }
    }

    /// Coefficients at the current state; diffusion may vanish but not go negative.
    fn coefficients(&mut self) -> Result<()> {
        self.model.drift_all(&self.theta.theta1, &self.x, &mut self.drift);
        self.model.diffusion_all(&self.theta.theta2, &self.x, &mut self.diff);
        for i in 0..self.x.len() {
            if !self.drift[i].is_finite() {
                return Err(Error::ModelEvaluation {
                    model: self.model.name().to_string(),
                    particle: i,
                    theta: self.theta.to_flat(),
                });
            }
            let a = self.diff[i];
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::NonPositiveDiffusion {
                    model: self.model.name().to_string(),
                    particle: i,
                    theta2: self.theta.theta2.clone(),
                    value: a,
                });
            }
        }
        Ok(())
    }

    fn step(&mut self, t_next: f64) -> Result<()> {
        self.coefficients()?;
        for i in 0..self.x.len() {
            let z = self.noise(i);
            let next = self.x[i] + self.drift[i] * self.h + self.diff[i] * self.sqrt_h * z;
            if !next.is_finite() || next.abs() > BLOW_UP_THRESHOLD {
                return Err(Error::SimulationDiverged {
                    particle: i,
                    time: t_next,
                    value: next,
                });
            }
            self.x[i] = next;
        }
        Ok(())
    }
}

/// Simulates the `N`-particle system and records it on `grid`.
pub fn simulate_panel(
    model: &dyn InteractionModel,
    theta: &ThetaVector,
    cfg: &SimConfig,
    grid: &ObservationGrid,
) -> Result<TrajectoryPanel> {
    let streams: Vec<u64> = (0..cfg.n_particles as u64).collect();
    simulate_panel_with_streams(model, theta, cfg, grid, &streams)
}

/// As [`simulate_panel`], with particle `i` drawing from stream `streams[i]`.
pub fn simulate_panel_with_streams(
    model: &dyn InteractionModel,
    theta: &ThetaVector,
    cfg: &SimConfig,
    grid: &ObservationGrid,
    streams: &[u64],
) -> Result<TrajectoryPanel> {
    theta.check_dims(model)?;
    if streams.len() != cfg.n_particles {
        return Err(Error::Dimension {
            what: "particle streams",
            expected: cfg.n_particles,
            got: streams.len(),
        });
    }
    let per_obs = steps_per_observation(cfg, grid)?;
    let mut stepper = Stepper::new(model, theta, cfg, streams);
    let n = cfg.n_particles;
    let mut data = Vec::with_capacity(n * (grid.n() + 1));
    data.extend_from_slice(&stepper.x);
    let mut step = 0usize;
    for _ in 0..grid.n() {
        for _ in 0..per_obs {
            step += 1;
            stepper.step(step as f64 * cfg.euler_step)?;
        }
        data.extend_from_slice(&stepper.x);
    }
    Ok(TrajectoryPanel::from_time_major(data, n, *grid)?.with_metadata(model.name(), cfg.seed))
}

/// Simulates the interacting system together with approximate McKean–Vlasov
/// copies sharing its Brownian motions and initial values.
///
/// The copies are the first `N` particles of a larger system of
/// `mean_field_pool` particles whose empirical measure stands in for the
/// mean-field law. Pool particle `k` uses stream `k`, so particle `i < N`
/// of both systems sees the same noise.
pub fn simulate_coupled_independent(
    model: &dyn InteractionModel,
    theta: &ThetaVector,
    cfg: &SimConfig,
    grid: &ObservationGrid,
    mean_field_pool: usize,
) -> Result<(TrajectoryPanel, TrajectoryPanel)> {
    if mean_field_pool < cfg.n_particles {
        return Err(Error::InvalidArgument(format!(
            "mean-field pool ({mean_field_pool}) must be at least N ({})",
            cfg.n_particles
        )));
    }
    let interacting = simulate_panel(model, theta, cfg, grid)?;
    let pool_cfg = SimConfig {
        n_particles: mean_field_pool,
        ..cfg.clone()
    };
    let pool = simulate_panel(model, theta, &pool_cfg, grid)?;
    let n = cfg.n_particles;
    let mut data = Vec::with_capacity(n * (grid.n() + 1));
    for j in 0..=grid.n() {
        data.extend_from_slice(&pool.column(j)[..n]);
    }
    let mckean = TrajectoryPanel::from_time_major(data, n, *grid)?.with_metadata(model.name(), cfg.seed);
    Ok((interacting, mckean))
}

/// `mean_i (X^i_T − X̄^i_T)²` between an interacting panel and its coupled copies.
pub fn coupling_error(interacting: &TrajectoryPanel, mckean: &TrajectoryPanel) -> Result<f64> {
    if interacting.n_particles() != mckean.n_particles()
        || interacting.n_intervals() != mckean.n_intervals()
    {
        return Err(Error::InvalidArgument("panels have different shapes".into()));
    }
    let j = interacting.n_intervals();
    let a = interacting.column(j);
    let b = mckean.column(j);
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Linear;
    use crate::model::FnModel;

    fn const_model(b: f64, a: f64) -> FnModel {
        FnModel::new("const", 1, 1, move |_, _, _| b, move |_, _, _| a)
    }

    fn theta() -> ThetaVector {
        ThetaVector::new(vec![0.0], vec![0.0])
    }

    #[test]
    fn deterministic_ode() {
        let cfg = SimConfig::new(3, 1.0, 0.01, 7, InitialLaw::Dirac { at: 0.0 });
        let grid = ObservationGrid::new(4, 0.25).unwrap();
        let p = simulate_panel(&const_model(1.0, 0.0), &theta(), &cfg, &grid).unwrap();
        for i in 0..3 {
            assert!((p.value(i, 4) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_system() {
        let cfg = SimConfig::new(4, 2.0, 0.1, 1, InitialLaw::Dirac { at: 2.5 });
        let grid = ObservationGrid::new(4, 0.5).unwrap();
        let p = simulate_panel(&const_model(0.0, 0.0), &theta(), &cfg, &grid).unwrap();
        assert!(p.time_major().iter().all(|&x| x == 2.5));
    }

    #[test]
    fn incompatible_grid_is_rejected() {
        let cfg = SimConfig::new(2, 1.0, 0.03, 1, InitialLaw::Dirac { at: 0.0 });
        let grid = ObservationGrid::new(10, 0.1).unwrap();
        assert!(simulate_panel(&const_model(0.0, 1.0), &theta(), &cfg, &grid).is_err());
        let cfg = SimConfig::new(2, 2.0, 0.01, 1, InitialLaw::Dirac { at: 0.0 });
        assert!(simulate_panel(&const_model(0.0, 1.0), &theta(), &cfg, &grid).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let m = FnModel::new("explode", 1, 1, |_, i, x| x[i] * 1e3, |_, _, _| 0.0);
        let cfg = SimConfig::new(2, 1.0, 0.1, 1, InitialLaw::Dirac { at: 1.0 });
        let grid = ObservationGrid::new(10, 0.1).unwrap();
        match simulate_panel(&m, &theta(), &cfg, &grid) {
            Err(Error::SimulationDiverged { particle: 0, time, .. }) => assert!(time > 0.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn negative_diffusion_is_rejected() {
        let cfg = SimConfig::new(2, 1.0, 0.5, 1, InitialLaw::Dirac { at: 1.0 });
        let grid = ObservationGrid::new(2, 0.5).unwrap();
        assert!(matches!(
            simulate_panel(&const_model(0.0, -1.0), &theta(), &cfg, &grid),
            Err(Error::NonPositiveDiffusion { .. })
        ));
    }

    #[test]
    fn initial_laws() {
        let mut rng = particle_rng(3, 0);
        let s = sample_mu0(&InitialLaw::Dirac { at: 1.0 }, 3, &mut rng).unwrap();
        assert_eq!(s.positions(), &[1.0, 1.0, 1.0]);
        assert!(sample_mu0(&InitialLaw::Gaussian { mean: 0.0, sd: 0.0 }, 3, &mut rng).is_err());
        assert!(sample_mu0(&InitialLaw::Uniform { lo: 1.0, hi: 1.0 }, 3, &mut rng).is_err());

        let n = 100_000;
        let g = sample_mu0(&InitialLaw::Gaussian { mean: 0.0, sd: 1.0 }, n, &mut rng).unwrap();
        assert!(g.moment(1).abs() < 4.0 / (n as f64).sqrt());

        let u = sample_mu0(&InitialLaw::Uniform { lo: 0.0, hi: 2.0 }, n, &mut rng).unwrap();
        let m = u.moment(1);
        let var = u.moment(2) - m * m;
        // Var of (X - 1)^2 for X ~ U(0, 2) is 1/5 - 1/9 = 4/45
        let se = (4.0 / 45.0 / n as f64).sqrt();
        assert!((var - 1.0 / 3.0).abs() < 5.0 * se, "var = {var}");
    }

    #[test]
    fn initial_law_parsing() {
        assert_eq!("dirac:1".parse::<InitialLaw>().unwrap(), InitialLaw::Dirac { at: 1.0 });
        assert_eq!(
            "gaussian:0,1".parse::<InitialLaw>().unwrap(),
            InitialLaw::Gaussian { mean: 0.0, sd: 1.0 }
        );
        assert!("uniform:2,1".parse::<InitialLaw>().is_err());
        assert!("cauchy:0,1".parse::<InitialLaw>().is_err());
        let law = InitialLaw::Uniform { lo: -1.0, hi: 2.5 };
        assert_eq!(law.to_string().parse::<InitialLaw>().unwrap(), law);
    }

    #[test]
    fn coupled_panels_coincide_without_dynamics() {
        let cfg = SimConfig::new(5, 1.0, 0.1, 9, InitialLaw::Gaussian { mean: 0.0, sd: 1.0 });
        let grid = ObservationGrid::new(5, 0.2).unwrap();
        let (a, b) = simulate_coupled_independent(&const_model(0.0, 0.0), &theta(), &cfg, &grid, 50).unwrap();
        assert_eq!(a.time_major(), b.time_major());
        assert!(simulate_coupled_independent(&const_model(0.0, 0.0), &theta(), &cfg, &grid, 4).is_err());
    }

    #[test]
    fn coupled_panels_coincide_without_interaction() {
        let th = ThetaVector::new(vec![0.5, 0.0], vec![1.0]);
        let cfg = SimConfig::new(8, 2.0, 0.01, 4, InitialLaw::Gaussian { mean: 1.0, sd: 0.5 });
        let grid = ObservationGrid::new(20, 0.1).unwrap();
        let (a, b) = simulate_coupled_independent(&Linear, &th, &cfg, &grid, 200).unwrap();
        assert_eq!(a.time_major(), b.time_major());
        assert_eq!(coupling_error(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn streams_are_stable_under_growing_n() {
        let th = ThetaVector::new(vec![0.5, 0.0], vec![1.0]);
        let grid = ObservationGrid::new(10, 0.1).unwrap();
        let small = SimConfig::new(3, 1.0, 0.01, 11, InitialLaw::Gaussian { mean: 0.0, sd: 1.0 });
        let large = SimConfig { n_particles: 7, ..small.clone() };
        let a = simulate_panel(&Linear, &th, &small, &grid).unwrap();
        let b = simulate_panel(&Linear, &th, &large, &grid).unwrap();
        for i in 0..3 {
            assert_eq!(a.path(i), b.path(i));
        }
    }
}
