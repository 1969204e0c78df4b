//! Observed particle trajectories on an equidistant grid, and their file formats.
//!
//! Two on-disk formats are supported:
//!
//! * CSV: header `time,p0,p1,...`, one row per grid time `t_j = jΔ`.
//! * MKVP binary: magic `MKVP`, one version byte, little-endian `u64 N`,
//!   `u64 n`, `f64 T`, then `N × (n + 1)` `f64` values row-major by particle.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MKVP_MAGIC: &[u8; 4] = b"MKVP";
pub const MKVP_VERSION: u8 = 1;

/// Relative tolerance for grid arithmetic (`T = nΔ`, `Δ = k·h`).
const GRID_TOL: f64 = 1e-9;

/// Observation times `t_j = jΔ`, `j = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationGrid {
    n: usize,
    delta_n: f64,
}

impl ObservationGrid {
    pub fn new(n: usize, delta_n: f64) -> Result<Self> {
        if n == 0 || !(delta_n.is_finite() && delta_n > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "observation grid needs n >= 1 and delta_n > 0, got n = {n}, delta_n = {delta_n}"
            )));
        }
        Ok(Self { n, delta_n })
    }

    /// Grid with step `delta_n` covering `[0, horizon]`; `horizon` must be a multiple of the step.
    pub fn from_horizon(horizon: f64, delta_n: f64) -> Result<Self> {
        let k = integer_ratio(horizon, delta_n).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "horizon {horizon} is not an integer multiple of delta_n {delta_n}"
            ))
        })?;
        Self::new(k, delta_n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta_n(&self) -> f64 {
        self.delta_n
    }

    pub fn horizon(&self) -> f64 {
        self.n as f64 * self.delta_n
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.delta_n
    }
}

/// Recovers `Δ` from `T = n·Δ` as stored in MKVP headers. Among the floats
/// next to `T / n` that reproduce `T` exactly, the one with the shortest
/// decimal form wins, which returns the step a user typed.
fn step_from_horizon(horizon: f64, n: usize) -> f64 {
    let guess = horizon / n as f64;
    if !guess.is_finite() || guess <= 0.0 {
        return guess;
    }
    let mut best = guess;
    let mut best_len = usize::MAX;
    let mut d = guess;
    for _ in 0..4 {
        d = f64::from_bits(d.to_bits() - 1);
    }
    for _ in 0..9 {
        let len = d.to_string().len();
        if n as f64 * d == horizon && len < best_len {
            best = d;
            best_len = len;
        }
        d = f64::from_bits(d.to_bits() + 1);
    }
    best
}

/// `Some(k)` when `a ≈ k·b` for a positive integer `k`.
pub fn integer_ratio(a: f64, b: f64) -> Option<usize> {
    if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
        return None;
    }
    let r = a / b;
    let k = r.round();
    if k >= 1.0 && (r - k).abs() <= GRID_TOL * k.max(1.0) {
        Some(k as usize)
    } else {
        None
    }
}

/// `N × (n + 1)` positions `X^i_{t_j}`; stored time-major so that each
/// cross-section (the empirical measure at `t_j`) is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPanel {
    data: Vec<f64>,
    n_particles: usize,
    grid: ObservationGrid,
    pub model_name: String,
    pub seed: u64,
}

impl TrajectoryPanel {
    /// Builds a panel from time-major data (`data[j * N + i]`).
    pub fn from_time_major(
        data: Vec<f64>,
        n_particles: usize,
        grid: ObservationGrid,
    ) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::InvalidArgument("panel needs at least one particle".into()));
        }
        let expected = n_particles * (grid.n() + 1);
        if data.len() != expected {
            return Err(Error::Dimension {
                what: "panel data",
                expected,
                got: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "panel entry for particle {} at t_{} is not finite",
                k % n_particles,
                k / n_particles
            )));
        }
        Ok(Self {
            data,
            n_particles,
            grid,
            model_name: String::new(),
            seed: 0,
        })
    }

    /// Builds a panel from one path per particle.
    pub fn from_paths(paths: &[Vec<f64>], grid: ObservationGrid) -> Result<Self> {
        let n_particles = paths.len();
        let cols = grid.n() + 1;
        if let Some(p) = paths.iter().find(|p| p.len() != cols) {
            return Err(Error::Dimension {
                what: "particle path length",
                expected: cols,
                got: p.len(),
            });
        }
        let mut data = vec![0.0; n_particles * cols];
        for (i, p) in paths.iter().enumerate() {
            for (j, &x) in p.iter().enumerate() {
                data[j * n_particles + i] = x;
            }
        }
        Self::from_time_major(data, n_particles, grid)
    }

    pub fn with_metadata(mut self, model_name: impl Into<String>, seed: u64) -> Self {
        self.model_name = model_name.into();
        self.seed = seed;
        self
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    /// Number of observation intervals `n`.
    pub fn n_intervals(&self) -> usize {
        self.grid.n()
    }

    pub fn grid(&self) -> ObservationGrid {
        self.grid
    }

    pub fn delta_n(&self) -> f64 {
        self.grid.delta_n()
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    /// All particle positions at `t_j`.
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_particles..(j + 1) * self.n_particles]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n_particles + i]
    }

    pub fn path(&self, i: usize) -> Vec<f64> {
        (0..=self.grid.n()).map(|j| self.value(i, j)).collect()
    }

    pub fn time_major(&self) -> &[f64] {
        &self.data
    }

    /// Reorders particles: particle `k` of the result is particle `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_particles;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument("not a permutation of the particles".into()));
        }
        let mut data = vec![0.0; self.data.len()];
        for j in 0..=self.grid.n() {
            let col = self.column(j);
            for (k, &p) in perm.iter().enumerate() {
                data[j * n + k] = col[p];
            }
        }
        Ok(Self {
            data,
            ..self.clone()
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 12);
        out.push_str("time");
        for i in 0..self.n_particles {
            let _ = write!(out, ",p{i}");
        }
        out.push('\n');
        for j in 0..=self.grid.n() {
            let _ = write!(out, "{}", self.grid.time(j));
            for x in self.column(j) {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty CSV".into()))??;
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.first() != Some(&"time") || cols.len() < 2 {
            return Err(Error::Format(
                "CSV header must be `time` followed by one column per particle".into(),
            ));
        }
        let n_particles = cols.len() - 1;
        let mut times = Vec::new();
        let mut data = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n_particles + 1 {
                return Err(Error::Format(format!(
                    "row {} has {} fields, expected {}",
                    row + 1,
                    fields.len(),
                    n_particles + 1
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("row {}: bad number `{s}`", row + 1)))
            };
            times.push(parse(fields[0])?);
            for f in &fields[1..] {
                data.push(parse(f)?);
            }
        }
        if times.len() < 2 {
            return Err(Error::Format("panel needs at least two observation times".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::Format("first observation time must be 0".into()));
        }
        let delta = times[1];
        let grid = ObservationGrid::new(times.len() - 1, delta)?;
        for (j, &t) in times.iter().enumerate() {
            if (t - grid.time(j)).abs() > GRID_TOL * grid.time(j).max(1.0) {
                return Err(Error::Format(format!(
                    "observation times are not equidistant (row {j}: {t})"
                )));
            }
        }
        Self::from_time_major(data, n_particles, grid)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(fs::File::open(path)?)
    }

    pub fn to_mkvp_bytes(&self) -> Vec<u8> {
        let n = self.n_particles;
        let cols = self.grid.n() + 1;
        let mut out = Vec::with_capacity(4 + 1 + 24 + 8 * n * cols);
        out.extend_from_slice(MKVP_MAGIC);
        out.push(MKVP_VERSION);
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(self.grid.n() as u64).to_le_bytes());
        out.extend_from_slice(&self.horizon().to_le_bytes());
        for i in 0..n {
            for j in 0..cols {
                out.extend_from_slice(&self.value(i, j).to_le_bytes());
            }
        }
        out
    }

    pub fn from_mkvp_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 29 || &bytes[..4] != MKVP_MAGIC {
            return Err(Error::Format("missing MKVP header".into()));
        }
        if bytes[4] != MKVP_VERSION {
            return Err(Error::Format(format!("unsupported MKVP version {}", bytes[4])));
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let n_particles = u64_at(5) as usize;
        let n = u64_at(13) as usize;
        let horizon = f64::from_le_bytes(bytes[21..29].try_into().unwrap());
        let cols = n + 1;
        let payload = &bytes[29..];
        if n_particles.checked_mul(cols).and_then(|c| c.checked_mul(8)) != Some(payload.len()) {
            return Err(Error::Format(format!(
                "MKVP payload has {} bytes, expected {} x {} f64 values",
                payload.len(),
                n_particles,
                cols
            )));
        }
        let grid = ObservationGrid::new(n, step_from_horizon(horizon, n))?;
        let mut data = vec![0.0; n_particles * cols];
        for (k, chunk) in payload.chunks_exact(8).enumerate() {
            let (i, j) = (k / cols, k % cols);
            data[j * n_particles + i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Self::from_time_major(data, n_particles, grid)
    }

    pub fn write_mkvp(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_mkvp_bytes())?;
        Ok(())
    }

    /// Reads either format, detected from the leading magic bytes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.starts_with(MKVP_MAGIC) {
            Self::from_mkvp_bytes(&bytes)
        } else {
            Self::from_csv_reader(bytes.as_slice())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrajectoryPanel {
        let grid = ObservationGrid::new(2, 0.5).unwrap();
        TrajectoryPanel::from_paths(&[vec![0.0, 1.0, 1.0], vec![2.0, -0.25, 1e-3]], grid).unwrap()
    }

    #[test]
    fn grid_arithmetic() {
        let g = ObservationGrid::from_horizon(50.0, 0.1).unwrap();
        assert_eq!(g.n(), 500);
        assert!(ObservationGrid::from_horizon(1.0, 0.3).is_err());
        assert_eq!(integer_ratio(0.1, 0.01), Some(10));
        assert_eq!(integer_ratio(0.015, 0.01), None);
    }

    #[test]
    fn csv_layout() {
        let csv = small().to_csv_string();
        assert_eq!(csv, "time,p0,p1\n0,0,2\n0.5,1,-0.25\n1,1,0.001\n");
        let back = TrajectoryPanel::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(back.to_csv_string(), csv);
    }

    #[test]
    fn mkvp_layout() {
        let p = small();
        let bytes = p.to_mkvp_bytes();
        assert_eq!(&bytes[..5], b"MKVP\x01");
        assert_eq!(u64::from_le_bytes(bytes[5..13].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[13..21].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[21..29].try_into().unwrap()), 1.0);
        // first particle's path comes first
        assert_eq!(f64::from_le_bytes(bytes[37..45].try_into().unwrap()), 1.0);
        assert_eq!(TrajectoryPanel::from_mkvp_bytes(&bytes).unwrap(), p);
    }

    #[test]
    fn malformed_inputs() {
        assert!(TrajectoryPanel::from_csv_reader("x,p0\n0,1\n".as_bytes()).is_err());
        assert!(TrajectoryPanel::from_csv_reader("time,p0\n0,1\n0.5,2,3\n".as_bytes()).is_err());
        assert!(TrajectoryPanel::from_csv_reader("time,p0\n0,1\n0.5,2\n0.7,2\n".as_bytes()).is_err());
        assert!(TrajectoryPanel::from_mkvp_bytes(b"MKVP\x02").is_err());
        let mut bytes = small().to_mkvp_bytes();
        bytes.pop();
        assert!(TrajectoryPanel::from_mkvp_bytes(&bytes).is_err());
    }

    #[test]
    fn permutation_reorders_rows() {
        let p = small().permuted(&[1, 0]).unwrap();
        assert_eq!(p.path(0), vec![2.0, -0.25, 1e-3]);
        assert!(small().permuted(&[0, 0]).is_err());
    }
}
