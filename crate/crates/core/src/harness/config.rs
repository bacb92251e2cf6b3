//! Key-value experiment configuration.
//!
//! One `key = value` pair per line, `#` starts a comment, lists are comma
//! separated. Unknown or repeated keys are rejected.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::GridMode;
use crate::error::{Error, Result};
use crate::sensing::PhaseSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    ProposedInf,
    ProposedLow,
    RandomLow,
    GaussianReference,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::ProposedInf, Scheme::ProposedLow, Scheme::RandomLow, Scheme::GaussianReference];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::ProposedInf => "proposed_inf",
            Scheme::ProposedLow => "proposed_low",
            Scheme::RandomLow => "random_low",
            Scheme::GaussianReference => "gaussian_reference",
        }
    }

    /// Low-resolution schemes run once per finite entry of the bit list; the
    /// others run once with continuous phases.
    pub fn uses_finite_bits(self) -> bool {
        matches!(self, Scheme::ProposedLow | Scheme::RandomLow)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

/// One (scheme, resolution) pair of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub scheme: Scheme,
    pub phase_set: PhaseSet,
}

impl Cell {
    pub fn label(&self) -> String {
        format!("{}/{}", self.scheme, self.phase_set)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub n_rf: usize,
    pub n_s: usize,
    pub t_t: usize,
    pub t_r: usize,
    pub g_t: usize,
    pub g_r: usize,
    pub paths: usize,
    pub element_spacing: f64,
    pub grid_mode: GridMode,
    pub schemes: Vec<Scheme>,
    pub bits: Vec<PhaseSet>,
    pub pnr_db: Vec<f64>,
    pub dnr_db: Vec<f64>,
    /// PNR used for the estimates fed to the spectral-efficiency pass.
    pub se_pnr_db: f64,
    /// Transmit beam counts for the objective-vs-beams curve (`T_r = T_t / 2`).
    pub beam_grid: Vec<usize>,
    pub hist_bins: usize,
    /// Also report the mean of per-trial NMSE in dB next to the mean in the linear domain.
    pub nmse_trial_db: bool,
    pub trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Small configuration that runs in minutes on a laptop.
    pub fn desk() -> Self {
        Self {
            n_t: 16,
            n_r: 8,
            n_rf: 4,
            n_s: 4,
            t_t: 12,
            t_r: 8,
            g_t: 20,
            g_r: 12,
            paths: 2,
            element_spacing: 0.5,
            grid_mode: GridMode::OnGrid,
            schemes: Scheme::ALL.to_vec(),
            bits: vec![
                PhaseSet::with_bits(1).unwrap(),
                PhaseSet::with_bits(2).unwrap(),
                PhaseSet::with_bits(3).unwrap(),
                PhaseSet::INFINITE,
            ],
            pnr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0],
            dnr_db: Vec::new(),
            se_pnr_db: -10.0,
            beam_grid: Vec::new(),
            hist_bins: 20,
            nmse_trial_db: false,
            trials: 100,
            seed: 42,
            output_dir: PathBuf::from("out"),
        }
    }

    /// Full-size arrays; hours per sweep.
    pub fn full() -> Self {
        Self {
            n_t: 64,
            n_r: 32,
            g_t: 72,
            g_r: 36,
            t_t: 48,
            t_r: 24,
            paths: 4,
            dnr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            ..Self::desk()
        }
    }

    pub fn tx_blocks(&self) -> usize {
        self.t_t / self.n_s
    }

    pub fn rx_blocks(&self) -> usize {
        self.t_r / self.n_s
    }

    /// Cells in output order: configured scheme order, finite bits ascending.
    pub fn cells(&self) -> Vec<Cell> {
        let mut finite: Vec<PhaseSet> = self.bits.iter().copied().filter(PhaseSet::is_finite).collect();
        finite.sort_by_key(|p| p.bits());
        finite.dedup();
        let mut out = Vec::new();
        for &scheme in &self.schemes {
            if scheme.uses_finite_bits() {
                out.extend(finite.iter().map(|&phase_set| Cell { scheme, phase_set }));
            } else {
                out.push(Cell { scheme, phase_set: PhaseSet::INFINITE });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if [self.n_t, self.n_r, self.n_rf, self.n_s, self.t_t, self.t_r].contains(&0) {
            return err("array sizes and beam counts must be positive".into());
        }
        if self.n_s > self.n_rf {
            return err(format!("n_s = {} exceeds n_rf = {}", self.n_s, self.n_rf));
        }
        if !self.t_t.is_multiple_of(self.n_s) || !self.t_r.is_multiple_of(self.n_s) {
            return err(format!("t_t = {} and t_r = {} must be multiples of n_s = {}", self.t_t, self.t_r, self.n_s));
        }
        if self.g_t <= self.n_t || self.g_r <= self.n_r {
            return err("grid sizes must exceed the antenna counts".into());
        }
        if self.paths == 0 || self.paths > self.g_t.min(self.g_r) {
            return err(format!("paths = {} must be in 1..=min(g_t, g_r)", self.paths));
        }
        if !(self.element_spacing > 0.0 && self.element_spacing.is_finite()) {
            return err("element_spacing must be positive".into());
        }
        if self.schemes.is_empty() {
            return err("at least one scheme is required".into());
        }
        if self.schemes.iter().any(|s| s.uses_finite_bits()) && !self.bits.iter().any(PhaseSet::is_finite) {
            return err("low-resolution schemes need at least one finite entry in bits".into());
        }
        if self.trials == 0 {
            return err("trials must be positive".into());
        }
        if self.hist_bins == 0 {
            return err("hist_bins must be positive".into());
        }
        for &t in &self.beam_grid {
            if t % (2 * self.n_s) != 0 {
                return err(format!("beam_grid entry {t} must be a multiple of 2 n_s = {}", 2 * self.n_s));
            }
        }
        if self.pnr_db.iter().chain(&self.dnr_db).chain([&self.se_pnr_db]).any(|x| x.is_nan()) {
            return err("power ratios must be numbers".into());
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::desk();
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |m: String| Error::Config(format!("line {}: {m}", lineno + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| at(format!("expected 'key = value', got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(at(format!("key '{key}' given twice")));
            }
            cfg.set(key, value).map_err(|e| at(e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n_t" => self.n_t = num(value)?,
            "n_r" => self.n_r = num(value)?,
            "n_rf" => self.n_rf = num(value)?,
            "n_s" => self.n_s = num(value)?,
            "t_t" => self.t_t = num(value)?,
            "t_r" => self.t_r = num(value)?,
            "g_t" => self.g_t = num(value)?,
            "g_r" => self.g_r = num(value)?,
            "paths" => self.paths = num(value)?,
            "element_spacing" => self.element_spacing = num(value)?,
            "grid_mode" => {
                self.grid_mode = match value {
                    "on" => GridMode::OnGrid,
                    "off" => GridMode::OffGrid,
                    other => return Err(Error::Config(format!("grid_mode must be 'on' or 'off', got '{other}'"))),
                }
            }
            "nmse_trial_db" => {
                self.nmse_trial_db = match value {
                    "on" => true,
                    "off" => false,
                    other => return Err(Error::Config(format!("nmse_trial_db must be 'on' or 'off', got '{other}'"))),
                }
            }
            "schemes" => self.schemes = list(value, |s| s.parse())?,
            "bits" => self.bits = list(value, parse_bits)?,
            "pnr_db" => self.pnr_db = list(value, num)?,
            "dnr_db" => self.dnr_db = list(value, num)?,
            "se_pnr_db" => self.se_pnr_db = num(value)?,
            "beam_grid" => self.beam_grid = list(value, num)?,
            "hist_bins" => self.hist_bins = num(value)?,
            "trials" => self.trials = num(value)?,
            "seed" => self.seed = num(value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }
}

fn num<T: FromStr>(value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("cannot parse '{value}'")))
}

fn list<T>(value: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|s| item(s.trim())).collect()
}

fn parse_bits(value: &str) -> Result<PhaseSet> {
    match value {
        "inf" => Ok(PhaseSet::INFINITE),
        v => PhaseSet::with_bits(num(v)?),
    }
}
