//! Config-driven Monte-Carlo experiments writing CSV.
//!
//! Designs are channel-independent, so each (scheme, bits) cell is designed
//! once and reused for every channel trial of a sweep. Channel and raw noise
//! streams depend only on the seed, the trial and the PNR value, so every
//! scheme sees the same channels and the same unfiltered noise. Each cell
//! derives its own generators from labels, so adding a scheme never changes
//! another scheme's numbers.

pub mod config;
pub mod csv;
pub mod schemes;
pub mod seeds;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::channel::{build_dictionary, sample_channel, AngularDictionary};
use crate::error::{Error, Result};
use crate::estimator::{estimate_from, spectral_efficiency, synthesize_measurements, to_db};
use crate::linalg::CMat;
use crate::metrics;
use crate::sensing::{Side, TrainingBeams};

pub use config::{Cell, ExperimentConfig, Scheme};
pub use csv::{HistogramRecord, MatrixEntry, SweepRecord, TraceRecord};
pub use schemes::{design_side, gaussian_reference, random_baseline, Beams, DesignSettings, SideDesign, SideDims};
pub use seeds::{rng_for, sub_seed};

pub const SWEEP_FILE: &str = "sweep.csv";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const DESIGN_FILE: &str = "design.csv";
pub const DESIGN_SUMMARY_FILE: &str = "design_summary.csv";

const NOISE_VARIANCE: f64 = 1.0;

pub struct Dictionaries {
    pub tx: AngularDictionary,
    pub rx: AngularDictionary,
}

impl Dictionaries {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            tx: build_dictionary(cfg.n_t, cfg.g_t, cfg.element_spacing)?,
            rx: build_dictionary(cfg.n_r, cfg.g_r, cfg.element_spacing)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CellDesign {
    pub cell: Cell,
    pub tx: SideDesign,
    pub rx: SideDesign,
}

impl CellDesign {
    pub fn equivalent_dictionary(&self, dicts: &Dictionaries) -> Result<CMat> {
        crate::estimator::equivalent_dictionary(&self.tx.beams, &self.rx.beams, &dicts.tx, &dicts.rx)
    }
}

/// Designs both sides of `cell` with `t_t` transmit and `t_r` receive beams.
/// `tag` separates independent designs of the same cell.
pub fn design_cell_with_beams(
    cfg: &ExperimentConfig,
    dicts: &Dictionaries,
    cell: Cell,
    t_t: usize,
    t_r: usize,
    tag: &str,
    settings: &DesignSettings,
) -> Result<CellDesign> {
    let side_dims = |t: usize| SideDims { num_blocks: t / cfg.n_s, rf_chains: cfg.n_rf, streams: cfg.n_s };
    let label = format!("design/{}/{t_t}x{t_r}/{tag}", cell.label());
    let mut tx_rng = rng_for(cfg.seed, &format!("{label}/tx"));
    let mut rx_rng = rng_for(cfg.seed, &format!("{label}/rx"));
    let tx = design_side(cell.scheme, cell.phase_set, &dicts.tx.matrix, side_dims(t_t), Side::Transmitter, settings, &mut tx_rng)?;
    let rx = design_side(cell.scheme, cell.phase_set, &dicts.rx.matrix, side_dims(t_r), Side::Receiver, settings, &mut rx_rng)?;
    Ok(CellDesign { cell, tx, rx })
}

pub fn design_cell(cfg: &ExperimentConfig, dicts: &Dictionaries, cell: Cell, tag: &str) -> Result<CellDesign> {
    design_cell_with_beams(cfg, dicts, cell, cfg.t_t, cfg.t_r, tag, &DesignSettings::default())
}

/// Creates `dir` and checks that a file can be written there.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let probe = dir.join(".beamforge-write-probe");
    std::fs::write(&probe, b"")?;
    std::fs::remove_file(&probe)?;
    Ok(())
}

fn record(cfg: &ExperimentConfig, cell: &Cell, x_name: &str, x_value: f64, metric: &str, value: f64) -> SweepRecord {
    SweepRecord {
        scheme: cell.scheme.to_string(),
        bits: cell.phase_set.to_string(),
        x_name: x_name.into(),
        x_value,
        metric: metric.into(),
        value,
        trials: cfg.trials,
        seed: cfg.seed,
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-trial results of one cell.
struct TrialOutcome {
    /// Indexed by PNR.
    nmse_linear: Vec<f64>,
    support_hit: Vec<bool>,
    /// Indexed by DNR.
    se: Vec<f64>,
    se_perfect: Vec<f64>,
}

fn run_trial(
    cfg: &ExperimentConfig,
    dicts: &Dictionaries,
    design: &CellDesign,
    trial: usize,
) -> Result<TrialOutcome> {
    let mut ch_rng = rng_for(cfg.seed, &format!("channel/{trial}"));
    let channel = sample_channel(&dicts.tx, &dicts.rx, cfg.paths, cfg.grid_mode, &mut ch_rng)?;
    let (tx, rx) = (&design.tx.beams, &design.rx.beams);

    let mut nmse_linear = Vec::with_capacity(cfg.pnr_db.len());
    let mut support_hit = Vec::with_capacity(cfg.pnr_db.len());
    for &pnr in &cfg.pnr_db {
        let power = 10f64.powf(pnr / 10.0);
        let mut noise_rng = rng_for(cfg.seed, &format!("noise/{trial}/pnr/{:016x}", pnr.to_bits()));
        let m = synthesize_measurements(&channel, tx, rx, &dicts.tx, &dicts.rx, power, NOISE_VARIANCE, &mut noise_rng)?;
        let rep = estimate_from(&m, &channel, &dicts.tx, &dicts.rx, cfg.paths)?;
        nmse_linear.push(rep.nmse_linear);
        support_hit.push(!channel.support.is_empty() && rep.recovered_support == channel.support);
    }

    let mut se = Vec::with_capacity(cfg.dnr_db.len());
    let mut se_perfect = Vec::with_capacity(cfg.dnr_db.len());
    if !cfg.dnr_db.is_empty() {
        let power = 10f64.powf(cfg.se_pnr_db / 10.0);
        let mut noise_rng = rng_for(cfg.seed, &format!("noise/{trial}/se"));
        let m = synthesize_measurements(&channel, tx, rx, &dicts.tx, &dicts.rx, power, NOISE_VARIANCE, &mut noise_rng)?;
        let rep = estimate_from(&m, &channel, &dicts.tx, &dicts.rx, cfg.paths)?;
        for &dnr in &cfg.dnr_db {
            let p = 10f64.powf(dnr / 10.0);
            se.push(spectral_efficiency(&channel.dense, &rep.dense_estimate, p, cfg.n_s, NOISE_VARIANCE)?.bits_per_hz);
            se_perfect.push(spectral_efficiency(&channel.dense, &channel.dense, p, cfg.n_s, NOISE_VARIANCE)?.bits_per_hz);
        }
    }
    Ok(TrialOutcome { nmse_linear, support_hit, se, se_perfect })
}

fn design_rows(cfg: &ExperimentConfig, dicts: &Dictionaries, design: &CellDesign, t_t: usize) -> Result<Vec<SweepRecord>> {
    let cell = &design.cell;
    let zeta = metrics::scaled_identity_objective(&design.equivalent_dictionary(dicts)?)?;
    let x = t_t as f64;
    Ok(vec![
        record(cfg, cell, "t_t", x, "gram_objective_tx", design.tx.design_objective),
        record(cfg, cell, "t_t", x, "gram_objective_rx", design.rx.design_objective),
        record(cfg, cell, "t_t", x, "zeta_objective", zeta.value),
    ])
}

/// Sweep rows without touching the file system.
pub fn sweep_records(cfg: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let dicts = Dictionaries::new(cfg)?;
    let mut rows = Vec::new();
    let mut perfect: Option<Vec<Vec<f64>>> = None;
    for cell in cfg.cells() {
        let design = design_cell(cfg, &dicts, cell, "sweep")?;
        let outcomes: Vec<TrialOutcome> =
            (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, &dicts, &design, t)).collect::<Result<_>>()?;

        rows.extend(design_rows(cfg, &dicts, &design, cfg.t_t)?);
        for (k, &pnr) in cfg.pnr_db.iter().enumerate() {
            let lin: Vec<f64> = outcomes.iter().map(|o| o.nmse_linear[k]).collect();
            let db: Vec<f64> = lin.iter().map(|&v| to_db(v)).collect();
            let hits = outcomes.iter().filter(|o| o.support_hit[k]).count();
            rows.push(record(cfg, &cell, "pnr_db", pnr, "nmse_db", to_db(mean(&lin))));
            rows.push(record(cfg, &cell, "pnr_db", pnr, "nmse_median_db", median(&db)));
            if cfg.nmse_trial_db {
                rows.push(record(cfg, &cell, "pnr_db", pnr, "nmse_trial_mean_db", mean(&db)));
            }
            rows.push(record(cfg, &cell, "pnr_db", pnr, "support_recovery_rate", hits as f64 / cfg.trials as f64));
        }
        for (k, &dnr) in cfg.dnr_db.iter().enumerate() {
            let se: Vec<f64> = outcomes.iter().map(|o| o.se[k]).collect();
            rows.push(record(cfg, &cell, "dnr_db", dnr, "se_bps_hz", mean(&se)));
        }
        if perfect.is_none() && !cfg.dnr_db.is_empty() {
            perfect = Some(outcomes.iter().map(|o| o.se_perfect.clone()).collect());
        }
        for &t_t in &cfg.beam_grid {
            let point = design_cell_with_beams(cfg, &dicts, cell, t_t, t_t / 2, "beams", &DesignSettings::default())?;
            rows.extend(design_rows(cfg, &dicts, &point, t_t)?.into_iter().filter(|r| r.metric == "zeta_objective"));
        }
    }
    if let Some(per_trial) = perfect {
        for (k, &dnr) in cfg.dnr_db.iter().enumerate() {
            let se: Vec<f64> = per_trial.iter().map(|v| v[k]).collect();
            rows.push(SweepRecord {
                scheme: "perfect_csi".into(),
                bits: "inf".into(),
                x_name: "dnr_db".into(),
                x_value: dnr,
                metric: "se_bps_hz".into(),
                value: mean(&se),
                trials: cfg.trials,
                seed: cfg.seed,
            });
        }
    }
    Ok(rows)
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    prepare_output_dir(&cfg.output_dir)?;
    let rows = sweep_records(cfg)?;
    csv::write_csv(&cfg.output_dir.join(SWEEP_FILE), &rows)?;
    Ok(rows)
}

/// Off-diagonal coherence histogram of the full equivalent dictionary,
/// summed over `trials` independent designs per cell.
pub fn histogram_records(cfg: &ExperimentConfig) -> Result<Vec<HistogramRecord>> {
    cfg.validate()?;
    let dicts = Dictionaries::new(cfg)?;
    let mut rows = Vec::new();
    for cell in cfg.cells() {
        let per_trial: Vec<Vec<metrics::HistogramBin>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let design = design_cell(cfg, &dicts, cell, &format!("hist/{t}"))?;
                metrics::offdiag_histogram(&design.equivalent_dictionary(&dicts)?, cfg.hist_bins)
            })
            .collect::<Result<_>>()?;
        let mut total = per_trial[0].clone();
        for bins in &per_trial[1..] {
            for (acc, b) in total.iter_mut().zip(bins) {
                acc.count += b.count;
            }
        }
        rows.extend(total.into_iter().map(|b| HistogramRecord {
            scheme: cell.scheme.to_string(),
            bits: cell.phase_set.to_string(),
            bin_low: b.low,
            bin_high: b.high,
            count: b.count,
        }));
    }
    Ok(rows)
}

pub fn run_histogram(cfg: &ExperimentConfig) -> Result<Vec<HistogramRecord>> {
    prepare_output_dir(&cfg.output_dir)?;
    let rows = histogram_records(cfg)?;
    csv::write_csv(&cfg.output_dir.join(HISTOGRAM_FILE), &rows)?;
    Ok(rows)
}

/// Receive-side objective traces of the designed schemes: one entry per
/// outer iteration (continuous phases) or per committed block update
/// (low resolution). Baselines are skipped.
pub fn trace_records(cfg: &ExperimentConfig) -> Result<Vec<TraceRecord>> {
    cfg.validate()?;
    let dicts = Dictionaries::new(cfg)?;
    let mut rows = Vec::new();
    for cell in cfg.cells().into_iter().filter(|c| matches!(c.scheme, Scheme::ProposedInf | Scheme::ProposedLow)) {
        let design = design_cell(cfg, &dicts, cell, "trace")?;
        rows.extend(design.rx.objective_trace.iter().enumerate().map(|(i, &v)| TraceRecord {
            scheme: cell.scheme.to_string(),
            bits: cell.phase_set.to_string(),
            iteration: i,
            objective: v,
        }));
    }
    if rows.is_empty() {
        return Err(Error::Config("trace needs proposed_inf or proposed_low among the schemes".into()));
    }
    Ok(rows)
}

pub fn run_convergence_trace(cfg: &ExperimentConfig) -> Result<Vec<TraceRecord>> {
    prepare_output_dir(&cfg.output_dir)?;
    let rows = trace_records(cfg)?;
    csv::write_csv(&cfg.output_dir.join(TRACE_FILE), &rows)?;
    Ok(rows)
}

fn matrix_entries(out: &mut Vec<MatrixEntry>, cell: &Cell, side: &str, kind: &str, m: &CMat) {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let z = m[(r, c)];
            out.push(MatrixEntry {
                scheme: cell.scheme.to_string(),
                bits: cell.phase_set.to_string(),
                side: side.into(),
                kind: kind.into(),
                row: r,
                col: c,
                re: z.re,
                im: z.im,
            });
        }
    }
}

/// Designed matrices of every cell (`analog`, `digital` and the combined
/// `beams`, or only `beams` for unconstrained schemes) plus design metrics.
pub fn design_records(cfg: &ExperimentConfig) -> Result<(Vec<MatrixEntry>, Vec<SweepRecord>)> {
    cfg.validate()?;
    let dicts = Dictionaries::new(cfg)?;
    let mut entries = Vec::new();
    let mut summary = Vec::new();
    for cell in cfg.cells() {
        let design = design_cell(cfg, &dicts, cell, "sweep")?;
        for (side, d) in [("tx", &design.tx), ("rx", &design.rx)] {
            if let Beams::Hybrid(h) = &d.beams {
                matrix_entries(&mut entries, &cell, side, "analog", &h.analog);
                matrix_entries(&mut entries, &cell, side, "digital", &h.digital());
            }
            matrix_entries(&mut entries, &cell, side, "beams", &d.beams.beams());
        }
        summary.extend(design_rows(cfg, &dicts, &design, cfg.t_t)?);
    }
    Ok((entries, summary))
}

pub fn run_design(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    prepare_output_dir(&cfg.output_dir)?;
    let (entries, summary) = design_records(cfg)?;
    let a = cfg.output_dir.join(DESIGN_FILE);
    let b = cfg.output_dir.join(DESIGN_SUMMARY_FILE);
    csv::write_csv(&a, &entries)?;
    csv::write_csv(&b, &summary)?;
    Ok(vec![a, b])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::PhaseSet;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            n_t: 6,
            n_r: 4,
            n_rf: 2,
            n_s: 2,
            t_t: 4,
            t_r: 4,
            g_t: 8,
            g_r: 6,
            paths: 1,
            bits: vec![PhaseSet::with_bits(2).unwrap(), PhaseSet::INFINITE],
            pnr_db: vec![0.0, 20.0],
            dnr_db: vec![0.0],
            hist_bins: 5,
            trials: 3,
            seed: 5,
            ..ExperimentConfig::desk()
        }
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn sweep_is_deterministic_and_complete() {
        let cfg = tiny();
        let a = sweep_records(&cfg).unwrap();
        let b = sweep_records(&cfg).unwrap();
        assert_eq!(csv::render(&a), csv::render(&b));
        let cells = cfg.cells().len();
        // 3 design rows, 3 rows per PNR, 1 per DNR, plus the perfect-CSI row.
        assert_eq!(a.len(), cells * (3 + 3 * 2 + 1) + 1);
    }

    #[test]
    fn trial_db_rows_are_opt_in() {
        let cfg = ExperimentConfig { nmse_trial_db: true, schemes: vec![Scheme::ProposedInf], ..tiny() };
        let rows = sweep_records(&cfg).unwrap();
        let extra: Vec<_> = rows.iter().filter(|r| r.metric == "nmse_trial_mean_db").collect();
        assert_eq!(extra.len(), cfg.pnr_db.len());
        // Jensen: the dB of the mean is at least the mean of the dBs.
        for r in extra {
            let lin = rows.iter().find(|o| o.metric == "nmse_db" && o.x_value == r.x_value).unwrap();
            assert!(lin.value >= r.value - 1e-12);
        }
    }

    #[test]
    fn histogram_counts_sum_to_all_pairs() {
        let cfg = tiny();
        let rows = histogram_records(&cfg).unwrap();
        let g = cfg.g_t * cfg.g_r;
        for cell in cfg.cells() {
            let total: u64 = rows.iter().filter(|r| r.scheme == cell.scheme.name() && r.bits == cell.phase_set.to_string()).map(|r| r.count).sum();
            assert_eq!(total, (cfg.trials * g * (g - 1)) as u64);
        }
    }

    #[test]
    fn traces_are_non_increasing() {
        let rows = trace_records(&tiny()).unwrap();
        assert!(!rows.is_empty());
        for w in rows.windows(2) {
            if w[0].scheme == w[1].scheme && w[0].bits == w[1].bits {
                assert!(w[1].objective <= w[0].objective);
            }
        }
    }

    #[test]
    fn adding_a_scheme_keeps_other_rows() {
        let mut cfg = tiny();
        cfg.schemes = vec![Scheme::RandomLow];
        let alone = sweep_records(&cfg).unwrap();
        cfg.schemes = vec![Scheme::ProposedInf, Scheme::RandomLow];
        let both = sweep_records(&cfg).unwrap();
        let kept: Vec<_> = both.into_iter().filter(|r| r.scheme == "random_low").collect();
        let alone: Vec<_> = alone.into_iter().filter(|r| r.scheme == "random_low").collect();
        assert_eq!(kept, alone);
    }

    #[test]
    fn unwritable_output_dir_fails_early() {
        let dir = std::env::temp_dir().join(format!("beamforge-not-a-dir-{}", std::process::id()));
        std::fs::write(&dir, b"file").unwrap();
        let mut cfg = tiny();
        cfg.output_dir = dir.join("sub");
        assert!(matches!(run_sweep(&cfg), Err(Error::Io(_))));
        std::fs::remove_file(&dir).unwrap();
    }
}
