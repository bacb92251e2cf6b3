//! CSV rows for the experiment outputs. Floats use 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

pub const SWEEP_HEADER: &str = "scheme,bits,x_name,x_value,metric,value,trials,seed";
pub const HISTOGRAM_HEADER: &str = "scheme,bits,bin_low,bin_high,count";
pub const TRACE_HEADER: &str = "scheme,bits,iteration,objective";
pub const DESIGN_HEADER: &str = "scheme,bits,side,kind,row,col,re,im";

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub scheme: String,
    pub bits: String,
    pub x_name: String,
    pub x_value: f64,
    pub metric: String,
    pub value: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramRecord {
    pub scheme: String,
    pub bits: String,
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub scheme: String,
    pub bits: String,
    pub iteration: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEntry {
    pub scheme: String,
    pub bits: String,
    pub side: String,
    pub kind: String,
    pub row: usize,
    pub col: usize,
    pub re: f64,
    pub im: f64,
}

pub trait CsvRow {
    const HEADER: &'static str;
    fn write_row(&self, out: &mut String);
}

impl CsvRow for SweepRecord {
    const HEADER: &'static str = SWEEP_HEADER;
    fn write_row(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            self.scheme,
            self.bits,
            self.x_name,
            float(self.x_value),
            self.metric,
            float(self.value),
            self.trials,
            self.seed
        );
    }
}

impl CsvRow for HistogramRecord {
    const HEADER: &'static str = HISTOGRAM_HEADER;
    fn write_row(&self, out: &mut String) {
        let _ = writeln!(out, "{},{},{},{},{}", self.scheme, self.bits, float(self.bin_low), float(self.bin_high), self.count);
    }
}

impl CsvRow for TraceRecord {
    const HEADER: &'static str = TRACE_HEADER;
    fn write_row(&self, out: &mut String) {
        let _ = writeln!(out, "{},{},{},{}", self.scheme, self.bits, self.iteration, float(self.objective));
    }
}

impl CsvRow for MatrixEntry {
    const HEADER: &'static str = DESIGN_HEADER;
    fn write_row(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            self.scheme,
            self.bits,
            self.side,
            self.kind,
            self.row,
            self.col,
            float(self.re),
            float(self.im)
        );
    }
}

pub fn render<T: CsvRow>(rows: &[T]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(T::HEADER);
    out.push('\n');
    for r in rows {
        r.write_row(&mut out);
    }
    out
}

pub fn write_csv<T: CsvRow>(path: &Path, rows: &[T]) -> Result<()> {
    std::fs::write(path, render(rows))?;
    Ok(())
}
