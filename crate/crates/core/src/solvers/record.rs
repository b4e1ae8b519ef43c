use std::fmt::Write as _;
use std::io::Write;

use crate::error::Result;
use crate::image::ImageGrid;

pub const CSV_HEADER: &str = "data_passes,wall_seconds,rel_err,psnr,ssim,prox_calls,objective";

/// One logging event.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub iteration: u64,
    pub data_passes: f64,
    /// Solver CPU seconds, metric evaluation excluded.
    pub wall_seconds: f64,
    pub rel_err: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    /// Prox evaluations, or denoiser calls in plug-and-play mode.
    pub prox_calls: u64,
    pub objective: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    DataPasses,
    Iterations,
    Time,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub iterations: u64,
    pub stop_reason: Option<StopReason>,
}

impl RunRecord {
    /// First row meeting the tolerance, if the run got there.
    pub fn reached(&self, tolerance: f64) -> Option<&RunRow> {
        self.rows.iter().find(|r| r.rel_err.is_some_and(|e| e < tolerance))
    }

    pub fn last(&self) -> Option<&RunRow> {
        self.rows.last()
    }

    /// Rows with the timing column zeroed, for comparisons across runs.
    pub fn without_timing(&self) -> RunRecord {
        let mut r = self.clone();
        r.rows.iter_mut().for_each(|row| row.wall_seconds = 0.0);
        r
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.data_passes,
                r.wall_seconds,
                opt(r.rel_err),
                opt(r.psnr),
                opt(r.ssim),
                r.prox_calls,
                opt(r.objective)
            );
        }
        out
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Whitespace-separated `wall_seconds rel_err data_passes` columns for
    /// plotting error-versus-time curves.
    pub fn to_gnuplot(&self) -> String {
        let mut out = String::from("# wall_seconds rel_err data_passes\n");
        for r in &self.rows {
            let _ = writeln!(out, "{} {} {}", r.wall_seconds, r.rel_err.map_or("NaN".into(), |v| v.to_string()), r.data_passes);
        }
        out
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Final iterate and its log.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub x: ImageGrid,
    pub record: RunRecord,
}
