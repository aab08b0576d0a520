//! Per-cycle run records and their CSV encoding.
//!
//! Floats are written with 17 significant digits so they parse back to the
//! identical `f64`; lines end in `\n`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const RUN_HEADER: &str = "cycle,time,rmse,trace_p,kappa,reward,n_j,j_indices,switched";

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub cycle: usize,
    pub time: f64,
    /// `||x_ref - mean||`; `+inf` flags a diverged run.
    pub rmse: f64,
    pub trace_p: f64,
    pub kappa: f64,
    pub reward: f64,
    pub n_j: usize,
    pub j_indices: Vec<usize>,
    pub switched: bool,
}

/// 17 significant digits, round-trip exact.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

impl RunRecord {
    pub fn to_csv_row(&self) -> String {
        let j: Vec<String> = self.j_indices.iter().map(|i| i.to_string()).collect();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.cycle,
            fmt_f64(self.time),
            fmt_f64(self.rmse),
            fmt_f64(self.trace_p),
            fmt_f64(self.kappa),
            fmt_f64(self.reward),
            self.n_j,
            j.join(";"),
            u8::from(self.switched),
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let bad = |what: &str| Error::invalid(format!("bad run row `{line}`: {what}"));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad("expected 9 fields"));
        }
        let float = |s: &str, name: &str| s.parse::<f64>().map_err(|_| bad(name));
        let int = |s: &str, name: &str| s.parse::<usize>().map_err(|_| bad(name));
        let j_indices = if f[7].is_empty() {
            Vec::new()
        } else {
            f[7].split(';').map(|s| int(s, "j_indices")).collect::<Result<_>>()?
        };
        Ok(RunRecord {
            cycle: int(f[0], "cycle")?,
            time: float(f[1], "time")?,
            rmse: float(f[2], "rmse")?,
            trace_p: float(f[3], "trace_p")?,
            kappa: float(f[4], "kappa")?,
            reward: float(f[5], "reward")?,
            n_j: int(f[6], "n_j")?,
            j_indices,
            switched: match f[8] {
                "1" => true,
                "0" => false,
                _ => return Err(bad("switched")),
            },
        })
    }
}

pub fn render_csv(records: &[RunRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(RUN_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.to_csv_row());
        s.push('\n');
    }
    s
}

pub fn parse_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(RUN_HEADER) => {}
        other => return Err(Error::invalid(format!("unexpected run header {other:?}"))),
    }
    lines.map(RunRecord::from_csv_row).collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

pub fn emit_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    write_text(path, &render_csv(records))
}

/// Plain table with a header and preformatted cells.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}
