//! Delimited-text curve files: `step,lr,loss` rows with a header, written
//! with 17 significant digits so doubles round-trip exactly.

use crate::law::LossCurve;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CurveFileError {
    #[error("missing or malformed header, expected \"step,lr,loss\", got {0:?}")]
    BadHeader(String),
    #[error("row {row}: expected 3 comma-separated fields, got {got}")]
    BadFieldCount { row: usize, got: usize },
    #[error("row {row}: unparseable {field}: {value:?}")]
    BadValue {
        row: usize,
        field: &'static str,
        value: String,
    },
    #[error("non-monotone step at row {row}: {step} follows {prev}")]
    NonMonotoneStep { row: usize, step: usize, prev: usize },
    #[error("duplicate step at row {row}: {step}")]
    DuplicateStep { row: usize, step: usize },
    #[error("non-positive loss at row {row}: {loss}")]
    NonPositiveLoss { row: usize, loss: f64 },
    #[error("negative lr at row {row}: {lr}")]
    NegativeLr { row: usize, lr: f64 },
    #[error("file has no data rows")]
    Empty,
}

/// Parsed rows of a curve file.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFile {
    pub steps: Vec<usize>,
    pub lrs: Vec<f64>,
    pub losses: Vec<f64>,
}

impl CurveFile {
    pub fn curve(&self) -> LossCurve {
        LossCurve {
            steps: self.steps.clone(),
            losses: self.losses.clone(),
        }
    }
}

pub fn parse_curve(text: &str) -> Result<CurveFile, CurveFileError> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((i, line)) if line.trim().is_empty() => {
                if i > 0 {
                    break line;
                }
            }
            Some((_, line)) => break line,
            None => return Err(CurveFileError::BadHeader(String::new())),
        }
    };
    let normalized: Vec<String> = header
        .split(',')
        .map(|s| s.trim().to_ascii_lowercase())
        .collect();
    if normalized != ["step", "lr", "loss"] {
        return Err(CurveFileError::BadHeader(header.to_string()));
    }
    let mut steps = Vec::new();
    let mut lrs = Vec::new();
    let mut losses = Vec::new();
    let mut prev_step: Option<usize> = None;
    for (i, line) in lines {
        let row = i + 1; // 1-based, header is row 1
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(CurveFileError::BadFieldCount {
                row,
                got: fields.len(),
            });
        }
        let step: usize = fields[0].parse().map_err(|_| CurveFileError::BadValue {
            row,
            field: "step",
            value: fields[0].to_string(),
        })?;
        let lr: f64 = fields[1].parse().map_err(|_| CurveFileError::BadValue {
            row,
            field: "lr",
            value: fields[1].to_string(),
        })?;
        let loss: f64 = fields[2].parse().map_err(|_| CurveFileError::BadValue {
            row,
            field: "loss",
            value: fields[2].to_string(),
        })?;
        if let Some(prev) = prev_step {
            if step == prev {
                return Err(CurveFileError::DuplicateStep { row, step });
            }
            if step < prev {
                return Err(CurveFileError::NonMonotoneStep {
                    row,
                    step,
                    prev,
                });
            }
        }
        if !(loss > 0.0) || !loss.is_finite() {
            return Err(CurveFileError::NonPositiveLoss { row, loss });
        }
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(CurveFileError::NegativeLr { row, lr });
        }
        prev_step = Some(step);
        steps.push(step);
        lrs.push(lr);
        losses.push(loss);
    }
    if steps.is_empty() {
        return Err(CurveFileError::Empty);
    }
    Ok(CurveFile { steps, lrs, losses })
}

pub fn read_curve(path: &Path) -> Result<CurveFile, std::io::Error> {
    let text = std::fs::read_to_string(path)?;
    parse_curve(&text).map_err(|e| {
        std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("{}: {e}", path.display()),
        )
    })
}

pub fn render_curve(steps: &[usize], lrs: &[f64], losses: &[f64]) -> String {
    let mut out = String::from("step,lr,loss\n");
    for ((&s, &lr), &loss) in steps.iter().zip(lrs).zip(losses) {
        let _ = writeln!(out, "{s},{lr:.16e},{loss:.16e}");
    }
    out
}

pub fn write_curve(
    path: &Path,
    steps: &[usize],
    lrs: &[f64],
    losses: &[f64],
) -> Result<(), std::io::Error> {
    std::fs::write(path, render_curve(steps, lrs, losses))
}

/// Two-column (step, value) table.
pub fn render_table(header: &str, rows: &[(usize, f64)]) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for &(s, v) in rows {
        let _ = writeln!(out, "{s},{v:.16e}");
    }
    out
}
