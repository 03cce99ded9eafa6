//! The `ftm-dataset v1` text format.
//!
//! Line-oriented, comma-separated, `\n` line endings, no quoting. A header
//! of `#`-prefixed lines is followed by measurement rows (`M`) each
//! immediately followed by its frame rows (`F`). Real values carry exactly
//! three decimals; absent optional values are empty cells. See
//! `docs/dataset-format.md` for the byte-level description.

use std::fmt::Write as _;
use std::path::Path;

use super::IoError;
use crate::measurement::{
    validate_measurement, Bandwidth, Dataset, FtmFrame, FtmMeasurement, Scenario, Timestamps,
};

pub const MAGIC_LINE: &str = "#ftm-dataset,v1";
pub const UNITS_LINE: &str = "#units,rtt=ns,distance=m,rssi=dBm,timestamps=ps";
pub const M_COLUMNS_LINE: &str = "#columns,M,idx,anchor_id,rtt_raw_ns,rtt_est_ns,dist_est_m,own_est_m,num_frames,bandwidth_mhz,true_distance_m";
pub const F_COLUMNS_LINE: &str = "#columns,F,midx,fidx,rssi_dbm,rtt_ns,t1_ps,t2_ps,t3_ps,t4_ps";

const M_FIELDS: usize = 10;
const F_FIELDS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReadOptions {
    /// Keep measurements that fail validation and report them as warnings.
    pub lenient: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    /// 1-based line, 0 for whole-file warnings.
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line == 0 {
            f.write_str(&self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadOutcome {
    pub dataset: Dataset,
    pub warnings: Vec<Warning>,
}

/// Three decimals, with negative zero written as `0.000`.
pub(crate) fn fmt_real(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

fn check_text(what: &str, s: &str) -> Result<(), IoError> {
    if s.contains([',', '\n', '\r']) || s.starts_with('#') {
        return Err(IoError::InvalidField(format!(
            "{what} `{s}` may not contain commas or line breaks or start with `#`"
        )));
    }
    Ok(())
}

pub fn format_dataset(d: &Dataset) -> Result<String, IoError> {
    check_text("dataset name", &d.name)?;
    let mut out = String::new();
    out.push_str(MAGIC_LINE);
    out.push('\n');
    let _ = writeln!(out, "#name,{}", d.name);
    let _ = writeln!(out, "#scenario,{}", d.scenario.as_str());
    let bw = match d.measurements.first() {
        None => "none".to_string(),
        Some(first) if d.measurements.iter().all(|m| m.bandwidth == first.bandwidth) => {
            first.bandwidth.mhz().to_string()
        }
        Some(_) => "mixed".to_string(),
    };
    let _ = writeln!(out, "#bandwidth,{bw}");
    out.push_str(UNITS_LINE);
    out.push('\n');
    out.push_str(M_COLUMNS_LINE);
    out.push('\n');
    out.push_str(F_COLUMNS_LINE);
    out.push('\n');
    for (i, m) in d.measurements.iter().enumerate() {
        check_text("anchor_id", &m.anchor_id)?;
        if m.anchor_id.is_empty() {
            return Err(IoError::InvalidField(format!("measurement {i}: empty anchor_id")));
        }
        let _ = writeln!(
            out,
            "M,{i},{},{},{},{},{},{},{},{}",
            m.anchor_id,
            fmt_real(m.rtt_raw),
            fmt_opt(m.rtt_est),
            fmt_opt(m.dist_est),
            fmt_opt(m.own_est),
            m.num_frames,
            m.bandwidth.mhz(),
            fmt_opt(m.true_distance),
        );
        for (j, f) in m.frames.iter().enumerate() {
            let ts = match f.timestamps {
                Some(t) => format!("{},{},{},{}", t.t1, t.t2, t.t3, t.t4),
                None => ",,,".into(),
            };
            let _ = writeln!(out, "F,{i},{j},{},{},{ts}", fmt_real(f.rssi), fmt_real(f.rtt));
        }
    }
    Ok(out)
}

pub fn write_dataset(d: &Dataset, path: &Path) -> Result<(), IoError> {
    let text = format_dataset(d)?;
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset, IoError> {
    read_dataset_with(path, ReadOptions::default()).map(|o| o.dataset)
}

pub fn read_dataset_with(path: &Path, opts: ReadOptions) -> Result<ReadOutcome, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_dataset(&text, opts)
}

struct Cells<'a> {
    line: usize,
    cells: Vec<&'a str>,
}

impl<'a> Cells<'a> {
    fn err(&self, col: usize, msg: impl Into<String>) -> IoError {
        IoError::Parse {
            line: self.line,
            column: Some(col + 1),
            message: msg.into(),
        }
    }

    fn real(&self, col: usize, name: &str) -> Result<f64, IoError> {
        let s = self.cells[col];
        let v: f64 = s
            .parse()
            .map_err(|_| self.err(col, format!("{name}: `{s}` is not a number")))?;
        if !v.is_finite() {
            return Err(self.err(col, format!("{name}: non-finite value")));
        }
        Ok(v)
    }

    fn opt_real(&self, col: usize, name: &str) -> Result<Option<f64>, IoError> {
        if self.cells[col].is_empty() {
            Ok(None)
        } else {
            self.real(col, name).map(Some)
        }
    }

    fn uint(&self, col: usize, name: &str) -> Result<u64, IoError> {
        let s = self.cells[col];
        s.parse()
            .map_err(|_| self.err(col, format!("{name}: `{s}` is not a non-negative integer")))
    }
}

struct Pending {
    line: usize,
    m: FtmMeasurement,
}

pub fn parse_dataset(text: &str, opts: ReadOptions) -> Result<ReadOutcome, IoError> {
    let parse_err = |line: usize, message: String| IoError::Parse {
        line,
        column: None,
        message,
    };
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l)).peekable();

    let (_, first) = lines.next().unwrap_or((1, ""));
    if first != MAGIC_LINE {
        if let Some(v) = first.strip_prefix("#ftm-dataset,") {
            return Err(IoError::UnsupportedVersion(v.to_string()));
        }
        return Err(parse_err(1, "missing `#ftm-dataset,v1` header".into()));
    }

    let mut name = None;
    let mut scenario = None;
    let mut declared_bw = None;
    let mut units = false;
    let mut columns = 0;
    while let Some(&(no, line)) = lines.peek() {
        let Some(rest) = line.strip_prefix('#') else { break };
        lines.next();
        let (key, value) = rest.split_once(',').unwrap_or((rest, ""));
        match key {
            "name" => name = Some(value.to_string()),
            "scenario" => {
                scenario = Some(
                    value
                        .parse::<Scenario>()
                        .map_err(|e| parse_err(no, e.to_string()))?,
                )
            }
            "bandwidth" => {
                declared_bw = Some(match value {
                    "none" | "mixed" => None,
                    v => Some(
                        v.parse::<u32>()
                            .ok()
                            .and_then(Bandwidth::from_mhz)
                            .ok_or_else(|| parse_err(no, format!("bad bandwidth `{v}`")))?,
                    ),
                })
            }
            "units" => {
                if line != UNITS_LINE {
                    return Err(IoError::UnitMismatch {
                        field: "header".into(),
                        unit: value.into(),
                    });
                }
                units = true;
            }
            "columns" => {
                let want = if columns == 0 { M_COLUMNS_LINE } else { F_COLUMNS_LINE };
                if columns >= 2 || line != want {
                    return Err(parse_err(no, "unexpected column declaration".into()));
                }
                columns += 1;
            }
            other => return Err(parse_err(no, format!("unknown header key `{other}`"))),
        }
    }
    let name = name.ok_or_else(|| parse_err(1, "header lacks `#name`".into()))?;
    let scenario = scenario.ok_or_else(|| parse_err(1, "header lacks `#scenario`".into()))?;
    let declared_bw = declared_bw.ok_or_else(|| parse_err(1, "header lacks `#bandwidth`".into()))?;
    if !units || columns != 2 {
        return Err(parse_err(1, "header lacks `#units` or `#columns` lines".into()));
    }

    let mut dataset = Dataset::new(name, scenario);
    let mut warnings = Vec::new();
    let mut pending: Option<Pending> = None;
    let finish = |p: Pending, ds: &mut Dataset, warnings: &mut Vec<Warning>| -> Result<(), IoError> {
        let violations = validate_measurement(&p.m);
        if let Some(&v) = violations.first() {
            if !opts.lenient {
                return Err(IoError::ValidationFailed {
                    line: p.line,
                    violation: v,
                });
            }
            for v in violations {
                warnings.push(Warning {
                    line: p.line,
                    message: format!("measurement kept despite {v}"),
                });
            }
        }
        ds.measurements.push(p.m);
        Ok(())
    };

    let mut ended = false;
    for (no, line) in lines {
        if line.is_empty() {
            ended = true;
            continue;
        }
        if ended {
            return Err(parse_err(no - 1, "blank line inside data".into()));
        }
        let row = Cells {
            line: no,
            cells: line.split(',').collect(),
        };
        match row.cells[0] {
            "M" => {
                if row.cells.len() != M_FIELDS {
                    return Err(parse_err(no, format!("expected {M_FIELDS} fields, got {}", row.cells.len())));
                }
                if let Some(p) = pending.take() {
                    finish(p, &mut dataset, &mut warnings)?;
                }
                let idx = row.uint(1, "idx")? as usize;
                if idx != dataset.measurements.len() {
                    return Err(row.err(1, format!("measurement index {idx} out of sequence")));
                }
                let anchor_id = row.cells[2];
                if anchor_id.is_empty() {
                    return Err(row.err(2, "empty anchor_id"));
                }
                let bw_mhz = row.uint(8, "bandwidth_mhz")?;
                let bandwidth = u32::try_from(bw_mhz)
                    .ok()
                    .and_then(Bandwidth::from_mhz)
                    .ok_or_else(|| row.err(8, format!("unsupported bandwidth {bw_mhz}")))?;
                if declared_bw.is_some_and(|b| b != bandwidth) {
                    return Err(row.err(8, "bandwidth differs from header declaration"));
                }
                pending = Some(Pending {
                    line: no,
                    m: FtmMeasurement {
                        anchor_id: anchor_id.to_string(),
                        rtt_raw: row.real(3, "rtt_raw_ns")?,
                        rtt_est: row.opt_real(4, "rtt_est_ns")?,
                        dist_est: row.opt_real(5, "dist_est_m")?,
                        own_est: row.opt_real(6, "own_est_m")?,
                        num_frames: row.uint(7, "num_frames")? as usize,
                        frames: Vec::new(),
                        bandwidth,
                        true_distance: row.opt_real(9, "true_distance_m")?,
                    },
                });
            }
            "F" => {
                if row.cells.len() != F_FIELDS {
                    return Err(parse_err(no, format!("expected {F_FIELDS} fields, got {}", row.cells.len())));
                }
                let midx = row.uint(1, "midx")? as usize;
                let Some(p) = pending.as_mut().filter(|_| midx == dataset.measurements.len()) else {
                    return Err(row.err(1, format!("frame row references measurement {midx}, which is not the current one")));
                };
                let fidx = row.uint(2, "fidx")? as usize;
                if fidx != p.m.frames.len() {
                    return Err(row.err(2, format!("frame index {fidx} out of sequence")));
                }
                let ts_cells = &row.cells[5..9];
                let timestamps = if ts_cells.iter().all(|c| c.is_empty()) {
                    None
                } else {
                    Some(Timestamps {
                        t1: row.uint(5, "t1_ps")?,
                        t2: row.uint(6, "t2_ps")?,
                        t3: row.uint(7, "t3_ps")?,
                        t4: row.uint(8, "t4_ps")?,
                    })
                };
                p.m.frames.push(FtmFrame {
                    rssi: row.real(3, "rssi_dbm")?,
                    rtt: row.real(4, "rtt_ns")?,
                    timestamps,
                });
            }
            other => return Err(row.err(0, format!("unknown row kind `{other}`"))),
        }
    }
    if !text.ends_with('\n') {
        return Err(parse_err(text.split('\n').count(), "file must end with a newline".into()));
    }
    if let Some(p) = pending.take() {
        finish(p, &mut dataset, &mut warnings)?;
    }
    if dataset.is_empty() {
        warnings.push(Warning {
            line: 0,
            message: "dataset has no measurements".into(),
        });
    }
    Ok(ReadOutcome { dataset, warnings })
}
