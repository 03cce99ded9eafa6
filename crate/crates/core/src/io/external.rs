//! Adapter from foreign delimited logs to [`Dataset`].
//!
//! A TOML [`MappingSpec`] names the source column for each field and the
//! unit it is stored in. Rows sharing a value of `measurement_key` (when
//! consecutive) become the frames of one measurement; without a key each row
//! is a measurement with a single frame.

use serde::Deserialize;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::dataset::{parse_dataset, ReadOptions, ReadOutcome, Warning};
use super::IoError;
use crate::measurement::{
    mean, validate_measurement, Bandwidth, Dataset, FtmFrame, FtmMeasurement, Scenario, Timestamps,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceFormat {
    #[default]
    Csv,
    /// Already in the native format; read as is.
    FtmV1,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingSpec {
    #[serde(default)]
    pub format: SourceFormat,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_scenario")]
    pub scenario: Scenario,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Used when no bandwidth column is mapped.
    #[serde(default = "default_bandwidth")]
    pub bandwidth: Bandwidth,
    /// Used when no anchor column is mapped.
    #[serde(default = "default_anchor")]
    pub default_anchor: String,
    pub measurement_key: Option<String>,
    /// Field name to source column name.
    #[serde(default)]
    pub columns: BTreeMap<String, String>,
    /// Field name to unit of the source column.
    #[serde(default)]
    pub units: BTreeMap<String, String>,
}

fn default_name() -> String {
    "imported".into()
}
fn default_scenario() -> Scenario {
    Scenario::Test
}
fn default_delimiter() -> char {
    ','
}
fn default_bandwidth() -> Bandwidth {
    Bandwidth::Mhz40
}
fn default_anchor() -> String {
    "A0".into()
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Text,
    Time,
    Distance,
    Power,
    Timestamp,
    Bandwidth,
}

const FIELDS: &[(&str, Kind)] = &[
    ("anchor_id", Kind::Text),
    ("rtt_raw", Kind::Time),
    ("rtt_est", Kind::Time),
    ("dist_est", Kind::Distance),
    ("own_est", Kind::Distance),
    ("true_distance", Kind::Distance),
    ("bandwidth", Kind::Bandwidth),
    ("rssi", Kind::Power),
    ("rtt", Kind::Time),
    ("t1", Kind::Timestamp),
    ("t2", Kind::Timestamp),
    ("t3", Kind::Timestamp),
    ("t4", Kind::Timestamp),
];

fn kind_of(field: &str) -> Option<Kind> {
    FIELDS.iter().find(|(f, _)| *f == field).map(|(_, k)| *k)
}

/// Factor converting the given unit to the native unit of `kind`.
fn unit_factor(kind: Kind, unit: &str) -> Option<f64> {
    match (kind, unit) {
        (Kind::Time, "ps") => Some(1e-3),
        (Kind::Time, "ns") => Some(1.0),
        (Kind::Time, "us") => Some(1e3),
        (Kind::Distance, "mm") => Some(1e-3),
        (Kind::Distance, "cm") => Some(1e-2),
        (Kind::Distance, "m") => Some(1.0),
        (Kind::Power, "dBm") => Some(1.0),
        (Kind::Timestamp, "ps") => Some(1.0),
        (Kind::Timestamp, "ns") => Some(1e3),
        (Kind::Bandwidth, "MHz") => Some(1.0),
        _ => None,
    }
}

impl MappingSpec {
    /// Reads `ftm-v1` files unchanged.
    pub fn native() -> Self {
        MappingSpec {
            format: SourceFormat::FtmV1,
            name: default_name(),
            scenario: default_scenario(),
            delimiter: ',',
            bandwidth: default_bandwidth(),
            default_anchor: default_anchor(),
            measurement_key: None,
            columns: BTreeMap::new(),
            units: BTreeMap::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| IoError::Config(format!("mapping: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    fn factors(&self) -> Result<HashMap<&str, f64>, IoError> {
        let mut out = HashMap::new();
        for (field, unit) in &self.units {
            let kind = kind_of(field).ok_or_else(|| IoError::UnitMismatch {
                field: field.clone(),
                unit: unit.clone(),
            })?;
            let f = unit_factor(kind, unit).ok_or_else(|| IoError::UnitMismatch {
                field: field.clone(),
                unit: unit.clone(),
            })?;
            out.insert(field.as_str(), f);
        }
        for field in self.columns.keys() {
            if kind_of(field).is_none() {
                return Err(IoError::Config(format!("unknown mapped field `{field}`")));
            }
        }
        Ok(out)
    }
}

struct Row {
    line: usize,
    key: Option<String>,
    values: HashMap<&'static str, String>,
}

pub fn import_external(path: &Path, spec: &MappingSpec, opts: ReadOptions) -> Result<ReadOutcome, IoError> {
    if spec.format == SourceFormat::FtmV1 {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        return parse_dataset(&text, opts);
    }
    let file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    import_reader(file, spec, opts)
}

pub fn import_reader(reader: impl std::io::Read, spec: &MappingSpec, opts: ReadOptions) -> Result<ReadOutcome, IoError> {
    let factors = spec.factors()?;
    if !spec.columns.contains_key("rtt_raw") && !spec.columns.contains_key("rtt") {
        return Err(IoError::MissingRequiredColumn("rtt_raw".into()));
    }
    if !spec.delimiter.is_ascii() {
        return Err(IoError::Config("delimiter must be an ASCII character".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(spec.delimiter as u8)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let csv_err = |e: csv::Error| IoError::Parse {
        line: e.position().map_or(0, |p| p.line() as usize),
        column: None,
        message: e.to_string(),
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let index = |name: &str| -> Result<usize, IoError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::MissingRequiredColumn(name.to_string()))
    };
    let mut cols: Vec<(&'static str, usize)> = Vec::new();
    for (field, _) in FIELDS {
        if let Some(src) = spec.columns.get(*field) {
            cols.push((field, index(src)?));
        }
    }
    let key_col = spec.measurement_key.as_deref().map(index).transpose()?;

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let values = cols
            .iter()
            .filter_map(|(f, i)| {
                let v = rec.get(*i).unwrap_or("");
                (!v.is_empty()).then(|| (*f, v.to_string()))
            })
            .collect();
        rows.push(Row {
            line,
            key: key_col.map(|i| rec.get(i).unwrap_or("").to_string()),
            values,
        });
    }

    let mut dataset = Dataset::new(spec.name.clone(), spec.scenario);
    let mut warnings = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let mut end = start + 1;
        while end < rows.len() && rows[start].key.is_some() && rows[end].key == rows[start].key {
            end += 1;
        }
        let group = &rows[start..end];
        let m = build_measurement(group, spec, &factors)?;
        let violations = validate_measurement(&m);
        if let Some(&v) = violations.first() {
            if !opts.lenient {
                return Err(IoError::ValidationFailed {
                    line: group[0].line,
                    violation: v,
                });
            }
            warnings.extend(violations.iter().map(|v| Warning {
                line: group[0].line,
                message: format!("measurement kept despite {v}"),
            }));
        }
        dataset.measurements.push(m);
        start = end;
    }
    if dataset.is_empty() {
        warnings.push(Warning {
            line: 0,
            message: "no rows imported".into(),
        });
    }
    Ok(ReadOutcome { dataset, warnings })
}

fn build_measurement(
    group: &[Row],
    spec: &MappingSpec,
    factors: &HashMap<&str, f64>,
) -> Result<FtmMeasurement, IoError> {
    let first = &group[0];
    let num = |row: &Row, field: &'static str| -> Result<Option<f64>, IoError> {
        let Some(s) = row.values.get(field) else {
            return Ok(None);
        };
        let v: f64 = s.parse().map_err(|_| IoError::Parse {
            line: row.line,
            column: None,
            message: format!("{field}: `{s}` is not a number"),
        })?;
        Ok(Some(v * factors.get(field).copied().unwrap_or(1.0)))
    };
    let has_frames = spec.columns.contains_key("rssi") || spec.columns.contains_key("rtt");
    let mut frames = Vec::new();
    if has_frames {
        for row in group {
            let rtt = match num(row, "rtt")? {
                Some(v) => v,
                None => num(row, "rtt_raw")?.ok_or_else(|| IoError::Parse {
                    line: row.line,
                    column: None,
                    message: "frame has no rtt value".into(),
                })?,
            };
            let rssi = num(row, "rssi")?.ok_or_else(|| IoError::Parse {
                line: row.line,
                column: None,
                message: "frame has no rssi value".into(),
            })?;
            let ts: Vec<Option<f64>> = ["t1", "t2", "t3", "t4"]
                .into_iter()
                .map(|f| num(row, f))
                .collect::<Result<_, _>>()?;
            let timestamps = match ts[..] {
                [Some(a), Some(b), Some(c), Some(d)] if [a, b, c, d].iter().all(|v| *v >= 0.0) => Some(Timestamps {
                    t1: a.round() as u64,
                    t2: b.round() as u64,
                    t3: c.round() as u64,
                    t4: d.round() as u64,
                }),
                _ => None,
            };
            frames.push(FtmFrame { rssi, rtt, timestamps });
        }
    }
    let rtt_raw = match num(first, "rtt_raw")? {
        Some(v) => v,
        None => mean(frames.iter().map(|f| f.rtt)).ok_or_else(|| IoError::Parse {
            line: first.line,
            column: None,
            message: "row has no rtt_raw value".into(),
        })?,
    };
    let bandwidth = match num(first, "bandwidth")? {
        Some(v) => Bandwidth::from_mhz(v.round() as u32).ok_or_else(|| IoError::Parse {
            line: first.line,
            column: None,
            message: format!("unsupported bandwidth {v}"),
        })?,
        None => spec.bandwidth,
    };
    Ok(FtmMeasurement {
        anchor_id: first
            .values
            .get("anchor_id")
            .cloned()
            .unwrap_or_else(|| spec.default_anchor.clone()),
        rtt_raw,
        rtt_est: num(first, "rtt_est")?,
        dist_est: num(first, "dist_est")?,
        own_est: num(first, "own_est")?,
        num_frames: frames.len(),
        frames,
        bandwidth,
        true_distance: num(first, "true_distance")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::dataset::format_dataset;
    use crate::measurement::Violation;

    fn spec(extra: &str) -> MappingSpec {
        MappingSpec::from_toml_str(&format!(
            r#"
name = "ext"
scenario = "outdoor"
measurement_key = "burst"
{extra}
[columns]
anchor_id = "mac"
rtt_raw = "rtt_raw"
rssi = "rssi"
rtt = "rtt"
true_distance = "dist"
[units]
rtt_raw = "us"
rtt = "us"
"#
        ))
        .unwrap()
    }

    const CSV: &str = "burst,mac,rtt_raw,rssi,rtt,dist\n\
1,aa:bb,0.0667,-50,0.0666,10\n\
1,aa:bb,0.0667,-52,0.0668,10\n\
2,aa:bb,0.1334,-60,0.1334,20\n";

    #[test]
    fn microseconds_scaled_to_ns() {
        let out = import_reader(CSV.as_bytes(), &spec(""), ReadOptions::default()).unwrap();
        let d = out.dataset;
        assert_eq!(d.len(), 2);
        assert!((d.measurements[0].rtt_raw - 66.7).abs() < 1e-9);
        assert_eq!(d.measurements[0].num_frames, 2);
        assert_eq!(d.measurements[0].mean_rssi(), Some(-51.0));
        assert_eq!(d.measurements[1].true_distance, Some(20.0));
        assert_eq!(d.measurements[0].anchor_id, "aa:bb");
    }

    #[test]
    fn missing_truth_ingests_but_yields_no_samples() {
        let mut s = spec("");
        s.columns.remove("true_distance");
        let d = import_reader(CSV.as_bytes(), &s, ReadOptions::default()).unwrap().dataset;
        assert_eq!(d.len(), 2);
        assert!(d.measurements.iter().all(|m| m.true_distance.is_none()));
        assert!(d.labeled_samples().is_empty());
    }

    #[test]
    fn missing_and_bad_columns() {
        let mut s = spec("");
        s.columns.insert("rssi".into(), "signal".into());
        assert!(matches!(
            import_reader(CSV.as_bytes(), &s, ReadOptions::default()),
            Err(IoError::MissingRequiredColumn(c)) if c == "signal"
        ));
        let mut s = spec("");
        s.columns.remove("rtt_raw");
        s.columns.remove("rtt");
        assert!(matches!(
            import_reader(CSV.as_bytes(), &s, ReadOptions::default()),
            Err(IoError::MissingRequiredColumn(_))
        ));
        let mut s = spec("");
        s.units.insert("true_distance".into(), "us".into());
        assert!(matches!(
            import_reader(CSV.as_bytes(), &s, ReadOptions::default()),
            Err(IoError::UnitMismatch { .. })
        ));
    }

    #[test]
    fn validation_uses_source_lines() {
        let csv = "burst,mac,rtt_raw,rssi,rtt,dist\n1,a,0.0667,-50,0.0666,10\n2,a,0.5,-50,0.1,10\n";
        let err = import_reader(csv.as_bytes(), &spec(""), ReadOptions::default()).unwrap_err();
        assert!(matches!(err, IoError::ValidationFailed { line: 3, violation: Violation::RttRawNotMean }), "{err:?}");
    }

    #[test]
    fn native_mapping_matches_reader() {
        let mut d = Dataset::new("n", Scenario::Indoor);
        d.measurements = import_reader(CSV.as_bytes(), &spec(""), ReadOptions::default())
            .unwrap()
            .dataset
            .measurements;
        for m in &mut d.measurements {
            m.rtt_raw = (m.rtt_raw * 1000.0).round() / 1000.0;
            for f in &mut m.frames {
                f.rtt = (f.rtt * 1000.0).round() / 1000.0;
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.ftm");
        std::fs::write(&p, format_dataset(&d).unwrap()).unwrap();
        let a = import_external(&p, &MappingSpec::native(), ReadOptions::default()).unwrap();
        let b = crate::io::read_dataset(&p).unwrap();
        assert_eq!(a.dataset, b);
        assert_eq!(b, d);
    }
}
