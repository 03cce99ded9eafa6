//! Named scenario presets shipped with the crate, plus loading of user
//! preset files in the same TOML layout.

use serde::Deserialize;
use std::path::Path;

use super::{ChannelModel, ScenarioSpec};
use crate::correction::PiecewiseLinearMap;
use crate::measurement::{Bandwidth, Scenario};
use crate::protocol::ExchangeConfig;

const BUILTIN: &[(&str, &str)] = &[
    ("indoor-40", include_str!("../../presets/indoor-40.toml")),
    ("outdoor-20", include_str!("../../presets/outdoor-20.toml")),
    ("outdoor-40", include_str!("../../presets/outdoor-40.toml")),
];

#[derive(Debug, thiserror::Error)]
pub enum PresetError {
    #[error("unknown preset `{0}` (built-in: indoor-40, outdoor-20, outdoor-40)")]
    Unknown(String),
    #[error("preset parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid preset: {0}")]
    Invalid(String),
    #[error("cannot read preset file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetFile {
    name: String,
    scenario: Scenario,
    bandwidth: Bandwidth,
    dwell: usize,
    anchors: Vec<Vec<f64>>,
    #[serde(default)]
    tags: Vec<Vec<f64>>,
    tag_line: Option<TagLine>,
    channel: ChannelModel,
    #[serde(default)]
    exchange: ExchangeConfig,
    vendor_map: Option<PiecewiseLinearMap>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TagLine {
    start: Vec<f64>,
    end: Vec<f64>,
    points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub spec: ScenarioSpec,
    /// Original TOML text, kept for hashing and provenance.
    pub source: String,
}

impl Preset {
    pub fn from_toml_str(text: &str) -> Result<Self, PresetError> {
        let file: PresetFile = toml::from_str(text)?;
        let anchors = file
            .anchors
            .iter()
            .map(|p| point(p))
            .collect::<Result<Vec<_>, _>>()?;
        let mut tags = file
            .tags
            .iter()
            .map(|p| point(p))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(line) = &file.tag_line {
            let (a, b) = (point(&line.start)?, point(&line.end)?);
            if line.points == 0 {
                return Err(PresetError::Invalid("tag_line.points must be >= 1".into()));
            }
            for i in 0..line.points {
                let t = if line.points == 1 {
                    0.0
                } else {
                    i as f64 / (line.points - 1) as f64
                };
                tags.push([0, 1, 2].map(|k| a[k] + t * (b[k] - a[k])));
            }
        }
        let spec = ScenarioSpec {
            name: file.name,
            scenario: file.scenario,
            anchor_positions: anchors,
            tag_positions: tags,
            bandwidth: file.bandwidth,
            dwell: file.dwell,
            channel: file.channel,
            exchange: ExchangeConfig {
                bandwidth: file.bandwidth,
                ..file.exchange
            },
            vendor_map: file.vendor_map,
        };
        spec.validate()
            .map_err(|e| PresetError::Invalid(e.to_string()))?;
        Ok(Preset {
            spec,
            source: text.to_string(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, PresetError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.spec.channel.rng_seed = seed;
        self
    }
}

fn point(p: &[f64]) -> Result<[f64; 3], PresetError> {
    match *p {
        [x, y] => Ok([x, y, 0.0]),
        [x, y, z] => Ok([x, y, z]),
        _ => Err(PresetError::Invalid(format!(
            "positions need 2 or 3 coordinates, got {}",
            p.len()
        ))),
    }
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

/// Looks up a built-in preset by name.
pub fn preset(name: &str) -> Result<Preset, PresetError> {
    let (_, text) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| PresetError::Unknown(name.to_string()))?;
    Preset::from_toml_str(text)
}
