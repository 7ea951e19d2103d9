use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::event::SensorEvent;
use super::label::{LabelledEvent, OTHER};

/// Which events contribute channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VocabOptions {
    /// Keep only motion sensors in their `ON` state.
    #[serde(default)]
    pub motion_only: bool,
    /// Include numeric sensors, binned per sensor into quartiles.
    #[serde(default)]
    pub include_numeric: bool,
}

/// A one-hot channel: a sensor paired with a state or quantile bin.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Channel {
    pub sensor: String,
    pub value: String,
}

pub const NUMERIC_BINS: usize = 4;

/// Channel and label index maps.
///
/// Channels are sorted lexicographically by `(sensor, value)` before
/// indexing; labels are sorted with `Other` pinned at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorVocab {
    pub channels: Vec<Channel>,
    pub labels: Vec<String>,
    pub options: VocabOptions,
    /// Quartile cut points per numeric sensor.
    #[serde(default)]
    pub numeric_cuts: BTreeMap<String, Vec<f64>>,
    #[serde(skip)]
    index: BTreeMap<Channel, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lookup {
    Channel(usize),
    /// Excluded by the vocabulary options.
    Skipped,
    Unknown,
}

impl SensorVocab {
    pub fn build(events: &[LabelledEvent], options: VocabOptions) -> Self {
        let mut numeric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        if options.include_numeric && !options.motion_only {
            for e in events {
                if let Ok(v) = e.event.value.parse::<f64>() {
                    numeric.entry(e.event.sensor_id.clone()).or_default().push(v);
                }
            }
        }
        let numeric_cuts = numeric
            .into_iter()
            .map(|(sensor, mut values)| {
                values.sort_by(f64::total_cmp);
                let cuts = (1..NUMERIC_BINS)
                    .map(|q| values[(q * values.len() / NUMERIC_BINS).min(values.len() - 1)])
                    .collect();
                (sensor, cuts)
            })
            .collect();

        let mut vocab = Self {
            channels: Vec::new(),
            labels: Vec::new(),
            options,
            numeric_cuts,
            index: BTreeMap::new(),
        };
        let channels: BTreeSet<Channel> = events.iter().filter_map(|e| vocab.channel_key(&e.event)).collect();
        let labels: BTreeSet<&str> = events
            .iter()
            .map(|e| e.activity.as_str())
            .filter(|a| *a != OTHER)
            .collect();
        vocab.channels = channels.into_iter().collect();
        vocab.labels = std::iter::once(OTHER.to_string())
            .chain(labels.into_iter().map(String::from))
            .collect();
        vocab.reindex();
        vocab
    }

    /// Rebuilds the lookup table; call after deserializing.
    pub fn reindex(&mut self) {
        self.index = self.channels.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, activity: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == activity)
    }

    fn channel_key(&self, e: &SensorEvent) -> Option<Channel> {
        let numeric = e.value.parse::<f64>().ok();
        if self.options.motion_only && !(e.is_motion() && e.value == "ON") {
            return None;
        }
        let value = match numeric {
            Some(v) => {
                if !self.options.include_numeric {
                    return None;
                }
                let cuts = self.numeric_cuts.get(&e.sensor_id)?;
                format!("Q{}", cuts.iter().filter(|&&c| v > c).count())
            }
            None => e.value.clone(),
        };
        Some(Channel {
            sensor: e.sensor_id.clone(),
            value,
        })
    }

    pub fn lookup(&self, e: &SensorEvent) -> Lookup {
        let is_numeric = e.is_numeric();
        if self.options.motion_only && !(e.is_motion() && e.value == "ON") {
            return Lookup::Skipped;
        }
        if is_numeric && !self.options.include_numeric {
            return Lookup::Skipped;
        }
        if is_numeric && !self.numeric_cuts.contains_key(&e.sensor_id) {
            return Lookup::Unknown;
        }
        match self.channel_key(e).and_then(|c| self.index.get(&c).copied()) {
            Some(i) => Lookup::Channel(i),
            None => Lookup::Unknown,
        }
    }

    /// Sensor ids known to the vocabulary.
    pub fn sensors(&self) -> BTreeSet<&str> {
        self.channels.iter().map(|c| c.sensor.as_str()).collect()
    }
}
