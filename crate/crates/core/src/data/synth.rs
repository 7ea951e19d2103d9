use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::SeededRng;

const ACTIVITY_NAMES: &[&str] = &[
    "Sleep",
    "Cook",
    "Eat",
    "Wash_Dishes",
    "Relax",
    "Work",
    "Bathe",
    "Leave_Home",
    "Bed_to_Toilet",
    "Enter_Home",
];

/// Synthetic apartment: a first-order Markov chain over activities, each
/// emitting its preferred sensors and, at the noise rate, any sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_activities: usize,
    pub n_sensors: usize,
    pub n_events: usize,
    /// Preferred sensors per activity. Disjoint across activities when
    /// `sensors_per_activity * n_activities <= n_sensors`.
    pub sensors_per_activity: usize,
    /// Segment length in events, uniform on `[min_dwell, max_dwell]`.
    pub min_dwell: usize,
    pub max_dwell: usize,
    /// Probability that an event comes from a uniformly random sensor.
    pub noise: f64,
    /// Row-stochastic `C × C` matrix; uniform over other activities if absent.
    pub transition: Option<Vec<Vec<f64>>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_activities: 5,
            n_sensors: 20,
            n_events: 20_000,
            sensors_per_activity: 3,
            min_dwell: 24,
            max_dwell: 96,
            noise: 0.1,
            transition: None,
        }
    }
}

impl SynthConfig {
    /// Noise-free set where each activity owns exactly one sensor, sized
    /// to give `n_windows` windows of length `window` at `stride`.
    pub fn separable(n_windows: usize, window: usize, stride: usize) -> Self {
        Self {
            n_events: (n_windows.max(1) - 1) * stride + window,
            sensors_per_activity: 1,
            noise: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::SynthConfig(m));
        let (c, v) = (self.n_activities, self.n_sensors);
        if c < 2 {
            return bad(format!("need at least 2 activities, got {c}"));
        }
        if v < c {
            return bad(format!("need at least as many sensors as activities ({v} < {c})"));
        }
        if self.n_events == 0 {
            return bad("n_events must be positive".into());
        }
        if self.sensors_per_activity == 0 || self.sensors_per_activity > v {
            return bad(format!("sensors_per_activity must be in 1..={v}"));
        }
        if self.min_dwell == 0 || self.min_dwell > self.max_dwell {
            return bad(format!("bad dwell range [{}, {}]", self.min_dwell, self.max_dwell));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad(format!("noise {} outside [0, 1]", self.noise));
        }
        if let Some(m) = &self.transition {
            if m.len() != c || m.iter().any(|r| r.len() != c) {
                return bad(format!("transition matrix must be {c}x{c}"));
            }
            for (i, row) in m.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return bad(format!("transition row {i} is not a distribution"));
                }
            }
        }
        Ok(())
    }

    pub fn activity_names(&self) -> Vec<String> {
        (0..self.n_activities)
            .map(|i| match ACTIVITY_NAMES.get(i) {
                Some(n) => n.to_string(),
                None => format!("Activity_{i}"),
            })
            .collect()
    }

    pub fn sensor_names(&self) -> Vec<String> {
        (0..self.n_sensors).map(sensor_name).collect()
    }

    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        let c = self.n_activities;
        self.transition.clone().unwrap_or_else(|| {
            (0..c)
                .map(|i| {
                    (0..c)
                        .map(|j| if i == j { 0.0 } else { 1.0 / (c - 1) as f64 })
                        .collect()
                })
                .collect()
        })
    }
}

/// Every fifth sensor is a door contact; the rest are motion detectors.
fn sensor_name(i: usize) -> String {
    if i % 5 == 4 {
        format!("D{:03}", i + 1)
    } else {
        format!("M{:03}", i + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub config: SynthConfig,
    pub classes: Vec<String>,
    pub transition: Vec<Vec<f64>>,
    pub preferred_sensors: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    /// Event log, one line per event.
    pub text: String,
    /// Ground-truth activity index per event (index into `manifest.classes`).
    pub labels: Vec<usize>,
    /// Activity of each consecutive segment, in order.
    pub segments: Vec<usize>,
    pub manifest: SynthManifest,
}

pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<SynthOutput, DataError> {
    config.validate()?;
    let mut rng = SeededRng::seed_from_u64(seed);
    let (c, v, k) = (config.n_activities, config.n_sensors, config.sensors_per_activity);
    let names = config.activity_names();
    let sensors = config.sensor_names();
    let transition = config.transition_matrix();

    let mut order: Vec<usize> = (0..v).collect();
    order.shuffle(&mut rng);
    let preferred: Vec<Vec<usize>> = (0..c)
        .map(|a| {
            if k * c <= v {
                order[a * k..(a + 1) * k].to_vec()
            } else {
                rand::seq::index::sample(&mut rng, v, k).into_vec()
            }
        })
        .collect();
    let rows = transition
        .iter()
        .map(|r| WeightedIndex::new(r).map_err(|e| DataError::SynthConfig(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;

    let mut state = vec![false; v];
    let mut time = NaiveDate::from_ymd_opt(2010, 1, 4)
        .and_then(|d| d.and_hms_opt(8, 0, 0))
        .expect("valid start");
    let mut text = String::new();
    let mut labels = Vec::with_capacity(config.n_events);
    let mut segments = Vec::new();
    let mut activity = rng.gen_range(0..c);

    while labels.len() < config.n_events {
        if !segments.is_empty() {
            activity = rows[activity].sample(&mut rng);
        }
        segments.push(activity);
        let dwell = rng
            .gen_range(config.min_dwell..=config.max_dwell)
            .min(config.n_events - labels.len());
        for i in 0..dwell {
            let s = if rng.gen_bool(config.noise) {
                rng.gen_range(0..v)
            } else {
                *preferred[activity].choose(&mut rng).expect("non-empty")
            };
            state[s] = !state[s];
            let value = match (s % 5 == 4, state[s]) {
                (true, true) => "OPEN",
                (true, false) => "CLOSE",
                (false, true) => "ON",
                (false, false) => "OFF",
            };
            time = advance(time, &mut rng);
            let annotation = match (dwell, i) {
                (1, _) => format!(" {}", names[activity]),
                (_, 0) => format!(" {} begin", names[activity]),
                (d, i) if i == d - 1 => format!(" {} end", names[activity]),
                _ => String::new(),
            };
            text.push_str(&format!(
                "{} {} {value}{annotation}\n",
                time.format("%Y-%m-%d %H:%M:%S%.6f"),
                sensors[s]
            ));
            labels.push(activity);
        }
    }

    let manifest = SynthManifest {
        seed,
        config: config.clone(),
        classes: names,
        transition,
        preferred_sensors: preferred
            .iter()
            .map(|p| p.iter().map(|&s| sensors[s].clone()).collect())
            .collect(),
    };
    Ok(SynthOutput {
        text,
        labels,
        segments,
        manifest,
    })
}

fn advance(t: NaiveDateTime, rng: &mut SeededRng) -> NaiveDateTime {
    t + Duration::microseconds(rng.gen_range(500_000..60_000_000))
}
