use std::collections::BTreeSet;

use chrono::NaiveDateTime;

use super::label::LabelledEvent;
use super::vocab::{Lookup, SensorVocab};
use super::DataError;
use crate::autodiff::Tensor;

pub const DEFAULT_WINDOW: usize = 32;
pub const DEFAULT_STRIDE: usize = 16;

/// `T` consecutive events as a one-hot `[T, V]` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWindow {
    pub x: Tensor,
    pub label: usize,
    pub start_time: NaiveDateTime,
    /// Position of the first event among the encoded events.
    pub start_event: usize,
}

/// Cuts event-count windows of length `window` every `stride` events.
///
/// Events excluded by the vocabulary options are dropped before cutting,
/// so every row has exactly one set bit. Sensors or activities absent from
/// the vocabulary are an error listing all offenders. Fewer than `window`
/// encodable events yield no windows.
pub fn window_events(
    events: &[LabelledEvent],
    vocab: &SensorVocab,
    window: usize,
    stride: usize,
) -> Result<Vec<SampleWindow>, DataError> {
    if window == 0 || stride == 0 || stride > window {
        return Err(DataError::Window { window, stride });
    }
    let mut rows = Vec::with_capacity(events.len());
    let mut unknown_sensors = BTreeSet::new();
    let mut unknown_labels = BTreeSet::new();
    for e in events {
        match vocab.lookup(&e.event) {
            Lookup::Skipped => continue,
            Lookup::Unknown => {
                unknown_sensors.insert(format!("{}/{}", e.event.sensor_id, e.event.value));
            }
            Lookup::Channel(c) => match vocab.label_index(&e.activity) {
                Some(l) => rows.push((c, l, e.event.timestamp)),
                None => {
                    unknown_labels.insert(e.activity.clone());
                }
            },
        }
    }
    if !unknown_sensors.is_empty() {
        return Err(DataError::UnknownSensors(unknown_sensors.into_iter().collect()));
    }
    if !unknown_labels.is_empty() {
        return Err(DataError::UnknownLabels(unknown_labels.into_iter().collect()));
    }
    if rows.len() < window {
        return Ok(Vec::new());
    }

    let v = vocab.n_channels();
    let n_windows = (rows.len() - window) / stride + 1;
    let mut out = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let start = w * stride;
        let slice = &rows[start..start + window];
        let mut data = vec![0.0; window * v];
        for (t, &(c, _, _)) in slice.iter().enumerate() {
            data[t * v + c] = 1.0;
        }
        let labels: Vec<usize> = slice.iter().map(|r| r.1).collect();
        out.push(SampleWindow {
            x: Tensor::new(&[window, v], data).expect("window shape"),
            label: majority(&labels),
            start_time: slice[0].2,
            start_event: start,
        });
    }
    Ok(out)
}

/// Most frequent label; ties go to whichever tied label appears first.
fn majority(labels: &[usize]) -> usize {
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for &l in labels {
        match counts.iter_mut().find(|(k, _)| *k == l) {
            Some((_, n)) => *n += 1,
            None => counts.push((l, 1)),
        }
    }
    counts
        .iter()
        .fold((0, 0), |best, &(l, n)| if n > best.1 { (l, n) } else { best })
        .0
}

/// Windows stacked into a batch `[B, T, V]` with their labels.
pub fn stack_windows(windows: &[&SampleWindow]) -> (Tensor, Vec<usize>) {
    let xs: Vec<&Tensor> = windows.iter().map(|w| &w.x).collect();
    let x = Tensor::stack(&xs).expect("windows share a shape");
    (x, windows.iter().map(|w| w.label).collect())
}

#[derive(Debug, Clone, Default)]
pub struct Split {
    pub train: Vec<SampleWindow>,
    pub val: Vec<SampleWindow>,
    pub test: Vec<SampleWindow>,
}

/// Chronological train/val/test split by window order.
///
/// Windows overlapping the last window of the previous part are dropped so
/// no event appears in two parts.
pub fn chronological_split(windows: Vec<SampleWindow>, train_frac: f64, val_frac: f64) -> Split {
    let n = windows.len();
    let n_train = ((n as f64) * train_frac).round() as usize;
    let n_val = ((n as f64) * val_frac).round() as usize;
    let mut split = Split::default();
    let mut boundary = 0;
    for (i, w) in windows.into_iter().enumerate() {
        let len = w.x.shape()[0];
        let part = if i < n_train {
            &mut split.train
        } else if i < n_train + n_val {
            if split.val.is_empty() {
                boundary = split.train.last().map_or(0, |p| p.start_event + len);
            }
            if w.start_event < boundary {
                continue;
            }
            &mut split.val
        } else {
            if split.test.is_empty() {
                boundary = split
                    .val
                    .last()
                    .or(split.train.last())
                    .map_or(0, |p| p.start_event + len);
            }
            if w.start_event < boundary {
                continue;
            }
            &mut split.test
        };
        part.push(w);
    }
    split
}
