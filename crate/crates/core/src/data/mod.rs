//! Sensor event logs: parsing, labelling, vocabularies, windowing and a
//! synthetic apartment generator.

mod event;
mod label;
mod synth;
mod vocab;
mod window;

pub use event::{parse_event_line, parse_events, read_events, Marker, SensorEvent};
pub use label::{label_events, LabelWarning, Labelled, LabelledEvent, OTHER};
pub use synth::{synth_generate, SynthConfig, SynthManifest, SynthOutput};
pub use vocab::{Channel, Lookup, SensorVocab, VocabOptions, NUMERIC_BINS};
pub use window::{
    chronological_split, stack_windows, window_events, SampleWindow, Split, DEFAULT_STRIDE, DEFAULT_WINDOW,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventParseError {
    #[error("expected at least 4 fields, found {0}")]
    TooFewFields(usize),
    #[error("unexpected trailing fields `{0}`")]
    TrailingFields(String),
    #[error("malformed timestamp `{0}`")]
    Timestamp(String),
    #[error("unknown marker `{0}` (expected begin or end)")]
    Marker(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("parse error on line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: EventParseError,
    },
    #[error("cannot read {0}: {1}")]
    Io(String, String),
    #[error("sensors not in the vocabulary: {}", .0.join(", "))]
    UnknownSensors(Vec<String>),
    #[error("activities not in the label set: {}", .0.join(", "))]
    UnknownLabels(Vec<String>),
    #[error("invalid window parameters: T={window}, stride={stride}")]
    Window { window: usize, stride: usize },
    #[error("invalid synthetic config: {0}")]
    SynthConfig(String),
}
