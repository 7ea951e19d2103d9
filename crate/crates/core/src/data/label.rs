use super::event::{Marker, SensorEvent};

/// Label for events outside every annotated interval. Always class 0.
pub const OTHER: &str = "Other";

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledEvent {
    pub event: SensorEvent,
    pub activity: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelWarning {
    /// `end` marker with no open interval of that activity; ignored.
    UnmatchedEnd { index: usize, activity: String },
    /// `begin` never closed; the interval runs to the end of the log.
    Unclosed { index: usize, activity: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labelled {
    pub events: Vec<LabelledEvent>,
    pub warnings: Vec<LabelWarning>,
}

/// Resolves the activity of every event from `begin`/`end` markers.
///
/// Open intervals form a stack and the innermost (most recently opened)
/// one wins. An event carrying an activity without a marker is labelled
/// with that activity alone. Input must be time-sorted.
pub fn label_events(events: &[SensorEvent]) -> Labelled {
    let mut open: Vec<(usize, String)> = Vec::new();
    let mut warnings = Vec::new();
    let mut out = Vec::with_capacity(events.len());

    for (i, e) in events.iter().enumerate() {
        let activity = match (&e.activity, e.marker) {
            (Some(a), Some(Marker::Begin)) => {
                open.push((i, a.clone()));
                a.clone()
            }
            (Some(a), Some(Marker::End)) => {
                // the closing event still belongs to the interval
                match open.iter().rposition(|(_, o)| o == a) {
                    Some(pos) => {
                        let label = open.last().map(|(_, o)| o.clone()).unwrap_or_default();
                        open.remove(pos);
                        label
                    }
                    None => {
                        log::warn!("event {i}: end of {a} without a matching begin");
                        warnings.push(LabelWarning::UnmatchedEnd {
                            index: i,
                            activity: a.clone(),
                        });
                        current(&open)
                    }
                }
            }
            (Some(a), None) => a.clone(),
            (None, _) => current(&open),
        };
        out.push(LabelledEvent {
            event: e.clone(),
            activity,
        });
    }
    for (index, activity) in open {
        log::warn!("event {index}: {activity} begins but never ends; extending to end of log");
        warnings.push(LabelWarning::Unclosed { index, activity });
    }
    Labelled { events: out, warnings }
}

fn current(open: &[(usize, String)]) -> String {
    open.last().map(|(_, a)| a.clone()).unwrap_or_else(|| OTHER.to_string())
}
