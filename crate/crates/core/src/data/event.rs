use std::fmt;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{DataError, EventParseError};

const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S%.f";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Marker {
    Begin,
    End,
}

impl Marker {
    pub fn as_str(self) -> &'static str {
        match self {
            Marker::Begin => "begin",
            Marker::End => "end",
        }
    }
}

/// One line of an ambient sensor log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorEvent {
    pub timestamp: NaiveDateTime,
    pub sensor_id: String,
    /// State token (`ON`, `OFF`, `OPEN`, ...) or a numeric reading.
    pub value: String,
    pub activity: Option<String>,
    pub marker: Option<Marker>,
}

impl SensorEvent {
    pub fn is_numeric(&self) -> bool {
        self.value.parse::<f64>().is_ok()
    }

    /// Motion sensors carry an `M` prefix in the log's naming scheme.
    pub fn is_motion(&self) -> bool {
        self.sensor_id.starts_with('M')
    }
}

/// Canonical form: single spaces, six fractional-second digits.
impl fmt::Display for SensorEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}",
            self.timestamp.format("%Y-%m-%d %H:%M:%S%.6f"),
            self.sensor_id,
            self.value
        )?;
        if let Some(a) = &self.activity {
            write!(f, " {a}")?;
            if let Some(m) = self.marker {
                write!(f, " {}", m.as_str())?;
            }
        }
        Ok(())
    }
}

/// Parses `DATE TIME SENSOR VALUE [ACTIVITY [begin|end]]`, fields separated
/// by runs of spaces or tabs.
pub fn parse_event_line(line: &str) -> Result<SensorEvent, EventParseError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 4 {
        return Err(EventParseError::TooFewFields(fields.len()));
    }
    if fields.len() > 6 {
        return Err(EventParseError::TrailingFields(fields[6..].join(" ")));
    }
    let stamp = format!("{} {}", fields[0], fields[1]);
    let timestamp = NaiveDateTime::parse_from_str(&stamp, TIMESTAMP_FORMAT)
        .map_err(|_| EventParseError::Timestamp(stamp.clone()))?;
    let marker = match fields.get(5) {
        None => None,
        Some(&"begin") => Some(Marker::Begin),
        Some(&"end") => Some(Marker::End),
        Some(other) => return Err(EventParseError::Marker(other.to_string())),
    };
    Ok(SensorEvent {
        timestamp,
        sensor_id: fields[2].to_string(),
        value: fields[3].to_string(),
        activity: fields.get(4).map(|s| s.to_string()),
        marker,
    })
}

/// Parses a whole log, skipping blank lines, then sorts stably by time.
pub fn parse_events(text: &str) -> Result<Vec<SensorEvent>, DataError> {
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let event = parse_event_line(line).map_err(|source| DataError::Parse { line: i + 1, source })?;
        events.push(event);
    }
    events.sort_by_key(|e| e.timestamp);
    Ok(events)
}

pub fn read_events(path: &Path) -> Result<Vec<SensorEvent>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::Io(path.display().to_string(), e.to_string()))?;
    parse_events(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_line_with_marker() {
        let e = parse_event_line("2010-01-04 08:00:05.209589 M012 ON Sleep begin").unwrap();
        assert_eq!(e.sensor_id, "M012");
        assert_eq!(e.value, "ON");
        assert_eq!(e.activity.as_deref(), Some("Sleep"));
        assert_eq!(e.marker, Some(Marker::Begin));
        assert_eq!(e.timestamp.and_utc().timestamp_subsec_micros(), 209_589);
    }

    #[test]
    fn optional_fields_absent() {
        let e = parse_event_line("2010-01-04 08:00:07.000000 D002 OPEN").unwrap();
        assert_eq!(e.activity, None);
        assert_eq!(e.marker, None);
        let e = parse_event_line("2010-01-04\t08:00:07   T001  21.5").unwrap();
        assert!(e.is_numeric());
        assert_eq!(e.to_string(), "2010-01-04 08:00:07.000000 T001 21.5");
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            parse_event_line("garbage line"),
            Err(EventParseError::TooFewFields(2))
        ));
        assert!(matches!(
            parse_event_line("2010-13-04 08:00:07 M001 ON"),
            Err(EventParseError::Timestamp(_))
        ));
        assert!(matches!(
            parse_event_line("2010-01-04 08:00:07 M001 ON Cook start"),
            Err(EventParseError::Marker(_))
        ));
        assert!(matches!(
            parse_event_line("2010-01-04 08:00:07 M001 ON Cook begin extra"),
            Err(EventParseError::TrailingFields(_))
        ));
    }

    #[test]
    fn log_errors_name_the_line() {
        let text = "2010-01-04 08:00:07 M001 ON\r\n\ngarbage line\n";
        let err = parse_events(text).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 3, .. }));
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn events_are_sorted() {
        let text = "2010-01-04 08:00:09 M002 ON\n2010-01-04 08:00:07 M001 ON\n2010-01-04 08:00:09 M003 ON\n";
        let ids: Vec<_> = parse_events(text).unwrap().into_iter().map(|e| e.sensor_id).collect();
        assert_eq!(ids, ["M001", "M002", "M003"]);
    }

    proptest! {
        #[test]
        fn canonical_round_trip(
            secs in 0i64..400_000_000,
            micros in 0u32..1_000_000,
            sensor in "[A-Z][0-9]{3}",
            value in prop_oneof![Just("ON".to_string()), Just("OFF".to_string()), Just("OPEN".to_string()), "[0-9]{1,3}\\.[0-9]"],
            annot in proptest::option::of(("[A-Z][a-z_]{1,8}", proptest::option::of(prop_oneof![Just(Marker::Begin), Just(Marker::End)]))),
        ) {
            let ts = chrono::DateTime::from_timestamp(1_200_000_000 + secs, micros * 1000).unwrap().naive_utc();
            let (activity, marker) = match annot {
                Some((a, m)) => (Some(a), m),
                None => (None, None),
            };
            let e = SensorEvent { timestamp: ts, sensor_id: sensor, value, activity, marker };
            let line = e.to_string();
            let back = parse_event_line(&line).unwrap();
            prop_assert_eq!(&back, &e);
            prop_assert_eq!(back.to_string(), line);
        }
    }
}
