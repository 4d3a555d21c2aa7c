//! File formats: JSON documents tagged with a schema string, and JSON-lines
//! event traces.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Instance, Schedule};
use crate::instancegen::{WeekInstance, WEEK_SCHEMA};
use crate::simulator::TraceEntry;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema {found:?}, expected {expected:?}")]
    Schema { found: String, expected: &'static str },
    #[error("{0}")]
    Invalid(String),
}

/// A single day's data, optionally with a schedule for it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayDocument {
    pub schema: String,
    pub day: u32,
    pub instance: Instance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
}

impl DayDocument {
    pub fn new(day: u32, instance: Instance, schedule: Option<Schedule>) -> Self {
        Self { schema: WEEK_SCHEMA.to_string(), day, instance, schedule }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serialises");
    s.push('\n');
    s
}

fn from_json<T: DeserializeOwned>(text: &str) -> Result<T, IoError> {
    Ok(serde_json::from_str(text)?)
}

fn check_schema(found: &str) -> Result<(), IoError> {
    if found == WEEK_SCHEMA {
        Ok(())
    } else {
        Err(IoError::Schema { found: found.to_string(), expected: WEEK_SCHEMA })
    }
}

pub fn read_week(text: &str) -> Result<WeekInstance, IoError> {
    let week: WeekInstance = from_json(text)?;
    check_schema(&week.schema)?;
    week.validate().map_err(IoError::Invalid)?;
    Ok(week)
}

pub fn read_day(text: &str) -> Result<DayDocument, IoError> {
    let doc: DayDocument = from_json(text)?;
    check_schema(&doc.schema)?;
    doc.instance.validate().map_err(|e| IoError::Invalid(e.to_string()))?;
    Ok(doc)
}

/// One JSON object per line.
pub fn trace_jsonl(entries: &[TraceEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("plain data serialises"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::*;
    use crate::domain::PatientClass;
    use crate::instancegen::{generate_week, GenParams};
    use crate::reactive::{ReactionPolicy, UpdateStrategy};
    use crate::simulator::{simulate_week, SimConfig};

    fn small_week() -> WeekInstance {
        generate_week(&GenParams { waiting_list_mean: 200.0, elective_request_rate: 30.0, ..GenParams::default() }).unwrap()
    }

    #[test]
    fn week_round_trips_byte_for_byte() {
        let week = small_week();
        let text = to_json(&week);
        let back = read_week(&text).unwrap();
        assert_eq!(back, week);
        assert_eq!(to_json(&back), text);
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let mut week = small_week();
        week.schema = "other".into();
        assert!(matches!(read_week(&to_json(&week)), Err(IoError::Schema { .. })));
        assert!(matches!(read_week("{"), Err(IoError::Json(_))));
    }

    #[test]
    fn day_document_round_trips() {
        let inst = instance(1, 1, vec![patient(0, PatientClass::NonElective, 1.0)]);
        let mut s = Schedule::new();
        s.insert(place(0, 0, 0, 1.0, 2.0));
        let doc = DayDocument::new(3, inst, Some(s));
        assert_eq!(read_day(&to_json(&doc)).unwrap(), doc);
    }

    #[test]
    fn trace_lines_parse_back() {
        let week = small_week();
        let cfg = SimConfig { trace: true, ..SimConfig::default() };
        let r = simulate_week(&week, &ReactionPolicy::tuned(), UpdateStrategy::UA, 2, &cfg).unwrap();
        let text = trace_jsonl(&r.trace);
        assert_eq!(text.lines().count(), r.trace.len());
        for (line, entry) in text.lines().zip(&r.trace) {
            let back: TraceEntry = serde_json::from_str(line).unwrap();
            assert_eq!(&back, entry);
        }
    }
}
