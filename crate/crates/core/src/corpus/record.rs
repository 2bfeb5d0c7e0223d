//! Line-delimited JSON instance records.
//!
//! ```text
//! {"id": "...",
//!  "candidate": {"from", "to": [...], "subject", "body", "sent_time", "reply_to_id"?, "id"?},
//!  "previous": {...}?,
//!  "commitment_index": 0,
//!  "annotations": ["..."],
//!  "helpful_labels": [true, false, ...]?}
//! ```
//!
//! Unknown fields are ignored. Message ids default to the record id for the
//! candidate and to the candidate's `reply_to_id` (or `<id>/prev`) for the
//! previous message.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

use super::{CorpusError, EmailMessage, EmailThread, TodoInstance};
use crate::text::split_sentences;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl From<CorpusError> for Diagnostic {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Schema { line, field, msg } => Self {
                line,
                field,
                message: msg,
            },
            other => Self {
                line: 0,
                field: String::new(),
                message: other.to_string(),
            },
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    pub instances: Vec<TodoInstance>,
    pub diagnostics: Vec<Diagnostic>,
}

fn schema(line: usize, field: impl Into<String>, msg: impl Into<String>) -> CorpusError {
    CorpusError::Schema {
        line,
        field: field.into(),
        msg: msg.into(),
    }
}

struct Fields<'a> {
    obj: &'a Map<String, Value>,
    prefix: &'a str,
    line: usize,
}

impl<'a> Fields<'a> {
    fn path(&self, key: &str) -> String {
        if self.prefix.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.prefix)
        }
    }

    fn get(&self, key: &str) -> Result<&'a Value, CorpusError> {
        match self.obj.get(key) {
            Some(Value::Null) | None => Err(schema(self.line, self.path(key), "missing")),
            Some(v) => Ok(v),
        }
    }

    fn opt(&self, key: &str) -> Option<&'a Value> {
        self.obj.get(key).filter(|v| !v.is_null())
    }

    fn string(&self, key: &str) -> Result<String, CorpusError> {
        self.get(key)?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| schema(self.line, self.path(key), "expected a string"))
    }

    fn opt_string(&self, key: &str) -> Result<Option<String>, CorpusError> {
        self.opt(key)
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| schema(self.line, self.path(key), "expected a string"))
            })
            .transpose()
    }

    fn strings(&self, key: &str) -> Result<Vec<String>, CorpusError> {
        let arr = self
            .get(key)?
            .as_array()
            .ok_or_else(|| schema(self.line, self.path(key), "expected an array of strings"))?;
        arr.iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| schema(self.line, self.path(key), "expected an array of strings"))
            })
            .collect()
    }

    fn int(&self, key: &str) -> Result<i64, CorpusError> {
        self.get(key)?
            .as_i64()
            .ok_or_else(|| schema(self.line, self.path(key), "expected an integer"))
    }
}

fn object<'a>(v: &'a Value, line: usize, field: &str) -> Result<&'a Map<String, Value>, CorpusError> {
    v.as_object()
        .ok_or_else(|| schema(line, field, "expected an object"))
}

fn parse_message(
    v: &Value,
    line: usize,
    field: &str,
    default_id: Option<String>,
) -> Result<EmailMessage, CorpusError> {
    let f = Fields {
        obj: object(v, line, field)?,
        prefix: field,
        line,
    };
    let id = match f.opt_string("id")? {
        Some(id) => id,
        None => default_id.unwrap_or_default(),
    };
    Ok(EmailMessage {
        id,
        from: f.string("from")?,
        to: f.strings("to")?,
        subject: f.string("subject")?,
        body: f.string("body")?,
        sent_time: f.int("sent_time")?,
        reply_to_id: f.opt_string("reply_to_id")?,
    })
}

/// Parses one record; `line` is only used in error messages.
pub fn parse_record(text: &str, line: usize) -> Result<TodoInstance, CorpusError> {
    let value: Value = serde_json::from_str(text).map_err(|e| schema(line, "<record>", e.to_string()))?;
    let f = Fields {
        obj: object(&value, line, "<record>")?,
        prefix: "",
        line,
    };
    let id = f.string("id")?;
    if id.is_empty() {
        return Err(schema(line, "id", "must be non-empty"));
    }
    let mut candidate = parse_message(f.get("candidate")?, line, "candidate", Some(id.clone()))?;
    let previous = match f.opt("previous") {
        None => None,
        Some(v) => {
            let fallback = candidate.reply_to_id.clone().unwrap_or_else(|| format!("{id}/prev"));
            let prev = parse_message(v, line, "previous", Some(fallback))?;
            match &candidate.reply_to_id {
                Some(r) if *r != prev.id => {
                    return Err(schema(
                        line,
                        "candidate.reply_to_id",
                        format!("{r:?} does not match previous.id {:?}", prev.id),
                    ))
                }
                Some(_) => {}
                None => candidate.reply_to_id = Some(prev.id.clone()),
            }
            if prev.sent_time >= candidate.sent_time {
                return Err(schema(line, "previous.sent_time", "must be earlier than candidate.sent_time"));
            }
            Some(prev)
        }
    };

    let n_candidate = split_sentences(&candidate.body).len();
    let index = f.int("commitment_index")?;
    if index < 0 || index as usize >= n_candidate {
        return Err(schema(
            line,
            "commitment_index",
            format!("{index} outside the {n_candidate} sentences of candidate.body"),
        ));
    }

    let annotations = f.strings("annotations")?;
    if !annotations.iter().any(|a| !a.trim().is_empty()) {
        return Err(schema(line, "annotations", "needs at least one non-empty annotation"));
    }

    let helpful_labels = match f.opt("helpful_labels") {
        None => None,
        Some(v) => {
            let arr = v
                .as_array()
                .ok_or_else(|| schema(line, "helpful_labels", "expected an array of booleans"))?;
            let labels: Vec<bool> = arr
                .iter()
                .map(|b| b.as_bool().ok_or_else(|| schema(line, "helpful_labels", "expected an array of booleans")))
                .collect::<Result<_, _>>()?;
            let expected = n_candidate + previous.as_ref().map_or(0, |p| split_sentences(&p.body).len());
            if labels.len() != expected {
                return Err(schema(
                    line,
                    "helpful_labels",
                    format!("has {} labels for {expected} thread sentences", labels.len()),
                ));
            }
            Some(labels)
        }
    };

    Ok(TodoInstance {
        id,
        thread: EmailThread { candidate, previous },
        commitment_sentence_index: index as usize,
        annotations,
        helpful_labels,
    })
}

/// Parses a whole corpus. In strict mode the first bad line is an error;
/// otherwise bad lines are skipped and reported. Blank lines are ignored.
pub fn parse_corpus(text: &str, strict: bool) -> Result<LoadReport, CorpusError> {
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed = parse_record(raw, line).and_then(|inst| {
            if seen.contains(&inst.id) {
                Err(schema(line, "id", format!("duplicate id {:?}", inst.id)))
            } else {
                Ok(inst)
            }
        });
        match parsed {
            Ok(inst) => {
                seen.insert(inst.id.clone());
                report.instances.push(inst);
            }
            Err(e) if strict => return Err(e),
            Err(e) => report.diagnostics.push(e.into()),
        }
    }
    Ok(report)
}

pub fn load_corpus(path: impl AsRef<Path>, strict: bool) -> Result<LoadReport, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text, strict)
}

fn message_value(m: &EmailMessage) -> Value {
    let mut v = json!({
        "id": m.id,
        "from": m.from,
        "to": m.to,
        "subject": m.subject,
        "body": m.body,
        "sent_time": m.sent_time,
    });
    if let Some(r) = &m.reply_to_id {
        v["reply_to_id"] = json!(r);
    }
    v
}

/// Serializes one instance as a single JSON line (no trailing newline).
pub fn to_record_line(inst: &TodoInstance) -> String {
    let mut v = json!({
        "id": inst.id,
        "candidate": message_value(&inst.thread.candidate),
        "commitment_index": inst.commitment_sentence_index,
        "annotations": inst.annotations,
    });
    if let Some(p) = &inst.thread.previous {
        v["previous"] = message_value(p);
    }
    if let Some(l) = &inst.helpful_labels {
        v["helpful_labels"] = json!(l);
    }
    v.to_string()
}

pub fn write_corpus(path: impl AsRef<Path>, instances: &[TodoInstance]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut text = String::new();
    for inst in instances {
        text.push_str(&to_record_line(inst));
        text.push('\n');
    }
    fs::write(path, text).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"id":"r1","candidate":{"from":"Craig Johnson","to":["Raymond Jiang"],"subject":"Bug 62","body":"Good Morning Ray. I shall take a look at it and get back to you.","sent_time":200,"reply_to_id":"m0"},"previous":{"id":"m0","from":"Raymond Jiang","to":["support@company.com"],"subject":"Bug 62","body":"Hi, there is a periodic bug 62. Thanks, Ray.","sent_time":100},"commitment_index":1,"annotations":["Take a look at Bug 62 and get back to Raymond."],"helpful_labels":[false,false,true,false],"extra":1}"#;

    #[test]
    fn one_valid_record() {
        let r = parse_corpus(GOOD, true).unwrap();
        assert_eq!(r.instances.len(), 1);
        let inst = &r.instances[0];
        assert_eq!(inst.thread.previous.as_ref().unwrap().id, "m0");
        assert_eq!(inst.commitment_sentence(), "I shall take a look at it and get back to you.");
        assert_eq!(inst.thread_sentences().len(), 4);
    }

    #[test]
    fn commitment_index_out_of_range() {
        let bad = GOOD.replace("\"commitment_index\":1", "\"commitment_index\":5");
        let err = parse_corpus(&bad, true).unwrap_err();
        assert!(
            matches!(&err, CorpusError::Schema { line: 1, field, .. } if field == "commitment_index"),
            "{err}"
        );
    }

    #[test]
    fn lenient_mode_skips_bad_lines() {
        let bad = GOOD.replace("\"annotations\"", "\"notes\"");
        let text = format!("{GOOD}\n{bad}\n{}\n", GOOD.replace("\"r1\"", "\"r3\""));
        let r = parse_corpus(&text, false).unwrap();
        assert_eq!(r.instances.len(), 2);
        assert_eq!(r.diagnostics.len(), 1);
        assert_eq!(r.diagnostics[0].line, 2);
        assert_eq!(r.diagnostics[0].field, "annotations");
        assert!(parse_corpus(&text, true).is_err());
    }

    #[test]
    fn schema_violations_name_the_field() {
        let cases = [
            (GOOD.replace("\"m0\",\"from\"", "\"m9\",\"from\""), "candidate.reply_to_id"),
            (GOOD.replace("\"sent_time\":100", "\"sent_time\":300"), "previous.sent_time"),
            (GOOD.replace("[false,false,true,false]", "[true]"), "helpful_labels"),
            (GOOD.replace("\"body\":\"Good", "\"bdy\":\"Good"), "candidate.body"),
            (GOOD.replace("\"id\":\"r1\"", "\"id\":\"\""), "id"),
            ("not json".to_string(), "<record>"),
            (GOOD.replace("[\"Take a look at Bug 62 and get back to Raymond.\"]", "[\" \"]"), "annotations"),
        ];
        for (text, field) in cases {
            match parse_record(&text, 7) {
                Err(CorpusError::Schema { line: 7, field: f, .. }) => assert_eq!(f, field),
                other => panic!("{field}: {other:?}"),
            }
        }
    }

    #[test]
    fn duplicate_ids_reported() {
        let text = format!("{GOOD}\n{GOOD}\n");
        let r = parse_corpus(&text, false).unwrap();
        assert_eq!(r.instances.len(), 1);
        assert_eq!(r.diagnostics[0].field, "id");
    }

    #[test]
    fn serialize_reparses() {
        let inst = parse_record(GOOD, 1).unwrap();
        let back = parse_record(&to_record_line(&inst), 1).unwrap();
        assert_eq!(back, inst);
    }
}
