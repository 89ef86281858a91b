use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::SampleSet;
use crate::error::DatasetError;

/// A record skipped during ingestion because it violates a sample-set invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub prompt_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<SampleSet>,
    pub rejected: Vec<Rejection>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(BufReader::new(file)).map_err(|e| match e {
        DatasetError::Io { source, .. } => DatasetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Parse line-delimited JSON records. Blank lines are ignored; a malformed
/// record aborts with its line number, a record with fewer than two usable
/// responses is rejected and reported in [`Dataset::rejected`].
pub fn parse_dataset(reader: impl BufRead) -> Result<Dataset, DatasetError> {
    let mut out = Dataset::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: Default::default(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let Value::Object(obj) = value else {
            return Err(DatasetError::Malformed {
                line: line_no,
                message: "expected a JSON object".into(),
            });
        };
        let record = parse_record(&obj, line_no)?;
        match SampleSet::new(
            record.prompt_id.clone(),
            record.prompt,
            record.responses,
            record.factuality,
        ) {
            Ok(sample) => out.samples.push(sample),
            Err(e) => {
                log::warn!("line {line_no}: rejecting `{}`: {e}", record.prompt_id);
                out.rejected.push(Rejection {
                    line: line_no,
                    prompt_id: record.prompt_id,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

struct Record {
    prompt_id: String,
    prompt: String,
    responses: Vec<String>,
    factuality: Option<f64>,
}

fn schema(line: usize, field: &str, message: &str) -> DatasetError {
    DatasetError::Schema {
        line,
        field: field.into(),
        message: message.into(),
    }
}

fn parse_record(obj: &Map<String, Value>, line: usize) -> Result<Record, DatasetError> {
    let prompt_id = match obj.get("prompt_id") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(schema(line, "prompt_id", "must be a string")),
        None => return Err(schema(line, "prompt_id", "missing")),
    };
    let prompt = match obj.get("prompt") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(_) => return Err(schema(line, "prompt", "must be a string")),
    };
    let responses = match obj.get("responses") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                _ => Err(schema(line, "responses", "every element must be a string")),
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(schema(line, "responses", "must be an array of strings")),
        None => return Err(schema(line, "responses", "missing")),
    };
    let factuality = match obj.get("factuality") {
        Some(Value::Number(n)) => {
            let f = n
                .as_f64()
                .ok_or_else(|| schema(line, "factuality", "not representable as f64"))?;
            if !(0.0..=1.0).contains(&f) {
                return Err(schema(line, "factuality", "must lie in [0, 1]"));
            }
            Some(f)
        }
        Some(Value::Null) | None => None,
        Some(_) => return Err(schema(line, "factuality", "must be a number")),
    };
    Ok(Record {
        prompt_id,
        prompt,
        responses,
        factuality,
    })
}
