//! Plain-text formats: quaternion CSV (`q1,q2,q3,q4`, header optional) and
//! the flat `key = value` fit report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::orient::UnitQuaternion;

/// Splits `text` into numeric CSV records of width `width`. A first line that
/// does not parse as numbers is taken as a header. Blank lines and lines
/// starting with `#` are skipped. Returns `(line_number, values)` pairs.
pub(crate) fn parse_numeric_rows(text: &str, width: usize) -> Result<(Option<String>, Vec<(usize, Vec<f64>)>)> {
    let mut header = None;
    let mut rows = Vec::new();
    let mut seen_content = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if values.len() != width {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("expected {width} fields, found {}", values.len()),
                    });
                }
                if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("non-finite value {v}"),
                    });
                }
                rows.push((line_no, values));
            }
            Err(e) if seen_content => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: e.to_string(),
                });
            }
            Err(_) => header = Some(line.to_string()),
        }
        seen_content = true;
    }
    Ok((header, rows))
}

pub fn parse_quaternions(text: &str) -> Result<Vec<UnitQuaternion>> {
    let (_, rows) = parse_numeric_rows(text, 4)?;
    rows.into_iter()
        .map(|(line, v)| {
            UnitQuaternion::new(v[0], v[1], v[2], v[3]).map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn read_quaternion_file(path: impl AsRef<Path>) -> Result<Vec<UnitQuaternion>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_quaternions(&text)
}

pub fn format_quaternions(qs: &[UnitQuaternion]) -> String {
    let mut out = String::from("q1,q2,q3,q4\n");
    for q in qs {
        let [a, b, c, d] = q.components();
        let _ = writeln!(out, "{a},{b},{c},{d}");
    }
    out
}

pub fn write_quaternion_file(path: impl AsRef<Path>, qs: &[UnitQuaternion]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_quaternions(qs)).map_err(|e| Error::io(path, e))
}

/// Ordered `key = value` document.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValueReport {
    entries: Vec<(String, String)>,
}

impl KeyValueReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut report = Self::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: "expected `key = value`".into(),
            })?;
            report.push(k.trim(), v.trim());
        }
        Ok(report)
    }
}

impl std::fmt::Display for KeyValueReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
