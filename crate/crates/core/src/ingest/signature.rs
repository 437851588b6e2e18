use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::signal::{InputKind, SamplePoint, SignatureRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    X,
    Y,
    T,
    P,
    PenState,
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delimiter {
    Whitespace,
    Comma,
}

/// Layout of a signature text file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSchema {
    pub column_order: Vec<Column>,
    pub has_count_header: bool,
    pub delimiter: Delimiter,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema {
            column_order: vec![Column::X, Column::Y, Column::T, Column::P],
            has_count_header: true,
            delimiter: Delimiter::Whitespace,
        }
    }
}

impl ColumnSchema {
    pub fn new(column_order: Vec<Column>, has_count_header: bool, delimiter: Delimiter) -> Result<Self, IngestError> {
        let schema = ColumnSchema {
            column_order,
            has_count_header,
            delimiter,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let count = |c: Column| self.column_order.iter().filter(|&&x| x == c).count();
        for c in [Column::X, Column::Y] {
            if count(c) != 1 {
                return Err(IngestError::InvalidSchema(format!("{c:?} must appear exactly once")));
            }
        }
        for c in [Column::T, Column::P, Column::PenState] {
            if count(c) > 1 {
                return Err(IngestError::InvalidSchema(format!("{c:?} may appear at most once")));
            }
        }
        Ok(())
    }

    fn has(&self, c: Column) -> bool {
        self.column_order.contains(&c)
    }
}

/// Parse one signature file.
///
/// A file without a pressure column, or whose pressure column is zero
/// throughout, is treated as finger input.
pub fn parse_signature_file(bytes: &[u8], schema: &ColumnSchema) -> Result<SignatureRecord, IngestError> {
    schema.validate()?;
    let text = std::str::from_utf8(bytes).map_err(|_| IngestError::NotUtf8)?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();
    if lines.peek().is_none() {
        return Err(IngestError::EmptyFile);
    }

    let declared = if schema.has_count_header {
        let (no, line) = lines.next().expect("peeked");
        Some(line.parse::<usize>().map_err(|_| IngestError::MalformedLine {
            line: no,
            reason: format!("expected sample count, found {line:?}"),
        })?)
    } else {
        None
    };

    let mut points = Vec::new();
    for (no, line) in lines {
        let fields: Vec<&str> = match schema.delimiter {
            Delimiter::Whitespace => line.split_whitespace().collect(),
            Delimiter::Comma => line.split(',').map(str::trim).collect(),
        };
        if fields.len() != schema.column_order.len() {
            return Err(IngestError::MalformedLine {
                line: no,
                reason: format!("expected {} fields, found {}", schema.column_order.len(), fields.len()),
            });
        }
        let mut s = SamplePoint::new(0.0, 0.0, points.len() as f64, 0.0);
        for (col, field) in schema.column_order.iter().zip(fields) {
            if *col == Column::Ignore {
                continue;
            }
            let v: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| IngestError::MalformedLine {
                line: no,
                reason: format!("non-numeric field {field:?}"),
            })?;
            match col {
                Column::X => s.x = v,
                Column::Y => s.y = v,
                Column::T => s.t = v,
                Column::P => s.p = v,
                Column::PenState => s.pen_down = Some(v != 0.0),
                Column::Ignore => unreachable!(),
            }
        }
        if s.p < 0.0 {
            return Err(IngestError::MalformedLine {
                line: no,
                reason: "negative pressure".into(),
            });
        }
        if let Some(prev) = points.last().map(|p: &SamplePoint| p.t) {
            if s.t < prev {
                return Err(IngestError::MalformedLine {
                    line: no,
                    reason: format!("timestamp {} precedes {}", s.t, prev),
                });
            }
        }
        points.push(s);
    }

    if let Some(n) = declared {
        if n != points.len() {
            return Err(IngestError::CountMismatch {
                declared: n,
                found: points.len(),
            });
        }
    }
    if points.is_empty() {
        return Err(IngestError::EmptyFile);
    }

    let has_pressure = schema.has(Column::P) && points.iter().any(|s| s.p > 0.0);
    let kind = if has_pressure { InputKind::Stylus } else { InputKind::Finger };
    Ok(SignatureRecord::new("", kind, points))
}

/// Write a record in the layout described by `schema`.
pub fn format_signature_file(record: &SignatureRecord, schema: &ColumnSchema) -> String {
    let sep = match schema.delimiter {
        Delimiter::Whitespace => " ",
        Delimiter::Comma => ",",
    };
    let mut out = String::new();
    if schema.has_count_header {
        let _ = writeln!(out, "{}", record.len());
    }
    for (i, s) in record.sample_points.iter().enumerate() {
        let fields: Vec<String> = schema
            .column_order
            .iter()
            .map(|c| match c {
                Column::X => s.x.to_string(),
                Column::Y => s.y.to_string(),
                Column::T => s.t.to_string(),
                Column::P => s.p.to_string(),
                Column::PenState => u8::from(record.is_pen_down(i)).to_string(),
                Column::Ignore => "0".to_string(),
            })
            .collect();
        out.push_str(&fields.join(sep));
        out.push('\n');
    }
    out
}
