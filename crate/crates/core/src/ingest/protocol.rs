use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::signal::InputKind;

/// Evaluation task a comparison belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "task1")]
    Task1Stylus,
    #[serde(rename = "task2")]
    Task2Finger,
    #[serde(rename = "task3")]
    Task3Combined,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Task1Stylus, Task::Task2Finger, Task::Task3Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Task1Stylus => "task1",
            Task::Task2Finger => "task2",
            Task::Task3Combined => "task3",
        }
    }

    /// Task implied by the capture devices of the two signatures.
    pub fn from_kinds(a: InputKind, b: InputKind) -> Task {
        match (a, b) {
            (InputKind::Stylus, InputKind::Stylus) => Task::Task1Stylus,
            (InputKind::Finger, InputKind::Finger) => Task::Task2Finger,
            _ => Task::Task3Combined,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "task1" | "1" | "stylus" => Ok(Task::Task1Stylus),
            "task2" | "2" | "finger" => Ok(Task::Task2Finger),
            "task3" | "3" | "combined" => Ok(Task::Task3Combined),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "genuine")]
    Genuine,
    #[serde(rename = "skilled")]
    SkilledForgery,
    #[serde(rename = "random")]
    RandomForgery,
    #[serde(rename = "unlabeled")]
    Unlabeled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Genuine => "genuine",
            Label::SkilledForgery => "skilled",
            Label::RandomForgery => "random",
            Label::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "genuine" => Ok(Label::Genuine),
            "skilled" => Ok(Label::SkilledForgery),
            "random" => Ok(Label::RandomForgery),
            "unlabeled" | "" => Ok(Label::Unlabeled),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonPair {
    pub pair_id: String,
    pub reference_path: String,
    pub probe_path: String,
    /// `None` until resolved from the records' input kinds.
    pub task: Option<Task>,
    pub label: Label,
}

/// Identifier of the pair declared on 1-based line `line_no`.
pub fn pair_id_for_line(line_no: usize) -> String {
    format!("{line_no:06}")
}

/// Parse a protocol file: `<reference> <probe> [label] [task]` per line,
/// blank lines and `#` comments skipped.
pub fn parse_comparison_list(bytes: &[u8]) -> Result<Vec<ComparisonPair>, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|_| IngestError::NotUtf8)?;
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |reason: String| IngestError::MalformedLine { line: i + 1, reason };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=4).contains(&fields.len()) {
            return Err(malformed(format!("expected 2 to 4 fields, found {}", fields.len())));
        }
        let label = match fields.get(2) {
            Some(s) => s.parse().map_err(malformed)?,
            None => Label::Unlabeled,
        };
        let task = match fields.get(3) {
            Some(s) => Some(s.parse().map_err(|e: String| IngestError::MalformedLine { line: i + 1, reason: e })?),
            None => None,
        };
        pairs.push(ComparisonPair {
            pair_id: pair_id_for_line(i + 1),
            reference_path: fields[0].to_string(),
            probe_path: fields[1].to_string(),
            task,
            label,
        });
    }
    Ok(pairs)
}

/// Inverse of [`parse_comparison_list`] for pairs whose ids follow line
/// order (no comment lines are written).
pub fn format_comparison_list(pairs: &[ComparisonPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&p.reference_path);
        out.push(' ');
        out.push_str(&p.probe_path);
        if p.label != Label::Unlabeled || p.task.is_some() {
            out.push(' ');
            out.push_str(p.label.as_str());
        }
        if let Some(t) = p.task {
            out.push(' ');
            out.push_str(t.as_str());
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_column() {
        let pairs = parse_comparison_list(b"u1_g1.txt u1_g2.txt genuine\nu1_g1.txt u2_g1.txt random\nu1_g1.txt u1_f1.txt\n").unwrap();
        let labels: Vec<Label> = pairs.iter().map(|p| p.label).collect();
        assert_eq!(labels, vec![Label::Genuine, Label::RandomForgery, Label::Unlabeled]);
        assert_eq!(pairs[0].pair_id, "000001");
        assert_eq!(pairs[2].pair_id, "000003");
        assert_eq!(pairs[1].probe_path, "u2_g1.txt");
        assert!(pairs.iter().all(|p| p.task.is_none()));
    }

    #[test]
    fn comments_keep_line_ids_and_order() {
        let pairs = parse_comparison_list(b"# header\n\na b skilled task1\nb c genuine\n").unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].pair_id, "000003");
        assert_eq!(pairs[0].task, Some(Task::Task1Stylus));
        assert_eq!(pairs[0].label, Label::SkilledForgery);
        assert_eq!(pairs[1].pair_id, "000004");
    }

    #[test]
    fn reused_reference_is_fine() {
        let pairs = parse_comparison_list(b"a b genuine\na c random\n").unwrap();
        assert_eq!(pairs[0].reference_path, pairs[1].reference_path);
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(parse_comparison_list(b"a\n"), Err(IngestError::MalformedLine { line: 1, .. })));
        assert!(matches!(parse_comparison_list(b"a b\na b maybe\n"), Err(IngestError::MalformedLine { line: 2, .. })));
        assert!(matches!(parse_comparison_list(b"a b genuine task9\n"), Err(IngestError::MalformedLine { .. })));
        assert!(matches!(parse_comparison_list(b"a b genuine task1 extra\n"), Err(IngestError::MalformedLine { .. })));
    }

    #[test]
    fn format_then_parse() {
        let src = b"a b genuine task2\nc d\ne f random\n";
        let pairs = parse_comparison_list(src).unwrap();
        assert_eq!(parse_comparison_list(format_comparison_list(&pairs).as_bytes()).unwrap(), pairs);
    }
}
