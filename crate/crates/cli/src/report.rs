//! The `--json` output, version "v1". `schema/report.v1.json` describes
//! the same shapes.

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: &str = "v1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Report {
    Check(CheckJson),
    Explain(ExplainJson),
    Slice(SliceJson),
    Mark(MarkJson),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckJson {
    pub schema: String,
    pub file: String,
    pub assertions: Vec<AssertionJson>,
    pub missing: Vec<MissingJson>,
    pub findings: usize,
    pub annotated: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssertionJson {
    pub line: usize,
    pub last_line: usize,
    pub kind: String,
    pub text: String,
    pub reference: String,
    pub code: String,
    pub status: String,
    pub reason: Option<String>,
    pub witness: Option<String>,
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingJson {
    pub predicate: String,
    pub after_line: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainJson {
    pub schema: String,
    pub file: String,
    pub line: usize,
    pub headline: String,
    pub stages: Vec<StageJson>,
    pub lines: Vec<String>,
    pub annotated: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageJson {
    pub note: String,
    pub suggestion: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceJson {
    pub schema: String,
    pub file: String,
    pub line: usize,
    pub kind: String,
    pub fragments: Vec<FragmentJson>,
    pub intersection: Option<Vec<PartJson>>,
    pub total_parts: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FragmentJson {
    pub kind: String,
    /// Line of the assertion the fragment was computed for.
    pub line: usize,
    pub text: String,
    pub inconclusive: bool,
    pub stages: Vec<StageJson>,
    pub active: Vec<PartJson>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartJson {
    pub line: usize,
    pub clause: usize,
    pub part: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkJson {
    pub schema: String,
    pub file: String,
    pub exercise: String,
    pub low: u32,
    pub high: u32,
    pub satisfied: usize,
    pub total: usize,
    pub items: Vec<ItemJson>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemJson {
    pub kind: String,
    pub target: String,
    pub weight: u32,
    pub state: String,
}
