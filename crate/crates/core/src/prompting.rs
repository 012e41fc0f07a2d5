//! Prompt construction for the imputation pipeline and parsing of replies.
//!
//! Three stages: expert prompt initialization (one call per dataset producing
//! a "You are a ..." persona), data serialization (a row rendered as
//! `The {name} is {value}.` sentences) and task specification (the user prompt
//! demanding a single JSON value).

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gateway::{ChatBackend, GatewayError};
use crate::missingness::MissingnessMask;
use crate::table::{Cell, ColumnKind, ColumnSchema, TableBundle};

pub const TEMPLATE_VERSION: &str = include_str!("../templates/VERSION");
pub const EPI_SYSTEM: &str = include_str!("../templates/epi_system.txt");
pub const EPI_USER: &str = include_str!("../templates/epi_user.txt");
pub const NON_EXPERT: &str = include_str!("../templates/non_expert.txt");
pub const TS_USER: &str = include_str!("../templates/ts_user.txt");

pub const MISSING_TOKEN: &str = "<missing>";
pub const RETRY_INSTRUCTION: &str = "Respond with only the JSON object.";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("cell ({row}, `{column}`) is not masked")]
    TargetNotMasked { row: usize, column: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("row {0} is out of range")]
    RowOutOfRange(usize),
    #[error("no JSON object with an \"output\" key in response")]
    NoJsonFound,
    #[error("column `{column}` expects a {expected} but the response holds {found}")]
    TypeMismatch {
        column: String,
        expected: &'static str,
        found: String,
    },
    #[error("`{value}` is not a category of column `{column}`")]
    UnknownCategory { column: String, value: String },
    #[error("serialized row is malformed: {0}")]
    MalformedRow(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// What the expert persona describes expertise in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subject {
    Dataset,
    Task,
}

fn subject_text(template: &str, subject: Subject) -> String {
    match subject {
        Subject::Dataset => template.to_string(),
        Subject::Task => template.replace("dataset", "task"),
    }
}

/// Expert prompt initialization prompts for a dataset description.
pub fn build_epi_prompt(description: &str) -> Result<(String, String), PromptError> {
    build_epi_prompt_for(description, Subject::Dataset)
}

pub fn build_epi_prompt_for(
    description: &str,
    subject: Subject,
) -> Result<(String, String), PromptError> {
    if description.trim().is_empty() {
        return Err(PromptError::EmptyInput("description"));
    }
    let system = subject_text(EPI_SYSTEM, subject);
    let user = subject_text(EPI_USER, subject).replace("{description}", description);
    Ok((system, user))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileOrigin {
    Expert,
    NonExpertControl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertProfile {
    pub text: String,
    pub origin: ProfileOrigin,
}

impl ExpertProfile {
    pub fn non_expert() -> Self {
        Self::non_expert_for(Subject::Dataset)
    }

    pub fn non_expert_for(subject: Subject) -> Self {
        Self {
            text: subject_text(NON_EXPERT, subject),
            origin: ProfileOrigin::NonExpertControl,
        }
    }
}

/// Asks the model for an expert persona. The response is returned unmodified.
pub fn elicit_profile<B: ChatBackend + ?Sized>(
    description: &str,
    subject: Subject,
    backend: &B,
    model: &str,
) -> Result<ExpertProfile, PromptError> {
    let (system, user) = build_epi_prompt_for(description, subject)?;
    let exchange = backend.complete(model, &system, &user)?;
    if exchange.response.trim().is_empty() {
        return Err(GatewayError::EmptyResponse.into());
    }
    Ok(ExpertProfile {
        text: exchange.response,
        origin: ProfileOrigin::Expert,
    })
}

/// Memoizes expert personas per (bundle digest, model) so that each dataset
/// costs one initialization call.
#[derive(Debug, Default, Clone)]
pub struct ProfileStore {
    profiles: BTreeMap<([u8; 32], String), ExpertProfile>,
}

impl ProfileStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn elicit_expert_profile<B: ChatBackend + ?Sized>(
        &mut self,
        bundle: &TableBundle,
        backend: &B,
        model: &str,
    ) -> Result<ExpertProfile, PromptError> {
        let key = (bundle.digest(), model.to_string());
        if let Some(p) = self.profiles.get(&key) {
            return Ok(p.clone());
        }
        let profile = elicit_profile(bundle.description(), Subject::Dataset, backend, model)?;
        self.profiles.insert(key, profile.clone());
        Ok(profile)
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}

fn sentence(name: &str, value: &str) -> String {
    alloc::format!("The {name} is {value}.")
}

/// Serializes one row with `target_column` marked `<missing>`. Other masked or
/// absent cells are left out.
pub fn serialize_row(
    bundle: &TableBundle,
    row: usize,
    target_column: &str,
    mask: &MissingnessMask,
) -> Result<String, PromptError> {
    if row >= bundle.n() {
        return Err(PromptError::RowOutOfRange(row));
    }
    if bundle.column_index(target_column).is_none() {
        return Err(PromptError::UnknownColumn(target_column.into()));
    }
    if !mask.contains(row, target_column) {
        return Err(PromptError::TargetNotMasked {
            row,
            column: target_column.into(),
        });
    }
    let mut parts = Vec::with_capacity(bundle.p());
    for (c, col) in bundle.schema().iter().enumerate() {
        if col.name == target_column {
            parts.push(sentence(&col.name, MISSING_TOKEN));
            continue;
        }
        let cell = bundle.cell(row, c);
        if cell.is_absent() || mask.contains(row, &col.name) {
            continue;
        }
        parts.push(sentence(&col.name, &col.render(&cell)));
    }
    Ok(parts.join(" "))
}

/// Serializes a fully observed row (no `<missing>` marker), absent cells omitted.
pub fn serialize_cells(schema: &[ColumnSchema], cells: &[Cell]) -> String {
    schema
        .iter()
        .zip(cells)
        .filter(|(_, cell)| !cell.is_absent())
        .map(|(col, cell)| sentence(&col.name, &col.render(cell)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// A value recovered from serialized text.
#[derive(Debug, Clone, PartialEq)]
pub enum SerializedValue {
    Missing,
    Present(Cell),
}

/// Inverse of [`serialize_row`] / [`serialize_cells`] for a known schema.
/// Omitted columns come back as `None`.
pub fn parse_serialized_row(
    text: &str,
    schema: &[ColumnSchema],
) -> Result<Vec<Option<SerializedValue>>, PromptError> {
    let mut out = alloc::vec![None; schema.len()];
    let mut rest = text;
    let mut next = 0;
    let mut first = true;
    while !rest.is_empty() {
        if !first {
            rest = rest
                .strip_prefix(' ')
                .ok_or_else(|| PromptError::MalformedRow("missing separator".into()))?;
        }
        first = false;
        let (col, after) = (next..schema.len())
            .find_map(|j| {
                let prefix = alloc::format!("The {} is ", schema[j].name);
                rest.strip_prefix(prefix.as_str()).map(|r| (j, r))
            })
            .ok_or_else(|| PromptError::MalformedRow(alloc::format!("unexpected text `{rest}`")))?;
        let end = (col + 1..schema.len())
            .filter_map(|k| after.find(alloc::format!(". The {} is ", schema[k].name).as_str()))
            .min();
        let (value, remainder) = match end {
            Some(e) => (&after[..e], &after[e + 1..]),
            None => {
                let v = after
                    .strip_suffix('.')
                    .ok_or_else(|| PromptError::MalformedRow("missing final period".into()))?;
                (v, "")
            }
        };
        out[col] = Some(if value == MISSING_TOKEN {
            SerializedValue::Missing
        } else {
            let cell = schema[col]
                .parse_cell(0, value)
                .map_err(|e| PromptError::MalformedRow(e.to_string()))?;
            SerializedValue::Present(cell)
        });
        rest = remainder;
        next = col + 1;
    }
    Ok(out)
}

/// Name of the first masked column whose held-out value appears in `text`
/// as a sentence, if any.
pub fn find_leak(
    text: &str,
    bundle: &TableBundle,
    row: usize,
    mask: &MissingnessMask,
) -> Option<String> {
    bundle.schema().iter().enumerate().find_map(|(c, col)| {
        let cell = bundle.cell(row, c);
        if !mask.contains(row, &col.name) || cell.is_absent() {
            return None;
        }
        text.contains(&sentence(&col.name, &col.render(&cell)))
            .then(|| col.name.clone())
    })
}

/// Task-specification prompts: system = persona + suffix, user = template
/// with the serialized row.
pub fn build_ts_prompt(
    profile: &ExpertProfile,
    ds: &str,
    system_suffix: &str,
) -> Result<(String, String), PromptError> {
    if profile.text.trim().is_empty() {
        return Err(PromptError::EmptyInput("expert profile"));
    }
    if ds.trim().is_empty() {
        return Err(PromptError::EmptyInput("serialized row"));
    }
    let system = alloc::format!("{}{}", profile.text, system_suffix);
    Ok((system, TS_USER.replace("{data}", ds)))
}

/// Appends the re-ask instruction used after an unparseable reply.
pub fn retry_prompt(user: &str) -> String {
    alloc::format!("{user}\n\n{RETRY_INSTRUCTION}")
}

/// Byte ranges of balanced `{...}` spans, in order of their opening brace.
fn json_object_spans(text: &str) -> impl Iterator<Item = &str> {
    let bytes = text.as_bytes();
    (0..bytes.len())
        .filter(move |&i| bytes[i] == b'{')
        .filter_map(move |start| {
            let mut depth = 0usize;
            let mut in_string = false;
            let mut escaped = false;
            for (i, &b) in bytes.iter().enumerate().skip(start) {
                if in_string {
                    match b {
                        _ if escaped => escaped = false,
                        b'\\' => escaped = true,
                        b'"' => in_string = false,
                        _ => {}
                    }
                    continue;
                }
                match b {
                    b'"' => in_string = true,
                    b'{' => depth += 1,
                    b'}' => {
                        depth -= 1;
                        if depth == 0 {
                            return Some(&text[start..=i]);
                        }
                    }
                    _ => {}
                }
            }
            None
        })
}

/// The `output` value of the first balanced JSON object that has one.
pub fn extract_output(response: &str) -> Option<Value> {
    json_object_spans(response).find_map(|span| {
        match serde_json::from_str::<Value>(span) {
            Ok(Value::Object(mut map)) => map.remove("output"),
            _ => None,
        }
    })
}

fn describe(value: &Value) -> String {
    match value {
        Value::Null => "null".into(),
        Value::Bool(_) => "a boolean".into(),
        Value::Number(n) => alloc::format!("the number {n}"),
        Value::String(s) => alloc::format!("the string `{s}`"),
        Value::Array(_) => "an array".into(),
        Value::Object(_) => "an object".into(),
    }
}

/// Extracts and coerces the imputed value for `column`.
pub fn parse_imputation_response(response: &str, column: &ColumnSchema) -> Result<Cell, PromptError> {
    let value = extract_output(response).ok_or(PromptError::NoJsonFound)?;
    match column.kind {
        ColumnKind::Continuous => {
            let number = match &value {
                Value::Number(n) => n.as_f64(),
                Value::String(s) => s.trim().parse::<f64>().ok(),
                _ => None,
            };
            match number {
                Some(v) if v.is_finite() => Ok(Cell::Number(v)),
                _ => Err(PromptError::TypeMismatch {
                    column: column.name.clone(),
                    expected: "finite number",
                    found: describe(&value),
                }),
            }
        }
        ColumnKind::Categorical => {
            let text = match &value {
                Value::String(s) => s.trim().to_string(),
                Value::Number(n) => n.to_string(),
                Value::Bool(b) => b.to_string(),
                _ => {
                    return Err(PromptError::TypeMismatch {
                        column: column.name.clone(),
                        expected: "category label",
                        found: describe(&value),
                    })
                }
            };
            column
                .categories
                .iter()
                .position(|c| c.trim().eq_ignore_ascii_case(&text) || c.trim().to_lowercase() == text.to_lowercase())
                .map(|i| Cell::Label(i as u32))
                .ok_or(PromptError::UnknownCategory {
                    column: column.name.clone(),
                    value: text,
                })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockEntry, MockScript};
    use crate::missingness::Mechanism;
    use crate::table::testing::bundle_from_columns;
    use alloc::collections::BTreeSet;
    use alloc::vec;
    use proptest::prelude::*;

    fn bp_bundle() -> TableBundle {
        let schema = vec![
            ColumnSchema::continuous("Age"),
            ColumnSchema::categorical("Sex", ["M", "F"]),
            ColumnSchema::continuous("Blood Pressure"),
            ColumnSchema::categorical("y", ["0", "1"]),
        ];
        let rows = vec![vec![
            Cell::Number(37.0),
            Cell::Label(0),
            Cell::Number(120.0),
            Cell::Label(1),
        ]];
        bundle_from_columns(schema, rows)
    }

    fn mask_of(cells: &[(usize, &str)]) -> MissingnessMask {
        MissingnessMask {
            mechanism: Mechanism::Mar,
            cells: cells.iter().map(|(r, c)| (*r, c.to_string())).collect(),
            conditioning: BTreeMap::new(),
        }
    }

    #[test]
    fn epi_prompt_substitutes_description() {
        let (system, user) = build_epi_prompt("German credit data").unwrap();
        assert!(system.starts_with("I am going to give you a description of a dataset"));
        assert!(user.contains("Here is the description of the dataset:\n\nGerman credit data"));
        assert!(!user.contains("{description}"));
        assert_eq!(build_epi_prompt(""), Err(PromptError::EmptyInput("description")));
    }

    #[test]
    fn task_subject_rewrites_dataset() {
        let (system, user) = build_epi_prompt_for("rainfall", Subject::Task).unwrap();
        assert!(system.contains("a description of a task"));
        assert!(user.contains("Here is the description of the task:"));
    }

    #[test]
    fn profile_passes_through_and_is_memoized() {
        let mock = MockScript::new(
            vec![MockEntry::contains(
                "description of the dataset",
                "You are a veteran credit risk officer.",
            )],
            "",
        );
        let b = bp_bundle();
        let mut store = ProfileStore::new();
        let p = store.elicit_expert_profile(&b, &mock, "m").unwrap();
        assert_eq!(p.text, "You are a veteran credit risk officer.");
        assert_eq!(p.origin, ProfileOrigin::Expert);
        store.elicit_expert_profile(&b, &mock, "m").unwrap();
        assert_eq!(mock.calls(), 1);
    }

    #[test]
    fn empty_profile_is_an_error() {
        let mock = MockScript::new(vec![], "");
        let err = ProfileStore::new()
            .elicit_expert_profile(&bp_bundle(), &mock, "m")
            .unwrap_err();
        assert_eq!(err, PromptError::Gateway(GatewayError::EmptyResponse));
    }

    #[test]
    fn serializes_blood_pressure_example() {
        let b = bp_bundle();
        let text = serialize_row(&b, 0, "Blood Pressure", &mask_of(&[(0, "Blood Pressure")])).unwrap();
        assert_eq!(
            text,
            "The Age is 37. The Sex is M. The Blood Pressure is <missing>. The y is 1."
        );
    }

    #[test]
    fn other_masked_cells_are_omitted() {
        let b = bp_bundle();
        let mask = mask_of(&[(0, "Blood Pressure"), (0, "Age")]);
        let text = serialize_row(&b, 0, "Blood Pressure", &mask).unwrap();
        assert!(!text.contains("Age"));
        assert_eq!(find_leak(&text, &b, 0, &mask), None);
    }

    #[test]
    fn degenerate_row_keeps_only_missing_sentence() {
        let b = bp_bundle();
        let mask = mask_of(&[(0, "Age"), (0, "Sex"), (0, "Blood Pressure"), (0, "y")]);
        let text = serialize_row(&b, 0, "Age", &mask).unwrap();
        assert_eq!(text, "The Age is <missing>.");
    }

    #[test]
    fn unmasked_target_rejected() {
        let b = bp_bundle();
        assert!(matches!(
            serialize_row(&b, 0, "Age", &mask_of(&[])),
            Err(PromptError::TargetNotMasked { .. })
        ));
    }

    #[test]
    fn leak_detector_flags_embedded_value() {
        let b = bp_bundle();
        let mask = mask_of(&[(0, "Age")]);
        assert_eq!(
            find_leak("The Age is 37. The Sex is M.", &b, 0, &mask),
            Some("Age".into())
        );
    }

    #[test]
    fn ts_prompt_layout() {
        let profile = ExpertProfile {
            text: "You are a cardiologist.".into(),
            origin: ProfileOrigin::Expert,
        };
        let (system, user) = build_ts_prompt(&profile, "The Age is <missing>.", "").unwrap();
        assert_eq!(system, "You are a cardiologist.");
        assert!(user.contains("marked as <missing>"));
        assert!(user.contains("RESPONSE FORMAT: {\"output\": value}"));
        assert!(user.contains("\n\nThe Age is <missing>.\n\n"));
        assert_eq!(
            build_ts_prompt(&profile, "The Age is <missing>.", "").unwrap(),
            (system, user)
        );
        let control = ExpertProfile::non_expert();
        let (csys, cuser) = build_ts_prompt(&control, "The Age is <missing>.", "\n\n###").unwrap();
        assert!(csys.starts_with("You are an individual with no academic"));
        assert!(csys.ends_with("###"));
        assert!(cuser.contains("marked as <missing>"));
    }

    #[test]
    fn parses_plain_and_chatty_replies() {
        let age = ColumnSchema::continuous("Age");
        let sex = ColumnSchema::categorical("Sex", ["M", "F"]);
        assert_eq!(parse_imputation_response(r#"{"output": 42}"#, &age), Ok(Cell::Number(42.0)));
        assert_eq!(
            parse_imputation_response(r#"Sure! {"output": "M"}"#, &sex),
            Ok(Cell::Label(0))
        );
        assert_eq!(
            parse_imputation_response(r#"{"output": " f "}"#, &sex),
            Ok(Cell::Label(1))
        );
        assert_eq!(
            parse_imputation_response(r#"{"output": "unknown"}"#, &sex),
            Err(PromptError::UnknownCategory {
                column: "Sex".into(),
                value: "unknown".into()
            })
        );
        assert_eq!(parse_imputation_response("I think 42", &age), Err(PromptError::NoJsonFound));
        assert!(matches!(
            parse_imputation_response(r#"{"output": "tall"}"#, &age),
            Err(PromptError::TypeMismatch { .. })
        ));
        assert!(matches!(
            parse_imputation_response(r#"{"output": [1]}"#, &sex),
            Err(PromptError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn first_object_with_output_key_wins() {
        let age = ColumnSchema::continuous("Age");
        let reply = r#"{"note": "x}"} then {"meta": {"output": 3}} and {"output": 9}"#;
        assert_eq!(parse_imputation_response(reply, &age), Ok(Cell::Number(3.0)));
    }

    /// Reference extractor: try every `{` start and every `}` end, keep the
    /// shortest span that parses as a JSON object with an `output` key.
    fn brute_force_output(text: &str) -> Option<Value> {
        let starts: Vec<usize> = text.match_indices('{').map(|(i, _)| i).collect();
        let ends: Vec<usize> = text.match_indices('}').map(|(i, _)| i).collect();
        for s in starts {
            for &e in ends.iter().filter(|&&e| e > s) {
                if let Ok(Value::Object(mut m)) = serde_json::from_str::<Value>(&text[s..=e]) {
                    if let Some(v) = m.remove("output") {
                        return Some(v);
                    }
                    break;
                }
            }
        }
        None
    }

    #[test]
    fn extraction_matches_brute_force() {
        let cases = [
            r#"Sure! {"output": "M"}"#,
            r#"{"output": 1.5} trailing {"output": 2}"#,
            r#"prefix {"a": 1} {"output": "x"}"#,
            r#"{"output": "{weird}"}"#,
            "no json here",
            r#"{"output": null}"#,
        ];
        for case in cases {
            assert_eq!(extract_output(case), brute_force_output(case), "{case}");
        }
    }

    fn label_strategy() -> impl Strategy<Value = String> {
        "[A-Za-z][A-Za-z0-9_]{0,6}"
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn serialization_round_trips(
            values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 3),
            labels in proptest::collection::btree_set(label_strategy(), 2..5),
            pick in 0usize..100,
            absent in 0usize..5,
        ) {
            let labels: Vec<String> = labels.into_iter().collect();
            let schema = vec![
                ColumnSchema::continuous("Age"),
                ColumnSchema::categorical("Sex", labels.clone()),
                ColumnSchema::continuous("Blood Pressure"),
                ColumnSchema::continuous("Pulse"),
            ];
            let mut cells = vec![
                Cell::Number(values[0]),
                Cell::Label((pick % labels.len()) as u32),
                Cell::Number(values[1]),
                Cell::Number(values[2]),
            ];
            if absent < cells.len() {
                cells[absent] = Cell::Absent;
            }
            let text = serialize_cells(&schema, &cells);
            let parsed = parse_serialized_row(&text, &schema).unwrap();
            for (cell, back) in cells.iter().zip(parsed) {
                match cell {
                    Cell::Absent => prop_assert!(back.is_none()),
                    c => prop_assert_eq!(back, Some(SerializedValue::Present(*c))),
                }
            }
        }

        #[test]
        fn imputation_parse_inverts_formatting(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            let col = ColumnSchema::continuous("x");
            let reply = alloc::format!("{{\"output\": {}}}", col.render(&Cell::Number(v)));
            prop_assert_eq!(parse_imputation_response(&reply, &col).unwrap(), Cell::Number(v));
        }
    }

    #[test]
    fn serialized_rows_are_injective_in_values() {
        let b = bp_bundle();
        let schema = b.schema();
        let mut seen = BTreeSet::new();
        for age in 0..20 {
            for sex in 0..2u32 {
                let cells = [Cell::Number(age as f64), Cell::Label(sex), Cell::Number(1.0), Cell::Label(0)];
                assert!(seen.insert(serialize_cells(schema, &cells)));
            }
        }
    }
}
