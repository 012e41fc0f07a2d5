use alloc::string::String;

use serde::{Deserialize, Serialize};

/// One metric observation, the row type of every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub dataset: String,
    pub domain: Option<String>,
    pub method: String,
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    pub value: f64,
}

impl EvalRecord {
    pub fn new(
        dataset: impl Into<String>,
        domain: Option<&str>,
        method: impl Into<String>,
        metric: impl Into<String>,
        column: Option<&str>,
        value: f64,
    ) -> Self {
        Self {
            dataset: dataset.into(),
            domain: domain.map(String::from),
            method: method.into(),
            metric: metric.into(),
            column: column.map(String::from),
            value,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_layout() {
        let r = EvalRecord::new("iris", Some("biology"), "knn", "nrmse", Some("petal"), 0.25);
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"dataset":"iris","domain":"biology","method":"knn","metric":"nrmse","column":"petal","value":0.25}"#
        );
        let r = EvalRecord::new("iris", None, "knn", "accuracy", None, 1.0);
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"dataset":"iris","domain":null,"method":"knn","metric":"accuracy","value":1.0}"#
        );
    }
}
