//! Prior elicitation: task definitions, protocol prompts, parsing of
//! Stan-style distribution replies, and scoring against data.

pub mod ess;
pub mod scoring;

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{DistributionError, Family, ParametricDistribution};
use crate::gateway::{ChatBackend, ChatExchange, GatewayError};
use crate::prompting::{elicit_profile, ExpertProfile, PromptError, Subject};

pub use ess::{data_dependent_ess, ess_heuristic, Aggregation, EssConfig, EssError, EssResult};
pub use scoring::{crps, crps_quadrature, log_loss, mean_crps, mse, ScoreError, ScoringMetric};

pub const ELICIT_DIRECT: &str = include_str!("../../templates/elicit_direct.txt");
pub const ELICIT_SHELF: &str = include_str!("../../templates/elicit_shelf.txt");
pub const ELICIT_ROULETTE: &str = include_str!("../../templates/elicit_roulette.txt");
pub const CONFERENCE: &str = include_str!("../../templates/conference.txt");
pub const ELICIT_RETRY: &str =
    "Reply with exactly one distribution surrounded by backticks, for example `y ~ normal(0, 1)`.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Persona {
    #[default]
    Expert,
    Conference,
    NonExpert,
}

impl Persona {
    pub const ALL: [Persona; 3] = [Persona::Expert, Persona::Conference, Persona::NonExpert];

    pub fn id(self) -> &'static str {
        match self {
            Persona::Expert => "expert",
            Persona::Conference => "conference",
            Persona::NonExpert => "non_expert",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    Direct,
    Shelf,
    Roulette,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Direct, Protocol::Shelf, Protocol::Roulette];

    pub fn id(self) -> &'static str {
        match self {
            Protocol::Direct => "direct",
            Protocol::Shelf => "shelf",
            Protocol::Roulette => "roulette",
        }
    }

    fn template(self) -> &'static str {
        match self {
            Protocol::Direct => ELICIT_DIRECT,
            Protocol::Shelf => ELICIT_SHELF,
            Protocol::Roulette => ELICIT_ROULETTE,
        }
    }
}

/// Where the ground-truth observations of a task come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataRef {
    Weather { city: String, variable: WeatherVariable },
    Inline { values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherVariable {
    Temperature,
    Precipitation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationTask {
    pub id: String,
    pub domain: String,
    /// Completes "a prior distribution for ...".
    pub question: String,
    pub family: Family,
    /// Closed interval the quantity lives on; `null` bounds are unbounded.
    #[serde(default)]
    pub support: Option<(Option<f64>, Option<f64>)>,
    #[serde(default)]
    pub persona: Persona,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataRef>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElicitError {
    #[error("task `{0}` has an empty id or question")]
    EmptyTask(String),
    #[error("task `{task}`: {family} family cannot live on the declared support [{lo}, {hi}]")]
    SupportMismatch {
        task: String,
        family: Family,
        lo: f64,
        hi: f64,
    },
    #[error("no backtick-delimited `y ~ family(...)` expression found")]
    NoDistributionFound,
    #[error("expected a {expected} distribution, found `{found}`")]
    FamilyMismatch { expected: Family, found: String },
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("student_t needs (nu, mu, sigma); two arguments are ambiguous")]
    AmbiguousArity,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl ElicitationTask {
    pub fn support_bounds(&self) -> (f64, f64) {
        let (lo, hi) = self.support.unwrap_or((None, None));
        (lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY))
    }

    /// The family's support has to fit inside the declared one.
    pub fn validate(&self) -> Result<(), ElicitError> {
        if self.id.trim().is_empty() || self.question.trim().is_empty() {
            return Err(ElicitError::EmptyTask(self.id.clone()));
        }
        let (lo, hi) = self.support_bounds();
        let (flo, fhi) = match self.family {
            Family::Normal | Family::StudentT => (f64::NEG_INFINITY, f64::INFINITY),
            Family::Beta => (0.0, 1.0),
            Family::Gamma | Family::Lognormal => (0.0, f64::INFINITY),
            // bounds come with the elicited parameters
            Family::Uniform => (lo, hi),
        };
        if !(lo <= hi && flo >= lo && fhi <= hi) {
            return Err(ElicitError::SupportMismatch {
                task: self.id.clone(),
                family: self.family,
                lo,
                hi,
            });
        }
        Ok(())
    }
}

/// (system, user) prompts for a task. The system prompt is the persona.
pub fn build_elicitation_prompt(task: &ElicitationTask, profile: &ExpertProfile) -> (String, String) {
    let conference = if task.persona == Persona::Conference {
        CONFERENCE.trim_end_matches('\n')
    } else {
        ""
    };
    let user = task
        .protocol
        .template()
        .trim_end_matches('\n')
        .replace("{question}", &task.question)
        .replace("{conference}", conference)
        .replace("{family}", task.family.stan_name())
        .replace("{signature}", task.family.signature());
    (profile.text.clone(), user)
}

/// Persona for a task: the elicited expert for expert and conference modes,
/// the fixed control text otherwise.
pub fn persona_profile<B: ChatBackend + ?Sized>(
    task: &ElicitationTask,
    backend: &B,
    model: &str,
) -> Result<ExpertProfile, ElicitError> {
    match task.persona {
        Persona::NonExpert => Ok(ExpertProfile::non_expert_for(Subject::Task)),
        Persona::Expert | Persona::Conference => {
            Ok(elicit_profile(&task.question, Subject::Task, backend, model)?)
        }
    }
}

/// Contents of backtick-delimited spans, in order.
fn backtick_spans(text: &str) -> impl Iterator<Item = &str> {
    text.split('`').skip(1).step_by(2)
}

/// Parses `name ~ family(a, b, ...)` somewhere in `span`, the last one winning.
fn parse_expression(span: &str) -> Option<(String, Vec<String>)> {
    let mut found = None;
    for (tilde, _) in span.match_indices('~') {
        let rest = span[tilde + 1..].trim_start();
        let name_len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        if name_len == 0 {
            continue;
        }
        let name = &rest[..name_len];
        let after = rest[name_len..].trim_start();
        let Some(args) = after.strip_prefix('(') else {
            continue;
        };
        let Some(close) = args.find(')') else {
            continue;
        };
        let args = args[..close]
            .split(',')
            .map(|a| a.trim().to_string())
            .collect();
        found = Some((name.to_string(), args));
    }
    found
}

/// Extracts the last backtick-delimited distribution and checks it against
/// the expected family. Parameters are never adjusted.
pub fn parse_distribution(
    response: &str,
    expected: Family,
) -> Result<ParametricDistribution, ElicitError> {
    let (name, args) = backtick_spans(response)
        .filter_map(parse_expression)
        .last()
        .ok_or(ElicitError::NoDistributionFound)?;
    let family = Family::from_stan_name(&name.to_ascii_lowercase())
        .filter(|f| *f == expected)
        .ok_or(ElicitError::FamilyMismatch {
            expected,
            found: name.clone(),
        })?;
    let params: Vec<f64> = args
        .iter()
        .map(|a| a.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| ElicitError::InvalidParameters(alloc::format!("non-numeric argument in {args:?}")))?;
    if family == Family::StudentT && params.len() == 2 {
        return Err(ElicitError::AmbiguousArity);
    }
    ParametricDistribution::new(family, &params).map_err(|e| match e {
        DistributionError::Arity { .. } | DistributionError::InvalidParameters { .. } => {
            ElicitError::InvalidParameters(e.to_string())
        }
    })
}

/// Result of eliciting one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elicitation {
    pub task: String,
    pub model: String,
    pub persona: Persona,
    pub protocol: Protocol,
    pub family: Family,
    pub distribution: Option<ParametricDistribution>,
    /// Parse problems, first attempt first.
    pub errors: Vec<String>,
    pub exchanges: Vec<ChatExchange>,
}

/// Asks for a distribution, re-asking once when the reply cannot be used.
pub fn elicit<B: ChatBackend + ?Sized>(
    task: &ElicitationTask,
    profile: &ExpertProfile,
    backend: &B,
    model: &str,
) -> Result<Elicitation, ElicitError> {
    task.validate()?;
    let (system, user) = build_elicitation_prompt(task, profile);
    let mut out = Elicitation {
        task: task.id.clone(),
        model: model.into(),
        persona: task.persona,
        protocol: task.protocol,
        family: task.family,
        distribution: None,
        errors: Vec::new(),
        exchanges: Vec::new(),
    };
    for attempt in 0..2 {
        let prompt = if attempt == 0 {
            user.clone()
        } else {
            alloc::format!("{user}\n\n{ELICIT_RETRY}")
        };
        let exchange = match backend.complete(model, &system, &prompt) {
            Ok(e) => e,
            Err(GatewayError::EmptyResponse) => {
                out.errors.push(GatewayError::EmptyResponse.to_string());
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let parsed = parse_distribution(&exchange.response, task.family);
        out.exchanges.push(exchange);
        match parsed {
            Ok(d) => {
                out.distribution = Some(d);
                break;
            }
            Err(e) => out.errors.push(e.to_string()),
        }
    }
    Ok(out)
}
