//! The `elicit` and `ess` commands.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use llmexpert_core::elicitation::ess::{data_dependent_ess, ess_heuristic, Aggregation, EssConfig};
use llmexpert_core::elicitation::scoring::{clamp_to_support, ScoringMetric};
use llmexpert_core::elicitation::{
    build_elicitation_prompt, elicit, persona_profile, DataRef, ElicitationTask, Persona, Protocol,
};
use llmexpert_core::prompting::ExpertProfile;
use llmexpert_core::{Family, ParametricDistribution};
use serde::{Deserialize, Serialize};

use crate::fsutil::{read_jsonl, write_atomic, write_jsonl};
use crate::gateway::Gateway;
use crate::manifest::{InputRef, Manifest, RunStatus};
use crate::weather::{CitiesFile, WeatherArchive};
use crate::{io_at, CliError};

pub const RESULTS_FILE: &str = "results.jsonl";

pub fn load_tasks(path: &Path) -> Result<Vec<ElicitationTask>, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let tasks: Vec<ElicitationTask> =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut seen = std::collections::HashSet::new();
    for t in &tasks {
        t.validate().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if !seen.insert(t.id.as_str()) {
            return Err(CliError::Config(format!("{}: duplicate task id `{}`", path.display(), t.id)));
        }
    }
    Ok(tasks)
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).map_err(io_at(path))?;
    Ok(llmexpert_core::gateway::to_hex(&Sha256::digest(&bytes)))
}

/// Ground-truth observations for tasks.
pub struct DataResolver {
    cities: Option<CitiesFile>,
    archive: Option<WeatherArchive>,
    memo: std::sync::Mutex<HashMap<String, Vec<f64>>>,
}

impl DataResolver {
    pub fn none() -> Self {
        Self {
            cities: None,
            archive: None,
            memo: Default::default(),
        }
    }

    pub fn new(cities: Option<&Path>, fixtures: Option<&Path>, endpoint: Option<String>, offline: bool) -> Result<Self, CliError> {
        let cities = cities.map(CitiesFile::load).transpose().map_err(CliError::config)?;
        let archive = match (&cities, fixtures) {
            (Some(_), Some(dir)) => Some(WeatherArchive::new(dir, endpoint, offline)),
            (Some(_), None) => return Err(CliError::Config("--cities needs --fixtures".into())),
            _ => None,
        };
        Ok(Self {
            cities,
            archive,
            memo: Default::default(),
        })
    }

    pub fn resolve(&self, task: &ElicitationTask) -> Result<Vec<f64>, String> {
        match &task.data {
            None => Err(format!("task `{}` has no ground-truth data", task.id)),
            Some(DataRef::Inline { values }) => Ok(values.clone()),
            Some(DataRef::Weather { city, variable }) => {
                let key = format!("{city}/{variable:?}");
                if let Some(v) = self.memo.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
                    return Ok(v.clone());
                }
                let (Some(cities), Some(archive)) = (&self.cities, &self.archive) else {
                    return Err(format!("task `{}` needs weather data; pass --cities and --fixtures", task.id));
                };
                let config = cities.find(city).map_err(|e| e.to_string())?;
                let series = archive.fetch_city(config, cities.window()).map_err(|e| e.to_string())?;
                let values = series.values(*variable);
                self.memo
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .insert(key, values.clone());
                Ok(values)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Failed,
}

/// One line of `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationRow {
    pub task: String,
    pub domain: String,
    pub model: String,
    pub persona: Persona,
    pub protocol: Protocol,
    pub family: Family,
    pub status: RowStatus,
    #[serde(default)]
    pub params: Option<Vec<f64>>,
    #[serde(default)]
    pub distribution: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ess_heuristic: Option<f64>,
    #[serde(default)]
    pub scores: BTreeMap<String, f64>,
    #[serde(default)]
    pub errors: Vec<String>,
}

impl ElicitationRow {
    pub fn prior(&self) -> Option<ParametricDistribution> {
        self.params
            .as_ref()
            .and_then(|p| ParametricDistribution::new(self.family, p).ok())
    }
}

pub struct ElicitOptions {
    pub tasks: PathBuf,
    pub models: Vec<String>,
    /// `None` keeps each task's own persona / protocol.
    pub personas: Option<Vec<Persona>>,
    pub protocols: Option<Vec<Protocol>>,
    pub out: PathBuf,
    pub dump_prompts: bool,
}

fn dedup<T: PartialEq + Copy>(items: &[T]) -> Vec<T> {
    let mut out = Vec::new();
    for &x in items {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

#[derive(Serialize)]
struct PromptDump<'a> {
    task: &'a str,
    model: &'a str,
    persona: Persona,
    protocol: Protocol,
    system: &'a str,
    user: &'a str,
    responses: Vec<&'a str>,
}

/// Runs the full grid. Cell failures are recorded in their row.
pub fn run_elicit(opts: &ElicitOptions, gw: &Gateway, data: &DataResolver, argv: &[String]) -> Result<Vec<ElicitationRow>, CliError> {
    let tasks = load_tasks(&opts.tasks)?;
    if opts.models.is_empty() {
        return Err(CliError::Config("at least one --model is required".into()));
    }
    let run = opts.out.as_path();
    std::fs::create_dir_all(run).map_err(io_at(run))?;
    let mut manifest = Manifest::new("elicit", argv);
    let mut models: Vec<String> = Vec::new();
    for m in &opts.models {
        if !models.contains(m) {
            models.push(m.clone());
        }
    }
    manifest.models = models.clone();
    manifest.inputs.push(InputRef {
        path: opts.tasks.display().to_string(),
        name: "tasks".into(),
        digest: file_digest(&opts.tasks)?,
    });
    manifest.write(run)?;

    let mut rows = Vec::new();
    let mut dumps = Vec::new();
    let mut experts: HashMap<(String, String), Result<ExpertProfile, String>> = HashMap::new();
    for model in &models {
        for task in &tasks {
            let personas = dedup(opts.personas.as_deref().unwrap_or(&[task.persona]));
            let protocols = dedup(opts.protocols.as_deref().unwrap_or(&[task.protocol]));
            for &persona in &personas {
                for &protocol in &protocols {
                    let cell = ElicitationTask {
                        persona,
                        protocol,
                        ..task.clone()
                    };
                    let mut row = ElicitationRow {
                        task: task.id.clone(),
                        domain: task.domain.clone(),
                        model: model.clone(),
                        persona,
                        protocol,
                        family: task.family,
                        status: RowStatus::Failed,
                        params: None,
                        distribution: None,
                        ess_heuristic: None,
                        scores: BTreeMap::new(),
                        errors: Vec::new(),
                    };
                    let profile = if persona == Persona::NonExpert {
                        persona_profile(&cell, gw, model).map_err(|e| e.to_string())
                    } else {
                        experts
                            .entry((task.id.clone(), model.clone()))
                            .or_insert_with(|| persona_profile(&cell, gw, model).map_err(|e| e.to_string()))
                            .clone()
                    };
                    let profile = match profile {
                        Ok(p) => p,
                        Err(e) => {
                            row.errors.push(format!("persona: {e}"));
                            rows.push(row);
                            continue;
                        }
                    };
                    match elicit(&cell, &profile, gw, model) {
                        Ok(outcome) => {
                            row.errors.extend(outcome.errors.iter().cloned());
                            if opts.dump_prompts {
                                let (system, user) = build_elicitation_prompt(&cell, &profile);
                                dumps.push((row.task.clone(), row.model.clone(), persona, protocol, system, user,
                                    outcome.exchanges.iter().map(|e| e.response.clone()).collect::<Vec<_>>()));
                            }
                            if let Some(dist) = outcome.distribution {
                                row.status = RowStatus::Ok;
                                row.params = Some(dist.params());
                                row.distribution = Some(dist.to_stan());
                                row.ess_heuristic = ess_heuristic(&dist).ok();
                                if task.data.is_some() {
                                    match data.resolve(task) {
                                        Ok(values) => {
                                            for metric in ScoringMetric::ALL {
                                                match metric.score(&dist, &values) {
                                                    Ok(s) => {
                                                        row.scores.insert(metric.id().into(), s);
                                                    }
                                                    Err(e) => row.errors.push(format!("{}: {e}", metric.id())),
                                                }
                                            }
                                        }
                                        Err(e) => row.errors.push(e),
                                    }
                                }
                            }
                        }
                        Err(e) => row.errors.push(e.to_string()),
                    }
                    rows.push(row);
                }
            }
        }
    }

    let path = run.join(RESULTS_FILE);
    write_jsonl(&path, &rows).map_err(io_at(&path))?;
    manifest.output(RESULTS_FILE);
    if opts.dump_prompts {
        let records: Vec<PromptDump> = dumps
            .iter()
            .map(|(task, model, persona, protocol, system, user, responses)| PromptDump {
                task,
                model,
                persona: *persona,
                protocol: *protocol,
                system,
                user,
                responses: responses.iter().map(String::as_str).collect(),
            })
            .collect();
        let rel = "prompts/elicitation.jsonl";
        let path = run.join(rel);
        write_jsonl(&path, &records).map_err(io_at(&path))?;
        manifest.output(rel);
    }
    let failed = rows.iter().filter(|r| r.status == RowStatus::Failed).count();
    if failed > 0 {
        manifest.notes.push(format!("{failed} of {} grid cells produced no distribution", rows.len()));
    }
    manifest.status = RunStatus::Complete;
    manifest.write(run)?;
    Ok(rows)
}

pub struct EssOptions {
    pub results: PathBuf,
    pub tasks: PathBuf,
    pub metric: ScoringMetric,
    pub repeats: usize,
    pub seed: u64,
    pub aggregation: Aggregation,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssRow {
    pub task: String,
    pub domain: String,
    pub model: String,
    pub persona: Persona,
    pub protocol: Protocol,
    pub family: Family,
    pub metric: ScoringMetric,
    pub ess: Option<f64>,
    pub censored: Option<bool>,
    pub grid_max: Option<usize>,
    pub prior_score: Option<f64>,
    pub ess_heuristic: Option<f64>,
    pub error: Option<String>,
}

/// Support problems between an elicited prior, its task and the data.
pub fn check_support(task: &ElicitationTask, prior: &ParametricDistribution, data: &[f64]) -> Result<(), String> {
    let as_prior = ElicitationTask {
        family: prior.family(),
        ..task.clone()
    };
    as_prior.validate().map_err(|e| e.to_string())?;
    let (lo, hi) = prior.support_bounds();
    if let Some(x) = data.iter().map(|&x| clamp_to_support(prior, x)).find(|x| !(*x >= lo && *x <= hi)) {
        return Err(format!("observation {x} lies outside the {} support [{lo}, {hi}]", prior.family()));
    }
    Ok(())
}

fn ess_row(row: &ElicitationRow, task: Option<&ElicitationTask>, data: &DataResolver, opts: &EssOptions) -> EssRow {
    let mut out = EssRow {
        task: row.task.clone(),
        domain: row.domain.clone(),
        model: row.model.clone(),
        persona: row.persona,
        protocol: row.protocol,
        family: row.family,
        metric: opts.metric,
        ess: None,
        censored: None,
        grid_max: None,
        prior_score: None,
        ess_heuristic: None,
        error: None,
    };
    let result = (|| {
        let prior = row.prior().ok_or_else(|| "no elicited distribution".to_string())?;
        out.ess_heuristic = ess_heuristic(&prior).ok();
        let task = task.ok_or_else(|| format!("task `{}` not in the task file", row.task))?;
        let values = data.resolve(task)?;
        check_support(task, &prior, &values)?;
        let config = EssConfig {
            repeats: opts.repeats,
            aggregation: opts.aggregation,
            ..EssConfig::new(opts.metric, opts.seed)
        };
        data_dependent_ess(&prior, &values, &config).map_err(|e| e.to_string())
    })();
    match result {
        Ok(r) => {
            out.ess = Some(r.ess);
            out.censored = Some(r.censored);
            out.grid_max = Some(r.grid_max);
            out.prior_score = Some(r.prior_score);
        }
        Err(e) => out.error = Some(e),
    }
    out
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos - pos.floor());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// ESS per elicited prior plus the distribution of ESS values per group.
pub fn run_ess(opts: &EssOptions, data: &DataResolver, argv: &[String]) -> Result<Vec<EssRow>, CliError> {
    let tasks = load_tasks(&opts.tasks)?;
    let results: Vec<ElicitationRow> =
        read_jsonl(&opts.results).map_err(|e| CliError::Config(format!("{}: {e}", opts.results.display())))?;
    let run = opts.out.as_path();
    std::fs::create_dir_all(run).map_err(io_at(run))?;
    let mut manifest = Manifest::new("ess", argv);
    manifest.seed = Some(opts.seed);
    for (path, name) in [(&opts.results, "results"), (&opts.tasks, "tasks")] {
        manifest.inputs.push(InputRef {
            path: path.display().to_string(),
            name: name.into(),
            digest: file_digest(path)?,
        });
    }
    manifest.write(run)?;

    let by_id: HashMap<&str, &ElicitationTask> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let rows: Vec<EssRow> = results
        .iter()
        .map(|r| ess_row(r, by_id.get(r.task.as_str()).copied(), data, opts))
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "task", "domain", "model", "persona", "protocol", "family", "metric", "ess", "censored", "grid_max",
        "prior_score", "ess_heuristic", "error",
    ])
    .expect("in memory");
    for r in &rows {
        w.write_record([
            r.task.clone(),
            r.domain.clone(),
            r.model.clone(),
            r.persona.id().into(),
            r.protocol.id().into(),
            r.family.stan_name().into(),
            r.metric.id().into(),
            opt(&r.ess),
            opt(&r.censored),
            opt(&r.grid_max),
            opt(&r.prior_score),
            opt(&r.ess_heuristic),
            r.error.clone().unwrap_or_default(),
        ])
        .expect("in memory");
    }
    let path = run.join("ess.csv");
    write_atomic(&path, &w.into_inner().expect("in memory")).map_err(io_at(&path))?;
    manifest.output("ess.csv");

    // distribution of ESS per (domain, model, persona, protocol)
    let mut groups: BTreeMap<(String, String, &str, &str), Vec<f64>> = BTreeMap::new();
    for r in &rows {
        if let Some(e) = r.ess {
            groups
                .entry((r.domain.clone(), r.model.clone(), r.persona.id(), r.protocol.id()))
                .or_default()
                .push(e);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["domain", "model", "persona", "protocol", "count", "min", "q25", "median", "q75", "max", "mean"])
        .expect("in memory");
    for ((domain, model, persona, protocol), mut v) in groups {
        v.sort_by(f64::total_cmp);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let cells = [
            domain,
            model,
            persona.into(),
            protocol.into(),
            v.len().to_string(),
            v[0].to_string(),
            quantile(&v, 0.25).to_string(),
            quantile(&v, 0.5).to_string(),
            quantile(&v, 0.75).to_string(),
            v[v.len() - 1].to_string(),
            mean.to_string(),
        ];
        w.write_record(cells).expect("in memory");
    }
    let path = run.join("ess_distribution.csv");
    write_atomic(&path, &w.into_inner().expect("in memory")).map_err(io_at(&path))?;
    manifest.output("ess_distribution.csv");

    // rows without a distribution already failed at elicitation time
    let failed = rows
        .iter()
        .zip(&results)
        .filter(|(r, res)| r.error.is_some() && res.status == RowStatus::Ok)
        .count();
    if failed > 0 {
        let err = CliError::Partial(format!("{failed} of {} priors could not be scored; see ess.csv", rows.len()));
        return Err(manifest.fail(run, "ess", err));
    }
    manifest.status = RunStatus::Complete;
    manifest.write(run)?;
    Ok(rows)
}
