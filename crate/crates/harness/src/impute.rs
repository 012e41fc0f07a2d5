//! The `impute` command: split, inject MAR, run the imputers, persist tables
//! and metrics.

use std::path::{Path, PathBuf};

use llmexpert_core::downstream::{downstream_records, imputation_metrics};
use llmexpert_core::forest::ForestParams;
use llmexpert_core::gateway::to_hex;
use llmexpert_core::impute::{
    impute_knn, impute_llm, impute_mean_mode, impute_missforest, CellExchange, LlmSettings, MissForestParams,
    DEFAULT_K,
};
use llmexpert_core::missingness::{inject_mar, DEFAULT_TEST_MISSING, DEFAULT_TRAIN_MISSING};
use llmexpert_core::prompting::{build_epi_prompt, build_ts_prompt, serialize_row, ExpertProfile, ProfileStore};
use llmexpert_core::table::split_train_test;
use llmexpert_core::{Cell, ChatExchange, EvalRecord, ImputeError, ImputedTable, Method, MissingnessMask, Split, TableBundle};
use serde::Serialize;

use crate::bundle::{load_bundle, table_csv};
use crate::fsutil::{write_atomic, write_json, write_jsonl};
use crate::gateway::Gateway;
use crate::manifest::{InputRef, Manifest, RunStatus};
use crate::{io_at, CliError};

pub const TRAIN_FRACTION: f64 = 0.8;
pub const METRICS_FILE: &str = "metrics.jsonl";

#[derive(Debug, Clone)]
pub struct ImputeOptions {
    pub bundles: Vec<PathBuf>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub model: String,
    pub dump_prompts: bool,
    pub out: PathBuf,
    pub knn_k: usize,
    pub trees: usize,
}

impl ImputeOptions {
    pub fn new(bundles: Vec<PathBuf>, methods: Vec<Method>, out: PathBuf) -> Self {
        Self {
            bundles,
            methods,
            seed: 0,
            model: "gpt-4".into(),
            dump_prompts: false,
            out,
            knn_k: DEFAULT_K,
            trees: 100,
        }
    }
}

/// Parses a comma-separated method list; `mean` and `llm` are accepted as
/// short forms.
pub fn parse_methods(list: &str) -> Result<Vec<Method>, CliError> {
    let mut out = Vec::new();
    for raw in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m = match raw {
            "mean" | "mode" => Method::MeanMode,
            "rf" | "miss_forest" => Method::MissForest,
            "llm" => Method::LlmExpert,
            "non_expert" => Method::LlmNonExpert,
            other => other.parse().map_err(CliError::config)?,
        };
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("no imputation methods selected".into()));
    }
    Ok(out)
}

struct Prepared {
    dir: PathBuf,
    bundle: TableBundle,
    split: Split,
    mask: MissingnessMask,
}

fn prepare(path: &Path, seed: u64) -> Result<Prepared, CliError> {
    let bundle = load_bundle(path).map_err(CliError::config)?;
    let split = split_train_test(&bundle, TRAIN_FRACTION, seed).map_err(CliError::config)?;
    let mask = inject_mar(&bundle, &split, DEFAULT_TRAIN_MISSING, DEFAULT_TEST_MISSING, seed)
        .map_err(|e| CliError::Config(format!("{}: {e}", bundle.name())))?;
    Ok(Prepared {
        dir: path.to_path_buf(),
        bundle,
        split,
        mask,
    })
}

/// Initial task-specification prompts of every masked cell.
fn ts_prompts(p: &Prepared, profile: &ExpertProfile) -> Result<Vec<(String, String)>, CliError> {
    p.mask
        .coordinates(&p.bundle)
        .into_iter()
        .map(|(r, c)| {
            let ds = serialize_row(&p.bundle, r, &p.bundle.column(c).name, &p.mask).map_err(CliError::config)?;
            build_ts_prompt(profile, &ds, "").map_err(CliError::config)
        })
        .collect()
}

/// Offline runs must be answerable from the cache before anything is
/// written: persona prompts and every first-attempt cell prompt.
fn offline_preflight(prepared: &[Prepared], methods: &[Method], gw: &Gateway, model: &str) -> Result<(), CliError> {
    if !gw.is_offline() {
        return Ok(());
    }
    let mut missing = 0usize;
    let mut total = 0usize;
    for p in prepared {
        for &m in methods.iter().filter(|m| m.uses_llm()) {
            let profile = if m == Method::LlmExpert {
                let (system, user) = build_epi_prompt(p.bundle.description()).map_err(CliError::config)?;
                total += 1;
                let cached = gw
                    .cache()
                    .map(|c| c.get(model, &system, &user))
                    .transpose()
                    .map_err(CliError::config)?
                    .flatten();
                match cached {
                    Some(ex) => ExpertProfile {
                        text: ex.response,
                        origin: llmexpert_core::prompting::ProfileOrigin::Expert,
                    },
                    None => {
                        missing += 1;
                        continue;
                    }
                }
            } else {
                ExpertProfile::non_expert()
            };
            for (system, user) in ts_prompts(p, &profile)? {
                total += 1;
                if !gw.can_answer_offline(model, &system, &user) {
                    missing += 1;
                }
            }
        }
    }
    if missing > 0 {
        return Err(CliError::Config(format!(
            "--offline: {missing} of {total} model requests are not in the cache; refusing to start"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct Fill {
    row: usize,
    column: String,
    value: serde_json::Value,
    fallback: bool,
}

#[derive(Serialize)]
struct FillsFile<'a> {
    dataset: &'a str,
    method: &'a str,
    complete: bool,
    fills: Vec<Fill>,
    failures: Vec<(usize, String)>,
    llm_calls: usize,
}

fn cell_json(bundle: &TableBundle, column: usize, cell: Cell) -> serde_json::Value {
    match cell {
        Cell::Number(v) => serde_json::json!(v),
        Cell::Label(_) => serde_json::Value::String(bundle.column(column).render(&cell)),
        Cell::Absent => serde_json::Value::Null,
    }
}

/// Base table with masked cells blanked and fills written in; masked cells
/// a partial run never reached stay empty.
fn imputed_csv(table: &ImputedTable, mask: &MissingnessMask) -> Result<Vec<u8>, CliError> {
    let blanked = table
        .base
        .with_cells(mask.coordinates(&table.base).into_iter().map(|(r, c)| (r, c, Cell::Absent)))
        .map_err(CliError::config)?;
    let filled = blanked
        .with_cells(table.filled.iter().map(|(&(r, c), &v)| (r, c, v)))
        .map_err(CliError::config)?;
    Ok(table_csv(&filled))
}

#[derive(Serialize)]
struct PromptRecord<'a> {
    row: Option<usize>,
    column: Option<&'a str>,
    attempt: u8,
    system: &'a str,
    user: &'a str,
    response: &'a str,
}

fn persist_table(
    run: &Path,
    manifest: &mut Manifest,
    p: &Prepared,
    table: &ImputedTable,
    profile_exchange: Option<&ChatExchange>,
    dump_prompts: bool,
    complete: bool,
) -> Result<(), CliError> {
    let name = p.bundle.name();
    let method = table.method.id();
    let rel_csv = format!("{name}/imputed_{method}.csv");
    let path = run.join(&rel_csv);
    write_atomic(&path, &imputed_csv(table, &p.mask)?).map_err(io_at(&path))?;
    manifest.output(rel_csv);

    let failures: std::collections::BTreeSet<(usize, usize)> = table.failures.iter().copied().collect();
    let fills = FillsFile {
        dataset: name,
        method,
        complete,
        fills: table
            .filled
            .iter()
            .map(|(&(r, c), &v)| Fill {
                row: r,
                column: table.base.column(c).name.clone(),
                value: cell_json(&table.base, c, v),
                fallback: failures.contains(&(r, c)),
            })
            .collect(),
        failures: table
            .failures
            .iter()
            .map(|&(r, c)| (r, table.base.column(c).name.clone()))
            .collect(),
        llm_calls: table.exchanges.len(),
    };
    let rel = format!("{name}/fills_{method}.json");
    let path = run.join(&rel);
    write_json(&path, &fills).map_err(io_at(&path))?;
    manifest.output(rel);

    if dump_prompts && table.method.uses_llm() {
        let mut records = Vec::new();
        if let Some(ex) = profile_exchange {
            records.push(PromptRecord {
                row: None,
                column: None,
                attempt: 0,
                system: &ex.system,
                user: &ex.user,
                response: &ex.response,
            });
        }
        records.extend(table.exchanges.iter().map(|CellExchange { row, column, attempt, exchange }| PromptRecord {
            row: Some(*row),
            column: Some(column),
            attempt: *attempt,
            system: &exchange.system,
            user: &exchange.user,
            response: &exchange.response,
        }));
        let rel = format!("prompts/{name}_{method}.jsonl");
        let path = run.join(&rel);
        write_jsonl(&path, &records).map_err(io_at(&path))?;
        manifest.output(rel);
    }
    Ok(())
}

/// Runs one method. LLM methods return the persona exchange as well.
fn run_method(
    p: &Prepared,
    method: Method,
    opts: &ImputeOptions,
    gw: &Gateway,
    profiles: &mut ProfileStore,
) -> Result<(ImputedTable, Option<ChatExchange>), ImputeError> {
    let (b, s, m) = (&p.bundle, &p.split, &p.mask);
    match method {
        Method::MeanMode => impute_mean_mode(b, s, m).map(|t| (t, None)),
        Method::Knn => impute_knn(b, s, m, opts.knn_k).map(|t| (t, None)),
        Method::MissForest => impute_missforest(
            b,
            s,
            m,
            MissForestParams {
                trees: opts.trees,
                seed: opts.seed,
                ..MissForestParams::default()
            },
        )
        .map(|t| (t, None)),
        Method::LlmExpert | Method::LlmNonExpert => {
            let (profile, exchange) = if method == Method::LlmExpert {
                let profile = profiles.elicit_expert_profile(b, gw, &opts.model)?;
                let (system, user) = build_epi_prompt(b.description())?;
                let exchange = ChatExchange {
                    model: opts.model.clone(),
                    system,
                    user,
                    temperature: llmexpert_core::gateway::TEMPERATURE,
                    response: profile.text.clone(),
                    latency_ms: 0,
                    source: llmexpert_core::ExchangeSource::Cache,
                };
                (profile, Some(exchange))
            } else {
                (ExpertProfile::non_expert(), None)
            };
            impute_llm(b, s, m, gw, &profile, &LlmSettings::new(opts.model.clone())).map(|t| (t, exchange))
        }
    }
}

/// Executes the command; the returned status is `Complete` or an error.
pub fn run_impute(opts: &ImputeOptions, gw: &Gateway, argv: &[String]) -> Result<RunStatus, CliError> {
    if opts.bundles.is_empty() {
        return Err(CliError::Config("at least one --bundle is required".into()));
    }
    if opts.methods.is_empty() {
        return Err(CliError::Config("no imputation methods selected".into()));
    }
    let prepared = opts
        .bundles
        .iter()
        .map(|b| prepare(b, opts.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let mut names = std::collections::HashSet::new();
    for p in &prepared {
        if !names.insert(p.bundle.name().to_string()) {
            return Err(CliError::Config(format!("dataset name `{}` given twice", p.bundle.name())));
        }
    }
    offline_preflight(&prepared, &opts.methods, gw, &opts.model)?;

    let run = opts.out.as_path();
    std::fs::create_dir_all(run).map_err(io_at(run))?;
    let mut manifest = Manifest::new("impute", argv);
    manifest.seed = Some(opts.seed);
    if opts.methods.iter().any(|m| m.uses_llm()) {
        manifest.models.push(opts.model.clone());
    }
    manifest.methods = opts.methods.iter().map(|m| m.id().to_string()).collect();
    manifest.inputs = prepared
        .iter()
        .map(|p| InputRef {
            path: p.dir.display().to_string(),
            name: p.bundle.name().into(),
            digest: to_hex(&p.bundle.digest()),
        })
        .collect();
    manifest.write(run)?;

    let mut records: Vec<EvalRecord> = Vec::new();
    let mut profiles = ProfileStore::new();
    for p in &prepared {
        let name = p.bundle.name();
        let stage = |what: &str| format!("{what}:{name}");
        for (rel, value) in [
            (format!("{name}/split.json"), serde_json::to_value(&p.split)),
            (format!("{name}/mask.json"), serde_json::to_value(&p.mask)),
        ] {
            let path = run.join(&rel);
            write_json(&path, &value.expect("plain data serializes")).map_err(io_at(&path))?;
            manifest.output(rel);
        }
        let mut tables = Vec::new();
        for &method in &opts.methods {
            match run_method(p, method, opts, gw, &mut profiles) {
                Ok((table, profile_ex)) => {
                    persist_table(run, &mut manifest, p, &table, profile_ex.as_ref(), opts.dump_prompts, true)?;
                    tables.push(table);
                }
                Err(e @ ImputeError::Degenerate(_)) => {
                    manifest.notes.push(format!("{name}/{method} skipped: {e}"));
                }
                Err(ImputeError::Gateway { row, column, source, partial }) => {
                    persist_table(run, &mut manifest, p, &partial, None, opts.dump_prompts, false)?;
                    let err = CliError::Partial(format!(
                        "{name}/{method}: gateway failure at ({row}, `{column}`): {source}"
                    ));
                    flush_metrics(run, &mut manifest, &records)?;
                    return Err(manifest.fail(run, &stage(&format!("impute:{method}")), err));
                }
                Err(e) => {
                    flush_metrics(run, &mut manifest, &records)?;
                    let err = CliError::Partial(format!("{name}/{method}: {e}"));
                    return Err(manifest.fail(run, &stage(&format!("impute:{method}")), err));
                }
            }
        }
        for t in &tables {
            records.extend(imputation_metrics(&p.bundle, t));
        }
        let params = ForestParams::classification().with_trees(opts.trees);
        match downstream_records(&p.bundle, &p.split, &p.mask, &tables, &params, opts.seed) {
            Ok(r) => records.extend(r),
            Err(e) => {
                flush_metrics(run, &mut manifest, &records)?;
                let err = CliError::Partial(format!("{name}: downstream evaluation failed: {e}"));
                return Err(manifest.fail(run, &stage("downstream"), err));
            }
        }
    }
    flush_metrics(run, &mut manifest, &records)?;
    manifest.status = RunStatus::Complete;
    manifest.write(run)?;
    Ok(RunStatus::Complete)
}

fn flush_metrics(run: &Path, manifest: &mut Manifest, records: &[EvalRecord]) -> Result<(), CliError> {
    let path = run.join(METRICS_FILE);
    write_jsonl(&path, records).map_err(io_at(&path))?;
    manifest.output(METRICS_FILE);
    Ok(())
}
