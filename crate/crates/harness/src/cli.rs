//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use llmexpert_core::elicitation::ess::{Aggregation, DEFAULT_REPEATS};
use llmexpert_core::elicitation::scoring::ScoringMetric;
use llmexpert_core::elicitation::{Persona, Protocol};
use llmexpert_core::weather::YearWindow;
use llmexpert_core::MockScript;

use crate::elicit::{run_elicit, run_ess, DataResolver, ElicitOptions, EssOptions};
use crate::evaluate::run_evaluate;
use crate::fsutil::write_atomic;
use crate::gateway::{DiskCache, Gateway, LiveClient, LiveConfig, Upstream};
use crate::impute::{parse_methods, run_impute, ImputeOptions};
use crate::manifest::Manifest;
use crate::weather::{CitiesFile, WeatherArchive};
use crate::{io_at, CliError};

pub const DEFAULT_MODEL: &str = "gpt-4";

#[derive(Debug, Parser)]
#[command(name = "llmexpert", version, about = "LLM-as-expert imputation and prior elicitation benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split, inject MAR missingness and impute one or more bundles.
    Impute(ImputeArgs),
    /// Build report tables and charts from run directories.
    Evaluate(EvaluateArgs),
    /// Elicit prior distributions over a task x model x persona x protocol grid.
    Elicit(ElicitArgs),
    /// Data-dependent effective sample size of elicited priors.
    Ess(EssArgs),
    /// Download (or replay) December weather for the configured cities.
    FetchWeather(WeatherArgs),
}

/// Where model replies come from.
#[derive(Debug, Args, Clone)]
pub struct GatewayArgs {
    /// OpenAI-compatible base URL.
    #[arg(long, env = "LLMEXPERT_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long, env = "LLMEXPERT_API_KEY", hide_env_values = true)]
    pub api_key: Option<String>,
    /// Serve every request from the cache (or the mock); never call out.
    #[arg(long)]
    pub offline: bool,
    /// JSON mock script; replaces the live endpoint.
    #[arg(long)]
    pub mock: Option<PathBuf>,
    /// Replay cache directory.
    #[arg(long, default_value = ".llmexpert-cache")]
    pub cache: PathBuf,
    /// Concurrent live requests.
    #[arg(long, default_value_t = crate::gateway::DEFAULT_IN_FLIGHT)]
    pub max_in_flight: usize,
}

impl GatewayArgs {
    pub fn build(&self) -> Result<Gateway, CliError> {
        if let Some(path) = &self.mock {
            let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let script: MockScript =
                serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            return Ok(Gateway::new(None, Upstream::Mock(script), self.offline));
        }
        let cache = Some(DiskCache::new(&self.cache));
        let upstream = match &self.endpoint {
            Some(url) if !self.offline => {
                let mut cfg = LiveConfig::new(url.clone());
                cfg.api_key = self.api_key.clone();
                cfg.max_in_flight = self.max_in_flight;
                Upstream::Live(LiveClient::new(cfg))
            }
            _ => Upstream::None,
        };
        Ok(Gateway::new(cache, upstream, self.offline))
    }

    /// A live-only gateway needs somewhere to send requests.
    fn require_backend(&self) -> Result<(), CliError> {
        if self.mock.is_none() && self.endpoint.is_none() && !self.offline {
            return Err(CliError::Config(
                "LLM methods need --endpoint (or LLMEXPERT_ENDPOINT), --mock, or --offline with a warm cache".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    /// Bundle directory with data.csv and meta.json; repeatable.
    #[arg(long, required = true)]
    pub bundle: Vec<PathBuf>,
    /// Comma-separated: mean_mode, knn, missforest, llm_expert, llm_non_expert.
    #[arg(long, default_value = "mean_mode,knn,missforest")]
    pub methods: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "LLMEXPERT_MODEL", default_value = DEFAULT_MODEL)]
    pub model: String,
    /// Write every constructed prompt under prompts/.
    #[arg(long)]
    pub dump_prompts: bool,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = llmexpert_core::impute::DEFAULT_K)]
    pub k: usize,
    /// Trees per forest (MissForest and the downstream classifier).
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[command(flatten)]
    pub gateway: GatewayArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run directory written by `impute`; repeatable.
    #[arg(long = "run", required = true)]
    pub runs: Vec<PathBuf>,
    /// Report directory; defaults to <first run>/report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// City list for weather tasks.
    #[arg(long)]
    pub cities: Option<PathBuf>,
    /// Directory of archive payloads.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Weather archive URL, used only when a fixture is missing.
    #[arg(long)]
    pub weather_endpoint: Option<String>,
}

impl DataArgs {
    fn resolver(&self, offline: bool) -> Result<DataResolver, CliError> {
        let offline = offline || self.weather_endpoint.is_none();
        DataResolver::new(self.cities.as_deref(), self.fixtures.as_deref(), self.weather_endpoint.clone(), offline)
    }
}

#[derive(Debug, Args)]
pub struct ElicitArgs {
    /// JSON list of tasks.
    #[arg(long)]
    pub tasks: PathBuf,
    /// Repeatable.
    #[arg(long, env = "LLMEXPERT_MODEL", default_value = DEFAULT_MODEL)]
    pub model: Vec<String>,
    /// Comma-separated personas; default is each task's own.
    #[arg(long, value_delimiter = ',')]
    pub personas: Option<Vec<PersonaArg>>,
    /// Comma-separated protocols; default is each task's own.
    #[arg(long, value_delimiter = ',')]
    pub protocols: Option<Vec<ProtocolArg>>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dump_prompts: bool,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub gateway: GatewayArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PersonaArg {
    Expert,
    Conference,
    NonExpert,
}

impl From<PersonaArg> for Persona {
    fn from(p: PersonaArg) -> Self {
        match p {
            PersonaArg::Expert => Persona::Expert,
            PersonaArg::Conference => Persona::Conference,
            PersonaArg::NonExpert => Persona::NonExpert,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProtocolArg {
    Direct,
    Shelf,
    Roulette,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Direct => Protocol::Direct,
            ProtocolArg::Shelf => Protocol::Shelf,
            ProtocolArg::Roulette => Protocol::Roulette,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    LogLoss,
    Crps,
    Mse,
}

impl From<MetricArg> for ScoringMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::LogLoss => ScoringMetric::LogLoss,
            MetricArg::Crps => ScoringMetric::Crps,
            MetricArg::Mse => ScoringMetric::Mse,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggregationArg {
    MeanScore,
    PerRepeat,
}

#[derive(Debug, Args)]
pub struct EssArgs {
    /// results.jsonl written by `elicit`.
    #[arg(long)]
    pub results: PathBuf,
    /// The task file the results came from.
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long, value_enum, default_value = "mse")]
    pub metric: MetricArg,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "mean-score")]
    pub aggregation: AggregationArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub offline: bool,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct WeatherArgs {
    #[arg(long)]
    pub cities: PathBuf,
    #[arg(long)]
    pub fixtures: PathBuf,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub offline: bool,
    /// Overrides the window of the city file.
    #[arg(long, requires = "last_year")]
    pub first_year: Option<i32>,
    #[arg(long, requires = "first_year")]
    pub last_year: Option<i32>,
    /// Directory for the summary table and manifest.
    #[arg(long)]
    pub out: PathBuf,
}

fn fetch_weather(args: &WeatherArgs, argv: &[String]) -> Result<(), CliError> {
    let file = CitiesFile::load(&args.cities).map_err(CliError::config)?;
    let window = match (args.first_year, args.last_year) {
        (Some(a), Some(b)) => YearWindow::new(a, b).map_err(CliError::config)?,
        _ => file.window(),
    };
    let archive = WeatherArchive::new(&args.fixtures, args.endpoint.clone(), args.offline);
    let run = args.out.as_path();
    std::fs::create_dir_all(run).map_err(io_at(run))?;
    let mut manifest = Manifest::new("fetch-weather", argv);
    manifest.write(run)?;
    let results = archive.fetch_all(&file.cities, window);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["city", "country", "population", "days", "mean_temperature", "mean_precipitation", "error"])
        .expect("in memory");
    let mut failed = 0;
    for (city, r) in file.cities.iter().zip(&results) {
        let slug = city.slug();
        let population = format!("{:?}", city.population).to_lowercase();
        match r {
            Ok(s) => {
                let n = s.days.len() as f64;
                let t = s.days.iter().map(|d| d.temperature).sum::<f64>() / n;
                let p = s.days.iter().map(|d| d.precipitation).sum::<f64>() / n;
                w.write_record([&slug, &city.country, &population, &s.days.len().to_string(), &format!("{t:.3}"), &format!("{p:.3}"), ""])
                    .expect("in memory");
            }
            Err(e) => {
                failed += 1;
                w.write_record([&slug, &city.country, &population, "", "", "", &e.to_string()])
                    .expect("in memory");
            }
        }
    }
    let path = run.join("weather_summary.csv");
    write_atomic(&path, &w.into_inner().expect("in memory")).map_err(io_at(&path))?;
    manifest.output("weather_summary.csv");
    manifest.notes.push(format!("{} archive requests", archive.requests()));
    if failed > 0 {
        let err = CliError::Partial(format!("{failed} of {} cities failed; see weather_summary.csv", results.len()));
        return Err(manifest.fail(run, "fetch", err));
    }
    manifest.status = crate::manifest::RunStatus::Complete;
    manifest.write(run)
}

/// Runs a parsed command line; `argv` is recorded in manifests.
pub fn execute(cli: Cli, argv: &[String]) -> Result<(), CliError> {
    match cli.command {
        Command::Impute(a) => {
            let methods = parse_methods(&a.methods)?;
            if methods.iter().any(|m| m.uses_llm()) {
                a.gateway.require_backend()?;
            }
            let gw = a.gateway.build()?;
            let opts = ImputeOptions {
                seed: a.seed,
                model: a.model,
                dump_prompts: a.dump_prompts,
                knn_k: a.k,
                trees: a.trees,
                ..ImputeOptions::new(a.bundle, methods, a.out)
            };
            run_impute(&opts, &gw, argv).map(|_| ())
        }
        Command::Evaluate(a) => run_evaluate(&a.runs, a.out.as_deref()).map(|_| ()),
        Command::Elicit(a) => {
            a.gateway.require_backend()?;
            let gw = a.gateway.build()?;
            let data = a.data.resolver(a.gateway.offline)?;
            let opts = ElicitOptions {
                tasks: a.tasks,
                models: a.model,
                personas: a.personas.map(|v| v.into_iter().map(Into::into).collect()),
                protocols: a.protocols.map(|v| v.into_iter().map(Into::into).collect()),
                out: a.out,
                dump_prompts: a.dump_prompts,
            };
            run_elicit(&opts, &gw, &data, argv).map(|_| ())
        }
        Command::Ess(a) => {
            let data = a.data.resolver(a.offline)?;
            let opts = EssOptions {
                results: a.results,
                tasks: a.tasks,
                metric: a.metric.into(),
                repeats: a.repeats,
                seed: a.seed,
                aggregation: match a.aggregation {
                    AggregationArg::MeanScore => Aggregation::MeanScore,
                    AggregationArg::PerRepeat => Aggregation::PerRepeat,
                },
                out: a.out,
            };
            run_ess(&opts, &data, argv).map(|_| ())
        }
        Command::FetchWeather(a) => fetch_weather(&a, argv),
    }
}

/// Parses `argv` and runs it, mapping errors to exit codes.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("llmexpert: {e}");
            e.exit_code()
        }
    }
}

/// Convenience for tests: the path as a string argument.
pub fn arg(p: &Path) -> String {
    p.display().to_string()
}
