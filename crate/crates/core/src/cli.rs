//! Command-line front end.
//!
//! Exit codes: 0 success, 1 failed certificate, 2 configuration error,
//! 3 data error, 4 identification failure, 5 inference error.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{estimate_parent_given_value, DatasetPriors, EstimationError};
use crate::identification::{fit_model, FitError, FitOptions, FitReport, FittedModel, DEFAULT_DELTA};
use crate::inference::{score_events, ScoreLine};
use crate::ingest::{load_events, tabulate_results, write_event, EventRecord, MissingBehaviors};
use crate::network::NetworkSpec;
use crate::report::{internal_structure_report, parse_probes, StructureReport};
use crate::synthlab::{
    certify, exact_observable_distribution, random_ground_truth, sample_events_stream, t1_fixture,
    CertificateMode, CertificateOutcome, GroundTruthModel, Oracle, Structure,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("identification failed: {0}")]
    Identification(String),
    #[error("inference error: {0}")]
    Inference(String),
    #[error("certificate failed: {0}")]
    Certificate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Certificate(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Identification(_) => 4,
            CliError::Inference(_) => 5,
        }
    }
}

fn read_file(path: &Path) -> Result<String, io::Error> {
    fs::read_to_string(path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Fit configuration document. Relative paths resolve against the
/// directory holding the document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub randomized_events: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithmic_events: Option<PathBuf>,
    #[serde(rename = "p_R", default, skip_serializing_if = "Option::is_none")]
    pub p_r: Option<f64>,
    #[serde(rename = "p_C", default, skip_serializing_if = "Option::is_none")]
    pub p_c: Option<f64>,
    /// Overrides the network's epsilon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl FitConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_file(path).map_err(|e| CliError::Config(e.to_string()))?;
        let mut config: FitConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.network,
            &mut config.events,
            &mut config.randomized_events,
            &mut config.algorithmic_events,
            &mut config.output,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// Fields set in `other` win.
    pub fn overridden_by(self, other: FitConfig) -> FitConfig {
        FitConfig {
            network: other.network.or(self.network),
            events: other.events.or(self.events),
            randomized_events: other.randomized_events.or(self.randomized_events),
            algorithmic_events: other.algorithmic_events.or(self.algorithmic_events),
            p_r: other.p_r.or(self.p_r),
            p_c: other.p_c.or(self.p_c),
            epsilon: other.epsilon.or(self.epsilon),
            prior_v: other.prior_v.or(self.prior_v),
            smoothing: other.smoothing.or(self.smoothing),
            delta: other.delta.or(self.delta),
            output: other.output.or(self.output),
        }
    }

    pub fn resolve(&self) -> Result<ResolvedFitConfig, CliError> {
        let path = |p: &Option<PathBuf>, name: &str| {
            p.clone()
                .ok_or_else(|| CliError::Config(format!("missing required setting {name:?}")))
        };
        let probability = |p: Option<f64>, name: &str, default: f64| {
            let p = p.unwrap_or(default);
            if (0.0..=1.0).contains(&p) {
                Ok(p)
            } else {
                Err(CliError::Config(format!("{name} must be in [0, 1], got {p}")))
            }
        };
        let p_r = probability(self.p_r, "p_R", DatasetPriors::default().randomized())?;
        let p_c = probability(self.p_c, "p_C", DatasetPriors::default().algorithmic())?;
        let priors = DatasetPriors::new(p_r, p_c).map_err(|e| CliError::Config(e.to_string()))?;
        let epsilon = self.epsilon.map(|e| probability(Some(e), "epsilon", 0.0)).transpose()?;
        let smoothing = self.smoothing.unwrap_or(0.0);
        if !(smoothing.is_finite() && smoothing >= 0.0) {
            return Err(CliError::Config(format!("smoothing must be nonnegative, got {smoothing}")));
        }
        let delta = self.delta.unwrap_or(DEFAULT_DELTA);
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(CliError::Config(format!("delta must be nonnegative, got {delta}")));
        }
        let events = path(&self.events, "events")?;
        Ok(ResolvedFitConfig {
            network: path(&self.network, "network")?,
            randomized_events: self.randomized_events.clone().unwrap_or_else(|| events.clone()),
            algorithmic_events: self.algorithmic_events.clone().unwrap_or_else(|| events.clone()),
            events,
            priors,
            epsilon,
            prior_v: probability(self.prior_v, "prior_v", 0.5)?,
            smoothing,
            delta,
            output: self.output.clone().unwrap_or_else(|| PathBuf::from("model.json")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedFitConfig {
    pub network: PathBuf,
    pub events: PathBuf,
    pub randomized_events: PathBuf,
    pub algorithmic_events: PathBuf,
    pub priors: DatasetPriors,
    pub epsilon: Option<f64>,
    pub prior_v: f64,
    pub smoothing: f64,
    pub delta: f64,
    pub output: PathBuf,
}

impl ResolvedFitConfig {
    /// `model.json` -> `model.report.json`.
    pub fn report_path(&self) -> PathBuf {
        let stem = self.output.file_stem().unwrap_or_default().to_string_lossy();
        self.output.with_file_name(format!("{stem}.report.json"))
    }
}

pub fn load_network(path: &Path) -> Result<NetworkSpec, CliError> {
    let text = read_file(path).map_err(|e| CliError::Config(e.to_string()))?;
    NetworkSpec::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<FittedModel, CliError> {
    let text = read_file(path).map_err(|e| CliError::Data(e.to_string()))?;
    FittedModel::parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn estimation_error(e: EstimationError) -> CliError {
    match e {
        EstimationError::SingularPriors(_) | EstimationError::InvalidPriors { .. } => CliError::Config(e.to_string()),
        _ => CliError::Data(format!("estimation: {e}")),
    }
}

fn fit_error(e: FitError) -> CliError {
    match e {
        FitError::InvalidPrior(_) => CliError::Config(e.to_string()),
        FitError::ObservedScope { .. } | FitError::ContextScope => CliError::Data(e.to_string()),
        _ => CliError::Identification(e.to_string()),
    }
}

/// Runs the pipeline and returns the fitted model without writing anything.
pub fn fit_from_config(config: &ResolvedFitConfig) -> Result<FittedModel, CliError> {
    let mut spec = load_network(&config.network)?;
    if let Some(e) = config.epsilon {
        spec = spec.with_epsilon(e).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let table = |path: &Path| {
        let events = load_events(path, &spec, MissingBehaviors::Reject).map_err(|e| CliError::Data(e.to_string()))?;
        tabulate_results(events, &spec, config.smoothing)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    };
    let observed = table(&config.events)?;
    let randomized = table(&config.randomized_events)?;
    let algorithmic = table(&config.algorithmic_events)?;
    let pgv = estimate_parent_given_value(&randomized, &algorithmic, &config.priors, &spec).map_err(estimation_error)?;
    let options = FitOptions {
        prior_v: config.prior_v,
        delta: config.delta,
        ..FitOptions::default()
    };
    fit_model(&spec, &observed, &pgv, &options).map_err(fit_error)
}

/// Writes the model document and its fit report.
pub fn cmd_fit(config: &ResolvedFitConfig) -> Result<FitReport, CliError> {
    let model = fit_from_config(config)?;
    write_file(&config.output, &model.to_json())?;
    write_file(&config.report_path(), &model.report().to_json())?;
    Ok(model.report().clone())
}

/// Writes one line per record in input order. Bad records get an inline
/// error line; the first such error is returned after all lines are written.
pub fn cmd_score<W: Write + ?Sized>(model: &FittedModel, events: &Path, out: &mut W) -> Result<usize, CliError> {
    let spec = model.spec();
    let reader = load_events(events, spec, MissingBehaviors::Marginalize).map_err(|e| CliError::Data(e.to_string()))?;
    let mut first_error = None;
    let mut good = Vec::new();
    let mut lines = Vec::new();
    for (i, record) in reader.enumerate() {
        match record {
            Ok(r) => {
                good.push(r);
                lines.push(None);
            }
            Err(e) => {
                first_error.get_or_insert_with(|| CliError::Data(format!("{}: {e}", events.display())));
                lines.push(Some(ScoreLine::Error {
                    id: format!("line {}", e.line().unwrap_or(i + 1)),
                    error: e.to_string(),
                }));
            }
        }
    }
    let mut scores = score_events(model, good);
    let mut written = 0;
    for slot in lines {
        let line = match slot {
            Some(line) => line,
            None => {
                let (id, result) = scores.next().expect("one score per parsed record");
                if let Err(e) = &result {
                    first_error.get_or_insert_with(|| CliError::Inference(format!("record {id}: {e}")));
                }
                ScoreLine::new(id, &result)
            }
        };
        writeln!(out, "{}", line.to_json()).map_err(|e| CliError::Data(e.to_string()))?;
        written += 1;
    }
    out.flush().map_err(|e| CliError::Data(e.to_string()))?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(written),
    }
}

pub fn cmd_report(model: &FittedModel, probes: Option<&Path>) -> Result<StructureReport, CliError> {
    let probes = match probes {
        Some(path) => {
            let text = read_file(path).map_err(|e| CliError::Config(e.to_string()))?;
            parse_probes(&text, model.spec()).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => Vec::new(),
    };
    Ok(internal_structure_report(model, &probes))
}

/// Structures `synth` accepts: the generator families plus the fixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthStructure {
    T1,
    Naive,
    Gated,
    #[value(name = "twitter-shaped", alias = "twitter")]
    TwitterShaped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct AnswerLine<'a> {
    id: &'a str,
    posterior: f64,
}

/// Records enumerating an exact table: `round(p * n)` copies of each state.
fn exact_records(gt: &GroundTruthModel, n: usize) -> Vec<EventRecord> {
    let table = exact_observable_distribution(gt).expect("fixture is small");
    let mut records = Vec::new();
    let mut order: Vec<usize> = (0..table.probs().len()).collect();
    order.sort_by(|&a, &b| table.probs()[b].total_cmp(&table.probs()[a]).then(a.cmp(&b)));
    for state in order {
        let copies = (table.probs()[state] * n as f64).round() as usize;
        let assignment = table.scope().assignment(state);
        for _ in 0..copies {
            records.push(EventRecord {
                id: records.len().to_string(),
                behaviors: assignment,
            });
        }
    }
    records
}

fn write_log(path: &Path, records: impl IntoIterator<Item = EventRecord>, spec: &NetworkSpec) -> Result<(), CliError> {
    let io_err = |e: io::Error| CliError::Data(format!("{}: {e}", path.display()));
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for r in records {
        write_event(&mut out, &r, spec).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Events per dataset written for `t1`, whose tables are exact at this size.
pub const T1_EVENTS: usize = 100;

/// Writes `ground_truth.json`, `events.jsonl`, `randomized.jsonl`,
/// `algorithmic.jsonl`, `answer_key.jsonl` and `fit_config.json`.
pub fn cmd_synth(
    structure: SynthStructure,
    seed: u64,
    behaviors: usize,
    events: usize,
    out_dir: &Path,
) -> Result<GroundTruthModel, CliError> {
    let gt = match structure {
        SynthStructure::T1 => t1_fixture(),
        SynthStructure::Naive => random_ground_truth(seed, behaviors, Structure::Naive),
        SynthStructure::Gated => random_ground_truth(seed, behaviors, Structure::Gated),
        SynthStructure::TwitterShaped => random_ground_truth(seed, behaviors, Structure::TwitterShaped),
    };
    fs::create_dir_all(out_dir).map_err(|e| CliError::Data(format!("{}: {e}", out_dir.display())))?;
    let spec = gt.spec();
    let priors = DatasetPriors::default();
    let logs = [
        ("events.jsonl", gt.clone(), 0),
        ("randomized.jsonl", gt.intervene_prior(priors.randomized()), 1),
        ("algorithmic.jsonl", gt.intervene_prior(priors.algorithmic()), 2),
    ];
    for (name, model, stream) in &logs {
        let path = out_dir.join(name);
        match structure {
            SynthStructure::T1 => write_log(&path, exact_records(model, T1_EVENTS), spec)?,
            _ => write_log(&path, sample_events_stream(model, events, seed, *stream), spec)?,
        }
    }

    let oracle = Oracle::new(&gt).map_err(|e| CliError::Config(e.to_string()))?;
    let key: HashMap<u32, f64> = oracle
        .full_evidence_table()
        .into_iter()
        .filter_map(|(state, _, post)| post.map(|p| (state, p)))
        .collect();
    let main = out_dir.join("events.jsonl");
    let reader = load_events(&main, spec, MissingBehaviors::Reject).map_err(|e| CliError::Data(e.to_string()))?;
    let mut answers = String::new();
    for record in reader {
        let record = record.map_err(|e| CliError::Data(e.to_string()))?;
        let posterior = key[&record.behaviors.values_mask()];
        answers.push_str(&serde_json::to_string(&AnswerLine { id: &record.id, posterior }).expect("serializes"));
        answers.push('\n');
    }
    write_file(&out_dir.join("answer_key.jsonl"), &answers)?;
    write_file(&out_dir.join("ground_truth.json"), &gt.to_json())?;

    let config = FitConfig {
        network: Some("ground_truth.json".into()),
        events: Some("events.jsonl".into()),
        randomized_events: Some("randomized.jsonl".into()),
        algorithmic_events: Some("algorithmic.jsonl".into()),
        p_r: Some(priors.randomized()),
        p_c: Some(priors.algorithmic()),
        prior_v: Some(gt.prior_v()),
        output: Some("model.json".into()),
        ..FitConfig::default()
    };
    let mut text = serde_json::to_string_pretty(&config).expect("config serializes");
    text.push('\n');
    write_file(&out_dir.join("fit_config.json"), &text)?;
    Ok(gt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilySummary {
    pub structure: String,
    pub passed: usize,
    pub total: usize,
    pub max_error: f64,
    pub failures: Vec<CertificateOutcome>,
}

/// Certifies `seeds` ground truths per structure; seed `s` has
/// `1 + s % 10` behaviors.
pub fn oracle_check(structures: &[Structure], seeds: u64, mode: CertificateMode) -> Vec<FamilySummary> {
    structures
        .iter()
        .map(|&structure| {
            let outcomes: Vec<CertificateOutcome> = (0..seeds)
                .into_par_iter()
                .map(|seed| {
                    let gt = random_ground_truth(seed, 1 + (seed % 10) as usize, structure);
                    certify(&gt, mode, seed)
                })
                .collect();
            FamilySummary {
                structure: structure.to_string(),
                passed: outcomes.iter().filter(|o| o.passed).count(),
                total: outcomes.len(),
                max_error: outcomes.iter().map(|o| o.max_error).fold(0.0, f64::max),
                failures: outcomes.into_iter().filter(|o| !o.passed).collect(),
            }
        })
        .collect()
}

#[derive(Debug, Parser)]
#[command(name = "anchorlvm", version, about = "Fit, score and audit latent-value models of engagement logs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model from three event logs.
    Fit(FitArgs),
    /// Score an event log with a fitted model.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        events: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Single-behavior posteriors and probe checks.
    Report {
        #[arg(long)]
        model: PathBuf,
        /// JSON document `{"probes": [...]}`.
        #[arg(long)]
        probes: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write a ground truth, its three logs, an answer key and a fit config.
    Synth {
        #[arg(long, value_enum)]
        structure: SynthStructure,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Non-anchor behaviors (ignored for t1).
        #[arg(long, default_value_t = 5)]
        behaviors: usize,
        /// Records per log (t1 always writes 100).
        #[arg(long, default_value_t = 100_000)]
        events: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the end-to-end certificate over seeded ground truths.
    OracleCheck {
        #[arg(long, value_enum, default_value = "exact")]
        mode: CheckMode,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        /// Records per dataset in sampled mode.
        #[arg(long, default_value_t = 1_000_000)]
        events: usize,
        /// One family; all three when omitted.
        #[arg(long)]
        structure: Option<Structure>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Fit configuration document; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub network: Option<PathBuf>,
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub randomized_events: Option<PathBuf>,
    #[arg(long)]
    pub algorithmic_events: Option<PathBuf>,
    #[arg(long = "p-r")]
    pub p_r: Option<f64>,
    #[arg(long = "p-c")]
    pub p_c: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub prior_v: Option<f64>,
    #[arg(long)]
    pub smoothing: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl FitArgs {
    pub fn to_config(&self) -> Result<FitConfig, CliError> {
        let flags = FitConfig {
            network: self.network.clone(),
            events: self.events.clone(),
            randomized_events: self.randomized_events.clone(),
            algorithmic_events: self.algorithmic_events.clone(),
            p_r: self.p_r,
            p_c: self.p_c,
            epsilon: self.epsilon,
            prior_v: self.prior_v,
            smoothing: self.smoothing,
            delta: self.delta,
            output: self.output.clone(),
        };
        let base = match &self.config {
            Some(path) => FitConfig::load(path)?,
            None => FitConfig::default(),
        };
        Ok(base.overridden_by(flags))
    }
}

fn with_output<F>(output: Option<&Path>, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    match output {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let mut out = BufWriter::new(file);
            f(&mut out)?;
            out.flush().map_err(|e| CliError::Data(e.to_string()))
        }
        None => {
            let stdout = io::stdout();
            let mut out = BufWriter::new(stdout.lock());
            f(&mut out)?;
            out.flush().map_err(|e| CliError::Data(e.to_string()))
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit(args) => {
            let config = args.to_config()?.resolve()?;
            let report = cmd_fit(&config)?;
            eprintln!(
                "wrote {} ({} factors, {} clamped, {} unidentified)",
                config.output.display(),
                report.nodes.len(),
                report.total_clamped,
                report.total_unidentified
            );
            Ok(())
        }
        Command::Score { model, events, output } => {
            let model = load_model(&model)?;
            with_output(output.as_deref(), |out| cmd_score(&model, &events, out).map(|_| ()))
        }
        Command::Report {
            model,
            probes,
            format,
            output,
        } => {
            let model = load_model(&model)?;
            let report = cmd_report(&model, probes.as_deref())?;
            let text = match format {
                ReportFormat::Text => report.to_text(),
                ReportFormat::Json => report.to_json(),
            };
            with_output(output.as_deref(), |out| {
                out.write_all(text.as_bytes()).map_err(|e| CliError::Data(e.to_string()))
            })
        }
        Command::Synth {
            structure,
            seed,
            behaviors,
            events,
            out_dir,
        } => {
            cmd_synth(structure, seed, behaviors, events, &out_dir)?;
            eprintln!("wrote {}", out_dir.display());
            Ok(())
        }
        Command::OracleCheck {
            mode,
            seeds,
            events,
            structure,
            json,
        } => {
            let structures = structure.map_or_else(|| Structure::ALL.to_vec(), |s| vec![s]);
            let mode = match mode {
                CheckMode::Exact => CertificateMode::Exact,
                CheckMode::Sampled => CertificateMode::Sampled { events },
            };
            let summary = oracle_check(&structures, seeds, mode);
            if json {
                println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            } else {
                for family in &summary {
                    println!(
                        "{:<16} {:>4}/{:<4} passed  max error {:.3e}",
                        family.structure, family.passed, family.total, family.max_error
                    );
                    for f in &family.failures {
                        let why = f.error.clone().unwrap_or_else(|| {
                            format!("error {:.3e} at {}", f.max_error, f.worst.as_deref().unwrap_or("-"))
                        });
                        println!("  seed {:>4}: {why}", f.seed);
                    }
                }
            }
            let failed: usize = summary.iter().map(|f| f.total - f.passed).sum();
            if failed > 0 {
                return Err(CliError::Certificate(format!("{failed} ground truths outside tolerance")));
            }
            Ok(())
        }
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_line_wins_over_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit.json");
        fs::write(&path, r#"{"network": "net.json", "events": "e.jsonl", "p_C": 0.7, "smoothing": 1}"#).unwrap();
        let base = FitConfig::load(&path).unwrap();
        assert_eq!(base.network.as_deref(), Some(dir.path().join("net.json").as_path()));
        let merged = base.overridden_by(FitConfig {
            p_c: Some(0.4),
            ..FitConfig::default()
        });
        let resolved = merged.resolve().unwrap();
        assert_eq!(resolved.priors.algorithmic(), 0.4);
        assert_eq!(resolved.smoothing, 1.0);
        assert_eq!(resolved.randomized_events, dir.path().join("e.jsonl"));
        assert_eq!(resolved.output, PathBuf::from("model.json"));
        assert_eq!(resolved.report_path(), PathBuf::from("model.report.json"));
    }

    #[test]
    fn config_validation() {
        let base = FitConfig {
            network: Some("n".into()),
            events: Some("e".into()),
            ..FitConfig::default()
        };
        let singular = FitConfig {
            p_r: Some(0.3),
            p_c: Some(0.3),
            ..base.clone()
        };
        let err = singular.resolve().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("singular dataset priors"));
        assert!(FitConfig { prior_v: Some(1.5), ..base.clone() }.resolve().is_err());
        assert!(FitConfig { events: None, ..base.clone() }.resolve().is_err());
        assert!(serde_json::from_str::<FitConfig>(r#"{"netwrok": "x"}"#).is_err());
    }

    #[test]
    fn t1_exact_records() {
        let gt = t1_fixture();
        let records = exact_records(&gt, T1_EVENTS);
        assert_eq!(records.len(), 100);
        let s = gt.spec();
        let count = |a, b| {
            let want = s.assignment([("A", a), ("B", b)]).unwrap();
            records.iter().filter(|r| r.behaviors == want).count()
        };
        assert_eq!([count(false, true), count(false, false), count(true, true), count(true, false)], [46, 34, 4, 16]);
        let randomized = exact_records(&gt.intervene_prior(0.0), T1_EVENTS);
        assert_eq!(randomized.len(), 100);
    }
}
