//! The `promptshap` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use promptshap_core::ensemble::EnsembleUtility;
use promptshap_core::learn::{
    holdout_eval, predict_sv, train, EmbeddingMatrix, GpConfig, HoldoutReport, RegressorKind, RegressorSpec,
};
use promptshap_core::select::{best_prefix, rank_add_curve, BestPrefix, Curve, CurvePoint, CurveFailure};
use promptshap_core::theory::{
    beta_interval_exact, beta_interval_normal, beta_interval_poly, beta_interval_quadrature, ensemble_perturbation,
    lemma1_sweep, theorem1_experiment, BetaSpec, FieldKind, Lemma1Report, PerturbationConfig, PolyApprox,
    Theorem1Summary,
};
use promptshap_core::{loo_values, shapley_exact, shapley_montecarlo, Game, Method, MonteCarloConfig, Utility};
use serde::Serialize;

use crate::augment::AugmentationUtility;
use crate::cache::{self, CacheKind, CacheStats, CachedUtility, ResponseCache, UtilityCache};
use crate::client::ModelClient;
use crate::config::{derived_seed, RunConfig, UtilityMode, PURPOSE_SPLIT};
use crate::error::{Error, Result};
use crate::formats::{
    self, curve_csv, read_embeddings, read_matrix, read_questions, read_validation, to_json_pretty, ModelDoc,
    Prediction, PromptManifest, ValuesDoc,
};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown subcommand, bad arguments)
  3  configuration error (malformed or inconsistent run config)
  4  credential error (PROMPTSHAP_API_KEY missing or rejected)
  5  input error (malformed data file)
  6  computation error (engine precondition, oracle failure, capacity)
  7  transport error (HTTP failure or malformed response)
  8  io error
On failure a JSON document {\"error\", \"exit_code\", \"message\"} is written to stderr.";

#[derive(Parser, Debug)]
#[command(name = "promptshap", version, about = "Shapley valuation of prompts", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute Shapley (or leave-one-out) values for the configured game.
    Value(ValueArgs),
    /// Rank-and-add curves and best prefixes for one or more value files.
    Curve(CurveArgs),
    /// Fit a regressor from prompt embeddings to values and report held-out accuracy.
    Learn(LearnArgs),
    /// Predict values for new prompts with a trained model.
    Predict(PredictArgs),
    /// Numerical checks of the valuation theory.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Simulate the accuracy change caused by perturbing one ensemble member.
    Simulate(SimulateArgs),
    /// Inspect or compact cache files.
    #[command(subcommand)]
    Cache(CacheCommand),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Exact,
    Mc,
    Loo,
}

#[derive(Args, Debug)]
struct ValueArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo permutations.
    #[arg(long)]
    permutations: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[arg(long)]
    config: PathBuf,
    /// Value file(s); pass both a Shapley and a leave-one-out file to compare orderings.
    #[arg(long, required = true)]
    values: Vec<PathBuf>,
    /// Directory for `curve_<label>.csv` and `curve_<label>.json`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Linear,
    Ridge,
    Gp,
}

#[derive(Args, Debug)]
struct LearnArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    values: PathBuf,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Trained model output.
    #[arg(long)]
    out: PathBuf,
    /// Held-out evaluation report; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Precomputed embeddings for the manifest's prompts; otherwise the API is used.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FieldArg {
    Affine,
    Smooth,
    Both,
}

#[derive(Subcommand, Debug)]
enum VerifyCommand {
    /// Exact rational check of the Shapley weight recurrence.
    Lemma1 {
        #[arg(long, default_value_t = 64)]
        max_n: u64,
    },
    /// Lipschitz bound on Shapley differences for random mean-field games.
    Theorem1 {
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FieldArg::Both)]
        field: FieldArg,
    },
    /// Exact, normal and polynomial Beta interval masses around 0.5.
    #[command(allow_negative_numbers = true)]
    BetaBounds {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, required = true)]
        epsilon: Vec<f64>,
    },
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct SimulateArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    n_classifiers: usize,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    instances: usize,
    /// Index of the perturbed classifier.
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Omit per-trial outcomes from the report.
    #[arg(long)]
    summary_only: bool,
}

#[derive(Subcommand, Debug)]
enum CacheCommand {
    Inspect { path: PathBuf },
    Compact { path: PathBuf },
}

/// Parses `args` (including the program name) and runs the command, writing
/// primary output to `out`.
pub fn run(args: impl IntoIterator<Item = impl Into<OsString> + Clone>, out: &mut dyn Write) -> Result<()> {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            return out.write_all(e.render().to_string().as_bytes()).map_err(|e| Error::io("<stdout>", e));
        }
        Err(e) => return Err(Error::Usage(e.render().to_string())),
    };
    dispatch(cli, out)
}

pub fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Value(a) => cmd_value(a, out),
        Command::Curve(a) => cmd_curve(a, out),
        Command::Learn(a) => cmd_learn(a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Verify(v) => cmd_verify(v, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Cache(c) => cmd_cache(c, out),
    }
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => formats::write_string(p, text),
        None => out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

// ---------------------------------------------------------------- games

/// Loads the configured game and hands it to `f` with the prompt ids.
///
/// Oracle failures from the live utility are reported with their original
/// error class (credential, transport, ...).
fn with_game<R>(cfg: &RunConfig, f: impl FnOnce(&Game<&dyn Utility>, &[String]) -> Result<R>) -> Result<R> {
    let ucache = match &cfg.paths.utility_cache {
        Some(p) => UtilityCache::open(p)?,
        None => UtilityCache::in_memory(),
    };
    match cfg.utility.mode {
        UtilityMode::MatrixVote | UtilityMode::MatrixAverage => {
            let validation = read_validation(cfg.paths.validation.as_ref().expect("validated"))?;
            let matrix_path = cfg.paths.matrix.as_ref().expect("validated");
            let matrix = read_matrix(matrix_path, validation.num_labels())?;
            let ids = matrix.prompt_ids().to_vec();
            if let Some(mp) = &cfg.paths.manifest {
                let manifest = PromptManifest::load(mp)?;
                if manifest.ids() != ids {
                    return Err(Error::input(mp, 0, "manifest ids differ from the matrix's prompt ids"));
                }
            }
            let rule = cfg.utility.mode.rule().expect("matrix mode");
            let inner = EnsembleUtility::new(&matrix, &validation, rule, cfg.utility.tie_rule)
                .map_err(|e| Error::input(matrix_path, 0, e.to_string()))?;
            let cached = CachedUtility::new(inner, &ucache);
            let game = Game::new(&cached as &dyn Utility, cfg.utility.u_empty);
            f(&game, &ids)
        }
        UtilityMode::LiveAugmentation => {
            let manifest = PromptManifest::load(cfg.paths.manifest.as_ref().expect("validated"))?;
            let questions = read_questions(cfg.paths.questions.as_ref().expect("validated"))?;
            let api = cfg.api.clone().expect("validated");
            let task = cfg.task.answer_kind().expect("validated");
            let client = ModelClient::from_env(api)?;
            let rcache = match &cfg.paths.response_cache {
                Some(p) => ResponseCache::open(p)?,
                None => ResponseCache::in_memory(),
            };
            let live = AugmentationUtility::new(&client, &rcache, &manifest, &questions, task);
            let cached = CachedUtility::new(&live, &ucache);
            let ids = manifest.ids();
            let result = Game::with_oracle_empty(&cached as &dyn Utility)
                .map_err(Error::from)
                .and_then(|game| f(&game, &ids));
            result.map_err(|e| match (&e, live.take_last_error()) {
                (Error::Core(_), Some(original)) => original,
                _ => e,
            })
        }
    }
}

fn cmd_value(a: ValueArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let method = match a.method {
        Some(MethodArg::Exact) => Method::Exact,
        Some(MethodArg::Mc) => Method::MonteCarlo,
        Some(MethodArg::Loo) => Method::LeaveOneOut,
        None => cfg.game.method,
    };
    let seed = a.seed.unwrap_or(cfg.game.seed);
    let permutations = a.permutations.unwrap_or(cfg.game.permutations);
    let doc = with_game(&cfg, |game, ids| {
        let result = match method {
            Method::Exact => shapley_exact(game, cfg.game.exact_cap)?,
            Method::MonteCarlo => {
                let mc = MonteCarloConfig { permutations, truncation_tol: cfg.game.truncation_tol, seed };
                shapley_montecarlo(game, &mc)?
            }
            Method::LeaveOneOut => loo_values(game)?,
        };
        Ok(ValuesDoc::new(&result, ids))
    })?;
    emit(out, a.out.as_deref(), &to_json_pretty(&doc))
}

#[derive(Serialize)]
struct CurveDoc {
    label: String,
    method: Method,
    u_full: f64,
    points: Vec<CurvePoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<CurveFailure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_prefix: Option<BestPrefix>,
}

fn curve_label(method: Method) -> &'static str {
    match method {
        Method::Exact | Method::MonteCarlo => "shapley",
        Method::LeaveOneOut => "loo",
    }
}

fn cmd_curve(a: CurveArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let docs: Vec<ValuesDoc> = a.values.iter().map(|p| ValuesDoc::load(p)).collect::<Result<_>>()?;
    let curves = with_game(&cfg, |game, ids| {
        let u_full = game.value(&promptshap_core::Coalition::full(ids.len()))?;
        let mut curves = Vec::new();
        for (doc, path) in docs.iter().zip(&a.values) {
            let values = doc.values_for(ids).map_err(|m| Error::input(path, 0, m))?;
            let curve: Curve = rank_add_curve(&values, ids, game)?;
            if let (true, Some(last)) = (curve.is_complete(), curve.points.last()) {
                if last.utility != u_full {
                    return Err(promptshap_core::Error::Consistency(format!(
                        "last curve point {} differs from U(N) = {u_full}",
                        last.utility
                    ))
                    .into());
                }
            }
            curves.push((doc.method, u_full, curve));
        }
        Ok(curves)
    })?;

    let mut summary = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut failed = None;
    for (method, u_full, curve) in curves {
        let mut label = curve_label(method).to_owned();
        let mut i = 2;
        while labels.contains(&label) {
            label = format!("{}_{i}", curve_label(method));
            i += 1;
        }
        labels.push(label.clone());
        let best = best_prefix(&curve.points).ok();
        if let Some(f) = &curve.failure {
            failed.get_or_insert_with(|| format!("curve {label} stopped at k = {}: {}", f.k, f.message));
        }
        let doc = CurveDoc { label: label.clone(), method, u_full, points: curve.points, failure: curve.failure, best_prefix: best };
        if let Some(dir) = &a.out_dir {
            formats::write_string(&dir.join(format!("curve_{label}.csv")), &curve_csv(&doc.points))?;
            formats::write_string(&dir.join(format!("curve_{label}.json")), &to_json_pretty(&doc))?;
        }
        summary.push(doc);
    }
    emit(out, None, &to_json_pretty(&summary))?;
    match failed {
        Some(m) => Err(promptshap_core::Error::Consistency(m).into()),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------- learning

fn regressor_for(cfg: Option<&RunConfig>, model: Option<ModelArg>) -> RegressorSpec {
    let configured = cfg.map(|c| c.learn.regressor.clone());
    let wanted = match model {
        None => return configured.unwrap_or_else(RegressorSpec::ridge_default),
        Some(ModelArg::Linear) => RegressorKind::Linear,
        Some(ModelArg::Ridge) => RegressorKind::Ridge,
        Some(ModelArg::Gp) => RegressorKind::GaussianProcess,
    };
    match configured {
        Some(spec) if spec.kind() == wanted => spec,
        _ => match wanted {
            RegressorKind::Linear => RegressorSpec::Linear,
            RegressorKind::Ridge => RegressorSpec::ridge_default(),
            RegressorKind::GaussianProcess => RegressorSpec::GaussianProcess(GpConfig::default()),
        },
    }
}

#[derive(Serialize)]
struct LearnReport {
    model: RegressorKind,
    train_fraction: f64,
    #[serde(flatten)]
    holdout: HoldoutReport,
}

/// Embedding rows in the order of `ids`.
fn rows_for(emb: &EmbeddingMatrix, ids: &[String], source: &Path) -> Result<EmbeddingMatrix> {
    let idx = ids
        .iter()
        .map(|id| emb.position(id).ok_or_else(|| Error::input(source, 0, format!("no embedding for prompt {id:?}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(emb.select(&idx))
}

fn cmd_learn(a: LearnArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = a.config.as_deref().map(RunConfig::load).transpose()?;
    let emb_path = a
        .embeddings
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.paths.embeddings.clone()))
        .ok_or_else(|| Error::Usage("--embeddings is required (or paths.embeddings in the config)".into()))?;
    let values = ValuesDoc::load(&a.values)?;
    let ids = values.ids();
    let mut x = rows_for(&read_embeddings(&emb_path)?, &ids, &emb_path)?;
    if cfg.as_ref().is_some_and(|c| c.learn.unit_norm) {
        x = x.normalized();
    }
    let y = values.values();
    let spec = regressor_for(cfg.as_ref(), a.model);
    let fraction = a.train_fraction.or(cfg.as_ref().map(|c| c.learn.train_fraction)).unwrap_or(0.8);
    let seed = derived_seed(a.seed.or(cfg.as_ref().map(|c| c.game.seed)).unwrap_or(0), PURPOSE_SPLIT);
    let holdout = holdout_eval(&x, &y, seed, fraction, &spec)?;
    let model = ModelDoc::new(train(&x, &y, &spec)?, ids);
    formats::write_string(&a.out, &to_json_pretty(&model))?;
    let report = LearnReport { model: spec.kind(), train_fraction: fraction, holdout };
    emit(out, a.report.as_deref(), &to_json_pretty(&report))
}

fn cmd_predict(a: PredictArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = a.config.as_deref().map(RunConfig::load).transpose()?;
    let model = ModelDoc::load(&a.model)?;
    let manifest = PromptManifest::load(&a.manifest)?;
    let ids = manifest.ids();
    let unit_norm = cfg.as_ref().is_some_and(|c| c.learn.unit_norm);
    let emb_path = a.embeddings.clone().or_else(|| cfg.as_ref().and_then(|c| c.paths.embeddings.clone()));
    let x = match emb_path {
        Some(p) => {
            let x = rows_for(&read_embeddings(&p)?, &ids, &p)?;
            if unit_norm {
                x.normalized()
            } else {
                x
            }
        }
        None => {
            let api = cfg
                .as_ref()
                .and_then(|c| c.api.clone())
                .ok_or_else(|| Error::Usage("--embeddings or a config with an api section is required".into()))?;
            ModelClient::from_env(api)?.embed_matrix(ids.clone(), &manifest.texts(), unit_norm)?
        }
    };
    let preds = predict_sv(&model.regressor, &x)?;
    let doc: Vec<Prediction> =
        ids.into_iter().zip(preds).map(|(id, predicted_value)| Prediction { id, predicted_value }).collect();
    emit(out, a.out.as_deref(), &to_json_pretty(&doc))
}

// ---------------------------------------------------------------- theory

#[derive(Serialize)]
struct Lemma1Doc {
    check: &'static str,
    passed: bool,
    #[serde(flatten)]
    report: Lemma1Report,
}

#[derive(Serialize)]
struct Theorem1Doc {
    check: &'static str,
    passed: bool,
    runs: Vec<Theorem1Summary>,
}

#[derive(Serialize)]
struct BetaRow {
    epsilon: f64,
    exact: f64,
    quadrature: f64,
    normal: f64,
    normal_rel_error: f64,
    poly: PolyApprox,
    poly_rel_error: f64,
}

#[derive(Serialize)]
struct BetaDoc {
    check: &'static str,
    alpha: f64,
    beta: f64,
    rows: Vec<BetaRow>,
}

fn cmd_verify(v: VerifyCommand, out: &mut dyn Write) -> Result<()> {
    let text = match v {
        VerifyCommand::Lemma1 { max_n } => {
            let report = lemma1_sweep(max_n)?;
            to_json_pretty(&Lemma1Doc { check: "lemma1", passed: report.failures.is_empty(), report })
        }
        VerifyCommand::Theorem1 { n, d, trials, seed, field } => {
            let fields: &[FieldKind] = match field {
                FieldArg::Affine => &[FieldKind::Affine],
                FieldArg::Smooth => &[FieldKind::Smooth],
                FieldArg::Both => &[FieldKind::Affine, FieldKind::Smooth],
            };
            let runs = fields
                .iter()
                .map(|&f| theorem1_experiment(n, d, f, trials, seed, promptshap_core::DEFAULT_EXACT_CAP))
                .collect::<promptshap_core::Result<Vec<_>>>()?;
            let passed = runs.iter().all(|r| r.violations == 0);
            to_json_pretty(&Theorem1Doc { check: "theorem1", passed, runs })
        }
        VerifyCommand::BetaBounds { alpha, beta, epsilon } => {
            let spec = BetaSpec::new(alpha, beta)?;
            let rows = epsilon
                .iter()
                .map(|&eps| {
                    let exact = beta_interval_exact(&spec, eps)?;
                    let normal = beta_interval_normal(&spec, eps)?;
                    let poly = beta_interval_poly(&spec, eps)?;
                    Ok(BetaRow {
                        epsilon: eps,
                        exact,
                        quadrature: beta_interval_quadrature(&spec, eps)?,
                        normal,
                        normal_rel_error: (normal - exact).abs() / exact,
                        poly_rel_error: (poly.value - exact).abs() / exact,
                        poly,
                    })
                })
                .collect::<promptshap_core::Result<Vec<_>>>()?;
            to_json_pretty(&BetaDoc { check: "beta-bounds", alpha, beta, rows })
        }
    };
    emit(out, None, &text)
}

fn cmd_simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = PerturbationConfig {
        n_classifiers: a.n_classifiers,
        instances: a.instances,
        alpha: a.alpha,
        beta: a.beta,
        k: a.k,
        delta: a.delta,
        seed: a.seed,
        trials: a.trials,
    };
    let mut report = ensemble_perturbation(&cfg)?;
    if a.summary_only {
        report.trials.clear();
    }
    emit(out, None, &to_json_pretty(&report))
}

#[derive(Serialize)]
struct CacheDoc<'a> {
    path: &'a Path,
    kind: CacheKind,
    #[serde(flatten)]
    stats: CacheStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    compacted: Option<bool>,
}

fn cmd_cache(c: CacheCommand, out: &mut dyn Write) -> Result<()> {
    let text = match c {
        CacheCommand::Inspect { path } => {
            let (kind, stats) = cache::inspect(&path)?;
            to_json_pretty(&CacheDoc { path: &path, kind, stats, compacted: None })
        }
        CacheCommand::Compact { path } => {
            let (kind, stats) = cache::compact(&path)?;
            to_json_pretty(&CacheDoc { path: &path, kind, stats, compacted: Some(true) })
        }
    };
    emit(out, None, &text)
}
