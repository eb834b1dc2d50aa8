//! Command-line interface: zeta-table management, sampling, fitting, EM,
//! classifier training and evaluation, all seeded and reproducible.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::ChaCha8Rng;
use spdgauss::classifier::{
    classify_gaussian, classify_nn, classify_wishart, evaluate, train, Classification,
    ClassifierModel, ClusterModel, DecisionRule, WishartClusterModel,
};
use spdgauss::dataset::{Dataset, DatasetRecord};
use spdgauss::error::Error;
use spdgauss::estimator::{fit_gaussian, GaussianParams, MeanSolverOptions};
use spdgauss::mixture::{em_fit, matrix_from_rows, EmOptions, InitStrategy, MixtureModel};
use spdgauss::normalization::ZetaTable;
use spdgauss::sampler::{sample_gaussian, SamplerConfig};
use spdgauss::SpdMatrix;

const EXIT_CODES: &str = "EXIT CODES:
    0  success
    2  usage error or invalid argument
    3  I/O error or malformed file
    4  validation failure (shape, symmetry, definiteness, labels)
    5  value outside the zeta-table range (rebuild the table wider)
    6  zeta table rejected (non-monotone or Monte Carlo error too large)
    7  empty or degenerate input
    8  solver did not converge";

#[derive(Parser)]
#[command(
    name = "spdgauss",
    about = "Riemannian Gaussian distributions on symmetric positive definite matrices",
    after_help = EXIT_CODES,
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Suppress the human-readable summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build and save a zeta table for one matrix dimension.
    #[command(name = "zeta-table")]
    ZetaTable(ZetaTableArgs),
    /// Draw samples from a Riemannian Gaussian into a dataset file.
    Sample(SampleArgs),
    /// Fit a single Gaussian to a dataset (maximum likelihood).
    Fit(FitArgs),
    /// Fit an M-component Gaussian mixture by EM.
    Em(EmArgs),
    /// Train a per-class mixture classifier from a labelled dataset.
    Train(TrainArgs),
    /// Classify a dataset with a trained model.
    Classify(ClassifyArgs),
    /// Evaluate a rule on a labelled dataset (confusion matrix, accuracy).
    Eval(EvalArgs),
}

#[derive(Args)]
struct ZetaTableArgs {
    /// Matrix dimension m.
    #[arg(long)]
    m: usize,
    /// Sigma range as min:max (geometric grid).
    #[arg(long, default_value = "0.05:3.0")]
    sigma: String,
    /// Number of grid points.
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// Monte Carlo samples per table build.
    #[arg(long, default_value_t = 1_000_000)]
    mc: u64,
    #[arg(long)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    /// Gaussian parameters file ({"mean": [[..]], "sigma": s} or a
    /// single-component mixture model).
    #[arg(long, conflicts_with_all = ["m", "sigma"])]
    params: Option<PathBuf>,
    /// Matrix dimension (centre of mass = identity).
    #[arg(long, requires = "sigma")]
    m: Option<usize>,
    /// Dispersion parameter (with --m; centre of mass = identity).
    #[arg(long, requires = "m")]
    sigma: Option<f64>,
    /// Number of samples.
    #[arg(short = 'n', long = "n")]
    count: usize,
    #[arg(long)]
    seed: u64,
    /// Metropolis-Hastings proposal step override.
    #[arg(long)]
    mh_step: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    burn_in: usize,
    #[arg(long, default_value_t = 5)]
    thinning: usize,
    /// Output dataset path (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Input dataset (JSON lines).
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "zeta-table")]
    zeta_table: PathBuf,
    /// Output parameter file (single-component mixture JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmArgs {
    #[arg(long)]
    data: PathBuf,
    /// Number of mixture components.
    #[arg(long)]
    components: usize,
    #[arg(long = "zeta-table")]
    zeta_table: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Relative log-likelihood stopping tolerance.
    #[arg(long, default_value_t = 1e-6)]
    ll_tol: f64,
    #[arg(long, value_enum, default_value_t = InitChoice::Farthest)]
    init: InitChoice,
    #[arg(long, default_value_t = 1e-3)]
    sigma_floor: f64,
    /// Output mixture model path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Labelled dataset (every record needs a label).
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "components-per-class", default_value_t = 1)]
    components_per_class: usize,
    #[arg(long = "zeta-table")]
    zeta_table: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Output cluster model path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    data: PathBuf,
    /// Trained model (cluster model JSON, or Wishart model for --rule wishart).
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    rule: RuleChoice,
    /// Needed by the bayes rule.
    #[arg(long = "zeta-table")]
    zeta_table: Option<PathBuf>,
    /// Output predictions path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Labelled dataset.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    rule: RuleChoice,
    #[arg(long = "zeta-table")]
    zeta_table: Option<PathBuf>,
    /// Output report path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleChoice {
    /// Bayes rule: weights, dispersions and distances.
    Bayes,
    /// Nearest cluster centre by Rao distance.
    Nn,
    /// Wishart-density baseline with supplied parameters.
    Wishart,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitChoice {
    Farthest,
    Random,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::InvalidSigma(_) => 2,
        Error::Io(_) | Error::Format(_) => 3,
        Error::NotSquare { .. }
        | Error::NotSymmetric { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::DimensionMismatch { .. }
        | Error::BaseMismatch
        | Error::SingularTransform { .. }
        | Error::NotOrthogonal { .. }
        | Error::UnknownLabel(_) => 4,
        Error::OutOfTableRange { .. } => 5,
        Error::NonMonotoneTable { .. } | Error::ExcessiveMcError { .. } => 6,
        Error::EmptyInput(_) | Error::EmptyComponent { .. } => 7,
        Error::MaxItersExceeded { .. } => 8,
    }
}

fn run(cli: &Cli) -> spdgauss::Result<()> {
    match &cli.command {
        Command::ZetaTable(args) => cmd_zeta_table(args, cli.quiet),
        Command::Sample(args) => cmd_sample(args, cli.quiet),
        Command::Fit(args) => cmd_fit(args, cli.quiet),
        Command::Em(args) => cmd_em(args, cli.quiet),
        Command::Train(args) => cmd_train(args, cli.quiet),
        Command::Classify(args) => cmd_classify(args, cli.quiet),
        Command::Eval(args) => cmd_eval(args, cli.quiet),
    }
}

fn seeded_rng(seed: u64) -> ChaCha8Rng {
    use rand_chacha::rand_core::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

fn parse_sigma_range(text: &str) -> spdgauss::Result<(f64, f64)> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| Error::InvalidArgument(format!("--sigma expects min:max, got {text:?}")))?;
    let parse = |s: &str| -> spdgauss::Result<f64> {
        s.parse()
            .map_err(|_| Error::InvalidArgument(format!("bad sigma bound {s:?}")))
    };
    Ok((parse(lo)?, parse(hi)?))
}

fn cmd_zeta_table(args: &ZetaTableArgs, quiet: bool) -> spdgauss::Result<()> {
    if args.m == 0 {
        return Err(Error::InvalidArgument("--m must be >= 1".into()));
    }
    let (sigma_min, sigma_max) = parse_sigma_range(&args.sigma)?;
    let (table, report) = ZetaTable::build(
        args.m,
        sigma_min,
        sigma_max,
        args.grid,
        args.mc,
        args.seed,
    )?;
    table.save(&args.out)?;
    if !quiet {
        println!(
            "zeta table m={} on [{sigma_min}, {sigma_max}] ({} points, {} MC samples)",
            args.m, args.grid, args.mc
        );
        println!("max relative std error: {:.3e}", report.max_rel_std_error);
        println!("wrote {}", args.out.display());
    }
    Ok(())
}

fn load_params(path: &Path) -> spdgauss::Result<GaussianParams> {
    #[derive(serde::Deserialize)]
    struct BareParams {
        mean: Vec<Vec<f64>>,
        sigma: f64,
    }
    let text = std::fs::read_to_string(path)?;
    if let Ok(bare) = serde_json::from_str::<BareParams>(&text) {
        let m = bare.mean.len();
        return GaussianParams::new(matrix_from_rows(m, &bare.mean)?, bare.sigma);
    }
    let mixture = MixtureModel::from_json(&text)?;
    if mixture.len() != 1 {
        return Err(Error::InvalidArgument(format!(
            "--params model must have exactly one component, found {}",
            mixture.len()
        )));
    }
    Ok(mixture.components()[0].params.clone())
}

fn cmd_sample(args: &SampleArgs, quiet: bool) -> spdgauss::Result<()> {
    let params = match (&args.params, args.m, args.sigma) {
        (Some(path), _, _) => load_params(path)?,
        (None, Some(m), Some(sigma)) => {
            if m == 0 {
                return Err(Error::InvalidArgument("--m must be >= 1".into()));
            }
            GaussianParams::new(SpdMatrix::identity(m), sigma)?
        }
        _ => {
            return Err(Error::InvalidArgument(
                "provide --params FILE, or --m and --sigma".into(),
            ))
        }
    };
    let config = SamplerConfig {
        mh_step: args.mh_step,
        burn_in: args.burn_in,
        thinning: args.thinning,
        independent_chains: false,
        seed: args.seed,
    };
    let mut rng = seeded_rng(args.seed);
    let draws = sample_gaussian(&params, args.count, &config, &mut rng)?;
    let records = draws
        .into_iter()
        .map(|matrix| DatasetRecord {
            matrix,
            label: None,
        })
        .collect();
    let dataset = Dataset::new(params.mean().dim(), Some(args.seed), records)?;
    dataset.save(&args.out)?;
    if !quiet {
        println!(
            "sampled {} draws from G(mean, sigma={}) at m={}",
            args.count,
            params.sigma(),
            params.mean().dim()
        );
        println!("wrote {}", args.out.display());
    }
    Ok(())
}

fn load_table_for(dataset: &Dataset, path: &Path) -> spdgauss::Result<ZetaTable> {
    let table = ZetaTable::load(path)?;
    if table.dim() != dataset.dim {
        return Err(Error::DimensionMismatch {
            left: dataset.dim,
            right: table.dim(),
        });
    }
    Ok(table)
}

fn cmd_fit(args: &FitArgs, quiet: bool) -> spdgauss::Result<()> {
    let dataset = Dataset::load(&args.data)?;
    let table = load_table_for(&dataset, &args.zeta_table)?;
    let points = dataset.matrices();
    let params = fit_gaussian(&points, &table, &MeanSolverOptions::default())?;
    let model = MixtureModel::new(vec![spdgauss::mixture::MixtureComponent {
        weight: 1.0,
        params: params.clone(),
    }])?;
    model.save(&args.out)?;
    if !quiet {
        println!(
            "fitted G(mean, sigma) to {} points: sigma_hat = {:.6}",
            points.len(),
            params.sigma()
        );
        println!("wrote {}", args.out.display());
    }
    Ok(())
}

fn cmd_em(args: &EmArgs, quiet: bool) -> spdgauss::Result<()> {
    let dataset = Dataset::load(&args.data)?;
    let table = load_table_for(&dataset, &args.zeta_table)?;
    let points = dataset.matrices();
    let opts = EmOptions {
        max_iters: args.max_iters,
        ll_rel_tol: args.ll_tol,
        init: match args.init {
            InitChoice::Farthest => InitStrategy::FarthestPoint,
            InitChoice::Random => InitStrategy::Random,
        },
        seed: args.seed,
        sigma_floor: args.sigma_floor,
        ..EmOptions::default()
    };
    let mut rng = seeded_rng(args.seed);
    let (model, trace) = em_fit(&points, args.components, &table, &opts, &mut rng)?;
    model.save(&args.out)?;
    if !quiet {
        println!(
            "EM fitted {} components to {} points in {} iterations",
            args.components,
            points.len(),
            trace.len().saturating_sub(1)
        );
        println!("log-likelihood: {:.6}", trace.last().unwrap());
        for (k, c) in model.components().iter().enumerate() {
            println!(
                "  component {k}: weight {:.4}, sigma {:.4}",
                c.weight,
                c.params.sigma()
            );
        }
        println!("wrote {}", args.out.display());
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs, quiet: bool) -> spdgauss::Result<()> {
    let dataset = Dataset::load(&args.data)?;
    let table = load_table_for(&dataset, &args.zeta_table)?;
    let mut classes: BTreeMap<String, Vec<SpdMatrix>> = BTreeMap::new();
    for (matrix, label) in dataset.labelled()? {
        classes.entry(label).or_default().push(matrix);
    }
    let opts = EmOptions {
        seed: args.seed,
        ..EmOptions::default()
    };
    let mut rng = seeded_rng(args.seed);
    let model = train(
        &classes,
        args.components_per_class,
        &table,
        &opts,
        &mut rng,
    )?;
    model.save(&args.out)?;
    if !quiet {
        println!(
            "trained {} clusters over {} classes ({} points)",
            model.clusters().len(),
            classes.len(),
            dataset.len()
        );
        println!("wrote {}", args.out.display());
    }
    Ok(())
}

enum LoadedModel {
    Gaussian(ClusterModel),
    Wishart(WishartClusterModel),
}

fn load_model(path: &Path, rule: RuleChoice) -> spdgauss::Result<LoadedModel> {
    let text = std::fs::read_to_string(path)?;
    match rule {
        RuleChoice::Wishart => Ok(LoadedModel::Wishart(WishartClusterModel::from_json(
            &text,
        )?)),
        _ => Ok(LoadedModel::Gaussian(ClusterModel::from_json(&text)?)),
    }
}

fn classify_one(
    y: &SpdMatrix,
    rule: RuleChoice,
    model: &LoadedModel,
    table: Option<&ZetaTable>,
) -> spdgauss::Result<Classification> {
    match (rule, model) {
        (RuleChoice::Bayes, LoadedModel::Gaussian(m)) => {
            let table = table
                .ok_or_else(|| Error::InvalidArgument("--rule bayes needs --zeta-table".into()))?;
            classify_gaussian(y, m, table)
        }
        (RuleChoice::Nn, LoadedModel::Gaussian(m)) => classify_nn(y, m),
        (RuleChoice::Wishart, LoadedModel::Wishart(m)) => classify_wishart(y, m),
        _ => Err(Error::InvalidArgument(
            "rule does not match the model kind".into(),
        )),
    }
}

fn cmd_classify(args: &ClassifyArgs, quiet: bool) -> spdgauss::Result<()> {
    let dataset = Dataset::load(&args.data)?;
    let model = load_model(&args.model, args.rule)?;
    let table = match &args.zeta_table {
        Some(path) => Some(load_table_for(&dataset, path)?),
        None => None,
    };
    let mut predictions = Vec::with_capacity(dataset.len());
    for (index, record) in dataset.records.iter().enumerate() {
        let c = classify_one(&record.matrix, args.rule, &model, table.as_ref())?;
        predictions.push(serde_json::json!({
            "index": index,
            "label": c.label,
            "cluster": c.cluster,
            "scores": c.scores,
        }));
    }
    let doc = serde_json::json!({
        "rule": match args.rule {
            RuleChoice::Bayes => "bayes",
            RuleChoice::Nn => "nn",
            RuleChoice::Wishart => "wishart",
        },
        "predictions": predictions,
    });
    std::fs::write(&args.out, serde_json::to_string_pretty(&doc).expect("json"))?;
    if !quiet {
        println!("classified {} points", dataset.len());
        println!("wrote {}", args.out.display());
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs, quiet: bool) -> spdgauss::Result<()> {
    let dataset = Dataset::load(&args.data)?;
    let labelled = dataset.labelled()?;
    let model = load_model(&args.model, args.rule)?;
    let table = match &args.zeta_table {
        Some(path) => Some(load_table_for(&dataset, path)?),
        None => None,
    };
    let (rule, classifier_model) = match (args.rule, model) {
        (RuleChoice::Bayes, LoadedModel::Gaussian(m)) => {
            (DecisionRule::Bayes, ClassifierModel::Gaussian(m))
        }
        (RuleChoice::Nn, LoadedModel::Gaussian(m)) => {
            (DecisionRule::NearestCentre, ClassifierModel::Gaussian(m))
        }
        (RuleChoice::Wishart, LoadedModel::Wishart(m)) => {
            (DecisionRule::Wishart, ClassifierModel::Wishart(m))
        }
        _ => {
            return Err(Error::InvalidArgument(
                "rule does not match the model kind".into(),
            ))
        }
    };
    let report = evaluate(&labelled, rule, &classifier_model, table.as_ref())?;
    std::fs::write(
        &args.out,
        serde_json::to_string_pretty(&report).expect("json"),
    )?;
    if !quiet {
        println!("overall accuracy: {:.4}", report.overall_accuracy);
        for (i, label) in report.labels.iter().enumerate() {
            println!("  {label}: {:?}", report.confusion[i]);
        }
        println!("wrote {}", args.out.display());
    }
    Ok(())
}
