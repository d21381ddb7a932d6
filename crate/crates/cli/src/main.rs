use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use datapricer::config::{
    DataSpec, ExperimentConfig, GridSpec, MechanismKind, MechanismSpec, NoiseSpec, OutputSpec, PipelineSpec, PriorSpec,
    QuerySpec, Step,
};
use datapricer::output::{render, Format};
use datapricer::run::parse_vector;
use datapricer::{emit_plot_data, generate_synthetic, run_experiment, CliError, CliResult, Session};
use datapricer_core::bayes::{BeliefFile, Dataset};

#[derive(Parser, Debug)]
#[command(name = "datapricer", version, about = "Value and price data under Bayesian linear regression")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write output here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Overrides the verification tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct Inputs {
    /// Dataset CSV with header x_1..x_d,y,sigma.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Buyer type or query direction, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// Prior as JSON {"mean": [...], "covariance": [[...]]}; standard normal if absent.
    #[arg(long)]
    prior: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    /// Type grid: angular:N, fibonacci:N, random:N[:seed], basis.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct PerfectArgs {
    /// Records generated per quote.
    #[arg(long)]
    records: Option<usize>,
    /// Noise: a number, constant:S, or affine:A,B1,...,Bd.
    #[arg(long, allow_hyphen_values = true)]
    noise: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Canonical value of a dataset along a query direction.
    Value(Inputs),
    /// Exact Data Shapley values next to leave-one-out marginal values.
    Shapley(Inputs),
    /// Monte-Carlo check that expected KL equals the entropy reduction.
    CouplingCheck {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Quote of the full-surplus mechanism under perfect customization.
    PricePerfect {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        perfect: PerfectArgs,
    },
    /// Quote of the SVD mechanism.
    PriceSvd(Inputs),
    /// Quote of the multi-armed-bandit mechanism.
    PriceMab(Inputs),
    /// Value of the whole dataset to a known type.
    FirstBest(Inputs),
    /// Condition number of the noise-normalized design.
    Kappa(Inputs),
    /// Grid check of incentive compatibility.
    VerifyIc {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        perfect: PerfectArgs,
        /// perfect, svd, mab or full-reveal.
        #[arg(long)]
        mechanism: Option<String>,
    },
    /// Grid check of individual rationality.
    VerifyIr {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        perfect: PerfectArgs,
        #[arg(long)]
        mechanism: Option<String>,
    },
    /// Regret of the SVD mechanism against first best over a grid.
    AuditRegret(Inputs),
    /// Profitable misreport against first-best pricing on anisotropic data.
    DemoImpossibility(Inputs),
    /// Envelope-gradient and path-independence check of the perfect price.
    CheckEnvelope {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        perfect: PerfectArgs,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Write the configured synthetic dataset as CSV.
    Generate,
    /// Run the configured pipeline and write a run record.
    Run,
}

fn blank_config(dim: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        dimension: dim,
        prior: PriorSpec::Standard,
        data: None,
        synthetic: None,
        query: None,
        mechanism: None,
        grid: None,
        pipeline: PipelineSpec::default(),
        output: OutputSpec::default(),
        base_dir: PathBuf::new(),
        source_hash: String::new(),
    }
}

fn absolute(p: &Path) -> CliResult<PathBuf> {
    Ok(if p.is_absolute() { p.to_path_buf() } else { std::env::current_dir()?.join(p) })
}

fn parse_noise(s: &str) -> CliResult<NoiseSpec> {
    if let Ok(v) = s.parse::<f64>() {
        return Ok(NoiseSpec::Constant(v));
    }
    let (name, params) = s.split_once(':').ok_or_else(|| CliError::input(format!("bad noise spec `{s}`")))?;
    Ok(NoiseSpec::Function { function: name.to_string(), params: parse_vector(params)?.as_slice().to_vec() })
}

fn parse_grid(s: &str) -> CliResult<GridSpec> {
    let bad = || CliError::input(format!("bad grid spec `{s}`"));
    let mut parts = s.split(':');
    let kind = parts.next().unwrap_or_default();
    let mut num = || -> CliResult<Option<u64>> { parts.next().map(|t| t.parse::<u64>().map_err(|_| bad())).transpose() };
    Ok(match kind {
        "angular" => GridSpec::AngularMesh { resolution: num()?.ok_or_else(bad)? as usize },
        "fibonacci" => GridSpec::Fibonacci { count: num()?.ok_or_else(bad)? as usize },
        "random" => {
            let count = num()?.ok_or_else(bad)? as usize;
            GridSpec::UniformRandom { count, seed: num()? }
        }
        "basis" => GridSpec::Basis,
        _ => return Err(bad()),
    })
}

fn parse_mechanism(s: &str) -> CliResult<MechanismKind> {
    match s {
        "perfect" => Ok(MechanismKind::Perfect),
        "svd" => Ok(MechanismKind::Svd),
        "mab" => Ok(MechanismKind::Mab),
        "full-reveal" | "full_reveal" => Ok(MechanismKind::FullReveal),
        other => Err(CliError::input(format!("unknown mechanism `{other}`"))),
    }
}

/// Loads `--config` (if any) and layers command-line inputs on top.
fn build_config(cli: &Cli, inputs: &Inputs) -> CliResult<ExperimentConfig> {
    let x = inputs.x.as_deref().map(parse_vector).transpose()?;
    let data_dim = match &inputs.data {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::input(format!("cannot read {}: {e}", p.display())))?;
            Some(Dataset::from_csv_str(&text)?.dim())
        }
        None => None,
    };
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let dim = inputs
                .dim
                .or(x.as_ref().map(|v| v.len()))
                .or(data_dim)
                .ok_or_else(|| CliError::input("cannot infer the dimension; pass --dim, --x or --data"))?;
            blank_config(dim, 0)
        }
    };
    if let Some(d) = inputs.dim {
        cfg.dimension = d;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.tolerance {
        cfg.pipeline.tolerance = Some(t);
    }
    if let Some(p) = &inputs.data {
        cfg.synthetic = None;
        cfg.data = Some(DataSpec { csv: Some(absolute(p)?), rows: None, responses: None, noise: None, statistics: Vec::new() });
    }
    if let Some(x) = x {
        let samples = cfg.query.as_ref().map_or(100_000, |q| q.samples);
        cfg.query = Some(QuerySpec { x: x.as_slice().to_vec(), samples });
    }
    if let Some(p) = &inputs.prior {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", p.display())))?;
        let f: BeliefFile = serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("cannot parse prior {}: {e}", p.display())))?;
        cfg.prior = PriorSpec::Explicit { mean: f.mean, covariance: f.covariance };
    }
    if let Some(g) = &inputs.grid {
        cfg.grid = Some(parse_grid(g)?);
    }
    Ok(cfg)
}

fn set_mechanism(cfg: &mut ExperimentConfig, kind: Option<MechanismKind>, perfect: Option<&PerfectArgs>) -> CliResult<()> {
    let current = cfg.mechanism.take();
    let mut spec = current.unwrap_or(MechanismSpec { kind: MechanismKind::Svd, records: None, noise: None, artificial_noise: None });
    if let Some(k) = kind {
        spec.kind = k;
    }
    if let Some(p) = perfect {
        if let Some(n) = p.records {
            spec.records = Some(n);
        }
        if let Some(s) = &p.noise {
            spec.noise = Some(parse_noise(s)?);
        }
    }
    cfg.mechanism = Some(spec);
    Ok(())
}

fn emit(cli: &Cli, text: &str) -> CliResult<()> {
    match &cli.out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn single_step(cli: &Cli, cfg: ExperimentConfig, step: Step) -> CliResult<()> {
    cfg.validate()?;
    let session = Session::new(cfg).map_err(|e| e.at("setup"))?;
    let out = session.run_step(step)?;
    emit(cli, &render(&out.output, cli.format))?;
    if out.passed == Some(false) {
        return Err(CliError::verification(format!("{} failed", step.name())).at(step.name()));
    }
    Ok(())
}

fn require_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::input("--config is required"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.tolerance {
        cfg.pipeline.tolerance = Some(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> CliResult<()> {
    let mech = |s: &Option<String>| s.as_deref().map(parse_mechanism).transpose();
    match &cli.command {
        Command::Value(i) => single_step(cli, build_config(cli, i)?, Step::Value),
        Command::Shapley(i) => single_step(cli, build_config(cli, i)?, Step::Shapley),
        Command::CouplingCheck { inputs, samples } => {
            let mut cfg = build_config(cli, inputs)?;
            if let (Some(q), Some(s)) = (cfg.query.as_mut(), samples) {
                q.samples = *s;
            }
            single_step(cli, cfg, Step::Coupling)
        }
        Command::PricePerfect { inputs, perfect } => {
            let mut cfg = build_config(cli, inputs)?;
            set_mechanism(&mut cfg, Some(MechanismKind::Perfect), Some(perfect))?;
            single_step(cli, cfg, Step::Price)
        }
        Command::PriceSvd(i) | Command::PriceMab(i) => {
            let kind = if matches!(cli.command, Command::PriceSvd(_)) { MechanismKind::Svd } else { MechanismKind::Mab };
            let mut cfg = build_config(cli, i)?;
            set_mechanism(&mut cfg, Some(kind), None)?;
            single_step(cli, cfg, Step::Price)
        }
        Command::FirstBest(i) => single_step(cli, build_config(cli, i)?, Step::FirstBest),
        Command::Kappa(i) => single_step(cli, build_config(cli, i)?, Step::Kappa),
        Command::VerifyIc { inputs, perfect, mechanism } | Command::VerifyIr { inputs, perfect, mechanism } => {
            let step = if matches!(cli.command, Command::VerifyIc { .. }) { Step::VerifyIc } else { Step::VerifyIr };
            let mut cfg = build_config(cli, inputs)?;
            set_mechanism(&mut cfg, mech(mechanism)?, Some(perfect))?;
            single_step(cli, cfg, step)
        }
        Command::AuditRegret(i) => single_step(cli, build_config(cli, i)?, Step::AuditRegret),
        Command::DemoImpossibility(i) => single_step(cli, build_config(cli, i)?, Step::Impossibility),
        Command::CheckEnvelope { inputs, perfect, points, pairs } => {
            let mut cfg = build_config(cli, inputs)?;
            set_mechanism(&mut cfg, Some(MechanismKind::Perfect), Some(perfect))?;
            cfg.pipeline.envelope_points = points.or(cfg.pipeline.envelope_points);
            cfg.pipeline.envelope_pairs = pairs.or(cfg.pipeline.envelope_pairs);
            single_step(cli, cfg, Step::Envelope)
        }
        Command::Generate => {
            let cfg = require_config(cli)?;
            let ds = generate_synthetic(&cfg)?;
            emit(cli, &ds.to_csv_string())
        }
        Command::Run => {
            let cfg = require_config(cli)?;
            let record = run_experiment(&cfg)?;
            let text = render(&serde_json::to_value(&record).expect("run record"), cli.format);
            match (&cli.out, &cfg.output.record) {
                (None, Some(p)) => {
                    let p = cfg.resolve(p);
                    std::fs::write(&p, &text).map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display())))?;
                }
                _ => emit(cli, &text)?,
            }
            if let Some(dir) = &cfg.output.plot_dir {
                let dir = cfg.resolve(dir);
                std::fs::create_dir_all(&dir)?;
                for kind in &cfg.output.plots {
                    let csv = emit_plot_data(&record, *kind)?;
                    std::fs::write(dir.join(format!("{}.csv", kind.name())), csv)?;
                }
            }
            if !record.passed {
                let failed: Vec<&str> = record
                    .results
                    .iter()
                    .filter(|r| r.passed == Some(false))
                    .map(|r| r.step.as_str())
                    .collect();
                return Err(CliError::verification(format!("failed steps: {}", failed.join(", "))).at("run"));
            }
            Ok(())
        }
    }
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("DATAPRICER_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::input(format!("DATAPRICER_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::input(format!("cannot size thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": "input", "stage": "arguments", "message": e.to_string() } }));
            return ExitCode::from(2);
        }
    };
    match init_threads().and_then(|_| execute(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
