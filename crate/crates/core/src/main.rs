use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sgdinfer::harness::fit_log_slope;
use sgdinfer::harness::grid::{coverage_cells, table_cells};
use sgdinfer::harness::{
    emit_outputs, run_experiment, EstimatorKind, ExperimentConfig, MeanRateStudy,
};
use sgdinfer::{Error, ModelKind, Result};

/// Online covariance estimation and confidence intervals for averaged SGD.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Worker threads (all cores by default). `SGDINFER_THREADS` takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config and/or flags.
    Run(RunArgs),
    /// Frobenius-error grid over models and dimensions, next to reference values.
    Table(GridArgs),
    /// Confidence-interval coverage grid.
    Coverage(GridArgs),
    /// Convergence rate of the estimator for the scalar mean model.
    Slope(SlopeArgs),
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    batch_c: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Comma-separated subset of debias,bm,plugin.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<EstimatorKind>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated iteration counts at which estimates are recorded.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<u64>>,
    /// Discarded SGD steps before the recorded stream.
    #[arg(long)]
    burn_in: Option<u64>,
    /// Nominal confidence level.
    #[arg(long)]
    level: Option<f64>,
    /// Write per-run estimates of Σ under OUT/sigma.
    #[arg(long)]
    save_sigma: bool,
    /// Omit wall-clock timings so output files are byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.model {
            cfg.model = v;
        }
        if let Some(v) = self.d {
            cfg.d = v;
        }
        if let Some(v) = self.n {
            if cfg.checkpoints == [cfg.n] {
                cfg.checkpoints = vec![v];
            }
            cfg.n = v;
        }
        if let Some(v) = self.reps {
            cfg.reps = v;
        }
        if let Some(v) = self.eta {
            cfg.eta = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.batch_c {
            cfg.batch_c = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = &self.estimators {
            cfg.estimators = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.checkpoints {
            cfg.checkpoints = v.clone();
        }
        if let Some(v) = self.burn_in {
            cfg.burn_in = v;
        }
        if let Some(v) = self.level {
            cfg.nominal_level = v;
        }
        if self.save_sigma {
            cfg.save_sigma = true;
        }
        if self.no_timing {
            cfg.record_timing = false;
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    /// Output directory for runs.csv and summary.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Restrict to one model.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Restrict to one dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Write each cell's outputs under this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SlopeArgs {
    #[arg(long, default_value_t = 200)]
    seeds: usize,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long, default_value_t = 0.505)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated sample sizes (powers of two from 2^12 to 2^17 by default).
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<u64>>,
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("SGDINFER_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidConfig(format!("SGDINFER_THREADS={v:?} is not a count"))),
        _ => Ok(flag),
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            ExperimentConfig::from_toml(&text)?
        }
        None => {
            let model = args
                .overrides
                .model
                .ok_or_else(|| Error::InvalidConfig("--model or --config is required".into()))?;
            let n = args
                .overrides
                .n
                .ok_or_else(|| Error::InvalidConfig("--n or --config is required".into()))?;
            ExperimentConfig::new(model, 5, n)
        }
    };
    args.overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs, threads: Option<usize>) -> Result<()> {
    let cfg = load_config(args)?;
    let result = run_experiment(&cfg, threads)?;
    let summary = emit_outputs(&result, &args.out)?;
    print!("{}", summary.render_table());
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn cell_out(root: &Option<PathBuf>, model: ModelKind, d: usize) -> Option<PathBuf> {
    root.as_ref().map(|r| r.join(format!("{model}_d{d}")))
}

fn keep(args: &GridArgs, model: ModelKind, d: usize) -> bool {
    args.model.is_none_or(|m| m == model) && args.d.is_none_or(|x| x == d)
}

fn base_config(args: &GridArgs) -> ExperimentConfig {
    let mut base = ExperimentConfig::new(ModelKind::Linear, 5, 1);
    base.reps = args.reps;
    base.seed = args.seed;
    base
}

fn write_cell(
    out: Option<PathBuf>,
    result: &sgdinfer::harness::ExperimentResult,
) -> Result<sgdinfer::harness::Summary> {
    match out {
        Some(dir) => emit_outputs(result, &dir),
        None => Ok(sgdinfer::harness::Summary::from_result(result)),
    }
}

fn table(args: &GridArgs, threads: Option<usize>) -> Result<()> {
    let base = base_config(args);
    println!(
        "{:<9} {:>3} {:>7}  {:>15} {:>15}  {:>15} {:>15}  check",
        "model", "d", "n", "debias", "debias (ref)", "bm", "bm (ref)"
    );
    for cell in table_cells()
        .into_iter()
        .filter(|c| keep(args, c.model, c.d))
    {
        let cfg = cell.config(&base);
        let result = run_experiment(&cfg, threads)?;
        let summary = write_cell(cell_out(&args.out, cell.model, cell.d), &result)?;
        let db = summary
            .estimator(EstimatorKind::Debias)
            .expect("debias selected");
        let bm = summary.estimator(EstimatorKind::Bm).expect("bm selected");
        for j in 0..3 {
            let (a, b) = (&db.checkpoints[j], &bm.checkpoints[j]);
            let ms = |m: Option<f64>, s: Option<f64>| {
                format!(
                    "{:.2} ({:.2})",
                    m.unwrap_or(f64::NAN),
                    s.unwrap_or(f64::NAN)
                )
            };
            let check = if cell.value_matched() {
                "value"
            } else {
                "property-checked"
            };
            let ordered = match (a.mean_error, b.mean_error) {
                (Some(x), Some(y)) if x < y => "debias<bm",
                _ => "debias>=bm",
            };
            println!(
                "{:<9} {:>3} {:>7}  {:>15} {:>15}  {:>15} {:>15}  {check}, {ordered}",
                cell.model.name(),
                cell.d,
                cell.checkpoints[j],
                ms(a.mean_error, a.sd_error),
                format!(
                    "{:.2} ({:.2})",
                    cell.reference_debias[j].0, cell.reference_debias[j].1
                ),
                ms(b.mean_error, b.sd_error),
                format!(
                    "{:.2} ({:.2})",
                    cell.reference_bm[j].0, cell.reference_bm[j].1
                ),
            );
        }
    }
    Ok(())
}

fn coverage(args: &GridArgs, threads: Option<usize>) -> Result<()> {
    let base = base_config(args);
    println!(
        "{:<9} {:>3} {:>7} {:>5}  {:>16} {:>8}  {:>16} {:>8}",
        "model", "d", "n", "C", "debias", "ref", "bm", "ref"
    );
    for cell in coverage_cells()
        .into_iter()
        .filter(|c| keep(args, c.model, c.d))
    {
        let cfg = cell.config(&base);
        let result = run_experiment(&cfg, threads)?;
        let summary = write_cell(cell_out(&args.out, cell.model, cell.d), &result)?;
        let fmt = |k: EstimatorKind| {
            summary
                .estimator(k)
                .and_then(|e| e.checkpoints[0].coverage)
                .map(|c| format!("{:.4} ± {:.4}", c.rate, c.std_err))
                .unwrap_or_else(|| "-".into())
        };
        println!(
            "{:<9} {:>3} {:>7} {:>5}  {:>16} {:>8.4}  {:>16} {:>8.4}",
            cell.model.name(),
            cell.d,
            cell.n,
            cell.batch_c,
            fmt(EstimatorKind::Debias),
            cell.reference_debias,
            fmt(EstimatorKind::Bm),
            cell.reference_bm,
        );
    }
    Ok(())
}

fn slope(args: &SlopeArgs, threads: Option<usize>) -> Result<()> {
    let mut study = MeanRateStudy {
        eta: args.eta,
        alpha: args.alpha,
        seeds: args.seeds,
        master_seed: args.seed,
        ..MeanRateStudy::default()
    };
    if let Some(sizes) = &args.sizes {
        study.sizes = sizes.clone();
    }
    let points = study.run(threads)?;
    println!("{:>9} {:>12} {:>12}", "n", "mse", "se");
    for p in &points {
        println!("{:>9} {:>12.4e} {:>12.4e}", p.n, p.mse, p.mse_se);
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, p.mse)).collect();
    let s = fit_log_slope(&xy, true)?;
    println!(
        "slope of log(mse / ln n) vs log n: {s:.4} (theory {:.4})",
        args.alpha - 1.0
    );
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let threads = resolve_threads(cli.threads)?;
    match &cli.command {
        Command::Run(a) => run(a, threads),
        Command::Table(a) => table(a, threads),
        Command::Coverage(a) => coverage(a, threads),
        Command::Slope(a) => slope(a, threads),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
