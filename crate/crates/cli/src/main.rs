use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ssbench::bench::{
    render_heatmap, render_summary, resolve_parallelism, run_cell_detailed, sweep, CellSpec, DatasetSource,
    HeatmapValue, SummaryKind, SweepConfig, TrainingConfig,
};
use ssbench::datagen::{gen_synthetic, load_csv, semi_synthetic, GenSpec};
use ssbench::methods::{write_predictions_csv, FitConfig, MethodKind};
use ssbench::metrics::{read_cells_csv, write_cells_csv, Metric};
use ssbench::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "ssb-bench", version, about = "Sample selection bias benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a dataset CSV (feature_0.., y, s) plus a provenance sidecar.
    Generate(GenerateArgs),
    /// Run a single experiment cell and print its result row.
    Run(RunArgs),
    /// Run a grid of cells from a JSON config.
    Sweep(SweepArgs),
    /// Render an SVG figure from a results CSV.
    Plot(PlotArgs),
}

#[derive(Parser)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    n_total: usize,
    #[arg(long, default_value_t = 25)]
    features: usize,
    #[arg(long, default_value_t = 0.1)]
    event_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    nonselect_rate: f64,
    #[arg(long, default_value_t = 0.01)]
    flip_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inject selection into this cohort CSV instead of generating synthetic rows.
    #[arg(long, requires = "outcome")]
    from_csv: Option<PathBuf>,
    /// Outcome column of `--from-csv`.
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Parser)]
struct RunArgs {
    /// Cell JSON; when given, the cell flags below are ignored.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "naive")]
    method: String,
    #[arg(long, default_value_t = 1000)]
    n_total: usize,
    #[arg(long, default_value_t = 0.1)]
    event_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    nonselect_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed_index: u32,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Results CSV path; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also write per-row predictions for the test split.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Parser)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker count; overrides SSB_BENCH_THREADS and the config.
    #[arg(long)]
    threads: Option<usize>,
    /// Keep finished cells from an existing manifest and run only the rest.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Heatmap,
    Box,
    LineBySize,
    SubpopBars,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeatValue {
    Delta,
    Mean,
}

#[derive(Parser)]
struct PlotArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long, value_enum)]
    kind: PlotKind,
    /// Method shown in a heatmap.
    #[arg(long)]
    method: Option<String>,
    #[arg(long, default_value = "auc_overall")]
    metric: String,
    #[arg(long, value_enum, default_value = "delta")]
    value: HeatValue,
    #[arg(long, short)]
    out: PathBuf,
}

enum Failure {
    Config(String),
    Partial(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Usage(_) => Failure::Config(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Other(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn generate(a: GenerateArgs) -> CliResult {
    let ds = match (&a.from_csv, &a.outcome) {
        (Some(path), Some(outcome)) => {
            let cohort = load_csv(path, outcome)?;
            semi_synthetic(&cohort, Some(a.n_total.min(cohort.len())), Some(a.event_rate), a.nonselect_rate, a.seed)?
        }
        _ => {
            let spec = GenSpec {
                n_total: a.n_total,
                n_features: a.features,
                event_rate: a.event_rate,
                nonselect_rate: a.nonselect_rate,
                flip_rate: a.flip_rate,
                seed: a.seed,
            };
            spec.validate().map_err(|e| Failure::Config(e.to_string()))?;
            gen_synthetic(&spec)?
        }
    };
    ds.save(&a.out)?;
    eprintln!(
        "wrote {} rows ({} features, event rate {:.4}, non-selection rate {:.4}) to {}",
        ds.len(),
        ds.n_features(),
        ds.selected_event_rate(),
        ds.nonselect_rate(),
        a.out.display()
    );
    Ok(())
}

fn run(a: RunArgs) -> CliResult {
    let cell = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            CellSpec::from_json(&text)?
        }
        None => {
            let cell = CellSpec {
                dataset_id: "synthetic".into(),
                dataset: DatasetSource::default(),
                n_total: a.n_total,
                event_rate: a.event_rate,
                nonselect_rate: a.nonselect_rate,
                method: a.method.parse::<MethodKind>()?,
                seed_index: a.seed_index,
                base_seed: a.base_seed,
                training: TrainingConfig::default(),
                fit: FitConfig::default(),
            };
            cell.validate()?;
            cell
        }
    };
    let outcome = run_cell_detailed(&cell).map_err(|f| Failure::Partial(f.to_string()))?;
    log::info!("cell finished in {:.2}s", outcome.result.wall_time);
    match &a.out {
        Some(path) => write_cells_csv(&[outcome.result.clone()], create(path)?)?,
        None => write_cells_csv(&[outcome.result.clone()], io::stdout().lock())?,
    }
    if let Some(path) = &a.predictions {
        write_predictions_csv(&outcome.predictions, &outcome.test, create(path)?)?;
    }
    Ok(())
}

fn run_sweep(a: SweepArgs) -> CliResult {
    let mut cfg = SweepConfig::load(&a.config).map_err(|e| match e {
        Error::Io { .. } => Failure::Config(e.to_string()),
        other => other.into(),
    })?;
    if let Some(dir) = a.output_dir {
        cfg.output_dir = dir;
    }
    let threads = resolve_parallelism(a.threads, cfg.parallelism)?;
    eprintln!("{} cells, {} workers, output in {}", cfg.cells().len(), threads, cfg.output_dir.display());
    let out = sweep(&cfg, threads, a.resume)?;
    eprintln!(
        "ran {} cells: {} done, {} failed of {}",
        out.ran, out.done, out.failed, out.total
    );
    if out.failed > 0 {
        return Err(Failure::Partial(format!(
            "{} cells failed; see {}",
            out.failed,
            out.output_dir.join(ssbench::bench::MANIFEST_FILE).display()
        )));
    }
    Ok(())
}

fn plot(a: PlotArgs) -> CliResult {
    let file = File::open(&a.results).map_err(|e| Failure::Config(format!("{}: {e}", a.results.display())))?;
    let cells = read_cells_csv(file)?;
    let metric: Metric = a.metric.parse()?;
    let svg = match a.kind {
        PlotKind::Heatmap => {
            let method: MethodKind = a
                .method
                .as_deref()
                .ok_or_else(|| Failure::Config("heatmap needs --method".into()))?
                .parse()?;
            let value = match a.value {
                HeatValue::Delta => HeatmapValue::DeltaFromOracle,
                HeatValue::Mean => HeatmapValue::Mean,
            };
            render_heatmap(&cells, metric, method, value)?
        }
        PlotKind::Box => render_summary(&cells, SummaryKind::Box)?,
        PlotKind::LineBySize => render_summary(&cells, SummaryKind::LineBySize)?,
        PlotKind::SubpopBars => render_summary(&cells, SummaryKind::SubpopBars)?,
    };
    let mut w = create(&a.out)?;
    w.write_all(svg.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Failure::Other(format!("{}: {e}", a.out.display())))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Partial(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
