use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ppclass::experiments::{classify_dataset, DatasetConfig};
use ppclass::intensity::{IntensityEstimate, KernelKind, KernelSpec};
use ppclass::io::{
    bounding_window, load_bench_config, read_json, read_pattern_records, run_bench, to_labeled,
    to_patterns, write_bench_output, write_intensity_grid, write_json, write_patterns,
};
use ppclass::simulate::{sample_poisson, sample_strauss, scenario_intensity, StraussSpec};
use ppclass::{seed, Error, PointPattern, Result, Window};

/// Classification of spatial point patterns.
#[derive(Parser)]
#[command(name = "ppclass", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kernel {
    Gaussian,
    Uniform,
}

impl From<Kernel> for KernelKind {
    fn from(k: Kernel) -> Self {
        match k {
            Kernel::Gaussian => KernelKind::Gaussian,
            Kernel::Uniform => KernelKind::Uniform,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample patterns from a named scenario.
    ///
    /// Poisson scenarios: smooth0 (c2), smooth1 (c1,d1), wiggly0, wiggly1 (c2),
    /// shifted0 and shifted1 ([height,spread]). The Strauss process is
    /// `strauss` with params beta,gamma,r[,side] on [0,side]^2 (side 10).
    Simulate {
        #[arg(long)]
        scenario: String,
        /// Comma-separated scenario parameters.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        params: Vec<f64>,
        /// Number of patterns.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Label column value; defaults to the trailing digit of the scenario
        /// name, and no label column when there is none.
        #[arg(long)]
        label: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the replicate-averaged kernel estimate on a grid.
    Estimate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        sigma: f64,
        /// Output nodes per axis; also the minimum quadrature resolution.
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long, value_enum, default_value_t = Kernel::Gaussian)]
        kernel: Kernel,
        /// Window as lower and upper bounds per axis, e.g. `0,1,0,1`;
        /// inferred from the points when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        window: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark, k sweep or bandwidth sweep from a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the output path of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit on a labelled training CSV and evaluate on a labelled test CSV.
    Classify {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// JSON settings; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_window(bounds: &[f64]) -> Result<Window> {
    if bounds.is_empty() || !bounds.len().is_multiple_of(2) {
        return Err(Error::Config(format!(
            "window needs lower,upper pairs per axis, got {} values",
            bounds.len()
        )));
    }
    let (lower, upper): (Vec<f64>, Vec<f64>) = bounds.chunks_exact(2).map(|c| (c[0], c[1])).unzip();
    Window::new(lower, upper)
}

fn default_label(scenario: &str) -> Option<usize> {
    scenario
        .chars()
        .last()
        .and_then(|c| c.to_digit(10))
        .map(|d| d as usize)
}

fn simulate(
    scenario: &str,
    params: &[f64],
    n: usize,
    master: u64,
    label: Option<usize>,
    out: &Path,
) -> Result<()> {
    let patterns: Vec<PointPattern> = if scenario == "strauss" {
        if !(3..=4).contains(&params.len()) {
            return Err(Error::Config("strauss takes beta,gamma,r[,side]".into()));
        }
        let side = params.get(3).copied().unwrap_or(10.0);
        let window = Window::cube(0.0, side, 2)?;
        (0..n)
            .map(|i| {
                let spec = StraussSpec::new(
                    params[0],
                    params[1],
                    params[2],
                    window.clone(),
                    seed::derive(master, &[i as u64]),
                )?;
                sample_strauss(&spec)
            })
            .collect::<Result<_>>()?
    } else {
        let spec = scenario_intensity(scenario, params)?;
        (0..n)
            .map(|i| sample_poisson(&spec, seed::derive(master, &[i as u64])))
            .collect::<Result<_>>()?
    };
    let label = label.or_else(|| default_label(scenario));
    write_patterns(
        out,
        patterns
            .iter()
            .enumerate()
            .map(|(i, p)| (format!("p{i}"), p, label)),
    )
}

fn estimate(
    input: &Path,
    sigma: f64,
    grid: usize,
    kernel: KernelKind,
    window: Option<&[f64]>,
    out: &Path,
) -> Result<()> {
    let records = read_pattern_records(input)?;
    let window = window.map(parse_window).transpose()?;
    let patterns = to_patterns(&records, window.as_ref())?;
    if patterns.is_empty() {
        return Err(Error::Config(format!(
            "{} holds no patterns",
            input.display()
        )));
    }
    let dim = patterns[0].dim();
    let refs: Vec<&PointPattern> = patterns.iter().collect();
    let est = IntensityEstimate::fit(&refs, KernelSpec::new(kernel, sigma, dim)?, grid)?;
    write_intensity_grid(&est, grid, out)
}

fn bench(config: &Path, out: Option<&Path>) -> Result<()> {
    let (cfg, default_out) = load_bench_config(config)?;
    let output = run_bench(&cfg)?;
    write_bench_output(&output, out.unwrap_or(&default_out))
}

fn classify(train: &Path, test: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let config: DatasetConfig = match config {
        Some(p) => read_json(p)?,
        None => DatasetConfig::default(),
    };
    let train_records = read_pattern_records(train)?;
    let test_records = read_pattern_records(test)?;
    if test_records.is_empty() {
        return Err(Error::Config(format!(
            "test file {} holds no patterns",
            test.display()
        )));
    }
    let window = match &config.window {
        Some(w) => w.clone(),
        None => bounding_window(train_records.iter().chain(&test_records))?,
    };
    let train = to_labeled(&train_records, Some(&window))?;
    let test = to_labeled(&test_records, Some(&window))?;
    let report = classify_dataset(&train, &test, &config)?;
    write_json(&report, out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            params,
            n,
            seed,
            label,
            out,
        } => simulate(&scenario, &params, n, seed, label, &out),
        Command::Estimate {
            input,
            sigma,
            grid,
            kernel,
            window,
            out,
        } => estimate(&input, sigma, grid, kernel.into(), window.as_deref(), &out),
        Command::Bench { config, out } => bench(&config, out.as_deref()),
        Command::Classify {
            train,
            test,
            config,
            out,
        } => classify(&train, &test, config.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
