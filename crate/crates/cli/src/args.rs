use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use modelfree::{EstimatorConfig, Method, SampleSize, WeightsType};

const SPEC_HELP: &str = "Resampling specs are comma-separated key=value pairs:
  --boot-emp   B=100,m=n          empirical (m-out-of-n) bootstrap; m=n means m equals the row count
  --boot-mul   B=100,weights=webb multiplier bootstrap; weights: rademacher, mammen, webb, gaussian
  --boot-res   B=100              residual bootstrap
  --subsample  B=100,m=50         subsampling without replacement, m < n
Every spec also accepts seed=N, overriding --seed for that method.
Randomized commands without --seed use seed 0 and say so on stderr.";

#[derive(Debug, Parser)]
#[command(name = "modelfree", version, about = "Model-free inference for ordinary least squares", after_help = SPEC_HELP)]
pub struct Cli {
    /// Worker threads; results do not depend on it. Falls back to MODELFREE_THREADS.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print coefficient tables under every requested variance estimate.
    Fit(ModelArgs),
    /// Print the assumption-annotated report with the global Wald test.
    Summary(SummaryArgs),
    /// Emit the tidy confidence-interval table.
    Confint(ConfintArgs),
    /// Test the linear restriction R beta = r.
    Waldtest(WaldArgs),
    /// Write diagnostic datasets and SVG plots.
    Diag(DiagArgs),
    /// Run a coverage simulation from a JSON scenario.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Headed numeric CSV file.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,

    /// Model formula, e.g. "y ~ ." or "y ~ x1 + x2 - 1".
    #[arg(long)]
    pub formula: String,

    #[arg(long, default_value_t = 0.95)]
    pub level: f64,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long = "boot-emp", value_name = "SPEC")]
    pub boot_emp: Option<String>,

    #[arg(long = "boot-mul", value_name = "SPEC")]
    pub boot_mul: Option<String>,

    #[arg(long = "boot-res", value_name = "SPEC")]
    pub boot_res: Option<String>,

    #[arg(long, value_name = "SPEC")]
    pub subsample: Option<String>,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    /// JSON job file; replaces the model flags.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["data", "formula"])]
    pub config: Option<PathBuf>,

    #[arg(long, value_name = "FILE", required_unless_present = "config")]
    pub data: Option<PathBuf>,

    #[arg(long, required_unless_present = "config")]
    pub formula: Option<String>,

    #[arg(long, default_value_t = 0.95)]
    pub level: f64,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long = "boot-emp", value_name = "SPEC")]
    pub boot_emp: Option<String>,

    #[arg(long = "boot-mul", value_name = "SPEC")]
    pub boot_mul: Option<String>,

    #[arg(long = "boot-res", value_name = "SPEC")]
    pub boot_res: Option<String>,

    #[arg(long, value_name = "SPEC")]
    pub subsample: Option<String>,
}

impl SummaryArgs {
    pub fn model(&self) -> Option<ModelArgs> {
        Some(ModelArgs {
            data: self.data.clone()?,
            formula: self.formula.clone()?,
            level: self.level,
            seed: self.seed,
            boot_emp: self.boot_emp.clone(),
            boot_mul: self.boot_mul.clone(),
            boot_res: self.boot_res.clone(),
            subsample: self.subsample.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ConfintArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
}

#[derive(Debug, Args)]
pub struct WaldArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Headerless numeric CSV, one restriction per row, one column per coefficient.
    #[arg(long = "R", value_name = "FILE")]
    pub r_matrix: PathBuf,

    /// Headerless numeric CSV with the right-hand side, as one column or one row.
    #[arg(long = "r", value_name = "FILE")]
    pub r_vector: PathBuf,

    #[arg(long, value_enum, default_value_t = TableFormat::Text)]
    pub format: TableFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DiagKind {
    FocalSlope,
    Nonlinearity,
    FocalReweight,
    Qq,
    CiWidth,
    Classic,
}

impl DiagKind {
    pub fn file_stem(self) -> &'static str {
        match self {
            DiagKind::FocalSlope => "focal_slope",
            DiagKind::Nonlinearity => "nonlinearity",
            DiagKind::FocalReweight => "focal_reweight",
            DiagKind::Qq => "qq",
            DiagKind::CiWidth => "ci_width",
            DiagKind::Classic => "classic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    Deciles,
    Uniform,
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long, value_enum)]
    pub kind: DiagKind,

    /// Coefficient (focal-slope) or reweighting regressor (focal-reweight).
    #[arg(long, value_name = "NAME")]
    pub focal: Option<String>,

    #[arg(long, value_enum, default_value_t = GridArg::Deciles)]
    pub grid: GridArg,

    /// Number of centers for the uniform grid.
    #[arg(long, default_value_t = 10)]
    pub k: usize,

    /// Kernel bandwidth; defaults to the sample sd of the reweighted regressor.
    #[arg(long)]
    pub gamma: Option<f64>,

    /// Bootstrap curves per reweighting panel.
    #[arg(long, default_value_t = 100)]
    pub boot: usize,

    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON scenario file.
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,

    /// Directory for coverage.csv and coverage.svg; without it the CSV goes to stdout.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Parses a `key=value,...` resampling spec for `method`.
pub fn parse_spec(method: Method, spec: &str) -> Result<EstimatorConfig, String> {
    let mut cfg = EstimatorConfig::new(method);
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value in {part:?}"))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "B" | "b" => {
                cfg.b = Some(value.parse().map_err(|_| format!("B must be a count, got {value:?}"))?);
            }
            "m" if matches!(method, Method::EmpiricalBoot | Method::Subsampling) => {
                cfg.m = Some(value.parse::<SampleSize>().map_err(|e| e.to_string())?);
            }
            "weights" if method == Method::MultiplierBoot => {
                cfg.weights_type = Some(value.parse::<WeightsType>().map_err(|e| e.to_string())?);
            }
            "seed" => {
                cfg.seed = Some(value.parse().map_err(|_| format!("seed must be an integer, got {value:?}"))?);
            }
            _ => return Err(format!("unknown key {key:?} for {method}")),
        }
    }
    if method == Method::Subsampling && cfg.m.is_none() {
        return Err("subsampling needs m=<count> below the row count".into());
    }
    Ok(cfg)
}

impl ModelArgs {
    /// Resampling requests in flag order, each carrying a seed, and whether
    /// any of them fell back to seed 0.
    pub fn requests(&self) -> Result<(Vec<EstimatorConfig>, bool), String> {
        let specs = [
            (Method::EmpiricalBoot, &self.boot_emp),
            (Method::MultiplierBoot, &self.boot_mul),
            (Method::ResidualBoot, &self.boot_res),
            (Method::Subsampling, &self.subsample),
        ];
        let mut out = Vec::new();
        let mut defaulted = false;
        for (method, spec) in specs {
            if let Some(spec) = spec {
                let mut cfg = parse_spec(method, spec).map_err(|e| format!("--{}: {e}", flag_name(method)))?;
                defaulted |= cfg.seed.is_none() && self.seed.is_none();
                cfg.seed = cfg.seed.or(self.seed).or(Some(0));
                out.push(cfg);
            }
        }
        Ok((out, defaulted))
    }

    pub fn is_randomized(&self) -> bool {
        self.boot_emp.is_some() || self.boot_mul.is_some() || self.boot_res.is_some() || self.subsample.is_some()
    }
}

pub fn flag_name(method: Method) -> &'static str {
    match method {
        Method::EmpiricalBoot => "boot-emp",
        Method::MultiplierBoot => "boot-mul",
        Method::ResidualBoot => "boot-res",
        Method::Subsampling => "subsample",
        Method::ClassicalLm | Method::Sandwich => "",
    }
}
