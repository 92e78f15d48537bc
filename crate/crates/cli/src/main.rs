//! `storeloc`: infer store locations from shared customers.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use storeloc::density::{BinningScheme, Smoothing};
use storeloc::evaluation::{Method, Nn3Weighting};
use storeloc::pipeline::{self, Paths, PipelineConfig};
use storeloc::solver::SolveMethod;
use storeloc::synth::StoreLayout;
use storeloc::{Error, ErrorKind, GeoPoint, Region, Result};

use config::FileConfig;

#[derive(Parser, Debug)]
#[command(name = "storeloc", version, about = "Infer store locations from shared customers")]
struct Cli {
    /// TOML file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic city with ground truth.
    Synth(SynthArgs),
    /// Place every store that has transactions but no seed location.
    Infer(RunArgs),
    /// Leave-one-out benchmark over the seeded stores.
    Evaluate(RunArgs),
    /// Estimate the sharing-given-distance table and write it out.
    Density(RunArgs),
    /// Descriptive statistics of the seeded stores.
    Stats(RunArgs),
}

#[derive(Args, Debug, Default)]
struct RegionArgs {
    /// Region name used in reports.
    #[arg(long)]
    region: Option<String>,
    /// Projection origin latitude, degrees.
    #[arg(long, allow_hyphen_values = true)]
    origin_lat: Option<f64>,
    /// Projection origin longitude, degrees.
    #[arg(long, allow_hyphen_values = true)]
    origin_lon: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Grid,
    Gradient,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WeightingArg {
    Sharing,
    Uniform,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LayoutArg {
    Uniform,
    Clustered,
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    #[command(flatten)]
    region: RegionArgs,
    /// Transactions, one JSON object per line.
    #[arg(long)]
    transactions: Option<PathBuf>,
    /// Known store locations, one JSON object per line.
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Use this density table instead of estimating one.
    #[arg(long)]
    density: Option<PathBuf>,
    /// Results file (infer) or density table (density).
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    report_csv: Option<PathBuf>,
    #[arg(long)]
    report_table: Option<PathBuf>,
    /// Minimum sharing index for a neighbor to count.
    #[arg(long)]
    theta: Option<f64>,
    /// Stores with fewer distinct customers are dropped.
    #[arg(long)]
    min_customers: Option<usize>,
    /// Re-estimate the density for every held-out store.
    #[arg(long)]
    strict_loo: bool,
    #[arg(long, value_enum)]
    nn3_weighting: Option<WeightingArg>,
    /// Comma-separated subset of nn1, nn3, maxlike.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Distance bin edges in meters, comma-separated, starting at 0.
    #[arg(long, value_delimiter = ',')]
    r_edges: Option<Vec<f64>>,
    /// Number of equal-width sharing bins.
    #[arg(long)]
    m_bins: Option<usize>,
    #[arg(long)]
    smoothing_lambda: Option<f64>,
    #[arg(long)]
    smoothing_floor: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    grid_coarse: Option<f64>,
    #[arg(long)]
    grid_fine: Option<f64>,
    #[arg(long)]
    hull_margin: Option<f64>,
    #[arg(long)]
    gd_step: Option<f64>,
    #[arg(long)]
    gd_tol: Option<f64>,
    #[arg(long)]
    gd_max_iter: Option<usize>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    region: RegionArgs,
    /// Directory for transactions.jsonl, seeds.jsonl and truth.jsonl.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_stores: Option<usize>,
    #[arg(long)]
    n_chains: Option<usize>,
    #[arg(long)]
    n_customers: Option<usize>,
    /// Side of the square city, meters.
    #[arg(long)]
    city_extent: Option<f64>,
    /// Visit probability decay scale, meters.
    #[arg(long)]
    decay_scale: Option<f64>,
    #[arg(long)]
    base_visit_prob: Option<f64>,
    #[arg(long, value_enum)]
    layout: Option<LayoutArg>,
    /// Fraction of stores written as seeds.
    #[arg(long)]
    known_fraction: Option<f64>,
    /// Seed for choosing which stores are known.
    #[arg(long)]
    split_seed: Option<u64>,
}

fn region(args: &RegionArgs, file: &FileConfig) -> Result<Region> {
    let lat = args.origin_lat.or(file.origin_lat);
    let lon = args.origin_lon.or(file.origin_lon);
    let (Some(lat), Some(lon)) = (lat, lon) else {
        return Err(Error::Config("--origin-lat and --origin-lon are required".into()));
    };
    let name = args
        .region
        .clone()
        .or_else(|| file.region.clone())
        .unwrap_or_else(|| "default".into());
    let origin = GeoPoint::new(lat, lon).map_err(|e| Error::Config(e.to_string()))?;
    Ok(Region::new(name, origin))
}

fn required(p: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    p.ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn pipeline_config(a: RunArgs, file: &FileConfig) -> Result<PipelineConfig> {
    let region = region(&a.region, file)?;
    let paths = Paths {
        transactions: required(a.transactions.or(file.transactions.clone()), "transactions")?,
        seeds: required(a.seeds.or(file.seeds.clone()), "seeds")?,
        density_in: a.density.or(file.density.clone()),
        output: a.output.or(file.output.clone()),
        report_csv: a.report_csv.or(file.report_csv.clone()),
        report_table: a.report_table.or(file.report_table.clone()),
    };
    let mut cfg = PipelineConfig::new(region, paths);
    if let Some(s) = file.solver {
        cfg.solver = s;
    }
    if let Some(t) = a.theta.or(file.theta).or(file.solver.map(|s| s.theta)) {
        cfg.theta = t;
    }
    if let Some(n) = a.min_customers.or(file.min_customers) {
        cfg.min_customers = n;
    }
    cfg.strict_loo = a.strict_loo || file.strict_loo.unwrap_or(false);
    cfg.nn3_weighting = match a.nn3_weighting {
        Some(WeightingArg::Sharing) => Nn3Weighting::Sharing,
        Some(WeightingArg::Uniform) => Nn3Weighting::Uniform,
        None => file.nn3_weighting.unwrap_or_default(),
    };
    if let Some(m) = a.methods {
        cfg.methods = m.iter().map(|s| s.parse::<Method>()).collect::<Result<_>>()?;
    } else if let Some(m) = &file.methods {
        cfg.methods = m.clone();
    }
    cfg.workers = a.workers.or(file.workers);

    let r_edges = a.r_edges.or(file.r_edges.clone());
    let m_bins = a.m_bins.or(file.m_bins);
    if r_edges.is_some() || m_bins.is_some() {
        let r = r_edges.unwrap_or_else(|| cfg.binning.r_edges().to_vec());
        let m = match m_bins {
            Some(0) => return Err(Error::Config("m_bins must be at least 1".into())),
            Some(n) => BinningScheme::uniform_m_edges(n),
            None => cfg.binning.m_edges().to_vec(),
        };
        cfg.binning = BinningScheme::new(r, m)?;
    }
    cfg.smoothing = Smoothing {
        lambda: a.smoothing_lambda.or(file.smoothing_lambda).unwrap_or(cfg.smoothing.lambda),
        floor: a.smoothing_floor.or(file.smoothing_floor).unwrap_or(cfg.smoothing.floor),
    };

    let s = &mut cfg.solver;
    match a.method {
        Some(MethodArg::Grid) => s.method = SolveMethod::Grid,
        Some(MethodArg::Gradient) => s.method = SolveMethod::Gradient,
        None => {}
    }
    s.grid_coarse = a.grid_coarse.unwrap_or(s.grid_coarse);
    s.grid_fine = a.grid_fine.unwrap_or(s.grid_fine);
    s.hull_margin = a.hull_margin.unwrap_or(s.hull_margin);
    s.gd_step = a.gd_step.unwrap_or(s.gd_step);
    s.gd_tol = a.gd_tol.unwrap_or(s.gd_tol);
    s.gd_max_iter = a.gd_max_iter.unwrap_or(s.gd_max_iter);
    cfg.validate()?;
    Ok(cfg)
}

fn synth(a: SynthArgs, file: &FileConfig) -> Result<()> {
    let region = region(&a.region, file)?;
    let mut cfg = file.synth.clone().unwrap_or_default();
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.n_stores = a.n_stores.unwrap_or(cfg.n_stores);
    cfg.n_chains = a.n_chains.unwrap_or(cfg.n_chains);
    cfg.n_customers = a.n_customers.unwrap_or(cfg.n_customers);
    cfg.city_extent = a.city_extent.unwrap_or(cfg.city_extent);
    cfg.decay_scale = a.decay_scale.unwrap_or(cfg.decay_scale);
    cfg.base_visit_prob = a.base_visit_prob.unwrap_or(cfg.base_visit_prob);
    match a.layout {
        Some(LayoutArg::Uniform) => cfg.store_layout = StoreLayout::Uniform,
        Some(LayoutArg::Clustered) => cfg.store_layout = StoreLayout::Clustered,
        None => {}
    }
    let fraction = a.known_fraction.or(file.known_fraction).unwrap_or(0.5);
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config("known_fraction must lie in [0, 1]".into()));
    }
    let split_seed = a.split_seed.or(file.split_seed).unwrap_or(cfg.seed);
    let out_dir = required(a.out_dir.or(file.out_dir.clone()), "out-dir")?;
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let out = pipeline::run_synth(&cfg, fraction, split_seed, &region, &out_dir)?;
    eprintln!(
        "wrote {} transactions, {} known and {} unknown stores to {}",
        out.n_records,
        out.n_known,
        out.n_unknown,
        out_dir.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Synth(a) => synth(a, &file),
        Command::Infer(a) => {
            let cfg = pipeline_config(a, &file)?;
            let out = pipeline::run_infer(&cfg)?;
            let resolved = out.resolved();
            eprintln!(
                "{} of {} stores placed, {} unresolved",
                resolved,
                out.results.len(),
                out.results.len() - resolved
            );
            if cfg.paths.output.is_none() {
                for r in &out.results {
                    let line = storeloc::io::result_line(r, &cfg.region)?;
                    println!("{}", storeloc::io::to_json_line(&line)?);
                }
            }
            Ok(())
        }
        Command::Evaluate(a) => {
            let cfg = pipeline_config(a, &file)?;
            let report = pipeline::run_evaluate(&cfg)?;
            print!("{}", report.to_table());
            Ok(())
        }
        Command::Density(a) => {
            let cfg = pipeline_config(a, &file)?;
            let d = pipeline::run_density(&cfg)?;
            if cfg.paths.output.is_none() {
                print!("{}", d.to_text());
            }
            if !d.degenerate_rows().is_empty() {
                eprintln!("distance bins with no observations: {:?}", d.degenerate_rows());
            }
            Ok(())
        }
        Command::Stats(a) => {
            let cfg = pipeline_config(a, &file)?;
            let stats = pipeline::run_stats(&cfg)?;
            print!("{}", stats.to_table(&cfg.region.name));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::Internal => 3,
            })
        }
    }
}
