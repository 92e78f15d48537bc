//! End-to-end runs: ingest, build the graph, estimate the density, then infer
//! or evaluate. Outputs are sorted by store key and do not depend on the
//! number of worker threads.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::density::{estimate, BinningScheme, ConditionalDensity, Smoothing};
use crate::error::{Error, Result};
use crate::evaluation::{descriptive_stats, leave_one_out, Descriptive, EvalConfig, EvalReport, Method, Nn3Weighting};
use crate::geometry::Region;
use crate::io::{self, IngestStats};
use crate::sharing::{build_customer_sets, build_graph, validate_theta, SharingGraph, StoreRef};
use crate::solver::{solve_unknowns, InferenceResult, MethodTag, SolverConfig};
use crate::synth::{generate, split_known, SynthConfig};

/// Input and output locations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub transactions: PathBuf,
    pub seeds: PathBuf,
    /// Precomputed density table; estimated from the seeds when absent.
    pub density_in: Option<PathBuf>,
    /// Results file for `infer`, density table for `density`.
    pub output: Option<PathBuf>,
    pub report_csv: Option<PathBuf>,
    pub report_table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub region: Region,
    pub theta: f64,
    pub binning: BinningScheme,
    pub smoothing: Smoothing,
    pub solver: SolverConfig,
    pub min_customers: usize,
    pub strict_loo: bool,
    pub nn3_weighting: Nn3Weighting,
    pub methods: Vec<Method>,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    pub paths: Paths,
}

pub const DEFAULT_MIN_CUSTOMERS: usize = 20;

impl PipelineConfig {
    pub fn new(region: Region, paths: Paths) -> Self {
        Self {
            region,
            theta: 0.15,
            binning: BinningScheme::default(),
            smoothing: Smoothing::default(),
            solver: SolverConfig::default(),
            min_customers: DEFAULT_MIN_CUSTOMERS,
            strict_loo: false,
            nn3_weighting: Nn3Weighting::default(),
            methods: Method::ALL.to_vec(),
            workers: None,
            paths,
        }
    }

    /// Solver settings with the pipeline threshold applied.
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            theta: self.theta,
            ..self.solver
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_theta(self.theta)?;
        self.solver_config().validate()?;
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no evaluation methods selected".into()));
        }
        Ok(())
    }
}

/// Runs `f` on a pool with the configured number of threads.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Internal(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Everything derived from the inputs before solving.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub graph: SharingGraph,
    pub density: ConditionalDensity,
    pub ingest: IngestStats,
    /// Seeds dropped because the store has too few customers.
    pub unmatched_seeds: Vec<StoreRef>,
}

fn load_density(path: &Path) -> Result<ConditionalDensity> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    ConditionalDensity::from_text(BufReader::new(f))
}

pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    cfg.validate()?;
    let mut reader = io::load_transactions(&cfg.paths.transactions)?;
    let sets = build_customer_sets(reader.by_ref(), cfg.min_customers);
    let ingest = reader.finish()?;

    let mut seeds = io::load_seed_locations(&cfg.paths.seeds, &cfg.region)?;
    let present: std::collections::BTreeSet<&StoreRef> = sets.sets.iter().map(|s| &s.store).collect();
    let unmatched_seeds: Vec<StoreRef> = seeds
        .keys()
        .filter(|s| !present.contains(s))
        .cloned()
        .collect();
    for s in &unmatched_seeds {
        seeds.remove(s);
    }
    if seeds.is_empty() {
        return Err(Error::InsufficientKnown {
            found: 0,
            required: 1,
        });
    }

    let graph = build_graph(&sets.sets, &seeds, cfg.theta)?;
    let density = match &cfg.paths.density_in {
        Some(path) => load_density(path)?,
        None => estimate(&graph.density_observations(), &cfg.binning, cfg.smoothing)?,
    };
    Ok(Prepared {
        graph,
        density,
        ingest,
        unmatched_seeds,
    })
}

#[derive(Debug, Clone)]
pub struct InferOutcome {
    pub prepared: Prepared,
    /// Sorted by store key.
    pub results: Vec<InferenceResult>,
}

impl InferOutcome {
    pub fn resolved(&self) -> usize {
        self.results
            .iter()
            .filter(|r| r.solution.method != MethodTag::Unresolved)
            .count()
    }
}

/// Places every store that has transactions but no seed location, and writes
/// the results file when an output path is configured.
pub fn run_infer(cfg: &PipelineConfig) -> Result<InferOutcome> {
    let prepared = prepare(cfg)?;
    let solver = cfg.solver_config();
    let results = with_workers(cfg.workers, || {
        solve_unknowns(&prepared.graph, &prepared.density, &solver)
    })?;
    if let Some(out) = &cfg.paths.output {
        io::write_results(out, &results, &cfg.region)?;
    }
    Ok(InferOutcome { prepared, results })
}

/// Leave-one-out evaluation over the seeded stores.
pub fn run_evaluate(cfg: &PipelineConfig) -> Result<EvalReport> {
    let prepared = prepare(cfg)?;
    let eval = EvalConfig {
        methods: cfg.methods.clone(),
        strict: cfg.strict_loo,
        nn3_weighting: cfg.nn3_weighting,
        smoothing: cfg.smoothing,
    };
    let solver = cfg.solver_config();
    let mut report = with_workers(cfg.workers, || {
        leave_one_out(&prepared.graph, &prepared.density, &solver, &eval)
    })??;
    report.region = cfg.region.name.clone();
    if let Some(path) = &cfg.paths.report_csv {
        io::write_text(path, &report.to_csv()?)?;
    }
    if let Some(path) = &cfg.paths.report_table {
        io::write_text(path, &report.to_table())?;
    }
    Ok(report)
}

/// Estimates the density from the seeds and writes the table when an output
/// path is configured.
pub fn run_density(cfg: &PipelineConfig) -> Result<ConditionalDensity> {
    let prepared = prepare(&PipelineConfig {
        paths: Paths {
            density_in: None,
            ..cfg.paths.clone()
        },
        ..cfg.clone()
    })?;
    if let Some(out) = &cfg.paths.output {
        io::write_text(out, &prepared.density.to_text())?;
    }
    Ok(prepared.density)
}

pub fn run_stats(cfg: &PipelineConfig) -> Result<Descriptive> {
    let prepared = prepare(cfg)?;
    descriptive_stats(&prepared.graph)
}

/// Files written by [`run_synth`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub transactions: PathBuf,
    pub seeds: PathBuf,
    pub truth: PathBuf,
    pub n_records: usize,
    pub n_known: usize,
    pub n_unknown: usize,
}

/// Generates a synthetic city and writes `transactions.jsonl`, `seeds.jsonl`
/// (the known split) and `truth.jsonl` (every store) under `out_dir`.
pub fn run_synth(
    cfg: &SynthConfig,
    known_fraction: f64,
    split_seed: u64,
    region: &Region,
    out_dir: &Path,
) -> Result<SynthOutput> {
    let city = generate(cfg)?;
    let split = split_known(&city, known_fraction, split_seed)?;
    let out = SynthOutput {
        transactions: out_dir.join("transactions.jsonl"),
        seeds: out_dir.join("seeds.jsonl"),
        truth: out_dir.join("truth.jsonl"),
        n_records: city.records.len(),
        n_known: split.known.len(),
        n_unknown: split.unknown.len(),
    };
    io::write_transactions(&out.transactions, &city.records)?;
    io::write_seeds(&out.seeds, &split.known, region)?;
    let truth: BTreeMap<_, _> = city.truth;
    io::write_seeds(&out.truth, &truth, region)?;
    Ok(out)
}
