//! Config-driven experiment runs and timing benchmarks.
//!
//! An experiment prices one caplet grid per `(scheme, drift_mode)` pair on a
//! single shared increment tape and writes difference tables against a base
//! pair. Everything written is a function of the config alone.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::driver::{validate_driver, DriverLaw, DriverValidation, LevyDriverSpec, NigParams};
use crate::drift::{DriftEngine, DriftMode};
use crate::error::{Error, Result};
use crate::market::{kluge_extended, load_market, Market, MarketConfig};
use crate::par;
use crate::pricing::{diff_table, price_caplets, strike_grid, CapletSet};
use crate::simulator::{simulate_with_tape, IncrementTape, Parallelism, Scheme, SimConfig, SimGrid, Storage};

pub const DEFAULT_STRIKE_MULTIPLIERS: [f64; 6] = [0.5, 0.75, 1.0, 1.25, 1.5, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    #[serde(default = "NigParams::kluge_2002")]
    pub nig: NigParams,
    #[serde(default)]
    pub diffusion_c: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    0.01
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            nig: NigParams::kluge_2002(),
            diffusion_c: 0.0,
            eps: default_eps(),
        }
    }
}

impl DriverConfig {
    pub fn spec(&self) -> LevyDriverSpec {
        LevyDriverSpec {
            diffusion_c: self.diffusion_c,
            law: DriverLaw::Nig(self.nig),
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_steps")]
    pub steps_per_tenor: usize,
    /// 0 uses every available core.
    #[serde(default)]
    pub n_workers: usize,
}

fn default_steps() -> usize {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPair {
    pub scheme: Scheme,
    pub drift_mode: DriftMode,
}

impl RunPair {
    pub fn new(scheme: Scheme, drift_mode: DriftMode) -> Self {
        Self { scheme, drift_mode }
    }

    fn tag(&self) -> String {
        format!("{}_{}", self.scheme, self.drift_mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub pairs: Vec<RunPair>,
    #[serde(default = "default_multipliers")]
    pub strike_multipliers: Vec<f64>,
    /// Reference for the difference tables; Full with exact drift if unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<RunPair>,
}

fn default_multipliers() -> Vec<f64> {
    DEFAULT_STRIKE_MULTIPLIERS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_prefix")]
    pub prefix: String,
    /// Also write every simulated path as CSV.
    #[serde(default)]
    pub scenario_dump: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_prefix() -> String {
    "run".into()
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: default_dir(),
            prefix: default_prefix(),
            scenario_dump: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub market: MarketConfig,
    #[serde(default)]
    pub driver: DriverConfig,
    pub sim: SimBlock,
    pub run: RunBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

impl ExperimentConfig {
    /// Parses a JSON document. Errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.pairs.is_empty() {
            return Err(Error::Config("run.pairs: at least one (scheme, drift_mode) pair is required".into()));
        }
        for (k, a) in self.run.pairs.iter().enumerate() {
            if self.run.pairs[..k].contains(a) {
                return Err(Error::Config(format!("run.pairs: duplicate pair {}", a.tag())));
            }
        }
        if self.run.strike_multipliers.is_empty() {
            return Err(Error::Config("run.strike_multipliers: empty".into()));
        }
        if let Some(m) = self.run.strike_multipliers.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::Config(format!("run.strike_multipliers: {m} is not > 0")));
        }
        if self.sim.n_paths == 0 {
            return Err(Error::Config("sim.n_paths must be >= 1".into()));
        }
        if self.sim.steps_per_tenor == 0 {
            return Err(Error::Config("sim.steps_per_tenor must be >= 1".into()));
        }
        if self.output.prefix.is_empty() || self.output.prefix.contains(['/', '\\']) {
            return Err(Error::Config(format!("output.prefix {:?} is not a file prefix", self.output.prefix)));
        }
        self.driver.spec().validate()
    }

    pub fn base_pair(&self) -> RunPair {
        self.run.base.unwrap_or(RunPair::new(Scheme::Full, DriftMode::Exact))
    }

    /// SHA-256 of the canonical JSON form, defaults filled in.
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }
}

/// Market, driver and grid of a config, validated against each other.
pub struct Setup {
    pub market: Market,
    pub driver: LevyDriverSpec,
    pub grid: SimGrid,
    pub validation: DriverValidation,
}

pub fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let market = load_market(&cfg.market)?;
    let driver = cfg.driver.spec();
    let validation = validate_driver(&driver, &market.tenor, &market.vols, driver.eps)?;
    let grid = SimGrid::new(&market.tenor, cfg.sim.steps_per_tenor)?;
    Ok(Setup {
        market,
        driver,
        grid,
        validation,
    })
}

#[derive(Debug, Clone, Serialize)]
struct RunEntry {
    scheme: Scheme,
    drift_mode: DriftMode,
    file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario_file: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct DiffEntrySummary {
    base: RunPair,
    alt: RunPair,
    file: String,
    max_abs_bp: f64,
    mean_abs_bp: f64,
    missing: usize,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest {
    version: &'static str,
    config_sha256: String,
    seed: u64,
    n_paths: usize,
    steps_per_tenor: usize,
    tape_sha256: String,
    driver_validation: DriverValidation,
    runs: Vec<RunEntry>,
    diffs: Vec<DiffEntrySummary>,
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub sets: Vec<CapletSet>,
    pub pricing_files: Vec<PathBuf>,
    pub diff_files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
    })?))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let Setup {
        market,
        driver,
        grid,
        validation,
    } = setup(cfg)?;
    let dir = &cfg.output.directory;
    fs::create_dir_all(dir)?;
    let prefix = &cfg.output.prefix;
    let base = cfg.base_pair();
    let mut pairs = cfg.run.pairs.clone();
    if !pairs.contains(&base) {
        log::info!("base pair {} not listed; running it as well", base.tag());
        pairs.insert(0, base);
    }
    let specs = strike_grid(&market, &cfg.run.strike_multipliers);
    let workers = cfg.sim.n_workers;

    par::with_workers(workers, || {
        let parallel = workers != 1;
        let tape = IncrementTape::generate(&driver, &grid, cfg.sim.n_paths, cfg.sim.seed, parallel);
        let mut sets = Vec::with_capacity(pairs.len());
        let mut runs = Vec::new();
        let mut pricing_files = Vec::new();
        for pair in &pairs {
            let sim_cfg = SimConfig {
                n_workers: workers,
                storage: if cfg.output.scenario_dump {
                    Storage::FullGrid
                } else {
                    Storage::Fixings
                },
                ..SimConfig::new(cfg.sim.n_paths, cfg.sim.seed, pair.scheme, pair.drift_mode)
            };
            log::info!("simulating {} with {} paths", pair.tag(), cfg.sim.n_paths);
            let scen = simulate_with_tape(&market, &driver, &grid, &sim_cfg, &tape)?;
            let set = price_caplets(&scen, &specs, &market)?;
            let name = format!("{prefix}_{}.csv", pair.tag());
            let path = dir.join(&name);
            set.write_csv(create(&path)?)?;
            let scenario_file = if cfg.output.scenario_dump {
                let name = format!("{prefix}_{}_scenarios.csv", pair.tag());
                scen.write_csv(create(&dir.join(&name))?)?;
                Some(name)
            } else {
                None
            };
            runs.push(RunEntry {
                scheme: pair.scheme,
                drift_mode: pair.drift_mode,
                file: name,
                scenario_file,
            });
            pricing_files.push(path);
            sets.push(set);
        }
        let base_set = &sets[pairs.iter().position(|p| *p == base).expect("base present")];
        let mut diffs = Vec::new();
        let mut diff_files = Vec::new();
        for (pair, set) in pairs.iter().zip(&sets) {
            if *pair == base {
                continue;
            }
            let table = diff_table(base_set, set)?;
            let name = format!("{prefix}_diff_{}_vs_{}.csv", pair.tag(), base.tag());
            let path = dir.join(&name);
            table.write_csv(create(&path)?)?;
            log::info!(
                "{} vs {}: max |diff| {:.4} bp, mean {:.4} bp",
                pair.tag(),
                base.tag(),
                table.max_abs(),
                table.mean_abs()
            );
            diffs.push(DiffEntrySummary {
                base,
                alt: *pair,
                file: name,
                max_abs_bp: table.max_abs(),
                mean_abs_bp: table.mean_abs(),
                missing: table.missing(),
            });
            diff_files.push(path);
        }
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: cfg.sha256(),
            seed: cfg.sim.seed,
            n_paths: cfg.sim.n_paths,
            steps_per_tenor: cfg.sim.steps_per_tenor,
            tape_sha256: tape.checksum(),
            driver_validation: validation.clone(),
            runs,
            diffs,
        };
        let manifest_path = dir.join(format!("{prefix}_manifest.json"));
        serde_json::to_writer_pretty(create(&manifest_path)?, &manifest)?;
        Ok(ExperimentOutput {
            sets,
            pricing_files,
            diff_files,
            manifest: manifest_path,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRecord {
    pub scheme: Scheme,
    pub drift_mode: DriftMode,
    pub n_paths: usize,
    #[serde(rename = "N")]
    pub n_rates: usize,
    pub n_workers: usize,
    pub wall_seconds: f64,
}

pub const TIMING_METHOD: &str = "best of 3 wall-clock runs after one discarded warmup";

/// Best of three timed runs after a warmup.
pub fn time_best_of_3<T>(mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    f()?;
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        let t = Instant::now();
        std::hint::black_box(f()?);
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok(best.max(f64::MIN_POSITIVE))
}

/// Least-squares line `y = a + b x` with its `R²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        intercept: my - slope * mx,
        slope,
        r_squared,
    })
}

fn write_records(path: &Path, records: &[TimingRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct PathsBench {
    pub records: Vec<TimingRecord>,
    pub full: Option<LinearFit>,
    pub picard: Option<LinearFit>,
    /// Picard slope over Full slope.
    pub slope_ratio: Option<f64>,
    pub method: &'static str,
    pub csv: PathBuf,
}

/// Times Full and Picard evolution, both with second-order drift, at every
/// path count. Only the maturity dimension is spread over workers, so the
/// comparison isolates what rate-level parallelism buys each scheme. The
/// increment tape is generated outside the timed region.
pub fn bench_paths(cfg: &ExperimentConfig, counts: &[usize]) -> Result<PathsBench> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(Error::Config("bench-paths: need a nonempty list of positive path counts".into()));
    }
    let Setup {
        market, driver, grid, ..
    } = setup(cfg)?;
    let workers = if cfg.sim.n_workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        cfg.sim.n_workers
    };
    let mut records = Vec::new();
    par::with_workers(workers, || -> Result<()> {
        for &n_paths in counts {
            let tape = IncrementTape::generate(&driver, &grid, n_paths, cfg.sim.seed, true);
            for scheme in [Scheme::Full, Scheme::Picard] {
                let sim_cfg = SimConfig {
                    n_workers: workers,
                    parallelism: Parallelism::Rates,
                    ..SimConfig::new(n_paths, cfg.sim.seed, scheme, DriftMode::SecondOrder)
                };
                let secs = time_best_of_3(|| simulate_with_tape(&market, &driver, &grid, &sim_cfg, &tape))?;
                log::info!("bench-paths {scheme} {n_paths} paths: {secs:.4} s");
                records.push(TimingRecord {
                    scheme,
                    drift_mode: DriftMode::SecondOrder,
                    n_paths,
                    n_rates: market.n_rates(),
                    n_workers: workers,
                    wall_seconds: secs,
                });
            }
        }
        Ok(())
    })?;
    let fit = |s: Scheme| {
        let (x, y): (Vec<f64>, Vec<f64>) = records
            .iter()
            .filter(|r| r.scheme == s)
            .map(|r| (r.n_paths as f64, r.wall_seconds))
            .unzip();
        linear_fit(&x, &y)
    };
    let full = fit(Scheme::Full);
    let picard = fit(Scheme::Picard);
    let slope_ratio = match (full, picard) {
        (Some(f), Some(p)) if f.slope > 0.0 => Some(p.slope / f.slope),
        _ => None,
    };
    fs::create_dir_all(&cfg.output.directory)?;
    let csv = cfg.output.directory.join(format!("{}_bench_paths.csv", cfg.output.prefix));
    write_records(&csv, &records)?;
    Ok(PathsBench {
        records,
        full,
        picard,
        slope_ratio,
        method: TIMING_METHOD,
        csv,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TenorBench {
    pub records: Vec<TimingRecord>,
    /// Sizes at which the exact drift was refused, with the reason.
    pub refused: Vec<(usize, String)>,
    /// Loading rescale factor applied to each synthetic market.
    pub vol_factors: Vec<(usize, f64)>,
    pub method: &'static str,
    pub csv: PathBuf,
}

/// Times one drift evaluation of the first rate against all later rates,
/// exact and second order, on synthetic semiannual markets of each size.
/// Each of `n_paths` evaluations uses its own perturbed rate state.
pub fn bench_tenor(cfg: &ExperimentConfig, sizes: &[usize]) -> Result<TenorBench> {
    bench_tenor_modes(cfg, sizes, &[DriftMode::Exact, DriftMode::SecondOrder])
}

pub fn bench_tenor_modes(cfg: &ExperimentConfig, sizes: &[usize], modes: &[DriftMode]) -> Result<TenorBench> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::Config("bench-tenor: need a nonempty list of positive tenor sizes".into()));
    }
    let driver = cfg.driver.spec();
    driver.validate()?;
    let n_evals = cfg.sim.n_paths;
    let mut records = Vec::new();
    let mut refused = Vec::new();
    let mut vol_factors = Vec::new();
    for &n in sizes {
        let (market, factor) = kluge_extended(n, driver.u_max(), driver.eps)?;
        validate_driver(&driver, &market.tenor, &market.vols, driver.eps)?;
        vol_factors.push((n, factor));
        let states: Vec<Vec<f64>> = (0..n_evals)
            .map(|p| {
                let bump = 1.0 + 0.25 * ((p as f64) * 0.618_033_988_75).fract() - 0.125;
                market.initial.rates.iter().map(|l| l * bump).collect()
            })
            .collect();
        for &mode in modes {
            let engine = match DriftEngine::new(&driver, &market, mode) {
                Ok(e) => e,
                Err(e @ Error::CacheRefused(_)) => {
                    log::warn!("bench-tenor N={n} {mode}: {e}");
                    refused.push((n, e.to_string()));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mut w = vec![0.0; n];
            let secs = time_best_of_3(|| {
                let mut acc = 0.0;
                for s in &states {
                    engine.weights_into(s, 1, &mut w);
                    acc += engine.drift_weights(0, 0, &w);
                }
                Ok(acc)
            })?;
            log::info!("bench-tenor N={n} {mode}: {secs:.6} s for {n_evals} evaluations");
            records.push(TimingRecord {
                scheme: Scheme::Full,
                drift_mode: mode,
                n_paths: n_evals,
                n_rates: n,
                n_workers: 1,
                wall_seconds: secs,
            });
        }
    }
    fs::create_dir_all(&cfg.output.directory)?;
    let csv = cfg.output.directory.join(format!("{}_bench_tenor.csv", cfg.output.prefix));
    write_records(&csv, &records)?;
    Ok(TenorBench {
        records,
        refused,
        vol_factors,
        method: TIMING_METHOD,
        csv,
    })
}
