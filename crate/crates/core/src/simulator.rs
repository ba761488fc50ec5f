//! Euler evolution of the log-LIBOR rates on a shared increment tape.
//!
//! All schemes step `Z ← Z + b·Δt + λ·ΔH` with the drift evaluated at the
//! start of the step. They differ in the state the drift sees:
//!
//! * `Full`: the live simulated rates. Every alive rate is advanced from the
//!   same step-start state; rates are coupled, so paths are the only
//!   parallel dimension.
//! * `Frozen`: the initial rates. The drift is deterministic and computed
//!   once per tenor interval. This is also the first Picard iterate `Z¹`.
//! * `Picard`: the `Z¹` paths on the same tape. Given the `Z¹` panel each
//!   rate evolves independently of the others, so rates are a second
//!   parallel dimension.
//!
//! The grid runs from 0 to the last fixing `T_N`; rate `r` is alive on the
//! steps before its fixing and constant afterwards.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::driver::LevyDriverSpec;
use crate::drift::{compounding_weight, DriftEngine, DriftMode};
use crate::error::{Error, Result};
use crate::market::{Market, TenorStructure};
use crate::par;
use crate::rng::StepRng;

/// Paths per work item. Fixed so that blocking never depends on workers.
pub const PATH_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Full,
    Frozen,
    Picard,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Full => "full",
            Scheme::Frozen => "frozen",
            Scheme::Picard => "picard",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scheme::Full),
            "frozen" => Ok(Scheme::Frozen),
            "picard" => Ok(Scheme::Picard),
            other => Err(Error::Config(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Which dimensions may be spread over workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    Sequential,
    Paths,
    /// Maturity dimension only: path blocks run one after another.
    Rates,
    PathsAndRates,
}

impl Parallelism {
    fn paths(self) -> bool {
        matches!(self, Parallelism::Paths | Parallelism::PathsAndRates)
    }
    fn rates(self) -> bool {
        matches!(self, Parallelism::Rates | Parallelism::PathsAndRates)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    /// Rates at tenor dates only.
    Fixings,
    /// Every rate at every grid time.
    FullGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimGrid {
    pub steps_per_tenor: usize,
    times: Vec<f64>,
    interval: Vec<usize>,
}

impl SimGrid {
    /// Each interval `[T_j, T_{j+1}]`, `j < N`, split into `steps_per_tenor`
    /// equal steps.
    pub fn new(tenor: &TenorStructure, steps_per_tenor: usize) -> Result<Self> {
        if steps_per_tenor == 0 {
            return Err(Error::Config("steps_per_tenor must be >= 1".into()));
        }
        let dates = tenor.dates();
        let n = tenor.n_rates();
        let mut times = Vec::with_capacity(n * steps_per_tenor + 1);
        let mut interval = Vec::with_capacity(n * steps_per_tenor);
        times.push(0.0);
        for j in 0..n {
            let (a, b) = (dates[j], dates[j + 1]);
            for q in 1..=steps_per_tenor {
                let t = if q == steps_per_tenor {
                    b
                } else {
                    a + (b - a) * q as f64 / steps_per_tenor as f64
                };
                times.push(t);
                interval.push(j);
            }
        }
        Ok(Self {
            steps_per_tenor,
            times,
            interval,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.interval.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    /// Tenor interval containing step `k`.
    pub fn interval(&self, k: usize) -> usize {
        self.interval[k]
    }

    /// Grid index of tenor date `T_j`.
    pub fn tenor_index(&self, j: usize) -> usize {
        j * self.steps_per_tenor
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub drift_mode: DriftMode,
    /// 0 uses the default pool; 1 runs sequentially.
    pub n_workers: usize,
    pub parallelism: Parallelism,
    /// Abort when any `|Z|` exceeds this.
    pub z_bound: f64,
    pub storage: Storage,
}

impl SimConfig {
    pub fn new(n_paths: usize, seed: u64, scheme: Scheme, drift_mode: DriftMode) -> Self {
        Self {
            n_paths,
            seed,
            scheme,
            drift_mode,
            n_workers: 0,
            parallelism: Parallelism::PathsAndRates,
            z_bound: 50.0,
            storage: Storage::Fixings,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be >= 1".into()));
        }
        if !(self.z_bound > 0.0) {
            return Err(Error::Config("z_bound must be > 0".into()));
        }
        Ok(())
    }

    fn effective_parallelism(&self) -> Parallelism {
        if self.n_workers == 1 {
            Parallelism::Sequential
        } else {
            self.parallelism
        }
    }
}

/// Driving increments `ΔH`, one row per path, one column per grid step.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementTape {
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    values: Vec<f64>,
}

impl IncrementTape {
    /// Path `p` draws from stream `(seed, p)`, step `k` from its `k`-th
    /// window.
    pub fn generate(driver: &LevyDriverSpec, grid: &SimGrid, n_paths: usize, seed: u64, parallel: bool) -> Self {
        let n_steps = grid.n_steps();
        let n_blocks = n_paths.div_ceil(PATH_BLOCK);
        let blocks = par::map_indexed(n_blocks, parallel, |b| {
            let lo = b * PATH_BLOCK;
            let hi = (lo + PATH_BLOCK).min(n_paths);
            let mut out = Vec::with_capacity((hi - lo) * n_steps);
            for p in lo..hi {
                let mut rng = StepRng::for_path(seed, p as u64);
                for k in 0..n_steps {
                    let draws = rng.step_draws();
                    out.push(driver.increment(grid.times[k], grid.dt(k), &draws));
                }
            }
            out
        });
        Self {
            n_paths,
            n_steps,
            seed,
            values: blocks.concat(),
        }
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self, p: usize) -> &[f64] {
        &self.values[p * self.n_steps..(p + 1) * self.n_steps]
    }

    /// SHA-256 of the little-endian bytes, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        format!("{:x}", h.finalize())
    }
}

/// Simulated log-rates of one run.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    pub scheme: Scheme,
    pub drift_mode: DriftMode,
    n_paths: usize,
    n_rates: usize,
    grid: SimGrid,
    fixing_dates: Vec<f64>,
    initial_log: Vec<f64>,
    /// Per path, triangular: for fixing index `j` (date `T_{j+1}`) the
    /// log-rates of rates `r ≥ j`.
    fixings: Vec<f64>,
    /// Per path `(n_steps + 1) × N` log-rates when stored.
    full: Option<Vec<f64>>,
    tape_checksum: String,
}

fn tri_len(n: usize) -> usize {
    n * (n + 1) / 2
}

fn tri_offset(n: usize, j: usize) -> usize {
    j * n - j * j.saturating_sub(1) / 2
}

/// Rates at one tenor date across all paths.
#[derive(Debug, Clone, PartialEq)]
pub struct FixingsTable {
    pub date: f64,
    /// Index (0-based) of the first rate in each row.
    pub first_rate: usize,
    pub n_paths: usize,
    /// Row-major `n_paths × (N − first_rate)`, in rate units.
    pub values: Vec<f64>,
}

impl FixingsTable {
    pub fn width(&self) -> usize {
        if self.n_paths == 0 {
            0
        } else {
            self.values.len() / self.n_paths
        }
    }

    pub fn row(&self, p: usize) -> &[f64] {
        let w = self.width();
        &self.values[p * w..(p + 1) * w]
    }
}

impl ScenarioSet {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_rates(&self) -> usize {
        self.n_rates
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    pub fn tape_checksum(&self) -> &str {
        &self.tape_checksum
    }

    pub fn initial_log(&self) -> &[f64] {
        &self.initial_log
    }

    /// `Z(T_{j+1}, T_{r+1})` on path `p`, for `r ≥ j`.
    pub fn fixing_log(&self, p: usize, j: usize, r: usize) -> f64 {
        debug_assert!(r >= j && r < self.n_rates);
        let n = self.n_rates;
        self.fixings[p * tri_len(n) + tri_offset(n, j) + (r - j)]
    }

    /// `Z(t_k, T_{r+1})` on path `p`, if the full grid was stored.
    pub fn grid_log(&self, p: usize, k: usize, r: usize) -> Option<f64> {
        let n = self.n_rates;
        let stride = (self.grid.n_steps() + 1) * n;
        self.full.as_ref().map(|f| f[p * stride + k * n + r])
    }

    pub fn has_full_grid(&self) -> bool {
        self.full.is_some()
    }

    /// `L(T_j, T_l)` for all rates not fixed before `T_j`, per path.
    /// `t` must be one of `T_0 … T_N`.
    pub fn checkpoint_rates(&self, t: f64) -> Result<FixingsTable> {
        let j = self
            .fixing_dates
            .iter()
            .position(|&d| (d - t).abs() <= 1e-12 * d.abs().max(1.0))
            .ok_or_else(|| Error::Index(format!("t = {t} is not a tenor date on the simulation grid")))?;
        let n = self.n_rates;
        if j == 0 {
            let row: Vec<f64> = self.initial_log.iter().map(|z| z.exp()).collect();
            return Ok(FixingsTable {
                date: 0.0,
                first_rate: 0,
                n_paths: self.n_paths,
                values: row.repeat(self.n_paths),
            });
        }
        let fj = j - 1;
        let mut values = Vec::with_capacity(self.n_paths * (n - fj));
        for p in 0..self.n_paths {
            for r in fj..n {
                values.push(self.fixing_log(p, fj, r).exp());
            }
        }
        Ok(FixingsTable {
            date: self.fixing_dates[j],
            first_rate: fj,
            n_paths: self.n_paths,
            values,
        })
    }

    /// CSV dump with columns `path,time,rate_index,log_rate` (rate index
    /// 1-based), covering each rate up to its fixing. Requires
    /// [`Storage::FullGrid`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let full = self
            .full
            .as_ref()
            .ok_or_else(|| Error::Config("scenario dump needs storage = full_grid".into()))?;
        let n = self.n_rates;
        let steps = self.grid.n_steps() + 1;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["path", "time", "rate_index", "log_rate"])?;
        for p in 0..self.n_paths {
            for k in 0..steps {
                let t = self.grid.times[k];
                for r in 0..n {
                    if k > self.grid.tenor_index(r + 1) {
                        continue;
                    }
                    let z = full[(p * steps + k) * n + r];
                    w.serialize((p, t, r + 1, z))?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[inline]
fn euler(z: f64, drift: f64, dt: f64, lambda: f64, dh: f64) -> f64 {
    z + drift * dt + lambda * dh
}

struct Context<'a> {
    market: &'a Market,
    engine: DriftEngine,
    grid: &'a SimGrid,
    initial_log: Vec<f64>,
    /// `λ` of every rate per step (zero once fixed).
    lambda: Vec<f64>,
    z_bound: f64,
    storage: Storage,
}

impl Context<'_> {
    fn n(&self) -> usize {
        self.market.n_rates()
    }

    fn lambda(&self, k: usize, r: usize) -> f64 {
        self.lambda[k * self.n() + r]
    }

    fn guard(&self, z: f64, p: usize, k: usize, r: usize) -> Result<()> {
        if z.abs() > self.z_bound || !z.is_finite() {
            return Err(Error::Numerical(format!(
                "|Z| = {} exceeds bound {} on path {p}, step {}, rate {}",
                z.abs(),
                self.z_bound,
                k + 1,
                r + 1
            )));
        }
        Ok(())
    }

    fn frozen_drifts(&self) -> Vec<f64> {
        let n = self.n();
        let mut w = vec![0.0; n];
        self.engine.weights_into(&self.market.initial.rates, 0, &mut w);
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for r in j..n {
                out[j * n + r] = self.engine.drift_weights(r, j, &w);
            }
        }
        out
    }
}

/// Per-block output: triangular fixings and optional full grid.
struct BlockOut {
    fixings: Vec<f64>,
    full: Vec<f64>,
}

impl BlockOut {
    fn new(n_paths: usize, n: usize, steps: usize, storage: Storage) -> Self {
        Self {
            fixings: vec![0.0; n_paths * tri_len(n)],
            full: match storage {
                Storage::Fixings => Vec::new(),
                Storage::FullGrid => vec![0.0; n_paths * (steps + 1) * n],
            },
        }
    }
}

/// Generates the tape for `cfg.seed` and evolves it under `cfg.scheme`.
pub fn simulate(market: &Market, driver: &LevyDriverSpec, grid: &SimGrid, cfg: &SimConfig) -> Result<ScenarioSet> {
    cfg.validate()?;
    let par = cfg.effective_parallelism();
    par::with_workers(cfg.n_workers, || {
        let tape = IncrementTape::generate(driver, grid, cfg.n_paths, cfg.seed, par != Parallelism::Sequential);
        evolve(market, driver, grid, cfg, &tape)
    })
}

/// First Picard iterate `Z¹`: the frozen-drift paths.
pub fn picard_iterate_paths(
    market: &Market,
    driver: &LevyDriverSpec,
    grid: &SimGrid,
    cfg: &SimConfig,
) -> Result<ScenarioSet> {
    simulate(market, driver, grid, &SimConfig {
        scheme: Scheme::Frozen,
        ..cfg.clone()
    })
}

/// Evolves a given tape. `cfg.n_paths` and `cfg.seed` are taken from the
/// tape.
pub fn simulate_with_tape(
    market: &Market,
    driver: &LevyDriverSpec,
    grid: &SimGrid,
    cfg: &SimConfig,
    tape: &IncrementTape,
) -> Result<ScenarioSet> {
    par::with_workers(cfg.n_workers, || evolve(market, driver, grid, cfg, tape))
}

fn evolve(
    market: &Market,
    driver: &LevyDriverSpec,
    grid: &SimGrid,
    cfg: &SimConfig,
    tape: &IncrementTape,
) -> Result<ScenarioSet> {
    if tape.n_steps() != grid.n_steps() {
        return Err(Error::Config(format!(
            "tape has {} steps, grid has {}",
            tape.n_steps(),
            grid.n_steps()
        )));
    }
    if grid.n_steps() != market.n_rates() * grid.steps_per_tenor {
        return Err(Error::Config("grid does not belong to this tenor".into()));
    }
    let n = market.n_rates();
    let n_steps = grid.n_steps();
    let mut lambda = vec![0.0; n_steps * n];
    for k in 0..n_steps {
        for r in grid.interval(k)..n {
            lambda[k * n + r] = market.vols.at_interval(r, grid.interval(k));
        }
    }
    let ctx = Context {
        market,
        engine: DriftEngine::new(driver, market, cfg.drift_mode)?,
        grid,
        initial_log: market.initial.rates.iter().map(|l| l.ln()).collect(),
        lambda,
        z_bound: if cfg.z_bound > 0.0 { cfg.z_bound } else { 50.0 },
        storage: cfg.storage,
    };
    let par = cfg.effective_parallelism();
    let n_paths = tape.n_paths();
    let n_blocks = n_paths.div_ceil(PATH_BLOCK);
    let frozen = ctx.frozen_drifts();

    let blocks: Vec<Result<BlockOut>> = par::map_indexed(n_blocks, par.paths(), |b| {
        let lo = b * PATH_BLOCK;
        let hi = (lo + PATH_BLOCK).min(n_paths);
        match cfg.scheme {
            Scheme::Full => full_block(&ctx, tape, lo, hi),
            Scheme::Frozen => frozen_block(&ctx, &frozen, tape, lo, hi).map(|(out, _)| out),
            Scheme::Picard => picard_block(&ctx, &frozen, tape, lo, hi, par.rates()),
        }
    });
    let mut fixings = Vec::with_capacity(n_paths * tri_len(n));
    let mut full = match cfg.storage {
        Storage::FullGrid => Some(Vec::with_capacity(n_paths * (n_steps + 1) * n)),
        Storage::Fixings => None,
    };
    for block in blocks {
        let block = block?;
        fixings.extend_from_slice(&block.fixings);
        if let Some(f) = full.as_mut() {
            f.extend_from_slice(&block.full);
        }
    }
    let mut fixing_dates = vec![0.0];
    fixing_dates.extend((0..n).map(|r| market.tenor.fixing(r)));
    Ok(ScenarioSet {
        scheme: cfg.scheme,
        drift_mode: cfg.drift_mode,
        n_paths,
        n_rates: n,
        grid: grid.clone(),
        fixing_dates,
        initial_log: ctx.initial_log.clone(),
        fixings,
        full,
        tape_checksum: tape.checksum(),
    })
}

fn record(ctx: &Context, out: &mut BlockOut, local: usize, k_next: usize, z: &[f64]) {
    let n = ctx.n();
    let spt = ctx.grid.steps_per_tenor;
    if let Storage::FullGrid = ctx.storage {
        let base = (local * (ctx.grid.n_steps() + 1) + k_next) * n;
        out.full[base..base + n].copy_from_slice(z);
    }
    if k_next % spt == 0 {
        let j = k_next / spt - 1;
        let base = local * tri_len(n) + tri_offset(n, j);
        out.fixings[base..base + (n - j)].copy_from_slice(&z[j..]);
    }
}

fn full_block(ctx: &Context, tape: &IncrementTape, lo: usize, hi: usize) -> Result<BlockOut> {
    let n = ctx.n();
    let n_steps = ctx.grid.n_steps();
    let mut out = BlockOut::new(hi - lo, n, n_steps, ctx.storage);
    let mut z = vec![0.0; n];
    let mut rates = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut b = vec![0.0; n];
    for p in lo..hi {
        let local = p - lo;
        let dh = tape.path(p);
        z.copy_from_slice(&ctx.initial_log);
        if let Storage::FullGrid = ctx.storage {
            let base = local * (n_steps + 1) * n;
            out.full[base..base + n].copy_from_slice(&z);
        }
        for k in 0..n_steps {
            let j = ctx.grid.interval(k);
            let dt = ctx.grid.dt(k);
            for l in j + 1..n {
                rates[l] = z[l].exp();
            }
            ctx.engine.weights_into(&rates, j + 1, &mut w);
            for r in (j..n).rev() {
                b[r] = ctx.engine.drift_weights(r, j, &w);
            }
            for r in j..n {
                z[r] = euler(z[r], b[r], dt, ctx.lambda(k, r), dh[k]);
                ctx.guard(z[r], p, k, r)?;
            }
            record(ctx, &mut out, local, k + 1, &z);
        }
    }
    Ok(out)
}

/// Returns the block output plus, for Picard, the per-step `Z¹` weights
/// panel `[(local · n_steps + k) · N + l]` taken at step starts.
fn frozen_block(
    ctx: &Context,
    frozen: &[f64],
    tape: &IncrementTape,
    lo: usize,
    hi: usize,
) -> Result<(BlockOut, Vec<f64>)> {
    frozen_block_impl(ctx, frozen, tape, lo, hi, false)
}

fn frozen_block_impl(
    ctx: &Context,
    frozen: &[f64],
    tape: &IncrementTape,
    lo: usize,
    hi: usize,
    want_weights: bool,
) -> Result<(BlockOut, Vec<f64>)> {
    let n = ctx.n();
    let n_steps = ctx.grid.n_steps();
    let mut out = BlockOut::new(hi - lo, n, n_steps, ctx.storage);
    let mut weights = if want_weights {
        vec![0.0; (hi - lo) * n_steps * n]
    } else {
        Vec::new()
    };
    let accruals = ctx.engine.accruals();
    let mut z = vec![0.0; n];
    for p in lo..hi {
        let local = p - lo;
        let dh = tape.path(p);
        z.copy_from_slice(&ctx.initial_log);
        if let Storage::FullGrid = ctx.storage {
            let base = local * (n_steps + 1) * n;
            out.full[base..base + n].copy_from_slice(&z);
        }
        for k in 0..n_steps {
            let j = ctx.grid.interval(k);
            let dt = ctx.grid.dt(k);
            if want_weights {
                let base = (local * n_steps + k) * n;
                for l in j + 1..n {
                    weights[base + l] = compounding_weight(accruals[l], z[l].exp());
                }
            }
            for r in j..n {
                z[r] = euler(z[r], frozen[j * n + r], dt, ctx.lambda(k, r), dh[k]);
                ctx.guard(z[r], p, k, r)?;
            }
            record(ctx, &mut out, local, k + 1, &z);
        }
    }
    Ok((out, weights))
}

fn picard_block(
    ctx: &Context,
    frozen: &[f64],
    tape: &IncrementTape,
    lo: usize,
    hi: usize,
    rate_parallel: bool,
) -> Result<BlockOut> {
    let n = ctx.n();
    let n_steps = ctx.grid.n_steps();
    let spt = ctx.grid.steps_per_tenor;
    let (_, panel) = frozen_block_impl(ctx, frozen, tape, lo, hi, true)?;
    let m = hi - lo;
    let full_grid = matches!(ctx.storage, Storage::FullGrid);

    // Each rate task returns its column: per path, values at steps 1..=fix.
    let columns: Vec<Result<Vec<f64>>> = par::map_indexed(n, rate_parallel, |r| {
        let last = ctx.grid.tenor_index(r + 1);
        let mut col = Vec::with_capacity(m * last);
        for local in 0..m {
            let p = lo + local;
            let dh = tape.path(p);
            let mut z = ctx.initial_log[r];
            for k in 0..last {
                let j = ctx.grid.interval(k);
                let w = &panel[(local * n_steps + k) * n..(local * n_steps + k + 1) * n];
                let b = ctx.engine.drift_weights(r, j, w);
                z = euler(z, b, ctx.grid.dt(k), ctx.lambda(k, r), dh[k]);
                ctx.guard(z, p, k, r)?;
                col.push(z);
            }
        }
        Ok(col)
    });

    let mut out = BlockOut::new(m, n, n_steps, ctx.storage);
    for (r, col) in columns.into_iter().enumerate() {
        let col = col?;
        let last = ctx.grid.tenor_index(r + 1);
        for local in 0..m {
            let vals = &col[local * last..(local + 1) * last];
            for j in 0..=r {
                let zj = vals[(j + 1) * spt - 1];
                out.fixings[local * tri_len(n) + tri_offset(n, j) + (r - j)] = zj;
            }
            if full_grid {
                let base = local * (n_steps + 1) * n;
                out.full[base + r] = ctx.initial_log[r];
                for k in 1..=n_steps {
                    let v = if k <= last { vals[k - 1] } else { vals[last - 1] };
                    out.full[base + k * n + r] = v;
                }
            }
        }
    }
    Ok(out)
}
