//! No-arbitrage drift of the log-LIBOR rates under the terminal measure.
//!
//! For rate `i` with loading `a = λ_i`, later loadings `λ_l` and compounding
//! weights `w_l = δ_l L_l / (1 + δ_l L_l)`, the drift is
//!
//! ```text
//! b_i = −½ c a² − c a Σ_{l>i} w_l λ_l − A
//! A   = ∫ ((e^{ax} − 1) ∏_{l>i} (1 + w_l (e^{λ_l x} − 1)) − a x) F(dx)
//! ```
//!
//! Writing each factor as `(1 − w_l) + w_l e^{λ_l x}` and expanding over
//! subsets `U` of the later rates turns the integral into cumulant values:
//!
//! ```text
//! A = Σ_U  ∏_{l∈U} w_l ∏_{l∉U} (1 − w_l) · (κ(a + λ_U) − κ(λ_U))
//! ```
//!
//! which is exact and costs `2^{N−i}` lookups. Expanding instead in powers
//! of `w` and truncating gives the first-order (`O(N)`, error `O(‖L‖²)`) and
//! second-order (`O(N²)`, error `O(‖L‖³)`) forms. Both use the same
//! inclusion–exclusion signs; the second-order pair sum adds
//! `w_k w_l (κ_ikl − κ_il − κ_ik − κ_kl + κ_i + κ_k + κ_l)`.
//!
//! All cumulant arguments are subset sums of loadings, so they are
//! precomputed per volatility regime in a [`CumulantCache`].

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::driver::LevyDriverSpec;
use crate::error::{Error, Result};
use crate::market::Market;

/// Largest tenor for which the full subset table is built (`2^25` entries).
pub const MAX_EXACT_RATES: usize = 25;

/// Scalar type the drift kernels are generic over. `f64` is the production
/// instantiation; wider types can be plugged in to study truncation errors
/// below double-precision resolution.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + From<f64>
{
}

impl Real for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    Exact,
    FirstOrder,
    SecondOrder,
}

impl DriftMode {
    pub fn name(&self) -> &'static str {
        match self {
            DriftMode::Exact => "exact",
            DriftMode::FirstOrder => "first_order",
            DriftMode::SecondOrder => "second_order",
        }
    }
}

impl std::fmt::Display for DriftMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DriftMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(DriftMode::Exact),
            "first_order" => Ok(DriftMode::FirstOrder),
            "second_order" => Ok(DriftMode::SecondOrder),
            other => Err(Error::Config(format!("unknown drift mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Live,
    Frozen,
    PicardIterate,
}

/// Rates `L(s−, T_l)` feeding the drift. Holds a value for every rate of
/// the tenor; only entries after the rate being drifted are read.
#[derive(Debug, Clone, PartialEq)]
pub struct RateState {
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl RateState {
    pub fn new(values: Vec<f64>, provenance: Provenance) -> Self {
        Self { values, provenance }
    }
}

/// Source of `κ(Σ_{l∈U} λ_l)` for subsets `U` of the rates.
///
/// Implementations must sum loadings in ascending rate order so that cached
/// and direct values agree bit for bit.
pub trait Cumulants {
    fn n_rates(&self) -> usize;
    fn lambda(&self, r: usize) -> f64;
    /// `κ` of the subset encoded by bit mask `mask`.
    fn subset(&self, mask: u64) -> f64;

    fn one(&self, i: usize) -> f64 {
        self.subset(1 << i)
    }
    /// Requires `i < j`.
    fn two(&self, i: usize, j: usize) -> f64 {
        self.subset((1 << i) | (1 << j))
    }
    /// Requires `i < j < k`.
    fn three(&self, i: usize, j: usize, k: usize) -> f64 {
        self.subset((1 << i) | (1 << j) | (1 << k))
    }
}

/// Uncached evaluation straight from the driver.
pub struct DirectCumulants<'a> {
    driver: &'a LevyDriverSpec,
    lambdas: Vec<f64>,
    s: f64,
}

impl<'a> DirectCumulants<'a> {
    pub fn new(driver: &'a LevyDriverSpec, lambdas: Vec<f64>, s: f64) -> Result<Self> {
        check_domain(driver, &lambdas)?;
        Ok(Self { driver, lambdas, s })
    }

    fn kappa(&self, u: f64) -> f64 {
        self.driver
            .jump_cumulant(self.s, u)
            .expect("loading sums were checked against the cumulant domain")
    }
}

fn check_domain(driver: &LevyDriverSpec, lambdas: &[f64]) -> Result<()> {
    let total: f64 = lambdas.iter().map(|l| l.abs()).sum();
    if total > driver.u_max() {
        return Err(Error::CumulantDomain {
            u: total,
            u_max: driver.u_max(),
        });
    }
    Ok(())
}

fn subset_sum(lambdas: &[f64], mut mask: u64) -> f64 {
    let mut sum = 0.0;
    while mask != 0 {
        let l = mask.trailing_zeros() as usize;
        sum += lambdas[l];
        mask &= mask - 1;
    }
    sum
}

impl Cumulants for DirectCumulants<'_> {
    fn n_rates(&self) -> usize {
        self.lambdas.len()
    }
    fn lambda(&self, r: usize) -> f64 {
        self.lambdas[r]
    }
    fn subset(&self, mask: u64) -> f64 {
        self.kappa(subset_sum(&self.lambdas, mask))
    }
    fn one(&self, i: usize) -> f64 {
        self.kappa(self.lambdas[i])
    }
    fn two(&self, i: usize, j: usize) -> f64 {
        self.kappa(self.lambdas[i] + self.lambdas[j])
    }
    fn three(&self, i: usize, j: usize, k: usize) -> f64 {
        self.kappa(self.lambdas[i] + self.lambdas[j] + self.lambdas[k])
    }
}

#[derive(Debug, Clone)]
enum CacheTable {
    /// `κ(λ_U)` indexed by the subset mask.
    Subsets(Vec<f64>),
    Expansion {
        single: Vec<f64>,
        /// Row-major `n × n`, symmetric.
        pair: Vec<f64>,
        /// Row-major `n × n × n`, filled for strictly increasing indices.
        triple: Option<Vec<f64>>,
    },
}

/// Precomputed cumulants for one volatility regime.
#[derive(Debug, Clone)]
pub struct CumulantCache {
    lambdas: Vec<f64>,
    table: CacheTable,
    driver: LevyDriverSpec,
    s: f64,
}

impl CumulantCache {
    /// Number of distinct cumulant values stored.
    pub fn len(&self) -> usize {
        let n = self.lambdas.len();
        match &self.table {
            CacheTable::Subsets(t) => t.len(),
            CacheTable::Expansion { triple, .. } => {
                let pairs = n * n.saturating_sub(1) / 2;
                let triples = if triple.is_some() {
                    n * n.saturating_sub(1) * n.saturating_sub(2) / 6
                } else {
                    0
                };
                n + pairs + triples
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }
}

/// Builds the cumulant cache a drift mode needs for the loadings `lambdas`
/// (one entry per rate) at time `s`.
///
/// `Exact` stores all `2^N` subset values and is refused above
/// [`MAX_EXACT_RATES`]; `SecondOrder` stores sums of up to three loadings,
/// `FirstOrder` up to two.
pub fn build_cumulant_cache(
    driver: &LevyDriverSpec,
    lambdas: &[f64],
    s: f64,
    mode: DriftMode,
) -> Result<CumulantCache> {
    let n = lambdas.len();
    if n == 0 {
        return Err(Error::Config("cumulant cache needs at least one rate".into()));
    }
    let direct = DirectCumulants::new(driver, lambdas.to_vec(), s)?;
    let table = match mode {
        DriftMode::Exact => {
            if n > MAX_EXACT_RATES {
                return Err(Error::CacheRefused(format!(
                    "exact drift over N = {n} rates needs 2^{n} = {:.3e} subset terms per drift \
                     evaluation (limit N = {MAX_EXACT_RATES}); use drift_mode first_order or second_order",
                    2f64.powi(n as i32)
                )));
            }
            let size = 1usize << n;
            let mut sums = vec![0.0f64; size];
            let mut kappas = vec![0.0f64; size];
            for mask in 1..size {
                let high = usize::BITS - 1 - mask.leading_zeros();
                sums[mask] = sums[mask ^ (1 << high)] + lambdas[high as usize];
                kappas[mask] = direct.kappa(sums[mask]);
            }
            CacheTable::Subsets(kappas)
        }
        DriftMode::FirstOrder | DriftMode::SecondOrder => {
            let single: Vec<f64> = (0..n).map(|i| direct.one(i)).collect();
            let mut pair = vec![0.0; n * n];
            for i in 0..n {
                pair[i * n + i] = single[i];
                for j in i + 1..n {
                    let v = direct.two(i, j);
                    pair[i * n + j] = v;
                    pair[j * n + i] = v;
                }
            }
            let triple = (mode == DriftMode::SecondOrder).then(|| {
                let mut t = vec![0.0; n * n * n];
                for i in 0..n {
                    for j in i + 1..n {
                        for k in j + 1..n {
                            t[(i * n + j) * n + k] = direct.three(i, j, k);
                        }
                    }
                }
                t
            });
            CacheTable::Expansion {
                single,
                pair,
                triple,
            }
        }
    };
    Ok(CumulantCache {
        lambdas: lambdas.to_vec(),
        table,
        driver: *driver,
        s,
    })
}

impl Cumulants for CumulantCache {
    fn n_rates(&self) -> usize {
        self.lambdas.len()
    }
    fn lambda(&self, r: usize) -> f64 {
        self.lambdas[r]
    }
    fn subset(&self, mask: u64) -> f64 {
        match &self.table {
            CacheTable::Subsets(t) => t[mask as usize],
            CacheTable::Expansion { .. } => {
                let n = mask.count_ones();
                let mut bits = (0..64).filter(|b| mask & (1 << b) != 0);
                match n {
                    0 => 0.0,
                    1 => self.one(bits.next().unwrap()),
                    2 => {
                        let i = bits.next().unwrap();
                        self.two(i, bits.next().unwrap())
                    }
                    3 if self.has_triples() => {
                        let i = bits.next().unwrap();
                        let j = bits.next().unwrap();
                        self.three(i, j, bits.next().unwrap())
                    }
                    _ => self
                        .driver
                        .jump_cumulant(self.s, subset_sum(&self.lambdas, mask))
                        .expect("loading sums were checked against the cumulant domain"),
                }
            }
        }
    }
    fn one(&self, i: usize) -> f64 {
        match &self.table {
            CacheTable::Subsets(t) => t[1 << i],
            CacheTable::Expansion { single, .. } => single[i],
        }
    }
    fn two(&self, i: usize, j: usize) -> f64 {
        match &self.table {
            CacheTable::Subsets(t) => t[(1 << i) | (1 << j)],
            CacheTable::Expansion { pair, .. } => pair[i * self.lambdas.len() + j],
        }
    }
    fn three(&self, i: usize, j: usize, k: usize) -> f64 {
        match &self.table {
            CacheTable::Subsets(t) => t[(1 << i) | (1 << j) | (1 << k)],
            CacheTable::Expansion {
                triple: Some(t), ..
            } => {
                let n = self.lambdas.len();
                t[(i * n + j) * n + k]
            }
            CacheTable::Expansion { triple: None, .. } => self
                .driver
                .jump_cumulant(self.s, self.lambdas[i] + self.lambdas[j] + self.lambdas[k])
                .expect("loading sums were checked against the cumulant domain"),
        }
    }
}

impl CumulantCache {
    fn has_triples(&self) -> bool {
        matches!(
            self.table,
            CacheTable::Expansion {
                triple: Some(_),
                ..
            }
        )
    }
}

/// `w = δL / (1 + δL)`.
#[inline]
pub fn compounding_weight(delta: f64, rate: f64) -> f64 {
    let x = delta * rate;
    x / (1.0 + x)
}

/// Exact jump term `A` for rate `i`; `weights[l]` is read for `l > i`.
pub fn jump_term_exact<T: Real, C: Cumulants + ?Sized>(kappa: &C, i: usize, weights: &[T]) -> T {
    fn walk<T: Real, C: Cumulants + ?Sized>(
        kappa: &C,
        weights: &[T],
        bit_i: u64,
        l: usize,
        mask: u64,
        coef: T,
    ) -> T {
        if l == weights.len() {
            return coef * (T::from(kappa.subset(mask | bit_i)) - T::from(kappa.subset(mask)));
        }
        let w = weights[l];
        walk(kappa, weights, bit_i, l + 1, mask, coef * (T::from(1.0) - w))
            + walk(kappa, weights, bit_i, l + 1, mask | (1 << l), coef * w)
    }
    walk(kappa, weights, 1 << i, i + 1, 0, T::from(1.0))
}

/// First-order jump term `A′`.
pub fn jump_term_first_order<T: Real, C: Cumulants + ?Sized>(kappa: &C, i: usize, weights: &[T]) -> T {
    let ki = kappa.one(i);
    let mut acc = T::from(ki);
    for l in i + 1..weights.len() {
        acc = acc + weights[l] * T::from(kappa.two(i, l) - ki - kappa.one(l));
    }
    acc
}

/// Second-order jump term `A″`.
pub fn jump_term_second_order<T: Real, C: Cumulants + ?Sized>(kappa: &C, i: usize, weights: &[T]) -> T {
    let mut acc = jump_term_first_order(kappa, i, weights);
    let ki = kappa.one(i);
    for k in i + 1..weights.len() {
        let kk = kappa.one(k);
        let kik = kappa.two(i, k);
        let mut inner = T::from(0.0);
        for l in k + 1..weights.len() {
            let term = kappa.three(i, k, l) - kappa.two(i, l) - kik - kappa.two(k, l)
                + ki
                + kk
                + kappa.one(l);
            inner = inner + weights[l] * T::from(term);
        }
        acc = acc + weights[k] * inner;
    }
    acc
}

pub fn jump_term<T: Real, C: Cumulants + ?Sized>(mode: DriftMode, kappa: &C, i: usize, weights: &[T]) -> T {
    match mode {
        DriftMode::Exact => jump_term_exact(kappa, i, weights),
        DriftMode::FirstOrder => jump_term_first_order(kappa, i, weights),
        DriftMode::SecondOrder => jump_term_second_order(kappa, i, weights),
    }
}

/// Full drift `b_i` from compounding weights.
pub fn drift_from_weights<T: Real, C: Cumulants + ?Sized>(
    mode: DriftMode,
    kappa: &C,
    c: f64,
    i: usize,
    weights: &[T],
) -> T {
    let a = T::from(kappa.lambda(i));
    let jumps = jump_term(mode, kappa, i, weights);
    if c == 0.0 {
        return -jumps;
    }
    let c = T::from(c);
    let mut cross = T::from(0.0);
    for l in i + 1..weights.len() {
        cross = cross + weights[l] * T::from(kappa.lambda(l));
    }
    -(T::from(0.5) * c * a * a) - c * a * cross - jumps
}

/// Drift evaluator with precomputed cumulants, one cache per distinct
/// volatility regime on the tenor intervals.
#[derive(Debug, Clone)]
pub struct DriftEngine {
    mode: DriftMode,
    driver: LevyDriverSpec,
    accruals: Vec<f64>,
    fixings: Vec<f64>,
    caches: Vec<CumulantCache>,
    regime_of_interval: Vec<usize>,
}

impl DriftEngine {
    pub fn new(driver: &LevyDriverSpec, market: &Market, mode: DriftMode) -> Result<Self> {
        let n = market.n_rates();
        let mut caches: Vec<CumulantCache> = Vec::new();
        let mut regime_of_interval = Vec::with_capacity(n);
        for j in 0..n {
            let lambdas = market.vols.regime(j);
            let idx = match caches.iter().position(|c| c.lambdas == lambdas) {
                Some(idx) => idx,
                None => {
                    caches.push(build_cumulant_cache(driver, &lambdas, market.tenor.dates()[j], mode)?);
                    caches.len() - 1
                }
            };
            regime_of_interval.push(idx);
        }
        Ok(Self {
            mode,
            driver: *driver,
            accruals: (0..n).map(|r| market.tenor.accrual(r)).collect(),
            fixings: (0..n).map(|r| market.tenor.fixing(r)).collect(),
            caches,
            regime_of_interval,
        })
    }

    pub fn mode(&self) -> DriftMode {
        self.mode
    }

    pub fn n_rates(&self) -> usize {
        self.accruals.len()
    }

    pub fn n_regimes(&self) -> usize {
        self.caches.len()
    }

    pub fn cache(&self, interval: usize) -> &CumulantCache {
        &self.caches[self.regime_of_interval[interval]]
    }

    pub fn accruals(&self) -> &[f64] {
        &self.accruals
    }

    /// Fills `weights[l]` from `rates[l]` for `l ≥ from`.
    pub fn weights_into(&self, rates: &[f64], from: usize, weights: &mut [f64]) {
        for l in from..self.accruals.len() {
            weights[l] = compounding_weight(self.accruals[l], rates[l]);
        }
    }

    /// Drift of rate `r` on tenor interval `interval` given weights.
    #[inline]
    pub fn drift_weights(&self, r: usize, interval: usize, weights: &[f64]) -> f64 {
        let s = self.fixings.get(interval.wrapping_sub(1)).copied().unwrap_or(0.0);
        drift_from_weights(self.mode, self.cache(interval), self.driver.diffusion(s), r, weights)
    }

    /// Same as [`DriftEngine::drift_weights`] in another scalar type and
    /// mode, reusing this engine's cache (which must cover the mode).
    pub fn drift_weights_in<T: Real>(&self, mode: DriftMode, r: usize, interval: usize, weights: &[T]) -> T {
        drift_from_weights(mode, self.cache(interval), self.driver.diffusion_c, r, weights)
    }

    /// Drift of rate `r` at time `s` for the state `state`.
    pub fn drift(&self, r: usize, s: f64, state: &RateState) -> Result<f64> {
        let interval = self.interval_of(r, s)?;
        let mut w = vec![0.0; self.n_rates()];
        self.weights_into(&state.values, r + 1, &mut w);
        Ok(self.drift_weights(r, interval, &w))
    }

    fn interval_of(&self, r: usize, s: f64) -> Result<usize> {
        let n = self.n_rates();
        if r >= n {
            return Err(Error::Index(format!("rate index {} > N = {n}", r + 1)));
        }
        if !(s >= 0.0 && s < self.fixings[r]) {
            return Err(Error::Index(format!(
                "rate {} is not alive at s = {s} (fixes at {})",
                r + 1,
                self.fixings[r]
            )));
        }
        Ok(self.fixings.iter().take_while(|&&t| t <= s).count())
    }
}

fn direct_drift(
    mode: DriftMode,
    r: usize,
    s: f64,
    state: &RateState,
    driver: &LevyDriverSpec,
    market: &Market,
) -> Result<f64> {
    let n = market.n_rates();
    if r >= n {
        return Err(Error::Index(format!("rate index {} > N = {n}", r + 1)));
    }
    if state.values.len() != n {
        return Err(Error::Index(format!(
            "state holds {} rates, tenor has {n}",
            state.values.len()
        )));
    }
    let fix = market.tenor.fixing(r);
    if !(s >= 0.0 && s < fix) {
        return Err(Error::Index(format!("rate {} is not alive at s = {s} (fixes at {fix})", r + 1)));
    }
    let interval = market.tenor.dates()[1..].iter().take_while(|&&t| t <= s).count();
    let kappa = DirectCumulants::new(driver, market.vols.regime(interval), market.tenor.dates()[interval])?;
    let mut w = vec![0.0; n];
    for l in r + 1..n {
        w[l] = compounding_weight(market.tenor.accrual(l), state.values[l]);
    }
    Ok(drift_from_weights(mode, &kappa, driver.diffusion(s), r, &w))
}

/// Exact drift `b(s, T_{r+1})`, evaluated without a cache.
pub fn drift_exact(r: usize, s: f64, state: &RateState, driver: &LevyDriverSpec, market: &Market) -> Result<f64> {
    if market.n_rates() > 64 {
        return Err(Error::CacheRefused("subset masks are limited to 64 rates".into()));
    }
    direct_drift(DriftMode::Exact, r, s, state, driver, market)
}

pub fn drift_first_order(
    r: usize,
    s: f64,
    state: &RateState,
    driver: &LevyDriverSpec,
    market: &Market,
) -> Result<f64> {
    direct_drift(DriftMode::FirstOrder, r, s, state, driver, market)
}

pub fn drift_second_order(
    r: usize,
    s: f64,
    state: &RateState,
    driver: &LevyDriverSpec,
    market: &Market,
) -> Result<f64> {
    direct_drift(DriftMode::SecondOrder, r, s, state, driver, market)
}
