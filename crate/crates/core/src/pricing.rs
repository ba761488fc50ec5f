//! Caplet prices from simulated fixings, Black-76 implied volatilities and
//! cross-method difference tables.
//!
//! Caplet `i` (1-based) fixes at `T_i` on `L(·,T_i)` and pays at `T_{i+1}`.
//! Under the terminal measure its value is
//! `δ_i B(0,T_*) E[∏_{l>i}(1 + δ_l L(T_i,T_l)) (L(T_i,T_i) − K)^+]`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::drift::DriftMode;
use crate::error::{Error, Result};
use crate::market::Market;
use crate::par;
use crate::simulator::{ScenarioSet, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapletSpec {
    /// `i ∈ 1..=N`.
    pub maturity_index: usize,
    pub strike: f64,
}

impl CapletSpec {
    pub fn new(maturity_index: usize, strike: f64) -> Self {
        Self { maturity_index, strike }
    }

    fn check(&self, n_rates: usize) -> Result<()> {
        if self.maturity_index == 0 || self.maturity_index > n_rates {
            return Err(Error::Index(format!(
                "caplet maturity index {} outside 1..={n_rates}",
                self.maturity_index
            )));
        }
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(Error::Validation(format!("strike must be > 0, got {}", self.strike)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapletResult {
    pub spec: CapletSpec,
    pub price: f64,
    pub stderr: f64,
    /// `None` when the price lies outside the Black-76 arbitrage bounds.
    pub implied_vol: Option<f64>,
    pub n_paths: usize,
    pub scheme: Scheme,
    pub drift_mode: DriftMode,
}

/// Caplet results of one scenario set.
#[derive(Debug, Clone, PartialEq)]
pub struct CapletSet {
    pub scheme: Scheme,
    pub drift_mode: DriftMode,
    pub tape_checksum: String,
    pub results: Vec<CapletResult>,
}

/// `strike_multipliers × L(0,T_i)` for every maturity, maturity-major.
pub fn strike_grid(market: &Market, strike_multipliers: &[f64]) -> Vec<CapletSpec> {
    let mut specs = Vec::with_capacity(market.n_rates() * strike_multipliers.len());
    for r in 0..market.n_rates() {
        for &m in strike_multipliers {
            specs.push(CapletSpec::new(r + 1, m * market.initial.rates[r]));
        }
    }
    specs
}

/// Black-76 inputs of caplet `spec`: forward `L(0,T_i)`, expiry `T_i`,
/// discount `B(0,T_{i+1})` and accrual `δ_i`.
pub fn black_inputs(market: &Market, spec: &CapletSpec) -> (f64, f64, f64, f64) {
    let r = spec.maturity_index - 1;
    (
        market.initial.rates[r],
        market.tenor.fixing(r),
        market.curve.bond(r + 2),
        market.tenor.accrual(r),
    )
}

pub fn price_caplet(s: &ScenarioSet, spec: &CapletSpec, market: &Market) -> Result<CapletResult> {
    Ok(price_caplets(s, std::slice::from_ref(spec), market)?.results.remove(0))
}

/// Prices every spec on the same scenario set. Each maturity's path
/// quantities are computed once and shared across strikes.
pub fn price_caplets(s: &ScenarioSet, specs: &[CapletSpec], market: &Market) -> Result<CapletSet> {
    let n = market.n_rates();
    if s.n_rates() != n {
        return Err(Error::Validation(format!(
            "scenario set has {} rates, market has {n}",
            s.n_rates()
        )));
    }
    for spec in specs {
        spec.check(n)?;
    }
    let bt = market.curve.terminal();
    let accruals: Vec<f64> = (0..n).map(|r| market.tenor.accrual(r)).collect();
    let n_paths = s.n_paths();

    let results = par::map_indexed(specs.len(), true, |q| {
        let spec = specs[q];
        let r = spec.maturity_index - 1;
        let scale = accruals[r] * bt;
        let payoff: Vec<f64> = (0..n_paths)
            .map(|p| {
                let l = s.fixing_log(p, r, r).exp();
                let pay = (l - spec.strike).max(0.0);
                if pay == 0.0 {
                    return 0.0;
                }
                let mut prod = 1.0;
                for m in r + 1..n {
                    prod *= 1.0 + accruals[m] * s.fixing_log(p, r, m).exp();
                }
                scale * prod * pay
            })
            .collect();
        let (price, stderr) = mean_stderr(&payoff);
        let (f, t, df, delta) = black_inputs(market, &spec);
        let implied_vol = implied_vol(price, f, spec.strike, t, df, delta).ok();
        CapletResult {
            spec,
            price,
            stderr,
            implied_vol,
            n_paths,
            scheme: s.scheme,
            drift_mode: s.drift_mode,
        }
    });
    Ok(CapletSet {
        scheme: s.scheme,
        drift_mode: s.drift_mode,
        tape_checksum: s.tape_checksum().to_string(),
        results,
    })
}

/// Sample mean and `std/√n` (two-pass, pairwise sums).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = par::pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = par::pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Undiscounted out-of-the-money Black value at total vol `v = σ√T`: the
/// call for `K ≥ F`, the put otherwise.
fn otm_value(f: f64, k: f64, v: f64) -> f64 {
    let d1 = (f / k).ln() / v + 0.5 * v;
    let d2 = d1 - v;
    if k >= f {
        (f * norm_cdf(d1) - k * norm_cdf(d2)).max(0.0)
    } else {
        (k * norm_cdf(-d2) - f * norm_cdf(-d1)).max(0.0)
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} must be > 0, got {x}")))
    }
}

/// `δ·DF·(F Φ(d₁) − K Φ(d₂))`.
pub fn black76_price(f: f64, k: f64, sigma: f64, t: f64, df: f64, delta: f64) -> Result<f64> {
    for (name, x) in [("F", f), ("K", k), ("sigma", sigma), ("T", t), ("DF", df), ("delta", delta)] {
        check_positive(name, x)?;
    }
    let v = sigma * t.sqrt();
    Ok(delta * df * ((f - k).max(0.0) + otm_value(f, k, v)))
}

/// Black-76 vega `∂price/∂σ`.
pub fn black76_vega(f: f64, k: f64, sigma: f64, t: f64, df: f64, delta: f64) -> f64 {
    let v = sigma * t.sqrt();
    let d1 = (f / k).ln() / v + 0.5 * v;
    delta * df * f * norm_pdf(d1) * t.sqrt()
}

/// Inverts [`black76_price`] in `σ`.
///
/// Works on the out-of-the-money time value so deep in-the-money prices do
/// not lose the small part of the price that carries the volatility.
/// Log-space bisection brackets the root, Newton polishes it.
pub fn implied_vol(price: f64, f: f64, k: f64, t: f64, df: f64, delta: f64) -> Result<f64> {
    for (name, x) in [("F", f), ("K", k), ("T", t), ("DF", df), ("delta", delta)] {
        check_positive(name, x)?;
    }
    let scale = delta * df;
    let intrinsic = (f - k).max(0.0);
    let upper = f;
    let target = price / scale - intrinsic;
    let no_solution = || Error::NoImpliedVol {
        price,
        lower: scale * intrinsic,
        upper: scale * upper,
    };
    // A time value within rounding of the price carries no information.
    if !price.is_finite() || !(target > 4.0 * f64::EPSILON * (price / scale)) || !(price / scale < upper) {
        return Err(no_solution());
    }
    let sqrt_t = t.sqrt();
    let g = |v: f64| otm_value(f, k, v) - target;

    let (mut lo, mut hi) = (1e-9_f64, 1.0_f64);
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Err(no_solution());
        }
    }
    while g(lo) > 0.0 {
        hi = lo;
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(no_solution());
        }
    }
    for _ in 0..200 {
        if hi / lo < 1.0 + 1e-3 {
            break;
        }
        let mid = (lo * hi).sqrt();
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut v = 0.5 * (lo + hi);
    for _ in 0..60 {
        let gv = g(v);
        if gv == 0.0 {
            break;
        }
        if gv < 0.0 {
            lo = v;
        } else {
            hi = v;
        }
        let d1 = (f / k).ln() / v + 0.5 * v;
        let vega = f * norm_pdf(d1);
        let mut next = v - gv / vega;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let done = (next - v).abs() <= 4.0 * f64::EPSILON * v;
        v = next;
        if done || hi - lo <= 2.0 * f64::EPSILON * v {
            break;
        }
    }
    Ok(v / sqrt_t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffEntry {
    pub maturity_index: usize,
    pub strike: f64,
    /// `10⁴ (σ_alt − σ_base)`; `None` if either vol is missing.
    pub diff_bp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffTable {
    pub base: (Scheme, DriftMode),
    pub alt: (Scheme, DriftMode),
    pub entries: Vec<DiffEntry>,
}

pub fn diff_table(base: &CapletSet, alt: &CapletSet) -> Result<DiffTable> {
    if base.tape_checksum != alt.tape_checksum {
        return Err(Error::Validation(format!(
            "runs {}/{} and {}/{} were not driven by the same increments",
            base.scheme, base.drift_mode, alt.scheme, alt.drift_mode
        )));
    }
    if base.results.len() != alt.results.len()
        || base.results.iter().zip(&alt.results).any(|(a, b)| a.spec != b.spec)
    {
        return Err(Error::Validation("caplet grids of the two runs differ".into()));
    }
    let entries = base
        .results
        .iter()
        .zip(&alt.results)
        .map(|(b, a)| DiffEntry {
            maturity_index: b.spec.maturity_index,
            strike: b.spec.strike,
            diff_bp: match (b.implied_vol, a.implied_vol) {
                (Some(x), Some(y)) => Some(1e4 * (y - x)),
                _ => None,
            },
        })
        .collect();
    Ok(DiffTable {
        base: (base.scheme, base.drift_mode),
        alt: (alt.scheme, alt.drift_mode),
        entries,
    })
}

impl DiffTable {
    fn abs_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().filter_map(|e| e.diff_bp.map(f64::abs))
    }

    pub fn max_abs(&self) -> f64 {
        self.abs_values().fold(0.0, f64::max)
    }

    pub fn mean_abs(&self) -> f64 {
        let v: Vec<f64> = self.abs_values().collect();
        if v.is_empty() {
            return 0.0;
        }
        par::pairwise_sum(&v) / v.len() as f64
    }

    /// Entries without a difference because a vol was missing.
    pub fn missing(&self) -> usize {
        self.entries.iter().filter(|e| e.diff_bp.is_none()).count()
    }

    /// Columns `maturity_index,strike,diff_bp`, then `max_abs` and
    /// `mean_abs` summary rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["maturity_index", "strike", "diff_bp"])?;
        for e in &self.entries {
            w.write_record([
                e.maturity_index.to_string(),
                fmt_f64(e.strike),
                e.diff_bp.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
        w.write_record(["max_abs".to_string(), String::new(), fmt_f64(self.max_abs())])?;
        w.write_record(["mean_abs".to_string(), String::new(), fmt_f64(self.mean_abs())])?;
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip representation.
fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

impl CapletSet {
    /// Columns `scheme,drift_mode,maturity_index,strike,price,stderr,implied_vol`;
    /// a missing vol is an empty field.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "scheme",
            "drift_mode",
            "maturity_index",
            "strike",
            "price",
            "stderr",
            "implied_vol",
        ])?;
        for r in &self.results {
            w.write_record([
                r.scheme.name().to_string(),
                r.drift_mode.name().to_string(),
                r.spec.maturity_index.to_string(),
                fmt_f64(r.spec.strike),
                fmt_f64(r.price),
                fmt_f64(r.stderr),
                r.implied_vol.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
