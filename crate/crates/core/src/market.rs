//! Tenor structure, initial discount curve, volatility loadings and the
//! initial forward LIBOR rates they imply.
//!
//! Indexing: the model has `N` rates. In code rate `r ∈ 0..N` is the rate
//! the literature calls `L(·, T_{r+1})`; it fixes at `dates[r + 1]`, pays at
//! `dates[r + 2]` and accrues over `delta(r + 1)`. Bond `bonds[k]` is
//! `B(0, T_{k+1})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TenorStructure {
    dates: Vec<f64>,
    deltas: Vec<f64>,
}

impl TenorStructure {
    /// `dates` must be `0 = T_0 < T_1 < … < T_{N+1}` with `N ≥ 1`.
    pub fn new(dates: Vec<f64>) -> Result<Self> {
        if dates.len() < 3 {
            return Err(Error::Config(format!(
                "tenor needs at least 3 dates (T_0, T_1, T_*), got {}",
                dates.len()
            )));
        }
        if dates[0] != 0.0 {
            return Err(Error::Config(format!("tenor must start at T_0 = 0, got {}", dates[0])));
        }
        for (k, w) in dates.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::Config(format!(
                    "tenor dates must be strictly increasing: T_{} = {} is not after T_{} = {}",
                    k + 1,
                    w[1],
                    k,
                    w[0]
                )));
            }
        }
        let deltas = dates.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { dates, deltas })
    }

    /// Equally spaced tenor `0, δ, 2δ, …, (N+1)δ`.
    pub fn uniform(n_rates: usize, delta: f64) -> Result<Self> {
        Self::new((0..=n_rates + 1).map(|k| k as f64 * delta).collect())
    }

    /// Number of rates `N`.
    pub fn n_rates(&self) -> usize {
        self.dates.len() - 2
    }

    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    /// `δ_k = T_{k+1} − T_k` for `k ∈ 0..=N`.
    pub fn delta(&self, k: usize) -> f64 {
        self.deltas[k]
    }

    /// Accrual of rate `r`.
    pub fn accrual(&self, r: usize) -> f64 {
        self.deltas[r + 1]
    }

    /// Fixing date of rate `r`.
    pub fn fixing(&self, r: usize) -> f64 {
        self.dates[r + 1]
    }

    pub fn terminal(&self) -> f64 {
        *self.dates.last().unwrap()
    }
}

/// Zero-coupon bond prices `B(0, T_k)`, `k = 1..=N+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountCurve {
    bonds: Vec<f64>,
}

impl DiscountCurve {
    /// Rejects curves that are not strictly positive and strictly decreasing.
    pub fn new(bonds: Vec<f64>) -> Result<Self> {
        for (k, &b) in bonds.iter().enumerate() {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::Validation(format!(
                    "bond price B(0, T_{}) = {b} must lie in (0, 1]",
                    k + 1
                )));
            }
        }
        for (k, w) in bonds.windows(2).enumerate() {
            if !(w[1] < w[0]) {
                return Err(Error::Validation(format!(
                    "discount curve must be strictly decreasing: B(0, T_{}) = {} >= B(0, T_{}) = {}",
                    k + 2,
                    w[1],
                    k + 1,
                    w[0]
                )));
            }
        }
        Ok(Self { bonds })
    }

    /// `B(0, T_k)` for `k ≥ 1`.
    pub fn bond(&self, k: usize) -> f64 {
        self.bonds[k - 1]
    }

    pub fn bonds(&self) -> &[f64] {
        &self.bonds
    }

    pub fn terminal(&self) -> f64 {
        *self.bonds.last().unwrap()
    }
}

/// Deterministic loadings `λ(s, T_{r+1})`, piecewise constant on tenor
/// intervals. `values[r][j]` applies on `[T_j, T_{j+1})` for `j ≤ r`; the
/// rate is fixed afterwards and its loading is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityStructure {
    values: Vec<Vec<f64>>,
}

impl VolatilityStructure {
    pub fn constant(vols: &[f64]) -> Self {
        Self {
            values: vols
                .iter()
                .enumerate()
                .map(|(r, &v)| vec![v; r + 1])
                .collect(),
        }
    }

    pub fn piecewise(values: Vec<Vec<f64>>) -> Result<Self> {
        for (r, row) in values.iter().enumerate() {
            if row.len() != r + 1 {
                return Err(Error::Config(format!(
                    "rate {} is alive on {} tenor intervals but {} loadings were given",
                    r + 1,
                    r + 1,
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Config(format!("rate {} has non-finite loading {v}", r + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn n_rates(&self) -> usize {
        self.values.len()
    }

    /// Loading of rate `r` on tenor interval `j`; zero once the rate fixed.
    pub fn at_interval(&self, r: usize, j: usize) -> f64 {
        self.values[r].get(j).copied().unwrap_or(0.0)
    }

    /// Loadings of every rate on interval `j`, with fixed rates carrying
    /// their last value. Only alive entries are ever read by the drift, so
    /// constant loadings give one shared regime for all intervals.
    pub fn regime(&self, j: usize) -> Vec<f64> {
        self.values
            .iter()
            .map(|row| row.get(j).copied().unwrap_or(*row.last().unwrap()))
            .collect()
    }

    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|row| row.iter().all(|&v| v == row[0]))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self
                .values
                .iter()
                .map(|row| row.iter().map(|v| v * factor).collect())
                .collect(),
        }
    }
}

/// `L(0, T_{r+1})` for `r ∈ 0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialLibors {
    pub rates: Vec<f64>,
}

/// `L(0,T_i) = (B(0,T_i) / B(0,T_{i+1}) − 1) / δ_i`.
pub fn initial_libors(tenor: &TenorStructure, curve: &DiscountCurve) -> Result<InitialLibors> {
    let n = tenor.n_rates();
    if curve.bonds().len() != n + 1 {
        return Err(Error::Config(format!(
            "{} tenor dates need {} bond prices, got {}",
            n + 2,
            n + 1,
            curve.bonds().len()
        )));
    }
    let mut rates = Vec::with_capacity(n);
    for r in 0..n {
        let l = (curve.bond(r + 1) / curve.bond(r + 2) - 1.0) / tenor.accrual(r);
        if !(l > 0.0) {
            return Err(Error::Validation(format!(
                "initial rate L(0, T_{}) = {l} is not positive",
                r + 1
            )));
        }
        rates.push(l);
    }
    Ok(InitialLibors { rates })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    pub tenor: TenorStructure,
    pub curve: DiscountCurve,
    pub vols: VolatilityStructure,
    pub initial: InitialLibors,
}

impl Market {
    pub fn new(tenor: TenorStructure, curve: DiscountCurve, vols: VolatilityStructure) -> Result<Self> {
        if vols.n_rates() != tenor.n_rates() {
            return Err(Error::Config(format!(
                "{} rates on the tenor but {} volatility entries",
                tenor.n_rates(),
                vols.n_rates()
            )));
        }
        let initial = initial_libors(&tenor, &curve)?;
        Ok(Self {
            tenor,
            curve,
            vols,
            initial,
        })
    }

    pub fn n_rates(&self) -> usize {
        self.tenor.n_rates()
    }

    /// Same market with every loading set to zero.
    pub fn without_volatility(&self) -> Self {
        Self {
            vols: self.vols.scaled(0.0),
            ..self.clone()
        }
    }

    pub fn with_rates_scaled(&self, factor: f64) -> InitialLibors {
        InitialLibors {
            rates: self.initial.rates.iter().map(|l| l * factor).collect(),
        }
    }
}

pub const KLUGE_2002: &str = "kluge-2002";

const KLUGE_BONDS: [f64; 10] = [
    0.9833630, 0.9647388, 0.9435826, 0.9228903, 0.9006922, 0.8790279, 0.8568412, 0.8352144,
    0.8133497, 0.7920573,
];

const KLUGE_VOLS: [f64; 9] = [0.20, 0.19, 0.18, 0.17, 0.16, 0.15, 0.14, 0.13, 0.12];

/// Euro curve of 19 February 2002 on a semiannual tenor to 5y with constant
/// loadings 0.20 down to 0.12.
pub fn kluge_2002() -> Market {
    Market::new(
        TenorStructure::uniform(9, 0.5).expect("preset tenor"),
        DiscountCurve::new(KLUGE_BONDS.to_vec()).expect("preset curve"),
        VolatilityStructure::constant(&KLUGE_VOLS),
    )
    .expect("preset market")
}

pub fn preset(name: &str) -> Result<Market> {
    match name {
        KLUGE_2002 => Ok(kluge_2002()),
        other => Err(Error::Config(format!("unknown market preset {other:?}"))),
    }
}

/// Semiannual market with `n_rates` rates following the preset's pattern.
///
/// Bonds beyond the preset's last maturity continue at the last period's
/// forward (constant bond ratio). Loadings decay linearly from 0.20 to 0.12
/// across the tenor; if their total violates the moment condition for
/// `u_max` with margin `eps`, all loadings are scaled down together. The
/// applied factor (1.0 when untouched) is returned.
pub fn kluge_extended(n_rates: usize, u_max: f64, eps: f64) -> Result<(Market, f64)> {
    if n_rates == 0 {
        return Err(Error::Config("need at least one rate".into()));
    }
    let mut bonds: Vec<f64> = KLUGE_BONDS.iter().copied().take(n_rates + 1).collect();
    let ratio = KLUGE_BONDS[9] / KLUGE_BONDS[8];
    while bonds.len() < n_rates + 1 {
        let last = *bonds.last().unwrap();
        bonds.push(last * ratio);
    }
    let vols: Vec<f64> = if n_rates == 1 {
        vec![0.20]
    } else {
        (0..n_rates)
            .map(|r| 0.20 - 0.08 * r as f64 / (n_rates - 1) as f64)
            .collect()
    };
    let total: f64 = vols.iter().sum();
    let factor = if (1.0 + eps) * total > u_max {
        let f = u_max / ((1.0 + eps) * total) * (1.0 - 1e-9);
        log::info!("synthetic tenor N={n_rates}: loadings rescaled by {f:.6} to satisfy the moment condition");
        f
    } else {
        1.0
    };
    let vols = VolatilityStructure::constant(&vols).scaled(factor);
    let market = Market::new(
        TenorStructure::uniform(n_rates, 0.5)?,
        DiscountCurve::new(bonds)?,
        vols,
    )?;
    Ok((market, factor))
}

/// Volatility entry in a config document: a constant or per-interval
/// loadings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VolSpec {
    Constant(f64),
    Piecewise(Vec<f64>),
}

/// Market block of the experiment config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tenor_dates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bond_prices: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vols: Option<Vec<VolSpec>>,
}

/// Builds and validates a market from its config block. A preset may be
/// combined with an explicit `vols` override; otherwise all three explicit
/// fields are required.
pub fn load_market(cfg: &MarketConfig) -> Result<Market> {
    let base = match &cfg.preset {
        Some(name) => {
            if cfg.tenor_dates.is_some() || cfg.bond_prices.is_some() {
                return Err(Error::Config(
                    "market: `preset` cannot be combined with `tenor_dates` or `bond_prices`".into(),
                ));
            }
            Some(preset(name)?)
        }
        None => None,
    };
    let (tenor, curve) = match base {
        Some(ref m) => (m.tenor.clone(), m.curve.clone()),
        None => {
            let dates = cfg
                .tenor_dates
                .clone()
                .ok_or_else(|| Error::Config("market: missing `tenor_dates`".into()))?;
            let bonds = cfg
                .bond_prices
                .clone()
                .ok_or_else(|| Error::Config("market: missing `bond_prices`".into()))?;
            if bonds.len() + 1 != dates.len() {
                return Err(Error::Config(format!(
                    "market: {} tenor dates need {} bond prices, got {}",
                    dates.len(),
                    dates.len().saturating_sub(1),
                    bonds.len()
                )));
            }
            (TenorStructure::new(dates)?, DiscountCurve::new(bonds)?)
        }
    };
    let vols = match (&cfg.vols, base) {
        (Some(specs), _) => {
            if specs.len() != tenor.n_rates() {
                return Err(Error::Config(format!(
                    "market: {} rates on the tenor but {} vol entries",
                    tenor.n_rates(),
                    specs.len()
                )));
            }
            let rows = specs
                .iter()
                .enumerate()
                .map(|(r, s)| match s {
                    VolSpec::Constant(v) => vec![*v; r + 1],
                    VolSpec::Piecewise(v) => v.clone(),
                })
                .collect();
            VolatilityStructure::piecewise(rows)?
        }
        (None, Some(m)) => m.vols,
        (None, None) => return Err(Error::Config("market: missing `vols`".into())),
    };
    Market::new(tenor, curve, vols)
}
