//! The driving Lévy process `H`.
//!
//! `H` is a martingale with triplet `(0, c, F)`: an optional Brownian part
//! with coefficient `c` per unit time plus a compensated normal inverse
//! Gaussian jump part. The drift engine consumes the jump cumulant
//! `κ(u) = ∫ (e^{ux} − 1 − ux) F(dx)`; the simulator consumes increments.
//!
//! NIG increments over a step `dt` are drawn by subordination:
//!
//! ```text
//! Y ~ IG(mean = δ̄·dt/γ, shape = (δ̄·dt)²),   γ = √(α² − β²)
//! X = μ·dt + β·Y + √Y · N(0, 1)
//! ```
//!
//! The inverse Gaussian draw uses the Michael–Schucany–Haas transformation
//! with one acceptance uniform. Increments fed to the simulator are
//! centred (`X − E[X]`) so that `H` is a martingale for any `μ, β`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{TenorStructure, VolatilityStructure};
use crate::rng::{StepDraws, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NigParams {
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    pub delta_bar: f64,
    #[serde(default)]
    pub mu: f64,
}

impl NigParams {
    pub fn new(alpha: f64, beta: f64, delta_bar: f64, mu: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            delta_bar,
            mu,
        };
        p.validate()?;
        Ok(p)
    }

    /// Symmetric, mean-zero NIG with `α = δ̄ = 1.5`.
    pub fn kluge_2002() -> Self {
        Self {
            alpha: 1.5,
            beta: 0.0,
            delta_bar: 1.5,
            mu: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("NIG alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.delta_bar.is_finite() && self.delta_bar > 0.0) {
            return Err(Error::Config(format!(
                "NIG delta_bar must be > 0, got {}",
                self.delta_bar
            )));
        }
        if !(self.beta.is_finite() && self.beta.abs() < self.alpha) {
            return Err(Error::Config(format!(
                "NIG requires |beta| < alpha, got beta = {}, alpha = {}",
                self.beta, self.alpha
            )));
        }
        if !self.mu.is_finite() {
            return Err(Error::Config("NIG mu must be finite".into()));
        }
        Ok(())
    }

    fn gamma(&self) -> f64 {
        (self.alpha * self.alpha - self.beta * self.beta).sqrt()
    }

    /// `E[X_1] = μ + δ̄β/γ`.
    pub fn mean_rate(&self) -> f64 {
        self.mu + self.delta_bar * self.beta / self.gamma()
    }

    /// `Var[X_1] = δ̄α²/γ³`, which is `δ̄/α` at `β = 0`.
    pub fn variance_rate(&self) -> f64 {
        self.delta_bar * self.alpha * self.alpha / self.gamma().powi(3)
    }

    /// Largest `r` such that every `|u| ≤ r` lies in the cumulant domain.
    pub fn u_max(&self) -> f64 {
        self.alpha - self.beta.abs()
    }

    /// Inverse Gaussian clock for a step of length `dt`, as `(mean, shape)`.
    pub fn subordinator(&self, dt: f64) -> (f64, f64) {
        let scale = self.delta_bar * dt;
        (scale / self.gamma(), scale * scale)
    }

    /// One NIG(α, β, δ̄·dt, μ·dt) variate from a step's draws.
    pub fn sample_with(&self, dt: f64, draws: &StepDraws) -> f64 {
        let (mean, shape) = self.subordinator(dt);
        let y = inverse_gaussian(mean, shape, draws.normals[0], draws.uniform);
        self.mu * dt + self.beta * y + y.sqrt() * draws.normals[1]
    }
}

/// Michael–Schucany–Haas inverse Gaussian draw from a standard normal
/// `nu` and a uniform `u`.
///
/// The smaller root is `4m²s·y / (m·y + √(m²y² + 4msy))²` with `y = nu²`;
/// this form has no cancellation when `m·y ≫ s`.
pub fn inverse_gaussian(mean: f64, shape: f64, nu: f64, u: f64) -> f64 {
    let y = nu * nu;
    let my = mean * y;
    let root = (my * my + 4.0 * mean * shape * y).sqrt();
    let denom = my + root;
    let x = if denom > 0.0 {
        4.0 * mean * mean * shape * y / (denom * denom)
    } else {
        mean
    };
    if x <= 0.0 {
        // y underflowed to zero or x rounded to zero: the other root is +∞
        // and that branch has probability zero.
        return mean;
    }
    if u * (mean + x) <= mean {
        x
    } else {
        mean * mean / x
    }
}

/// Standard NIG cumulant `log E[e^{u X_1}] = μu + δ̄(γ − √(α² − (β+u)²))`.
///
/// Defined for `|β + u| ≤ α`; with `β = μ = 0` this is `δ̄α − δ̄√(α² − u²)`.
pub fn nig_cumulant(u: f64, p: &NigParams) -> Result<f64> {
    let shifted = p.beta + u;
    if !(shifted.abs() <= p.alpha) {
        return Err(Error::CumulantDomain {
            u,
            u_max: p.u_max(),
        });
    }
    let g = p.gamma();
    let inner = (p.alpha * p.alpha - shifted * shifted).max(0.0);
    Ok(p.mu * u + p.delta_bar * (g - inner.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverLaw {
    Nig(NigParams),
}

/// Description of `H`: Gaussian coefficient, jump law and the moment
/// margin `eps` used when validating volatilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyDriverSpec {
    pub diffusion_c: f64,
    pub law: DriverLaw,
    pub eps: f64,
}

impl LevyDriverSpec {
    pub fn nig(params: NigParams) -> Self {
        Self {
            diffusion_c: 0.0,
            law: DriverLaw::Nig(params),
            eps: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.law {
            DriverLaw::Nig(p) => p.validate()?,
        }
        if !(self.diffusion_c.is_finite() && self.diffusion_c >= 0.0) {
            return Err(Error::Config(format!(
                "diffusion_c must be >= 0, got {}",
                self.diffusion_c
            )));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }

    /// Gaussian coefficient `c_s`. The shipped laws are time-homogeneous.
    pub fn diffusion(&self, _s: f64) -> f64 {
        self.diffusion_c
    }

    pub fn u_max(&self) -> f64 {
        match &self.law {
            DriverLaw::Nig(p) => p.u_max(),
        }
    }

    /// Compensated jump cumulant `κ_s(u) = ∫ (e^{ux} − 1 − ux) F_s(dx)`.
    pub fn jump_cumulant(&self, _s: f64, u: f64) -> Result<f64> {
        match &self.law {
            DriverLaw::Nig(p) => Ok(nig_cumulant(u, p)? - u * p.mean_rate()),
        }
    }

    /// Full cumulant of `H_1`: `c u²/2 + κ(u)`.
    pub fn cumulant(&self, s: f64, u: f64) -> Result<f64> {
        Ok(0.5 * self.diffusion(s) * u * u + self.jump_cumulant(s, u)?)
    }

    /// Martingale increment of `H` over `dt`.
    pub fn increment(&self, s: f64, dt: f64, draws: &StepDraws) -> f64 {
        let jumps = match &self.law {
            DriverLaw::Nig(p) => p.sample_with(dt, draws) - p.mean_rate() * dt,
        };
        let c = self.diffusion(s);
        if c > 0.0 {
            jumps + (c * dt).sqrt() * draws.normals[2]
        } else {
            jumps
        }
    }
}

/// Increments for a run of consecutive paths at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementBlock {
    pub dt: f64,
    pub values: Vec<f64>,
    /// Key of the first path; path `j` of the block uses `path + j`.
    pub stream_key: StreamKey,
}

/// Raw NIG(α, β, δ̄·dt, μ·dt) increments, one per path, keyed by
/// `(seed, first path, step)`.
pub fn sample_increments(
    p: &NigParams,
    dt: f64,
    n_paths: usize,
    stream_key: StreamKey,
) -> Result<IncrementBlock> {
    p.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dt must be > 0, got {dt}")));
    }
    if n_paths == 0 {
        return Err(Error::Config("n_paths must be >= 1".into()));
    }
    let values = (0..n_paths as u64)
        .map(|j| {
            let key = StreamKey::new(stream_key.seed, stream_key.path + j, stream_key.step);
            p.sample_with(dt, &key.rng().step_draws())
        })
        .collect();
    Ok(IncrementBlock {
        dt,
        values,
        stream_key,
    })
}

/// Outcome of the moment-condition check on the volatility loadings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriverValidation {
    /// `max_s Σ_i |λ(s, T_i)|` over alive rates.
    pub m: f64,
    pub u_max: f64,
    pub eps: f64,
    /// `u_max − (1 + eps)·M`; nonnegative on success.
    pub margin: f64,
}

/// Checks `Σ_i |λ(s, T_i)| ≤ M` on every tenor interval and
/// `(1 + eps)·M ≤ u_max`, which keeps every cumulant argument the drift
/// can request inside the analyticity strip.
pub fn validate_driver(
    spec: &LevyDriverSpec,
    tenor: &TenorStructure,
    vols: &VolatilityStructure,
    eps: f64,
) -> Result<DriverValidation> {
    spec.validate()?;
    let u_max = spec.u_max();
    let mut m: f64 = 0.0;
    let mut worst = (0usize, 0.0f64);
    for interval in 0..vols.n_rates() {
        let total: f64 = (interval..vols.n_rates())
            .map(|r| vols.at_interval(r, interval).abs())
            .sum();
        if total > m {
            m = total;
            worst = (interval, total);
        }
    }
    let margin = u_max - (1.0 + eps) * m;
    if margin < 0.0 {
        let (interval, total) = worst;
        let offenders: Vec<String> = (interval..vols.n_rates())
            .filter(|&r| vols.at_interval(r, interval).abs() * (1.0 + eps) > u_max)
            .map(|r| format!("rate {} (|λ| = {})", r + 1, vols.at_interval(r, interval).abs()))
            .collect();
        return Err(Error::Validation(format!(
            "moment condition violated on [{}, {}): Σ|λ| = {total}, (1+eps)·M = {} > u_max = {u_max}{}",
            tenor.dates()[interval],
            tenor.dates()[interval + 1],
            (1.0 + eps) * m,
            if offenders.is_empty() {
                String::new()
            } else {
                format!("; offending: {}", offenders.join(", "))
            }
        )));
    }
    Ok(DriverValidation { m, u_max, eps, margin })
}
