//! Statistical primitives: Student-t quantiles, weighted residual
//! statistics, and seeded samplers for the simulation harness.
//!
//! The t quantile is computed by inverting the regularized incomplete
//! beta function with bracketed bisection, so no lookup tables are
//! involved and any degrees of freedom can be requested.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution};

use crate::error::{Error, Result};

/// Two-sided Student-t quantile request.
///
/// `dof` is the degrees of freedom and `level` the two-sided confidence
/// level `1 - alpha`, so the quantile returned by [`t_quantile`] is the
/// `1 - alpha/2` percentile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TQuantileSpec {
    dof: u32,
    level: f64,
}

impl TQuantileSpec {
    pub fn new(dof: u32, level: f64) -> Result<Self> {
        if dof == 0 {
            return Err(Error::invalid(
                "degrees of freedom must be at least 1; the decay-rate interval needs M >= 4 Clifford lengths",
            ));
        }
        if !level.is_finite() || level <= 0.0 || level >= 1.0 {
            return Err(Error::invalid(format!(
                "confidence level must lie strictly inside (0, 1), got {level}"
            )));
        }
        Ok(Self { dof, level })
    }

    pub fn dof(&self) -> u32 {
        self.dof
    }

    pub fn level(&self) -> f64 {
        self.level
    }
}

/// Upper two-sided Student-t quantile: the value `t` with
/// `CDF(t) = 1 - (1 - level)/2`.
///
/// Bisection is run until the bracket is below `1e-10`, which keeps the
/// result accurate to well under `1e-8` in absolute terms.
pub fn t_quantile(spec: TQuantileSpec) -> f64 {
    let dof = f64::from(spec.dof);
    let target = 0.5 * (1.0 + spec.level);

    let mut hi = 1.0_f64;
    while t_cdf(hi, dof) < target && hi < 1e300 {
        hi *= 2.0;
    }
    let mut lo = if hi > 1.0 { hi * 0.5 } else { 0.0 };
    if t_cdf(lo, dof) > target {
        lo = 0.0;
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, dof) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// CDF of the Student-t distribution with `dof` degrees of freedom.
pub fn t_cdf(x: f64, dof: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    // I_r(dof/2, 1/2) with r = dof / (dof + x^2); 1 - r is formed from
    // x^2 directly so no precision is lost when r is close to one.
    let x2 = x * x;
    let denom = dof + x2;
    let r = dof / denom;
    let rc = x2 / denom;
    let tail = 0.5 * inc_beta_reg(0.5 * dof, 0.5, r, rc);
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Regularized incomplete beta function `I_x(a, b)`.
///
/// `xc` must equal `1 - x`; passing it explicitly lets callers compute
/// the complement without cancellation.
fn inc_beta_reg(a: f64, b: f64, x: f64, xc: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if xc <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * xc.ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cont_frac(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cont_frac(b, a, xc) / b
    }
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cont_frac(a: f64, b: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=400 {
        let m = f64::from(m);
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Natural log of the gamma function (Lanczos, g = 7).
fn ln_gamma(x: f64) -> f64 {
    const COF: [f64; 8] = [
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_93;
    for (i, c) in COF.iter().enumerate() {
        acc += c / (x + (i as f64) + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Weighted residual variance estimate `sum(w_i r_i^2) / (M - 3)`.
///
/// Three parameters are estimated by the decay fit, so `M - 3` degrees
/// of freedom remain; at least four observations are required.
pub fn weighted_s2(residuals: &[f64], weights: &[f64]) -> Result<f64> {
    let m = residuals.len();
    if weights.len() != m {
        return Err(Error::invalid(format!(
            "residuals and weights must have equal length, got {m} and {}",
            weights.len()
        )));
    }
    if m < 4 {
        return Err(Error::invalid(format!(
            "at least M = 4 observations are required for the residual variance, got {m}"
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::invalid(format!("weights must be positive, got {w}")));
    }
    let sum: f64 = residuals
        .iter()
        .zip(weights)
        .map(|(r, w)| w * r * r)
        .sum();
    Ok(sum / (m as f64 - 3.0))
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Reproducible random substream.
///
/// The ChaCha8 state is derived by hashing `(seed, stream_id)`, so the
/// same pair always reproduces the identical sample sequence and
/// distinct stream ids give independent streams. Streams can therefore
/// be handed to parallel workers without coordinating draw order.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut mix = seed;
        let mut state = splitmix64(&mut mix) ^ stream_id;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            seed,
            stream_id,
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of successes in `trials` Bernoulli draws with probability `prob`.
    pub fn sample_binomial(&mut self, trials: u64, prob: f64) -> Result<u64> {
        if !(0.0..=1.0).contains(&prob) || !prob.is_finite() {
            return Err(Error::invalid(format!(
                "binomial probability must lie in [0, 1], got {prob}"
            )));
        }
        if trials == 0 || prob == 0.0 {
            return Ok(0);
        }
        if prob == 1.0 {
            return Ok(trials);
        }
        let dist = Binomial::new(trials, prob)
            .map_err(|e| Error::invalid(format!("binomial parameters rejected: {e}")))?;
        Ok(dist.sample(&mut self.rng))
    }

    /// Draw a sequence mean in `[0, 1]` with the requested first two moments.
    ///
    /// The draw comes from the Beta distribution matched to `(mean,
    /// variance)`; its support is exactly the admissible range of a
    /// survival rate. A zero variance returns `mean` itself.
    pub fn sample_sequence_mean(&mut self, mean: f64, variance: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&mean) {
            return Err(Error::invalid(format!(
                "sequence mean must lie in [0, 1], got {mean}"
            )));
        }
        if variance < 0.0 || !variance.is_finite() {
            return Err(Error::invalid(format!(
                "sequence variance must be finite and nonnegative, got {variance}"
            )));
        }
        if variance == 0.0 {
            return Ok(mean);
        }
        let spread = mean * (1.0 - mean);
        if variance >= spread {
            return Err(Error::invalid(format!(
                "sequence variance {variance} is not below mu(1-mu) = {spread} for mu = {mean}; \
                 no distribution on [0, 1] has these moments"
            )));
        }
        let nu = spread / variance - 1.0;
        let dist = Beta::new(mean * nu, (1.0 - mean) * nu)
            .map_err(|e| Error::invalid(format!("beta parameters rejected: {e}")))?;
        Ok(dist.sample(&mut self.rng).clamp(0.0, 1.0))
    }
}
