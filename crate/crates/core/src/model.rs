//! Decay, survival-rate variance, and execution-time models.
//!
//! All times are kept in seconds internally; the file formats in
//! [`crate::io`] accept microseconds for the per-Clifford and per-shot
//! constants because hardware specifications are usually quoted that
//! way. Sequence and shot counts are plain `f64` in the model functions
//! so the same code serves both concrete integer configurations and the
//! continuous relaxation used by the optimizer; integrality is enforced
//! only when an [`RBConfig`] is constructed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A concrete RB sampling configuration: Clifford lengths `m`, sequence
/// counts `n`, and shot counts `k`, all of equal length `M >= 4` with
/// `m` strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct RBConfig {
    m: Vec<u64>,
    n: Vec<u64>,
    k: Vec<u64>,
}

#[derive(Deserialize)]
struct RawConfig {
    m: Vec<u64>,
    n: Vec<u64>,
    k: Vec<u64>,
}

impl TryFrom<RawConfig> for RBConfig {
    type Error = Error;

    fn try_from(raw: RawConfig) -> Result<Self> {
        RBConfig::new(raw.m, raw.n, raw.k)
    }
}

impl RBConfig {
    pub fn new(m: Vec<u64>, n: Vec<u64>, k: Vec<u64>) -> Result<Self> {
        if m.len() != n.len() || m.len() != k.len() {
            return Err(Error::invalid(format!(
                "m, n, k must share one length, got |m| = {}, |n| = {}, |k| = {}",
                m.len(),
                n.len(),
                k.len()
            )));
        }
        if m.len() < 4 {
            return Err(Error::invalid(format!(
                "at least M = 4 Clifford lengths are required, got {}",
                m.len()
            )));
        }
        if m[0] < 1 {
            return Err(Error::invalid("m[0] must be at least 1"));
        }
        for i in 1..m.len() {
            if m[i] < m[i - 1] + 1 {
                return Err(Error::invalid(format!(
                    "m must be strictly increasing: m[{i}] = {} does not exceed m[{}] = {}",
                    m[i],
                    i - 1,
                    m[i - 1]
                )));
            }
        }
        if let Some(i) = n.iter().position(|&v| v == 0) {
            return Err(Error::invalid(format!("n[{i}] must be at least 1")));
        }
        if let Some(i) = k.iter().position(|&v| v == 0) {
            return Err(Error::invalid(format!("k[{i}] must be at least 1")));
        }
        Ok(Self { m, n, k })
    }

    /// Configuration with one common sequence count and shot count.
    pub fn with_identical(m: Vec<u64>, n: u64, k: u64) -> Result<Self> {
        let len = m.len();
        Self::new(m, vec![n; len], vec![k; len])
    }

    /// Number of Clifford lengths, usually written `M`.
    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn m(&self) -> &[u64] {
        &self.m
    }

    pub fn n(&self) -> &[u64] {
        &self.n
    }

    pub fn k(&self) -> &[u64] {
        &self.k
    }

    /// Total number of sequences, `sum(n)`.
    pub fn total_sequences(&self) -> u64 {
        self.n.iter().sum()
    }
}

/// Parameters of the decay model `f(m) = a * p^m + b`.
///
/// `p` may equal one so that a decay-free truth can be simulated; every
/// estimator still reports strictly interior values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDecay")]
pub struct DecayParams {
    p: f64,
    a: f64,
    b: f64,
}

#[derive(Deserialize)]
struct RawDecay {
    p: f64,
    a: f64,
    b: f64,
}

impl TryFrom<RawDecay> for DecayParams {
    type Error = Error;

    fn try_from(raw: RawDecay) -> Result<Self> {
        DecayParams::new(raw.p, raw.a, raw.b)
    }
}

impl DecayParams {
    pub fn new(p: f64, a: f64, b: f64) -> Result<Self> {
        if !p.is_finite() || p <= 0.0 || p > 1.0 {
            return Err(Error::invalid(format!(
                "decay rate p must lie in (0, 1], got {p}"
            )));
        }
        if !a.is_finite() || a <= 0.0 || a > 1.0 {
            return Err(Error::invalid(format!(
                "amplitude a must lie in (0, 1], got {a}"
            )));
        }
        if !b.is_finite() || b < 0.0 {
            return Err(Error::invalid(format!("offset b must be nonnegative, got {b}")));
        }
        if a + b > 1.0 + 1e-12 {
            return Err(Error::invalid(format!(
                "a + b must not exceed 1, got {}",
                a + b
            )));
        }
        Ok(Self { p, a, b })
    }

    /// Constructor for estimator outputs.
    ///
    /// A least-squares estimate from noisy data may sit slightly
    /// outside the physical simplex (`a + b` a hair above one, or `b`
    /// a hair below zero), so only identifiability is enforced here:
    /// `p` strictly inside `(0, 1)` and a positive amplitude.
    pub fn estimate(p: f64, a: f64, b: f64) -> Result<Self> {
        if !p.is_finite() || p <= 0.0 || p >= 1.0 {
            return Err(Error::invalid(format!(
                "estimated decay rate must lie strictly inside (0, 1), got {p}"
            )));
        }
        if !a.is_finite() || a <= 0.0 {
            return Err(Error::invalid(format!(
                "estimated amplitude must be positive, got {a}"
            )));
        }
        if !b.is_finite() {
            return Err(Error::invalid(format!("estimated offset must be finite, got {b}")));
        }
        Ok(Self { p, a, b })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Expected survival rate after `m` Cliffords, `a * p^m + b`.
    pub fn survival(&self, m: f64) -> f64 {
        debug_assert!(m >= 0.0);
        self.a * self.p.powf(m) + self.b
    }
}

/// Average gate fidelity implied by a decay rate on a `dim`-dimensional
/// system: `p + (1 - p)/dim`.
pub fn avg_gate_fidelity(p: f64, dim: u32) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p));
    debug_assert!(dim >= 2);
    p + (1.0 - p) / f64::from(dim)
}

/// Parameters of the survival-rate variance model.
///
/// The per-sequence scatter is `beta * q^m * (1 - q^m)` and the shot
/// noise of one sequence is `mu(1-mu)/k` with
/// `mu = (1 - 1/D) * p_hat^m + 1/D`, where `p_hat` is a prior estimate
/// of the decay rate and `D` the Hilbert-space dimension. `q` is
/// expected to sit close to the decay rate itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVariance")]
pub struct VarianceParams {
    q: f64,
    beta: f64,
    p_hat: f64,
    dim: u32,
}

#[derive(Deserialize)]
struct RawVariance {
    q: f64,
    beta: f64,
    p_hat: f64,
    dim: u32,
}

impl TryFrom<RawVariance> for VarianceParams {
    type Error = Error;

    fn try_from(raw: RawVariance) -> Result<Self> {
        VarianceParams::new(raw.q, raw.beta, raw.p_hat, raw.dim)
    }
}

impl VarianceParams {
    pub fn new(q: f64, beta: f64, p_hat: f64, dim: u32) -> Result<Self> {
        if !q.is_finite() || q <= 0.0 || q >= 1.0 {
            return Err(Error::invalid(format!(
                "variance decay base q must lie in (0, 1), got {q}"
            )));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::invalid(format!(
                "variance amplitude beta must be nonnegative, got {beta}"
            )));
        }
        if !p_hat.is_finite() || p_hat <= 0.0 || p_hat > 1.0 {
            return Err(Error::invalid(format!(
                "prior decay rate p_hat must lie in (0, 1], got {p_hat}"
            )));
        }
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::invalid(format!(
                "dimension must be a power of two of at least 2, got {dim}"
            )));
        }
        Ok(Self { q, beta, p_hat, dim })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn p_hat(&self) -> f64 {
        self.p_hat
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    /// Same parameters with the prior decay rate replaced.
    pub fn with_p_hat(&self, p_hat: f64) -> Result<Self> {
        Self::new(self.q, self.beta, p_hat, self.dim)
    }

    /// Prior mean survival rate `(1 - 1/D) p_hat^m + 1/D`.
    pub fn mu(&self, m: f64) -> f64 {
        let inv_d = 1.0 / f64::from(self.dim);
        (1.0 - inv_d) * self.p_hat.powf(m) + inv_d
    }

    /// Sequence-sampling variance `beta * q^m * (1 - q^m)`.
    pub fn var_seq(&self, m: f64) -> f64 {
        let qm = self.q.powf(m);
        self.beta * qm * (1.0 - qm)
    }

    /// Shot-sampling variance `mu(1 - mu)/k` at the prior mean.
    pub fn var_shot(&self, m: f64, k: f64) -> f64 {
        debug_assert!(k > 0.0);
        let mu = self.mu(m);
        mu * (1.0 - mu) / k
    }

    /// Variance of the average survival rate over `n` sequences of `k`
    /// shots each: `(var_seq + var_shot) / n`.
    pub fn var_avg_survival(&self, m: f64, n: f64, k: f64) -> f64 {
        debug_assert!(n > 0.0);
        (self.var_seq(m) + self.var_shot(m, k)) / n
    }
}

/// Execution-time model parameters, all in seconds.
///
/// One sequence of length `m` run for `k` shots is charged
/// `k * (c1 * m + c0)`: `c1` is the average single-Clifford time and
/// `c0` collects the per-shot constants (measurement plus reset
/// interval). `budget` is the total time allowed for an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTime")]
pub struct TimeParams {
    c1: f64,
    c0: f64,
    budget: f64,
}

#[derive(Deserialize)]
struct RawTime {
    c1: f64,
    c0: f64,
    budget: f64,
}

impl TryFrom<RawTime> for TimeParams {
    type Error = Error;

    fn try_from(raw: RawTime) -> Result<Self> {
        TimeParams::new(raw.c1, raw.c0, raw.budget)
    }
}

impl TimeParams {
    pub fn new(c1: f64, c0: f64, budget: f64) -> Result<Self> {
        if !c1.is_finite() || c1 <= 0.0 {
            return Err(Error::invalid(format!(
                "per-Clifford time c1 must be positive, got {c1}"
            )));
        }
        if !c0.is_finite() || c0 < 0.0 {
            return Err(Error::invalid(format!(
                "per-shot constant c0 must be nonnegative, got {c0}"
            )));
        }
        if !budget.is_finite() || budget <= 0.0 {
            return Err(Error::invalid(format!(
                "time budget must be positive, got {budget}"
            )));
        }
        Ok(Self { c1, c0, budget })
    }

    /// Convenience constructor with `c1` and `c0` in microseconds.
    pub fn from_micros(c1_us: f64, c0_us: f64, budget_s: f64) -> Result<Self> {
        Self::new(c1_us * 1e-6, c0_us * 1e-6, budget_s)
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Predicted execution time of a concrete configuration.
    pub fn exec_time(&self, cfg: &RBConfig) -> f64 {
        cfg.m()
            .iter()
            .zip(cfg.n())
            .zip(cfg.k())
            .map(|((&m, &n), &k)| n as f64 * k as f64 * (self.c1 * m as f64 + self.c0))
            .sum()
    }

    /// Execution time for (possibly fractional) length, sequence, and
    /// shot vectors, used inside the continuous relaxation.
    pub fn exec_time_parts(&self, m: &[f64], n: &[f64], k: &[f64]) -> f64 {
        debug_assert!(m.len() == n.len() && m.len() == k.len());
        m.iter()
            .zip(n)
            .zip(k)
            .map(|((&m, &n), &k)| n * k * (self.c1 * m + self.c0))
            .sum()
    }

    /// General variant charging an extra per-sequence loading time
    /// `c_l`: `sum(n_i * (c_l + k_i * (c1 * m_i + c0)))`. The default
    /// model is the `c_l = 0` special case, which assumes loading is
    /// pipelined away.
    pub fn exec_time_with_loading(&self, cfg: &RBConfig, c_l: f64) -> f64 {
        cfg.m()
            .iter()
            .zip(cfg.n())
            .zip(cfg.k())
            .map(|((&m, &n), &k)| {
                n as f64 * (c_l + k as f64 * (self.c1 * m as f64 + self.c0))
            })
            .sum()
    }
}
