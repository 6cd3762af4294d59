//! Confidence-interval machinery for the weighted least-squares decay
//! fit.
//!
//! With weights `w_i` and the decay-model Jacobian `J`, the half-width
//! of the decay-rate interval is `t_{M-3,1-alpha/2} * sqrt(H * s^2)`
//! where `H` is the decay-rate entry of `(J^T W J)^{-1}` and `s^2` the
//! weighted residual variance. Planning happens before any residuals
//! exist, so the planning objective drops `s^2` and the amplitude by
//! working with `H' = a^2 * H`, which no longer depends on `a`:
//! `h = t_{M-3,1-alpha/2} * sqrt(H')`.
//!
//! `H'` has a closed form obtained by block inversion of the 3x3 normal
//! matrix. That form is what production code evaluates — the objective
//! sits in the optimizer's innermost loop — while a generic
//! cofactor-inverse route is kept alongside as an independent oracle.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{RBConfig, VarianceParams};
use crate::stats::{t_quantile, TQuantileSpec};

/// Per-length fitting weights, together with a record of the model
/// inputs they were derived from (when they were model-derived).
#[derive(Debug, Clone)]
pub struct WeightVector {
    w: Vec<f64>,
    provenance: Option<WeightProvenance>,
}

/// The variance-model inputs a [`WeightVector`] was computed from.
#[derive(Debug, Clone)]
pub struct WeightProvenance {
    pub q: f64,
    pub beta: f64,
    pub p_hat: f64,
    pub dim: u32,
    pub n: Vec<u64>,
    pub k: Vec<u64>,
}

impl WeightVector {
    /// Wrap externally supplied weights. All must be positive.
    pub fn from_raw(w: Vec<f64>) -> Result<Self> {
        if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid(format!("weights must be positive, got {bad}")));
        }
        Ok(Self { w, provenance: None })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn provenance(&self) -> Option<&WeightProvenance> {
        self.provenance.as_ref()
    }
}

/// Model-based weights `w_i = 1 / var_avg_survival(m_i, n_i, k_i)`.
pub fn weights_from_model(cfg: &RBConfig, vp: &VarianceParams) -> Result<WeightVector> {
    let mut w = Vec::with_capacity(cfg.len());
    for ((&m, &n), &k) in cfg.m().iter().zip(cfg.n()).zip(cfg.k()) {
        let var = vp.var_avg_survival(m as f64, n as f64, k as f64);
        if !(var.is_finite() && var > 0.0) {
            return Err(Error::DegenerateVariance(format!(
                "model variance is {var} at m = {m}; p_hat = {} with beta = {} admits no \
                 finite weight",
                vp.p_hat(),
                vp.beta()
            )));
        }
        w.push(1.0 / var);
    }
    Ok(WeightVector {
        w,
        provenance: Some(WeightProvenance {
            q: vp.q(),
            beta: vp.beta(),
            p_hat: vp.p_hat(),
            dim: vp.dim(),
            n: cfg.n().to_vec(),
            k: cfg.k().to_vec(),
        }),
    })
}

/// Row of the decay-model Jacobian at length `m`:
/// `[a * m * p^(m-1), p^m, 1]` for the parameter order `(p, a, b)`.
pub fn jacobian_row(m: f64, p: f64, a: f64) -> [f64; 3] {
    [a * m * p.powf(m - 1.0), p.powf(m), 1.0]
}

/// Compensated (Kahan) accumulator. The `H'` sums mix terms spanning
/// hundreds of orders of magnitude once `p^m` gets small.
#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum
    }
}

fn check_inputs(m: &[f64], w: &[f64], p: f64) -> Result<()> {
    if m.len() != w.len() {
        return Err(Error::invalid(format!(
            "lengths and weights must agree, got {} and {}",
            m.len(),
            w.len()
        )));
    }
    if m.len() < 4 {
        return Err(Error::invalid(format!(
            "at least M = 4 lengths are required, got {}",
            m.len()
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "decay rate must lie in (0, 1) for the interval scale factor, got {p}"
        )));
    }
    if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::invalid(format!("weights must be positive, got {bad}")));
    }
    Ok(())
}

/// Closed-form `H'` via block inversion of the normal matrix.
///
/// Independent of the amplitude by construction. Terms whose `p^m`
/// underflows to zero simply stop contributing to the decay-sensitive
/// sums, which mirrors the true limit, so very long lengths are
/// accepted rather than rejected.
pub fn h_prime_explicit(m: &[f64], w: &[f64], p: f64) -> Result<f64> {
    check_inputs(m, w, p)?;

    let mut u = Kahan::default();
    let mut s_p = Kahan::default(); // sum w p^m
    let mut s_pp = Kahan::default(); // sum w p^2m
    let mut s_m = Kahan::default(); // sum w m p^(m-1)
    let mut s_mm = Kahan::default(); // sum w m^2 p^(2m-2)
    let mut s_pm = Kahan::default(); // sum w m p^(2m-1)
    for (&mi, &wi) in m.iter().zip(w) {
        let pm = p.powf(mi);
        let pm1 = p.powf(mi - 1.0);
        u.add(wi);
        s_p.add(wi * pm);
        s_pp.add(wi * pm * pm);
        s_m.add(wi * mi * pm1);
        s_mm.add(wi * mi * mi * pm1 * pm1);
        s_pm.add(wi * mi * pm * pm1);
    }
    let u = u.value();
    let s_p = s_p.value();
    let s_pp = s_pp.value();
    let s_m = s_m.value();
    let s_mm = s_mm.value();
    let s_pm = s_pm.value();

    let num = s_pp - s_p * s_p / u;
    let den = num * (s_mm - s_m * s_m / u) - {
        let cross = s_pm - s_p * s_m / u;
        cross * cross
    };
    if !(num.is_finite() && den.is_finite()) || num <= 0.0 || den < 1e-300 {
        return Err(Error::SingularDesign(format!(
            "interval scale factor is not defined for lengths {m:?} at p = {p} \
             (numerator {num}, denominator {den})"
        )));
    }
    Ok(num / den)
}

/// `H'` via the generic route: build the 3x3 normal matrix from
/// [`jacobian_row`], invert it by cofactor expansion, and rescale the
/// decay-rate entry by `a^2`.
///
/// The result does not depend on `a`; keeping `a` in the signature lets
/// tests verify that cancellation numerically. This path exists as an
/// independent cross-check of [`h_prime_explicit`].
pub fn h_prime_oracle(m: &[f64], w: &[f64], p: f64, a: f64) -> Result<f64> {
    check_inputs(m, w, p)?;
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::invalid(format!("amplitude must be positive, got {a}")));
    }

    let mut acc = [[Kahan::default(); 3]; 3];
    for (&mi, &wi) in m.iter().zip(w) {
        let row = jacobian_row(mi, p, a);
        for r in 0..3 {
            for c in 0..3 {
                acc[r][c].add(wi * row[r] * row[c]);
            }
        }
    }
    let mut g = [[0.0f64; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            g[r][c] = acc[r][c].value();
        }
    }
    let inv00 = invert3(&g).ok_or_else(|| {
        Error::SingularDesign(format!(
            "normal matrix is singular for lengths {m:?} at p = {p}"
        ))
    })?[0][0];
    if !(inv00.is_finite() && inv00 > 0.0) {
        return Err(Error::SingularDesign(format!(
            "normal-matrix inverse has nonpositive decay entry for lengths {m:?} at p = {p}"
        )));
    }
    Ok(a * a * inv00)
}

/// Cofactor inverse of a 3x3 matrix; `None` when the determinant
/// vanishes to working precision.
fn invert3(g: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c00 = g[1][1] * g[2][2] - g[1][2] * g[2][1];
    let c01 = g[1][2] * g[2][0] - g[1][0] * g[2][2];
    let c02 = g[1][0] * g[2][1] - g[1][1] * g[2][0];
    let det = g[0][0] * c00 + g[0][1] * c01 + g[0][2] * c02;
    if !det.is_finite() || det.abs() < 1e-300 {
        return None;
    }
    let c10 = g[0][2] * g[2][1] - g[0][1] * g[2][2];
    let c11 = g[0][0] * g[2][2] - g[0][2] * g[2][0];
    let c12 = g[0][1] * g[2][0] - g[0][0] * g[2][1];
    let c20 = g[0][1] * g[1][2] - g[0][2] * g[1][1];
    let c21 = g[0][2] * g[1][0] - g[0][0] * g[1][2];
    let c22 = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    Some([
        [c00 / det, c10 / det, c20 / det],
        [c01 / det, c11 / det, c21 / det],
        [c02 / det, c12 / det, c22 / det],
    ])
}

/// Predicted interval quality of a configuration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CIResult {
    /// Planning objective `t_factor * sqrt(h_prime)`.
    pub h_value: f64,
    /// Amplitude-free scale factor `H'`.
    pub h_prime: f64,
    /// Student-t quantile with `M - 3` degrees of freedom.
    pub t_factor: f64,
    /// Number of Clifford lengths.
    pub m_count: usize,
}

/// Planning objective `h` for a configuration: model weights, `H'` at
/// the prior decay rate, and the t factor for `M - 3` degrees of
/// freedom at significance `alpha`.
pub fn objective_h(
    cfg: &RBConfig,
    vp: &VarianceParams,
    alpha: f64,
    p_hat: f64,
) -> Result<CIResult> {
    let weights = weights_from_model(cfg, vp)?;
    let m: Vec<f64> = cfg.m().iter().map(|&v| v as f64).collect();
    let h_prime = h_prime_explicit(&m, weights.as_slice(), p_hat)?;
    let t_factor = t_quantile(TQuantileSpec::new((cfg.len() - 3) as u32, 1.0 - alpha)?);
    Ok(CIResult {
        h_value: t_factor * h_prime.sqrt(),
        h_prime,
        t_factor,
        m_count: cfg.len(),
    })
}

/// Realized (post-experiment) interval half-width
/// `t_{M-3,1-alpha/2} * sqrt(h_scale * s2)`.
pub fn ci_halfwidth(s2: f64, h_scale: f64, m_count: usize, alpha: f64) -> Result<f64> {
    if m_count < 4 {
        return Err(Error::invalid(format!(
            "at least M = 4 lengths are required for the interval, got {m_count}"
        )));
    }
    if !(s2 >= 0.0 && s2.is_finite()) {
        return Err(Error::invalid(format!(
            "residual variance must be nonnegative, got {s2}"
        )));
    }
    if !(h_scale > 0.0 && h_scale.is_finite()) {
        return Err(Error::invalid(format!(
            "interval scale factor must be positive, got {h_scale}"
        )));
    }
    let t = t_quantile(TQuantileSpec::new((m_count - 3) as u32, 1.0 - alpha)?);
    Ok(t * (h_scale * s2).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TimeParams;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;
    use rand::SeedableRng;

    fn paper_vp() -> VarianceParams {
        VarianceParams::new(0.97, 0.0025, 0.97, 4).unwrap()
    }

    fn linear_cfg() -> RBConfig {
        let m: Vec<u64> = (0..21).map(|x| 10 * x + 1).collect();
        RBConfig::with_identical(m, 5, 100).unwrap()
    }

    #[test]
    fn weights_match_variance_model() {
        let cfg = RBConfig::new(vec![1, 2, 3, 4], vec![1; 4], vec![100; 4]).unwrap();
        let w = weights_from_model(&cfg, &paper_vp()).unwrap();
        assert_relative_eq!(w.as_slice()[0], 3416.613_282_084_137, max_relative = 1e-12);

        // doubling n doubles every weight
        let cfg2 = RBConfig::new(vec![1, 2, 3, 4], vec![2; 4], vec![100; 4]).unwrap();
        let w2 = weights_from_model(&cfg2, &paper_vp()).unwrap();
        for (a, b) in w.as_slice().iter().zip(w2.as_slice()) {
            assert_relative_eq!(2.0 * a, *b, max_relative = 1e-12);
        }
        assert_eq!(w.provenance().unwrap().dim, 4);
    }

    #[test]
    fn weights_reject_degenerate_model() {
        // p_hat = 1 and beta = 0 leaves no variance at all
        let vp = VarianceParams::new(0.97, 0.0, 1.0, 4).unwrap();
        let cfg = RBConfig::new(vec![1, 2, 3, 4], vec![5; 4], vec![100; 4]).unwrap();
        let err = weights_from_model(&cfg, &vp).unwrap_err();
        assert!(matches!(err, Error::DegenerateVariance(_)), "{err}");
        assert!(err.to_string().contains("p_hat"), "{err}");
    }

    #[test]
    fn jacobian_rows() {
        assert_eq!(jacobian_row(1.0, 0.9, 0.7), [0.7, 0.9, 1.0]);
        let row = jacobian_row(2.0, 0.5, 1.0);
        assert_abs_diff_eq!(row[0], 1.0);
        assert_abs_diff_eq!(row[1], 0.25);
        assert_abs_diff_eq!(row[2], 1.0);
    }

    #[test]
    fn h_prime_frozen_regression_value() {
        // frozen from a high-precision generic-inverse evaluation
        let m = [1.0, 2.0, 3.0, 4.0];
        let w = [1.0; 4];
        let hp = h_prime_explicit(&m, &w, 0.97).unwrap();
        assert_relative_eq!(hp, 1181.121_511_043_119, max_relative = 1e-9);
    }

    /// Strictly increasing lengths in `[1, 512]`, anchored at a short
    /// first length and capped near six decay constants of `p`, the
    /// range a sane design actually samples. Longer tails carry no
    /// signal and push the normal matrix toward the singular regime
    /// that is reported as an error instead.
    pub(crate) fn random_lengths(rng: &mut impl Rng, count: usize, p: f64) -> Vec<f64> {
        let max_len = (6.0 / (1.0 - p))
            .min(512.0)
            .max(count as f64 + 12.0)
            .floor();
        let mut m = Vec::with_capacity(count);
        let mut last = rng.gen_range(1..=8) as f64;
        m.push(last);
        for i in 1..count {
            let remaining = (count - i) as f64;
            let cap = ((max_len - last) / remaining).max(1.0).floor();
            last += rng.gen_range(1..=cap as u64) as f64;
            m.push(last);
        }
        m
    }

    #[test]
    fn explicit_matches_oracle_on_random_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let mlen = rng.gen_range(4..=40);
            let p = rng.gen_range(0.8..0.999);
            let m = random_lengths(&mut rng, mlen, p);
            let w: Vec<f64> = (0..mlen).map(|_| rng.gen_range(1e-2..1e4)).collect();
            let a = rng.gen_range(0.1..1.0);
            let explicit = h_prime_explicit(&m, &w, p).unwrap();
            let oracle = h_prime_oracle(&m, &w, p, a).unwrap();
            assert_relative_eq!(explicit, oracle, max_relative = 1e-9);
        }
    }

    #[test]
    fn h_prime_is_independent_of_amplitude() {
        let m = [1.0, 11.0, 51.0, 101.0, 201.0];
        let w = [3000.0, 2500.0, 1800.0, 900.0, 400.0];
        let reference = h_prime_oracle(&m, &w, 0.97, 0.75).unwrap();
        for a in [0.1, 0.3, 0.5, 0.9, 1.0] {
            let v = h_prime_oracle(&m, &w, 0.97, a).unwrap();
            assert_relative_eq!(v, reference, max_relative = 1e-12);
        }
    }

    #[test]
    fn h_prime_scales_inversely_with_weights() {
        let m = [1.0, 5.0, 9.0, 20.0, 44.0];
        let w = [10.0, 20.0, 15.0, 8.0, 4.0];
        let base = h_prime_explicit(&m, &w, 0.95).unwrap();
        for c in [0.5, 2.0, 10.0] {
            let scaled: Vec<f64> = w.iter().map(|v| c * v).collect();
            let hp = h_prime_explicit(&m, &scaled, 0.95).unwrap();
            assert_relative_eq!(hp, base / c, max_relative = 1e-12);
        }
    }

    #[test]
    fn h_prime_invariant_under_joint_permutation() {
        let m = [1.0, 7.0, 19.0, 80.0, 200.0];
        let w = [5.0, 4.0, 3.0, 2.0, 1.0];
        let base = h_prime_explicit(&m, &w, 0.9).unwrap();
        let m_perm = [200.0, 1.0, 80.0, 7.0, 19.0];
        let w_perm = [1.0, 5.0, 2.0, 4.0, 3.0];
        let permuted = h_prime_explicit(&m_perm, &w_perm, 0.9).unwrap();
        assert_relative_eq!(base, permuted, max_relative = 1e-12);
    }

    #[test]
    fn h_prime_survives_underflowing_lengths() {
        // p^m underflows for the last length; the term degenerates to a
        // pure weight contribution instead of poisoning the sums
        let m = [1.0, 2.0, 3.0, 780_000.0];
        let w = [1.0, 1.0, 1.0, 1.0];
        let hp = h_prime_explicit(&m, &w, 0.8).unwrap();
        assert!(hp.is_finite() && hp > 0.0);
    }

    #[test]
    fn h_prime_rejects_degenerate_designs() {
        // every decay-sensitive sum underflows: nothing constrains p
        let m = [1e7, 2e7, 3e7, 4e7];
        let w = [1.0; 4];
        let err = h_prime_explicit(&m, &w, 0.8).unwrap_err();
        assert!(matches!(err, Error::SingularDesign(_)), "{err}");
    }

    #[test]
    fn objective_frozen_value_for_linear_configuration() {
        let res = objective_h(&linear_cfg(), &paper_vp(), 0.05, 0.97).unwrap();
        assert_relative_eq!(res.h_prime, 1.140_407_143_556_762e-6, max_relative = 1e-9);
        assert_relative_eq!(res.h_value, 2.243_571_433_669_329e-3, max_relative = 1e-9);
        assert_relative_eq!(res.t_factor, 2.100_922_040_241, max_relative = 1e-9);
        assert_eq!(res.m_count, 21);
        assert_relative_eq!(
            res.h_value,
            res.t_factor * res.h_prime.sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn objective_halves_h_prime_when_sequences_double() {
        let cfg = linear_cfg();
        let doubled = RBConfig::new(
            cfg.m().to_vec(),
            cfg.n().iter().map(|&n| 2 * n).collect(),
            cfg.k().to_vec(),
        )
        .unwrap();
        let base = objective_h(&cfg, &paper_vp(), 0.05, 0.97).unwrap();
        let big = objective_h(&doubled, &paper_vp(), 0.05, 0.97).unwrap();
        assert_relative_eq!(big.h_prime, base.h_prime / 2.0, max_relative = 1e-12);
        assert_relative_eq!(
            big.h_value,
            base.h_value / 2f64.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn objective_monotone_in_single_sequence_count() {
        let cfg = linear_cfg();
        let base = objective_h(&cfg, &paper_vp(), 0.05, 0.97).unwrap();
        for i in [0usize, 7, 20] {
            let mut n = cfg.n().to_vec();
            n[i] += 1;
            let bumped = RBConfig::new(cfg.m().to_vec(), n, cfg.k().to_vec()).unwrap();
            let res = objective_h(&bumped, &paper_vp(), 0.05, 0.97).unwrap();
            assert!(
                res.h_value <= base.h_value,
                "raising n[{i}] increased h: {} -> {}",
                base.h_value,
                res.h_value
            );
        }
    }

    #[test]
    fn halfwidth_examples() {
        assert_eq!(ci_halfwidth(0.0, 1.0, 21, 0.05).unwrap(), 0.0);
        assert_relative_eq!(
            ci_halfwidth(1.0, 1.0, 21, 0.05).unwrap(),
            2.100_922_040_241,
            max_relative = 1e-9
        );
        let one = ci_halfwidth(0.25, 2.0, 12, 0.05).unwrap();
        let four = ci_halfwidth(1.0, 2.0, 12, 0.05).unwrap();
        assert_relative_eq!(four, 2.0 * one, max_relative = 1e-12);
        assert!(ci_halfwidth(1.0, 1.0, 3, 0.05).is_err());
    }

    // time model and objective together: the Table I linear row stays
    // under a 10% budget overshoot, as the heuristic grid allows
    #[test]
    fn linear_configuration_time_is_near_budget() {
        let tp = TimeParams::from_micros(0.6, 250.0, 3.0).unwrap();
        let t = tp.exec_time(&linear_cfg());
        assert!(t <= 1.1 * 3.0 && t > 3.0, "t = {t}");
    }
}
