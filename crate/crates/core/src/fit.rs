//! Weighted nonlinear least-squares estimation.
//!
//! Two fits live here: the decay fit `y ~ a * p^m + b` against average
//! survival rates, and the variance-model fit
//! `v ~ beta * q^m (1 - q^m) + mu(m)(1 - mu(m))/k` against per-length
//! sample variances. Both are three- or two-parameter problems solved
//! by damped Gauss-Newton on the normal equations with an analytic
//! Jacobian; bounded parameters are handled through smooth
//! reparameterizations (logit for `p` and `q`, a shifted log for
//! `beta`) so no constrained machinery is needed.

use serde::Serialize;

use crate::ci::{ci_halfwidth, h_prime_explicit, jacobian_row, weights_from_model, WeightVector};
use crate::error::{Error, Result};
use crate::model::{DecayParams, RBConfig, VarianceParams};
use crate::stats::weighted_s2;

const MAX_ITERATIONS: usize = 1000;
const STEP_TOL: f64 = 1e-12;
const OBJ_TOL: f64 = 1e-14;

/// Average survival rates observed at distinct Clifford lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalData {
    rows: Vec<SurvivalRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalRow {
    pub m: u64,
    pub y: f64,
    pub n: u64,
    pub k: u64,
}

impl SurvivalData {
    pub fn new(mut rows: Vec<SurvivalRow>) -> Result<Self> {
        rows.sort_by_key(|r| r.m);
        if rows.len() < 4 {
            return Err(Error::invalid(format!(
                "at least 4 distinct Clifford lengths are required, got {}",
                rows.len()
            )));
        }
        for pair in rows.windows(2) {
            if pair[0].m == pair[1].m {
                return Err(Error::invalid(format!(
                    "Clifford lengths must be distinct, m = {} appears twice",
                    pair[0].m
                )));
            }
        }
        for row in &rows {
            if row.m < 1 {
                return Err(Error::invalid("Clifford lengths must be at least 1"));
            }
            if !(0.0..=1.0).contains(&row.y) || !row.y.is_finite() {
                return Err(Error::invalid(format!(
                    "survival rate must lie in [0, 1], got {} at m = {}",
                    row.y, row.m
                )));
            }
            if row.n == 0 || row.k == 0 {
                return Err(Error::invalid(format!(
                    "sequence and shot counts must be at least 1 at m = {}",
                    row.m
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[SurvivalRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The sampling configuration behind the data.
    pub fn config(&self) -> Result<RBConfig> {
        RBConfig::new(
            self.rows.iter().map(|r| r.m).collect(),
            self.rows.iter().map(|r| r.n).collect(),
            self.rows.iter().map(|r| r.k).collect(),
        )
    }
}

/// Outcome of a decay fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub params: DecayParams,
    /// Weighted residual variance with `M - 3` degrees of freedom.
    pub s2: f64,
    /// Interval scale factor `H` evaluated at the estimate.
    pub h_at_fit: f64,
    /// Half-width of the two-sided interval at the requested level.
    pub ci_halfwidth: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if !det.is_finite() || det.abs() < 1e-300 {
        return None;
    }
    let mut x = [0.0; 3];
    for col in 0..3 {
        let mut rep = *a;
        for row in 0..3 {
            rep[row][col] = b[row];
        }
        let det_col = rep[0][0] * (rep[1][1] * rep[2][2] - rep[1][2] * rep[2][1])
            - rep[0][1] * (rep[1][0] * rep[2][2] - rep[1][2] * rep[2][0])
            + rep[0][2] * (rep[1][0] * rep[2][1] - rep[1][1] * rep[2][0]);
        x[col] = det_col / det;
    }
    Some(x)
}

fn solve2(a: &[[f64; 2]; 2], b: &[f64; 2]) -> Option<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !det.is_finite() || det.abs() < 1e-300 {
        return None;
    }
    Some([
        (b[0] * a[1][1] - b[1] * a[0][1]) / det,
        (b[1] * a[0][0] - b[0] * a[1][0]) / det,
    ])
}

/// Starting point for the decay fit: offset at the depolarized floor
/// `1/D`, amplitude from the shortest length, and the rate from a
/// weighted log-linear regression of `y - b0` on `m`.
fn initial_guess(data: &SurvivalData, w: &[f64], dim: u32) -> (f64, f64, f64) {
    let b0 = 1.0 / f64::from(dim);
    let a0 = (data.rows[0].y - b0).clamp(0.05, 1.0);
    let mut sw = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (row, &wi) in data.rows.iter().zip(w) {
        let x = row.m as f64;
        let z = (row.y - b0).max(1e-6).ln();
        sw += wi;
        sx += wi * x;
        sy += wi * z;
        sxx += wi * x * x;
        sxy += wi * x * z;
    }
    let denom = sw * sxx - sx * sx;
    let slope = if denom.abs() > 1e-300 {
        (sw * sxy - sx * sy) / denom
    } else {
        -0.03
    };
    let p0 = slope.exp().clamp(0.5, 0.9999);
    (p0, a0, b0)
}

struct GaussNewton<'a> {
    m: Vec<f64>,
    y: Vec<f64>,
    w: &'a [f64],
}

impl GaussNewton<'_> {
    fn ssr(&self, p: f64, a: f64, b: f64) -> f64 {
        self.m
            .iter()
            .zip(&self.y)
            .zip(self.w)
            .map(|((&m, &y), &w)| {
                let r = y - (a * p.powf(m) + b);
                w * r * r
            })
            .sum()
    }

    /// One damped Gauss-Newton descent from `(p0, a0, b0)`, with `p`
    /// driven through a logit so it stays inside `(0, 1)`.
    fn run(&self, p0: f64, a0: f64, b0: f64) -> (f64, f64, f64, bool, usize) {
        let mut u = logit(p0.clamp(1e-9, 1.0 - 1e-9));
        let mut a = a0;
        let mut b = b0;
        let mut ssr = self.ssr(sigmoid(u), a, b);
        let mut lambda = 1e-3;
        let mut converged = false;
        let mut iterations = 0;

        for it in 0..MAX_ITERATIONS {
            iterations = it + 1;
            let p = sigmoid(u);
            let dp_du = p * (1.0 - p);

            let mut jtj = [[0.0f64; 3]; 3];
            let mut jtr = [0.0f64; 3];
            for ((&m, &y), &w) in self.m.iter().zip(&self.y).zip(self.w) {
                let row = jacobian_row(m, p, a);
                let g = [row[0] * dp_du, row[1], row[2]];
                let r = y - (a * p.powf(m) + b);
                for i in 0..3 {
                    jtr[i] += w * g[i] * r;
                    for j in 0..3 {
                        jtj[i][j] += w * g[i] * g[j];
                    }
                }
            }

            let mut accepted = false;
            for _ in 0..40 {
                let mut damped = jtj;
                for i in 0..3 {
                    damped[i][i] += lambda * jtj[i][i].max(1e-300);
                }
                let Some(step) = solve3(&damped, &jtr) else {
                    lambda *= 10.0;
                    continue;
                };
                let u_try = u + step[0];
                let a_try = a + step[1];
                let b_try = b + step[2];
                let ssr_try = self.ssr(sigmoid(u_try), a_try, b_try);
                if ssr_try.is_finite() && ssr_try <= ssr {
                    let step_norm = step.iter().fold(0.0f64, |acc, s| acc.max(s.abs()));
                    let rel_drop = (ssr - ssr_try) / ssr.max(1e-300);
                    u = u_try;
                    a = a_try;
                    b = b_try;
                    ssr = ssr_try;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if step_norm < STEP_TOL || rel_drop < OBJ_TOL {
                        converged = true;
                    }
                    break;
                }
                lambda *= 10.0;
            }
            if converged {
                break;
            }
            if !accepted {
                // no downhill step exists at working precision
                converged = true;
                break;
            }
        }
        (sigmoid(u), a, b, converged, iterations)
    }
}

/// Weighted least-squares decay fit with explicitly supplied weights.
///
/// Uniform weights give the ordinary least-squares estimator.
pub fn wls_fit_with_weights(
    data: &SurvivalData,
    weights: &WeightVector,
    dim: u32,
    alpha: f64,
) -> Result<FitResult> {
    let w = weights.as_slice();
    if w.len() != data.len() {
        return Err(Error::invalid(format!(
            "expected {} weights, got {}",
            data.len(),
            w.len()
        )));
    }
    let gn = GaussNewton {
        m: data.rows.iter().map(|r| r.m as f64).collect(),
        y: data.rows.iter().map(|r| r.y).collect(),
        w,
    };
    let (p0, a0, b0) = initial_guess(data, w, dim);
    let (p, a, b, converged, iterations) = gn.run(p0, a0, b0);

    if !(1e-12..=1.0 - 1e-12).contains(&p) {
        return Err(Error::FitFailed(format!(
            "decay-rate estimate ran into the (0, 1) boundary at p = {p}; \
             the data do not identify a decay"
        )));
    }
    let params = DecayParams::estimate(p, a, b)
        .map_err(|e| Error::FitFailed(format!("fit left the admissible region: {e}")))?;

    let residuals: Vec<f64> = gn
        .m
        .iter()
        .zip(&gn.y)
        .map(|(&m, &y)| y - params.survival(m))
        .collect();
    let s2 = weighted_s2(&residuals, w)?;
    let h_prime = h_prime_explicit(&gn.m, w, params.p())?;
    let h_at_fit = h_prime / (params.a() * params.a());
    let ci = ci_halfwidth(s2, h_at_fit, data.len(), alpha)?;
    Ok(FitResult {
        params,
        s2,
        h_at_fit,
        ci_halfwidth: ci,
        converged,
        iterations,
    })
}

/// Weighted least-squares decay fit with model-based weights
/// `w_i = 1 / var_avg_survival(m_i, n_i, k_i)`.
pub fn wls_fit(data: &SurvivalData, vp: &VarianceParams, alpha: f64) -> Result<FitResult> {
    let weights = weights_from_model(&data.config()?, vp)?;
    wls_fit_with_weights(data, &weights, vp.dim(), alpha)
}

/// Iteratively reweighted fit: after each round the fitted decay rate
/// replaces the prior inside the weight model and the fit is repeated,
/// until the rate moves by less than `1e-10` or `max_rounds` is
/// reached. Round one is exactly [`wls_fit`].
pub fn irls_fit(
    data: &SurvivalData,
    vp: &VarianceParams,
    alpha: f64,
    max_rounds: usize,
) -> Result<FitResult> {
    if max_rounds == 0 {
        return Err(Error::invalid("at least one reweighting round is required"));
    }
    let mut current = *vp;
    let mut result = wls_fit(data, &current, alpha)?;
    for _ in 1..max_rounds {
        let previous = result.params.p();
        current = current.with_p_hat(previous)?;
        result = wls_fit(data, &current, alpha)?;
        if (result.params.p() - previous).abs() < 1e-10 {
            break;
        }
    }
    Ok(result)
}

/// One per-length sample of the survival-rate variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceSample {
    pub m: u64,
    pub var: f64,
    pub k: u64,
}

/// Fitted variance-model parameters.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VarianceFit {
    pub q: f64,
    pub beta: f64,
    /// Set when the data contain no sequence scatter at all, in which
    /// case `q` is arbitrary.
    pub degenerate: bool,
}

const BETA_SCALE: f64 = 1e4;

/// Least-squares fit of `beta * q^m (1 - q^m) + mu(m)(1 - mu(m))/k` to
/// per-length sample variances over `(q, beta)`, with the shot term
/// fixed by the prior decay rate and dimension.
pub fn fit_variance_model(
    samples: &[VarianceSample],
    dim: u32,
    p_hat: f64,
) -> Result<VarianceFit> {
    if samples.len() < 3 {
        return Err(Error::invalid(format!(
            "at least 3 variance samples are required, got {}",
            samples.len()
        )));
    }
    if let Some(s) = samples.iter().find(|s| !(s.var >= 0.0) || s.m < 1 || s.k < 1) {
        return Err(Error::invalid(format!(
            "variance samples need m >= 1, k >= 1 and var >= 0; offending row has m = {}, \
             var = {}, k = {}",
            s.m, s.var, s.k
        )));
    }
    let vp_shape = VarianceParams::new(0.5, 0.0, p_hat, dim)?;
    let shot: Vec<f64> = samples
        .iter()
        .map(|s| vp_shape.var_shot(s.m as f64, s.k as f64))
        .collect();

    if samples.iter().all(|s| s.var == 0.0) {
        return Ok(VarianceFit {
            q: 0.5,
            beta: 0.0,
            degenerate: true,
        });
    }

    // excess variance above the shot floor is what beta*q^m(1-q^m) explains
    let excess_max = samples
        .iter()
        .zip(&shot)
        .map(|(s, &sh)| s.var - sh)
        .fold(0.0f64, f64::max);
    let beta0 = (4.0 * excess_max).max(1e-8);
    let mut uq = logit(p_hat.clamp(0.05, 0.999_999));
    let mut z = (beta0 * BETA_SCALE).ln_1p();

    let model = |q: f64, beta: f64, m: f64, shot_term: f64| {
        let qm = q.powf(m);
        beta * qm * (1.0 - qm) + shot_term
    };
    let ssr_of = |uq: f64, z: f64| -> f64 {
        let q = sigmoid(uq);
        let beta = z.exp_m1() / BETA_SCALE;
        samples
            .iter()
            .zip(&shot)
            .map(|(s, &sh)| {
                let r = s.var - model(q, beta, s.m as f64, sh);
                r * r
            })
            .sum()
    };

    let mut ssr = ssr_of(uq, z);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        let q = sigmoid(uq);
        let beta = z.exp_m1() / BETA_SCALE;
        let dq_du = q * (1.0 - q);
        let dbeta_dz = z.exp() / BETA_SCALE;

        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for (s, &sh) in samples.iter().zip(&shot) {
            let m = s.m as f64;
            let qm = q.powf(m);
            let d_q = beta * m * q.powf(m - 1.0) * (1.0 - 2.0 * qm) * dq_du;
            let d_beta = qm * (1.0 - qm) * dbeta_dz;
            let r = s.var - model(q, beta, m, sh);
            let g = [d_q, d_beta];
            for i in 0..2 {
                jtr[i] += g[i] * r;
                for j in 0..2 {
                    jtj[i][j] += g[i] * g[j];
                }
            }
        }

        let mut accepted = false;
        let mut done = false;
        for _ in 0..40 {
            let mut damped = jtj;
            for i in 0..2 {
                damped[i][i] += lambda * jtj[i][i].max(1e-300);
            }
            let Some(step) = solve2(&damped, &jtr) else {
                lambda *= 10.0;
                continue;
            };
            let uq_try = uq + step[0];
            let z_try = (z + step[1]).max(0.0);
            let ssr_try = ssr_of(uq_try, z_try);
            if ssr_try.is_finite() && ssr_try <= ssr {
                let step_norm = (uq_try - uq).abs().max((z_try - z).abs());
                let rel_drop = (ssr - ssr_try) / ssr.max(1e-300);
                uq = uq_try;
                z = z_try;
                ssr = ssr_try;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                done = step_norm < STEP_TOL || rel_drop < OBJ_TOL;
                break;
            }
            lambda *= 10.0;
        }
        if done || !accepted {
            break;
        }
    }

    Ok(VarianceFit {
        q: sigmoid(uq),
        beta: z.exp_m1() / BETA_SCALE,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn paper_vp() -> VarianceParams {
        VarianceParams::new(0.97, 0.0025, 0.97, 4).unwrap()
    }

    fn noiseless_linear() -> SurvivalData {
        let truth = DecayParams::new(0.97, 0.75, 0.25).unwrap();
        let rows = (0..21)
            .map(|x| {
                let m = 10 * x + 1;
                SurvivalRow {
                    m,
                    y: truth.survival(m as f64),
                    n: 5,
                    k: 100,
                }
            })
            .collect();
        SurvivalData::new(rows).unwrap()
    }

    #[test]
    fn recovers_noiseless_data_exactly() {
        let fit = wls_fit(&noiseless_linear(), &paper_vp(), 0.05).unwrap();
        assert!(fit.converged);
        assert_abs_diff_eq!(fit.params.p(), 0.97, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.params.a(), 0.75, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.params.b(), 0.25, epsilon = 1e-9);
        assert!(fit.s2 < 1e-18);
        assert!(fit.ci_halfwidth < 1e-8);
    }

    #[test]
    fn uniform_weights_agree_at_zero_residual() {
        let data = noiseless_linear();
        let uniform = WeightVector::from_raw(vec![1.0; data.len()]).unwrap();
        let fit = wls_fit_with_weights(&data, &uniform, 4, 0.05).unwrap();
        assert_abs_diff_eq!(fit.params.p(), 0.97, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.params.a(), 0.75, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.params.b(), 0.25, epsilon = 1e-9);
    }

    #[test]
    fn irls_single_round_is_wls_and_fixed_point_is_stable() {
        let data = noiseless_linear();
        let vp = paper_vp();
        let wls = wls_fit(&data, &vp, 0.05).unwrap();
        let one = irls_fit(&data, &vp, 0.05, 1).unwrap();
        assert_eq!(wls.params.p(), one.params.p());
        assert_eq!(wls.params.a(), one.params.a());

        let many = irls_fit(&data, &vp, 0.05, 8).unwrap();
        assert_abs_diff_eq!(many.params.p(), 0.97, epsilon = 1e-9);
    }

    #[test]
    fn irls_settles_on_noisy_data() {
        // deterministic pseudo-noise, small enough to keep the fit sane
        let truth = DecayParams::new(0.97, 0.75, 0.25).unwrap();
        let rows: Vec<SurvivalRow> = (0..21)
            .map(|x| {
                let m = 10 * x + 1;
                let bump = 2e-3 * ((x as f64) * 0.9).sin();
                SurvivalRow {
                    m,
                    y: (truth.survival(m as f64) + bump).clamp(0.0, 1.0),
                    n: 5,
                    k: 100,
                }
            })
            .collect();
        let data = SurvivalData::new(rows).unwrap();
        let vp = paper_vp();

        let mut prev = wls_fit(&data, &vp, 0.05).unwrap().params.p();
        let mut diffs = Vec::new();
        let mut current = vp;
        for _ in 0..5 {
            current = current.with_p_hat(prev).unwrap();
            let next = wls_fit(&data, &current, 0.05).unwrap().params.p();
            diffs.push((next - prev).abs());
            prev = next;
        }
        assert!(diffs[4] < 1e-6, "reweighting not settling: {diffs:?}");
        assert!(diffs[4] <= diffs[0]);
    }

    #[test]
    fn halfwidth_is_invariant_under_weight_rescaling() {
        let truth = DecayParams::new(0.96, 0.7, 0.27).unwrap();
        let rows: Vec<SurvivalRow> = (0..12)
            .map(|x| {
                let m = 15 * x + 1;
                let bump = 1.5e-3 * ((x as f64) * 1.3).cos();
                SurvivalRow {
                    m,
                    y: (truth.survival(m as f64) + bump).clamp(0.0, 1.0),
                    n: 4,
                    k: 128,
                }
            })
            .collect();
        let data = SurvivalData::new(rows).unwrap();
        let base_w: Vec<f64> = (0..data.len()).map(|i| 100.0 + 25.0 * i as f64).collect();

        let base = wls_fit_with_weights(
            &data,
            &WeightVector::from_raw(base_w.clone()).unwrap(),
            4,
            0.05,
        )
        .unwrap();
        for c in [0.5, 2.0, 100.0] {
            let scaled = wls_fit_with_weights(
                &data,
                &WeightVector::from_raw(base_w.iter().map(|w| c * w).collect()).unwrap(),
                4,
                0.05,
            )
            .unwrap();
            assert_relative_eq!(scaled.params.p(), base.params.p(), max_relative = 1e-9);
            assert_relative_eq!(scaled.s2, c * base.s2, max_relative = 1e-9);
            assert_relative_eq!(scaled.h_at_fit, base.h_at_fit / c, max_relative = 1e-9);
            assert_relative_eq!(
                scaled.ci_halfwidth,
                base.ci_halfwidth,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn variance_model_recovery_is_exact() {
        let vp = VarianceParams::new(0.97, 0.0025, 0.97, 4).unwrap();
        let samples: Vec<VarianceSample> = (0..20)
            .map(|x| {
                let m = 20 * x + 1;
                VarianceSample {
                    m,
                    var: vp.var_seq(m as f64) + vp.var_shot(m as f64, 1000.0),
                    k: 1000,
                }
            })
            .collect();
        let fit = fit_variance_model(&samples, 4, 0.97).unwrap();
        assert!(!fit.degenerate);
        assert_abs_diff_eq!(fit.q, 0.97, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.beta, 0.0025, epsilon = 1e-6);
    }

    #[test]
    fn variance_model_finds_zero_beta() {
        let vp = VarianceParams::new(0.97, 0.0, 0.97, 4).unwrap();
        let samples: Vec<VarianceSample> = (0..15)
            .map(|x| {
                let m = 10 * x + 1;
                VarianceSample {
                    m,
                    var: vp.var_shot(m as f64, 500.0),
                    k: 500,
                }
            })
            .collect();
        let fit = fit_variance_model(&samples, 4, 0.97).unwrap();
        assert!(fit.beta < 1e-10, "beta = {}", fit.beta);
    }

    #[test]
    fn variance_model_degenerate_flag() {
        let samples: Vec<VarianceSample> = (1..=5)
            .map(|m| VarianceSample {
                m,
                var: 0.0,
                k: 100,
            })
            .collect();
        let fit = fit_variance_model(&samples, 4, 1.0).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.beta, 0.0);
    }

    #[test]
    fn variance_model_is_stable_under_small_perturbations() {
        let vp = VarianceParams::new(0.97, 0.0025, 0.97, 4).unwrap();
        let make = |scale: f64| -> Vec<VarianceSample> {
            (0..20)
                .map(|x| {
                    let m = 20 * x + 1;
                    let sign = if x % 2 == 0 { 1.0 } else { -1.0 };
                    VarianceSample {
                        m,
                        var: (vp.var_seq(m as f64) + vp.var_shot(m as f64, 1000.0))
                            * (1.0 + sign * scale),
                        k: 1000,
                    }
                })
                .collect()
        };
        let clean = fit_variance_model(&make(0.0), 4, 0.97).unwrap();
        let bumped = fit_variance_model(&make(0.01), 4, 0.97).unwrap();
        assert!((bumped.q - clean.q).abs() / clean.q < 0.10);
        assert!((bumped.beta - clean.beta).abs() / clean.beta < 0.10);
    }

    #[test]
    fn survival_data_validation() {
        let row = |m| SurvivalRow {
            m,
            y: 0.5,
            n: 1,
            k: 1,
        };
        assert!(SurvivalData::new(vec![row(1), row(2), row(3)]).is_err());
        assert!(SurvivalData::new(vec![row(1), row(2), row(2), row(4)]).is_err());
        let bad_y = SurvivalRow {
            m: 3,
            y: 1.5,
            n: 1,
            k: 1,
        };
        assert!(SurvivalData::new(vec![row(1), row(2), bad_y, row(4)]).is_err());
    }
}
