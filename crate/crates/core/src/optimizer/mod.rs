//! Configuration search: minimize the predicted interval under a time
//! budget, or minimize time under an interval bound.
//!
//! Both problems are nonconvex mixed-integer programs. They are handled
//! the standard way: fix the number of lengths `M`, relax the integer
//! variables to reals, solve the relaxation with a local constrained
//! solver, round, repair feasibility, and keep the best integer
//! candidate across the sweep `M = 4..=m_max`. The relaxation solver
//! lives in [`relax`]; rounding and the sweep live here.
//!
//! Local solves from a fixed starting point keep the whole pipeline
//! deterministic: the same spec always produces the same report.

mod relax;

use rayon::prelude::*;
use serde::Serialize;

use crate::ci::{h_prime_explicit, objective_h};
use crate::error::{Error, Result};
use crate::model::{RBConfig, TimeParams, VarianceParams};
use crate::stats::{t_quantile, TQuantileSpec};
use relax::{Bounds, SolveOptions};

/// Whether every length gets its own sequence count or one shared one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    #[serde(rename = "free-n")]
    FreeN,
    #[serde(rename = "identical-n")]
    IdenticalN,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free-n" => Ok(Variant::FreeN),
            "identical-n" => Ok(Variant::IdenticalN),
            other => Err(Error::invalid(format!(
                "unknown variant '{other}', expected 'free-n' or 'identical-n'"
            ))),
        }
    }
}

/// Everything the search needs.
///
/// `n_min` keeps per-length sequence counts away from outlier-dominated
/// territory; its conventional value is 5 for the free-n variant and 1
/// for identical-n, which [`OptimizeSpec::new`] and
/// [`OptimizeSpec::with_variant`] install.
#[derive(Debug, Clone, Copy)]
pub struct OptimizeSpec {
    pub vp: VarianceParams,
    pub tp: TimeParams,
    pub alpha: f64,
    /// Largest number of Clifford lengths tried in the sweep.
    pub m_max: usize,
    pub variant: Variant,
    pub n_min: u64,
    pub k_fixed: u64,
    /// Upper bound on any Clifford length.
    pub m_max_bound: u64,
    /// Also start each relaxation from a geometric length spacing and
    /// keep the better local solution. Off by default.
    pub multi_start: bool,
    /// Treat the shot counts as decision variables (bound `k >= 1`)
    /// instead of fixing them to `k_fixed`. Off by default.
    pub optimize_shots: bool,
}

impl OptimizeSpec {
    pub fn new(vp: VarianceParams, tp: TimeParams) -> Self {
        Self {
            vp,
            tp,
            alpha: 0.05,
            m_max: 40,
            variant: Variant::FreeN,
            n_min: 5,
            k_fixed: 100,
            m_max_bound: 1024,
            multi_start: false,
            optimize_shots: false,
        }
    }

    /// Switch variant and install its conventional `n_min` default.
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self.n_min = match variant {
            Variant::FreeN => 5,
            Variant::IdenticalN => 1,
        };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_max < 4 {
            return Err(Error::invalid(format!(
                "m_max must be at least 4, got {}",
                self.m_max
            )));
        }
        if self.n_min < 1 {
            return Err(Error::invalid("n_min must be at least 1"));
        }
        if self.k_fixed < 1 {
            return Err(Error::invalid("k_fixed must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.m_max_bound < self.m_max as u64 {
            return Err(Error::invalid(format!(
                "m_max_bound = {} cannot hold {} strictly increasing lengths",
                self.m_max_bound, self.m_max
            )));
        }
        Ok(())
    }
}

/// One row of the per-`M` sweep table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PerM {
    pub m_count: usize,
    pub h_relaxed: f64,
    pub h_rounded: f64,
    pub t_rounded: f64,
    pub feasible: bool,
}

/// Continuous solution of the winning subproblem, before rounding.
#[derive(Debug, Clone, Serialize)]
pub struct RelaxedSolution {
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
}

/// Result of a sweep: the best integer configuration found, its
/// predicted objective and time, and the whole per-`M` table.
#[derive(Debug, Clone, Serialize)]
pub struct OptimizeReport {
    pub best: RBConfig,
    pub best_m_count: usize,
    pub h_best: f64,
    pub t_best: f64,
    pub per_m: Vec<PerM>,
    pub relaxed: RelaxedSolution,
}

/// Decision-variable layout of one relaxed subproblem: lengths first,
/// then sequence counts (one or `M` of them), then optionally `M` shot
/// counts.
#[derive(Debug, Clone, Copy)]
struct Layout {
    m_count: usize,
    identical_n: bool,
    with_shots: bool,
}

impl Layout {
    fn dim(&self) -> usize {
        let n_vars = if self.identical_n { 1 } else { self.m_count };
        let k_vars = if self.with_shots { self.m_count } else { 0 };
        self.m_count + n_vars + k_vars
    }

    fn n_at(&self, x: &[f64], i: usize) -> f64 {
        if self.identical_n {
            x[self.m_count]
        } else {
            x[self.m_count + i]
        }
    }

    fn k_offset(&self) -> usize {
        self.m_count + if self.identical_n { 1 } else { self.m_count }
    }

    fn k_at(&self, x: &[f64], i: usize, k_fixed: f64) -> f64 {
        if self.with_shots {
            x[self.k_offset() + i]
        } else {
            k_fixed
        }
    }
}

/// Objective/constraint evaluator over packed variables, with scratch
/// buffers so the relaxation's inner loop does not allocate.
struct Eval {
    layout: Layout,
    vp: VarianceParams,
    tp: TimeParams,
    p_hat: f64,
    t_factor: f64,
    k_fixed: f64,
    m_buf: Vec<f64>,
    w_buf: Vec<f64>,
}

impl Eval {
    fn new(layout: Layout, spec: &OptimizeSpec) -> Result<Self> {
        let t_factor = t_quantile(TQuantileSpec::new(
            (layout.m_count - 3) as u32,
            1.0 - spec.alpha,
        )?);
        Ok(Self {
            layout,
            vp: spec.vp,
            tp: spec.tp,
            p_hat: spec.vp.p_hat(),
            t_factor,
            k_fixed: spec.k_fixed as f64,
            m_buf: Vec::with_capacity(layout.m_count),
            w_buf: Vec::with_capacity(layout.m_count),
        })
    }

    /// Planning objective at a packed point; NaN outside the domain.
    fn h(&mut self, x: &[f64]) -> f64 {
        let mcount = self.layout.m_count;
        self.m_buf.clear();
        self.w_buf.clear();
        for i in 0..mcount {
            let m = x[i];
            let n = self.layout.n_at(x, i);
            let k = self.layout.k_at(x, i, self.k_fixed);
            let var = self.vp.var_avg_survival(m, n, k);
            if !(var.is_finite() && var > 0.0) {
                return f64::NAN;
            }
            self.m_buf.push(m);
            self.w_buf.push(1.0 / var);
        }
        match h_prime_explicit(&self.m_buf, &self.w_buf, self.p_hat) {
            Ok(hp) => self.t_factor * hp.sqrt(),
            Err(_) => f64::NAN,
        }
    }

    fn time(&self, x: &[f64]) -> f64 {
        let mcount = self.layout.m_count;
        (0..mcount)
            .map(|i| {
                let m = x[i];
                let n = self.layout.n_at(x, i);
                let k = self.layout.k_at(x, i, self.k_fixed);
                n * k * (self.tp.c1() * m + self.tp.c0())
            })
            .sum()
    }

    /// Exact objective and time of an integer configuration.
    fn integer_h_t(&mut self, m: &[u64], n: &[u64], k: &[u64]) -> (f64, f64) {
        let x = pack(self.layout, m, n, k);
        let mut me = Eval {
            m_buf: std::mem::take(&mut self.m_buf),
            w_buf: std::mem::take(&mut self.w_buf),
            ..*self
        };
        let h = me.h(&x);
        let t = me.time(&x);
        self.m_buf = me.m_buf;
        self.w_buf = me.w_buf;
        (h, t)
    }
}

fn pack(layout: Layout, m: &[u64], n: &[u64], k: &[u64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(layout.dim());
    x.extend(m.iter().map(|&v| v as f64));
    if layout.identical_n {
        x.push(n[0] as f64);
    } else {
        x.extend(n.iter().map(|&v| v as f64));
    }
    if layout.with_shots {
        x.extend(k.iter().map(|&v| v as f64));
    }
    x
}

/// Appendix-style default start: consecutive lengths from 1 and a flat
/// sequence count (5 per length for free-n, 3 shared for identical-n).
fn default_start(layout: Layout, spec: &OptimizeSpec) -> Vec<f64> {
    let mut x: Vec<f64> = (1..=layout.m_count).map(|i| i as f64).collect();
    if layout.identical_n {
        x.push(3.0f64.max(spec.n_min as f64));
    } else {
        x.extend(std::iter::repeat(5.0f64.max(spec.n_min as f64)).take(layout.m_count));
    }
    if layout.with_shots {
        x.extend(std::iter::repeat(spec.k_fixed as f64).take(layout.m_count));
    }
    x
}

/// Optional second start: lengths on a geometric grid reaching a few
/// decay constants of the prior.
fn geometric_start(layout: Layout, spec: &OptimizeSpec) -> Vec<f64> {
    let mcount = layout.m_count as f64;
    let target = (3.0 / (1.0 - spec.vp.p_hat().min(0.9999)))
        .min(spec.m_max_bound as f64)
        .max(mcount + 1.0);
    let ratio = target.powf(1.0 / mcount).max(1.05);
    let mut x = Vec::with_capacity(layout.dim());
    let mut last = 0.0f64;
    for i in 1..=layout.m_count {
        let v = ratio.powi(i as i32).round().max(last + 1.0);
        x.push(v.min(spec.m_max_bound as f64));
        last = x[i - 1];
    }
    for i in 1..layout.m_count {
        if x[i] <= x[i - 1] {
            x[i] = x[i - 1] + 1.0;
        }
    }
    if layout.identical_n {
        x.push(3.0f64.max(spec.n_min as f64));
    } else {
        x.extend(std::iter::repeat(5.0f64.max(spec.n_min as f64)).take(layout.m_count));
    }
    if layout.with_shots {
        x.extend(std::iter::repeat(spec.k_fixed as f64).take(layout.m_count));
    }
    x
}

fn bounds_for(layout: Layout, spec: &OptimizeSpec) -> Bounds {
    let mcount = layout.m_count;
    let tp = &spec.tp;
    let mut lo = vec![1.0; mcount];
    let mut hi = vec![spec.m_max_bound as f64; mcount];
    // generous cap: the whole budget spent on a single unit-length row
    let n_cap = (tp.budget() / (spec.k_fixed as f64 * (tp.c1() + tp.c0())))
        .max(spec.n_min as f64 + 1.0)
        * 2.0;
    let n_vars = if layout.identical_n { 1 } else { mcount };
    lo.extend(std::iter::repeat(spec.n_min as f64).take(n_vars));
    hi.extend(std::iter::repeat(n_cap).take(n_vars));
    if layout.with_shots {
        let k_cap = (tp.budget() / (tp.c1() + tp.c0())).max(2.0);
        lo.extend(std::iter::repeat(1.0).take(mcount));
        hi.extend(std::iter::repeat(k_cap).take(mcount));
    }
    Bounds { lo, hi }
}

/// Ordering constraints `m[i-1] + 1 <= m[i]` shared by both
/// formulations; the caller appends its own coupling constraint in
/// slot 0.
fn fill_ordering(x: &[f64], mcount: usize, g: &mut [f64]) {
    for i in 1..mcount {
        g[i] = x[i - 1] + 1.0 - x[i];
    }
}

struct RelaxOutcome {
    x: Vec<f64>,
    h: f64,
}

/// Solve the budget-constrained relaxation for one `M`.
fn relax_budget(layout: Layout, spec: &OptimizeSpec, start: &[f64]) -> Option<RelaxOutcome> {
    let mut eval = Eval::new(layout, spec).ok()?;
    let budget = spec.tp.budget();
    let h0 = {
        let v = eval.h(start);
        if v.is_finite() && v > 0.0 {
            v
        } else {
            1.0
        }
    };
    let timer = Eval::new(layout, spec).ok()?;
    let mut objective = move |x: &[f64]| eval.h(x) / h0;
    let mcount = layout.m_count;
    let mut constraints = move |x: &[f64], g: &mut [f64]| {
        g[0] = (timer.time(x) - budget) / budget;
        fill_ordering(x, mcount, g);
    };
    let bounds = bounds_for(layout, spec);
    let sol = relax::minimize(
        &mut objective,
        &mut constraints,
        mcount,
        start,
        &bounds,
        &SolveOptions::default(),
    );
    if !sol.objective.is_finite() || sol.max_violation > 1e-6 {
        return None;
    }
    Some(RelaxOutcome {
        x: sol.x,
        h: sol.objective * h0,
    })
}

/// Round lengths to a strictly increasing integer vector inside
/// `[1, bound]`.
fn round_lengths(m_relax: &[f64], bound: u64) -> Vec<u64> {
    let mut m: Vec<u64> = m_relax
        .iter()
        .map(|&v| v.round().max(1.0) as u64)
        .collect();
    for i in 1..m.len() {
        if m[i] <= m[i - 1] {
            m[i] = m[i - 1] + 1;
        }
    }
    let len = m.len();
    for i in (0..len).rev() {
        let cap = bound - (len - 1 - i) as u64;
        if m[i] > cap {
            m[i] = cap;
        }
    }
    for i in 1..len {
        if m[i] <= m[i - 1] {
            m[i] = m[i - 1] + 1;
        }
    }
    m
}

fn round_shots(layout: Layout, spec: &OptimizeSpec, x: &[f64]) -> Vec<u64> {
    if layout.with_shots {
        (0..layout.m_count)
            .map(|i| x[layout.k_offset() + i].round().max(1.0) as u64)
            .collect()
    } else {
        vec![spec.k_fixed; layout.m_count]
    }
}

/// Integer repair for the budget problem: floor the sequence counts,
/// shed time if the rounded lengths pushed the config over budget, then
/// spend the slack greedily where it helps the objective most per
/// second.
fn round_budget(
    layout: Layout,
    spec: &OptimizeSpec,
    eval: &mut Eval,
    x: &[f64],
) -> Option<(Vec<u64>, Vec<u64>, Vec<u64>)> {
    let budget = spec.tp.budget();
    let m = round_lengths(&x[..layout.m_count], spec.m_max_bound);
    let k = round_shots(layout, spec, x);
    let mut n: Vec<u64> = (0..layout.m_count)
        .map(|i| (layout.n_at(x, i).floor() as u64).max(spec.n_min))
        .collect();
    if layout.identical_n {
        let shared = n[0];
        n = vec![shared; layout.m_count];
    }

    let seq_cost =
        |i: usize| -> f64 { k[i] as f64 * (spec.tp.c1() * m[i] as f64 + spec.tp.c0()) };
    let total_time =
        |n: &[u64]| -> f64 { (0..n.len()).map(|i| n[i] as f64 * seq_cost(i)).sum() };

    // shed: rounding m upward can overshoot the budget slightly
    let mut t = total_time(&n);
    while t > budget {
        if layout.identical_n {
            if n[0] <= spec.n_min {
                return None;
            }
            for v in &mut n {
                *v -= 1;
            }
        } else {
            let j = (0..n.len())
                .filter(|&j| n[j] > spec.n_min)
                .max_by(|&a, &b| seq_cost(a).total_cmp(&seq_cost(b)))?;
            n[j] -= 1;
        }
        t = total_time(&n);
    }

    // grow: largest objective gain per second, while the budget lasts
    let mut h_cur = eval.integer_h_t(&m, &n, &k).0;
    loop {
        if layout.identical_n {
            let step: f64 = (0..n.len()).map(seq_cost).sum();
            if t + step > budget {
                break;
            }
            for v in &mut n {
                *v += 1;
            }
            t += step;
            h_cur = eval.integer_h_t(&m, &n, &k).0;
            continue;
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..n.len() {
            let dt = seq_cost(j);
            if t + dt > budget {
                continue;
            }
            n[j] += 1;
            let h_try = eval.integer_h_t(&m, &n, &k).0;
            n[j] -= 1;
            if !h_try.is_finite() {
                continue;
            }
            let score = (h_cur - h_try) / dt;
            if best.map_or(true, |(_, s, _)| score > s) {
                best = Some((j, score, h_try));
            }
        }
        let Some((j, _, h_new)) = best else { break };
        t += seq_cost(j);
        n[j] += 1;
        h_cur = h_new;
    }
    Some((m, n, k))
}

struct SubproblemResult {
    per_m: PerM,
    candidate: Option<(RBConfig, f64, f64, RelaxedSolution)>,
}

fn budget_subproblem(spec: &OptimizeSpec, m_count: usize) -> SubproblemResult {
    let layout = Layout {
        m_count,
        identical_n: spec.variant == Variant::IdenticalN,
        with_shots: spec.optimize_shots,
    };
    let infeasible = |h_relaxed: f64| SubproblemResult {
        per_m: PerM {
            m_count,
            h_relaxed,
            h_rounded: f64::NAN,
            t_rounded: f64::NAN,
            feasible: false,
        },
        candidate: None,
    };

    let mut outcome = relax_budget(layout, spec, &default_start(layout, spec));
    if spec.multi_start {
        let alt = relax_budget(layout, spec, &geometric_start(layout, spec));
        outcome = match (outcome, alt) {
            (Some(a), Some(b)) => Some(if b.h < a.h { b } else { a }),
            (a, b) => a.or(b),
        };
    }
    let Some(mut outcome) = outcome else {
        return infeasible(f64::NAN);
    };

    let Ok(mut eval) = Eval::new(layout, spec) else {
        return infeasible(f64::NAN);
    };

    // Alternate rounding with restarted relaxations. A rounded point
    // that beats the current relaxed value is itself feasible for the
    // relaxation, so the local solve stopped short; restarting there
    // regularly escapes to a deeper basin.
    let mut best_int: Option<(Vec<u64>, Vec<u64>, Vec<u64>, f64, f64)> = None;
    for _pass in 0..4 {
        let Some((m, n, k)) = round_budget(layout, spec, &mut eval, &outcome.x) else {
            break;
        };
        let (h_int, t_int) = eval.integer_h_t(&m, &n, &k);
        if !h_int.is_finite() || t_int > spec.tp.budget() {
            break;
        }
        let improved_int = best_int.as_ref().map_or(true, |(.., bh, _)| h_int < *bh);
        if improved_int {
            best_int = Some((m.clone(), n.clone(), k.clone(), h_int, t_int));
        }
        let x_int = pack(layout, &m, &n, &k);
        match relax_budget(layout, spec, &x_int) {
            Some(p) if p.h < outcome.h * (1.0 - 1e-12) => outcome = p,
            _ => break,
        }
    }

    let Some((m, n, k, h_int, t_int)) = best_int else {
        return infeasible(outcome.h);
    };
    // the integer point is a feasible relaxed point too
    let h_relaxed = outcome.h.min(h_int);

    let Ok(cfg) = RBConfig::new(m, n, k) else {
        return infeasible(h_relaxed);
    };
    let relaxed = RelaxedSolution {
        m: outcome.x[..m_count].to_vec(),
        n: if layout.identical_n {
            vec![outcome.x[m_count]; m_count]
        } else {
            outcome.x[m_count..2 * m_count].to_vec()
        },
        k: layout
            .with_shots
            .then(|| outcome.x[layout.k_offset()..layout.k_offset() + m_count].to_vec()),
    };
    SubproblemResult {
        per_m: PerM {
            m_count,
            h_relaxed,
            h_rounded: h_int,
            t_rounded: t_int,
            feasible: true,
        },
        candidate: Some((cfg, h_int, t_int, relaxed)),
    }
}

/// Smallest possible footprint over the sweep, for the infeasibility
/// diagnostic.
fn minimal_budget(spec: &OptimizeSpec) -> f64 {
    let m_count = 4.0;
    let sum_m = 1.0 + 2.0 + 3.0 + 4.0;
    spec.n_min as f64
        * spec.k_fixed as f64
        * (spec.tp.c1() * sum_m + m_count * spec.tp.c0())
}

/// Minimize the predicted interval under the execution-time budget.
///
/// For each `M` in `4..=m_max` the integer relaxation is solved from a
/// fixed start, rounded, and repaired; the best feasible integer
/// candidate wins, with ties broken toward smaller `M`. The reported
/// `h_best`/`t_best` are recomputed from the returned configuration,
/// never trusted from the solver.
pub fn optimize(spec: &OptimizeSpec) -> Result<OptimizeReport> {
    spec.validate()?;
    let results: Vec<SubproblemResult> = (4..=spec.m_max)
        .into_par_iter()
        .map(|m_count| budget_subproblem(spec, m_count))
        .collect();

    let mut per_m = Vec::with_capacity(results.len());
    let mut best: Option<(RBConfig, f64, f64, RelaxedSolution, usize)> = None;
    for r in results {
        if let Some((cfg, h, t, relaxed)) = r.candidate {
            if best.as_ref().map_or(true, |(_, bh, ..)| h < *bh) {
                best = Some((cfg, h, t, relaxed, r.per_m.m_count));
            }
        }
        per_m.push(r.per_m);
    }
    let Some((cfg, _, _, relaxed, best_m)) = best else {
        return Err(Error::Infeasible(format!(
            "no configuration fits the budget of {} s; the smallest possible footprint \
             (M = 4, n = n_min) already needs {:.6} s",
            spec.tp.budget(),
            minimal_budget(spec)
        )));
    };
    let recomputed = objective_h(&cfg, &spec.vp, spec.alpha, spec.vp.p_hat())?;
    let t_best = spec.tp.exec_time(&cfg);
    debug_assert!(t_best <= spec.tp.budget() * (1.0 + 1e-12));
    Ok(OptimizeReport {
        best: cfg,
        best_m_count: best_m,
        h_best: recomputed.h_value,
        t_best,
        per_m,
        relaxed,
    })
}

/// Solve the dual problem: minimize execution time subject to
/// `h <= epsilon`.
pub fn optimize_min_time(spec: &OptimizeSpec, epsilon: f64) -> Result<OptimizeReport> {
    spec.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!(
            "the interval bound must be positive, got {epsilon}"
        )));
    }
    let results: Vec<SubproblemResult> = (4..=spec.m_max)
        .into_par_iter()
        .map(|m_count| min_time_subproblem(spec, m_count, epsilon))
        .collect();

    let mut per_m = Vec::with_capacity(results.len());
    let mut best: Option<(RBConfig, f64, f64, RelaxedSolution, usize)> = None;
    let mut smallest_h = f64::INFINITY;
    for r in results {
        if r.per_m.h_rounded.is_finite() {
            smallest_h = smallest_h.min(r.per_m.h_rounded);
        }
        if let Some((cfg, h, t, relaxed)) = r.candidate {
            if best.as_ref().map_or(true, |(_, _, bt, ..)| t < *bt) {
                best = Some((cfg, h, t, relaxed, r.per_m.m_count));
            }
        }
        per_m.push(r.per_m);
    }
    let Some((cfg, _, _, relaxed, best_m)) = best else {
        return Err(Error::Infeasible(format!(
            "no configuration reaches h <= {epsilon} within m_max_bound = {} and m_max = {}; \
             smallest achieved h was {smallest_h}",
            spec.m_max_bound, spec.m_max
        )));
    };
    let recomputed = objective_h(&cfg, &spec.vp, spec.alpha, spec.vp.p_hat())?;
    let t_best = spec.tp.exec_time(&cfg);
    Ok(OptimizeReport {
        best: cfg,
        best_m_count: best_m,
        h_best: recomputed.h_value,
        t_best,
        per_m,
        relaxed,
    })
}

fn min_time_subproblem(spec: &OptimizeSpec, m_count: usize, epsilon: f64) -> SubproblemResult {
    let layout = Layout {
        m_count,
        identical_n: spec.variant == Variant::IdenticalN,
        with_shots: spec.optimize_shots,
    };
    let infeasible = |h_relaxed: f64, h_rounded: f64| SubproblemResult {
        per_m: PerM {
            m_count,
            h_relaxed,
            h_rounded,
            t_rounded: f64::NAN,
            feasible: false,
        },
        candidate: None,
    };

    let Ok(mut heval) = Eval::new(layout, spec) else {
        return infeasible(f64::NAN, f64::NAN);
    };
    let Ok(timer) = Eval::new(layout, spec) else {
        return infeasible(f64::NAN, f64::NAN);
    };
    let start = default_start(layout, spec);
    let t0 = timer.time(&start).max(1e-12);
    let mut objective = |x: &[f64]| timer.time(x) / t0;
    let mut constraints = |x: &[f64], g: &mut [f64]| {
        g[0] = if epsilon.is_infinite() {
            -1.0
        } else {
            let h = heval.h(x);
            if h.is_finite() {
                (h - epsilon) / epsilon
            } else {
                1.0
            }
        };
        fill_ordering(x, m_count, g);
    };
    let bounds = bounds_for(layout, spec);
    let sol = relax::minimize(
        &mut objective,
        &mut constraints,
        m_count,
        &start,
        &bounds,
        &SolveOptions::default(),
    );
    if !sol.objective.is_finite() || sol.max_violation > 1e-6 {
        return infeasible(f64::NAN, f64::NAN);
    }

    let Ok(mut eval) = Eval::new(layout, spec) else {
        return infeasible(f64::NAN, f64::NAN);
    };
    let h_relaxed = eval.h(&sol.x);
    let Some((m, n, k)) = round_min_time(layout, spec, &mut eval, &sol.x, epsilon) else {
        return infeasible(h_relaxed, f64::NAN);
    };
    let (h_int, t_int) = eval.integer_h_t(&m, &n, &k);
    if !(h_int <= epsilon) {
        return infeasible(h_relaxed, h_int);
    }
    let Ok(cfg) = RBConfig::new(m, n, k) else {
        return infeasible(h_relaxed, h_int);
    };
    let relaxed = RelaxedSolution {
        m: sol.x[..m_count].to_vec(),
        n: if layout.identical_n {
            vec![sol.x[m_count]; m_count]
        } else {
            sol.x[m_count..2 * m_count].to_vec()
        },
        k: layout
            .with_shots
            .then(|| sol.x[layout.k_offset()..layout.k_offset() + m_count].to_vec()),
    };
    SubproblemResult {
        per_m: PerM {
            m_count,
            h_relaxed,
            h_rounded: h_int,
            t_rounded: t_int,
            feasible: true,
        },
        candidate: Some((cfg, h_int, t_int, relaxed)),
    }
}

/// Integer repair for the min-time problem: take the ceiling of the
/// sequence counts so the interval bound keeps holding, add sequences
/// if rounding the lengths broke it anyway, then trim sequences while
/// the bound still holds.
fn round_min_time(
    layout: Layout,
    spec: &OptimizeSpec,
    eval: &mut Eval,
    x: &[f64],
    epsilon: f64,
) -> Option<(Vec<u64>, Vec<u64>, Vec<u64>)> {
    let m = round_lengths(&x[..layout.m_count], spec.m_max_bound);
    let k = round_shots(layout, spec, x);
    let mut n: Vec<u64> = (0..layout.m_count)
        .map(|i| (layout.n_at(x, i).ceil() as u64).max(spec.n_min))
        .collect();
    if layout.identical_n {
        let shared = n[0];
        n = vec![shared; layout.m_count];
    }
    let seq_cost =
        |i: usize| -> f64 { k[i] as f64 * (spec.tp.c1() * m[i] as f64 + spec.tp.c0()) };

    let mut h = eval.integer_h_t(&m, &n, &k).0;
    let mut guard = 0;
    while !(h <= epsilon) {
        guard += 1;
        if guard > 100_000 {
            return None;
        }
        if layout.identical_n {
            for v in &mut n {
                *v += 1;
            }
        } else {
            // cheapest useful second: biggest h drop per added second
            let mut best: Option<(usize, f64, f64)> = None;
            for j in 0..n.len() {
                n[j] += 1;
                let h_try = eval.integer_h_t(&m, &n, &k).0;
                n[j] -= 1;
                if !h_try.is_finite() {
                    continue;
                }
                let score = (h - h_try) / seq_cost(j);
                if best.map_or(true, |(_, s, _)| score > s) {
                    best = Some((j, score, h_try));
                }
            }
            let (j, _, _) = best?;
            n[j] += 1;
        }
        h = eval.integer_h_t(&m, &n, &k).0;
        if !h.is_finite() {
            return None;
        }
    }

    // trim surplus sequences, biggest time saving first
    loop {
        if layout.identical_n {
            if n[0] <= spec.n_min {
                break;
            }
            let trial: Vec<u64> = n.iter().map(|&v| v - 1).collect();
            let h_try = eval.integer_h_t(&m, &trial, &k).0;
            if h_try <= epsilon {
                n = trial;
            } else {
                break;
            }
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n.len() {
            if n[j] <= spec.n_min {
                continue;
            }
            n[j] -= 1;
            let h_try = eval.integer_h_t(&m, &n, &k).0;
            n[j] += 1;
            if h_try <= epsilon {
                let saving = seq_cost(j);
                if best.map_or(true, |(_, s)| saving > s) {
                    best = Some((j, saving));
                }
            }
        }
        let Some((j, _)) = best else { break };
        n[j] -= 1;
    }
    Some((m, n, k))
}

/// The three conventional length families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HeuristicFamily {
    Linear,
    Square,
    Exponential,
}

impl std::str::FromStr for HeuristicFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "square" => Ok(Self::Square),
            "exponential" => Ok(Self::Exponential),
            other => Err(Error::invalid(format!(
                "unknown family '{other}', expected 'linear', 'square' or 'exponential'"
            ))),
        }
    }
}

impl HeuristicFamily {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Square => "square",
            Self::Exponential => "exponential",
        }
    }

    /// Lengths for positions `x = 1..=m_count`.
    pub fn lengths(&self, m_count: usize) -> Result<Vec<u64>> {
        if matches!(self, Self::Exponential) && m_count > 63 {
            return Err(Error::invalid(format!(
                "exponential lengths overflow beyond M = 63, got {m_count}"
            )));
        }
        Ok((1..=m_count as u64)
            .map(|x| match self {
                Self::Linear => 10 * (x - 1) + 1,
                Self::Square => x * x,
                Self::Exponential => 1u64 << (x - 1),
            })
            .collect())
    }
}

/// Build the family configuration for a given `M`: family lengths, a
/// shared sequence count, and `k_fixed` shots.
///
/// The shared count is the relaxed optimum `T / (per-sequence time)`
/// rounded to the nearest integer (at least 1), so the configuration
/// may overshoot the budget by up to half a sequence round; that is the
/// conventional way these families are sized and [`best_heuristic`]
/// admits the overshoot up to 10%.
pub fn heuristic_config(
    family: HeuristicFamily,
    m_count: usize,
    spec: &OptimizeSpec,
) -> Result<RBConfig> {
    if m_count < 4 {
        return Err(Error::invalid(format!(
            "a configuration needs at least 4 lengths, got {m_count}"
        )));
    }
    let m = family.lengths(m_count)?;
    let per_seq: f64 = m
        .iter()
        .map(|&mi| spec.k_fixed as f64 * (spec.tp.c1() * mi as f64 + spec.tp.c0()))
        .sum();
    let n = (spec.tp.budget() / per_seq).round().max(1.0) as u64;
    RBConfig::with_identical(m, n, spec.k_fixed)
}

/// Grid-search the family over `M = 4..=m_max`, admitting candidates up
/// to 10% over budget, and return `(M, config, h)` of the minimizer.
pub fn best_heuristic(
    family: HeuristicFamily,
    spec: &OptimizeSpec,
) -> Result<(usize, RBConfig, f64)> {
    spec.validate()?;
    let mut best: Option<(usize, RBConfig, f64)> = None;
    for m_count in 4..=spec.m_max {
        let Ok(cfg) = heuristic_config(family, m_count, spec) else {
            continue;
        };
        if spec.tp.exec_time(&cfg) > 1.1 * spec.tp.budget() {
            continue;
        }
        let Ok(res) = objective_h(&cfg, &spec.vp, spec.alpha, spec.vp.p_hat()) else {
            continue;
        };
        if best.as_ref().map_or(true, |(_, _, h)| res.h_value < *h) {
            best = Some((m_count, cfg, res.h_value));
        }
    }
    best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no {} configuration fits within 110% of the {} s budget",
            family.name(),
            spec.tp.budget()
        ))
    })
}

/// One point of the prediction surface.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub p_hat: f64,
    pub m_count: usize,
    pub h: f64,
}

/// Evaluate the family's predicted objective on a grid of prior decay
/// rates and length counts, for plotting.
///
/// The variance base `q` follows the swept prior, the usual tie when
/// planning from a single preliminary estimate. Grid points whose
/// design is degenerate yield `h = NaN` rather than an error, so the
/// table always has `|p_hat_grid| * |m_grid|` rows.
pub fn sweep_ci_surface(
    family: HeuristicFamily,
    spec: &OptimizeSpec,
    p_hat_grid: &[f64],
    m_grid: &[usize],
) -> Result<Vec<SweepRow>> {
    if p_hat_grid.is_empty() || m_grid.is_empty() {
        return Err(Error::invalid("sweep grids must be nonempty"));
    }
    let mut rows = Vec::with_capacity(p_hat_grid.len() * m_grid.len());
    for &p_hat in p_hat_grid {
        let vp = VarianceParams::new(p_hat, spec.vp.beta(), p_hat, spec.vp.dim())?;
        for &m_count in m_grid {
            let h = heuristic_config(family, m_count, spec)
                .and_then(|cfg| objective_h(&cfg, &vp, spec.alpha, p_hat))
                .map(|r| r.h_value)
                .unwrap_or(f64::NAN);
            rows.push(SweepRow {
                p_hat,
                m_count,
                h,
            });
        }
    }
    Ok(rows)
}
