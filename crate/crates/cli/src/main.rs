//! `rbplan` — plan, predict, and validate RB sampling strategies.
//!
//! Every subcommand reads its inputs from files plus flag overrides
//! (flags beat file values, file values beat defaults), writes a
//! machine-readable result to `--out`, echoes the fully resolved
//! parameter set into that output, and prints a short human summary to
//! stdout. Identical inputs and seeds always produce byte-identical
//! outputs.
//!
//! Exit codes: 0 success, 2 invalid input, 3 infeasible optimization,
//! 4 estimation failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rbplan::ci::objective_h;
use rbplan::error::Error;
use rbplan::fit::{fit_variance_model, wls_fit, FitResult};
use rbplan::io::{self, ParamsFile, ResolvedParams, TruthFile};
use rbplan::mc::{adjusted_std, mc_campaign, MCSummary};
use rbplan::model::RBConfig;
use rbplan::optimizer::{
    best_heuristic, optimize, optimize_min_time, sweep_ci_surface, HeuristicFamily,
    OptimizeReport,
};

#[derive(Parser)]
#[command(name = "rbplan", version, about = "RB sampling-strategy planning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Parameter overrides; any flag given here beats the params file.
#[derive(Args, Default, Clone)]
struct Overrides {
    /// Parameter file (flat JSON, snake_case keys)
    #[arg(long, value_name = "JSON")]
    params: Option<PathBuf>,
    /// Variance-model decay base
    #[arg(long)]
    q: Option<f64>,
    /// Variance-model amplitude
    #[arg(long)]
    beta: Option<f64>,
    /// Prior decay-rate estimate
    #[arg(long)]
    p_hat: Option<f64>,
    /// Hilbert-space dimension (power of two)
    #[arg(long)]
    dim: Option<u32>,
    /// Per-Clifford time in microseconds
    #[arg(long)]
    c1_us: Option<f64>,
    /// Per-shot constant time in microseconds
    #[arg(long)]
    c0_us: Option<f64>,
    /// Execution-time budget in seconds
    #[arg(long)]
    budget_s: Option<f64>,
    /// Two-sided significance level
    #[arg(long)]
    alpha: Option<f64>,
    /// Largest number of Clifford lengths in sweeps
    #[arg(long)]
    m_max: Option<usize>,
    /// Optimization variant: free-n or identical-n
    #[arg(long)]
    variant: Option<String>,
    /// Lower bound on each sequence count
    #[arg(long)]
    n_min: Option<u64>,
    /// Fixed shot count
    #[arg(long)]
    k_fixed: Option<u64>,
    /// Upper bound on any Clifford length
    #[arg(long)]
    m_max_bound: Option<u64>,
    /// Worker threads for internal parallelism (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

impl Overrides {
    fn resolve(&self) -> Result<ResolvedParams, Error> {
        let base = match &self.params {
            Some(path) => ParamsFile::read(path)?,
            None => ParamsFile::default(),
        };
        let flags = ParamsFile {
            q: self.q,
            beta: self.beta,
            p_hat: self.p_hat,
            dim: self.dim,
            c1_us: self.c1_us,
            c0_us: self.c0_us,
            budget_s: self.budget_s,
            alpha: self.alpha,
            m_max: self.m_max,
            variant: self.variant.clone(),
            n_min: self.n_min,
            k_fixed: self.k_fixed,
            m_max_bound: self.m_max_bound,
        };
        base.merged_with(&flags).resolve()
    }

    fn init_threads(&self) {
        if let Some(n) = self.threads {
            // ignore the error if a pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Predict the confidence-interval objective and execution time of
    /// a configuration
    Predict {
        /// Configuration JSON ({"m": [...], "n": [...], "k": [...]}, or
        /// any report containing a "config" or "best" object)
        #[arg(long, value_name = "JSON")]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Output JSON path
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Search for the configuration minimizing the predicted interval
    /// within the time budget
    Optimize {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Also write the per-M table as CSV
        #[arg(long, value_name = "PATH")]
        per_m_csv: Option<PathBuf>,
    },
    /// Search for the cheapest configuration whose predicted interval
    /// stays below a bound
    OptimizeMinTime {
        /// Upper bound on the predicted interval objective h
        #[arg(long)]
        epsilon: f64,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[arg(long, value_name = "PATH")]
        per_m_csv: Option<PathBuf>,
    },
    /// Grid-search one heuristic family and report its best member
    Heuristic {
        /// linear, square, or exponential
        #[arg(long)]
        family: HeuristicFamilyArg,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Evaluate a heuristic family across a (p_hat, M) grid
    Sweep {
        #[arg(long)]
        family: HeuristicFamilyArg,
        /// Comma-separated prior decay rates, e.g. 0.95,0.97,0.999
        #[arg(long, value_name = "LIST")]
        p_hat_grid: String,
        /// Comma-separated or ranged M values, e.g. 4..14 or 4,6,8
        #[arg(long, value_name = "LIST")]
        m_grid: String,
        #[command(flatten)]
        overrides: Overrides,
        /// Output CSV path
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Fit the decay model to survival data (CSV with header m,y,n,k)
    Fit {
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Fit the variance model to per-length sample variances (CSV with
    /// header m,var,k)
    Varfit {
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Run a synthetic measurement campaign and summarize estimator
    /// spread and interval coverage
    Simulate {
        #[arg(long, value_name = "JSON")]
        config: PathBuf,
        /// Ground-truth JSON ({p, a, b, q, beta[, p_hat, dim]})
        #[arg(long, value_name = "JSON")]
        truth: PathBuf,
        #[arg(long)]
        runs: u64,
        /// Master seed for the run substreams
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Two-sided significance level
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Worker threads for internal parallelism
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Also write per-run records as CSV
        #[arg(long, value_name = "PATH")]
        runs_csv: Option<PathBuf>,
    },
    /// Drift-adjusted spread analysis of repeated estimates (CSV with
    /// header job,config,p_hat)
    Analyze {
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        /// Output CSV path
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy)]
struct HeuristicFamilyArg(HeuristicFamily);

impl std::str::FromStr for HeuristicFamilyArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<HeuristicFamily>()
            .map(HeuristicFamilyArg)
            .map_err(|e| e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Infeasible(_) => 3,
        Error::FitFailed(_) | Error::Campaign(_) => 4,
        _ => 2,
    }
}

/// Accept a bare configuration or any report that embeds one under
/// "config" or "best", so command outputs chain into `predict`.
fn read_config_flexible(path: &Path) -> Result<RBConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let node = if value.get("m").is_some() {
        &value
    } else if let Some(cfg) = value.get("config") {
        cfg
    } else if let Some(cfg) = value.get("best") {
        cfg
    } else {
        return Err(Error::Invalid(format!(
            "{} holds neither a configuration nor a report with one",
            path.display()
        )));
    };
    Ok(serde_json::from_value(node.clone())?)
}

#[derive(Serialize)]
struct PredictOutput {
    params: ResolvedParams,
    config: RBConfig,
    h: f64,
    h_prime: f64,
    t_factor: f64,
    m_count: usize,
    t_seconds: f64,
    feasible_under_budget: bool,
}

#[derive(Serialize)]
struct OptimizeOutput {
    params: ResolvedParams,
    #[serde(flatten)]
    report: OptimizeReport,
}

#[derive(Serialize)]
struct HeuristicOutput {
    params: ResolvedParams,
    family: HeuristicFamily,
    m_count: usize,
    config: RBConfig,
    h: f64,
    t_seconds: f64,
}

#[derive(Serialize)]
struct FitOutput {
    params: ResolvedParams,
    fit: FitResult,
}

#[derive(Serialize)]
struct VarfitOutput {
    params: ResolvedParams,
    q: f64,
    beta: f64,
    degenerate: bool,
}

#[derive(Serialize)]
struct SimulateOutput {
    alpha: f64,
    seed: u64,
    truth: rbplan::mc::TruthModel,
    config: RBConfig,
    summary: MCSummary,
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Predict {
            config,
            overrides,
            out,
        } => {
            overrides.init_threads();
            let params = overrides.resolve()?;
            let cfg = read_config_flexible(&config)?;
            let res = objective_h(&cfg, &params.variance_params()?, params.alpha, params.p_hat)?;
            let tp = params.time_params()?;
            let t_seconds = tp.exec_time(&cfg);
            let output = PredictOutput {
                params,
                h: res.h_value,
                h_prime: res.h_prime,
                t_factor: res.t_factor,
                m_count: res.m_count,
                t_seconds,
                feasible_under_budget: t_seconds <= tp.budget(),
                config: cfg,
            };
            io::write_json(&out, &output)?;
            println!(
                "predicted h = {:.6e} (H' = {:.6e}, M = {})",
                output.h, output.h_prime, output.m_count
            );
            println!(
                "execution time {:.4} s, budget {:.4} s -> {}",
                output.t_seconds,
                tp.budget(),
                if output.feasible_under_budget {
                    "fits"
                } else {
                    "exceeds budget"
                }
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Optimize {
            overrides,
            out,
            per_m_csv,
        } => {
            overrides.init_threads();
            let params = overrides.resolve()?;
            let report = optimize(&params.optimize_spec()?)?;
            if let Some(path) = per_m_csv {
                io::write_per_m_csv(&path, &report.per_m)?;
            }
            println!(
                "best configuration: M = {}, h = {:.6e}, t = {:.4} s",
                report.best_m_count, report.h_best, report.t_best
            );
            println!("m = {:?}", report.best.m());
            println!("n = {:?}", report.best.n());
            io::write_json(&out, &OptimizeOutput { params, report })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::OptimizeMinTime {
            epsilon,
            overrides,
            out,
            per_m_csv,
        } => {
            overrides.init_threads();
            let params = overrides.resolve()?;
            let report = optimize_min_time(&params.optimize_spec()?, epsilon)?;
            if let Some(path) = per_m_csv {
                io::write_per_m_csv(&path, &report.per_m)?;
            }
            println!(
                "cheapest configuration with h <= {epsilon:.6e}: M = {}, h = {:.6e}, t = {:.4} s",
                report.best_m_count, report.h_best, report.t_best
            );
            io::write_json(&out, &OptimizeOutput { params, report })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Heuristic {
            family,
            overrides,
            out,
        } => {
            overrides.init_threads();
            let params = overrides.resolve()?;
            let spec = params.optimize_spec()?;
            let (m_count, config, h) = best_heuristic(family.0, &spec)?;
            let t_seconds = spec.tp.exec_time(&config);
            println!(
                "best {} configuration: M = {m_count}, h = {h:.6e}, t = {t_seconds:.4} s",
                family.0.name()
            );
            io::write_json(
                &out,
                &HeuristicOutput {
                    params,
                    family: family.0,
                    m_count,
                    config,
                    h,
                    t_seconds,
                },
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            family,
            p_hat_grid,
            m_grid,
            overrides,
            out,
        } => {
            overrides.init_threads();
            let params = overrides.resolve()?;
            let p_grid = parse_f64_list(&p_hat_grid)?;
            let m_values = parse_usize_list(&m_grid)?;
            let rows = sweep_ci_surface(family.0, &params.optimize_spec()?, &p_grid, &m_values)?;
            io::write_sweep_csv(&out, &rows)?;
            println!(
                "wrote {} rows ({} priors x {} grid sizes) to {}",
                rows.len(),
                p_grid.len(),
                m_values.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit {
            data,
            overrides,
            out,
        } => {
            overrides.init_threads();
            let params = overrides.resolve()?;
            let survival = io::read_survival_csv(&data)?;
            let fit = wls_fit(&survival, &params.variance_params()?, params.alpha)?;
            let converged = fit.converged;
            println!(
                "p = {:.10} (a = {:.6}, b = {:.6}), ci half-width = {:.4e}{}",
                fit.params.p(),
                fit.params.a(),
                fit.params.b(),
                fit.ci_halfwidth,
                if converged { "" } else { " [NOT CONVERGED]" }
            );
            io::write_json(&out, &FitOutput { params, fit })?;
            Ok(if converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            })
        }
        Command::Varfit {
            data,
            overrides,
            out,
        } => {
            overrides.init_threads();
            let params = overrides.resolve()?;
            let samples = io::read_variance_csv(&data)?;
            let fit = fit_variance_model(&samples, params.dim, params.p_hat)?;
            if fit.degenerate {
                println!("variance data carry no sequence scatter; beta = 0, q arbitrary");
            } else {
                println!("q = {:.10}, beta = {:.6e}", fit.q, fit.beta);
            }
            io::write_json(
                &out,
                &VarfitOutput {
                    params,
                    q: fit.q,
                    beta: fit.beta,
                    degenerate: fit.degenerate,
                },
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            config,
            truth,
            runs,
            seed,
            alpha,
            threads,
            out,
            runs_csv,
        } => {
            if let Some(n) = threads {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            let cfg = read_config_flexible(&config)?;
            let truth_model = TruthFile::read(&truth)?.truth_model()?;
            let summary = mc_campaign(&cfg, &truth_model, runs, alpha, seed)?;
            if let Some(path) = runs_csv {
                io::write_campaign_csv(&path, &summary)?;
            }
            println!(
                "{} runs ({} failed): spread of p = {:.6e}, coverage = {:.3}, mean ci = {:.6e}",
                summary.runs,
                summary.failures,
                summary.empirical_std,
                summary.coverage,
                summary.mean_ci
            );
            io::write_json(
                &out,
                &SimulateOutput {
                    alpha,
                    seed,
                    truth: truth_model,
                    config: cfg,
                    summary,
                },
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { data, out } => {
            let matrix = io::read_matrix_csv(&data)?;
            let spreads = adjusted_std(&matrix)?;
            for s in &spreads {
                println!(
                    "{}: adjusted std = {:.6e} (raw {:.6e}), mean p = {:.6}",
                    s.config, s.adjusted_std, s.raw_std, s.mean_p_hat
                );
            }
            io::write_adjusted_csv(&out, &spreads)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Invalid(format!("bad number '{s}' in grid: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_usize_list("4..7").unwrap(), vec![4, 5, 6, 7]);
        assert_eq!(parse_usize_list("4,6,10").unwrap(), vec![4, 6, 10]);
        assert!(parse_usize_list("7..4").is_err());
        assert_eq!(parse_f64_list("0.95, 0.97").unwrap(), vec![0.95, 0.97]);
        assert!(parse_f64_list("0.95,x").is_err());
    }
}

/// `4..14` (inclusive), or a comma list like `4,6,8`.
fn parse_usize_list(text: &str) -> Result<Vec<usize>, Error> {
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo
            .trim()
            .parse()
            .map_err(|e| Error::Invalid(format!("bad range start '{lo}': {e}")))?;
        let hi: usize = hi
            .trim()
            .parse()
            .map_err(|e| Error::Invalid(format!("bad range end '{hi}': {e}")))?;
        if hi < lo {
            return Err(Error::Invalid(format!("empty range {lo}..{hi}")));
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::Invalid(format!("bad integer '{s}' in grid: {e}")))
        })
        .collect()
}

// `heuristic_config` is re-exported through the library; the CLI only
// needs the grid search, but keeping the import here documents the
// relationship for anyone extending the surface.
#[allow(unused_imports)]
use heuristic_config as _heuristic_config;
