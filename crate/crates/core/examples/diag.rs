use rbplan::model::{TimeParams, VarianceParams};
use rbplan::optimizer::{optimize, OptimizeSpec};

fn main() {
    for budget in [3.0, 12.0] {
        let mut spec = OptimizeSpec::new(
            VarianceParams::new(0.97, 0.0025, 0.97, 4).unwrap(),
            TimeParams::from_micros(0.6, 250.0, budget).unwrap(),
        );
        spec.m_max = 16;
        let t0 = std::time::Instant::now();
        let report = optimize(&spec).unwrap();
        println!("budget {budget}: best M = {} h = {:.6e} t = {:.4} ({:?})",
            report.best_m_count, report.h_best, report.t_best, t0.elapsed());
        for row in &report.per_m {
            println!("  M={:2} relaxed={:.6e} rounded={:.6e} t={:.4} feas={}",
                row.m_count, row.h_relaxed, row.h_rounded, row.t_rounded, row.feasible);
        }
        println!("  m = {:?}", report.best.m());
        println!("  n = {:?}", report.best.n());
    }
}
