use rbplan::ci::objective_h;
use rbplan::model::{RBConfig, TimeParams, VarianceParams};
use rbplan::optimizer::{optimize, OptimizeSpec};

fn main() {
    let mut spec = OptimizeSpec::new(
        VarianceParams::new(0.97, 0.0025, 0.97, 4).unwrap(),
        TimeParams::from_micros(0.6, 250.0, 3.0).unwrap(),
    );
    spec.m_max = 13;
    // m_max=13 makes M=13 the winner so the report exposes its detail
    let report = optimize(&spec).unwrap();
    println!("best M = {}", report.best_m_count);
    println!("relaxed m = {:?}", report.relaxed.m.iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
    println!("relaxed n = {:?}", report.relaxed.n.iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
    println!("best m = {:?}", report.best.m());
    println!("best n = {:?}", report.best.n());
    println!("h_best = {:.6e}, t = {:.5}", report.h_best, report.t_best);
    for row in &report.per_m { println!("  M={:2} relaxed={:.6e} rounded={:.6e}", row.m_count, row.h_relaxed, row.h_rounded); }

    // hand-rounded versions of the relaxed point for comparison
    let m: Vec<u64> = report.relaxed.m.iter().map(|v| v.round() as u64).collect();
    let mut mm = m.clone();
    for i in 1..mm.len() { if mm[i] <= mm[i-1] { mm[i] = mm[i-1]+1; } }
    let n: Vec<u64> = report.relaxed.n.iter().map(|v| v.floor().max(5.0) as u64).collect();
    let cfg = RBConfig::new(mm.clone(), n.clone(), vec![100; mm.len()]).unwrap();
    let h = objective_h(&cfg, &spec.vp, 0.05, 0.97).unwrap();
    println!("floor-rounded: m={mm:?} n={n:?} h={:.6e} t={:.5}", h.h_value, spec.tp.exec_time(&cfg));
}
