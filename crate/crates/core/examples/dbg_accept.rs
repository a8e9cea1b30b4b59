use dyadic_lp_core::dyadic::adjacent::{audit_e2, build_adjacent_systems};
use dyadic_lp_core::dyadic::net::{audit_net, auto_k_range, build_reference_net};
use dyadic_lp_core::dyadic::system::{audit_system, build_system};
use dyadic_lp_core::geometry::MetricMeasureSpace;
use std::time::Instant;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2026);
    let n: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let levels: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(8);
    let t0 = Instant::now();
    let s = MetricMeasureSpace::random_cloud(n, 2, seed).unwrap();
    let kr = auto_k_range(&s, 0.5, levels);
    let net = build_reference_net(&s, 0.5, kr).unwrap();
    let (sep, cov, nested) = audit_net(&s, &net);
    let sys = build_system(&s, &net).unwrap();
    let t_build = t0.elapsed();
    let audit = audit_system(&s, &sys);
    let adj = build_adjacent_systems(&s, &sys).unwrap();
    let e2a = audit_e2(&s, &sys, &adj);
    let t_all = t0.elapsed();
    println!("seed {seed} n {n} levels {:?}", kr);
    println!("net: sep {sep:.4} cov {cov:.4} nested {nested}");
    println!("audit: {audit:?}");
    println!("core mismatches per level: {:?}, outer {}", sys.core_violations, sys.outer_violations);
    println!("e2: {e2a:?}");
    println!("K = {} systems, N = {}, selection violations {}, straddles {}",
        adj.num_systems(), adj.neighbor_bound, adj.selection_violations, adj.straddle_violations);
    println!("build time {:?}, total with audits {:?}", t_build, t_all);
}
