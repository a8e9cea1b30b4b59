use dyadic_lp_core::dyadic::net::{auto_k_range, build_reference_net};
use dyadic_lp_core::dyadic::system::build_system;
use dyadic_lp_core::geometry::MetricMeasureSpace;

fn main() {
    let s = MetricMeasureSpace::random_cloud(400, 2, 7).unwrap();
    let kr = auto_k_range(&s, 0.5, 7);
    println!("k range {:?} diam {}", kr, s.diameter());
    let net = build_reference_net(&s, 0.5, kr).unwrap();
    for (l, lev) in net.levels.iter().enumerate() {
        println!("level {} k={} scale={:.4} centers={}", l, net.k_of_level(l), net.scale(l), lev.len());
    }
    let sys = build_system(&s, &net).unwrap();
    println!("core_violations per level {:?} outer {}", sys.core_violations, sys.outer_violations);
    // Inspect violations directly.
    for l in 0..sys.num_levels() {
        let scale = sys.scale(l);
        for cube in &sys.levels[l] {
            for y in 0..s.len() {
                let d = s.dist(cube.center, y);
                if d < scale / 3.0 && sys.assignment[l][y] != cube.beta {
                    let assigned = &sys.levels[l][sys.assignment[l][y]];
                    println!(
                        "viol: level {l} point {y} in core of beta {} (d={:.4}, scale={:.4}); assigned beta {} center-dist {:.4}",
                        cube.beta, d, scale,
                        assigned.beta, s.dist(assigned.center, y)
                    );
                }
            }
        }
    }
}
