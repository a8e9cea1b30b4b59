use dyadic_lp_core::dyadic::net::{auto_k_range, build_reference_net};
use dyadic_lp_core::dyadic::system::build_system;
use dyadic_lp_core::geometry::MetricMeasureSpace;

fn main() {
    let s = MetricMeasureSpace::random_cloud(2000, 2, 2026).unwrap();
    let kr = auto_k_range(&s, 0.5, 8);
    let net = build_reference_net(&s, 0.5, kr).unwrap();
    let sys = build_system(&s, &net).unwrap();
    for l in 0..sys.num_levels() {
        let scale = sys.scale(l);
        for cube in &sys.levels[l] {
            let witness_ok = cube.members.iter().any(|&x| {
                cube.members.iter().all(|&q| s.dist(x, q) < 2.0 * scale)
                    && (0..s.len()).all(|y| {
                        s.dist(x, y) >= scale / 3.0 || sys.assignment[l][y] == cube.beta
                    })
            });
            if !witness_ok {
                // diagnose: how many members pass outer; for those, count foreign intruders
                let outer_ok: Vec<usize> = cube.members.iter().copied()
                    .filter(|&x| cube.members.iter().all(|&q| s.dist(x, q) < 2.0 * scale))
                    .collect();
                let min_intruders = outer_ok.iter().map(|&x| {
                    (0..s.len()).filter(|&y| s.dist(x, y) < scale/3.0 && sys.assignment[l][y] != cube.beta).count()
                }).min();
                println!(
                    "level {l} beta {} size {} outer_ok {}/{} min_intruders {:?}",
                    cube.beta, cube.members.len(), outer_ok.len(), cube.members.len(), min_intruders
                );
            }
        }
    }
}
