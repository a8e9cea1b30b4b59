use dyadic_lp_core::dyadic::net::{auto_k_range, build_reference_net};
use dyadic_lp_core::dyadic::system::build_system;
use dyadic_lp_core::geometry::MetricMeasureSpace;

fn main() {
    let s = MetricMeasureSpace::random_cloud(2000, 2, 2026).unwrap();
    let kr = auto_k_range(&s, 0.5, 8);
    let net = build_reference_net(&s, 0.5, kr).unwrap();
    let sys = build_system(&s, &net).unwrap();
    let l = 3usize;
    let scale = sys.scale(l);
    let cube = &sys.levels[l][8];
    println!("cube center {:?} members {}", s.coords(cube.center), cube.members.len());
    let mut intruders = std::collections::HashSet::new();
    for &x in &cube.members {
        for y in 0..s.len() {
            if s.dist(x, y) < scale / 3.0 && sys.assignment[l][y] != 8 {
                intruders.insert(y);
            }
        }
    }
    println!("distinct intruders: {}", intruders.len());
    for &y in &intruders {
        println!("  intruder {} at {:?} assigned to beta {} (dist to our center {:.4}), mandate-side?",
            y, s.coords(y), sys.assignment[l][y], s.dist(cube.center, y));
    }
}
