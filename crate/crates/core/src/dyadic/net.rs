//! Nested reference nets: per-level point sets with separation and covering
//! at scale `delta^k`, each level carried forward into the next.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{MetricMeasureSpace, PointId};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceNet {
    pub delta: f64,
    pub k_min: i32,
    pub k_max: i32,
    /// `levels[l]` lists the reference points of level `k_min + l`, in the
    /// order the greedy construction added them. Prefixes are shared across
    /// levels, so level l is a prefix of level l+1.
    pub levels: Vec<Vec<PointId>>,
}

impl ReferenceNet {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Scale `delta^k` of level index `l`.
    pub fn scale(&self, l: usize) -> f64 {
        self.delta.powi(self.k_min + l as i32)
    }

    pub fn k_of_level(&self, l: usize) -> i32 {
        self.k_min + l as i32
    }
}

/// Pick `k_min` so that a single coarsest cube is possible
/// (`delta^k_min > diameter`), then take `levels` consecutive scales,
/// clamping at the resolution floor where every cube is a singleton.
pub fn auto_k_range(space: &MetricMeasureSpace, delta: f64, levels: usize) -> (i32, i32) {
    let diam = space.diameter().max(f64::MIN_POSITIVE);
    let mut k_min = (diam.ln() / delta.ln()).floor() as i32;
    while delta.powi(k_min) <= diam {
        k_min -= 1;
    }
    while delta.powi(k_min + 1) > diam {
        k_min += 1;
    }
    let mut k_max = k_min + levels as i32 - 1;
    let floor = space.min_positive_dist();
    if floor > 0.0 {
        // Below a quarter of the point spacing the outer containment ball
        // holds only the center, so deeper levels are pure copy chains.
        while k_max > k_min && delta.powi(k_max) < floor / 4.0 {
            k_max -= 1;
        }
    }
    (k_min, k_max)
}

/// Farthest-point greedy net construction, coarse to fine. Each level starts
/// from the previous level's points, then adds the farthest uncovered point
/// until every point lies strictly within `delta^k` of the net.
pub fn build_reference_net(
    space: &MetricMeasureSpace,
    delta: f64,
    k_range: (i32, i32),
) -> Result<ReferenceNet> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CoreError::InvalidArgument(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    let (k_min, k_max) = k_range;
    if k_max < k_min {
        return Err(CoreError::InvalidArgument("empty k range".into()));
    }
    if space.is_empty() {
        return Err(CoreError::InvalidArgument("empty space".into()));
    }
    let n = space.len();
    let mut net: Vec<PointId> = Vec::new();
    let mut dist_to_net = vec![f64::INFINITY; n];
    let mut levels = Vec::with_capacity((k_max - k_min + 1) as usize);
    for k in k_min..=k_max {
        let scale = delta.powi(k);
        loop {
            let mut best = 0usize;
            let mut best_d = f64::NEG_INFINITY;
            for (p, &d) in dist_to_net.iter().enumerate() {
                if d > best_d {
                    best_d = d;
                    best = p;
                }
            }
            if best_d < scale {
                break;
            }
            net.push(best);
            for p in 0..n {
                let d = space.dist(best, p);
                if d < dist_to_net[p] {
                    dist_to_net[p] = d;
                }
            }
        }
        levels.push(net.clone());
    }
    Ok(ReferenceNet {
        delta,
        k_min,
        k_max,
        levels,
    })
}

/// Exhaustive separation / covering / nesting audit. Returns
/// `(worst_separation_ratio, worst_covering_ratio, nesting_ok)` where the
/// separation ratio is `min pairwise d / delta^k` (must be >= 1) and the
/// covering ratio is `max_x min_net d / delta^k` (must be < 1).
pub fn audit_net(
    space: &MetricMeasureSpace,
    net: &ReferenceNet,
) -> (f64, f64, bool) {
    let mut worst_sep = f64::INFINITY;
    let mut worst_cov: f64 = 0.0;
    let mut nesting_ok = true;
    for l in 0..net.num_levels() {
        let scale = net.scale(l);
        let pts = &net.levels[l];
        for (a, &pa) in pts.iter().enumerate() {
            for &pb in pts.iter().skip(a + 1) {
                worst_sep = worst_sep.min(space.dist(pa, pb) / scale);
            }
        }
        for y in 0..space.len() {
            let d = pts
                .iter()
                .map(|&p| space.dist(p, y))
                .fold(f64::INFINITY, f64::min);
            worst_cov = worst_cov.max(d / scale);
        }
        if l + 1 < net.num_levels() {
            let next: std::collections::HashSet<_> = net.levels[l + 1].iter().collect();
            if !pts.iter().all(|p| next.contains(p)) {
                nesting_ok = false;
            }
        }
    }
    (worst_sep, worst_cov, nesting_ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_space_has_one_point_per_level() {
        let s = MetricMeasureSpace::new(
            vec![vec![0.0]],
            vec![1.0],
            crate::geometry::Metric::Euclidean,
        )
        .unwrap();
        let net = build_reference_net(&s, 0.5, (0, 5)).unwrap();
        for l in 0..net.num_levels() {
            assert_eq!(net.levels[l], vec![0]);
        }
    }

    #[test]
    fn grid_net_separation_and_covering() {
        let s = MetricMeasureSpace::grid_1d(16, 1.0, false).unwrap();
        // delta = 1/2, scale 4 at k = -2.
        let net = build_reference_net(&s, 0.5, (-2, -2)).unwrap();
        let pts = &net.levels[0];
        for (i, &a) in pts.iter().enumerate() {
            for &b in pts.iter().skip(i + 1) {
                assert!(s.dist(a, b) >= 4.0);
            }
        }
        for y in 0..s.len() {
            let d = pts
                .iter()
                .map(|&p| s.dist(p, y))
                .fold(f64::INFINITY, f64::min);
            assert!(d < 4.0);
        }
    }

    #[test]
    fn levels_are_nested() {
        let s = MetricMeasureSpace::random_cloud(300, 2, 42).unwrap();
        let (k_min, k_max) = auto_k_range(&s, 0.5, 6);
        let net = build_reference_net(&s, 0.5, (k_min, k_max)).unwrap();
        let (sep, cov, nested) = audit_net(&s, &net);
        assert!(sep >= 1.0, "sep {sep}");
        assert!(cov < 1.0, "cov {cov}");
        assert!(nested);
    }

    #[test]
    fn delta_out_of_range_is_rejected() {
        let s = MetricMeasureSpace::grid_1d(4, 1.0, false).unwrap();
        assert!(build_reference_net(&s, 1.0, (0, 2)).is_err());
        assert!(build_reference_net(&s, 0.0, (0, 2)).is_err());
    }

    #[test]
    fn coarse_scale_clamps_to_single_root() {
        let s = MetricMeasureSpace::grid_1d(8, 1.0, false).unwrap();
        // delta^{-10} at delta=1/2 vastly exceeds the diameter: the level
        // holds one point and construction does not error.
        let net = build_reference_net(&s, 0.5, (-10, -9)).unwrap();
        assert_eq!(net.levels[0].len(), 1);
    }
}
