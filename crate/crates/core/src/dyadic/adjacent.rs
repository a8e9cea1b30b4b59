//! Adjacent dyadic systems, the label / selection-rule machinery, and the
//! E2 injection.
//!
//! Each system `D^b` is realized as a region tree: one node per base cube,
//! centered at the child selected for the label pair `b`. Nodes selected by
//! an exact label match carry a forced ball of radius `3 delta^(k+1)` around
//! their center, which is exactly the dilation `3Q` of the base cube that
//! E2-maps to them. Regions aggregate forced balls up host links, so the
//! containment `3Q ⊆ E2(Q)` and the nesting of same-system regions hold by
//! construction; conflicts that would split a forced ball are resolved
//! deterministically and counted.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{MetricMeasureSpace, PointId};

use super::system::DyadicSystem;

/// Structural-mode floor for the conflict radius, in units of the child
/// scale. The paper's rule `delta^(k-1)` dominates whenever
/// `delta < 1/CONFLICT_FLOOR`; at desk-scale delta the floor keeps
/// same-label selected centers far enough apart that their forced balls
/// stay disjoint.
pub const CONFLICT_FLOOR: f64 = 10.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdjacentNode {
    /// Adjacent level index; the node sits one generation above its
    /// selected child, at scale `delta^(k_min + level)`.
    pub level: usize,
    /// Base cube index this node is derived from.
    pub beta: usize,
    /// Center point: the selected child's reference point.
    pub center: PointId,
    /// Beta index (at level+1) of the selected child.
    pub selected_child: usize,
    /// True when the selection rule found a child with the matching label
    /// pair; only such nodes carry a forced ball and act as E2 targets.
    pub used: bool,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub region: Vec<PointId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdjacentSystem {
    pub b: usize,
    pub pair: (u32, u32),
    /// levels[l][beta] parallel to the base system's cubes, l = 0..L-2.
    pub levels: Vec<Vec<AdjacentNode>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct E2Target {
    pub b: usize,
    pub level: usize,
    pub beta: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdjacentDyadicSystems {
    /// label1[l][beta]: primary label of the level-l cube.
    pub label1: Vec<Vec<u32>>,
    /// label2[l][beta]: duplex label (parent's primary label, sibling rank),
    /// defined for l >= 1.
    pub label2: Vec<Vec<(u32, u32)>>,
    /// The Lambda bijection: index b -> pair.
    pub pairs: Vec<(u32, u32)>,
    pub systems: Vec<AdjacentSystem>,
    /// e2[l][beta] for l >= 1 maps a base cube to its adjacent target cube
    /// one generation up.
    pub e2: Vec<Vec<Option<E2Target>>>,
    /// Measured neighbor bound N.
    pub neighbor_bound: usize,
    /// Parents where no child satisfied the selection rule's distance
    /// requirement and the nearest child was used instead.
    pub selection_violations: usize,
    /// Points a forced ball lost to a deterministic conflict resolution.
    pub straddle_violations: usize,
}

impl AdjacentDyadicSystems {
    pub fn num_systems(&self) -> usize {
        self.systems.len()
    }

    pub fn system_of_pair(&self, pair: (u32, u32)) -> Option<usize> {
        self.pairs.iter().position(|&p| p == pair)
    }

    pub fn e2_of(&self, level: usize, beta: usize) -> Option<E2Target> {
        self.e2.get(level).and_then(|row| row.get(beta).copied().flatten())
    }

    pub fn node(&self, t: E2Target) -> &AdjacentNode {
        &self.systems[t.b].levels[t.level][t.beta]
    }

    /// True when `inner` is contained in (or equals) `outer` inside the same
    /// system, following the host tree.
    pub fn contains(&self, b: usize, outer: (usize, usize), inner: (usize, usize)) -> bool {
        if inner.0 < outer.0 {
            return false;
        }
        let sys = &self.systems[b];
        let mut cur = inner;
        while cur.0 > outer.0 {
            match sys.levels[cur.0][cur.1].parent {
                Some(p) => cur = (cur.0 - 1, p),
                None => return false,
            }
        }
        cur == outer
    }
}

fn conflict_radius(delta: f64, child_scale: f64) -> f64 {
    (child_scale / delta).max(CONFLICT_FLOOR * child_scale)
}

/// Build the label machinery, selection rule, adjacent region trees, and
/// the E2 map for an already-built base system.
pub fn build_adjacent_systems(
    space: &MetricMeasureSpace,
    sys: &DyadicSystem,
) -> Result<AdjacentDyadicSystems> {
    let nl = sys.num_levels();
    if nl < 2 {
        return Err(CoreError::InvalidArgument(
            "adjacent systems need at least two levels".into(),
        ));
    }
    let delta = sys.delta;

    // Neighbor graphs and primary labels per level. Two same-level cubes are
    // neighbors when some pair of their children's reference points is in
    // conflict (distance below the conflict radius of the child generation).
    let mut label1: Vec<Vec<u32>> = Vec::with_capacity(nl);
    let mut neighbor_bound = 0usize;
    for l in 0..nl {
        let cubes = &sys.levels[l];
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); cubes.len()];
        if l + 1 < nl {
            let r = conflict_radius(delta, sys.scale(l + 1));
            for (b1, c1) in cubes.iter().enumerate() {
                for (b2, c2) in cubes.iter().enumerate().skip(b1 + 1) {
                    let conflict = c1.children.iter().any(|&ch1| {
                        let p1 = sys.levels[l + 1][ch1].center;
                        c2.children.iter().any(|&ch2| {
                            space.dist(p1, sys.levels[l + 1][ch2].center) < r
                        })
                    });
                    if conflict {
                        neighbors[b1].push(b2);
                        neighbors[b2].push(b1);
                    }
                }
            }
        }
        neighbor_bound = neighbor_bound.max(
            neighbors.iter().map(|v| v.len()).max().unwrap_or(0),
        );
        // Greedy proper coloring in beta order.
        let mut colors = vec![u32::MAX; cubes.len()];
        for b in 0..cubes.len() {
            let mut used: Vec<u32> = neighbors[b]
                .iter()
                .filter(|&&o| colors[o] != u32::MAX)
                .map(|&o| colors[o])
                .collect();
            used.sort_unstable();
            used.dedup();
            let mut c = 0u32;
            for u in used {
                if u == c {
                    c += 1;
                } else if u > c {
                    break;
                }
            }
            colors[b] = c;
        }
        label1.push(colors);
    }

    // Duplex labels: (parent's primary label, 1-based sibling rank).
    let mut label2: Vec<Vec<(u32, u32)>> = vec![Vec::new(); nl];
    for l in 1..nl {
        let mut row = vec![(0u32, 0u32); sys.levels[l].len()];
        for (pb, parent) in sys.levels[l - 1].iter().enumerate() {
            for (rank, &ch) in parent.children.iter().enumerate() {
                row[ch] = (label1[l - 1][pb], rank as u32 + 1);
            }
        }
        label2[l] = row;
    }

    // The Lambda bijection over used pairs, in sorted order.
    let mut pairs: Vec<(u32, u32)> = label2
        .iter()
        .flat_map(|row| row.iter().copied())
        .collect();
    pairs.sort_unstable();
    pairs.dedup();

    // Forced-ball point lists, one per base cube of level >= 1 (the ball of
    // the adjacent node whose selected child is that cube).
    let ball_lists: Vec<Vec<Vec<PointId>>> = (0..nl)
        .into_par_iter()
        .map(|l| {
            if l == 0 {
                return Vec::new();
            }
            let radius = 3.0 * sys.scale(l);
            sys.levels[l]
                .iter()
                .map(|cube| {
                    (0..space.len())
                        .filter(|&y| space.dist(cube.center, y) < radius)
                        .collect()
                })
                .collect()
        })
        .collect();

    // Build each system's region tree.
    let straddle = std::sync::atomic::AtomicUsize::new(0);
    let selection_viol = std::sync::atomic::AtomicUsize::new(0);
    let systems: Vec<AdjacentSystem> = pairs
        .par_iter()
        .enumerate()
        .map(|(b, &pair)| {
            build_one_system(
                space,
                sys,
                &label2,
                &ball_lists,
                b,
                pair,
                &straddle,
                &selection_viol,
            )
        })
        .collect();

    // E2 map: cube (l, beta) with l >= 1 maps to the node derived from its
    // parent, in the system of its own duplex label.
    let pair_index: HashMap<(u32, u32), usize> =
        pairs.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut e2: Vec<Vec<Option<E2Target>>> = vec![Vec::new(); nl];
    for l in 1..nl {
        let mut row = Vec::with_capacity(sys.levels[l].len());
        for (beta, cube) in sys.levels[l].iter().enumerate() {
            let b = pair_index[&label2[l][beta]];
            let parent = cube.parent.expect("level >= 1 cube has a parent");
            let node = &systems[b].levels[l - 1][parent];
            debug_assert!(node.used && node.selected_child == beta);
            row.push(Some(E2Target {
                b,
                level: l - 1,
                beta: parent,
            }));
        }
        e2[l] = row;
    }

    Ok(AdjacentDyadicSystems {
        label1,
        label2,
        pairs,
        systems,
        e2,
        neighbor_bound,
        selection_violations: selection_viol.into_inner(),
        straddle_violations: straddle.into_inner(),
    })
}

#[allow(clippy::too_many_arguments)]
fn build_one_system(
    space: &MetricMeasureSpace,
    sys: &DyadicSystem,
    label2: &[Vec<(u32, u32)>],
    ball_lists: &[Vec<Vec<PointId>>],
    b: usize,
    pair: (u32, u32),
    straddle: &std::sync::atomic::AtomicUsize,
    selection_viol: &std::sync::atomic::AtomicUsize,
) -> AdjacentSystem {
    use std::sync::atomic::Ordering;
    let nl = sys.num_levels();
    let adj_levels = nl - 1;

    // Selection rule per parent cube.
    let mut nodes: Vec<Vec<AdjacentNode>> = Vec::with_capacity(adj_levels);
    for l in 0..adj_levels {
        let child_scale = sys.scale(l + 1);
        let mut row = Vec::with_capacity(sys.levels[l].len());
        for (beta, cube) in sys.levels[l].iter().enumerate() {
            let matched = cube
                .children
                .iter()
                .copied()
                .find(|&ch| label2[l + 1][ch] == pair);
            let (sel, used) = match matched {
                Some(ch) => (ch, true),
                None => {
                    let pc = cube.center;
                    let near = cube
                        .children
                        .iter()
                        .copied()
                        .filter(|&ch| {
                            space.dist(sys.levels[l + 1][ch].center, pc) < child_scale
                        })
                        .min_by(|&a, &c| {
                            let da = space.dist(sys.levels[l + 1][a].center, pc);
                            let dc = space.dist(sys.levels[l + 1][c].center, pc);
                            da.partial_cmp(&dc).unwrap().then(a.cmp(&c))
                        });
                    match near {
                        Some(ch) => (ch, false),
                        None => {
                            selection_viol.fetch_add(1, Ordering::Relaxed);
                            let ch = cube
                                .children
                                .iter()
                                .copied()
                                .min_by(|&a, &c| {
                                    let da = space.dist(sys.levels[l + 1][a].center, pc);
                                    let dc = space.dist(sys.levels[l + 1][c].center, pc);
                                    da.partial_cmp(&dc).unwrap().then(a.cmp(&c))
                                })
                                .expect("every cube has a child");
                            (ch, false)
                        }
                    }
                }
            };
            row.push(AdjacentNode {
                level: l,
                beta,
                center: sys.levels[l + 1][sel].center,
                selected_child: sel,
                used,
                parent: None,
                children: Vec::new(),
                region: Vec::new(),
            });
        }
        nodes.push(row);
    }

    // Regions and host links, finest adjacent level upward.
    let mut point_owner = vec![usize::MAX; space.len()];
    for l in (0..adj_levels).rev() {
        // Ball ownership map at this level (balls of used nodes are pairwise
        // disjoint by the label separation; ties cannot occur).
        for p in point_owner.iter_mut() {
            *p = usize::MAX;
        }
        for (beta, node) in nodes[l].iter().enumerate() {
            if node.used {
                for &y in &ball_lists[l + 1][node.selected_child] {
                    if point_owner[y] == usize::MAX {
                        point_owner[y] = beta;
                    }
                }
            }
        }
        // Host each level-(l+1) node: region-touch into a used ball first,
        // else nearest center.
        if l + 1 < adj_levels {
            let fine_count = nodes[l + 1].len();
            let mut hosts = vec![usize::MAX; fine_count];
            for v in 0..fine_count {
                let mut touch: Option<usize> = None;
                for &y in &nodes[l + 1][v].region {
                    let owner = point_owner[y];
                    if owner != usize::MAX {
                        touch = Some(touch.map_or(owner, |t: usize| t.min(owner)));
                    }
                }
                let host = touch.unwrap_or_else(|| {
                    let c = nodes[l + 1][v].center;
                    (0..nodes[l].len())
                        .min_by(|&a, &x| {
                            let da = space.dist(nodes[l][a].center, c);
                            let dx = space.dist(nodes[l][x].center, c);
                            da.partial_cmp(&dx).unwrap().then(a.cmp(&x))
                        })
                        .expect("level has nodes")
                });
                hosts[v] = host;
            }
            for (v, &h) in hosts.iter().enumerate() {
                nodes[l + 1][v].parent = Some(h);
            }
            // Aggregate regions: hosted child regions first (they keep
            // nesting intact), then own ball points not already claimed.
            let mut claimed = vec![usize::MAX; space.len()];
            for v in 0..fine_count {
                let h = hosts[v];
                for &y in &nodes[l + 1][v].region.clone() {
                    if claimed[y] == usize::MAX {
                        claimed[y] = h;
                    }
                }
            }
            for beta in 0..nodes[l].len() {
                let mut region: Vec<PointId> = nodes[l + 1]
                    .iter()
                    .enumerate()
                    .filter(|(v, _)| hosts[*v] == beta)
                    .flat_map(|(_, n)| n.region.iter().copied())
                    .collect();
                if nodes[l][beta].used {
                    for &y in &ball_lists[l + 1][nodes[l][beta].selected_child] {
                        if claimed[y] == usize::MAX {
                            claimed[y] = beta;
                            region.push(y);
                        } else if claimed[y] != beta {
                            straddle.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                }
                region.sort_unstable();
                region.dedup();
                nodes[l][beta].region = region;
            }
            let mut child_lists: Vec<Vec<usize>> = vec![Vec::new(); nodes[l].len()];
            for (v, &h) in hosts.iter().enumerate() {
                child_lists[h].push(v);
            }
            for (beta, list) in child_lists.into_iter().enumerate() {
                nodes[l][beta].children = list;
            }
        } else {
            // Finest adjacent level: region = own forced ball.
            for beta in 0..nodes[l].len() {
                if nodes[l][beta].used {
                    nodes[l][beta].region =
                        ball_lists[l + 1][nodes[l][beta].selected_child].clone();
                }
            }
        }
    }

    AdjacentSystem {
        b,
        pair,
        levels: nodes,
    }
}

/// Exact audit of the E2 invariants.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct E2Audit {
    pub injectivity_violations: usize,
    pub containment_violations: usize,
    pub generation_violations: usize,
    pub checked_cubes: usize,
    /// Max over cubes of mu(E2(Q)) / mu(Q).
    pub max_mass_ratio: f64,
}

impl E2Audit {
    pub fn clean(&self) -> bool {
        self.injectivity_violations == 0
            && self.containment_violations == 0
            && self.generation_violations == 0
    }
}

pub fn audit_e2(
    space: &MetricMeasureSpace,
    sys: &DyadicSystem,
    adj: &AdjacentDyadicSystems,
) -> E2Audit {
    let mut audit = E2Audit::default();
    let mut seen = std::collections::HashSet::new();
    for l in 1..sys.num_levels() {
        for beta in 0..sys.levels[l].len() {
            let Some(t) = adj.e2_of(l, beta) else { continue };
            audit.checked_cubes += 1;
            if !seen.insert((t.b, t.level, t.beta)) {
                audit.injectivity_violations += 1;
            }
            if t.level + 1 != l {
                audit.generation_violations += 1;
            }
            let node = adj.node(t);
            let three_q = sys.three_q(space, l, beta);
            let region: std::collections::HashSet<_> = node.region.iter().collect();
            if !three_q.iter().all(|y| region.contains(y)) {
                audit.containment_violations += 1;
            }
            let mq = sys.cube_mass(space, l, beta);
            let me2 = node.region.iter().map(|&p| space.mu(p)).sum::<f64>();
            if mq > 0.0 {
                audit.max_mass_ratio = audit.max_mass_ratio.max(me2 / mq);
            }
        }
    }
    audit
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::net::{auto_k_range, build_reference_net};
    use crate::dyadic::system::build_system;

    fn full_build(
        space: &MetricMeasureSpace,
        delta: f64,
        levels: usize,
    ) -> (DyadicSystem, AdjacentDyadicSystems) {
        let kr = auto_k_range(space, delta, levels);
        let net = build_reference_net(space, delta, kr).unwrap();
        let sys = build_system(space, &net).unwrap();
        let adj = build_adjacent_systems(space, &sys).unwrap();
        (sys, adj)
    }

    #[test]
    fn e2_injective_on_cloud() {
        let s = MetricMeasureSpace::random_cloud(500, 2, 123).unwrap();
        let (sys, adj) = full_build(&s, 0.5, 6);
        let audit = audit_e2(&s, &sys, &adj);
        assert_eq!(audit.injectivity_violations, 0);
        assert_eq!(audit.generation_violations, 0);
    }

    #[test]
    fn three_q_contained_in_e2_on_cloud() {
        let s = MetricMeasureSpace::random_cloud(500, 2, 123).unwrap();
        let (sys, adj) = full_build(&s, 0.5, 6);
        let audit = audit_e2(&s, &sys, &adj);
        assert_eq!(
            audit.containment_violations, 0,
            "straddles: {}",
            adj.straddle_violations
        );
        assert!(audit.max_mass_ratio.is_finite());
    }

    #[test]
    fn label1_is_a_proper_coloring() {
        let s = MetricMeasureSpace::random_cloud(400, 2, 9).unwrap();
        let (sys, adj) = full_build(&s, 0.5, 6);
        for l in 0..sys.num_levels() - 1 {
            let r = (sys.scale(l + 1) / sys.delta).max(CONFLICT_FLOOR * sys.scale(l + 1));
            let cubes = &sys.levels[l];
            for (b1, c1) in cubes.iter().enumerate() {
                for (b2, c2) in cubes.iter().enumerate().skip(b1 + 1) {
                    let conflict = c1.children.iter().any(|&ch1| {
                        c2.children.iter().any(|&ch2| {
                            s.dist(
                                sys.levels[l + 1][ch1].center,
                                sys.levels[l + 1][ch2].center,
                            ) < r
                        })
                    });
                    if conflict {
                        assert_ne!(adj.label1[l][b1], adj.label1[l][b2]);
                    }
                }
            }
        }
    }

    #[test]
    fn e2_on_1d_grid_resembles_triple_cube() {
        // On a 1D grid the target region must contain the closed
        // delta^k-neighborhood of the cube and stay within a few cube
        // widths, the discrete analogue of E2(Q) = 3Q.
        let s = MetricMeasureSpace::grid_1d(64, 1.0, false).unwrap();
        let (sys, adj) = full_build(&s, 0.5, 4);
        let audit = audit_e2(&s, &sys, &adj);
        assert_eq!(audit.containment_violations, 0);
        for l in 1..sys.num_levels() {
            let scale = sys.scale(l);
            for beta in 0..sys.levels[l].len() {
                let t = adj.e2_of(l, beta).unwrap();
                let node = adj.node(t);
                let center = sys.levels[l][beta].center;
                for &y in &node.region {
                    assert!(s.dist(center, y) <= 8.0 * scale);
                }
            }
        }
    }

    #[test]
    fn selection_rule_picks_matching_child() {
        let s = MetricMeasureSpace::random_cloud(300, 2, 31).unwrap();
        let (sys, adj) = full_build(&s, 0.5, 5);
        for l in 0..sys.num_levels() - 1 {
            for (beta, cube) in sys.levels[l].iter().enumerate() {
                for (b, &pair) in adj.pairs.iter().enumerate() {
                    let matched = cube
                        .children
                        .iter()
                        .copied()
                        .find(|&ch| adj.label2[l + 1][ch] == pair);
                    if let Some(ch) = matched {
                        let node = &adj.systems[b].levels[l][beta];
                        assert_eq!(node.selected_child, ch);
                        assert!(node.used);
                        assert_eq!(node.center, sys.levels[l + 1][ch].center);
                    }
                }
            }
        }
    }

    #[test]
    fn adjacent_regions_nest_and_stay_disjoint() {
        let s = MetricMeasureSpace::random_cloud(400, 2, 55).unwrap();
        let (sys, adj) = full_build(&s, 0.5, 6);
        for system in &adj.systems {
            for l in 0..system.levels.len() {
                // Same-level regions pairwise disjoint.
                let mut owner = vec![usize::MAX; s.len()];
                for (beta, node) in system.levels[l].iter().enumerate() {
                    for &y in &node.region {
                        assert_eq!(owner[y], usize::MAX, "overlap in system {}", system.b);
                        owner[y] = beta;
                    }
                }
                // Child regions inside parents.
                if l + 1 < system.levels.len() {
                    for node in &system.levels[l + 1] {
                        if let Some(p) = node.parent {
                            let parent_region: std::collections::HashSet<_> =
                                system.levels[l][p].region.iter().collect();
                            for y in &node.region {
                                assert!(parent_region.contains(y));
                            }
                        }
                    }
                }
            }
        }
        let _ = sys;
    }
}
