//! Lossless JSON forest serialization for a built dyadic decomposition.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

use super::adjacent::{AdjacentDyadicSystems, AdjacentNode, AdjacentSystem, E2Target};
use super::system::{Cube, DyadicSystem};

#[derive(Debug, Serialize, Deserialize)]
pub struct CubeRecord {
    pub beta: usize,
    pub center: usize,
    pub members: Vec<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LevelRecord {
    pub k: i32,
    pub cubes: Vec<CubeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdjacentLevelRecord {
    pub k: i32,
    pub cubes: Vec<AdjacentCubeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdjacentCubeRecord {
    pub beta: usize,
    pub center: usize,
    pub selected_child: usize,
    pub used: bool,
    pub members: Vec<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdjacentSystemRecord {
    pub b: usize,
    pub pair: (u32, u32),
    pub levels: Vec<AdjacentLevelRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DyadicForestFile {
    pub delta: f64,
    pub mode: String,
    pub k_min: i32,
    pub k_max: i32,
    pub levels: Vec<LevelRecord>,
    pub adjacent: Vec<AdjacentSystemRecord>,
    /// Pairs `[base_id, adjacent_id]` with ids "k:beta" and "b:k:beta".
    pub e2: Vec<[String; 2]>,
    pub label1: Vec<Vec<u32>>,
    pub label2: Vec<Vec<(u32, u32)>>,
    pub pairs: Vec<(u32, u32)>,
    pub neighbor_bound: usize,
    pub selection_violations: usize,
    pub straddle_violations: usize,
    pub core_violations: Vec<usize>,
    pub outer_violations: usize,
    pub max_children: usize,
}

pub fn mode_name(delta: f64) -> &'static str {
    if delta < 1.0 / 144.0 {
        "paper-strict"
    } else {
        "structural"
    }
}

pub fn to_forest(sys: &DyadicSystem, adj: &AdjacentDyadicSystems) -> DyadicForestFile {
    let levels = sys
        .levels
        .iter()
        .map(|cubes| LevelRecord {
            k: cubes.first().map(|c| c.k).unwrap_or(0),
            cubes: cubes
                .iter()
                .map(|c| CubeRecord {
                    beta: c.beta,
                    center: c.center,
                    members: c.members.clone(),
                    parent: c.parent,
                    children: c.children.clone(),
                })
                .collect(),
        })
        .collect();
    let adjacent = adj
        .systems
        .iter()
        .map(|s| AdjacentSystemRecord {
            b: s.b,
            pair: s.pair,
            levels: s
                .levels
                .iter()
                .enumerate()
                .map(|(l, nodes)| AdjacentLevelRecord {
                    k: sys.k_min + l as i32,
                    cubes: nodes
                        .iter()
                        .map(|n| AdjacentCubeRecord {
                            beta: n.beta,
                            center: n.center,
                            selected_child: n.selected_child,
                            used: n.used,
                            members: n.region.clone(),
                            parent: n.parent,
                            children: n.children.clone(),
                        })
                        .collect(),
                })
                .collect(),
        })
        .collect();
    let mut e2 = Vec::new();
    for l in 1..sys.num_levels() {
        for beta in 0..sys.levels[l].len() {
            if let Some(t) = adj.e2_of(l, beta) {
                e2.push([
                    format!("{}:{}", sys.k_min + l as i32, beta),
                    format!("{}:{}:{}", t.b, sys.k_min + t.level as i32, t.beta),
                ]);
            }
        }
    }
    DyadicForestFile {
        delta: sys.delta,
        mode: mode_name(sys.delta).to_string(),
        k_min: sys.k_min,
        k_max: sys.k_max,
        levels,
        adjacent,
        e2,
        label1: adj.label1.clone(),
        label2: adj.label2.clone(),
        pairs: adj.pairs.clone(),
        neighbor_bound: adj.neighbor_bound,
        selection_violations: adj.selection_violations,
        straddle_violations: adj.straddle_violations,
        core_violations: sys.core_violations.clone(),
        outer_violations: sys.outer_violations,
        max_children: sys.max_children,
    }
}

pub fn from_forest(file: &DyadicForestFile, num_points: usize) -> Result<(DyadicSystem, AdjacentDyadicSystems)> {
    let nl = file.levels.len();
    let mut levels = Vec::with_capacity(nl);
    let mut assignment = vec![vec![usize::MAX; num_points]; nl];
    for (l, rec) in file.levels.iter().enumerate() {
        let mut cubes = Vec::with_capacity(rec.cubes.len());
        for c in &rec.cubes {
            for &m in &c.members {
                if m >= num_points {
                    return Err(CoreError::Serialization(format!(
                        "member id {m} out of range"
                    )));
                }
                assignment[l][m] = c.beta;
            }
            cubes.push(Cube {
                level: l,
                k: rec.k,
                beta: c.beta,
                center: c.center,
                members: c.members.clone(),
                parent: c.parent,
                children: c.children.clone(),
            });
        }
        levels.push(cubes);
    }
    if assignment
        .iter()
        .any(|row| row.iter().any(|&b| b == usize::MAX))
    {
        return Err(CoreError::Serialization(
            "forest does not cover every point at every level".into(),
        ));
    }
    let sys = DyadicSystem {
        delta: file.delta,
        k_min: file.k_min,
        k_max: file.k_max,
        levels,
        assignment,
        max_children: file.max_children,
        core_violations: file.core_violations.clone(),
        outer_violations: file.outer_violations,
    };
    let systems = file
        .adjacent
        .iter()
        .map(|s| AdjacentSystem {
            b: s.b,
            pair: s.pair,
            levels: s
                .levels
                .iter()
                .enumerate()
                .map(|(l, lev)| {
                    lev.cubes
                        .iter()
                        .map(|n| AdjacentNode {
                            level: l,
                            beta: n.beta,
                            center: n.center,
                            selected_child: n.selected_child,
                            used: n.used,
                            parent: n.parent,
                            children: n.children.clone(),
                            region: n.members.clone(),
                        })
                        .collect()
                })
                .collect(),
        })
        .collect();
    let mut e2: Vec<Vec<Option<E2Target>>> = (0..nl)
        .map(|l| vec![None; sys.levels[l].len()])
        .collect();
    for [base, adj_id] in &file.e2 {
        let parse = |s: &str| -> Result<Vec<i64>> {
            s.split(':')
                .map(|x| {
                    x.parse::<i64>()
                        .map_err(|e| CoreError::Serialization(e.to_string()))
                })
                .collect()
        };
        let bp = parse(base)?;
        let ap = parse(adj_id)?;
        if bp.len() != 2 || ap.len() != 3 {
            return Err(CoreError::Serialization("malformed e2 id".into()));
        }
        let l = (bp[0] - file.k_min as i64) as usize;
        let beta = bp[1] as usize;
        e2[l][beta] = Some(E2Target {
            b: ap[0] as usize,
            level: (ap[1] - file.k_min as i64) as usize,
            beta: ap[2] as usize,
        });
    }
    let adj = AdjacentDyadicSystems {
        label1: file.label1.clone(),
        label2: file.label2.clone(),
        pairs: file.pairs.clone(),
        systems,
        e2,
        neighbor_bound: file.neighbor_bound,
        selection_violations: file.selection_violations,
        straddle_violations: file.straddle_violations,
    };
    Ok((sys, adj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::net::{auto_k_range, build_reference_net};
    use crate::dyadic::system::build_system;
    use crate::dyadic::adjacent::build_adjacent_systems;
    use crate::geometry::MetricMeasureSpace;

    #[test]
    fn forest_round_trip_is_lossless() {
        let s = MetricMeasureSpace::random_cloud(150, 2, 77).unwrap();
        let kr = auto_k_range(&s, 0.5, 5);
        let net = build_reference_net(&s, 0.5, kr).unwrap();
        let sys = build_system(&s, &net).unwrap();
        let adj = build_adjacent_systems(&s, &sys).unwrap();
        let forest = to_forest(&sys, &adj);
        let json = serde_json::to_string(&forest).unwrap();
        let parsed: DyadicForestFile = serde_json::from_str(&json).unwrap();
        let (sys2, adj2) = from_forest(&parsed, s.len()).unwrap();
        assert_eq!(serde_json::to_string(&to_forest(&sys2, &adj2)).unwrap(), json);
    }
}
