//! Dyadic cube systems on finite metric measure spaces: nested reference
//! nets, the base cube forest, adjacent systems with the label and
//! selection-rule machinery, and the E2 injection.

pub mod adjacent;
pub mod net;
pub mod serial;
pub mod system;

pub use adjacent::{
    audit_e2, build_adjacent_systems, AdjacentDyadicSystems, AdjacentNode, AdjacentSystem,
    E2Audit, E2Target, CONFLICT_FLOOR,
};
pub use net::{audit_net, auto_k_range, build_reference_net, ReferenceNet};
pub use serial::{from_forest, mode_name, to_forest, DyadicForestFile};
pub use system::{audit_system, build_system, Cube, DyadicSystem, SystemAudit};

use crate::error::Result;
use crate::geometry::MetricMeasureSpace;

/// Convenience: full decomposition (net, base system, adjacent systems) at
/// the given delta and level count, with the level range chosen from the
/// space's diameter.
pub fn build_full(
    space: &MetricMeasureSpace,
    delta: f64,
    levels: usize,
) -> Result<(DyadicSystem, AdjacentDyadicSystems)> {
    let kr = auto_k_range(space, delta, levels);
    let net = build_reference_net(space, delta, kr)?;
    let sys = build_system(space, &net)?;
    let adj = build_adjacent_systems(space, &sys)?;
    Ok((sys, adj))
}
