//! Reference geometry: the virtual-leader formation targets and the
//! jammer station-keeping points.

use crate::scenario::{Scenario, ThreatKind};
use nalgebra::Vector3;

/// Per-vehicle target positions at mission time `t` (seconds).
///
/// Reconnaissance vehicles track the virtual leader plus their formation
/// offset. Jamming vehicles track a point on the segment from the reference
/// formation centroid toward their assigned threat, at the configured
/// standoff fraction plus a lateral offset; vehicles without an assignment
/// fall back to their formation offset.
pub fn reference_positions(t: f64, scenario: &Scenario) -> Vec<Vector3<f64>> {
    let leader = scenario.formation.leader.position(t);
    let n = scenario.n_uavs();

    // Reference centroid of the nominal formation (state-independent).
    let mean_offset: Vector3<f64> =
        scenario.formation.offsets.iter().sum::<Vector3<f64>>() / n as f64;
    let centroid = leader + mean_offset;

    let mut targets: Vec<Vector3<f64>> = (0..n)
        .map(|i| leader + scenario.formation.offsets[i])
        .collect();

    for a in &scenario.assignments {
        let threat_pos = match a.threat {
            ThreatKind::Radar => scenario.threats.radars[a.index].position,
            ThreatKind::Missile => scenario.threats.missiles[a.index].position,
        };
        targets[a.jammer] =
            centroid + (threat_pos - centroid) * a.standoff_fraction + a.lateral_at(t);
    }
    targets
}

/// Offsets of two regular tetrahedra (edge `edge` meters) sharing one edge,
/// anchored so the first vertex is at the origin. Eleven pairwise distances
/// equal `edge` exactly: the shared edge, plus five per tetrahedron.
pub fn coupled_double_tetrahedron_offsets(edge: f64) -> Vec<Vector3<f64>> {
    let half = edge / 2.0;
    let r = (edge * edge - half * half).sqrt(); // circumradius of the shared-edge plane
    let x = (r * r - half * half).sqrt(); // in-plane coordinate giving unit chords
    let a = Vector3::new(0.0, 0.0, half);
    let b = Vector3::new(0.0, 0.0, -half);
    let c = Vector3::new(x, half, 0.0);
    let d = Vector3::new(x, -half, 0.0);
    let e = Vector3::new(-x, half, 0.0);
    let f = Vector3::new(-x, -half, 0.0);
    vec![
        Vector3::zeros(),
        b - a,
        c - a,
        d - a,
        e - a,
        f - a,
    ]
}

/// The eleven vertex index pairs that are tetrahedron edges in
/// [`coupled_double_tetrahedron_offsets`].
pub fn tetrahedron_edge_pairs() -> Vec<(usize, usize)> {
    vec![
        (0, 1), // shared edge
        (0, 2),
        (0, 3),
        (1, 2),
        (1, 3),
        (2, 3),
        (0, 4),
        (0, 5),
        (1, 4),
        (1, 5),
        (4, 5),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tetrahedron_edges_have_exact_length() {
        let offs = coupled_double_tetrahedron_offsets(1000.0);
        assert_eq!(offs.len(), 6);
        for (a, b) in tetrahedron_edge_pairs() {
            let d = (offs[a] - offs[b]).norm();
            assert!(
                (d - 1000.0).abs() <= 1e-9,
                "edge ({a},{b}) has length {d}"
            );
        }
        // First vehicle rides the reference path exactly.
        assert_eq!(offs[0], Vector3::zeros());
    }

    #[test]
    fn constant_velocity_path_shifts_exactly() {
        let path = crate::scenario::LeaderPath {
            origin: Vector3::new(1.0, 2.0, 3.0),
            speed: 40.0,
            direction: Vector3::new(-1.0, 0.0, 0.0),
        };
        let dt = 1.0;
        for k in 0..10 {
            let t = k as f64 * dt;
            let step = path.position(t + dt) - path.position(t);
            assert!((step - Vector3::new(-40.0, 0.0, 0.0)).norm() < 1e-12);
        }
    }
}
