//! Shortest-path approximation of the Carnot–Carathéodory control distance.
//!
//! The graph lives on a grid whose planar spacing is h and whose t-spacing is
//! h²/2. A constant-control horizontal segment starting at a grid node with
//! planar step (ih, jh) ends at t + (h²/2)(j·aₓ − i·a_y) where (aₓ, a_y) are
//! the integer planar indices, so every edge lands exactly on a node and each
//! edge cost is the true sub-Riemannian length h·√(i²+j²) of the segment.
//! Graph distances therefore upper-bound the control distance, with the upper
//! bound tightening as the direction set and resolution grow.
//!
//! This is calibration machinery (gauge/CC equivalence constants); nothing in
//! the inner loops of the crate calls it.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{CarnotError, Result};
use crate::group::{CarnotGroup, GroupPoint};

/// Bounding box and direction set for the grid search.
#[derive(Debug, Clone)]
pub struct CcConfig {
    /// Planar half-width of the box; both endpoints must fit inside.
    pub half_width: f64,
    /// Half-extent of the t-window. Paths may not leave it.
    pub t_half: f64,
}

impl CcConfig {
    /// Box large enough for both endpoints plus wandering room for
    /// near-optimal paths (the t-gain of a loop is the area it encloses).
    pub fn for_pair(a: GroupPoint, b: GroupPoint) -> Self {
        let planar = a.0[0]
            .abs()
            .max(a.0[1].abs())
            .max(b.0[0].abs())
            .max(b.0[1].abs());
        let half_width = planar * 1.3 + 0.5;
        let t_half = a.0[2].abs().max(b.0[2].abs()) * 2.0 + 0.5 * half_width * half_width;
        CcConfig { half_width, t_half }
    }
}

/// Planar steps (i, j); each generates an exact horizontal segment.
const DIRECTIONS: [(i64, i64); 16] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
    (1, 2),
    (1, -2),
    (-1, 2),
    (-1, -2),
    (2, 1),
    (2, -1),
    (-2, 1),
    (-2, -1),
];

/// Approximate d_CC(a, b) by Dijkstra over horizontal segments.
///
/// `resolution` is the number of planar nodes per axis (≥ 16). Endpoints are
/// snapped to the nearest node; the returned length is exact for the snapped
/// pair up to the direction-set overhead.
pub fn cc_distance_approx(
    group: &CarnotGroup,
    a: GroupPoint,
    b: GroupPoint,
    resolution: usize,
    cfg: &CcConfig,
) -> Result<f64> {
    if resolution < 16 {
        return Err(CarnotError::Domain(format!(
            "cc resolution must be ≥ 16, got {resolution}"
        )));
    }
    for p in [a, b] {
        if p.0[0].abs() > cfg.half_width
            || p.0[1].abs() > cfg.half_width
            || p.0[2].abs() > cfg.t_half
        {
            return Err(CarnotError::Domain(format!(
                "point {p} outside the declared cc box"
            )));
        }
    }
    debug_assert_eq!(group.generators(), 2);

    // Odd node count so the planar origin is a node.
    let n = if resolution % 2 == 0 { resolution + 1 } else { resolution };
    let half = (n as i64 - 1) / 2;
    let h = cfg.half_width / half as f64;
    let ht = 0.5 * h * h;
    let lt = (cfg.t_half / ht).ceil() as i64;
    let nt = (2 * lt + 1) as usize;

    let snap = |p: GroupPoint| -> (i64, i64, i64) {
        (
            (p.0[0] / h).round() as i64,
            (p.0[1] / h).round() as i64,
            (p.0[2] / ht).round() as i64,
        )
    };
    let idx = |ax: i64, ay: i64, at: i64| -> usize {
        (((ax + half) as usize * n) + (ay + half) as usize) * nt + (at + lt) as usize
    };

    let start = snap(a);
    let goal = snap(b);
    if start == goal {
        return Ok(0.0);
    }

    let total = n * n * nt;
    let mut dist = vec![f64::INFINITY; total];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    let start_idx = idx(start.0, start.1, start.2);
    let goal_idx = idx(goal.0, goal.1, goal.2);
    dist[start_idx] = 0.0;
    heap.push(Reverse((0, start_idx)));

    let costs: Vec<f64> = DIRECTIONS
        .iter()
        .map(|&(i, j)| h * ((i * i + j * j) as f64).sqrt())
        .collect();

    while let Some(Reverse((key, node))) = heap.pop() {
        let d = f64::from_bits(key);
        if node == goal_idx {
            return Ok(d);
        }
        if d > dist[node] {
            continue;
        }
        // Recover integer indices.
        let at = (node % nt) as i64 - lt;
        let rest = node / nt;
        let ay = (rest % n) as i64 - half;
        let ax = (rest / n) as i64 - half;
        for (k, &(i, j)) in DIRECTIONS.iter().enumerate() {
            let (bx, by) = (ax + i, ay + j);
            if bx.abs() > half || by.abs() > half {
                continue;
            }
            // t-shift of the exact horizontal segment, in units of ht.
            let bt = at + j * ax - i * ay;
            if bt.abs() > lt {
                continue;
            }
            let nd = d + costs[k];
            let ni = idx(bx, by, bt);
            if nd < dist[ni] {
                dist[ni] = nd;
                heap.push(Reverse((nd.to_bits(), ni)));
            }
        }
    }
    Err(CarnotError::Domain(
        "cc target unreachable inside the declared box (t-window too small)".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_for_identical_points() {
        let g = CarnotGroup::heisenberg();
        let p = GroupPoint::new(0.3, -0.2, 0.05);
        let cfg = CcConfig::for_pair(p, p);
        assert_eq!(cc_distance_approx(&g, p, p, 33, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn horizontal_segment_is_exact() {
        // The x-axis segment is a CC geodesic of length 1; the grid contains
        // it, so the graph distance matches to endpoint-snapping accuracy
        // (one planar cell per endpoint, hence the resolutions below).
        let g = CarnotGroup::heisenberg();
        let a = GroupPoint::origin();
        let b = GroupPoint::new(1.0, 0.0, 0.0);
        let cfg = CcConfig::for_pair(a, b);
        for res in [33, 65] {
            let d = cc_distance_approx(&g, a, b, res, &cfg).unwrap();
            assert!((d - 1.0).abs() < 0.05, "res {res}: d = {d}");
        }
    }

    #[test]
    fn vertical_pair_against_isoperimetric_length() {
        // d_CC(0, (0,0,τ)) = 2√(πτ): the optimal lift encloses area τ with a
        // circle. The graph value must bound it from above within the
        // direction-set overhead.
        let g = CarnotGroup::heisenberg();
        let tau = 0.25;
        let a = GroupPoint::origin();
        let b = GroupPoint::new(0.0, 0.0, tau);
        let exact = 2.0 * (std::f64::consts::PI * tau).sqrt();
        let cfg = CcConfig::for_pair(a, b);
        let d = cc_distance_approx(&g, a, b, 33, &cfg).unwrap();
        assert!(d >= exact * 0.97, "graph distance {d} below exact {exact}");
        assert!(d <= exact * 1.20, "graph distance {d} too loose vs {exact}");
    }

    #[test]
    fn gauge_equivalence_constant_is_bounded() {
        let g = CarnotGroup::heisenberg();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut k: f64 = 1.0;
        for _ in 0..100 {
            let a = GroupPoint::new(
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.3..0.3),
            );
            let b = GroupPoint::new(
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.3..0.3),
            );
            let rho = g.quasi_distance(a, b);
            if rho < 0.2 {
                continue;
            }
            let cfg = CcConfig::for_pair(a, b);
            let cc = cc_distance_approx(&g, a, b, 17, &cfg).unwrap();
            k = k.max(cc / rho).max(rho / cc);
        }
        // Equivalence constant between the gauge and the (overestimated)
        // graph distance; recorded magnitude, generous sanity bound.
        assert!(k < 4.0, "measured equivalence constant {k}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = CarnotGroup::heisenberg();
        let a = GroupPoint::origin();
        let b = GroupPoint::new(1.0, 0.0, 0.0);
        let cfg = CcConfig::for_pair(a, b);
        assert!(cc_distance_approx(&g, a, b, 8, &cfg).is_err());
        let far = GroupPoint::new(100.0, 0.0, 0.0);
        assert!(cc_distance_approx(&g, a, far, 33, &cfg).is_err());
    }
}
