//! Coarse-to-fine grid search with bound-based pruning.
//!
//! The search box is the neighbors' bounding box padded by `hull_margin`,
//! covered by a lattice of pitch `grid_fine`. The lattice is split into
//! square blocks whose side is `grid_coarse`. The first lattice point of every
//! block is evaluated to get an initial incumbent; every block whose lower
//! bound does not exceed the incumbent is then scanned at full resolution.
//! Because the objective is a sum of per-neighbor terms that depend only on
//! which distance bin each neighbor falls in, a block's lower bound is the sum
//! of each neighbor's best cell over the distance range the block spans.
//! The result is the exact lattice optimum, which a single refinement window
//! around the best coarse point can miss when the optimal region is narrower
//! than the coarse pitch.
//!
//! Ties are broken by the interpolated objective, then the smaller `y`, then
//! the smaller `x`. Finally the winner is projected onto the neighbors'
//! convex hull whenever that does not worsen the objective.

use std::cmp::Ordering;

use super::{convex_hull, objective, project_onto_hull, smooth_objective, MethodTag, NeighborSet, Solution, SolverConfig};
use crate::density::ConditionalDensity;
use crate::geometry::{dist, PlanarPoint};

#[derive(Debug, Clone, Copy)]
struct Candidate {
    objective: f64,
    smooth: f64,
    point: PlanarPoint,
}

impl Candidate {
    fn rank(&self, other: &Candidate) -> Ordering {
        self.objective
            .total_cmp(&other.objective)
            .then(self.smooth.total_cmp(&other.smooth))
            .then(self.point.y.total_cmp(&other.point.y))
            .then(self.point.x.total_cmp(&other.point.x))
    }
}

struct Lattice {
    x0: f64,
    y0: f64,
    pitch: f64,
    nx: usize,
    ny: usize,
}

impl Lattice {
    fn point(&self, ix: usize, iy: usize) -> PlanarPoint {
        PlanarPoint::new(self.x0 + ix as f64 * self.pitch, self.y0 + iy as f64 * self.pitch)
    }
}

struct Block {
    ix: std::ops::Range<usize>,
    iy: std::ops::Range<usize>,
    bound: f64,
    probe: Candidate,
}

/// Smallest possible objective over the axis-aligned rectangle `[lo, hi]`.
fn lower_bound(
    lo: PlanarPoint,
    hi: PlanarPoint,
    neighbors: &NeighborSet,
    d: &ConditionalDensity,
) -> f64 {
    neighbors
        .as_slice()
        .iter()
        .map(|n| {
            let p = n.location;
            let nearest = PlanarPoint::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y));
            let far_x = if (p.x - lo.x).abs() > (p.x - hi.x).abs() { lo.x } else { hi.x };
            let far_y = if (p.y - lo.y).abs() > (p.y - hi.y).abs() { lo.y } else { hi.y };
            let r_lo = dist(p, nearest);
            let r_hi = dist(p, PlanarPoint::new(far_x, far_y));
            -d.max_log_prob_in(n.m, r_lo, r_hi)
        })
        .sum()
}

/// Maximum-likelihood location by exhaustive lattice search.
///
/// No neighbors gives an unresolved result; exactly one neighbor places the
/// store on that neighbor.
pub fn solve_grid(neighbors: &NeighborSet, d: &ConditionalDensity, cfg: &SolverConfig) -> Solution {
    if let Some(s) = Solution::trivial(neighbors, d) {
        return s;
    }

    let locations = neighbors.locations();
    let (mut min, mut max) = (locations[0], locations[0]);
    for p in &locations[1..] {
        min = PlanarPoint::new(min.x.min(p.x), min.y.min(p.y));
        max = PlanarPoint::new(max.x.max(p.x), max.y.max(p.y));
    }
    let margin = cfg.hull_margin;
    let pitch = cfg.grid_fine;
    let lattice = Lattice {
        x0: min.x - margin,
        y0: min.y - margin,
        pitch,
        nx: ((max.x - min.x + 2.0 * margin) / pitch).ceil() as usize + 1,
        ny: ((max.y - min.y + 2.0 * margin) / pitch).ceil() as usize + 1,
    };
    let side = ((cfg.grid_coarse / pitch).round() as usize).max(1);

    let eval = |ix: usize, iy: usize| {
        let point = lattice.point(ix, iy);
        Candidate {
            objective: objective(point, neighbors, d),
            smooth: smooth_objective(point, neighbors, d),
            point,
        }
    };

    let mut blocks = Vec::new();
    for by in (0..lattice.ny).step_by(side) {
        for bx in (0..lattice.nx).step_by(side) {
            let ix = bx..(bx + side).min(lattice.nx);
            let iy = by..(by + side).min(lattice.ny);
            let lo = lattice.point(ix.start, iy.start);
            let hi = lattice.point(ix.end - 1, iy.end - 1);
            blocks.push(Block {
                bound: lower_bound(lo, hi, neighbors, d),
                probe: eval(bx, by),
                ix,
                iy,
            });
        }
    }

    let mut best = blocks
        .iter()
        .map(|b| b.probe)
        .min_by(|a, b| a.rank(b))
        .expect("search box has at least one block");

    blocks.sort_by(|a, b| {
        a.bound
            .total_cmp(&b.bound)
            .then(a.probe.rank(&b.probe))
    });
    for block in &blocks {
        if block.bound > best.objective {
            break;
        }
        for iy in block.iy.clone() {
            for ix in block.ix.clone() {
                let c = eval(ix, iy);
                if c.rank(&best) == Ordering::Less {
                    best = c;
                }
            }
        }
    }

    let hull = convex_hull(&locations);
    let projected = project_onto_hull(best.point, &hull);
    let mut location = best.point;
    let mut value = best.objective;
    if projected != best.point {
        let v = objective(projected, neighbors, d);
        if v <= best.objective {
            location = projected;
            value = v;
        }
    }

    Solution {
        location: Some(location),
        objective: Some(value),
        n_neighbors: neighbors.len(),
        method: MethodTag::Grid,
        converged: true,
        iterations: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::decaying_density;
    use super::super::{distance_to_hull, Neighbor};
    use super::*;
    use rand::{Rng, SeedableRng};

    fn set(points: &[(f64, f64, f64)]) -> NeighborSet {
        NeighborSet::new(
            points
                .iter()
                .map(|&(x, y, m)| Neighbor {
                    location: PlanarPoint::new(x, y),
                    m,
                })
                .collect(),
        )
    }

    #[test]
    fn single_neighbor_collapses() {
        let d = decaying_density();
        let s = solve_grid(&set(&[(100.0, 200.0, 0.4)]), &d, &SolverConfig::default());
        assert_eq!(s.location, Some(PlanarPoint::new(100.0, 200.0)));
        assert_eq!(s.method, MethodTag::SingleNeighbor);
        assert_eq!(s.n_neighbors, 1);
    }

    #[test]
    fn no_neighbors_unresolved() {
        let d = decaying_density();
        let s = solve_grid(&NeighborSet::default(), &d, &SolverConfig::default());
        assert_eq!(s.method, MethodTag::Unresolved);
        assert_eq!(s.location, None);
    }

    #[test]
    fn coincident_neighbors() {
        let d = decaying_density();
        let s = solve_grid(&set(&[(0.0, 0.0, 0.5), (0.0, 0.0, 0.3)]), &d, &SolverConfig::default());
        assert_eq!(s.location, Some(PlanarPoint::ORIGIN));
        assert_eq!(s.method, MethodTag::Grid);
    }

    #[test]
    fn deterministic() {
        let d = decaying_density();
        let ns = set(&[(0.0, 0.0, 0.5), (700.0, 100.0, 0.3), (300.0, 900.0, 0.2)]);
        let cfg = SolverConfig::default();
        let a = solve_grid(&ns, &d, &cfg);
        for _ in 0..3 {
            assert_eq!(solve_grid(&ns, &d, &cfg), a);
        }
    }

    /// Exhaustive scan of the padded box at 1 m.
    fn brute_force(ns: &NeighborSet, d: &ConditionalDensity, margin: f64) -> (f64, PlanarPoint) {
        let pts = ns.locations();
        let x0 = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - margin;
        let x1 = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + margin;
        let y0 = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - margin;
        let y1 = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + margin;
        let mut best = (f64::INFINITY, PlanarPoint::ORIGIN);
        let mut y = y0;
        while y <= y1 {
            let mut x = x0;
            while x <= x1 {
                let q = PlanarPoint::new(x, y);
                let v = objective(q, ns, d);
                if v < best.0 {
                    best = (v, q);
                }
                x += 1.0;
            }
            y += 1.0;
        }
        best
    }

    #[test]
    fn matches_brute_force_on_small_square() {
        let d = decaying_density();
        let cfg = SolverConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let pts: Vec<_> = (0..4)
                .map(|_| {
                    (
                        rng.random_range(0.0..2000.0),
                        rng.random_range(0.0..2000.0),
                        rng.random_range(0.16..0.6),
                    )
                })
                .collect();
            let ns = set(&pts);
            let s = solve_grid(&ns, &d, &cfg);
            let (oracle, at) = brute_force(&ns, &d, cfg.hull_margin);
            // worst value inside the fine lattice cell holding the oracle point
            let x0 = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - cfg.hull_margin;
            let y0 = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min) - cfg.hull_margin;
            let cx = x0 + ((at.x - x0) / cfg.grid_fine).floor() * cfg.grid_fine;
            let cy = y0 + ((at.y - y0) / cfg.grid_fine).floor() * cfg.grid_fine;
            let mut worst = oracle;
            for i in 0..=5 {
                for j in 0..=5 {
                    let q = PlanarPoint::new(cx + i as f64, cy + j as f64);
                    worst = worst.max(objective(q, &ns, &d));
                }
            }
            assert!(s.objective.unwrap() <= worst + 1e-9, "{} vs oracle {}", s.objective.unwrap(), oracle);
        }
    }

    #[test]
    fn stays_in_hull() {
        let d = decaying_density();
        assert!(d.is_monotone_above(0.15).is_monotone());
        let cfg = SolverConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let pts: Vec<_> = (0..rng.random_range(3..7))
                .map(|_| {
                    (
                        rng.random_range(0.0..1500.0),
                        rng.random_range(0.0..1500.0),
                        rng.random_range(0.16..0.9),
                    )
                })
                .collect();
            let ns = set(&pts);
            let s = solve_grid(&ns, &d, &cfg);
            let hull = convex_hull(&ns.locations());
            assert!(distance_to_hull(s.location.unwrap(), &hull) <= cfg.grid_fine * 2f64.sqrt());
        }
    }
}
