//! Gradient descent on the interpolated negative log-likelihood.

use super::{objective, smooth_objective, MethodTag, NeighborSet, Solution, SolverConfig};
use crate::density::ConditionalDensity;
use crate::geometry::{dist, PlanarPoint};

/// Converts `gd_step` into m² so that a step is `α · ∇f` meters with `∇f` in
/// inverse meters.
const STEP_SCALE_M2: f64 = 1e6;

/// Below this distance a neighbor contributes no direction.
const MIN_DIRECTION_DISTANCE_M: f64 = 1.0;

/// Gradient of the interpolated objective at `q`:
/// `Σ_i (d/dr ln p(m_i | r_i)) · (p_i − q) / r_i`.
pub fn smooth_gradient(q: PlanarPoint, neighbors: &NeighborSet, d: &ConditionalDensity) -> (f64, f64) {
    neighbors
        .as_slice()
        .iter()
        .fold((0.0, 0.0), |(gx, gy), n| {
            let r = dist(n.location, q);
            if r < MIN_DIRECTION_DISTANCE_M {
                return (gx, gy);
            }
            let slope = d.d_log_prob_dr(n.m, r);
            (
                gx + slope * (n.location.x - q.x) / r,
                gy + slope * (n.location.y - q.y) / r,
            )
        })
}

/// Descends from `q0` with step halving until the objective decreases.
///
/// Stops when the accepted (or last attempted) step is shorter than
/// `gd_tol`; running out of `gd_max_iter` iterations returns the current
/// point with `converged = false`.
pub fn solve_gradient(
    neighbors: &NeighborSet,
    d: &ConditionalDensity,
    cfg: &SolverConfig,
    q0: PlanarPoint,
) -> Solution {
    if let Some(s) = Solution::trivial(neighbors, d) {
        return s;
    }

    let mut q = q0;
    let mut f = smooth_objective(q, neighbors, d);
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < cfg.gd_max_iter {
        iterations += 1;
        let (gx, gy) = smooth_gradient(q, neighbors, d);
        let norm = gx.hypot(gy);
        if norm == 0.0 {
            converged = true;
            break;
        }
        let mut alpha = cfg.gd_step * STEP_SCALE_M2;
        loop {
            let step = alpha * norm;
            if step < cfg.gd_tol {
                converged = true;
                break 'outer;
            }
            let candidate = PlanarPoint::new(q.x - alpha * gx, q.y - alpha * gy);
            let fc = smooth_objective(candidate, neighbors, d);
            if fc < f {
                q = candidate;
                f = fc;
                if step < cfg.gd_tol {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            alpha *= 0.5;
        }
    }

    Solution {
        location: Some(q),
        objective: Some(objective(q, neighbors, d)),
        n_neighbors: neighbors.len(),
        method: MethodTag::Gradient,
        converged,
        iterations,
    }
}
