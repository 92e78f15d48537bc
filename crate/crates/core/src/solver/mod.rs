//! Maximum-likelihood placement of a store from its sharing neighbors.
//!
//! The negative log-likelihood of a candidate location `q` is
//! `Σ_i -ln p(m_i | dist(p_i, q))` over the known stores whose sharing with
//! the target reaches the threshold. Each unknown store is solved on its own;
//! nothing here holds mutable shared state.

mod gradient;
mod grid;
mod hull;

pub use gradient::{smooth_gradient, solve_gradient};
pub use grid::solve_grid;
pub use hull::{convex_hull, distance_to_hull, project_onto_hull, Hull};

use serde::{Deserialize, Serialize};

use crate::density::ConditionalDensity;
use crate::error::{Error, Result};
use crate::geometry::{dist, PlanarPoint};
use crate::sharing::{Node, SharingGraph, StoreRef};

/// A known store contributing to the likelihood of one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub location: PlanarPoint,
    pub m: f64,
}

/// Known stores sharing at least θ with a target.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborSet {
    neighbors: Vec<Neighbor>,
}

impl NeighborSet {
    pub fn new(neighbors: Vec<Neighbor>) -> Self {
        Self { neighbors }
    }

    /// Neighbors of `node` in `graph` with sharing at least `theta`.
    pub fn from_graph(graph: &SharingGraph, node: Node, theta: f64) -> Self {
        let known = graph.known();
        let neighbors = graph
            .neighbors(node)
            .iter()
            .filter(|adj| adj.m >= theta)
            .map(|adj| Neighbor {
                location: known[adj.known].location,
                m: adj.m,
            })
            .collect();
        Self { neighbors }
    }

    pub fn as_slice(&self) -> &[Neighbor] {
        &self.neighbors
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn locations(&self) -> Vec<PlanarPoint> {
        self.neighbors.iter().map(|n| n.location).collect()
    }

    /// Sharing-weighted centroid.
    pub fn weighted_centroid(&self) -> Option<PlanarPoint> {
        let w: f64 = self.neighbors.iter().map(|n| n.m).sum();
        if self.neighbors.is_empty() || !(w > 0.0) {
            return None;
        }
        let x = self.neighbors.iter().map(|n| n.m * n.location.x).sum::<f64>() / w;
        let y = self.neighbors.iter().map(|n| n.m * n.location.y).sum::<f64>() / w;
        Some(PlanarPoint::new(x, y))
    }
}

/// Which optimiser handles stores with two or more neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    #[default]
    Grid,
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Sharing threshold; weaker neighbors are ignored.
    pub theta: f64,
    /// Coarse grid pitch, meters.
    pub grid_coarse: f64,
    /// Fine grid pitch, meters.
    pub grid_fine: f64,
    /// Padding around the neighbors' bounding box, meters.
    pub hull_margin: f64,
    /// Gradient step multiplier. A value of 1 moves one kilometer per unit of
    /// gradient measured per kilometer.
    pub gd_step: f64,
    /// Gradient descent stops once a step is shorter than this, meters.
    pub gd_tol: f64,
    pub gd_max_iter: usize,
    pub method: SolveMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            theta: 0.15,
            grid_coarse: 50.0,
            grid_fine: 5.0,
            hull_margin: 100.0,
            gd_step: 1.0,
            gd_tol: 0.5,
            gd_max_iter: 1000,
            method: SolveMethod::Grid,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        crate::sharing::validate_theta(self.theta)?;
        let positive = [
            ("grid_coarse", self.grid_coarse),
            ("grid_fine", self.grid_fine),
            ("gd_step", self.gd_step),
            ("gd_tol", self.gd_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.grid_fine > self.grid_coarse {
            return Err(Error::Config("grid_fine must not exceed grid_coarse".into()));
        }
        if !(self.hull_margin >= 0.0) || !self.hull_margin.is_finite() {
            return Err(Error::Config("hull_margin must be non-negative".into()));
        }
        if self.gd_max_iter == 0 {
            return Err(Error::Config("gd_max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    Grid,
    Gradient,
    SingleNeighbor,
    Unresolved,
}

impl MethodTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodTag::Grid => "grid",
            MethodTag::Gradient => "gradient",
            MethodTag::SingleNeighbor => "single_neighbor",
            MethodTag::Unresolved => "unresolved",
        }
    }
}

/// Outcome of placing one store.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solution {
    /// `None` exactly when the store had no neighbors.
    pub location: Option<PlanarPoint>,
    /// Piecewise-constant negative log-likelihood at `location`.
    pub objective: Option<f64>,
    pub n_neighbors: usize,
    pub method: MethodTag,
    /// False only when gradient descent ran out of iterations.
    pub converged: bool,
    pub iterations: usize,
}

impl Solution {
    pub fn unresolved() -> Self {
        Self {
            location: None,
            objective: None,
            n_neighbors: 0,
            method: MethodTag::Unresolved,
            converged: true,
            iterations: 0,
        }
    }

    fn single(neighbors: &NeighborSet, d: &ConditionalDensity) -> Self {
        let n = neighbors.as_slice()[0];
        Self {
            location: Some(n.location),
            objective: Some(objective(n.location, neighbors, d)),
            n_neighbors: 1,
            method: MethodTag::SingleNeighbor,
            converged: true,
            iterations: 0,
        }
    }

    /// Handles the zero- and one-neighbor cases shared by every optimiser.
    fn trivial(neighbors: &NeighborSet, d: &ConditionalDensity) -> Option<Self> {
        match neighbors.len() {
            0 => Some(Self::unresolved()),
            1 => Some(Self::single(neighbors, d)),
            _ => None,
        }
    }
}

/// A placed store.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub store: StoreRef,
    pub solution: Solution,
}

/// Negative log-likelihood of placing the target at `q`.
///
/// # Panics
///
/// If `neighbors` is empty.
pub fn objective(q: PlanarPoint, neighbors: &NeighborSet, d: &ConditionalDensity) -> f64 {
    assert!(!neighbors.is_empty(), "objective needs at least one neighbor");
    neighbors
        .as_slice()
        .iter()
        .map(|n| -d.log_prob(n.m, dist(n.location, q)))
        .sum()
}

/// Same as [`objective`] on the interpolated density.
pub fn smooth_objective(q: PlanarPoint, neighbors: &NeighborSet, d: &ConditionalDensity) -> f64 {
    assert!(!neighbors.is_empty(), "objective needs at least one neighbor");
    neighbors
        .as_slice()
        .iter()
        .map(|n| -d.log_prob_smooth(n.m, dist(n.location, q)))
        .sum()
}

/// Places one store with the configured method.
pub fn solve(neighbors: &NeighborSet, d: &ConditionalDensity, cfg: &SolverConfig) -> Solution {
    match cfg.method {
        SolveMethod::Grid => solve_grid(neighbors, d, cfg),
        SolveMethod::Gradient => match neighbors.weighted_centroid() {
            Some(q0) => solve_gradient(neighbors, d, cfg, q0),
            None => Solution::unresolved(),
        },
    }
}

/// Places every unknown store of `graph`, in unknown-index order.
///
/// Stores are independent, so the work is spread over the current rayon pool;
/// the output does not depend on the pool size.
pub fn solve_unknowns(
    graph: &SharingGraph,
    d: &ConditionalDensity,
    cfg: &SolverConfig,
) -> Vec<InferenceResult> {
    use rayon::prelude::*;
    (0..graph.unknown().len())
        .into_par_iter()
        .map(|j| {
            let node = Node::Unknown(j);
            let neighbors = NeighborSet::from_graph(graph, node, cfg.theta);
            InferenceResult {
                store: graph.store(node).clone(),
                solution: solve(&neighbors, d, cfg),
            }
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod testutil {
    pub use crate::density::testutil::decaying as decaying_density;
}
