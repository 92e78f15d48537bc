//! Leave-one-out displacement benchmark.
//!
//! Each known store is hidden in turn and placed again from the remaining
//! known stores by every requested method. Displacement is the planar
//! distance between the inferred and true location.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{estimate, ConditionalDensity, Smoothing};
use crate::error::{Error, Result};
use crate::geometry::{dist, PlanarPoint};
use crate::sharing::{Adjacent, Node, SharingGraph, StoreRef};
use crate::solver::{solve, NeighborSet, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Nn1,
    Nn3,
    #[serde(rename = "maxlike")]
    MaxLike,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Nn1, Method::Nn3, Method::MaxLike];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Nn1 => "nn1",
            Method::Nn3 => "nn3",
            Method::MaxLike => "maxlike",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn1" => Ok(Method::Nn1),
            "nn3" => Ok(Method::Nn3),
            "maxlike" => Ok(Method::MaxLike),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// How NN-3 averages its neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nn3Weighting {
    /// Weighted by sharing index.
    #[default]
    Sharing,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    /// Re-estimate the density without the held-out store's pairs.
    pub strict: bool,
    pub nn3_weighting: Nn3Weighting,
    /// Smoothing used when `strict` re-estimates the density.
    pub smoothing: Smoothing,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            strict: false,
            nn3_weighting: Nn3Weighting::default(),
            smoothing: Smoothing::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub median_error_m: Option<f64>,
    pub mean_error_m: Option<f64>,
    pub n_evaluated: usize,
    pub n_unresolved: usize,
}

impl MethodMetrics {
    fn from_errors(errors: &[f64], n_unresolved: usize) -> Self {
        let mean = (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64);
        Self {
            median_error_m: median(errors).ok(),
            mean_error_m: mean,
            n_evaluated: errors.len(),
            n_unresolved,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub n_stores: usize,
    pub median_nn_dist_m: f64,
    pub mean_nn_dist_m: f64,
    /// Mean sharing index with the physically nearest known store.
    pub mean_jmin_nn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub region: String,
    pub per_method: BTreeMap<Method, MethodMetrics>,
    pub per_chain: BTreeMap<String, BTreeMap<Method, MethodMetrics>>,
    pub descriptive: Descriptive,
}

/// Median; even-length input averages the two middle values.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("median of an empty list"));
    }
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (_, &mut upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    if values.len() % 2 == 1 {
        return Ok(upper);
    }
    let lower = v[..mid]
        .iter()
        .copied()
        .max_by(f64::total_cmp)
        .expect("even length >= 2");
    Ok(0.5 * (lower + upper))
}

/// Candidate neighbors of `node` ordered by descending sharing, then by
/// ascending store key.
fn ranked<'g>(graph: &'g SharingGraph, adj: &'g [Adjacent]) -> Vec<&'g Adjacent> {
    let known = graph.known();
    let mut v: Vec<&Adjacent> = adj.iter().filter(|a| a.m > 0.0).collect();
    v.sort_by(|a, b| {
        b.m.total_cmp(&a.m)
            .then_with(|| known[a.known].store.cmp(&known[b.known].store))
    });
    v
}

fn nn1_from(graph: &SharingGraph, adj: &[Adjacent]) -> Option<PlanarPoint> {
    ranked(graph, adj)
        .first()
        .map(|a| graph.known()[a.known].location)
}

fn nn3_from(graph: &SharingGraph, adj: &[Adjacent], weighting: Nn3Weighting) -> Option<PlanarPoint> {
    let top: Vec<&Adjacent> = ranked(graph, adj).into_iter().take(3).collect();
    if top.is_empty() {
        return None;
    }
    let weight = |a: &Adjacent| match weighting {
        Nn3Weighting::Sharing => a.m,
        Nn3Weighting::Uniform => 1.0,
    };
    let total: f64 = top.iter().map(|a| weight(a)).sum();
    let (mut x, mut y) = (0.0, 0.0);
    for a in &top {
        let p = graph.known()[a.known].location;
        x += weight(a) * p.x;
        y += weight(a) * p.y;
    }
    Some(PlanarPoint::new(x / total, y / total))
}

/// Location of the known store sharing the most customers with `target`.
/// Equal sharing goes to the smaller store key.
pub fn nn1(target: &StoreRef, graph: &SharingGraph) -> Option<PlanarPoint> {
    let node = graph.find(target)?;
    nn1_from(graph, graph.neighbors(node))
}

/// Sharing-weighted centroid of the (up to) three strongest neighbors.
pub fn nn3(target: &StoreRef, graph: &SharingGraph, weighting: Nn3Weighting) -> Option<PlanarPoint> {
    let node = graph.find(target)?;
    nn3_from(graph, graph.neighbors(node), weighting)
}

/// Distance to and sharing with the nearest other known store, per store.
fn nearest_known(graph: &SharingGraph) -> Vec<(f64, f64)> {
    let known = graph.known();
    (0..known.len())
        .into_par_iter()
        .map(|i| {
            let mut best: Option<(f64, usize)> = None;
            for (j, other) in known.iter().enumerate() {
                if j == i {
                    continue;
                }
                let r = dist(known[i].location, other.location);
                if best.is_none_or(|(b, _)| r < b) {
                    best = Some((r, j));
                }
            }
            let (r, j) = best.expect("at least two known stores");
            (r, graph.known_pair_m(i, j))
        })
        .collect()
}

/// Store-density summary over the known stores.
pub fn descriptive_stats(graph: &SharingGraph) -> Result<Descriptive> {
    let n = graph.known().len();
    if n < 2 {
        return Err(Error::InsufficientKnown {
            found: n,
            required: 2,
        });
    }
    let nearest = nearest_known(graph);
    let dists: Vec<f64> = nearest.iter().map(|&(r, _)| r).collect();
    Ok(Descriptive {
        n_stores: n,
        median_nn_dist_m: median(&dists)?,
        mean_nn_dist_m: dists.iter().sum::<f64>() / n as f64,
        mean_jmin_nn: nearest.iter().map(|&(_, m)| m).sum::<f64>() / n as f64,
    })
}

/// Per-store outcome: displacement per method, `None` when unresolved.
struct Held {
    merchant: String,
    errors: BTreeMap<Method, Option<f64>>,
}

fn density_without(
    graph: &SharingGraph,
    held_out: usize,
    d: &ConditionalDensity,
    smoothing: Smoothing,
) -> Result<ConditionalDensity> {
    let known = graph.known();
    let pairs: Vec<(f64, f64)> = graph
        .known_pairs()
        .iter()
        .filter(|p| p.a != held_out && p.b != held_out)
        .map(|p| (p.m, dist(known[p.a].location, known[p.b].location)))
        .collect();
    estimate(&pairs, d.scheme(), smoothing)
}

/// Leave-one-out evaluation over every known store of `graph`.
pub fn leave_one_out(
    graph: &SharingGraph,
    d: &ConditionalDensity,
    cfg: &SolverConfig,
    eval: &EvalConfig,
) -> Result<EvalReport> {
    let n = graph.known().len();
    if n < 2 {
        return Err(Error::InsufficientKnown {
            found: n,
            required: 2,
        });
    }
    cfg.validate()?;
    let descriptive = descriptive_stats(graph)?;
    let mut methods = eval.methods.clone();
    methods.sort();
    methods.dedup();

    let held: Vec<Held> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Held> {
            let truth = graph.known()[i].location;
            // a known node's adjacency never contains itself
            let adj: Vec<Adjacent> = graph
                .neighbors(Node::Known(i))
                .iter()
                .filter(|a| a.m >= cfg.theta)
                .copied()
                .collect();
            let strict_density;
            let density = if eval.strict {
                strict_density = density_without(graph, i, d, eval.smoothing)?;
                &strict_density
            } else {
                d
            };
            let mut errors = BTreeMap::new();
            for &m in &methods {
                let inferred = match m {
                    Method::Nn1 => nn1_from(graph, &adj),
                    Method::Nn3 => nn3_from(graph, &adj, eval.nn3_weighting),
                    Method::MaxLike => {
                        let ns = NeighborSet::from_graph(graph, Node::Known(i), cfg.theta);
                        solve(&ns, density, cfg).location
                    }
                };
                errors.insert(m, inferred.map(|q| dist(q, truth)));
            }
            Ok(Held {
                merchant: graph.known()[i].store.merchant.clone(),
                errors,
            })
        })
        .collect::<Result<_>>()?;

    let aggregate = |rows: &[&Held]| -> BTreeMap<Method, MethodMetrics> {
        methods
            .iter()
            .map(|&m| {
                let errs: Vec<f64> = rows.iter().filter_map(|h| h.errors[&m]).collect();
                let unresolved = rows.len() - errs.len();
                (m, MethodMetrics::from_errors(&errs, unresolved))
            })
            .collect()
    };

    let all: Vec<&Held> = held.iter().collect();
    let per_method = aggregate(&all);
    let mut chains: BTreeMap<&str, Vec<&Held>> = BTreeMap::new();
    for h in &held {
        chains.entry(h.merchant.as_str()).or_default().push(h);
    }
    let per_chain = chains
        .into_iter()
        .map(|(chain, rows)| (chain.to_string(), aggregate(&rows)))
        .collect();

    Ok(EvalReport {
        region: String::new(),
        per_method,
        per_chain,
        descriptive,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into())
}

impl EvalReport {
    /// One row per method (scope `all`), then one per chain and method.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "region",
            "scope",
            "method",
            "median_error_m",
            "mean_error_m",
            "n_evaluated",
            "n_unresolved",
        ])?;
        let rows = self
            .per_method
            .iter()
            .map(|(m, x)| ("all", m, x))
            .chain(
                self.per_chain
                    .iter()
                    .flat_map(|(c, ms)| ms.iter().map(move |(m, x)| (c.as_str(), m, x))),
            );
        for (scope, method, metrics) in rows {
            w.write_record([
                self.region.as_str(),
                scope,
                method.as_str(),
                &metrics.median_error_m.map(|v| format!("{v:.3}")).unwrap_or_default(),
                &metrics.mean_error_m.map(|v| format!("{v:.3}")).unwrap_or_default(),
                &metrics.n_evaluated.to_string(),
                &metrics.n_unresolved.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
    }

    /// Aligned plain-text tables: median error per method, then per chain.
    pub fn to_table(&self) -> String {
        let methods: Vec<Method> = self.per_method.keys().copied().collect();
        let mut out = String::new();
        let title = if self.region.is_empty() { "region" } else { &self.region };

        let _ = writeln!(out, "Median displacement error (m)");
        let _ = write!(out, "{:<20}", "City");
        for m in &methods {
            let _ = write!(out, "{:>10}", m.as_str().to_uppercase());
        }
        let _ = writeln!(out, "{:>8}", "n");
        let _ = write!(out, "{title:<20}");
        for m in &methods {
            let _ = write!(out, "{:>10}", fmt_opt(self.per_method[m].median_error_m));
        }
        let _ = writeln!(out, "{:>8}", self.descriptive.n_stores);

        let _ = writeln!(out);
        let _ = writeln!(out, "By chain");
        let _ = write!(out, "{:<20}", "Chain");
        for m in &methods {
            let _ = write!(out, "{:>10}", m.as_str().to_uppercase());
        }
        let _ = writeln!(out, "{:>8}", "n");
        for (chain, metrics) in &self.per_chain {
            let _ = write!(out, "{chain:<20}");
            for m in &methods {
                let _ = write!(out, "{:>10}", fmt_opt(metrics[m].median_error_m));
            }
            let n = metrics
                .values()
                .next()
                .map(|x| x.n_evaluated + x.n_unresolved)
                .unwrap_or(0);
            let _ = writeln!(out, "{n:>8}");
        }
        out
    }
}

impl Descriptive {
    pub fn to_table(&self, region: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20}{:>8}{:>16}{:>16}{:>14}",
            "City", "n", "median NN (m)", "mean NN (m)", "mean Jmin NN"
        );
        let _ = writeln!(
            out,
            "{:<20}{:>8}{:>16.1}{:>16.1}{:>14.3}",
            region, self.n_stores, self.median_nn_dist_m, self.mean_nn_dist_m, self.mean_jmin_nn
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::BinningScheme;
    use crate::sharing::{build_graph, CustomerSet};
    use rand::{Rng, SeedableRng};

    fn graph_of(stores: &[(&str, f64, f64, &[u32])], unknown: &[(&str, &[u32])]) -> SharingGraph {
        let mut sets = Vec::new();
        let mut known = BTreeMap::new();
        for &(id, x, y, users) in stores {
            let s = StoreRef::new(id.split(':').next().unwrap(), id);
            known.insert(s.clone(), PlanarPoint::new(x, y));
            sets.push(CustomerSet::new(s, users.iter().copied()));
        }
        for &(id, users) in unknown {
            sets.push(CustomerSet::new(StoreRef::new("u", id), users.iter().copied()));
        }
        build_graph(&sets, &known, 0.0).unwrap()
    }

    #[test]
    fn median_rules() {
        assert_eq!(median(&[5.0]).unwrap(), 5.0);
        assert_eq!(median(&[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(median(&[300.0, 100.0, 200.0]).unwrap(), 200.0);
        assert!(median(&[]).is_err());
    }

    #[test]
    fn median_matches_full_sort() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for len in [1001, 1000, 2, 7] {
            let v: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1e4)).collect();
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            let expect = if len % 2 == 1 {
                s[len / 2]
            } else {
                (s[len / 2 - 1] + s[len / 2]) / 2.0
            };
            assert_eq!(median(&v).unwrap(), expect);
        }
    }

    #[test]
    fn nn1_picks_strongest_then_smallest_key() {
        // target shares 2/3 with A... and 1/3 with B
        let g = graph_of(
            &[("a:1", 0.0, 0.0, &[1, 9, 8]), ("b:1", 100.0, 0.0, &[1, 2, 7])],
            &[("t", &[1, 2, 3])],
        );
        let t = StoreRef::new("u", "t");
        assert_eq!(nn1(&t, &g), Some(PlanarPoint::new(100.0, 0.0)));

        let g = graph_of(
            &[("b:1", 100.0, 0.0, &[1, 7, 8]), ("a:1", 0.0, 0.0, &[1, 9, 8])],
            &[("t", &[1, 2, 3])],
        );
        assert_eq!(nn1(&t, &g), Some(PlanarPoint::new(0.0, 0.0)));
    }

    #[test]
    fn nn_without_neighbors_is_unresolved() {
        let g = graph_of(&[("a:1", 0.0, 0.0, &[1])], &[("t", &[2])]);
        let t = StoreRef::new("u", "t");
        assert_eq!(nn1(&t, &g), None);
        assert_eq!(nn3(&t, &g, Nn3Weighting::Sharing), None);
    }

    #[test]
    fn nn3_centroids() {
        let g = graph_of(
            &[
                ("a:1", 0.0, 0.0, &[1, 10]),
                ("b:1", 300.0, 0.0, &[1, 11]),
                ("c:1", 0.0, 300.0, &[1, 12]),
            ],
            &[("t", &[1, 2])],
        );
        let t = StoreRef::new("u", "t");
        let c = nn3(&t, &g, Nn3Weighting::Sharing).unwrap();
        assert!((c.x - 100.0).abs() < 1e-9 && (c.y - 100.0).abs() < 1e-9);

        let single = graph_of(&[("a:1", 5.0, 7.0, &[1])], &[("t", &[1])]);
        assert_eq!(nn3(&t, &single, Nn3Weighting::Sharing), Some(PlanarPoint::new(5.0, 7.0)));
    }

    #[test]
    fn nn3_weighted_average() {
        // sharing 0.6, 0.2, 0.2 with a ten-customer target
        let target: Vec<u32> = (0..10).collect();
        let a: Vec<u32> = (0..6).chain(100..104).collect();
        let b: Vec<u32> = (0..2).chain(200..208).collect();
        let c: Vec<u32> = (2..4).chain(300..308).collect();
        let g = graph_of(
            &[("a:1", 0.0, 0.0, &a), ("b:1", 1000.0, 0.0, &b), ("c:1", 0.0, 500.0, &c)],
            &[("t", &target)],
        );
        let t = StoreRef::new("u", "t");
        let got = nn3(&t, &g, Nn3Weighting::Sharing).unwrap();
        let expect = PlanarPoint::new((0.6 * 0.0 + 0.2 * 1000.0 + 0.2 * 0.0) / 1.0, (0.2 * 500.0) / 1.0);
        assert!(dist(got, expect) < 1e-9, "{got:?}");
        let flat = nn3(&t, &g, Nn3Weighting::Uniform).unwrap();
        assert!(dist(flat, PlanarPoint::new(1000.0 / 3.0, 500.0 / 3.0)) < 1e-9);
    }

    fn flat_density() -> ConditionalDensity {
        estimate(&[(0.5, 10.0)], &BinningScheme::default(), Smoothing::default()).unwrap()
    }

    #[test]
    fn two_store_forced_assignment() {
        let g = graph_of(&[("a:1", 0.0, 0.0, &[1, 2]), ("b:1", 400.0, 300.0, &[2, 3])], &[]);
        let cfg = SolverConfig {
            theta: 0.0,
            ..Default::default()
        };
        let r = leave_one_out(&g, &flat_density(), &cfg, &EvalConfig::default()).unwrap();
        let nn1 = &r.per_method[&Method::Nn1];
        assert_eq!(nn1.n_evaluated, 2);
        assert_eq!(nn1.median_error_m, Some(500.0));
        assert_eq!(r.per_method[&Method::MaxLike].median_error_m, Some(500.0));
        assert_eq!(r.descriptive.median_nn_dist_m, 500.0);
        assert_eq!(r.per_chain.len(), 2);
    }

    #[test]
    fn bookkeeping_adds_up() {
        let g = graph_of(
            &[
                ("a:1", 0.0, 0.0, &[1, 2]),
                ("a:2", 400.0, 300.0, &[2, 3]),
                ("b:1", 900.0, 0.0, &[7, 8]),
            ],
            &[],
        );
        let cfg = SolverConfig {
            theta: 0.1,
            ..Default::default()
        };
        let r = leave_one_out(&g, &flat_density(), &cfg, &EvalConfig::default()).unwrap();
        for m in r.per_method.values() {
            assert_eq!(m.n_evaluated + m.n_unresolved, 3);
            assert_eq!(m.n_unresolved, 1);
        }
        assert_eq!(r.per_chain["a"][&Method::Nn1].n_evaluated, 2);
        assert_eq!(r.per_chain["b"][&Method::Nn1].n_unresolved, 1);
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 1 + 3 + 2 * 3);
        assert!(r.to_table().contains("NN1"));
    }

    #[test]
    fn needs_two_known_stores() {
        let g = graph_of(&[("a:1", 0.0, 0.0, &[1])], &[]);
        assert!(matches!(
            leave_one_out(&g, &flat_density(), &SolverConfig::default(), &EvalConfig::default()),
            Err(Error::InsufficientKnown { .. })
        ));
        assert!(descriptive_stats(&g).is_err());
    }

    #[test]
    fn colocated_stores_have_zero_nearest_distance() {
        let g = graph_of(
            &[("a:1", 50.0, 50.0, &[1]), ("b:1", 50.0, 50.0, &[1]), ("c:1", 950.0, 50.0, &[2])],
            &[],
        );
        let s = descriptive_stats(&g).unwrap();
        assert_eq!(s.median_nn_dist_m, 0.0);
        assert_eq!(s.n_stores, 3);
    }

    #[test]
    fn descriptive_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let stores: Vec<(String, f64, f64, Vec<u32>)> = (0..50)
            .map(|i| {
                let users = (0..5).map(|_| rng.random_range(0..40)).collect();
                (format!("s:{i:02}"), rng.random_range(0.0..5000.0), rng.random_range(0.0..5000.0), users)
            })
            .collect();
        let refs: Vec<(&str, f64, f64, &[u32])> =
            stores.iter().map(|(s, x, y, u)| (s.as_str(), *x, *y, u.as_slice())).collect();
        let g = graph_of(&refs, &[]);
        let s = descriptive_stats(&g).unwrap();

        let mut nn = Vec::new();
        for (i, a) in stores.iter().enumerate() {
            let best = stores
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| ((a.1 - b.1).powi(2) + (a.2 - b.2).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            nn.push(best);
        }
        let mean = nn.iter().sum::<f64>() / 50.0;
        nn.sort_by(f64::total_cmp);
        assert!((s.mean_nn_dist_m - mean).abs() < 1e-9);
        assert!((s.median_nn_dist_m - (nn[24] + nn[25]) / 2.0).abs() < 1e-9);
    }
}
