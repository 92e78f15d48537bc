//! Empirical conditional distribution of sharing given distance, `p(m | r)`.
//!
//! Observations from pairs of known stores are binned on a distance × sharing
//! grid. Each distance row is normalised with additive smoothing so that no
//! cell is ever zero and the negative log-likelihood stays finite.

use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance bin edges used when none are configured, in meters.
pub const DEFAULT_R_EDGES: [f64; 6] = [0.0, 200.0, 500.0, 1000.0, 5000.0, 10000.0];
/// Number of equal-width sharing bins used when none are configured.
pub const DEFAULT_M_BINS: usize = 20;

const FORMAT_HEADER: &str = "storeloc-density v1";

/// Bin edges for distance (`r`) and sharing (`m`).
///
/// Distances at or beyond the last edge fall into the last distance bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme")]
pub struct BinningScheme {
    r_edges: Vec<f64>,
    m_edges: Vec<f64>,
}

#[derive(Deserialize)]
struct RawScheme {
    r_edges: Vec<f64>,
    m_edges: Vec<f64>,
}

impl TryFrom<RawScheme> for BinningScheme {
    type Error = Error;

    fn try_from(raw: RawScheme) -> Result<Self> {
        BinningScheme::new(raw.r_edges, raw.m_edges)
    }
}

fn strictly_ascending(edges: &[f64]) -> bool {
    edges.iter().all(|e| e.is_finite()) && edges.windows(2).all(|w| w[0] < w[1])
}

impl BinningScheme {
    pub fn new(r_edges: Vec<f64>, m_edges: Vec<f64>) -> Result<Self> {
        if r_edges.len() < 2 || !strictly_ascending(&r_edges) || r_edges[0] != 0.0 {
            return Err(Error::Config(
                "r_edges must start at 0 and be strictly ascending with at least two edges".into(),
            ));
        }
        if m_edges.len() < 2
            || !strictly_ascending(&m_edges)
            || m_edges[0] != 0.0
            || m_edges[m_edges.len() - 1] != 1.0
        {
            return Err(Error::Config(
                "m_edges must span [0, 1] and be strictly ascending".into(),
            ));
        }
        Ok(Self { r_edges, m_edges })
    }

    /// Equal-width sharing bins. Edges are computed as `k / n` so that values
    /// such as 0.15 land exactly on an edge.
    pub fn uniform_m_edges(n: usize) -> Vec<f64> {
        (0..=n).map(|k| k as f64 / n as f64).collect()
    }

    pub fn r_edges(&self) -> &[f64] {
        &self.r_edges
    }

    pub fn m_edges(&self) -> &[f64] {
        &self.m_edges
    }

    pub fn r_max(&self) -> f64 {
        self.r_edges[self.r_edges.len() - 1]
    }

    pub fn n_r(&self) -> usize {
        self.r_edges.len() - 1
    }

    pub fn n_m(&self) -> usize {
        self.m_edges.len() - 1
    }

    /// Distance bin of `r`. A value on an interior edge belongs to the upper bin.
    pub fn r_bin(&self, r: f64) -> usize {
        let k = self.r_edges.partition_point(|&e| e <= r);
        k.saturating_sub(1).min(self.n_r() - 1)
    }

    /// Sharing bin of `m`; `m == 1` belongs to the last bin.
    pub fn m_bin(&self, m: f64) -> usize {
        let k = self.m_edges.partition_point(|&e| e <= m);
        k.saturating_sub(1).min(self.n_m() - 1)
    }

    /// Midpoints of the distance bins.
    pub fn r_centers(&self) -> Vec<f64> {
        self.r_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

impl Default for BinningScheme {
    fn default() -> Self {
        Self {
            r_edges: DEFAULT_R_EDGES.to_vec(),
            m_edges: Self::uniform_m_edges(DEFAULT_M_BINS),
        }
    }
}

/// Additive smoothing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Smoothing {
    /// Pseudo-count added to every cell.
    pub lambda: f64,
    /// Lower bound on every cell probability.
    pub floor: f64,
}

impl Default for Smoothing {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            floor: 1e-6,
        }
    }
}

/// Binned, row-normalised `p(m | r)` table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDensity {
    scheme: BinningScheme,
    /// Row-major `[n_r × n_m]` probabilities.
    table: Vec<f64>,
    log_table: Vec<f64>,
    centers: Vec<f64>,
    /// Raw pair counts; absent when the table was loaded from a file.
    counts: Option<Vec<u64>>,
    floor: f64,
    degenerate_rows: Vec<usize>,
}

/// Builds the density from `(m, r)` observations.
///
/// Row `i` is `(counts[i] + λ) / Σ(counts[i] + λ)`, where λ is the configured
/// pseudo-count, raised per row if needed so that every cell reaches the
/// floor. Rows with no observations come out uniform and are reported in
/// [`ConditionalDensity::degenerate_rows`].
pub fn estimate(
    pairs: &[(f64, f64)],
    scheme: &BinningScheme,
    smoothing: Smoothing,
) -> Result<ConditionalDensity> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no pairs to estimate the density from"));
    }
    let (n_r, n_m) = (scheme.n_r(), scheme.n_m());
    if !(smoothing.lambda > 0.0) || !smoothing.lambda.is_finite() {
        return Err(Error::Config("smoothing lambda must be positive".into()));
    }
    if !(smoothing.floor > 0.0) || smoothing.floor * n_m as f64 >= 1.0 {
        return Err(Error::Config(format!(
            "floor must lie in (0, 1/{n_m})"
        )));
    }

    let mut counts = vec![0u64; n_r * n_m];
    for &(m, r) in pairs {
        if !(0.0..=1.0).contains(&m) || !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Internal(format!(
                "observation out of domain: m={m}, r={r}"
            )));
        }
        counts[scheme.r_bin(r) * n_m + scheme.m_bin(m)] += 1;
    }
    Ok(ConditionalDensity::from_counts(scheme.clone(), counts, smoothing))
}

impl ConditionalDensity {
    fn from_counts(scheme: BinningScheme, counts: Vec<u64>, smoothing: Smoothing) -> Self {
        let (n_r, n_m) = (scheme.n_r(), scheme.n_m());
        let floor = smoothing.floor;
        let mut table = vec![0.0; n_r * n_m];
        let mut degenerate_rows = Vec::new();

        for i in 0..n_r {
            let row = &counts[i * n_m..(i + 1) * n_m];
            let total: u64 = row.iter().sum();
            if total == 0 {
                degenerate_rows.push(i);
            }
            // smallest pseudo-count for which an empty cell reaches the floor
            let needed = floor * total as f64 / (1.0 - n_m as f64 * floor);
            let lambda = smoothing.lambda.max(needed * (1.0 + 1e-9));
            let denom = total as f64 + n_m as f64 * lambda;
            for (j, &c) in row.iter().enumerate() {
                table[i * n_m + j] = (c as f64 + lambda) / denom;
            }
        }
        let log_table = table.iter().map(|p| p.ln()).collect();

        Self {
            centers: scheme.r_centers(),
            scheme,
            table,
            log_table,
            counts: Some(counts),
            floor,
            degenerate_rows,
        }
    }

    /// Builds a density directly from a probability table, e.g. for tests or
    /// after loading from disk. Rows must sum to one and every cell must be at
    /// least `floor`.
    pub fn from_table(scheme: BinningScheme, table: Vec<Vec<f64>>, floor: f64) -> Result<Self> {
        let (n_r, n_m) = (scheme.n_r(), scheme.n_m());
        if table.len() != n_r || table.iter().any(|row| row.len() != n_m) {
            return Err(Error::Config(format!(
                "table must be {n_r} x {n_m} to match the binning scheme"
            )));
        }
        if !(floor > 0.0) {
            return Err(Error::Config("floor must be positive".into()));
        }
        for (i, row) in table.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("row {i} sums to {sum}, not 1")));
            }
            if row.iter().any(|&p| !(p >= floor)) {
                return Err(Error::Config(format!("row {i} has a cell below the floor")));
            }
        }
        let table: Vec<f64> = table.into_iter().flatten().collect();
        let log_table = table.iter().map(|p| p.ln()).collect();
        Ok(Self {
            centers: scheme.r_centers(),
            scheme,
            table,
            log_table,
            counts: None,
            floor,
            degenerate_rows: Vec::new(),
        })
    }

    pub fn scheme(&self) -> &BinningScheme {
        &self.scheme
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn degenerate_rows(&self) -> &[usize] {
        &self.degenerate_rows
    }

    pub fn prob(&self, r_bin: usize, m_bin: usize) -> f64 {
        self.table[r_bin * self.scheme.n_m() + m_bin]
    }

    pub fn row(&self, r_bin: usize) -> &[f64] {
        let n_m = self.scheme.n_m();
        &self.table[r_bin * n_m..(r_bin + 1) * n_m]
    }

    pub fn count(&self, r_bin: usize, m_bin: usize) -> Option<u64> {
        self.counts
            .as_ref()
            .map(|c| c[r_bin * self.scheme.n_m() + m_bin])
    }

    #[inline]
    fn log_cell(&self, r_bin: usize, m_bin: usize) -> f64 {
        self.log_table[r_bin * self.scheme.n_m() + m_bin]
    }

    /// Piecewise-constant `ln p(m | r)`.
    #[inline]
    pub fn log_prob(&self, m: f64, r: f64) -> f64 {
        self.log_cell(self.scheme.r_bin(r), self.scheme.m_bin(m))
    }

    /// Largest `ln p(m | r)` over distances in `[r_lo, r_hi]`.
    pub fn max_log_prob_in(&self, m: f64, r_lo: f64, r_hi: f64) -> f64 {
        let j = self.scheme.m_bin(m);
        let (lo, hi) = (self.scheme.r_bin(r_lo), self.scheme.r_bin(r_hi));
        (lo..=hi)
            .map(|i| self.log_cell(i, j))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Left knot of the interpolation segment containing `r`, or `None` in
    /// the flat zones outside the outermost centers.
    #[inline]
    fn segment(&self, r: f64) -> Option<usize> {
        let c = &self.centers;
        if r < c[0] || r >= c[c.len() - 1] {
            return None;
        }
        Some(c.partition_point(|&x| x <= r) - 1)
    }

    /// `ln p(m | r)` linearly interpolated in `r` between bin centers,
    /// constant beyond the first and last center.
    pub fn log_prob_smooth(&self, m: f64, r: f64) -> f64 {
        let j = self.scheme.m_bin(m);
        let c = &self.centers;
        match self.segment(r) {
            Some(k) => {
                let (v0, v1) = (self.log_cell(k, j), self.log_cell(k + 1, j));
                v0 + (r - c[k]) * (v1 - v0) / (c[k + 1] - c[k])
            }
            None if r < c[0] => self.log_cell(0, j),
            None => self.log_cell(c.len() - 1, j),
        }
    }

    /// Slope of [`Self::log_prob_smooth`] in `r`; at a knot, the slope of the
    /// segment to its right.
    pub fn d_log_prob_dr(&self, m: f64, r: f64) -> f64 {
        let j = self.scheme.m_bin(m);
        let c = &self.centers;
        match self.segment(r) {
            Some(k) => (self.log_cell(k + 1, j) - self.log_cell(k, j)) / (c[k + 1] - c[k]),
            None => 0.0,
        }
    }

    /// Checks that, for every sharing bin whose lower edge is at least
    /// `theta`, probability never increases with distance.
    pub fn is_monotone_above(&self, theta: f64) -> MonotonicityReport {
        let edges = self.scheme.m_edges();
        let mut violations = Vec::new();
        for j in 0..self.scheme.n_m() {
            if edges[j] < theta {
                continue;
            }
            for i in 1..self.scheme.n_r() {
                if self.prob(i, j) > self.prob(i - 1, j) {
                    violations.push(Violation { m_bin: j, r_bin: i });
                }
            }
        }
        MonotonicityReport { violations }
    }

    /// Serialises to the versioned text format.
    ///
    /// Numbers are written in shortest round-trip form, so reading the output
    /// back and writing it again reproduces it byte for byte.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_HEADER}");
        let _ = writeln!(out, "r_edges {}", join(self.scheme.r_edges()));
        let _ = writeln!(out, "m_edges {}", join(self.scheme.m_edges()));
        let _ = writeln!(out, "floor {:?}", self.floor);
        for i in 0..self.scheme.n_r() {
            let _ = writeln!(out, "{}", join(self.row(i)));
        }
        out
    }

    pub fn from_text(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((n, Err(e))) => Err(Error::DensityFormat {
                    line: n,
                    reason: e.to_string(),
                }),
                None => Err(Error::DensityFormat {
                    line: 0,
                    reason: format!("missing {what}"),
                }),
            }
        };
        let bad = |line: usize, reason: String| Error::DensityFormat { line, reason };
        let parse_nums = |line: usize, s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| bad(line, format!("{t:?}: {e}"))))
                .collect()
        };
        let keyed = |line: usize, l: &str, key: &str| -> Result<Vec<f64>> {
            let rest = l
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| bad(line, format!("expected `{key}`")))?;
            parse_nums(line, rest)
        };

        let (n, header) = next("header")?;
        if header.trim_end() != FORMAT_HEADER {
            return Err(bad(n, format!("unsupported header {header:?}")));
        }
        let (n, l) = next("r_edges")?;
        let r_edges = keyed(n, &l, "r_edges")?;
        let (n, l) = next("m_edges")?;
        let m_edges = keyed(n, &l, "m_edges")?;
        let (n, l) = next("floor")?;
        let floor = match keyed(n, &l, "floor")?.as_slice() {
            [f] => *f,
            _ => return Err(bad(n, "floor takes one value".into())),
        };
        let scheme = BinningScheme::new(r_edges, m_edges).map_err(|e| bad(n, e.to_string()))?;
        let mut rows = Vec::with_capacity(scheme.n_r());
        for _ in 0..scheme.n_r() {
            let (n, l) = next("table row")?;
            rows.push(parse_nums(n, &l)?);
        }
        ConditionalDensity::from_table(scheme, rows, floor).map_err(|e| bad(0, e.to_string()))
    }
}

/// Cells where probability rises with distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub m_bin: usize,
    /// The farther distance bin, whose probability exceeds the one before it.
    pub r_bin: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct MonotonicityReport {
    pub violations: Vec<Violation>,
}

impl MonotonicityReport {
    pub fn is_monotone(&self) -> bool {
        self.violations.is_empty()
    }
}
