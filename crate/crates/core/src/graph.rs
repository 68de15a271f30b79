//! Immutable bipartite graphs and the exact (non-private) common-neighbor oracle.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::bernoulli_indices;

/// Cap on query-pair rejection sampling attempts.
pub const MAX_PAIR_ATTEMPTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Upper,
    Lower,
}

impl Layer {
    pub fn opposite(self) -> Layer {
        match self {
            Layer::Upper => Layer::Lower,
            Layer::Lower => Layer::Upper,
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::Upper => "upper",
            Layer::Lower => "lower",
        })
    }
}

impl std::str::FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "upper" | "u" => Ok(Layer::Upper),
            "lower" | "l" => Ok(Layer::Lower),
            other => Err(Error::validation(format!("unknown layer '{other}'"))),
        }
    }
}

/// A vertex addressed by its layer and dense 0-based index within that layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexRef {
    pub layer: Layer,
    pub index: u32,
}

impl VertexRef {
    pub fn new(layer: Layer, index: u32) -> Self {
        Self { layer, index }
    }

    pub fn upper(index: u32) -> Self {
        Self::new(Layer::Upper, index)
    }

    pub fn lower(index: u32) -> Self {
        Self::new(Layer::Lower, index)
    }

    /// External KONECT id (1-based).
    pub fn external_id(&self) -> u64 {
        u64::from(self.index) + 1
    }

    /// Vertex component of a [`RandomSource`](crate::rng::RandomSource) stream path.
    pub fn stream_key(&self) -> u64 {
        let layer_bit = match self.layer {
            Layer::Upper => 0u64,
            Layer::Lower => 1u64 << 32,
        };
        layer_bit | u64::from(self.index)
    }
}

/// Two distinct vertices of the same layer whose common neighbors are queried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QueryPair {
    pub u: VertexRef,
    pub w: VertexRef,
}

impl QueryPair {
    pub fn new(u: VertexRef, w: VertexRef) -> Result<Self> {
        if u.layer != w.layer {
            return Err(Error::validation(format!(
                "query vertices are on different layers ({} and {})",
                u.layer, w.layer
            )));
        }
        if u.index == w.index {
            return Err(Error::validation("query vertices must be distinct"));
        }
        Ok(Self { u, w })
    }

    pub fn layer(&self) -> Layer {
        self.u.layer
    }

    /// The same pair with the roles of `u` and `w` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            u: self.w,
            w: self.u,
        }
    }
}

/// Compressed sparse rows for one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Csr {
    /// `edges` must be sorted by (source, target) and deduplicated.
    fn from_sorted(n: usize, edges: impl Iterator<Item = (u32, u32)>) -> Self {
        let mut offsets = vec![0usize; n + 1];
        let mut targets = Vec::new();
        for (s, t) in edges {
            offsets[s as usize + 1] += 1;
            targets.push(t);
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Self { offsets, targets }
    }

    fn row(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    fn len(&self) -> usize {
        self.offsets.len() - 1
    }
}

/// An unweighted simple bipartite graph with sorted adjacency stored for both layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    upper: Csr,
    lower: Csr,
}

impl BipartiteGraph {
    /// Builds a graph from `(upper, lower)` index pairs. Duplicates are collapsed.
    pub fn from_edges(
        n1: usize,
        n2: usize,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::validation("both layers need at least one vertex"));
        }
        if n1 > u32::MAX as usize || n2 > u32::MAX as usize {
            return Err(Error::validation("layer size exceeds u32 index space"));
        }
        let mut list: Vec<(u32, u32)> = edges.into_iter().collect();
        for &(a, b) in &list {
            if a as usize >= n1 || b as usize >= n2 {
                return Err(Error::validation(format!(
                    "edge ({a}, {b}) out of range for layers of size {n1} and {n2}"
                )));
            }
        }
        list.sort_unstable();
        list.dedup();
        let upper = Csr::from_sorted(n1, list.iter().copied());
        let mut rev: Vec<(u32, u32)> = list.iter().map(|&(a, b)| (b, a)).collect();
        rev.sort_unstable();
        let lower = Csr::from_sorted(n2, rev.into_iter());
        Ok(Self { upper, lower })
    }

    /// Number of upper-layer vertices.
    pub fn n1(&self) -> usize {
        self.upper.len()
    }

    /// Number of lower-layer vertices.
    pub fn n2(&self) -> usize {
        self.lower.len()
    }

    pub fn num_edges(&self) -> usize {
        self.upper.targets.len()
    }

    pub fn layer_size(&self, layer: Layer) -> usize {
        match layer {
            Layer::Upper => self.n1(),
            Layer::Lower => self.n2(),
        }
    }

    fn csr(&self, layer: Layer) -> &Csr {
        match layer {
            Layer::Upper => &self.upper,
            Layer::Lower => &self.lower,
        }
    }

    pub fn contains(&self, v: VertexRef) -> bool {
        (v.index as usize) < self.layer_size(v.layer)
    }

    pub fn check_vertex(&self, v: VertexRef) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "vertex {} of the {} layer does not exist (layer size {})",
                v.external_id(),
                v.layer,
                self.layer_size(v.layer)
            )))
        }
    }

    pub fn check_pair(&self, q: &QueryPair) -> Result<()> {
        self.check_vertex(q.u)?;
        self.check_vertex(q.w)
    }

    /// Sorted opposite-layer neighbors of `v`. Panics if `v` is out of range.
    pub fn neighbors(&self, v: VertexRef) -> &[u32] {
        self.csr(v.layer).row(v.index as usize)
    }

    pub fn degree(&self, v: VertexRef) -> usize {
        self.neighbors(v).len()
    }

    pub fn max_degree(&self, layer: Layer) -> usize {
        let csr = self.csr(layer);
        (0..csr.len()).map(|i| csr.row(i).len()).max().unwrap_or(0)
    }

    pub fn degrees(&self, layer: Layer) -> impl Iterator<Item = usize> + '_ {
        let csr = self.csr(layer);
        (0..csr.len()).map(move |i| csr.row(i).len())
    }

    /// Iterates edges as `(upper, lower)` in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n1()).flat_map(move |u| self.upper.row(u).iter().map(move |&l| (u as u32, l)))
    }

    pub fn summary(&self) -> GraphSummary {
        GraphSummary {
            n1: self.n1(),
            n2: self.n2(),
            m: self.num_edges(),
            max_deg_upper: self.max_degree(Layer::Upper),
            max_deg_lower: self.max_degree(Layer::Lower),
        }
    }

    /// The subgraph induced by the given upper and lower vertex sets. Kept
    /// vertices are renumbered densely in the order given.
    pub fn induced_subgraph(&self, upper: &[u32], lower: &[u32]) -> Result<BipartiteGraph> {
        let mut lower_map = vec![u32::MAX; self.n2()];
        for (new, &old) in lower.iter().enumerate() {
            let slot = lower_map.get_mut(old as usize).ok_or_else(|| {
                Error::validation(format!("lower vertex index {old} out of range"))
            })?;
            if *slot != u32::MAX {
                return Err(Error::validation(format!(
                    "lower vertex index {old} listed twice"
                )));
            }
            *slot = new as u32;
        }
        let mut edges = Vec::new();
        for (new_u, &old_u) in upper.iter().enumerate() {
            self.check_vertex(VertexRef::upper(old_u))?;
            for &l in self.upper.row(old_u as usize) {
                let mapped = lower_map[l as usize];
                if mapped != u32::MAX {
                    edges.push((new_u as u32, mapped));
                }
            }
        }
        let distinct: HashSet<u32> = upper.iter().copied().collect();
        if distinct.len() != upper.len() {
            return Err(Error::validation("upper vertex listed twice"));
        }
        BipartiteGraph::from_edges(upper.len(), lower.len(), edges)
    }
}

/// The JSON-printable graph summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
    pub max_deg_upper: usize,
    pub max_deg_lower: usize,
}

/// Supported edge-list dialects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeListFormat {
    /// Whitespace-separated `upper lower [weight [timestamp]]` with 1-based ids in
    /// separate id spaces, `%`/`#` comment lines, and an optional `% m n1 n2`
    /// size line.
    #[default]
    Konect,
}

impl std::str::FromStr for EdgeListFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "konect" => Ok(EdgeListFormat::Konect),
            other => Err(Error::validation(format!(
                "unknown edge-list format '{other}'"
            ))),
        }
    }
}

pub fn load_edge_list(path: impl AsRef<Path>, format: EdgeListFormat) -> Result<BipartiteGraph> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_edge_list(BufReader::new(file), path, format)
}

/// Parses an edge list from any reader; `origin` is only used in error messages.
pub fn read_edge_list(
    reader: impl BufRead,
    origin: &Path,
    format: EdgeListFormat,
) -> Result<BipartiteGraph> {
    let EdgeListFormat::Konect = format;
    let mut edges = Vec::new();
    let (mut max_u, mut max_l) = (0u64, 0u64);
    let (mut hdr_n1, mut hdr_n2) = (0u64, 0u64);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(rest) = text.strip_prefix('%').or_else(|| text.strip_prefix('#')) {
            // KONECT's second header line is "% <edges> <n1> <n2>".
            let nums: Vec<u64> = rest
                .split_whitespace()
                .map_while(|t| t.parse().ok())
                .collect();
            if nums.len() == 3 && rest.split_whitespace().count() == 3 {
                hdr_n1 = hdr_n1.max(nums[1]);
                hdr_n2 = hdr_n2.max(nums[2]);
            }
            continue;
        }
        let mut tokens = text.split_whitespace();
        let (Some(a), Some(b)) = (tokens.next(), tokens.next()) else {
            return Err(parse_err(
                lineno,
                format!("expected at least two columns, got '{text}'"),
            ));
        };
        let parse_id = |tok: &str| -> Result<i64> {
            tok.parse::<i64>()
                .map_err(|_| parse_err(lineno, format!("'{tok}' is not an integer vertex id")))
        };
        let (a, b) = (parse_id(a)?, parse_id(b)?);
        if a <= 0 || b <= 0 {
            return Err(Error::validation(format!(
                "{}:{lineno}: vertex ids must be positive, got {a} {b}",
                origin.display()
            )));
        }
        if a > i64::from(u32::MAX) || b > i64::from(u32::MAX) {
            return Err(Error::validation(format!(
                "{}:{lineno}: vertex id exceeds the supported range",
                origin.display()
            )));
        }
        let (a, b) = (a as u64, b as u64);
        max_u = max_u.max(a);
        max_l = max_l.max(b);
        edges.push(((a - 1) as u32, (b - 1) as u32));
    }
    if edges.is_empty() {
        return Err(Error::validation(format!(
            "{}: graph has no edges",
            origin.display()
        )));
    }
    let n1 = max_u.max(hdr_n1) as usize;
    let n2 = max_l.max(hdr_n2) as usize;
    BipartiteGraph::from_edges(n1, n2, edges)
}

/// Writes a KONECT edge list (with size header) that [`read_edge_list`] reloads
/// to an identical graph.
pub fn write_edge_list(g: &BipartiteGraph, mut out: impl Write) -> Result<()> {
    writeln!(out, "% bip unweighted")?;
    writeln!(out, "% {} {} {}", g.num_edges(), g.n1(), g.n2())?;
    for (u, l) in g.edges() {
        writeln!(out, "{} {}", u as u64 + 1, l as u64 + 1)?;
    }
    out.flush()?;
    Ok(())
}

/// Erdős–Rényi bipartite graph: each of the `n1 * n2` potential edges is
/// present independently with probability `edge_density`.
pub fn generate_synthetic(
    n1: usize,
    n2: usize,
    edge_density: f64,
    seed: u64,
) -> Result<BipartiteGraph> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::validation("n1 and n2 must be at least 1"));
    }
    if !(edge_density > 0.0 && edge_density <= 1.0) {
        return Err(Error::validation(format!(
            "edge density must lie in (0, 1], got {edge_density}"
        )));
    }
    let total = (n1 as u64)
        .checked_mul(n2 as u64)
        .ok_or_else(|| Error::validation("n1 * n2 overflows"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    bernoulli_indices(&mut rng, total, edge_density, |k| {
        edges.push(((k / n2 as u64) as u32, (k % n2 as u64) as u32));
    });
    BipartiteGraph::from_edges(n1, n2, edges)
}

/// Chung–Lu style graph with power-law expected degrees on both layers.
///
/// Draws `target_edges` endpoint pairs with vertex `i` of a layer chosen with
/// weight `(i + 1)^-exponent`, then collapses duplicates, so the realized edge
/// count is at most `target_edges`. Low indices are the hubs.
pub fn generate_skewed(
    n1: usize,
    n2: usize,
    target_edges: usize,
    exponent: f64,
    seed: u64,
) -> Result<BipartiteGraph> {
    if n1 == 0 || n2 == 0 || target_edges == 0 {
        return Err(Error::validation(
            "n1, n2 and target_edges must be at least 1",
        ));
    }
    if !(exponent >= 0.0 && exponent.is_finite()) {
        return Err(Error::validation(format!(
            "exponent must be finite and >= 0, got {exponent}"
        )));
    }
    let weights = |n: usize| (0..n).map(move |i| ((i + 1) as f64).powf(-exponent));
    let upper = WeightedIndex::new(weights(n1)).map_err(|e| Error::validation(e.to_string()))?;
    let lower = WeightedIndex::new(weights(n2)).map_err(|e| Error::validation(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<(u32, u32)> = (0..target_edges)
        .map(|_| (upper.sample(&mut rng) as u32, lower.sample(&mut rng) as u32))
        .collect();
    BipartiteGraph::from_edges(n1, n2, edges)
}

/// Size of the intersection of two strictly ascending lists.
pub fn intersection_size(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// `|N(u) ∩ N(w)|`, the ground truth every estimator targets.
pub fn exact_common_neighbors(g: &BipartiteGraph, q: &QueryPair) -> Result<usize> {
    if q.u.layer != q.w.layer {
        return Err(Error::validation("query vertices are on different layers"));
    }
    g.check_pair(q)?;
    Ok(intersection_size(g.neighbors(q.u), g.neighbors(q.w)))
}

/// Uniformly samples `count` distinct unordered same-layer pairs. With
/// `kappa`, only pairs with `max(d_u, d_w) > kappa * min(d_u, d_w)` are kept.
pub fn sample_query_pairs(
    g: &BipartiteGraph,
    layer: Layer,
    count: usize,
    kappa: Option<f64>,
    seed: u64,
) -> Result<Vec<QueryPair>> {
    let n = g.layer_size(layer);
    if n < 2 {
        return Err(Error::validation(format!(
            "the {layer} layer has fewer than two vertices"
        )));
    }
    if count == 0 {
        return Err(Error::validation("pair count must be at least 1"));
    }
    if let Some(k) = kappa {
        if !(k >= 1.0 && k.is_finite()) {
            return Err(Error::validation(format!(
                "kappa must be a finite value >= 1, got {k}"
            )));
        }
    }
    let available = (n as u128) * (n as u128 - 1) / 2;
    if kappa.is_none() && (count as u128) > available {
        return Err(Error::validation(format!(
            "requested {count} pairs but the {layer} layer only has {available}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(count);
    let mut attempts = 0;
    while pairs.len() < count {
        if attempts == MAX_PAIR_ATTEMPTS {
            return Err(Error::InfeasibleKappa {
                kappa: kappa.unwrap_or(f64::NAN),
                found: pairs.len(),
                requested: count,
                attempts,
            });
        }
        attempts += 1;
        let a = rng.gen_range(0..n as u32);
        let b = rng.gen_range(0..n as u32);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if seen.contains(&key) {
            continue;
        }
        let (u, w) = (VertexRef::new(layer, a), VertexRef::new(layer, b));
        if let Some(k) = kappa {
            let (du, dw) = (g.degree(u) as f64, g.degree(w) as f64);
            if du.max(dw) <= k * du.min(dw) {
                continue;
            }
        }
        seen.insert(key);
        pairs.push(QueryPair { u, w });
    }
    Ok(pairs)
}
