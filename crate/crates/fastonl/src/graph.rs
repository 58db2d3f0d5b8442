//! Undirected weighted graph in compressed sparse row form, plus label
//! sequences and plain-text loaders.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Immutable undirected weighted graph. Each edge is stored in both
/// directions; adjacency rows are sorted by neighbor id.
#[derive(Debug, Clone)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
    /// Unweighted degree d_u = |N(u)|.
    degree: Vec<u32>,
    /// Weighted degree D_u = sum of incident weights.
    weighted_degree: Vec<f64>,
    /// Dense id -> id in the source file.
    original_ids: Vec<u64>,
}

/// Counters reported by the edge-list loader.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadStats {
    pub self_loops_dropped: usize,
    pub duplicates_merged: usize,
}

impl Graph {
    /// Build from a list of undirected edges over dense 0-based ids.
    /// Edges must be pre-deduplicated; weights must be positive and finite.
    pub fn from_edges(n: usize, edges: &[(u32, u32, f64)]) -> Result<Graph> {
        let mut degree = vec![0u32; n];
        for &(u, v, w) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::NodeOutOfRange {
                    id: u.max(v) as usize,
                    n,
                });
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop at node {u}")));
            }
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::invalid(format!("edge ({u},{v}) has weight {w}")));
            }
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for u in 0..n {
            offsets[u + 1] = offsets[u] + degree[u] as usize;
        }
        let mut cursor = offsets.clone();
        let mut neighbors = vec![0u32; 2 * edges.len()];
        let mut weights = vec![0f64; 2 * edges.len()];
        for &(u, v, w) in edges {
            neighbors[cursor[u as usize]] = v;
            weights[cursor[u as usize]] = w;
            cursor[u as usize] += 1;
            neighbors[cursor[v as usize]] = u;
            weights[cursor[v as usize]] = w;
            cursor[v as usize] += 1;
        }
        // Sort each row by neighbor id so iteration order is deterministic.
        for u in 0..n {
            let lo = offsets[u];
            let hi = offsets[u + 1];
            let mut row: Vec<(u32, f64)> = neighbors[lo..hi]
                .iter()
                .copied()
                .zip(weights[lo..hi].iter().copied())
                .collect();
            row.sort_by_key(|&(v, _)| v);
            for (i, (v, w)) in row.into_iter().enumerate() {
                neighbors[lo + i] = v;
                weights[lo + i] = w;
            }
            for i in lo + 1..hi {
                if neighbors[i] == neighbors[i - 1] {
                    return Err(Error::invalid(format!(
                        "duplicate edge ({u},{})",
                        neighbors[i]
                    )));
                }
            }
        }
        let weighted_degree = (0..n)
            .map(|u| weights[offsets[u]..offsets[u + 1]].iter().sum())
            .collect();
        Ok(Graph {
            offsets,
            neighbors,
            weights,
            degree,
            weighted_degree,
            original_ids: (0..n as u64).collect(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.degree.len()
    }

    /// Number of undirected edges m.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Unweighted degree d_u.
    pub fn degree(&self, u: usize) -> u32 {
        self.degree[u]
    }

    /// Weighted degree D_u.
    pub fn weighted_degree(&self, u: usize) -> f64 {
        self.weighted_degree[u]
    }

    pub fn original_id(&self, u: usize) -> u64 {
        self.original_ids[u]
    }

    /// Dense id for an id from the source file, if present.
    pub fn dense_id(&self, original: u64) -> Option<usize> {
        self.original_ids.binary_search(&original).ok()
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let lo = self.offsets[u];
        let hi = self.offsets[u + 1];
        self.neighbors[lo..hi]
            .iter()
            .copied()
            .zip(self.weights[lo..hi].iter().copied())
    }

    /// Weight of edge (u, v), if present.
    pub fn edge_weight(&self, u: usize, v: u32) -> Option<f64> {
        let lo = self.offsets[u];
        let hi = self.offsets[u + 1];
        self.neighbors[lo..hi]
            .binary_search(&v)
            .ok()
            .map(|i| self.weights[lo + i])
    }

    pub fn max_weighted_degree(&self) -> f64 {
        self.weighted_degree.iter().copied().fold(0.0, f64::max)
    }

    /// vol(S) = sum of unweighted degrees over S.
    pub fn volume(&self, nodes: &[usize]) -> Result<u64> {
        let n = self.node_count();
        let mut total = 0u64;
        for &u in nodes {
            if u >= n {
                return Err(Error::NodeOutOfRange { id: u, n });
            }
            total += self.degree[u] as u64;
        }
        Ok(total)
    }

    /// Write the graph back out as "u v w" lines over original ids, one
    /// line per undirected edge (u < v by dense id).
    pub fn write_edge_list<W: Write>(&self, mut out: W, weighted: bool) -> Result<()> {
        for u in 0..self.node_count() {
            for (v, w) in self.neighbors(u) {
                if (v as usize) < u {
                    continue;
                }
                if weighted {
                    writeln!(
                        out,
                        "{} {} {}",
                        self.original_ids[u], self.original_ids[v as usize], w
                    )?;
                } else {
                    writeln!(
                        out,
                        "{} {}",
                        self.original_ids[u], self.original_ids[v as usize]
                    )?;
                }
            }
        }
        Ok(())
    }

    fn with_original_ids(mut self, ids: Vec<u64>) -> Graph {
        self.original_ids = ids;
        self
    }
}

/// Parse a whitespace-separated "u v [w]" edge list. Input edges are
/// symmetrized and deduplicated; unweighted input gets w = 1. Node ids may
/// be arbitrary nonnegative integers and are compacted to dense 0-based ids
/// in sorted order.
pub fn load_edge_list(path: impl AsRef<Path>, weighted: bool) -> Result<(Graph, LoadStats)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
    let reader = BufReader::new(file);
    let mut raw: Vec<(u64, u64, f64)> = Vec::new();
    let mut stats = LoadStats::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let u: u64 = fields
            .next()
            .ok_or_else(|| parse_err("missing source id".into()))?
            .parse()
            .map_err(|e| parse_err(format!("bad source id: {e}")))?;
        let v: u64 = fields
            .next()
            .ok_or_else(|| parse_err("missing target id".into()))?
            .parse()
            .map_err(|e| parse_err(format!("bad target id: {e}")))?;
        let w: f64 = if weighted {
            fields
                .next()
                .ok_or_else(|| parse_err("missing weight".into()))?
                .parse()
                .map_err(|e| parse_err(format!("bad weight: {e}")))?
        } else {
            1.0
        };
        if !w.is_finite() || w <= 0.0 {
            return Err(Error::invalid(format!(
                "{}:{lineno}: weight must be positive and finite, got {w}",
                path.display()
            )));
        }
        if u == v {
            stats.self_loops_dropped += 1;
            continue;
        }
        raw.push((u.min(v), u.max(v), w));
    }
    // Sort-based dedup; conflicting weights on the same edge are an error.
    raw.sort_by_key(|e| (e.0, e.1));
    let mut edges: Vec<(u64, u64, f64)> = Vec::with_capacity(raw.len());
    for (u, v, w) in raw {
        if let Some(last) = edges.last() {
            if last.0 == u && last.1 == v {
                let rel = (last.2 - w).abs() / last.2.abs().max(1.0);
                if rel > 1e-12 {
                    return Err(Error::invalid(format!(
                        "edge ({u},{v}) appears with conflicting weights {} and {w}",
                        last.2
                    )));
                }
                stats.duplicates_merged += 1;
                continue;
            }
        }
        edges.push((u, v, w));
    }
    // Compact ids in sorted order.
    let mut ids: Vec<u64> = edges.iter().flat_map(|&(u, v, _)| [u, v]).collect();
    ids.sort_unstable();
    ids.dedup();
    let index: HashMap<u64, u32> = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i as u32))
        .collect();
    let dense: Vec<(u32, u32, f64)> = edges
        .iter()
        .map(|&(u, v, w)| (index[&u], index[&v], w))
        .collect();
    let graph = Graph::from_edges(ids.len(), &dense)?.with_original_ids(ids);
    Ok((graph, stats))
}

/// Per-node category labels together with an arrival order over the labeled
/// nodes.
#[derive(Debug, Clone)]
pub struct LabelSequence {
    labels: Vec<Option<u32>>,
    k: usize,
    order: Vec<u32>,
}

impl LabelSequence {
    /// Labels for all n nodes, arrival order = node id order.
    pub fn full(labels: Vec<u32>) -> Result<LabelSequence> {
        let opt: Vec<Option<u32>> = labels.into_iter().map(Some).collect();
        LabelSequence::new(opt)
    }

    pub fn new(labels: Vec<Option<u32>>) -> Result<LabelSequence> {
        let k = labels
            .iter()
            .flatten()
            .copied()
            .max()
            .map_or(0, |m| m as usize + 1);
        let order: Vec<u32> = labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|_| i as u32))
            .collect();
        if order.is_empty() {
            return Err(Error::invalid("label sequence has no labeled nodes"));
        }
        Ok(LabelSequence { labels, k, order })
    }

    /// Parse a "node_id label_id" file against a loaded graph. Labels whose
    /// node does not appear in the graph are dropped (their count is
    /// returned).
    pub fn from_file(graph: &Graph, path: impl AsRef<Path>) -> Result<(LabelSequence, usize)> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
        let reader = BufReader::new(file);
        let mut labels = vec![None; graph.node_count()];
        let mut dropped = 0usize;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message,
            };
            let mut fields = trimmed.split_whitespace();
            let id: u64 = fields
                .next()
                .ok_or_else(|| parse_err("missing node id".into()))?
                .parse()
                .map_err(|e| parse_err(format!("bad node id: {e}")))?;
            let label: u32 = fields
                .next()
                .ok_or_else(|| parse_err("missing label id".into()))?
                .parse()
                .map_err(|e| parse_err(format!("bad label id: {e}")))?;
            match graph.dense_id(id) {
                Some(u) => labels[u] = Some(label),
                None => dropped += 1,
            }
        }
        Ok((LabelSequence::new(labels)?, dropped))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn label(&self, u: usize) -> Option<u32> {
        self.labels[u]
    }

    /// Arrival order over labeled nodes.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn labeled_count(&self) -> usize {
        self.order.len()
    }

    /// Replace the arrival order. The new order must be a permutation of the
    /// labeled node set.
    pub fn with_order(mut self, order: Vec<u32>) -> Result<LabelSequence> {
        let mut sorted = order.clone();
        sorted.sort_unstable();
        let mut current: Vec<u32> = self.order.clone();
        current.sort_unstable();
        if sorted != current {
            return Err(Error::invalid(
                "arrival order is not a permutation of the labeled node set",
            ));
        }
        self.order = order;
        Ok(self)
    }

    /// Seeded shuffle of the arrival order.
    pub fn shuffled(mut self, seed: u64) -> LabelSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.order.shuffle(&mut rng);
        self
    }

    /// Load an arrival-order file (one original node id per line).
    pub fn with_order_file(self, graph: &Graph, path: impl AsRef<Path>) -> Result<LabelSequence> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
        let reader = BufReader::new(file);
        let mut order = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let id: u64 = trimmed.parse().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("bad node id: {e}"),
            })?;
            let dense = graph.dense_id(id).ok_or_else(|| {
                Error::invalid(format!("order file references unknown node {id}"))
            })?;
            order.push(dense as u32);
        }
        self.with_order(order)
    }
}

/// Restrict the graph and labels to the largest connected component,
/// compacting node ids (ties between equal-sized components break toward
/// the smallest contained node id).
pub fn largest_connected_component(
    graph: &Graph,
    labels: &LabelSequence,
) -> Result<(Graph, LabelSequence)> {
    let n = graph.node_count();
    if n == 0 {
        return Err(Error::invalid("empty graph"));
    }
    let mut component = vec![usize::MAX; n];
    let mut sizes: Vec<usize> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0usize;
        component[start] = id;
        stack.push(start);
        while let Some(u) = stack.pop() {
            size += 1;
            for (v, _) in graph.neighbors(u) {
                let v = v as usize;
                if component[v] == usize::MAX {
                    component[v] = id;
                    stack.push(v);
                }
            }
        }
        sizes.push(size);
    }
    let best = (0..sizes.len()).max_by_key(|&c| sizes[c]).unwrap();
    let keep: Vec<usize> = (0..n).filter(|&u| component[u] == best).collect();
    let mut dense = vec![u32::MAX; n];
    for (new, &old) in keep.iter().enumerate() {
        dense[old] = new as u32;
    }
    let mut edges = Vec::new();
    for &u in &keep {
        for (v, w) in graph.neighbors(u) {
            let v = v as usize;
            if component[v] == best && u < v {
                edges.push((dense[u], dense[v], w));
            }
        }
    }
    let ids = keep.iter().map(|&u| graph.original_id(u)).collect();
    let sub = Graph::from_edges(keep.len(), &edges)?.with_original_ids(ids);
    let sub_labels: Vec<Option<u32>> = keep.iter().map(|&u| labels.label(u)).collect();
    let mut seq = LabelSequence::new(sub_labels)?;
    // Preserve the relative arrival order of surviving nodes.
    let order: Vec<u32> = labels
        .order()
        .iter()
        .filter(|&&u| component[u as usize] == best)
        .map(|&u| dense[u as usize])
        .collect();
    seq = seq.with_order(order)?;
    Ok((sub, seq))
}
