//! Minimum-weight perfect-matching readout.
//!
//! Anyons are paired by exact blossom matching on Manhattan minimal-image
//! distances. Each pair is joined by its x-first geodesic, and the corrected
//! logical value is the bare value times the parity of correction crossings
//! with the logical string.

pub mod blossom;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::energy::ErrorPattern;
use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// How the matching graph is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingMode {
    Complete,
    Delaunay,
    /// Complete graph up to `max_complete` anyons, Delaunay above.
    Auto { max_complete: usize },
}

impl Default for MatchingMode {
    fn default() -> Self {
        Self::Auto { max_complete: 40 }
    }
}

/// Sparsification actually used for one graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Complete,
    Delaunay,
    /// Delaunay edges plus `k` nearest neighbours per node.
    DelaunayKnn { k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingGraph {
    /// Plaquette index of each node.
    pub nodes: Vec<usize>,
    /// `(i, j, weight)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize, u64)>,
    pub kind: GraphKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    /// Node-index pairs `(i, j)` with `i < j`, sorted.
    pub pairs: Vec<(usize, usize)>,
    pub weight: u64,
}

/// Result of one readout.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoding {
    pub anyons: Vec<usize>,
    /// Plaquette pairs joined by the correction.
    pub pairs: Vec<(usize, usize)>,
    pub weight: u64,
    pub kind: GraphKind,
    pub z_bare: i8,
    pub z_ec: i8,
}

/// Occupied plaquettes in index order.
pub fn anyon_positions(pattern: &ErrorPattern) -> Vec<usize> {
    pattern.anyons()
}

pub fn build_matching_graph(lattice: &Lattice, positions: &[usize], mode: MatchingMode) -> Result<MatchingGraph> {
    if positions.len() % 2 == 1 {
        return Err(Error::InvalidSyndrome(positions.len()));
    }
    let complete = match mode {
        MatchingMode::Complete => true,
        MatchingMode::Delaunay => false,
        MatchingMode::Auto { max_complete } => positions.len() <= max_complete,
    };
    if complete || positions.len() <= 4 {
        return Ok(complete_graph(lattice, positions));
    }
    let mut edges = delaunay_edges(lattice, positions);
    let mut kind = GraphKind::Delaunay;
    let mut k = 2;
    while !admits_perfect_matching(positions.len(), &edges) {
        if k >= positions.len() - 1 {
            return Ok(complete_graph(lattice, positions));
        }
        edges.extend(knn_edges(lattice, positions, k));
        kind = GraphKind::DelaunayKnn { k };
        k *= 2;
    }
    Ok(MatchingGraph {
        nodes: positions.to_vec(),
        edges: weighted(lattice, positions, edges),
        kind,
    })
}

fn weighted(lattice: &Lattice, positions: &[usize], pairs: BTreeSet<(usize, usize)>) -> Vec<(usize, usize, u64)> {
    pairs
        .into_iter()
        .map(|(i, j)| (i, j, lattice.manhattan_distance(positions[i], positions[j])))
        .collect()
}

fn complete_graph(lattice: &Lattice, positions: &[usize]) -> MatchingGraph {
    let n = positions.len();
    let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    MatchingGraph {
        nodes: positions.to_vec(),
        edges: weighted(lattice, positions, pairs),
        kind: GraphKind::Complete,
    }
}

/// Delaunay edges of the periodic tiling, folded back onto the torus.
///
/// Images more than `L / 4` outside the central cell are dropped.
fn delaunay_edges(lattice: &Lattice, positions: &[usize]) -> BTreeSet<(usize, usize)> {
    let n = positions.len();
    let l = lattice.size() as f64;
    let margin = (l / 4.0).max(2.0);
    let mut points = Vec::with_capacity(3 * n);
    let mut owner = Vec::with_capacity(3 * n);
    for (i, &p) in positions.iter().enumerate() {
        let (x, y) = lattice.coords(p);
        points.push(delaunator::Point { x: x as f64, y: y as f64 });
        owner.push(i);
    }
    for oy in [-1.0, 0.0, 1.0] {
        for ox in [-1.0, 0.0, 1.0] {
            if ox == 0.0 && oy == 0.0 {
                continue;
            }
            for (i, &p) in positions.iter().enumerate() {
                let (x, y) = lattice.coords(p);
                let (px, py) = (x as f64 + ox * l, y as f64 + oy * l);
                if px >= -margin && px < l + margin && py >= -margin && py < l + margin {
                    points.push(delaunator::Point { x: px, y: py });
                    owner.push(i);
                }
            }
        }
    }
    let tri = delaunator::triangulate(&points);
    let mut edges = BTreeSet::new();
    for t in tri.triangles.chunks_exact(3) {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            if a >= n && b >= n {
                continue;
            }
            let (i, j) = (owner[a], owner[b]);
            if i != j {
                edges.insert((i.min(j), i.max(j)));
            }
        }
    }
    edges
}

fn knn_edges(lattice: &Lattice, positions: &[usize], k: usize) -> BTreeSet<(usize, usize)> {
    let n = positions.len();
    let mut edges = BTreeSet::new();
    let mut dist: Vec<(u64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        dist.clear();
        dist.extend((0..n).filter(|&j| j != i).map(|j| (lattice.manhattan_distance(positions[i], positions[j]), j)));
        let k = k.min(dist.len());
        dist.select_nth_unstable(k - 1);
        for &(_, j) in &dist[..k] {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    edges
}

fn admits_perfect_matching(n: usize, edges: &BTreeSet<(usize, usize)>) -> bool {
    let unit: Vec<(usize, usize, i64)> = edges.iter().map(|&(i, j)| (i, j, 1)).collect();
    blossom::max_weight_matching(n, &unit, true).iter().all(Option::is_some)
}

/// Exact minimum-weight perfect matching of `graph`.
pub fn min_weight_perfect_matching(graph: &MatchingGraph) -> Result<Matching> {
    let n = graph.nodes.len();
    if n == 0 {
        return Ok(Matching { pairs: Vec::new(), weight: 0 });
    }
    let top = graph.edges.iter().map(|e| e.2).max().unwrap_or(0) as i64 + 1;
    // maximum-cardinality, maximum-weight matching on `top - w` is a
    // minimum-weight perfect matching whenever a perfect one exists
    let flipped: Vec<(usize, usize, i64)> = graph.edges.iter().map(|&(i, j, w)| (i, j, top - w as i64)).collect();
    let mate = blossom::max_weight_matching(n, &flipped, true);
    let mut pairs = Vec::with_capacity(n / 2);
    for (i, m) in mate.iter().enumerate() {
        match m {
            None => return Err(Error::InfeasibleMatching),
            Some(j) if i < *j => pairs.push((i, *j)),
            Some(_) => {}
        }
    }
    let weight = pairs.iter().map(|&(i, j)| edge_weight(graph, i, j)).sum();
    Ok(Matching { pairs, weight })
}

fn edge_weight(graph: &MatchingGraph, i: usize, j: usize) -> u64 {
    let k = graph
        .edges
        .binary_search_by(|e| (e.0, e.1).cmp(&(i, j)))
        .expect("matched pair is an edge");
    graph.edges[k].2
}

pub fn decode(lattice: &Lattice, pattern: &ErrorPattern, mode: MatchingMode) -> Result<Decoding> {
    let anyons = anyon_positions(pattern);
    let graph = build_matching_graph(lattice, &anyons, mode)?;
    let matching = min_weight_perfect_matching(&graph)?;
    let pairs: Vec<(usize, usize)> = matching.pairs.iter().map(|&(i, j)| (anyons[i], anyons[j])).collect();
    let crossing = pairs
        .iter()
        .fold(false, |acc, &(p, q)| acc ^ lattice.crossing_parity(&lattice.geodesic_path(p, q)));
    let z_bare = pattern.logical_z();
    Ok(Decoding {
        anyons,
        pairs,
        weight: matching.weight,
        kind: graph.kind,
        z_bare,
        z_ec: if crossing { -z_bare } else { z_bare },
    })
}

/// Sign of the logical `Z` after matching correction.
pub fn corrected_logical_z(lattice: &Lattice, pattern: &ErrorPattern, mode: MatchingMode) -> Result<i8> {
    Ok(decode(lattice, pattern, mode)?.z_ec)
}

/// Edges flipped by the correction of `decoding`.
pub fn correction_edges(lattice: &Lattice, decoding: &Decoding) -> Vec<usize> {
    decoding
        .pairs
        .iter()
        .flat_map(|&(p, q)| lattice.geodesic_path(p, q))
        .collect()
}

/// Debug dump of one syndrome and its pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyndromeDump {
    pub size: usize,
    pub anyons: Vec<[usize; 2]>,
    pub pairs: Vec<[[usize; 2]; 2]>,
    pub weight: u64,
    pub z_bare: i8,
    pub z_ec: i8,
}

impl SyndromeDump {
    pub fn new(lattice: &Lattice, decoding: &Decoding) -> Self {
        let xy = |p: usize| {
            let (x, y) = lattice.coords(p);
            [x, y]
        };
        Self {
            size: lattice.size(),
            anyons: decoding.anyons.iter().map(|&p| xy(p)).collect(),
            pairs: decoding.pairs.iter().map(|&(p, q)| [xy(p), xy(q)]).collect(),
            weight: decoding.weight,
            z_bare: decoding.z_bare,
            z_ec: decoding.z_ec,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
