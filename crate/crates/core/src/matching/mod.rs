//! Maximum-weight selection of edges and self-loops such that every vertex is covered
//! at most once.
//!
//! A self-loop `(i, i)` is reduced to an ordinary edge `(i, i')` with a private clone
//! `i'`, which turns the problem into classical maximum-weight matching.

mod blossom;

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Largest edge count accepted by [`brute_force_selection`].
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairingEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

impl PairingEdge {
    pub fn is_loop(&self) -> bool {
        self.a == self.b
    }
}

/// Vertices `0..vertex_count`; edges stored with `a <= b`, `a == b` being a self-loop.
#[derive(Clone, Debug, PartialEq)]
pub struct PairingGraph {
    vertex_count: usize,
    edges: Vec<PairingEdge>,
}

impl PairingGraph {
    pub fn new(vertex_count: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (a, b, weight) in edges {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            if b >= vertex_count {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) exceeds {vertex_count} vertices")));
            }
            if !weight.is_finite() {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) has weight {weight}")));
            }
            if !seen.insert((a, b)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({a}, {b})")));
            }
            out.push(PairingEdge { a, b, weight });
        }
        Ok(PairingGraph { vertex_count, edges: out })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[PairingEdge] {
        &self.edges
    }

    /// Sum of the weights of `selection`, accumulated in ascending edge order.
    pub fn weight_of(&self, selection: &[usize]) -> f64 {
        let mut sorted = selection.to_vec();
        sorted.sort_unstable();
        sorted.iter().map(|&e| self.edges[e].weight).sum()
    }

    /// True when no vertex is covered twice.
    pub fn is_feasible(&self, selection: &[usize]) -> bool {
        let mut covered = vec![false; self.vertex_count];
        for &e in selection {
            let PairingEdge { a, b, .. } = self.edges[e];
            if covered[a] || covered[b] {
                return false;
            }
            covered[a] = true;
            covered[b] = true;
        }
        true
    }
}

/// Selected edge indices (ascending) and their total weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub edges: Vec<usize>,
    pub weight: f64,
}

/// Exact maximum-weight selection; edges of weight <= 0 are never chosen.
pub fn max_weight_selection(graph: &PairingGraph) -> Selection {
    let n = graph.vertex_count;
    let mut simple = Vec::new();
    let mut origin = Vec::new();
    for (idx, e) in graph.edges.iter().enumerate() {
        if e.weight <= 0.0 {
            continue;
        }
        let b = if e.is_loop() { n + e.a } else { e.b };
        simple.push((e.a, b, e.weight));
        origin.push(idx);
    }
    let mate = blossom::max_weight_matching(2 * n, &simple);
    let mut edges: Vec<usize> = simple.iter().zip(&origin).filter(|((a, b, _), _)| mate[*a] == Some(*b)).map(|(_, &idx)| idx).collect();
    edges.sort_unstable();
    let weight = graph.weight_of(&edges);
    Selection { edges, weight }
}

/// Exhaustive search over all feasible subsets; for testing.
pub fn brute_force_selection(graph: &PairingGraph) -> Result<Selection> {
    if graph.edges.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyEdges { limit: BRUTE_FORCE_LIMIT, got: graph.edges.len() });
    }
    let positive: Vec<usize> = (0..graph.edges.len()).filter(|&e| graph.edges[e].weight > 0.0).collect();
    let mut best = Selection { edges: Vec::new(), weight: 0.0 };
    let mut covered = vec![false; graph.vertex_count];
    let mut current = Vec::new();
    search(graph, &positive, 0, &mut covered, &mut current, &mut best);
    Ok(best)
}

fn search(graph: &PairingGraph, positive: &[usize], at: usize, covered: &mut [bool], current: &mut Vec<usize>, best: &mut Selection) {
    if at == positive.len() {
        let weight = graph.weight_of(current);
        if weight > best.weight {
            *best = Selection { edges: current.clone(), weight };
        }
        return;
    }
    let e = positive[at];
    let PairingEdge { a, b, .. } = graph.edges[e];
    if !covered[a] && !covered[b] {
        covered[a] = true;
        covered[b] = true;
        current.push(e);
        search(graph, positive, at + 1, covered, current, best);
        current.pop();
        covered[a] = false;
        covered[b] = false;
    }
    search(graph, positive, at + 1, covered, current, best);
}
