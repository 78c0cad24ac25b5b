//! Static undirected network topologies.
//!
//! Agents are indexed `0..n` internally; the plain-text edge-list format uses
//! 1-based indices. Edges are kept canonical (`i < j`) and sorted, which also
//! fixes the arc order used when drawing communication noise.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

/// Outcome of the traversal-based connectivity check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityReport {
    pub connected: bool,
    pub components: usize,
    /// Agents not reachable from agent 0, ascending.
    pub unreachable: Vec<usize>,
}

impl Graph {
    /// Builds a simple undirected graph. Pairs may be given in either order;
    /// self-loops, duplicates and out-of-range indices are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("graph needs at least one agent"));
        }
        let mut canon = Vec::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::param(format!(
                    "edge ({i}, {j}) references an agent outside 0..{n}"
                )));
            }
            if i == j {
                return Err(Error::param(format!("self-loop at agent {i}")));
            }
            canon.push((i.min(j), i.max(j)));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::param(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &canon {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            edges: canon,
            neighbors,
        })
    }

    /// Circulant graph where agents at ring distance at most `k` are adjacent.
    pub fn ring_khop(n: usize, k: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::param(format!("k-hop ring needs n >= 3, got {n}")));
        }
        let kmax = (n - 1) / 2;
        if k < 1 || k > kmax {
            return Err(Error::param(format!(
                "hop radius k = {k} outside 1..={kmax} for n = {n}"
            )));
        }
        let edges = (0..n).flat_map(|i| (1..=k).map(move |m| (i, (i + m) % n)));
        // For even n and k = n/2 the two directions coincide; kmax excludes that.
        Self::new(n, edges)
    }

    pub fn ring(n: usize) -> Result<Self> {
        Self::ring_khop(n, 1)
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    /// Parses the plain-text edge list: one `i j` pair per line, 1-based,
    /// `#` starts a comment. The agent count is the largest index seen unless
    /// `n` is given explicitly.
    pub fn parse_edge_list(text: &str, n: Option<usize>) -> Result<Self> {
        let mut edges = Vec::new();
        let mut max_index = 0usize;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::param(format!(
                    "edge list line {}: expected two agent indices, got {:?}",
                    lineno + 1,
                    line
                )));
            }
            let mut parse = |s: &str| -> Result<usize> {
                let v: usize = s.parse().map_err(|_| {
                    Error::param(format!("edge list line {}: bad index {s:?}", lineno + 1))
                })?;
                if v == 0 {
                    return Err(Error::param(format!(
                        "edge list line {}: indices are 1-based",
                        lineno + 1
                    )));
                }
                max_index = max_index.max(v);
                Ok(v - 1)
            };
            let i = parse(fields[0])?;
            let j = parse(fields[1])?;
            edges.push((i, j));
        }
        let n = match n {
            Some(n) if n < max_index => {
                return Err(Error::param(format!(
                    "edge list references agent {max_index} but n = {n}"
                )))
            }
            Some(n) => n,
            None => max_index,
        };
        Self::new(n, edges)
    }

    pub fn from_edge_list_file(path: impl AsRef<Path>, n: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text, n)
    }

    /// Serializes to the 1-based edge-list format.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# {} agents, {} edges\n", self.n, self.edges.len());
        for &(i, j) in &self.edges {
            out.push_str(&format!("{} {}\n", i + 1, j + 1));
        }
        out
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    /// Canonical sorted edge list with `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    /// Common degree if every agent has the same number of neighbors.
    pub fn regular_degree(&self) -> Option<usize> {
        let d = self.degree(0);
        self.neighbors.iter().all(|l| l.len() == d).then_some(d)
    }

    /// Directed arcs in canonical order: for each sorted edge `(i, j)`, the arc
    /// into `i` from `j` followed by the arc into `j` from `i`.
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().flat_map(|&(i, j)| [(i, j), (j, i)]).collect()
    }

    /// `L = D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for (i, nb) in self.neighbors.iter().enumerate() {
            l[(i, i)] = nb.len() as f64;
        }
        for &(i, j) in &self.edges {
            l[(i, j)] = -1.0;
            l[(j, i)] = -1.0;
        }
        l
    }

    /// Laplacian eigenvalues in ascending order from a dense symmetric solver.
    pub fn laplacian_spectrum(&self) -> Result<Vec<f64>> {
        let lap = self.laplacian();
        let eig = SymmetricEigen::try_new(lap, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::numeric("symmetric eigen-solver did not converge"))?;
        let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        Ok(values)
    }

    /// Breadth-first reachability from agent 0.
    pub fn validate_connected(&self) -> ConnectivityReport {
        let mut component = vec![usize::MAX; self.n];
        let mut count = 0;
        for start in 0..self.n {
            if component[start] != usize::MAX {
                continue;
            }
            component[start] = count;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.neighbors[u] {
                    if component[v] == usize::MAX {
                        component[v] = count;
                        queue.push_back(v);
                    }
                }
            }
            count += 1;
        }
        let unreachable: Vec<usize> = (0..self.n).filter(|&i| component[i] != 0).collect();
        ConnectivityReport {
            connected: count == 1,
            components: count,
            unreachable,
        }
    }
}

/// Closed-form Laplacian spectrum of the k-hop ring on `n` agents, ascending:
/// `sum_{m=1..k} (2 - 2 cos(2 pi m r / n))` over frequencies `r = 0..n-1`.
pub fn circulant_ring_spectrum(n: usize, k: usize) -> Vec<f64> {
    let mut values: Vec<f64> = (0..n)
        .map(|r| {
            (1..=k)
                .map(|m| 2.0 - 2.0 * (2.0 * PI * ((m * r) % n) as f64 / n as f64).cos())
                .sum()
        })
        .collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Walks the k-hop ring family `k = 1..=(n-1)/2`, yielding `(k, spectrum)` with
/// each spectrum ascending. Updates incrementally in O(n log n) per radius.
pub struct KhopSpectra {
    n: usize,
    k: usize,
    by_frequency: Vec<f64>,
}

impl KhopSpectra {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            k: 0,
            by_frequency: vec![0.0; n],
        }
    }
}

impl Iterator for KhopSpectra {
    type Item = (usize, Vec<f64>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.n < 3 || self.k >= (self.n - 1) / 2 {
            return None;
        }
        self.k += 1;
        let (n, k) = (self.n, self.k);
        for (r, value) in self.by_frequency.iter_mut().enumerate() {
            *value += 2.0 - 2.0 * (2.0 * PI * ((k * r) % n) as f64 / n as f64).cos();
        }
        let mut sorted = self.by_frequency.clone();
        sorted.sort_by(f64::total_cmp);
        Some((k, sorted))
    }
}
