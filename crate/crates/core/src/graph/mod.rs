//! Sparse patch-similarity graphs and the discrete nonlocal calculus on them.
//!
//! A [`NonlocalGraph`] stores, for every pixel, its retained neighbors together
//! with two symmetric weights: one measuring saturation similarity and one
//! measuring value similarity. Adjacency is kept in compressed-row form with a
//! reverse-edge table so that operators touching `p(j, i)` stay O(edges).

mod build;
mod cache;
mod ops;

pub(crate) use build::mirror;
pub use build::{build_channel_graphs, build_graph, PatchParams};
pub use cache::{read_graph, write_graph, GRAPH_MAGIC};
pub use ops::{inner_pair, EdgeField};

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Which weight set an operator uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    Saturation,
    Value,
}

#[derive(Clone, Debug)]
pub struct NonlocalGraph<T> {
    height: usize,
    width: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: [Vec<T>; 2],
    sqrt_weights: [Vec<T>; 2],
    reverse: Vec<usize>,
}

#[inline]
fn slot(channel: Channel) -> usize {
    match channel {
        Channel::Saturation => 0,
        Channel::Value => 1,
    }
}

impl<T: Scalar> NonlocalGraph<T> {
    /// Builds a graph from undirected edges `(i, j, w_s, w_v)`; each edge is
    /// stored in both directions with identical weights.
    ///
    /// Repeated pairs are accepted only if their weights agree exactly.
    pub fn from_edges(
        height: usize,
        width: usize,
        edges: impl IntoIterator<Item = (usize, usize, T, T)>,
    ) -> Result<Self> {
        let n = height * width;
        let mut pairs: Vec<(u32, u32, T, T)> = Vec::new();
        for (i, j, ws, wv) in edges {
            if i >= n || j >= n {
                return Err(invalid(
                    "edge",
                    format!("({i}, {j}) out of range for {n} pixels"),
                ));
            }
            if i == j {
                return Err(invalid("edge", format!("self-loop at {i}")));
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            pairs.push((a as u32, b as u32, ws, wv));
        }
        Self::from_canonical_pairs(height, width, pairs)
    }

    pub(crate) fn from_canonical_pairs(
        height: usize,
        width: usize,
        mut pairs: Vec<(u32, u32, T, T)>,
    ) -> Result<Self> {
        let n = height * width;
        pairs.sort_by_key(|&(a, b, _, _)| (a, b));
        let mut unique: Vec<(u32, u32, T, T)> = Vec::with_capacity(pairs.len());
        for p in pairs {
            match unique.last() {
                Some(last) if last.0 == p.0 && last.1 == p.1 => {
                    if last.2 != p.2 || last.3 != p.3 {
                        return Err(invalid(
                            "edge",
                            format!("pair ({}, {}) given with conflicting weights", p.0, p.1),
                        ));
                    }
                }
                _ => unique.push(p),
            }
        }
        for &(a, b, ws, wv) in &unique {
            for w in [ws, wv] {
                if !(w > T::zero() && w <= T::one()) {
                    return Err(invalid(
                        "weight",
                        format!("edge ({a}, {b}) has weight {w} outside (0, 1]"),
                    ));
                }
            }
        }

        let mut degree = vec![0usize; n];
        for &(a, b, _, _) in &unique {
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let m = *offsets.last().unwrap();
        let mut directed: Vec<(u32, u32, T, T)> = Vec::with_capacity(m);
        for &(a, b, ws, wv) in &unique {
            directed.push((a, b, ws, wv));
            directed.push((b, a, ws, wv));
        }
        directed.sort_by_key(|&(a, b, _, _)| (a, b));

        let neighbors: Vec<u32> = directed.iter().map(|e| e.1).collect();
        let ws: Vec<T> = directed.iter().map(|e| e.2).collect();
        let wv: Vec<T> = directed.iter().map(|e| e.3).collect();
        Self::assemble(height, width, offsets, neighbors, [ws, wv])
    }

    /// Finishes construction from CSR arrays whose rows are sorted by neighbor.
    fn assemble(
        height: usize,
        width: usize,
        offsets: Vec<usize>,
        neighbors: Vec<u32>,
        weights: [Vec<T>; 2],
    ) -> Result<Self> {
        let n = height * width;
        let mut reverse = vec![usize::MAX; neighbors.len()];
        for i in 0..n {
            for e in offsets[i]..offsets[i + 1] {
                let j = neighbors[e] as usize;
                let row = &neighbors[offsets[j]..offsets[j + 1]];
                let k = row
                    .binary_search(&(i as u32))
                    .map_err(|_| Error::CorruptGraph(format!("edge ({i}, {j}) has no reverse")))?;
                reverse[e] = offsets[j] + k;
            }
        }
        let sqrt_weights = [
            weights[0].iter().map(|w| w.sqrt()).collect(),
            weights[1].iter().map(|w| w.sqrt()).collect(),
        ];
        let g = Self {
            height,
            width,
            offsets,
            neighbors,
            weights,
            sqrt_weights,
            reverse,
        };
        g.validate()?;
        Ok(g)
    }

    /// Checks symmetry, absence of self-loops and the weight range.
    pub fn validate(&self) -> Result<()> {
        let n = self.pixel_count();
        if self.offsets.len() != n + 1 {
            return Err(Error::CorruptGraph("offset table has wrong length".into()));
        }
        for i in 0..n {
            let row = self.row(i);
            for (k, e) in row.clone().enumerate() {
                let j = self.neighbors[e] as usize;
                if j == i {
                    return Err(Error::CorruptGraph(format!("self-loop at {i}")));
                }
                if k > 0 && self.neighbors[e - 1] >= self.neighbors[e] {
                    return Err(Error::CorruptGraph(format!(
                        "row {i} is not strictly sorted"
                    )));
                }
                let r = self.reverse[e];
                if self.neighbors[r] as usize != i {
                    return Err(Error::CorruptGraph(format!(
                        "edge ({i}, {j}) has no reverse"
                    )));
                }
                for s in 0..2 {
                    let w = self.weights[s][e];
                    if !(w > T::zero() && w <= T::one()) {
                        return Err(Error::CorruptGraph(format!(
                            "edge ({i}, {j}) weight {w} outside (0, 1]"
                        )));
                    }
                    if w != self.weights[s][r] {
                        return Err(Error::CorruptGraph(format!(
                            "edge ({i}, {j}) is asymmetric"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// Number of directed edges (twice the number of undirected pairs).
    #[inline]
    pub fn edge_count(&self) -> usize {
        self.neighbors.len()
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Edge index range for pixel `i`.
    #[inline]
    pub fn row(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    #[inline]
    pub fn target(&self, e: usize) -> usize {
        self.neighbors[e] as usize
    }

    /// Index of the edge `(j, i)` for edge `e = (i, j)`.
    #[inline]
    pub fn reverse(&self, e: usize) -> usize {
        self.reverse[e]
    }

    #[inline]
    pub fn weights(&self, channel: Channel) -> &[T] {
        &self.weights[slot(channel)]
    }

    #[inline]
    pub fn sqrt_weights(&self, channel: Channel) -> &[T] {
        &self.sqrt_weights[slot(channel)]
    }

    /// `(j, w_s, w_v)` for every neighbor of `i`, sorted by `j`.
    pub fn neighbors_of(&self, i: usize) -> impl Iterator<Item = (usize, T, T)> + '_ {
        self.row(i)
            .map(move |e| (self.target(e), self.weights[0][e], self.weights[1][e]))
    }

    pub(crate) fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        if (height, width) != (self.height, self.width) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} raster", self.height, self.width),
                got: format!("{height}x{width} raster"),
            });
        }
        Ok(())
    }
}
