//! Binary graph cache.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "NLG1"                      4 bytes
//! n                           u32   pixel count
//! degree[0..n]                u32 each
//! (j, w_s, w_v)[0..edges]     u32 + f64 + f64, rows in pixel order
//! ```

use std::io::{Read, Write};

use super::NonlocalGraph;
use crate::error::{Error, Result};
use crate::graph::Channel;
use crate::scalar::Scalar;

pub const GRAPH_MAGIC: &[u8; 4] = b"NLG1";

pub fn write_graph<T: Scalar>(
    graph: &NonlocalGraph<T>,
    mut out: impl Write,
) -> std::io::Result<()> {
    out.write_all(GRAPH_MAGIC)?;
    out.write_all(&(graph.pixel_count() as u32).to_le_bytes())?;
    for i in 0..graph.pixel_count() {
        out.write_all(&(graph.degree(i) as u32).to_le_bytes())?;
    }
    let ws = graph.weights(Channel::Saturation);
    let wv = graph.weights(Channel::Value);
    for e in 0..graph.edge_count() {
        out.write_all(&(graph.target(e) as u32).to_le_bytes())?;
        out.write_all(&ws[e].to_f64_lossy().to_le_bytes())?;
        out.write_all(&wv[e].to_f64_lossy().to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input
        .read_exact(&mut b)
        .map_err(|e| Error::CorruptGraph(format!("truncated: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(input: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    input
        .read_exact(&mut b)
        .map_err(|e| Error::CorruptGraph(format!("truncated: {e}")))?;
    Ok(f64::from_le_bytes(b))
}

/// Reads a cached graph for a `height x width` image, validating symmetry.
pub fn read_graph<T: Scalar>(
    mut input: impl Read,
    height: usize,
    width: usize,
) -> Result<NonlocalGraph<T>> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|e| Error::CorruptGraph(format!("truncated: {e}")))?;
    if &magic != GRAPH_MAGIC {
        return Err(Error::CorruptGraph("bad magic bytes".into()));
    }
    let n = read_u32(&mut input)? as usize;
    if n != height * width {
        return Err(Error::DimensionMismatch {
            expected: format!("graph over {} pixels", height * width),
            got: format!("graph over {n} pixels"),
        });
    }
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0usize);
    for _ in 0..n {
        let d = read_u32(&mut input)? as usize;
        offsets.push(offsets.last().unwrap() + d);
    }
    let m = offsets[n];
    let mut neighbors = Vec::with_capacity(m);
    let mut ws = Vec::with_capacity(m);
    let mut wv = Vec::with_capacity(m);
    for _ in 0..m {
        let j = read_u32(&mut input)?;
        if j as usize >= n {
            return Err(Error::CorruptGraph(format!("neighbor {j} out of range")));
        }
        neighbors.push(j);
        ws.push(T::of(read_f64(&mut input)?));
        wv.push(T::of(read_f64(&mut input)?));
    }
    NonlocalGraph::assemble(height, width, offsets, neighbors, [ws, wv])
}
