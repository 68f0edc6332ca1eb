//! `.spg` superpoint graph container.
//!
//! Layout (little-endian): magic `SPG1`, u32 node count, u32 edge count,
//! u8 flags, then per node `u32 sp_id` followed by 256 `f32` when features
//! are present, then per edge `u32 u, u32 v`, optional `f32 w_sam`,
//! optional `f32 affinity`, optional `i8 label` (-1 absent, 0 negative,
//! 1 positive).

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_file, write_file, PutLe, Reader};
use crate::model::{EdgeLabel, GraphEdge, GraphNode, SuperpointGraph, FEATURE_DIM};

const MAGIC: &[u8; 4] = b"SPG1";

pub const FLAG_FEATURES: u8 = 1;
pub const FLAG_WEIGHTS: u8 = 1 << 1;
pub const FLAG_AFFINITIES: u8 = 1 << 2;
pub const FLAG_LABELS: u8 = 1 << 3;

/// Which optional sections a graph carries. Features, weights and
/// affinities must be present on all items or none.
fn flags_of(graph: &SuperpointGraph) -> Result<u8> {
    fn all_or_none<T>(
        items: &[T],
        has: impl Fn(&T) -> bool,
        what: &str,
    ) -> Result<bool> {
        let count = items.iter().filter(|x| has(x)).count();
        if count != 0 && count != items.len() {
            return Err(Error::invalid(
                "graph",
                format!("{what} present on {count} of {} items", items.len()),
            ));
        }
        Ok(count > 0)
    }
    let mut flags = 0;
    if all_or_none(&graph.nodes, |n| n.feature.is_some(), "features")? {
        flags |= FLAG_FEATURES;
    }
    if all_or_none(&graph.edges, |e| e.w_sam.is_some(), "w_sam")? {
        flags |= FLAG_WEIGHTS;
    }
    if all_or_none(&graph.edges, |e| e.affinity.is_some(), "affinity")? {
        flags |= FLAG_AFFINITIES;
    }
    if graph.edges.iter().any(|e| e.label.is_some()) {
        flags |= FLAG_LABELS;
    }
    Ok(flags)
}

pub fn graph_to_bytes(graph: &SuperpointGraph) -> Result<Vec<u8>> {
    graph.validate()?;
    let flags = flags_of(graph)?;
    let mut out = Vec::with_capacity(13 + graph.nodes.len() * (4 + 4 * FEATURE_DIM) + graph.edges.len() * 17);
    out.extend_from_slice(MAGIC);
    out.put_u32(graph.nodes.len() as u32);
    out.put_u32(graph.edges.len() as u32);
    out.put_u8(flags);
    for node in &graph.nodes {
        out.put_u32(node.sp_id);
        if let Some(f) = &node.feature {
            for &x in f {
                out.put_f32(x);
            }
        }
    }
    for e in &graph.edges {
        out.put_u32(e.u);
        out.put_u32(e.v);
        if let Some(w) = e.w_sam {
            out.put_f32(w);
        }
        if let Some(a) = e.affinity {
            out.put_f32(a);
        }
        if flags & FLAG_LABELS != 0 {
            out.put_u8(match e.label {
                None => -1i8,
                Some(EdgeLabel::Negative) => 0,
                Some(EdgeLabel::Positive) => 1,
            } as u8);
        }
    }
    Ok(out)
}

pub fn graph_from_bytes(bytes: &[u8]) -> Result<SuperpointGraph> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    let n_nodes = r.u32()? as usize;
    let n_edges = r.u32()? as usize;
    let flags = r.u8()?;
    if flags & !(FLAG_FEATURES | FLAG_WEIGHTS | FLAG_AFFINITIES | FLAG_LABELS) != 0 {
        return Err(Error::Format(format!("unknown flag bits {flags:#04x}")));
    }
    let node_size = 4 + if flags & FLAG_FEATURES != 0 { 4 * FEATURE_DIM } else { 0 };
    if r.remaining() < n_nodes.saturating_mul(node_size) {
        return Err(Error::Truncated {
            offset: r.offset(),
            needed: (n_nodes * node_size - r.remaining()) as u64,
        });
    }
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let sp_id = r.u32()?;
        let feature = if flags & FLAG_FEATURES != 0 {
            let mut f = Vec::with_capacity(FEATURE_DIM);
            for _ in 0..FEATURE_DIM {
                f.push(r.f32()?);
            }
            Some(f)
        } else {
            None
        };
        nodes.push(GraphNode { sp_id, feature });
    }
    let mut edges = Vec::with_capacity(n_edges.min(r.remaining() / 8));
    for _ in 0..n_edges {
        let u = r.u32()?;
        let v = r.u32()?;
        let w_sam = (flags & FLAG_WEIGHTS != 0).then(|| r.f32()).transpose()?;
        let affinity = (flags & FLAG_AFFINITIES != 0).then(|| r.f32()).transpose()?;
        let label = if flags & FLAG_LABELS != 0 {
            let at = r.offset();
            match r.i8()? {
                -1 => None,
                0 => Some(EdgeLabel::Negative),
                1 => Some(EdgeLabel::Positive),
                x => return Err(Error::Format(format!("bad edge label {x} at offset {at}"))),
            }
        } else {
            None
        };
        edges.push(GraphEdge {
            u,
            v,
            w_sam,
            affinity,
            label,
        });
    }
    r.finish()?;
    let graph = SuperpointGraph { nodes, edges };
    graph.validate()?;
    Ok(graph)
}

pub fn save_graph(graph: &SuperpointGraph, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &graph_to_bytes(graph)?)
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<SuperpointGraph> {
    graph_from_bytes(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph_round_trips() {
        let g = SuperpointGraph::default();
        let bytes = graph_to_bytes(&g).unwrap();
        assert_eq!(bytes.len(), 13);
        assert_eq!(graph_from_bytes(&bytes).unwrap(), g);
    }

    #[test]
    fn weight_is_bit_identical() {
        let mut e = GraphEdge::new(0, 1);
        e.w_sam = Some(0.75);
        let g = SuperpointGraph {
            nodes: vec![
                GraphNode { sp_id: 0, feature: None },
                GraphNode { sp_id: 1, feature: None },
            ],
            edges: vec![e],
        };
        let back = graph_from_bytes(&graph_to_bytes(&g).unwrap()).unwrap();
        assert_eq!(back.edges[0].w_sam.unwrap().to_bits(), 0.75f32.to_bits());
        assert_eq!(back, g);
    }

    #[test]
    fn version_and_truncation_errors() {
        let g = SuperpointGraph {
            nodes: vec![GraphNode { sp_id: 0, feature: Some(vec![1.0; FEATURE_DIM]) }],
            edges: vec![],
        };
        let mut bytes = graph_to_bytes(&g).unwrap();
        let mut wrong = bytes.clone();
        wrong[3] = b'2';
        assert!(matches!(graph_from_bytes(&wrong), Err(Error::VersionMismatch { .. })));
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(graph_from_bytes(&bytes), Err(Error::Truncated { .. })));
    }

    #[test]
    fn partial_weights_rejected() {
        let mut a = GraphEdge::new(0, 1);
        a.w_sam = Some(0.5);
        let g = SuperpointGraph {
            nodes: (0..3).map(|i| GraphNode { sp_id: i, feature: None }).collect(),
            edges: vec![a, GraphEdge::new(1, 2)],
        };
        assert!(graph_to_bytes(&g).is_err());
    }
}
