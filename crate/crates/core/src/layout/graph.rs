use serde::{Deserialize, Serialize};

use super::Block;
use crate::ingest::BBox;
use crate::model::LayoutTuning;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    RightOf,
    LeftOf,
    Below,
    Above,
}

impl Relation {
    pub fn inverse(self) -> Relation {
        match self {
            Relation::RightOf => Relation::LeftOf,
            Relation::LeftOf => Relation::RightOf,
            Relation::Below => Relation::Above,
            Relation::Above => Relation::Below,
        }
    }
}

/// `dst` lies in direction `relation` from `src`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub relation: Relation,
    pub gap_px: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayoutGraph {
    /// Block bounding boxes, indexed by block id.
    pub nodes: Vec<BBox>,
    pub edges: Vec<Edge>,
}

impl LayoutGraph {
    pub fn neighbor(&self, src: usize, relation: Relation) -> Option<usize> {
        self.edges
            .iter()
            .filter(|e| e.src == src && e.relation == relation)
            .min_by(|a, b| a.gap_px.total_cmp(&b.gap_px))
            .map(|e| e.dst)
    }
}

/// Link each block to its nearest right neighbour (sharing at least
/// `graph_band_overlap` of the shorter height) and nearest block below
/// (sharing `graph_span_overlap` of the narrower width), plus the inverse
/// edges. Blocks must be numbered by position in the slice.
pub fn build_graph(blocks: &[Block], tuning: &LayoutTuning) -> LayoutGraph {
    let nodes: Vec<BBox> = blocks.iter().map(|b| b.bbox).collect();
    let mut edges: Vec<Edge> = Vec::new();
    let push = |edges: &mut Vec<Edge>, e: Edge| {
        if !edges.iter().any(|x| x.src == e.src && x.dst == e.dst && x.relation == e.relation) {
            edges.push(e);
        }
    };
    for (i, a) in nodes.iter().enumerate() {
        let mut right: Option<(usize, f64)> = None;
        let mut below: Option<(usize, f64)> = None;
        for (j, b) in nodes.iter().enumerate() {
            if i == j {
                continue;
            }
            if b.x0 >= a.x1 && a.vertical_overlap(b) >= tuning.graph_band_overlap * a.height().min(b.height()) {
                let gap = b.x0 - a.x1;
                if right.is_none_or(|(_, g)| gap < g) {
                    right = Some((j, gap));
                }
            }
            if b.y0 >= a.y1 && a.horizontal_overlap(b) > 0.0 && a.horizontal_overlap(b) >= tuning.graph_span_overlap * a.width().min(b.width()) {
                let gap = b.y0 - a.y1;
                if below.is_none_or(|(_, g)| gap < g) {
                    below = Some((j, gap));
                }
            }
        }
        for (hit, relation) in [(right, Relation::RightOf), (below, Relation::Below)] {
            if let Some((j, gap_px)) = hit {
                push(&mut edges, Edge { src: i, dst: j, relation, gap_px });
                push(&mut edges, Edge { src: j, dst: i, relation: relation.inverse(), gap_px });
            }
        }
    }
    LayoutGraph { nodes, edges }
}
