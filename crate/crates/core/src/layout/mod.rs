//! Deterministic page structure: lines, blocks, regions, tables, a spatial
//! relation graph, and label–value links.

mod graph;
mod lexicon;
mod link;
mod tables;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::ingest::{BBox, Token};
use crate::model::{LayoutTuning, TokenId};

pub use graph::{build_graph, Edge, LayoutGraph, Relation};
pub use lexicon::{label_words, Lexicon, LexiconError};
pub use link::{link_label_value, LabelLink};
pub use tables::{detect_tables, is_numeric_text, table_line_items, TableRegion};

/// Tokens sharing a baseline band, left to right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub token_ids: Vec<TokenId>,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Header,
    Footer,
    Body,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Label,
    Value,
    Mixed,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: usize,
    pub token_ids: Vec<TokenId>,
    /// Member line segments, top to bottom.
    pub lines: Vec<Line>,
    pub bbox: BBox,
    pub region: Region,
    pub role: Role,
}

/// Token lookup by id for one page.
pub struct TokenIndex<'a> {
    map: HashMap<TokenId, &'a Token>,
}

impl<'a> TokenIndex<'a> {
    pub fn new(tokens: &'a [Token]) -> Self {
        TokenIndex {
            map: tokens.iter().map(|t| (t.id, t)).collect(),
        }
    }

    pub fn get(&self, id: TokenId) -> &'a Token {
        self.map[&id]
    }

    pub fn text(&self, ids: &[TokenId]) -> String {
        ids.iter().map(|&i| self.get(i).text.as_str()).collect::<Vec<_>>().join(" ")
    }
}

fn union_bbox<'a>(boxes: impl IntoIterator<Item = &'a BBox>) -> BBox {
    boxes
        .into_iter()
        .copied()
        .reduce(|a, b| a.union(&b))
        .unwrap_or(BBox::new(0.0, 0.0, 0.0, 0.0))
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn median_char_width(tokens: &[Token]) -> f64 {
    median(
        tokens
            .iter()
            .filter(|t| !t.text.is_empty())
            .map(|t| t.bbox.width() / t.text.chars().count() as f64)
            .collect(),
    )
}

pub fn median_line_height(lines: &[Line]) -> f64 {
    median(lines.iter().map(|l| l.bbox.height()).collect())
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Group tokens of one page into lines: two tokens share a line when their
/// vertical overlap is at least `line_overlap` of the shorter height, closed
/// transitively.
pub fn cluster_lines(tokens: &[Token], tuning: &LayoutTuning) -> Vec<Line> {
    let n = tokens.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&tokens[i].bbox, &tokens[j].bbox);
            let need = tuning.line_overlap * a.height().min(b.height());
            if a.vertical_overlap(b) >= need && a.vertical_overlap(b) > 0.0 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut lines: Vec<Line> = groups
        .into_values()
        .map(|mut idx| {
            idx.sort_by(|&a, &b| {
                tokens[a]
                    .bbox
                    .x0
                    .total_cmp(&tokens[b].bbox.x0)
                    .then(tokens[a].id.cmp(&tokens[b].id))
            });
            Line {
                bbox: union_bbox(idx.iter().map(|&i| &tokens[i].bbox)),
                token_ids: idx.iter().map(|&i| tokens[i].id).collect(),
            }
        })
        .collect();
    lines.sort_by(|a, b| a.bbox.y0.total_cmp(&b.bbox.y0).then(a.bbox.x0.total_cmp(&b.bbox.x0)));
    lines
}

/// Split a line wherever the horizontal gap between neighbours exceeds
/// `max_gap` pixels.
pub fn split_line(line: &Line, index: &TokenIndex<'_>, max_gap: f64) -> Vec<Line> {
    let mut out: Vec<Line> = Vec::new();
    let mut cur: Vec<TokenId> = Vec::new();
    let mut last_x1 = f64::NEG_INFINITY;
    for &id in &line.token_ids {
        let b = index.get(id).bbox;
        if !cur.is_empty() && b.x0 - last_x1 > max_gap {
            out.push(make_line(std::mem::take(&mut cur), index));
        }
        last_x1 = last_x1.max(b.x1);
        cur.push(id);
    }
    if !cur.is_empty() {
        out.push(make_line(cur, index));
    }
    out
}

fn make_line(ids: Vec<TokenId>, index: &TokenIndex<'_>) -> Line {
    Line {
        bbox: union_bbox(ids.iter().map(|&i| &index.get(i).bbox)),
        token_ids: ids,
    }
}

/// Merge line segments into blocks. A segment joins the block whose bottom
/// segment lies just above it (gap below `block_gap_lines` median line
/// heights) and shares at least `block_span_overlap` of the narrower
/// horizontal span; the closest such block wins.
pub fn cluster_blocks(segments: &[Line], tuning: &LayoutTuning) -> Vec<Block> {
    let mh = median_line_height(segments);
    let mut order: Vec<&Line> = segments.iter().collect();
    order.sort_by(|a, b| a.bbox.y0.total_cmp(&b.bbox.y0).then(a.bbox.x0.total_cmp(&b.bbox.x0)));
    let mut blocks: Vec<Vec<Line>> = Vec::new();
    for seg in order {
        let mut best: Option<(usize, f64)> = None;
        for (bi, block) in blocks.iter().enumerate() {
            let last = &block.last().expect("blocks are never empty").bbox;
            let gap = seg.bbox.y0 - last.y1;
            let same_line = last.vertical_overlap(&seg.bbox) > 0.5 * last.height().min(seg.bbox.height());
            if same_line || gap >= tuning.block_gap_lines * mh || seg.bbox.y1 <= last.y1 {
                continue;
            }
            let need = tuning.block_span_overlap * last.width().min(seg.bbox.width());
            if last.horizontal_overlap(&seg.bbox) < need || last.horizontal_overlap(&seg.bbox) <= 0.0 {
                continue;
            }
            if best.is_none_or(|(_, g)| gap < g) {
                best = Some((bi, gap));
            }
        }
        match best {
            Some((bi, _)) => blocks[bi].push(seg.clone()),
            None => blocks.push(vec![seg.clone()]),
        }
    }
    blocks
        .into_iter()
        .enumerate()
        .map(|(id, lines)| Block {
            id,
            token_ids: lines.iter().flat_map(|l| l.token_ids.iter().copied()).collect(),
            bbox: union_bbox(lines.iter().map(|l| &l.bbox)),
            lines,
            region: Region::Body,
            role: Role::Unknown,
        })
        .collect()
}

/// Header and footer bands by block center; table blocks keep their region.
pub fn classify_regions(blocks: &mut [Block], page_height: f64, tuning: &LayoutTuning) {
    for b in blocks.iter_mut() {
        if b.region == Region::Table {
            continue;
        }
        let frac = b.bbox.center_y() / page_height.max(1.0);
        b.region = if frac < tuning.header_band {
            Region::Header
        } else if frac > 1.0 - tuning.footer_band {
            Region::Footer
        } else {
            Region::Body
        };
    }
}

/// Everything derived from one page's tokens.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PageLayout {
    pub page: u32,
    pub lines: Vec<Line>,
    pub blocks: Vec<Block>,
    pub tables: Vec<TableRegion>,
    pub graph: LayoutGraph,
    pub links: Vec<LabelLink>,
}

/// Full layout pass over one page. Table tokens form one table block each;
/// the remaining line segments are clustered into blocks.
pub fn analyze_page(
    tokens: &[Token],
    page: u32,
    page_height: f64,
    lexicon: &Lexicon,
    tuning: &LayoutTuning,
) -> PageLayout {
    let index = TokenIndex::new(tokens);
    let lines = cluster_lines(tokens, tuning);
    let cw = median_char_width(tokens);
    let tables = detect_tables(&lines, &index, cw, tuning);

    let in_table: HashSet<TokenId> = tables.iter().flat_map(|t| t.token_ids.iter().copied()).collect();
    let mut segments = Vec::new();
    for line in &lines {
        let rest: Vec<TokenId> = line.token_ids.iter().copied().filter(|id| !in_table.contains(id)).collect();
        if rest.is_empty() {
            continue;
        }
        let line = make_line(rest, &index);
        segments.extend(split_line(&line, &index, tuning.segment_gap_chars * cw));
    }
    let mut blocks = cluster_blocks(&segments, tuning);
    for t in &tables {
        blocks.push(Block {
            id: 0,
            token_ids: t.token_ids.clone(),
            lines: t
                .row_token_ids()
                .into_iter()
                .map(|ids| make_line(ids, &index))
                .collect(),
            bbox: t.bbox,
            region: Region::Table,
            role: Role::Unknown,
        });
    }
    blocks.sort_by(|a, b| a.bbox.y0.total_cmp(&b.bbox.y0).then(a.bbox.x0.total_cmp(&b.bbox.x0)));
    for (i, b) in blocks.iter_mut().enumerate() {
        b.id = i;
    }
    classify_regions(&mut blocks, page_height, tuning);
    let graph = build_graph(&blocks, tuning);
    let links = link_label_value(&graph, &mut blocks, &index, lexicon);
    PageLayout {
        page,
        lines,
        blocks,
        tables,
        graph,
        links,
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::ingest::{BBox, Token, TokenSource};
    use crate::model::TokenId;

    /// Monospace tokens: `rows` are (line index, column in chars, text).
    /// Character cells are 10 px wide, lines 20 px tall at a 30 px pitch.
    pub fn grid_tokens(rows: &[(u32, u32, &str)]) -> Vec<Token> {
        let mut out = Vec::new();
        for &(line, col, text) in rows {
            let mut c = col;
            for word in text.split(' ') {
                if !word.is_empty() {
                    let x0 = c as f64 * 10.0;
                    let y0 = 100.0 + line as f64 * 30.0;
                    out.push(Token {
                        id: TokenId(out.len() as u32),
                        text: word.to_string(),
                        bbox: BBox::new(x0, y0, x0 + 10.0 * word.chars().count() as f64, y0 + 20.0),
                        page: 0,
                        confidence: 1.0,
                        source: TokenSource::Embedded,
                    });
                }
                c += word.chars().count() as u32 + 1;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::grid_tokens;
    use super::*;

    #[test]
    fn same_band_tokens_share_a_line() {
        let toks = grid_tokens(&[(0, 0, "hello world")]);
        let lines = cluster_lines(&toks, &LayoutTuning::default());
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].token_ids.len(), 2);
        let toks = grid_tokens(&[(0, 0, "a"), (1, 0, "b")]);
        assert_eq!(cluster_lines(&toks, &LayoutTuning::default()).len(), 2);
    }

    #[test]
    fn address_stanza_is_one_block() {
        let toks = grid_tokens(&[(0, 0, "Acme Corp"), (1, 0, "12 Main Street"), (2, 0, "Springfield IL")]);
        let layout = analyze_page(&toks, 0, 3300.0, &Lexicon::default(), &LayoutTuning::default());
        assert_eq!(layout.blocks.len(), 1);
        assert_eq!(layout.blocks[0].lines.len(), 3);
    }

    #[test]
    fn blank_lines_separate_blocks() {
        let toks = grid_tokens(&[(0, 0, "first paragraph"), (4, 0, "second paragraph")]);
        let layout = analyze_page(&toks, 0, 3300.0, &Lexicon::default(), &LayoutTuning::default());
        assert_eq!(layout.blocks.len(), 2);
    }

    #[test]
    fn regions_follow_bands() {
        let toks = grid_tokens(&[(0, 0, "top")]);
        let mut blocks = cluster_blocks(&cluster_lines(&toks, &LayoutTuning::default()), &LayoutTuning::default());
        classify_regions(&mut blocks, 2200.0, &LayoutTuning::default());
        assert_eq!(blocks[0].region, Region::Header);
        classify_regions(&mut blocks, 115.0, &LayoutTuning::default());
        assert_eq!(blocks[0].region, Region::Footer);
        classify_regions(&mut blocks, 220.0, &LayoutTuning::default());
        assert_eq!(blocks[0].region, Region::Body);
    }

    #[test]
    fn every_token_in_exactly_one_block() {
        let toks = grid_tokens(&[
            (0, 0, "Invoice No: 42"),
            (0, 40, "Date: 2024-03-04"),
            (2, 0, "Item      Qty    Price    Amount"),
            (3, 0, "Widget    2      50.00    100.00"),
            (4, 0, "Gadget    1      50.00    50.00"),
            (6, 20, "Total 150.00"),
        ]);
        let layout = analyze_page(&toks, 0, 3300.0, &Lexicon::default(), &LayoutTuning::default());
        let mut seen: Vec<TokenId> = layout.blocks.iter().flat_map(|b| b.token_ids.clone()).collect();
        seen.sort();
        assert_eq!(seen, toks.iter().map(|t| t.id).collect::<Vec<_>>());
        for b in &layout.blocks {
            let idx = TokenIndex::new(&toks);
            let u = union_bbox(b.token_ids.iter().map(|&i| &idx.get(i).bbox));
            assert_eq!(u, b.bbox);
        }
    }
}
