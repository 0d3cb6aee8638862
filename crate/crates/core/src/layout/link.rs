use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{label_words, Block, LayoutGraph, Lexicon, Line, Region, Relation, Role, TokenIndex};
use crate::model::{CanonicalField, TokenId};

/// A label phrase and the text read as its value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelLink {
    pub field: CanonicalField,
    pub label_text: String,
    pub value_text: String,
    pub value_tokens: Vec<TokenId>,
    pub label_block: usize,
    pub value_block: usize,
    /// Pixel distance from label to value; 0 when on the same line.
    pub distance: f64,
}

struct LabelHit {
    field: CanonicalField,
    label_text: String,
    value_text: String,
    value_tokens: Vec<TokenId>,
}

/// Recognise a label at the start of a line and split off any inline value.
fn match_label(line: &Line, index: &TokenIndex<'_>, lexicon: &Lexicon) -> Option<LabelHit> {
    let texts: Vec<&str> = line.token_ids.iter().map(|&id| index.get(id).text.as_str()).collect();

    if let Some(ci) = texts.iter().position(|t| t.contains(':')) {
        let (head, tail) = texts[ci].split_once(':').expect("token contains a colon");
        let mut before: Vec<&str> = texts[..ci].to_vec();
        before.push(head);
        let words = label_words(&before.join(" "));
        if let Some((field, n)) = lexicon.longest_prefix(&words) {
            if n == words.len() {
                let mut value_tokens = Vec::new();
                let mut parts = Vec::new();
                if !tail.trim().is_empty() {
                    value_tokens.push(line.token_ids[ci]);
                    parts.push(tail.trim());
                }
                value_tokens.extend_from_slice(&line.token_ids[ci + 1..]);
                parts.extend_from_slice(&texts[ci + 1..]);
                return Some(LabelHit {
                    field,
                    label_text: before.join(" ").trim().to_string(),
                    value_text: parts.join(" "),
                    value_tokens,
                });
            }
        }
    }

    let words = label_words(&texts.join(" "));
    let (field, n) = lexicon.longest_prefix(&words)?;
    // the phrase has to end exactly at a token boundary
    let mut seen = 0;
    for (k, t) in texts.iter().enumerate() {
        seen += label_words(t).len();
        if seen == n {
            return Some(LabelHit {
                field,
                label_text: texts[..=k].join(" "),
                value_text: texts[k + 1..].join(" "),
                value_tokens: line.token_ids[k + 1..].to_vec(),
            });
        }
        if seen > n {
            break;
        }
    }
    None
}

fn line_text(line: &Line, index: &TokenIndex<'_>) -> String {
    index.text(&line.token_ids)
}

/// Pair label phrases with values. An inline value after the label (or its
/// colon) wins; otherwise the value is taken from the overlapping line of the
/// right-hand block, then the following lines of the same block, then the
/// block below. Only the nearest link per field is kept. Block roles are
/// updated along the way. Table blocks are not searched.
pub fn link_label_value(
    graph: &LayoutGraph,
    blocks: &mut [Block],
    index: &TokenIndex<'_>,
    lexicon: &Lexicon,
) -> Vec<LabelLink> {
    let hits: Vec<Vec<Option<LabelHit>>> = blocks
        .iter()
        .map(|b| {
            if b.region == Region::Table {
                b.lines.iter().map(|_| None).collect()
            } else {
                b.lines.iter().map(|l| match_label(l, index, lexicon)).collect()
            }
        })
        .collect();

    let mut best: BTreeMap<CanonicalField, LabelLink> = BTreeMap::new();
    let mut value_blocks = Vec::new();
    for (bi, block) in blocks.iter().enumerate() {
        for (li, hit) in hits[bi].iter().enumerate() {
            let Some(hit) = hit else { continue };
            let line = &block.lines[li];
            let mut found: Option<(String, Vec<TokenId>, usize, f64)> = None;

            if !hit.value_text.trim().is_empty() {
                found = Some((hit.value_text.clone(), hit.value_tokens.clone(), bi, 0.0));
            }
            if found.is_none() {
                if let Some(rj) = graph.neighbor(bi, Relation::RightOf) {
                    let right = &blocks[rj];
                    let overlapping = right.lines.iter().enumerate().find(|(_, l)| {
                        l.bbox.vertical_overlap(&line.bbox) >= 0.5 * l.bbox.height().min(line.bbox.height())
                    });
                    if let Some((rl, l)) = overlapping {
                        if right.region != Region::Table && hits[rj][rl].is_none() {
                            found = Some((line_text(l, index), l.token_ids.clone(), rj, l.bbox.x0 - line.bbox.x1));
                        }
                    }
                }
            }
            if found.is_none() {
                let following: Vec<&Line> = block.lines[li + 1..]
                    .iter()
                    .zip(&hits[bi][li + 1..])
                    .take_while(|(_, h)| h.is_none())
                    .map(|(l, _)| l)
                    .collect();
                if let Some(first) = following.first() {
                    found = Some(joined(&following, index, bi, first.bbox.y0 - line.bbox.y1));
                }
            }
            if found.is_none() && li + 1 == block.lines.len() {
                if let Some(bj) = graph.neighbor(bi, Relation::Below) {
                    let below = &blocks[bj];
                    if below.region != Region::Table {
                        let lines: Vec<&Line> = below
                            .lines
                            .iter()
                            .zip(&hits[bj])
                            .take_while(|(_, h)| h.is_none())
                            .map(|(l, _)| l)
                            .collect();
                        if let Some(first) = lines.first() {
                            found = Some(joined(&lines, index, bj, first.bbox.y0 - line.bbox.y1));
                        }
                    }
                }
            }

            let Some((value_text, value_tokens, value_block, distance)) = found else { continue };
            if value_block != bi {
                value_blocks.push(value_block);
            }
            let link = LabelLink {
                field: hit.field,
                label_text: hit.label_text.clone(),
                value_text,
                value_tokens,
                label_block: bi,
                value_block,
                distance,
            };
            match best.get(&hit.field) {
                Some(prev) if prev.distance <= link.distance => {}
                _ => {
                    best.insert(hit.field, link);
                }
            }
        }
    }

    for (bi, block) in blocks.iter_mut().enumerate() {
        if block.region == Region::Table {
            continue;
        }
        let labels = hits[bi].iter().filter(|h| h.is_some()).count();
        let inline = hits[bi]
            .iter()
            .flatten()
            .any(|h| !h.value_text.trim().is_empty());
        block.role = match (labels, value_blocks.contains(&bi)) {
            (0, true) => Role::Value,
            (0, false) => Role::Unknown,
            (n, _) if n == block.lines.len() && !inline => Role::Label,
            _ => Role::Mixed,
        };
    }
    best.into_values().collect()
}

fn joined(lines: &[&Line], index: &TokenIndex<'_>, block: usize, distance: f64) -> (String, Vec<TokenId>, usize, f64) {
    let text = lines.iter().map(|l| line_text(l, index)).collect::<Vec<_>>().join(", ");
    let tokens = lines.iter().flat_map(|l| l.token_ids.iter().copied()).collect();
    (text, tokens, block, distance)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::grid_tokens;
    use super::super::{analyze_page, PageLayout};
    use super::*;
    use crate::model::LayoutTuning;

    fn layout(rows: &[(u32, u32, &str)]) -> PageLayout {
        let toks = grid_tokens(rows);
        analyze_page(&toks, 0, 3300.0, &Lexicon::default(), &LayoutTuning::default())
    }

    fn value(l: &PageLayout, f: CanonicalField) -> Option<String> {
        l.links.iter().find(|k| k.field == f).map(|k| k.value_text.clone())
    }

    #[test]
    fn colon_and_inline_values() {
        let l = layout(&[
            (0, 0, "Invoice No: INV-0042"),
            (0, 40, "Date: 2024-03-04"),
            (8, 30, "Total 150.00"),
        ]);
        assert_eq!(value(&l, CanonicalField::InvoiceNumber).as_deref(), Some("INV-0042"));
        assert_eq!(value(&l, CanonicalField::InvoiceDate).as_deref(), Some("2024-03-04"));
        assert_eq!(value(&l, CanonicalField::TotalAmount).as_deref(), Some("150.00"));
    }

    #[test]
    fn colon_glued_to_value() {
        let l = layout(&[(0, 0, "Invoice#:A17")]);
        assert_eq!(value(&l, CanonicalField::InvoiceNumber).as_deref(), Some("A17"));
    }

    #[test]
    fn value_in_right_block() {
        let l = layout(&[(0, 0, "Due Date"), (0, 30, "2024-04-04")]);
        let link = l.links.iter().find(|k| k.field == CanonicalField::DueDate).unwrap();
        assert_eq!(link.value_text, "2024-04-04");
        assert_ne!(link.value_block, link.label_block);
        assert_eq!(l.blocks[link.value_block].role, Role::Value);
        assert_eq!(l.blocks[link.label_block].role, Role::Label);
    }

    #[test]
    fn address_below_label() {
        let l = layout(&[(0, 0, "Bill To:"), (1, 0, "Jane Roe"), (2, 0, "5 Elm Road"), (4, 0, "Ship To")]);
        assert_eq!(
            value(&l, CanonicalField::BillingAddress).as_deref(),
            Some("Jane Roe, 5 Elm Road")
        );
        assert_eq!(value(&l, CanonicalField::ShippingAddress), None);
    }

    #[test]
    fn label_must_end_on_token_boundary() {
        let l = layout(&[(0, 0, "Totalitarian regimes")]);
        assert!(l.links.is_empty());
        let l = layout(&[(0, 0, "Dates are approximate")]);
        assert!(l.links.is_empty());
    }

    #[test]
    fn nearest_link_wins() {
        let l = layout(&[(0, 0, "Total"), (0, 60, "999.00"), (6, 0, "Total: 150.00")]);
        assert_eq!(value(&l, CanonicalField::TotalAmount).as_deref(), Some("150.00"));
    }
}
