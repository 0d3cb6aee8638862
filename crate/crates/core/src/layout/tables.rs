use serde::{Deserialize, Serialize};

use super::{label_words, median_line_height, split_line, Line, TokenIndex};
use crate::ingest::BBox;
use crate::model::{LayoutTuning, RawLineItem, TokenId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRegion {
    pub bbox: BBox,
    pub rows: Vec<BBox>,
    /// Column x-spans, left to right.
    pub columns: Vec<(f64, f64)>,
    /// `cells[row][col]` lists the tokens in that cell, left to right.
    pub cells: Vec<Vec<Vec<TokenId>>>,
    /// The first row holds column titles rather than data.
    pub header: bool,
    /// All tokens, row-major.
    pub token_ids: Vec<TokenId>,
}

impl TableRegion {
    pub fn row_token_ids(&self) -> Vec<Vec<TokenId>> {
        self.cells.iter().map(|r| r.iter().flatten().copied().collect()).collect()
    }

    pub fn body_rows(&self) -> usize {
        self.rows.len() - usize::from(self.header)
    }
}

/// Mostly digits: at least half of the alphanumeric characters.
pub fn is_numeric_text(s: &str) -> bool {
    let alnum = s.chars().filter(|c| c.is_alphanumeric()).count();
    let digits = s.chars().filter(|c| c.is_ascii_digit()).count();
    digits > 0 && digits * 2 >= alnum
}

/// Merge intervals whose gap is at most `slack`.
fn merge_spans(mut spans: Vec<(f64, f64)>, slack: f64) -> Vec<(f64, f64)> {
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in spans {
        match out.last_mut() {
            Some(last) if a - last.1 <= slack => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Find grids among consecutive lines. A run of at least `table_min_rows`
/// lines, each with `table_min_columns` or more cells, forms a table when
/// the whitespace gaps shared by every row give at least that many columns,
/// every row fills that many, and `table_min_numeric_columns` columns are
/// mostly numeric.
pub fn detect_tables(lines: &[Line], index: &TokenIndex<'_>, char_width: f64, tuning: &LayoutTuning) -> Vec<TableRegion> {
    let mh = median_line_height(lines);
    let cells_of: Vec<Vec<Line>> = lines
        .iter()
        .map(|l| split_line(l, index, tuning.table_cell_gap_chars * char_width))
        .collect();
    let mut tables = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        if cells_of[i].len() < tuning.table_min_columns {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < lines.len()
            && cells_of[j].len() >= tuning.table_min_columns
            && lines[j].bbox.y0 - lines[j - 1].bbox.y1 <= tuning.table_row_gap_lines * mh
        {
            j += 1;
        }
        if j - i >= tuning.table_min_rows {
            if let Some(t) = build_table(&lines[i..j], &cells_of[i..j], index, char_width, tuning) {
                tables.push(t);
            }
        }
        i = j;
    }
    tables
}

fn build_table(
    lines: &[Line],
    cells_of: &[Vec<Line>],
    index: &TokenIndex<'_>,
    char_width: f64,
    tuning: &LayoutTuning,
) -> Option<TableRegion> {
    let spans = cells_of
        .iter()
        .flatten()
        .map(|c| (c.bbox.x0, c.bbox.x1))
        .collect();
    let columns = merge_spans(spans, tuning.table_align_chars * char_width);
    if columns.len() < tuning.table_min_columns {
        return None;
    }
    let col_of = |b: &BBox| columns.iter().position(|&(a, z)| b.x0 >= a && b.x1 <= z);

    let mut cells: Vec<Vec<Vec<TokenId>>> = Vec::with_capacity(lines.len());
    for line in lines {
        let mut row = vec![Vec::new(); columns.len()];
        for &id in &line.token_ids {
            let col = col_of(&index.get(id).bbox)?;
            row[col].push(id);
        }
        if row.iter().filter(|c| !c.is_empty()).count() < tuning.table_min_columns {
            return None;
        }
        cells.push(row);
    }

    let numeric = |ids: &[TokenId]| !ids.is_empty() && is_numeric_text(&index.text(ids));
    let header = cells[0].iter().all(|c| !numeric(c));
    let body = &cells[usize::from(header)..];
    let numeric_columns = (0..columns.len())
        .filter(|&c| {
            let filled: Vec<&Vec<TokenId>> = body.iter().map(|r| &r[c]).filter(|v| !v.is_empty()).collect();
            !filled.is_empty() && filled.iter().filter(|v| numeric(v)).count() * 2 > filled.len()
        })
        .count();
    if numeric_columns < tuning.table_min_numeric_columns {
        return None;
    }

    let rows: Vec<BBox> = lines.iter().map(|l| l.bbox).collect();
    let bbox = rows.iter().copied().reduce(|a, b| a.union(&b))?;
    let token_ids = cells.iter().flatten().flatten().copied().collect();
    Some(TableRegion {
        bbox,
        rows,
        columns,
        cells,
        header,
        token_ids,
    })
}

#[derive(Clone, Copy, PartialEq)]
enum ColumnKind {
    Description,
    Quantity,
    UnitPrice,
    Amount,
    Other,
}

fn header_kind(text: &str) -> ColumnKind {
    let words = label_words(text);
    let has = |w: &str| words.iter().any(|x| x == w);
    if has("qty") || has("quantity") || has("units") || has("hours") {
        ColumnKind::Quantity
    } else if has("price") || has("rate") || has("unit") || has("cost") {
        ColumnKind::UnitPrice
    } else if has("amount") || has("total") || has("subtotal") {
        ColumnKind::Amount
    } else if has("description") || has("item") || has("service") || has("product") || has("details") {
        ColumnKind::Description
    } else {
        ColumnKind::Other
    }
}

/// Read line items out of a table. Columns are identified by their header
/// titles, else positionally: the first text column is the description and
/// the last three numeric columns are quantity, unit price and amount.
pub fn table_line_items(table: &TableRegion, index: &TokenIndex<'_>) -> Vec<RawLineItem> {
    let ncols = table.columns.len();
    let body = &table.cells[usize::from(table.header)..];
    let mut kinds = vec![ColumnKind::Other; ncols];
    if table.header {
        for (c, ids) in table.cells[0].iter().enumerate() {
            kinds[c] = header_kind(&index.text(ids));
        }
    }
    let all_found = [ColumnKind::Description, ColumnKind::Quantity, ColumnKind::UnitPrice, ColumnKind::Amount]
        .iter()
        .all(|k| kinds.contains(k));
    if !all_found {
        let numeric_col = |c: usize| {
            let filled: Vec<_> = body.iter().map(|r| &r[c]).filter(|v| !v.is_empty()).collect();
            !filled.is_empty() && filled.iter().filter(|v| is_numeric_text(&index.text(v))).count() * 2 > filled.len()
        };
        kinds = vec![ColumnKind::Other; ncols];
        let numeric: Vec<usize> = (0..ncols).filter(|&c| numeric_col(c)).collect();
        if let Some(d) = (0..ncols).find(|c| !numeric.contains(c)) {
            kinds[d] = ColumnKind::Description;
        }
        let tail: Vec<usize> = numeric.iter().rev().take(3).rev().copied().collect();
        let roles = [ColumnKind::Quantity, ColumnKind::UnitPrice, ColumnKind::Amount];
        for (c, k) in tail.iter().zip(&roles[3 - tail.len()..]) {
            kinds[*c] = *k;
        }
    }
    let cell = |row: &Vec<Vec<TokenId>>, kind: ColumnKind| -> Option<String> {
        kinds
            .iter()
            .position(|&k| k == kind)
            .map(|c| index.text(&row[c]))
            .filter(|s| !s.is_empty())
    };
    body.iter()
        .map(|row| RawLineItem {
            description: cell(row, ColumnKind::Description),
            quantity: cell(row, ColumnKind::Quantity),
            unit_price: cell(row, ColumnKind::UnitPrice),
            amount: cell(row, ColumnKind::Amount),
        })
        .collect()
}
