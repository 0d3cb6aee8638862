use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfusionError {
    #[error("confusion map line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Letters OCR commonly reads in place of digits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMap {
    map: BTreeMap<char, char>,
}

impl Default for ConfusionMap {
    fn default() -> Self {
        let map = [
            ('O', '0'),
            ('o', '0'),
            ('l', '1'),
            ('I', '1'),
            ('|', '1'),
            ('S', '5'),
            ('B', '8'),
            ('Z', '2'),
            ('G', '6'),
        ]
        .into_iter()
        .collect();
        ConfusionMap { map }
    }
}

impl ConfusionMap {
    /// Add `from<TAB>to` lines. Both sides must be single characters and the
    /// target a digit.
    pub fn extend_from_tsv(&mut self, text: &str) -> Result<(), ConfusionError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with("# ") {
                continue;
            }
            let err = |message: &str| ConfusionError::Parse {
                line: i + 1,
                message: message.to_string(),
            };
            let (from, to) = line.split_once('\t').ok_or_else(|| err("expected from<TAB>to"))?;
            let mut f = from.chars();
            let mut t = to.chars();
            let (Some(from), None, Some(to), None) = (f.next(), f.next(), t.next(), t.next()) else {
                return Err(err("both sides must be single characters"));
            };
            if !to.is_ascii_digit() || from.is_ascii_digit() {
                return Err(err("must map a non-digit to a digit"));
            }
            self.map.insert(from, to);
        }
        Ok(())
    }

    pub fn get(&self, c: char) -> Option<char> {
        self.map.get(&c).copied()
    }
}

/// At least half of the alphanumeric characters are digits.
pub fn is_numeric_context(raw: &str) -> bool {
    let alnum = raw.chars().filter(|c| c.is_alphanumeric()).count();
    let digits = raw.chars().filter(|c| c.is_ascii_digit()).count();
    digits > 0 && digits * 2 >= alnum
}

fn is_anchor(c: char) -> bool {
    c.is_ascii_digit() || matches!(c, '.' | ',' | '$' | '€' | '£' | '¥' | '₹' | '\'')
}

/// Replace look-alike letters with digits inside numbers.
///
/// Only applies in numeric context (or when the caller's label says the
/// value is numeric). Letters are handled as maximal runs of letters and
/// mapped symbols. A run is rewritten only if every character in it is in
/// the map and both ends touch a digit, currency punctuation or the string
/// edge, with at least one real neighbour. Runs holding any other letter
/// (as in words) are never touched.
pub fn correct_numeric_ocr(raw: &str, map: &ConfusionMap, numeric_label: bool) -> String {
    if !(numeric_label || is_numeric_context(raw)) {
        return raw.to_string();
    }
    let chars: Vec<char> = raw.chars().collect();
    let in_run = |c: char| c.is_alphabetic() || map.get(c).is_some();
    let mut out = chars.clone();
    let mut i = 0;
    while i < chars.len() {
        if !in_run(chars[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && in_run(chars[i]) {
            i += 1;
        }
        let before = start.checked_sub(1).map(|k| chars[k]);
        let after = chars.get(i).copied();
        let ends_ok = before.is_none_or(is_anchor) && after.is_none_or(is_anchor);
        let anchored = before.is_some() || after.is_some();
        if ends_ok && anchored && chars[start..i].iter().all(|&c| map.get(c).is_some()) {
            for k in start..i {
                out[k] = map.get(chars[k]).expect("checked above");
            }
        }
    }
    out.into_iter().collect()
}
