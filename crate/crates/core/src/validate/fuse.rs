use std::collections::BTreeMap;

use crate::ingest::{Token, TokenSource};
use crate::layout::LabelLink;
use crate::llm::PartialInvoice;
use crate::model::{
    CanonicalField, ConfidenceTuning, Corroboration, Currency, DatePolicy, FieldValue, NormalizedValue, Provenance,
    TokenId, ValidationStatus,
};
use crate::ner::{correct_numeric_ocr, ConfusionMap, DateCandidate, RegexCandidate};

use super::normalize::{comparable, normalize_field};

/// Combined confidence for one field.
///
/// Agreement halves the remaining doubt; a passed arithmetic check lifts
/// the value to at least the pass floor and a failed one halves it.
pub fn score_confidence(base: f64, agreement: bool, arithmetic: Option<bool>, tuning: &ConfidenceTuning) -> f64 {
    let mut c = base.clamp(0.0, 1.0);
    if agreement {
        c = 1.0 - (1.0 - c) * tuning.agreement_shrink;
    }
    match arithmetic {
        Some(true) => c = c.max(tuning.arithmetic_pass_floor),
        Some(false) => c *= tuning.arithmetic_fail_factor,
        None => {}
    }
    c.clamp(0.0, 1.0)
}

fn compact(s: &str) -> String {
    s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

/// Smallest run of consecutive tokens whose text contains `value`, ignoring
/// case, spaces and punctuation. Values shorter than three characters must
/// match a run exactly.
pub fn ground_value(value: &str, tokens: &[Token]) -> Option<Vec<TokenId>> {
    let v = compact(value);
    if v.is_empty() {
        return None;
    }
    let texts: Vec<String> = tokens.iter().map(|t| compact(&t.text)).collect();
    for i in 0..tokens.len() {
        if texts[i].is_empty() {
            continue;
        }
        let mut acc = String::new();
        for j in i..tokens.len() {
            acc.push_str(&texts[j]);
            let hit = if v.len() < 3 {
                acc == v
            } else {
                // the first token has to take part in the match
                acc.contains(&v) && !acc[texts[i].len()..].contains(&v)
            };
            if hit {
                return Some(tokens[i..=j].iter().map(|t| t.id).collect());
            }
            if acc.len() >= v.len() + texts[i].len() {
                break;
            }
        }
    }
    None
}

/// Base confidence of a model answer: grounded in embedded text it gets the
/// embedded base, grounded in OCR tokens their mean confidence, otherwise
/// the ungrounded base.
fn llm_base(support: &[TokenId], tokens: &[Token], tuning: &ConfidenceTuning) -> f64 {
    if support.is_empty() {
        return tuning.llm_ungrounded_base;
    }
    let by_id: BTreeMap<TokenId, &Token> = tokens.iter().map(|t| (t.id, t)).collect();
    let grounded: Vec<&Token> = support.iter().filter_map(|id| by_id.get(id).copied()).collect();
    if grounded.iter().all(|t| t.source == TokenSource::Embedded) {
        tuning.embedded_base
    } else {
        grounded.iter().map(|t| t.confidence).sum::<f64>() / grounded.len() as f64
    }
}

/// Inputs to fusion besides the model's answer.
pub struct FusionInputs<'a> {
    pub tokens: &'a [Token],
    pub regex: &'a [RegexCandidate],
    pub dates: &'a [DateCandidate],
    pub layout: &'a [LabelLink],
    pub confusion: &'a ConfusionMap,
    pub policy: DatePolicy,
    pub currency: Currency,
    pub tuning: &'a ConfidenceTuning,
}

struct Candidate {
    raw: String,
    value: NormalizedValue,
    support: Vec<TokenId>,
}

impl FusionInputs<'_> {
    fn prepare(&self, field: CanonicalField, raw: &str) -> Option<(String, NormalizedValue)> {
        let raw = if field.is_numeric() {
            correct_numeric_ocr(raw, self.confusion, true)
        } else {
            raw.trim().to_string()
        };
        let value = normalize_field(field, &raw, self.policy, self.currency).ok()?;
        Some((raw, value))
    }

    fn regex_candidate(&self, field: CanonicalField) -> Option<Candidate> {
        if let Some(c) = self.regex.iter().find(|c| c.field == field) {
            let (raw, mut value) = self.prepare(field, &c.raw)?;
            if let (NormalizedValue::Money(m), Some(hint)) = (&mut value, c.currency_hint) {
                m.currency = hint;
            }
            let support = ground_value(&c.raw, self.tokens).unwrap_or_default();
            return Some(Candidate { raw, value, support });
        }
        if matches!(field, CanonicalField::InvoiceDate | CanonicalField::DueDate) {
            let d = self.dates.iter().find(|d| d.field() == Some(field))?;
            let value = NormalizedValue::Date(d.resolve(self.policy));
            let support = ground_value(&d.raw, self.tokens).unwrap_or_default();
            return Some(Candidate {
                raw: d.raw.clone(),
                value,
                support,
            });
        }
        None
    }

    fn layout_candidate(&self, field: CanonicalField) -> Option<Candidate> {
        let link = self.layout.iter().find(|l| l.field == field)?;
        let (raw, value) = self.prepare(field, &link.value_text)?;
        Some(Candidate {
            raw,
            value,
            support: link.value_tokens.clone(),
        })
    }
}

fn field_value(field: CanonicalField, c: Candidate, provenance: Provenance, base: f64) -> FieldValue {
    FieldValue {
        field,
        raw_text: c.raw,
        normalized: c.value,
        confidence: base,
        provenance,
        support: c.support,
        validation: ValidationStatus::Unchecked,
        corroboration: Corroboration::Uncorroborated,
        base_confidence: base,
    }
}

/// Merge model, regex and layout answers per field.
///
/// The model's value wins when present. If a regex or layout candidate
/// normalizes to the same value the field is marked agreed and its
/// confidence raised; if they differ it is marked conflicted and its
/// confidence scaled down. Without a model answer the regex candidate is
/// used, else the layout one. Confidence here excludes arithmetic, which is
/// applied after the checks run.
pub fn fuse_fields(llm: Option<&PartialInvoice>, inputs: &FusionInputs<'_>) -> BTreeMap<CanonicalField, FieldValue> {
    let tuning = inputs.tuning;
    let mut out = BTreeMap::new();
    for field in CanonicalField::ALL {
        let model = llm
            .and_then(|p| p.fields.get(&field))
            .and_then(|original| {
                let (raw, value) = inputs.prepare(field, original)?;
                let support = ground_value(original, inputs.tokens).unwrap_or_default();
                Some(Candidate { raw, value, support })
            });
        let regex = inputs.regex_candidate(field);
        let layout = inputs.layout_candidate(field);
        let same = |a: &Candidate, b: &Candidate| comparable(field, &a.value) == comparable(field, &b.value);

        let fv = match model {
            Some(m) => {
                let others: Vec<&Candidate> = regex.iter().chain(layout.iter()).collect();
                let base = llm_base(&m.support, inputs.tokens, tuning);
                let agreed = others.iter().any(|o| same(&m, o));
                let conflicted = !agreed && !others.is_empty();
                let mut fv = field_value(field, m, Provenance::Llm, base);
                if agreed {
                    fv.corroboration = Corroboration::Agreed;
                    fv.confidence = score_confidence(base, true, None, tuning);
                } else if conflicted {
                    fv.corroboration = Corroboration::Conflicted;
                    fv.confidence = (base * tuning.conflict_factor).clamp(0.0, 1.0);
                }
                fv
            }
            None => match (regex, layout) {
                (Some(r), layout) => {
                    let agreed = layout.as_ref().is_some_and(|l| same(&r, l));
                    let mut fv = field_value(field, r, Provenance::Regex, tuning.regex_base);
                    if agreed {
                        fv.corroboration = Corroboration::Agreed;
                        fv.confidence = score_confidence(tuning.regex_base, true, None, tuning);
                    }
                    fv
                }
                (None, Some(l)) => field_value(field, l, Provenance::Layout, tuning.layout_base),
                (None, None) => continue,
            },
        };
        out.insert(field, fv);
    }
    out
}
