//! LLM extraction: prompt construction, the completion client, JSON repair
//! and mapping of the response onto the canonical fields.

mod client;
mod parse;
mod repair;

pub use client::{
    prompt_hash, CallAttempt, HttpTransport, LlmClient, LlmError, LlmResponse, Transport, TransportError,
    REFUSAL_TEXT,
};
pub use parse::{field_for_key, parse_extraction, ParseError, PartialInvoice};
pub use repair::{repair_json, Unrepairable};

use crate::model::CanonicalField;

pub const INSTRUCTION: &str = "Extract structured data from the text as JSON.";

/// Assemble the extraction prompt. Text beyond `max_chars` characters is
/// cut and a notice appended inside the document fence.
pub fn build_prompt(text: &str, schema: &[CanonicalField], max_chars: usize) -> String {
    let mut p = String::new();
    p.push_str(INSTRUCTION);
    p.push('\n');
    if !schema.is_empty() {
        p.push_str("\nFields:\n");
        for f in schema {
            p.push_str(&format!("- {}: {}\n", f.as_str(), f.description()));
        }
        p.push_str("- line_items: one entry per invoice line\n");
        p.push_str("\nRespond with a JSON object with exactly these keys:\n{");
        for f in schema {
            p.push_str(&format!("\"{}\": string or null, ", f.as_str()));
        }
        p.push_str(
            "\"line_items\": [{\"description\": string, \"quantity\": string, \"unit_price\": string, \"amount\": string}]}\n",
        );
        p.push_str("Copy values exactly as printed.");
    }
    p.push_str("\nUse null for any field not present in the document. Output JSON only, with no commentary.\n");
    p.push_str("\nBEGIN DOCUMENT\n");
    let n = text.chars().count();
    if n > max_chars {
        let cut: String = text.chars().take(max_chars).collect();
        p.push_str(&cut);
        p.push_str(&format!("\n[document truncated to {max_chars} of {n} characters]"));
    } else {
        p.push_str(text);
    }
    p.push_str("\nEND DOCUMENT\n");
    p
}
