use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("response is not repairable JSON")]
pub struct Unrepairable;

fn parses(s: &str) -> bool {
    serde_json::from_str::<Value>(s).is_ok()
}

/// Coax a model response into strict JSON. Repairs run in order and each is
/// applied only while the text still fails to parse: strip markdown fences,
/// cut out the first balanced `{...}`, drop trailing commas, and rewrite
/// single-quoted strings as double-quoted ones. Valid input is returned
/// unchanged.
pub fn repair_json(raw: &str) -> Result<String, Unrepairable> {
    if parses(raw) {
        return Ok(raw.to_string());
    }
    let mut text = raw.to_string();
    let steps: [fn(&str) -> Option<String>; 4] = [strip_fences, first_object, drop_trailing_commas, single_to_double_quotes];
    for step in steps {
        if let Some(next) = step(&text) {
            text = next;
        }
        if parses(&text) {
            return Ok(text);
        }
    }
    Err(Unrepairable)
}

fn strip_fences(s: &str) -> Option<String> {
    let start = s.find("```")?;
    let after = &s[start + 3..];
    // skip the info string (```json)
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(body[..end].trim().to_string())
}

/// First `{` through its matching `}`, ignoring braces inside double-quoted
/// strings.
fn first_object(s: &str) -> Option<String> {
    let start = s.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in s[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(s[start..start + i + 1].to_string());
                }
            }
            _ => {}
        }
    }
    None
}

fn drop_trailing_commas(s: &str) -> Option<String> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut in_str = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            out.push(c);
            continue;
        }
        if c == '"' {
            in_str = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    Some(out)
}

/// Rewrite `'...'` strings outside double-quoted strings. Gives up when a
/// single-quoted string is never closed.
fn single_to_double_quotes(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        match c {
            '"' => {
                out.push(c);
                let mut escaped = false;
                for d in chars.by_ref() {
                    out.push(d);
                    if escaped {
                        escaped = false;
                    } else if d == '\\' {
                        escaped = true;
                    } else if d == '"' {
                        break;
                    }
                }
            }
            '\'' => {
                out.push('"');
                let mut closed = false;
                let mut escaped = false;
                for d in chars.by_ref() {
                    if escaped {
                        if d != '\'' {
                            out.push('\\');
                        }
                        out.push(d);
                        escaped = false;
                    } else if d == '\\' {
                        escaped = true;
                    } else if d == '\'' {
                        closed = true;
                        break;
                    } else if d == '"' {
                        out.push_str("\\\"");
                    } else {
                        out.push(d);
                    }
                }
                if !closed {
                    return None;
                }
                out.push('"');
            }
            _ => out.push(c),
        }
    }
    Some(out)
}
