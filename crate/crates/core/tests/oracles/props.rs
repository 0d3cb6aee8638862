//! Properties of the pure building blocks.

use invoice_core::llm::{parse_extraction, repair_json};
use invoice_core::model::{money_format, money_parse, Currency, Money};
use invoice_core::ner::{correct_numeric_ocr, ConfusionMap};
use invoice_core::preprocess::{binarize_otsu, otsu_threshold, PageImage};
use invoice_core::validate::{normalize_weight, DedupIndex, DedupOutcome};
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;
use serde_json::Value;

/// Exhaustive Otsu: evaluate ω0ω1(μ0−μ1)² in floating point at every cut
/// and keep the first maximum.
fn otsu_brute(hist: &[u64; 256]) -> Option<u8> {
    let n: f64 = hist.iter().sum::<u64>() as f64;
    let mut best: Option<(u8, f64)> = None;
    for t in 0..256usize {
        let (mut c0, mut m0, mut c1, mut m1) = (0.0, 0.0, 0.0, 0.0);
        for (v, &c) in hist.iter().enumerate() {
            if v <= t {
                c0 += c as f64;
                m0 += (v as f64) * c as f64;
            } else {
                c1 += c as f64;
                m1 += (v as f64) * c as f64;
            }
        }
        if c0 == 0.0 || c1 == 0.0 {
            continue;
        }
        let (w0, w1) = (c0 / n, c1 / n);
        let var = w0 * w1 * (m0 / c0 - m1 / c1).powi(2);
        match best {
            Some((_, b)) if var <= b * (1.0 + 1e-12) => {}
            _ => best = Some((t as u8, var)),
        }
    }
    best.map(|(t, _)| t)
}

pub fn image() -> impl Strategy<Value = PageImage> {
    (1u32..40, 1u32..40, any::<u64>(), 1usize..6).prop_map(|(w, h, seed, modes)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<u8> = (0..modes).map(|_| rng.random()).collect();
        let px = (0..w * h)
            .map(|_| {
                let c = *centers.choose(&mut rng).unwrap() as i32;
                (c + rng.random_range(-20..=20)).clamp(0, 255) as u8
            })
            .collect();
        PageImage::new(w, h, 300, px).unwrap()
    })
}

pub fn otsu_equals_brute_force(img: PageImage) -> Result<(), TestCaseError> {
    let hist = img.histogram();
    let fast = otsu_threshold(&hist);
    let slow = otsu_brute(&hist);
    match (fast, slow) {
        (Some(a), Some(b)) if a != b => {
            // distinct cuts may only tie on the objective
            let var = |t: u8| {
                let (mut n0, mut s0, mut n1, mut s1) = (0f64, 0f64, 0f64, 0f64);
                for (v, &c) in hist.iter().enumerate() {
                    if v <= t as usize {
                        n0 += c as f64;
                        s0 += v as f64 * c as f64
                    } else {
                        n1 += c as f64;
                        s1 += v as f64 * c as f64
                    }
                }
                n0 * n1 * (s0 / n0 - s1 / n1).powi(2)
            };
            prop_assert!((var(a) - var(b)).abs() <= 1e-9 * var(a).max(1.0), "{} vs {}", a, b);
        }
        (a, b) => prop_assert_eq!(a, b),
    }
    let (bin, t, degenerate) = binarize_otsu(&img);
    prop_assert_eq!(degenerate, fast.is_none());
    if !degenerate {
        for (p, q) in img.pixels.iter().zip(&bin.pixels) {
            prop_assert_eq!(*q, if *p <= t { 0 } else { 255 });
        }
    }
    Ok(())
}

pub fn money() -> impl Strategy<Value = Money> {
    (-1_000_000_000_000i64..=1_000_000_000_000, 0usize..4)
        .prop_map(|(minor, cur)| Money::new(minor, [Currency::USD, Currency::EUR, Currency::GBP, Currency::INR][cur]))
}

pub fn money_round_trip(m: Money) -> Result<(), TestCaseError> {
    prop_assert_eq!(money_parse(&money_format(m), Currency::JPY).unwrap(), m);
    prop_assert_eq!(money_parse(&m.to_decimal_string(), m.currency).unwrap(), m);
    Ok(())
}

pub fn weight() -> impl Strategy<Value = Decimal> {
    (0i64..10_000_000, 0u32..4).prop_map(|(units, scale)| Decimal::new(units, scale))
}

pub fn weight_factors_exact(v: Decimal) -> Result<(), TestCaseError> {
    let s = v.to_string();
    prop_assert_eq!(normalize_weight(&format!("{s} qtl")).unwrap(), v * Decimal::from(100));
    prop_assert_eq!(normalize_weight(&format!("{s} ton")).unwrap(), v * Decimal::from(1000));
    prop_assert_eq!(normalize_weight(&format!("{s} kg")).unwrap(), v);
    Ok(())
}

pub fn numeric_correction_idempotent((raw, label): (String, bool)) -> Result<(), TestCaseError> {
    let map = ConfusionMap::default();
    let once = correct_numeric_ocr(&raw, &map, label);
    prop_assert_eq!(once.chars().count(), raw.chars().count());
    prop_assert_eq!(correct_numeric_ocr(&once, &map, label), once);
    Ok(())
}

pub fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::from),
        "[ -~]{0,12}".prop_map(Value::String),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map("[a-z_]{1,8}", inner, 0..4)
                .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

pub fn repair_is_identity_on_valid(v: Value) -> Result<(), TestCaseError> {
    let text = serde_json::to_string(&v).unwrap();
    prop_assert_eq!(repair_json(&text).unwrap(), text.clone());
    let pretty = serde_json::to_string_pretty(&v).unwrap();
    prop_assert_eq!(repair_json(&pretty).unwrap(), pretty);
    Ok(())
}

/// A JSON object, then damaged the way model output tends to be.
pub fn damaged_json() -> impl Strategy<Value = String> {
    let object = prop::collection::btree_map("[a-z_]{1,10}", "[A-Za-z0-9 .,/-]{0,12}", 1..6)
        .prop_map(|m| Value::Object(m.into_iter().map(|(k, v)| (k, Value::String(v))).collect()));
    (object, 0usize..5).prop_map(|(v, wrap)| {
        let body = serde_json::to_string(&v).unwrap();
        match wrap {
            0 => format!("```json\n{body}\n```"),
            1 => format!("Sure! Here it is: {body} Let me know."),
            2 => body.replacen('}', ",}", 1),
            3 => body.replace('"', "'"),
            _ => body,
        }
    })
}

pub fn repair_is_idempotent(damaged: String) -> Result<(), TestCaseError> {
    if let Ok(once) = repair_json(&damaged) {
        prop_assert!(serde_json::from_str::<Value>(&once).is_ok(), "{}", once);
        prop_assert_eq!(repair_json(&once).unwrap(), once);
    }
    Ok(())
}

/// `n` random and mutated inputs through repair and parse. Every call must
/// return, and every repaired text must parse. Returns how many inputs
/// parsed into an extraction.
pub fn repair_and_parse_fuzz(n: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let seeds = [
        r#"{"invoice_number":"INV-1","total_amount":"165.00","line_items":[{"description":"a","quantity":"1"}]}"#,
        "```json\n{'a': 'b',}\n```",
        "[1,2,3]",
        r#"{"a":{"b":[1,{"c":"}"}]}}"#,
        "I cannot help with that.",
    ];
    let alphabet: Vec<char> = "{}[]\"',:`\\ \n\tabcjson0123456789.-eE+nultrfs".chars().collect();
    let mut ok = 0usize;
    for i in 0..n {
        let input: String = if i % 2 == 0 {
            let len = rng.random_range(0..48);
            (0..len).map(|_| *alphabet.choose(&mut rng).unwrap()).collect()
        } else {
            let mut chars: Vec<char> = seeds[i % seeds.len()].chars().collect();
            for _ in 0..rng.random_range(1..5) {
                match rng.random_range(0..3) {
                    0 if !chars.is_empty() => {
                        let at = rng.random_range(0..chars.len());
                        chars.remove(at);
                    }
                    1 => {
                        let at = rng.random_range(0..=chars.len());
                        chars.insert(at, *alphabet.choose(&mut rng).unwrap());
                    }
                    _ if !chars.is_empty() => {
                        let at = rng.random_range(0..chars.len());
                        chars[at] = *alphabet.choose(&mut rng).unwrap();
                    }
                    _ => {}
                }
            }
            chars.into_iter().collect()
        };
        let outcome = std::panic::catch_unwind(|| {
            repair_json(&input).map(|fixed| {
                let parses = serde_json::from_str::<Value>(&fixed).is_ok();
                (parses, parse_extraction(&fixed).is_ok())
            })
        })
        .map_err(|_| format!("panicked on {input:?}"))?;
        match outcome {
            Ok((false, _)) => return Err(format!("repair output does not parse: {input:?}")),
            Ok((true, true)) => ok += 1,
            _ => {}
        }
    }
    Ok(ok)
}

/// Random admission streams: replaying a stream changes nothing, and any
/// order admits the same inputs as duplicates afterwards.
pub fn dedup_idempotent_and_order_insensitive(rounds: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for round in 0..rounds {
        let n = rng.random_range(1..30);
        let items: Vec<(String, Option<String>)> = (0..n)
            .map(|_| {
                let raw = format!("r{}", rng.random_range(0..8));
                let logical = rng.random_bool(0.8).then(|| format!("l{}", rng.random_range(0..6)));
                (raw, logical)
            })
            .collect();
        let run = |order: &[(String, Option<String>)]| {
            let mut idx = DedupIndex::default();
            let mut new = 0;
            for (raw, logical) in order {
                if idx.check(raw, logical.as_deref()) == DedupOutcome::New {
                    idx.insert(raw, logical.as_deref());
                    new += 1;
                }
            }
            (idx, new)
        };
        let (a, new_once) = run(&items);
        let doubled: Vec<_> = items.iter().chain(items.iter()).cloned().collect();
        let (twice, new_twice) = run(&doubled);
        if twice != a || new_twice != new_once {
            return Err(format!("round {round}: replaying the stream changed the index"));
        }
        let mut shuffled = items.clone();
        shuffled.shuffle(&mut rng);
        let (b, _) = run(&shuffled);
        for (raw, logical) in &items {
            if !a.check(raw, logical.as_deref()).is_duplicate() || !b.check(raw, logical.as_deref()).is_duplicate() {
                return Err(format!("round {round}: {raw} {logical:?} admitted twice"));
            }
        }
    }
    Ok(())
}
