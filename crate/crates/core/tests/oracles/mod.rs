//! Oracles and generators shared by the property tests and the acceptance
//! run. Each check takes one generated case and returns a proptest verdict.

#![allow(dead_code)]

pub mod arith;
pub mod grid;
pub mod props;

use invoice_core::model::{CanonicalField, Corroboration, FieldValue, NormalizedValue, Provenance, ValidationStatus};
use proptest::test_runner::{Config, RngAlgorithm, TestError, TestRng, TestRunner};
use proptest::prelude::*;

pub fn fv(field: CanonicalField, v: NormalizedValue) -> (CanonicalField, FieldValue) {
    (
        field,
        FieldValue {
            field,
            raw_text: v.display(),
            normalized: v,
            confidence: 0.9,
            provenance: Provenance::Llm,
            support: vec![],
            validation: ValidationStatus::Unchecked,
            corroboration: Corroboration::Uncorroborated,
            base_confidence: 0.9,
        },
    )
}

/// Run `check` over `cases` inputs from a fixed seed, without shrinking
/// files on disk.
pub fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    check: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, check).map_err(|e| match e {
        TestError::Fail(why, value) => format!("{why} on {value:?}"),
        TestError::Abort(why) => format!("aborted: {why}"),
    })
}
