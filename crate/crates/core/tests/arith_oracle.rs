//! check_arithmetic against an independent integer recomputation.

mod oracles;

use oracles::arith;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_integer_oracle(c in arith::case()) {
        arith::matches_oracle(c)?;
    }
}
