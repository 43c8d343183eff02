//! Property tests for the document parsers: totality over arbitrary
//! input and serializer/parser round-trip.

mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use handoff::dsl::{
    parse_machine, parse_machine_bytes, parse_scenario_bytes, serialize_machine, MapSource,
};

proptest! {
    #[test]
    fn machine_parser_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        if let Err(diags) = parse_machine_bytes(&bytes) {
            prop_assert!(!diags.is_empty());
            for d in diags {
                prop_assert!(d.line >= 1 && d.column >= 1);
            }
        }
    }

    #[test]
    fn scenario_parser_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let source = MapSource(BTreeMap::new());
        if let Err(diags) = parse_scenario_bytes(&bytes, &source) {
            prop_assert!(!diags.is_empty());
            for d in diags {
                prop_assert!(d.line >= 1 && d.column >= 1);
            }
        }
    }

    /// Near-miss documents built from valid grammar fragments exercise
    /// deeper parser states than raw bytes.
    #[test]
    fn fragment_soup_never_panics(indices in proptest::collection::vec(0usize..16, 0..64)) {
        const FRAGMENTS: [&str; 16] = [
            "version: 1\n", "machine: M\n", "state: S\n", "end: state\n",
            "end: machine\n", "kind: atomic\n", "kind: composite\n",
            "transition: S / done -> !finished\n", "initial: S\n",
            "terminal: finished\n", "child: M\n", "map: finished -> done\n",
            "robot: r\n", "outage: a b 5 1\n", "latency: uniform 9 2\n",
            ": \n",
        ];
        let doc: String = indices.iter().map(|&i| FRAGMENTS[i]).collect();
        let _ = parse_machine(&doc);
        let _ = parse_scenario_bytes(doc.as_bytes(), &MapSource(BTreeMap::new()));
    }

    #[test]
    fn serializer_roundtrips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let machine = common::random_valid_machine(&mut rng, "Root", true);
        let doc = serialize_machine(&machine);
        let (parsed, _) = parse_machine(&doc)
            .map_err(|e| TestCaseError::fail(format!("{e:?}")))?;
        prop_assert_eq!(parsed, machine);
    }
}
