mod common;

use mixscope_core::graph::{build_aain, build_tain};
use mixscope_core::ingest::AddressUniverse;
use mixscope_core::motif::{count_ath_motifs, count_temporal_motifs, enumerate_generic, Template};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn temporal_counter_matches_pair_oracle(records in common::arb_records(7, 25, 50), delta in 0u64..45) {
        let universe = AddressUniverse::all(&records);
        let aain = build_aain(&records, &universe).unwrap();
        let census = count_temporal_motifs(&aain, delta);
        prop_assert_eq!(census.counts, common::pair_oracle(&aain, delta));
    }

    #[test]
    fn ath_counter_matches_window_oracle(records in common::arb_records(7, 25, 50), delta in 0u64..45) {
        let universe = AddressUniverse::all(&records);
        let tain = build_tain(&records, &universe);
        let census = count_ath_motifs(&tain, delta);
        prop_assert_eq!(census.counts, common::window_oracle(&tain, delta));
    }

    #[test]
    fn every_window_is_classified_once(records in common::arb_records(6, 20, 40), delta in 0u64..45) {
        // windows partition each event list, so b-totals bound event counts
        let universe = AddressUniverse::all(&records);
        let tain = build_tain(&records, &universe);
        let census = count_ath_motifs(&tain, delta);
        let per_node: Vec<u64> = census.counts.iter().map(|c| c.iter().sum()).collect();
        for (id, windows) in per_node.iter().enumerate() {
            let events = tain.edges().iter().filter(|e| e.address as usize == id).count() as u64;
            prop_assert!(*windows <= events);
            prop_assert_eq!(*windows == 0, events == 0);
        }
    }

    #[test]
    fn two_edge_templates_agree_with_oracle(records in common::arb_records(5, 12, 20), delta in 0u64..45) {
        let universe = AddressUniverse::all(&records);
        let aain = build_aain(&records, &universe).unwrap();
        for t in [
            vec![(0u8, 1u8)],
            vec![(0, 1), (1, 2)],
            vec![(0, 1), (1, 0)],
            vec![(0, 1), (0, 1)],
            vec![(0, 1), (2, 1)],
        ] {
            let template = Template::new(&t).unwrap();
            prop_assert_eq!(enumerate_generic(&aain, &template, delta), common::template_oracle(&aain, &t, delta));
        }
    }

    #[test]
    fn longer_templates_agree_with_oracle(records in common::arb_records(5, 8, 12), delta in 0u64..45) {
        let universe = AddressUniverse::all(&records);
        let aain = build_aain(&records, &universe).unwrap();
        for t in [
            vec![(0u8, 1u8), (1, 2), (2, 0)],
            vec![(0, 1), (1, 2), (2, 3)],
            vec![(0, 1), (2, 3), (1, 2)],
            vec![(0, 1), (1, 0), (0, 1), (1, 0)],
        ] {
            let template = Template::new(&t).unwrap();
            prop_assert_eq!(enumerate_generic(&aain, &template, delta), common::template_oracle(&aain, &t, delta));
        }
    }

    #[test]
    fn pair_totals_are_monotone_in_delta(records in common::arb_records(6, 20, 40), d1 in 0u64..30, extra in 0u64..30) {
        let universe = AddressUniverse::all(&records);
        let aain = build_aain(&records, &universe).unwrap();
        let small = count_temporal_motifs(&aain, d1).totals();
        let large = count_temporal_motifs(&aain, d1 + extra).totals();
        for (s, l) in small.iter().zip(&large) {
            prop_assert!(s <= l);
        }
    }
}

/// Each two-node pair instance is seen from both endpoints, every other
/// pattern from its single center.
#[test]
fn pair_totals_relate_to_template_counts() {
    let records = vec![
        tx("t1", 0, &["a"], &["b"]),
        tx("t2", 5, &["b"], &["c"]),
        tx("t3", 6, &["b"], &["a"]),
        tx("t4", 9, &["c"], &["b"]),
    ];
    let universe = AddressUniverse::all(&records);
    let aain = build_aain(&records, &universe).unwrap();
    let totals = count_temporal_motifs(&aain, 100).totals();
    let tmpl = |e: &[(u8, u8)]| enumerate_generic(&aain, &Template::new(e).unwrap(), 100);
    // in then out at a center x: (u -> x), (x -> v), u != v
    assert_eq!(totals[0], tmpl(&[(0, 1), (1, 2)]));
    assert_eq!(totals[2], tmpl(&[(1, 0), (1, 2)]));
    assert_eq!(totals[3], tmpl(&[(0, 1), (2, 1)]));
    assert_eq!(totals[4], 2 * tmpl(&[(0, 1), (1, 0)]));
    assert_eq!(totals[5], 2 * tmpl(&[(0, 1), (0, 1)]));
}

fn tx(id: &str, t: u64, ins: &[&str], outs: &[&str]) -> mixscope_core::TxRecord {
    mixscope_core::TxRecord {
        tx_id: id.into(),
        timestamp: t,
        inputs: ins.iter().map(|a| (a.to_string(), 1)).collect(),
        outputs: outs.iter().map(|a| (a.to_string(), 1)).collect(),
    }
}
