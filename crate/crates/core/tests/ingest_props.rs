mod common;

use std::collections::HashSet;

use common::{is_canonical_address, rng};
use proptest::prelude::*;
use rand::Rng;
use sandgraph::ingest::{
    clean, dedupe, parse_records, Format, ParseOptions, TransactionRecord, TxKind,
};
use sandgraph::report::write_records;
use sandgraph::{Address, U256};

fn arb_address() -> impl Strategy<Value = Address> {
    any::<[u8; 20]>().prop_map(Address::from_bytes)
}

fn arb_u256() -> impl Strategy<Value = U256> {
    prop_oneof![
        Just(U256::zero()),
        Just(U256::MAX),
        any::<u64>().prop_map(U256::from),
        any::<[u8; 32]>().prop_map(|b| U256::from_big_endian(&b)),
    ]
}

fn arb_record() -> impl Strategy<Value = TransactionRecord> {
    (
        "[0-9a-zA-Z,\"' ]{1,24}",
        any::<u64>(),
        arb_address(),
        proptest::option::of(arb_address()),
        proptest::option::of(arb_address()),
        1i64..=i64::MAX,
        arb_u256(),
        prop::sample::select(TxKind::ALL.to_vec()),
        proptest::option::of(arb_address()),
    )
        .prop_map(
            |(tx_id, log_index, sender, target, contract, timestamp, value, kind, tc)| {
                // Token kinds fall back to the contract address on parse.
                let token_contract = if kind.is_token_transfer() {
                    tc.or(contract)
                } else {
                    tc
                };
                TransactionRecord {
                    tx_id: tx_id.trim().to_string().replace(' ', "_") + "x",
                    log_index,
                    sender,
                    target,
                    contract,
                    timestamp,
                    value,
                    kind,
                    token_contract,
                }
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn parse_inverts_emit(records in prop::collection::vec(arb_record(), 0..30)) {
        for format in [Format::Csv, Format::JsonLines] {
            let mut buf = Vec::new();
            write_records(&records, format, &mut buf).unwrap();
            let parsed = parse_records(&buf[..], format, ParseOptions::default()).unwrap();
            prop_assert!(parsed.errors.is_empty(), "{:?}", parsed.errors);
            prop_assert_eq!(&parsed.records, &records);
        }
    }

    #[test]
    fn dedupe_is_idempotent(records in prop::collection::vec(arb_record(), 0..40), dup in 0usize..10) {
        let mut input = records.clone();
        input.extend(records.iter().take(dup).cloned());
        let once = dedupe(input);
        let twice = dedupe(once.records.clone());
        prop_assert_eq!(twice.duplicates, 0);
        prop_assert_eq!(&twice.records, &once.records);
    }

    #[test]
    fn addresses_render_canonically(a in arb_address()) {
        let s = a.to_string();
        prop_assert!(is_canonical_address(&s));
        prop_assert_eq!(s.to_uppercase().replacen("0X", "0x", 1).parse::<Address>().unwrap(), a);
    }
}

#[test]
fn dedupe_matches_hash_set_oracle() {
    let mut r = rng(99);
    let rows: Vec<TransactionRecord> = (0..1_000)
        .map(|_| TransactionRecord {
            tx_id: format!("0x{:x}", r.random_range(0..300u32)),
            log_index: r.random_range(0..3),
            sender: Address::synthetic(1, r.random_range(0..50)),
            target: Some(Address::synthetic(1, r.random_range(0..50))),
            contract: None,
            timestamp: 1 + r.random_range(0..1_000),
            value: U256::from(r.random_range(0..1_000u32)),
            kind: TxKind::ALL[r.random_range(0..5)],
            token_contract: None,
        })
        .collect();
    let mut seen = HashSet::new();
    let expected: Vec<&TransactionRecord> = rows
        .iter()
        .filter(|x| seen.insert((x.tx_id.clone(), x.log_index, x.kind)))
        .collect();
    let got = dedupe(rows.clone());
    assert_eq!(got.records.len(), expected.len());
    assert_eq!(got.duplicates, rows.len() - expected.len());
    for (g, e) in got.records.iter().zip(expected) {
        assert_eq!(g, e);
    }
    let ds = clean(rows, Vec::new());
    assert_eq!(ds.report.duplicates, got.duplicates);
    assert!(ds
        .edges
        .windows(2)
        .all(|w| w[0].chrono_key() <= w[1].chrono_key()));
}

#[test]
fn malformed_rows_are_collected_not_fatal() {
    let input = "\
{\"hash\":\"0x1\",\"from\":\"0x00000000000000000000000000000000000000aa\",\"to\":\"0x00000000000000000000000000000000000000bb\",\"timeStamp\":\"5\",\"value\":\"7\",\"kind\":\"normal\"}
not json
{\"hash\":\"0x2\",\"from\":\"0xzz\",\"timeStamp\":\"5\",\"kind\":\"normal\"}
{\"hash\":\"0x3\",\"from\":\"0x00000000000000000000000000000000000000aa\",\"to\":\"0x00000000000000000000000000000000000000bb\",\"timeStamp\":\"6\",\"value\":\"1\",\"kind\":\"token\"}
";
    let parsed =
        parse_records(input.as_bytes(), Format::JsonLines, ParseOptions::default()).unwrap();
    assert_eq!(parsed.records.len(), 2);
    let lines: Vec<u64> = parsed.errors.iter().map(|e| e.line()).collect();
    assert_eq!(lines, vec![2, 3]);
}
