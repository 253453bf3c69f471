mod common;

use placid::persistence::{encode_record, parse_log, LogRecord};
use placid::wire;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn decode_inverts_encode((act, seq) in common::frame()) {
        let line = wire::encode(&act, seq);
        prop_assert_eq!(line.last(), Some(&b'\n'));
        prop_assert_eq!(line.iter().filter(|b| **b == b'\n').count(), 1);
        let f = wire::decode(&line).unwrap();
        prop_assert_eq!(&f.act, &act);
        prop_assert_eq!(f.seq, seq);
        prop_assert_eq!(wire::encode(&f.act, f.seq), line);
    }

    #[test]
    fn client_decoding_accepts_own_unsequenced_frames((act, _) in common::frame()) {
        let line = wire::encode(&act, None);
        prop_assert_eq!(wire::decode_client(&line, act.sender()).unwrap(), act);
    }

    #[test]
    fn logs_round_trip(mut recs in prop::collection::vec((0u64..1000, common::frame()), 0..12)) {
        recs.sort_by_key(|(ts, _)| *ts);
        let records: Vec<LogRecord> = recs.into_iter().map(|(ts, (act, _))| LogRecord { ts, act }).collect();
        let mut bytes = Vec::new();
        for r in &records {
            bytes.extend_from_slice(encode_record(r.ts, &r.act).as_bytes());
            bytes.push(b'\n');
        }
        prop_assert_eq!(parse_log(&bytes).unwrap(), records);
    }

    #[test]
    fn any_bit_flip_in_a_log_is_detected(
        (act, _) in common::frame(),
        ts in 0u64..1000,
        pick in any::<prop::sample::Index>(),
        bit in 0u8..8,
    ) {
        let mut bytes = encode_record(ts, &act).into_bytes();
        bytes.push(b'\n');
        let i = pick.index(bytes.len());
        bytes[i] ^= 1 << bit;
        prop_assert!(parse_log(&bytes).is_err());
    }
}
