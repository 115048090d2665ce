use handlink_core::config::Config;
use handlink_core::session::{align, read_session, Pairing, SessionRecord, SessionWriter, Stream};
use proptest::prelude::*;

fn stream() -> impl Strategy<Value = Stream> {
    prop_oneof![Just(Stream::Glove), Just(Stream::Command), Just(Stream::Telemetry), Just(Stream::Event)]
}

fn sorted_times(max_len: usize) -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0u64..1000, 0..max_len).prop_map(|mut v| {
        v.sort_unstable();
        v
    })
}

fn recs(stream: Stream, ts: &[u64]) -> Vec<SessionRecord> {
    ts.iter().map(|&t| SessionRecord::new(stream, t, format!("{{\"t\":{t}}}")).unwrap()).collect()
}

#[test]
fn ten_thousand_records_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    let mut w = SessionWriter::create(&path).unwrap();
    let mut written = Vec::new();
    let streams = [Stream::Glove, Stream::Command, Stream::Telemetry, Stream::Event];
    for i in 0..10_000u64 {
        let payload = format!(r#"{{"i":{i},"x":{},"s":"a\"b"}}"#, (i as f64).sqrt());
        let r = SessionRecord::new(streams[(i % 4) as usize], 1_700_000_000_000_000_000 + i / 3, payload).unwrap();
        w.append(&r).unwrap();
        written.push(r);
    }
    drop(w);
    let (back, corrupt) = read_session(&path).unwrap();
    assert_eq!(corrupt, 0);
    assert_eq!(back.len(), written.len());
    for (a, b) in back.iter().zip(&written) {
        assert_eq!(a.stream, b.stream);
        assert_eq!(a.t_host, b.t_host);
        assert_eq!(a.payload_str(), b.payload_str());
    }
}

#[test]
fn config_load_save_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    let mut cfg = Config::default();
    cfg.mapper.v_max = 1.25;
    cfg.sim.waypoints = vec![[1.0, 0.0, 1.0]];
    cfg.save(&path).unwrap();
    let a = Config::load(&path).unwrap();
    a.save(&path).unwrap();
    let b = Config::load(&path).unwrap();
    assert_eq!(a, cfg);
    assert_eq!(b, a);
}

proptest! {
    #[test]
    fn records_survive_lines(s in stream(), t in any::<u64>(), text in ".*") {
        let payload = serde_json::to_string(&text).unwrap();
        let r = SessionRecord::new(s, t, payload.clone()).unwrap();
        let line = r.to_line();
        prop_assert!(!line.contains('\n'));
        let back: SessionRecord = serde_json::from_str(&line).unwrap();
        prop_assert_eq!(back.payload_str(), payload.as_str());
    }

    #[test]
    fn align_matches_sort_oracle(g in sorted_times(50), t in sorted_times(50)) {
        let glove = recs(Stream::Glove, &g);
        let tel = recs(Stream::Telemetry, &t);
        let merged = align(&glove, &tel);

        // Oracle: tag, stable sort by (time, glove-before-telemetry).
        let mut oracle: Vec<(u64, u8, usize)> = g.iter().enumerate().map(|(i, &x)| (x, 0, i))
            .chain(t.iter().enumerate().map(|(i, &x)| (x, 1, i)))
            .collect();
        oracle.sort();
        prop_assert_eq!(merged.len(), oracle.len());
        for (m, (ts, tag, idx)) in merged.iter().zip(&oracle) {
            prop_assert_eq!(m.t_host, *ts);
            prop_assert_eq!(m.index, *idx);
            prop_assert_eq!(m.stream, if *tag == 0 { Stream::Glove } else { Stream::Telemetry });
            if *tag == 1 {
                // Nearest glove record at or before, by linear scan.
                let want = g.iter().rposition(|&x| x <= *ts).map_or(Pairing::NoPriorGlove, Pairing::Glove);
                prop_assert_eq!(m.pairing, Some(want));
            } else {
                prop_assert_eq!(m.pairing, None);
            }
        }
    }
}
