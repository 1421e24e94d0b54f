use std::path::{Path, PathBuf};

use ari_toolkit::defs::{emit_wireshark_dissector, load_registry, DefinitionRegistry};
use ari_toolkit::dissect::{Dissector, Flag, Selector, SubDissector};
use ari_toolkit::ingest::{
    export_pcap, import_pcap, load_trace, parse_hex_log, read_corpus_dir, save_trace, Direction, TraceFormat,
    TraceRecord,
};
use ari_toolkit::packet::{parse_packet, ParseMode};
use ari_toolkit::stats::group_histogram;
use proptest::prelude::*;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn demo() -> DefinitionRegistry {
    load_registry(&std::fs::read(fixtures().join("demo.json")).unwrap()).unwrap()
}

fn demo_trace() -> Vec<TraceRecord> {
    let text = std::fs::read_to_string(fixtures().join("demo_trace.log")).unwrap();
    let report = parse_hex_log(&text);
    assert_eq!(report.skipped, 1);
    report.records
}

#[test]
fn demo_trace_dissects_with_sms() {
    let reg = demo();
    let mut d = Dissector::new();
    d.register_subdissector(SubDissector::sms_deliver(Selector::tlv_name("sms_pdu"))).unwrap();
    let records = demo_trace();
    assert_eq!(records.len(), 5);
    assert_eq!(records[0].direction, Some(Direction::HostToChip));

    let trees: Vec<_> = records
        .iter()
        .map(|r| d.dissect(&parse_packet(&r.bytes, ParseMode::Strict).unwrap(), &reg))
        .collect();
    assert_eq!(trees[0].label, "IBINetSetRadioSignalReportingConfiguration");
    assert_eq!(trees[0].find("nInstance_t1").and_then(|n| n.decoded.as_deref()), Some("1"));
    assert_eq!(trees[1].find("TP-UD").and_then(|n| n.decoded.as_deref()), Some("hellohello"));
    assert_eq!(trees[1].find("TP-OA").and_then(|n| n.decoded.as_deref()), Some("+49152345678"));
    assert_eq!(trees[2].find("evsBandwidth_t1").and_then(|n| n.decoded.as_deref()), Some("IBI_IMS_ME_AUDIO_BAND_WB"));
    assert!(trees[3].flags.contains(&Flag::UnknownGroup));
    assert!(trees[4].flags.contains(&Flag::MissingMandatory));
    assert!(trees[1].render_text().contains("hellohello"));
}

#[test]
fn histogram_of_demo_trace() {
    let packets: Vec<Vec<u8>> = demo_trace().into_iter().map(|r| r.bytes).collect();
    let h = group_histogram(&packets, &demo());
    assert_eq!(h.count("net_cell"), Some(2));
    assert_eq!(h.count("40"), Some(1));
    assert_eq!(h.total, 5);
}

#[test]
fn trace_formats_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let records = demo_trace();
    let bare: Vec<TraceRecord> = records.iter().map(|r| TraceRecord::new(r.index, r.bytes.clone())).collect();

    let pcap = dir.path().join("t.pcap");
    assert_eq!(save_trace(&pcap, &records).unwrap(), TraceFormat::Pcap);
    let loaded = load_trace(&pcap, None).unwrap();
    assert_eq!(loaded.format, TraceFormat::Pcap);
    assert_eq!(loaded.records, bare);

    let corpus = dir.path().join("corpus");
    save_trace(&corpus, &records).unwrap();
    assert_eq!(read_corpus_dir(&corpus).unwrap(), bare);
    assert_eq!(load_trace(&corpus, None).unwrap().format, TraceFormat::Dir);

    let log = dir.path().join("t.log");
    save_trace(&log, &records).unwrap();
    assert_eq!(load_trace(&log, None).unwrap().records, records);

    let raw = dir.path().join("t.bin");
    std::fs::write(&raw, records.iter().flat_map(|r| r.bytes.clone()).chain([0xFF, 0xEE]).collect::<Vec<u8>>()).unwrap();
    let loaded = load_trace(&raw, None).unwrap();
    assert_eq!(loaded.format, TraceFormat::Raw);
    assert_eq!(loaded.records, bare);
    assert_eq!(loaded.skipped, 2);
}

#[test]
fn emitted_script_mentions_link_type() {
    let script = emit_wireshark_dissector(&demo());
    assert!(script.contains("wtap.USER0"));
    assert!(script.contains("\"IBINetSetRadioSignalReportingConfiguration\""));
}

proptest! {
    #[test]
    fn pcap_round_trip(records in proptest::collection::vec(
        (proptest::option::of(1u64..4_000_000_000_000_000), proptest::collection::vec(any::<u8>(), 1..100)), 0..12)
    ) {
        let records: Vec<TraceRecord> = records
            .into_iter()
            .enumerate()
            .map(|(index, (ts, bytes))| TraceRecord { index, timestamp_us: ts, direction: None, bytes })
            .collect();
        prop_assert_eq!(import_pcap(&export_pcap(&records).unwrap()).unwrap(), records);
    }

    #[test]
    fn hex_log_records_start_with_magic(lines in proptest::collection::vec("[ -~]{0,60}", 0..20)) {
        for r in parse_hex_log(&lines.join("\n")).records {
            prop_assert_eq!(&r.bytes[..4], &[0xDE, 0xC0, 0x7E, 0xAB]);
        }
    }
}
