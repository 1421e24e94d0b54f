//! Regenerates the JSON fixtures under `fixtures/`.
//!
//! The two scale registries are synthetic; only their sizes are meaningful
//! (63 groups, 783 and 874 TLV type definitions, 249 enum codecs).
//!
//!     cargo run -p ari-toolkit --example gen_fixtures

use std::path::Path;

use ari_toolkit::defs::{
    save_registry, DefinitionRegistry, Definitions, EnumCodec, GroupDef, MessageDef, PrimitiveCodec, PrimitiveKind,
    TlvDef,
};
use ari_toolkit::ingest::{write_hex_log, Direction, TraceRecord};
use ari_toolkit::packet::{serialize_packet, AriHeader, AriPacket, LengthPolicy, Tlv};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GROUPS: u8 = 63;
const OLD_TLVS: usize = 783;
const ENUM_CODECS: usize = 249;

fn primitives() -> Vec<PrimitiveCodec> {
    [
        ("ARI_IBIUInt8_CODEC", PrimitiveKind::Uint),
        ("ARI_IBIUInt16_CODEC", PrimitiveKind::Uint),
        ("ARI_IBIUInt32_1_CODEC", PrimitiveKind::Uint),
        ("ARI_IBIString_CODEC", PrimitiveKind::Text),
        ("ARI_IBIBuffer_CODEC", PrimitiveKind::Bytes),
    ]
    .into_iter()
    .map(|(name, kind)| PrimitiveCodec { name: name.into(), kind })
    .collect()
}

fn evs_codec() -> EnumCodec {
    let bands = ["NB", "WB", "SWB", "FB", "NB_WB", "WB_SWB", "SWB_FB", "ALL"];
    EnumCodec {
        name: "IBIImsMEAudioEVSBandWidthType".into(),
        offset: 1,
        entries: bands.iter().map(|b| format!("IBI_IMS_ME_AUDIO_BAND_{b}")).collect(),
    }
}

fn enum_codecs(rng: &mut ChaCha8Rng) -> Vec<EnumCodec> {
    let mut codecs = vec![evs_codec()];
    for i in 1..ENUM_CODECS {
        let len = rng.random_range(2..=12);
        codecs.push(EnumCodec {
            name: format!("IBIEnumType{i:03}"),
            offset: rng.random_range(0..=1),
            entries: (0..len).map(|v| format!("IBI_ENUM_{i:03}_VALUE_{v}")).collect(),
        });
    }
    codecs
}

fn pick_codec(rng: &mut ChaCha8Rng, enums: &[EnumCodec], prims: &[PrimitiveCodec]) -> String {
    if rng.random_bool(0.4) {
        enums[rng.random_range(0..enums.len())].name.clone()
    } else {
        prims[rng.random_range(0..prims.len())].name.clone()
    }
}

fn tlv(index: u32, type_id: u16, codec: String, mandatory: bool) -> TlvDef {
    TlvDef { index, type_id, codec, name: format!("field{type_id:03x}_t{index}"), mandatory }
}

fn group_name(id: u8) -> String {
    if id == 9 {
        "net_cell".into()
    } else {
        format!("group_{id:02}")
    }
}

fn old_registry() -> Definitions {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1251);
    let codecs = enum_codecs(&mut rng);
    let prims = primitives();
    let mut groups: Vec<GroupDef> =
        (0..GROUPS).map(|id| GroupDef { id, name: group_name(id), messages: Vec::new() }).collect();

    let mut remaining = OLD_TLVS;
    let mut g = 0usize;
    while remaining > 0 {
        let group = &mut groups[g % GROUPS as usize];
        let type_id = 0x101 + group.messages.len() as u16;
        let k = rng.random_range(1..=6).min(remaining);
        let mut tlvs = Vec::with_capacity(k);
        for i in 1..=k as u32 {
            tlvs.push(tlv(i, i as u16, pick_codec(&mut rng, &codecs, &prims), rng.random_bool(0.3)));
        }
        let name = format!("IBI{}Msg{type_id:03x}", group.name.replace('_', ""));
        group.messages.push(MessageDef { group_id: group.id, type_id, name, tlvs });
        remaining -= k;
        g += 1;
    }

    let first = &mut groups[9].messages[0];
    first.name = "IBINetSetRadioSignalReportingConfiguration".into();
    first.tlvs[0] = TlvDef {
        index: 1,
        type_id: 0x101,
        codec: "ARI_IBIUInt32_1_CODEC".into(),
        name: "nInstance_t1".into(),
        mandatory: true,
    };

    Definitions { version_label: "12.5.1 (16H22)".into(), codecs, primitives: prims, groups }
}

/// The newer version: 50 TLVs appended to existing messages, 10 new
/// messages carrying 45 TLVs, 4 TLVs dropped and 3 messages renamed.
fn new_registry(old: &Definitions) -> Definitions {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1330);
    let mut defs = old.clone();
    defs.version_label = "13.3 (17C54)".into();

    let mut appended = 0;
    'append: for group in defs.groups.iter_mut() {
        for msg in group.messages.iter_mut().take(1) {
            let index = msg.tlvs.last().map_or(1, |t| t.index + 1);
            let type_id = msg.tlvs.iter().map(|t| t.type_id).max().unwrap_or(0) + 1;
            msg.tlvs.push(tlv(index, type_id, pick_codec(&mut rng, &old.codecs, &old.primitives), false));
            appended += 1;
            if appended == 50 {
                break 'append;
            }
        }
    }

    let sizes = [6, 5, 5, 4, 4, 4, 5, 4, 4, 4];
    for (n, &k) in sizes.iter().enumerate() {
        let group = &mut defs.groups[(n * 7 + 3) % GROUPS as usize];
        let type_id = 0x200 + n as u16;
        let tlvs = (1..=k).map(|i| tlv(i, i as u16, pick_codec(&mut rng, &old.codecs, &old.primitives), i == 1)).collect();
        group.messages.push(MessageDef { group_id: group.id, type_id, name: format!("IBINewMsg{type_id:03x}"), tlvs });
    }

    let mut removed = 0;
    for group in defs.groups.iter_mut().rev() {
        if let Some(msg) = group.messages.iter_mut().skip(1).find(|m| m.tlvs.len() >= 2 && m.type_id < 0x200) {
            msg.tlvs.pop();
            removed += 1;
            if removed == 4 {
                break;
            }
        }
    }

    for id in [20usize, 21, 22] {
        let msg = &mut defs.groups[id].messages[1];
        msg.name.push_str("V2");
    }
    defs
}

fn demo() -> Definitions {
    let t = |index, type_id, codec: &str, name: &str, mandatory| TlvDef {
        index,
        type_id,
        codec: codec.into(),
        name: name.into(),
        mandatory,
    };
    Definitions {
        version_label: "demo".into(),
        codecs: vec![evs_codec()],
        primitives: vec![PrimitiveCodec { name: "ARI_IBIUInt32_1_CODEC".into(), kind: PrimitiveKind::Uint }],
        groups: vec![
            GroupDef {
                id: 9,
                name: "net_cell".into(),
                messages: vec![MessageDef {
                    group_id: 9,
                    type_id: 0x101,
                    name: "IBINetSetRadioSignalReportingConfiguration".into(),
                    tlvs: vec![
                        t(1, 0x101, "ARI_IBIUInt32_1_CODEC", "nInstance_t1", true),
                        t(2, 0x102, "uint", "nPeriod_t2", false),
                    ],
                }],
            },
            GroupDef {
                id: 11,
                name: "sms".into(),
                messages: vec![MessageDef {
                    group_id: 11,
                    type_id: 0x20,
                    name: "IBISmsDeliverInd".into(),
                    tlvs: vec![t(1, 1, "uint", "nInstance_t1", false), t(2, 2, "bytes", "sms_pdu", true)],
                }],
            },
            GroupDef {
                id: 30,
                name: "ims".into(),
                messages: vec![MessageDef {
                    group_id: 30,
                    type_id: 0x10,
                    name: "IBIImsMEAudioConfigInd".into(),
                    tlvs: vec![
                        t(1, 1, "IBIImsMEAudioEVSBandWidthType", "evsBandwidth_t1", true),
                        t(2, 2, "text", "codecName_t2", false),
                    ],
                }],
            },
        ],
    }
}

fn write(dir: &Path, name: &str, defs: Definitions) {
    let reg = DefinitionRegistry::new(defs).unwrap_or_else(|e| panic!("{name}: {e}"));
    std::fs::write(dir.join(name), save_registry(&reg)).unwrap();
    let c = reg.counts();
    println!("{name}: {} groups, {} messages, {} tlv types, {} enum codecs", c.groups, c.messages, c.tlv_defs, c.enum_codecs);
}

fn demo_trace() -> String {
    let tpdu = hex::decode("040b919451325476f80000125071210300800ae8329bfd4697d9ec37").unwrap();
    let packets: [(u8, u16, Vec<Tlv>, Direction); 5] = [
        (9, 0x101, vec![Tlv::new(0x101, 0, vec![1, 0, 0, 0]), Tlv::new(0x102, 0, vec![0xE8, 0x03])], Direction::HostToChip),
        (11, 0x20, vec![Tlv::new(1, 0, vec![0, 0, 0, 0]), Tlv::new(2, 0, tpdu)], Direction::ChipToHost),
        (30, 0x10, vec![Tlv::new(1, 0, vec![2, 0, 0, 0]), Tlv::new(2, 0, b"EVS".to_vec())], Direction::ChipToHost),
        (40, 0x3, vec![Tlv::new(7, 1, vec![0xAA, 0xBB])], Direction::ChipToHost),
        (9, 0x101, vec![Tlv::new(0x102, 0, vec![0x10, 0x27])], Direction::HostToChip),
    ];
    let records: Vec<TraceRecord> = packets
        .into_iter()
        .enumerate()
        .map(|(i, (group, ty, tlvs, dir))| {
            let mut header = AriHeader::new(group, ty);
            header.sequence = i as u16 + 1;
            let bytes = serialize_packet(&AriPacket::new(header, tlvs), LengthPolicy::Recompute).unwrap();
            TraceRecord { index: i, timestamp_us: None, direction: Some(dir), bytes }
        })
        .collect();
    let log = write_hex_log(&records);
    let mut lines: Vec<&str> = log.lines().collect();
    lines.insert(2, "CommCenter: registration state changed");
    lines.join("\n") + "\n"
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir).unwrap();
    let old = old_registry();
    let new = new_registry(&old);
    write(&dir, "registry_12_5_1.json", old);
    write(&dir, "registry_13_3.json", new);
    write(&dir, "demo.json", demo());
    std::fs::write(dir.join("demo_trace.log"), demo_trace()).unwrap();
    write(
        &dir,
        "minimal.json",
        Definitions {
            version_label: "minimal".into(),
            groups: vec![GroupDef { id: 9, name: "net_cell".into(), messages: vec![] }],
            ..Default::default()
        },
    );
}
