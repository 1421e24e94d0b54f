//! Schema-driven dissection of parsed packets into annotated field trees.
//!
//! Every node with a span points at bits of the packet (spans are relative to
//! the packet start). Composite header fields whose bits are split across
//! the header carry no span of their own; their chunk children do. Leaf spans
//! never overlap and together cover every bit of the packet.

mod sms;

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::bits::BitSpan;
use crate::defs::{Codec, DefinitionRegistry, MessageDef, PrimitiveKind, TlvDef};
use crate::packet::{layout, AriPacket, HEADER_LEN, MAGIC, TLV_HEADER_LEN};

pub use sms::{decode_sms_deliver, gsm7_decode, gsm7_encode, pack_septets, unpack_septets, SmsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    UnknownGroup,
    UnknownType,
    UnknownTlv,
    MissingMandatory,
    Residue,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::UnknownGroup => "unknown-group",
            Flag::UnknownType => "unknown-type",
            Flag::UnknownTlv => "unknown-tlv",
            Flag::MissingMandatory => "missing-mandatory",
            Flag::Residue => "residue",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Raw {
    Uint(u64),
    Bytes(#[serde(with = "hex::serde")] Vec<u8>),
}

impl fmt::Display for Raw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Raw::Uint(v) => write!(f, "{v:#x}"),
            Raw::Bytes(b) => {
                for (i, byte) in b.iter().enumerate() {
                    if i > 0 {
                        f.write_char(' ')?;
                    }
                    write!(f, "{byte:02x}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DissectedNode {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span: Option<BitSpan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<Raw>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoded: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<DissectedNode>,
    #[serde(skip_serializing_if = "BTreeSet::is_empty")]
    pub flags: BTreeSet<Flag>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl DissectedNode {
    pub fn new(label: impl Into<String>) -> Self {
        DissectedNode {
            label: label.into(),
            span: None,
            raw: None,
            decoded: None,
            children: Vec::new(),
            flags: BTreeSet::new(),
            notes: Vec::new(),
        }
    }

    pub fn leaf(label: impl Into<String>, span: BitSpan, raw: Raw) -> Self {
        DissectedNode { span: Some(span), raw: Some(raw), ..Self::new(label) }
    }

    pub fn with_span(mut self, span: BitSpan) -> Self {
        self.span = Some(span);
        self
    }

    pub fn with_decoded(mut self, text: impl Into<String>) -> Self {
        self.decoded = Some(text.into());
        self
    }

    pub fn with_children(mut self, children: Vec<DissectedNode>) -> Self {
        self.children = children;
        self
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn find(&self, label: &str) -> Option<&DissectedNode> {
        if self.label == label {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(label))
    }

    /// Spans of all spanned leaves, depth first.
    pub fn leaf_spans(&self) -> Vec<BitSpan> {
        let mut out = Vec::new();
        self.walk(&mut |n| {
            if n.is_leaf() {
                out.extend(n.span);
            }
        });
        out
    }

    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a DissectedNode)) {
        visit(self);
        for c in &self.children {
            c.walk(visit);
        }
    }

    /// Moves every span in the subtree `bytes` further into the message.
    pub fn shift(&mut self, bytes: usize) {
        if let Some(span) = self.span.as_mut() {
            *span = span.shifted(bytes);
        }
        for c in &mut self.children {
            c.shift(bytes);
        }
    }

    /// Indented tree, one node per line as `label: decoded (raw)`.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out, 0);
        out
    }

    fn render_into(&self, out: &mut String, depth: usize) {
        let _ = write!(out, "{:indent$}{}", "", self.label, indent = depth * 2);
        match (&self.decoded, &self.raw) {
            (Some(d), Some(r)) => {
                let _ = write!(out, ": {d} ({r})");
            }
            (Some(d), None) => {
                let _ = write!(out, ": {d}");
            }
            (None, Some(r)) => {
                let _ = write!(out, ": {r}");
            }
            (None, None) => {}
        }
        for flag in &self.flags {
            let _ = write!(out, " [{}]", flag.as_str());
        }
        for note in &self.notes {
            let _ = write!(out, " ({note})");
        }
        out.push('\n');
        for c in &self.children {
            c.render_into(out, depth + 1);
        }
    }
}

/// What a sub-dissector is attached to. Unset fields match anything; at
/// least one must be set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Selector {
    pub group: Option<String>,
    pub message: Option<String>,
    pub tlv: Option<String>,
    pub codec: Option<String>,
}

impl Selector {
    pub fn tlv_name(name: impl Into<String>) -> Self {
        Selector { tlv: Some(name.into()), ..Default::default() }
    }

    fn is_unconstrained(&self) -> bool {
        self.group.is_none() && self.message.is_none() && self.tlv.is_none() && self.codec.is_none()
    }

    fn matches(&self, ctx: &TlvContext<'_>) -> bool {
        fn field(want: &Option<String>, have: Option<&str>) -> bool {
            want.as_deref().is_none_or(|w| have == Some(w))
        }
        field(&self.group, ctx.group)
            && field(&self.message, ctx.message)
            && field(&self.tlv, ctx.tlv.map(|t| t.name.as_str()))
            && field(&self.codec, ctx.tlv.map(|t| t.codec.as_str()))
    }
}

/// Registry context of one TLV, as seen by selectors.
#[derive(Debug, Clone, Copy)]
pub struct TlvContext<'a> {
    pub group: Option<&'a str>,
    pub message: Option<&'a str>,
    pub tlv: Option<&'a TlvDef>,
}

pub type DecodeFn = dyn Fn(&[u8]) -> Result<DissectedNode, String> + Send + Sync;

/// Decoder for an embedded format. Spans in the returned tree are relative
/// to the start of the TLV value.
#[derive(Clone)]
pub struct SubDissector {
    pub name: String,
    pub selector: Selector,
    decode: Arc<DecodeFn>,
}

impl fmt::Debug for SubDissector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubDissector").field("name", &self.name).field("selector", &self.selector).finish()
    }
}

impl SubDissector {
    pub fn new(
        name: impl Into<String>,
        selector: Selector,
        decode: impl Fn(&[u8]) -> Result<DissectedNode, String> + Send + Sync + 'static,
    ) -> Self {
        SubDissector { name: name.into(), selector, decode: Arc::new(decode) }
    }

    /// SMS-DELIVER TPDU decoder.
    pub fn sms_deliver(selector: Selector) -> Self {
        SubDissector::new("sms-deliver", selector, |value| decode_sms_deliver(value).map_err(|e| e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubDissectorHandle(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DissectError {
    #[error("sub-dissector selector {0:?} is already registered")]
    DuplicateSelector(Selector),
    #[error("sub-dissector selector must constrain at least one field")]
    EmptySelector,
}

/// Dissection with a table of sub-dissectors. Register everything first,
/// then share the dissector read-only.
#[derive(Debug, Clone, Default)]
pub struct Dissector {
    subdissectors: Vec<SubDissector>,
}

impl Dissector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_subdissector(&mut self, sd: SubDissector) -> Result<SubDissectorHandle, DissectError> {
        if sd.selector.is_unconstrained() {
            return Err(DissectError::EmptySelector);
        }
        if self.subdissectors.iter().any(|s| s.selector == sd.selector) {
            return Err(DissectError::DuplicateSelector(sd.selector));
        }
        self.subdissectors.push(sd);
        Ok(SubDissectorHandle(self.subdissectors.len() - 1))
    }

    fn subdissector_for(&self, ctx: &TlvContext<'_>) -> Option<&SubDissector> {
        self.subdissectors.iter().find(|s| s.selector.matches(ctx))
    }

    pub fn dissect(&self, packet: &AriPacket, reg: &DefinitionRegistry) -> DissectedNode {
        let h = &packet.header;
        let group = reg.group(h.group);
        let message = reg.lookup_message(h.group, h.message_type);
        let total = packet.encoded_len();

        let mut root = DissectedNode::new(message.map_or("ARI message", |m| m.name.as_str()))
            .with_span(BitSpan::bytes(0, total));
        if group.is_none() {
            root.flags.insert(Flag::UnknownGroup);
        } else if message.is_none() {
            root.flags.insert(Flag::UnknownType);
        }
        root.children = header_nodes(packet, group.map(|g| g.name.as_str()), message);

        let ctx_group = group.map(|g| g.name.as_str());
        let ctx_message = message.map(|m| m.name.as_str());
        for (tlv, offset) in packet.tlvs.iter().zip(packet.tlv_offsets()) {
            let def = message.and_then(|m| m.tlv(tlv.type_id));
            let ctx = TlvContext { group: ctx_group, message: ctx_message, tlv: def };
            root.children.push(self.tlv_node(tlv, offset, def, &ctx, reg));
        }

        if !packet.residue.is_empty() {
            let at = HEADER_LEN + packet.payload_len() - packet.residue.len();
            let mut node = DissectedNode::leaf(
                "residue",
                BitSpan::bytes(at, packet.residue.len()),
                Raw::Bytes(packet.residue.clone()),
            );
            node.flags.insert(Flag::Residue);
            root.children.push(node);
        }

        if let Some(m) = message {
            let missing: Vec<&str> = m
                .mandatory_tlvs()
                .filter(|d| !packet.tlvs.iter().any(|t| t.type_id == d.type_id))
                .map(|d| d.name.as_str())
                .collect();
            if !missing.is_empty() {
                root.flags.insert(Flag::MissingMandatory);
                root.notes.push(format!("missing mandatory: {}", missing.join(", ")));
            }
        }
        root
    }

    fn tlv_node(
        &self,
        tlv: &crate::packet::Tlv,
        offset: usize,
        def: Option<&TlvDef>,
        ctx: &TlvContext<'_>,
        reg: &DefinitionRegistry,
    ) -> DissectedNode {
        let label = def.map_or_else(|| format!("TLV {:#x}", tlv.type_id), |d| d.name.clone());
        let mut node = DissectedNode::new(label).with_span(BitSpan::bytes(offset, tlv.encoded_len()));
        if def.is_none() {
            node.flags.insert(Flag::UnknownTlv);
        }
        node.children = vec![
            composite("type", tlv.type_id as u64, layout::TLV_TYPE, offset),
            chunk_leaf("reserved", layout::TLV_RESERVED_A, offset, tlv.reserved_a as u64),
            chunk_leaf("version", layout::TLV_VERSION, offset, tlv.version as u64),
            composite("length", tlv.value.len() as u64, layout::TLV_LENGTH, offset),
            chunk_leaf("reserved", layout::TLV_RESERVED_B, offset, tlv.reserved_b as u64),
        ];
        if tlv.value.is_empty() {
            return node;
        }

        let value_at = offset + TLV_HEADER_LEN;
        let mut value = DissectedNode::leaf(
            "value",
            BitSpan::bytes(value_at, tlv.value.len()),
            Raw::Bytes(tlv.value.clone()),
        );
        if let Some(text) = def.and_then(|d| render_value(reg, &d.codec, &tlv.value)) {
            node.decoded = Some(text.clone());
            value.decoded = Some(text);
        }
        if let Some(sd) = self.subdissector_for(ctx) {
            match (sd.decode)(&tlv.value) {
                Ok(mut tree) => {
                    tree.shift(value_at);
                    value.children.push(tree);
                }
                Err(e) => value.notes.push(format!("{} failed: {e}", sd.name)),
            }
        }
        node.children.push(value);
        node
    }
}

/// Dissects without sub-dissectors.
pub fn dissect(packet: &AriPacket, reg: &DefinitionRegistry) -> DissectedNode {
    Dissector::new().dissect(packet, reg)
}

fn chunk_leaf(label: &str, span: BitSpan, base: usize, value: u64) -> DissectedNode {
    DissectedNode::leaf(label, span.shifted(base), Raw::Uint(value))
}

/// Composite field node; children are its chunks, low-order first.
fn composite(label: &str, value: u64, chunks: &[BitSpan], base: usize) -> DissectedNode {
    let mut shift = 0;
    let children = chunks
        .iter()
        .map(|span| {
            let part = (value >> shift) & span.mask();
            let name = if span.bit_length == 1 {
                format!("{label}[{shift}]")
            } else {
                format!("{label}[{}:{shift}]", shift + span.bit_length - 1)
            };
            shift += span.bit_length;
            chunk_leaf(&name, *span, base, part)
        })
        .collect();
    DissectedNode { raw: Some(Raw::Uint(value)), children, ..DissectedNode::new(label) }
}

fn header_nodes(packet: &AriPacket, group: Option<&str>, message: Option<&MessageDef>) -> Vec<DissectedNode> {
    let h = &packet.header;
    let reserved_value = ((h.reserved_b as u64) << 3) | h.reserved_a as u64;
    let mut group_node = composite("group", h.group as u64, layout::GROUP, 0);
    group_node.decoded = group.map(str::to_string);
    let mut type_node = composite("type", h.message_type as u64, layout::MESSAGE_TYPE, 0);
    type_node.decoded = message.map(|m| m.name.clone());
    vec![
        DissectedNode::leaf("magic", layout::MAGIC, Raw::Bytes(MAGIC.to_vec())),
        group_node,
        composite("sequence", h.sequence as u64, layout::SEQUENCE, 0),
        composite("length", h.length as u64, layout::LENGTH, 0),
        type_node,
        composite("reserved", reserved_value, &[layout::RESERVED_A, layout::RESERVED_B], 0),
        DissectedNode::leaf("trailer", layout::TRAILER, Raw::Uint(h.trailer as u64)),
    ]
}

/// Little-endian unsigned value of up to 8 bytes.
pub fn le_uint(bytes: &[u8]) -> Option<u64> {
    if bytes.is_empty() || bytes.len() > 8 {
        return None;
    }
    Some(bytes.iter().rev().fold(0u64, |acc, &b| (acc << 8) | b as u64))
}

fn render_value(reg: &DefinitionRegistry, codec: &str, value: &[u8]) -> Option<String> {
    match reg.codec(codec)? {
        Codec::Enum(c) => Some(le_uint(value).map_or(crate::defs::UNKNOWN_VALUE, |v| c.decode(v)).to_string()),
        Codec::Primitive { kind: PrimitiveKind::Uint, .. } => le_uint(value).map(|v| v.to_string()),
        Codec::Primitive { kind: PrimitiveKind::Text, .. } => Some(String::from_utf8_lossy(value).into_owned()),
        Codec::Primitive { kind: PrimitiveKind::Bytes, .. } => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defs::{Definitions, GroupDef};
    use crate::packet::{parse_packet, serialize_packet, AriHeader, LengthPolicy, ParseMode, Tlv};

    fn registry() -> DefinitionRegistry {
        DefinitionRegistry::new(Definitions {
            version_label: "t".into(),
            primitives: vec![crate::defs::PrimitiveCodec { name: "ARI_IBIUInt32_1_CODEC".into(), kind: PrimitiveKind::Uint }],
            groups: vec![
                GroupDef {
                    id: 9,
                    name: "net_cell".into(),
                    messages: vec![MessageDef {
                        group_id: 9,
                        type_id: 0x101,
                        name: "IBINetSetRadioSignalReportingConfiguration".into(),
                        tlvs: vec![
                            TlvDef { index: 1, type_id: 0x101, codec: "ARI_IBIUInt32_1_CODEC".into(), name: "nInstance_t1".into(), mandatory: true },
                            TlvDef { index: 2, type_id: 0x102, codec: "uint".into(), name: "nPeriod_t2".into(), mandatory: true },
                        ],
                    }],
                },
                GroupDef {
                    id: 11,
                    name: "sms".into(),
                    messages: vec![MessageDef {
                        group_id: 11,
                        type_id: 0x20,
                        name: "SmsDeliverInd".into(),
                        tlvs: vec![TlvDef { index: 1, type_id: 1, codec: "bytes".into(), name: "sms_pdu".into(), mandatory: true }],
                    }],
                },
            ],
            ..Default::default()
        })
        .unwrap()
    }

    fn packet(group: u8, ty: u16, tlvs: Vec<Tlv>) -> AriPacket {
        let bytes = serialize_packet(&AriPacket::new(AriHeader::new(group, ty), tlvs), LengthPolicy::Recompute).unwrap();
        parse_packet(&bytes, ParseMode::Lenient).unwrap()
    }

    fn assert_total(tree: &DissectedNode, total_bytes: usize) {
        let mut spans = tree.leaf_spans();
        spans.sort_by_key(|s| s.start_bit());
        let mut at = 0;
        for s in spans {
            assert_eq!(s.start_bit(), at, "gap or overlap at bit {at}");
            at = s.end_bit();
        }
        assert_eq!(at, total_bytes * 8);
    }

    #[test]
    fn header_only_unknown_group() {
        let p = packet(40, 1, vec![]);
        let tree = dissect(&p, &registry());
        assert!(tree.flags.contains(&Flag::UnknownGroup));
        let labels: Vec<_> = tree.children.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["magic", "group", "sequence", "length", "type", "reserved", "trailer"]);
        assert_total(&tree, 12);
    }

    #[test]
    fn known_uint_tlv() {
        let p = packet(9, 0x101, vec![Tlv::new(0x101, 0, 1u32.to_le_bytes().to_vec()), Tlv::new(0x102, 0, vec![5])]);
        let tree = dissect(&p, &registry());
        assert_eq!(tree.label, "IBINetSetRadioSignalReportingConfiguration");
        let tlv = &tree.children[7];
        assert_eq!(tlv.label, "nInstance_t1");
        assert_eq!(tlv.decoded.as_deref(), Some("1"));
        assert!(tree.flags.is_empty());
        assert_eq!(tree.children[1].decoded.as_deref(), Some("net_cell"));
        assert_total(&tree, p.encoded_len());
    }

    #[test]
    fn missing_mandatory_is_named() {
        let p = packet(9, 0x101, vec![Tlv::new(0x101, 0, vec![1, 0, 0, 0])]);
        let tree = dissect(&p, &registry());
        assert!(tree.flags.contains(&Flag::MissingMandatory));
        assert!(tree.notes[0].contains("nPeriod_t2"));
        assert!(!tree.notes[0].contains("nInstance_t1"));
    }

    #[test]
    fn unknown_tlv_and_residue() {
        let mut p = packet(9, 0x101, vec![Tlv::new(0x7FF, 2, vec![1, 2, 3])]);
        p.residue = vec![0xEE, 0xFF];
        p.header.length += 2;
        let tree = dissect(&p, &registry());
        assert!(tree.children.iter().any(|c| c.flags.contains(&Flag::UnknownTlv)));
        assert!(tree.children.iter().any(|c| c.flags.contains(&Flag::Residue)));
        assert_total(&tree, p.encoded_len());
    }

    #[test]
    fn no_subdissector_means_hex_blob() {
        let p = packet(11, 0x20, vec![Tlv::new(1, 0, vec![0xAB, 0xCD])]);
        let tree = dissect(&p, &registry());
        let value = tree.find("value").unwrap();
        assert!(value.is_leaf());
        assert_eq!(value.raw.as_ref().unwrap().to_string(), "ab cd");
    }

    #[test]
    fn failing_subdissector_is_annotated() {
        let mut d = Dissector::new();
        d.register_subdissector(SubDissector::new("boom", Selector::tlv_name("sms_pdu"), |_| Err("nope".into())))
            .unwrap();
        let p = packet(11, 0x20, vec![Tlv::new(1, 0, vec![0xAB])]);
        let tree = d.dissect(&p, &registry());
        let value = tree.find("value").unwrap();
        assert!(value.is_leaf());
        assert_eq!(value.notes, ["boom failed: nope"]);
    }

    #[test]
    fn duplicate_selector_rejected() {
        let mut d = Dissector::new();
        d.register_subdissector(SubDissector::sms_deliver(Selector::tlv_name("sms_pdu"))).unwrap();
        assert!(matches!(
            d.register_subdissector(SubDissector::sms_deliver(Selector::tlv_name("sms_pdu"))),
            Err(DissectError::DuplicateSelector(_))
        ));
        assert_eq!(
            d.register_subdissector(SubDissector::sms_deliver(Selector::default())).unwrap_err(),
            DissectError::EmptySelector
        );
    }

    #[test]
    fn text_rendering() {
        let p = packet(9, 0x101, vec![Tlv::new(0x101, 0, vec![1, 0, 0, 0])]);
        let text = dissect(&p, &registry()).render_text();
        assert!(text.starts_with("IBINetSetRadioSignalReportingConfiguration [missing-mandatory]"), "{text}");
        assert!(text.contains("\n  group: net_cell (0x9)\n"), "{text}");
        assert!(text.contains("\n  nInstance_t1: 1\n"), "{text}");
        assert!(text.contains("\n    value: 1 (01 00 00 00)\n"), "{text}");
    }
}
