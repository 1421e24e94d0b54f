//! Lua dissector generation for Wireshark.
//!
//! The emitted script is self-contained: the registry becomes Lua tables and
//! the header/TLV chunk positions are written out from [`crate::packet::layout`]
//! so that the script and this crate always agree on the bit layout.

use std::collections::HashMap;
use std::fmt::Write;

use super::{Codec, DefinitionRegistry, PrimitiveKind};
use crate::bits::BitSpan;
use crate::packet::layout;

pub const NAME_TABLES_BEGIN: &str = "-- BEGIN NAME TABLES";
pub const NAME_TABLES_END: &str = "-- END NAME TABLES";
pub const CODEC_TABLES_BEGIN: &str = "-- BEGIN CODEC TABLES";
pub const CODEC_TABLES_END: &str = "-- END CODEC TABLES";

fn lua_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for b in s.bytes() {
        match b {
            b'"' => out.push_str("\\\""),
            b'\\' => out.push_str("\\\\"),
            0x20..=0x7e => out.push(b as char),
            _ => {
                let _ = write!(out, "\\{b:03}");
            }
        }
    }
    out.push('"');
    out
}

fn chunks(spans: &[BitSpan]) -> String {
    let parts: Vec<String> = spans
        .iter()
        .map(|s| format!("{{{}, {}}}", s.start_bit(), s.bit_length))
        .collect();
    format!("{{ {} }}", parts.join(", "))
}

fn kind_const(kind: PrimitiveKind) -> &'static str {
    match kind {
        PrimitiveKind::Uint => "UINT",
        PrimitiveKind::Bytes => "BYTES",
        PrimitiveKind::Text => "TEXT",
    }
}

const PRELUDE: &str = r#"local ari = Proto("ari", "ARI")

local UINT, BYTES, TEXT, ENUM = 1, 2, 3, 4
"#;

const BODY: &str = r#"
local f = ari.fields
f.magic = ProtoField.uint32("ari.magic", "Magic", base.HEX)
f.group = ProtoField.uint8("ari.group", "Group", base.DEC)
f.sequence = ProtoField.uint16("ari.sequence", "Sequence", base.DEC)
f.length = ProtoField.uint16("ari.length", "Length", base.DEC)
f.type = ProtoField.uint16("ari.type", "Type", base.HEX)
f.reserved = ProtoField.uint8("ari.reserved", "Reserved", base.HEX)
f.trailer = ProtoField.uint16("ari.trailer", "Trailer", base.HEX)
f.tlv = ProtoField.none("ari.tlv", "TLV")
f.tlv_type = ProtoField.uint16("ari.tlv.type", "TLV type", base.HEX)
f.tlv_version = ProtoField.uint8("ari.tlv.version", "TLV version", base.DEC)
f.tlv_length = ProtoField.uint16("ari.tlv.length", "TLV length", base.DEC)
f.tlv_value = ProtoField.bytes("ari.tlv.value", "TLV value")
f.residue = ProtoField.bytes("ari.residue", "Residue")

local MAGIC = ByteArray.new("dec07eab")

-- split fields: { bit offset, bit count } chunks, low-order chunk first
local function compose(range, parts)
  local value, scale = 0, 1
  for _, c in ipairs(parts) do
    value = value + range:bitfield(c[1], c[2]) * scale
    scale = scale * 2 ^ c[2]
  end
  return math.floor(value)
end

local function le_uint(range)
  local value, scale = 0, 1
  for i = 0, range:len() - 1 do
    value = value + range(i, 1):uint() * scale
    scale = scale * 256
  end
  return math.floor(value)
end

local function render(def, range)
  if def.kind == ENUM then
    if range:len() > 8 then return "???" end
    return ari_codecs[def.codec].values[le_uint(range)] or "???"
  elseif def.kind == UINT then
    if range:len() > 8 then return nil end
    return tostring(le_uint(range))
  elseif def.kind == TEXT then
    return range:string()
  end
  return nil
end

function ari.dissector(buf, pinfo, tree)
  if buf:len() < 12 or buf(0, 4):bytes() ~= MAGIC then return 0 end
  pinfo.cols.protocol = "ARI"
  local hdr = buf(0, 12)
  local group = compose(hdr, HDR.group)
  local msgtype = compose(hdr, HDR.msgtype)
  local length = compose(hdr, HDR.length)
  local stop = math.min(buf:len(), 12 + length)
  local gname = ari_groups[group]
  local mname = ari_messages[group] and ari_messages[group][msgtype]
  local root = tree:add(ari, buf(0, stop))
  root:append_text(string.format(": %s / %s", gname or ("group " .. group), mname or string.format("type 0x%x", msgtype)))
  root:add(f.magic, buf(0, 4))
  root:add(f.group, buf(4, 2), group)
  root:add(f.sequence, buf(5, 4), compose(hdr, HDR.sequence))
  root:add(f.length, buf(6, 2), length)
  root:add(f.type, buf(8, 2), msgtype)
  root:add(f.reserved, buf(4, 5), compose(hdr, HDR.reserved))
  root:add(f.trailer, buf(10, 2))
  pinfo.cols.info = (gname or ("group " .. group)) .. " " .. (mname or string.format("0x%x", msgtype))

  local defs = (ari_tlvs[group] and ari_tlvs[group][msgtype]) or {}
  local seen = {}
  local off = 12
  while off + 4 <= stop do
    local th = buf(off, 4)
    local ttype = compose(th, TLV.type)
    local tlen = compose(th, TLV.length)
    if off + 4 + tlen > stop then break end
    local def = nil
    for _, d in ipairs(defs) do
      if d.type == ttype then def = d end
    end
    seen[ttype] = true
    local sub = root:add(f.tlv, buf(off, 4 + tlen))
    sub:set_text(def and def.name or string.format("TLV 0x%x", ttype))
    sub:add(f.tlv_type, buf(off, 2), ttype)
    sub:add(f.tlv_version, buf(off + 1, 1), compose(th, TLV.version))
    sub:add(f.tlv_length, buf(off + 2, 2), tlen)
    if tlen > 0 then
      sub:add(f.tlv_value, buf(off + 4, tlen))
      local text = def and render(def, buf(off + 4, tlen))
      if text then sub:append_text(": " .. text) end
    end
    off = off + 4 + tlen
  end
  if off < stop then root:add(f.residue, buf(off, stop - off)) end
  for _, d in ipairs(defs) do
    if d.mandatory and not seen[d.type] then root:append_text(" [missing " .. d.name .. "]") end
  end
  return stop
end

DissectorTable.get("wtap_encap"):add(wtap.USER0, ari)
"#;

/// Renders the registry as a Wireshark Lua dissector. Output is a pure
/// function of the registry contents.
pub fn emit_wireshark_dissector(reg: &DefinitionRegistry) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "-- ARI dissector generated from definitions {}", lua_str(reg.version_label()));
    out.push_str("-- Reads frames from pcap link type 147 (DLT_USER0, wtap.USER0).\n\n");
    out.push_str(PRELUDE);

    let mut codec_index: HashMap<&str, usize> = HashMap::new();
    for (i, name) in reg
        .codecs()
        .iter()
        .map(|c| c.name.as_str())
        .chain(reg.primitives().iter().map(|p| p.name.as_str()))
        .enumerate()
    {
        codec_index.insert(name, i + 1);
    }

    let mut groups: Vec<_> = reg.groups().iter().collect();
    groups.sort_by_key(|g| g.id);

    out.push('\n');
    out.push_str(NAME_TABLES_BEGIN);
    out.push_str("\nlocal ari_groups = {\n");
    for g in &groups {
        let _ = writeln!(out, "  [{}] = {},", g.id, lua_str(&g.name));
    }
    out.push_str("}\nlocal ari_messages = {\n");
    for g in groups.iter().filter(|g| !g.messages.is_empty()) {
        let _ = writeln!(out, "  [{}] = {{", g.id);
        let mut msgs: Vec<_> = g.messages.iter().collect();
        msgs.sort_by_key(|m| m.type_id);
        for m in msgs {
            let _ = writeln!(out, "    [{:#x}] = {},", m.type_id, lua_str(&m.name));
        }
        out.push_str("  },\n");
    }
    out.push_str("}\nlocal ari_tlvs = {\n");
    for g in groups.iter().filter(|g| !g.messages.is_empty()) {
        let _ = writeln!(out, "  [{}] = {{", g.id);
        let mut msgs: Vec<_> = g.messages.iter().collect();
        msgs.sort_by_key(|m| m.type_id);
        for m in msgs {
            let _ = writeln!(out, "    [{:#x}] = {{", m.type_id);
            for t in &m.tlvs {
                let (kind, codec) = match reg.codec(&t.codec) {
                    Some(Codec::Enum(c)) => ("ENUM", codec_index.get(c.name.as_str()).copied()),
                    Some(Codec::Primitive { name, kind }) => (kind_const(kind), codec_index.get(name).copied()),
                    None => ("BYTES", None),
                };
                let codec = codec.map_or_else(|| "nil".to_string(), |i| i.to_string());
                let _ = writeln!(
                    out,
                    "      {{ index = {}, type = {:#x}, kind = {kind}, codec = {codec}, mandatory = {}, name = {} }},",
                    t.index,
                    t.type_id,
                    t.mandatory,
                    lua_str(&t.name)
                );
            }
            out.push_str("    },\n");
        }
        out.push_str("  },\n");
    }
    out.push_str("}\n");
    out.push_str(NAME_TABLES_END);
    out.push_str("\n\n");

    out.push_str(CODEC_TABLES_BEGIN);
    out.push_str("\nlocal ari_codecs = {\n");
    for c in reg.codecs() {
        let _ = writeln!(out, "  [{}] = {{ name = {}, kind = ENUM, values = {{", codec_index[c.name.as_str()], lua_str(&c.name));
        for (i, entry) in c.entries.iter().enumerate() {
            let _ = writeln!(out, "    [{}] = {},", c.offset as i128 + i as i128, lua_str(entry));
        }
        out.push_str("  } },\n");
    }
    for p in reg.primitives() {
        let _ = writeln!(
            out,
            "  [{}] = {{ name = {}, kind = {} }},",
            codec_index[p.name.as_str()],
            lua_str(&p.name),
            kind_const(p.kind)
        );
    }
    out.push_str("}\n");
    out.push_str(CODEC_TABLES_END);
    out.push_str("\n\n");

    let _ = writeln!(out, "local HDR = {{");
    let header_fields: [(&str, &[BitSpan]); 6] = [
        ("group", layout::GROUP),
        ("sequence", layout::SEQUENCE),
        ("length", layout::LENGTH),
        ("msgtype", layout::MESSAGE_TYPE),
        ("reserved", &[layout::RESERVED_A, layout::RESERVED_B]),
        ("trailer", &[layout::TRAILER]),
    ];
    for (name, spans) in header_fields {
        let _ = writeln!(out, "  {name} = {},", chunks(spans));
    }
    out.push_str("}\nlocal TLV = {\n");
    let tlv_fields: [(&str, &[BitSpan]); 3] = [
        ("type", layout::TLV_TYPE),
        ("version", &[layout::TLV_VERSION]),
        ("length", layout::TLV_LENGTH),
    ];
    for (name, spans) in tlv_fields {
        let _ = writeln!(out, "  {name} = {},", chunks(spans));
    }
    out.push_str("}\n");
    out.push_str(BODY);
    out
}

/// Double-quoted string literals between two marker lines, unescaped.
pub fn quoted_strings_between(script: &str, begin: &str, end: &str) -> Vec<String> {
    let Some(start) = script.find(begin) else { return Vec::new() };
    let rest = &script[start + begin.len()..];
    let section = &rest[..rest.find(end).unwrap_or(rest.len())];
    let mut out = Vec::new();
    let mut chars = section.chars();
    while let Some(c) = chars.next() {
        if c != '"' {
            continue;
        }
        let mut s = Vec::new();
        while let Some(c) = chars.next() {
            match c {
                '"' => break,
                '\\' => match chars.next() {
                    Some(d) if d.is_ascii_digit() => {
                        let digits: String = [d, chars.next().unwrap_or('0'), chars.next().unwrap_or('0')].iter().collect();
                        s.push(digits.parse::<u8>().unwrap_or(0));
                    }
                    Some(other) => s.extend(other.to_string().bytes()),
                    None => {}
                },
                other => s.extend(other.to_string().bytes()),
            }
        }
        out.push(String::from_utf8_lossy(&s).into_owned());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defs::{Definitions, EnumCodec, GroupDef, MessageDef, TlvDef};

    fn sample() -> DefinitionRegistry {
        DefinitionRegistry::new(Definitions {
            version_label: "t".into(),
            codecs: vec![EnumCodec { name: "BAND".into(), offset: 1, entries: vec!["NB".into(), "W\"B".into()] }],
            groups: vec![GroupDef {
                id: 9,
                name: "net_cell".into(),
                messages: vec![MessageDef {
                    group_id: 9,
                    type_id: 0x101,
                    name: "IBINetSetRadioSignalReportingConfiguration".into(),
                    tlvs: vec![
                        TlvDef { index: 1, type_id: 0x101, codec: "uint".into(), name: "nInstance_t1".into(), mandatory: true },
                        TlvDef { index: 2, type_id: 2, codec: "BAND".into(), name: "band".into(), mandatory: false },
                    ],
                }],
            }],
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn empty_registry_still_registers_protocol() {
        let script = emit_wireshark_dissector(&DefinitionRegistry::default());
        assert!(script.contains(r#"Proto("ari", "ARI")"#));
        assert!(script.contains("DissectorTable.get(\"wtap_encap\"):add(wtap.USER0, ari)"));
        assert!(quoted_strings_between(&script, NAME_TABLES_BEGIN, NAME_TABLES_END).is_empty());
        assert!(quoted_strings_between(&script, CODEC_TABLES_BEGIN, CODEC_TABLES_END).is_empty());
    }

    #[test]
    fn names_and_escaping() {
        let script = emit_wireshark_dissector(&sample());
        let mut names = quoted_strings_between(&script, NAME_TABLES_BEGIN, NAME_TABLES_END);
        names.sort();
        assert_eq!(names, ["IBINetSetRadioSignalReportingConfiguration", "band", "nInstance_t1", "net_cell"]);
        let codecs = quoted_strings_between(&script, CODEC_TABLES_BEGIN, CODEC_TABLES_END);
        assert_eq!(codecs, ["BAND", "NB", "W\"B"]);
        assert!(script.contains("[2] = \"W\\\"B\""));
        assert!(script.contains("group = { {32, 5}, {47, 1} }"));
        assert!(script.contains("length = { {16, 6}, {24, 8} }"));
    }

    #[test]
    fn deterministic() {
        assert_eq!(emit_wireshark_dissector(&sample()), emit_wireshark_dissector(&sample()));
    }
}
