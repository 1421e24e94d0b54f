//! Protocol schema: groups, message definitions, TLV definitions and codecs.
//!
//! A registry is loaded from a JSON definition file (schema in
//! `schema/ari-definitions.schema.json`), validated once, and is read-only
//! afterwards.

mod diff;
mod wireshark;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{MAX_GROUP, MAX_MESSAGE_TYPE, MAX_TLV_TYPE};

pub use diff::{diff_registries, ChangeReport, ChangeSet, Item, Modified, Rename};
pub use wireshark::{emit_wireshark_dissector, quoted_strings_between, CODEC_TABLES_BEGIN, CODEC_TABLES_END, NAME_TABLES_BEGIN, NAME_TABLES_END};

/// Returned by [`EnumCodec::decode`] for values outside the table.
pub const UNKNOWN_VALUE: &str = "???";

/// Codec references that resolve without being declared in the file.
pub const BUILTIN_PRIMITIVES: [(&str, PrimitiveKind); 3] = [
    ("uint", PrimitiveKind::Uint),
    ("bytes", PrimitiveKind::Bytes),
    ("text", PrimitiveKind::Text),
];

#[derive(Debug, Error)]
pub enum DefsError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> DefsError {
    DefsError::Invalid { path: path.into(), reason: reason.into() }
}

/// Lookup-table codec: `entries[value - offset]`, or `"???"` outside the table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumCodec {
    pub name: String,
    pub offset: i64,
    pub entries: Vec<String>,
}

impl EnumCodec {
    pub fn decode(&self, value: u64) -> &str {
        let idx = value as i128 - self.offset as i128;
        if idx < 0 || idx >= self.entries.len() as i128 {
            return UNKNOWN_VALUE;
        }
        &self.entries[idx as usize]
    }
}

pub fn decode_enum(codec: &EnumCodec, value: u64) -> &str {
    codec.decode(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    /// Little-endian unsigned integer of up to 8 bytes.
    Uint,
    Bytes,
    Text,
}

/// A named codec that renders values with a primitive rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveCodec {
    pub name: String,
    pub kind: PrimitiveKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlvDef {
    pub index: u32,
    #[serde(rename = "type")]
    pub type_id: u16,
    pub codec: String,
    pub name: String,
    pub mandatory: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageDef {
    /// Filled from the enclosing group on load.
    #[serde(skip)]
    pub group_id: u8,
    #[serde(rename = "type")]
    pub type_id: u16,
    pub name: String,
    pub tlvs: Vec<TlvDef>,
}

impl MessageDef {
    pub fn mandatory_tlvs(&self) -> impl Iterator<Item = &TlvDef> {
        self.tlvs.iter().filter(|t| t.mandatory)
    }

    pub fn tlv(&self, type_id: u16) -> Option<&TlvDef> {
        self.tlvs.iter().find(|t| t.type_id == type_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupDef {
    pub id: u8,
    pub name: String,
    pub messages: Vec<MessageDef>,
}

/// Contents of a definition file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Definitions {
    pub version_label: String,
    #[serde(default)]
    pub codecs: Vec<EnumCodec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub primitives: Vec<PrimitiveCodec>,
    pub groups: Vec<GroupDef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Codec<'a> {
    Enum(&'a EnumCodec),
    Primitive { name: &'a str, kind: PrimitiveKind },
}

#[derive(Debug, Clone, Copy)]
enum CodecSlot {
    Enum(usize),
    Primitive(usize),
    Builtin(PrimitiveKind),
}

/// Counts comparable across definition versions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryCounts {
    pub groups: usize,
    pub messages: usize,
    pub tlv_defs: usize,
    pub enum_codecs: usize,
    pub primitive_codecs: usize,
}

/// Validated, indexed definitions.
#[derive(Debug, Clone)]
pub struct DefinitionRegistry {
    defs: Definitions,
    groups_by_id: HashMap<u8, usize>,
    messages_by_id: HashMap<(u8, u16), (usize, usize)>,
    codecs_by_name: HashMap<String, CodecSlot>,
}

impl PartialEq for DefinitionRegistry {
    fn eq(&self, other: &Self) -> bool {
        self.defs == other.defs
    }
}

impl Eq for DefinitionRegistry {}

impl Default for DefinitionRegistry {
    fn default() -> Self {
        Self::new(Definitions::default()).expect("empty definitions are valid")
    }
}

impl DefinitionRegistry {
    pub fn new(mut defs: Definitions) -> Result<Self, DefsError> {
        let mut codecs_by_name = HashMap::new();
        for (name, kind) in BUILTIN_PRIMITIVES {
            codecs_by_name.insert(name.to_string(), CodecSlot::Builtin(kind));
        }
        let declared = defs
            .codecs
            .iter()
            .enumerate()
            .map(|(i, c)| (format!("codecs[{i}]"), &c.name, CodecSlot::Enum(i)))
            .chain(
                defs.primitives
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (format!("primitives[{i}]"), &p.name, CodecSlot::Primitive(i))),
            );
        for (path, name, slot) in declared {
            if name.is_empty() {
                return Err(invalid(format!("{path}.name"), "codec name is empty"));
            }
            if codecs_by_name.insert(name.clone(), slot).is_some() {
                return Err(invalid(format!("{path}.name"), format!("duplicate codec name '{name}'")));
            }
        }

        let mut groups_by_id = HashMap::new();
        let mut messages_by_id = HashMap::new();
        for (gi, group) in defs.groups.iter_mut().enumerate() {
            let gpath = format!("groups[{gi}]");
            if group.id > MAX_GROUP {
                return Err(invalid(format!("{gpath}.id"), format!("group id {} exceeds {MAX_GROUP}", group.id)));
            }
            if groups_by_id.insert(group.id, gi).is_some() {
                return Err(invalid(format!("{gpath}.id"), format!("duplicate group id {}", group.id)));
            }
            for (mi, msg) in group.messages.iter_mut().enumerate() {
                let mpath = format!("{gpath}.messages[{mi}]");
                msg.group_id = group.id;
                if msg.type_id > MAX_MESSAGE_TYPE {
                    return Err(invalid(
                        format!("{mpath}.type"),
                        format!("message type {} exceeds {MAX_MESSAGE_TYPE}", msg.type_id),
                    ));
                }
                if messages_by_id.insert((group.id, msg.type_id), (gi, mi)).is_some() {
                    return Err(invalid(
                        format!("{mpath}.type"),
                        format!("duplicate message ({}, {:#x})", group.id, msg.type_id),
                    ));
                }
                let mut seen_types = HashSet::new();
                let mut last_index = 0;
                for (ti, tlv) in msg.tlvs.iter().enumerate() {
                    let tpath = format!("{mpath}.tlvs[{ti}]");
                    let expected_first = ti > 0 || tlv.index == 1;
                    if !expected_first || tlv.index <= last_index {
                        return Err(invalid(
                            format!("{tpath}.index"),
                            format!("index {} must increase strictly from 1", tlv.index),
                        ));
                    }
                    last_index = tlv.index;
                    if tlv.type_id > MAX_TLV_TYPE {
                        return Err(invalid(
                            format!("{tpath}.type"),
                            format!("TLV type {} exceeds {MAX_TLV_TYPE}", tlv.type_id),
                        ));
                    }
                    if !seen_types.insert(tlv.type_id) {
                        return Err(invalid(
                            format!("{tpath}.type"),
                            format!("duplicate TLV type {:#x} in message", tlv.type_id),
                        ));
                    }
                    if !codecs_by_name.contains_key(&tlv.codec) {
                        return Err(invalid(format!("{tpath}.codec"), format!("unknown codec '{}'", tlv.codec)));
                    }
                }
            }
        }

        Ok(DefinitionRegistry { defs, groups_by_id, messages_by_id, codecs_by_name })
    }

    pub fn definitions(&self) -> &Definitions {
        &self.defs
    }

    pub fn into_definitions(self) -> Definitions {
        self.defs
    }

    pub fn version_label(&self) -> &str {
        &self.defs.version_label
    }

    pub fn groups(&self) -> &[GroupDef] {
        &self.defs.groups
    }

    pub fn codecs(&self) -> &[EnumCodec] {
        &self.defs.codecs
    }

    pub fn primitives(&self) -> &[PrimitiveCodec] {
        &self.defs.primitives
    }

    pub fn group(&self, id: u8) -> Option<&GroupDef> {
        self.groups_by_id.get(&id).map(|&gi| &self.defs.groups[gi])
    }

    pub fn lookup_message(&self, group: u8, message_type: u16) -> Option<&MessageDef> {
        self.messages_by_id
            .get(&(group, message_type))
            .map(|&(gi, mi)| &self.defs.groups[gi].messages[mi])
    }

    pub fn messages(&self) -> impl Iterator<Item = &MessageDef> {
        self.defs.groups.iter().flat_map(|g| g.messages.iter())
    }

    pub fn codec(&self, name: &str) -> Option<Codec<'_>> {
        Some(match *self.codecs_by_name.get(name)? {
            CodecSlot::Enum(i) => Codec::Enum(&self.defs.codecs[i]),
            CodecSlot::Primitive(i) => {
                let p = &self.defs.primitives[i];
                Codec::Primitive { name: &p.name, kind: p.kind }
            }
            CodecSlot::Builtin(kind) => {
                let name = BUILTIN_PRIMITIVES.iter().find(|(_, k)| *k == kind).map(|(n, _)| *n).unwrap_or("uint");
                Codec::Primitive { name, kind }
            }
        })
    }

    /// Every distinct TLV type id defined anywhere, ascending.
    pub fn tlv_type_ids(&self) -> Vec<u16> {
        let mut ids: Vec<u16> = self.messages().flat_map(|m| m.tlvs.iter().map(|t| t.type_id)).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn counts(&self) -> RegistryCounts {
        RegistryCounts {
            groups: self.defs.groups.len(),
            messages: self.messages().count(),
            tlv_defs: self.messages().map(|m| m.tlvs.len()).sum(),
            enum_codecs: self.defs.codecs.len(),
            primitive_codecs: self.defs.primitives.len(),
        }
    }
}

/// Parses and validates a JSON definition file.
pub fn load_registry(bytes: &[u8]) -> Result<DefinitionRegistry, DefsError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let defs: Definitions = serde_path_to_error::deserialize(de).map_err(|e| DefsError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    DefinitionRegistry::new(defs)
}

/// Pretty-printed JSON accepted by [`load_registry`].
pub fn save_registry(reg: &DefinitionRegistry) -> String {
    let mut out = serde_json::to_string_pretty(reg.definitions()).expect("definitions serialize");
    out.push('\n');
    out
}
