use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{DefinitionRegistry, RegistryCounts};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Item {
    pub key: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rename {
    pub key: String,
    pub old: String,
    pub new: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Modified {
    pub key: String,
    pub name: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ChangeSet {
    pub added: Vec<Item>,
    pub removed: Vec<Item>,
    pub renamed: Vec<Rename>,
    pub modified: Vec<Modified>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.renamed.is_empty() && self.modified.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChangeReport {
    pub old_label: String,
    pub new_label: String,
    pub old_counts: RegistryCounts,
    pub new_counts: RegistryCounts,
    pub groups: ChangeSet,
    pub messages: ChangeSet,
    pub tlvs: ChangeSet,
    pub codecs: ChangeSet,
}

impl ChangeReport {
    pub fn is_empty(&self) -> bool {
        self.groups.is_empty() && self.messages.is_empty() && self.tlvs.is_empty() && self.codecs.is_empty()
    }

    /// Change in the number of TLV type definitions.
    pub fn net_tlv_defs(&self) -> i64 {
        self.new_counts.tlv_defs as i64 - self.old_counts.tlv_defs as i64
    }
}

/// Keyed view of one kind of definition: key -> (name, comparable body).
type Keyed = BTreeMap<String, (String, String)>;

fn diff_keyed(old: &Keyed, new: &Keyed) -> ChangeSet {
    let mut set = ChangeSet::default();
    for (key, (name, body)) in old {
        match new.get(key) {
            None => set.removed.push(Item { key: key.clone(), name: name.clone() }),
            Some((new_name, new_body)) => {
                if new_name != name {
                    set.renamed.push(Rename { key: key.clone(), old: name.clone(), new: new_name.clone() });
                }
                if new_body != body {
                    set.modified.push(Modified {
                        key: key.clone(),
                        name: new_name.clone(),
                        detail: format!("{body} -> {new_body}"),
                    });
                }
            }
        }
    }
    for (key, (name, _)) in new {
        if !old.contains_key(key) {
            set.added.push(Item { key: key.clone(), name: name.clone() });
        }
    }
    set
}

fn group_key(id: u8) -> String {
    format!("{id}")
}

fn message_key(group: u8, ty: u16) -> String {
    format!("{group}/{ty:#x}")
}

fn keyed_groups(reg: &DefinitionRegistry) -> Keyed {
    reg.groups().iter().map(|g| (group_key(g.id), (g.name.clone(), String::new()))).collect()
}

fn keyed_messages(reg: &DefinitionRegistry) -> Keyed {
    reg.messages()
        .map(|m| (message_key(m.group_id, m.type_id), (m.name.clone(), String::new())))
        .collect()
}

fn keyed_tlvs(reg: &DefinitionRegistry) -> Keyed {
    reg.messages()
        .flat_map(|m| {
            m.tlvs.iter().map(move |t| {
                let key = format!("{}/{:#x}", message_key(m.group_id, m.type_id), t.type_id);
                let body = format!(
                    "index {} codec {} {}",
                    t.index,
                    t.codec,
                    if t.mandatory { "mandatory" } else { "optional" }
                );
                (key, (t.name.clone(), body))
            })
        })
        .collect()
}

fn keyed_codecs(reg: &DefinitionRegistry) -> Keyed {
    let enums = reg
        .codecs()
        .iter()
        .map(|c| (c.name.clone(), (c.name.clone(), format!("offset {} entries {:?}", c.offset, c.entries))));
    let prims = reg
        .primitives()
        .iter()
        .map(|p| (p.name.clone(), (p.name.clone(), format!("{:?}", p.kind).to_lowercase())));
    enums.chain(prims).collect()
}

/// Compares two definition versions. Entries keep their identity by id
/// (group id, message (group, type), TLV (group, type, tlv type), codec
/// name); a changed name under the same id is a rename.
pub fn diff_registries(old: &DefinitionRegistry, new: &DefinitionRegistry) -> ChangeReport {
    ChangeReport {
        old_label: old.version_label().to_string(),
        new_label: new.version_label().to_string(),
        old_counts: old.counts(),
        new_counts: new.counts(),
        groups: diff_keyed(&keyed_groups(old), &keyed_groups(new)),
        messages: diff_keyed(&keyed_messages(old), &keyed_messages(new)),
        tlvs: diff_keyed(&keyed_tlvs(old), &keyed_tlvs(new)),
        codecs: diff_keyed(&keyed_codecs(old), &keyed_codecs(new)),
    }
}

impl fmt::Display for ChangeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} -> {}", self.old_label, self.new_label)?;
        writeln!(f, "{:<12} {:>7} {:>7} {:>7}", "", "old", "new", "delta")?;
        let (o, n) = (&self.old_counts, &self.new_counts);
        let rows = [
            ("groups", o.groups, n.groups),
            ("messages", o.messages, n.messages),
            ("tlv types", o.tlv_defs, n.tlv_defs),
            ("enum codecs", o.enum_codecs, n.enum_codecs),
        ];
        for (label, a, b) in rows {
            writeln!(f, "{label:<12} {a:>7} {b:>7} {:>+7}", b as i64 - a as i64)?;
        }
        if self.is_empty() {
            return writeln!(f, "no changes");
        }
        let sections = [
            ("group", &self.groups),
            ("message", &self.messages),
            ("tlv", &self.tlvs),
            ("codec", &self.codecs),
        ];
        for (kind, set) in sections {
            for i in &set.added {
                writeln!(f, "+ {kind} {} {}", i.key, i.name)?;
            }
            for i in &set.removed {
                writeln!(f, "- {kind} {} {}", i.key, i.name)?;
            }
            for r in &set.renamed {
                writeln!(f, "~ {kind} {} {} -> {}", r.key, r.old, r.new)?;
            }
            for m in &set.modified {
                writeln!(f, "* {kind} {} {}: {}", m.key, m.name, m.detail)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defs::{Definitions, GroupDef, MessageDef, TlvDef};

    fn reg(message_name: &str, extra_tlv: bool) -> DefinitionRegistry {
        let mut tlvs = vec![TlvDef { index: 1, type_id: 1, codec: "uint".into(), name: "a".into(), mandatory: true }];
        if extra_tlv {
            tlvs.push(TlvDef { index: 2, type_id: 2, codec: "bytes".into(), name: "b".into(), mandatory: false });
        }
        DefinitionRegistry::new(Definitions {
            version_label: "v".into(),
            groups: vec![GroupDef {
                id: 9,
                name: "net_cell".into(),
                messages: vec![MessageDef { group_id: 9, type_id: 0x101, name: message_name.into(), tlvs }],
            }],
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn identity_is_empty() {
        let a = reg("m", true);
        let d = diff_registries(&a, &a);
        assert!(d.is_empty());
        assert!(d.to_string().contains("no changes"));
    }

    #[test]
    fn rename_only() {
        let d = diff_registries(&reg("old_name", false), &reg("new_name", false));
        assert_eq!(d.messages.renamed.len(), 1);
        assert!(d.messages.added.is_empty() && d.messages.removed.is_empty());
        assert!(d.tlvs.is_empty() && d.groups.is_empty());
    }

    #[test]
    fn adds_mirror_removes() {
        let (a, b) = (reg("m", false), reg("m", true));
        let ab = diff_registries(&a, &b);
        let ba = diff_registries(&b, &a);
        assert_eq!(ab.tlvs.added, ba.tlvs.removed);
        assert_eq!(ab.tlvs.removed, ba.tlvs.added);
        assert_eq!(ab.net_tlv_defs(), 1);
        assert_eq!(ba.net_tlv_defs(), -1);
    }
}
