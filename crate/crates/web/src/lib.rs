//! Browser bindings for the demo page in `www/`. Each export takes and
//! returns JSON strings; the `*_json` functions hold the logic so they can be
//! tested natively.

use ari_toolkit::defs::{load_registry, DefinitionRegistry};
use ari_toolkit::dissect::{DissectedNode, Dissector, Selector, SubDissector};
use ari_toolkit::fuzz::{mutate_bitflip, Mutation};
use ari_toolkit::packet::{parse_header, parse_packet, serialize_header, AriHeader, AriPacket, ParseMode, HEADER_LEN};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Definitions used when the page does not supply its own.
pub const DEMO_DEFS: &str = include_str!("../../core/fixtures/demo.json");

fn registry(defs_json: &str) -> Result<DefinitionRegistry, String> {
    let text = if defs_json.trim().is_empty() { DEMO_DEFS } else { defs_json };
    load_registry(text.as_bytes()).map_err(|e| e.to_string())
}

fn dissector() -> Dissector {
    let mut d = Dissector::new();
    d.register_subdissector(SubDissector::sms_deliver(Selector::tlv_name("sms_pdu")))
        .expect("fresh dissector");
    d
}

/// Accepts hex with any whitespace, colons or a `0x` prefix.
pub fn decode_hex(text: &str) -> Result<Vec<u8>, String> {
    let text = text.trim();
    let text = text.strip_prefix("0x").unwrap_or(text);
    let digits: String = text.chars().filter(|c| !c.is_whitespace() && *c != ':').collect();
    hex::decode(digits).map_err(|e| format!("bad hex: {e}"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BitOwner {
    pub bit: usize,
    pub value: u8,
    /// Leaf path below the root, e.g. `group/group[4:0]`.
    pub field: String,
}

/// Owner of every bit of `bytes`, from the leaves of `tree`. Bits no leaf
/// covers are reported as `residue`.
fn bit_owners(tree: &DissectedNode, bytes: &[u8]) -> Vec<BitOwner> {
    let mut owners = vec![String::from("residue"); bytes.len() * 8];
    fn visit(node: &DissectedNode, path: &str, owners: &mut [String]) {
        for c in &node.children {
            let p = if path.is_empty() { c.label.clone() } else { format!("{path}/{}", c.label) };
            match c.span {
                Some(s) if c.is_leaf() => {
                    for bit in s.start_bit()..s.end_bit().min(owners.len()) {
                        owners[bit] = p.clone();
                    }
                }
                _ => visit(c, &p, owners),
            }
        }
    }
    visit(tree, "", &mut owners);
    owners
        .into_iter()
        .enumerate()
        .map(|(bit, field)| BitOwner { bit, value: (bytes[bit / 8] >> (7 - bit % 8)) & 1, field })
        .collect()
}

/// Dissects one packet. Returns the tree, its text rendering and whether
/// the packet needed lenient parsing.
pub fn dissect_hex_json(hex: &str, defs_json: &str) -> Result<String, String> {
    let bytes = decode_hex(hex)?;
    let reg = registry(defs_json)?;
    let strict = parse_packet(&bytes, ParseMode::Strict);
    let packet = match &strict {
        Ok(p) => p.clone(),
        Err(_) => parse_packet(&bytes, ParseMode::Lenient).map_err(|e| e.to_string())?,
    };
    let tree = dissector().dissect(&packet, &reg);
    Ok(json!({
        "text": tree.render_text(),
        "strict_error": strict.err().map(|e| e.to_string()),
        "tree": tree,
    })
    .to_string())
}

/// Decodes the 12-byte header at the start of `hex` and labels each of its
/// 96 bits with the field it belongs to.
pub fn header_bits_json(hex: &str) -> Result<String, String> {
    let bytes = decode_hex(hex)?;
    let head = bytes.get(..HEADER_LEN).ok_or_else(|| format!("need {HEADER_LEN} bytes, got {}", bytes.len()))?;
    let header = parse_header(head).map_err(|e| e.to_string())?;
    let reg = registry("")?;
    let tree = ari_toolkit::dissect(&AriPacket::new(header, Vec::new()), &reg);
    Ok(json!({ "header": header, "bits": bit_owners(&tree, head) }).to_string())
}

/// Serializes a header given as JSON (the `header` object returned by
/// `header_bits_json`).
pub fn encode_header_json(header_json: &str) -> Result<String, String> {
    let header: AriHeader = serde_json::from_str(header_json).map_err(|e| e.to_string())?;
    let bytes = serialize_header(&header).map_err(|e| e.to_string())?;
    Ok(hex::encode(bytes))
}

#[derive(Debug, Clone, Serialize)]
struct FlipReport {
    bit: usize,
    old: u8,
    new: u8,
    field: String,
}

/// Applies `flips` seeded bit flips (never in the magic) and shows which
/// fields they landed in, with both dissections.
pub fn bitflip_preview_json(hex: &str, seed: u64, flips: u32, defs_json: &str) -> Result<String, String> {
    let bytes = decode_hex(hex)?;
    let reg = registry(defs_json)?;
    let d = dissector();
    let render = |b: &[u8]| -> Result<DissectedNode, String> {
        let p = parse_packet(b, ParseMode::Lenient).map_err(|e| e.to_string())?;
        Ok(d.dissect(&p, &reg))
    };
    let before = render(&bytes)?;
    let owners = bit_owners(&before, &bytes);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = mutate_bitflip(&bytes, flips, &mut rng).map_err(|e| e.to_string())?;
    let report: Vec<FlipReport> = case
        .mutations
        .iter()
        .filter_map(|m| match *m {
            Mutation::BitFlip { bit, old, new } => {
                Some(FlipReport { bit, old, new, field: owners[bit].field.clone() })
            }
            _ => None,
        })
        .collect();
    let after = render(&case.bytes);
    Ok(json!({
        "hex": hex::encode(&case.bytes),
        "flips": report,
        "before": before.render_text(),
        "after": match &after { Ok(t) => t.render_text(), Err(e) => format!("unparseable: {e}") },
    })
    .to_string())
}

#[wasm_bindgen]
pub fn dissect_hex(hex: &str, defs_json: &str) -> Result<String, JsError> {
    dissect_hex_json(hex, defs_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn header_bits(hex: &str) -> Result<String, JsError> {
    header_bits_json(hex).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn encode_header(header_json: &str) -> Result<String, JsError> {
    encode_header_json(header_json).map_err(|e| JsError::new(&e))
}

/// `seed` is a u32 so the page can pass a plain number.
#[wasm_bindgen]
pub fn bitflip_preview(hex: &str, seed: u32, flips: u32, defs_json: &str) -> Result<String, JsError> {
    bitflip_preview_json(hex, seed as u64, flips, defs_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn demo_defs() -> String {
    DEMO_DEFS.to_string()
}
