//! Encoding, dissection, trace handling and fuzzing for ARI baseband
//! management messages.

pub mod bits;
pub mod defs;
pub mod dissect;
pub mod fuzz;
pub mod ingest;
pub mod packet;
pub mod stats;

pub use bits::{extract_bits, insert_bits, BitError, BitSpan};
pub use defs::{load_registry, save_registry, DefinitionRegistry};
pub use dissect::{dissect, DissectedNode, Dissector};
pub use packet::{parse_header, parse_packet, serialize_header, serialize_packet, AriHeader, AriPacket, CodecError, ParseMode, Tlv};
