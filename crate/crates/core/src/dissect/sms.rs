//! Minimal SMS-DELIVER TPDU decoder (no SMSC prefix, no user data header).

use thiserror::Error;

use super::{DissectedNode, Raw};
use crate::bits::BitSpan;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmsError {
    #[error("TPDU truncated in {field} at octet {offset}")]
    Truncated { field: &'static str, offset: usize },
    #[error("message type indicator {0} is not SMS-DELIVER")]
    NotDeliver(u8),
    #[error("user data header not supported")]
    UserDataHeader,
}

/// GSM 03.38 default alphabet. 0x1B is the escape to the extension table.
const GSM7_BASIC: [char; 128] = [
    '@', '£', '$', '¥', 'è', 'é', 'ù', 'ì', 'ò', 'Ç', '\n', 'Ø', 'ø', '\r', 'Å', 'å', //
    'Δ', '_', 'Φ', 'Γ', 'Λ', 'Ω', 'Π', 'Ψ', 'Σ', 'Θ', 'Ξ', '\u{1b}', 'Æ', 'æ', 'ß', 'É', //
    ' ', '!', '"', '#', '¤', '%', '&', '\'', '(', ')', '*', '+', ',', '-', '.', '/', //
    '0', '1', '2', '3', '4', '5', '6', '7', '8', '9', ':', ';', '<', '=', '>', '?', //
    '¡', 'A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'J', 'K', 'L', 'M', 'N', 'O', //
    'P', 'Q', 'R', 'S', 'T', 'U', 'V', 'W', 'X', 'Y', 'Z', 'Ä', 'Ö', 'Ñ', 'Ü', '§', //
    '¿', 'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', //
    'p', 'q', 'r', 's', 't', 'u', 'v', 'w', 'x', 'y', 'z', 'ä', 'ö', 'ñ', 'ü', 'à', //
];

const GSM7_ESCAPE: u8 = 0x1B;

const GSM7_EXTENSION: [(u8, char); 10] = [
    (0x0A, '\u{0c}'),
    (0x14, '^'),
    (0x28, '{'),
    (0x29, '}'),
    (0x2F, '\\'),
    (0x3C, '['),
    (0x3D, '~'),
    (0x3E, ']'),
    (0x40, '|'),
    (0x65, '€'),
];

/// Decodes unpacked septets to text. Unknown escape sequences decode as a
/// space, per the alphabet's fallback rule.
pub fn gsm7_decode(septets: &[u8]) -> String {
    let mut out = String::with_capacity(septets.len());
    let mut iter = septets.iter().map(|s| s & 0x7F);
    while let Some(s) = iter.next() {
        if s != GSM7_ESCAPE {
            out.push(GSM7_BASIC[s as usize]);
            continue;
        }
        match iter.next() {
            Some(e) => out.push(GSM7_EXTENSION.iter().find(|(code, _)| *code == e).map_or(' ', |(_, c)| *c)),
            None => out.push(' '),
        }
    }
    out
}

/// Unpacked septets for `text`, or `None` if a character has no GSM 7-bit form.
pub fn gsm7_encode(text: &str) -> Option<Vec<u8>> {
    let mut out = Vec::with_capacity(text.len());
    for c in text.chars() {
        if let Some(pos) = GSM7_BASIC.iter().position(|&b| b == c && b != '\u{1b}') {
            out.push(pos as u8);
        } else if let Some((code, _)) = GSM7_EXTENSION.iter().find(|(_, e)| *e == c) {
            out.extend([GSM7_ESCAPE, *code]);
        } else {
            return None;
        }
    }
    Some(out)
}

/// Packs septets LSB-first into octets.
pub fn pack_septets(septets: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity((septets.len() * 7).div_ceil(8));
    let mut acc = 0u32;
    let mut nbits = 0;
    for &s in septets {
        acc |= ((s & 0x7F) as u32) << nbits;
        nbits += 7;
        while nbits >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            nbits -= 8;
        }
    }
    if nbits > 0 {
        out.push(acc as u8);
    }
    out
}

/// Unpacks `count` septets; `None` if `packed` is too short.
pub fn unpack_septets(packed: &[u8], count: usize) -> Option<Vec<u8>> {
    if packed.len() < (count * 7).div_ceil(8) {
        return None;
    }
    let mut out = Vec::with_capacity(count);
    let mut acc = 0u32;
    let mut nbits = 0;
    let mut bytes = packed.iter();
    while out.len() < count {
        if nbits < 7 {
            acc |= (*bytes.next()? as u32) << nbits;
            nbits += 8;
        }
        out.push((acc & 0x7F) as u8);
        acc >>= 7;
        nbits -= 7;
    }
    Some(out)
}

fn bcd_digits(bytes: &[u8], count: usize) -> String {
    bytes
        .iter()
        .flat_map(|b| [b & 0x0F, b >> 4])
        .take(count)
        .take_while(|&d| d != 0x0F)
        .map(|d| match d {
            0..=9 => (b'0' + d) as char,
            0x0A => '*',
            0x0B => '#',
            0x0C => 'a',
            0x0D => 'b',
            _ => 'c',
        })
        .collect()
}

fn swapped_bcd(b: u8) -> u8 {
    (b & 0x0F) * 10 + (b >> 4)
}

fn timestamp(bytes: &[u8]) -> String {
    let f: Vec<u8> = bytes[..6].iter().map(|&b| swapped_bcd(b)).collect();
    let tz = bytes[6];
    let quarters = (tz & 0x07) * 10 + (tz >> 4);
    let sign = if tz & 0x08 != 0 { '-' } else { '+' };
    format!(
        "{:02}/{:02}/{:02} {:02}:{:02}:{:02} {sign}{:02}:{:02}",
        f[0],
        f[1],
        f[2],
        f[3],
        f[4],
        f[5],
        quarters / 4,
        (quarters % 4) * 15
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Alphabet {
    Gsm7,
    Data8,
    Ucs2,
}

fn alphabet(dcs: u8) -> Alphabet {
    let by_bits = |bits: u8| match bits & 0x03 {
        0 => Alphabet::Gsm7,
        2 => Alphabet::Ucs2,
        _ => Alphabet::Data8,
    };
    match dcs >> 4 {
        0x0..=0x7 => by_bits(dcs >> 2),
        0xC | 0xD => Alphabet::Gsm7,
        0xE => Alphabet::Ucs2,
        0xF if dcs & 0x04 == 0 => Alphabet::Gsm7,
        _ => Alphabet::Data8,
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<(usize, &'a [u8]), SmsError> {
        let start = self.at;
        let slice = self.bytes.get(start..start + n).ok_or(SmsError::Truncated { field, offset: start })?;
        self.at += n;
        Ok((start, slice))
    }

    fn octet(&mut self, field: &'static str) -> Result<(usize, u8), SmsError> {
        self.take(1, field).map(|(at, s)| (at, s[0]))
    }
}

fn octet_leaf(label: &str, at: usize, value: u8) -> DissectedNode {
    DissectedNode::leaf(label, BitSpan::bytes(at, 1), Raw::Uint(value as u64))
}

/// Decodes an SMS-DELIVER TPDU into a field tree. Spans are relative to the
/// start of `tpdu`; every octet is covered by a leaf.
pub fn decode_sms_deliver(tpdu: &[u8]) -> Result<DissectedNode, SmsError> {
    let mut cur = Cursor { bytes: tpdu, at: 0 };

    let (_, first) = cur.octet("first octet")?;
    let mti = first & 0x03;
    if mti != 0 {
        return Err(SmsError::NotDeliver(mti));
    }
    if first & 0x40 != 0 {
        return Err(SmsError::UserDataHeader);
    }
    let bit = |offset: u8, len: u32, label: &str| {
        let span = BitSpan::new(0, offset, len);
        let value = (first >> (8 - offset as u32 - len)) & ((1u8 << len) - 1);
        octet_bit_leaf(label, span, value)
    };
    let first_node = DissectedNode::new("first octet")
        .with_span(BitSpan::bytes(0, 1))
        .with_children(vec![
            bit(0, 1, "TP-RP"),
            bit(1, 1, "TP-UDHI"),
            bit(2, 1, "TP-SRI"),
            bit(3, 2, "unused"),
            bit(5, 1, "TP-MMS"),
            bit(6, 2, "TP-MTI").with_decoded("SMS-DELIVER"),
        ]);

    let (len_at, digits) = cur.octet("originating address length")?;
    let (toa_at, toa) = cur.octet("type of address")?;
    let (digits_at, digit_bytes) = cur.take((digits as usize).div_ceil(2), "originating address")?;
    let number = if toa & 0x70 == 0x50 {
        let septets = unpack_septets(digit_bytes, digits as usize * 4 / 7).unwrap_or_default();
        gsm7_decode(&septets)
    } else {
        let prefix = if toa & 0x70 == 0x10 { "+" } else { "" };
        format!("{prefix}{}", bcd_digits(digit_bytes, digits as usize))
    };
    let mut oa_children = vec![octet_leaf("length", len_at, digits), octet_leaf("type of address", toa_at, toa)];
    if !digit_bytes.is_empty() {
        oa_children.push(
            DissectedNode::leaf("digits", BitSpan::bytes(digits_at, digit_bytes.len()), Raw::Bytes(digit_bytes.to_vec()))
                .with_decoded(number.clone()),
        );
    }
    let oa = DissectedNode::new("TP-OA")
        .with_span(BitSpan::bytes(len_at, cur.at - len_at))
        .with_decoded(number)
        .with_children(oa_children);

    let (pid_at, pid) = cur.octet("TP-PID")?;
    let (dcs_at, dcs) = cur.octet("TP-DCS")?;
    let alpha = alphabet(dcs);
    let (scts_at, scts) = cur.take(7, "TP-SCTS")?;
    let (udl_at, udl) = cur.octet("TP-UDL")?;
    let ud_octets = match alpha {
        Alphabet::Gsm7 => (udl as usize * 7).div_ceil(8),
        _ => udl as usize,
    };
    let (ud_at, ud) = cur.take(ud_octets, "TP-UD")?;
    let text = match alpha {
        Alphabet::Gsm7 => gsm7_decode(&unpack_septets(ud, udl as usize).unwrap_or_default()),
        Alphabet::Ucs2 => {
            let units: Vec<u16> = ud.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
            String::from_utf16_lossy(&units)
        }
        Alphabet::Data8 => hex::encode(ud),
    };
    let ud_node = if ud.is_empty() {
        DissectedNode { raw: Some(Raw::Bytes(Vec::new())), ..DissectedNode::new("TP-UD") }.with_decoded(text)
    } else {
        DissectedNode::leaf("TP-UD", BitSpan::bytes(ud_at, ud.len()), Raw::Bytes(ud.to_vec())).with_decoded(text)
    };

    let mut children = vec![
        first_node,
        oa,
        octet_leaf("TP-PID", pid_at, pid),
        octet_leaf("TP-DCS", dcs_at, dcs).with_decoded(match alpha {
            Alphabet::Gsm7 => "GSM 7-bit default alphabet",
            Alphabet::Data8 => "8-bit data",
            Alphabet::Ucs2 => "UCS2",
        }),
        DissectedNode::leaf("TP-SCTS", BitSpan::bytes(scts_at, 7), Raw::Bytes(scts.to_vec())).with_decoded(timestamp(scts)),
        octet_leaf("TP-UDL", udl_at, udl),
        ud_node,
    ];
    if cur.at < tpdu.len() {
        children.push(DissectedNode::leaf(
            "trailing",
            BitSpan::bytes(cur.at, tpdu.len() - cur.at),
            Raw::Bytes(tpdu[cur.at..].to_vec()),
        ));
    }
    Ok(DissectedNode::new("SMS-DELIVER").with_span(BitSpan::bytes(0, tpdu.len())).with_children(children))
}

fn octet_bit_leaf(label: &str, span: BitSpan, value: u8) -> DissectedNode {
    DissectedNode::leaf(label, span, Raw::Uint(value as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Bit-at-a-time septet packing, LSB first.
    fn oracle_pack(septets: &[u8]) -> Vec<u8> {
        let bits: Vec<u8> = septets.iter().flat_map(|s| (0..7).map(move |i| (s >> i) & 1)).collect();
        bits.chunks(8)
            .map(|chunk| chunk.iter().enumerate().fold(0u8, |acc, (i, b)| acc | (b << i)))
            .collect()
    }

    fn oracle_unpack(packed: &[u8], count: usize) -> Vec<u8> {
        (0..count)
            .map(|n| (0..7).fold(0u8, |acc, i| {
                let bit = n * 7 + i;
                acc | (((packed[bit / 8] >> (bit % 8)) & 1) << i)
            }))
            .collect()
    }

    fn bcd_pack(digits: &[u8]) -> Vec<u8> {
        digits
            .chunks(2)
            .map(|pair| pair[0] | (pair.get(1).copied().unwrap_or(0x0F) << 4))
            .collect()
    }

    const HELLO_PACKED: [u8; 9] = [0xE8, 0x32, 0x9B, 0xFD, 0x46, 0x97, 0xD9, 0xEC, 0x37];

    #[test]
    fn hellohello_vector_matches_oracle() {
        let septets = gsm7_encode("hellohello").unwrap();
        assert_eq!(oracle_pack(&septets), HELLO_PACKED);
        assert_eq!(oracle_unpack(&HELLO_PACKED, 10), septets);
        assert_eq!(pack_septets(&septets), HELLO_PACKED);
        assert_eq!(gsm7_decode(&unpack_septets(&HELLO_PACKED, 10).unwrap()), "hellohello");
    }

    #[test]
    fn extension_characters() {
        let s = "a[b]€{}";
        assert_eq!(gsm7_decode(&gsm7_encode(s).unwrap()), s);
        assert!(gsm7_encode("日本").is_none());
    }

    fn tpdu(digits: &[u8], toa: u8, dcs: u8, udl: u8, ud: &[u8]) -> Vec<u8> {
        let mut t = vec![0x04, digits.len() as u8, toa];
        t.extend(bcd_pack(digits));
        t.extend([0x00, dcs]);
        t.extend([0x12, 0x50, 0x71, 0x21, 0x03, 0x00, 0x80]);
        t.push(udl);
        t.extend_from_slice(ud);
        t
    }

    #[test]
    fn deliver_with_hellohello() {
        let digits = [4, 9, 1, 5, 2, 3, 4, 5, 6, 7, 8];
        let bytes = tpdu(&digits, 0x91, 0x00, 10, &HELLO_PACKED);
        assert_eq!(&bytes[3..9], &[0x94, 0x51, 0x32, 0x54, 0x76, 0xF8]);
        let tree = decode_sms_deliver(&bytes).unwrap();
        assert_eq!(tree.find("TP-OA").unwrap().decoded.as_deref(), Some("+49152345678"));
        assert_eq!(tree.find("TP-UD").unwrap().decoded.as_deref(), Some("hellohello"));
        assert_eq!(tree.find("TP-MTI").unwrap().decoded.as_deref(), Some("SMS-DELIVER"));
        assert_eq!(tree.find("TP-SCTS").unwrap().decoded.as_deref(), Some("21/05/17 12:30:00 +02:00"));

        let mut spans = tree.leaf_spans();
        spans.sort_by_key(|s| s.start_bit());
        let mut at = 0;
        for s in spans {
            assert_eq!(s.start_bit(), at);
            at = s.end_bit();
        }
        assert_eq!(at, bytes.len() * 8);
    }

    #[test]
    fn empty_user_data() {
        let tree = decode_sms_deliver(&tpdu(&[1, 2], 0x81, 0x00, 0, &[])).unwrap();
        let ud = tree.find("TP-UD").unwrap();
        assert_eq!(ud.decoded.as_deref(), Some(""));
        assert!(ud.span.is_none());
        assert_eq!(tree.find("TP-OA").unwrap().decoded.as_deref(), Some("12"));
    }

    #[test]
    fn ucs2_and_errors() {
        let tree = decode_sms_deliver(&tpdu(&[1], 0x81, 0x08, 4, &[0x00, 0x48, 0x00, 0x69])).unwrap();
        assert_eq!(tree.find("TP-UD").unwrap().decoded.as_deref(), Some("Hi"));

        let full = tpdu(&[1, 2, 3], 0x81, 0x00, 10, &HELLO_PACKED);
        for cut in 0..full.len() {
            assert!(matches!(decode_sms_deliver(&full[..cut]), Err(SmsError::Truncated { .. })), "cut {cut}");
        }
        let mut submit = full.clone();
        submit[0] = 0x01;
        assert_eq!(decode_sms_deliver(&submit), Err(SmsError::NotDeliver(1)));
    }

    proptest! {
        #[test]
        fn pack_matches_oracle(septets in proptest::collection::vec(0u8..128, 0..=160)) {
            let packed = pack_septets(&septets);
            prop_assert_eq!(&packed, &oracle_pack(&septets));
            prop_assert_eq!(unpack_septets(&packed, septets.len()).unwrap(), septets);
        }

        #[test]
        fn text_round_trip(s in "[A-Za-z0-9 !\"#%&'()*+,./:;<=>?@_$-]{0,160}") {
            let septets = gsm7_encode(&s).unwrap();
            let packed = pack_septets(&septets);
            prop_assert_eq!(gsm7_decode(&unpack_septets(&packed, septets.len()).unwrap()), s);
        }
    }
}
