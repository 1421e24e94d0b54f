//! MSB-first bit addressing over byte buffers.
//!
//! Bit `i` of a message is bit `7 - i % 8` of byte `i / 8`, so bit 0 is the
//! most significant bit of the first byte. All header and TLV layouts in this
//! crate are expressed with [`BitSpan`]s under that numbering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A contiguous run of bits inside a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BitSpan {
    pub byte_offset: usize,
    pub bit_offset: u8,
    pub bit_length: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BitError {
    #[error("invalid bit span: bit_offset {bit_offset} (must be < 8), bit_length {bit_length} (must be 1..=64)")]
    InvalidSpan { bit_offset: u8, bit_length: u32 },
    #[error("bit span ending at bit {end_bit} exceeds message of {len} bytes")]
    OutOfBounds { end_bit: usize, len: usize },
    #[error("value {value:#x} does not fit in {bit_length} bits")]
    ValueTooWide { value: u64, bit_length: u32 },
}

impl BitSpan {
    pub const fn new(byte_offset: usize, bit_offset: u8, bit_length: u32) -> Self {
        BitSpan { byte_offset, bit_offset, bit_length }
    }

    /// Span starting at an absolute bit index.
    pub const fn at_bit(start_bit: usize, bit_length: u32) -> Self {
        BitSpan {
            byte_offset: start_bit / 8,
            bit_offset: (start_bit % 8) as u8,
            bit_length,
        }
    }

    /// Span covering whole bytes.
    pub const fn bytes(byte_offset: usize, len: usize) -> Self {
        BitSpan { byte_offset, bit_offset: 0, bit_length: (len * 8) as u32 }
    }

    pub const fn start_bit(&self) -> usize {
        self.byte_offset * 8 + self.bit_offset as usize
    }

    /// One past the last bit.
    pub const fn end_bit(&self) -> usize {
        self.start_bit() + self.bit_length as usize
    }

    /// Same span moved `bytes` further into the message.
    pub const fn shifted(self, bytes: usize) -> Self {
        BitSpan { byte_offset: self.byte_offset + bytes, ..self }
    }

    pub fn contains(&self, other: &BitSpan) -> bool {
        other.start_bit() >= self.start_bit() && other.end_bit() <= self.end_bit()
    }

    pub fn overlaps(&self, other: &BitSpan) -> bool {
        self.start_bit() < other.end_bit() && other.start_bit() < self.end_bit()
    }

    pub fn mask(&self) -> u64 {
        if self.bit_length >= 64 {
            u64::MAX
        } else {
            (1u64 << self.bit_length) - 1
        }
    }

    fn check(&self, len: usize) -> Result<(), BitError> {
        if self.bit_offset >= 8 || self.bit_length == 0 || self.bit_length > 64 {
            return Err(BitError::InvalidSpan {
                bit_offset: self.bit_offset,
                bit_length: self.bit_length,
            });
        }
        if self.end_bit() > len * 8 {
            return Err(BitError::OutOfBounds { end_bit: self.end_bit(), len });
        }
        Ok(())
    }

    fn window(&self) -> (usize, usize, u32) {
        let first = self.byte_offset;
        let nbytes = (self.bit_offset as usize + self.bit_length as usize).div_ceil(8);
        let trailing = (nbytes * 8) as u32 - self.bit_offset as u32 - self.bit_length;
        (first, nbytes, trailing)
    }
}

/// Reads the addressed bits as a big-endian unsigned integer.
pub fn extract_bits(message: &[u8], span: BitSpan) -> Result<u64, BitError> {
    span.check(message.len())?;
    let (first, nbytes, trailing) = span.window();
    let acc = message[first..first + nbytes]
        .iter()
        .fold(0u128, |acc, &b| (acc << 8) | b as u128);
    Ok(((acc >> trailing) as u64) & span.mask())
}

/// Writes `value` into the addressed bits, leaving every other bit untouched.
pub fn insert_bits(message: &mut [u8], span: BitSpan, value: u64) -> Result<(), BitError> {
    span.check(message.len())?;
    if value & !span.mask() != 0 {
        return Err(BitError::ValueTooWide { value, bit_length: span.bit_length });
    }
    let (first, nbytes, trailing) = span.window();
    let window = &mut message[first..first + nbytes];
    let mut acc = window.iter().fold(0u128, |acc, &b| (acc << 8) | b as u128);
    let mask = (span.mask() as u128) << trailing;
    acc = (acc & !mask) | ((value as u128) << trailing);
    for byte in window.iter_mut().rev() {
        *byte = acc as u8;
        acc >>= 8;
    }
    Ok(())
}
