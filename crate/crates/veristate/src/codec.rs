//! Canonical binary codec for every type that feeds a commitment, a
//! signature, or a file format.
//!
//! The encoding is deterministic and injective over the domain types:
//!
//! - unsigned integers: little-endian, fixed width
//! - fixed-size byte arrays: raw bytes
//! - variable-length byte strings and sequences: 4-byte little-endian
//!   count followed by the elements
//! - options: one tag byte (`0x00` absent, `0x01` present) followed by the
//!   value when present
//!
//! Decoding consumes from the front of a slice and rejects trailing or
//! missing bytes at the top-level entry points.

use thiserror::Error;

use crate::hash::Digest;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("buffer too short: need {need} more bytes, have {have}")]
    BufferTooShort { need: usize, have: usize },

    #[error("invalid tag {tag:#04x} for {type_name}")]
    InvalidTag { tag: u8, type_name: &'static str },

    #[error("trailing bytes after decoding: {0} left")]
    TrailingBytes(usize),

    #[error("length {0} exceeds decoding limit")]
    LengthOverflow(u32),

    #[error("invalid value for {0}")]
    InvalidValue(&'static str),
}

/// Upper bound on a single declared element count; guards decoders against
/// allocating on a corrupt length prefix.
const MAX_SEQUENCE_LEN: u32 = 1 << 24;

pub trait Encode {
    fn encode_into(&self, out: &mut Vec<u8>);

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }
}

pub trait Decode: Sized {
    /// Decodes from the front of `input`, advancing it past the consumed
    /// bytes.
    fn decode_from(input: &mut &[u8]) -> Result<Self, CodecError>;

    /// Decodes a complete buffer, rejecting trailing bytes.
    fn decode_all(mut input: &[u8]) -> Result<Self, CodecError> {
        let value = Self::decode_from(&mut input)?;
        if !input.is_empty() {
            return Err(CodecError::TrailingBytes(input.len()));
        }
        Ok(value)
    }
}

pub fn take<'a>(input: &mut &'a [u8], n: usize) -> Result<&'a [u8], CodecError> {
    if input.len() < n {
        return Err(CodecError::BufferTooShort {
            need: n - input.len(),
            have: input.len(),
        });
    }
    let (head, tail) = input.split_at(n);
    *input = tail;
    Ok(head)
}

// ===== integers =====

macro_rules! impl_uint_codec {
    ($($ty:ty),*) => {
        $(
            impl Encode for $ty {
                fn encode_into(&self, out: &mut Vec<u8>) {
                    out.extend_from_slice(&self.to_le_bytes());
                }
            }

            impl Decode for $ty {
                fn decode_from(input: &mut &[u8]) -> Result<Self, CodecError> {
                    let bytes = take(input, std::mem::size_of::<$ty>())?;
                    Ok(<$ty>::from_le_bytes(bytes.try_into().unwrap()))
                }
            }
        )*
    };
}

impl_uint_codec!(u8, u16, u32, u64, u128);

// ===== fixed-size byte arrays =====

impl<const N: usize> Encode for [u8; N] {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self);
    }
}

impl<const N: usize> Decode for [u8; N] {
    fn decode_from(input: &mut &[u8]) -> Result<Self, CodecError> {
        Ok(take(input, N)?.try_into().unwrap())
    }
}

impl Encode for Digest {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl Decode for Digest {
    fn decode_from(input: &mut &[u8]) -> Result<Self, CodecError> {
        Ok(Digest(<[u8; 32]>::decode_from(input)?))
    }
}

// ===== variable-length data =====

fn encode_len(len: usize, out: &mut Vec<u8>) {
    debug_assert!(len <= u32::MAX as usize);
    (len as u32).encode_into(out);
}

fn decode_len(input: &mut &[u8]) -> Result<usize, CodecError> {
    let len = u32::decode_from(input)?;
    if len > MAX_SEQUENCE_LEN {
        return Err(CodecError::LengthOverflow(len));
    }
    Ok(len as usize)
}

impl Encode for Vec<u8> {
    fn encode_into(&self, out: &mut Vec<u8>) {
        encode_len(self.len(), out);
        out.extend_from_slice(self);
    }
}

impl Decode for Vec<u8> {
    fn decode_from(input: &mut &[u8]) -> Result<Self, CodecError> {
        let len = decode_len(input)?;
        Ok(take(input, len)?.to_vec())
    }
}

impl<T: Encode> Encode for Option<T> {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            None => out.push(0),
            Some(value) => {
                out.push(1);
                value.encode_into(out);
            }
        }
    }
}

impl<T: Decode> Decode for Option<T> {
    fn decode_from(input: &mut &[u8]) -> Result<Self, CodecError> {
        match u8::decode_from(input)? {
            0 => Ok(None),
            1 => Ok(Some(T::decode_from(input)?)),
            tag => Err(CodecError::InvalidTag {
                tag,
                type_name: "Option",
            }),
        }
    }
}

/// Encodes a sequence as a 4-byte count followed by the elements.
pub fn encode_seq<T: Encode>(items: &[T], out: &mut Vec<u8>) {
    encode_len(items.len(), out);
    for item in items {
        item.encode_into(out);
    }
}

pub fn decode_seq<T: Decode>(input: &mut &[u8]) -> Result<Vec<T>, CodecError> {
    let len = decode_len(input)?;
    let mut items = Vec::with_capacity(len.min(1024));
    for _ in 0..len {
        items.push(T::decode_from(input)?);
    }
    Ok(items)
}
