//! Canonical binary encoding.
//!
//! Every hash in the system is computed over this encoding, so it must be
//! unambiguous: integers are 8-byte little-endian, byte strings carry an
//! 8-byte length prefix, scalars and group elements are fixed 32-byte
//! canonical encodings, and sequences are a count followed by their items.
//! See `FORMAT.md` at the repository root for the byte-level layout of every
//! structure.

use alloc::vec::Vec;

use thiserror::Error;

/// Upper bound on any decoded sequence length. Keeps hostile inputs from
/// requesting huge allocations.
pub const MAX_SEQUENCE_LEN: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("trailing bytes after value")]
    TrailingBytes,
    #[error("non-canonical scalar")]
    InvalidScalar,
    #[error("invalid group element encoding")]
    InvalidElement,
    #[error("sequence length {0} exceeds limit")]
    LengthLimit(u64),
    #[error("unknown tag {0}")]
    UnknownTag(u8),
    #[error("value out of range")]
    OutOfRange,
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(cap: usize) -> Self {
        Self {
            buf: Vec::with_capacity(cap),
        }
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Writes a sequence count.
    pub fn put_len(&mut self, n: usize) {
        self.put_u64(n as u64);
    }

    /// Length-prefixed byte string.
    pub fn put_bytes(&mut self, bytes: &[u8]) {
        self.put_len(bytes.len());
        self.buf.extend_from_slice(bytes);
    }

    /// Fixed-width bytes, no prefix.
    pub fn put_fixed(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn put<T: Encode + ?Sized>(&mut self, value: &T) {
        value.encode_to(self);
    }

    pub fn put_seq<T: Encode>(&mut self, items: &[T]) {
        self.put_len(items.len());
        for item in items {
            item.encode_to(self);
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < n {
            return Err(DecodeError::UnexpectedEnd);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn take_array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn get_u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn get_u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take_array()?))
    }

    /// Reads a sequence count and checks it against [`MAX_SEQUENCE_LEN`] and
    /// the bytes left, given the minimum encoded size of one item.
    pub fn get_len(&mut self, min_item_size: usize) -> Result<usize, DecodeError> {
        let n = self.get_u64()?;
        if n > MAX_SEQUENCE_LEN {
            return Err(DecodeError::LengthLimit(n));
        }
        let n = n as usize;
        if n.saturating_mul(min_item_size.max(1)) > self.remaining() && min_item_size > 0 {
            return Err(DecodeError::UnexpectedEnd);
        }
        Ok(n)
    }

    pub fn get_bytes(&mut self) -> Result<Vec<u8>, DecodeError> {
        let n = self.get_len(1)?;
        Ok(self.take(n)?.to_vec())
    }

    pub fn get<T: Decode>(&mut self) -> Result<T, DecodeError> {
        T::decode_from(self)
    }

    pub fn get_seq<T: Decode>(&mut self) -> Result<Vec<T>, DecodeError> {
        let n = self.get_len(T::MIN_ENCODED_LEN)?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(T::decode_from(self)?);
        }
        Ok(out)
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::TrailingBytes)
        }
    }
}

pub trait Encode {
    fn encode_to(&self, w: &mut Writer);

    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_to(&mut w);
        w.into_vec()
    }
}

pub trait Decode: Sized {
    /// Smallest possible encoding, used to bound sequence allocations.
    const MIN_ENCODED_LEN: usize = 1;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError>;

    /// Decodes a complete value, rejecting trailing bytes.
    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let v = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(v)
    }
}

impl Encode for u64 {
    fn encode_to(&self, w: &mut Writer) {
        w.put_u64(*self);
    }
}

impl Decode for u64 {
    const MIN_ENCODED_LEN: usize = 8;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        r.get_u64()
    }
}

impl Encode for [u8; 32] {
    fn encode_to(&self, w: &mut Writer) {
        w.put_fixed(self);
    }
}

impl Decode for [u8; 32] {
    const MIN_ENCODED_LEN: usize = 32;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        r.take_array()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers_are_little_endian() {
        let mut w = Writer::new();
        w.put_u64(0x0102);
        assert_eq!(w.as_slice(), &[2, 1, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn bytes_round_trip() {
        let mut w = Writer::new();
        w.put_bytes(b"hello");
        w.put_u8(7);
        let bytes = w.into_vec();
        let mut r = Reader::new(&bytes);
        assert_eq!(r.get_bytes().unwrap(), b"hello");
        assert_eq!(r.get_u8().unwrap(), 7);
        r.finish().unwrap();
    }

    #[test]
    fn oversized_length_rejected() {
        let mut w = Writer::new();
        w.put_u64(u64::MAX);
        let bytes = w.into_vec();
        let mut r = Reader::new(&bytes);
        assert!(matches!(r.get_bytes(), Err(DecodeError::LengthLimit(_))));
    }

    #[test]
    fn truncated_length_rejected() {
        let mut w = Writer::new();
        w.put_u64(10);
        w.put_fixed(&[1, 2, 3]);
        let bytes = w.into_vec();
        assert_eq!(
            Reader::new(&bytes).get_bytes(),
            Err(DecodeError::UnexpectedEnd)
        );
    }

    #[test]
    fn trailing_bytes_rejected() {
        let bytes = [0u8; 9];
        assert_eq!(u64::decode(&bytes), Err(DecodeError::TrailingBytes));
    }
}
