//! Canonical field encoding.
//!
//! Every value that is hashed or encrypted is written as a sequence of
//! fields, each prefixed by its length as a big-endian `u16`. Integers are
//! big-endian. The same framing is used by the wire codec, which is what lets
//! the symbolic intruder split intercepted plaintexts back into fields.

use thiserror::Error;

use super::types::{IndexValue, KeyMaterial, NodeId, Nonce};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("input truncated")]
    Truncated,
    #[error("field has length {got}, expected {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("field value out of range")]
    BadValue,
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

#[derive(Debug, Default, Clone)]
pub struct FieldWriter {
    buf: Vec<u8>,
}

impl FieldWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on fields longer than `u16::MAX`; no protocol field comes close.
    pub fn bytes(mut self, field: &[u8]) -> Self {
        let len = u16::try_from(field.len()).expect("field longer than 65535 bytes");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(field);
        self
    }

    pub fn u8(self, v: u8) -> Self {
        self.bytes(&[v])
    }

    pub fn flag(self, v: bool) -> Self {
        self.u8(v as u8)
    }

    pub fn u32(self, v: u32) -> Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn u64(self, v: u64) -> Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn nonce(self, n: Nonce) -> Self {
        self.u32(n.0)
    }

    pub fn node(self, n: NodeId) -> Self {
        self.u32(n.wire())
    }

    pub fn key(self, k: &KeyMaterial) -> Self {
        self.bytes(k.as_bytes())
    }

    pub fn index(self, v: IndexValue) -> Self {
        self.bytes(v.as_bytes())
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub fn encode_fields(fields: &[&[u8]]) -> Vec<u8> {
    fields.iter().fold(FieldWriter::new(), |w, f| w.bytes(f)).finish()
}

#[derive(Debug, Clone)]
pub struct FieldReader<'a> {
    rest: &'a [u8],
}

impl<'a> FieldReader<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Self { rest: input }
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        if self.rest.len() < 2 {
            return Err(DecodeError::Truncated);
        }
        let len = u16::from_be_bytes([self.rest[0], self.rest[1]]) as usize;
        let body = &self.rest[2..];
        if body.len() < len {
            return Err(DecodeError::Truncated);
        }
        let (field, rest) = body.split_at(len);
        self.rest = rest;
        Ok(field)
    }

    fn fixed<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let f = self.bytes()?;
        <[u8; N]>::try_from(f).map_err(|_| DecodeError::BadLength { expected: N, got: f.len() })
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.fixed::<1>()?[0])
    }

    pub fn flag(&mut self) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(DecodeError::BadValue),
        }
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.fixed()?))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.fixed()?))
    }

    pub fn nonce(&mut self) -> Result<Nonce, DecodeError> {
        self.u32().map(Nonce)
    }

    pub fn node(&mut self) -> Result<NodeId, DecodeError> {
        NodeId::from_wire(self.u32()?).ok_or(DecodeError::BadValue)
    }

    pub fn key(&mut self) -> Result<KeyMaterial, DecodeError> {
        self.fixed().map(KeyMaterial::from_bytes)
    }

    pub fn index(&mut self) -> Result<IndexValue, DecodeError> {
        self.fixed().map(IndexValue)
    }

    pub fn is_empty(&self) -> bool {
        self.rest.is_empty()
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.rest.len() {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}

/// Splits `input` into fields if it is exactly a canonical encoding of two or more fields.
pub fn split_fields(input: &[u8]) -> Option<Vec<&[u8]>> {
    let mut reader = FieldReader::new(input);
    let mut out = Vec::new();
    while !reader.is_empty() {
        out.push(reader.bytes().ok()?);
    }
    (out.len() >= 2).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_is_length_prefixed_big_endian() {
        let enc = FieldWriter::new().u32(0x0102_0304).bytes(b"").u8(9).finish();
        assert_eq!(enc, vec![0, 4, 1, 2, 3, 4, 0, 0, 0, 1, 9]);
    }

    #[test]
    fn reader_round_trip_and_errors() {
        let enc = FieldWriter::new().u64(5).flag(true).finish();
        let mut r = FieldReader::new(&enc);
        assert_eq!(r.u64().unwrap(), 5);
        assert!(r.flag().unwrap());
        r.finish().unwrap();

        let mut r = FieldReader::new(&enc[..5]);
        assert_eq!(r.u64(), Err(DecodeError::Truncated));

        let mut r = FieldReader::new(&enc);
        assert_eq!(r.u32(), Err(DecodeError::BadLength { expected: 4, got: 8 }));
    }

    #[test]
    fn concatenation_is_unambiguous() {
        assert_ne!(encode_fields(&[b"ab", b"c"]), encode_fields(&[b"a", b"bc"]));
    }

    #[test]
    fn split_requires_exact_consumption() {
        let enc = encode_fields(&[b"ab", b"cde"]);
        assert_eq!(split_fields(&enc).unwrap(), vec![&b"ab"[..], &b"cde"[..]]);
        assert!(split_fields(&enc[..enc.len() - 1]).is_none());
        assert!(split_fields(&encode_fields(&[b"single"])).is_none());
    }
}
