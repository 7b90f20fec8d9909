//! Canonical binary encoding used for everything that gets signed or hashed.
//!
//! The layout is field-ordered and length-prefixed:
//!
//! | value        | bytes                                            |
//! |--------------|--------------------------------------------------|
//! | `u8` tag     | 1 byte                                           |
//! | `u64`        | 8 bytes, big endian                              |
//! | byte string  | `u32` big-endian length, then the bytes          |
//! | string       | as byte string, UTF-8                            |
//! | option       | `0x00`, or `0x01` followed by the value          |
//! | list         | `u32` count, then each element                   |
//! | string map   | `u32` count, then key/value strings, keys strictly ascending |
//!
//! Decoding is strict: non-canonical input (unsorted map keys, bad option
//! markers, trailing bytes) is rejected, so `encode(decode(x)) == x` for every
//! accepted `x`. See `docs/FORMAT.md` for the per-type field order.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("invalid {what} at offset {offset}")]
    Invalid { what: &'static str, offset: usize },
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts an encoding with a domain separation label.
    pub fn with_domain(domain: &str) -> Self {
        let mut enc = Self::new();
        enc.str(domain);
        enc
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        let len = u32::try_from(v.len()).expect("field longer than u32::MAX");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(v);
        self
    }

    pub fn str(&mut self, v: &str) -> &mut Self {
        self.bytes(v.as_bytes())
    }

    pub fn count(&mut self, n: usize) -> &mut Self {
        let n = u32::try_from(n).expect("list longer than u32::MAX");
        self.buf.extend_from_slice(&n.to_be_bytes());
        self
    }

    pub fn opt_u64(&mut self, v: Option<u64>) -> &mut Self {
        match v {
            None => self.u8(0),
            Some(v) => self.u8(1).u64(v),
        }
    }

    pub fn str_map(&mut self, map: &BTreeMap<String, String>) -> &mut Self {
        self.count(map.len());
        for (k, v) in map {
            self.str(k).str(v);
        }
        self
    }

    pub fn raw(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }
}

pub struct Decoder<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Self { input, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.input.len())
            .ok_or(DecodeError::Truncated(self.pos))?;
        let out = &self.input[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn invalid(&self, what: &'static str) -> DecodeError {
        DecodeError::Invalid {
            what,
            offset: self.pos,
        }
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn i64(&mut self) -> Result<i64, DecodeError> {
        let b = self.take(8)?;
        Ok(i64::from_be_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn count(&mut self) -> Result<usize, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.count()?;
        self.take(len)
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let b = self.bytes()?;
        b.try_into().map_err(|_| self.invalid("fixed-length field"))
    }

    pub fn string(&mut self) -> Result<String, DecodeError> {
        let b = self.bytes()?;
        std::str::from_utf8(b)
            .map(str::to_owned)
            .map_err(|_| self.invalid("utf-8 string"))
    }

    /// Consumes a domain label and checks it matches.
    pub fn expect_domain(&mut self, domain: &str) -> Result<(), DecodeError> {
        let got = self.bytes()?;
        if got == domain.as_bytes() {
            Ok(())
        } else {
            Err(self.invalid("domain label"))
        }
    }

    pub fn opt_u64(&mut self) -> Result<Option<u64>, DecodeError> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(self.u64()?)),
            _ => Err(self.invalid("option marker")),
        }
    }

    pub fn str_map(&mut self) -> Result<BTreeMap<String, String>, DecodeError> {
        let n = self.count()?;
        let mut map = BTreeMap::new();
        let mut last: Option<String> = None;
        for _ in 0..n {
            let k = self.string()?;
            if last.as_ref().is_some_and(|prev| *prev >= k) {
                return Err(self.invalid("map key order"));
            }
            let v = self.string()?;
            last = Some(k.clone());
            map.insert(k, v);
        }
        Ok(map)
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.input.len() - self.pos {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_round_trip_and_strictness() {
        let mut m = BTreeMap::new();
        m.insert("b".to_string(), "2".to_string());
        m.insert("a".to_string(), "1".to_string());
        let mut enc = Encoder::new();
        enc.str_map(&m).opt_u64(Some(7)).opt_u64(None);
        let bytes = enc.finish();

        let mut dec = Decoder::new(&bytes);
        assert_eq!(dec.str_map().unwrap(), m);
        assert_eq!(dec.opt_u64().unwrap(), Some(7));
        assert_eq!(dec.opt_u64().unwrap(), None);
        dec.finish().unwrap();

        // keys written out of order are rejected
        let mut enc = Encoder::new();
        enc.count(2).str("b").str("2").str("a").str("1");
        let bytes = enc.finish();
        assert!(Decoder::new(&bytes).str_map().is_err());
    }

    #[test]
    fn truncated_and_trailing() {
        let mut enc = Encoder::new();
        enc.str("hello");
        let bytes = enc.finish();
        assert_eq!(
            Decoder::new(&bytes[..6]).string(),
            Err(DecodeError::Truncated(4))
        );
        let mut padded = bytes.clone();
        padded.push(0);
        let mut dec = Decoder::new(&padded);
        dec.string().unwrap();
        assert_eq!(dec.finish(), Err(DecodeError::Trailing(1)));
    }

    #[test]
    fn huge_length_prefix_is_truncation_not_panic() {
        let bytes = [0xff, 0xff, 0xff, 0xff, 1, 2];
        assert!(matches!(
            Decoder::new(&bytes).bytes(),
            Err(DecodeError::Truncated(_))
        ));
    }
}
