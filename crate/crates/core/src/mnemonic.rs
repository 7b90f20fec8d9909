//! Mnemonic passphrases mailed during owner registration.
//!
//! A phrase is a standard English BIP-39 phrase followed by one guard word.
//! The guard word is `Σ (2i + 1) · index(word_i) mod 2048` over the BIP-39
//! words. Every weight is odd, hence invertible mod 2^11, so changing any
//! single word (data or guard) always breaks the guard; the built-in BIP-39
//! checksum alone only catches a substitution with probability 15/16.

use std::fmt;

use bip39::{Language, Mnemonic};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const SUPPORTED_ENTROPY_LENGTHS: [usize; 5] = [16, 20, 24, 28, 32];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MnemonicError {
    #[error("unsupported entropy length {0}")]
    UnsupportedEntropyLength(usize),
    #[error("unknown word {0:?}")]
    UnknownWord(String),
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("wrong word count {0}")]
    WordCount(usize),
}

#[derive(Clone, PartialEq, Eq)]
pub struct MnemonicPhrase {
    words: Vec<&'static str>,
}

fn wordlist() -> &'static [&'static str; 2048] {
    Language::English.word_list()
}

fn guard_index(indices: impl Iterator<Item = u16>) -> u16 {
    let sum = indices
        .enumerate()
        .fold(0u64, |acc, (i, idx)| acc + (2 * i as u64 + 1) * idx as u64);
    (sum % 2048) as u16
}

impl MnemonicPhrase {
    pub fn from_entropy(entropy: &[u8]) -> Result<Self, MnemonicError> {
        if !SUPPORTED_ENTROPY_LENGTHS.contains(&entropy.len()) {
            return Err(MnemonicError::UnsupportedEntropyLength(entropy.len()));
        }
        let m = Mnemonic::from_entropy_in(Language::English, entropy)
            .map_err(|_| MnemonicError::UnsupportedEntropyLength(entropy.len()))?;
        let mut words: Vec<&'static str> = m.words().collect();
        let guard = guard_index(words.iter().map(|w| index_of(w).expect("wordlist word")));
        words.push(wordlist()[guard as usize]);
        Ok(Self { words })
    }

    pub fn parse(phrase: &str) -> Result<Self, MnemonicError> {
        let raw: Vec<&str> = phrase.split_whitespace().collect();
        let n = raw.len();
        if n < 2 || !SUPPORTED_ENTROPY_LENGTHS.iter().any(|l| l * 3 / 4 + 1 == n) {
            return Err(MnemonicError::WordCount(n));
        }
        let mut indices = Vec::with_capacity(n);
        for w in &raw {
            indices.push(index_of(w).ok_or_else(|| MnemonicError::UnknownWord(w.to_string()))?);
        }
        let (guard, data) = indices.split_last().expect("n >= 2");
        if guard_index(data.iter().copied()) != *guard {
            return Err(MnemonicError::ChecksumMismatch);
        }
        Mnemonic::parse_in_normalized(Language::English, &raw[..n - 1].join(" "))
            .map_err(|_| MnemonicError::ChecksumMismatch)?;
        Ok(Self {
            words: indices.iter().map(|&i| wordlist()[i as usize]).collect(),
        })
    }

    pub fn to_entropy(&self) -> Vec<u8> {
        let body = self.words[..self.words.len() - 1].join(" ");
        Mnemonic::parse_in_normalized(Language::English, &body)
            .expect("validated at construction")
            .to_entropy()
    }

    pub fn words(&self) -> &[&'static str] {
        &self.words
    }

    pub fn phrase(&self) -> String {
        self.words.join(" ")
    }
}

fn index_of(word: &str) -> Option<u16> {
    wordlist()
        .binary_search(&word)
        .ok()
        .map(|i| i as u16)
}

impl fmt::Debug for MnemonicPhrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MnemonicPhrase({} words)", self.words.len())
    }
}

impl Serialize for MnemonicPhrase {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.phrase())
    }
}

impl<'de> Deserialize<'de> for MnemonicPhrase {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}
