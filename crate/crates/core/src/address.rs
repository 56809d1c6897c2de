//! Canonical 20-byte account addresses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A 20-byte account or contract address.
///
/// Parsing accepts either letter case; `Display` always renders the
/// canonical `0x` + 40 lowercase hex digit form.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Address([u8; 20]);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("address must start with 0x")]
    MissingPrefix,
    #[error("address must have 40 hex digits, got {0}")]
    BadLength(usize),
    #[error("address contains a non-hex digit")]
    NotHex,
}

impl Address {
    pub const ZERO: Address = Address([0u8; 20]);

    pub const fn from_bytes(bytes: [u8; 20]) -> Self {
        Address(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    /// Deterministic synthetic address derived from an index. Used by the
    /// fixture generators so that every generated address is distinct.
    pub fn synthetic(tag: u32, index: u64) -> Self {
        let mut bytes = [0u8; 20];
        bytes[..4].copy_from_slice(&tag.to_be_bytes());
        bytes[12..].copy_from_slice(&index.to_be_bytes());
        Address(bytes)
    }
}

impl FromStr for Address {
    type Err = AddressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let digits = s
            .strip_prefix("0x")
            .or_else(|| s.strip_prefix("0X"))
            .ok_or(AddressError::MissingPrefix)?;
        if digits.len() != 40 {
            return Err(AddressError::BadLength(digits.len()));
        }
        let mut bytes = [0u8; 20];
        hex::decode_to_slice(digits, &mut bytes).map_err(|_| AddressError::NotHex)?;
        Ok(Address(bytes))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_insensitive_and_idempotent() {
        let mixed: Address = "0x18dd4e0eb8699eA4FeE238dE41ECfb95e32272f8"
            .parse()
            .unwrap();
        let lower: Address = "0x18dd4e0eb8699ea4fee238de41ecfb95e32272f8"
            .parse()
            .unwrap();
        assert_eq!(mixed, lower);
        let rendered = mixed.to_string();
        assert_eq!(rendered, "0x18dd4e0eb8699ea4fee238de41ecfb95e32272f8");
        assert_eq!(rendered.parse::<Address>().unwrap().to_string(), rendered);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!("18dd".parse::<Address>(), Err(AddressError::MissingPrefix));
        assert_eq!("0x18dd".parse::<Address>(), Err(AddressError::BadLength(4)));
        assert_eq!(
            "0xzzdd4e0eb8699ea4fee238de41ecfb95e32272f8".parse::<Address>(),
            Err(AddressError::NotHex)
        );
    }
}
