use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Activation bitwidth of one feature map.
///
/// `Full` is the "no quantization" sentinel (32-bit float storage).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bitwidth {
    Two,
    Four,
    Eight,
    Full,
}

impl Bitwidth {
    /// Candidate set used on the target libraries, highest first.
    pub const CANDIDATES: [Bitwidth; 3] = [Bitwidth::Eight, Bitwidth::Four, Bitwidth::Two];

    pub fn bits(self) -> u32 {
        match self {
            Bitwidth::Two => 2,
            Bitwidth::Four => 4,
            Bitwidth::Eight => 8,
            Bitwidth::Full => 32,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            2 => Ok(Bitwidth::Two),
            4 => Ok(Bitwidth::Four),
            8 => Ok(Bitwidth::Eight),
            32 => Ok(Bitwidth::Full),
            other => Err(Error::UnknownBitwidth(other)),
        }
    }

    /// Number of quantization levels, `None` for the float sentinel.
    pub fn levels(self) -> Option<u32> {
        match self {
            Bitwidth::Full => None,
            b => Some((1u32 << b.bits()) - 1),
        }
    }

    pub fn is_candidate(self) -> bool {
        !matches!(self, Bitwidth::Full)
    }
}

impl fmt::Display for Bitwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

impl Serialize for Bitwidth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u32(self.bits())
    }
}

impl<'de> Deserialize<'de> for Bitwidth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = u32::deserialize(d)?;
        Bitwidth::from_bits(raw).map_err(serde::de::Error::custom)
    }
}

/// Parses a comma separated bitwidth list such as `8,4,2`.
pub fn parse_candidates(list: &str) -> Result<Vec<Bitwidth>> {
    let mut out = Vec::new();
    for part in list.split(',') {
        let part = part.trim();
        let bits: u32 = part
            .parse()
            .map_err(|_| Error::Config(format!("bad bitwidth '{part}'")))?;
        let b = Bitwidth::from_bits(bits)?;
        if !b.is_candidate() {
            return Err(Error::UnknownBitwidth(bits));
        }
        if !out.contains(&b) {
            out.push(b);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("empty candidate list".into()));
    }
    Ok(out)
}
