use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the four collectives, identified by roman numeral.
///
/// Ordering follows the numeral, which is also the tie-break order for
/// simultaneous hub arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CollectiveId {
    I,
    II,
    III,
    IV,
}

impl CollectiveId {
    pub const ALL: [CollectiveId; 4] = [CollectiveId::I, CollectiveId::II, CollectiveId::III, CollectiveId::IV];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CollectiveId::I => "I",
            CollectiveId::II => "II",
            CollectiveId::III => "III",
            CollectiveId::IV => "IV",
        }
    }
}

impl fmt::Display for CollectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CollectiveId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(CollectiveId::I),
            "II" | "2" => Ok(CollectiveId::II),
            "III" | "3" => Ok(CollectiveId::III),
            "IV" | "4" => Ok(CollectiveId::IV),
            other => Err(format!("unknown collective '{other}'")),
        }
    }
}

/// Target identifier, 0..16 within a trial component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetId(pub u8);

impl TargetId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TargetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roman_roundtrip() {
        for c in CollectiveId::ALL {
            assert_eq!(c.as_str().parse::<CollectiveId>().unwrap(), c);
            assert_eq!(CollectiveId::from_index(c.index()), Some(c));
        }
        assert!("V".parse::<CollectiveId>().is_err());
        assert!(CollectiveId::I < CollectiveId::IV);
    }
}
