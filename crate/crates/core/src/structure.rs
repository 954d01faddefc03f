//! The three archaeological structure classes scored by the toolkit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A target structure class. Every tile carries one binary mask per class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Aguada,
    Building,
    Platform,
}

impl Structure {
    pub const ALL: [Structure; 3] = [Structure::Aguada, Structure::Building, Structure::Platform];

    /// Column order used by leaderboards: aguadas, platforms, buildings.
    pub const LEADERBOARD_ORDER: [Structure; 3] =
        [Structure::Aguada, Structure::Platform, Structure::Building];

    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Aguada => "aguada",
            Structure::Building => "building",
            Structure::Platform => "platform",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown structure class `{0}` (expected aguada, building or platform)")]
pub struct UnknownStructure(pub String);

impl FromStr for Structure {
    type Err = UnknownStructure;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "aguada" | "aguadas" => Ok(Structure::Aguada),
            "building" | "buildings" => Ok(Structure::Building),
            "platform" | "platforms" => Ok(Structure::Platform),
            _ => Err(UnknownStructure(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_singular_and_plural() {
        assert_eq!("Aguadas".parse::<Structure>().unwrap(), Structure::Aguada);
        assert_eq!("platform".parse::<Structure>().unwrap(), Structure::Platform);
        assert!("road".parse::<Structure>().is_err());
    }
}
