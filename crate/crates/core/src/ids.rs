//! Identifier newtypes for the O*NET hierarchy and SOC occupations.

use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Self {
                Self(value.into().trim().to_string())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(value: &str) -> Self {
                Self::new(value)
            }
        }

        impl From<String> for $name {
            fn from(value: String) -> Self {
                Self::new(value)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Generalized work activity element id, e.g. `4.A.2.a.4`.
    GwaId
);
string_id!(
    /// Intermediate work activity id, e.g. `4.A.2.a.4.I09`.
    IwaId
);
string_id!(
    /// Detailed work activity id, e.g. `4.A.2.a.4.I09.D03`.
    DwaId
);
string_id!(
    /// O*NET task id.
    TaskId
);

/// A six-digit SOC occupation code in canonical `NN-NNNN` form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SocCode(String);

impl SocCode {
    /// Canonicalizes a SOC or O*NET-SOC code: trims whitespace and drops a
    /// trailing `.00` suffix.
    pub fn new(value: impl AsRef<str>) -> Self {
        let trimmed = value.as_ref().trim();
        let code = trimmed.strip_suffix(".00").unwrap_or(trimmed);
        Self(code.to_string())
    }

    /// Derives the SOC code of an O*NET-SOC code by cutting the detail suffix.
    pub fn from_onet_soc(onet_soc: &str) -> Self {
        let trimmed = onet_soc.trim();
        Self(trimmed.split('.').next().unwrap_or(trimmed).to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Two-digit major group prefix, e.g. `27`.
    pub fn major_group(&self) -> &str {
        self.0.get(..2).unwrap_or(&self.0)
    }

    /// Minor group prefix (two major digits plus the first detail digit), e.g. `27-3`.
    pub fn minor_group(&self) -> &str {
        self.0.get(..4).unwrap_or(&self.0)
    }

    pub fn is_military(&self) -> bool {
        self.major_group() == "55"
    }

    pub fn is_well_formed(&self) -> bool {
        let b = self.0.as_bytes();
        b.len() == 7
            && b[2] == b'-'
            && b.iter()
                .enumerate()
                .all(|(i, c)| i == 2 || c.is_ascii_digit())
    }
}

impl fmt::Display for SocCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SocCode {
    fn from(value: &str) -> Self {
        Self::new(value)
    }
}

impl Borrow<str> for SocCode {
    fn borrow(&self) -> &str {
        &self.0
    }
}
