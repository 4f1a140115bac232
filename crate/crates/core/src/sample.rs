//! Deterministic digest-based sampling: an object is in the sample when the
//! first byte of its SHA-1 digest, modulo `modulus`, equals `residue`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::object::ObjectId;

pub const DEFAULT_MODULUS: u32 = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct SampleFilter {
    modulus: u32,
    residue: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("modulus must be positive")]
    ZeroModulus,
    #[error("residue {residue} is not below modulus {modulus}")]
    ResidueOutOfRange { residue: u32, modulus: u32 },
    #[error("expected <residue>/<modulus>, got {0:?}")]
    Syntax(String),
}

impl SampleFilter {
    pub fn new(residue: u32, modulus: u32) -> Result<Self, SampleError> {
        if modulus == 0 {
            return Err(SampleError::ZeroModulus);
        }
        if residue >= modulus {
            return Err(SampleError::ResidueOutOfRange { residue, modulus });
        }
        Ok(Self { modulus, residue })
    }

    /// Accepts everything.
    pub fn full() -> Self {
        Self { modulus: 1, residue: 0 }
    }

    /// The 1/128 sample with residue 0.
    pub fn one_in_128() -> Self {
        Self { modulus: DEFAULT_MODULUS, residue: 0 }
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn residue(&self) -> u32 {
        self.residue
    }

    pub fn accepts(&self, id: &ObjectId) -> bool {
        sample_accepts(id, self)
    }

    /// Scales a sampled count up to the full population.
    pub fn extrapolate(&self, count: u64) -> u64 {
        extrapolate(count, self)
    }
}

impl Default for SampleFilter {
    fn default() -> Self {
        Self::full()
    }
}

pub fn sample_accepts(id: &ObjectId, filter: &SampleFilter) -> bool {
    u32::from(id.first_byte()) % filter.modulus == filter.residue
}

pub fn extrapolate(count: u64, filter: &SampleFilter) -> u64 {
    count * u64::from(filter.modulus)
}

impl FromStr for SampleFilter {
    type Err = SampleError;

    /// Parses `<residue>/<modulus>`, e.g. `0/128`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (residue, modulus) = s.split_once('/').ok_or_else(|| SampleError::Syntax(s.into()))?;
        let parse = |t: &str| t.trim().parse::<u32>().map_err(|_| SampleError::Syntax(s.into()));
        Self::new(parse(residue)?, parse(modulus)?)
    }
}

impl fmt::Display for SampleFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.residue, self.modulus)
    }
}
