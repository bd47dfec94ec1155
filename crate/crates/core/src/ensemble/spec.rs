use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::derive_seed;

/// How member training sets are diversified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Same data, different initial weights.
    E1,
    /// Images of a disjoint random subject subset duplicated per member.
    E2,
    /// A random subset of black-labeled images duplicated per member.
    E3,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::E1, Scheme::E2, Scheme::E3];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "E1" => Ok(Scheme::E1),
            "E2" => Ok(Scheme::E2),
            "E3" => Ok(Scheme::E3),
            _ => Err(Error::Config(format!("unknown ensemble scheme {s:?} (expected E1, E2 or E3)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub scheme: Scheme,
    /// One seed per member; the member count is `seeds.len()`.
    pub seeds: Vec<u64>,
    /// Seed of the subject shuffle shared by all E2 members.
    pub resample_seed: u64,
    pub subject_fraction: f64,
    pub subject_duplication: usize,
    pub race_fraction: f64,
    pub race_duplication: usize,
}

pub const DEFAULT_MEMBERS: usize = 5;

impl EnsembleSpec {
    /// `t` members with seeds derived from `base_seed`.
    pub fn new(scheme: Scheme, t: usize, base_seed: u64) -> Self {
        Self {
            scheme,
            seeds: (0..t as u64).map(|i| derive_seed(base_seed, &[i])).collect(),
            resample_seed: derive_seed(base_seed, &[u64::MAX]),
            subject_fraction: 0.10,
            subject_duplication: 4,
            race_fraction: 0.10,
            race_duplication: 40,
        }
    }

    pub fn members(&self) -> usize {
        self.seeds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("an ensemble needs at least one member".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::Config("member seeds must be pairwise distinct".into()));
        }
        for (name, f) in [("subject", self.subject_fraction), ("race", self.race_fraction)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("{name} fraction must lie in (0, 1], got {f}")));
            }
        }
        Ok(())
    }
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self::new(Scheme::E1, DEFAULT_MEMBERS, 0)
    }
}
