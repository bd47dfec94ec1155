//! Binary soft-biometric attributes and the eight attribute groups they induce.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

macro_rules! binary_label {
    ($(#[$doc:meta])* $name:ident, $column:literal, $zero:ident = $zero_tok:literal, $one:ident = $one_tok:literal) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $zero,
            $one,
        }

        impl $name {
            pub const ALL: [$name; 2] = [$name::$zero, $name::$one];

            pub fn token(self) -> &'static str {
                match self {
                    $name::$zero => $zero_tok,
                    $name::$one => $one_tok,
                }
            }

            pub fn bit(self) -> u8 {
                match self {
                    $name::$zero => 0,
                    $name::$one => 1,
                }
            }

            pub fn from_bit(bit: u8) -> Self {
                if bit & 1 == 0 { $name::$zero } else { $name::$one }
            }

            pub fn flipped(self) -> Self {
                Self::from_bit(self.bit() ^ 1)
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                match s {
                    $zero_tok => Ok($name::$zero),
                    $one_tok => Ok($name::$one),
                    other => Err(Error::UnknownLabel {
                        column: $column,
                        token: other.to_string(),
                    }),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.token())
            }
        }
    };
}

binary_label!(
    /// Gender label. Scores throughout the crate are P(male).
    Gender, "gender", Male = "male", Female = "female"
);
binary_label!(Age, "age", Young = "young", Old = "old");
// Declaration order gives the tie-break order black < white.
binary_label!(Race, "race", Black = "black", White = "white");
binary_label!(Partition, "partition", Train = "train", Test = "test");

impl Gender {
    /// Binary target with male = 1.
    pub fn target(self) -> f64 {
        match self {
            Gender::Male => 1.0,
            Gender::Female => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeLabels {
    pub gender: Gender,
    pub age: Age,
    pub race: Race,
}

impl AttributeLabels {
    pub fn new(gender: Gender, age: Age, race: Race) -> Self {
        Self { gender, age, race }
    }

    pub fn with_gender_flipped(self) -> Self {
        Self {
            gender: self.gender.flipped(),
            ..self
        }
    }

    pub fn group(self) -> AttributeGroup {
        group_of(self)
    }
}

/// One of the eight (gender, age, race) cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributeGroup(u8);

impl AttributeGroup {
    pub const COUNT: usize = 8;

    pub fn new(index: u8) -> Option<Self> {
        (usize::from(index) < Self::COUNT).then_some(Self(index))
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn all() -> impl Iterator<Item = AttributeGroup> {
        (0..Self::COUNT as u8).map(AttributeGroup)
    }

    pub fn labels(self) -> AttributeLabels {
        labels_of(self)
    }

    /// File-name token such as `Y-M-W` (age, gender, race initials).
    pub fn token(self) -> String {
        let l = self.labels();
        let age = match l.age {
            Age::Young => 'Y',
            Age::Old => 'O',
        };
        let gender = match l.gender {
            Gender::Male => 'M',
            Gender::Female => 'F',
        };
        let race = match l.race {
            Race::White => 'W',
            Race::Black => 'B',
        };
        format!("{age}-{gender}-{race}")
    }
}

impl fmt::Display for AttributeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

/// Bit layout: gender is bit 2, age bit 1, race bit 0.
pub fn group_of(labels: AttributeLabels) -> AttributeGroup {
    AttributeGroup((labels.gender.bit() << 2) | (labels.age.bit() << 1) | labels.race.bit())
}

pub fn labels_of(group: AttributeGroup) -> AttributeLabels {
    AttributeLabels {
        gender: Gender::from_bit(group.0 >> 2),
        age: Age::from_bit(group.0 >> 1),
        race: Race::from_bit(group.0),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;

    fn all_triples() -> Vec<AttributeLabels> {
        let mut out = Vec::new();
        for g in Gender::ALL {
            for a in Age::ALL {
                for r in Race::ALL {
                    out.push(AttributeLabels::new(g, a, r));
                }
            }
        }
        out
    }

    #[test]
    fn young_female_white_round_trips() {
        let l = AttributeLabels::new(Gender::Female, Age::Young, Race::White);
        assert_eq!(labels_of(group_of(l)), l);
        assert_eq!(group_of(l).token(), "Y-F-W");
    }

    #[test]
    fn eight_triples_cover_all_indices() {
        let idx: BTreeSet<usize> = all_triples().into_iter().map(|l| group_of(l).index()).collect();
        assert_eq!(idx, (0..8).collect());
        for g in AttributeGroup::all() {
            assert_eq!(group_of(labels_of(g)), g);
        }
    }

    #[test]
    fn gender_flip_changes_only_gender_coordinate() {
        for l in all_triples() {
            let a = group_of(l);
            let b = group_of(l.with_gender_flipped());
            assert_ne!(a, b);
            assert_eq!(a.index() ^ b.index(), 0b100);
            let lb = labels_of(b);
            assert_eq!((lb.age, lb.race), (l.age, l.race));
        }
    }

    #[test]
    fn tokens_parse_and_reject() {
        assert_eq!("male".parse::<Gender>().unwrap(), Gender::Male);
        assert_eq!("old".parse::<Age>().unwrap(), Age::Old);
        assert!(matches!("asian".parse::<Race>(), Err(Error::UnknownLabel { column: "race", .. })));
        assert!(Race::Black < Race::White);
    }

    #[test]
    fn group_tokens_are_distinct() {
        let tokens: BTreeSet<String> = AttributeGroup::all().map(|g| g.token()).collect();
        assert_eq!(tokens.len(), 8);
        assert!(tokens.contains("O-F-B"));
    }
}
