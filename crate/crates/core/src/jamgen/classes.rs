use serde::{Deserialize, Serialize};

use super::PrimitiveKind::{self, Lfm, Mtj, Pbnj, Pulse, Stj};
use crate::error::{bail, Result};

pub const NUM_CLASSES: usize = 21;

/// Complexity tier of a class: how many primitives it superposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    Single,
    Dual,
    Triple,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Single, Tier::Dual, Tier::Triple];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn components(self) -> usize {
        self as usize + 1
    }
}

/// One of the 21 jamming categories, identified by `1..=21`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JammingClass {
    id: u8,
    kinds: &'static [PrimitiveKind],
}

/// Ordered as singles, then the nine duals, then the seven triples.
pub static CLASSES: [JammingClass; NUM_CLASSES] = [
    JammingClass { id: 1, kinds: &[Stj] },
    JammingClass { id: 2, kinds: &[Mtj] },
    JammingClass { id: 3, kinds: &[Lfm] },
    JammingClass { id: 4, kinds: &[Pulse] },
    JammingClass { id: 5, kinds: &[Pbnj] },
    JammingClass { id: 6, kinds: &[Stj, Lfm] },
    JammingClass { id: 7, kinds: &[Stj, Pulse] },
    JammingClass { id: 8, kinds: &[Stj, Pbnj] },
    JammingClass { id: 9, kinds: &[Mtj, Lfm] },
    JammingClass { id: 10, kinds: &[Mtj, Pulse] },
    JammingClass { id: 11, kinds: &[Mtj, Pbnj] },
    JammingClass { id: 12, kinds: &[Lfm, Pulse] },
    JammingClass { id: 13, kinds: &[Lfm, Pbnj] },
    JammingClass { id: 14, kinds: &[Pulse, Pbnj] },
    JammingClass { id: 15, kinds: &[Stj, Lfm, Pulse] },
    JammingClass { id: 16, kinds: &[Stj, Lfm, Pbnj] },
    JammingClass { id: 17, kinds: &[Stj, Pulse, Pbnj] },
    JammingClass { id: 18, kinds: &[Mtj, Lfm, Pulse] },
    JammingClass { id: 19, kinds: &[Mtj, Lfm, Pbnj] },
    JammingClass { id: 20, kinds: &[Mtj, Pulse, Pbnj] },
    JammingClass { id: 21, kinds: &[Lfm, Pulse, Pbnj] },
];

impl JammingClass {
    pub fn from_id(id: u8) -> Result<Self> {
        if !(1..=NUM_CLASSES as u8).contains(&id) {
            bail!(Parameter, "class id {id} outside 1..={NUM_CLASSES}");
        }
        Ok(CLASSES[id as usize - 1])
    }

    /// Accepts names such as `"STJ+LFM"` (case-insensitive, any component order).
    pub fn from_name(name: &str) -> Result<Self> {
        let mut wanted: Vec<String> = name.split('+').map(|s| s.trim().to_ascii_uppercase()).collect();
        wanted.sort();
        for class in CLASSES.iter() {
            let mut have: Vec<String> = class.kinds.iter().map(|k| k.name().to_ascii_uppercase()).collect();
            have.sort();
            if have == wanted {
                return Ok(*class);
            }
        }
        bail!(Parameter, "unknown jamming class {name:?}")
    }

    pub fn id(&self) -> u8 {
        self.id
    }

    /// Zero-based label used by the classifier.
    pub fn index(&self) -> usize {
        self.id as usize - 1
    }

    pub fn kinds(&self) -> &'static [PrimitiveKind] {
        self.kinds
    }

    pub fn tier(&self) -> Tier {
        match self.kinds.len() {
            1 => Tier::Single,
            2 => Tier::Dual,
            _ => Tier::Triple,
        }
    }

    pub fn name(&self) -> String {
        self.kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join("+")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taxonomy_counts() {
        let count = |t| CLASSES.iter().filter(|c| c.tier() == t).count();
        assert_eq!(count(Tier::Single), 5);
        assert_eq!(count(Tier::Dual), 9);
        assert_eq!(count(Tier::Triple), 7);
        for (i, c) in CLASSES.iter().enumerate() {
            assert_eq!(c.index(), i);
            let mut k = c.kinds().to_vec();
            k.dedup();
            assert_eq!(k.len(), c.kinds().len());
        }
    }

    #[test]
    fn names_round_trip() {
        for c in CLASSES.iter() {
            assert_eq!(JammingClass::from_name(&c.name()).unwrap(), *c);
        }
        assert_eq!(JammingClass::from_name("pbnj+stj").unwrap().id(), 8);
        assert!(JammingClass::from_name("STJ+MTJ").is_err());
        assert!(JammingClass::from_id(0).is_err());
        assert!(JammingClass::from_id(22).is_err());
    }
}
