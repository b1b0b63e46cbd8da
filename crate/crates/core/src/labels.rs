//! Part and organ label taxonomies.

use std::fmt;

/// Number of part classes a segmentation network predicts.
pub const NUM_CLASSES: usize = 3;

/// Structural part class of a point. Integer codes are stable across files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum PartLabel {
    Flower = 0,
    Leaf = 1,
    Stem = 2,
}

impl PartLabel {
    pub const ALL: [PartLabel; NUM_CLASSES] = [PartLabel::Flower, PartLabel::Leaf, PartLabel::Stem];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: i64) -> Option<PartLabel> {
        match code {
            0 => Some(PartLabel::Flower),
            1 => Some(PartLabel::Leaf),
            2 => Some(PartLabel::Stem),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PartLabel::Flower => "flower",
            PartLabel::Leaf => "leaf",
            PartLabel::Stem => "stem",
        }
    }
}

impl fmt::Display for PartLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fine-grained organ class carried by synthetic mesh triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OrganLabel {
    Leaflet,
    Petiole,
    Stem,
    Stipule,
    Petal,
    Sepal,
    Receptacle,
}

impl OrganLabel {
    pub const ALL: [OrganLabel; 7] = [
        OrganLabel::Leaflet,
        OrganLabel::Petiole,
        OrganLabel::Stem,
        OrganLabel::Stipule,
        OrganLabel::Petal,
        OrganLabel::Sepal,
        OrganLabel::Receptacle,
    ];

    pub fn part(self) -> PartLabel {
        merge_organ_label(self)
    }
}

/// Collapses an organ into the three-class part taxonomy: petioles and
/// stipules join stems, petals/sepals/receptacles form flowers.
pub fn merge_organ_label(organ: OrganLabel) -> PartLabel {
    match organ {
        OrganLabel::Leaflet => PartLabel::Leaf,
        OrganLabel::Petiole | OrganLabel::Stem | OrganLabel::Stipule => PartLabel::Stem,
        OrganLabel::Petal | OrganLabel::Sepal | OrganLabel::Receptacle => PartLabel::Flower,
    }
}

pub fn merge_organ_labels(fine: &[OrganLabel]) -> Vec<PartLabel> {
    fine.iter().copied().map(merge_organ_label).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stem_group_merges() {
        let merged = merge_organ_labels(&[OrganLabel::Petiole, OrganLabel::Stipule, OrganLabel::Stem]);
        assert_eq!(merged, vec![PartLabel::Stem; 3]);
    }

    #[test]
    fn flower_group_merges() {
        let merged = merge_organ_labels(&[OrganLabel::Sepal, OrganLabel::Petal, OrganLabel::Receptacle]);
        assert_eq!(merged, vec![PartLabel::Flower; 3]);
    }

    #[test]
    fn leaflet_is_leaf() {
        assert_eq!(merge_organ_labels(&[OrganLabel::Leaflet]), vec![PartLabel::Leaf]);
    }

    #[test]
    fn merge_is_surjective() {
        let mut image: Vec<PartLabel> = merge_organ_labels(&OrganLabel::ALL);
        image.sort();
        image.dedup();
        assert_eq!(image, PartLabel::ALL.to_vec());
    }

    #[test]
    fn codes_round_trip() {
        for label in PartLabel::ALL {
            assert_eq!(PartLabel::from_code(label.code() as i64), Some(label));
        }
        assert_eq!(PartLabel::from_code(3), None);
        assert_eq!(PartLabel::from_code(-1), None);
    }
}
