//! Bundled TIMIT inventory and knowledge-based partitions.
//!
//! The phone-to-class tables ship as JSON data files (same schema as
//! serialized partitions) so users can override them; diphthongs and
//! semivowels sit in the vowel cluster, affricates with the fricatives, and
//! closures, pauses, epenthetic silence and the glottal stop in the silence
//! cluster.

use super::{BpcError, Partition, PhoneInventory};

const MANNER_JSON: &str = include_str!("data/manner.json");
const PLACE_JSON: &str = include_str!("data/place.json");

/// The 61 TIMIT phone symbols, alphabetically ordered.
pub const TIMIT_PHONES: [&str; 61] = [
    "aa", "ae", "ah", "ao", "aw", "ax", "ax-h", "axr", "ay", "b", "bcl", "ch", "d", "dcl", "dh",
    "dx", "eh", "el", "em", "en", "eng", "epi", "er", "ey", "f", "g", "gcl", "h#", "hh", "hv",
    "ih", "ix", "iy", "jh", "k", "kcl", "l", "m", "n", "ng", "nx", "ow", "oy", "p", "pau", "pcl",
    "q", "r", "s", "sh", "t", "tcl", "th", "uh", "uw", "ux", "v", "w", "y", "z", "zh",
];

/// The bundled 61-phone TIMIT inventory.
pub fn timit_inventory() -> PhoneInventory {
    PhoneInventory::new(TIMIT_PHONES.to_vec()).expect("bundled inventory is valid")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KnowledgeCriterion {
    Manner,
    Place,
}

/// Raw JSON text of a bundled mapping table.
pub fn bundled_table_json(criterion: KnowledgeCriterion) -> &'static str {
    match criterion {
        KnowledgeCriterion::Manner => MANNER_JSON,
        KnowledgeCriterion::Place => PLACE_JSON,
    }
}

/// Knowledge-based partition of `inventory` by manner or place of
/// articulation. Every inventory phone must be covered by the table;
/// clusters with no member in the inventory are dropped.
pub fn knowledge_partition(
    criterion: KnowledgeCriterion,
    inventory: &PhoneInventory,
) -> Result<Partition, BpcError> {
    let table = Partition::from_json_str(bundled_table_json(criterion))
        .expect("bundled table is valid JSON");
    table.restrict(inventory)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timit_inventory_has_61_distinct_phones() {
        let inv = timit_inventory();
        assert_eq!(inv.len(), 61);
    }

    #[test]
    fn manner_has_five_clusters_on_timit() {
        let part = knowledge_partition(KnowledgeCriterion::Manner, &timit_inventory()).unwrap();
        assert_eq!(part.num_clusters(), 5);
        let total: usize = (0..5).map(|c| part.members(c).len()).sum();
        assert_eq!(total, 61);
    }

    #[test]
    fn place_has_nine_clusters_on_timit() {
        let part = knowledge_partition(KnowledgeCriterion::Place, &timit_inventory()).unwrap();
        assert_eq!(part.num_clusters(), 9);
        let total: usize = (0..9).map(|c| part.members(c).len()).sum();
        assert_eq!(total, 61);
    }

    #[test]
    fn class_spot_checks() {
        let inv = timit_inventory();
        let manner = knowledge_partition(KnowledgeCriterion::Manner, &inv).unwrap();
        let name_of = |p: &str| manner.cluster_name(manner.cluster_of(p).unwrap()).to_string();
        assert_eq!(name_of("m"), "nasals");
        assert_eq!(name_of("aa"), "vowels");
        assert_eq!(name_of("h#"), "silence");
        assert_eq!(name_of("s"), "fricatives");
        assert_eq!(name_of("t"), "stops");
        // diphthongs and semivowels fall in the vowel cluster
        for p in ["ay", "aw", "oy", "ey", "ow", "w", "y", "l", "r", "el"] {
            assert_eq!(name_of(p), "vowels", "{p}");
        }

        let place = knowledge_partition(KnowledgeCriterion::Place, &inv).unwrap();
        let place_of = |p: &str| place.cluster_name(place.cluster_of(p).unwrap()).to_string();
        assert_eq!(place_of("p"), "bilabial");
        assert_eq!(place_of("f"), "labiodental");
        assert_eq!(place_of("th"), "dental");
        assert_eq!(place_of("s"), "alveolar");
        assert_eq!(place_of("sh"), "postalveolar");
        assert_eq!(place_of("k"), "velar");
        assert_eq!(place_of("hh"), "glottal");
        for p in ["ay", "w", "y", "l", "r"] {
            assert_eq!(place_of(p), "vowels", "{p}");
        }
    }

    #[test]
    fn restriction_to_a_sub_inventory_drops_empty_clusters() {
        let small = PhoneInventory::new(vec!["aa", "iy", "s", "m", "t", "h#"]).unwrap();
        let manner = knowledge_partition(KnowledgeCriterion::Manner, &small).unwrap();
        assert_eq!(manner.num_clusters(), 5);
        let place = knowledge_partition(KnowledgeCriterion::Place, &small).unwrap();
        // only alveolar, bilabial, vowels, silence remain
        assert_eq!(place.num_clusters(), 4);
    }

    #[test]
    fn unmapped_phone_is_a_coverage_error() {
        let odd = PhoneInventory::new(vec!["aa", "zz"]).unwrap();
        match knowledge_partition(KnowledgeCriterion::Manner, &odd) {
            Err(BpcError::Coverage(p)) => assert_eq!(p, "zz"),
            other => panic!("expected Coverage, got {other:?}"),
        }
    }
}
