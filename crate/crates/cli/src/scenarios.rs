//! Scenario files compiled into the binary.

/// `(name, scenario JSON, semantic-db JSON)`, sorted by name.
pub const BUNDLED: &[(&str, &str, &str)] = &[
    ("corridor5", include_str!("../scenarios/corridor5.json"), include_str!("../scenarios/corridor5.db.json")),
    ("multi", include_str!("../scenarios/multi.json"), include_str!("../scenarios/multi.db.json")),
    ("nested", include_str!("../scenarios/nested.json"), include_str!("../scenarios/nested.db.json")),
    ("room1", include_str!("../scenarios/room1.json"), include_str!("../scenarios/room1.db.json")),
];

pub fn bundled(name: &str) -> Option<(&'static str, &'static str)> {
    BUNDLED.iter().find(|(n, _, _)| *n == name).map(|(_, s, d)| (*s, *d))
}

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _, _)| *n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_sorted_and_unique() {
        let n: Vec<_> = names().collect();
        let mut sorted = n.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(n, sorted);
    }

    #[test]
    fn bundled_files_parse() {
        for (name, scenario, db) in BUNDLED {
            let s = markerslam_core::sim::Scenario::parse(scenario).unwrap();
            assert_eq!(&s.name, name);
            markerslam_core::semantic::SemanticDb::parse(db).unwrap();
        }
    }
}
