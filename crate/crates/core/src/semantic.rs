//! Dictionary of topological affiliations: which structural element each
//! marker is attached to, and which places each wall bounds.
//!
//! ```json
//! {"markers":[{"id":101,"element":"W1","kind":"wall"}],
//!  "places":[{"id":"R1","kind":"room","walls":["W1","W2","W3","W4"]}]}
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticError {
    #[error("malformed semantic database: {0}")]
    Malformed(String),
    #[error("marker {0} is assigned more than once")]
    DuplicateMarker(u32),
    #[error("element {element} is declared as both wall and door")]
    ConflictingElementKind { element: String },
    #[error("place {0} is declared more than once")]
    DuplicatePlace(String),
    #[error("room {place} lists {count} walls, expected 4")]
    RoomWallCount { place: String, count: usize },
    #[error("corridor {place} lists {count} walls, expected 2")]
    CorridorWallCount { place: String, count: usize },
    #[error("place {place} lists wall {wall} twice")]
    RepeatedWall { place: String, wall: String },
    #[error("place {place} references unknown element {element}")]
    DanglingElement { place: String, element: String },
    #[error("place {place} references {element}, which is a door")]
    NotAWall { place: String, element: String },
    #[error("unknown marker {0}")]
    UnknownMarker(u32),
    #[error("unknown element {0}")]
    UnknownElement(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Wall,
    Door,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceKind {
    Room,
    Corridor,
}

impl PlaceKind {
    pub fn wall_count(self) -> usize {
        match self {
            PlaceKind::Room => 4,
            PlaceKind::Corridor => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkerEntry {
    id: u32,
    element: String,
    kind: ElementKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlaceEntry {
    id: String,
    kind: PlaceKind,
    walls: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DbFile {
    markers: Vec<MarkerEntry>,
    #[serde(default)]
    places: Vec<PlaceEntry>,
}

/// Validated semantic database. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SemanticDb {
    marker_to_element: BTreeMap<u32, (String, ElementKind)>,
    element_kinds: BTreeMap<String, ElementKind>,
    element_to_place: BTreeMap<String, Vec<(String, PlaceKind)>>,
    place_kinds: BTreeMap<String, PlaceKind>,
    place_walls: BTreeMap<String, Vec<String>>,
}

impl SemanticDb {
    pub fn parse(text: &str) -> Result<Self, SemanticError> {
        let file: DbFile = serde_json::from_str(text).map_err(|e| SemanticError::Malformed(e.to_string()))?;
        Self::build(file)
    }

    fn build(file: DbFile) -> Result<Self, SemanticError> {
        let mut db = SemanticDb::default();
        for m in file.markers {
            if db.marker_to_element.contains_key(&m.id) {
                return Err(SemanticError::DuplicateMarker(m.id));
            }
            match db.element_kinds.get(&m.element) {
                Some(kind) if *kind != m.kind => {
                    return Err(SemanticError::ConflictingElementKind { element: m.element });
                }
                _ => {
                    db.element_kinds.insert(m.element.clone(), m.kind);
                }
            }
            db.marker_to_element.insert(m.id, (m.element, m.kind));
        }
        for p in file.places {
            if db.place_kinds.contains_key(&p.id) {
                return Err(SemanticError::DuplicatePlace(p.id));
            }
            let expected = p.kind.wall_count();
            if p.walls.len() != expected {
                return Err(match p.kind {
                    PlaceKind::Room => SemanticError::RoomWallCount { place: p.id, count: p.walls.len() },
                    PlaceKind::Corridor => SemanticError::CorridorWallCount { place: p.id, count: p.walls.len() },
                });
            }
            let mut seen = BTreeSet::new();
            for w in &p.walls {
                if !seen.insert(w) {
                    return Err(SemanticError::RepeatedWall { place: p.id.clone(), wall: w.clone() });
                }
                match db.element_kinds.get(w) {
                    None => return Err(SemanticError::DanglingElement { place: p.id.clone(), element: w.clone() }),
                    Some(ElementKind::Door) => {
                        return Err(SemanticError::NotAWall { place: p.id.clone(), element: w.clone() })
                    }
                    Some(ElementKind::Wall) => {}
                }
            }
            for w in &p.walls {
                db.element_to_place.entry(w.clone()).or_default().push((p.id.clone(), p.kind));
            }
            db.place_kinds.insert(p.id.clone(), p.kind);
            db.place_walls.insert(p.id, p.walls);
        }
        for places in db.element_to_place.values_mut() {
            places.sort();
        }
        Ok(db)
    }

    pub fn to_json(&self) -> String {
        let file = DbFile {
            markers: self
                .marker_to_element
                .iter()
                .map(|(id, (element, kind))| MarkerEntry { id: *id, element: element.clone(), kind: *kind })
                .collect(),
            places: self
                .place_kinds
                .iter()
                .map(|(id, kind)| PlaceEntry { id: id.clone(), kind: *kind, walls: self.place_walls[id].clone() })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("db serializes")
    }

    pub fn element_of(&self, marker: u32) -> Result<(&str, ElementKind), SemanticError> {
        self.marker_to_element.get(&marker).map(|(e, k)| (e.as_str(), *k)).ok_or(SemanticError::UnknownMarker(marker))
    }

    /// Places bounded by `element`, sorted by id. Doors and unaffiliated
    /// walls yield an empty list.
    pub fn places_of(&self, element: &str) -> Result<&[(String, PlaceKind)], SemanticError> {
        if !self.element_kinds.contains_key(element) {
            return Err(SemanticError::UnknownElement(element.to_string()));
        }
        Ok(self.element_to_place.get(element).map_or(&[], |v| v.as_slice()))
    }

    pub fn contains_marker(&self, marker: u32) -> bool {
        self.marker_to_element.contains_key(&marker)
    }

    pub fn markers(&self) -> impl Iterator<Item = u32> + '_ {
        self.marker_to_element.keys().copied()
    }

    /// Elements with their kinds, sorted by id.
    pub fn elements(&self) -> impl Iterator<Item = (&str, ElementKind)> + '_ {
        self.element_kinds.iter().map(|(e, k)| (e.as_str(), *k))
    }

    /// Markers attached to `element`, ascending.
    pub fn markers_of(&self, element: &str) -> Vec<u32> {
        self.marker_to_element.iter().filter(|(_, (e, _))| e == element).map(|(id, _)| *id).collect()
    }

    /// Places with kind and wall list, sorted by id.
    pub fn places(&self) -> impl Iterator<Item = (&str, PlaceKind, &[String])> + '_ {
        self.place_kinds.iter().map(|(id, kind)| (id.as_str(), *kind, self.place_walls[id].as_slice()))
    }
}
