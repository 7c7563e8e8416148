//! Layered scene graph: keyframes and markers, walls and doors, rooms and
//! corridors, plus the edges between them.

use serde::{Deserialize, Serialize};

use super::graph::{Factor, Graph};
use super::SlamError;
use crate::semantic::PlaceKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub tool: String,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeEntry {
    pub id: usize,
    pub stamp: f64,
    pub t: [f64; 3],
    pub q: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerEntry {
    pub id: u32,
    pub t: [f64; 3],
    pub q: [f64; 4],
    pub first_seen: f64,
    pub last_seen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallEntry {
    pub id: String,
    pub normal: [f64; 3],
    pub offset: f64,
    pub anchor: [f64; 3],
    pub markers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoorEntry {
    pub id: String,
    pub t: [f64; 3],
    pub q: [f64; 4],
    pub markers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaceEntry {
    pub id: String,
    pub center: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<[f64; 3]>,
    pub walls: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layers {
    pub keyframes: Vec<KeyframeEntry>,
    pub markers: Vec<MarkerEntry>,
    pub walls: Vec<WallEntry>,
    pub doors: Vec<DoorEntry>,
    pub rooms: Vec<PlaceEntry>,
    pub corridors: Vec<PlaceEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Affiliation,
    Observation,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneGraph {
    pub header: Header,
    pub layers: Layers,
    pub edges: Vec<Edge>,
}

/// Layer sizes, for summaries and checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerCounts {
    pub keyframes: usize,
    pub markers: usize,
    pub walls: usize,
    pub doors: usize,
    pub rooms: usize,
    pub corridors: usize,
}

fn arr(v: &nalgebra::Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl SceneGraph {
    pub fn from_graph(graph: &Graph, header: Header) -> Self {
        let mut layers = Layers::default();
        for kf in &graph.keyframes {
            let (t, q) = kf.pose.canonical_components();
            layers.keyframes.push(KeyframeEntry { id: kf.id, stamp: kf.stamp, t, q });
        }
        for m in &graph.markers {
            let (t, q) = m.pose.canonical_components();
            layers.markers.push(MarkerEntry { id: m.id, t, q, first_seen: m.first_seen, last_seen: m.last_seen });
        }
        let mut edges = Vec::new();
        for w in &graph.walls {
            layers.walls.push(WallEntry {
                id: w.id.clone(),
                normal: arr(&w.normal),
                offset: w.offset,
                anchor: arr(&w.anchor),
                markers: w.markers.clone(),
            });
            for m in &w.markers {
                edges.push(Edge {
                    from: format!("marker:{m}"),
                    to: format!("wall:{}", w.id),
                    kind: EdgeKind::Affiliation,
                });
            }
        }
        for d in &graph.doors {
            let (t, q) = d.pose.canonical_components();
            layers.doors.push(DoorEntry { id: d.id.clone(), t, q, markers: d.markers.clone() });
            for m in &d.markers {
                edges.push(Edge {
                    from: format!("marker:{m}"),
                    to: format!("door:{}", d.id),
                    kind: EdgeKind::Affiliation,
                });
            }
        }
        for p in &graph.places {
            let entry = PlaceEntry {
                id: p.id.clone(),
                center: arr(&p.center),
                axis: p.axis.as_ref().map(arr),
                walls: p.walls.clone(),
            };
            let prefix = match p.kind {
                PlaceKind::Room => {
                    layers.rooms.push(entry);
                    "room"
                }
                PlaceKind::Corridor => {
                    layers.corridors.push(entry);
                    "corridor"
                }
            };
            for w in &p.walls {
                edges.push(Edge {
                    from: format!("wall:{w}"),
                    to: format!("{prefix}:{}", p.id),
                    kind: EdgeKind::Affiliation,
                });
            }
        }
        for f in &graph.factors {
            if let Factor::MarkerObs { kf, marker, .. } | Factor::LoopClosure { kf, marker, .. } = f {
                edges.push(Edge {
                    from: format!("kf:{kf}"),
                    to: format!("marker:{marker}"),
                    kind: EdgeKind::Observation,
                });
            }
        }
        edges.sort();
        edges.dedup();
        Self { header, layers, edges }
    }

    pub fn counts(&self) -> LayerCounts {
        let l = &self.layers;
        LayerCounts {
            keyframes: l.keyframes.len(),
            markers: l.markers.len(),
            walls: l.walls.len(),
            doors: l.doors.len(),
            rooms: l.rooms.len(),
            corridors: l.corridors.len(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene graph serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self, SlamError> {
        serde_json::from_str(text).map_err(|e| SlamError::SceneGraph(e.to_string()))
    }
}
