//! On-disk grid topology format.
//!
//! A grid file is a single JSON document with explicit integer ids and no
//! implicit defaults:
//!
//! ```json
//! {
//!   "depot": 0,
//!   "circuits": [
//!     { "id": 0, "nodes": [
//!         { "id": 10, "parent": null, "is_device": true,  "customers": 0 },
//!         { "id": 11, "parent": 10,   "is_device": false, "customers": 5 } ] }
//!   ],
//!   "road": {
//!     "nodes": [ { "id": 0, "x": 0.0, "y": 0.0 }, { "id": 1, "x": 1.0, "y": 0.0 } ],
//!     "edges": [ { "from": 0, "to": 1, "minutes": 4.0 } ]
//!   },
//!   "pole_map": [ { "grid_node": 10, "road_node": 0 }, { "grid_node": 11, "road_node": 1 } ]
//! }
//! ```
//!
//! Grid node ids are unique across the whole file. The line feeding a node
//! shares the node's id. The node without a parent is the substation; it is
//! always treated as a protective device.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GridError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDocument {
    /// Road node where the repair truck starts.
    pub depot: u64,
    pub circuits: Vec<CircuitDocument>,
    pub road: RoadDocument,
    pub pole_map: Vec<PoleMapping>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitDocument {
    pub id: u64,
    pub nodes: Vec<NodeDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDocument {
    pub id: u64,
    pub parent: Option<u64>,
    pub is_device: bool,
    pub customers: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadDocument {
    pub nodes: Vec<RoadNodeDocument>,
    pub edges: Vec<RoadEdgeDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadNodeDocument {
    pub id: u64,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadEdgeDocument {
    pub from: u64,
    pub to: u64,
    pub minutes: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleMapping {
    pub grid_node: u64,
    pub road_node: u64,
}

impl GridDocument {
    pub fn from_json(text: &str) -> Result<Self, GridError> {
        serde_json::from_str(text).map_err(|e| GridError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GridError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GridError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid documents always serialize")
    }
}
