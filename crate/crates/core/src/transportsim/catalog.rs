use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;

const BUILTIN_CATALOG: &str = include_str!("../../data/shapes.json");

/// One entry of the shape catalog file. Coordinates are meters in the object
/// frame; `grasp_points[i]` is the point robot `i` is assigned to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeDef {
    pub name: String,
    pub vertices: Vec<[f64; 2]>,
    pub grasp_points: [[f64; 2]; 2],
    pub seen: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogSelection {
    Seen,
    Unseen,
    Both,
}

impl std::str::FromStr for CatalogSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seen" => Ok(Self::Seen),
            "unseen" => Ok(Self::Unseen),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown catalog `{other}` (expected seen, unseen, or both)")),
        }
    }
}

/// Ordered list of shapes. Shape ids are positions in this list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShapeCatalog {
    shapes: Vec<ShapeDef>,
}

impl ShapeCatalog {
    /// The catalog shipped in `data/shapes.json`.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_CATALOG).expect("builtin catalog is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let shapes: Vec<ShapeDef> =
            serde_json::from_str(text).map_err(|e| SimError::Config(format!("shape catalog: {e}")))?;
        let catalog = Self { shapes };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn shapes(&self) -> &[ShapeDef] {
        &self.shapes
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&ShapeDef> {
        self.shapes.get(id)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.shapes.iter().position(|s| s.name == name)
    }

    /// Ids of the shapes in a selection, in catalog order.
    pub fn select(&self, selection: CatalogSelection) -> Vec<usize> {
        self.shapes
            .iter()
            .enumerate()
            .filter(|(_, s)| match selection {
                CatalogSelection::Seen => s.seen,
                CatalogSelection::Unseen => !s.seen,
                CatalogSelection::Both => true,
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Slot of a seen shape inside the privileged one-hot (seen shapes in
    /// catalog order), or `None` for an unseen shape.
    pub fn seen_slot(&self, id: usize) -> Option<usize> {
        if !self.shapes.get(id)?.seen {
            return None;
        }
        Some(self.shapes[..id].iter().filter(|s| s.seen).count())
    }

    pub fn seen_count(&self) -> usize {
        self.shapes.iter().filter(|s| s.seen).count()
    }

    fn validate(&self) -> Result<(), SimError> {
        for s in &self.shapes {
            if s.vertices.len() < 3 {
                return Err(SimError::Config(format!(
                    "shape `{}` needs at least 3 vertices",
                    s.name
                )));
            }
            if !is_simple_polygon(&s.vertices) {
                return Err(SimError::Config(format!("shape `{}` is self-intersecting", s.name)));
            }
            for g in &s.grasp_points {
                if boundary_distance(&s.vertices, *g) > 1e-5 {
                    return Err(SimError::Config(format!(
                        "shape `{}`: grasp point {g:?} is not on the boundary",
                        s.name
                    )));
                }
            }
        }
        Ok(())
    }
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}

/// Distance from `p` to the closest polygon edge.
pub fn boundary_distance(vertices: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| segment_distance(p, vertices[i], vertices[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// No two non-adjacent edges cross.
pub fn is_simple_polygon(vertices: &[[f64; 2]]) -> bool {
    let n = vertices.len();
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            let (c, d) = (vertices[j], vertices[(j + 1) % n]);
            if segments_cross(a, b, c, d) {
                return false;
            }
        }
    }
    true
}
