//! Straight-edged triangular meshes with tagged boundary edges.
//!
//! A [`Mesh`] is validated on construction and immutable afterwards. Three
//! sources are supported: structured rectangles ([`build_rect_mesh`]), the
//! graded cylinder benchmark domain ([`build_cylinder_mesh`]) and Gmsh 2.2
//! ASCII files ([`import_msh`]).

mod cylinder;
mod msh;
mod rect;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::Real;

pub use cylinder::{build_cylinder_mesh, CylinderSizing, BOX_HALF, X_MAX, X_MIN, Y_HALF};
pub use msh::{import_msh, parse_msh, MshTagMap};
pub use rect::{build_rect_mesh, build_rect_mesh_tagged, RectTags};

/// Radius of the benchmark cylinder.
pub const CYLINDER_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Outer,
    Cylinder,
    Wall,
    Named(String),
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryTag::Outer => f.write_str("Outer"),
            BoundaryTag::Cylinder => f.write_str("Cylinder"),
            BoundaryTag::Wall => f.write_str("Wall"),
            BoundaryTag::Named(s) => f.write_str(s),
        }
    }
}

impl FromStr for BoundaryTag {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "outer" => BoundaryTag::Outer,
            "cylinder" => BoundaryTag::Cylinder,
            "wall" => BoundaryTag::Wall,
            _ => BoundaryTag::Named(s.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid mesh spec: {0}")]
    InvalidSpec(String),
    #[error("triangle {triangle} references vertex {vertex} but the mesh has {n_vertices} vertices")]
    IndexOutOfRange {
        triangle: usize,
        vertex: usize,
        n_vertices: usize,
    },
    #[error("triangle {triangle} has non-positive signed area {area:e}")]
    NonPositiveArea { triangle: usize, area: f64 },
    #[error("edge ({0}, {1}) is shared by {2} triangles")]
    NonManifoldEdge(usize, usize, usize),
    #[error("boundary edge ({0}, {1}) carries no tag")]
    UntaggedBoundaryEdge(usize, usize),
    #[error("tagged edge ({0}, {1}) is not on the boundary of the triangulation")]
    SpuriousBoundaryEdge(usize, usize),
    #[error("boundary edge ({0}, {1}) is tagged more than once")]
    DuplicateBoundaryEdge(usize, usize),
    #[error("cylinder vertex {vertex} has radius {radius} (expected 1 within 1e-12)")]
    CylinderVertexOffCircle { vertex: usize, radius: f64 },
    #[error("region marker count {got} does not match triangle count {expected}")]
    RegionCount { got: usize, expected: usize },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Import { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Recipe for a mesh, as it appears in run configurations.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSpec {
    Rect {
        x_range: (f64, f64),
        y_range: (f64, f64),
        nx: usize,
        ny: usize,
    },
    CylinderBenchmark {
        level: i32,
    },
    Import {
        path: PathBuf,
        tag_map: MshTagMap,
    },
}

impl MeshSpec {
    pub fn build<T: Real>(&self) -> Result<Mesh<T>, MeshError> {
        match self {
            MeshSpec::Rect {
                x_range,
                y_range,
                nx,
                ny,
            } => build_rect_mesh(
                (T::lit(x_range.0), T::lit(x_range.1)),
                (T::lit(y_range.0), T::lit(y_range.1)),
                *nx,
                *ny,
            ),
            MeshSpec::CylinderBenchmark { level } => {
                build_cylinder_mesh(&CylinderSizing::for_level(*level))
            }
            MeshSpec::Import { path, tag_map } => import_msh(path, tag_map),
        }
    }
}

/// Edge connectivity derived from the triangle list.
#[derive(Debug, Clone)]
pub struct Topology {
    /// Unique edges, each stored with the smaller vertex index first.
    pub edges: Vec<[usize; 2]>,
    /// Edge index of local edge `e` (joining local vertices `e` and `(e + 1) % 3`).
    pub triangle_edges: Vec<[usize; 3]>,
    /// Number of triangles adjacent to each edge (1 or 2).
    pub edge_multiplicity: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Mesh<T> {
    vertices: Vec<[T; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    regions: Vec<i32>,
    topology: Topology,
}

impl<T: Real> Mesh<T> {
    /// Validates and assembles a mesh. Triangles must be counterclockwise.
    pub fn new(
        vertices: Vec<[T; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        regions: Option<Vec<i32>>,
    ) -> Result<Self, MeshError> {
        let n_vertices = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= n_vertices {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: t,
                        vertex: v,
                        n_vertices,
                    });
                }
            }
            let area = signed_area(&vertices, tri);
            if !(area > T::zero()) {
                return Err(MeshError::NonPositiveArea {
                    triangle: t,
                    area: area.as_f64(),
                });
            }
        }
        let regions = match regions {
            Some(r) if r.len() != triangles.len() => {
                return Err(MeshError::RegionCount {
                    got: r.len(),
                    expected: triangles.len(),
                })
            }
            Some(r) => r,
            None => vec![0; triangles.len()],
        };

        let topology = build_topology(&triangles)?;

        let mut tagged: HashMap<[usize; 2], usize> = HashMap::with_capacity(boundary_edges.len());
        for (i, be) in boundary_edges.iter().enumerate() {
            let key = sorted_pair(be.vertices);
            if tagged.insert(key, i).is_some() {
                return Err(MeshError::DuplicateBoundaryEdge(key[0], key[1]));
            }
        }
        let mut n_boundary = 0;
        for (e, edge) in topology.edges.iter().enumerate() {
            if topology.edge_multiplicity[e] == 1 {
                n_boundary += 1;
                if !tagged.contains_key(edge) {
                    return Err(MeshError::UntaggedBoundaryEdge(edge[0], edge[1]));
                }
            }
        }
        if n_boundary != boundary_edges.len() {
            // Some tagged edge is interior or not an edge at all.
            let boundary: BTreeSet<[usize; 2]> = topology
                .edges
                .iter()
                .zip(&topology.edge_multiplicity)
                .filter(|(_, &m)| m == 1)
                .map(|(e, _)| *e)
                .collect();
            for be in &boundary_edges {
                let key = sorted_pair(be.vertices);
                if !boundary.contains(&key) {
                    return Err(MeshError::SpuriousBoundaryEdge(key[0], key[1]));
                }
            }
        }

        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(8.0));
        for be in &boundary_edges {
            if be.tag == BoundaryTag::Cylinder {
                for &v in &be.vertices {
                    let [x, y] = vertices[v];
                    let r2 = x * x + y * y;
                    if (r2 - T::one()).abs() > tol {
                        return Err(MeshError::CylinderVertexOffCircle {
                            vertex: v,
                            radius: r2.sqrt().as_f64(),
                        });
                    }
                }
            }
        }

        Ok(Mesh {
            vertices,
            triangles,
            boundary_edges,
            regions,
            topology,
        })
    }

    pub fn vertices(&self) -> &[[T; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn regions(&self) -> &[i32] {
        &self.regions
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.topology.edges.len()
    }

    pub fn triangle_coords(&self, t: usize) -> [[T; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> T {
        signed_area(&self.vertices, &self.triangles[t])
    }

    pub fn total_area(&self) -> T {
        (0..self.n_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// Tags present on the boundary, sorted.
    pub fn tags(&self) -> BTreeSet<BoundaryTag> {
        self.boundary_edges.iter().map(|e| e.tag.clone()).collect()
    }

    pub fn edges_with_tag<'a>(
        &'a self,
        tag: &'a BoundaryTag,
    ) -> impl Iterator<Item = &'a BoundaryEdge> + 'a {
        self.boundary_edges.iter().filter(move |e| &e.tag == tag)
    }

    /// Smallest and largest edge length.
    pub fn edge_length_range(&self) -> (T, T) {
        let mut lo = T::infinity();
        let mut hi = T::zero();
        for &[a, b] in &self.topology.edges {
            let l = dist(self.vertices[a], self.vertices[b]);
            lo = lo.min(l);
            hi = hi.max(l);
        }
        (lo, hi)
    }

    /// Stable content hash of geometry, connectivity and tags.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.vertices.len() as u64).to_le_bytes());
        for v in &self.vertices {
            h.update(v[0].as_f64().to_le_bytes());
            h.update(v[1].as_f64().to_le_bytes());
        }
        h.update((self.triangles.len() as u64).to_le_bytes());
        for t in &self.triangles {
            for &i in t {
                h.update((i as u64).to_le_bytes());
            }
        }
        for be in &self.boundary_edges {
            h.update((be.vertices[0] as u64).to_le_bytes());
            h.update((be.vertices[1] as u64).to_le_bytes());
            h.update(be.tag.to_string().as_bytes());
            h.update([0u8]);
        }
        let digest = h.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    /// Plain-text listing of vertices, triangles and tagged edges.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "vertices {}", self.vertices.len())?;
        for (i, v) in self.vertices.iter().enumerate() {
            writeln!(w, "{i} {} {}", v[0], v[1])?;
        }
        writeln!(w, "triangles {}", self.triangles.len())?;
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(w, "{i} {} {} {} {}", t[0], t[1], t[2], self.regions[i])?;
        }
        writeln!(w, "boundary_edges {}", self.boundary_edges.len())?;
        for be in &self.boundary_edges {
            writeln!(w, "{} {} {}", be.vertices[0], be.vertices[1], be.tag)?;
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn sorted_pair([a, b]: [usize; 2]) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

#[inline]
pub(crate) fn dist<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub(crate) fn signed_area<T: Real>(vertices: &[[T; 2]], tri: &[usize; 3]) -> T {
    let [a, b, c] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
    ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])) * T::lit(0.5)
}

fn build_topology(triangles: &[[usize; 3]]) -> Result<Topology, MeshError> {
    let mut index: HashMap<[usize; 2], usize> = HashMap::with_capacity(triangles.len() * 2);
    let mut edges = Vec::with_capacity(triangles.len() * 2);
    let mut multiplicity: Vec<u8> = Vec::with_capacity(triangles.len() * 2);
    let mut triangle_edges = Vec::with_capacity(triangles.len());
    for tri in triangles {
        let mut te = [0usize; 3];
        for (e, slot) in te.iter_mut().enumerate() {
            let key = sorted_pair([tri[e], tri[(e + 1) % 3]]);
            let id = *index.entry(key).or_insert_with(|| {
                edges.push(key);
                multiplicity.push(0);
                edges.len() - 1
            });
            multiplicity[id] = multiplicity[id].saturating_add(1);
            if multiplicity[id] > 2 {
                return Err(MeshError::NonManifoldEdge(key[0], key[1], multiplicity[id] as usize));
            }
            *slot = id;
        }
        triangle_edges.push(te);
    }
    Ok(Topology {
        edges,
        triangle_edges,
        edge_multiplicity: multiplicity,
    })
}

/// Boundary edges of a triangle soup (edges used by exactly one triangle), in
/// triangle order with the triangle's orientation.
pub(crate) fn free_edges(triangles: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut count: HashMap<[usize; 2], u32> = HashMap::new();
    for tri in triangles {
        for e in 0..3 {
            *count
                .entry(sorted_pair([tri[e], tri[(e + 1) % 3]]))
                .or_default() += 1;
        }
    }
    let mut out = Vec::new();
    for tri in triangles {
        for e in 0..3 {
            let pair = [tri[e], tri[(e + 1) % 3]];
            if count[&sorted_pair(pair)] == 1 {
                out.push(pair);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
        (
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
    }

    fn wall_edges(pairs: &[[usize; 2]]) -> Vec<BoundaryEdge> {
        pairs
            .iter()
            .map(|&vertices| BoundaryEdge {
                vertices,
                tag: BoundaryTag::Wall,
            })
            .collect()
    }

    #[test]
    fn rejects_clockwise_triangle() {
        let (v, _) = square();
        let err = Mesh::new(v, vec![[0, 2, 1]], vec![], None).unwrap_err();
        assert!(matches!(err, MeshError::NonPositiveArea { triangle: 0, .. }));
    }

    #[test]
    fn rejects_untagged_boundary() {
        let (v, t) = square();
        let err = Mesh::new(v, t, wall_edges(&[[0, 1], [1, 2], [2, 3]]), None).unwrap_err();
        assert!(matches!(err, MeshError::UntaggedBoundaryEdge(0, 3)));
    }

    #[test]
    fn rejects_interior_edge_tag() {
        let (v, t) = square();
        let err = Mesh::new(
            v,
            t,
            wall_edges(&[[0, 1], [1, 2], [2, 3], [3, 0], [0, 2]]),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, MeshError::SpuriousBoundaryEdge(0, 2)));
    }

    #[test]
    fn rejects_non_manifold_edge() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [0.5, 2.0]];
        let t = vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]];
        let err = Mesh::new(v, t, vec![], None).unwrap_err();
        assert!(matches!(err, MeshError::NonManifoldEdge(0, 1, 3)));
    }

    #[test]
    fn cylinder_tag_requires_unit_circle() {
        let v = vec![[1.0, 0.0], [0.0, 1.001], [0.0, 0.0]];
        let t = vec![[2, 0, 1]];
        let edges = vec![
            BoundaryEdge {
                vertices: [0, 1],
                tag: BoundaryTag::Cylinder,
            },
            BoundaryEdge {
                vertices: [1, 2],
                tag: BoundaryTag::Wall,
            },
            BoundaryEdge {
                vertices: [2, 0],
                tag: BoundaryTag::Wall,
            },
        ];
        let err = Mesh::new(v, t, edges, None).unwrap_err();
        assert!(matches!(err, MeshError::CylinderVertexOffCircle { vertex: 1, .. }));
    }

    #[test]
    fn fingerprint_tracks_geometry() {
        let (v, t) = square();
        let edges = wall_edges(&[[0, 1], [1, 2], [2, 3], [3, 0]]);
        let a = Mesh::new(v.clone(), t.clone(), edges.clone(), None).unwrap();
        let b = Mesh::new(v.clone(), t.clone(), edges.clone(), None).unwrap();
        let mut v2 = v;
        v2[2] = [1.0, 1.5];
        let c = Mesh::new(v2, t, edges, None).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn dump_lists_everything() {
        let (v, t) = square();
        let m = Mesh::new(v, t, wall_edges(&[[0, 1], [1, 2], [2, 3], [3, 0]]), None).unwrap();
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("vertices 4\n"));
        assert!(text.contains("triangles 2\n"));
        assert!(text.contains("boundary_edges 4\n"));
        assert!(text.ends_with("3 0 Wall\n"));
    }

    #[test]
    fn tag_parsing() {
        assert_eq!("cylinder".parse::<BoundaryTag>().unwrap(), BoundaryTag::Cylinder);
        assert_eq!("OUTER".parse::<BoundaryTag>().unwrap(), BoundaryTag::Outer);
        assert_eq!(
            "inflow".parse::<BoundaryTag>().unwrap(),
            BoundaryTag::Named("inflow".into())
        );
    }
}
