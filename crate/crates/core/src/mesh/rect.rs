use super::{BoundaryEdge, BoundaryTag, Mesh, MeshError};
use crate::scalar::Real;

/// Tags for the four sides of a rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct RectTags {
    pub bottom: BoundaryTag,
    pub right: BoundaryTag,
    pub top: BoundaryTag,
    pub left: BoundaryTag,
}

impl RectTags {
    pub fn uniform(tag: BoundaryTag) -> Self {
        RectTags {
            bottom: tag.clone(),
            right: tag.clone(),
            top: tag.clone(),
            left: tag,
        }
    }
}

/// Structured triangulation of a rectangle into `nx * ny` cells, two triangles
/// each, with every boundary edge tagged [`BoundaryTag::Wall`].
///
/// Cell diagonals alternate in a union-jack pattern so that, for even `nx` and
/// `ny`, no triangle has two edges on the boundary.
pub fn build_rect_mesh<T: Real>(
    x_range: (T, T),
    y_range: (T, T),
    nx: usize,
    ny: usize,
) -> Result<Mesh<T>, MeshError> {
    build_rect_mesh_tagged(x_range, y_range, nx, ny, &RectTags::uniform(BoundaryTag::Wall))
}

pub fn build_rect_mesh_tagged<T: Real>(
    x_range: (T, T),
    y_range: (T, T),
    nx: usize,
    ny: usize,
    tags: &RectTags,
) -> Result<Mesh<T>, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidSpec(format!(
            "rectangle needs at least one cell per direction, got {nx}x{ny}"
        )));
    }
    if !(x_range.1 > x_range.0) || !(y_range.1 > y_range.0) {
        return Err(MeshError::InvalidSpec(format!(
            "degenerate rectangle [{}, {}] x [{}, {}]",
            x_range.0, x_range.1, y_range.0, y_range.1
        )));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        // Interpolate from both ends so the far corner is hit exactly.
        let sy = T::from_usize_lossy(j) / T::from_usize_lossy(ny);
        let y = y_range.0 * (T::one() - sy) + y_range.1 * sy;
        for i in 0..=nx {
            let sx = T::from_usize_lossy(i) / T::from_usize_lossy(nx);
            let x = x_range.0 * (T::one() - sx) + x_range.1 * sx;
            vertices.push([x, y]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    let mut edges = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        edges.push(BoundaryEdge {
            vertices: [id(i, 0), id(i + 1, 0)],
            tag: tags.bottom.clone(),
        });
    }
    for j in 0..ny {
        edges.push(BoundaryEdge {
            vertices: [id(nx, j), id(nx, j + 1)],
            tag: tags.right.clone(),
        });
    }
    for i in (0..nx).rev() {
        edges.push(BoundaryEdge {
            vertices: [id(i + 1, ny), id(i, ny)],
            tag: tags.top.clone(),
        });
    }
    for j in (0..ny).rev() {
        edges.push(BoundaryEdge {
            vertices: [id(0, j + 1), id(0, j)],
            tag: tags.left.clone(),
        });
    }
    Mesh::new(vertices, triangles, edges, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn unit_square_two_by_two() {
        let m = build_rect_mesh((0.0f64, 1.0), (0.0, 1.0), 2, 2).unwrap();
        assert_eq!(m.n_vertices(), 9);
        assert_eq!(m.n_triangles(), 8);
        assert_eq!(m.boundary_edges().len(), 8);
    }

    #[test]
    fn single_cell_area() {
        let m = build_rect_mesh((0.0f64, 1.0), (0.0, 1.0), 1, 1).unwrap();
        assert_eq!(m.n_triangles(), 2);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn euler_characteristic_by_enumeration() {
        let m = build_rect_mesh((0.0f64, 2.0), (0.0, 1.0), 4, 2).unwrap();
        // Count edges independently of the topology table.
        let mut edges = HashSet::new();
        for t in m.triangles() {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        let chi = m.n_vertices() as i64 - edges.len() as i64 + m.n_triangles() as i64;
        assert_eq!(chi, 1);
    }

    #[test]
    fn closed_form_counts_exhaustive() {
        for nx in 1..=16 {
            for ny in 1..=16 {
                let m = build_rect_mesh((-1.0f64, 3.0), (0.5, 2.0), nx, ny).unwrap();
                assert_eq!(m.n_vertices(), (nx + 1) * (ny + 1));
                assert_eq!(m.n_triangles(), 2 * nx * ny);
                assert_eq!(m.boundary_edges().len(), 2 * (nx + ny));
                assert_eq!(m.n_edges(), nx * (ny + 1) + ny * (nx + 1) + nx * ny);
            }
        }
    }

    #[test]
    fn degenerate_ranges_rejected() {
        assert!(matches!(
            build_rect_mesh((1.0f64, 1.0), (0.0, 1.0), 2, 2),
            Err(MeshError::InvalidSpec(_))
        ));
        assert!(matches!(
            build_rect_mesh((0.0f64, 1.0), (0.0, 1.0), 0, 2),
            Err(MeshError::InvalidSpec(_))
        ));
    }

    #[test]
    fn even_counts_avoid_two_boundary_edge_triangles() {
        let m = build_rect_mesh((0.0f64, 1.0), (0.0, 1.0), 4, 6).unwrap();
        let topo = m.topology();
        for te in &topo.triangle_edges {
            let on_boundary = te.iter().filter(|&&e| topo.edge_multiplicity[e] == 1).count();
            assert!(on_boundary <= 1);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let m = build_rect_mesh((0.0f32, 1.0), (0.0, 1.0), 3, 3).unwrap();
        assert!((m.total_area() - 1.0).abs() < 1e-6);
    }
}
