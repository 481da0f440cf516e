//! Deterministic graded mesh of the cylinder benchmark domain
//! `(-30, 300) x (-30, 30)` minus the unit disk.
//!
//! The domain is covered by three zones, each a stack of nested node rings
//! whose consecutive pairs are stitched into triangles:
//!
//! 1. an O-grid from the cylinder polygon out to the boundary of the near box
//!    `[-5, 5]^2`, ring shapes blending from circles into that square;
//! 2. square rings from the near box out to `[-30, 30]^2`, whose left, top and
//!    bottom sides lie on the outer boundary;
//! 3. vertical node columns filling the wake strip `[30, 300] x [-30, 30]`.
//!
//! The target size grows linearly with distance from the cylinder surface and
//! is capped by the near-box size inside the box and by `h_max` outside.

use std::f64::consts::PI;

use super::{free_edges, BoundaryEdge, BoundaryTag, Mesh, MeshError};
use crate::scalar::Real;

pub const X_MIN: f64 = -30.0;
pub const X_MAX: f64 = 300.0;
pub const Y_HALF: f64 = 30.0;
pub const BOX_HALF: f64 = 5.0;

/// Size growth per unit distance at level 0.
const GROWTH_LEVEL0: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderSizing {
    pub level: i32,
    pub h_max: f64,
    pub h_box: f64,
    pub h_cylinder: f64,
    /// Increase of the target size per unit of distance.
    pub growth: f64,
}

impl CylinderSizing {
    pub fn for_level(level: i32) -> Self {
        if !(0..=3).contains(&level) {
            log::info!("cylinder mesh level {level} is outside the calibrated range 0..=3");
        }
        let scale = 2f64.powi(-level);
        let h_max = 8.0 * scale;
        CylinderSizing {
            level,
            h_max,
            h_box: h_max / 2.0,
            h_cylinder: h_max / 100.0,
            growth: GROWTH_LEVEL0 * scale,
        }
    }

    /// Number of segments of the cylinder polygon.
    pub fn cylinder_segments(&self) -> usize {
        ((2.0 * PI / self.h_cylinder).ceil() as usize).max(8)
    }

    fn near_size(&self, r: f64) -> f64 {
        (self.h_cylinder + self.growth * (r - 1.0)).min(self.h_box)
    }

    fn far_size(&self, base: f64, distance: f64) -> f64 {
        (base + self.growth * distance).min(self.h_max)
    }
}

pub fn build_cylinder_mesh<T: Real>(sizing: &CylinderSizing) -> Result<Mesh<T>, MeshError> {
    if !(sizing.h_cylinder > 0.0 && sizing.growth > 0.0) {
        return Err(MeshError::InvalidSpec(format!("bad cylinder sizing {sizing:?}")));
    }
    let mut b = Builder::default();

    // Zone 1: O-grid.
    let n_cyl = sizing.cylinder_segments();
    let cylinder: Vec<usize> = (0..n_cyl)
        .map(|j| {
            let th = 2.0 * PI * j as f64 / n_cyl as f64;
            b.push([th.cos(), th.sin()])
        })
        .collect();
    let radii = graded_stations(1.0, BOX_HALF, |r| sizing.near_size(r));
    let box_size = sizing.near_size(BOX_HALF);
    let mut previous = b.sorted_by_angle(cylinder);
    for (k, &r) in radii.iter().enumerate().skip(1) {
        let ring = if k + 1 == radii.len() {
            b.square_ring(BOX_HALF, box_size)
        } else {
            let blend = ((r - 1.0) / (BOX_HALF - 1.0)).powi(2);
            b.blended_ring(r, blend, sizing.near_size(r), k % 2 == 1)
        };
        b.stitch_closed(&previous, &ring, 0);
        previous = ring;
    }

    // Zone 2: square rings out to the outer boundary.
    let halves = graded_stations(BOX_HALF, Y_HALF, |a| sizing.far_size(box_size, a - BOX_HALF));
    for &a in halves.iter().skip(1) {
        let ring = b.square_ring(a, sizing.far_size(box_size, a - BOX_HALF));
        b.stitch_closed(&previous, &ring, 1);
        previous = ring;
    }
    let strip_base = sizing.far_size(box_size, Y_HALF - BOX_HALF);

    // Zone 3: wake strip, starting from the right side of the last square ring.
    let mut column: Vec<usize> = previous
        .iter()
        .copied()
        .filter(|&v| b.points[v][0] == Y_HALF)
        .collect();
    column.sort_by(|&p, &q| b.points[p][1].total_cmp(&b.points[q][1]));
    let stations = graded_stations(Y_HALF, X_MAX, |x| sizing.far_size(strip_base, x - Y_HALF));
    for &x in stations.iter().skip(1) {
        let segments = ((2.0 * Y_HALF) / sizing.far_size(strip_base, x - Y_HALF)).ceil() as usize;
        let next: Vec<usize> = (0..=segments)
            .map(|i| {
                let s = i as f64 / segments as f64;
                b.push([x, -Y_HALF * (1.0 - s) + Y_HALF * s])
            })
            .collect();
        b.stitch_columns(&column, &next, 2);
        column = next;
    }

    let Builder {
        points,
        triangles,
        regions,
    } = b;
    let boundary_edges = free_edges(&triangles)
        .into_iter()
        .map(|vertices| {
            let on_cylinder = vertices.iter().all(|&v| {
                let [x, y] = points[v];
                (x.hypot(y) - 1.0).abs() < 1e-9
            });
            BoundaryEdge {
                vertices,
                tag: if on_cylinder {
                    BoundaryTag::Cylinder
                } else {
                    BoundaryTag::Outer
                },
            }
        })
        .collect();
    let vertices = points
        .into_iter()
        .map(|[x, y]| [T::lit(x), T::lit(y)])
        .collect();
    Mesh::new(vertices, triangles, boundary_edges, Some(regions))
}

/// Stations `start = s_0 < s_1 < ... < s_m = end` with spacing following
/// `size`, uniformly stretched so that the last station lands on `end`.
fn graded_stations(start: f64, end: f64, size: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut raw = vec![start];
    let mut s = start;
    while s < end {
        s += size(s);
        raw.push(s);
    }
    let m = raw.len() - 1;
    // Drop the final step if it overshoots by more than half its length.
    if m > 1 && raw[m] - end > 0.5 * (raw[m] - raw[m - 1]) {
        raw.pop();
    }
    let last = *raw.last().unwrap();
    let scale = (end - start) / (last - start);
    let n = raw.len();
    raw.into_iter()
        .enumerate()
        .map(|(i, r)| if i + 1 == n { end } else { start + (r - start) * scale })
        .collect()
}

#[derive(Default)]
struct Builder {
    points: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<i32>,
}

impl Builder {
    fn push(&mut self, p: [f64; 2]) -> usize {
        self.points.push(p);
        self.points.len() - 1
    }

    fn angle(&self, v: usize) -> f64 {
        let [x, y] = self.points[v];
        y.atan2(x)
    }

    fn sorted_by_angle(&self, mut ring: Vec<usize>) -> Vec<usize> {
        ring.sort_by(|&a, &b| self.angle(a).total_cmp(&self.angle(b)));
        ring
    }

    /// Ring whose radial profile blends the circle of radius `r` into the
    /// near-box square; nodes equidistributed in arc length.
    fn blended_ring(&mut self, r: f64, blend: f64, h: f64, stagger: bool) -> Vec<usize> {
        const SAMPLES: usize = 2048;
        let profile = |th: f64| {
            let square = BOX_HALF / th.cos().abs().max(th.sin().abs());
            let rho = (1.0 - blend) * r + blend * square;
            [rho * th.cos(), rho * th.sin()]
        };
        let mut cumulative = Vec::with_capacity(SAMPLES + 1);
        cumulative.push(0.0);
        let mut prev = profile(0.0);
        for i in 1..=SAMPLES {
            let p = profile(2.0 * PI * i as f64 / SAMPLES as f64);
            let len = (p[0] - prev[0]).hypot(p[1] - prev[1]);
            cumulative.push(cumulative[i - 1] + len);
            prev = p;
        }
        let perimeter = cumulative[SAMPLES];
        let n = ((perimeter / h).ceil() as usize).max(8);
        let offset = if stagger { 0.5 } else { 0.0 };
        let mut ring = Vec::with_capacity(n);
        let mut seg = 0;
        for j in 0..n {
            let target = perimeter * (j as f64 + offset) / n as f64;
            while cumulative[seg + 1] < target {
                seg += 1;
            }
            let frac = (target - cumulative[seg]) / (cumulative[seg + 1] - cumulative[seg]);
            let th = 2.0 * PI * (seg as f64 + frac) / SAMPLES as f64;
            let v = self.push(profile(th));
            ring.push(v);
        }
        self.sorted_by_angle(ring)
    }

    /// Boundary of `[-a, a]^2` with equal segment counts per side.
    fn square_ring(&mut self, a: f64, h: f64) -> Vec<usize> {
        let per_side = ((2.0 * a / h).ceil() as usize).max(1);
        let coord = |i: usize| {
            if i == per_side {
                a
            } else {
                -a + 2.0 * a * i as f64 / per_side as f64
            }
        };
        let mut ring = Vec::with_capacity(4 * per_side);
        for i in 0..per_side {
            ring.push(self.push([coord(i), -a]));
        }
        for i in 0..per_side {
            ring.push(self.push([a, coord(i)]));
        }
        for i in 0..per_side {
            ring.push(self.push([-coord(i), a]));
        }
        for i in 0..per_side {
            ring.push(self.push([-a, -coord(i)]));
        }
        self.sorted_by_angle(ring)
    }

    fn add_triangle(&mut self, mut tri: [usize; 3], region: i32) {
        let [a, b, c] = tri.map(|v| self.points[v]);
        let area = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        if area < 0.0 {
            tri.swap(1, 2);
        }
        self.triangles.push(tri);
        self.regions.push(region);
    }

    /// Triangulates the annulus between two closed rings, both sorted by
    /// polar angle, by merging the rings in angular order.
    fn stitch_closed(&mut self, inner: &[usize], outer: &[usize], region: i32) {
        let (m, n) = (inner.len(), outer.len());
        let unwrapped = |ring: &[usize], k: usize, this: &Self| {
            let len = ring.len();
            this.angle(ring[k % len]) + 2.0 * PI * (k / len) as f64
        };
        let (mut i, mut j) = (0, 0);
        while i < m || j < n {
            let advance_inner = if i == m {
                false
            } else if j == n {
                true
            } else {
                unwrapped(inner, i + 1, self) < unwrapped(outer, j + 1, self)
            };
            if advance_inner {
                self.add_triangle([inner[i % m], inner[(i + 1) % m], outer[j % n]], region);
                i += 1;
            } else {
                self.add_triangle([inner[i % m], outer[(j + 1) % n], outer[j % n]], region);
                j += 1;
            }
        }
    }

    /// Triangulates the band between two vertical node columns sorted by y.
    fn stitch_columns(&mut self, left: &[usize], right: &[usize], region: i32) {
        let (m, n) = (left.len(), right.len());
        let (mut i, mut j) = (0, 0);
        while i + 1 < m || j + 1 < n {
            let advance_left = if i + 1 == m {
                false
            } else if j + 1 == n {
                true
            } else {
                self.points[left[i + 1]][1] < self.points[right[j + 1]][1]
            };
            if advance_left {
                self.add_triangle([left[i], left[i + 1], right[j]], region);
                i += 1;
            } else {
                self.add_triangle([left[i], right[j], right[j + 1]], region);
                j += 1;
            }
        }
    }
}
