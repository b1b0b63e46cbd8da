//! Vector helpers and organ primitive builders.

use std::f64::consts::{PI, TAU};

use rosepoint_core::{OrganLabel, Point3};

use crate::mesh::{triangle_area, OrganMesh, MIN_TRIANGLE_AREA};

pub type V3 = [f64; 3];

pub fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: V3) -> V3 {
    let n = norm(a);
    if n > 0.0 {
        scale(a, 1.0 / n)
    } else {
        a
    }
}

/// Rodrigues rotation of `v` about the unit `axis`.
pub fn rotate(v: V3, axis: V3, angle: f64) -> V3 {
    let (s, c) = angle.sin_cos();
    add(add(scale(v, c), scale(cross(axis, v), s)), scale(axis, dot(axis, v) * (1.0 - c)))
}

/// Any unit vector orthogonal to `a`.
pub fn orthogonal(a: V3) -> V3 {
    let helper = if a[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    normalize(cross(a, helper))
}

/// Accumulates one organ instance, discarding degenerate triangles.
pub struct MeshBuilder {
    organ: OrganLabel,
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
}

impl MeshBuilder {
    pub fn new(organ: OrganLabel) -> Self {
        MeshBuilder { organ, vertices: Vec::new(), triangles: Vec::new() }
    }

    pub fn vertex(&mut self, p: V3) -> usize {
        self.vertices.push(p);
        self.vertices.len() - 1
    }

    pub fn triangle(&mut self, a: usize, b: usize, c: usize) {
        let area = triangle_area(self.vertices[a], self.vertices[b], self.vertices[c]);
        if area > MIN_TRIANGLE_AREA {
            self.triangles.push([a, b, c]);
        }
    }

    pub fn quad(&mut self, a: usize, b: usize, c: usize, d: usize) {
        self.triangle(a, b, c);
        self.triangle(a, c, d);
    }

    pub fn finish(self) -> Option<OrganMesh> {
        if self.triangles.is_empty() {
            return None;
        }
        Some(OrganMesh::from_parts(self.vertices, self.triangles, self.organ))
    }
}

const TUBE_SIDES: usize = 8;

/// Open tapered prism from `p0` (radius `r0`) to `p1` (radius `r1`).
pub fn tube(organ: OrganLabel, p0: V3, p1: V3, r0: f64, r1: f64) -> Option<OrganMesh> {
    let axis = normalize(sub(p1, p0));
    let u = orthogonal(axis);
    let v = cross(axis, u);
    let mut b = MeshBuilder::new(organ);
    let ring = |b: &mut MeshBuilder, centre: V3, r: f64| -> Vec<usize> {
        (0..TUBE_SIDES)
            .map(|k| {
                let a = TAU * k as f64 / TUBE_SIDES as f64;
                b.vertex(add(centre, add(scale(u, r * a.cos()), scale(v, r * a.sin()))))
            })
            .collect()
    };
    let lower = ring(&mut b, p0, r0);
    let upper = ring(&mut b, p1, r1);
    for k in 0..TUBE_SIDES {
        let n = (k + 1) % TUBE_SIDES;
        b.quad(lower[k], lower[n], upper[n], upper[k]);
    }
    b.finish()
}

const BLADE_SEGMENTS: usize = 6;

/// Elliptic blade along `dir` with the midrib at `base`, lamina spanning the
/// `side` direction and edges lifted along `normal` by `fold` times the local
/// half-width. `droop` bends the tip along `-normal`.
#[allow(clippy::too_many_arguments)]
pub fn blade(
    organ: OrganLabel,
    base: V3,
    dir: V3,
    normal: V3,
    length: f64,
    width: f64,
    fold: f64,
    droop: f64,
) -> Option<OrganMesh> {
    let side = normalize(cross(dir, normal));
    let mut b = MeshBuilder::new(organ);
    let mut rows = Vec::with_capacity(BLADE_SEGMENTS + 1);
    for i in 0..=BLADE_SEGMENTS {
        let t = i as f64 / BLADE_SEGMENTS as f64;
        let half = 0.5 * width * (1.0 - (2.0 * t - 1.0).powi(2)).max(0.0).sqrt();
        let mid = add(add(base, scale(dir, t * length)), scale(normal, -droop * length * t * t));
        let lift = scale(normal, fold * half);
        let left = b.vertex(add(add(mid, scale(side, half)), lift));
        let centre = b.vertex(mid);
        let right = b.vertex(add(sub(mid, scale(side, half)), lift));
        rows.push([left, centre, right]);
    }
    for w in rows.windows(2) {
        let [l0, c0, r0] = w[0];
        let [l1, c1, r1] = w[1];
        b.quad(c0, c1, l1, l0);
        b.quad(c0, r0, r1, c1);
    }
    b.finish()
}

/// Cupped petal: a 2x3 grid of quads curving towards `axis`.
pub fn petal(base: V3, dir: V3, axis: V3, length: f64, width: f64, curl: f64) -> Option<OrganMesh> {
    let side = normalize(cross(dir, axis));
    let inward = normalize(cross(side, dir));
    let mut b = MeshBuilder::new(OrganLabel::Petal);
    let mut grid = Vec::new();
    for i in 0..=3 {
        let t = i as f64 / 3.0;
        let half = 0.5 * width * (0.45 + 0.55 * (PI * (0.15 + 0.6 * t)).sin());
        let row: Vec<usize> = (0..=2)
            .map(|j| {
                let s = j as f64 - 1.0;
                let p = add(base, scale(dir, t * length));
                let p = add(p, scale(side, s * half));
                let p = add(p, scale(inward, curl * length * t * t + 0.35 * curl * half * s * s));
                b.vertex(p)
            })
            .collect();
        grid.push(row);
    }
    for i in 0..3 {
        for j in 0..2 {
            b.quad(grid[i][j], grid[i][j + 1], grid[i + 1][j + 1], grid[i + 1][j]);
        }
    }
    b.finish()
}

/// Once-subdivided icosahedron scaled by `radii` along (axis, u, v).
pub fn icosphere(organ: OrganLabel, centre: V3, axis: V3, radius_axial: f64, radius: f64) -> Option<OrganMesh> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<V3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|&v| normalize(v))
    .collect();
    let faces: [[usize; 3]; 20] = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut cache = std::collections::HashMap::new();
    let mut midpoint = |a: usize, b: usize, verts: &mut Vec<V3>| -> usize {
        let key = (a.min(b), a.max(b));
        *cache.entry(key).or_insert_with(|| {
            verts.push(normalize(scale(add(verts[a], verts[b]), 0.5)));
            verts.len() - 1
        })
    };
    let mut tris = Vec::with_capacity(80);
    for [a, b, c] in faces {
        let ab = midpoint(a, b, &mut verts);
        let bc = midpoint(b, c, &mut verts);
        let ca = midpoint(c, a, &mut verts);
        tris.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
    }
    let u = orthogonal(axis);
    let v = cross(axis, u);
    let mut b = MeshBuilder::new(organ);
    for p in &verts {
        let q = add(centre, add(scale(axis, p[2] * radius_axial), add(scale(u, p[0] * radius), scale(v, p[1] * radius))));
        b.vertex(q);
    }
    for [x, y, z] in tris {
        b.triangle(x, y, z);
    }
    b.finish()
}
