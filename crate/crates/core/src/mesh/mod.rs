//! Watertight triangle meshes and ray queries against them.
//!
//! All coordinates are millimetres. Meshes are immutable once built and can
//! be shared freely between threads.

pub mod ply;

pub use ply::{load_ply, load_ply_scaled, read_ply, write_ply, PlyEncoding};

use crate::{Error, Result, Vec3};

/// Minimum accepted hit distance along a ray, in millimetres.
pub const MIN_HIT_DISTANCE: f64 = 1e-9;

// Barycentric slack so rays through shared edges and vertices still register.
const EDGE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    normals: Vec<Vec3>,
    bounds: (Vec3, Vec3),
}

impl TriangleMesh {
    /// Builds a mesh and derives unit face normals from the winding.
    ///
    /// Fails on out-of-range indices, zero-area triangles, or fewer than
    /// four vertices / triangles.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if vertices.len() < 4 || triangles.len() < 4 {
            return Err(Error::InvalidMesh(format!(
                "need at least 4 vertices and 4 triangles, got {} and {}",
                vertices.len(),
                triangles.len()
            )));
        }
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("non-finite vertex {v:?}")));
        }
        let mut normals = Vec::with_capacity(triangles.len());
        for (i, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&ix| ix as usize >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {i} references vertex {bad} but mesh has {} vertices",
                    vertices.len()
                )));
            }
            let [a, b, c] = tri.map(|ix| vertices[ix as usize]);
            let n = (b - a).cross(&(c - a));
            let norm = n.norm();
            if !norm.is_finite() || norm <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {i} has zero area")));
            }
            normals.push(n / norm);
        }
        let mut lo = vertices[0];
        let mut hi = vertices[0];
        for v in &vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        Ok(Self {
            vertices,
            triangles,
            normals,
            bounds: (lo, hi),
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    /// Unit face normals, one per triangle, following the stored winding.
    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    /// Axis-aligned bounding box as (min corner, max corner).
    pub fn bounds(&self) -> (Vec3, Vec3) {
        self.bounds
    }

    pub fn triangle(&self, index: usize) -> [Vec3; 3] {
        self.triangles[index].map(|ix| self.vertices[ix as usize])
    }

    /// Concatenates several meshes into one (components stay disjoint).
    pub fn merge(parts: &[TriangleMesh]) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for part in parts {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&part.vertices);
            triangles.extend(part.triangles.iter().map(|t| t.map(|ix| ix + base)));
        }
        Self::new(vertices, triangles)
    }

    /// Copy of the mesh rotated by `angle` radians about the z axis.
    pub fn rotated_about_z(&self, angle: f64) -> Result<Self> {
        let rot = nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), angle);
        let vertices = self.vertices.iter().map(|v| rot * v).collect();
        Self::new(vertices, self.triangles.clone())
    }

    /// Distance from `point` to the supporting plane of triangle `index`.
    pub fn plane_residual(&self, index: usize, point: &Vec3) -> f64 {
        let a = self.vertices[self.triangles[index][0] as usize];
        (point - a).dot(&self.normals[index]).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    origin: Vec3,
    direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`; fails if it is zero or non-finite.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        let norm = direction.norm();
        if !norm.is_finite() || norm <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "ray direction {direction:?} cannot be normalized"
            )));
        }
        Ok(Self {
            origin,
            direction: direction / norm,
        })
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// First surface point met by a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub point: Vec3,
    /// Face normal flipped, if needed, so that it faces the ray origin.
    pub normal: Vec3,
    pub distance: f64,
    pub triangle: usize,
}

fn slab_overlaps(ray: &Ray, lo: &Vec3, hi: &Vec3) -> bool {
    let mut t_min = 0.0f64;
    let mut t_max = f64::INFINITY;
    for axis in 0..3 {
        let o = ray.origin[axis];
        let d = ray.direction[axis];
        if d.abs() < 1e-300 {
            if o < lo[axis] || o > hi[axis] {
                return false;
            }
            continue;
        }
        let inv = 1.0 / d;
        let (mut t0, mut t1) = ((lo[axis] - o) * inv, (hi[axis] - o) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_min = t_min.max(t0);
        t_max = t_max.min(t1);
        if t_min > t_max * (1.0 + 1e-12) + 1e-9 {
            return false;
        }
    }
    true
}

/// Möller–Trumbore test of one triangle; returns the ray parameter of the hit.
fn intersect_triangle(ray: &Ray, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = ray.direction.cross(&e2);
    let det = e1.dot(&p);
    let scale = e1.norm() * e2.norm();
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = ray.origin - a;
    let u = s.dot(&p) * inv_det;
    if !(-EDGE_SLACK..=1.0 + EDGE_SLACK).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = ray.direction.dot(&q) * inv_det;
    if v < -EDGE_SLACK || u + v > 1.0 + EDGE_SLACK {
        return None;
    }
    let t = e2.dot(&q) * inv_det;
    (t > MIN_HIT_DISTANCE).then_some(t)
}

/// Nearest intersection of `ray` with `mesh`, if any.
///
/// Ties in distance resolve to the lowest triangle index, so the result is
/// fully deterministic.
pub fn ray_intersect(mesh: &TriangleMesh, ray: &Ray) -> Option<Hit> {
    let (lo, hi) = mesh.bounds;
    if !slab_overlaps(ray, &lo, &hi) {
        return None;
    }
    let mut best: Option<(f64, usize)> = None;
    for (i, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = tri.map(|ix| &mesh.vertices[ix as usize]);
        if let Some(t) = intersect_triangle(ray, a, b, c) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
    }
    best.map(|(t, i)| {
        let mut normal = mesh.normals[i];
        if normal.dot(&ray.direction) > 0.0 {
            normal = -normal;
        }
        Hit {
            point: ray.at(t),
            normal,
            distance: t,
            triangle: i,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn tetrahedron() -> TriangleMesh {
        let v = vec![
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(1.0, -1.0, -1.0),
            Vec3::new(-1.0, 1.0, -1.0),
            Vec3::new(-1.0, -1.0, 1.0),
        ];
        TriangleMesh::new(v, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]).unwrap()
    }

    #[test]
    fn rejects_out_of_range_indices() {
        let mut v = tetrahedron().vertices().to_vec();
        v.truncate(4);
        let err = TriangleMesh::new(v, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 9]]);
        assert!(matches!(err, Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn rejects_too_small_meshes() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(TriangleMesh::new(v, vec![[0, 1, 2]]).is_err());
    }

    #[test]
    fn normals_are_unit() {
        for n in tetrahedron().normals() {
            assert!((n.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn axis_ray_hits_sphere_pole() {
        let sphere = fixtures::icosphere(30.0, 3, Vec3::zeros()).unwrap();
        let ray = Ray::new(Vec3::new(0.0, 0.0, 100.0), Vec3::new(0.0, 0.0, -1.0)).unwrap();
        let hit = ray_intersect(&sphere, &ray).expect("hit");
        assert!((hit.point - Vec3::new(0.0, 0.0, 30.0)).norm() < 1e-9);
        assert!((hit.distance - 70.0).abs() < 1e-9);
        // A facet normal next to the pole is within a few degrees of +z.
        assert!(hit.normal.dot(&Vec3::z()) > 6f64.to_radians().cos());
    }

    #[test]
    fn ray_pointing_away_misses() {
        let sphere = fixtures::icosphere(30.0, 3, Vec3::zeros()).unwrap();
        let ray = Ray::new(Vec3::new(0.0, 0.0, 100.0), Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert!(ray_intersect(&sphere, &ray).is_none());
        let grazing = Ray::new(Vec3::new(0.0, 40.0, 100.0), Vec3::new(0.0, 0.0, -1.0)).unwrap();
        assert!(ray_intersect(&sphere, &grazing).is_none());
    }

    #[test]
    fn ray_from_inside_sees_far_wall() {
        let sphere = fixtures::icosphere(30.0, 2, Vec3::zeros()).unwrap();
        let ray = Ray::new(Vec3::zeros(), Vec3::x()).unwrap();
        let hit = ray_intersect(&sphere, &ray).unwrap();
        assert!(hit.normal.dot(&ray.direction()) <= 0.0);
        assert!(hit.point.x > 29.0);
    }

    #[test]
    fn zero_direction_is_rejected() {
        assert!(Ray::new(Vec3::zeros(), Vec3::zeros()).is_err());
    }

    #[test]
    fn rotation_about_z_preserves_topology() {
        let m = fixtures::mug().unwrap();
        let r = m.rotated_about_z(0.3).unwrap();
        assert_eq!(m.triangles(), r.triangles());
        assert!((m.vertices()[5].norm() - r.vertices()[5].norm()).abs() < 1e-9);
    }
}
