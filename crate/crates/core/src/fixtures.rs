//! The bundled synthetic object set.
//!
//! Five closed meshes sized like common household objects stand in for the
//! real scanned models: a squat can, a mug with a torus handle, a
//! hemispherical bowl, a ball and a foam brick. All sit on the z = 0 plane,
//! centred on the z axis, in millimetres. The PLY files under `fixtures/`
//! are generated by [`generate`] and shipped with the crate.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, TAU};

use crate::mesh::{read_ply, TriangleMesh};
use crate::{Error, Result, Vec3};

/// Declared dimensions of a bundled fixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureInfo {
    pub name: &'static str,
    pub summary: &'static str,
    /// Largest horizontal extent from the z axis, mm.
    pub radius: f64,
    pub height: f64,
}

pub const TUNA_CAN: FixtureInfo = FixtureInfo {
    name: "tuna_can",
    summary: "squat closed cylinder",
    radius: 42.5,
    height: 33.0,
};

pub const MUG: FixtureInfo = FixtureInfo {
    name: "mug",
    summary: "closed cylinder with a torus handle",
    radius: 40.0,
    height: 82.0,
};

pub const BOWL: FixtureInfo = FixtureInfo {
    name: "bowl",
    summary: "hemispherical shell, opening upwards",
    radius: 80.0,
    height: 80.0,
};

pub const BASEBALL: FixtureInfo = FixtureInfo {
    name: "baseball",
    summary: "icosphere",
    radius: 37.0,
    height: 74.0,
};

pub const FOAM_BRICK: FixtureInfo = FixtureInfo {
    name: "foam_brick",
    summary: "box with a square footprint",
    radius: 25.0,
    height: 75.0,
};

/// All bundled fixtures, in name order.
pub const ALL: [FixtureInfo; 5] = [BASEBALL, BOWL, FOAM_BRICK, MUG, TUNA_CAN];

const MUG_HANDLE_MAJOR: f64 = 22.0;
const MUG_HANDLE_MINOR: f64 = 6.0;
const BOWL_WALL: f64 = 4.0;

pub fn info(name: &str) -> Result<FixtureInfo> {
    ALL.iter()
        .copied()
        .find(|f| f.name == name)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown fixture `{name}`")))
}

/// Builds a fixture mesh from its generator.
pub fn generate(name: &str) -> Result<TriangleMesh> {
    match info(name)?.name {
        "tuna_can" => cylinder(TUNA_CAN.radius, TUNA_CAN.height, 72),
        "mug" => mug(),
        "bowl" => hemispherical_shell(BOWL.radius, BOWL.radius - BOWL_WALL, 24, 72),
        "baseball" => icosphere(BASEBALL.radius, 3, Vec3::new(0.0, 0.0, BASEBALL.radius)),
        "foam_brick" => cuboid(
            2.0 * FOAM_BRICK.radius,
            2.0 * FOAM_BRICK.radius,
            FOAM_BRICK.height,
        ),
        _ => unreachable!(),
    }
}

/// The shipped PLY text for a fixture.
pub fn bundled_ply(name: &str) -> Result<&'static str> {
    Ok(match info(name)?.name {
        "tuna_can" => include_str!("../fixtures/tuna_can.ply"),
        "mug" => include_str!("../fixtures/mug.ply"),
        "bowl" => include_str!("../fixtures/bowl.ply"),
        "baseball" => include_str!("../fixtures/baseball.ply"),
        "foam_brick" => include_str!("../fixtures/foam_brick.ply"),
        _ => unreachable!(),
    })
}

/// Parses the shipped PLY for a fixture.
pub fn load(name: &str) -> Result<TriangleMesh> {
    read_ply(bundled_ply(name)?.as_bytes(), 1.0)
}

/// PLY header comments recording a fixture's declared size.
pub fn ply_comments(info: &FixtureInfo) -> Vec<String> {
    vec![
        format!("fixture {} ({})", info.name, info.summary),
        format!("units mm radius {} height {}", info.radius, info.height),
    ]
}

pub fn mug() -> Result<TriangleMesh> {
    let body = cylinder(MUG.radius, MUG.height, 72)?;
    let handle = torus_xz(
        Vec3::new(
            MUG.radius + MUG_HANDLE_MAJOR - MUG_HANDLE_MINOR,
            0.0,
            MUG.height / 2.0,
        ),
        MUG_HANDLE_MAJOR,
        MUG_HANDLE_MINOR,
        48,
        16,
    )?;
    TriangleMesh::merge(&[body, handle])
}

/// Subdivided icosahedron projected onto a sphere. Level `n` has
/// `10 * 4^n + 2` vertices; level 3 gives 642.
pub fn icosphere(radius: f64, subdivisions: u32, center: Vec3) -> Result<TriangleMesh> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
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
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) / 2.0).normalize());
                verts.len() as u32 - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let verts = verts.into_iter().map(|v| center + v * radius).collect();
    TriangleMesh::new(verts, faces)
}

/// Closed cylinder around the z axis from z = 0 to `height`.
pub fn cylinder(radius: f64, height: f64, segments: u32) -> Result<TriangleMesh> {
    let mut verts = Vec::new();
    for z in [0.0, height] {
        for i in 0..segments {
            let a = TAU * i as f64 / segments as f64;
            verts.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bottom = verts.len() as u32;
    verts.push(Vec3::new(0.0, 0.0, 0.0));
    let top = verts.len() as u32;
    verts.push(Vec3::new(0.0, 0.0, height));
    let mut faces = Vec::new();
    for i in 0..segments {
        let j = (i + 1) % segments;
        let (b0, b1, t0, t1) = (i, j, i + segments, j + segments);
        faces.push([b0, b1, t1]);
        faces.push([b0, t1, t0]);
        faces.push([bottom, b1, b0]);
        faces.push([top, t0, t1]);
    }
    TriangleMesh::new(verts, faces)
}

/// Torus lying in the xz plane (axis along y) centred at `center`.
pub fn torus_xz(
    center: Vec3,
    major: f64,
    minor: f64,
    major_segments: u32,
    minor_segments: u32,
) -> Result<TriangleMesh> {
    let mut verts = Vec::new();
    for i in 0..major_segments {
        let u = TAU * i as f64 / major_segments as f64;
        let radial = Vec3::new(u.cos(), 0.0, u.sin());
        for j in 0..minor_segments {
            let v = TAU * j as f64 / minor_segments as f64;
            let p = radial * (major + minor * v.cos()) + Vec3::y() * (minor * v.sin());
            verts.push(center + p);
        }
    }
    let idx = |i: u32, j: u32| (i % major_segments) * minor_segments + (j % minor_segments);
    let mut faces = Vec::new();
    for i in 0..major_segments {
        for j in 0..minor_segments {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh::new(verts, faces)
}

/// Lower half of a thick spherical shell: outer radius `outer`, inner radius
/// `inner`, resting on z = 0 with its rim at z = `outer`.
pub fn hemispherical_shell(
    outer: f64,
    inner: f64,
    rings: u32,
    segments: u32,
) -> Result<TriangleMesh> {
    if !(inner > 0.0 && inner < outer) {
        return Err(Error::InvalidConfig(format!(
            "shell radii must satisfy 0 < inner < outer, got {inner} and {outer}"
        )));
    }
    let center = Vec3::new(0.0, 0.0, outer);
    let mut verts = Vec::new();
    // Per surface: south pole, then `rings` rings of `segments` vertices.
    let surface = |radius: f64, verts: &mut Vec<Vec3>| -> u32 {
        let start = verts.len() as u32;
        verts.push(center - Vec3::z() * radius);
        for r in 1..=rings {
            let polar = FRAC_PI_2 * r as f64 / rings as f64;
            for s in 0..segments {
                let a = TAU * s as f64 / segments as f64;
                let dir = Vec3::new(polar.sin() * a.cos(), polar.sin() * a.sin(), -polar.cos());
                verts.push(center + dir * radius);
            }
        }
        start
    };
    let outer_start = surface(outer, &mut verts);
    let inner_start = surface(inner, &mut verts);
    let ring = |start: u32, r: u32, s: u32| start + 1 + (r - 1) * segments + (s % segments);
    let mut faces = Vec::new();
    for (start, flip) in [(outer_start, false), (inner_start, true)] {
        let mut push = |t: [u32; 3]| faces.push(if flip { [t[0], t[2], t[1]] } else { t });
        for s in 0..segments {
            push([start, ring(start, 1, s + 1), ring(start, 1, s)]);
        }
        for r in 1..rings {
            for s in 0..segments {
                let (a, b) = (ring(start, r, s), ring(start, r, s + 1));
                let (c, d) = (ring(start, r + 1, s + 1), ring(start, r + 1, s));
                push([a, b, c]);
                push([a, c, d]);
            }
        }
    }
    for s in 0..segments {
        let (o0, o1) = (ring(outer_start, rings, s), ring(outer_start, rings, s + 1));
        let (i0, i1) = (ring(inner_start, rings, s), ring(inner_start, rings, s + 1));
        faces.push([o0, o1, i1]);
        faces.push([o0, i1, i0]);
    }
    TriangleMesh::new(verts, faces)
}

/// Axis-aligned box centred on the z axis, base on z = 0.
pub fn cuboid(size_x: f64, size_y: f64, size_z: f64) -> Result<TriangleMesh> {
    let (hx, hy) = (size_x / 2.0, size_y / 2.0);
    let mut verts = Vec::new();
    for z in [0.0, size_z] {
        for (x, y) in [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)] {
            verts.push(Vec3::new(x, y, z));
        }
    }
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    TriangleMesh::new(verts, faces)
}
