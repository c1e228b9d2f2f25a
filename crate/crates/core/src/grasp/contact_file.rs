//! Per-object contact files: the hand-off point between simulation and
//! training.
//!
//! ```text
//! contacts <object> <L> <hand-fingerprint>
//! <pose> m1x m1y m1z n1x n1y n1z m2x ... n3z
//! ```
//!
//! One record per valid pose; missing poses are invalid. Decimals are
//! written in shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Contact, GraspObservation, PoseGrid};
use crate::{Error, Result, Vec3};

pub fn write_contacts(grid: &PoseGrid) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "contacts {} {} {}",
        grid.object,
        grid.poses(),
        grid.hand_fingerprint
    )
    .unwrap();
    for obs in grid.observations.iter().flatten() {
        write!(out, "{}", obs.pose_index).unwrap();
        for c in &obs.contacts {
            for v in c.position.iter().chain(c.normal.iter()) {
                write!(out, " {v}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

pub fn read_contacts(text: &str) -> Result<PoseGrid> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty contact file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [magic, object, poses, fingerprint] = fields.as_slice() else {
        return Err(Error::Parse(format!("bad contact header `{header}`")));
    };
    if *magic != "contacts" {
        return Err(Error::Parse(format!("bad contact header `{header}`")));
    }
    let poses: usize = poses
        .parse()
        .map_err(|_| Error::Parse(format!("bad pose count `{poses}`")))?;
    if poses == 0 {
        return Err(Error::Parse("contact file declares zero poses".into()));
    }
    let mut observations = vec![None; poses];
    for (lineno, line) in lines {
        let err = |msg: &str| Error::Parse(format!("line {}: {msg}", lineno + 1));
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 19 {
            return Err(err(&format!("expected 19 fields, found {}", tokens.len())));
        }
        let pose: usize = tokens[0].parse().map_err(|_| err("bad pose index"))?;
        if pose >= poses {
            return Err(err(&format!("pose {pose} outside [0, {poses})")));
        }
        if observations[pose].is_some() {
            return Err(err(&format!("duplicate pose {pose}")));
        }
        let values = tokens[1..]
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| err(&format!("bad number `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let contact = |k: usize| {
            let v = &values[6 * k..6 * k + 6];
            let position = Vec3::new(v[0], v[1], v[2]);
            let normal = Vec3::new(v[3], v[4], v[5]);
            // Stored normals are already unit length; keep their exact bits.
            let unit = (normal.norm() - 1.0).abs() < 1e-6;
            if !unit || !position.iter().all(|c| c.is_finite()) {
                return Err(err("bad contact"));
            }
            Ok(Contact { position, normal })
        };
        let contacts = [contact(0)?, contact(1)?, contact(2)?];
        observations[pose] = Some(GraspObservation::new(pose, contacts)?);
    }
    Ok(PoseGrid {
        object: object.to_string(),
        hand_fingerprint: fingerprint.to_string(),
        observations,
    })
}

pub fn save_contacts(grid: &PoseGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_contacts(grid)).map_err(|e| Error::io(path, e))
}

pub fn load_contacts(path: impl AsRef<Path>) -> Result<PoseGrid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_contacts(&text)
}
