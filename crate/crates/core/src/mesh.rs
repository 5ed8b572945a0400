//! Triangle meshes of tubes, swept along the rotation-minimizing frame.

use std::fmt::Write as _;
use std::path::Path;

use crate::constructions::rotation_minimizing_frame;
use crate::curve::DiscreteCurve;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::io::write_atomic;

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    /// Counterclockwise seen from outside.
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn edge_count(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count() as i64 + self.faces.len() as i64
    }

    /// Signed enclosed volume; positive for outward winding.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| self.vertices[f[0]].dot(&self.vertices[f[1]].cross(&self.vertices[f[2]])) / 6.0)
            .sum()
    }

    /// Wavefront OBJ text.
    pub fn to_obj(&self) -> String {
        let mut s = String::with_capacity(40 * (self.vertices.len() + self.faces.len()));
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_obj().as_bytes())
    }
}

/// Tube of the curve's radius with `segments` vertices per ring, one ring per curve
/// vertex. Closed components give tori; open ones are sealed with a fan at each end.
pub fn tube_mesh(c: &DiscreteCurve, segments: usize) -> Result<TriangleMesh> {
    let r = c.tube_radius();
    if !(r > 0.0) {
        return Err(Error::NoTube);
    }
    if segments < 3 {
        return Err(Error::InvalidInput("a tube needs at least 3 segments per ring".into()));
    }
    let mut mesh = TriangleMesh {
        vertices: Vec::with_capacity(c.len() * segments),
        faces: Vec::new(),
    };
    let frame = rotation_minimizing_frame(c, None);
    let tangents = c.tangents();
    for range in c.components() {
        let base = mesh.vertices.len();
        let m = range.len();
        for i in range {
            let n = frame.normals[i];
            let b = tangents[i].cross(&n);
            for j in 0..segments {
                let a = std::f64::consts::TAU * j as f64 / segments as f64;
                mesh.vertices.push(c.points()[i] + (n * a.cos() + b * a.sin()) * r);
            }
        }
        let at = |i: usize, j: usize| base + (i % m) * segments + j % segments;
        let rings = if c.is_closed() { m } else { m - 1 };
        for i in 0..rings {
            for j in 0..segments {
                mesh.faces.push([at(i, j), at(i, j + 1), at(i + 1, j + 1)]);
                mesh.faces.push([at(i, j), at(i + 1, j + 1), at(i + 1, j)]);
            }
        }
        if !c.is_closed() {
            for j in 1..segments - 1 {
                mesh.faces.push([at(0, 0), at(0, j + 1), at(0, j)]);
                mesh.faces.push([at(m - 1, 0), at(m - 1, j), at(m - 1, j + 1)]);
            }
        }
    }
    Ok(mesh)
}
