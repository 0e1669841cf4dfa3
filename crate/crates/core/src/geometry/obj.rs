//! Wavefront OBJ subset: `v`, `vn` and `f` records. Everything else is skipped.

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{Mesh, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse-error at line {line}: {message}")]
pub struct ObjError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ObjError {
    ObjError {
        line,
        message: message.into(),
    }
}

fn parse_floats(line: usize, parts: &[&str], need: usize) -> Result<Vec3, ObjError> {
    if parts.len() < need {
        return Err(err(line, format!("expected {need} coordinates")));
    }
    let mut c = [0.0; 3];
    for (slot, s) in c.iter_mut().zip(parts) {
        *slot = s.parse::<f64>().map_err(|_| err(line, format!("bad number `{s}`")))?;
        if !slot.is_finite() {
            return Err(err(line, format!("non-finite number `{s}`")));
        }
    }
    Ok(Vec3::from(c))
}

/// Resolves a 1-based or negative (relative) OBJ index against `count` items.
fn resolve(line: usize, raw: &str, count: usize) -> Result<usize, ObjError> {
    let i: i64 = raw.parse().map_err(|_| err(line, format!("bad index `{raw}`")))?;
    let idx = match i {
        0 => return Err(err(line, "index 0 is not valid")),
        i if i > 0 => i - 1,
        i => count as i64 + i,
    };
    if idx < 0 || idx as usize >= count {
        return Err(err(line, format!("index {i} out of range ({count} defined)")));
    }
    Ok(idx as usize)
}

/// Parses OBJ text. Polygons are fan-triangulated from their first corner;
/// triangles that repeat a vertex are dropped. A vertex takes the normal of
/// the first face corner that references it with one.
pub fn load_obj(text: &str) -> Result<Mesh, ObjError> {
    let mut vertices = Vec::new();
    let mut file_normals: Vec<Vec3> = Vec::new();
    let mut vertex_normal: Vec<Option<usize>> = Vec::new();
    let mut triangles = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut parts = content.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        match tag {
            "v" => {
                vertices.push(parse_floats(line, &rest, 3)?);
                vertex_normal.push(None);
            }
            "vn" => {
                let mut nv = parse_floats(line, &rest, 3)?;
                let len = nv.norm();
                if len > 0.0 && (len - 1.0).abs() > 1e-9 {
                    nv = nv * (1.0 / len);
                }
                file_normals.push(nv);
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(err(line, "face needs at least 3 corners"));
                }
                let mut corners = Vec::with_capacity(rest.len());
                for c in &rest {
                    let mut fields = c.split('/');
                    let vi = resolve(line, fields.next().unwrap_or(""), vertices.len())?;
                    let _tex = fields.next();
                    if let Some(ni) = fields.next().filter(|s| !s.is_empty()) {
                        let ni = resolve(line, ni, file_normals.len())?;
                        vertex_normal[vi].get_or_insert(ni);
                    }
                    corners.push(vi as u32);
                }
                for k in 1..corners.len() - 1 {
                    let t = [corners[0], corners[k], corners[k + 1]];
                    if t[0] != t[1] && t[1] != t[2] && t[0] != t[2] {
                        triangles.push(t);
                    }
                }
            }
            _ => {}
        }
    }

    let normals = vertex_normal
        .iter()
        .map(|n| n.map(|i| file_normals[i]).unwrap_or(Vec3::ZERO))
        .collect();
    Ok(Mesh {
        vertices,
        normals,
        triangles,
    })
}

/// Writes `v`, then `vn` (one per vertex, only if any normal is non-zero),
/// then `f` records. Coordinates use shortest round-trip formatting.
pub fn save_obj(mesh: &Mesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    let with_normals = mesh.normals.iter().any(|n| *n != Vec3::ZERO);
    if with_normals {
        for n in &mesh.normals {
            let _ = writeln!(out, "vn {} {} {}", n.x, n.y, n.z);
        }
    }
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| i + 1);
        if with_normals {
            let _ = writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}");
        } else {
            let _ = writeln!(out, "f {a} {b} {c}");
        }
    }
    out
}
