//! OFF and OBJ readers and writers.
//!
//! Polygon faces are fan-triangulated from their first vertex. Coordinates are
//! written with Rust's shortest round-trip float formatting, so a save/load
//! cycle reproduces every `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::{Error, Mesh, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    /// Picks a format from the file extension.
    pub fn from_path(path: &Path) -> Option<MeshFormat> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "off" => Some(MeshFormat::Off),
            "obj" => Some(MeshFormat::Obj),
            _ => None,
        }
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<Mesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    match format {
        MeshFormat::Off => parse_off(&text, &name),
        MeshFormat::Obj => parse_obj(&text, &name),
    }
}

/// Loads a mesh, inferring the format from the extension.
pub fn load_mesh_auto(path: &Path) -> Result<Mesh> {
    let format = MeshFormat::from_path(path).ok_or_else(|| {
        Error::Format(format!(
            "{}: unknown mesh extension (expected .off or .obj)",
            path.display()
        ))
    })?;
    load_mesh(path, format)
}

pub fn save_mesh(mesh: &Mesh, path: &Path, format: MeshFormat) -> Result<()> {
    let text = match format {
        MeshFormat::Off => write_off(mesh),
        MeshFormat::Obj => write_obj(mesh),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(name: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: name.to_string(),
        line,
        message: message.into(),
    }
}

fn fan(poly: &[u32], name: &str, line: usize, out: &mut Vec<[u32; 3]>) -> Result<()> {
    if poly.len() < 3 {
        return Err(parse_err(
            name,
            line,
            format!("non-triangulatable face with {} vertices", poly.len()),
        ));
    }
    for i in 1..poly.len() - 1 {
        let tri = [poly[0], poly[i], poly[i + 1]];
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(parse_err(
                name,
                line,
                format!("degenerate face {:?}", tri),
            ));
        }
        out.push(tri);
    }
    Ok(())
}

fn out_of_range(name: &str, line: usize, index: i64, count: usize) -> Error {
    parse_err(
        name,
        line,
        format!("out-of-range index {index} (vertex count {count})"),
    )
}

/// Parses ASCII OFF text.
pub fn parse_off(text: &str, name: &str) -> Result<Mesh> {
    // (line number, tokens) for every non-blank, non-comment line
    let mut lines = text.lines().enumerate().filter_map(|(i, raw)| {
        let content = raw.split('#').next().unwrap_or("").trim();
        (!content.is_empty()).then(|| (i + 1, content))
    });

    let (header_line, header) = lines
        .next()
        .ok_or_else(|| parse_err(name, 1, "empty file, expected OFF header"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| parse_err(name, header_line, "missing OFF header"))?
        .trim();
    // Some exporters put the counts on the header line ("OFF 8 12 0" or "OFF8 12 0").
    let (count_line, counts) = if rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| parse_err(name, header_line, "missing counts line"))?
    } else {
        (header_line, rest)
    };
    let counts: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(name, count_line, "invalid counts line"))?;
    if counts.len() < 2 {
        return Err(parse_err(name, count_line, "counts line needs V F [E]"));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, content) = lines
            .next()
            .ok_or_else(|| parse_err(name, count_line, "unexpected end of file in vertices"))?;
        let xyz: Vec<f64> = content
            .split_whitespace()
            .take(3)
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(name, ln, "invalid vertex coordinate"))?;
        if xyz.len() < 3 {
            return Err(parse_err(name, ln, "vertex needs 3 coordinates"));
        }
        vertices.push([xyz[0], xyz[1], xyz[2]]);
    }

    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, content) = lines
            .next()
            .ok_or_else(|| parse_err(name, count_line, "unexpected end of file in faces"))?;
        let mut tokens = content.split_whitespace();
        let n: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(name, ln, "invalid face vertex count"))?;
        let mut poly = Vec::with_capacity(n);
        for _ in 0..n {
            let idx: i64 = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(name, ln, "invalid or missing face index"))?;
            if idx < 0 || idx as usize >= nv {
                return Err(out_of_range(name, ln, idx, nv));
            }
            poly.push(idx as u32);
        }
        fan(&poly, name, ln, &mut faces)?;
    }
    Mesh::new(vertices, faces)
}

/// Parses Wavefront OBJ text. Only `v` and `f` records are read.
pub fn parse_obj(text: &str, name: &str) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut pending: Vec<(usize, Vec<i64>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let xyz: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| parse_err(name, ln, "invalid vertex coordinate"))?;
                if xyz.len() < 3 {
                    return Err(parse_err(name, ln, "vertex needs 3 coordinates"));
                }
                vertices.push([xyz[0], xyz[1], xyz[2]]);
            }
            Some("f") => {
                let idx: Vec<i64> = tokens
                    .map(|t| t.split('/').next().unwrap_or("").parse::<i64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| parse_err(name, ln, "invalid face index"))?;
                // negative indices are relative to the vertices read so far
                let resolved = idx
                    .into_iter()
                    .map(|k| if k < 0 { vertices.len() as i64 + k + 1 } else { k })
                    .collect();
                pending.push((ln, resolved));
            }
            _ => {}
        }
    }
    let nv = vertices.len();
    let mut faces = Vec::with_capacity(pending.len());
    for (ln, idx) in pending {
        let mut poly = Vec::with_capacity(idx.len());
        for k in idx {
            if k < 1 || (k - 1) as usize >= nv {
                return Err(out_of_range(name, ln, k - 1, nv));
            }
            poly.push((k - 1) as u32);
        }
        fan(&poly, name, ln, &mut faces)?;
    }
    Mesh::new(vertices, faces)
}

pub fn write_off(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("OFF\n");
    let _ = writeln!(s, "{} {} {}", mesh.num_vertices(), mesh.num_faces(), mesh.num_edges());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?} {:?}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

pub fn write_obj(mesh: &Mesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const TETRA_OFF: &str = "OFF\n# tetrahedron\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2\n3 0 3 1\n3 1 3 2\n3 0 2 3\n";

    #[test]
    fn off_tetrahedron() {
        let m = parse_off(TETRA_OFF, "t.off").unwrap();
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.num_faces(), 4);
        assert!(m.adjacency().iter().all(|a| a.len() == 3));
    }

    #[test]
    fn off_counts_on_header_line() {
        let text = "OFF4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n4 0 1 2 3\n";
        let m = parse_off(text, "q.off").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_quad_is_fanned() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1 2 3 4\n";
        let m = parse_obj(text, "q.obj").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_slash_and_negative_indices() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3/1/1 -2//2 -1\n";
        let m = parse_obj(text, "n.obj").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn off_out_of_range_reports_line() {
        let text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 3\n";
        let err = parse_off(text, "bad.off").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("out-of-range index"), "{msg}");
        assert!(msg.contains("bad.off:6"), "{msg}");
    }

    #[test]
    fn off_parse_error_has_line() {
        let text = "OFF\n3 1 0\n0 0 0\n1 zero 0\n0 1 0\n3 0 1 2\n";
        match parse_off(text, "x.off") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn two_vertex_face_is_rejected() {
        let text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n2 0 1\n";
        let msg = parse_off(text, "x.off").unwrap_err().to_string();
        assert!(msg.contains("non-triangulatable"), "{msg}");
    }

    #[test]
    fn missing_header() {
        assert!(parse_off("3 1 0\n", "x.off").is_err());
    }

    #[test]
    fn save_load_roundtrip_both_formats() {
        let v = vec![
            [0.1, -0.7, 1.0 / 3.0],
            [1e-17, 2.5, -0.0],
            [std::f64::consts::PI, 0.2, 0.3],
            [0.9, 0.8, 0.7],
        ];
        let m = Mesh::new(v, vec![[0, 1, 2], [0, 3, 1], [1, 3, 2], [0, 2, 3]]).unwrap();
        let off = parse_off(&write_off(&m), "rt.off").unwrap();
        let obj = parse_obj(&write_obj(&m), "rt.obj").unwrap();
        assert_eq!(off, m);
        assert_eq!(obj, m);
    }
}
