//! OFF and OBJ ingestion, and an OFF writer for intrinsic meshes.
//!
//! Readers take vertex positions only to measure edge lengths; positions are
//! dropped once the mesh is built. Polygonal faces are split into fans.
//!
//! Meshes without an embedding are written as OFF with zero coordinates plus
//! comment records that carry the intrinsic data:
//!
//! ```text
//! # intrinsic-edge <tail> <head> <length>
//! # intrinsic-face <e0> <e1> <e2>
//! ```
//!
//! One edge record per edge (in edge order) and one face record per face.
//! When these records are present the reader uses them instead of positions.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::IntrinsicMesh;

/// Supported mesh file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension().and_then(|e| e.to_str()).and_then(|e| e.parse().ok())
    }
}

impl FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(Self::Off),
            "obj" => Ok(Self::Obj),
            other => Err(Error::Precondition(format!("unknown mesh format {other:?}"))),
        }
    }
}

/// Reads a mesh in the given format.
pub fn load_mesh<R: Read>(mut source: R, format: MeshFormat) -> Result<IntrinsicMesh> {
    let mut text = String::new();
    source.read_to_string(&mut text).map_err(|e| match e.kind() {
        std::io::ErrorKind::InvalidData => Error::Parse { line: 0, message: "input is not valid UTF-8".into() },
        _ => Error::Io(e),
    })?;
    match format {
        MeshFormat::Off => read_off(&text),
        MeshFormat::Obj => read_obj(&text),
    }
}

/// Reads a mesh file, choosing the format from its extension.
pub fn load_mesh_file(path: &Path) -> Result<IntrinsicMesh> {
    let format = MeshFormat::from_path(path)
        .ok_or_else(|| Error::Precondition(format!("cannot infer mesh format of {}", path.display())))?;
    load_mesh(fs::File::open(path)?, format)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn number<T: FromStr>(token: &str, line: usize, what: &str) -> Result<T> {
    token.parse().map_err(|_| parse_err(line, format!("invalid {what} {token:?}")))
}

fn fan(polygon: &[usize], line: usize, faces: &mut Vec<[usize; 3]>) -> Result<()> {
    if polygon.len() < 3 {
        return Err(parse_err(line, format!("face with {} vertices", polygon.len())));
    }
    for k in 1..polygon.len() - 1 {
        faces.push([polygon[0], polygon[k], polygon[k + 1]]);
    }
    Ok(())
}

fn distance(p: &[[f64; 3]], a: usize, b: usize) -> f64 {
    let d = [p[a][0] - p[b][0], p[a][1] - p[b][1], p[a][2] - p[b][2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

#[derive(Default)]
struct Intrinsic {
    edges: Vec<[usize; 2]>,
    lengths: Vec<f64>,
    face_edges: Vec<[usize; 3]>,
}

impl Intrinsic {
    fn record(&mut self, body: &str, line: usize) -> Result<()> {
        let mut tokens = body.split_whitespace();
        match tokens.next() {
            Some("intrinsic-edge") => {
                let v: Vec<&str> = tokens.collect();
                if v.len() != 3 {
                    return Err(parse_err(line, "intrinsic-edge needs tail, head and length"));
                }
                self.edges.push([number(v[0], line, "vertex index")?, number(v[1], line, "vertex index")?]);
                self.lengths.push(number(v[2], line, "length")?);
            }
            Some("intrinsic-face") => {
                let v: Vec<&str> = tokens.collect();
                if v.len() != 3 {
                    return Err(parse_err(line, "intrinsic-face needs three edge indices"));
                }
                self.face_edges.push([
                    number(v[0], line, "edge index")?,
                    number(v[1], line, "edge index")?,
                    number(v[2], line, "edge index")?,
                ]);
            }
            _ => {}
        }
        Ok(())
    }
}

/// Parses OFF text.
pub fn read_off(text: &str) -> Result<IntrinsicMesh> {
    let mut intrinsic = Intrinsic::default();
    let mut tokens: Vec<(usize, &str)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let (data, comment) = match raw.find('#') {
            Some(p) => (&raw[..p], Some(&raw[p + 1..])),
            None => (raw, None),
        };
        if let Some(c) = comment {
            intrinsic.record(c, line)?;
        }
        tokens.extend(data.split_whitespace().map(|t| (line, t)));
    }

    let mut it = tokens.into_iter();
    let mut next = |what: &str| it.next().ok_or_else(|| parse_err(text.lines().count(), format!("missing {what}")));
    let (line, magic) = next("OFF header")?;
    if magic != "OFF" {
        return Err(parse_err(line, format!("expected OFF header, found {magic:?}")));
    }
    let (line, nv) = next("vertex count")?;
    let nv: usize = number(nv, line, "vertex count")?;
    let (line, nf) = next("face count")?;
    let nf: usize = number(nf, line, "face count")?;
    let (line, ne) = next("edge count")?;
    let _: usize = number(ne, line, "edge count")?;

    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        let mut p = [0.0f64; 3];
        let mut vertex_line = 0;
        for c in &mut p {
            let (line, tok) = next("vertex coordinate")?;
            *c = number(tok, line, "coordinate")?;
            vertex_line = line;
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err(parse_err(vertex_line, "non-finite coordinate"));
        }
        positions.push(p);
    }
    let mut faces = Vec::with_capacity(nf);
    let mut polygons = 0;
    for _ in 0..nf {
        let (line, tok) = next("face size")?;
        let size: usize = number(tok, line, "face size")?;
        let mut polygon = Vec::with_capacity(size);
        for _ in 0..size {
            let (l, tok) = next("face vertex")?;
            if l != line {
                return Err(parse_err(l, "face record continues onto another line"));
            }
            let v: usize = number(tok, line, "vertex index")?;
            if v >= nv {
                return Err(parse_err(line, format!("vertex index {v} out of range")));
            }
            polygon.push(v);
        }
        if size != 3 {
            polygons += 1;
        }
        fan(&polygon, line, &mut faces)?;
    }

    if intrinsic.edges.is_empty() && intrinsic.face_edges.is_empty() {
        return IntrinsicMesh::from_faces(nv, faces, |a, b| distance(&positions, a, b));
    }
    if polygons > 0 || intrinsic.face_edges.len() != faces.len() {
        return Err(parse_err(0, "intrinsic face records do not match the triangle records"));
    }
    IntrinsicMesh::from_parts(nv, faces, intrinsic.face_edges, intrinsic.edges, intrinsic.lengths)
}

/// Parses the `v` and `f` records of OBJ text; every other record is ignored.
pub fn read_obj(text: &str) -> Result<IntrinsicMesh> {
    let mut positions: Vec<[f64; 3]> = Vec::new();
    let mut faces = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let data = raw.split('#').next().unwrap_or("");
        let mut tokens = data.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<&str> = tokens.collect();
                if coords.len() < 3 {
                    return Err(parse_err(line, "vertex needs three coordinates"));
                }
                let mut p = [0.0f64; 3];
                for (c, tok) in p.iter_mut().zip(&coords) {
                    *c = number(tok, line, "coordinate")?;
                }
                if p.iter().any(|c| !c.is_finite()) {
                    return Err(parse_err(line, "non-finite coordinate"));
                }
                positions.push(p);
            }
            Some("f") => {
                let mut polygon = Vec::new();
                for tok in tokens {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = number(head, line, "vertex index")?;
                    let resolved = match i {
                        i if i > 0 => i - 1,
                        i if i < 0 => positions.len() as i64 + i,
                        _ => return Err(parse_err(line, "vertex index 0")),
                    };
                    if resolved < 0 || resolved as usize >= positions.len() {
                        return Err(parse_err(line, format!("vertex index {i} out of range")));
                    }
                    polygon.push(resolved as usize);
                }
                fan(&polygon, line, &mut faces)?;
            }
            _ => {}
        }
    }
    IntrinsicMesh::from_faces(positions.len(), faces, |a, b| distance(&positions, a, b))
}

/// Writes `mesh` as OFF with intrinsic records. Each `header` line is
/// emitted as a comment after the `OFF` line.
pub fn write_off<W: Write>(mesh: &IntrinsicMesh, header: &[String], mut out: W) -> Result<()> {
    let mut s = String::from("OFF\n");
    for h in header {
        for l in h.lines() {
            let _ = writeln!(s, "# {l}");
        }
    }
    for (&[a, b], l) in mesh.edges().iter().zip(mesh.lengths()) {
        let _ = writeln!(s, "# intrinsic-edge {a} {b} {l:?}");
    }
    for fe in mesh.face_edges() {
        let _ = writeln!(s, "# intrinsic-face {} {} {}", fe[0], fe[1], fe[2]);
    }
    let _ = writeln!(s, "{} {} {}", mesh.vertex_count(), mesh.face_count(), mesh.edge_count());
    for _ in 0..mesh.vertex_count() {
        s.push_str("0 0 0\n");
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::generate_genus2;

    const TETRA: &str = "OFF\n# regular tetrahedron\n4 4 6\n1 1 1\n1 -1 -1\n-1 1 -1\n-1 -1 1\n3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n";

    #[test]
    fn off_tetrahedron() {
        let m = read_off(TETRA).unwrap();
        assert_eq!((m.vertex_count(), m.edge_count(), m.face_count()), (4, 6, 4));
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.lengths().iter().all(|&l| (l - 8f64.sqrt()).abs() < 1e-15));
    }

    #[test]
    fn obj_quads_are_split() {
        let cube = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n\
                    f 1 4 3 2\nf 5 6 7 8\nf 1 2 6 5\nf 2 3 7 6\nf 3 4 8 7\nf 4/1 1/1 5/1 8/1\n";
        let m = read_obj(cube).unwrap();
        assert_eq!((m.vertex_count(), m.edge_count(), m.face_count()), (8, 18, 12));
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = TETRA.replace("1 -1 -1", "1 x -1");
        assert!(matches!(read_off(&bad), Err(Error::Parse { line: 5, .. })));
        assert!(matches!(read_off("OFF\n4 4 6\n0 0 0\n"), Err(Error::Parse { .. })));
        assert!(matches!(read_off("PLY\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_obj("v 0 0 0\nf 1 2 3\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn zero_length_edge_names_a_face() {
        let bad = TETRA.replace("1 -1 -1", "1 1 1");
        assert!(matches!(read_off(&bad), Err(Error::DegenerateFace { .. })));
    }

    #[test]
    fn intrinsic_round_trip_is_exact() {
        let m = generate_genus2(2, 0.05, 11).unwrap();
        let mut buf = Vec::new();
        write_off(&m, &["generated for a test".into()], &mut buf).unwrap();
        let back = load_mesh(buf.as_slice(), MeshFormat::Off).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(MeshFormat::from_path(Path::new("a/b.OFF")), Some(MeshFormat::Off));
        assert_eq!(MeshFormat::from_path(Path::new("b.obj")), Some(MeshFormat::Obj));
        assert_eq!(MeshFormat::from_path(Path::new("b.ply")), None);
    }
}
