//! Text mesh and point-cloud formats: OBJ, OFF and ASCII PLY meshes; XYZ and
//! ASCII PLY point clouds.
//!
//! Polygons with more than three corners are fan-triangulated from their
//! first corner. Numbers are written with 9 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{PointCloud, TriangleMesh};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Off,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = extension(path);
        match ext.as_str() {
            "obj" => Ok(MeshFormat::Obj),
            "off" => Ok(MeshFormat::Off),
            "ply" => Ok(MeshFormat::Ply),
            _ => Err(Error::UnsupportedFormat(format!("mesh extension {ext:?} of {}", path.display()))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFormat {
    Xyz,
    Ply,
}

impl PointFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = extension(path);
        match ext.as_str() {
            "xyz" | "txt" => Ok(PointFormat::Xyz),
            "ply" => Ok(PointFormat::Ply),
            _ => Err(Error::UnsupportedFormat(format!("point-cloud extension {ext:?} of {}", path.display()))),
        }
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default()
}

/// Loads a mesh, inferring the format from the extension when not given.
pub fn load_mesh(path: impl AsRef<Path>, format: Option<MeshFormat>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let format = match format {
        Some(f) => f,
        None => MeshFormat::from_path(path)?,
    };
    let text = fs::read_to_string(path)?;
    parse_mesh(&text, format)
}

pub fn parse_mesh(text: &str, format: MeshFormat) -> Result<TriangleMesh> {
    let (vertices, polygons) = match format {
        MeshFormat::Obj => parse_obj(text)?,
        MeshFormat::Off => parse_off(text)?,
        MeshFormat::Ply => {
            let ply = parse_ply(text)?;
            (ply.vertices, ply.faces)
        }
    };
    let mut faces = Vec::new();
    for (line, poly) in polygons {
        if poly.len() < 3 {
            return Err(parse_err(line, format!("face has {} corners", poly.len())));
        }
        if let Some(&bad) = poly.iter().find(|&&i| i >= vertices.len()) {
            return Err(parse_err(
                line,
                format!("face index {bad} out of range for {} vertices", vertices.len()),
            ));
        }
        for k in 1..poly.len() - 1 {
            let tri = [poly[0], poly[k], poly[k + 1]];
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(parse_err(line, format!("face repeats a vertex: {poly:?}")));
            }
            faces.push(tri);
        }
    }
    TriangleMesh::new(vertices, faces)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| parse_err(line, format!("expected a number, found {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite coordinate {tok:?}")));
    }
    Ok(v)
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse().map_err(|_| parse_err(line, format!("expected an index, found {tok:?}")))
}

fn parse_point<'a>(mut toks: impl Iterator<Item = &'a str>, line: usize) -> Result<Vec3> {
    let mut c = [0.0; 3];
    for slot in &mut c {
        let tok = toks.next().ok_or_else(|| parse_err(line, "expected three coordinates"))?;
        *slot = parse_f64(tok, line)?;
    }
    Ok(Vec3::new(c[0], c[1], c[2]))
}

type Polygons = Vec<(usize, Vec<usize>)>;

fn parse_obj(text: &str) -> Result<(Vec<Vec3>, Polygons)> {
    let mut vertices = Vec::new();
    let mut polygons = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("v") => vertices.push(parse_point(toks, line)?),
            Some("f") => {
                let mut poly = Vec::new();
                for tok in toks {
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| parse_err(line, format!("bad face index {tok:?}")))?;
                    let resolved = match idx {
                        0 => return Err(parse_err(line, "OBJ indices are 1-based")),
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = vertices.len() as i64 + i;
                            if back < 0 {
                                return Err(parse_err(line, format!("relative index {i} before first vertex")));
                            }
                            back as usize
                        }
                    };
                    poly.push(resolved);
                }
                polygons.push((line, poly));
            }
            _ => {}
        }
    }
    Ok((vertices, polygons))
}

/// Non-empty, comment-stripped lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_off(text: &str) -> Result<(Vec<Vec3>, Polygons)> {
    let mut lines = content_lines(text);
    let (line, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let mut head = header.split_whitespace();
    if head.next() != Some("OFF") {
        return Err(parse_err(line, format!("expected OFF header, found {header:?}")));
    }
    let mut counts: Vec<&str> = head.collect();
    let mut counts_line = line;
    if counts.is_empty() {
        let (l, c) = lines.next().ok_or_else(|| parse_err(line, "missing counts line"))?;
        counts = c.split_whitespace().collect();
        counts_line = l;
    }
    if counts.len() < 2 {
        return Err(parse_err(counts_line, "counts line needs vertex and face counts"));
    }
    let nv = parse_usize(counts[0], counts_line)?;
    let nf = parse_usize(counts[1], counts_line)?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, c) = lines.next().ok_or_else(|| parse_err(counts_line, "file ends inside vertex list"))?;
        vertices.push(parse_point(c.split_whitespace(), l)?);
    }
    let mut polygons = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, c) = lines.next().ok_or_else(|| parse_err(counts_line, "file ends inside face list"))?;
        let mut toks = c.split_whitespace();
        let arity = parse_usize(toks.next().unwrap_or(""), l)?;
        let poly = toks
            .take(arity)
            .map(|t| parse_usize(t, l))
            .collect::<Result<Vec<_>>>()?;
        if poly.len() != arity {
            return Err(parse_err(l, format!("face declares {arity} corners but lists {}", poly.len())));
        }
        polygons.push((l, poly));
    }
    Ok((vertices, polygons))
}

struct PlyData {
    vertices: Vec<Vec3>,
    faces: Polygons,
}

#[derive(Debug)]
enum PlyProperty {
    Scalar(String),
    List(String),
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

fn parse_ply(text: &str) -> Result<PlyData> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let (line, l) = lines.next().ok_or_else(|| parse_err(1, "header is not terminated"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(Error::UnsupportedFormat(format!("PLY format {other} (only ascii is supported)")));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: parse_usize(count, line)?,
                properties: Vec::new(),
            }),
            ["property", "list", _, _, name] => elements
                .last_mut()
                .ok_or_else(|| parse_err(line, "property before any element"))?
                .properties
                .push(PlyProperty::List(name.to_string())),
            ["property", _, name] => elements
                .last_mut()
                .ok_or_else(|| parse_err(line, "property before any element"))?
                .properties
                .push(PlyProperty::Scalar(name.to_string())),
            ["end_header"] => break,
            _ => return Err(parse_err(line, format!("unrecognised header line {l:?}"))),
        }
    }

    let mut data = PlyData { vertices: Vec::new(), faces: Vec::new() };
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    for element in &elements {
        for _ in 0..element.count {
            let (line, l) = body
                .next()
                .ok_or_else(|| parse_err(0, format!("file ends inside element {:?}", element.name)))?;
            let mut toks = l.split_whitespace();
            let mut xyz = [None; 3];
            let mut indices = None;
            for prop in &element.properties {
                match prop {
                    PlyProperty::Scalar(name) => {
                        let tok = toks.next().ok_or_else(|| parse_err(line, "too few values"))?;
                        let slot = match name.as_str() {
                            "x" => Some(0),
                            "y" => Some(1),
                            "z" => Some(2),
                            _ => None,
                        };
                        if let Some(k) = slot {
                            xyz[k] = Some(parse_f64(tok, line)?);
                        }
                    }
                    PlyProperty::List(name) => {
                        let n = parse_usize(toks.next().ok_or_else(|| parse_err(line, "missing list length"))?, line)?;
                        let items: Vec<&str> = toks.by_ref().take(n).collect();
                        if items.len() != n {
                            return Err(parse_err(line, "list shorter than its declared length"));
                        }
                        if indices.is_none() && (name == "vertex_indices" || name == "vertex_index") {
                            indices = Some(items.iter().map(|t| parse_usize(t, line)).collect::<Result<Vec<_>>>()?);
                        }
                    }
                }
            }
            match element.name.as_str() {
                "vertex" => {
                    let [Some(x), Some(y), Some(z)] = xyz else {
                        return Err(parse_err(line, "vertex element lacks x, y or z"));
                    };
                    data.vertices.push(Vec3::new(x, y, z));
                }
                "face" => {
                    let poly = indices.ok_or_else(|| parse_err(line, "face element lacks vertex_indices"))?;
                    data.faces.push((line, poly));
                }
                _ => {}
            }
        }
    }
    Ok(data)
}

/// Formats with 9 significant digits, without an exponent for ordinary
/// magnitudes.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    if !(-5..=15).contains(&magnitude) {
        return format!("{v:.8e}");
    }
    let decimals = (8 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // Rounding may carry into a new leading digit; that is still 9 digits.
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.');
        if trimmed == "-0" { "0".to_string() } else { trimmed.to_string() }
    } else {
        s
    }
}

fn point_line(p: &Vec3) -> String {
    format!("{} {} {}", format_sig9(p.x), format_sig9(p.y), format_sig9(p.z))
}

pub fn format_points(cloud: &PointCloud, format: PointFormat) -> String {
    let mut out = String::new();
    if format == PointFormat::Ply {
        out.push_str("ply\nformat ascii 1.0\n");
        let _ = writeln!(out, "element vertex {}", cloud.len());
        out.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    }
    for p in cloud.points() {
        out.push_str(&point_line(p));
        out.push('\n');
    }
    out
}

pub fn save_points(cloud: &PointCloud, path: impl AsRef<Path>, format: PointFormat) -> Result<()> {
    fs::write(path, format_points(cloud, format))?;
    Ok(())
}

pub fn parse_points(text: &str, format: PointFormat) -> Result<PointCloud> {
    match format {
        PointFormat::Xyz => {
            let points = content_lines(text)
                .map(|(line, l)| parse_point(l.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()), line))
                .collect::<Result<Vec<_>>>()?;
            PointCloud::new(points)
        }
        PointFormat::Ply => PointCloud::new(parse_ply(text)?.vertices),
    }
}

pub fn load_points(path: impl AsRef<Path>, format: Option<PointFormat>) -> Result<PointCloud> {
    let path = path.as_ref();
    let format = match format {
        Some(f) => f,
        None => PointFormat::from_path(path)?,
    };
    parse_points(&fs::read_to_string(path)?, format)
}

pub fn format_mesh(mesh: &TriangleMesh, format: MeshFormat) -> String {
    let mut out = String::new();
    match format {
        MeshFormat::Off => {
            out.push_str("OFF\n");
            let _ = writeln!(out, "{} {} 0", mesh.vertex_count(), mesh.face_count());
            for v in mesh.vertices() {
                let _ = writeln!(out, "{}", point_line(v));
            }
            for f in mesh.faces() {
                let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
            }
        }
        MeshFormat::Obj => {
            for v in mesh.vertices() {
                let _ = writeln!(out, "v {}", point_line(v));
            }
            for f in mesh.faces() {
                let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
            }
        }
        MeshFormat::Ply => {
            out.push_str("ply\nformat ascii 1.0\n");
            let _ = writeln!(out, "element vertex {}", mesh.vertex_count());
            out.push_str("property float x\nproperty float y\nproperty float z\n");
            let _ = writeln!(out, "element face {}", mesh.face_count());
            out.push_str("property list uchar int vertex_indices\nend_header\n");
            for v in mesh.vertices() {
                let _ = writeln!(out, "{}", point_line(v));
            }
            for f in mesh.faces() {
                let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
            }
        }
    }
    out
}

pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>, format: MeshFormat) -> Result<()> {
    fs::write(path, format_mesh(mesh, format))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use proptest::prelude::*;

    const CUBE_OFF: &str = "OFF\n# unit cube\n8 12 0\n\
        0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n\
        3 0 2 1\n3 0 3 2\n3 4 5 6\n3 4 6 7\n3 0 1 5\n3 0 5 4\n\
        3 1 2 6\n3 1 6 5\n3 2 3 7\n3 2 7 6\n3 3 0 4\n3 3 4 7\n";

    #[test]
    fn off_cube_counts() {
        let mesh = parse_mesh(CUBE_OFF, MeshFormat::Off).unwrap();
        assert_eq!((mesh.vertex_count(), mesh.face_count()), (8, 12));
        assert_eq!(mesh.vertices()[6], Vec3::new(1.0, 1.0, 1.0));
    }

    #[test]
    fn off_counts_on_header_line_and_quads() {
        let text = "OFF 4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let mesh = parse_mesh(text, MeshFormat::Off).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn off_out_of_range_index_reports_line() {
        let text = CUBE_OFF.replace("3 3 4 7\n", "3 3 4 9\n");
        match parse_mesh(&text, MeshFormat::Off) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 23);
                assert!(message.contains('9'));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn obj_quad_is_fan_triangulated() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/1 3//1 4\n";
        let mesh = parse_mesh(text, MeshFormat::Obj).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_relative_indices_and_errors() {
        let mesh = parse_mesh("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n", MeshFormat::Obj).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2]]);
        assert!(matches!(
            parse_mesh("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n", MeshFormat::Obj),
            Err(Error::Parse { line: 4, .. })
        ));
        assert!(matches!(parse_mesh("v 0 0 x\n", MeshFormat::Obj), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_mesh("v 0 0 0\nf 0 1 2\n", MeshFormat::Obj), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn ply_with_extra_properties() {
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 3\nproperty float x\nproperty float y\n\
            property float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\n\
            property uchar flags\nend_header\n0 0 0 255\n1 0 0 255\n0 1 0 255\n3 0 1 2 7\n";
        let mesh = parse_mesh(text, MeshFormat::Ply).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2]]);
        assert_eq!(mesh.vertices()[1], Vec3::x());
    }

    #[test]
    fn binary_ply_is_unsupported() {
        let text = "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n";
        assert!(matches!(parse_mesh(text, MeshFormat::Ply), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn extension_inference() {
        assert_eq!(MeshFormat::from_path(Path::new("a/b.OFF")).unwrap(), MeshFormat::Off);
        assert!(matches!(MeshFormat::from_path(Path::new("a.stl")), Err(Error::UnsupportedFormat(_))));
        assert_eq!(PointFormat::from_path(Path::new("c.xyz")).unwrap(), PointFormat::Xyz);
    }

    #[test]
    fn mesh_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = shapes::cad_like(1).remove(2);
        for (name, format) in [("m.off", MeshFormat::Off), ("m.obj", MeshFormat::Obj), ("m.ply", MeshFormat::Ply)] {
            let path = dir.path().join(name);
            save_mesh(&mesh, &path, format).unwrap();
            let back = load_mesh(&path, None).unwrap();
            assert_eq!(back.faces(), mesh.faces());
            for (a, b) in back.vertices().iter().zip(mesh.vertices()) {
                assert!((a - b).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn point_files() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = PointCloud::new(vec![
            Vec3::new(0.1, 0.2, 0.3),
            Vec3::new(-1.5, 2.0, 1e-7),
            Vec3::new(123.456789, -0.000123456789, 0.0),
        ])
        .unwrap();
        let path = dir.path().join("c.xyz");
        save_points(&cloud, &path, PointFormat::Xyz).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 3);

        let empty = dir.path().join("e.xyz");
        save_points(&PointCloud::empty(), &empty, PointFormat::Xyz).unwrap();
        assert!(load_points(&empty, None).unwrap().is_empty());

        let ply = dir.path().join("c.ply");
        save_points(&cloud, &ply, PointFormat::Ply).unwrap();
        for p in [&path, &ply] {
            let back = load_points(p, None).unwrap();
            assert_eq!(back.len(), 3);
            for (a, b) in back.points().iter().zip(cloud.points()) {
                assert!((a - b).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(-0.5), "-0.5");
        assert_eq!(format_sig9(123.456789123), "123.456789");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
    }

    proptest! {
        #[test]
        fn xyz_round_trip(points in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64), 0..40)) {
            let cloud = PointCloud::new(points.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect()).unwrap();
            let back = parse_points(&format_points(&cloud, PointFormat::Xyz), PointFormat::Xyz).unwrap();
            prop_assert_eq!(back.len(), cloud.len());
            for (a, b) in back.points().iter().zip(cloud.points()) {
                // 9 significant digits.
                prop_assert!((a - b).abs().max() <= 1e-8 * b.abs().max().max(1.0) + 1e-6);
            }
        }
    }
}
