//! PLY reader (ASCII and binary, either endianness) and binary
//! little-endian writer.
//!
//! Recognised vertex properties: `x y z`, `nx ny nz`, `red green blue`
//! (integer types are scaled to [0, 1]) and an integer `instance`.
//! Faces come from a `vertex_indices` (or `vertex_index`) list; polygons
//! are fan-triangulated. Unknown elements and properties are skipped.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::estimate_normals;
use crate::io::{read_file, write_file, PutLe};
use crate::model::SceneGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn max_value(self) -> f64 {
        match self {
            Scalar::I8 => i8::MAX as f64,
            Scalar::U8 => u8::MAX as f64,
            Scalar::I16 => i16::MAX as f64,
            Scalar::U16 => u16::MAX as f64,
            Scalar::I32 => i32::MAX as f64,
            Scalar::U32 => u32::MAX as f64,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Single { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Decoded property value. Integers keep their exact value.
#[derive(Debug, Clone, Copy)]
enum Value {
    Int(i64),
    Float(f64),
}

impl Value {
    fn as_f64(self) -> f64 {
        match self {
            Value::Int(i) => i as f64,
            Value::Float(f) => f,
        }
    }
}

struct Body<'a> {
    buf: &'a [u8],
    pos: usize,
    encoding: Encoding,
}

impl<'a> Body<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn next_token(&mut self) -> Result<&'a str> {
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.buf.len() && !self.buf[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("unexpected end of data"));
        }
        std::str::from_utf8(&self.buf[start..self.pos]).map_err(|_| Error::Parse {
            offset: start as u64,
            message: "non-UTF-8 token".into(),
        })
    }

    fn read(&mut self, ty: Scalar) -> Result<Value> {
        if self.encoding == Encoding::Ascii {
            let tok = self.next_token()?;
            let start = self.pos - tok.len();
            let bad = || Error::Parse {
                offset: start as u64,
                message: format!("cannot parse {tok:?} as {ty:?}"),
            };
            return if ty.is_integer() {
                tok.parse::<i64>().map(Value::Int).map_err(|_| bad())
            } else {
                tok.parse::<f64>().map(Value::Float).map_err(|_| bad())
            };
        }
        let n = ty.size();
        if self.buf.len() - self.pos < n {
            return Err(self.err(format!("truncated binary data ({n} bytes needed)")));
        }
        let mut raw = [0u8; 8];
        raw[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        if self.encoding == Encoding::BinaryBe {
            raw[..n].reverse();
        }
        self.pos += n;
        Ok(match ty {
            Scalar::I8 => Value::Int(raw[0] as i8 as i64),
            Scalar::U8 => Value::Int(raw[0] as i64),
            Scalar::I16 => Value::Int(i16::from_le_bytes([raw[0], raw[1]]) as i64),
            Scalar::U16 => Value::Int(u16::from_le_bytes([raw[0], raw[1]]) as i64),
            Scalar::I32 => Value::Int(i32::from_le_bytes(raw[..4].try_into().unwrap()) as i64),
            Scalar::U32 => Value::Int(u32::from_le_bytes(raw[..4].try_into().unwrap()) as i64),
            Scalar::F32 => Value::Float(f32::from_le_bytes(raw[..4].try_into().unwrap()) as f64),
            Scalar::F64 => Value::Float(f64::from_le_bytes(raw)),
        })
    }
}

fn parse_header(buf: &[u8]) -> Result<(Encoding, Vec<Element>, usize)> {
    let mut pos = 0usize;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut first = true;
    loop {
        let line_start = pos;
        let Some(nl) = buf[pos..].iter().position(|&b| b == b'\n') else {
            return Err(Error::Parse {
                offset: pos as u64,
                message: "header not terminated by end_header".into(),
            });
        };
        let raw = &buf[pos..pos + nl];
        pos += nl + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::Parse {
                offset: line_start as u64,
                message: "non-ASCII header line".into(),
            })?
            .trim();
        let err = |m: String| Error::Parse {
            offset: line_start as u64,
            message: m,
        };
        if first {
            if line != "ply" {
                return Err(err("missing 'ply' magic".into()));
            }
            first = false;
            continue;
        }
        let mut words = line.split_whitespace();
        match words.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                encoding = Some(match words.next() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::BinaryLe,
                    Some("binary_big_endian") => Encoding::BinaryBe,
                    other => return Err(err(format!("unknown format {other:?}"))),
                });
            }
            Some("element") => {
                let name = words.next().ok_or_else(|| err("element without name".into()))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| err("element without valid count".into()))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let elem = elements
                    .last_mut()
                    .ok_or_else(|| err("property before any element".into()))?;
                let ty = words.next().ok_or_else(|| err("property without type".into()))?;
                if ty == "list" {
                    let count = words.next().and_then(Scalar::parse);
                    let item = words.next().and_then(Scalar::parse);
                    let name = words.next();
                    match (count, item, name) {
                        (Some(count), Some(item), Some(name)) if count.is_integer() => {
                            elem.props.push(Property::List {
                                name: name.to_string(),
                                count,
                                item,
                            })
                        }
                        _ => return Err(err(format!("malformed list property {line:?}"))),
                    }
                } else {
                    let ty = Scalar::parse(ty).ok_or_else(|| err(format!("unknown type {ty:?}")))?;
                    let name = words.next().ok_or_else(|| err("property without name".into()))?;
                    elem.props.push(Property::Single {
                        name: name.to_string(),
                        ty,
                    });
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(err(format!("unexpected header keyword {other:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::Parse {
        offset: 0,
        message: "missing format line".into(),
    })?;
    Ok((encoding, elements, pos))
}

/// Parses PLY bytes into a validated scene, computing normals when the
/// file does not carry them.
pub fn parse_scene(buf: &[u8]) -> Result<SceneGeometry> {
    let (encoding, elements, body_start) = parse_header(buf)?;
    let mut body = Body {
        buf,
        pos: body_start,
        encoding,
    };

    let mut points = Vec::new();
    let mut normals: Option<Vec<[f32; 3]>> = None;
    let mut colors: Option<Vec<[f32; 3]>> = None;
    let mut gt: Option<Vec<i32>> = None;
    let mut faces: Option<Vec<[u32; 3]>> = None;

    for elem in &elements {
        match elem.name.as_str() {
            "vertex" => {
                let find = |n: &str| {
                    elem.props.iter().position(|p| matches!(p, Property::Single { name, .. } if name == n))
                };
                let pos_idx = [find("x"), find("y"), find("z")];
                if pos_idx.iter().any(Option::is_none) {
                    return Err(body.err("vertex element lacks x/y/z"));
                }
                let nrm_idx = [find("nx"), find("ny"), find("nz")];
                let has_normals = nrm_idx.iter().all(Option::is_some);
                let col_idx = [find("red"), find("green"), find("blue")];
                let has_colors = col_idx.iter().all(Option::is_some);
                let inst_idx = find("instance");
                points.reserve(elem.count);
                if has_normals {
                    normals = Some(Vec::with_capacity(elem.count));
                }
                if has_colors {
                    colors = Some(Vec::with_capacity(elem.count));
                }
                if inst_idx.is_some() {
                    gt = Some(Vec::with_capacity(elem.count));
                }
                let mut row = vec![Value::Int(0); elem.props.len()];
                for _ in 0..elem.count {
                    for (slot, prop) in row.iter_mut().zip(&elem.props) {
                        *slot = match prop {
                            Property::Single { ty, .. } => body.read(*ty)?,
                            Property::List { count, item, .. } => {
                                let n = body.read(*count)?.as_f64() as usize;
                                for _ in 0..n {
                                    body.read(*item)?;
                                }
                                Value::Int(0)
                            }
                        };
                    }
                    let get3 = |idx: &[Option<usize>; 3]| {
                        [0, 1, 2].map(|k| row[idx[k].unwrap()].as_f64() as f32)
                    };
                    points.push(get3(&pos_idx));
                    if let Some(ns) = normals.as_mut() {
                        ns.push(get3(&nrm_idx));
                    }
                    if let Some(cs) = colors.as_mut() {
                        let c = [0, 1, 2].map(|k| {
                            let i = col_idx[k].unwrap();
                            let Property::Single { ty, .. } = &elem.props[i] else { unreachable!() };
                            match row[i] {
                                Value::Int(v) => (v as f64 / ty.max_value()) as f32,
                                Value::Float(v) => v as f32,
                            }
                        });
                        cs.push(c);
                    }
                    if let (Some(g), Some(i)) = (gt.as_mut(), inst_idx) {
                        g.push(row[i].as_f64() as i32);
                    }
                }
            }
            "face" => {
                let list_idx = elem.props.iter().position(|p| {
                    matches!(p, Property::List { name, .. } if name == "vertex_indices" || name == "vertex_index")
                });
                let Some(list_idx) = list_idx else {
                    return Err(body.err("face element lacks vertex_indices"));
                };
                let mut fs = Vec::with_capacity(elem.count);
                let mut poly = Vec::with_capacity(4);
                for _ in 0..elem.count {
                    for (pi, prop) in elem.props.iter().enumerate() {
                        match prop {
                            Property::Single { ty, .. } => {
                                body.read(*ty)?;
                            }
                            Property::List { count, item, .. } => {
                                let at = body.pos;
                                let n = body.read(*count)?.as_f64();
                                if n < 0.0 {
                                    return Err(Error::Parse {
                                        offset: at as u64,
                                        message: "negative list length".into(),
                                    });
                                }
                                poly.clear();
                                for _ in 0..n as usize {
                                    let at = body.pos;
                                    let v = body.read(*item)?.as_f64();
                                    if v < 0.0 || v > u32::MAX as f64 {
                                        return Err(Error::Parse {
                                            offset: at as u64,
                                            message: format!("bad vertex index {v}"),
                                        });
                                    }
                                    poly.push(v as u32);
                                }
                                if pi == list_idx {
                                    if poly.len() < 3 {
                                        return Err(Error::Parse {
                                            offset: at as u64,
                                            message: format!("face with {} vertices", poly.len()),
                                        });
                                    }
                                    for k in 1..poly.len() - 1 {
                                        fs.push([poly[0], poly[k], poly[k + 1]]);
                                    }
                                }
                            }
                        }
                    }
                }
                faces = Some(fs);
            }
            _ => {
                for _ in 0..elem.count {
                    for prop in &elem.props {
                        match prop {
                            Property::Single { ty, .. } => {
                                body.read(*ty)?;
                            }
                            Property::List { count, item, .. } => {
                                let n = body.read(*count)?.as_f64() as usize;
                                for _ in 0..n {
                                    body.read(*item)?;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    if points.is_empty() {
        return Err(Error::EmptyScene);
    }
    if let Some(fs) = &faces {
        if let Some(bad) = fs.iter().flatten().find(|&&v| v as usize >= points.len()) {
            return Err(Error::invalid("scene", format!("face index {bad} out of range")));
        }
    }
    let normals = match normals {
        Some(n) => n,
        None => estimate_normals(&points, faces.as_deref()),
    };
    SceneGeometry::new(points, normals, colors, faces, gt)
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneGeometry> {
    parse_scene(&read_file(path.as_ref())?)
}

/// Serializes as binary little-endian PLY. Colors are written as floats so
/// that a reload reproduces them bit for bit.
pub fn scene_to_bytes(scene: &SceneGeometry) -> Vec<u8> {
    let n = scene.len();
    let mut header = String::from("ply\nformat binary_little_endian 1.0\ncomment supercut\n");
    header.push_str(&format!("element vertex {n}\n"));
    for p in ["x", "y", "z", "nx", "ny", "nz"] {
        header.push_str(&format!("property float {p}\n"));
    }
    if scene.colors.is_some() {
        for p in ["red", "green", "blue"] {
            header.push_str(&format!("property float {p}\n"));
        }
    }
    if scene.gt_instance.is_some() {
        header.push_str("property int instance\n");
    }
    if let Some(f) = &scene.faces {
        header.push_str(&format!("element face {}\n", f.len()));
        header.push_str("property list uchar uint vertex_indices\n");
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    out.reserve(n * 40);
    for i in 0..n {
        for c in scene.points[i].iter().chain(scene.normals[i].iter()) {
            out.put_f32(*c);
        }
        if let Some(cs) = &scene.colors {
            for c in cs[i] {
                out.put_f32(c);
            }
        }
        if let Some(gt) = &scene.gt_instance {
            out.extend_from_slice(&gt[i].to_le_bytes());
        }
    }
    if let Some(fs) = &scene.faces {
        for f in fs {
            out.put_u8(3);
            for v in f {
                out.put_u32(*v);
            }
        }
    }
    out
}

pub fn save_scene(scene: &SceneGeometry, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &scene_to_bytes(scene))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_triangle_gets_face_normal() {
        let ply = b"ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        let s = parse_scene(ply).unwrap();
        assert_eq!(s.faces, Some(vec![[0, 1, 2]]));
        assert!(s.normals.iter().all(|n| *n == [0.0, 0.0, 1.0]));
    }

    #[test]
    fn uchar_colors_and_instance() {
        let ply = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\nproperty float ny\nproperty float nz\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nproperty int instance\nend_header\n1 2 3 0 0 1 255 0 51 -2\n";
        let s = parse_scene(ply).unwrap();
        assert_eq!(s.colors.unwrap()[0], [1.0, 0.0, 0.2]);
        assert_eq!(s.gt_instance.unwrap(), vec![-2]);
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let ply = b"ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let s = parse_scene(ply).unwrap();
        assert_eq!(s.faces.unwrap(), vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn malformed_reports_offset() {
        let ply = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 zz 0\n";
        match parse_scene(ply) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 102),
            other => panic!("unexpected {other:?}"),
        }
        let bad_magic = b"plx\n";
        assert!(matches!(parse_scene(bad_magic), Err(Error::Parse { offset: 0, .. })));
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let s = SceneGeometry::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            vec![[0.0, 0.0, 1.0]; 2],
            None,
            None,
            None,
        )
        .unwrap();
        let mut bytes = scene_to_bytes(&s);
        bytes.truncate(bytes.len() - 2);
        assert!(matches!(parse_scene(&bytes), Err(Error::Parse { .. })));
    }

    #[test]
    fn zero_points_is_empty_scene() {
        let ply = b"ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
        assert!(matches!(parse_scene(ply), Err(Error::EmptyScene)));
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let s = SceneGeometry::new(
            vec![[0.1, -2.5, 3.25], [1e-8, 7.0, -0.3], [4.0, 4.0, 4.0]],
            vec![[0.0, 0.0, 1.0], [0.6, 0.8, 0.0], [0.0, -1.0, 0.0]],
            Some(vec![[0.1, 0.2, 0.3], [1.0, 0.0, 0.5], [0.33, 0.66, 0.99]]),
            Some(vec![[0, 1, 2]]),
            Some(vec![3, -2, -1]),
        )
        .unwrap();
        let back = parse_scene(&scene_to_bytes(&s)).unwrap();
        assert_eq!(back, s);
    }
}
