//! Minimal PLY reader/writer for triangle meshes.
//!
//! Reads ASCII and binary little-endian files with a `vertex` element
//! (x, y, z) and a `face` element holding 3-index lists. Extra properties
//! and elements are skipped. Big-endian files and non-triangular faces are
//! rejected.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::TriangleMesh;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
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
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::Parse(format!("unknown property type `{other}`"))),
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
}

#[derive(Debug, Clone)]
enum Property {
    Scalar {
        name: String,
        ty: Scalar,
    },
    List {
        name: String,
        count: Scalar,
        item: Scalar,
    },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Parse("header is not terminated by `end_header`".into()))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::Parse("header is not valid UTF-8".into()))?
            .trim_end_matches('\r')
            .trim();
        offset += end + 1;
        if line == "end_header" {
            break;
        }
        lines.push(line.to_string());
    }

    let mut lines = lines.into_iter();
    if lines.next().as_deref() != Some("ply") {
        return Err(Error::Parse("missing `ply` magic".into()));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _version] => {
                encoding = Some(match *fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    "binary_big_endian" => {
                        return Err(Error::UnsupportedFormat(
                            "big-endian PLY files are not supported".into(),
                        ))
                    }
                    other => return Err(Error::Parse(format!("unknown format `{other}`"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", count, item, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::Parse("property before any element".into()))?;
                element.properties.push(Property::List {
                    name: name.to_string(),
                    count: Scalar::parse(count)?,
                    item: Scalar::parse(item)?,
                });
            }
            ["property", ty, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::Parse("property before any element".into()))?;
                element.properties.push(Property::Scalar {
                    name: name.to_string(),
                    ty: Scalar::parse(ty)?,
                });
            }
            _ => return Err(Error::Parse(format!("unrecognized header line `{line}`"))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::Parse("missing `format` line".into()))?;
    Ok(Header {
        encoding,
        elements,
        body_offset: offset,
    })
}

/// Sequential value source over either encoding.
trait ValueSource {
    fn next(&mut self, ty: Scalar) -> Result<f64>;
    /// Called after each element instance.
    fn end_record(&mut self) -> Result<()>;
    fn finish(&mut self) -> Result<()>;
}

/// ASCII bodies hold one element instance per line.
struct AsciiSource<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    current: Option<(usize, std::str::SplitAsciiWhitespace<'a>)>,
    line_offset: usize,
}

impl<'a> AsciiSource<'a> {
    fn new(text: &'a str, line_offset: usize) -> Self {
        Self {
            lines: text.lines().enumerate(),
            current: None,
            line_offset,
        }
    }
}

impl ValueSource for AsciiSource<'_> {
    fn next(&mut self, ty: Scalar) -> Result<f64> {
        if self.current.is_none() {
            let (i, line) = self
                .lines
                .find(|(_, l)| !l.trim().is_empty())
                .ok_or_else(|| Error::Parse("unexpected end of data".into()))?;
            self.current = Some((i, line.split_ascii_whitespace()));
        }
        let (i, tokens) = self.current.as_mut().unwrap();
        let line = *i + self.line_offset + 1;
        let token = tokens
            .next()
            .ok_or_else(|| Error::Parse(format!("line {line}: too few values")))?;
        let value: f64 = token
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: bad number `{token}`")))?;
        if !matches!(ty, Scalar::F32 | Scalar::F64) && value.fract() != 0.0 {
            return Err(Error::Parse(format!(
                "line {line}: expected integer, found `{token}`"
            )));
        }
        Ok(value)
    }

    fn end_record(&mut self) -> Result<()> {
        if let Some((i, mut tokens)) = self.current.take() {
            if let Some(t) = tokens.next() {
                return Err(Error::Parse(format!(
                    "line {}: unexpected extra value `{t}`",
                    i + self.line_offset + 1
                )));
            }
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        match self.lines.find(|(_, l)| !l.trim().is_empty()) {
            None => Ok(()),
            Some((i, _)) => Err(Error::Parse(format!(
                "line {}: trailing data after last element",
                i + self.line_offset + 1
            ))),
        }
    }
}

struct BinarySource<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ValueSource for BinarySource<'_> {
    fn next(&mut self, ty: Scalar) -> Result<f64> {
        let n = ty.size();
        let b = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Parse("unexpected end of binary data".into()))?;
        self.pos += n;
        Ok(match ty {
            Scalar::I8 => i8::from_le_bytes([b[0]]) as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b.try_into().unwrap()),
        })
    }

    fn end_record(&mut self) -> Result<()> {
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Parse(format!(
                "{} trailing bytes after last element",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn read_body(header: &Header, src: &mut dyn ValueSource, scale: f64) -> Result<TriangleMesh> {
    let mut vertices = None;
    let mut triangles = None;
    for element in &header.elements {
        match element.name.as_str() {
            "vertex" => {
                let find = |axis: &str| {
                    element
                        .properties
                        .iter()
                        .position(|p| matches!(p, Property::Scalar { name, .. } if name == axis))
                        .ok_or_else(|| Error::Parse(format!("vertex element lacks `{axis}`")))
                };
                let slots = [find("x")?, find("y")?, find("z")?];
                let mut out = Vec::with_capacity(element.count);
                for _ in 0..element.count {
                    let mut xyz = [0.0; 3];
                    for (pi, prop) in element.properties.iter().enumerate() {
                        let value = read_property(src, prop)?;
                        if let Some(axis) = slots.iter().position(|&s| s == pi) {
                            xyz[axis] = value.unwrap_or_default() * scale;
                        }
                    }
                    src.end_record()?;
                    out.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
                }
                vertices = Some(out);
            }
            "face" => {
                let slot = element
                    .properties
                    .iter()
                    .position(|p| {
                        matches!(p, Property::List { .. })
                            && matches!(p.name(), "vertex_indices" | "vertex_index")
                    })
                    .or_else(|| {
                        element
                            .properties
                            .iter()
                            .position(|p| matches!(p, Property::List { .. }))
                    })
                    .ok_or_else(|| Error::Parse("face element lacks an index list".into()))?;
                let mut out = Vec::with_capacity(element.count);
                for fi in 0..element.count {
                    for (pi, prop) in element.properties.iter().enumerate() {
                        if pi == slot {
                            let Property::List { count, item, .. } = prop else {
                                unreachable!()
                            };
                            let n = src.next(*count)?;
                            if n != 3.0 {
                                return Err(Error::UnsupportedFormat(format!(
                                    "face {fi} has {n} vertices; only triangles are supported"
                                )));
                            }
                            let mut tri = [0u32; 3];
                            for t in &mut tri {
                                let ix = src.next(*item)?;
                                if ix < 0.0 || ix > u32::MAX as f64 {
                                    return Err(Error::Parse(format!("bad vertex index {ix}")));
                                }
                                *t = ix as u32;
                            }
                            out.push(tri);
                        } else {
                            read_property(src, prop)?;
                        }
                    }
                    src.end_record()?;
                }
                triangles = Some(out);
            }
            _ => {
                for _ in 0..element.count {
                    for prop in &element.properties {
                        read_property(src, prop)?;
                    }
                    src.end_record()?;
                }
            }
        }
    }
    src.finish()?;
    let vertices = vertices.ok_or_else(|| Error::Parse("no vertex element".into()))?;
    let triangles = triangles.ok_or_else(|| Error::Parse("no face element".into()))?;
    TriangleMesh::new(vertices, triangles)
}

/// Returns the scalar value, or `None` for (skipped) list properties.
fn read_property(src: &mut dyn ValueSource, prop: &Property) -> Result<Option<f64>> {
    match prop {
        Property::Scalar { ty, .. } => src.next(*ty).map(Some),
        Property::List { count, item, .. } => {
            let n = src.next(*count)?;
            if n < 0.0 {
                return Err(Error::Parse(format!("negative list length {n}")));
            }
            for _ in 0..n as usize {
                src.next(*item)?;
            }
            Ok(None)
        }
    }
}

/// Parses PLY bytes; vertex coordinates are multiplied by `scale` to get mm.
pub fn read_ply(bytes: &[u8], scale: f64) -> Result<TriangleMesh> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "bad PLY scale factor {scale}"
        )));
    }
    let header = parse_header(bytes)?;
    let body = &bytes[header.body_offset..];
    match header.encoding {
        PlyEncoding::Ascii => {
            let text = std::str::from_utf8(body)
                .map_err(|_| Error::Parse("ASCII body is not valid UTF-8".into()))?;
            let header_lines = bytes[..header.body_offset]
                .iter()
                .filter(|&&b| b == b'\n')
                .count();
            let mut src = AsciiSource::new(text, header_lines);
            read_body(&header, &mut src, scale)
        }
        PlyEncoding::BinaryLittleEndian => {
            let mut src = BinarySource {
                bytes: body,
                pos: 0,
            };
            read_body(&header, &mut src, scale)
        }
    }
}

/// Loads a PLY file whose coordinates are already millimetres.
pub fn load_ply(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    load_ply_scaled(path, 1.0)
}

/// Loads a PLY file, multiplying coordinates by `scale` (1000 for metres).
pub fn load_ply_scaled(path: impl AsRef<Path>, scale: f64) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_ply(&bytes, scale)
}

/// Writes `mesh` as PLY. ASCII output uses shortest round-trip decimals, so
/// reading it back reproduces every coordinate bit for bit.
pub fn write_ply<W: Write>(
    mesh: &TriangleMesh,
    encoding: PlyEncoding,
    comments: &[String],
    mut out: W,
) -> std::io::Result<()> {
    let format = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    let scalar = match encoding {
        PlyEncoding::Ascii => "double",
        PlyEncoding::BinaryLittleEndian => "float64",
    };
    writeln!(out, "ply")?;
    writeln!(out, "format {format} 1.0")?;
    for c in comments {
        writeln!(out, "comment {c}")?;
    }
    writeln!(out, "element vertex {}", mesh.vertices().len())?;
    for axis in ["x", "y", "z"] {
        writeln!(out, "property {scalar} {axis}")?;
    }
    writeln!(out, "element face {}", mesh.triangles().len())?;
    writeln!(out, "property list uchar uint vertex_indices")?;
    writeln!(out, "end_header")?;
    match encoding {
        PlyEncoding::Ascii => {
            for v in mesh.vertices() {
                writeln!(out, "{} {} {}", v.x, v.y, v.z)?;
            }
            for t in mesh.triangles() {
                writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            for v in mesh.vertices() {
                for c in v.iter() {
                    out.write_all(&c.to_le_bytes())?;
                }
            }
            for t in mesh.triangles() {
                out.write_all(&[3u8])?;
                for ix in t {
                    out.write_all(&ix.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}
