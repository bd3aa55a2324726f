//! PLY point clouds: `vertex` elements with `x y z` and optional `nx ny nz`.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

/// Positions with optional normals as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct PlyPoints {
    pub positions: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
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
            other => return Err(Error::Format(format!("unknown PLY scalar type `{other}`"))),
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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

fn parse_header(bytes: &[u8]) -> Result<(PlyEncoding, Vec<Element>, usize)> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::Format("PLY header has no end_header".into()))?;
    let mut body = end + END.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) == Some(&b'\n') {
        body += 1;
    }
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Format("PLY header is not text".into()))?;
    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(Error::Format("missing `ply` magic".into()));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                encoding = Some(match tok.get(1).copied() {
                    Some("ascii") => PlyEncoding::Ascii,
                    Some("binary_little_endian") => PlyEncoding::BinaryLittleEndian,
                    other => return Err(Error::Format(format!("unsupported PLY format {other:?}"))),
                });
            }
            Some("element") => {
                if tok.len() != 3 {
                    return Err(Error::Format(format!("bad element line `{line}`")));
                }
                elements.push(Element {
                    name: tok[1].to_string(),
                    count: tok[2].parse().map_err(|_| Error::Format(format!("bad element count `{}`", tok[2])))?,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| Error::Format("property before element".into()))?;
                let prop = if tok.get(1) == Some(&"list") {
                    if tok.len() != 5 {
                        return Err(Error::Format(format!("bad list property `{line}`")));
                    }
                    Property::List {
                        name: tok[4].to_string(),
                        count: Scalar::parse(tok[2])?,
                        item: Scalar::parse(tok[3])?,
                    }
                } else {
                    if tok.len() != 3 {
                        return Err(Error::Format(format!("bad property `{line}`")));
                    }
                    Property::Scalar {
                        name: tok[2].to_string(),
                        ty: Scalar::parse(tok[1])?,
                    }
                };
                el.props.push(prop);
            }
            Some(other) => return Err(Error::Format(format!("unexpected PLY header keyword `{other}`"))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::Format("PLY header has no format line".into()))?;
    Ok((encoding, elements, body))
}

/// Parse a PLY point cloud. Unknown vertex properties and other elements
/// are skipped with a warning.
pub fn parse_ply_points(bytes: &[u8]) -> Result<PlyPoints> {
    Ok(parse_ply(bytes, false)?.0)
}

/// Vertices plus, when `faces` is set, the `vertex_indices` lists of a
/// `face` element.
pub(crate) fn parse_ply(bytes: &[u8], faces: bool) -> Result<(PlyPoints, Vec<Vec<usize>>)> {
    let (encoding, elements, body) = parse_header(bytes)?;
    let mut positions = None;
    let mut normals = None;
    let mut polys = Vec::new();
    let mut reader = BodyReader::new(encoding, &bytes[body..]);
    for el in &elements {
        if faces && el.name == "face" {
            let idx = el
                .props
                .iter()
                .position(|p| matches!(p, Property::List { name, .. } if name == "vertex_indices" || name == "vertex_index"))
                .ok_or_else(|| Error::Format("face element lacks vertex_indices".into()))?;
            for _ in 0..el.count {
                for (k, p) in el.props.iter().enumerate() {
                    if k == idx {
                        polys.push(reader.list(p)?);
                    } else {
                        reader.skip(p)?;
                    }
                }
            }
            continue;
        }
        if el.name != "vertex" {
            log::warn!("skipping PLY element `{}`", el.name);
            for _ in 0..el.count {
                for p in &el.props {
                    reader.skip(p)?;
                }
            }
            continue;
        }
        let slot = |n: &str| {
            el.props.iter().position(|p| matches!(p, Property::Scalar { name, .. } if name == n))
        };
        let xyz = ["x", "y", "z"].map(slot);
        let nxyz = ["nx", "ny", "nz"].map(slot);
        if xyz.iter().any(Option::is_none) {
            return Err(Error::Format("vertex element lacks x, y or z".into()));
        }
        let has_normals = nxyz.iter().all(Option::is_some);
        for p in &el.props {
            match p {
                Property::Scalar { name, .. } if ["x", "y", "z"].contains(&name.as_str()) || (has_normals && ["nx", "ny", "nz"].contains(&name.as_str())) => {}
                Property::Scalar { name, .. } => log::warn!("skipping PLY vertex property `{name}`"),
                Property::List { .. } => log::warn!("skipping PLY vertex list property"),
            }
        }
        let mut pos = Vec::with_capacity(el.count);
        let mut nor = Vec::with_capacity(if has_normals { el.count } else { 0 });
        let mut row = vec![0.0; el.props.len()];
        for _ in 0..el.count {
            for (k, p) in el.props.iter().enumerate() {
                match p {
                    Property::Scalar { ty, .. } => row[k] = reader.scalar(*ty)?,
                    list => reader.skip(list)?,
                }
            }
            let get = |s: [Option<usize>; 3]| Vec3::new(row[s[0].unwrap()], row[s[1].unwrap()], row[s[2].unwrap()]);
            pos.push(get(xyz));
            if has_normals {
                nor.push(get(nxyz));
            }
        }
        positions = Some(pos);
        normals = has_normals.then_some(nor);
    }
    let points = PlyPoints {
        positions: positions.ok_or_else(|| Error::Format("PLY file has no vertex element".into()))?,
        normals,
    };
    Ok((points, polys))
}

struct BodyReader<'a> {
    encoding: PlyEncoding,
    bytes: &'a [u8],
    pos: usize,
    tokens: Option<std::str::SplitAsciiWhitespace<'a>>,
}

impl<'a> BodyReader<'a> {
    fn new(encoding: PlyEncoding, bytes: &'a [u8]) -> Self {
        let tokens = match encoding {
            PlyEncoding::Ascii => std::str::from_utf8(bytes).ok().map(|s| s.split_ascii_whitespace()),
            PlyEncoding::BinaryLittleEndian => None,
        };
        Self { encoding, bytes, pos: 0, tokens }
    }

    fn scalar(&mut self, ty: Scalar) -> Result<f64> {
        match self.encoding {
            PlyEncoding::Ascii => {
                let tok = self
                    .tokens
                    .as_mut()
                    .ok_or_else(|| Error::Format("ASCII PLY body is not text".into()))?
                    .next()
                    .ok_or_else(|| Error::Format("PLY body ends early".into()))?;
                tok.parse::<f64>().map_err(|_| Error::Format(format!("bad PLY number `{tok}`")))
            }
            PlyEncoding::BinaryLittleEndian => {
                let n = ty.size();
                let b = self
                    .bytes
                    .get(self.pos..self.pos + n)
                    .ok_or_else(|| Error::Format("PLY body ends early".into()))?;
                self.pos += n;
                Ok(ty.read_le(b))
            }
        }
    }

    fn list(&mut self, prop: &Property) -> Result<Vec<usize>> {
        let Property::List { count, item, .. } = prop else {
            return Err(Error::Format("expected a PLY list property".into()));
        };
        let n = self.scalar(*count)?;
        if !(n >= 0.0) {
            return Err(Error::Format("negative PLY list length".into()));
        }
        (0..n as usize)
            .map(|_| {
                let v = self.scalar(*item)?;
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::Format(format!("bad PLY vertex index {v}")));
                }
                Ok(v as usize)
            })
            .collect()
    }

    fn skip(&mut self, prop: &Property) -> Result<()> {
        match prop {
            Property::Scalar { ty, .. } => {
                self.scalar(*ty)?;
            }
            Property::List { count, item, .. } => {
                let n = self.scalar(*count)?;
                if !(n >= 0.0) {
                    return Err(Error::Format("negative PLY list length".into()));
                }
                for _ in 0..n as usize {
                    self.scalar(*item)?;
                }
            }
        }
        Ok(())
    }
}

/// Serialize positions (and normals if given) as float64 properties.
pub fn encode_ply_points(positions: &[Vec3], normals: Option<&[Vec3]>, encoding: PlyEncoding) -> Result<Vec<u8>> {
    if let Some(n) = normals {
        if n.len() != positions.len() {
            return Err(Error::DimensionMismatch("positions and normals differ in length".into()));
        }
    }
    let fmt = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    let mut out = Vec::new();
    write!(out, "ply\nformat {fmt} 1.0\nelement vertex {}\n", positions.len())?;
    for name in ["x", "y", "z"] {
        writeln!(out, "property double {name}")?;
    }
    if normals.is_some() {
        for name in ["nx", "ny", "nz"] {
            writeln!(out, "property double {name}")?;
        }
    }
    out.extend_from_slice(b"end_header\n");
    for (i, p) in positions.iter().enumerate() {
        let mut row: Vec<f64> = p.iter().copied().collect();
        if let Some(n) = normals {
            row.extend(n[i].iter());
        }
        match encoding {
            PlyEncoding::Ascii => {
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                writeln!(out, "{}", line.join(" "))?;
            }
            PlyEncoding::BinaryLittleEndian => {
                for v in row {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

pub fn write_ply_points(path: &Path, positions: &[Vec3], normals: Option<&[Vec3]>, encoding: PlyEncoding) -> Result<()> {
    fs::write(path, encode_ply_points(positions, normals, encoding)?)?;
    Ok(())
}

pub fn read_ply_points(path: &Path) -> Result<PlyPoints> {
    parse_ply_points(&fs::read(path)?)
}
