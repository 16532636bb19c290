//! File formats at the artifact boundary: PLY point clouds, 16-bit depth and
//! 8-bit mask PGM, and 8-bit RGB PPM.
//!
//! Readers never panic on malformed input; every rejection is an
//! [`Error::Parse`] carrying the byte offset where parsing stopped.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{ColoredPointCloud, Point3, Rgb};
use crate::raster::{to_u8, BinaryMask, DepthImage, RgbImage};

// ---------------------------------------------------------------------------
// PLY

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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
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

    /// Reads an unsigned list count; signed negative counts are rejected.
    fn read_count(self, bytes: &[u8]) -> Option<usize> {
        let v: i64 = match self {
            Scalar::I8 => bytes[0] as i8 as i64,
            Scalar::U8 => bytes[0] as i64,
            Scalar::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as i64,
            Scalar::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as i64,
            Scalar::I32 => i32::from_le_bytes(bytes[..4].try_into().ok()?) as i64,
            Scalar::U32 => u32::from_le_bytes(bytes[..4].try_into().ok()?) as i64,
            Scalar::F32 | Scalar::F64 => return None,
        };
        usize::try_from(v).ok()
    }
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

struct PlyHeader {
    format: PlyFormat,
    elements: Vec<Element>,
    body_offset: usize,
}

/// Where the vertex properties we care about live within a vertex record.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
}

fn ply_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::parse("ply", offset, msg)
}

fn parse_ply_header(bytes: &[u8]) -> Result<PlyHeader> {
    let mut offset = 0usize;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut line_no = 0usize;
    loop {
        let rest = &bytes[offset..];
        let Some(nl) = rest.iter().position(|b| *b == b'\n') else {
            return Err(ply_err(offset, "header is not terminated by end_header"));
        };
        let raw = &rest[..nl];
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw).map_err(|_| ply_err(offset, "header is not valid text"))?;
        let line_start = offset;
        offset += nl + 1;
        let mut tokens = line.split_ascii_whitespace();
        let keyword = tokens.next();
        if line_no == 0 {
            if line.trim() != "ply" {
                return Err(ply_err(0, "missing 'ply' magic"));
            }
            line_no += 1;
            continue;
        }
        line_no += 1;
        match keyword {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                let kind = tokens.next();
                let version = tokens.next();
                if version != Some("1.0") {
                    return Err(ply_err(line_start, "unsupported format version"));
                }
                format = Some(match kind {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    Some(other) => {
                        return Err(ply_err(line_start, format!("unsupported format '{other}'")))
                    }
                    None => return Err(ply_err(line_start, "malformed format line")),
                });
            }
            Some("element") => {
                let (Some(name), Some(count), None) = (tokens.next(), tokens.next(), tokens.next()) else {
                    return Err(ply_err(line_start, "malformed element line"));
                };
                let count = count
                    .parse::<usize>()
                    .map_err(|_| ply_err(line_start, "element count is not a non-negative integer"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let Some(element) = elements.last_mut() else {
                    return Err(ply_err(line_start, "property before any element"));
                };
                let toks: Vec<&str> = tokens.collect();
                let kind = match toks.as_slice() {
                    ["list", count, item, _name] => PropertyKind::List {
                        count: Scalar::parse(count)
                            .ok_or_else(|| ply_err(line_start, format!("unsupported property type '{count}'")))?,
                        item: Scalar::parse(item)
                            .ok_or_else(|| ply_err(line_start, format!("unsupported property type '{item}'")))?,
                    },
                    [ty, _name] => PropertyKind::Scalar(
                        Scalar::parse(ty)
                            .ok_or_else(|| ply_err(line_start, format!("unsupported property type '{ty}'")))?,
                    ),
                    _ => return Err(ply_err(line_start, "malformed property line")),
                };
                if let PropertyKind::List { count, .. } = kind {
                    if matches!(count, Scalar::F32 | Scalar::F64) {
                        return Err(ply_err(line_start, "list count must be an integer type"));
                    }
                }
                element.properties.push(Property {
                    name: toks.last().unwrap().to_string(),
                    kind,
                });
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(ply_err(line_start, format!("unexpected header keyword '{other}'")));
            }
        }
    }
    let format = format.ok_or_else(|| ply_err(0, "missing format line"))?;
    Ok(PlyHeader {
        format,
        elements,
        body_offset: offset,
    })
}

fn vertex_layout(element: &Element, header_offset: usize) -> Result<VertexLayout> {
    let find = |name: &str| element.properties.iter().position(|p| p.name == name);
    let mut xyz = [0usize; 3];
    for (slot, name) in xyz.iter_mut().zip(["x", "y", "z"]) {
        let i = find(name).ok_or_else(|| ply_err(header_offset, format!("vertex has no '{name}' property")))?;
        if !matches!(element.properties[i].kind, PropertyKind::Scalar(Scalar::F32)) {
            return Err(ply_err(
                header_offset,
                format!("unsupported property type for '{name}': expected float"),
            ));
        }
        *slot = i;
    }
    let color_idx = ["red", "green", "blue"].map(find);
    let rgb = if let [Some(r), Some(g), Some(b)] = color_idx {
        for (i, name) in [(r, "red"), (g, "green"), (b, "blue")] {
            if !matches!(element.properties[i].kind, PropertyKind::Scalar(Scalar::U8)) {
                return Err(ply_err(
                    header_offset,
                    format!("unsupported property type for '{name}': expected uchar"),
                ));
            }
        }
        Some([r, g, b])
    } else {
        None
    };
    if element
        .properties
        .iter()
        .any(|p| matches!(p.kind, PropertyKind::List { .. }))
    {
        return Err(ply_err(header_offset, "list properties on vertices are unsupported"));
    }
    Ok(VertexLayout { xyz, rgb })
}

/// Parse an ASCII or binary little-endian PLY file into a point cloud.
pub fn read_ply(bytes: &[u8]) -> Result<ColoredPointCloud> {
    let header = parse_ply_header(bytes)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| ply_err(header.body_offset, "no vertex element"))?;
    let layout = vertex_layout(&header.elements[vertex_pos], header.body_offset)?;
    match header.format {
        PlyFormat::Ascii => read_ply_ascii(bytes, &header, vertex_pos, &layout),
        PlyFormat::BinaryLittleEndian => read_ply_binary(bytes, &header, vertex_pos, &layout),
    }
}

fn read_ply_ascii(
    bytes: &[u8],
    header: &PlyHeader,
    vertex_pos: usize,
    layout: &VertexLayout,
) -> Result<ColoredPointCloud> {
    let mut offset = header.body_offset;
    let next_line = |offset: &mut usize| -> Option<(usize, &[u8])> {
        while *offset < bytes.len() {
            let rest = &bytes[*offset..];
            let end = rest.iter().position(|b| *b == b'\n').unwrap_or(rest.len());
            let start = *offset;
            *offset += (end + 1).min(rest.len());
            let line = &rest[..end];
            if line.iter().all(|b| b.is_ascii_whitespace()) {
                continue;
            }
            return Some((start, line));
        }
        None
    };
    for element in &header.elements[..vertex_pos] {
        for _ in 0..element.count {
            if next_line(&mut offset).is_none() {
                return Err(ply_err(bytes.len(), format!("truncated payload in element '{}'", element.name)));
            }
        }
    }
    let vertex = &header.elements[vertex_pos];
    let n_props = vertex.properties.len();
    let cap = vertex.count.min(bytes.len() / 2 + 1);
    let mut points = Vec::with_capacity(cap);
    let mut colors = layout.rgb.map(|_| Vec::with_capacity(cap));
    let mut tokens: Vec<&str> = Vec::with_capacity(n_props);
    for k in 0..vertex.count {
        let Some((line_start, line)) = next_line(&mut offset) else {
            return Err(ply_err(
                bytes.len(),
                format!("truncated payload: expected {} vertices, found {k}", vertex.count),
            ));
        };
        let text = std::str::from_utf8(line).map_err(|_| ply_err(line_start, "vertex line is not valid text"))?;
        tokens.clear();
        tokens.extend(text.split_ascii_whitespace());
        if tokens.len() != n_props {
            return Err(ply_err(
                line_start,
                format!("vertex {k} has {} values, expected {n_props}", tokens.len()),
            ));
        }
        let mut xyz = [0.0f64; 3];
        for (c, &i) in xyz.iter_mut().zip(&layout.xyz) {
            let v: f32 = tokens[i]
                .parse()
                .map_err(|_| ply_err(line_start, format!("vertex {k}: '{}' is not a float", tokens[i])))?;
            if !v.is_finite() {
                return Err(ply_err(line_start, format!("vertex {k}: non-finite coordinate")));
            }
            *c = v as f64;
        }
        points.push(Point3::from(xyz));
        if let (Some(rgb), Some(colors)) = (layout.rgb, colors.as_mut()) {
            let mut c = [0.0f64; 3];
            for (slot, &i) in c.iter_mut().zip(&rgb) {
                let v: u8 = tokens[i]
                    .parse()
                    .map_err(|_| ply_err(line_start, format!("vertex {k}: '{}' is not a uchar", tokens[i])))?;
                *slot = v as f64 / 255.0;
            }
            colors.push(Rgb::from(c));
        }
    }
    ColoredPointCloud::from_parts(points, colors)
}

fn read_ply_binary(
    bytes: &[u8],
    header: &PlyHeader,
    vertex_pos: usize,
    layout: &VertexLayout,
) -> Result<ColoredPointCloud> {
    let mut offset = header.body_offset;
    for element in &header.elements[..vertex_pos] {
        for _ in 0..element.count {
            for prop in &element.properties {
                match prop.kind {
                    PropertyKind::Scalar(s) => {
                        offset = advance(bytes, offset, s.size())?;
                    }
                    PropertyKind::List { count, item } => {
                        let end = advance(bytes, offset, count.size())?;
                        let n = count
                            .read_count(&bytes[offset..end])
                            .ok_or_else(|| ply_err(offset, "negative list count"))?;
                        let len = n.checked_mul(item.size()).ok_or_else(|| ply_err(offset, "list too long"))?;
                        offset = advance(bytes, end, len)?;
                    }
                }
            }
        }
    }
    let vertex = &header.elements[vertex_pos];
    let mut field_offsets = Vec::with_capacity(vertex.properties.len());
    let mut stride = 0usize;
    for p in &vertex.properties {
        field_offsets.push(stride);
        if let PropertyKind::Scalar(s) = p.kind {
            stride += s.size();
        }
    }
    let needed = vertex
        .count
        .checked_mul(stride)
        .ok_or_else(|| ply_err(offset, "vertex payload size overflows"))?;
    if bytes.len() - offset < needed {
        let have = (bytes.len() - offset) / stride.max(1);
        return Err(ply_err(
            bytes.len(),
            format!("truncated payload: expected {} vertices, found {have}", vertex.count),
        ));
    }
    let mut points = Vec::with_capacity(vertex.count);
    let mut colors = layout.rgb.map(|_| Vec::with_capacity(vertex.count));
    for k in 0..vertex.count {
        let rec = offset + k * stride;
        let mut xyz = [0.0f64; 3];
        for (c, &i) in xyz.iter_mut().zip(&layout.xyz) {
            let at = rec + field_offsets[i];
            let v = f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(ply_err(at, format!("vertex {k}: non-finite coordinate")));
            }
            *c = v as f64;
        }
        points.push(Point3::from(xyz));
        if let (Some(rgb), Some(colors)) = (layout.rgb, colors.as_mut()) {
            let c = rgb.map(|i| bytes[rec + field_offsets[i]] as f64 / 255.0);
            colors.push(Rgb::from(c));
        }
    }
    ColoredPointCloud::from_parts(points, colors)
}

fn advance(bytes: &[u8], offset: usize, len: usize) -> Result<usize> {
    match offset.checked_add(len) {
        Some(end) if end <= bytes.len() => Ok(end),
        _ => Err(ply_err(bytes.len(), "truncated payload")),
    }
}

/// ASCII PLY. Coordinates are written as the shortest decimal that
/// round-trips the float32 value; colors as `round(c * 255)`.
pub fn write_ply(cloud: &ColoredPointCloud) -> Vec<u8> {
    let mut out = String::with_capacity(64 + cloud.len() * 40);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.has_colors() {
        out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(out, "{} {} {}", p.x as f32, p.y as f32, p.z as f32);
        if let Some(colors) = cloud.colors() {
            let c = colors[i];
            let _ = write!(out, " {} {} {}", to_u8(c.x), to_u8(c.y), to_u8(c.z));
        }
        out.push('\n');
    }
    out.into_bytes()
}

// ---------------------------------------------------------------------------
// PGM / PPM

struct NetpbmHeader {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: u32,
    comments: Vec<String>,
    data_offset: usize,
}

fn parse_netpbm_header(bytes: &[u8], format: &'static str, magics: &[&[u8; 2]]) -> Result<NetpbmHeader> {
    if bytes.len() < 2 || !magics.iter().any(|m| bytes[..2] == m[..]) {
        return Err(Error::parse(format, 0, "bad magic"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2usize;
    let mut comments = Vec::new();
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    let end = bytes[pos..]
                        .iter()
                        .position(|b| *b == b'\n')
                        .map_or(bytes.len(), |e| pos + e);
                    comments.push(String::from_utf8_lossy(&bytes[pos + 1..end]).trim().to_string());
                    pos = end;
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(format, pos, "expected a header integer"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::parse(format, start, "header integer out of range"))?;
    }
    // exactly one whitespace byte separates the header from binary data
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::parse(format, pos, "header must end with whitespace")),
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(Error::parse(format, pos, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(format, pos, "maxval must lie in 1..=65535"));
    }
    let width = usize::try_from(w).map_err(|_| Error::parse(format, pos, "width too large"))?;
    let height = usize::try_from(h).map_err(|_| Error::parse(format, pos, "height too large"))?;
    if width.checked_mul(height).is_none_or(|n| n > (1 << 31)) {
        return Err(Error::parse(format, pos, "image too large"));
    }
    Ok(NetpbmHeader {
        magic,
        width,
        height,
        maxval: maxval as u32,
        comments,
        data_offset: pos,
    })
}

/// Read `count` samples after the header, binary or ASCII depending on the magic.
fn read_samples(bytes: &[u8], header: &NetpbmHeader, format: &'static str, per_pixel: usize) -> Result<Vec<u32>> {
    let count = header.width * header.height * per_pixel;
    let binary = header.magic[1] >= b'4';
    let mut out = Vec::with_capacity(count.min(bytes.len()));
    if binary {
        let width = if header.maxval > 255 { 2 } else { 1 };
        let data = &bytes[header.data_offset..];
        if data.len() != count * width {
            return Err(Error::parse(
                format,
                header.data_offset,
                format!(
                    "dimension mismatch: header declares {} samples, payload holds {}",
                    count,
                    data.len() / width
                ),
            ));
        }
        for (k, chunk) in data.chunks_exact(width).enumerate() {
            let v = if width == 2 {
                u16::from_be_bytes([chunk[0], chunk[1]]) as u32
            } else {
                chunk[0] as u32
            };
            if v > header.maxval {
                return Err(Error::parse(format, header.data_offset + k * width, "sample exceeds maxval"));
            }
            out.push(v);
        }
    } else {
        let mut pos = header.data_offset;
        loop {
            while bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
                pos += 1;
            }
            if pos >= bytes.len() {
                break;
            }
            let start = pos;
            while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
                pos += 1;
            }
            if start == pos {
                return Err(Error::parse(format, pos, "expected a sample value"));
            }
            let v: u32 = std::str::from_utf8(&bytes[start..pos])
                .expect("ascii digits")
                .parse()
                .map_err(|_| Error::parse(format, start, "sample out of range"))?;
            if v > header.maxval {
                return Err(Error::parse(format, start, "sample exceeds maxval"));
            }
            if out.len() == count {
                return Err(Error::parse(format, start, "dimension mismatch: extra samples"));
            }
            out.push(v);
        }
        if out.len() != count {
            return Err(Error::parse(
                format,
                bytes.len(),
                format!("dimension mismatch: expected {count} samples, found {}", out.len()),
            ));
        }
    }
    Ok(out)
}

/// Depth range metadata written into the PGM comment.
fn depth_metadata(comments: &[String]) -> Option<(f64, f64)> {
    let mut near = None;
    let mut far = None;
    for c in comments {
        for tok in c.split_ascii_whitespace() {
            if let Some(v) = tok.strip_prefix("near=") {
                near = v.parse::<f64>().ok();
            } else if let Some(v) = tok.strip_prefix("far=") {
                far = v.parse::<f64>().ok();
            }
        }
    }
    match (near, far) {
        (Some(n), Some(f)) if n.is_finite() && f.is_finite() && n <= f => Some((n, f)),
        _ => None,
    }
}

/// 16-bit binary PGM. Valid depths map linearly from `[near, far]` to
/// `[1, 65535]`; 0 marks invalid pixels. `near`/`far` are the valid depth
/// range and are recorded in a comment line.
pub fn write_depth_pgm(depth: &DepthImage) -> Vec<u8> {
    let (near, far) = depth.valid_range().unwrap_or((0.0, 0.0));
    let mut out = format!(
        "P5\n# pcfill-depth near={near:?} far={far:?}\n{} {}\n65535\n",
        depth.width(),
        depth.height()
    )
    .into_bytes();
    out.reserve(depth.width() * depth.height() * 2);
    let span = far - near;
    for (d, ok) in depth.depth().iter().zip(depth.valid()) {
        let sample: u16 = if !ok {
            0
        } else if span <= 0.0 {
            1
        } else {
            (1.0 + ((d - near) / span * 65534.0).round()).clamp(1.0, 65535.0) as u16
        };
        out.extend_from_slice(&sample.to_be_bytes());
    }
    out
}

/// Inverse of [`write_depth_pgm`]. Accepts P2 and P5; the near/far comment
/// is required.
pub fn read_depth_pgm(bytes: &[u8]) -> Result<DepthImage> {
    let header = parse_netpbm_header(bytes, "pgm", &[b"P2", b"P5"])?;
    let (near, far) =
        depth_metadata(&header.comments).ok_or_else(|| Error::parse("pgm", 2, "missing near/far depth metadata"))?;
    if header.maxval < 2 && far > near {
        return Err(Error::parse("pgm", header.data_offset, "depth maxval too small"));
    }
    let samples = read_samples(bytes, &header, "pgm", 1)?;
    let top = header.maxval as f64 - 1.0;
    let mut depth = Vec::with_capacity(samples.len());
    let mut valid = Vec::with_capacity(samples.len());
    for v in samples {
        if v == 0 {
            depth.push(0.0);
            valid.push(false);
            continue;
        }
        let d = if v == header.maxval {
            far
        } else {
            near + (v as f64 - 1.0) * (far - near) / top
        };
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::parse("pgm", header.data_offset, "decoded depth is not positive"));
        }
        depth.push(d);
        valid.push(true);
    }
    DepthImage::from_parts(header.width, header.height, depth, valid)
}

/// 8-bit binary PGM with 0/255 samples.
pub fn write_mask_pgm(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.bits().iter().map(|b| if *b { 255u8 } else { 0 }));
    out
}

/// Any non-zero sample is a set bit.
pub fn read_mask_pgm(bytes: &[u8]) -> Result<BinaryMask> {
    let header = parse_netpbm_header(bytes, "pgm", &[b"P2", b"P5"])?;
    let samples = read_samples(bytes, &header, "pgm", 1)?;
    BinaryMask::from_bits(header.width, header.height, samples.into_iter().map(|v| v != 0).collect())
}

/// 8-bit binary PPM (P6).
pub fn write_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.reserve(image.pixels().len() * 3);
    for p in image.pixels() {
        out.extend_from_slice(&[to_u8(p.x), to_u8(p.y), to_u8(p.z)]);
    }
    out
}

pub fn read_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let header = parse_netpbm_header(bytes, "ppm", &[b"P3", b"P6"])?;
    let samples = read_samples(bytes, &header, "ppm", 3)?;
    let scale = header.maxval as f64;
    let pixels = samples
        .chunks_exact(3)
        .map(|c| Rgb::new(c[0] as f64 / scale, c[1] as f64 / scale, c[2] as f64 / scale))
        .collect();
    RgbImage::from_pixels(header.width, header.height, pixels)
}
