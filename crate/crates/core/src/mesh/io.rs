//! Mesh file formats.
//!
//! * `.node`/`.ele` (TetGen/Triangle style). `.node`: header
//!   `<#points> <dim> <#attributes> <#markers>`, then
//!   `<index> <x> <y> [<z>] [attributes...] [marker]`. `.ele`: header
//!   `<#elements> <nodes per element> <#attributes>`, then
//!   `<index> <v0> ... <vd> [attributes...]`. `#` starts a comment. The index
//!   base (0 or 1) is taken from the first point index.
//! * OBJ with `v x y z` and `f a b c` lines (1-based, `a/b/c` forms and
//!   negative indices accepted); loaded as a 2D triangle mesh, which requires
//!   every `z` to be exactly zero.
//! * Binary dump: magic `LDYNMSH1`, then little-endian `u32 dim`,
//!   `u32 level_id`, `u64 n_vertices`, `u64 n_elements`, `n_vertices*dim`
//!   `f64` coordinates and `n_elements*(dim+1)` `u64` vertex indices.

use std::path::{Path, PathBuf};

use super::SimplicialMesh;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LDYNMSH1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    NodeEle,
    Obj,
    Binary,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<MeshFormat> {
        match path.extension()?.to_str()? {
            "node" | "ele" => Some(MeshFormat::NodeEle),
            "obj" => Some(MeshFormat::Obj),
            "mesh" | "bin" => Some(MeshFormat::Binary),
            _ => None,
        }
    }
}

/// Result of loading: the mesh plus how many elements had to be flipped.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub mesh: SimplicialMesh,
    pub reoriented: usize,
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<Loaded> {
    let (mesh, reoriented) = match format {
        MeshFormat::NodeEle => read_node_ele(path)?,
        MeshFormat::Obj => read_obj(path)?,
        MeshFormat::Binary => (read_binary(path)?, 0),
    };
    if reoriented > 0 {
        log::warn!(
            "{}: reoriented {reoriented} inverted elements",
            path.display()
        );
    }
    Ok(Loaded { mesh, reoriented })
}

pub fn save_mesh(mesh: &SimplicialMesh, path: &Path, format: MeshFormat) -> Result<()> {
    match format {
        MeshFormat::NodeEle => write_node_ele(mesh, path),
        MeshFormat::Obj => write_obj(mesh, path),
        MeshFormat::Binary => write_binary(mesh, path),
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("");
        let toks: Vec<&str> = l.split_whitespace().collect();
        (!toks.is_empty()).then_some((i + 1, toks))
    })
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, tok: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    tok.parse::<T>()
        .map_err(|e| parse_err(path, line, format!("bad number `{tok}`: {e}")))
}

fn read_node_ele(path: &Path) -> Result<(SimplicialMesh, usize)> {
    let node_path = sibling(path, "node");
    let ele_path = sibling(path, "ele");
    let node_text = std::fs::read_to_string(&node_path).map_err(|e| Error::io(&node_path, e))?;
    let ele_text = std::fs::read_to_string(&ele_path).map_err(|e| Error::io(&ele_path, e))?;

    let mut lines = data_lines(&node_text);
    let (ln, header) = lines
        .next()
        .ok_or_else(|| parse_err(&node_path, 1, "empty .node file"))?;
    let npts: usize = parse_num(&node_path, ln, header[0])?;
    let dim: usize = parse_num(&node_path, ln, header.get(1).copied().unwrap_or("3"))?;
    if dim != 2 && dim != 3 {
        return Err(parse_err(
            &node_path,
            ln,
            format!("unsupported dimension {dim}"),
        ));
    }
    let mut base = None;
    let mut rest = Vec::with_capacity(npts * dim);
    for (i, (ln, toks)) in lines.by_ref().take(npts).enumerate() {
        if toks.len() < dim + 1 {
            return Err(parse_err(&node_path, ln, "too few fields"));
        }
        let idx: usize = parse_num(&node_path, ln, toks[0])?;
        let b = *base.get_or_insert(idx);
        if b > 1 {
            return Err(parse_err(&node_path, ln, "first index must be 0 or 1"));
        }
        if idx != i + b {
            return Err(parse_err(
                &node_path,
                ln,
                format!("expected index {}", i + b),
            ));
        }
        for t in &toks[1..=dim] {
            rest.push(parse_num::<f64>(&node_path, ln, t)?);
        }
    }
    if rest.len() != npts * dim {
        return Err(parse_err(&node_path, 0, format!("expected {npts} points")));
    }
    let base = base.unwrap_or(0);

    let mut lines = data_lines(&ele_text);
    let (ln, header) = lines
        .next()
        .ok_or_else(|| parse_err(&ele_path, 1, "empty .ele file"))?;
    let nel: usize = parse_num(&ele_path, ln, header[0])?;
    let per: usize = parse_num(&ele_path, ln, header.get(1).copied().unwrap_or("4"))?;
    if per != dim + 1 {
        return Err(parse_err(
            &ele_path,
            ln,
            format!("{per} nodes per element in dimension {dim}"),
        ));
    }
    let mut elements = Vec::with_capacity(nel * per);
    for (ln, toks) in lines.take(nel) {
        if toks.len() < per + 1 {
            return Err(parse_err(&ele_path, ln, "too few fields"));
        }
        for t in &toks[1..=per] {
            let v: usize = parse_num(&ele_path, ln, t)?;
            if v < base {
                return Err(parse_err(
                    &ele_path,
                    ln,
                    format!("index {v} below base {base}"),
                ));
            }
            elements.push(v - base);
        }
    }
    if elements.len() != nel * per {
        return Err(parse_err(&ele_path, 0, format!("expected {nel} elements")));
    }
    SimplicialMesh::new(dim, rest, elements, 0)
}

fn write_node_ele(mesh: &SimplicialMesh, path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let d = mesh.dim();
    let mut node = format!("{} {} 0 0\n", mesh.n_vertices(), d);
    for i in 0..mesh.n_vertices() {
        let _ = write!(node, "{i}");
        for x in mesh.vertex(i) {
            let _ = write!(node, " {x:?}");
        }
        node.push('\n');
    }
    let mut ele = format!("{} {} 0\n", mesh.n_elements(), d + 1);
    for (e, el) in mesh.elements().enumerate() {
        let _ = write!(ele, "{e}");
        for v in el {
            let _ = write!(ele, " {v}");
        }
        ele.push('\n');
    }
    let np = sibling(path, "node");
    let ep = sibling(path, "ele");
    std::fs::write(&np, node).map_err(|e| Error::io(&np, e))?;
    std::fs::write(&ep, ele).map_err(|e| Error::io(&ep, e))
}

fn read_obj(path: &Path) -> Result<(SimplicialMesh, usize)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rest = Vec::new();
    let mut elements = Vec::new();
    for (ln, toks) in data_lines(&text) {
        match toks[0] {
            "v" => {
                if toks.len() < 3 {
                    return Err(parse_err(path, ln, "vertex needs at least x y"));
                }
                let x: f64 = parse_num(path, ln, toks[1])?;
                let y: f64 = parse_num(path, ln, toks[2])?;
                let z: f64 = toks.get(3).map_or(Ok(0.0), |t| parse_num(path, ln, t))?;
                if z != 0.0 {
                    return Err(parse_err(
                        path,
                        ln,
                        "OBJ meshes are read as 2D; z must be 0",
                    ));
                }
                rest.extend([x, y]);
            }
            "f" => {
                if toks.len() != 4 {
                    return Err(parse_err(path, ln, "only triangular faces are supported"));
                }
                let nv = rest.len() / 2;
                for t in &toks[1..] {
                    let head = t.split('/').next().unwrap_or("");
                    let idx: i64 = parse_num(path, ln, head)?;
                    let v = if idx > 0 {
                        idx as usize - 1
                    } else if idx < 0 && (-idx) as usize <= nv {
                        (nv as i64 + idx) as usize
                    } else {
                        return Err(parse_err(path, ln, format!("bad face index {idx}")));
                    };
                    elements.push(v);
                }
            }
            _ => {}
        }
    }
    SimplicialMesh::new(2, rest, elements, 0)
}

fn write_obj(mesh: &SimplicialMesh, path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    if mesh.dim() != 2 {
        return Err(Error::Invalid(
            "OBJ export of volume meshes is not supported".into(),
        ));
    }
    let mut s = String::new();
    for i in 0..mesh.n_vertices() {
        let p = mesh.vertex(i);
        let _ = writeln!(s, "v {:?} {:?} 0", p[0], p[1]);
    }
    for el in mesh.elements() {
        let _ = writeln!(s, "f {} {} {}", el[0] + 1, el[1] + 1, el[2] + 1);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn mesh_to_bytes(mesh: &SimplicialMesh) -> Vec<u8> {
    let mut out =
        Vec::with_capacity(32 + mesh.rest_positions().len() * 8 + mesh.connectivity().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(mesh.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(mesh.level_id() as u32).to_le_bytes());
    out.extend_from_slice(&(mesh.n_vertices() as u64).to_le_bytes());
    out.extend_from_slice(&(mesh.n_elements() as u64).to_le_bytes());
    for x in mesh.rest_positions() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for &v in mesh.connectivity() {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out
}

pub fn mesh_from_bytes(bytes: &[u8]) -> std::result::Result<SimplicialMesh, String> {
    let take = |off: &mut usize, n: usize| -> std::result::Result<&[u8], String> {
        let s = bytes.get(*off..*off + n).ok_or("truncated mesh dump")?;
        *off += n;
        Ok(s)
    };
    let mut off = 0;
    if take(&mut off, 8)? != MAGIC {
        return Err("bad magic".into());
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap()) as usize;
    let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap()) as usize;
    let dim = u32_at(take(&mut off, 4)?);
    let level = u32_at(take(&mut off, 4)?);
    let nv = u64_at(take(&mut off, 8)?);
    let ne = u64_at(take(&mut off, 8)?);
    if !(dim == 2 || dim == 3) {
        return Err(format!("bad dimension {dim}"));
    }
    let mut rest = Vec::with_capacity(nv * dim);
    for _ in 0..nv * dim {
        rest.push(f64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap()));
    }
    let mut el = Vec::with_capacity(ne * (dim + 1));
    for _ in 0..ne * (dim + 1) {
        el.push(u64_at(take(&mut off, 8)?));
    }
    if off != bytes.len() {
        return Err("trailing bytes".into());
    }
    let (mesh, flipped) = SimplicialMesh::new(dim, rest, el, level).map_err(|e| e.to_string())?;
    if flipped != 0 {
        return Err(format!("{flipped} inverted elements in binary dump"));
    }
    Ok(mesh)
}

fn read_binary(path: &Path) -> Result<SimplicialMesh> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    mesh_from_bytes(&bytes).map_err(|m| parse_err(path, 0, m))
}

fn write_binary(mesh: &SimplicialMesh, path: &Path) -> Result<()> {
    std::fs::write(path, mesh_to_bytes(mesh)).map_err(|e| Error::io(path, e))
}
