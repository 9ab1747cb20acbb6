//! Gmsh ASCII 2.2 subset.
//!
//! Physical tags: 1 and 2 label the cells of the inner and outer region,
//! 3 labels interface facets and 4 labels outer-boundary facets.

use super::{FacetKind, LinearMesh};
use crate::error::{Assumption, Error, Result};
use crate::geometry::LevelSetGeometry;
use crate::linalg::{dist, Point};
use std::collections::{HashMap, HashSet};
use std::fmt::Write;
use std::path::Path;

const TAG_INTERFACE: usize = 3;
const TAG_BOUNDARY: usize = 4;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Reads a `.msh` file; see [`parse_msh`].
pub fn import_msh(path: impl AsRef<Path>, geom: Option<&LevelSetGeometry>) -> Result<LinearMesh> {
    let text = std::fs::read_to_string(path)?;
    parse_msh(&text, geom)
}

struct RawElement {
    line: usize,
    kind: usize,
    tag: Option<usize>,
    nodes: Vec<usize>,
}

/// Parses a mesh. When a geometry is given, interface vertices are snapped
/// onto the interface at t = 0; a move larger than `h^2` is an error.
pub fn parse_msh(text: &str, geom: Option<&LevelSetGeometry>) -> Result<LinearMesh> {
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    let mut node_ids: HashMap<usize, usize> = HashMap::new();
    let mut coords: Vec<Point> = Vec::new();
    let mut raw: Vec<RawElement> = Vec::new();
    let mut saw_format = false;
    let next_count = |i: &mut usize, what: &str| -> Result<usize> {
        *i += 1;
        lines
            .get(*i)
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| parse_err(*i + 1, format!("expected {what} count")))
    };
    while i < lines.len() {
        match lines[i].trim() {
            "$MeshFormat" => {
                i += 1;
                let v = lines.get(i).map(|l| l.split_whitespace().collect::<Vec<_>>()).unwrap_or_default();
                if v.len() < 3 || !v[0].starts_with("2.2") {
                    return Err(parse_err(i + 1, "only mesh format 2.2 is supported"));
                }
                if v[1] != "0" {
                    return Err(parse_err(i + 1, "binary mesh files are not supported"));
                }
                saw_format = true;
            }
            "$Nodes" => {
                let n = next_count(&mut i, "node")?;
                for _ in 0..n {
                    i += 1;
                    let f: Vec<&str> = lines.get(i).map(|l| l.split_whitespace().collect()).unwrap_or_default();
                    if f.len() < 4 {
                        return Err(parse_err(i + 1, "node line needs id x y z"));
                    }
                    let id: usize = f[0].parse().map_err(|_| parse_err(i + 1, "bad node id"))?;
                    let mut p = [0.0; 3];
                    for k in 0..3 {
                        p[k] = f[k + 1].parse().map_err(|_| parse_err(i + 1, "bad coordinate"))?;
                    }
                    if node_ids.insert(id, coords.len()).is_some() {
                        return Err(parse_err(i + 1, format!("duplicate node id {id}")));
                    }
                    coords.push(p);
                }
            }
            "$Elements" => {
                let n = next_count(&mut i, "element")?;
                for _ in 0..n {
                    i += 1;
                    let f: Vec<usize> = lines
                        .get(i)
                        .map(|l| l.split_whitespace().map(|t| t.parse::<usize>()).collect::<std::result::Result<_, _>>())
                        .transpose()
                        .map_err(|_| parse_err(i + 1, "bad integer in element line"))?
                        .unwrap_or_default();
                    if f.len() < 3 {
                        return Err(parse_err(i + 1, "element line too short"));
                    }
                    let (kind, ntags) = (f[1], f[2]);
                    if f.len() < 3 + ntags {
                        return Err(parse_err(i + 1, "element line too short for its tags"));
                    }
                    let tag = if ntags > 0 { Some(f[3]) } else { None };
                    raw.push(RawElement { line: i + 1, kind, tag, nodes: f[3 + ntags..].to_vec() });
                }
            }
            _ => {}
        }
        i += 1;
    }
    if !saw_format {
        return Err(parse_err(1, "missing $MeshFormat section"));
    }
    let dim = if raw.iter().any(|e| e.kind == 4) { 3 } else { 2 };
    let (cell_kind, facet_kind, cell_nodes) = if dim == 3 { (4, 2, 4) } else { (2, 1, 3) };

    let mut elements = Vec::new();
    let mut regions = Vec::new();
    let mut tagged: HashMap<Vec<usize>, (FacetKind, usize)> = HashMap::new();
    for e in &raw {
        let expected = match e.kind {
            k if k == cell_kind => cell_nodes,
            k if k == facet_kind => cell_nodes - 1,
            15 => 1,
            1 | 2 if dim == 3 => 2,
            k => return Err(Error::Unsupported(format!("gmsh element type {k} (line {})", e.line))),
        };
        if e.nodes.len() != expected {
            return Err(parse_err(e.line, format!("element type {} needs {expected} nodes", e.kind)));
        }
        let ids = e
            .nodes
            .iter()
            .map(|n| node_ids.get(n).copied().ok_or_else(|| parse_err(e.line, format!("unknown node {n}"))))
            .collect::<Result<Vec<usize>>>()?;
        if e.kind == cell_kind {
            let tag = e.tag.ok_or_else(|| parse_err(e.line, "cell is missing its physical tag (expected 1 or 2)"))?;
            if tag != 1 && tag != 2 {
                return Err(parse_err(e.line, format!("cell has physical tag {tag}, expected 1 or 2")));
            }
            elements.push(ids);
            regions.push(tag as u8);
        } else if e.kind == facet_kind {
            let tag = e.tag.ok_or_else(|| parse_err(e.line, "facet is missing its physical tag (expected 3 or 4)"))?;
            let kind = match tag {
                TAG_INTERFACE => FacetKind::Interface,
                TAG_BOUNDARY => FacetKind::Boundary,
                _ => return Err(parse_err(e.line, format!("facet has physical tag {tag}, expected 3 or 4"))),
            };
            let mut key = ids;
            key.sort_unstable();
            tagged.insert(key, (kind, e.line));
        }
    }
    if elements.is_empty() {
        return Err(parse_err(lines.len(), "no cells found"));
    }
    // Drop nodes not referenced by cells (e.g. geometry points) and renumber.
    let mut used = vec![false; coords.len()];
    for el in &elements {
        for &v in el {
            used[v] = true;
        }
    }
    let mut remap = vec![usize::MAX; coords.len()];
    let mut vertices = Vec::new();
    for (v, &u) in used.iter().enumerate() {
        if u {
            remap[v] = vertices.len();
            vertices.push(coords[v]);
        }
    }
    for el in elements.iter_mut() {
        for v in el.iter_mut() {
            *v = remap[*v];
        }
    }
    let tagged: HashMap<Vec<usize>, (FacetKind, usize)> = tagged
        .into_iter()
        .map(|(k, v)| {
            let mut k: Vec<usize> = k.iter().map(|&x| remap[x]).collect();
            k.sort_unstable();
            (k, v)
        })
        .collect();

    let mut mesh = LinearMesh::new(dim, vertices, elements, regions)?;
    if !tagged.is_empty() {
        let mut seen = HashSet::new();
        for f in &mesh.facets {
            match tagged.get(&f.vertices) {
                Some(&(kind, line)) => {
                    if kind != f.kind {
                        return Err(Error::mesh(
                            Assumption::M4,
                            format!(
                                "facet on line {line} is tagged {} but the region labels make it {}",
                                kind.as_str(),
                                f.kind.as_str()
                            ),
                        ));
                    }
                    seen.insert(f.vertices.clone());
                }
                None if f.kind == FacetKind::Interface => {
                    return Err(Error::mesh(
                        Assumption::M4,
                        format!("interface facet {:?} between regions 1 and 2 is missing tag 3", f.vertices),
                    ));
                }
                None => {}
            }
        }
        if let Some((_, &(_, line))) = tagged.iter().find(|(k, _)| !seen.contains(*k)) {
            return Err(Error::mesh(Assumption::M3, format!("tagged facet on line {line} is not a facet of any cell")));
        }
    }
    if let Some(g) = geom {
        snap_interface(&mut mesh, g)?;
    }
    Ok(mesh)
}

fn snap_interface(mesh: &mut LinearMesh, geom: &LevelSetGeometry) -> Result<()> {
    let limit = mesh.h * mesh.h;
    for v in 0..mesh.vertices.len() {
        if !mesh.on_interface[v] {
            continue;
        }
        let p = mesh.vertices[v];
        if geom.phi(0.0, &p).abs() <= super::validate::SNAP_TOL {
            continue;
        }
        let q = geom.project(0.0, &p)?;
        let moved = dist(&p, &q);
        if moved > limit {
            return Err(Error::mesh(
                Assumption::M5,
                format!("interface vertex {v} is {moved:.3e} from the interface (limit h^2 = {limit:.3e})"),
            ));
        }
        mesh.vertices[v] = q;
    }
    // Recompute derived data for the moved vertices.
    *mesh = LinearMesh::new(mesh.dim, std::mem::take(&mut mesh.vertices), std::mem::take(&mut mesh.elements), std::mem::take(&mut mesh.regions))?;
    Ok(())
}

/// Writes cells with their region tags followed by tagged interface and
/// boundary facets.
pub fn write_msh(mesh: &LinearMesh) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
    let _ = writeln!(s, "$Nodes\n{}", mesh.vertices.len());
    for (i, p) in mesh.vertices.iter().enumerate() {
        let _ = writeln!(s, "{} {} {} {}", i + 1, p[0], p[1], p[2]);
    }
    s.push_str("$EndNodes\n");
    let (cell_kind, facet_kind) = if mesh.dim == 3 { (4, 2) } else { (2, 1) };
    let facets: Vec<_> = mesh.facets.iter().filter(|f| f.kind != FacetKind::Interior).collect();
    let _ = writeln!(s, "$Elements\n{}", mesh.n_elements() + facets.len());
    let mut id = 1;
    for (el, &r) in mesh.elements.iter().zip(&mesh.regions) {
        let nodes: Vec<String> = el.iter().map(|v| (v + 1).to_string()).collect();
        let _ = writeln!(s, "{id} {cell_kind} 2 {r} {r} {}", nodes.join(" "));
        id += 1;
    }
    for f in facets {
        let tag = if f.kind == FacetKind::Interface { TAG_INTERFACE } else { TAG_BOUNDARY };
        let nodes: Vec<String> = f.vertices.iter().map(|v| (v + 1).to_string()).collect();
        let _ = writeln!(s, "{id} {facet_kind} 2 {tag} {tag} {}", nodes.join(" "));
        id += 1;
    }
    s.push_str("$EndElements\n");
    s
}
