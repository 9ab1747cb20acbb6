//! Plain-text mesh dump.
//!
//! ```text
//! movefem-mesh <d> <k>
//! vertices <n>
//! <x> <y> [<z>]            n lines
//! elements <m>
//! <region> <v0> .. <vd>    m lines
//! facets <f>
//! <class> <v0> .. <v(d-1)> f lines, class is interior, interface or boundary
//! nodes <p>                only when k > 1
//! <x> <y> [<z>]            p lines
//! element_nodes <m>        only when k > 1
//! <n0> .. <n(N-1)>         m lines, reference node order
//! ```
//!
//! Floats are written in shortest round-trip form, so a dump read back
//! reproduces the mesh bit for bit.

use super::curved::from_parts;
use super::{CurvedMesh, FacetKind, LinearMesh};
use crate::error::{Assumption, Error, Result};
use crate::linalg::Point;
use crate::ref_elem::ReferenceSimplex;
use std::fmt::Write;
use std::path::Path;

fn write_point(s: &mut String, dim: usize, p: &Point) {
    let parts: Vec<String> = p[..dim].iter().map(|x| format!("{x:?}")).collect();
    let _ = writeln!(s, "{}", parts.join(" "));
}

fn write_linear_blocks(s: &mut String, m: &LinearMesh) {
    let _ = writeln!(s, "vertices {}", m.vertices.len());
    for p in &m.vertices {
        write_point(s, m.dim, p);
    }
    let _ = writeln!(s, "elements {}", m.n_elements());
    for (el, r) in m.elements.iter().zip(&m.regions) {
        let v: Vec<String> = el.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(s, "{r} {}", v.join(" "));
    }
    let _ = writeln!(s, "facets {}", m.facets.len());
    for f in &m.facets {
        let v: Vec<String> = f.vertices.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(s, "{} {}", f.kind.as_str(), v.join(" "));
    }
}

/// Dump of a curved mesh; geometry nodes are included for `k > 1`.
pub fn write_native(mesh: &CurvedMesh) -> String {
    let lin = &mesh.topo.linear;
    let k = mesh.order();
    let mut s = format!("movefem-mesh {} {}\n", lin.dim, k);
    write_linear_blocks(&mut s, lin);
    if k > 1 {
        let _ = writeln!(s, "nodes {}", mesh.n_nodes());
        for p in &mesh.nodes {
            write_point(&mut s, lin.dim, p);
        }
        let _ = writeln!(s, "element_nodes {}", mesh.n_elements());
        for e in 0..mesh.n_elements() {
            let v: Vec<String> = mesh.element_node_ids(e).iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "{}", v.join(" "));
        }
    }
    s
}

pub fn read_native(path: impl AsRef<Path>) -> Result<CurvedMesh> {
    parse_native(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<Vec<&'a str>> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Ok(t.split_whitespace().collect());
            }
        }
        Err(Error::Parse { line: self.line + 1, msg: "unexpected end of file".into() })
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.line, msg: msg.into() }
    }

    fn header(&mut self, name: &str) -> Result<usize> {
        let f = self.next()?;
        if f.len() != 2 || f[0] != name {
            return Err(self.err(format!("expected '{name} <count>'")));
        }
        f[1].parse().map_err(|_| self.err("bad count"))
    }

    fn numbers<T: std::str::FromStr>(&self, f: &[&str], n: usize) -> Result<Vec<T>> {
        if f.len() != n {
            return Err(self.err(format!("expected {n} entries, found {}", f.len())));
        }
        f.iter().map(|x| x.parse().map_err(|_| self.err(format!("bad number '{x}'")))).collect()
    }

    fn point(&mut self, dim: usize) -> Result<Point> {
        let f = self.next()?;
        let v: Vec<f64> = self.numbers(&f, dim)?;
        let mut p = [0.0; 3];
        p[..dim].copy_from_slice(&v);
        Ok(p)
    }
}

pub fn parse_native(text: &str) -> Result<CurvedMesh> {
    let mut r = Lines { inner: text.lines().enumerate(), line: 0 };
    let h = r.next()?;
    if h.len() != 3 || h[0] != "movefem-mesh" {
        return Err(r.err("expected header 'movefem-mesh <d> <k>'"));
    }
    let dim: usize = h[1].parse().map_err(|_| r.err("bad dimension"))?;
    let k: usize = h[2].parse().map_err(|_| r.err("bad order"))?;
    if dim != 2 && dim != 3 {
        return Err(r.err(format!("dimension {dim} not supported")));
    }
    let reference = ReferenceSimplex::new(dim, k)?;

    let nv = r.header("vertices")?;
    let vertices = (0..nv).map(|_| r.point(dim)).collect::<Result<Vec<_>>>()?;
    let ne = r.header("elements")?;
    let mut elements = Vec::with_capacity(ne);
    let mut regions = Vec::with_capacity(ne);
    for _ in 0..ne {
        let f = r.next()?;
        let v: Vec<usize> = r.numbers(&f, dim + 2)?;
        regions.push(v[0] as u8);
        elements.push(v[1..].to_vec());
    }
    let nf = r.header("facets")?;
    let mut facets = Vec::with_capacity(nf);
    for _ in 0..nf {
        let f = r.next()?;
        let kind = f.first().and_then(|c| FacetKind::parse(c)).ok_or_else(|| r.err("bad facet class"))?;
        let mut v: Vec<usize> = r.numbers(&f[1..], dim)?;
        v.sort_unstable();
        facets.push((kind, v, r.line));
    }
    let lin = LinearMesh::new(dim, vertices, elements, regions)?;
    if facets.len() != lin.facets.len() {
        return Err(Error::mesh(
            Assumption::M3,
            format!("facet block lists {} facets, the elements define {}", facets.len(), lin.facets.len()),
        ));
    }
    let mut derived: std::collections::HashMap<&[usize], FacetKind> = std::collections::HashMap::new();
    for f in &lin.facets {
        derived.insert(&f.vertices, f.kind);
    }
    for (kind, v, line) in &facets {
        match derived.get(v.as_slice()) {
            Some(d) if d == kind => {}
            Some(d) => {
                return Err(Error::mesh(
                    Assumption::M4,
                    format!("facet on line {line} is listed as {} but is {}", kind.as_str(), d.as_str()),
                ))
            }
            None => return Err(Error::mesh(Assumption::M3, format!("facet on line {line} is not an element facet"))),
        }
    }

    let (nodes, elem_nodes) = if k > 1 {
        let np = r.header("nodes")?;
        let nodes = (0..np).map(|_| r.point(dim)).collect::<Result<Vec<_>>>()?;
        let m = r.header("element_nodes")?;
        if m != lin.n_elements() {
            return Err(r.err("element_nodes count differs from the element count"));
        }
        let nl = reference.n_nodes();
        let mut en = Vec::with_capacity(m * nl);
        for _ in 0..m {
            let f = r.next()?;
            let v: Vec<usize> = r.numbers(&f, nl)?;
            if v.iter().any(|&x| x >= np) {
                return Err(r.err("node index out of range"));
            }
            en.extend(v);
        }
        (nodes, en)
    } else {
        let en = lin.elements.iter().flatten().copied().collect();
        (lin.vertices.clone(), en)
    };
    from_parts(lin, reference, nodes, elem_nodes)
}

/// Dump of a straight mesh (order 1).
pub fn write_native_linear(mesh: &LinearMesh) -> String {
    let mut s = format!("movefem-mesh {} 1\n", mesh.dim);
    write_linear_blocks(&mut s, mesh);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LevelSetGeometry;
    use crate::mesh::{build_isoparametric, generate_fitted_mesh};

    #[test]
    fn round_trip_is_exact() {
        let g = LevelSetGeometry::oscillating_ellipse(2, 0.25);
        let lin = generate_fitted_mesh(&g, 0.35).unwrap();
        for k in 1..=3 {
            let c = build_isoparametric(lin.clone(), &g, k).unwrap();
            let text = write_native(&c);
            let back = parse_native(&text).unwrap();
            assert_eq!(back.nodes, c.nodes);
            assert_eq!(back.topo.elem_nodes, c.topo.elem_nodes);
            assert_eq!(back.topo.linear, c.topo.linear);
            assert_eq!(write_native(&back), text);
        }
        assert!(write_native_linear(&lin).starts_with("movefem-mesh 2 1\nvertices"));
    }

    #[test]
    fn wrong_facet_class_is_rejected() {
        let g = LevelSetGeometry::oscillating_ellipse(2, 0.25);
        let lin = generate_fitted_mesh(&g, 0.5).unwrap();
        let c = build_isoparametric(lin, &g, 1).unwrap();
        let text = write_native(&c).replacen("interface", "interior", 1);
        assert!(matches!(parse_native(&text), Err(Error::Mesh { .. })));
    }
}
