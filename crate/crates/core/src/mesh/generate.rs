use super::{validate_linear, LinearMesh};
use crate::error::{Assumption, Error, Result};
use crate::geometry::LevelSetGeometry;
use crate::linalg::{axpy, dist, simplex_measure, sub, Point};
use std::collections::HashMap;

/// Structured simplicial mesh of the box `[lower, upper]^dim` with `n` cells
/// per direction, all elements carrying `region`. Triangles alternate their
/// diagonal; cubes are split into six tetrahedra sharing the main diagonal.
pub fn structured_box_mesh(dim: usize, n: usize, lower: f64, upper: f64, region: u8) -> Result<LinearMesh> {
    if n == 0 || !(upper > lower) {
        return Err(Error::Config("structured mesh needs n > 0 and upper > lower".into()));
    }
    let c = |i: usize| lower + (upper - lower) * i as f64 / n as f64;
    let mut vertices = Vec::new();
    let mut elements = Vec::new();
    match dim {
        2 => {
            let id = |i: usize, j: usize| j * (n + 1) + i;
            for j in 0..=n {
                for i in 0..=n {
                    vertices.push([c(i), c(j), 0.0]);
                }
            }
            for j in 0..n {
                for i in 0..n {
                    elements.extend(split_square(id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1), i + j));
                }
            }
        }
        3 => {
            let id = |i: usize, j: usize, k: usize| (k * (n + 1) + j) * (n + 1) + i;
            for k in 0..=n {
                for j in 0..=n {
                    for i in 0..=n {
                        vertices.push([c(i), c(j), c(k)]);
                    }
                }
            }
            const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        for p in PERMS {
                            let mut cur = [i, j, k];
                            let mut tet = vec![id(cur[0], cur[1], cur[2])];
                            for axis in p {
                                cur[axis] += 1;
                                tet.push(id(cur[0], cur[1], cur[2]));
                            }
                            elements.push(tet);
                        }
                    }
                }
            }
        }
        _ => return Err(Error::Unsupported(format!("mesh dimension {dim}"))),
    }
    let regions = vec![region; elements.len()];
    LinearMesh::new(dim, vertices, elements, regions)
}

fn split_square(v00: usize, v10: usize, v01: usize, v11: usize, parity: usize) -> [Vec<usize>; 2] {
    if parity % 2 == 0 {
        [vec![v00, v10, v11], vec![v00, v11, v01]]
    } else {
        [vec![v00, v10, v01], vec![v10, v11, v01]]
    }
}

fn tri_area(p: &[Point; 3]) -> f64 {
    simplex_measure(2, p)
}

/// Root of `phi(0, .)` on the segment `[a, b]`, given opposite signs at the ends.
fn edge_root(geom: &LevelSetGeometry, a: &Point, b: &Point) -> Point {
    let f = |s: f64| geom.phi(0.0, &axpy(a, s, &sub(b, a)));
    let (mut lo, mut hi) = (0.0, 1.0);
    let (mut flo, mut fhi) = (f(lo), f(hi));
    // Illinois variant of regula falsi, with bisection as a safeguard.
    let mut side = 0i32;
    for it in 0..200 {
        let s = if it % 4 == 3 { 0.5 * (lo + hi) } else { (lo * fhi - hi * flo) / (fhi - flo) };
        let fs = f(s);
        if fs == 0.0 || hi - lo < 1e-17 {
            lo = s;
            hi = s;
            break;
        }
        if (fs < 0.0) == (flo < 0.0) {
            lo = s;
            flo = fs;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = s;
            fhi = fs;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    let s = 0.5 * (lo + hi);
    axpy(a, s, &sub(b, a))
}

/// Interface-fitted triangulation of the box for a level set at t = 0.
///
/// A structured background grid is generated, vertices close to the
/// interface are snapped onto it, cut triangles are split at the edge/interface
/// intersections, and the result is checked against the mesh assumptions.
pub fn generate_fitted_mesh(geom: &LevelSetGeometry, h_target: f64) -> Result<LinearMesh> {
    if geom.dim() != 2 {
        return Err(Error::Unsupported(
            "the built-in generator is two-dimensional; import 3D meshes from Gmsh".into(),
        ));
    }
    if !(h_target > 0.0) {
        return Err(Error::Config(format!("h_target must be positive, got {h_target}")));
    }
    let b = geom.box_half_width;
    let n = ((2.0 * b * std::f64::consts::SQRT_2) / h_target).ceil().max(1.0) as usize;
    let hc = 2.0 * b / n as f64;
    let bg = structured_box_mesh(2, n, -b, b, 2)?;
    let mut verts = bg.vertices.clone();
    let tris: Vec<[usize; 3]> = bg.elements.iter().map(|e| [e[0], e[1], e[2]]).collect();
    let mut incident = vec![Vec::new(); verts.len()];
    for (t, tri) in tris.iter().enumerate() {
        for &v in tri {
            incident[v].push(t);
        }
    }
    let area0: Vec<f64> = tris.iter().map(|t| tri_area(&[verts[t[0]], verts[t[1]], verts[t[2]]])).collect();

    // Snap, closest vertices first.
    let on_box = |p: &Point| p[0].abs() >= b || p[1].abs() >= b;
    let mut cand = Vec::new();
    for (v, p) in verts.iter().enumerate() {
        if on_box(p) || !geom.in_tube(0.0, p) {
            continue;
        }
        let r = geom.closest_point(0.0, p);
        if r.converged && r.distance.abs() <= 0.3 * hc && !on_box(&r.point) {
            cand.push((r.distance.abs(), v, r.point));
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut snapped = vec![false; verts.len()];
    for (_, v, target) in cand {
        let ok = incident[v].iter().all(|&t| {
            let tri = tris[t];
            let p = tri.map(|u| if u == v { target } else { verts[u] });
            let all_snapped = tri.iter().all(|&u| u == v || snapped[u]);
            tri_area(&p) >= 0.1 * area0[t] && !all_snapped
        });
        if ok {
            verts[v] = target;
            snapped[v] = true;
        }
    }

    let sign = |v: usize, verts: &[Point]| -> i8 {
        if snapped[v] {
            0
        } else {
            let f = geom.phi(0.0, &verts[v]);
            if f < 0.0 {
                -1
            } else {
                1
            }
        }
    };
    let mut signs: Vec<i8> = (0..verts.len()).map(|v| sign(v, &verts)).collect();

    // Split triangles cut by the interface.
    let mut cuts: HashMap<(usize, usize), usize> = HashMap::new();
    let mut cut_point = |a: usize, b: usize, verts: &mut Vec<Point>, signs: &mut Vec<i8>| -> usize {
        let key = (a.min(b), a.max(b));
        *cuts.entry(key).or_insert_with(|| {
            let p = edge_root(geom, &verts[key.0], &verts[key.1]);
            verts.push(p);
            signs.push(0);
            verts.len() - 1
        })
    };
    let mut out: Vec<[usize; 3]> = Vec::new();
    for tri in &tris {
        let s = tri.map(|v| signs[v]);
        let has_neg = s.contains(&-1);
        let has_pos = s.contains(&1);
        if !(has_neg && has_pos) {
            out.push(*tri);
            continue;
        }
        if let Some(z) = s.iter().position(|&x| x == 0) {
            let (a, c) = (tri[(z + 1) % 3], tri[(z + 2) % 3]);
            let p = cut_point(a, c, &mut verts, &mut signs);
            out.push([tri[z], a, p]);
            out.push([tri[z], p, c]);
        } else {
            let neg = s.iter().filter(|&&x| x < 0).count();
            let lone_sign = if neg == 1 { -1 } else { 1 };
            let l = s.iter().position(|&x| x == lone_sign).unwrap();
            let (a, c) = (tri[(l + 1) % 3], tri[(l + 2) % 3]);
            let p = cut_point(tri[l], a, &mut verts, &mut signs);
            let q = cut_point(tri[l], c, &mut verts, &mut signs);
            out.push([tri[l], p, q]);
            // Quadrilateral p, a, c, q: split along the shorter diagonal.
            if dist(&verts[p], &verts[c]) <= dist(&verts[a], &verts[q]) {
                out.push([p, a, c]);
                out.push([p, c, q]);
            } else {
                out.push([p, a, q]);
                out.push([a, c, q]);
            }
        }
    }

    let region_of = |t: &[usize; 3], signs: &[i8]| -> Result<u8> {
        if t.iter().any(|&v| signs[v] < 0) {
            Ok(1)
        } else if t.iter().any(|&v| signs[v] > 0) {
            Ok(2)
        } else {
            Err(Error::mesh(Assumption::M5, "element with all vertices on the interface"))
        }
    };
    let mut regions = out.iter().map(|t| region_of(t, &signs)).collect::<Result<Vec<u8>>>()?;

    flip_same_region_interface_edges(&verts, &mut out, &mut regions, &signs)?;

    let elements: Vec<Vec<usize>> = out.iter().map(|t| t.to_vec()).collect();
    let mesh = LinearMesh::new(2, verts, elements, regions)?;
    let report = validate_linear(&mesh, geom);
    if let Some(v) = report.violations.first() {
        return Err(Error::mesh(
            v.assumption,
            format!("generator could not resolve the interface at h_target={h_target}: {}", v.detail),
        ));
    }
    Ok(mesh)
}

/// An edge with both endpoints on the interface must be an interface facet.
/// Where both neighbours carry the same label, flip the edge.
fn flip_same_region_interface_edges(
    verts: &[Point],
    tris: &mut [[usize; 3]],
    regions: &mut [u8],
    signs: &[i8],
) -> Result<()> {
    for _sweep in 0..4 {
        let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in tris.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (tri[i], tri[(i + 1) % 3]);
                edges.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        let mut keys: Vec<_> = edges
            .iter()
            .filter(|((a, b), ts)| {
                signs[*a] == 0 && signs[*b] == 0 && ts.len() == 2 && regions[ts[0]] == regions[ts[1]]
            })
            .map(|(k, _)| *k)
            .collect();
        if keys.is_empty() {
            return Ok(());
        }
        keys.sort_unstable();
        let mut touched = vec![false; tris.len()];
        for (a, b) in keys {
            let ts = &edges[&(a, b)];
            let (t1, t2) = (ts[0], ts[1]);
            if touched[t1] || touched[t2] {
                continue;
            }
            let c = *tris[t1].iter().find(|&&v| v != a && v != b).unwrap();
            let d = *tris[t2].iter().find(|&&v| v != a && v != b).unwrap();
            let n1 = [c, d, a];
            let n2 = [d, c, b];
            let ar = |t: &[usize; 3]| tri_area(&[verts[t[0]], verts[t[1]], verts[t[2]]]).abs();
            let min_old = ar(&tris[t1]).min(ar(&tris[t2]));
            let signed = |t: &[usize; 3]| tri_area(&[verts[t[0]], verts[t[1]], verts[t[2]]]);
            // The quadrilateral must be convex: both new triangles share one orientation.
            let (s1, s2) = (signed(&n1), signed(&n2));
            if s1 * s2 <= 0.0 || s1.abs().min(s2.abs()) < 1e-3 * min_old {
                return Err(Error::mesh(
                    Assumption::M5,
                    format!("edge ({a}, {b}) lies on the interface but cannot be flipped"),
                ));
            }
            tris[t1] = n1;
            tris[t2] = n2;
            touched[t1] = true;
            touched[t2] = true;
        }
    }
    Err(Error::mesh(Assumption::M5, "edge flipping did not terminate"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::FacetKind;

    #[test]
    fn structured_meshes_partition_the_box() {
        let m = structured_box_mesh(2, 4, -1.0, 1.0, 2).unwrap();
        assert_eq!(m.n_elements(), 32);
        assert!((m.total_measure() - 4.0).abs() < 1e-13);
        let m3 = structured_box_mesh(3, 3, -1.0, 1.0, 2).unwrap();
        assert_eq!(m3.n_elements(), 6 * 27);
        assert!((m3.total_measure() - 8.0).abs() < 1e-12);
        assert_eq!(m3.facets_of_kind(FacetKind::Boundary).count(), 6 * 9 * 2);
    }

    #[test]
    fn fitted_mesh_properties() {
        let g = LevelSetGeometry::oscillating_ellipse(2, 0.25);
        for h in [0.4, 0.3, 0.25, 0.2, 0.15, 0.1, 0.07, 0.05] {
            let m = generate_fitted_mesh(&g, h).unwrap();
            assert!(m.h <= 2.0 * h, "h={h}: {}", m.h);
            assert!((m.total_measure() - 4.0).abs() < 1e-12);
            let mut n_iface = 0;
            for f in m.facets_of_kind(FacetKind::Interface) {
                n_iface += 1;
                for &v in &f.vertices {
                    assert!(g.phi(0.0, &m.vertices[v]).abs() <= 1e-12);
                }
            }
            assert!(n_iface > 0);
            for e in 0..m.n_elements() {
                let phi = g.phi(0.0, &m.centroid(e));
                let expected = if phi < 0.0 { 1 } else { 2 };
                assert_eq!(m.regions[e], expected, "h={h} element {e}");
            }
        }
    }

    #[test]
    fn three_dimensional_generation_is_rejected() {
        let g = LevelSetGeometry::oscillating_ellipse(3, 0.25);
        assert!(matches!(generate_fitted_mesh(&g, 0.3), Err(Error::Unsupported(_))));
    }
}
