use super::{diameter, CurvedMesh, FacetKind, LinearMesh};
use crate::error::Assumption;
use crate::geometry::LevelSetGeometry;
use crate::linalg::{cross, dist, norm, simplex_measure, sub, Point};
use std::fmt::Write;

/// Tolerance for vertices of interface facets on the initial interface.
pub const SNAP_TOL: f64 = 1e-12;
/// Tolerance for curved interface nodes on the interface at the mesh time.
pub const NODE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub assumption: Assumption,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshReport {
    pub dim: usize,
    pub order: usize,
    pub time: f64,
    pub n_vertices: usize,
    pub n_elements: usize,
    pub n_nodes: usize,
    pub n_interface_facets: usize,
    pub n_boundary_facets: usize,
    pub h: f64,
    pub det_min: f64,
    pub det_max: f64,
    /// Minimum over elements of inradius / diameter of the vertex simplex.
    pub shape_regularity: f64,
    pub violations: Vec<Violation>,
}

impl MeshReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn det_ratio(&self) -> f64 {
        self.det_min / self.det_max
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dimension {}", self.dim);
        let _ = writeln!(s, "order {}", self.order);
        let _ = writeln!(s, "time {}", self.time);
        let _ = writeln!(s, "vertices {}", self.n_vertices);
        let _ = writeln!(s, "elements {}", self.n_elements);
        let _ = writeln!(s, "nodes {}", self.n_nodes);
        let _ = writeln!(s, "interface_facets {}", self.n_interface_facets);
        let _ = writeln!(s, "boundary_facets {}", self.n_boundary_facets);
        let _ = writeln!(s, "h {:.6e}", self.h);
        let _ = writeln!(s, "det_min {:.6e}", self.det_min);
        let _ = writeln!(s, "det_max {:.6e}", self.det_max);
        let _ = writeln!(s, "det_ratio {:.6e}", self.det_ratio());
        let _ = writeln!(s, "shape_regularity {:.6e}", self.shape_regularity);
        let _ = writeln!(s, "violations {}", self.violations.len());
        for v in &self.violations {
            let _ = writeln!(s, "  {}: {}", v.assumption, v.detail);
        }
        s
    }
}

/// Inradius over diameter of a straight simplex.
pub fn simplex_quality(dim: usize, pts: &[Point]) -> f64 {
    let vol = simplex_measure(dim, pts).abs();
    let surface: f64 = (0..=dim)
        .map(|opp| {
            let f: Vec<Point> = (0..=dim).filter(|&i| i != opp).map(|i| pts[i]).collect();
            if dim == 2 {
                dist(&f[0], &f[1])
            } else {
                0.5 * norm(&cross(&sub(&f[1], &f[0]), &sub(&f[2], &f[0])))
            }
        })
        .sum();
    let inradius = dim as f64 * vol / surface;
    inradius / diameter(pts.iter())
}

fn push(v: &mut Vec<Violation>, a: Assumption, detail: String) {
    // Keep reports readable on badly broken meshes.
    if v.iter().filter(|x| x.assumption == a).count() < 20 {
        v.push(Violation { assumption: a, detail });
    }
}

fn linear_checks(mesh: &LinearMesh, geom: &LevelSetGeometry, out: &mut Vec<Violation>) {
    let phi = |p: &Point| geom.phi(0.0, p);
    for f in &mesh.facets {
        let on: Vec<bool> = f.vertices.iter().map(|&v| phi(&mesh.vertices[v]).abs() <= SNAP_TOL).collect();
        match f.kind {
            FacetKind::Interface => {
                for (&v, &ok) in f.vertices.iter().zip(&on) {
                    if !ok {
                        push(
                            out,
                            Assumption::M5,
                            format!("interface vertex {v} has |phi| = {:.3e}", phi(&mesh.vertices[v]).abs()),
                        );
                    }
                }
            }
            _ => {
                if on.iter().all(|&b| b) {
                    push(
                        out,
                        Assumption::M5,
                        format!("{} facet {:?} has all vertices on the interface", f.kind.as_str(), f.vertices),
                    );
                }
            }
        }
        if f.kind == FacetKind::Boundary {
            let b = geom.box_half_width;
            let planar = (0..mesh.dim).any(|i| {
                f.vertices.iter().all(|&v| (mesh.vertices[v][i].abs() - b).abs() <= 1e-12)
                    && f.vertices.iter().all(|&v| mesh.vertices[v][i].signum() == mesh.vertices[f.vertices[0]][i].signum())
            });
            if !planar {
                push(out, Assumption::M2, format!("boundary facet {:?} is not on the box boundary", f.vertices));
            }
        }
    }
    let total = mesh.total_measure();
    let box_measure = (2.0 * geom.box_half_width).powi(mesh.dim as i32);
    if (total - box_measure).abs() > 1e-10 * box_measure {
        push(out, Assumption::M2, format!("elements cover measure {total}, box has {box_measure}"));
    }
    // Region labels against the level set: sampled along element edges, the
    // sign of phi must agree with the label wherever it is not zero at a vertex.
    for e in 0..mesh.n_elements() {
        let want = if mesh.regions[e] == 1 { -1.0 } else { 1.0 };
        let c = mesh.centroid(e);
        if phi(&c) * want <= 0.0 {
            push(out, Assumption::M4, format!("element {e} centroid has the wrong phase for region {}", mesh.regions[e]));
            continue;
        }
        let el = &mesh.elements[e];
        for i in 0..=mesh.dim {
            for j in i + 1..=mesh.dim {
                let (a, b) = (mesh.vertices[el[i]], mesh.vertices[el[j]]);
                let on_a = phi(&a).abs() <= SNAP_TOL;
                let on_b = phi(&b).abs() <= SNAP_TOL;
                if on_a && on_b {
                    continue;
                }
                let bad = (1..8).any(|s| {
                    let w = s as f64 / 8.0;
                    let p = [0, 1, 2].map(|k| a[k] + w * (b[k] - a[k]));
                    phi(&p) * want < -SNAP_TOL
                });
                if bad {
                    push(out, Assumption::M4, format!("element {e} straddles the interface"));
                    break;
                }
            }
        }
    }
}

/// Checks the straight mesh against the level set at t = 0.
pub fn validate_linear(mesh: &LinearMesh, geom: &LevelSetGeometry) -> MeshReport {
    let mut violations = Vec::new();
    linear_checks(mesh, geom, &mut violations);
    let mut dmin = f64::INFINITY;
    let mut dmax: f64 = 0.0;
    let mut q = f64::INFINITY;
    for e in 0..mesh.n_elements() {
        let pts = mesh.element_vertices(e);
        let fact = if mesh.dim == 2 { 2.0 } else { 6.0 };
        let d = simplex_measure(mesh.dim, &pts) * fact;
        dmin = dmin.min(d);
        dmax = dmax.max(d);
        q = q.min(simplex_quality(mesh.dim, &pts));
    }
    MeshReport {
        dim: mesh.dim,
        order: 1,
        time: 0.0,
        n_vertices: mesh.vertices.len(),
        n_elements: mesh.n_elements(),
        n_nodes: mesh.vertices.len(),
        n_interface_facets: mesh.facets_of_kind(FacetKind::Interface).count(),
        n_boundary_facets: mesh.facets_of_kind(FacetKind::Boundary).count(),
        h: mesh.h,
        det_min: dmin,
        det_max: dmax,
        shape_regularity: q,
        violations,
    }
}

/// Full report for a curved mesh at its timestamp: the straight-mesh checks,
/// Jacobian determinants, node sharing across facets, and interface nodes on
/// the interface at the mesh time.
pub fn validate(mesh: &CurvedMesh, geom: &LevelSetGeometry) -> MeshReport {
    let lin = &mesh.topo.linear;
    let mut violations = Vec::new();
    linear_checks(lin, geom, &mut violations);
    let (det_min, det_max) = mesh.det_range().unwrap_or((f64::NAN, f64::NAN));
    if !(det_min > 0.0) {
        push(&mut violations, Assumption::M6, format!("inverted element: min det = {det_min:e}"));
    }
    for (i, p) in mesh.nodes.iter().enumerate() {
        if mesh.topo.interface_nodes[i] {
            let v = geom.phi(mesh.time, p).abs();
            if v > NODE_TOL {
                push(&mut violations, Assumption::M5, format!("interface node {i} has |phi| = {v:.3e}"));
            }
        }
    }
    let mut worst: f64 = 0.0;
    for f in lin.facets.iter() {
        if let [Some(a), Some(b)] = f.elements {
            for s in 0..5 {
                let w = (s as f64 + 0.5) / 5.0;
                let weights: Vec<(usize, f64)> = if lin.dim == 2 {
                    vec![(f.vertices[0], w), (f.vertices[1], 1.0 - w)]
                } else {
                    let u = 0.5 * (1.0 - w);
                    vec![(f.vertices[0], w), (f.vertices[1], u * 0.6), (f.vertices[2], 1.0 - w - u * 0.6)]
                };
                worst = worst.max(dist(&mesh.facet_point(a, &weights), &mesh.facet_point(b, &weights)));
            }
        }
    }
    if worst > 1e-10 {
        push(&mut violations, Assumption::M6, format!("facet maps disagree by {worst:.3e}"));
    }
    let mut q = f64::INFINITY;
    let mut h: f64 = 0.0;
    for e in 0..mesh.n_elements() {
        let pts = mesh.vertex_positions(e);
        q = q.min(simplex_quality(lin.dim, &pts));
        h = h.max(diameter(pts.iter()));
    }
    MeshReport {
        dim: lin.dim,
        order: mesh.order(),
        time: mesh.time,
        n_vertices: lin.vertices.len(),
        n_elements: lin.n_elements(),
        n_nodes: mesh.n_nodes(),
        n_interface_facets: lin.facets_of_kind(FacetKind::Interface).count(),
        n_boundary_facets: lin.facets_of_kind(FacetKind::Boundary).count(),
        h,
        det_min,
        det_max,
        shape_regularity: q,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_isoparametric, generate_fitted_mesh};

    #[test]
    fn generated_mesh_is_clean() {
        let g = LevelSetGeometry::oscillating_ellipse(2, 0.25);
        let m = generate_fitted_mesh(&g, 0.25).unwrap();
        let r = validate_linear(&m, &g);
        assert!(r.is_valid(), "{}", r.to_text());
        let c = build_isoparametric(m, &g, 2).unwrap();
        let r = validate(&c, &g);
        assert!(r.is_valid(), "{}", r.to_text());
        assert!(r.det_min > 0.0 && r.shape_regularity > 0.0);
    }

    #[test]
    fn perturbed_interface_vertex_is_reported() {
        let g = LevelSetGeometry::oscillating_ellipse(2, 0.25);
        let mut m = generate_fitted_mesh(&g, 0.25).unwrap();
        let v = m.on_interface.iter().position(|&b| b).unwrap();
        m.vertices[v][0] += 1e-3;
        let r = validate_linear(&m, &g);
        assert!(r.violations.iter().any(|x| x.assumption == Assumption::M5));
    }

    #[test]
    fn quality_of_reference_triangle() {
        let q = simplex_quality(2, &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let r = 1.0 / (2.0 + 2f64.sqrt());
        assert!((q - r / 2f64.sqrt()).abs() < 1e-15);
    }
}
