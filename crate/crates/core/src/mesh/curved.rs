use super::{FacetKind, LinearMesh};
use crate::error::{Error, Result};
use crate::geometry::LevelSetGeometry;
use crate::linalg::{add, det, inverse, mat_vec, mat_zero, norm, scale, sub, Mat, Point, ZERO};
use crate::ref_elem::{barycentric_coords, quadrature_for, ReferenceSimplex};
use std::collections::HashMap;
use std::sync::Arc;

/// Time-independent part of a curved mesh: topology, node numbering and
/// node classification. Shared by every timestamp of a trajectory.
#[derive(Debug)]
pub struct CurvedTopology {
    pub linear: LinearMesh,
    pub reference: ReferenceSimplex,
    /// Global geometric node ids, `N(k)` per element in reference node order.
    pub elem_nodes: Vec<usize>,
    pub n_nodes: usize,
    /// Node positions at t = 0.
    pub initial_nodes: Vec<Point>,
    pub boundary_nodes: Vec<bool>,
    pub interface_nodes: Vec<bool>,
    /// Per element, local vertex indices on the interface (empty unless two or more).
    pub interface_local: Vec<Vec<usize>>,
}

/// An order-k isoparametric mesh stamped at time `time`.
#[derive(Debug, Clone)]
pub struct CurvedMesh {
    pub topo: Arc<CurvedTopology>,
    pub nodes: Vec<Point>,
    pub time: f64,
}

impl CurvedMesh {
    pub fn dim(&self) -> usize {
        self.topo.linear.dim
    }

    pub fn order(&self) -> usize {
        self.topo.reference.order()
    }

    pub fn n_elements(&self) -> usize {
        self.topo.linear.n_elements()
    }

    pub fn n_nodes(&self) -> usize {
        self.topo.n_nodes
    }

    pub fn n_local(&self) -> usize {
        self.topo.reference.n_nodes()
    }

    pub fn region(&self, e: usize) -> u8 {
        self.topo.linear.regions[e]
    }

    pub fn element_node_ids(&self, e: usize) -> &[usize] {
        let n = self.n_local();
        &self.topo.elem_nodes[e * n..(e + 1) * n]
    }

    pub fn element_nodes(&self, e: usize) -> Vec<Point> {
        self.element_node_ids(e).iter().map(|&i| self.nodes[i]).collect()
    }

    pub fn is_interface_element(&self, e: usize) -> bool {
        !self.topo.interface_local[e].is_empty()
    }

    /// Same topology with new node positions.
    pub fn with_nodes(&self, nodes: Vec<Point>, time: f64) -> Self {
        assert_eq!(nodes.len(), self.n_nodes());
        Self { topo: self.topo.clone(), nodes, time }
    }

    /// The reference map `F_K`.
    pub fn map(&self, e: usize, xhat: &Point) -> Point {
        let r = &self.topo.reference;
        let mut phi = vec![0.0; r.n_nodes()];
        r.basis_unchecked(xhat, &mut phi);
        let mut x = ZERO;
        for (&id, &p) in self.element_node_ids(e).iter().zip(&phi) {
            x = crate::linalg::axpy(&x, p, &self.nodes[id]);
        }
        x
    }

    /// `J[i][j] = d x_i / d xhat_j`.
    pub fn jacobian(&self, e: usize, xhat: &Point) -> Mat {
        let r = &self.topo.reference;
        let mut g = vec![ZERO; r.n_nodes()];
        r.basis_grad_unchecked(xhat, &mut g);
        jacobian_from(self.dim(), self.element_node_ids(e).iter().map(|&i| &self.nodes[i]), &g)
    }

    /// Inverts `F_K` by Newton's method from the affine guess.
    pub fn inverse_map(&self, e: usize, x: &Point) -> Result<Point> {
        let dim = self.dim();
        let r = &self.topo.reference;
        let verts: Vec<Point> = self.element_node_ids(e)[..=dim].iter().map(|&i| self.nodes[i]).collect();
        let mu = barycentric_coords(dim, &verts, x)?;
        let mut xh = ZERO;
        for i in 0..=dim {
            xh = crate::linalg::axpy(&xh, mu[i], &r.vertices()[i]);
        }
        for _ in 0..30 {
            let res = sub(&self.map(e, &xh), x);
            let j = self.jacobian(e, &xh);
            let inv = inverse(dim, &j).ok_or(Error::MapInversion { element: e, point: *x })?;
            let dx = mat_vec(&inv, &res);
            xh = sub(&xh, &dx);
            if norm(&dx) <= 1e-12 {
                return Ok(xh);
            }
        }
        Err(Error::MapInversion { element: e, point: *x })
    }

    /// Point on the facet spanned by the given global vertices with the given
    /// barycentric weights, evaluated through element `e`'s reference map.
    pub fn facet_point(&self, e: usize, weights: &[(usize, f64)]) -> Point {
        let lin = &self.topo.linear;
        let mut xh = ZERO;
        for &(v, w) in weights {
            let local = lin.elements[e].iter().position(|&u| u == v).expect("vertex not in element");
            xh = crate::linalg::axpy(&xh, w, &self.topo.reference.vertices()[local]);
        }
        self.map(e, &xh)
    }

    /// Reference-to-facet parametrisation: point of the facet opposite local
    /// vertex `opp` with facet barycentric weights `b` (`d` entries).
    pub fn facet_reference_point(&self, opp: usize, b: &[f64]) -> Point {
        let dim = self.dim();
        let mut xh = ZERO;
        for (i, v) in (0..=dim).filter(|&v| v != opp).enumerate() {
            xh = crate::linalg::axpy(&xh, b[i], &self.topo.reference.vertices()[v]);
        }
        xh
    }

    /// Interface facets as `(element in region 1, local opposite vertex)`.
    pub fn interface_facets(&self) -> Vec<(usize, usize)> {
        self.facets_of_kind(FacetKind::Interface)
    }

    pub fn facets_of_kind(&self, kind: FacetKind) -> Vec<(usize, usize)> {
        let lin = &self.topo.linear;
        lin.facets
            .iter()
            .filter(|f| f.kind == kind)
            .map(|f| {
                let side = match f.elements {
                    [Some(a), Some(b)] if lin.regions[a] != 1 && lin.regions[b] == 1 => 1,
                    _ => 0,
                };
                (f.elements[side].unwrap(), f.opposite[side])
            })
            .collect()
    }

    /// Minimum and maximum of `det grad F_K` over quadrature points of degree `2k`.
    pub fn det_range(&self) -> Result<(f64, f64)> {
        let q = quadrature_for(self.dim(), 2 * self.order())?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for e in 0..self.n_elements() {
            for p in &q.points {
                let d = det(self.dim(), &self.jacobian(e, p));
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        Ok((lo, hi))
    }

    /// Fails with the first element whose Jacobian determinant is not positive.
    pub fn check_orientation(&self) -> Result<()> {
        let q = quadrature_for(self.dim(), 2 * self.order())?;
        for e in 0..self.n_elements() {
            for p in q.points.iter().chain(self.topo.reference.vertices()) {
                let d = det(self.dim(), &self.jacobian(e, p));
                if !(d > 0.0) {
                    return Err(Error::InvertedElement { element: e, det: d, t: self.time });
                }
            }
        }
        Ok(())
    }

    /// `sum_K int_K |det grad F_K|`.
    pub fn total_measure(&self) -> Result<f64> {
        let q = quadrature_for(self.dim(), 2 * self.order())?;
        let mut s = 0.0;
        for e in 0..self.n_elements() {
            s += q.integrate(|p| det(self.dim(), &self.jacobian(e, p)).abs());
        }
        Ok(s)
    }

    /// Vertex positions of element `e` at the current time.
    pub fn vertex_positions(&self, e: usize) -> Vec<Point> {
        self.element_node_ids(e)[..=self.dim()].iter().map(|&i| self.nodes[i]).collect()
    }
}

pub(crate) fn jacobian_from<'a>(dim: usize, nodes: impl Iterator<Item = &'a Point>, grads: &[Point]) -> Mat {
    let mut j = mat_zero();
    for (x, g) in nodes.zip(grads) {
        for a in 0..dim {
            for b in 0..dim {
                j[a][b] += x[a] * g[b];
            }
        }
    }
    if dim == 2 {
        j[2][2] = 1.0;
    }
    j
}

/// Blend `x + mu^(k+2) (Pi(y) - y)` given the point, the barycentric weights
/// of its interface vertices, and a way to evaluate the anchor.
fn blend(
    x: &Point,
    mu_tilde: f64,
    y: Point,
    k: usize,
    geom: &LevelSetGeometry,
    t: f64,
) -> Result<Point> {
    let p = geom.project(t, &y)?;
    Ok(add(x, &scale(mu_tilde.powi(k as i32 + 2), &sub(&p, &y))))
}

fn deform_barycentric(
    mesh: &LinearMesh,
    geom: &LevelSetGeometry,
    e: usize,
    mu: &[f64; 4],
    k: usize,
) -> Result<Point> {
    let el = &mesh.elements[e];
    let mut x = ZERO;
    for i in 0..=mesh.dim {
        x = crate::linalg::axpy(&x, mu[i], &mesh.vertices[el[i]]);
    }
    let gamma = mesh.interface_vertices(e);
    // Vertices are fixed points; return them exactly.
    if gamma.len() < 2 || mu.contains(&1.0) {
        return Ok(x);
    }
    let mt: f64 = gamma.iter().map(|&j| mu[j]).sum();
    if mt <= 0.0 {
        return Ok(x);
    }
    let mut y = ZERO;
    for &j in &gamma {
        y = crate::linalg::axpy(&y, mu[j] / mt, &mesh.vertices[el[j]]);
    }
    blend(&x, mt, y, k, geom, 0.0)
}

/// The interface deformation of order `k` applied to a point of element `e`.
pub fn interface_deformation(
    mesh: &LinearMesh,
    geom: &LevelSetGeometry,
    e: usize,
    x: &Point,
    k: usize,
) -> Result<Point> {
    if !mesh.is_interface_element(e) {
        return Ok(*x);
    }
    let mu = barycentric_coords(mesh.dim, &mesh.element_vertices(e), x)?;
    deform_barycentric(mesh, geom, e, &mu, k)
}

/// Builds the order-`k` isoparametric mesh: Lagrange lattice nodes of each
/// straight element are pushed through the interface deformation, shared
/// nodes are merged, and nodes are numbered lexicographically by position.
pub fn build_isoparametric(mesh: LinearMesh, geom: &LevelSetGeometry, k: usize) -> Result<CurvedMesh> {
    let dim = mesh.dim;
    let reference = ReferenceSimplex::new(dim, k)?;
    let nl = reference.n_nodes();
    let mut keys: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
    let mut provisional: Vec<Point> = Vec::new();
    let mut elem_nodes = Vec::with_capacity(mesh.n_elements() * nl);
    for e in 0..mesh.n_elements() {
        let el = &mesh.elements[e];
        for n in 0..nl {
            let a = reference.multi_index(n);
            let mut key: Vec<(usize, usize)> =
                (0..=dim).filter(|&i| a[i] > 0).map(|i| (el[i], a[i])).collect();
            key.sort_unstable();
            let id = match keys.get(&key) {
                Some(&id) => id,
                None => {
                    let mut mu = [0.0; 4];
                    for i in 0..=dim {
                        mu[i] = a[i] as f64 / k as f64;
                    }
                    let p = deform_barycentric(&mesh, geom, e, &mu, k)?;
                    keys.insert(key, provisional.len());
                    provisional.push(p);
                    provisional.len() - 1
                }
            };
            elem_nodes.push(id);
        }
    }
    from_parts(mesh, reference, provisional, elem_nodes)
}

/// Assembles a curved mesh from explicit node positions and element-node
/// connectivity, renumbering nodes lexicographically by position.
pub(crate) fn from_parts(
    mesh: LinearMesh,
    reference: ReferenceSimplex,
    provisional: Vec<Point>,
    mut elem_nodes: Vec<usize>,
) -> Result<CurvedMesh> {
    let nl = reference.n_nodes();
    let mut order: Vec<usize> = (0..provisional.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (&provisional[a], &provisional[b]);
        p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])).then(p[2].total_cmp(&q[2]))
    });
    let mut new_id = vec![0; order.len()];
    for (i, &o) in order.iter().enumerate() {
        new_id[o] = i;
    }
    let nodes: Vec<Point> = order.iter().map(|&o| provisional[o]).collect();
    for id in elem_nodes.iter_mut() {
        *id = new_id[*id];
    }

    let n_nodes = nodes.len();
    let mut boundary_nodes = vec![false; n_nodes];
    let mut interface_nodes = vec![false; n_nodes];
    for f in &mesh.facets {
        let target = match f.kind {
            FacetKind::Boundary => &mut boundary_nodes,
            FacetKind::Interface => &mut interface_nodes,
            FacetKind::Interior => continue,
        };
        let e = f.elements[0].unwrap();
        for n in reference.facet_nodes(f.opposite[0]) {
            target[elem_nodes[e * nl + n]] = true;
        }
    }
    let interface_local = (0..mesh.n_elements())
        .map(|e| {
            let g = mesh.interface_vertices(e);
            if g.len() >= 2 {
                g
            } else {
                Vec::new()
            }
        })
        .collect();
    let topo = CurvedTopology {
        linear: mesh,
        reference,
        elem_nodes,
        n_nodes,
        initial_nodes: nodes.clone(),
        boundary_nodes,
        interface_nodes,
        interface_local,
    };
    let curved = CurvedMesh { topo: Arc::new(topo), nodes, time: 0.0 };
    curved.check_orientation()?;
    Ok(curved)
}

/// The lift of a reference point of element `e` onto the exact domain at the
/// mesh's timestamp.
pub fn lift_reference(mesh: &CurvedMesh, geom: &LevelSetGeometry, e: usize, xhat: &Point) -> Result<Point> {
    let x = mesh.map(e, xhat);
    let gamma = &mesh.topo.interface_local[e];
    if gamma.is_empty() {
        return Ok(x);
    }
    let r = &mesh.topo.reference;
    let lam = r.barycentric(xhat);
    let mt: f64 = gamma.iter().map(|&j| lam[j]).sum();
    if mt <= 0.0 {
        return Ok(x);
    }
    let mut yh = ZERO;
    for &j in gamma {
        yh = crate::linalg::axpy(&yh, lam[j] / mt, &r.vertices()[j]);
    }
    let y = mesh.map(e, &yh);
    blend(&x, mt, y, mesh.order(), geom, mesh.time)
}

/// The lift of a physical point of element `e`.
pub fn lift_point(mesh: &CurvedMesh, geom: &LevelSetGeometry, e: usize, x: &Point) -> Result<Point> {
    if !mesh.is_interface_element(e) {
        return Ok(*x);
    }
    let xh = mesh.inverse_map(e, x)?;
    lift_reference(mesh, geom, e, &xh)
}
