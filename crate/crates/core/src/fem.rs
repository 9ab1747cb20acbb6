//! Finite element spaces on curved meshes and assembly of the discrete
//! bilinear forms and load vectors.
//!
//! The space is isoparametric: its dofs are the geometric nodes, numbered
//! once at t = 0. Every timestamp of a trajectory shares that numbering, so a
//! coefficient vector means the same thing on every mesh.

use crate::error::{Error, Result};
use crate::geometry::LevelSetGeometry;
use crate::linalg::{axpy, det, dot, inverse, mat_zero, norm, sub, Mat, Point, ZERO};
use crate::mesh::{lift_reference, CurvedMesh, CurvedTopology, FacetKind};
use crate::ref_elem::{quadrature_for, ReferenceSimplex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Sparsity pattern in compressed-row form with sorted, unique columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl Pattern {
    fn from_rows(n_cols: usize, rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows.iter().cloned() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        Self { n_rows: rows.len(), n_cols, row_ptr, col_idx }
    }

    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].binary_search(&j).ok().map(|p| a + p)
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }
}

/// CSR matrix. Matrices assembled on one space share its pattern, which makes
/// linear combinations cheap.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub pattern: Arc<Pattern>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); n_rows];
        for &(i, j, _) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::Dimension(format!("entry ({i}, {j}) outside {n_rows}x{n_cols}")));
            }
            rows[i].push(j);
        }
        let mut m = Self::zeros(Arc::new(Pattern::from_rows(n_cols, rows)));
        for &(i, j, v) in triplets {
            let p = m.pattern.find(i, j).expect("entry in pattern");
            m.values[p] += v;
        }
        Ok(m)
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n = a.len();
        let m = a.first().map_or(0, |r| r.len());
        let t: Vec<_> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).filter(|&(i, j)| a[i][j] != 0.0).map(|(i, j)| (i, j, a[i][j])).collect();
        Self::from_triplets(n, m, &t).expect("indices in range")
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t).expect("indices in range")
    }

    pub fn n_rows(&self) -> usize {
        self.pattern.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.pattern.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.pattern.row_ptr[i], self.pattern.row_ptr[i + 1]);
        (&self.pattern.col_idx[a..b], &self.values[a..b])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols());
        (0..self.n_rows())
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, a)| a * x[j]).sum()
            })
            .collect()
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(self.matvec(y)).map(|(a, b)| a * b).sum()
    }

    /// `a A + b B` for matrices on the same pattern.
    pub fn lincomb(a: f64, ma: &SparseMatrix, b: f64, mb: &SparseMatrix) -> Result<SparseMatrix> {
        if !Arc::ptr_eq(&ma.pattern, &mb.pattern) && ma.pattern != mb.pattern {
            return Err(Error::Dimension("matrices have different sparsity patterns".into()));
        }
        let values = ma.values.iter().zip(&mb.values).map(|(x, y)| a * x + b * y).collect();
        Ok(SparseMatrix { pattern: ma.pattern.clone(), values })
    }

    pub fn scaled(&self, s: f64) -> SparseMatrix {
        SparseMatrix { pattern: self.pattern.clone(), values: self.values.iter().map(|v| s * v).collect() }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows() {
            let (c, v) = self.row(i);
            t.extend(c.iter().zip(v).map(|(&j, &a)| (j, i, a)));
        }
        Self::from_triplets(self.n_cols(), self.n_rows(), &t).expect("indices in range")
    }

    /// `max |A_ij - A_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_rows() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols()]; self.n_rows()];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j] = a;
            }
        }
        d
    }
}

/// Continuous order-k Lagrange space on a curved mesh topology.
#[derive(Debug, Clone)]
pub struct FESpace {
    pub topo: Arc<CurvedTopology>,
    pub order: usize,
    pub n_dofs: usize,
    /// True for dofs on the box boundary.
    pub dirichlet: Vec<bool>,
    pub pattern: Arc<Pattern>,
    /// Per element, `n_local^2` positions into the CSR value array.
    scatter: Vec<usize>,
}

pub fn build_space(mesh: &CurvedMesh, k: usize) -> Result<FESpace> {
    if k != mesh.order() {
        return Err(Error::Unsupported(format!("space of order {k} on a mesh of order {}", mesh.order())));
    }
    let topo = mesh.topo.clone();
    let n = topo.n_nodes;
    let nl = topo.reference.n_nodes();
    let ne = topo.linear.n_elements();
    let mut rows = vec![Vec::new(); n];
    for e in 0..ne {
        let ids = &topo.elem_nodes[e * nl..(e + 1) * nl];
        for &i in ids {
            rows[i].extend_from_slice(ids);
        }
    }
    let pattern = Arc::new(Pattern::from_rows(n, rows));
    let mut scatter = Vec::with_capacity(ne * nl * nl);
    for e in 0..ne {
        let ids = &topo.elem_nodes[e * nl..(e + 1) * nl];
        for &i in ids {
            for &j in ids {
                scatter.push(pattern.find(i, j).expect("element pair in pattern"));
            }
        }
    }
    Ok(FESpace { dirichlet: topo.boundary_nodes.clone(), n_dofs: n, order: k, topo, pattern, scatter })
}

impl FESpace {
    pub fn dim(&self) -> usize {
        self.topo.linear.dim
    }

    pub fn n_local(&self) -> usize {
        self.topo.reference.n_nodes()
    }

    pub fn dofs(&self, e: usize) -> &[usize] {
        let n = self.n_local();
        &self.topo.elem_nodes[e * n..(e + 1) * n]
    }

    pub fn n_interface_dofs(&self) -> usize {
        self.topo.interface_nodes.iter().filter(|&&b| b).count()
    }

    fn check_mesh(&self, mesh: &CurvedMesh) -> Result<()> {
        if Arc::ptr_eq(&self.topo, &mesh.topo) {
            Ok(())
        } else {
            Err(Error::Dimension("mesh does not belong to this space".into()))
        }
    }

    fn matrix_from_locals(&self, locals: Vec<Vec<f64>>) -> SparseMatrix {
        let mut m = SparseMatrix::zeros(self.pattern.clone());
        let nl2 = self.n_local() * self.n_local();
        for (e, loc) in locals.iter().enumerate() {
            for (p, v) in self.scatter[e * nl2..(e + 1) * nl2].iter().zip(loc) {
                m.values[*p] += v;
            }
        }
        m
    }

    fn vector_from_locals(&self, locals: Vec<Vec<f64>>) -> Vec<f64> {
        let mut b = vec![0.0; self.n_dofs];
        for (e, loc) in locals.iter().enumerate() {
            for (&i, v) in self.dofs(e).iter().zip(loc) {
                b[i] += v;
            }
        }
        b
    }
}

/// The nodal interpolant `I^h g` on the mesh's current node positions.
pub fn interpolate(mesh: &CurvedMesh, g: impl Fn(&Point) -> f64) -> Vec<f64> {
    mesh.nodes.iter().map(g).collect()
}

/// Basis values and reference gradients tabulated at quadrature points.
#[derive(Debug, Clone)]
pub struct RefTables {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub dphi: Vec<Vec<Point>>,
}

impl RefTables {
    pub fn new(reference: &ReferenceSimplex, degree: usize) -> Result<Self> {
        let q = quadrature_for(reference.dim(), degree)?;
        Ok(Self::at(reference, q.points, q.weights))
    }

    /// Tables at arbitrary reference points, each with unit weight.
    pub fn at_points(reference: &ReferenceSimplex, points: Vec<Point>) -> Self {
        let w = vec![1.0; points.len()];
        Self::at(reference, points, w)
    }

    fn at(reference: &ReferenceSimplex, points: Vec<Point>, weights: Vec<f64>) -> Self {
        let n = reference.n_nodes();
        let mut phi = Vec::with_capacity(points.len());
        let mut dphi = Vec::with_capacity(points.len());
        for p in &points {
            let mut v = vec![0.0; n];
            let mut g = vec![ZERO; n];
            reference.basis_unchecked(p, &mut v);
            reference.basis_grad_unchecked(p, &mut g);
            phi.push(v);
            dphi.push(g);
        }
        Self { points, weights, phi, dphi }
    }
}

/// Geometry of one element at one quadrature point.
pub struct QpData<'a> {
    pub xhat: Point,
    pub x: Point,
    /// Quadrature weight times `|det grad F_K|`.
    pub dx: f64,
    pub phi: &'a [f64],
    /// Physical basis gradients.
    pub grads: &'a [Point],
}

/// Runs `f` at every quadrature point of element `e`.
pub fn for_each_qp(
    mesh: &CurvedMesh,
    e: usize,
    tables: &RefTables,
    mut f: impl FnMut(&QpData) -> Result<()>,
) -> Result<()> {
    let dim = mesh.dim();
    let ids = mesh.element_node_ids(e);
    let mut grads = vec![ZERO; ids.len()];
    for (q, xhat) in tables.points.iter().enumerate() {
        let dphi = &tables.dphi[q];
        let mut jac = mat_zero();
        let mut x = ZERO;
        for (n, &id) in ids.iter().enumerate() {
            let p = &mesh.nodes[id];
            x = axpy(&x, tables.phi[q][n], p);
            for a in 0..dim {
                for b in 0..dim {
                    jac[a][b] += p[a] * dphi[n][b];
                }
            }
        }
        if dim == 2 {
            jac[2][2] = 1.0;
        }
        let d = det(dim, &jac);
        if !(d > 0.0) {
            return Err(Error::InvertedElement { element: e, det: d, t: mesh.time });
        }
        let inv = inverse(dim, &jac).ok_or(Error::InvertedElement { element: e, det: d, t: mesh.time })?;
        for (g, dh) in grads.iter_mut().zip(dphi) {
            // grad = J^{-T} grad_hat
            let mut v = ZERO;
            for a in 0..dim {
                for b in 0..dim {
                    v[a] += inv[b][a] * dh[b];
                }
            }
            *g = v;
        }
        f(&QpData { xhat: *xhat, x, dx: tables.weights[q] * d, phi: &tables.phi[q], grads: &grads })?;
    }
    Ok(())
}

/// Problem coefficients. `region` is 1 inside the interface and 2 outside.
pub trait Coefficients: Send + Sync {
    fn diffusion(&self, region: u8, t: f64, x: &Point) -> f64;

    fn advection(&self, _region: u8, _t: f64, _x: &Point) -> Point {
        ZERO
    }

    fn reaction(&self, _region: u8, _t: f64, _x: &Point) -> f64 {
        0.0
    }

    fn source(&self, _region: u8, _t: f64, _x: &Point) -> f64 {
        0.0
    }

    /// Interface flux jump `G`, evaluated on the interface.
    fn interface_flux(&self, _t: f64, _x: &Point) -> f64 {
        0.0
    }
}

/// Piecewise constant coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantCoefficients {
    /// Diffusion in regions 1 and 2.
    pub a: [f64; 2],
    pub b: Point,
    pub c: f64,
    pub f: f64,
    pub g: f64,
}

impl Default for ConstantCoefficients {
    fn default() -> Self {
        Self { a: [1.0, 1.0], b: ZERO, c: 0.0, f: 0.0, g: 0.0 }
    }
}

impl Coefficients for ConstantCoefficients {
    fn diffusion(&self, region: u8, _t: f64, _x: &Point) -> f64 {
        self.a[if region == 1 { 0 } else { 1 }]
    }
    fn advection(&self, _r: u8, _t: f64, _x: &Point) -> Point {
        self.b
    }
    fn reaction(&self, _r: u8, _t: f64, _x: &Point) -> f64 {
        self.c
    }
    fn source(&self, _r: u8, _t: f64, _x: &Point) -> f64 {
        self.f
    }
    fn interface_flux(&self, _t: f64, _x: &Point) -> f64 {
        self.g
    }
}

/// Where bulk coefficients are evaluated: at the discrete point, or at its
/// lift onto the exact domain.
#[derive(Clone, Copy)]
pub enum Evaluation<'a> {
    Discrete,
    Lifted(&'a LevelSetGeometry),
}

impl Evaluation<'_> {
    fn point(&self, mesh: &CurvedMesh, e: usize, q: &QpData) -> Result<Point> {
        match self {
            Evaluation::Discrete => Ok(q.x),
            Evaluation::Lifted(g) if mesh.is_interface_element(e) => lift_reference(mesh, g, e, &q.xhat),
            Evaluation::Lifted(_) => Ok(q.x),
        }
    }
}

/// How the load vector treats the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataMode {
    /// Nodal interpolants of `f` and `G`, no lift Jacobians.
    #[default]
    Interpolated,
    /// Exact data at lifted points, weighted by the lift Jacobians.
    Lifted,
}

impl DataMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DataMode::Interpolated => "interpolated",
            DataMode::Lifted => "lifted",
        }
    }
}

/// Assembly settings. The quadrature degree defaults to `2k + 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    pub quad_degree: usize,
}

impl AssemblyOptions {
    pub fn for_order(k: usize) -> Self {
        Self { quad_degree: 2 * k + 2 }
    }
}

fn tables(space: &FESpace, opts: Option<AssemblyOptions>) -> Result<RefTables> {
    let o = opts.unwrap_or(AssemblyOptions::for_order(space.order));
    RefTables::new(&space.topo.reference, o.quad_degree)
}

fn assemble_matrix<F>(space: &FESpace, mesh: &CurvedMesh, opts: Option<AssemblyOptions>, local: F) -> Result<SparseMatrix>
where
    F: Fn(usize, &QpData, &mut [f64]) -> Result<()> + Sync,
{
    space.check_mesh(mesh)?;
    let t = tables(space, opts)?;
    let nl = space.n_local();
    let locals = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let mut m = vec![0.0; nl * nl];
            for_each_qp(mesh, e, &t, |q| local(e, q, &mut m))?;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(space.matrix_from_locals(locals))
}

/// The mass matrix `m^h` on the mesh's timestamp.
pub fn assemble_mass(space: &FESpace, mesh: &CurvedMesh) -> Result<SparseMatrix> {
    assemble_mass_with(space, mesh, None)
}

pub fn assemble_mass_with(space: &FESpace, mesh: &CurvedMesh, opts: Option<AssemblyOptions>) -> Result<SparseMatrix> {
    let nl = space.n_local();
    assemble_matrix(space, mesh, opts, |_, q, m| {
        for i in 0..nl {
            let a = q.dx * q.phi[i];
            for j in 0..nl {
                m[i * nl + j] += a * q.phi[j];
            }
        }
        Ok(())
    })
}

/// Value and divergence of the FE vector field with nodal values `w` at a point.
fn field_at(space: &FESpace, e: usize, w: &[Point], q: &QpData) -> (Point, f64) {
    let dim = space.dim();
    let mut v = ZERO;
    let mut div = 0.0;
    for (n, &id) in space.dofs(e).iter().enumerate() {
        v = axpy(&v, q.phi[n], &w[id]);
        for a in 0..dim {
            div += w[id][a] * q.grads[n][a];
        }
    }
    (v, div)
}

/// The operator `a^h`: diffusion, advection relative to the mesh velocity `w`
/// and reaction corrected by `div w`. Rows are test functions.
pub fn assemble_operator(
    space: &FESpace,
    mesh: &CurvedMesh,
    coeffs: &dyn Coefficients,
    velocity: Option<&[Point]>,
    eval: Evaluation,
) -> Result<SparseMatrix> {
    assemble_operator_with(space, mesh, coeffs, velocity, eval, None)
}

pub fn assemble_operator_with(
    space: &FESpace,
    mesh: &CurvedMesh,
    coeffs: &dyn Coefficients,
    velocity: Option<&[Point]>,
    eval: Evaluation,
    opts: Option<AssemblyOptions>,
) -> Result<SparseMatrix> {
    if let Some(w) = velocity {
        if w.len() != space.n_dofs {
            return Err(Error::Dimension(format!("velocity has {} entries, space has {} dofs", w.len(), space.n_dofs)));
        }
    }
    let nl = space.n_local();
    let t = mesh.time;
    assemble_matrix(space, mesh, opts, |e, q, m| {
        let r = mesh.region(e);
        let y = eval.point(mesh, e, q)?;
        let a = coeffs.diffusion(r, t, &y);
        let (w, div) = velocity.map_or((ZERO, 0.0), |w| field_at(space, e, w, q));
        let b = sub(&coeffs.advection(r, t, &y), &w);
        let c = coeffs.reaction(r, t, &y) - div;
        for i in 0..nl {
            for j in 0..nl {
                let v = a * dot(&q.grads[j], &q.grads[i]) + dot(&b, &q.grads[j]) * q.phi[i] + c * q.phi[j] * q.phi[i];
                m[i * nl + j] += q.dx * v;
            }
        }
        Ok(())
    })
}

/// `lambda^h`: the mass matrix weighted by `div w`.
pub fn assemble_lambda(space: &FESpace, mesh: &CurvedMesh, velocity: &[Point]) -> Result<SparseMatrix> {
    if velocity.len() != space.n_dofs {
        return Err(Error::Dimension("velocity length differs from the dof count".into()));
    }
    let nl = space.n_local();
    assemble_matrix(space, mesh, None, |e, q, m| {
        let (_, div) = field_at(space, e, velocity, q);
        for i in 0..nl {
            for j in 0..nl {
                m[i * nl + j] += q.dx * div * q.phi[i] * q.phi[j];
            }
        }
        Ok(())
    })
}

/// Reference facet geometry for the facet opposite local vertex `opp`:
/// the origin vertex and the edge vectors spanning it.
fn facet_frame(reference: &ReferenceSimplex, opp: usize) -> (Point, Vec<Point>) {
    let dim = reference.dim();
    let v: Vec<Point> = (0..=dim).filter(|&i| i != opp).map(|i| reference.vertices()[i]).collect();
    let edges = v[1..].iter().map(|p| sub(p, &v[0])).collect();
    (v[0], edges)
}

/// Gram determinant `sqrt(det(T^T T))` of the tangent vectors.
fn gram(t: &[Point]) -> f64 {
    match t.len() {
        1 => norm(&t[0]),
        2 => norm(&crate::linalg::cross(&t[0], &t[1])),
        _ => unreachable!("facets have dimension 1 or 2"),
    }
}

/// Derivatives of a map of the reference element by central differences.
fn fd_jacobian(dim: usize, xhat: &Point, f: impl Fn(&Point) -> Result<Point>) -> Result<Mat> {
    const STEP: f64 = 1e-6;
    let mut j = mat_zero();
    for b in 0..dim {
        let mut p = *xhat;
        let mut m = *xhat;
        p[b] += STEP;
        m[b] -= STEP;
        let d = sub(&f(&p)?, &f(&m)?);
        for a in 0..dim {
            j[a][b] = d[a] / (2.0 * STEP);
        }
    }
    if dim == 2 {
        j[2][2] = 1.0;
    }
    Ok(j)
}

/// The load vector `l^h` from the bulk source and the interface flux jump.
pub fn assemble_load(
    space: &FESpace,
    mesh: &CurvedMesh,
    coeffs: &dyn Coefficients,
    geom: Option<&LevelSetGeometry>,
    mode: DataMode,
) -> Result<Vec<f64>> {
    assemble_load_with(space, mesh, coeffs, geom, mode, None)
}

pub fn assemble_load_with(
    space: &FESpace,
    mesh: &CurvedMesh,
    coeffs: &dyn Coefficients,
    geom: Option<&LevelSetGeometry>,
    mode: DataMode,
    opts: Option<AssemblyOptions>,
) -> Result<Vec<f64>> {
    space.check_mesh(mesh)?;
    let geom = match (mode, geom) {
        (DataMode::Lifted, None) => return Err(Error::Config("lifted data mode needs the level-set geometry".into())),
        (_, g) => g,
    };
    let dim = space.dim();
    let t = mesh.time;
    let tab = tables(space, opts)?;
    let nl = space.n_local();
    let reference = &space.topo.reference;

    let bulk = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let r = mesh.region(e);
            let mut b = vec![0.0; nl];
            match mode {
                DataMode::Interpolated => {
                    let fv: Vec<f64> = space.dofs(e).iter().map(|&i| coeffs.source(r, t, &mesh.nodes[i])).collect();
                    for_each_qp(mesh, e, &tab, |q| {
                        let fh: f64 = fv.iter().zip(q.phi).map(|(a, b)| a * b).sum();
                        for i in 0..nl {
                            b[i] += q.dx * fh * q.phi[i];
                        }
                        Ok(())
                    })?;
                }
                DataMode::Lifted => {
                    let g = geom.expect("checked above");
                    let curved = mesh.is_interface_element(e);
                    for_each_qp(mesh, e, &tab, |q| {
                        let (y, dx) = if curved {
                            let jl = fd_jacobian(dim, &q.xhat, |p| lift_reference(mesh, g, e, p))?;
                            let w = q.dx / det(dim, &mesh.jacobian(e, &q.xhat));
                            (lift_reference(mesh, g, e, &q.xhat)?, w * det(dim, &jl).abs())
                        } else {
                            (q.x, q.dx)
                        };
                        let fv = coeffs.source(r, t, &y);
                        for i in 0..nl {
                            b[i] += dx * fv * q.phi[i];
                        }
                        Ok(())
                    })?;
                }
            }
            Ok(b)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut load = space.vector_from_locals(bulk);

    let facets = mesh.facets_of_kind(FacetKind::Interface);
    if facets.is_empty() {
        return Ok(load);
    }
    let o = opts.unwrap_or(AssemblyOptions::for_order(space.order));
    let fq = quadrature_for(dim - 1, o.quad_degree)?;
    let surface = facets
        .par_iter()
        .map(|&(e, opp)| {
            let (origin, edges) = facet_frame(reference, opp);
            let on_facet = reference.facet_nodes(opp);
            let gv: Vec<f64> = match mode {
                DataMode::Interpolated => on_facet.iter().map(|&n| coeffs.interface_flux(t, &mesh.nodes[space.dofs(e)[n]])).collect(),
                DataMode::Lifted => Vec::new(),
            };
            let mut b = vec![0.0; nl];
            let mut phi = vec![0.0; nl];
            for (s, w) in fq.points.iter().zip(&fq.weights) {
                let mut xhat = origin;
                for (m, ed) in edges.iter().enumerate() {
                    xhat = axpy(&xhat, s[m], ed);
                }
                reference.basis_unchecked(&xhat, &mut phi);
                let (gval, ds) = match mode {
                    DataMode::Interpolated => {
                        let j = mesh.jacobian(e, &xhat);
                        let tangents: Vec<Point> = edges.iter().map(|ed| crate::linalg::mat_vec(&j, ed)).collect();
                        let g: f64 = on_facet.iter().zip(&gv).map(|(&n, v)| v * phi[n]).sum();
                        (g, gram(&tangents))
                    }
                    DataMode::Lifted => {
                        let g = geom.expect("checked above");
                        let jl = fd_jacobian(dim, &xhat, |p| lift_reference(mesh, g, e, p))?;
                        let tangents: Vec<Point> = edges.iter().map(|ed| crate::linalg::mat_vec(&jl, ed)).collect();
                        let y = lift_reference(mesh, g, e, &xhat)?;
                        (coeffs.interface_flux(t, &y), gram(&tangents))
                    }
                };
                for &n in &on_facet {
                    b[n] += w * ds * gval * phi[n];
                }
            }
            Ok((e, b))
        })
        .collect::<Result<Vec<_>>>()?;
    for (e, b) in surface {
        for (&i, v) in space.dofs(e).iter().zip(&b) {
            load[i] += v;
        }
    }
    Ok(load)
}

/// Symmetric elimination of the Dirichlet dofs with boundary value `g`:
/// constrained rows and columns are zeroed, the diagonal set to one and the
/// right-hand side adjusted.
pub fn apply_dirichlet(matrix: &mut SparseMatrix, rhs: &mut [f64], mask: &[bool], g: f64) {
    let n = matrix.n_rows();
    assert_eq!(rhs.len(), n);
    assert_eq!(mask.len(), n);
    let pattern = matrix.pattern.clone();
    for i in 0..n {
        for p in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
            let j = pattern.col_idx[p];
            if mask[i] || mask[j] {
                if !mask[i] {
                    rhs[i] -= matrix.values[p] * g;
                }
                matrix.values[p] = if i == j { 1.0 } else { 0.0 };
            }
        }
    }
    for i in 0..n {
        if mask[i] {
            rhs[i] = g;
        }
    }
}

/// Value and gradient of the FE function with coefficients `u` at a point.
pub fn eval_at(space: &FESpace, e: usize, u: &[f64], q: &QpData) -> (f64, Point) {
    let mut v = 0.0;
    let mut g = ZERO;
    for (n, &id) in space.dofs(e).iter().enumerate() {
        v += u[id] * q.phi[n];
        g = axpy(&g, u[id], &q.grads[n]);
    }
    (v, g)
}

/// `(|u - U|_L2, |grad u - grad U|_L2)` over the mesh, with the exact
/// solution supplied per quadrature point as value and gradient.
pub fn fe_errors<F>(space: &FESpace, mesh: &CurvedMesh, u: &[f64], exact: F, opts: Option<AssemblyOptions>) -> Result<(f64, f64)>
where
    F: Fn(usize, &QpData) -> Result<(f64, Point)> + Sync,
{
    space.check_mesh(mesh)?;
    if u.len() != space.n_dofs {
        return Err(Error::Dimension(format!("vector has {} entries, space has {} dofs", u.len(), space.n_dofs)));
    }
    let t = tables(space, opts)?;
    let parts = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let (mut l2, mut h1) = (0.0, 0.0);
            for_each_qp(mesh, e, &t, |q| {
                let (v, g) = eval_at(space, e, u, q);
                let (ev, eg) = exact(e, q)?;
                let d = sub(&eg, &g);
                l2 += q.dx * (ev - v).powi(2);
                h1 += q.dx * dot(&d, &d);
                Ok(())
            })?;
            Ok((l2, h1))
        })
        .collect::<Result<Vec<_>>>()?;
    let (l2, h1) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok((l2.sqrt(), h1.sqrt()))
}
