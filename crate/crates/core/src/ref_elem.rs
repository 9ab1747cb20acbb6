//! Lagrange elements on the reference simplex and quadrature rules.
//!
//! The reference simplex is the unit right simplex with vertices
//! `0, e_1, .., e_d`. Barycentric coordinates are `lambda_0 = 1 - sum(x)` and
//! `lambda_i = x_i`.
//!
//! Lagrange nodes sit on the equispaced barycentric lattice
//! `{alpha / k : |alpha| = k}`. They are ordered by support: first the d+1
//! vertices, then edge nodes (edges in lexicographic vertex-pair order, nodes
//! running from the lower vertex towards the higher one), then face-interior
//! nodes (faces in lexicographic order), then cell-interior nodes. Within a
//! support set, nodes are ordered by their multi-index in descending
//! lexicographic order. Every element of a given `(d, k)` uses this layout.

use crate::error::{Error, Result};
use crate::linalg::Point;

/// Tolerance used when deciding whether a point lies inside the simplex.
pub const INSIDE_TOL: f64 = 1e-10;

pub const MAX_ORDER: usize = 3;

#[derive(Debug, Clone)]
pub struct ReferenceSimplex {
    dim: usize,
    order: usize,
    /// Barycentric multi-index of each node (entries beyond `dim` are zero).
    multi: Vec<[usize; 4]>,
    nodes: Vec<Point>,
}

pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

fn lattice(dim: usize, order: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    let mut alpha = [0usize; 4];
    fn rec(pos: usize, dim: usize, left: usize, alpha: &mut [usize; 4], out: &mut Vec<[usize; 4]>) {
        if pos == dim {
            alpha[dim] = left;
            out.push(*alpha);
            return;
        }
        for v in 0..=left {
            alpha[pos] = v;
            rec(pos + 1, dim, left - v, alpha, out);
        }
        alpha[pos] = 0;
    }
    rec(0, dim, order, &mut alpha, &mut out);
    out
}

fn support(dim: usize, a: &[usize; 4]) -> Vec<usize> {
    (0..=dim).filter(|&i| a[i] > 0).collect()
}

impl ReferenceSimplex {
    pub fn new(dim: usize, order: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Unsupported(format!("reference simplex of dimension {dim}")));
        }
        if order == 0 || order > MAX_ORDER {
            return Err(Error::Unsupported(format!(
                "Lagrange order {order} (supported: 1..={MAX_ORDER})"
            )));
        }
        let mut multi = lattice(dim, order);
        multi.sort_by(|a, b| {
            let sa = support(dim, a);
            let sb = support(dim, b);
            sa.len()
                .cmp(&sb.len())
                .then_with(|| sa.cmp(&sb))
                .then_with(|| b[..=dim].cmp(&a[..=dim]))
        });
        let nodes = multi
            .iter()
            .map(|a| {
                let mut p = [0.0; 3];
                for i in 1..=dim {
                    p[i - 1] = a[i] as f64 / order as f64;
                }
                p
            })
            .collect();
        Ok(Self { dim, order, multi, nodes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// N(k) = binomial(k + d, d).
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn multi_index(&self, node: usize) -> &[usize; 4] {
        &self.multi[node]
    }

    /// Reference vertices (`d + 1` points).
    pub fn vertices(&self) -> &[Point] {
        &self.nodes[..=self.dim]
    }

    /// Local node indices lying on the facet opposite to local vertex `v`.
    pub fn facet_nodes(&self, opposite: usize) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&n| self.multi[n][opposite] == 0)
            .collect()
    }

    pub fn barycentric(&self, x: &Point) -> [f64; 4] {
        let mut l = [0.0; 4];
        let mut s = 0.0;
        for i in 0..self.dim {
            l[i + 1] = x[i];
            s += x[i];
        }
        l[0] = 1.0 - s;
        l
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        let l = self.barycentric(x);
        l[..=self.dim].iter().all(|&v| v >= -tol && v <= 1.0 + tol)
    }

    fn check_inside(&self, x: &Point) -> Result<()> {
        if self.contains(x, INSIDE_TOL) {
            Ok(())
        } else {
            Err(Error::OutsideReference(*x))
        }
    }

    /// Basis values at `x`; rejects points outside the closed simplex.
    pub fn basis(&self, x: &Point) -> Result<Vec<f64>> {
        self.check_inside(x)?;
        let mut out = vec![0.0; self.n_nodes()];
        self.basis_unchecked(x, &mut out);
        Ok(out)
    }

    /// Reference gradients, one `[f64; 3]` row per basis function.
    pub fn basis_grad(&self, x: &Point) -> Result<Vec<Point>> {
        self.check_inside(x)?;
        let mut out = vec![[0.0; 3]; self.n_nodes()];
        self.basis_grad_unchecked(x, &mut out);
        Ok(out)
    }

    /// Per-coordinate factors `P(kl) = prod_{j<a} (k l - j)/(j+1)` and their
    /// derivatives with respect to `l`, tabulated for `a = 0..=k`.
    fn factors(&self, l: f64) -> ([f64; MAX_ORDER + 1], [f64; MAX_ORDER + 1]) {
        let k = self.order as f64;
        let mut p = [0.0; MAX_ORDER + 1];
        let mut dp = [0.0; MAX_ORDER + 1];
        p[0] = 1.0;
        dp[0] = 0.0;
        for a in 1..=self.order {
            let j = (a - 1) as f64;
            let f = (k * l - j) / (j + 1.0);
            let df = k / (j + 1.0);
            p[a] = p[a - 1] * f;
            dp[a] = dp[a - 1] * f + p[a - 1] * df;
        }
        (p, dp)
    }

    pub fn basis_unchecked(&self, x: &Point, out: &mut [f64]) {
        let l = self.barycentric(x);
        let mut tabs = [[0.0; MAX_ORDER + 1]; 4];
        for i in 0..=self.dim {
            tabs[i] = self.factors(l[i]).0;
        }
        for (n, a) in self.multi.iter().enumerate() {
            let mut v = 1.0;
            for i in 0..=self.dim {
                v *= tabs[i][a[i]];
            }
            out[n] = v;
        }
    }

    pub fn basis_grad_unchecked(&self, x: &Point, out: &mut [Point]) {
        let l = self.barycentric(x);
        let mut p = [[0.0; MAX_ORDER + 1]; 4];
        let mut dp = [[0.0; MAX_ORDER + 1]; 4];
        for i in 0..=self.dim {
            let (a, b) = self.factors(l[i]);
            p[i] = a;
            dp[i] = b;
        }
        for (n, a) in self.multi.iter().enumerate() {
            // derivative with respect to each barycentric coordinate
            let mut dl = [0.0; 4];
            for i in 0..=self.dim {
                let mut v = dp[i][a[i]];
                for m in 0..=self.dim {
                    if m != i {
                        v *= p[m][a[m]];
                    }
                }
                dl[i] = v;
            }
            let mut g = [0.0; 3];
            for c in 0..self.dim {
                g[c] = dl[c + 1] - dl[0];
            }
            out[n] = g;
        }
    }
}

/// Barycentric coordinates of `x` with respect to a straight simplex.
pub fn barycentric_coords(dim: usize, vertices: &[Point], x: &Point) -> Result<[f64; 4]> {
    use crate::linalg::{det, inverse, mat_zero, sub};
    let mut m = mat_zero();
    for j in 0..dim {
        let e = sub(&vertices[j + 1], &vertices[0]);
        for i in 0..dim {
            m[i][j] = e[i];
        }
    }
    let scale: f64 = (1..=dim)
        .map(|j| crate::linalg::norm(&sub(&vertices[j], &vertices[0])))
        .fold(0.0, f64::max);
    if scale == 0.0 || det(dim, &m).abs() <= 1e-14 * scale.powi(dim as i32) {
        return Err(Error::DegenerateSimplex);
    }
    let inv = inverse(dim, &m).ok_or(Error::DegenerateSimplex)?;
    let r = sub(x, &vertices[0]);
    let mut mu = [0.0; 4];
    let mut s = 0.0;
    for i in 0..dim {
        let mut v = 0.0;
        for j in 0..dim {
            v += inv[i][j] * r[j];
        }
        mu[i + 1] = v;
        s += v;
    }
    mu[0] = 1.0 - s;
    Ok(mu)
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub dim: usize,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }
}

pub const MAX_QUADRATURE_DEGREE: usize = 20;

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-type initial guess, refined by Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = z;
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn tabulated(dim: usize, degree: usize) -> Option<QuadratureRule> {
    let rule = |points: Vec<Point>, weights: Vec<f64>, exact: usize| QuadratureRule {
        dim,
        points,
        weights,
        exactness_degree: exact,
    };
    match (dim, degree) {
        (2, 1) => Some(rule(vec![[1.0 / 3.0, 1.0 / 3.0, 0.0]], vec![0.5], 1)),
        (2, 2) => {
            let a = 1.0 / 6.0;
            let b = 2.0 / 3.0;
            Some(rule(
                vec![[a, a, 0.0], [b, a, 0.0], [a, b, 0.0]],
                vec![1.0 / 6.0; 3],
                2,
            ))
        }
        (2, 3..=5) => {
            // seven-point degree-5 rule (Radon)
            let s15 = 15f64.sqrt();
            let a1 = (6.0 - s15) / 21.0;
            let a2 = (6.0 + s15) / 21.0;
            let w1 = (155.0 - s15) / 2400.0;
            let w2 = (155.0 + s15) / 2400.0;
            let c = 1.0 / 3.0;
            Some(rule(
                vec![
                    [c, c, 0.0],
                    [a1, a1, 0.0],
                    [1.0 - 2.0 * a1, a1, 0.0],
                    [a1, 1.0 - 2.0 * a1, 0.0],
                    [a2, a2, 0.0],
                    [1.0 - 2.0 * a2, a2, 0.0],
                    [a2, 1.0 - 2.0 * a2, 0.0],
                ],
                vec![9.0 / 80.0, w1, w1, w1, w2, w2, w2],
                5,
            ))
        }
        (3, 1) => Some(rule(vec![[0.25, 0.25, 0.25]], vec![1.0 / 6.0], 1)),
        (3, 2) => {
            let s5 = 5f64.sqrt();
            let a = (5.0 - s5) / 20.0;
            let b = (5.0 + 3.0 * s5) / 20.0;
            Some(rule(
                vec![[a, a, a], [b, a, a], [a, b, a], [a, a, b]],
                vec![1.0 / 24.0; 4],
                2,
            ))
        }
        _ => None,
    }
}

/// Collapsed-coordinate (Duffy) product of Gauss-Legendre rules.
fn collapsed(dim: usize, degree: usize) -> QuadratureRule {
    let n_for = |extra: usize| (degree + extra + 2) / 2;
    match dim {
        1 => {
            let (x, w) = gauss_legendre(n_for(0));
            QuadratureRule {
                dim,
                points: x.iter().map(|&u| [u, 0.0, 0.0]).collect(),
                weights: w,
                exactness_degree: degree,
            }
        }
        2 => {
            let (xu, wu) = gauss_legendre(n_for(1));
            let (xv, wv) = gauss_legendre(n_for(0));
            let mut points = Vec::new();
            let mut weights = Vec::new();
            for (u, a) in xu.iter().zip(&wu) {
                for (v, b) in xv.iter().zip(&wv) {
                    points.push([*u, (1.0 - u) * v, 0.0]);
                    weights.push(a * b * (1.0 - u));
                }
            }
            QuadratureRule { dim, points, weights, exactness_degree: degree }
        }
        _ => {
            let (xu, wu) = gauss_legendre(n_for(2));
            let (xv, wv) = gauss_legendre(n_for(1));
            let (xw, ww) = gauss_legendre(n_for(0));
            let mut points = Vec::new();
            let mut weights = Vec::new();
            for (u, a) in xu.iter().zip(&wu) {
                for (v, b) in xv.iter().zip(&wv) {
                    for (w, c) in xw.iter().zip(&ww) {
                        points.push([*u, (1.0 - u) * v, (1.0 - u) * (1.0 - v) * w]);
                        weights.push(a * b * c * (1.0 - u) * (1.0 - u) * (1.0 - v));
                    }
                }
            }
            QuadratureRule { dim, points, weights, exactness_degree: degree }
        }
    }
}

/// Positive-weight rule on the unit simplex of dimension `dim` (1, 2 or 3)
/// that integrates polynomials of total degree `degree` exactly.
pub fn quadrature_for(dim: usize, degree: usize) -> Result<QuadratureRule> {
    if !(1..=3).contains(&dim) {
        return Err(Error::Unsupported(format!("quadrature in dimension {dim}")));
    }
    if degree == 0 || degree > MAX_QUADRATURE_DEGREE {
        return Err(Error::Unsupported(format!(
            "quadrature degree {degree} (supported: 1..={MAX_QUADRATURE_DEGREE})"
        )));
    }
    Ok(tabulated(dim, degree).unwrap_or_else(|| collapsed(dim, degree)))
}
