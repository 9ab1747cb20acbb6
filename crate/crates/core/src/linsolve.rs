//! Sparse linear solvers: direct LU (faer) and Jacobi-preconditioned CG and
//! BiCGStab. Every accepted solve satisfies `|Ax - b| <= rel_tol |b|`.

use crate::error::{Error, Result};
use crate::fem::SparseMatrix;
use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use serde::{Deserialize, Serialize};

/// Systems up to this many unknowns go to the direct solver under `Auto`.
pub const DIRECT_LIMIT: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Direct LU up to `DIRECT_LIMIT` unknowns, BiCGStab above.
    #[default]
    Auto,
    DirectLu,
    Cg,
    #[serde(rename = "bicgstab")]
    BiCgStab,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Auto => "auto",
            Method::DirectLu => "direct-lu",
            Method::Cg => "cg",
            Method::BiCgStab => "bicgstab",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    pub rel_tol: f64,
    /// Iteration cap; `None` means ten times the system size.
    pub max_iter: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { method: Method::Auto, rel_tol: 1e-12, max_iter: None }
    }
}

impl SolverConfig {
    pub fn with_method(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-2) {
            return Err(Error::Config(format!("rel_tol must lie in (0, 1e-2], got {}", self.rel_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub method: Method,
    /// Krylov iterations, or refinement sweeps for the direct solver.
    pub iterations: usize,
    /// Final `|b - Ax| / |b|`.
    pub residual: f64,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.matvec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect()
}

fn check_dims(a: &SparseMatrix, b: &[f64]) -> Result<()> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::Dimension(format!("matrix is {}x{}", a.n_rows(), a.n_cols())));
    }
    if a.n_rows() != b.len() {
        return Err(Error::Dimension(format!("matrix has {} rows, right-hand side {}", a.n_rows(), b.len())));
    }
    Ok(())
}

/// Sparse LU factorization; immutable once built and shareable across threads.
pub struct LuFactorization {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl LuFactorization {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        let n = a.n_rows();
        let mut t = Vec::with_capacity(a.nnz());
        for i in 0..n {
            let (c, v) = a.row(i);
            t.extend(c.iter().zip(v).map(|(&j, &x)| Triplet::new(i, j, x)));
        }
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, a.n_cols(), &t)
            .map_err(|e| Error::Solver(format!("building the LU input failed: {e:?}")))?;
        let lu = m.sp_lu().map_err(|e| Error::Solver(format!("LU factorization failed: {e}")))?;
        Ok(Self { lu, n })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = faer::Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

fn direct(a: &SparseMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, SolveStats)> {
    let bn = norm2(b);
    let lu = LuFactorization::new(a)?;
    let mut x = lu.solve(b);
    let mut r = residual(a, &x, b);
    let mut sweeps = 0;
    // A few sweeps of iterative refinement recover digits lost to pivoting.
    while norm2(&r) > tol * bn && sweeps < 3 && x.iter().all(|v| v.is_finite()) {
        let d = lu.solve(&r);
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += di;
        }
        r = residual(a, &x, b);
        sweeps += 1;
    }
    let rel = if bn > 0.0 { norm2(&r) / bn } else { norm2(&r) };
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Solver("singular pivot in LU (non-finite solution)".into()));
    }
    if rel > tol {
        return Err(Error::Solver(format!("LU residual {rel:.3e} exceeds tolerance {tol:.1e} (matrix close to singular)")));
    }
    Ok((x, SolveStats { method: Method::DirectLu, iterations: sweeps, residual: rel }))
}

fn jacobi(a: &SparseMatrix) -> Vec<f64> {
    (0..a.n_rows())
        .map(|i| {
            let d = a.get(i, i);
            if d != 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect()
}

fn cg(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
    let defect = a.symmetry_defect();
    let scale = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if defect > 1e-12 * scale.max(1.0) {
        return Err(Error::Solver(format!("CG needs a symmetric matrix, asymmetry {defect:.3e}")));
    }
    let n = b.len();
    let bn = norm2(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return Ok((x, SolveStats { method: Method::Cg, iterations: 0, residual: 0.0 }));
    }
    let dinv = jacobi(a);
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dotv(&r, &z);
    for it in 1..=max_iter {
        let ap = a.matvec(&p);
        let pap = dotv(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Solver(format!("CG breakdown at iteration {it}: matrix not positive definite")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) <= tol * bn {
            let rel = norm2(&residual(a, &x, b)) / bn;
            if rel <= tol {
                return Ok((x, SolveStats { method: Method::Cg, iterations: it, residual: rel }));
            }
            r = residual(a, &x, b);
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dotv(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver(format!(
        "CG did not converge in {max_iter} iterations (residual {:.3e})",
        norm2(&residual(a, &x, b)) / bn
    )))
}

fn bicgstab(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
    let n = b.len();
    let bn = norm2(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return Ok((x, SolveStats { method: Method::BiCgStab, iterations: 0, residual: 0.0 }));
    }
    let dinv = jacobi(a);
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&dinv).map(|(a, d)| a * d).collect() };
    let mut r = b.to_vec();
    let mut r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dotv(&r0, &r);
        if rho_new.abs() < 1e-300 {
            // Restart with the current residual as shadow vector.
            r0 = r.clone();
            p = vec![0.0; n];
            v = vec![0.0; n];
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let ph = precond(&p);
        v = a.matvec(&ph);
        let r0v = dotv(&r0, &v);
        if r0v == 0.0 {
            return Err(Error::Solver(format!("BiCGStab breakdown at iteration {it}")));
        }
        alpha = rho / r0v;
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm2(&s) <= tol * bn {
            for i in 0..n {
                x[i] += alpha * ph[i];
            }
            let rel = norm2(&residual(a, &x, b)) / bn;
            if rel <= tol {
                return Ok((x, SolveStats { method: Method::BiCgStab, iterations: it, residual: rel }));
            }
            r = residual(a, &x, b);
            continue;
        }
        let sh = precond(&s);
        let t = a.matvec(&sh);
        let tt = dotv(&t, &t);
        omega = if tt > 0.0 { dotv(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm2(&r) <= tol * bn {
            let rel = norm2(&residual(a, &x, b)) / bn;
            if rel <= tol {
                return Ok((x, SolveStats { method: Method::BiCgStab, iterations: it, residual: rel }));
            }
            r = residual(a, &x, b);
        }
        if omega == 0.0 {
            return Err(Error::Solver(format!("BiCGStab stagnated at iteration {it}")));
        }
    }
    Err(Error::Solver(format!(
        "BiCGStab did not converge in {max_iter} iterations (residual {:.3e})",
        norm2(&residual(a, &x, b)) / bn
    )))
}

pub fn solve(a: &SparseMatrix, b: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    solve_with_stats(a, b, cfg).map(|(x, _)| x)
}

pub fn solve_with_stats(a: &SparseMatrix, b: &[f64], cfg: &SolverConfig) -> Result<(Vec<f64>, SolveStats)> {
    cfg.check()?;
    check_dims(a, b)?;
    let n = b.len();
    let max_iter = cfg.max_iter.unwrap_or(10 * n.max(1));
    let method = match cfg.method {
        Method::Auto if n <= DIRECT_LIMIT => Method::DirectLu,
        Method::Auto => Method::BiCgStab,
        m => m,
    };
    match method {
        Method::DirectLu => direct(a, b, cfg.rel_tol),
        Method::Cg => cg(a, b, cfg.rel_tol, max_iter),
        _ => bicgstab(a, b, cfg.rel_tol, max_iter),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ALL: [Method; 3] = [Method::DirectLu, Method::Cg, Method::BiCgStab];

    #[test]
    fn identity_returns_rhs() {
        let b = vec![1.5, -2.0, 0.25, 7.0];
        for m in ALL {
            let x = solve(&SparseMatrix::identity(4), &b, &SolverConfig::with_method(m)).unwrap();
            assert_eq!(x, b);
        }
    }

    #[test]
    fn two_by_two_hand_solution() {
        let a = SparseMatrix::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        for m in ALL {
            let x = solve(&a, &[1.0, 2.0], &SolverConfig::with_method(m)).unwrap();
            assert!((x[0] - 1.0 / 11.0).abs() <= 1e-12 && (x[1] - 7.0 / 11.0).abs() <= 1e-12, "{m:?}");
        }
    }

    #[test]
    fn failures_are_reported() {
        let nonsym = SparseMatrix::from_dense(&[vec![4.0, 2.0], vec![1.0, 3.0]]);
        assert!(solve(&nonsym, &[1.0, 1.0], &SolverConfig::with_method(Method::Cg)).is_err());
        let singular = SparseMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        let e = solve(&singular, &[1.0, 0.0], &SolverConfig::with_method(Method::DirectLu)).unwrap_err();
        assert!(e.is_solver_failure());
        let capped = SolverConfig { method: Method::BiCgStab, max_iter: Some(1), ..Default::default() };
        let hard = SparseMatrix::from_dense(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 2.0, 2.0]]);
        assert!(solve(&hard, &[1.0, 2.0, 3.0], &capped).is_err());
        assert!(SolverConfig { rel_tol: 0.5, ..Default::default() }.check().is_err());
        assert!(solve(&hard, &[1.0], &SolverConfig::default()).is_err());
    }

    #[test]
    fn random_spd_residual_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &n in &[5usize, 40, 200, 500] {
            // Sparse random SPD: graph Laplacian plus a positive diagonal.
            let mut t = Vec::new();
            for i in 0..n {
                t.push((i, i, 0.5 + rng.gen::<f64>()));
                for _ in 0..3 {
                    let j = rng.gen_range(0..n);
                    if j != i {
                        let w = rng.gen::<f64>();
                        t.extend([(i, i, w), (j, j, w), (i, j, -w), (j, i, -w)]);
                    }
                }
            }
            let a = SparseMatrix::from_triplets(n, n, &t).unwrap();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bn = norm2(&b);
            let mut sols = Vec::new();
            for m in ALL {
                let cfg = SolverConfig::with_method(m);
                let (x, st) = solve_with_stats(&a, &b, &cfg).unwrap();
                assert!(norm2(&residual(&a, &x, &b)) <= cfg.rel_tol * bn, "{m:?} n={n}");
                assert!(st.residual <= cfg.rel_tol);
                sols.push(x);
            }
            for s in &sols[1..] {
                let d = s.iter().zip(&sols[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(d < 1e-9, "n={n} diff {d}");
            }
        }
    }

    #[test]
    fn heat_system_cross_solver() {
        use crate::fem::{apply_dirichlet, assemble_mass, assemble_operator, build_space, ConstantCoefficients, Evaluation};
        use crate::geometry::LevelSetGeometry;
        use crate::mesh::{build_isoparametric, generate_fitted_mesh};
        let g = LevelSetGeometry::oscillating_ellipse(2, 0.25);
        let mesh = build_isoparametric(generate_fitted_mesh(&g, 0.2).unwrap(), &g, 2).unwrap();
        let s = build_space(&mesh, 2).unwrap();
        let m = assemble_mass(&s, &mesh).unwrap();
        let k = assemble_operator(&s, &mesh, &ConstantCoefficients { a: [10.0, 1.0], ..Default::default() }, None, Evaluation::Discrete).unwrap();
        let mut a = SparseMatrix::lincomb(1.0, &m, 0.05, &k).unwrap();
        let mut b = m.matvec(&mesh.nodes.iter().map(|p| (3.0 * p[0]).sin() * p[1]).collect::<Vec<_>>());
        apply_dirichlet(&mut a, &mut b, &s.dirichlet, 0.0);
        let x1 = solve(&a, &b, &SolverConfig::with_method(Method::DirectLu)).unwrap();
        let x2 = solve(&a, &b, &SolverConfig::with_method(Method::BiCgStab)).unwrap();
        let d = x1.iter().zip(&x2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-9, "{d}");
    }
}
