//! Manufactured-solution convergence studies.
//!
//! The exact solution is `u(t, x) = sin(t) |Phi_t(x)| prod_i sin(2 pi x_i)` on the
//! box `[-1, 1]^d` with diffusion 10 inside the moving ellipse and 1 outside.
//! The source `f_i` and the interface flux jump `G` are derived from it.

use crate::config::{PointMode, StudyConfig};
use crate::error::{Error, Result};
use crate::evolution::{MeshFlow, SmoothEllipseFlow};
use crate::fem::{
    build_space, eval_at, fe_errors, interpolate, AssemblyOptions, Coefficients, Evaluation, FESpace, QpData,
};
use crate::geometry::LevelSetGeometry;
use crate::jet::{Jet, T_VAR};
use crate::linalg::{dot, norm, Point, ZERO};
use crate::mesh::{build_isoparametric, generate_fitted_mesh, import_msh, lift_reference, CurvedMesh};
use crate::timestepper::{run_from, RunResult, Scheme};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::fmt::Write;

/// Diffusion inside (region 1) and outside (region 2) the interface.
pub const DIFFUSION: [f64; 2] = [10.0, 1.0];

/// Value, gradient, time derivative and Laplacian of the exact solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactValue {
    pub u: f64,
    pub grad: Point,
    pub dt: f64,
    pub laplacian: f64,
}

pub struct ManufacturedProblem {
    pub dim: usize,
    pub amplitude: f64,
    pub diffusion: [f64; 2],
    pub geom: LevelSetGeometry,
    solution_flow: SmoothEllipseFlow,
}

impl ManufacturedProblem {
    pub fn new(dim: usize, amplitude: f64) -> Self {
        Self {
            dim,
            amplitude,
            diffusion: DIFFUSION,
            geom: LevelSetGeometry::oscillating_ellipse(dim, amplitude),
            solution_flow: SmoothEllipseFlow::new(dim, amplitude),
        }
    }

    pub fn with_diffusion(mut self, a: [f64; 2]) -> Self {
        self.diffusion = a;
        self
    }

    pub fn diffusion_in(&self, region: u8) -> f64 {
        self.diffusion[if region == 1 { 0 } else { 1 }]
    }

    pub fn exact_eval(&self, t: f64, x: &Point) -> ExactValue {
        // u vanishes to third order at the origin, where |Phi| is not smooth.
        if norm(x) < 1e-100 {
            return ExactValue { u: 0.0, grad: ZERO, dt: 0.0, laplacian: 0.0 };
        }
        let mut xs = [Jet::constant(0.0); 3];
        for (i, c) in xs.iter_mut().enumerate().take(self.dim) {
            *c = Jet::variable(x[i], i);
        }
        let tj = Jet::variable(t, T_VAR);
        let y = self.solution_flow.eval(tj, &xs);
        let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        let mut u = tj.sin() * r;
        for xi in xs.iter().take(self.dim) {
            u = u * (*xi * (2.0 * PI)).sin();
        }
        let mut grad = ZERO;
        grad[..self.dim].copy_from_slice(&u.g[..self.dim]);
        ExactValue { u: u.v, grad, dt: u.g[T_VAR], laplacian: u.laplacian(self.dim) }
    }

    pub fn u(&self, t: f64, x: &Point) -> f64 {
        self.exact_eval(t, x).u
    }

    /// `f_i = du/dt - A_i laplacian(u)`.
    pub fn derive_data(&self, t: f64, x: &Point, region: u8) -> f64 {
        let e = self.exact_eval(t, x);
        e.dt - self.diffusion_in(region) * e.laplacian
    }

    /// `G = (A_1 - A_2) grad(u) . nu` with `nu` the outward normal of region 1.
    pub fn derive_interface(&self, t: f64, x: &Point) -> f64 {
        let g = self.geom.grad(t, x);
        let n = norm(&g);
        if n == 0.0 {
            return 0.0;
        }
        let e = self.exact_eval(t, x);
        (self.diffusion[0] - self.diffusion[1]) * dot(&e.grad, &g) / n
    }
}

impl Coefficients for ManufacturedProblem {
    fn diffusion(&self, region: u8, _t: f64, _x: &Point) -> f64 {
        self.diffusion_in(region)
    }
    fn source(&self, region: u8, t: f64, x: &Point) -> f64 {
        self.derive_data(t, x, region)
    }
    fn interface_flux(&self, t: f64, x: &Point) -> f64 {
        self.derive_interface(t, x)
    }
}

/// The problem's diffusion with all data set to zero.
pub struct Homogeneous<'a>(pub &'a ManufacturedProblem);

impl Coefficients for Homogeneous<'_> {
    fn diffusion(&self, region: u8, _t: f64, _x: &Point) -> f64 {
        self.0.diffusion_in(region)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1_semi: f64,
    /// `sqrt(l2^2 + h1_semi^2)`.
    pub h1_full: f64,
}

/// Errors of `u_h` against the exact solution at the mesh time, with the exact
/// solution evaluated at the discrete quadrature points or at their lifts.
pub fn compute_errors(
    space: &FESpace,
    mesh: &CurvedMesh,
    u_h: &[f64],
    problem: &ManufacturedProblem,
    mode: PointMode,
    opts: Option<AssemblyOptions>,
) -> Result<ErrorNorms> {
    let t = mesh.time;
    let (l2, h1) = fe_errors(
        space,
        mesh,
        u_h,
        |e, q: &QpData| {
            let y = match mode {
                PointMode::Lifted => lift_reference(mesh, &problem.geom, e, &q.xhat)?,
                PointMode::Discrete => q.x,
            };
            let ex = problem.exact_eval(t, &y);
            Ok((ex.u, ex.grad))
        },
        opts,
    )?;
    Ok(ErrorNorms { l2, h1_semi: h1, h1_full: l2.hypot(h1) })
}

/// `log(e_(r-1)/e_r) / log(h_(r-1)/h_r)` for consecutive entries.
pub fn eoc(errors: &[f64], hs: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != hs.len() || errors.len() < 2 {
        return Err(Error::Dimension(format!("eoc needs two or more pairs, got {} errors and {} sizes", errors.len(), hs.len())));
    }
    if errors.iter().chain(hs).any(|&v| !(v > 0.0)) {
        return Err(Error::Config("eoc needs positive errors and mesh sizes".into()));
    }
    Ok(errors.windows(2).zip(hs.windows(2)).map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub h: f64,
    pub tau: f64,
    pub errors: ErrorNorms,
    pub n_dofs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportMeta {
    pub dim: usize,
    pub k: usize,
    pub q: usize,
    pub flow_mode: String,
    pub data_mode: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub meta: ReportMeta,
    pub rows: Vec<ReportRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl ConvergenceReport {
    fn column_eoc(&self, f: impl Fn(&ErrorNorms) -> f64) -> Vec<Option<f64>> {
        let mut out = vec![None];
        for w in self.rows.windows(2) {
            let e = eoc(&[f(&w[0].errors), f(&w[1].errors)], &[w[0].h, w[1].h]).ok();
            out.push(e.map(|v| v[0]));
        }
        out.truncate(self.rows.len());
        out
    }

    pub fn eoc_l2(&self) -> Vec<Option<f64>> {
        self.column_eoc(|e| e.l2)
    }

    pub fn eoc_h1(&self) -> Vec<Option<f64>> {
        self.column_eoc(|e| e.h1_semi)
    }

    pub fn eoc_h1_full(&self) -> Vec<Option<f64>> {
        self.column_eoc(|e| e.h1_full)
    }

    /// The main table: `h,tau,l2_error,h1_error,eoc_l2,eoc_h1`, with the
    /// H1 semi-norm in `h1_error`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,tau,l2_error,h1_error,eoc_l2,eoc_h1\n");
        for ((r, a), b) in self.rows.iter().zip(self.eoc_l2()).zip(self.eoc_h1()) {
            let _ = writeln!(s, "{:.6e},{:.6e},{:.6e},{:.6e},{},{}", r.h, r.tau, r.errors.l2, r.errors.h1_semi, fmt_opt(a), fmt_opt(b));
        }
        s
    }

    /// Companion table with the full H1 norm.
    pub fn to_full_csv(&self) -> String {
        let mut s = String::from("h,tau,h1_full_error,eoc_h1_full\n");
        for (r, a) in self.rows.iter().zip(self.eoc_h1_full()) {
            let _ = writeln!(s, "{:.6e},{:.6e},{:.6e},{}", r.h, r.tau, r.errors.h1_full, fmt_opt(a));
        }
        s
    }

    /// Two-column `h error` data for a log-log plot.
    pub fn plot_data(&self, norm: &str) -> Result<String> {
        let pick: fn(&ErrorNorms) -> f64 = match norm {
            "l2" => |e| e.l2,
            "h1" => |e| e.h1_semi,
            "h1_full" => |e| e.h1_full,
            other => return Err(Error::Config(format!("unknown norm '{other}'"))),
        };
        let mut s = format!(
            "# d={} k={} q={} flow={} data={}\n# h {norm}_error\n",
            self.meta.dim, self.meta.k, self.meta.q, self.meta.flow_mode, self.meta.data_mode
        );
        for r in &self.rows {
            let _ = writeln!(s, "{:.6e} {:.6e}", r.h, pick(&r.errors));
        }
        Ok(s)
    }

    /// Human-readable table.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "d={} k={} q={} flow={} data={}\n{:>10} {:>10} {:>8} {:>12} {:>8} {:>12} {:>8}\n",
            self.meta.dim, self.meta.k, self.meta.q, self.meta.flow_mode, self.meta.data_mode, "h", "tau", "dofs", "L2", "eoc", "H1", "eoc"
        );
        for ((r, a), b) in self.rows.iter().zip(self.eoc_l2()).zip(self.eoc_h1()) {
            let _ = writeln!(
                s,
                "{:>10.4e} {:>10.4e} {:>8} {:>12.4e} {:>8} {:>12.4e} {:>8}",
                r.h,
                r.tau,
                r.n_dofs,
                r.errors.l2,
                a.map(|v| format!("{v:.3}")).unwrap_or_default(),
                r.errors.h1_semi,
                b.map(|v| format!("{v:.3}")).unwrap_or_default()
            );
        }
        s
    }
}

/// Outcome of one refinement level.
pub struct LevelResult {
    pub level: usize,
    pub h: f64,
    pub tau: f64,
    pub space: FESpace,
    pub run: RunResult,
    pub errors: ErrorNorms,
}

impl LevelResult {
    pub fn row(&self) -> ReportRow {
        ReportRow { h: self.h, tau: self.tau, errors: self.errors, n_dofs: self.space.n_dofs }
    }
}

/// Initial curved mesh of a level: generated in 2D, imported from the
/// configured file otherwise.
pub fn level_mesh(cfg: &StudyConfig, problem: &ManufacturedProblem, level: usize) -> Result<CurvedMesh> {
    let l = cfg.levels.get(level).ok_or_else(|| Error::Config(format!("no level {level}")))?;
    let lin = match cfg.mesh_files.get(level) {
        Some(p) => import_msh(p, Some(&problem.geom))?,
        None => generate_fitted_mesh(&problem.geom, l.h)?,
    };
    build_isoparametric(lin, &problem.geom, cfg.order)
}

fn assembly(cfg: &StudyConfig) -> AssemblyOptions {
    AssemblyOptions { quad_degree: cfg.quad_degree.unwrap_or(2 * cfg.order + 2) }
}

/// Runs one level of the study with the given coefficients, from `U^0 = I^h u(0)`.
pub fn run_level_with(
    cfg: &StudyConfig,
    problem: &ManufacturedProblem,
    coeffs: &dyn Coefficients,
    level: usize,
    u0: Option<&dyn Fn(&Point) -> f64>,
) -> Result<LevelResult> {
    cfg.validate()?;
    if cfg.reproducible {
        faer::set_global_parallelism(faer::Par::Seq);
    }
    let bdf = cfg.bdf(level)?;
    let mesh = level_mesh(cfg, problem, level)?;
    let space = build_space(&mesh, cfg.order)?;
    let flow = MeshFlow::for_mode(cfg.flow_mode, cfg.dimension, cfg.amplitude);
    let mut scheme = Scheme::new(&space, &mesh, &flow, coeffs);
    scheme.geom = Some(&problem.geom);
    scheme.data_mode = cfg.data_mode;
    scheme.eval = match cfg.coefficient_evaluation {
        PointMode::Discrete => Evaluation::Discrete,
        PointMode::Lifted => Evaluation::Lifted(&problem.geom),
    };
    scheme.velocity = cfg.mesh_velocity;
    scheme.solver = cfg.solver;
    scheme.assembly = Some(assembly(cfg));
    let start = match u0 {
        Some(f) => interpolate(&mesh, f),
        None => interpolate(&mesh, |p| problem.u(0.0, p)),
    };
    let run = run_from(&scheme, &bdf, vec![start], |_, _, _| Ok(()))?;
    let errors = compute_errors(&space, &run.mesh, &run.u, problem, cfg.error_evaluation, Some(assembly(cfg)))?;
    let lin_h = mesh.topo.linear.h;
    Ok(LevelResult { level, h: lin_h, tau: bdf.tau, space, run, errors })
}

pub fn run_level(cfg: &StudyConfig, level: usize) -> Result<LevelResult> {
    let problem = ManufacturedProblem::new(cfg.dimension, cfg.amplitude);
    run_level_with(cfg, &problem, &problem, level, None)
}

pub fn report_meta(cfg: &StudyConfig) -> ReportMeta {
    ReportMeta {
        dim: cfg.dimension,
        k: cfg.order,
        q: cfg.q(),
        flow_mode: cfg.flow_mode.as_str().into(),
        data_mode: cfg.data_mode.as_str().into(),
    }
}

/// All levels of a study. `on_level` sees each finished level in order, so
/// partial results can be flushed before a later level fails.
pub fn run_study(cfg: &StudyConfig, mut on_level: impl FnMut(&LevelResult) -> Result<()>) -> Result<ConvergenceReport> {
    cfg.validate_study()?;
    let mut rows = Vec::with_capacity(cfg.levels.len());
    if cfg.parallel_levels {
        let results: Vec<Result<LevelResult>> = (0..cfg.levels.len()).into_par_iter().map(|l| run_level(cfg, l)).collect();
        for r in results {
            let r = r?;
            on_level(&r)?;
            rows.push(r.row());
        }
    } else {
        for l in 0..cfg.levels.len() {
            let r = run_level(cfg, l)?;
            on_level(&r)?;
            rows.push(r.row());
        }
    }
    Ok(ConvergenceReport { meta: report_meta(cfg), rows })
}

/// Errors of the nodal interpolant of `u(t)` on the mesh moved to `t`.
pub fn interpolation_errors(cfg: &StudyConfig, level: usize, t: f64) -> Result<(f64, ErrorNorms)> {
    let problem = ManufacturedProblem::new(cfg.dimension, cfg.amplitude);
    let base = level_mesh(cfg, &problem, level)?;
    let space = build_space(&base, cfg.order)?;
    let flow = MeshFlow::for_mode(cfg.flow_mode, cfg.dimension, cfg.amplitude);
    let mesh = crate::evolution::move_mesh(&base, &flow, t)?;
    let u = interpolate(&mesh, |p| problem.u(t, p));
    let e = compute_errors(&space, &mesh, &u, &problem, cfg.error_evaluation, Some(assembly(cfg)))?;
    Ok((base.topo.linear.h, e))
}

/// Value and gradient of a FE function at a physical point of element `e`.
pub fn point_value(space: &FESpace, mesh: &CurvedMesh, u: &[f64], e: usize, x: &Point) -> Result<(f64, Point)> {
    let xhat = mesh.inverse_map(e, x)?;
    let t = crate::fem::RefTables::at_points(&space.topo.reference, vec![xhat]);
    let mut out = (0.0, ZERO);
    crate::fem::for_each_qp(mesh, e, &t, |q| {
        out = eval_at(space, e, u, q);
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Point {
        let mut x = ZERO;
        for c in x.iter_mut().take(dim) {
            *c = rng.gen_range(-1.0..1.0);
        }
        x
    }

    #[test]
    fn exact_solution_basics() {
        let p = ManufacturedProblem::new(2, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = random_point(&mut rng, 2);
            assert_eq!(p.u(0.0, &x), 0.0);
            let b = [x[0], 1.0, 0.0];
            assert!(p.u(0.7, &b).abs() < 1e-14);
            // At t = 0 the source is the time derivative, sin(0) kills the rest.
            let e = p.exact_eval(0.0, &x);
            assert!((p.derive_data(0.0, &x, 1) - e.dt).abs() < 1e-14);
        }
        assert_eq!(p.exact_eval(0.5, &ZERO).u, 0.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for dim in [2, 3] {
            let p = ManufacturedProblem::new(dim, 0.25);
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            for _ in 0..100 {
                let x = random_point(&mut rng, dim);
                let t = rng.gen_range(0.0..1.0);
                let e = p.exact_eval(t, &x);
                let d = 1e-6;
                for i in 0..dim {
                    let (mut a, mut b) = (x, x);
                    a[i] += d;
                    b[i] -= d;
                    let fd = (p.u(t, &a) - p.u(t, &b)) / (2.0 * d);
                    assert!((fd - e.grad[i]).abs() < 1e-6, "dim {dim} x={x:?}");
                }
                let fd = (p.u(t + d, &x) - p.u(t - d, &x)) / (2.0 * d);
                assert!((fd - e.dt).abs() < 1e-6);
                // PDE residual with second-order stencils.
                let hs = 1e-4;
                let mut lap = 0.0;
                for i in 0..dim {
                    let (mut a, mut b) = (x, x);
                    a[i] += hs;
                    b[i] -= hs;
                    lap += (p.u(t, &a) - 2.0 * p.u(t, &x) + p.u(t, &b)) / (hs * hs);
                }
                let fd_f = fd - 10.0 * lap;
                assert!((fd_f - p.derive_data(t, &x, 1)).abs() < 1e-5 * (1.0 + fd_f.abs()), "{fd_f} vs {}", p.derive_data(t, &x, 1));
            }
        }
    }

    #[test]
    fn interface_data() {
        let p = ManufacturedProblem::new(2, 0.25);
        let same = ManufacturedProblem::new(2, 0.25).with_diffusion([2.0, 2.0]);
        for i in 0..100 {
            let th = i as f64 * 0.0628;
            let t = 0.01 * i as f64;
            let (a, b) = crate::geometry::AxisLaw::Oscillating { amplitude: 0.25 }.axes(t);
            let x = [0.5f64.sqrt() * a * th.cos(), 0.5f64.sqrt() * b * th.sin(), 0.0];
            assert!(p.geom.phi(t, &x).abs() < 1e-12);
            assert_eq!(same.derive_interface(t, &x), 0.0);
            let g = p.geom.grad(t, &x);
            let want = 9.0 * dot(&p.exact_eval(t, &x).grad, &g) / norm(&g);
            assert!((p.derive_interface(t, &x) - want).abs() < 1e-12);
            // The solution is one smooth function: both sides see the same trace.
            let n = crate::linalg::scale(1e-9 / norm(&g), &g);
            let inside = p.u(t, &crate::linalg::sub(&x, &n));
            let outside = p.u(t, &crate::linalg::add(&x, &n));
            assert!((inside - outside).abs() < 1e-7);
        }
    }

    #[test]
    fn eoc_examples() {
        assert!((eoc(&[1.0, 0.25], &[1.0, 0.5]).unwrap()[0] - 2.0).abs() < 1e-15);
        let hs = [0.4, 0.23, 0.11, 0.061];
        let errs: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powi(3)).collect();
        for v in eoc(&errs, &hs).unwrap() {
            assert!((v - 3.0).abs() < 1e-12);
        }
        // Tabulated entries carry six digits; bracket the eoc over their rounding.
        let (e0, e1, h0, h1) = (5.19037e-2, 6.67721e-3, 4.37747e-1, 2.40008e-1);
        let e = eoc(&[e0, e1], &[h0, h1]).unwrap()[0];
        let ulp = |v: f64| 5e-6 * 10f64.powf(v.log10().floor());
        let lo = eoc(&[e0 - ulp(e0), e1 + ulp(e1)], &[h0 + ulp(h0), h1 - ulp(h1)]).unwrap()[0];
        let hi = eoc(&[e0 + ulp(e0), e1 - ulp(e1)], &[h0 - ulp(h0), h1 + ulp(h1)]).unwrap()[0];
        assert!(lo <= 3.412317 && 3.412317 <= hi, "{lo} {e} {hi}");
        assert!((e - 3.412317).abs() < 2e-5, "{e}");
        assert!(eoc(&[1.0, 0.0], &[1.0, 0.5]).is_err());
        assert!(eoc(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn report_formats() {
        let rows: Vec<ReportRow> = [0.4, 0.2, 0.1]
            .iter()
            .enumerate()
            .map(|(i, &h)| ReportRow {
                h,
                tau: 0.25 / 2f64.powi(i as i32),
                errors: ErrorNorms { l2: h * h * h, h1_semi: h * h, h1_full: (h.powi(6) + h.powi(4)).sqrt() },
                n_dofs: 10,
            })
            .collect();
        let r = ConvergenceReport {
            meta: ReportMeta { dim: 2, k: 2, q: 3, flow_mode: "fallback".into(), data_mode: "interpolated".into() },
            rows,
        };
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "h,tau,l2_error,h1_error,eoc_l2,eoc_h1");
        assert!(lines[1].ends_with(",,"));
        assert!(lines[2].ends_with(",3.000000,2.000000"), "{}", lines[2]);
        assert_eq!(r.plot_data("l2").unwrap().lines().filter(|l| !l.starts_with('#')).count(), 3);
        assert!(r.plot_data("max").is_err());
        assert!(r.to_full_csv().starts_with("h,tau,h1_full_error,eoc_h1_full\n"));
    }

    #[test]
    fn coarse_run_is_sane_and_interpolant_is_zero_at_start() {
        let cfg = StudyConfig { order: 2, ..Default::default() };
        let problem = ManufacturedProblem::new(2, 0.25);
        let m = level_mesh(&cfg, &problem, 0).unwrap();
        assert!(interpolate(&m, |p| problem.u(0.0, p)).iter().all(|&v| v == 0.0));
        let r = run_level(&cfg, 0).unwrap();
        assert!(r.errors.l2.is_finite() && r.errors.l2 < 1.0, "{:?}", r.errors);
        assert_eq!(r.run.diagnostics.len(), 4);
        assert!(r.run.diagnostics.iter().all(|d| d.residual <= 1e-12 && d.det_min > 0.0));
    }

    /// Zero data from a bump: the mass norm stays within `exp(c T)` of its start.
    #[test]
    fn stability_smoke() {
        let cfg = StudyConfig { order: 1, ..Default::default() };
        let problem = ManufacturedProblem::new(2, 0.25);
        let bump = |p: &Point| ((1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1])).powi(2);
        let r = run_level_with(&cfg, &problem, &Homogeneous(&problem), 1, Some(&bump)).unwrap();
        let mesh0 = level_mesh(&cfg, &problem, 1).unwrap();
        let space0 = build_space(&mesh0, 1).unwrap();
        let u0 = interpolate(&mesh0, bump);
        let n0 = crate::fem::assemble_mass(&space0, &mesh0).unwrap().bilinear(&u0, &u0).sqrt();
        let c = r.run.diagnostics.iter().map(|d| (d.mass_norm / n0).ln() / d.t).fold(f64::NEG_INFINITY, f64::max);
        for d in &r.run.diagnostics {
            assert!(d.mass_norm <= n0 * (c * d.t).exp() * (1.0 + 1e-12));
        }
        // Diffusion dominates, so the fitted growth constant is negative.
        assert!(c < 0.0, "c = {c}");
    }

    #[test]
    fn interpolation_converges_at_order_k_plus_one() {
        for k in 1..=3 {
            let cfg = StudyConfig { order: k, levels: crate::config::default_levels(3, 0.2, 0.25), ..Default::default() };
            let mut hs = Vec::new();
            let mut es = Vec::new();
            for l in 0..3 {
                let (h, e) = interpolation_errors(&cfg, l, 1.0).unwrap();
                hs.push(h);
                es.push(e.l2);
            }
            let last = *eoc(&es, &hs).unwrap().last().unwrap();
            assert!((last - (k + 1) as f64).abs() <= 0.3, "k={k} eoc {last} {es:?}");
        }
    }
}
