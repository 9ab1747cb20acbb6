//! BDF time stepping on the moving mesh.

use crate::error::{Error, Result};
use crate::evolution::{discrete_velocity, MeshFlow, MeshTrajectory};
use crate::fem::{
    apply_dirichlet, assemble_load_with, assemble_mass_with, assemble_operator_with, AssemblyOptions, Coefficients,
    DataMode, Evaluation, FESpace, SparseMatrix,
};
use crate::geometry::LevelSetGeometry;
use crate::linalg::Point;
use crate::linsolve::{solve_with_stats, SolverConfig};
use crate::mesh::{simplex_quality, CurvedMesh};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

pub const MAX_BDF_ORDER: usize = 4;

/// Coefficients `delta_0..delta_q` of `delta(z) = sum_{l=1}^q (1 - z)^l / l`.
pub fn bdf_weights(q: usize) -> Result<Vec<Ratio<i64>>> {
    if q == 0 || q > MAX_BDF_ORDER {
        return Err(Error::Config(format!("BDF order {q} (supported: 1..={MAX_BDF_ORDER})")));
    }
    let mut w = vec![Ratio::from_integer(0); q + 1];
    for lam in 1..=q as i64 {
        // (1 - z)^lam = sum_l binom(lam, l) (-1)^l z^l
        let mut binom = 1i64;
        for l in 0..=lam {
            let sign = if l % 2 == 0 { 1 } else { -1 };
            w[l as usize] += Ratio::new(sign * binom, lam);
            binom = binom * (lam - l) / (l + 1);
        }
    }
    Ok(w)
}

pub fn bdf_weights_f64(q: usize) -> Result<Vec<f64>> {
    Ok(bdf_weights(q)?.iter().map(|r| *r.numer() as f64 / *r.denom() as f64).collect())
}

/// Order, uniform step and final time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdfConfig {
    pub q: usize,
    pub tau: f64,
    pub t_end: f64,
}

impl BdfConfig {
    pub fn new(q: usize, tau: f64, t_end: f64) -> Result<Self> {
        if q == 0 || q > MAX_BDF_ORDER {
            return Err(Error::Config(format!("BDF order {q} (supported: 1..={MAX_BDF_ORDER})")));
        }
        if !(tau > 0.0 && t_end > 0.0) {
            return Err(Error::Config("step size and final time must be positive".into()));
        }
        let m = t_end / tau;
        if (m - m.round()).abs() > 1e-12 * m.max(1.0) || m.round() < 1.0 {
            return Err(Error::Config(format!("final time {t_end} is not a whole number of steps {tau}")));
        }
        Ok(Self { q, tau, t_end })
    }

    /// Number of steps `M = T / tau`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.tau).round() as usize
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.tau
    }
}

/// Which mesh velocity enters the advection and reaction terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityMode {
    /// BDF difference of the node positions, `W^j`.
    #[default]
    Bdf,
    /// Nodal values of the flow's time derivative.
    Exact,
}

/// One entry of the solution history.
#[derive(Debug, Clone)]
pub struct HistoryEntry {
    pub t: f64,
    pub u: Vec<f64>,
    /// `M^j U^j`, the only form in which old mass matrices are needed.
    pub mass_u: Vec<f64>,
}

/// The last `q + 1` solutions, newest at the back.
#[derive(Debug, Clone)]
pub struct SolutionHistory {
    capacity: usize,
    entries: VecDeque<HistoryEntry>,
}

impl SolutionHistory {
    pub fn new(q: usize) -> Self {
        Self { capacity: q + 1, entries: VecDeque::with_capacity(q + 1) }
    }

    pub fn push(&mut self, e: HistoryEntry) -> Result<()> {
        if let Some(last) = self.entries.back() {
            if e.t <= last.t {
                return Err(Error::History(format!("time {} does not follow {}", e.t, last.t)));
            }
            if e.u.len() != last.u.len() {
                return Err(Error::Dimension("history vectors differ in length".into()));
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(e);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry `l` steps back from the newest (`l = 0` is the newest).
    pub fn back(&self, l: usize) -> Result<&HistoryEntry> {
        let n = self.entries.len();
        if l >= n {
            return Err(Error::History(format!("need {} past solutions, have {n}", l + 1)));
        }
        Ok(&self.entries[n - 1 - l])
    }
}

/// Everything that defines the fully discrete problem apart from the time grid.
pub struct Scheme<'a> {
    pub space: &'a FESpace,
    /// Mesh at t = 0; later meshes are produced by `flow`.
    pub base: &'a CurvedMesh,
    pub flow: &'a MeshFlow,
    pub coeffs: &'a dyn Coefficients,
    pub geom: Option<&'a LevelSetGeometry>,
    pub data_mode: DataMode,
    pub eval: Evaluation<'a>,
    pub velocity: VelocityMode,
    pub solver: SolverConfig,
    pub assembly: Option<AssemblyOptions>,
    /// Homogeneous Dirichlet condition on box-boundary dofs.
    pub dirichlet: bool,
}

impl<'a> Scheme<'a> {
    pub fn new(space: &'a FESpace, base: &'a CurvedMesh, flow: &'a MeshFlow, coeffs: &'a dyn Coefficients) -> Self {
        Self {
            space,
            base,
            flow,
            coeffs,
            geom: None,
            data_mode: DataMode::Interpolated,
            eval: Evaluation::Discrete,
            velocity: VelocityMode::Bdf,
            solver: SolverConfig::default(),
            assembly: None,
            dirichlet: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    /// BDF order used (lower during startup).
    pub order: usize,
    pub iterations: usize,
    pub residual: f64,
    pub det_min: f64,
    pub det_max: f64,
    pub shape_regularity: f64,
    /// `sqrt(U^T M U)`.
    pub mass_norm: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub u: Vec<f64>,
    pub mesh: CurvedMesh,
    pub diagnostics: Vec<StepDiagnostics>,
}

fn mesh_quality(mesh: &CurvedMesh) -> Result<(f64, f64, f64)> {
    let (lo, hi) = mesh.det_range()?;
    let q = (0..mesh.n_elements()).map(|e| simplex_quality(mesh.dim(), &mesh.vertex_positions(e))).fold(f64::INFINITY, f64::min);
    Ok((lo, hi, q))
}

/// Advances one step to index `j` with BDF order `m = min(j, q)` and pushes
/// `U^j` onto the history. The trajectory must already hold the mesh at `t_j`.
pub fn step(
    scheme: &Scheme,
    cfg: &BdfConfig,
    traj: &MeshTrajectory,
    history: &mut SolutionHistory,
    j: usize,
) -> Result<StepDiagnostics> {
    let m = j.min(cfg.q);
    if j == 0 || history.len() < m {
        return Err(Error::History(format!("step {j} with BDF-{m} needs {m} past solutions")));
    }
    let delta = bdf_weights_f64(m)?;
    let tau = cfg.tau;
    let mesh = traj.mesh(j);
    let w: Vec<Point> = match scheme.velocity {
        VelocityMode::Bdf => traj.bdf_velocity(j, m, tau)?,
        VelocityMode::Exact => discrete_velocity(&mesh, scheme.flow.flow())?,
    };
    let mass = assemble_mass_with(scheme.space, &mesh, scheme.assembly)?;
    let op = assemble_operator_with(scheme.space, &mesh, scheme.coeffs, Some(&w), scheme.eval, scheme.assembly)?;
    let mut rhs = assemble_load_with(scheme.space, &mesh, scheme.coeffs, scheme.geom, scheme.data_mode, scheme.assembly)?;
    for l in 1..=m {
        let old = history.back(l - 1)?;
        for (r, v) in rhs.iter_mut().zip(&old.mass_u) {
            *r -= delta[l] / tau * v;
        }
    }
    let mut a = SparseMatrix::lincomb(delta[0] / tau, &mass, 1.0, &op)?;
    if scheme.dirichlet {
        apply_dirichlet(&mut a, &mut rhs, &scheme.space.dirichlet, 0.0);
    }
    let (u, stats) = solve_with_stats(&a, &rhs, &scheme.solver)?;
    let mass_u = mass.matvec(&u);
    let mass_norm = u.iter().zip(&mass_u).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt();
    let (det_min, det_max, shape_regularity) = mesh_quality(&mesh)?;
    history.push(HistoryEntry { t: traj.times[j], u, mass_u })?;
    Ok(StepDiagnostics {
        step: j,
        t: traj.times[j],
        order: m,
        iterations: stats.iterations,
        residual: stats.residual,
        det_min,
        det_max,
        shape_regularity,
        mass_norm,
    })
}

fn initial_entry(scheme: &Scheme, u0: Vec<f64>) -> Result<HistoryEntry> {
    if u0.len() != scheme.space.n_dofs {
        return Err(Error::Dimension(format!("initial vector has {} entries, space has {}", u0.len(), scheme.space.n_dofs)));
    }
    let mass = assemble_mass_with(scheme.space, scheme.base, scheme.assembly)?;
    let mass_u = mass.matvec(&u0);
    Ok(HistoryEntry { t: scheme.base.time, u: u0, mass_u })
}

/// Bootstrap ladder: `U^1..U^(q-1)` by one step each of BDF-1..BDF-(q-1).
/// Returns `U^0..U^(q-1)`.
pub fn startup(scheme: &Scheme, cfg: &BdfConfig, u0: Vec<f64>) -> Result<Vec<Vec<f64>>> {
    let mut traj = MeshTrajectory::new(scheme.base.clone());
    let mut hist = SolutionHistory::new(cfg.q);
    hist.push(initial_entry(scheme, u0)?)?;
    let mut out = vec![hist.back(0)?.u.clone()];
    for j in 1..cfg.q.min(cfg.n_steps() + 1) {
        traj.advance(scheme.flow, cfg.time(j)).map_err(|e| wrap(j, e))?;
        step(scheme, cfg, &traj, &mut hist, j).map_err(|e| wrap(j, e))?;
        out.push(hist.back(0)?.u.clone());
    }
    Ok(out)
}

fn wrap(step: usize, e: Error) -> Error {
    match e {
        Error::Step { .. } => e,
        e => Error::Step { step, source: Box::new(e) },
    }
}

/// Full time integration from `U^0` to `t_M = T`, with the startup ladder.
pub fn run(scheme: &Scheme, cfg: &BdfConfig, u0: Vec<f64>) -> Result<RunResult> {
    run_from(scheme, cfg, vec![u0], |_, _, _| Ok(()))
}

/// Time integration from given starting values `U^0..U^(s-1)`, `1 <= s <= q`.
/// Missing starting values come from the ladder. `observe(j, mesh_j, U^j)`
/// runs after every computed step.
pub fn run_from(
    scheme: &Scheme,
    cfg: &BdfConfig,
    starts: Vec<Vec<f64>>,
    mut observe: impl FnMut(usize, &CurvedMesh, &[f64]) -> Result<()>,
) -> Result<RunResult> {
    if scheme.base.time != 0.0 {
        return Err(Error::Config("the base mesh must be stamped at t = 0".into()));
    }
    if starts.is_empty() || starts.len() > cfg.q || starts.len() > cfg.n_steps() {
        return Err(Error::History(format!("{} starting values for BDF-{} over {} steps", starts.len(), cfg.q, cfg.n_steps())));
    }
    let mut traj = MeshTrajectory::new(scheme.base.clone());
    let mut hist = SolutionHistory::new(cfg.q);
    let n_start = starts.len();
    for (j, u) in starts.into_iter().enumerate() {
        if j > 0 {
            traj.advance(scheme.flow, cfg.time(j)).map_err(|e| wrap(j, e))?;
        }
        if u.len() != scheme.space.n_dofs {
            return Err(Error::Dimension(format!("starting value {j} has {} entries, space has {}", u.len(), scheme.space.n_dofs)));
        }
        let mass = assemble_mass_with(scheme.space, &traj.mesh(j), scheme.assembly).map_err(|e| wrap(j, e))?;
        let mass_u = mass.matvec(&u);
        hist.push(HistoryEntry { t: cfg.time(j), u, mass_u })?;
    }
    let mut diagnostics = Vec::with_capacity(cfg.n_steps());
    for j in n_start..=cfg.n_steps() {
        traj.advance(scheme.flow, cfg.time(j)).map_err(|e| wrap(j, e))?;
        // Positions older than the BDF stencil are no longer needed.
        if j > cfg.q + 1 {
            traj.positions[j - cfg.q - 2] = Vec::new();
        }
        let d = step(scheme, cfg, &traj, &mut hist, j).map_err(|e| wrap(j, e))?;
        observe(j, &traj.mesh(j), &hist.back(0)?.u).map_err(|e| wrap(j, e))?;
        diagnostics.push(d);
    }
    let last = traj.len() - 1;
    Ok(RunResult { u: hist.back(0)?.u.clone(), mesh: traj.mesh(last), diagnostics })
}
