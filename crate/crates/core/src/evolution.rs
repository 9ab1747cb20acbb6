//! Flow maps, mesh motion and mesh velocities.

use crate::error::{Error, Result};
use crate::geometry::LevelSetGeometry;
use crate::jet::{Jet, Scalar, T_VAR};
use crate::linalg::{dist, Point, ZERO};
use crate::mesh::CurvedMesh;
use crate::timestepper::bdf_weights_f64;
use rayon::prelude::*;

/// A smooth family of maps `Phi_t` of the box onto itself with `Phi_0 = id`.
pub trait FlowMap: Send + Sync {
    fn dim(&self) -> usize;

    fn name(&self) -> &'static str;

    /// `Phi_t(x)` evaluated with derivatives carried by the jets.
    fn map_jet(&self, t: Jet, x: [Jet; 3]) -> Result<[Jet; 3]>;

    fn map(&self, t: f64, x: &Point) -> Result<Point> {
        let y = self.map_jet(Jet::constant(t), x.map(Jet::constant))?;
        Ok(y.map(|c| c.v))
    }

    /// `d/dt Phi_t(x)` at fixed `x`.
    fn velocity(&self, t: f64, x: &Point) -> Result<Point> {
        let y = self.map_jet(Jet::variable(t, T_VAR), x.map(Jet::constant))?;
        Ok(y.map(|c| c.g[T_VAR]))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Stationary {
    pub dim: usize,
}

impl FlowMap for Stationary {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> &'static str {
        "stationary"
    }
    fn map_jet(&self, _t: Jet, x: [Jet; 3]) -> Result<[Jet; 3]> {
        Ok(x)
    }
}

/// `x + t c`. Does not fix the box boundary; used for velocity tests.
#[derive(Debug, Clone, Copy)]
pub struct Translation {
    pub dim: usize,
    pub c: Point,
}

impl FlowMap for Translation {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> &'static str {
        "translation"
    }
    fn map_jet(&self, t: Jet, x: [Jet; 3]) -> Result<[Jet; 3]> {
        Ok([x[0] + t * self.c[0], x[1] + t * self.c[1], x[2] + t * self.c[2]])
    }
}

fn axes<S: Scalar>(amplitude: f64, t: S) -> (S, S) {
    (S::cst(1.0) + t.sin() * S::cst(amplitude), S::cst(1.0) + t.cos() * S::cst(amplitude))
}

/// Flow carrying the initial ellipse onto the oscillating ellipse while
/// fixing the box boundary.
///
/// With `L_t = diag(alpha(t)/alpha(0), beta(t)/beta(0), 1)` and
/// `rho(x)^2 = x1^2/alpha0^2 + x2^2/beta0^2 [+ x3^2]`, the map is `L_t x` inside
/// the initial interface (`rho^2 <= 1/2`). Outside it is
/// `x + psi(x) (L_t - I) P(x)` where `P(x) = x sqrt(1/2) / rho(x)` is the point of
/// the initial interface on the same elliptic ray and
/// `psi = b(x) / b(P(x))` with `b = prod(1 - x_i^2)`. So `psi = 1` on the
/// interface and `psi = 0` on the box boundary. The two pieces agree on the
/// interface, which is a union of mesh facets, so each element sees a smooth
/// map.
#[derive(Debug, Clone, Copy)]
pub struct BlendedEllipseFlow {
    pub dim: usize,
    pub amplitude: f64,
}

impl BlendedEllipseFlow {
    pub fn new(dim: usize, amplitude: f64) -> Self {
        Self { dim, amplitude }
    }

    fn bubble<S: Scalar>(&self, x: &[S; 3]) -> S {
        let mut b = S::cst(1.0);
        for xi in x.iter().take(self.dim) {
            b = b * (S::cst(1.0) - *xi * *xi);
        }
        b
    }

    /// `rho(x)^2`, equal to 1/2 on the initial interface.
    pub fn rho2<S: Scalar>(&self, x: &[S; 3]) -> S {
        let (a0, b0) = axes(self.amplitude, 0.0);
        let mut r = x[0] * x[0] * S::cst(1.0 / (a0 * a0)) + x[1] * x[1] * S::cst(1.0 / (b0 * b0));
        if self.dim == 3 {
            r = r + x[2] * x[2];
        }
        r
    }

    pub fn eval<S: Scalar>(&self, t: S, x: &[S; 3]) -> [S; 3] {
        let (a0, b0) = axes(self.amplitude, 0.0);
        let (a, b) = axes(self.amplitude, t);
        let l0 = a * S::cst(1.0 / a0);
        let l1 = b * S::cst(1.0 / b0);
        let r2 = self.rho2(x);
        if r2.value() <= 0.5 {
            return [x[0] * l0, x[1] * l1, x[2]];
        }
        let scale = (S::cst(0.5) / r2).sqrt();
        let p = [x[0] * scale, x[1] * scale, x[2] * scale];
        let psi = self.bubble(x) / self.bubble(&p);
        let one = S::cst(1.0);
        [x[0] + psi * (l0 - one) * p[0], x[1] + psi * (l1 - one) * p[1], x[2]]
    }
}

impl FlowMap for BlendedEllipseFlow {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> &'static str {
        "fallback"
    }
    fn map_jet(&self, t: Jet, x: [Jet; 3]) -> Result<[Jet; 3]> {
        Ok(self.eval(t, &x))
    }
}

/// A globally smooth flow with the same interface motion:
/// `Phi_t(x) = x + s(x) (r1(t) x1, r2(t) x2, 0)` with `r1 = alpha(t)/alpha(0) - 1`,
/// `r2 = beta(t)/beta(0) - 1` and `s = b / (b + rho^2 - 1/2)`, `b = prod(1 - x_i^2)`.
/// Its Jacobian degenerates at the box boundary when `alpha` peaks, so it is
/// not used to move meshes; the manufactured solution uses it because it is
/// smooth everywhere.
#[derive(Debug, Clone, Copy)]
pub struct SmoothEllipseFlow {
    pub dim: usize,
    pub amplitude: f64,
}

impl SmoothEllipseFlow {
    pub fn new(dim: usize, amplitude: f64) -> Self {
        Self { dim, amplitude }
    }

    pub fn eval<S: Scalar>(&self, t: S, x: &[S; 3]) -> [S; 3] {
        let inner = BlendedEllipseFlow::new(self.dim, self.amplitude);
        let (a0, b0) = axes(self.amplitude, 0.0);
        let (a, b) = axes(self.amplitude, t);
        let bub = inner.bubble(x);
        let s = bub / (bub + inner.rho2(x) - S::cst(0.5));
        let r1 = a * S::cst(1.0 / a0) - S::cst(1.0);
        let r2 = b * S::cst(1.0 / b0) - S::cst(1.0);
        [x[0] + s * r1 * x[0], x[1] + s * r2 * x[1], x[2]]
    }
}

impl FlowMap for SmoothEllipseFlow {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> &'static str {
        "smooth-ellipse"
    }
    fn map_jet(&self, t: Jet, x: [Jet; 3]) -> Result<[Jet; 3]> {
        Ok(self.eval(t, &x))
    }
}

/// The displacement formula
/// `x + |x|^(1/3) prod(1 - x_i^2) / (0.5 prod(1 - 4 x_i^2/|x|)) ((alpha-1) x1, (beta-1) x2, 0)`
/// taken literally. Evaluation fails where `|x|` or the denominator vanishes.
#[derive(Debug, Clone, Copy)]
pub struct PrintedFlow {
    pub dim: usize,
    pub amplitude: f64,
}

/// An invariant of a valid flow that a particular evaluation breaks.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDefect {
    pub point: Point,
    pub t: f64,
    pub reason: String,
}

impl PrintedFlow {
    pub fn new(dim: usize, amplitude: f64) -> Self {
        Self { dim, amplitude }
    }

    fn factor<S: Scalar>(&self, x: &[S; 3]) -> std::result::Result<S, &'static str> {
        let mut r2 = S::cst(0.0);
        for xi in x.iter().take(self.dim) {
            r2 = r2 + *xi * *xi;
        }
        if r2.value() == 0.0 {
            return Err("|x| vanishes");
        }
        let r = r2.sqrt();
        let mut num = r.powf(1.0 / 3.0);
        let mut den = S::cst(0.5);
        for xi in x.iter().take(self.dim) {
            num = num * (S::cst(1.0) - *xi * *xi);
            den = den * (S::cst(1.0) - S::cst(4.0) * *xi * *xi / r);
        }
        if den.value().abs() < 1e-12 {
            return Err("denominator vanishes");
        }
        Ok(num / den)
    }

    /// Checks the invariants a flow must satisfy at `(t, x)`: identity at
    /// t = 0, fixed box boundary, and transport of the initial interface onto
    /// the interface at time t.
    pub fn audit(&self, geom: &LevelSetGeometry, t: f64, x: &Point) -> Vec<FlowDefect> {
        let mut out = Vec::new();
        let defect = |reason: String| FlowDefect { point: *x, t, reason };
        let y = match self.map(t, x) {
            Ok(y) => y,
            Err(e) => return vec![defect(e.to_string())],
        };
        if let Ok(y0) = self.map(0.0, x) {
            if dist(&y0, x) > 1e-12 {
                out.push(defect(format!("not the identity at t=0 (moves by {:.3e})", dist(&y0, x))));
            }
        }
        let on_box = (0..self.dim).any(|i| (x[i].abs() - 1.0).abs() <= 1e-14);
        if on_box && dist(&y, x) > 1e-12 {
            out.push(defect("moves a boundary point".into()));
        }
        if geom.phi(0.0, x).abs() <= 1e-12 && geom.phi(t, &y).abs() > 1e-9 {
            out.push(defect(format!("interface point leaves the interface (|phi| = {:.3e})", geom.phi(t, &y).abs())));
        }
        out
    }
}

impl FlowMap for PrintedFlow {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> &'static str {
        "printed"
    }
    fn map_jet(&self, t: Jet, x: [Jet; 3]) -> Result<[Jet; 3]> {
        let f = self.factor(&x).map_err(|reason| Error::SingularFlow {
            point: x.map(|c| c.v),
            t: t.v,
            reason: reason.into(),
        })?;
        let (a, b) = axes(self.amplitude, t);
        let one = Jet::constant(1.0);
        Ok([x[0] + f * (a - one) * x[0], x[1] + f * (b - one) * x[1], x[2]])
    }
}

/// Which flow drives the mesh in a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowMode {
    /// The printed displacement formula; any singular evaluation or broken
    /// invariant aborts the run.
    Strict,
    /// [`BlendedEllipseFlow`].
    Fallback,
}

impl FlowMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FlowMode::Strict => "strict",
            FlowMode::Fallback => "fallback",
        }
    }
}

/// A flow used for mesh motion, with the strict variant auditing every node.
pub enum MeshFlow {
    Plain(Box<dyn FlowMap>),
    Strict { flow: PrintedFlow, geom_amplitude: f64 },
}

impl MeshFlow {
    pub fn for_mode(mode: FlowMode, dim: usize, amplitude: f64) -> Self {
        match mode {
            FlowMode::Fallback => MeshFlow::Plain(Box::new(BlendedEllipseFlow::new(dim, amplitude))),
            FlowMode::Strict => MeshFlow::Strict { flow: PrintedFlow::new(dim, amplitude), geom_amplitude: amplitude },
        }
    }

    pub fn flow(&self) -> &dyn FlowMap {
        match self {
            MeshFlow::Plain(f) => f.as_ref(),
            MeshFlow::Strict { flow, .. } => flow,
        }
    }

    fn check(&self, t: f64, x: &Point) -> Result<()> {
        if let MeshFlow::Strict { flow, geom_amplitude } = self {
            let geom = LevelSetGeometry::oscillating_ellipse(flow.dim, *geom_amplitude);
            if let Some(d) = flow.audit(&geom, t, x).into_iter().next() {
                return Err(Error::SingularFlow { point: d.point, t: d.t, reason: d.reason });
            }
        }
        Ok(())
    }
}

impl<F: FlowMap + 'static> From<F> for MeshFlow {
    fn from(f: F) -> Self {
        MeshFlow::Plain(Box::new(f))
    }
}

/// Moves every geometric node of the initial mesh by `Phi_t`.
pub fn move_mesh(base: &CurvedMesh, flow: &MeshFlow, t: f64) -> Result<CurvedMesh> {
    let x0 = &base.topo.initial_nodes;
    let nodes = x0
        .par_iter()
        .map(|x| {
            flow.check(t, x)?;
            flow.flow().map(t, x)
        })
        .collect::<Result<Vec<Point>>>()?;
    let m = base.with_nodes(nodes, t);
    m.check_orientation()?;
    Ok(m)
}

/// Nodal values of the flow velocity on the mesh at its time: the value at a
/// node is `d/dt Phi_t` along that node's trajectory.
pub fn discrete_velocity(mesh: &CurvedMesh, flow: &dyn FlowMap) -> Result<Vec<Point>> {
    mesh.topo.initial_nodes.par_iter().map(|x| flow.velocity(mesh.time, x)).collect()
}

/// Node positions at equispaced times, all sharing one topology.
#[derive(Debug, Clone)]
pub struct MeshTrajectory {
    pub base: CurvedMesh,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Point>>,
}

impl MeshTrajectory {
    pub fn new(base: CurvedMesh) -> Self {
        let times = vec![base.time];
        let positions = vec![base.nodes.clone()];
        Self { base, times, positions }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Appends the mesh at time `t`, which must exceed the last timestamp.
    pub fn advance(&mut self, flow: &MeshFlow, t: f64) -> Result<()> {
        if t <= *self.times.last().unwrap() {
            return Err(Error::History(format!("timestamp {t} does not increase")));
        }
        let m = move_mesh(&self.base, flow, t)?;
        self.times.push(t);
        self.positions.push(m.nodes);
        Ok(())
    }

    pub fn mesh(&self, j: usize) -> CurvedMesh {
        self.base.with_nodes(self.positions[j].clone(), self.times[j])
    }

    /// `W^j = (1/tau) sum_l delta_l X^(j-l)`.
    pub fn bdf_velocity(&self, j: usize, q: usize, tau: f64) -> Result<Vec<Point>> {
        bdf_mesh_velocity(&self.positions, j, q, tau)
    }
}

/// BDF-q difference of node positions ending at index `j`.
pub fn bdf_mesh_velocity(positions: &[Vec<Point>], j: usize, q: usize, tau: f64) -> Result<Vec<Point>> {
    if j < q || j >= positions.len() {
        return Err(Error::History(format!(
            "BDF-{q} velocity at step {j} needs positions {}..={j}, have {}",
            j.saturating_sub(q),
            positions.len()
        )));
    }
    let w = bdf_weights_f64(q)?;
    let n = positions[j].len();
    let mut out = vec![ZERO; n];
    for (l, d) in w.iter().enumerate() {
        for (o, x) in out.iter_mut().zip(&positions[j - l]) {
            for c in 0..3 {
                o[c] += d * x[c] / tau;
            }
        }
    }
    Ok(out)
}
