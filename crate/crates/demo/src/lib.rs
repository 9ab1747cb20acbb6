//! Browser demo: the curved interface-fitted mesh moving with the flow, the
//! closest point on the interface, and a coarse solve of the model problem.
//!
//! The `wasm_bindgen` wrappers are thin; the work happens in plain functions
//! so it can be tested natively.

use movefem::config::{Level, StudyConfig};
use movefem::evolution::{move_mesh, MeshFlow};
use movefem::linalg::Point;
use movefem::mesh::CurvedMesh;
use movefem::study::{self, ManufacturedProblem};
use wasm_bindgen::prelude::*;

const AMPLITUDE: f64 = 0.25;

pub struct Scene {
    problem: ManufacturedProblem,
    base: CurvedMesh,
    flow: MeshFlow,
    cfg: StudyConfig,
}

impl Scene {
    pub fn new(h: f64, order: usize) -> movefem::Result<Self> {
        let cfg = StudyConfig {
            order,
            levels: vec![Level { h, tau: 0.125 }],
            ..Default::default()
        };
        cfg.validate()?;
        let problem = ManufacturedProblem::new(2, AMPLITUDE);
        let base = study::level_mesh(&cfg, &problem, 0)?;
        let flow = MeshFlow::for_mode(cfg.flow_mode, 2, AMPLITUDE);
        Ok(Self { problem, base, flow, cfg })
    }

    pub fn regions(&self) -> Vec<u8> {
        (0..self.base.n_elements()).map(|e| self.base.region(e)).collect()
    }

    /// Closed outline of every element at time `t`, `3 * samples + 1` points
    /// each, flattened as `x, y` pairs.
    pub fn outlines(&self, t: f64, samples: usize) -> movefem::Result<Vec<f64>> {
        let mesh = move_mesh(&self.base, &self.flow, t)?;
        let corners = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let samples = samples.max(1);
        let mut out = Vec::with_capacity(mesh.n_elements() * (3 * samples + 1) * 2);
        for e in 0..mesh.n_elements() {
            for i in 0..3 {
                let (a, b) = (corners[i], corners[(i + 1) % 3]);
                for s in 0..samples {
                    let w = s as f64 / samples as f64;
                    let p = mesh.map(e, &[a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1]), 0.0]);
                    out.extend_from_slice(&p[..2]);
                }
            }
            let p = mesh.map(e, &corners[0]);
            out.extend_from_slice(&p[..2]);
        }
        Ok(out)
    }

    /// Exact interface at time `t` as `n` points.
    pub fn interface(&self, t: f64, n: usize) -> Vec<f64> {
        let (a, b) = movefem::geometry::AxisLaw::Oscillating { amplitude: AMPLITUDE }.axes(t);
        let r = 0.5f64.sqrt();
        (0..n)
            .flat_map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [r * a * th.cos(), r * b * th.sin()]
            })
            .collect()
    }

    /// `[px, py, distance, converged]` for the closest interface point to `(x, y)`.
    pub fn closest_point(&self, t: f64, x: f64, y: f64) -> Vec<f64> {
        let c = self.problem.geom.closest_point(t, &[x, y, 0.0]);
        vec![c.point[0], c.point[1], c.distance, if c.converged { 1.0 } else { 0.0 }]
    }

    /// Runs the scheme to `t_end` with step `tau`. Returns one `x, y, u_h, u`
    /// quadruple per element vertex (three per element) at the final time,
    /// followed by the L2 and H1 errors.
    pub fn solve(&self, t_end: f64, tau: f64) -> movefem::Result<Vec<f64>> {
        let mut cfg = self.cfg.clone();
        cfg.final_time = t_end;
        cfg.levels[0].tau = tau;
        let r = study::run_level_with(&cfg, &self.problem, &self.problem, 0, None)?;
        let mesh = &r.run.mesh;
        let mut out = Vec::with_capacity(mesh.n_elements() * 12 + 2);
        for e in 0..mesh.n_elements() {
            for &n in &mesh.element_node_ids(e)[..3] {
                let p: Point = mesh.nodes[n];
                out.extend_from_slice(&[p[0], p[1], r.run.u[n], self.problem.u(mesh.time, &p)]);
            }
        }
        out.push(r.errors.l2);
        out.push(r.errors.h1_semi);
        Ok(out)
    }
}

fn js_err(e: movefem::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo(Scene);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(h: f64, order: usize) -> Result<Demo, JsError> {
        Scene::new(h, order).map(Demo).map_err(js_err)
    }

    pub fn n_elements(&self) -> usize {
        self.0.base.n_elements()
    }

    pub fn regions(&self) -> Vec<u8> {
        self.0.regions()
    }

    pub fn outlines(&self, t: f64, samples: usize) -> Result<Vec<f64>, JsError> {
        self.0.outlines(t, samples).map_err(js_err)
    }

    pub fn interface(&self, t: f64, n: usize) -> Vec<f64> {
        self.0.interface(t, n)
    }

    pub fn closest_point(&self, t: f64, x: f64, y: f64) -> Vec<f64> {
        self.0.closest_point(t, x, y)
    }

    pub fn solve(&self, t_end: f64, tau: f64) -> Result<Vec<f64>, JsError> {
        self.0.solve(t_end, tau).map_err(js_err)
    }
}
