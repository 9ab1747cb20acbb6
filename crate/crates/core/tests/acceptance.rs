//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Stretch items are reported but do not fail the run. Built without the
//! libtest harness so the lines always reach the output.

use movefem::config::StudyConfig;
use movefem::evolution::{discrete_velocity, move_mesh, BlendedEllipseFlow, MeshFlow, Stationary};
use movefem::fem::{
    assemble_lambda, assemble_mass, assemble_operator, build_space, fe_errors, interpolate, ConstantCoefficients,
    DataMode, Evaluation,
};
use movefem::geometry::LevelSetGeometry;
use movefem::linalg::{dist, Point};
use movefem::linsolve::{solve, Method, SolverConfig};
use movefem::mesh::{build_isoparametric, generate_fitted_mesh, structured_box_mesh, CurvedMesh, LinearMesh};
use movefem::ref_elem::quadrature_for;
use movefem::study::{eoc, interpolation_errors, run_study, ConvergenceReport};
use movefem::timestepper::{bdf_weights, bdf_weights_f64, run, run_from, BdfConfig, Scheme, MAX_BDF_ORDER};
use num_rational::Ratio;
use std::f64::consts::PI;
use std::time::Instant;

struct Outcome {
    id: &'static str,
    pass: bool,
    gating: bool,
    detail: String,
}

fn report(out: &mut Vec<Outcome>, id: &'static str, gating: bool, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let note = if gating { "" } else { " (stretch, not gating)" };
    println!("{tag} {id}{note}: {detail}");
    out.push(Outcome { id, pass, gating, detail });
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo && v <= hi
}

fn study(k: usize, data: DataMode) -> (ConvergenceReport, f64) {
    let cfg = StudyConfig { order: k, data_mode: data, parallel_levels: true, ..Default::default() };
    let start = Instant::now();
    let r = run_study(&cfg, |_| Ok(())).expect("study runs");
    (r, start.elapsed().as_secs_f64())
}

fn last(v: &[Option<f64>]) -> f64 {
    v.last().copied().flatten().expect("eoc present")
}

/// Reference table: (h, L2 error, H1 error) for the three finest rows, per order.
const TABLE: [[(f64, f64, f64); 3]; 3] = [
    [(4.37747e-1, 2.03904e-1, 2.34493), (2.40008e-1, 9.43824e-2, 1.45816), (1.34513e-1, 2.92209e-2, 7.82215e-1)],
    [(4.37747e-1, 5.19037e-2, 8.64156e-1), (2.40008e-1, 6.67721e-3, 2.89035e-1), (1.34513e-1, 9.32995e-4, 8.42882e-2)],
    [(4.37747e-1, 1.50610e-2, 1.99583e-1), (2.40008e-1, 6.00060e-4, 4.39335e-2), (1.34513e-1, 5.81492e-5, 2.73137e-2)],
];

/// Worst ratio (max of r and 1/r) between our rows and table rows with h within 20%.
fn magnitude_ratio(r: &ConvergenceReport, k: usize) -> (f64, usize) {
    let mut worst: f64 = 1.0;
    let mut compared = 0;
    for row in &r.rows {
        for &(h, l2, h1) in &TABLE[k - 1] {
            if (row.h / h - 1.0).abs() <= 0.2 {
                for (ours, theirs) in [(row.errors.l2, l2), (row.errors.h1_semi, h1)] {
                    let q = ours / theirs;
                    worst = worst.max(q.max(1.0 / q));
                }
                compared += 1;
            }
        }
    }
    (worst, compared)
}

fn ellipse_mesh(h: f64, k: usize) -> (LevelSetGeometry, CurvedMesh) {
    let g = LevelSetGeometry::oscillating_ellipse(2, 0.25);
    let m = build_isoparametric(generate_fitted_mesh(&g, h).unwrap(), &g, k).unwrap();
    (g, m)
}

fn monomial_integral(dim: usize, e: [u32; 3]) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let s: u32 = e.iter().sum();
    e.iter().map(|&a| fact(a)).product::<f64>() / fact(s + dim as u32)
}

fn geometry_suite() -> (bool, String) {
    let mut facet: f64 = 0.0;
    let mut node0: f64 = 0.0;
    let mut node1: f64 = 0.0;
    let mut measure: f64 = 0.0;
    let flow = MeshFlow::from(BlendedEllipseFlow::new(2, 0.25));
    for k in 1..=3 {
        let (g, c) = ellipse_mesh(0.3, k);
        let lin = &c.topo.linear;
        for f in lin.facets.iter().filter(|f| f.elements[1].is_some()) {
            for s in 0..10 {
                let w = (s as f64 + 0.5) / 10.0;
                let weights = [(f.vertices[0], w), (f.vertices[1], 1.0 - w)];
                let a = c.facet_point(f.elements[0].unwrap(), &weights);
                let b = c.facet_point(f.elements[1].unwrap(), &weights);
                facet = facet.max(dist(&a, &b));
            }
        }
        let moved = move_mesh(&c, &flow, 1.0).unwrap();
        for (i, on) in c.topo.interface_nodes.iter().enumerate() {
            if *on {
                node0 = node0.max(g.phi(0.0, &c.nodes[i]).abs());
                node1 = node1.max(g.phi(1.0, &moved.nodes[i]).abs());
            }
        }
        measure = measure.max((c.total_measure().unwrap() - 4.0).abs());
        measure = measure.max((moved.total_measure().unwrap() - 4.0).abs());
    }
    let pass = facet <= 1e-12 && node0 <= 1e-10 && node1 <= 1e-9 && measure <= 1e-10;
    (pass, format!("facet mismatch {facet:.1e}, |phi| at t=0 {node0:.1e}, at t=1 {node1:.1e}, measure defect {measure:.1e}"))
}

fn kernel_oracles() -> (bool, String) {
    // Quadrature on monomials of every admissible degree.
    let mut quad: f64 = 0.0;
    for dim in 1..=3usize {
        for deg in 1..=10u32 {
            let q = quadrature_for(dim, deg as usize).unwrap();
            for a in 0..=deg {
                for b in 0..=deg - a {
                    for c in 0..=deg - a - b {
                        if (dim < 2 && b > 0) || (dim < 3 && c > 0) {
                            continue;
                        }
                        let e = [a, b, c];
                        let num = q.integrate(|p| p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32));
                        let exact = monomial_integral(dim, e);
                        quad = quad.max(((num - exact) / exact).abs());
                    }
                }
            }
        }
    }

    // P1 element matrices on the unit triangle.
    let g = LevelSetGeometry::oscillating_ellipse(2, 0.25);
    let lin = LinearMesh::new(2, vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![vec![0, 1, 2]], vec![2]).unwrap();
    let m = build_isoparametric(lin, &g, 1).unwrap();
    let s = build_space(&m, 1).unwrap();
    let mass = assemble_mass(&s, &m).unwrap();
    let stiff = assemble_operator(&s, &m, &ConstantCoefficients::default(), None, Evaluation::Discrete).unwrap();
    let ids = m.element_node_ids(0).to_vec();
    let want_k = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
    let mut p1: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let want_m = if i == j { 1.0 / 12.0 } else { 1.0 / 24.0 };
            p1 = p1.max((mass.get(ids[i], ids[j]) - want_m).abs());
            p1 = p1.max((stiff.get(ids[i], ids[j]) - want_k[i][j]).abs());
        }
    }

    // BDF weights in exact arithmetic.
    let r = |n: i64, d: i64| Ratio::new(n, d);
    let bdf = bdf_weights(1).unwrap() == vec![r(1, 1), r(-1, 1)]
        && bdf_weights(2).unwrap() == vec![r(3, 2), r(-2, 1), r(1, 2)]
        && bdf_weights(3).unwrap() == vec![r(11, 6), r(-3, 1), r(3, 2), r(-1, 3)]
        && bdf_weights(4).unwrap() == vec![r(25, 12), r(-4, 1), r(3, 1), r(-4, 3), r(1, 4)];

    // 2x2 system with solution (1/11, 7/11), every solver.
    let a = movefem::fem::SparseMatrix::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
    let mut lin2: f64 = 0.0;
    for method in [Method::DirectLu, Method::Cg, Method::BiCgStab] {
        let x = solve(&a, &[1.0, 2.0], &SolverConfig::with_method(method)).unwrap();
        lin2 = lin2.max((x[0] - 1.0 / 11.0).abs()).max((x[1] - 7.0 / 11.0).abs());
    }
    let pass = quad <= 1e-12 && p1 <= 1e-14 && bdf && lin2 <= 1e-12;
    (pass, format!("quadrature {quad:.1e}, P1 matrices {p1:.1e}, BDF weights exact {bdf}, 2x2 solve {lin2:.1e}"))
}

fn transport_identity() -> (bool, String) {
    let (_, mesh) = ellipse_mesh(0.5, 2);
    let s = build_space(&mesh, 2).unwrap();
    let flow = MeshFlow::from(BlendedEllipseFlow::new(2, 0.25));
    let c: Vec<f64> = (0..s.n_dofs).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.4).collect();
    let delta = 1e-4;
    let mut worst: f64 = 0.0;
    for t in [0.3, 1.0, 2.2] {
        let at = |t: f64| move_mesh(&mesh, &flow, t).unwrap();
        let mp = assemble_mass(&s, &at(t + delta)).unwrap();
        let mm = assemble_mass(&s, &at(t - delta)).unwrap();
        let fd = (mp.bilinear(&c, &c) - mm.bilinear(&c, &c)) / (2.0 * delta);
        let here = at(t);
        let w = discrete_velocity(&here, flow.flow()).unwrap();
        let lam = assemble_lambda(&s, &here, &w).unwrap();
        worst = worst.max((fd - lam.bilinear(&c, &c)).abs());
    }
    (worst <= 1e-6, format!("max |d/dt c'Mc - c'Lc| = {worst:.2e} at t = 0.3, 1.0, 2.2"))
}

fn ode_and_heat() -> (bool, String) {
    // Mass-only reduction against the scalar recurrence.
    let (_, mesh) = ellipse_mesh(0.4, 2);
    let space = build_space(&mesh, 2).unwrap();
    let still = MeshFlow::from(Stationary { dim: 2 });
    let reaction = ConstantCoefficients { a: [0.0, 0.0], c: 1.0, ..Default::default() };
    let u0: Vec<f64> = mesh.nodes.iter().map(|p| 1.0 + p[0] - 0.5 * p[1] * p[1]).collect();
    let mut reduction: f64 = 0.0;
    for q in 1..=MAX_BDF_ORDER {
        let cfg = BdfConfig::new(q, 0.1, 0.8).unwrap();
        let mut scheme = Scheme::new(&space, &mesh, &still, &reaction);
        scheme.dirichlet = false;
        let res = run(&scheme, &cfg, u0.clone()).unwrap();
        let mut y = vec![1.0];
        for j in 1..=cfg.n_steps() {
            let m = j.min(q);
            let d = bdf_weights_f64(m).unwrap();
            let s: f64 = (1..=m).map(|l| d[l] * y[j - l]).sum();
            y.push(-s / cfg.tau / (d[0] / cfg.tau + 1.0));
        }
        let yt = *y.last().unwrap();
        reduction = reduction.max(res.u.iter().zip(&u0).map(|(a, b)| (a - yt * b).abs()).fold(0.0, f64::max));
    }

    // Heat equation on the unit square with exact starting values.
    let g = LevelSetGeometry::oscillating_ellipse(2, 0.25);
    let heat = ConstantCoefficients::default();
    let exact = |p: &Point, t: f64| {
        let d = (-2.0 * PI * PI * t).exp();
        let (sx, sy) = ((PI * p[0]).sin(), (PI * p[1]).sin());
        (sx * sy * d, [PI * (PI * p[0]).cos() * sy * d, PI * sx * (PI * p[1]).cos() * d, 0.0])
    };
    let mut eocs = Vec::new();
    let mut heat_ok = true;
    for (k, q, levels) in [(1usize, 2usize, [8usize, 16, 32]), (2, 3, [4, 8, 16])] {
        let errs: Vec<f64> = levels
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let m = build_isoparametric(structured_box_mesh(2, n, 0.0, 1.0, 2).unwrap(), &g, k).unwrap();
                let sp = build_space(&m, k).unwrap();
                let cfg = BdfConfig::new(q, 0.02 / 2f64.powi(i as i32), 0.1).unwrap();
                let scheme = Scheme::new(&sp, &m, &still, &heat);
                let starts = (0..q).map(|j| interpolate(&m, |p| exact(p, cfg.time(j)).0)).collect();
                let res = run_from(&scheme, &cfg, starts, |_, _, _| Ok(())).unwrap();
                fe_errors(&sp, &res.mesh, &res.u, |_, qp| Ok(exact(&qp.x, 0.1)), None).unwrap().0
            })
            .collect();
        let e = (errs[1] / errs[2]).log2();
        heat_ok &= (e - (k + 1).min(q) as f64).abs() <= 0.3;
        eocs.push(format!("k={k} q={q} eoc {e:.3}"));
    }
    (reduction <= 1e-12 && heat_ok, format!("reduction defect {reduction:.1e}; heat {}", eocs.join(", ")))
}

fn interpolation_benchmark() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for k in 1..=3 {
        let cfg = StudyConfig { order: k, ..Default::default() };
        let (mut hs, mut es) = (Vec::new(), Vec::new());
        for l in 0..cfg.levels.len() {
            let (h, e) = interpolation_errors(&cfg, l, cfg.final_time).unwrap();
            hs.push(h);
            es.push(e.l2);
        }
        let last = *eoc(&es, &hs).unwrap().last().unwrap();
        ok &= (last - (k + 1) as f64).abs() <= 0.3;
        parts.push(format!("k={k} eoc {last:.3}"));
    }
    (ok, parts.join(", "))
}

fn main() {
    let mut out = Vec::new();

    let (r1, t1) = study(1, DataMode::Interpolated);
    let (l2, h1) = (last(&r1.eoc_l2()), last(&r1.eoc_h1()));
    report(
        &mut out,
        "1 EOC k=1 q=2",
        true,
        within(l2, 1.6, 2.4) && within(h1, 0.7, 1.3) && t1 < 120.0,
        format!("L2 eoc {l2:.3} in [1.6, 2.4], H1 eoc {h1:.3} in [0.7, 1.3], {t1:.1} s"),
    );

    let (r2, t2) = study(2, DataMode::Interpolated);
    let (l2, h1) = (last(&r2.eoc_l2()), last(&r2.eoc_h1()));
    report(
        &mut out,
        "2 EOC k=2 q=3",
        true,
        within(l2, 2.7, 3.7) && within(h1, 1.6, 2.4) && t2 < 600.0,
        format!("L2 eoc {l2:.3} in [2.7, 3.7], H1 eoc {h1:.3} in [1.6, 2.4], {t2:.1} s"),
    );

    // Middle pairs: all but the first and the last.
    let middle = |r: &ConvergenceReport| -> Vec<f64> {
        let e: Vec<f64> = r.eoc_l2().into_iter().flatten().collect();
        e[1..e.len() - 1].to_vec()
    };
    let (r3, t3) = study(3, DataMode::Interpolated);
    let m3 = middle(&r3);
    report(
        &mut out,
        "3 EOC k=3 q=4",
        false,
        m3.iter().all(|&v| within(v, 3.4, 5.5)),
        format!("middle-pair L2 eocs {m3:.3?} in [3.4, 5.5], all pairs {:.3?}, {t3:.1} s", r3.eoc_l2()),
    );
    let (r3l, t3l) = study(3, DataMode::Lifted);
    let m3l = middle(&r3l);
    report(
        &mut out,
        "3 EOC k=3 q=4, lifted data",
        false,
        m3l.iter().all(|&v| within(v, 3.4, 5.5)),
        format!("middle-pair L2 eocs {m3l:.3?} in [3.4, 5.5], all pairs {:.3?}, {t3l:.1} s", r3l.eoc_l2()),
    );

    let (w1, n1) = magnitude_ratio(&r1, 1);
    let (w2, n2) = magnitude_ratio(&r2, 2);
    report(
        &mut out,
        "4 magnitudes k=1,2",
        true,
        w1 <= 10.0 && w2 <= 10.0 && n1 >= 3 && n2 >= 3,
        format!("worst factor {w1:.2} (k=1, {n1} rows), {w2:.2} (k=2, {n2} rows), limit 10"),
    );
    let (w3, n3) = magnitude_ratio(&r3, 3);
    report(&mut out, "4 magnitudes k=3", false, w3 <= 10.0, format!("worst factor {w3:.2} over {n3} rows, limit 10"));
    let (w3l, n3l) = magnitude_ratio(&r3l, 3);
    report(
        &mut out,
        "4 magnitudes k=3, lifted data",
        false,
        w3l <= 10.0,
        format!("worst factor {w3l:.2} over {n3l} rows, limit 10"),
    );

    let (p, d) = geometry_suite();
    report(&mut out, "5 geometry", true, p, d);
    let (p, d) = kernel_oracles();
    report(&mut out, "6 kernel oracles", true, p, d);
    let (p, d) = transport_identity();
    report(&mut out, "7 transport identity", true, p, d);
    let (p, d) = ode_and_heat();
    report(&mut out, "8 ODE reduction and heat oracle", true, p, d);
    let (p, d) = interpolation_benchmark();
    report(&mut out, "9 interpolation benchmark", true, p, d);

    println!("\n{}\n{}\n{}", r1.to_text(), r2.to_text(), r3.to_text());

    let failed: Vec<String> = out.iter().filter(|o| o.gating && !o.pass).map(|o| format!("{}: {}", o.id, o.detail)).collect();
    if !failed.is_empty() {
        eprintln!("gating criteria failed:\n{}", failed.join("\n"));
        std::process::exit(1);
    }
    let gating = out.iter().filter(|o| o.gating).count();
    println!("acceptance: {gating} gating criteria passed");
}
