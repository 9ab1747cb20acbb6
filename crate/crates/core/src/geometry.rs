//! Time-dependent level-set interfaces and the closest-point projection.
//!
//! Sign convention: `phi < 0` inside the inner region, `phi > 0` outside, so the
//! signed distance is negative inside and the normal `grad phi / |grad phi|`
//! points out of the inner region.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dist, dot, norm, scale, solve_small, sub, Mat, Point, ZERO};

/// An implicit interface `{x : phi(t, x) = 0}` with analytic derivatives.
pub trait LevelSet: Send + Sync {
    fn dim(&self) -> usize;
    fn phi(&self, t: f64, x: &Point) -> f64;
    fn grad(&self, t: f64, x: &Point) -> Point;
    fn hess(&self, t: f64, x: &Point) -> Mat;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

impl LevelSet for Circle {
    fn dim(&self) -> usize {
        2
    }
    fn phi(&self, _t: f64, x: &Point) -> f64 {
        let r = sub(x, &self.center);
        r[0] * r[0] + r[1] * r[1] - self.radius * self.radius
    }
    fn grad(&self, _t: f64, x: &Point) -> Point {
        let r = sub(x, &self.center);
        [2.0 * r[0], 2.0 * r[1], 0.0]
    }
    fn hess(&self, _t: f64, _x: &Point) -> Mat {
        [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 0.0]]
    }
}

/// How the two semi-axis scalings of an [`Ellipse`] depend on time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisLaw {
    Fixed { alpha: f64, beta: f64 },
    /// `alpha(t) = 1 + a sin t`, `beta(t) = 1 + a cos t`.
    Oscillating { amplitude: f64 },
}

impl AxisLaw {
    pub fn axes(&self, t: f64) -> (f64, f64) {
        match *self {
            AxisLaw::Fixed { alpha, beta } => (alpha, beta),
            AxisLaw::Oscillating { amplitude } => (1.0 + amplitude * t.sin(), 1.0 + amplitude * t.cos()),
        }
    }

    pub fn axes_rate(&self, t: f64) -> (f64, f64) {
        match *self {
            AxisLaw::Fixed { .. } => (0.0, 0.0),
            AxisLaw::Oscillating { amplitude } => (amplitude * t.cos(), -amplitude * t.sin()),
        }
    }
}

/// `phi = x1^2/alpha^2 + x2^2/beta^2 [+ x3^2] - level`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub dim: usize,
    pub law: AxisLaw,
    pub level: f64,
}

impl Ellipse {
    pub fn oscillating(dim: usize, amplitude: f64) -> Self {
        Self { dim, law: AxisLaw::Oscillating { amplitude }, level: 0.5 }
    }

    fn inv_sq(&self, t: f64) -> Point {
        let (a, b) = self.law.axes(t);
        [1.0 / (a * a), 1.0 / (b * b), if self.dim == 3 { 1.0 } else { 0.0 }]
    }
}

impl LevelSet for Ellipse {
    fn dim(&self) -> usize {
        self.dim
    }
    fn phi(&self, t: f64, x: &Point) -> f64 {
        let c = self.inv_sq(t);
        c[0] * x[0] * x[0] + c[1] * x[1] * x[1] + c[2] * x[2] * x[2] - self.level
    }
    fn grad(&self, t: f64, x: &Point) -> Point {
        let c = self.inv_sq(t);
        [2.0 * c[0] * x[0], 2.0 * c[1] * x[1], 2.0 * c[2] * x[2]]
    }
    fn hess(&self, t: f64, _x: &Point) -> Mat {
        let c = self.inv_sq(t);
        [[2.0 * c[0], 0.0, 0.0], [0.0, 2.0 * c[1], 0.0], [0.0, 0.0, 2.0 * c[2]]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPointResult {
    pub point: Point,
    /// Signed distance, negative inside the inner region.
    pub distance: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A level set bundled with the projection parameters.
pub struct LevelSetGeometry {
    pub level_set: Box<dyn LevelSet>,
    /// Half-width of the tubular neighbourhood in which projection is unique.
    pub tube_width: f64,
    pub max_iter: usize,
    /// Half-width of the axis-aligned box domain `[-b, b]^d`.
    pub box_half_width: f64,
}

impl std::fmt::Debug for LevelSetGeometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LevelSetGeometry")
            .field("dim", &self.dim())
            .field("tube_width", &self.tube_width)
            .field("max_iter", &self.max_iter)
            .finish()
    }
}

impl LevelSetGeometry {
    pub fn new(level_set: impl LevelSet + 'static, tube_width: f64) -> Self {
        Self { level_set: Box::new(level_set), tube_width, max_iter: 50, box_half_width: 1.0 }
    }

    /// The moving ellipse used by the convergence study; the tube width
    /// defaults to half the smallest semi-axis at t = 0.
    pub fn oscillating_ellipse(dim: usize, amplitude: f64) -> Self {
        let e = Ellipse::oscillating(dim, amplitude);
        let (a, b) = e.law.axes(0.0);
        let mut min_axis = a.min(b) * e.level.sqrt();
        if dim == 3 {
            min_axis = min_axis.min(e.level.sqrt());
        }
        Self::new(e, 0.5 * min_axis)
    }

    pub fn dim(&self) -> usize {
        self.level_set.dim()
    }

    pub fn phi(&self, t: f64, x: &Point) -> f64 {
        self.level_set.phi(t, x)
    }

    pub fn grad(&self, t: f64, x: &Point) -> Point {
        self.level_set.grad(t, x)
    }

    /// First-order distance estimate `|phi| / |grad phi|`.
    pub fn approximate_distance(&self, t: f64, x: &Point) -> f64 {
        let g = norm(&self.grad(t, x));
        if g == 0.0 {
            f64::INFINITY
        } else {
            self.phi(t, x).abs() / g
        }
    }

    pub fn in_tube(&self, t: f64, x: &Point) -> bool {
        self.approximate_distance(t, x) <= self.tube_width
    }

    /// Nearest point on the interface, by Newton's method on the optimality
    /// system `y - x + lambda grad phi(y) = 0`, `phi(y) = 0`.
    pub fn closest_point(&self, t: f64, x: &Point) -> ClosestPointResult {
        let dim = self.dim();
        let ls = &*self.level_set;
        let phi_x = ls.phi(t, x);
        let scale_len = 1.0 + norm(x);

        // Gradient steps onto the interface give the initial guess.
        let mut y = *x;
        for _ in 0..8 {
            let g = ls.grad(t, &y);
            let g2 = dot(&g, &g);
            if g2 == 0.0 {
                break;
            }
            let p = ls.phi(t, &y);
            y = axpy(&y, -p / g2, &g);
            if p.abs() < 1e-15 {
                break;
            }
        }
        let g = ls.grad(t, &y);
        let g2 = dot(&g, &g);
        if g2 == 0.0 {
            return ClosestPointResult { point: y, distance: f64::NAN, iterations: 0, converged: false };
        }
        let mut lambda = dot(&sub(x, &y), &g) / g2;

        let residual = |y: &Point, lambda: f64| -> ([f64; 4], f64) {
            let g = ls.grad(t, y);
            let mut r = [0.0; 4];
            for i in 0..dim {
                r[i] = y[i] - x[i] + lambda * g[i];
            }
            r[dim] = ls.phi(t, y);
            let n = r[..=dim].iter().map(|v| v * v).sum::<f64>().sqrt();
            (r, n)
        };

        let (mut r, mut rnorm) = residual(&y, lambda);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iter {
            if rnorm <= 1e-14 * scale_len {
                converged = true;
                break;
            }
            iterations += 1;
            let g = ls.grad(t, &y);
            let h = ls.hess(t, &y);
            let mut a = [[0.0; 4]; 4];
            for i in 0..dim {
                for j in 0..dim {
                    a[i][j] = lambda * h[i][j] + if i == j { 1.0 } else { 0.0 };
                }
                a[i][dim] = g[i];
                a[dim][i] = g[i];
            }
            let mut b = [0.0; 4];
            for i in 0..=dim {
                b[i] = -r[i];
            }
            let Some(step) = solve_small(dim + 1, &mut a, &mut b) else {
                break;
            };
            // backtracking on the residual norm
            let mut s = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let mut yn = y;
                for i in 0..dim {
                    yn[i] += s * step[i];
                }
                let ln = lambda + s * step[dim];
                let (rn, nn) = residual(&yn, ln);
                if nn < rnorm || nn <= 1e-14 * scale_len {
                    y = yn;
                    lambda = ln;
                    r = rn;
                    rnorm = nn;
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if !accepted {
                // stagnation at round-off level counts as convergence
                converged = rnorm <= 1e-12 * scale_len;
                break;
            }
        }
        if !converged && rnorm <= 1e-14 * scale_len {
            converged = true;
        }
        let mut d = dist(x, &y);
        if phi_x < 0.0 {
            d = -d;
        }
        ClosestPointResult { point: y, distance: d, iterations, converged }
    }

    /// Projection onto the interface, failing when Newton does not converge.
    pub fn project(&self, t: f64, x: &Point) -> Result<Point> {
        let r = self.closest_point(t, x);
        if r.converged {
            Ok(r.point)
        } else {
            Err(Error::ClosestPoint { point: *x, t, iterations: r.iterations })
        }
    }

    pub fn signed_distance(&self, t: f64, x: &Point) -> Result<f64> {
        let r = self.closest_point(t, x);
        if r.converged {
            Ok(r.distance)
        } else {
            Err(Error::ClosestPoint { point: *x, t, iterations: r.iterations })
        }
    }

    /// Unit normal pointing out of the inner region.
    pub fn surface_normal(&self, t: f64, x: &Point) -> Result<Point> {
        let g = self.grad(t, x);
        let n = norm(&g);
        if n < 1e-12 {
            return Err(Error::VanishingGradient(*x));
        }
        Ok(scale(1.0 / n, &g))
    }

    /// Sampled check that `phi` keeps one sign on the box boundary, so the
    /// interface stays strictly inside the domain.
    pub fn check_valid(&self, t: f64, samples: usize) -> Result<()> {
        let dim = self.dim();
        let b = self.box_half_width;
        let coord = |i: usize| -b + 2.0 * b * i as f64 / samples as f64;
        let mut sign = 0.0;
        let inner = if dim == 3 { samples } else { 0 };
        for axis in 0..dim {
            for side in [-b, b] {
                for i in 0..=samples {
                    for j in 0..=inner {
                        let mut p = ZERO;
                        p[axis] = side;
                        p[(axis + 1) % dim] = coord(i);
                        if dim == 3 {
                            p[(axis + 2) % 3] = coord(j);
                        }
                        let v = self.phi(t, &p);
                        if v == 0.0 || (sign != 0.0 && v.signum() != sign) {
                            return Err(Error::Config(format!(
                                "interface touches the box boundary at {p:?} (t={t})"
                            )));
                        }
                        sign = v.signum();
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::add;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn circle(r: f64) -> LevelSetGeometry {
        LevelSetGeometry::new(Circle { center: ZERO, radius: r }, 0.5 * r)
    }

    fn test_ellipse() -> LevelSetGeometry {
        LevelSetGeometry::new(
            Ellipse { dim: 2, law: AxisLaw::Fixed { alpha: 1.25, beta: 1.0 }, level: 0.5 },
            0.4,
        )
    }

    /// Dense sampling of the parametrised ellipse boundary.
    fn brute_force_ellipse(x: &Point) -> (Point, f64) {
        let (a, b) = (1.25 / 2f64.sqrt(), 1.0 / 2f64.sqrt());
        let n = 1_000_000;
        let mut best = (ZERO, f64::INFINITY);
        for i in 0..n {
            let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let p = [a * th.cos(), b * th.sin(), 0.0];
            let d = dist(&p, x);
            if d < best.1 {
                best = (p, d);
            }
        }
        best
    }

    #[test]
    fn circle_fixed_point_and_radial() {
        let g = circle(0.6);
        let x = [0.6 * 0.3f64.cos(), 0.6 * 0.3f64.sin(), 0.0];
        let r = g.closest_point(0.0, &x);
        assert!(r.converged);
        assert!(dist(&r.point, &x) < 1e-15);
        assert!(r.distance.abs() < 1e-15);

        let r = g.closest_point(0.0, &[1.2, 0.0, 0.0]);
        assert!(r.converged);
        assert!(dist(&r.point, &[0.6, 0.0, 0.0]) < 1e-14);
        assert!((r.distance - 0.6).abs() < 1e-14);
        assert!((g.signed_distance(0.0, &[0.1, 0.0, 0.0]).unwrap() + 0.5).abs() < 1e-14);
    }

    #[test]
    fn circle_center_distance() {
        // the center is equidistant from every interface point
        let g = circle(0.6);
        let d = g.signed_distance(0.0, &[1e-9, 0.0, 0.0]).unwrap();
        assert!((d + 0.6).abs() < 1e-8);
    }

    #[test]
    fn ellipse_matches_sampling_oracle() {
        let g = test_ellipse();
        let x = [1.0, 0.4, 0.0];
        let r = g.closest_point(0.0, &x);
        assert!(r.converged);
        let (p, d) = brute_force_ellipse(&x);
        assert!(dist(&r.point, &p) < 1e-5);
        assert!((r.distance - d).abs() < 1e-5);
        assert!(r.distance > 0.0 && g.phi(0.0, &x) > 0.0);
        assert!(g.phi(0.0, &r.point).abs() <= 1e-12);
    }

    #[test]
    fn ellipse_normal_matches_parametrisation() {
        let g = test_ellipse();
        let (al, be) = (1.25, 1.0);
        let th = 0.3f64;
        let s2 = 2f64.sqrt();
        let x = [al / s2 * th.cos(), be / s2 * th.sin(), 0.0];
        let n = g.surface_normal(0.0, &x).unwrap();
        let expect = [be * th.cos(), al * th.sin(), 0.0];
        let en = norm(&expect);
        for c in 0..2 {
            assert!((n[c] - expect[c] / en).abs() < 1e-14);
        }
        for i in 0..100 {
            let th = i as f64 * 0.0628;
            let x = [al / s2 * th.cos(), be / s2 * th.sin(), 0.0];
            assert!((norm(&g.surface_normal(0.0, &x).unwrap()) - 1.0).abs() < 1e-14);
        }
        let c = circle(0.5);
        let n = c.surface_normal(0.0, &[0.5, 0.0, 0.0]).unwrap();
        assert_eq!(n, [1.0, 0.0, 0.0]);
        assert!(c.surface_normal(0.0, &ZERO).is_err());
    }

    #[test]
    fn decomposition_and_idempotence_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (g, t) in [
            (LevelSetGeometry::oscillating_ellipse(2, 0.25), 0.7),
            (LevelSetGeometry::oscillating_ellipse(3, 0.25), 0.2),
            (test_ellipse(), 0.0),
        ] {
            let dim = g.dim();
            let mut count = 0;
            while count < 500 {
                let mut x = ZERO;
                for c in x.iter_mut().take(dim) {
                    *c = rng.gen_range(-1.0..1.0);
                }
                if !g.in_tube(t, &x) {
                    continue;
                }
                count += 1;
                let r = g.closest_point(t, &x);
                assert!(r.converged, "{x:?}");
                assert!(g.phi(t, &r.point).abs() <= 1e-12);
                let nu = g.surface_normal(t, &r.point).unwrap();
                let rec = add(&scale(r.distance, &nu), &r.point);
                assert!(dist(&rec, &x) < 1e-10, "decomposition {rec:?} vs {x:?}");
                // optimality: (x - y) parallel to grad phi(y)
                let diff = sub(&x, &r.point);
                let dn = norm(&diff);
                if dn > 1e-6 {
                    let cosang = dot(&diff, &nu).abs() / dn;
                    assert!((1.0 - cosang).abs() < 1e-8);
                }
                let r2 = g.closest_point(t, &r.point);
                assert!(dist(&r2.point, &r.point) < 1e-10);
            }
        }
    }

    #[test]
    fn non_convergence_reported() {
        let mut g = test_ellipse();
        g.max_iter = 0;
        let r = g.closest_point(0.0, &[0.95, 0.5, 0.0]);
        assert!(!r.converged);
        assert!(g.project(0.0, &[0.95, 0.5, 0.0]).is_err());
    }

    #[test]
    fn study_geometry_is_inside_box() {
        let g = LevelSetGeometry::oscillating_ellipse(2, 0.25);
        for i in 0..20 {
            g.check_valid(i as f64 * 0.1, 50).unwrap();
        }
    }
}
