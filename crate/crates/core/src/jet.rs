//! Second-order forward-mode differentiation over the variables `(x1, x2, x3, t)`.
//!
//! A [`Jet`] carries a value together with its gradient and Hessian, which is
//! enough to evaluate the manufactured solution, its gradient, its time
//! derivative and its Laplacian from one closed-form expression.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub const NVARS: usize = 4;
pub const T_VAR: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; NVARS],
    pub h: [[f64; NVARS]; NVARS],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Self { v, g: [0.0; NVARS], h: [[0.0; NVARS]; NVARS] }
    }

    pub fn variable(v: f64, index: usize) -> Self {
        let mut j = Self::constant(v);
        j.g[index] = 1.0;
        j
    }

    /// Apply a scalar function given its value and first two derivatives.
    fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        let mut out = Self::constant(f);
        for i in 0..NVARS {
            out.g[i] = df * self.g[i];
            for k in 0..NVARS {
                out.h[i][k] = df * self.h[i][k] + d2f * self.g[i] * self.g[k];
            }
        }
        out
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.v))
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn powf(self, p: f64) -> Self {
        let v = self.v;
        self.chain(v.powf(p), p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0))
    }

    pub fn scale(self, s: f64) -> Self {
        let mut out = self;
        out.v *= s;
        for i in 0..NVARS {
            out.g[i] *= s;
            for k in 0..NVARS {
                out.h[i][k] *= s;
            }
        }
        out
    }

    /// Sum of the spatial second derivatives over the first `dim` variables.
    pub fn laplacian(&self, dim: usize) -> f64 {
        (0..dim).map(|i| self.h[i][i]).sum()
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut out = self;
        out.v += o.v;
        for i in 0..NVARS {
            out.g[i] += o.g[i];
            for k in 0..NVARS {
                out.h[i][k] += o.h[i][k];
            }
        }
        out
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut out = Jet::constant(self.v * o.v);
        for i in 0..NVARS {
            out.g[i] = self.g[i] * o.v + self.v * o.g[i];
            for k in 0..NVARS {
                out.h[i][k] = self.h[i][k] * o.v
                    + self.v * o.h[i][k]
                    + self.g[i] * o.g[k]
                    + self.g[k] * o.g[i];
            }
        }
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, o: f64) -> Jet {
        let mut out = self;
        out.v += o;
        out
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, o: f64) -> Jet {
        self.scale(o)
    }
}

/// Arithmetic shared by `f64` and [`Jet`], so closed-form expressions can be
/// written once and evaluated either plainly or with derivatives.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, p: f64) -> Self;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
}

impl Scalar for Jet {
    fn cst(v: f64) -> Self {
        Jet::constant(v)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        Jet::sin(self)
    }
    fn cos(self) -> Self {
        Jet::cos(self)
    }
    fn sqrt(self) -> Self {
        Jet::sqrt(self)
    }
    fn powf(self, p: f64) -> Self {
        Jet::powf(self, p)
    }
}
