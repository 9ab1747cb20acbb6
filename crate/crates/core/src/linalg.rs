//! Small fixed-size vector and matrix helpers.
//!
//! Points are stored as `[f64; 3]` regardless of the spatial dimension; in 2D
//! the third component is kept at zero. Matrices are row-major `[[f64; 3]; 3]`
//! and the routines that depend on the dimension take it explicitly.

pub type Point = [f64; 3];
pub type Mat = [[f64; 3]; 3];

pub const ZERO: Point = [0.0; 3];

#[inline]
pub fn add(a: &Point, b: &Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(s: f64, a: &Point) -> Point {
    [s * a[0], s * a[1], s * a[2]]
}

/// `a + s * b`
#[inline]
pub fn axpy(a: &Point, s: f64, b: &Point) -> Point {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

#[inline]
pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

pub fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn mat_zero() -> Mat {
    [[0.0; 3]; 3]
}

pub fn mat_vec(m: &Mat, v: &Point) -> Point {
    [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
}

pub fn mat_t_vec(m: &Mat, v: &Point) -> Point {
    let mut out = ZERO;
    for i in 0..3 {
        for j in 0..3 {
            out[j] += m[i][j] * v[i];
        }
    }
    out
}

pub fn det(dim: usize, m: &Mat) -> f64 {
    match dim {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
    }
}

/// Inverse of the leading `dim x dim` block. Returns `None` when singular.
pub fn inverse(dim: usize, m: &Mat) -> Option<Mat> {
    let d = det(dim, m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut inv = mat_zero();
    match dim {
        1 => inv[0][0] = 1.0 / d,
        2 => {
            inv[0][0] = m[1][1] / d;
            inv[0][1] = -m[0][1] / d;
            inv[1][0] = -m[1][0] / d;
            inv[1][1] = m[0][0] / d;
        }
        _ => {
            inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / d;
            inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / d;
            inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / d;
            inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / d;
            inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / d;
            inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / d;
            inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / d;
            inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / d;
            inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / d;
        }
    }
    Some(inv)
}

/// Solve the `n x n` system (n <= 4) by Gaussian elimination with partial pivoting.
pub fn solve_small(n: usize, a: &mut [[f64; 4]; 4], b: &mut [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Some(x)
}

/// Measure of the straight simplex spanned by `verts` (d+1 points).
pub fn simplex_measure(dim: usize, verts: &[Point]) -> f64 {
    let mut m = mat_zero();
    for j in 0..dim {
        let e = sub(&verts[j + 1], &verts[0]);
        for i in 0..dim {
            m[i][j] = e[i];
        }
    }
    let fact = if dim == 2 { 2.0 } else { 6.0 };
    det(dim, &m) / fact
}
