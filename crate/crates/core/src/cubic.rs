//! Monic cubics, their roots, and the Routh–Hurwitz test.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::model::Matrix3;

/// Coefficients of the monic cubic `x³ + a1·x² + a2·x + a3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicCoefficients {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl CubicCoefficients {
    pub const fn new(a1: f64, a2: f64, a3: f64) -> Self {
        CubicCoefficients { a1, a2, a3 }
    }

    pub fn is_finite(&self) -> bool {
        self.a1.is_finite() && self.a2.is_finite() && self.a3.is_finite()
    }

    /// Horner evaluation at a complex point.
    pub fn eval(&self, x: Complex64) -> Complex64 {
        ((x + self.a1) * x + self.a2) * x + self.a3
    }

    fn eval_deriv(&self, x: Complex64) -> Complex64 {
        (x * 3.0 + 2.0 * self.a1) * x + self.a2
    }

    /// Characteristic polynomial `det(xI - m)` of a 3×3 matrix.
    pub fn characteristic(m: &Matrix3) -> Self {
        let trace = m[0][0] + m[1][1] + m[2][2];
        let minors = (m[0][0] * m[1][1] - m[0][1] * m[1][0])
            + (m[0][0] * m[2][2] - m[0][2] * m[2][0])
            + (m[1][1] * m[2][2] - m[1][2] * m[2][1]);
        CubicCoefficients::new(-trace, minors, -determinant(m))
    }
}

pub fn determinant(m: &Matrix3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Routh–Hurwitz for a monic cubic: every root has negative real part iff
/// `a1 > 0`, `a2 > 0`, `a3 > 0` and `a1·a2 > a3`.
pub fn routh_hurwitz_stable(coeffs: &CubicCoefficients) -> bool {
    let CubicCoefficients { a1, a2, a3 } = *coeffs;
    a1 > 0.0 && a2 > 0.0 && a3 > 0.0 && a1 * a2 > a3
}

/// Total order used for reported roots: real part, then imaginary part.
pub fn sort_roots(roots: &mut [Complex64]) {
    // Fold -0.0 into 0.0 so signed zeros do not split ties.
    for z in roots.iter_mut() {
        z.re += 0.0;
        z.im += 0.0;
    }
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Roots of `x² + b·x + c`, computed without cancellation.
pub fn quadratic_roots(b: f64, c: f64) -> [Complex64; 2] {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        // q has the sign of -b so that -b/2 ∓ sq/2 never cancels.
        let q = -0.5 * (b + b.signum() * sq);
        if q == 0.0 {
            // b == 0 and c == 0
            return [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
        }
        [Complex64::new(q, 0.0), Complex64::new(c / q, 0.0)]
    } else {
        let re = -0.5 * b;
        let im = 0.5 * (-disc).sqrt();
        [Complex64::new(re, -im), Complex64::new(re, im)]
    }
}

/// The three roots of `x³ + a1·x² + a2·x + a3`, sorted by real part then
/// imaginary part.
///
/// A real root is found in closed form, refined by Newton iteration and
/// deflated; the remaining quadratic is solved directly and each root gets a
/// final Newton polish against the original cubic.
pub fn cubic_roots(coeffs: &CubicCoefficients) -> [Complex64; 3] {
    let CubicCoefficients { a1, a2, a3 } = *coeffs;

    let real_root = if a3 == 0.0 { 0.0 } else { polish_real(coeffs, real_root_estimate(a1, a2, a3)) };

    // x³ + a1x² + a2x + a3 = (x - r)(x² + b x + c)
    let b = a1 + real_root;
    let c = if real_root.abs() > 1.0 && a3 != 0.0 { -a3 / real_root } else { a2 + real_root * b };
    let [q1, q2] = quadratic_roots(b, c);

    let mut roots = [Complex64::new(real_root, 0.0), polish(coeffs, q1), polish(coeffs, q2)];
    // A conjugate pair stays a conjugate pair.
    if roots[1].im != 0.0 && (roots[1].im + roots[2].im).abs() <= 1e-14 * roots[1].norm() {
        let mean_re = 0.5 * (roots[1].re + roots[2].re);
        let im = 0.5 * (roots[1].im.abs() + roots[2].im.abs());
        roots[1] = Complex64::new(mean_re, -im);
        roots[2] = Complex64::new(mean_re, im);
    }
    sort_roots(&mut roots);
    roots
}

/// Largest-magnitude real root from the trigonometric/Cardano formulas.
fn real_root_estimate(a1: f64, a2: f64, a3: f64) -> f64 {
    // x = y - a1/3 gives y³ + p y + q = 0
    let shift = a1 / 3.0;
    let p = a2 - a1 * a1 / 3.0;
    let q = 2.0 * a1 * a1 * a1 / 27.0 - a1 * a2 / 3.0 + a3;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if disc > 0.0 {
        let s = disc.sqrt();
        let u = (-q / 2.0 + s).cbrt();
        let v = (-q / 2.0 - s).cbrt();
        u + v - shift
    } else if p == 0.0 {
        -shift
    } else {
        // Three real roots; take the one of largest magnitude.
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|j| m * (theta - 2.0 * std::f64::consts::PI * j as f64 / 3.0).cos() - shift)
            .max_by(|x, y| x.abs().total_cmp(&y.abs()))
            .unwrap_or(-shift)
    }
}

fn polish_real(coeffs: &CubicCoefficients, mut x: f64) -> f64 {
    for _ in 0..8 {
        let f = ((x + coeffs.a1) * x + coeffs.a2) * x + coeffs.a3;
        let df = (3.0 * x + 2.0 * coeffs.a1) * x + coeffs.a2;
        if f == 0.0 || df == 0.0 {
            break;
        }
        let next = x - f / df;
        if !next.is_finite() {
            break;
        }
        let settled = (next - x).abs() <= 4.0 * f64::EPSILON * x.abs();
        // Accept only steps that do not increase the residual.
        let f_next = ((next + coeffs.a1) * next + coeffs.a2) * next + coeffs.a3;
        if f_next.abs() > f.abs() {
            break;
        }
        x = next;
        if settled {
            break;
        }
    }
    x
}

fn polish(coeffs: &CubicCoefficients, mut z: Complex64) -> Complex64 {
    for _ in 0..4 {
        let f = coeffs.eval(z);
        let df = coeffs.eval_deriv(z);
        if f.norm() == 0.0 || df.norm() == 0.0 {
            break;
        }
        let next = z - f / df;
        if !(next.re.is_finite() && next.im.is_finite()) || coeffs.eval(next).norm() >= f.norm() {
            break;
        }
        z = next;
    }
    z
}

/// Eigenvalues of a 3×3 matrix via its characteristic polynomial.
///
/// When the first column is `(m00, 0, 0)` the polynomial factors as
/// `(x - m00)·det(xI - B)` with `B` the lower-right 2×2 block, and the factors
/// are solved separately so `m00` is reported exactly.
pub fn eigenvalues(m: &Matrix3) -> [Complex64; 3] {
    let mut roots = if m[1][0] == 0.0 && m[2][0] == 0.0 {
        let trace = m[1][1] + m[2][2];
        let det = m[1][1] * m[2][2] - m[1][2] * m[2][1];
        let [r1, r2] = quadratic_roots(-trace, det);
        [Complex64::new(m[0][0], 0.0), r1, r2]
    } else {
        cubic_roots(&CubicCoefficients::characteristic(m))
    };
    sort_roots(&mut roots);
    roots
}
