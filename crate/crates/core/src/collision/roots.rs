//! Scalar root finding: polynomial roots and bracketed refinement.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Tolerance (s) used when refining brackets.
pub const BRENT_TOL: f64 = 1e-10;

/// All complex roots of `Σ coeffs[i]·t^i` (ascending order).
///
/// Leading coefficients below `1e-12·max|c|` are dropped before the companion
/// matrix is formed. Exact zero roots are split off first; the remaining roots
/// are polished with a few Newton steps on the original coefficients.
pub fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if max == 0.0 || coeffs.iter().any(|c| !c.is_finite()) {
        return Vec::new();
    }
    let mut c: Vec<f64> = coeffs.to_vec();
    while c.last().is_some_and(|v| v.abs() < 1e-12 * max) {
        c.pop();
    }
    let zeros = c.iter().take_while(|v| **v == 0.0).count();
    let reduced = &c[zeros..];
    let mut roots = vec![Complex64::new(0.0, 0.0); zeros];
    let d = reduced.len().saturating_sub(1);
    if d == 0 {
        return roots;
    }
    let lead = reduced[d];
    let mut companion = DMatrix::<f64>::zeros(d, d);
    for i in 1..d {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..d {
        companion[(i, d - 1)] = -reduced[i] / lead;
    }
    for z in companion.complex_eigenvalues().iter() {
        roots.push(newton_polish(reduced, *z));
    }
    roots
}

fn horner(c: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &ci in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + ci;
    }
    (p, dp)
}

fn newton_polish(c: &[f64], mut z: Complex64) -> Complex64 {
    let (mut p, _) = horner(c, z);
    for _ in 0..4 {
        let (_, dp) = horner(c, z);
        if dp.norm() == 0.0 {
            break;
        }
        let next = z - p / dp;
        let (pn, _) = horner(c, next);
        if !(pn.norm() < p.norm()) {
            break;
        }
        z = next;
        p = pn;
    }
    z
}

/// Sorted real roots: those with `|Im| < 1e-7·(1 + |Re|)`.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = polynomial_roots(coeffs)
        .into_iter()
        .filter(|z| z.im.abs() < 1e-7 * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Brent-Dekker root of `f` in `[a, b]`, given `f(a)` and `f(b)` of opposite sign.
pub fn brent<F: Fn(f64) -> f64>(
    f: F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    tol: f64,
) -> f64 {
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    debug_assert!(fa.signum() != fb.signum(), "root not bracketed");
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut bisected = true;
    for _ in 0..200 {
        if fb == 0.0 || (b - a).abs() < tol {
            return b;
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let between = if lo < b {
            s > lo && s < b
        } else {
            s > b && s < lo
        };
        let reject = !between
            || (bisected && (s - b).abs() >= (b - c).abs() / 2.0)
            || (!bisected && (s - b).abs() >= (c - d).abs() / 2.0)
            || (bisected && (b - c).abs() < tol)
            || (!bisected && (c - d).abs() < tol);
        if reject {
            s = (a + b) / 2.0;
            bisected = true;
        } else {
            bisected = false;
        }
        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa.signum() != fs.signum() {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    b
}
