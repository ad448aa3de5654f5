//! Eigenvalues of small dense real matrices.
//!
//! Rows or columns whose off-diagonal entries are all zero are split off
//! first (their diagonal entry is an eigenvalue). What remains is solved in
//! closed form from the characteristic polynomial when its order is at most
//! three, otherwise by Hessenberg reduction and shifted QR iteration.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub type C64 = Complex<f64>;

pub const MAX_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Sorted by real part, then imaginary part.
    pub eigenvalues: Vec<C64>,
    /// `max_k ||A v_k - lambda_k v_k|| / ||v_k||` over the computed pairs.
    pub residual: f64,
}

impl Spectrum {
    pub fn max_real(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn eigenvalues(a: &Matrix) -> Result<Spectrum> {
    let n = a.dim();
    if n > MAX_DIM {
        return Err(Error::Domain(format!(
            "matrix dimension {n} exceeds the supported maximum {MAX_DIM}"
        )));
    }
    if !a.is_finite() {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    let norm = a.norm();
    if norm == 0.0 {
        return Ok(Spectrum {
            eigenvalues: vec![C64::new(0.0, 0.0); n],
            residual: 0.0,
        });
    }

    let (mut found, active) = isolate(a);
    let sub: Vec<Vec<f64>> = active
        .iter()
        .map(|&i| active.iter().map(|&j| a.get(i, j)).collect())
        .collect();
    match sub.len() {
        0 => {}
        1..=3 => found.extend(closed_form(&sub)),
        k => {
            let m = DMatrix::from_fn(k, k, |i, j| sub[i][j]);
            let max_iter = 100 * k;
            let schur = nalgebra::Schur::try_new(m, f64::EPSILON, max_iter).ok_or_else(|| {
                Error::Eigen(format!(
                    "QR iteration did not converge within {max_iter} sweeps on the \
                     {k}x{k} core; {} eigenvalue(s) isolated before failure: {:?}",
                    found.len(),
                    found
                ))
            })?;
            found.extend(schur.complex_eigenvalues().iter().copied());
        }
    }

    found.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let residual = found
        .iter()
        .map(|&lambda| eigen_residual(a, lambda, norm))
        .fold(0.0, f64::max);
    Ok(Spectrum {
        eigenvalues: found,
        residual,
    })
}

/// Repeatedly removes indices whose row or column is zero off the diagonal.
fn isolate(a: &Matrix) -> (Vec<C64>, Vec<usize>) {
    let mut active: Vec<usize> = (0..a.dim()).collect();
    let mut found = Vec::new();
    loop {
        let pos = active.iter().position(|&i| {
            let row = active.iter().all(|&j| j == i || a.get(i, j) == 0.0);
            let col = active.iter().all(|&j| j == i || a.get(j, i) == 0.0);
            row || col
        });
        match pos {
            Some(p) if active.len() > 1 => {
                let i = active.remove(p);
                found.push(C64::new(a.get(i, i), 0.0));
            }
            _ => break,
        }
    }
    (found, active)
}

/// Roots of the characteristic polynomial of a matrix of order 1..=3.
fn closed_form(m: &[Vec<f64>]) -> Vec<C64> {
    let scale = m
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 {
        return vec![C64::new(0.0, 0.0); m.len()];
    }
    let a = |i: usize, j: usize| m[i][j] / scale;
    let roots = match m.len() {
        1 => vec![C64::new(a(0, 0), 0.0)],
        2 => {
            let half_tr = 0.5 * (a(0, 0) + a(1, 1));
            let half_diff = 0.5 * (a(0, 0) - a(1, 1));
            let disc = half_diff * half_diff + a(0, 1) * a(1, 0);
            let det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
            quadratic(half_tr, disc, det).to_vec()
        }
        3 => {
            let tr = a(0, 0) + a(1, 1) + a(2, 2);
            let minors = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0) + a(0, 0) * a(2, 2)
                - a(0, 2) * a(2, 0)
                + a(1, 1) * a(2, 2)
                - a(1, 2) * a(2, 1);
            let det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
            cubic(-tr, minors, -det)
        }
        _ => unreachable!("closed form only up to order three"),
    };
    roots.into_iter().map(|z| z * scale).collect()
}

/// Roots of `x^2 - 2 h x + det` where `disc = h^2 - det` is supplied
/// separately for accuracy.
fn quadratic(h: f64, disc: f64, det: f64) -> [C64; 2] {
    if disc >= 0.0 {
        let s = disc.sqrt();
        let r1 = h + s.copysign(h);
        let r2 = if r1 != 0.0 { det / r1 } else { h - s.copysign(h) };
        [C64::new(r1, 0.0), C64::new(r2, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [C64::new(h, s), C64::new(h, -s)]
    }
}

/// Roots of the monic cubic `x^3 + c2 x^2 + c1 x + c0`.
fn cubic(c2: f64, c1: f64, c0: f64) -> Vec<C64> {
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    let disc = 0.25 * q * q + p * p * p / 27.0;
    let shift = c2 / 3.0;
    let t = if disc > 0.0 {
        let u = (-0.5 * q - disc.sqrt().copysign(q)).cbrt();
        if u != 0.0 {
            u - p / (3.0 * u)
        } else {
            0.0
        }
    } else if p == 0.0 {
        0.0
    } else {
        // three real roots; take the one of largest magnitude
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * r)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        let cands = [0.0, 1.0, 2.0].map(|k| r * (phi - 2.0 * std::f64::consts::PI * k / 3.0).cos());
        cands
            .into_iter()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap()
    };
    let poly = |x: C64| ((x + c2) * x + c1) * x + c0;
    let dpoly = |x: C64| (3.0 * x + 2.0 * c2) * x + c1;
    let r = polish(C64::new(t - shift, 0.0), poly, dpoly).re;

    // deflate: x^3 + c2 x^2 + c1 x + c0 = (x - r)(x^2 + b1 x + b0)
    let b1 = c2 + r;
    let b0 = if r.abs() > 1e-3 && c0 != 0.0 {
        -c0 / r
    } else {
        c1 + r * b1
    };
    let h = -0.5 * b1;
    let [z1, z2] = quadratic(h, h * h - b0, b0);
    let mut out = vec![C64::new(r, 0.0)];
    for z in [z1, z2] {
        let pz = polish(z, poly, dpoly);
        out.push(if z.im == 0.0 { C64::new(pz.re, 0.0) } else { pz });
    }
    if out[1].im != 0.0 {
        out[2] = out[1].conj();
    }
    out
}

fn polish(mut z: C64, p: impl Fn(C64) -> C64, dp: impl Fn(C64) -> C64) -> C64 {
    for _ in 0..8 {
        let f = p(z);
        let d = dp(z);
        if f.norm() == 0.0 || d.norm() == 0.0 {
            break;
        }
        let next = z - f / d;
        if !(p(next).norm() < f.norm()) {
            break;
        }
        z = next;
    }
    z
}

/// `||A v - lambda v|| / ||v||` for an eigenvector estimate from two steps
/// of shifted inverse iteration.
fn eigen_residual(a: &Matrix, lambda: C64, norm: f64) -> f64 {
    let n = a.dim();
    let ac = DMatrix::from_fn(n, n, |i, j| C64::new(a.get(i, j), 0.0));
    let mut shift = 1e-13 * norm;
    for _ in 0..6 {
        let sigma = lambda + C64::new(shift, 0.5 * shift);
        let m = &ac - DMatrix::from_diagonal_element(n, n, sigma);
        let lu = m.lu();
        // irrational-ish start so no eigenvector is missed by symmetry
        let mut v = nalgebra::DVector::from_fn(n, |k, _| {
            let t = (k as f64 + 1.0) * 0.618_033_988_749_895;
            C64::new(t.fract() + 0.5, (t * 1.414_213_562_373_095).fract() - 0.5)
        });
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&v) {
                Some(x) if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => {
                    let nx = x.norm();
                    if nx == 0.0 {
                        ok = false;
                        break;
                    }
                    v = x / C64::new(nx, 0.0);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let r = &ac * &v - &v * lambda;
            return r.norm() / v.norm();
        }
        shift *= 100.0;
    }
    f64::INFINITY
}
