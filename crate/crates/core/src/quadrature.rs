//! Composite 16-point Gauss–Legendre quadrature.

use std::sync::OnceLock;

use nalgebra::DVector;

use crate::error::{Error, Result};

const ORDER: usize = 16;

/// Nodes and weights on `[-1, 1]`.
pub fn gauss_legendre_16() -> &'static ([f64; ORDER], [f64; ORDER]) {
    static RULE: OnceLock<([f64; ORDER], [f64; ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let mut nodes = [0.0; ORDER];
        let mut weights = [0.0; ORDER];
        let n = ORDER as f64;
        for i in 0..ORDER {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=ORDER {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
        (nodes, weights)
    })
}

/// Integral of a vector-valued `f` over `[a, b]` with `panels` equal panels.
pub fn composite<F>(f: &mut F, a: f64, b: f64, panels: usize, dim: usize) -> DVector<f64>
where
    F: FnMut(f64, &mut DVector<f64>),
{
    let (nodes, weights) = gauss_legendre_16();
    let mut total = DVector::zeros(dim);
    let mut buf = DVector::zeros(dim);
    let width = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + width * p as f64;
        let mid = lo + 0.5 * width;
        for (z, w) in nodes.iter().zip(weights) {
            f(mid + 0.5 * width * z, &mut buf);
            total.axpy(0.5 * width * w, &buf, 1.0);
        }
    }
    total
}

/// Halves the panel width, starting from panels of roughly unit length, until
/// two successive results agree to `tol` (relative to `max(1, |I|)`).
pub fn integrate_vec<F>(f: F, a: f64, b: f64, dim: usize, tol: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &mut DVector<f64>),
{
    integrate_vec_scaled(f, a, b, dim, tol, 1.0)
}

/// As [`integrate_vec`], with convergence measured against
/// `max(floor, |I|∞)`.
pub fn integrate_vec_scaled<F>(
    mut f: F,
    a: f64,
    b: f64,
    dim: usize,
    tol: f64,
    floor: f64,
) -> Result<DVector<f64>>
where
    F: FnMut(f64, &mut DVector<f64>),
{
    if a == b {
        return Ok(DVector::zeros(dim));
    }
    let mut panels = ((b - a).abs().ceil() as usize).max(1);
    let mut prev = composite(&mut f, a, b, panels, dim);
    for _ in 0..10 {
        panels *= 2;
        let next = composite(&mut f, a, b, panels, dim);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::QuadratureFailure(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        let change = (&next - &prev).amax();
        let scale = next.amax().max(floor);
        if change <= tol * scale {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureFailure(format!(
        "no convergence on [{a}, {b}] after {panels} panels"
    )))
}

pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate_vec(|x, out| out[0] = f(x), a, b, 1, tol).map(|v| v[0])
}
