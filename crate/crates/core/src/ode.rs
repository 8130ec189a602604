//! Dormand–Prince 5(4) integrator with dense output for linear matrix ODEs
//! `Y′ = M(x) Y`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A linear vector field `x ↦ M(x)`.
pub trait LinearSystem {
    fn dim(&self) -> usize;
    fn matrix_into(&self, x: f64, out: &mut DMatrix<f64>);
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub x0: f64,
    pub h: f64,
    pub y0: DMatrix<f64>,
    r: [DMatrix<f64>; 4],
}

impl DenseStep {
    pub fn x1(&self) -> f64 {
        self.x0 + self.h
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = if self.h >= 0.0 {
            (self.x0, self.x1())
        } else {
            (self.x1(), self.x0)
        };
        x >= lo && x <= hi
    }

    pub fn eval(&self, x: f64) -> DMatrix<f64> {
        let t = (x - self.x0) / self.h;
        let t1 = 1.0 - t;
        let [r1, r2, r3, r4] = &self.r;
        // y0 + t(r1 + t1(r2 + t(r3 + t1 r4)))
        let inner = r3 + r4 * t1;
        let inner = r2 + inner * t;
        let inner = r1 + inner * t1;
        &self.y0 + inner * t
    }

    /// Derivative of the interpolant with respect to `x`.
    pub fn eval_derivative(&self, x: f64) -> DMatrix<f64> {
        let t = (x - self.x0) / self.h;
        let t1 = 1.0 - t;
        let [r1, r2, r3, r4] = &self.r;
        let g = r3 + r4 * t1;
        let dg = -r4;
        let f = r2 + &g * t;
        let df = &g + dg * t;
        let e = r1 + &f * t1;
        let de = -f + df * t1;
        (e + de * t) / self.h
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Dopri5 {
    pub fn new(tol: f64) -> Self {
        Dopri5 {
            rtol: tol,
            atol: tol,
            h_max: 0.5,
            max_steps: 1_000_000,
        }
    }

    /// Integrates from `x0` to `x1`, calling `on_step` after every accepted
    /// step. The callback may rescale the state in place; it must return
    /// `true` when it did so.
    pub fn integrate<S, F>(
        &self,
        sys: &S,
        x0: f64,
        y0: DMatrix<f64>,
        x1: f64,
        mut on_step: F,
    ) -> Result<DMatrix<f64>>
    where
        S: LinearSystem + ?Sized,
        F: FnMut(DenseStep, &mut DMatrix<f64>) -> Result<bool>,
    {
        let mut y = y0;
        if x1 == x0 || y.ncols() == 0 {
            return Ok(y);
        }
        let dim = sys.dim();
        let dir = (x1 - x0).signum();
        let mut mbuf = DMatrix::zeros(dim, dim);
        let shape = (y.nrows(), y.ncols());
        let zeros = || DMatrix::<f64>::zeros(shape.0, shape.1);
        let (mut k1, mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
            zeros(),
            zeros(),
            zeros(),
            zeros(),
            zeros(),
            zeros(),
            zeros(),
        );

        let mut x = x0;
        sys.matrix_into(x, &mut mbuf);
        k1.gemm(1.0, &mbuf, &y, 0.0);

        let mut h = self.initial_step(&y, &k1, (x1 - x0).abs()) * dir;
        let mut steps = 0usize;

        while (x1 - x) * dir > 0.0 {
            steps += 1;
            if steps > self.max_steps {
                return Err(Error::StepSizeUnderflow { x });
            }
            if (x + h - x1) * dir > 0.0 {
                h = x1 - x;
            }
            if h.abs() < 1e-14 * x.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { x });
            }

            let mut stage = |coeffs: &[(f64, &DMatrix<f64>)], c: f64, out: &mut DMatrix<f64>| {
                let mut ytmp = y.clone();
                for &(a, k) in coeffs {
                    if a != 0.0 {
                        ytmp.zip_apply(k, |yv, kv| *yv += h * a * kv);
                    }
                }
                sys.matrix_into(x + c * h, &mut mbuf);
                out.gemm(1.0, &mbuf, &ytmp, 0.0);
                ytmp
            };
            stage(&[(A21, &k1)], C2, &mut k2);
            stage(&[(A31, &k1), (A32, &k2)], C3, &mut k3);
            stage(&[(A41, &k1), (A42, &k2), (A43, &k3)], C4, &mut k4);
            stage(
                &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
                C5,
                &mut k5,
            );
            stage(
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                1.0,
                &mut k6,
            );
            let y_new = stage(
                &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
                1.0,
                &mut k7,
            );

            let mut err_sq = 0.0;
            let mut count = 0usize;
            for i in 0..y.len() {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err_sq += (e / sc).powi(2);
                count += 1;
            }
            let err = (err_sq / count as f64).sqrt();

            if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                if h.abs() < 1e-10 {
                    return Err(Error::NonFiniteState { x });
                }
                h *= 0.2;
                continue;
            }

            if err <= 1.0 {
                let ydiff = &y_new - &y;
                let bspl = &k1 * h - &ydiff;
                let r3 = &ydiff - &k7 * h - &bspl;
                let r4 = (&k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * h;
                let step = DenseStep {
                    x0: x,
                    h,
                    y0: std::mem::replace(&mut y, y_new),
                    r: [ydiff, bspl, r3, r4],
                };
                x += h;
                if (x1 - x) * dir <= 0.0 {
                    x = x1;
                }
                if on_step(step, &mut y)? {
                    sys.matrix_into(x, &mut mbuf);
                    k1.gemm(1.0, &mbuf, &y, 0.0);
                } else {
                    std::mem::swap(&mut k1, &mut k7);
                }
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                h = (h * fac).abs().min(self.h_max) * dir;
            } else {
                let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                h *= fac;
            }
        }
        Ok(y)
    }

    fn initial_step(&self, y: &DMatrix<f64>, f: &DMatrix<f64>, span: f64) -> f64 {
        let d0 = y.norm();
        let d1 = f.norm();
        let h = if d0 < 1e-5 || d1 < 1e-5 {
            1e-3
        } else {
            0.01 * d0 / d1
        };
        h.min(self.h_max).min(span)
    }
}
