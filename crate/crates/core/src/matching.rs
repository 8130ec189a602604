//! Eigenvalue detection by matching the decaying subspaces at `x = 0`.
//!
//! `C(λ) = [S | −Uf]` stacks the stable frame (decaying at `+∞`) and the
//! unstable frame (decaying at `−∞`). Its smallest singular value vanishes
//! exactly when some solution decays at both ends.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::asymptotic::AsymptoticData;
use crate::dichotomy::{fit_decay_rate, initial_frame, propagate, Side, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::svd_ascending;
use crate::model::{assemble_L, MatrixFunction, PotentialSpec, Scenario};
use crate::quadrature::{integrate_vec, integrate_vec_scaled};

/// Stable and unstable frames at the origin for one value of λ.
#[derive(Debug, Clone)]
pub struct Matching {
    pub lambda: f64,
    pub stable: Trajectory,
    pub unstable: Trajectory,
    /// Singular values of `C(λ)`, ascending.
    pub singular_values: Vec<f64>,
    /// Right singular vector of the smallest singular value, `(ξ_s, ξ_u)`.
    pub kernel: DVector<f64>,
}

impl Matching {
    pub fn sigma_min(&self) -> f64 {
        self.singular_values[0]
    }

    /// Second-smallest singular value, or infinity for a 1-column `C`.
    pub fn second_sigma(&self) -> f64 {
        self.singular_values
            .get(1)
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    pub fn stable_basis(&self) -> &DMatrix<f64> {
        &self.stable.end.basis
    }

    pub fn unstable_basis(&self) -> &DMatrix<f64> {
        &self.unstable.end.basis
    }
}

/// `[S | −Uf]`.
pub fn combined_matrix(s: &DMatrix<f64>, uf: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, k) = (s.nrows(), s.ncols());
    let mut c = DMatrix::zeros(rows, k + uf.ncols());
    c.columns_mut(0, k).copy_from(s);
    c.columns_mut(k, uf.ncols()).copy_from(&(-uf));
    c
}

/// Smallest principal angle between `span(S)` and `span(Uf)`.
pub fn intersection_angle(s: &DMatrix<f64>, uf: &DMatrix<f64>) -> f64 {
    let resid = uf - s * (s.transpose() * uf);
    let (sv, _) = svd_ascending(&resid);
    sv.first().copied().unwrap_or(0.0).min(1.0).asin()
}

pub fn mismatch(scenario: &Scenario, lambda: f64) -> Result<Matching> {
    let asym = scenario.asymptotic(lambda)?;
    if asym.m == asym.n() {
        return Err(Error::EmptyFrame);
    }
    let x_max = scenario.numerics.x_max;
    let tol = scenario.numerics.ode_tol;
    let spec = &scenario.potential;
    let b = &scenario.perturbation;
    let stable = propagate(
        &initial_frame(&asym, Side::StablePlus, x_max)?,
        0.0,
        spec,
        b,
        lambda,
        tol,
    )?;
    let unstable = propagate(
        &initial_frame(&asym, Side::UnstableMinus, x_max)?,
        0.0,
        spec,
        b,
        lambda,
        tol,
    )?;
    let c = combined_matrix(&stable.end.basis, &unstable.end.basis);
    let (singular_values, v) = svd_ascending(&c);
    Ok(Matching {
        lambda,
        stable,
        unstable,
        singular_values,
        kernel: v.column(0).into_owned(),
    })
}

pub fn sigma_min(scenario: &Scenario, lambda: f64) -> Result<f64> {
    mismatch(scenario, lambda).map(|m| m.sigma_min())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MismatchCurve {
    pub lambdas: Vec<f64>,
    pub sigma_min: Vec<f64>,
    /// Shape of `C(λ)`: `2n × 2(n − m)`.
    pub rows: usize,
    pub cols: usize,
}

impl MismatchCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,sigma_min\n");
        for (l, s) in self.lambdas.iter().zip(&self.sigma_min) {
            let _ = writeln!(out, "{l:.16e},{s:.16e}");
        }
        out
    }

    /// Indices of local minima, endpoints included.
    pub fn local_minima(&self) -> Vec<usize> {
        let s = &self.sigma_min;
        (0..s.len())
            .filter(|&i| {
                let left = i == 0 || s[i] <= s[i - 1];
                let right = i + 1 == s.len() || s[i] < s[i + 1];
                left && right
            })
            .collect()
    }
}

/// Evaluates `sigma_min` at each λ on a pool of `threads` workers. The
/// result does not depend on the thread count.
pub fn scan(scenario: &Scenario, lambdas: &[f64], threads: usize) -> Result<MismatchCurve> {
    let asym = scenario.asymptotic(scenario.lambda0())?;
    let k = asym.n() - asym.m;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let sigma: Vec<f64> = pool.install(|| {
        lambdas
            .par_iter()
            .map(|&l| sigma_min(scenario, l))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(MismatchCurve {
        lambdas: lambdas.to_vec(),
        sigma_min: sigma,
        rows: 2 * asym.n(),
        cols: 2 * k,
    })
}

/// Golden-section minimization on `[a, b]` down to bracket width `width`.
pub fn golden_section<F>(mut f: F, mut a: f64, mut b: f64, width: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > width {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub lambda: f64,
    pub sigma_min: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub enum Detection {
    Found(Box<Eigenpair>),
    NoEigenvalue,
    MultipleCandidates(Vec<Candidate>),
}

#[derive(Debug, Clone)]
pub struct DetectReport {
    pub detection: Detection,
    pub curve: MismatchCurve,
    /// Every refined local minimum, accepted or not.
    pub candidates: Vec<Candidate>,
}

impl DetectReport {
    pub fn eigenpair(&self) -> Option<&Eigenpair> {
        match &self.detection {
            Detection::Found(p) => Some(p),
            _ => None,
        }
    }

    /// Smallest refined `sigma_min` over the window.
    pub fn best(&self) -> Option<Candidate> {
        self.candidates
            .iter()
            .copied()
            .min_by(|a, b| a.sigma_min.total_cmp(&b.sigma_min))
    }
}

/// Checks that the whole window sits in one spectral gap of `A∞`.
pub fn check_window(scenario: &Scenario) -> Result<usize> {
    let (lo, hi) = scenario.lambda_window;
    let m_lo = scenario.asymptotic(lo)?.m;
    let m_hi = scenario.asymptotic(hi)?.m;
    if m_lo != m_hi {
        return Err(Error::AssumptionViolated(format!(
            "lambda window [{lo}, {hi}] contains a threshold of the continuous spectrum"
        )));
    }
    let asym = scenario.asymptotic(scenario.lambda0())?;
    if asym.m == asym.n() {
        return Err(Error::EmptyFrame);
    }
    Ok(asym.m)
}

pub fn detect(scenario: &Scenario) -> Result<DetectReport> {
    detect_with(scenario, 1)
}

pub fn detect_with(scenario: &Scenario, threads: usize) -> Result<DetectReport> {
    check_window(scenario)?;
    let (lo, hi) = scenario.lambda_window;
    let count = scenario.numerics.scan_points.max(64);
    let lambdas: Vec<f64> = (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect();
    let curve = scan(scenario, &lambdas, threads)?;

    let mut candidates = Vec::new();
    for i in curve.local_minima() {
        let a = lambdas[i.saturating_sub(1)];
        let b = lambdas[(i + 1).min(count - 1)];
        let (lambda, sigma) = golden_section(|l| sigma_min(scenario, l), a, b, 1e-12)?;
        let (lambda, sigma) = if curve.sigma_min[i] < sigma {
            (lambdas[i], curve.sigma_min[i])
        } else {
            (lambda, sigma)
        };
        let duplicate = candidates
            .iter()
            .any(|c: &Candidate| (c.lambda - lambda).abs() < 1e-9);
        if !duplicate {
            candidates.push(Candidate {
                lambda,
                sigma_min: sigma,
                accepted: sigma < scenario.numerics.sigma_tol,
            });
        }
    }

    let accepted: Vec<Candidate> = candidates.iter().copied().filter(|c| c.accepted).collect();
    let detection = match accepted.len() {
        0 => Detection::NoEigenvalue,
        1 => Detection::Found(Box::new(Eigenpair::build(
            scenario,
            mismatch(scenario, accepted[0].lambda)?,
        )?)),
        _ => Detection::MultipleCandidates(accepted),
    };
    Ok(DetectReport {
        detection,
        curve,
        candidates,
    })
}

/// A normalized eigenfunction glued from both half-lines.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub lambda: f64,
    pub sigma_min: f64,
    pub second_sigma: f64,
    pub grid: Vec<f64>,
    /// `(u, u′)` at each grid point.
    pub values: Vec<DVector<f64>>,
    /// `∫‖u‖²` after normalization.
    pub norm_check: f64,
    pub decay_rate: f64,
    pub mu_min: f64,
    pub kernel_vector: DVector<f64>,
    /// `‖S ξ_s − Uf ξ_u‖` after scaling.
    pub glue_jump: f64,
    pub x_max: f64,
    matching: Matching,
    coef_s: Vec<DVector<f64>>,
    coef_u: Vec<DVector<f64>>,
    scale: f64,
    asym: AsymptoticData,
}

impl Eigenpair {
    pub fn build(scenario: &Scenario, matching: Matching) -> Result<Self> {
        let n = scenario.n();
        let x_max = scenario.numerics.x_max;
        let asym = scenario.asymptotic(matching.lambda)?;
        let k = matching.stable.k();
        let xi_s = matching.kernel.rows(0, k).into_owned();
        let xi_u = matching.kernel.rows(k, k).into_owned();
        let coef_s = matching.stable.final_coefficients(&xi_s);
        let coef_u = matching.unstable.final_coefficients(&xi_u);
        let glue = &matching.stable.end.basis * &xi_s - &matching.unstable.end.basis * &xi_u;

        let mut pair = Eigenpair {
            lambda: matching.lambda,
            sigma_min: matching.sigma_min(),
            second_sigma: matching.second_sigma(),
            grid: Vec::new(),
            values: Vec::new(),
            norm_check: 0.0,
            decay_rate: 0.0,
            mu_min: asym.mu_min,
            kernel_vector: matching.kernel.clone(),
            glue_jump: glue.norm(),
            x_max,
            matching,
            coef_s,
            coef_u,
            scale: 1.0,
            asym,
        };

        let norm = pair.norm_squared()?;
        pair.scale = 1.0 / norm.sqrt();
        pair.glue_jump *= pair.scale;

        let count = (2.0 * x_max / scenario.numerics.grid_step).round() as usize;
        pair.grid = (0..=count)
            .map(|i| -x_max + 2.0 * x_max * i as f64 / count as f64)
            .collect();
        pair.values = pair
            .grid
            .iter()
            .map(|&x| pair.eval(x))
            .collect::<Result<_>>()?;
        let extreme = pair
            .values
            .iter()
            .flat_map(|v| v.iter().take(n).copied())
            .fold(0.0_f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if extreme < 0.0 {
            pair.flip();
        }
        pair.norm_check = pair.norm_squared()?;

        let lo = x_max / 3.0;
        let hi = 5.0 * x_max / 6.0;
        let side = |sign: f64| -> Result<f64> {
            let samples = (0..64)
                .map(|i| {
                    let x = sign * (lo + (hi - lo) * i as f64 / 63.0);
                    Ok((x, pair.eval(x)?.norm().ln()))
                })
                .collect::<Result<Vec<_>>>()?;
            fit_decay_rate(&samples)
        };
        pair.decay_rate = 0.5 * (side(1.0)? + side(-1.0)?);
        let required = 0.9 * pair.mu_min;
        if !(pair.decay_rate >= required) {
            return Err(Error::DecayCheck {
                rate: pair.decay_rate,
                required,
            });
        }
        Ok(pair)
    }

    fn flip(&mut self) {
        self.scale = -self.scale;
        for v in &mut self.values {
            v.neg_mut();
        }
    }

    fn norm_squared(&self) -> Result<f64> {
        let n = self.n();
        let mut err = None;
        let mut integrand = |x: f64, out: &mut DVector<f64>| match self.eval(x) {
            Ok(v) => out[0] = v.rows(0, n).norm_squared(),
            Err(e) => {
                err.get_or_insert(e);
                out[0] = 0.0;
            }
        };
        let left = integrate_vec(&mut integrand, -self.x_max, 0.0, 1, 1e-11)?;
        let right = integrate_vec(&mut integrand, 0.0, self.x_max, 1, 1e-11)?;
        match err {
            Some(e) => Err(e),
            None => Ok(left[0] + right[0]),
        }
    }

    pub fn n(&self) -> usize {
        self.asym.n()
    }

    /// `(u(x), u′(x))`; beyond `±X_max` continued by the asymptotic flow.
    pub fn eval(&self, x: f64) -> Result<DVector<f64>> {
        let st = &self.matching.stable;
        let un = &self.matching.unstable;
        let raw = if x > self.x_max {
            self.asym.stable_flow(x - self.x_max) * st.solution(self.x_max, &self.coef_s)?
        } else if x >= 0.0 {
            st.solution(x, &self.coef_s)?
        } else if x >= -self.x_max {
            un.solution(x, &self.coef_u)?
        } else {
            self.asym.center_unstable_flow(x + self.x_max)
                * un.solution(-self.x_max, &self.coef_u)?
        };
        Ok(raw * self.scale)
    }

    pub fn u(&self, x: f64) -> Result<DVector<f64>> {
        let n = self.n();
        self.eval(x).map(|v| v.rows(0, n).into_owned())
    }

    pub fn matching(&self) -> &Matching {
        &self.matching
    }

    pub fn asymptotic(&self) -> &AsymptoticData {
        &self.asym
    }

    /// Sup of `‖U‖` over the export grid.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut out = String::from("x");
        for i in 1..=n {
            let _ = write!(out, ",u{i}");
        }
        for i in 1..=n {
            let _ = write!(out, ",du{i}");
        }
        out.push('\n');
        for (x, v) in self.grid.iter().zip(&self.values) {
            let _ = write!(out, "{x:.16e}");
            for e in v.iter() {
                let _ = write!(out, ",{e:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Largest relative deviation between `U` and the right-hand side of its
/// integral representation on `[R, ∞)`, sampled at 30 points of
/// `[R, x_max/2]`. The centre component is set to zero.
pub fn integral_residual_of<F>(
    u: F,
    asym: &AsymptoticData,
    spec: &PotentialSpec,
    b: &MatrixFunction,
    r: f64,
    x_max: f64,
) -> Result<f64>
where
    F: Fn(f64) -> Result<DVector<f64>>,
{
    let dim = 2 * asym.n();
    let lambda = asym.lambda0;
    let u0s = &asym.ps * u(r)?;
    let mut err = None;
    let mut record = |e: Error| {
        err.get_or_insert(e);
    };
    let mut worst = 0.0_f64;
    for j in 0..30 {
        let x = r + (x_max / 2.0 - r) * j as f64 / 29.0;
        let ux = u(x)?;
        let floor = ux.norm().max(f64::MIN_POSITIVE);
        let forcing = |xi: f64| -> Result<DVector<f64>> {
            Ok(assemble_L(spec, b, lambda, lambda, xi)? * u(xi)?)
        };
        let near = integrate_vec_scaled(
            |xi, out| match forcing(xi) {
                Ok(f) => out.copy_from(&(asym.stable_flow(x - xi) * f)),
                Err(e) => {
                    record(e);
                    out.fill(0.0)
                }
            },
            r,
            x,
            dim,
            1e-9,
            floor,
        )?;
        let forcing = |xi: f64| -> Result<DVector<f64>> {
            Ok(assemble_L(spec, b, lambda, lambda, xi)? * u(xi)?)
        };
        let far = integrate_vec_scaled(
            |xi, out| match forcing(xi) {
                Ok(f) => out.copy_from(&(asym.center_unstable_flow(x - xi) * f)),
                Err(e) => {
                    record(e);
                    out.fill(0.0)
                }
            },
            x,
            x_max,
            dim,
            1e-9,
            floor,
        )?;
        let rhs = asym.stable_flow(x - r) * &u0s + near - far;
        let diff = (&rhs - &ux).norm();
        let dev = if ux.norm() > 0.0 {
            diff / ux.norm()
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(dev);
    }
    match err {
        Some(e) => Err(e),
        None => Ok(worst),
    }
}

pub fn integral_residual(
    pair: &Eigenpair,
    spec: &PotentialSpec,
    b: &MatrixFunction,
    r: f64,
) -> Result<f64> {
    integral_residual_of(|x| pair.eval(x), &pair.asym, spec, b, r, pair.x_max)
}
