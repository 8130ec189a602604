//! Propagation of decaying solution subspaces of `U′ = M(x; λ, B) U`.
//!
//! A frame starts on the exact asymptotic subspace at `±X_max` and is
//! integrated toward the origin. Whenever a column norm leaves
//! `[1e−3, 1e3]` the state is replaced by the `Q` of a thin QR and the `R`
//! factor is stored, so that individual solutions can be reassembled later
//! from either end of the trajectory.

use nalgebra::{DMatrix, DVector};

use crate::asymptotic::AsymptoticData;
use crate::error::{Error, Result};
use crate::linalg::{principal_angle, thin_qr};
use crate::model::{MatrixFunction, PotentialSpec, Scenario};
use crate::ode::{DenseStep, Dopri5, LinearSystem};

const NORM_BAND: (f64, f64) = (1e-3, 1e3);
/// Step control runs this much tighter than `ode_tol` so the continuous
/// extension, not just the mesh values, meets the tolerance.
const DENSE_SAFETY: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Solutions decaying as `x → +∞`, propagated toward decreasing `x`.
    StablePlus,
    /// Solutions decaying as `x → −∞`, propagated toward increasing `x`.
    UnstableMinus,
    /// Solutions of the adjoint system `W′ = −Mᵀ W`, propagated outward.
    Adjoint,
}

#[derive(Debug, Clone)]
pub struct SubspaceFrame {
    pub x: f64,
    pub basis: DMatrix<f64>,
    /// Accumulated `ln R_jj` of all re-orthonormalizations so far.
    pub log_scale: Vec<f64>,
    pub side: Side,
}

impl SubspaceFrame {
    pub fn new(x: f64, basis: DMatrix<f64>, side: Side) -> Self {
        let k = basis.ncols();
        SubspaceFrame {
            x,
            basis,
            log_scale: vec![0.0; k],
            side,
        }
    }

    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }
}

/// The coefficient field of the first-order system, or of its adjoint.
pub struct SchrodingerSystem<'a> {
    spec: &'a PotentialSpec,
    b: Option<&'a MatrixFunction>,
    lambda: f64,
    adjoint: bool,
}

impl<'a> SchrodingerSystem<'a> {
    pub fn new(spec: &'a PotentialSpec, b: &'a MatrixFunction, lambda: f64, adjoint: bool) -> Self {
        SchrodingerSystem {
            spec,
            b: (!b.is_zero()).then_some(b),
            lambda,
            adjoint,
        }
    }

    fn potential(&self, x: f64, i: usize, j: usize) -> f64 {
        let mut v = self.spec.a.entry(i, j).eval(x);
        if let Some(b) = self.b {
            v += b.entry(i, j).eval(x);
        }
        if i == j {
            v -= self.lambda;
        }
        v
    }
}

impl LinearSystem for SchrodingerSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.spec.n()
    }

    fn matrix_into(&self, x: f64, out: &mut DMatrix<f64>) {
        let n = self.spec.n();
        out.fill(0.0);
        for i in 0..n {
            for j in 0..n {
                let v = self.potential(x, i, j);
                if self.adjoint {
                    // −Mᵀ, with the potential block symmetric
                    out[(i, n + j)] = -v;
                } else {
                    out[(n + i, j)] = v;
                }
            }
            if self.adjoint {
                out[(n + i, i)] = -1.0;
            } else {
                out[(i, n + i)] = 1.0;
            }
        }
    }
}

/// Dense record of one propagation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub side: Side,
    pub lambda: f64,
    pub start: SubspaceFrame,
    /// Orthonormal frame at the target point.
    pub end: SubspaceFrame,
    steps: Vec<DenseStep>,
    step_segment: Vec<usize>,
    /// `R` factor closing each segment; the last one belongs to the final
    /// orthonormalization at the target.
    renorms: Vec<DMatrix<f64>>,
}

impl Trajectory {
    pub fn k(&self) -> usize {
        self.start.k()
    }

    pub fn interpolation_order(&self) -> usize {
        4
    }

    /// Mesh points in the direction of integration.
    pub fn grid(&self) -> Vec<f64> {
        std::iter::once(self.start.x)
            .chain(self.steps.iter().map(DenseStep::x1))
            .collect()
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.start.x.min(self.end.x), self.start.x.max(self.end.x))
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.x_range();
        x >= lo && x <= hi
    }

    pub fn segment_count(&self) -> usize {
        self.renorms.len() + 1
    }

    fn locate(&self, x: f64) -> Option<usize> {
        if self.steps.is_empty() || !self.contains(x) {
            return None;
        }
        let dir = (self.end.x - self.start.x).signum();
        let t = (x - self.start.x) * dir;
        let i = self
            .steps
            .partition_point(|s| (s.x1() - self.start.x) * dir < t);
        Some(i.min(self.steps.len() - 1))
    }

    /// The propagated (unnormalized) state at `x` and its segment index.
    pub fn raw_at(&self, x: f64) -> Result<(DMatrix<f64>, usize)> {
        match self.locate(x) {
            Some(i) => Ok((self.steps[i].eval(x), self.step_segment[i])),
            None if x == self.start.x => Ok((self.start.basis.clone(), 0)),
            None => Err(Error::Dimension(format!(
                "x = {x} outside trajectory range {:?}",
                self.x_range()
            ))),
        }
    }

    pub fn raw_derivative_at(&self, x: f64) -> Result<(DMatrix<f64>, usize)> {
        match self.locate(x) {
            Some(i) => Ok((self.steps[i].eval_derivative(x), self.step_segment[i])),
            None => Err(Error::Dimension(format!(
                "x = {x} outside trajectory range {:?}",
                self.x_range()
            ))),
        }
    }

    /// Orthonormalized frame at `x` with its accumulated growth.
    pub fn frame_at(&self, x: f64) -> Result<SubspaceFrame> {
        let (y, seg) = self.raw_at(x)?;
        let (q, r) = thin_qr(&y);
        let mut log_scale = self.log_scale_before(seg);
        for (j, l) in log_scale.iter_mut().enumerate() {
            *l += r[(j, j)].ln();
        }
        Ok(SubspaceFrame {
            x,
            basis: q,
            log_scale,
            side: self.side,
        })
    }

    fn log_scale_before(&self, seg: usize) -> Vec<f64> {
        let mut out = self.start.log_scale.clone();
        for r in &self.renorms[..seg] {
            for (j, l) in out.iter_mut().enumerate() {
                *l += r[(j, j)].ln();
            }
        }
        out
    }

    /// Per-segment coefficients of the solution equal to `end.basis · xi` at
    /// the target point.
    pub fn final_coefficients(&self, xi: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut out = vec![xi.clone(); self.segment_count()];
        for s in (0..self.renorms.len()).rev() {
            let next = out[s + 1].clone();
            out[s] = self.renorms[s]
                .solve_upper_triangular(&next)
                .unwrap_or_else(|| DVector::from_element(next.len(), f64::NAN));
        }
        out
    }

    /// Per-segment coefficients of the solution equal to `start.basis · c0`
    /// at the starting point.
    pub fn initial_coefficients(&self, c0: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(self.segment_count());
        out.push(c0.clone());
        for r in &self.renorms {
            let next = r * out.last().expect("non-empty");
            out.push(next);
        }
        out
    }

    pub fn solution(&self, x: f64, coeffs: &[DVector<f64>]) -> Result<DVector<f64>> {
        if x == self.end.x {
            return Ok(&self.end.basis * coeffs.last().expect("non-empty"));
        }
        let (y, seg) = self.raw_at(x)?;
        Ok(y * &coeffs[seg])
    }

    /// `ln‖U₁(x)‖` of the first column, a true solution of the system.
    pub fn leading_log_norm(&self, x: f64) -> Result<f64> {
        let (y, seg) = self.raw_at(x)?;
        Ok(y.column(0).norm().ln() + self.log_scale_before(seg)[0])
    }
}

/// Exact asymptotic subspace at the far end of the half-line.
pub fn initial_frame(asym: &AsymptoticData, side: Side, x_max: f64) -> Result<SubspaceFrame> {
    match side {
        Side::StablePlus => Ok(SubspaceFrame::new(x_max, asym.stable_basis(), side)),
        Side::UnstableMinus => Ok(SubspaceFrame::new(-x_max, asym.unstable_basis(), side)),
        Side::Adjoint => Err(Error::Config(
            "adjoint frames are built from the matched subspace".into(),
        )),
    }
}

pub fn propagate(
    frame: &SubspaceFrame,
    target_x: f64,
    spec: &PotentialSpec,
    b: &MatrixFunction,
    lambda: f64,
    ode_tol: f64,
) -> Result<Trajectory> {
    let wrong_way = match frame.side {
        Side::StablePlus => target_x > frame.x,
        Side::UnstableMinus => target_x < frame.x,
        Side::Adjoint => false,
    };
    if wrong_way {
        return Err(Error::AssumptionViolated(format!(
            "{:?} frames are propagated toward the origin, not from {} to {}",
            frame.side, frame.x, target_x
        )));
    }
    let sys = SchrodingerSystem::new(spec, b, lambda, frame.side == Side::Adjoint);
    let mut steps = Vec::new();
    let mut step_segment = Vec::new();
    let mut renorms = Vec::new();
    let y_end = Dopri5::new(ode_tol * DENSE_SAFETY).integrate(
        &sys,
        frame.x,
        frame.basis.clone(),
        target_x,
        |step, y| {
            steps.push(step);
            step_segment.push(renorms.len());
            let out_of_band = y.column_iter().any(|c| {
                let nm = c.norm();
                nm < NORM_BAND.0 || nm > NORM_BAND.1
            });
            if out_of_band {
                let (q, r) = thin_qr(y);
                *y = q;
                renorms.push(r);
            }
            Ok(out_of_band)
        },
    )?;
    let (q, r) = thin_qr(&y_end);
    renorms.push(r);

    let mut traj = Trajectory {
        side: frame.side,
        lambda,
        start: frame.clone(),
        end: SubspaceFrame {
            x: target_x,
            basis: q,
            log_scale: Vec::new(),
            side: frame.side,
        },
        steps,
        step_segment,
        renorms,
    };
    traj.end.log_scale = traj.log_scale_before(traj.renorms.len());
    Ok(traj)
}

/// Negative least-squares slope of `(|x|, ln‖U‖)` samples.
pub fn fit_decay_rate(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.len() < 8 {
        return Err(Error::WindowTooShort(format!("{} samples", samples.len())));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.0.abs()).collect();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1.0 {
        return Err(Error::WindowTooShort(format!("[{lo}, {hi}]")));
    }
    let n = samples.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, s) in xs.iter().zip(samples) {
        sxy += (x - mx) * (s.1 - my);
        sxx += (x - mx) * (x - mx);
    }
    Ok(-sxy / sxx)
}

/// Decay rate of the leading solution of `traj` over `window`.
pub fn decay_rate(traj: &Trajectory, window: (f64, f64)) -> Result<f64> {
    let (a, b) = window;
    if !(traj.contains(a) && traj.contains(b)) {
        return Err(Error::WindowTooShort(format!(
            "window [{a}, {b}] not inside trajectory {:?}",
            traj.x_range()
        )));
    }
    let samples = (0..64)
        .map(|i| {
            let x = a + (b - a) * i as f64 / 63.0;
            Ok((x, traj.leading_log_norm(x)?))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_decay_rate(&samples)
}

/// Stable frame at `x = 0` for the scenario's own perturbation.
pub fn stable_frame_at_origin(
    scenario: &Scenario,
    b: &MatrixFunction,
    lambda: f64,
) -> Result<Trajectory> {
    let asym = scenario.asymptotic(lambda)?;
    let start = initial_frame(&asym, Side::StablePlus, scenario.numerics.x_max)?;
    propagate(
        &start,
        0.0,
        &scenario.potential,
        b,
        lambda,
        scenario.numerics.ode_tol,
    )
}

/// Principal angle at `x = 0` between the stable frames for `B` and
/// `B + δ·delta_family`, one row per `δ`.
pub fn roughness_sensitivity(
    scenario: &Scenario,
    lambda0: f64,
    delta_family: &MatrixFunction,
    deltas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let base = stable_frame_at_origin(scenario, &scenario.perturbation, lambda0)?;
    deltas
        .iter()
        .map(|&d| {
            let b = scenario.perturbation.plus(&delta_family.scaled(d))?;
            let t = stable_frame_at_origin(scenario, &b, lambda0)?;
            Ok((d, principal_angle(&base.end.basis, &t.end.basis)))
        })
        .collect()
}
