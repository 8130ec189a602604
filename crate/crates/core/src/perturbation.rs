//! First-order persistence of an embedded eigenvalue under `A → A + B`.
//!
//! At a simple eigenvalue λ₀ with eigenfunction `u*` the matched range
//! `[S | Uf]` at `x = 0` misses a `(2m+1)`-dimensional complement. One
//! direction of it is `U*⊥(0) = (−u*′(0), u*(0))`, which yields the
//! eigenvalue derivative `λ′ = ∫(u*, B u*)`. The remaining `2m` directions
//! `W_k(0)` start bounded adjoint solutions `W_k = (−w_k′, w_k)`, and the
//! functionals
//!
//! ```text
//! F_k(B) = ∫(w_k, B u*) − λ′(B) ∫(w_k, u*)
//! ```
//!
//! must all vanish for the eigenvalue to survive to first order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use serde_json::value::RawValue;

use crate::dichotomy::{propagate, Side, SubspaceFrame, Trajectory};
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::linalg::{fix_sign, orthogonal_complement, spectral_norm, svd_ascending};
use crate::matching::{detect_with, sigma_min, Detection, Eigenpair};
use crate::model::{assemble_M, MatrixFunction, PotentialSpec, Scenario};
use crate::output::{json_number, json_numbers};
use crate::quadrature::integrate_vec;

const RANK_TOL: f64 = 1e-6;
const QUAD_TOL: f64 = 1e-10;
/// Entries below this are quadrature noise, whatever the matrix scale.
const RANK_FLOOR: f64 = 1e-8;

/// `−M(x; λ₀, 0)ᵀ`.
pub fn adjoint_system_rhs(spec: &PotentialSpec, lambda0: f64, x: f64) -> Result<DMatrix<f64>> {
    let m = assemble_M(spec, &MatrixFunction::zero(spec.n()), lambda0, x)?;
    Ok(-m.transpose())
}

/// `J (a, b) = (−b, a)`, mapping solutions of the system to solutions of
/// its adjoint.
fn symplectic(v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.nrows() / 2;
    let mut out = DMatrix::zeros(v.nrows(), v.ncols());
    out.rows_mut(0, n).copy_from(&(-v.rows(n, n)));
    out.rows_mut(n, n).copy_from(&v.rows(0, n));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    /// `w` even, `W(0) = (0, w(0))`.
    Even,
    /// `w` odd, `W(0) = (−w′(0), 0)`.
    Odd,
    /// The potential is not even.
    Mixed,
}

#[derive(Debug, Clone)]
pub struct AdjointFrame {
    pub lambda0: f64,
    pub m: usize,
    pub uperp0: DVector<f64>,
    /// Columns `W_k(0)`.
    pub w0: DMatrix<f64>,
    pub kerq_dim: usize,
    pub parity: Vec<Parity>,
    /// Norm of the projection of `U*⊥(0)` onto the matched range.
    pub uperp_residual: f64,
    plus: Trajectory,
    minus: Trajectory,
    coef_plus: Vec<Vec<DVector<f64>>>,
    coef_minus: Vec<Vec<DVector<f64>>>,
}

impl AdjointFrame {
    pub fn count(&self) -> usize {
        self.w0.ncols()
    }

    /// `W_k(x) = (−w_k′(x), w_k(x))` for `|x| ≤ X_max`.
    pub fn w_full(&self, k: usize, x: f64) -> Result<DVector<f64>> {
        if x >= 0.0 {
            self.plus.solution(x, &self.coef_plus[k])
        } else {
            self.minus.solution(x, &self.coef_minus[k])
        }
    }

    pub fn w(&self, k: usize, x: f64) -> Result<DVector<f64>> {
        let n = self.w0.nrows() / 2;
        self.w_full(k, x).map(|v| v.rows(n, n).into_owned())
    }

    pub fn x_max(&self) -> f64 {
        self.plus.start.x
    }
}

/// Orthonormal basis of the range of `[S | Uf]` at numerical rank.
fn matched_range(pair: &Eigenpair) -> Result<DMatrix<f64>> {
    let s = pair.matching().stable_basis();
    let uf = pair.matching().unstable_basis();
    let k = s.ncols();
    let mut c = DMatrix::zeros(s.nrows(), 2 * k);
    c.columns_mut(0, k).copy_from(s);
    c.columns_mut(k, k).copy_from(uf);
    let svd = c.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > RANK_TOL)
        .collect();
    if keep.len() != 2 * k - 1 {
        return Err(Error::RankUnexpected {
            expected: 2 * k - 1,
            found: keep.len(),
        });
    }
    let cols: Vec<DVector<f64>> = keep.iter().map(|&i| u.column(i).into_owned()).collect();
    Ok(DMatrix::from_columns(&cols))
}

fn append_column(m: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone().insert_column(m.ncols(), 0.0);
    out.set_column(m.ncols(), v);
    out
}

/// Splits the columns into even (`R w = −w`) and odd (`R w = w`) parts under
/// `R = diag(I, −I)`, even ones first.
fn parity_adapt(w0: &DMatrix<f64>) -> (DMatrix<f64>, Vec<Parity>) {
    let n = w0.nrows() / 2;
    let mut r = DMatrix::<f64>::identity(2 * n, 2 * n);
    for i in n..2 * n {
        r[(i, i)] = -1.0;
    }
    let g = w0.transpose() * &r * w0;
    let eig = SymmetricEigen::new(g);
    let mut idx: Vec<usize> = (0..w0.ncols()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut out = DMatrix::zeros(w0.nrows(), w0.ncols());
    let mut parity = Vec::new();
    for (j, &i) in idx.iter().enumerate() {
        out.set_column(j, &(w0 * eig.eigenvectors.column(i)));
        parity.push(if eig.eigenvalues[i] < 0.0 {
            Parity::Even
        } else {
            Parity::Odd
        });
    }
    (out, parity)
}

/// Bounded adjoint solutions on `[0, X]` start in `J·Ran(Ps + Pc)` at `+X`
/// and stay bounded when integrated back toward the origin; likewise on
/// `[−X, 0]` with `Pu`.
fn inward_adjoint(scenario: &Scenario, lambda0: f64, side_sign: f64) -> Result<Trajectory> {
    let asym = scenario.asymptotic(lambda0)?;
    let hyper = if side_sign > 0.0 {
        asym.stable_basis()
    } else {
        asym.unstable_basis()
    };
    let center = asym.center_basis();
    let mut basis = DMatrix::zeros(hyper.nrows(), hyper.ncols() + center.ncols());
    basis.columns_mut(0, hyper.ncols()).copy_from(&hyper);
    basis
        .columns_mut(hyper.ncols(), center.ncols())
        .copy_from(&center);
    let x_max = scenario.numerics.x_max;
    let start = SubspaceFrame::new(side_sign * x_max, symplectic(&basis), Side::Adjoint);
    propagate(
        &start,
        0.0,
        &scenario.potential,
        &MatrixFunction::zero(scenario.n()),
        lambda0,
        scenario.numerics.ode_tol,
    )
}

pub fn build_adjoint_frame(scenario: &Scenario, pair: &Eigenpair) -> Result<AdjointFrame> {
    let n = scenario.n();
    let lambda0 = pair.lambda;
    let m = pair.asymptotic().m;
    let range = matched_range(pair)?;
    let complement = orthogonal_complement(&range, 2 * n);
    if complement.ncols() != 2 * m + 1 {
        return Err(Error::RankUnexpected {
            expected: 2 * n - 2 * m - 1,
            found: 2 * n - complement.ncols(),
        });
    }

    let u0 = pair.eval(0.0)?;
    let mut uperp0 = symplectic(&DMatrix::from_column_slice(2 * n, 1, u0.as_slice()))
        .column(0)
        .into_owned();
    uperp0 /= uperp0.norm();
    fix_sign(&mut uperp0);
    let uperp_residual = (range.transpose() * &uperp0).norm();
    if uperp_residual > 1e-8 {
        return Err(Error::UperpNotInKernel(uperp_residual));
    }

    let w0 = orthogonal_complement(&append_column(&range, &uperp0), 2 * n);
    let (mut w0, parity) = if scenario.unperturbed().is_even() {
        parity_adapt(&w0)
    } else {
        (w0.clone(), vec![Parity::Mixed; w0.ncols()])
    };
    for mut col in w0.column_iter_mut() {
        let mut v = col.clone_owned();
        fix_sign(&mut v);
        col.copy_from(&v);
    }

    let plus = inward_adjoint(scenario, lambda0, 1.0)?;
    let minus = inward_adjoint(scenario, lambda0, -1.0)?;
    let x_max = scenario.numerics.x_max;
    let mu = pair.mu_min;
    let mut coef_plus = Vec::new();
    let mut coef_minus = Vec::new();
    for k in 0..w0.ncols() {
        let wk = w0.column(k).into_owned();
        for (traj, coefs, sign) in [
            (&plus, &mut coef_plus, 1.0),
            (&minus, &mut coef_minus, -1.0),
        ] {
            let f = &traj.end.basis;
            let c = f.transpose() * &wk;
            if (f * &c - &wk).norm() > 1e-6 {
                return Err(Error::AdjointGrowth { k, x: sign * x_max });
            }
            coefs.push(traj.final_coefficients(&c));
        }
    }

    let frame = AdjointFrame {
        lambda0,
        m,
        uperp0,
        kerq_dim: complement.ncols(),
        parity,
        uperp_residual,
        w0,
        plus,
        minus,
        coef_plus,
        coef_minus,
    };

    let steps = (2.0 * x_max).ceil() as usize * 4;
    for k in 0..frame.count() {
        let bound = 10.0 * frame.w0.column(k).norm().max(1.0);
        for i in 0..=steps {
            let x = -x_max + 2.0 * x_max * i as f64 / steps as f64;
            let norm = frame.w_full(k, x)?.norm();
            if !(norm <= bound * (0.5 * mu * x.abs()).exp()) {
                return Err(Error::AdjointGrowth { k, x });
            }
        }
    }
    Ok(frame)
}

fn integrate_line<F>(f: F, x_max: f64, dim: usize) -> Result<DVector<f64>>
where
    F: Fn(f64, &mut DVector<f64>) -> Result<()>,
{
    let mut err = None;
    let mut g = |x: f64, out: &mut DVector<f64>| {
        if let Err(e) = f(x, out) {
            err.get_or_insert(e);
            out.fill(0.0);
        }
    };
    let left = integrate_vec(&mut g, -x_max, 0.0, dim, QUAD_TOL)?;
    let right = integrate_vec(&mut g, 0.0, x_max, dim, QUAD_TOL)?;
    match err {
        Some(e) => Err(e),
        None => Ok(left + right),
    }
}

/// `λ′(0)B = ∫(u*, B u*)` for a normalized eigenfunction.
pub fn lambda_prime(pair: &Eigenpair, b: &MatrixFunction) -> Result<f64> {
    if b.is_zero() {
        return Ok(0.0);
    }
    let v = integrate_line(
        |x, out| {
            let u = pair.u(x)?;
            out[0] = u.dot(&(b.eval(x)? * &u));
            Ok(())
        },
        pair.x_max,
        1,
    )?;
    Ok(v[0])
}

/// `λ′(0)B` together with every `F_k′(0)B`.
pub fn melnikov_rows(
    frame: &AdjointFrame,
    pair: &Eigenpair,
    b: &MatrixFunction,
) -> Result<(f64, Vec<f64>)> {
    let count = frame.count();
    if b.is_zero() {
        return Ok((0.0, vec![0.0; count]));
    }
    let lp = lambda_prime(pair, b)?;
    let v = integrate_line(
        |x, out| {
            let u = pair.u(x)?;
            let bu = b.eval(x)? * &u;
            for k in 0..count {
                let w = frame.w(k, x)?;
                out[k] = w.dot(&bu);
                out[count + k] = w.dot(&u);
            }
            Ok(())
        },
        pair.x_max,
        2 * count,
    )?;
    let rows = (0..count).map(|k| v[k] - lp * v[count + k]).collect();
    Ok((lp, rows))
}

pub fn melnikov_row(
    frame: &AdjointFrame,
    pair: &Eigenpair,
    b: &MatrixFunction,
    k: usize,
) -> Result<f64> {
    if k >= frame.count() {
        return Err(Error::Dimension(format!(
            "row {k} requested from {} adjoint directions",
            frame.count()
        )));
    }
    melnikov_rows(frame, pair, b).map(|(_, rows)| rows[k])
}

#[derive(Debug, Clone)]
pub struct MelnikovReport {
    pub m: usize,
    pub codim: usize,
    pub lambda_prime: Vec<f64>,
    /// `2m × p`, entry `(k, j) = F_k′(0) B_j`.
    pub matrix: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub tangent_basis: Vec<DVector<f64>>,
    pub parity: Vec<Parity>,
}

#[derive(Serialize)]
struct MelnikovJson {
    m: usize,
    codim: usize,
    lambda_prime: Vec<Box<RawValue>>,
    matrix: Vec<Vec<Box<RawValue>>>,
    rank: usize,
    tangent_basis: Vec<Vec<Box<RawValue>>>,
}

impl MelnikovReport {
    pub fn is_full_rank(&self) -> bool {
        self.rank == self.codim
    }

    pub fn to_json(&self) -> String {
        let doc = MelnikovJson {
            m: self.m,
            codim: self.codim,
            lambda_prime: json_numbers(&self.lambda_prime),
            matrix: self
                .matrix
                .row_iter()
                .map(|r| r.iter().copied().map(json_number).collect())
                .collect(),
            rank: self.rank,
            tangent_basis: self
                .tangent_basis
                .iter()
                .map(|v| json_numbers(v.as_slice()))
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
    }
}

pub fn melnikov_matrix(
    frame: &AdjointFrame,
    pair: &Eigenpair,
    family: &[MatrixFunction],
) -> Result<MelnikovReport> {
    let rows = frame.count();
    let p = family.len();
    let mut matrix = DMatrix::zeros(rows, p);
    let mut lambda_prime = Vec::with_capacity(p);
    for (j, b) in family.iter().enumerate() {
        let (lp, col) = melnikov_rows(frame, pair, b)?;
        lambda_prime.push(lp);
        for (k, v) in col.into_iter().enumerate() {
            matrix[(k, j)] = v;
        }
    }

    let (mut sv, v) = svd_ascending(&matrix);
    let scale = spectral_norm(&matrix);
    let threshold = (RANK_TOL * scale).max(RANK_FLOOR);
    let rank = sv.iter().filter(|&&s| s > threshold).count();
    let tangent_basis = (0..p)
        .filter(|&j| j >= sv.len() || sv[j] <= threshold)
        .map(|j| {
            let mut t = v.column(j).into_owned();
            fix_sign(&mut t);
            t
        })
        .collect();
    sv.reverse();
    Ok(MelnikovReport {
        m: frame.m,
        codim: 2 * frame.m,
        lambda_prime,
        matrix,
        singular_values: sv,
        rank,
        tangent_basis,
        parity: frame.parity.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub epsilon: f64,
    pub detected: Option<f64>,
    pub prediction: f64,
    pub sigma_at_prediction: Option<f64>,
    /// Why the row produced no detection, when it failed outright.
    pub failure: Option<String>,
}

/// Reference eigenpair of the unperturbed scenario.
pub fn base_eigenpair(scenario: &Scenario) -> Result<Eigenpair> {
    base_eigenpair_with(scenario, 1)
}

pub fn base_eigenpair_with(scenario: &Scenario, threads: usize) -> Result<Eigenpair> {
    match detect_with(&scenario.unperturbed(), threads)?.detection {
        Detection::Found(p) => Ok(*p),
        Detection::NoEigenvalue => Err(Error::AssumptionViolated(
            "no eigenvalue of the unperturbed operator in the window".into(),
        )),
        Detection::MultipleCandidates(c) => Err(Error::AssumptionViolated(format!(
            "{} eigenvalue candidates in the window; a simple eigenvalue is required",
            c.len()
        ))),
    }
}

/// Re-detects along `ε ↦ ε·B_dir` and compares with `λ₀ + ε λ′(0)B_dir`.
pub fn persistence_probe(
    scenario: &Scenario,
    b_dir: &MatrixFunction,
    epsilons: &[f64],
) -> Result<Vec<ProbeRow>> {
    persistence_probe_with(scenario, b_dir, epsilons, 1)
}

pub fn persistence_probe_with(
    scenario: &Scenario,
    b_dir: &MatrixFunction,
    epsilons: &[f64],
    threads: usize,
) -> Result<Vec<ProbeRow>> {
    let base = base_eigenpair_with(scenario, threads)?;
    let slope = lambda_prime(&base, b_dir)?;
    let (lo, hi) = scenario.lambda_window;
    Ok(epsilons
        .iter()
        .map(|&eps| {
            let s = scenario.with_perturbation(b_dir.scaled(eps));
            let prediction = base.lambda + eps * slope;
            let sigma_at_prediction = if (lo..=hi).contains(&prediction) {
                sigma_min(&s, prediction).ok()
            } else {
                None
            };
            let (detected, failure) = match detect_with(&s, threads) {
                Ok(r) => match r.detection {
                    Detection::Found(p) => (Some(p.lambda), None),
                    Detection::NoEigenvalue => (None, None),
                    Detection::MultipleCandidates(c) => {
                        (None, Some(format!("{} candidates", c.len())))
                    }
                },
                Err(e) => (None, Some(e.to_string())),
            };
            ProbeRow {
                epsilon: eps,
                detected,
                prediction,
                sigma_at_prediction,
                failure,
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub name: String,
    pub b: MatrixFunction,
}

fn shifted(c: f64) -> String {
    if c == 0.0 {
        "x".to_string()
    } else if c > 0.0 {
        format!("(x - {c})")
    } else {
        format!("(x + {})", -c)
    }
}

/// Gaussian bumps centred at `c ∈ {−2, …, 2}` in every off-diagonal slot:
/// the even combination `[g(x−c) + g(x+c)]/2` and the odd one
/// `[(x−c)g(x−c) + (x+c)g(x+c)]/2`, with `g(y) = exp(−y²)`.
pub fn default_family(n: usize) -> Vec<FamilyMember> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for c in [-2.0, -1.0, 0.0, 1.0, 2.0] {
                let (a, b) = (shifted(c), shifted(-c));
                let even = format!("(exp(-{a}^2) + exp(-{b}^2))/2");
                let odd = format!("({a}*exp(-{a}^2) + {b}*exp(-{b}^2))/2");
                for (kind, src) in [("even", even), ("odd", odd)] {
                    let e = Expression::parse(&src).expect("family expression");
                    out.push(FamilyMember {
                        name: format!("{kind}_{}{}_c{c}", i + 1, j + 1),
                        b: MatrixFunction::off_diagonal(n, i, j, &e),
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::sech;
    use std::sync::OnceLock;

    fn base() -> &'static (Scenario, Eigenpair, AdjointFrame) {
        static CELL: OnceLock<(Scenario, Eigenpair, AdjointFrame)> = OnceLock::new();
        CELL.get_or_init(|| {
            let s = Scenario::cosh_example();
            let pair = base_eigenpair(&s).unwrap();
            let frame = build_adjoint_frame(&s, &pair).unwrap();
            (s, pair, frame)
        })
    }

    fn offdiag(src: &str) -> MatrixFunction {
        MatrixFunction::off_diagonal(2, 0, 1, &Expression::parse(src).unwrap())
    }

    fn diag1(src: &str) -> MatrixFunction {
        MatrixFunction::diagonal(&[Expression::parse(src).unwrap(), Expression::constant(0.0)])
    }

    #[test]
    fn adjoint_rhs_is_negative_transpose() {
        let s = Scenario::cosh_example();
        let r = adjoint_system_rhs(&s.potential, 0.0, 0.0).unwrap();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0,
            ],
        );
        assert!((r - expect).norm() < 1e-15);
    }

    #[test]
    fn kernel_structure_of_the_builtin() {
        let (_, pair, frame) = base();
        assert_eq!(frame.kerq_dim, 3);
        let e3 = DVector::from_column_slice(&[0.0, 0.0, 1.0, 0.0]);
        assert!((&frame.uperp0 - e3).norm() < 1e-6);
        assert!(frame.uperp_residual <= 1e-9);
        assert_eq!(frame.parity, vec![Parity::Even, Parity::Odd]);
        // W_cos(0) = (0,0,0,1), W_sin(0) = (0,1,0,0)
        assert!(
            (frame.w0.column(0) - DVector::from_column_slice(&[0.0, 0.0, 0.0, 1.0])).norm() < 1e-6
        );
        assert!(
            (frame.w0.column(1) - DVector::from_column_slice(&[0.0, 1.0, 0.0, 0.0])).norm() < 1e-6
        );
        // bounded oscillatory channel-two solutions
        for &x in &[-25.0, -3.0, 1.5, 17.0, 29.0] {
            assert!(
                (frame.w(0, x).unwrap()[1] - f64::cos(x)).abs() < 1e-7,
                "x = {x}"
            );
            assert!(
                (frame.w(1, x).unwrap()[1] + f64::sin(x)).abs() < 1e-7,
                "x = {x}"
            );
        }
        let _ = pair;
    }

    #[test]
    fn pairing_is_constant() {
        let (_, pair, frame) = base();
        for k in 0..frame.count() {
            let p0 = frame.w_full(k, 0.0).unwrap().dot(&pair.eval(0.0).unwrap());
            for i in 0..=120 {
                let x = -30.0 + 0.5 * i as f64;
                let p = frame.w_full(k, x).unwrap().dot(&pair.eval(x).unwrap());
                assert!((p - p0).abs() <= 1e-8, "k = {k}, x = {x}");
            }
        }
        for i in 0..=120 {
            let x = -30.0 + 0.5 * i as f64;
            let u = pair.eval(x).unwrap();
            let uperp = DVector::from_column_slice(&[-u[2], -u[3], u[0], u[1]]);
            assert!(uperp.dot(&u).abs() <= 1e-12);
        }
    }

    #[test]
    fn lambda_prime_examples() {
        let (_, pair, _) = base();
        assert_eq!(lambda_prime(pair, &MatrixFunction::zero(2)).unwrap(), 0.0);
        let lp = lambda_prime(pair, &diag1("sech(x)^2")).unwrap();
        assert!((lp - 2.0 / 3.0).abs() < 1e-8, "{lp}");
        assert!(lambda_prime(pair, &offdiag("sech(x)^2")).unwrap().abs() < 1e-14);
    }

    #[test]
    fn parity_forced_entries() {
        let (_, pair, frame) = base();
        let (_, rows) = melnikov_rows(frame, pair, &offdiag("sech(x)^2")).unwrap();
        // (1/√2)∫cos ξ sech³ξ dξ = π sech(π/2)/√2
        let oracle = std::f64::consts::PI * sech(std::f64::consts::FRAC_PI_2) / 2f64.sqrt();
        assert!(
            (rows[0] - oracle).abs() < 1e-7 * oracle,
            "{} vs {oracle}",
            rows[0]
        );
        assert!(rows[1].abs() <= 1e-9);
        let (_, zero) = melnikov_rows(frame, pair, &MatrixFunction::zero(2)).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
    }

    #[test]
    fn rows_are_linear_in_b() {
        let (_, pair, frame) = base();
        let b1 = offdiag("exp(-(x - 1)^2)");
        let b2 = offdiag("x*exp(-x^2)").plus(&diag1("sech(x)^2")).unwrap();
        let (alpha, beta) = (0.7, -1.9);
        let combo = b1.scaled(alpha).plus(&b2.scaled(beta)).unwrap();
        let (_, r1) = melnikov_rows(frame, pair, &b1).unwrap();
        let (_, r2) = melnikov_rows(frame, pair, &b2).unwrap();
        let (_, rc) = melnikov_rows(frame, pair, &combo).unwrap();
        for k in 0..2 {
            let expect = alpha * r1[k] + beta * r2[k];
            assert!((rc[k] - expect).abs() <= 1e-9 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn rank_of_families() {
        let (_, pair, frame) = base();
        let family: Vec<MatrixFunction> = default_family(2).into_iter().map(|m| m.b).collect();
        assert_eq!(family.len(), 10);
        let report = melnikov_matrix(frame, pair, &family).unwrap();
        assert_eq!(report.rank, 2);
        assert!(report.singular_values[1] > 1e-3 * report.singular_values[0]);
        assert_eq!(report.tangent_basis.len(), 8);

        let diag_only = vec![diag1("sech(x)^2"), diag1("exp(-x^2)")];
        let r = melnikov_matrix(frame, pair, &diag_only).unwrap();
        assert_eq!(r.rank, 0);
        assert_eq!(r.tangent_basis.len(), 2);

        let mixed = vec![
            offdiag("exp(-x^2)"),
            offdiag("x*exp(-x^2)"),
            diag1("exp(-x^2)"),
        ];
        assert_eq!(melnikov_matrix(frame, pair, &mixed).unwrap().rank, 2);

        let empty = melnikov_matrix(frame, pair, &[]).unwrap();
        assert_eq!((empty.rank, empty.matrix.shape()), (0, (2, 0)));
    }

    #[test]
    fn probe_at_zero_and_under_obstruction() {
        let (s, pair, _) = base();
        let rows = persistence_probe(s, &offdiag("sech(x)^2"), &[0.0, 0.05]).unwrap();
        assert_eq!(rows[0].detected, Some(pair.lambda));
        assert_eq!(rows[0].prediction, pair.lambda);
        assert_eq!(rows[1].detected, None);
        assert!(rows[1].failure.is_none());
        assert!(rows[1].sigma_at_prediction.unwrap() > 1e-3);
    }

    #[test]
    fn report_json_keys() {
        let (_, pair, frame) = base();
        let r = melnikov_matrix(frame, pair, &[offdiag("exp(-x^2)")]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            [
                "codim",
                "lambda_prime",
                "m",
                "matrix",
                "rank",
                "tangent_basis"
            ]
        );
        assert_eq!(v["codim"], 2);
    }

    #[test]
    fn default_family_parities() {
        let fam = default_family(2);
        for m in &fam {
            let e = m.b.entry(0, 1);
            let (a, b) = (e.eval(0.8), e.eval(-0.8));
            if m.name.starts_with("even") {
                assert!((a - b).abs() < 1e-15);
            } else {
                assert!((a + b).abs() < 1e-15);
            }
        }
        assert!(default_family(1).is_empty());
    }
}
