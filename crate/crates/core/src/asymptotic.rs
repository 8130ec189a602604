//! Spectral data of the constant-coefficient system at infinity.
//!
//! For `U' = M∞(λ)U` with `M∞(λ) = [[0, I], [A∞ − λI, 0]]` every eigenpair
//! `(a_i, v_i)` of the symmetric `A∞` contributes a decoupled 2×2 block in
//! the coordinates `(v_i·u, v_i·u′)`. Above `λ` the block is hyperbolic with
//! rates `±√(a_i − λ)`, below it rotates with frequency `√(λ − a_i)`. All
//! projections and flows here are assembled from these closed-form blocks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const DEFAULT_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    /// `a_i > λ`: one decaying and one growing direction.
    Hyperbolic,
    /// `a_i < λ`: an oscillating plane.
    Center,
}

#[derive(Debug, Clone)]
pub struct Mode {
    pub kind: ModeKind,
    /// `√|a_i − λ|`
    pub rate: f64,
    pub vector: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct AsymptoticData {
    /// Eigenvalues of `A∞`, ascending.
    pub a: Vec<f64>,
    /// Orthogonal diagonalizer with `A∞ = Qᵀ diag(a) Q`; row `i` is the
    /// eigenvector for `a[i]`.
    pub q: DMatrix<f64>,
    pub lambda0: f64,
    pub m: usize,
    /// `√(a_{m+1} − λ₀)`; zero when every `a_i` lies below `λ₀`.
    pub mu_min: f64,
    pub ps: DMatrix<f64>,
    pub pc: DMatrix<f64>,
    pub pu: DMatrix<f64>,
    pub modes: Vec<Mode>,
}

/// Symmetric eigen-decomposition, eigenvalues ascending.
pub fn eig_sym(a_inf: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a_inf.nrows();
    if a_inf.ncols() != n {
        return Err(Error::Dimension(format!(
            "A_inf is {}x{}",
            a_inf.nrows(),
            a_inf.ncols()
        )));
    }
    let asym = (a_inf - a_inf.transpose()).amax();
    if asym > 1e-12 * a_inf.amax().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    let sym = (a_inf + a_inf.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let a = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut q = DMatrix::zeros(n, n);
    for (row, &i) in idx.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        crate::linalg::fix_sign(&mut v);
        q.set_row(row, &v.transpose());
    }
    Ok((a, q))
}

/// Count of `a_i` below `λ₀` and the slowest hyperbolic rate.
pub fn classify(a: &[f64], lambda0: f64, margin: f64) -> Result<(usize, f64)> {
    if let Some(&closest) = a
        .iter()
        .min_by(|x, y| (*x - lambda0).abs().total_cmp(&(*y - lambda0).abs()))
    {
        if (closest - lambda0).abs() < margin {
            return Err(Error::AssumptionViolated(format!(
                "λ₀ = {lambda0} lies within {margin:e} of the eigenvalue {closest} of A∞"
            )));
        }
    }
    let m = a.iter().filter(|&&ai| ai < lambda0).count();
    let mu_min = a.get(m).map_or(0.0, |&am| (am - lambda0).sqrt());
    Ok((m, mu_min))
}

/// `M∞(λ) = [[0, I], [A∞ − λI, 0]]` with `A∞ = Qᵀ diag(a) Q`.
pub fn build_m_infinity(a: &[f64], q: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let n = a.len();
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(a));
    let a_inf = q.transpose() * d * q;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, n + i)] = 1.0;
        for j in 0..n {
            m[(n + i, j)] = a_inf[(i, j)];
        }
        m[(n + i, i)] -= lambda;
    }
    m
}

fn modes_of(a: &[f64], q: &DMatrix<f64>, lambda0: f64) -> Vec<Mode> {
    a.iter()
        .enumerate()
        .map(|(i, &ai)| {
            let d = ai - lambda0;
            Mode {
                kind: if d > 0.0 {
                    ModeKind::Hyperbolic
                } else {
                    ModeKind::Center
                },
                rate: d.abs().sqrt(),
                vector: q.row(i).transpose(),
            }
        })
        .collect()
}

/// Embed the 2×2 block `[[c11, c12], [c21, c22]]` acting on
/// `(v·u, v·u′)` into a 2n×2n matrix and add it to `out`.
fn add_block(out: &mut DMatrix<f64>, v: &DVector<f64>, c: [[f64; 2]; 2]) {
    let n = v.len();
    let vv = v * v.transpose();
    for i in 0..n {
        for j in 0..n {
            let e = vv[(i, j)];
            out[(i, j)] += c[0][0] * e;
            out[(i, n + j)] += c[0][1] * e;
            out[(n + i, j)] += c[1][0] * e;
            out[(n + i, n + j)] += c[1][1] * e;
        }
    }
}

fn stable_block(rate: f64) -> [[f64; 2]; 2] {
    // (1, −κ)(1, −1/κ)ᵀ/2
    [[0.5, -0.5 / rate], [-0.5 * rate, 0.5]]
}

fn unstable_block(rate: f64) -> [[f64; 2]; 2] {
    [[0.5, 0.5 / rate], [0.5 * rate, 0.5]]
}

/// Stable, center and unstable spectral projections of `M∞(λ₀)`, built
/// from the closed-form eigenvectors.
pub fn spectral_projections(
    a: &[f64],
    q: &DMatrix<f64>,
    lambda0: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    classify(a, lambda0, DEFAULT_MARGIN)?;
    Ok(projections_from_modes(&modes_of(a, q, lambda0)))
}

fn projections_from_modes(modes: &[Mode]) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = modes.len();
    let mut ps = DMatrix::zeros(2 * n, 2 * n);
    let mut pc = DMatrix::zeros(2 * n, 2 * n);
    let mut pu = DMatrix::zeros(2 * n, 2 * n);
    for mode in modes {
        match mode.kind {
            ModeKind::Hyperbolic => {
                add_block(&mut ps, &mode.vector, stable_block(mode.rate));
                add_block(&mut pu, &mode.vector, unstable_block(mode.rate));
            }
            ModeKind::Center => add_block(&mut pc, &mode.vector, [[1.0, 0.0], [0.0, 1.0]]),
        }
    }
    (ps, pc, pu)
}

impl AsymptoticData {
    pub fn new(a_inf: &DMatrix<f64>, lambda0: f64) -> Result<Self> {
        Self::with_margin(a_inf, lambda0, DEFAULT_MARGIN)
    }

    pub fn with_margin(a_inf: &DMatrix<f64>, lambda0: f64, margin: f64) -> Result<Self> {
        let (a, q) = eig_sym(a_inf)?;
        let (m, mu_min) = classify(&a, lambda0, margin)?;
        let modes = modes_of(&a, &q, lambda0);
        let (ps, pc, pu) = projections_from_modes(&modes);
        Ok(AsymptoticData {
            a,
            q,
            lambda0,
            m,
            mu_min,
            ps,
            pc,
            pu,
            modes,
        })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn m_infinity(&self) -> DMatrix<f64> {
        build_m_infinity(&self.a, &self.q, self.lambda0)
    }

    /// Orthonormal basis of `Ran Ps` (decaying as x → +∞).
    pub fn stable_basis(&self) -> DMatrix<f64> {
        self.hyperbolic_basis(-1.0)
    }

    /// Orthonormal basis of `Ran Pu` (decaying as x → −∞).
    pub fn unstable_basis(&self) -> DMatrix<f64> {
        self.hyperbolic_basis(1.0)
    }

    /// Orthonormal basis of `Ran Pc`: `(v, 0)` and `(0, v)` per center mode.
    pub fn center_basis(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut cols = Vec::new();
        for md in self.modes.iter().filter(|md| md.kind == ModeKind::Center) {
            let mut pos = DVector::zeros(2 * n);
            let mut vel = DVector::zeros(2 * n);
            for i in 0..n {
                pos[i] = md.vector[i];
                vel[n + i] = md.vector[i];
            }
            cols.push(pos);
            cols.push(vel);
        }
        if cols.is_empty() {
            DMatrix::zeros(2 * n, 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }

    fn hyperbolic_basis(&self, sign: f64) -> DMatrix<f64> {
        let n = self.n();
        let cols: Vec<DVector<f64>> = self
            .modes
            .iter()
            .filter(|md| md.kind == ModeKind::Hyperbolic)
            .map(|md| {
                let mut col = DVector::zeros(2 * n);
                let scale = 1.0 / (1.0 + md.rate * md.rate).sqrt();
                for i in 0..n {
                    col[i] = md.vector[i] * scale;
                    col[n + i] = sign * md.rate * md.vector[i] * scale;
                }
                col
            })
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(2 * n, 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }

    /// `exp(M∞ t)` in closed form.
    pub fn flow(&self, t: f64) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        for md in &self.modes {
            let c = match md.kind {
                ModeKind::Hyperbolic => {
                    let (k, ch, sh) = (md.rate, (md.rate * t).cosh(), (md.rate * t).sinh());
                    [[ch, sh / k], [k * sh, ch]]
                }
                ModeKind::Center => rotation_block(md.rate, t),
            };
            add_block(&mut out, &md.vector, c);
        }
        out
    }

    /// `exp(M∞ Ps t) Ps` for `t ≥ 0`.
    pub fn stable_flow(&self, t: f64) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        for md in self
            .modes
            .iter()
            .filter(|md| md.kind == ModeKind::Hyperbolic)
        {
            let e = (-md.rate * t).exp();
            let b = stable_block(md.rate);
            add_block(&mut out, &md.vector, b.map(|r| r.map(|v| v * e)));
        }
        out
    }

    /// `exp(M∞ Pc t) Pc` (bounded for all t).
    pub fn center_flow(&self, t: f64) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        for md in self.modes.iter().filter(|md| md.kind == ModeKind::Center) {
            add_block(&mut out, &md.vector, rotation_block(md.rate, t));
        }
        out
    }

    /// `exp(M∞ P^{cu} t) P^{cu}` for `t ≤ 0`.
    pub fn center_unstable_flow(&self, t: f64) -> DMatrix<f64> {
        let mut out = self.center_flow(t);
        for md in self
            .modes
            .iter()
            .filter(|md| md.kind == ModeKind::Hyperbolic)
        {
            let e = (md.rate * t).exp();
            let b = unstable_block(md.rate);
            add_block(&mut out, &md.vector, b.map(|r| r.map(|v| v * e)));
        }
        out
    }

    /// Spectral norm of the eigenvector basis' projector, the constant in
    /// the semigroup bound `‖exp(M∞Ps t)Ps‖ ≤ C e^{−μ_min t}`.
    pub fn condition_factor(&self) -> f64 {
        self.modes
            .iter()
            .map(|md| match md.kind {
                ModeKind::Hyperbolic => block_norm(stable_block(md.rate)),
                ModeKind::Center => block_norm(rotation_bound(md.rate)),
            })
            .fold(1.0, f64::max)
    }
}

fn rotation_block(omega: f64, t: f64) -> [[f64; 2]; 2] {
    if omega == 0.0 {
        return [[1.0, t], [0.0, 1.0]];
    }
    let (s, c) = (omega * t).sin_cos();
    [[c, s / omega], [-omega * s, c]]
}

fn rotation_bound(omega: f64) -> [[f64; 2]; 2] {
    let r = omega.max(1.0 / omega);
    [[r, 0.0], [0.0, r]]
}

fn block_norm(b: [[f64; 2]; 2]) -> f64 {
    let m = DMatrix::from_row_slice(2, 2, &[b[0][0], b[0][1], b[1][0], b[1][1]]);
    crate::linalg::spectral_norm(&m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::principal_angle;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn eig_of_cosh_asymptotics() {
        let (a, q) = eig_sym(&diag(&[1.0, -1.0])).unwrap();
        assert_eq!(a, vec![-1.0, 1.0]);
        // permutation
        assert!((q[(0, 1)].abs() - 1.0).abs() < 1e-15 && (q[(1, 0)].abs() - 1.0).abs() < 1e-15);
        let back = q.transpose() * diag(&a) * &q;
        assert!((back - diag(&[1.0, -1.0])).amax() < 1e-10);
    }

    #[test]
    fn eig_of_swap_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (a, q) = eig_sym(&m).unwrap();
        assert!((a[0] + 1.0).abs() < 1e-14 && (a[1] - 1.0).abs() < 1e-14);
        let s = 1.0 / 2f64.sqrt();
        assert!((q.row(0)[0].abs() - s).abs() < 1e-14);
        assert!((q.row(0)[0] + q.row(0)[1]).abs() < 1e-14);
        assert!((q.row(1)[0] - q.row(1)[1]).abs() < 1e-14);
        assert!((q.transpose() * &q - DMatrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn eig_identity_and_asymmetric() {
        let (a, _) = eig_sym(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(a, vec![1.0, 1.0, 1.0]);
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(matches!(eig_sym(&bad), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&[-1.0, 1.0], 0.0, 1e-8).unwrap(), (1, 1.0));
        assert_eq!(classify(&[1.0, 2.0], 0.0, 1e-8).unwrap(), (0, 1.0));
        let (m, mu) = classify(&[-4.0, -1.0, 3.0], 0.0, 1e-8).unwrap();
        assert_eq!(m, 2);
        assert!((mu - 3f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            classify(&[-1.0, 1.0], 1.0, 1e-8),
            Err(Error::AssumptionViolated(_))
        ));
    }

    #[test]
    fn m_infinity_spectrum_of_cosh_example() {
        let (a, q) = eig_sym(&diag(&[1.0, -1.0])).unwrap();
        let m = build_m_infinity(&a, &q, 0.0);
        let ev = m.complex_eigenvalues();
        let mut re: Vec<f64> = ev.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        let mut im: Vec<f64> = ev.iter().map(|z| z.im).collect();
        im.sort_by(f64::total_cmp);
        for (got, want) in re.iter().zip([-1.0, 0.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        for (got, want) in im.iter().zip([-1.0, 0.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        // λ on the spectrum: singular but constructible
        let sing = build_m_infinity(&a, &q, -1.0);
        assert!(sing.clone().determinant().abs() < 1e-14);
    }

    #[test]
    fn identity_at_infinity_has_unit_rates() {
        let (a, q) = eig_sym(&DMatrix::identity(2, 2)).unwrap();
        let m = build_m_infinity(&a, &q, 0.0);
        for z in m.complex_eigenvalues().iter() {
            assert!((z.re.abs() - 1.0).abs() < 1e-12 && z.im.abs() < 1e-12);
        }
    }

    #[test]
    fn projections_of_cosh_example() {
        let asym = AsymptoticData::new(&diag(&[1.0, -1.0]), 0.0).unwrap();
        let s = DMatrix::from_column_slice(4, 1, &[1.0, 0.0, -1.0, 0.0]) / 2f64.sqrt();
        let u = DMatrix::from_column_slice(4, 1, &[1.0, 0.0, 1.0, 0.0]) / 2f64.sqrt();
        assert!((&asym.ps * &s - &s).amax() < 1e-15);
        assert!((&asym.pu * &u - &u).amax() < 1e-15);
        assert!((&asym.ps * &u).amax() < 1e-15);
        let mut pc_expected = DMatrix::zeros(4, 4);
        pc_expected[(1, 1)] = 1.0;
        pc_expected[(3, 3)] = 1.0;
        assert!((&asym.pc - pc_expected).amax() < 1e-15);
        let sum = &asym.ps + &asym.pc + &asym.pu;
        assert!((sum - DMatrix::identity(4, 4)).amax() < 1e-15);
        assert!(principal_angle(&asym.stable_basis(), &s) < 1e-15);
        assert_eq!(asym.m, 1);
        assert_eq!(asym.mu_min, 1.0);
    }

    #[test]
    fn center_flow_stays_bounded() {
        let asym = AsymptoticData::new(&diag(&[1.0, -1.0]), 0.0).unwrap();
        let bound = asym.condition_factor();
        for i in 0..=1000 {
            let t = i as f64 * 0.1;
            let f = asym.center_flow(t);
            assert!(crate::linalg::spectral_norm(&f) <= bound + 1e-12);
        }
    }

    #[test]
    fn closed_form_flow_matches_taylor_series() {
        let a_inf = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.7, -0.4]);
        let asym = AsymptoticData::new(&a_inf, 0.1).unwrap();
        let m = asym.m_infinity();
        let t = 0.7;
        let mut term = DMatrix::<f64>::identity(4, 4);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &m * (t / k as f64);
            sum += &term;
        }
        assert!((asym.flow(t) - sum).amax() < 1e-13);
    }
}
