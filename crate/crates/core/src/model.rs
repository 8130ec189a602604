//! Potentials, perturbations and the first-order system matrices.

use nalgebra::DMatrix;

use crate::asymptotic::AsymptoticData;
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::linalg::spectral_norm;

/// Symmetric `n×n` matrix whose entries are expressions in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFunction {
    n: usize,
    entries: Vec<Expression>,
}

/// Points used to compare `F[i][j]` against `F[j][i]`.
const SYMMETRY_PROBES: [f64; 9] = [-17.3, -5.1, -1.7, -0.4, 0.0, 0.3, 2.2, 6.9, 23.5];

impl MatrixFunction {
    /// Builds from row-major expressions and checks symmetry on a probe
    /// set; the first offending pair is reported.
    pub fn new(n: usize, entries: Vec<Expression>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                entries.len()
            )));
        }
        let f = MatrixFunction { n, entries };
        f.check_symmetry()?;
        Ok(f)
    }

    pub fn parse(rows: &[Vec<String>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for src in row {
                entries.push(Expression::parse(src)?);
            }
        }
        Self::new(n, entries)
    }

    pub fn zero(n: usize) -> Self {
        MatrixFunction {
            n,
            entries: vec![Expression::constant(0.0); n * n],
        }
    }

    pub fn constant(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        let entries = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| Expression::constant(m[(i, j)]))
            .collect();
        Self::new(n, entries)
    }

    /// Diagonal matrix function from one expression per channel.
    pub fn diagonal(diag: &[Expression]) -> Self {
        let n = diag.len();
        let mut entries = vec![Expression::constant(0.0); n * n];
        for (i, e) in diag.iter().enumerate() {
            entries[i * n + i] = e.clone();
        }
        MatrixFunction { n, entries }
    }

    /// Zero except for `b` in the symmetric slots `(i,j)` and `(j,i)`.
    pub fn off_diagonal(n: usize, i: usize, j: usize, b: &Expression) -> Self {
        let mut entries = vec![Expression::constant(0.0); n * n];
        entries[i * n + j] = b.clone();
        entries[j * n + i] = b.clone();
        MatrixFunction { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> &Expression {
        &self.entries[i * self.n + j]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Expression::is_zero)
    }

    fn check_symmetry(&self) -> Result<()> {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let (a, b) = (self.entry(i, j), self.entry(j, i));
                if a == b {
                    continue;
                }
                for &x in &SYMMETRY_PROBES {
                    let (u, v) = (a.eval(x), b.eval(x));
                    let same = u == v || (u - v).abs() <= 1e-14 * u.abs().max(v.abs());
                    if !same {
                        return Err(Error::Asymmetric { i, j, x });
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes `F(x)` into `out` without checking finiteness.
    #[inline]
    pub fn eval_into(&self, x: f64, out: &mut DMatrix<f64>) {
        for i in 0..self.n {
            for j in 0..self.n {
                out[(i, j)] = self.entries[i * self.n + j].eval(x);
            }
        }
    }

    pub fn eval(&self, x: f64) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.n, self.n);
        self.eval_into(x, &mut out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::NonFiniteEntry { x })
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        MatrixFunction {
            n: self.n,
            entries: self.entries.iter().map(|e| e.scaled(s)).collect(),
        }
    }

    pub fn plus(&self, other: &MatrixFunction) -> Result<Self> {
        if other.n != self.n {
            return Err(Error::Dimension(format!(
                "cannot add {}x{} and {}x{} matrix functions",
                self.n, self.n, other.n, other.n
            )));
        }
        Ok(MatrixFunction {
            n: self.n,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a.plus(b))
                .collect(),
        })
    }

    /// `x ↦ F(−x)`.
    pub fn reflected(&self) -> Self {
        MatrixFunction {
            n: self.n,
            entries: self.entries.iter().map(Expression::reflected).collect(),
        }
    }

    /// Entry strings in row-major nested form (the scenario file schema).
    pub fn to_strings(&self) -> Vec<Vec<String>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.entry(i, j).to_string()).collect())
            .collect()
    }

    /// Largest `|F(x) − F(−x)|` over a probe grid.
    pub fn evenness_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for k in 1..=60 {
            let x = 0.37 * k as f64;
            for e in &self.entries {
                worst = worst.max((e.eval(x) - e.eval(-x)).abs());
            }
        }
        worst
    }
}

/// A(x) together with its limit `A∞` and the decay exponent β.
#[derive(Debug, Clone)]
pub struct PotentialSpec {
    pub a: MatrixFunction,
    pub a_inf: DMatrix<f64>,
    pub beta: f64,
}

impl PotentialSpec {
    pub fn new(a: MatrixFunction, a_inf: DMatrix<f64>, beta: f64) -> Result<Self> {
        if a_inf.nrows() != a.n() || a_inf.ncols() != a.n() {
            return Err(Error::Dimension(format!(
                "A is {0}x{0} but A_inf is {1}x{2}",
                a.n(),
                a_inf.nrows(),
                a_inf.ncols()
            )));
        }
        if !(beta > 1.0) {
            return Err(Error::Config(format!("beta must exceed 1, got {beta}")));
        }
        Ok(PotentialSpec { a, a_inf, beta })
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn is_even(&self) -> bool {
        self.a.evenness_defect() <= 1e-13
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericsConfig {
    pub x_max: f64,
    /// Matching radius used by the integral representation check.
    pub r: f64,
    pub ode_tol: f64,
    pub sigma_tol: f64,
    /// Spacing of the exported eigenfunction grid.
    pub grid_step: f64,
    pub scan_points: usize,
    pub margin_min: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            x_max: 30.0,
            r: 5.0,
            ode_tol: 1e-10,
            sigma_tol: 1e-7,
            grid_step: 1e-2,
            scan_points: 64,
            margin_min: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub potential: PotentialSpec,
    pub perturbation: MatrixFunction,
    pub lambda_window: (f64, f64),
    pub numerics: NumericsConfig,
}

impl Scenario {
    pub fn new(
        potential: PotentialSpec,
        perturbation: MatrixFunction,
        lambda_window: (f64, f64),
        numerics: NumericsConfig,
    ) -> Result<Self> {
        if perturbation.n() != potential.n() {
            return Err(Error::Dimension(format!(
                "B is {0}x{0} but A is {1}x{1}",
                perturbation.n(),
                potential.n()
            )));
        }
        let (lo, hi) = lambda_window;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("invalid lambda window [{lo}, {hi}]")));
        }
        if !(numerics.x_max > 0.0 && numerics.ode_tol > 0.0 && numerics.sigma_tol > 0.0) {
            return Err(Error::Config("numerics must be positive".into()));
        }
        Ok(Scenario {
            potential,
            perturbation,
            lambda_window,
            numerics,
        })
    }

    /// The worked two-channel example: channel one carries the potential
    /// `1 − 2 sech²x` with bound state `sech x` at λ = 0, channel two is the
    /// free operator with continuous spectrum from −1.
    pub fn cosh_example() -> Self {
        let a = MatrixFunction::diagonal(&[
            Expression::parse("1 - 2/cosh(x)^2").expect("builtin expression"),
            Expression::constant(-1.0),
        ]);
        let a_inf = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let potential = PotentialSpec::new(a, a_inf, 2.0).expect("builtin potential");
        Scenario {
            potential,
            perturbation: MatrixFunction::zero(2),
            lambda_window: (-0.5, 0.5),
            numerics: NumericsConfig::default(),
        }
    }

    pub fn n(&self) -> usize {
        self.potential.n()
    }

    /// Reference spectral parameter: the centre of the window.
    pub fn lambda0(&self) -> f64 {
        0.5 * (self.lambda_window.0 + self.lambda_window.1)
    }

    pub fn with_perturbation(&self, b: MatrixFunction) -> Self {
        Scenario {
            perturbation: b,
            ..self.clone()
        }
    }

    pub fn unperturbed(&self) -> Self {
        self.with_perturbation(MatrixFunction::zero(self.n()))
    }

    /// Mirror image `x ↦ −x` of both potential and perturbation.
    pub fn reflected(&self) -> Self {
        let mut s = self.clone();
        s.potential.a = self.potential.a.reflected();
        s.perturbation = self.perturbation.reflected();
        s
    }

    pub fn asymptotic(&self, lambda: f64) -> Result<AsymptoticData> {
        AsymptoticData::with_margin(&self.potential.a_inf, lambda, self.numerics.margin_min)
    }

    pub fn is_even(&self) -> bool {
        self.potential.is_even() && self.perturbation.evenness_defect() <= 1e-13
    }
}

/// Result of an `X_β` norm evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XbetaNorm {
    pub value: f64,
    pub argmax: f64,
    /// The weighted values were still growing over the outermost decade of
    /// the grid, so the norm is taken to be infinite.
    pub infinite: bool,
}

/// Dense core grid on `[−x_max, x_max]` plus six log-spaced decades of
/// tail points on each side.
pub fn xbeta_grid(x_max: f64, step: f64) -> Vec<f64> {
    let count = (2.0 * x_max / step).ceil() as usize;
    let h = 2.0 * x_max / count as f64;
    let mut grid: Vec<f64> = (0..=count).map(|i| -x_max + h * i as f64).collect();
    for k in 1..=60 {
        let x = x_max * 10f64.powf(k as f64 / 10.0);
        grid.push(x);
        grid.push(-x);
    }
    grid.sort_by(f64::total_cmp);
    grid
}

/// `sup_x ‖F(x) − A_ref‖₂ (1+|x|)^β` over the grid.
pub fn xbeta_norm(
    f: &MatrixFunction,
    a_ref: &DMatrix<f64>,
    beta: f64,
    grid: &[f64],
) -> Result<XbetaNorm> {
    let weighted: Vec<(f64, f64)> = grid
        .iter()
        .map(|&x| {
            let fx = f.eval(x)?;
            Ok((x, spectral_norm(&(fx - a_ref)) * (1.0 + x.abs()).powf(beta)))
        })
        .collect::<Result<_>>()?;
    let (argmax, value) =
        weighted.iter().copied().fold(
            (0.0, 0.0),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        );

    let reach = grid.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let growing_side = |sign: f64| {
        let mut tail: Vec<(f64, f64)> = weighted
            .iter()
            .copied()
            .filter(|(x, _)| x * sign > 0.0 && x.abs() >= reach / 10.0)
            .collect();
        tail.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
        match (tail.first(), tail.last()) {
            (Some(first), Some(last)) if tail.len() >= 2 => {
                last.1 > 0.0 && last.1 > first.1 * (1.0 + 1e-6)
            }
            _ => false,
        }
    };
    Ok(XbetaNorm {
        value,
        argmax,
        infinite: growing_side(1.0) || growing_side(-1.0),
    })
}

/// `M(x; λ, B) = [[0, I], [A(x) + B(x) − λI, 0]]`.
#[allow(non_snake_case)]
pub fn assemble_M(
    spec: &PotentialSpec,
    b: &MatrixFunction,
    lambda: f64,
    x: f64,
) -> Result<DMatrix<f64>> {
    let n = spec.n();
    let v = spec.a.eval(x)? + b.eval(x)?;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, n + i)] = 1.0;
        for j in 0..n {
            m[(n + i, j)] = v[(i, j)];
        }
        m[(n + i, i)] -= lambda;
    }
    Ok(m)
}

/// `L(x; λ, B) = [[0, 0], [A(x) − A∞ + (λ₀ − λ)I + B(x), 0]]`, so that
/// `M(x; λ, B) = M∞(λ₀) + L(x; λ, B)`.
#[allow(non_snake_case)]
pub fn assemble_L(
    spec: &PotentialSpec,
    b: &MatrixFunction,
    lambda: f64,
    lambda0: f64,
    x: f64,
) -> Result<DMatrix<f64>> {
    let n = spec.n();
    let v = spec.a.eval(x)? - &spec.a_inf + b.eval(x)?;
    let mut l = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            l[(n + i, j)] = v[(i, j)];
        }
        l[(n + i, i)] += lambda0 - lambda;
    }
    Ok(l)
}
