//! Scenario and family files, and the pre-flight validation report.

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::asymptotic::eig_sym;
use crate::error::{Error, Result};
use crate::model::{
    xbeta_grid, xbeta_norm, MatrixFunction, NumericsConfig, PotentialSpec, Scenario, XbetaNorm,
};

/// A matrix entry given either as an expression or as a plain number.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Entry {
    Number(f64),
    Text(String),
}

impl Entry {
    fn to_source(&self) -> String {
        match self {
            Entry::Number(v) => format!("{v:?}"),
            Entry::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NumericsFile {
    x_max: Option<f64>,
    #[serde(rename = "R")]
    r: Option<f64>,
    ode_tol: Option<f64>,
    sigma_tol: Option<f64>,
    grid_step: Option<f64>,
    scan_points: Option<usize>,
    margin_min: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    builtin: Option<String>,
    n: Option<usize>,
    #[serde(rename = "A")]
    a: Option<Vec<Vec<Entry>>>,
    #[serde(rename = "A_inf")]
    a_inf: Option<Vec<Vec<f64>>>,
    beta: Option<f64>,
    #[serde(rename = "B")]
    b: Option<Vec<Vec<Entry>>>,
    lambda_window: Option<[f64; 2]>,
    numerics: Option<NumericsFile>,
}

fn matrix_function(rows: &[Vec<Entry>], n: usize, what: &str) -> Result<MatrixFunction> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("{what} must be {n}x{n}")));
    }
    let text: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.iter().map(Entry::to_source).collect())
        .collect();
    MatrixFunction::parse(&text)
}

fn constant_matrix(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("A_inf must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn apply_numerics(base: NumericsConfig, file: Option<NumericsFile>) -> NumericsConfig {
    let Some(f) = file else { return base };
    NumericsConfig {
        x_max: f.x_max.unwrap_or(base.x_max),
        r: f.r.unwrap_or(base.r),
        ode_tol: f.ode_tol.unwrap_or(base.ode_tol),
        sigma_tol: f.sigma_tol.unwrap_or(base.sigma_tol),
        grid_step: f.grid_step.unwrap_or(base.grid_step),
        scan_points: f.scan_points.unwrap_or(base.scan_points),
        margin_min: f.margin_min.unwrap_or(base.margin_min),
    }
}

/// Parses a scenario document. `{"builtin": "cosh_example"}` expands to the
/// two-channel example; `B`, `lambda_window` and `numerics` may override it.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario file: {e}")))?;

    let base = match file.builtin.as_deref() {
        Some("cosh_example") => {
            if file.a.is_some() || file.a_inf.is_some() || file.beta.is_some() {
                return Err(Error::Config(
                    "a builtin scenario fixes A, A_inf and beta".into(),
                ));
            }
            if file.n.is_some_and(|n| n != 2) {
                return Err(Error::Config("cosh_example has n = 2".into()));
            }
            Scenario::cosh_example()
        }
        Some(other) => return Err(Error::Config(format!("unknown builtin scenario {other:?}"))),
        None => {
            let missing = |k: &str| Error::Config(format!("missing key {k:?}"));
            let n = file.n.ok_or_else(|| missing("n"))?;
            if n == 0 {
                return Err(Error::Config("n must be positive".into()));
            }
            let a = matrix_function(file.a.as_ref().ok_or_else(|| missing("A"))?, n, "A")?;
            let a_inf = constant_matrix(file.a_inf.as_ref().ok_or_else(|| missing("A_inf"))?, n)?;
            let beta = file.beta.ok_or_else(|| missing("beta"))?;
            let window = file.lambda_window.ok_or_else(|| missing("lambda_window"))?;
            let potential = PotentialSpec::new(a, a_inf, beta)?;
            Scenario::new(
                potential,
                MatrixFunction::zero(n),
                (window[0], window[1]),
                NumericsConfig::default(),
            )?
        }
    };

    let n = base.n();
    let perturbation = match &file.b {
        Some(rows) => matrix_function(rows, n, "B")?,
        None => base.perturbation.clone(),
    };
    let window = file
        .lambda_window
        .map(|w| (w[0], w[1]))
        .unwrap_or(base.lambda_window);
    let numerics = apply_numerics(base.numerics, file.numerics);
    Scenario::new(base.potential, perturbation, window, numerics)
}

pub fn load_scenario(path: &std::path::Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text)
}

/// A family file is a JSON list of matrices in the same format as `B`.
pub fn parse_family(text: &str, n: usize) -> Result<Vec<MatrixFunction>> {
    let rows: Vec<Vec<Vec<Entry>>> =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("family file: {e}")))?;
    rows.iter()
        .enumerate()
        .map(|(i, m)| matrix_function(m, n, &format!("family member {i}")))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub n: usize,
    /// Eigenvalues of `A∞`, ascending.
    pub a: Vec<f64>,
    pub lambda0: f64,
    pub m: usize,
    pub mu_min: f64,
    /// Bottom `a_1` of the continuous spectrum `[a_1, ∞)`.
    pub spectrum_edge: f64,
    pub codim: usize,
    pub potential_xbeta: XbetaNorm,
    pub perturbation_xbeta: XbetaNorm,
    /// Distance from the window to the nearest `a_i`.
    pub window_margin: f64,
    /// `max ‖A(±X_max) − A∞‖₂`.
    pub tail_mismatch: f64,
}

/// Checks the standing assumptions on a scenario.
pub fn validate(scenario: &Scenario) -> Result<ValidationReport> {
    let spec = &scenario.potential;
    let num = &scenario.numerics;
    let (a, _) = eig_sym(&spec.a_inf)?;
    let (lo, hi) = scenario.lambda_window;

    let window_margin = a
        .iter()
        .map(|&ai| {
            if ai < lo {
                lo - ai
            } else if ai > hi {
                ai - hi
            } else {
                0.0
            }
        })
        .fold(f64::INFINITY, f64::min);
    if window_margin < num.margin_min {
        return Err(Error::AssumptionViolated(format!(
            "lambda window [{lo}, {hi}] is within {window_margin:e} of the spectrum of A_inf {a:?}"
        )));
    }
    let asym = scenario.asymptotic(scenario.lambda0())?;

    let grid = xbeta_grid(num.x_max, num.grid_step.min(0.1));
    let potential_xbeta = xbeta_norm(&spec.a, &spec.a_inf, spec.beta, &grid)?;
    if potential_xbeta.infinite {
        return Err(Error::AssumptionViolated(format!(
            "A - A_inf does not decay like (1+|x|)^-{}",
            spec.beta
        )));
    }
    let zero = DMatrix::zeros(spec.n(), spec.n());
    let perturbation_xbeta = xbeta_norm(&scenario.perturbation, &zero, spec.beta, &grid)?;
    if perturbation_xbeta.infinite {
        return Err(Error::AssumptionViolated(format!(
            "B does not decay like (1+|x|)^-{}",
            spec.beta
        )));
    }

    let tail_mismatch = [num.x_max, -num.x_max]
        .iter()
        .map(|&x| {
            Ok(crate::linalg::spectral_norm(
                &(spec.a.eval(x)? - &spec.a_inf),
            ))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    if tail_mismatch > num.sigma_tol / 10.0 {
        return Err(Error::AssumptionViolated(format!(
            "|A(±x_max) - A_inf| = {tail_mismatch:e} exceeds sigma_tol/10; increase x_max"
        )));
    }

    Ok(ValidationReport {
        n: spec.n(),
        spectrum_edge: a[0],
        a,
        lambda0: scenario.lambda0(),
        m: asym.m,
        mu_min: asym.mu_min,
        codim: 2 * asym.m,
        potential_xbeta,
        perturbation_xbeta,
        window_margin,
        tail_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_report() {
        let s = parse_scenario(r#"{"builtin": "cosh_example"}"#).unwrap();
        let r = validate(&s).unwrap();
        assert_eq!(r.a, vec![-1.0, 1.0]);
        assert_eq!((r.m, r.codim), (1, 2));
        assert_eq!(r.mu_min, 1.0);
        assert_eq!(r.spectrum_edge, -1.0);
        assert!(!r.potential_xbeta.infinite);
    }

    #[test]
    fn builtin_overrides() {
        let s = parse_scenario(
            r#"{"builtin": "cosh_example", "B": [["-0.1*sech(x)^2", 0], [0, 0]],
                "lambda_window": [-0.2, 0.2], "numerics": {"x_max": 25, "R": 4}}"#,
        )
        .unwrap();
        assert_eq!(s.lambda_window, (-0.2, 0.2));
        assert_eq!(s.numerics.x_max, 25.0);
        assert_eq!(s.numerics.r, 4.0);
        assert!((s.perturbation.eval(0.0).unwrap()[(0, 0)] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn explicit_scenario_round_trip() {
        let s = parse_scenario(
            r#"{"n": 2, "A": [["1 - 2/cosh(x)^2", "0"], ["0", "-1"]],
                "A_inf": [[1, 0], [0, -1]], "beta": 2, "lambda_window": [-0.5, 0.5]}"#,
        )
        .unwrap();
        let b = Scenario::cosh_example();
        for x in [-3.0, 0.0, 0.7] {
            assert_eq!(
                s.potential.a.eval(x).unwrap(),
                b.potential.a.eval(x).unwrap()
            );
        }
    }

    #[test]
    fn window_touching_threshold_is_rejected() {
        let s =
            parse_scenario(r#"{"builtin": "cosh_example", "lambda_window": [0.5, 1.5]}"#).unwrap();
        assert!(matches!(validate(&s), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn asymmetric_entry_is_reported() {
        let err = parse_scenario(
            r#"{"n": 2, "A": [["1", "x"], ["0", "-1"]], "A_inf": [[1, 0], [0, -1]],
                "beta": 2, "lambda_window": [-0.5, 0.5]}"#,
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::Asymmetric { i: 0, j: 1, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn malformed_files() {
        assert!(matches!(parse_scenario("{"), Err(Error::Config(_))));
        assert!(matches!(
            parse_scenario(r#"{"builtin": "cosh_example", "extra": 1}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_scenario(r#"{"builtin": "cosh_example", "B": [["foo(x)", 0], [0, 0]]}"#),
            Err(Error::Expr(_))
        ));
    }

    #[test]
    fn slowly_decaying_potential_fails_validation() {
        let s = parse_scenario(
            r#"{"n": 1, "A": [["1 + 1/(1 + abs(x))"]], "A_inf": [[1]], "beta": 2,
                "lambda_window": [0.0, 0.5]}"#,
        )
        .unwrap();
        assert!(matches!(validate(&s), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn family_file() {
        let fam = parse_family(
            r#"[[[0, "exp(-x^2)"], ["exp(-x^2)", 0]], [["sech(x)^2", 0], [0, 0]]]"#,
            2,
        )
        .unwrap();
        assert_eq!(fam.len(), 2);
        assert!(parse_family("[]", 2).unwrap().is_empty());
        assert!(parse_family(r#"[[["1"]]]"#, 2).is_err());
    }
}
