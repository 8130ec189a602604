use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use eigenlab::config::{
    load_scenario, parse_family, validate as check_assumptions, ValidationReport,
};
use eigenlab::matching::{detect_with, Detection};
use eigenlab::output::{format_float, json_number, json_numbers};
use eigenlab::perturbation::{
    base_eigenpair_with, build_adjoint_frame, default_family, melnikov_matrix,
    persistence_probe_with, MelnikovReport,
};
use eigenlab::{Error, MatrixFunction, Scenario};
use serde::Serialize;
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

pub const EXIT_NOT_FOUND: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_ASSUMPTION: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: &str) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_)
            | Error::Expr(_)
            | Error::Asymmetric { .. }
            | Error::NotSymmetric(_)
            | Error::Dimension(_) => EXIT_CONFIG,
            Error::AssumptionViolated(_) | Error::EmptyFrame => EXIT_ASSUMPTION,
            _ => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Everything a command produced. Nothing is written until the command has
/// finished, so a failing command leaves the output directory untouched.
#[derive(Debug, Default)]
pub struct Outcome {
    pub code: u8,
    pub files: Vec<(String, String)>,
    /// Lines for stdout.
    pub report: Vec<String>,
    /// Lines for stderr.
    pub notes: Vec<String>,
    /// Content hashes of auxiliary inputs, by key.
    pub digests: Vec<(String, String)>,
}

impl Outcome {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }

    pub fn output_names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }
}

pub struct Input {
    pub path: PathBuf,
    pub digest: String,
    pub scenario: Scenario,
    pub threads: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

impl Input {
    pub fn load(path: &Path, threads: usize) -> Result<Self, Failure> {
        let bytes = std::fs::read(path).map_err(|e| Failure {
            code: EXIT_CONFIG,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let scenario = load_scenario(path)?;
        Ok(Input {
            path: path.to_path_buf(),
            digest: sha256_hex(&bytes),
            scenario,
            threads,
        })
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

#[derive(Serialize)]
struct ValidateJson {
    n: usize,
    a: Vec<Box<RawValue>>,
    lambda0: Box<RawValue>,
    m: usize,
    mu_min: Box<RawValue>,
    spectrum_edge: Box<RawValue>,
    codim: usize,
    potential_xbeta: Box<RawValue>,
    perturbation_xbeta: Box<RawValue>,
    window_margin: Box<RawValue>,
    tail_mismatch: Box<RawValue>,
}

fn validation_lines(r: &ValidationReport) -> Vec<String> {
    let a: Vec<String> = r.a.iter().map(|v| format!("{v}")).collect();
    vec![
        format!("a = ({})", a.join(", ")),
        format!("m = {}", r.m),
        format!("mu_min = {}", r.mu_min),
        format!("continuous spectrum = [{}, inf)", r.spectrum_edge),
        format!("codimension 2m = {}", r.codim),
    ]
}

pub fn validate(input: &Input) -> Result<Outcome, Failure> {
    let r = check_assumptions(&input.scenario)?;
    let doc = ValidateJson {
        n: r.n,
        a: json_numbers(&r.a),
        lambda0: json_number(r.lambda0),
        m: r.m,
        mu_min: json_number(r.mu_min),
        spectrum_edge: json_number(r.spectrum_edge),
        codim: r.codim,
        potential_xbeta: json_number(r.potential_xbeta.value),
        perturbation_xbeta: json_number(r.perturbation_xbeta.value),
        window_margin: json_number(r.window_margin),
        tail_mismatch: json_number(r.tail_mismatch),
    };
    Ok(Outcome {
        code: 0,
        files: vec![("validate.json".into(), to_json(&doc))],
        report: validation_lines(&r),
        ..Outcome::default()
    })
}

#[derive(Serialize)]
struct CandidateJson {
    lambda: Box<RawValue>,
    sigma_min: Box<RawValue>,
    accepted: bool,
}

#[derive(Serialize)]
struct DetectJson {
    lambda: Box<RawValue>,
    sigma_min: Box<RawValue>,
    decay_rate: Box<RawValue>,
    accepted: bool,
    candidates: Vec<CandidateJson>,
}

pub fn detect(input: &Input, emit_curve: bool) -> Result<Outcome, Failure> {
    check_assumptions(&input.scenario)?;
    let report = detect_with(&input.scenario, input.threads)?;
    let candidates = report
        .candidates
        .iter()
        .map(|c| CandidateJson {
            lambda: json_number(c.lambda),
            sigma_min: json_number(c.sigma_min),
            accepted: c.accepted,
        })
        .collect();

    let mut out = Outcome::default();
    let doc = match &report.detection {
        Detection::Found(pair) => {
            out.report.push(format!(
                "eigenvalue lambda = {} (sigma_min {}, decay rate {})",
                format_float(pair.lambda),
                format_float(pair.sigma_min),
                format_float(pair.decay_rate)
            ));
            DetectJson {
                lambda: json_number(pair.lambda),
                sigma_min: json_number(pair.sigma_min),
                decay_rate: json_number(pair.decay_rate),
                accepted: true,
                candidates,
            }
        }
        other => {
            out.code = EXIT_NOT_FOUND;
            let best = report.best();
            match other {
                Detection::MultipleCandidates(c) => out.report.push(format!(
                    "{} eigenvalue candidates; no unique eigenvalue",
                    c.len()
                )),
                _ => out.report.push(format!(
                    "no eigenvalue in the window (smallest sigma_min {})",
                    best.map_or("n/a".into(), |b| format_float(b.sigma_min))
                )),
            }
            DetectJson {
                lambda: json_number(best.map_or(f64::NAN, |b| b.lambda)),
                sigma_min: json_number(best.map_or(f64::NAN, |b| b.sigma_min)),
                decay_rate: json_number(f64::NAN),
                accepted: false,
                candidates,
            }
        }
    };
    out.files.push(("detect.json".into(), to_json(&doc)));
    if let Some(pair) = report.eigenpair() {
        out.files.push(("eigenfunction.csv".into(), pair.to_csv()));
    }
    if emit_curve {
        out.files.push(("curve.csv".into(), report.curve.to_csv()));
    }
    Ok(out)
}

pub fn sweep_grid(from: f64, to: f64, steps: usize) -> Result<Vec<f64>, Failure> {
    if steps == 0 || !from.is_finite() || !to.is_finite() {
        return Err(Failure::usage(
            "--steps must be positive and --from/--to finite",
        ));
    }
    if steps == 1 {
        if from != to {
            return Err(Failure::usage("--steps 1 needs --from equal to --to"));
        }
        return Ok(vec![from]);
    }
    if !(from < to) {
        return Err(Failure::usage("--from must be below --to"));
    }
    Ok((0..steps)
        .map(|i| {
            let t = i as f64 / (steps - 1) as f64;
            from * (1.0 - t) + to * t
        })
        .collect())
}

fn csv_float(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite())
        .map(format_float)
        .unwrap_or_default()
}

pub fn sweep(
    input: &Input,
    param: &str,
    from: f64,
    to: f64,
    steps: usize,
) -> Result<Outcome, Failure> {
    if param != "s" {
        return Err(Failure::usage(&format!(
            "unknown sweep parameter {param:?}; the family is B(s) = s*B"
        )));
    }
    let grid = sweep_grid(from, to, steps)?;
    let b_dir = &input.scenario.perturbation;
    if b_dir.is_zero() {
        return Err(Failure::usage(
            "sweep needs a nonzero B in the scenario to use as the direction B(s) = s*B",
        ));
    }
    check_assumptions(&input.scenario)?;
    let rows = persistence_probe_with(&input.scenario, b_dir, &grid, input.threads)?;

    let mut out = Outcome::default();
    let mut csv = String::from("s,detected,lambda,prediction,sigma_min_at_prediction\n");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            format_float(row.epsilon),
            row.detected.is_some(),
            csv_float(row.detected),
            format_float(row.prediction),
            csv_float(row.sigma_at_prediction)
        );
        if let Some(why) = &row.failure {
            out.notes.push(format!("s = {}: {why}", row.epsilon));
        }
    }
    if rows.iter().all(|r| r.failure.is_some()) {
        return Err(Failure {
            code: EXIT_NUMERICAL,
            message: format!("every sweep row failed; first: {}", out.notes[0]),
        });
    }
    let found = rows.iter().filter(|r| r.detected.is_some()).count();
    out.report.push(format!(
        "{found} of {} rows detected an eigenvalue",
        rows.len()
    ));
    out.files.push(("sweep.csv".into(), csv));
    Ok(out)
}

#[derive(Serialize)]
struct TangentJson {
    codim: usize,
    rank: usize,
    members: Vec<String>,
    dimension: usize,
    tangent_basis: Vec<Vec<Box<RawValue>>>,
}

type Family = (Vec<String>, Vec<MatrixFunction>, Option<String>);

fn load_family(n: usize, path: Option<&Path>) -> Result<Family, Failure> {
    let Some(p) = path else {
        let (names, members) = default_family(n).into_iter().map(|m| (m.name, m.b)).unzip();
        return Ok((names, members, None));
    };
    let bytes = std::fs::read(p).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: format!("cannot read {}: {e}", p.display()),
    })?;
    let text =
        std::str::from_utf8(&bytes).map_err(|_| Failure::usage("family file is not UTF-8"))?;
    let members = parse_family(text, n)?;
    let names = (0..members.len()).map(|j| format!("member_{j}")).collect();
    Ok((names, members, Some(sha256_hex(&bytes))))
}

fn certificate(report: &MelnikovReport) -> Vec<String> {
    vec![format!(
        "codimension certificate: rank {} of expected {}",
        report.rank, report.codim
    )]
}

pub fn melnikov(input: &Input, family: Option<&Path>, tangent: bool) -> Result<Outcome, Failure> {
    let (names, members, family_digest) = load_family(input.scenario.n(), family)?;
    let base = input.scenario.unperturbed();
    check_assumptions(&base)?;
    let pair = base_eigenpair_with(&base, input.threads)?;
    let frame = build_adjoint_frame(&base, &pair)?;
    let report = melnikov_matrix(&frame, &pair, &members)?;

    let mut out = Outcome {
        report: certificate(&report),
        digests: family_digest
            .map(|d| vec![("family_sha256".to_string(), d)])
            .unwrap_or_default(),
        ..Outcome::default()
    };
    if !report.is_full_rank() {
        out.code = EXIT_NOT_FOUND;
        out.notes.push(format!(
            "family not rich: its {} members span only {} of the {} Melnikov directions",
            members.len(),
            report.rank,
            report.codim
        ));
    }
    out.files.push(("melnikov.json".into(), report.to_json()));
    if tangent {
        let doc = TangentJson {
            codim: report.codim,
            rank: report.rank,
            dimension: report.tangent_basis.len(),
            members: names,
            tangent_basis: report
                .tangent_basis
                .iter()
                .map(|v| json_numbers(v.as_slice()))
                .collect(),
        };
        out.files.push(("tangent.json".into(), to_json(&doc)));
    }
    Ok(out)
}
