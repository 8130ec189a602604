//! The `run.json` sidecar. It is the only output that may differ between
//! two identical runs (wall time).

use std::time::Instant;

use eigenlab::output::json_number;
use serde::Serialize;
use serde_json::value::RawValue;

use crate::commands::{Input, Outcome};

#[derive(Serialize)]
struct Numerics {
    x_max: Box<RawValue>,
    #[serde(rename = "R")]
    r: Box<RawValue>,
    ode_tol: Box<RawValue>,
    sigma_tol: Box<RawValue>,
    grid_step: Box<RawValue>,
    scan_points: usize,
    margin_min: Box<RawValue>,
}

#[derive(Serialize)]
pub struct RunRecord {
    command: String,
    config: String,
    scenario_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    family_sha256: Option<String>,
    version: String,
    numerics: Numerics,
    threads: usize,
    wall_time_s: Box<RawValue>,
    exit_code: u8,
    outputs: Vec<String>,
    notes: Vec<String>,
}

impl RunRecord {
    pub fn new(command: &str, input: &Input, outcome: &Outcome, started: Instant) -> Self {
        let n = &input.scenario.numerics;
        let family_sha256 = outcome
            .digests
            .iter()
            .find(|(k, _)| k == "family_sha256")
            .map(|(_, v)| v.clone());
        RunRecord {
            command: command.to_string(),
            config: input.path.display().to_string(),
            scenario_sha256: input.digest.clone(),
            family_sha256,
            version: env!("CARGO_PKG_VERSION").to_string(),
            numerics: Numerics {
                x_max: json_number(n.x_max),
                r: json_number(n.r),
                ode_tol: json_number(n.ode_tol),
                sigma_tol: json_number(n.sigma_tol),
                grid_step: json_number(n.grid_step),
                scan_points: n.scan_points,
                margin_min: json_number(n.margin_min),
            },
            threads: input.threads,
            wall_time_s: json_number(started.elapsed().as_secs_f64()),
            exit_code: outcome.code,
            outputs: outcome.output_names(),
            notes: outcome.notes.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run record serializes") + "\n"
    }
}
