//! Fixed-precision number formatting shared by the CSV and JSON exports.

use serde_json::value::RawValue;

/// 17 significant digits in exponent form.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// A JSON number with 17 significant digits; non-finite values become `null`.
pub fn json_number(v: f64) -> Box<RawValue> {
    let text = if v.is_finite() {
        format_float(v)
    } else {
        "null".to_string()
    };
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

pub fn json_numbers(v: &[f64]) -> Vec<Box<RawValue>> {
    v.iter().copied().map(json_number).collect()
}
