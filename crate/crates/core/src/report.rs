//! Report plumbing: canonical JSON rendering, extended reals, tolerance
//! blocks, digests. Identical command + input + seed must produce identical
//! payload bytes, so every float in a report funnels through [`fmt_g17`].

use serde::{Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Extended real for report fields that may be infinite. Finite values
/// serialize as JSON numbers, infinities as the strings `"inf"` / `"-inf"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ExtReal(pub f64);

impl ExtReal {
    pub const INF: ExtReal = ExtReal(f64::INFINITY);

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        ExtReal(v)
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else if self.0.is_nan() {
            s.serialize_str("nan")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

/// Formats a finite double like C's `%.17g`: 17 significant digits, trailing
/// zeros trimmed, fixed notation while the decimal exponent lies in [-4, 16],
/// scientific notation otherwise.
pub fn fmt_g17(v: f64) -> String {
    debug_assert!(v.is_finite());
    if v == 0.0 {
        return "0".to_string();
    }
    let formatted = format!("{:.16e}", v.abs());
    let (mantissa, exp) = formatted.split_once('e').expect("float in e-notation");
    let x: i32 = exp.parse().expect("decimal exponent");
    let all_digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let digits = all_digits.trim_end_matches('0');
    // nonzero floats normalize to a nonzero leading digit
    debug_assert!(!digits.is_empty());

    let mut out = String::new();
    if v < 0.0 {
        out.push('-');
    }
    if (-4..17).contains(&x) {
        if x >= 0 {
            let int_len = (x + 1) as usize;
            if digits.len() <= int_len {
                out.push_str(digits);
                for _ in digits.len()..int_len {
                    out.push('0');
                }
            } else {
                out.push_str(&digits[..int_len]);
                out.push('.');
                out.push_str(&digits[int_len..]);
            }
        } else {
            out.push_str("0.");
            for _ in 0..(-x - 1) {
                out.push('0');
            }
            out.push_str(digits);
        }
    } else {
        out.push_str(&digits[..1]);
        if digits.len() > 1 {
            out.push('.');
            out.push_str(&digits[1..]);
        }
        out.push('e');
        out.push(if x >= 0 { '+' } else { '-' });
        let xa = x.unsigned_abs();
        if xa < 10 {
            out.push('0');
        }
        out.push_str(&xa.to_string());
    }
    out
}

/// Renders a JSON value canonically: keys sorted, no whitespace, floats via
/// [`fmt_g17`]. serde_json's default map is a BTreeMap, so object keys
/// arrive sorted already.
pub fn canon_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v);
    out
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(num) => {
            if let Some(i) = num.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = num.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&fmt_g17(num.as_f64().expect("finite float")));
            }
        }
        Value::String(s) => write_str(out, s),
        Value::Array(items) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (k, (key, item)) in map.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write_str(out, key);
                out.push(':');
                write_value(out, item);
            }
            out.push('}');
        }
    }
}

fn write_str(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                out.push_str(&format!("\\u{:04x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Numeric thresholds shared across the toolkit. Every report embeds the
/// block actually used.
#[derive(Clone, Debug, Serialize)]
pub struct Tolerances {
    /// Feasibility: residual at or below this counts as feasible.
    pub tol_feas: f64,
    /// Activity: |h_i| at or below this counts as active.
    pub tol_act: f64,
    /// Relative rank threshold on singular values.
    pub tol_rank: f64,
    /// LP optimum at or below this certifies positive-linear dependence.
    pub tol_pld: f64,
    /// Stand-in for strict positivity of multipliers.
    pub eps_pos: f64,
    /// Stationarity residual accepted in multiplier feasibility.
    pub mult_residual: f64,
    /// Accepted gap between reported and true projection distance.
    pub dist_tol: f64,
    /// Stationarity target of the penalty polish.
    pub stationarity: f64,
    /// Deduplication radius for solution representatives.
    pub dedup: f64,
    /// Objective window for collecting near-optimal representatives.
    pub value_window: f64,
    /// Margin below zero that counts as a calmness violation.
    pub delta_viol: f64,
    /// Slope above this flags a marginal-function discontinuity.
    pub slope_cap: f64,
    /// Largest active set enumerated exhaustively.
    pub subset_cap: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_feas: 1e-6,
            tol_act: 1e-6,
            tol_rank: 1e-8,
            tol_pld: 1e-8,
            eps_pos: 1e-6,
            mult_residual: 1e-7,
            dist_tol: 1e-5,
            stationarity: 1e-9,
            dedup: 1e-4,
            value_window: 1e-6,
            delta_viol: 1e-6,
            slope_cap: 1e3,
            subset_cap: 12,
        }
    }
}

/// Hex SHA-256 of a byte string; used as the input digest in reports.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{:02x}", b));
    }
    out
}

/// Envelope for one CLI invocation. `wall_ms` is informational and excluded
/// from determinism guarantees; `payload` bytes are covered by them.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub input_digest: String,
    pub tolerances: Tolerances,
    pub payload: Value,
    pub wall_ms: u64,
}

impl RunReport {
    /// Canonical bytes of the full envelope.
    pub fn render(&self) -> String {
        canon_json(&serde_json::to_value(self).expect("report serializes"))
    }

    /// Canonical bytes of the payload alone, the determinism unit.
    pub fn payload_bytes(&self) -> String {
        canon_json(&self.payload)
    }
}
