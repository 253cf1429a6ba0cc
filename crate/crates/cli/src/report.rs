//! CSV tables. Bodies depend only on the config and seed so reruns are
//! byte-identical.

use byzsprt::montecarlo::GammaEstimate;
use byzsprt::{ErrorEstimate, OperatingPoint};
use serde::Serialize;

const POINT_COLUMNS: &str =
    "threshold,alpha_hat,alpha_stderr,beta_hat,beta_stderr,asn0,asn1,trunc_rate,gamma_hat,gamma_normalized,config_hash";

pub struct Csv {
    hash: String,
    text: String,
}

impl Csv {
    pub fn new(hash: &str, label_column: Option<&str>) -> Self {
        let mut text = String::new();
        if let Some(label) = label_column {
            text.push_str(label);
            text.push(',');
        }
        text.push_str(POINT_COLUMNS);
        text.push('\n');
        Self { hash: hash.to_string(), text }
    }

    pub fn validation(hash: &str) -> Self {
        Self {
            hash: hash.to_string(),
            text: "threshold,quantity,estimator,oracle,estimate,stderr,z,config_hash\n".into(),
        }
    }

    pub fn point_row(
        &mut self,
        label: Option<&str>,
        threshold: f64,
        point: Option<&OperatingPoint>,
        gamma: Option<&GammaEstimate>,
        normalized: Option<f64>,
    ) {
        let mut fields: Vec<String> = label.map(|l| l.to_string()).into_iter().collect();
        fields.push(threshold.to_string());
        match point {
            Some(p) => fields.extend([
                format_log(p.alpha.log_value),
                format_log(log_stderr(&p.alpha)),
                format_log(p.beta.log_value),
                format_log(log_stderr(&p.beta)),
                p.asn0.mean.to_string(),
                p.asn1.mean.to_string(),
                p.trunc_rate.to_string(),
            ]),
            None => fields.extend(std::iter::repeat_n(String::new(), 7)),
        }
        fields.push(gamma.map(|g| g.value.to_string()).unwrap_or_default());
        fields.push(normalized.map(|g| g.to_string()).unwrap_or_default());
        fields.push(self.hash.clone());
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn validation_row(&mut self, row: &ValidationRow) {
        self.text.push_str(&format!(
            "{},{},{},{:.9e},{:.9e},{:.3e},{:.3},{}\n",
            row.threshold, row.quantity, row.estimator, row.oracle, row.estimate, row.stderr, row.z, self.hash
        ));
    }

    pub fn finish(self) -> String {
        self.text
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationRow {
    pub threshold: f64,
    pub quantity: String,
    pub estimator: String,
    pub oracle: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub z: f64,
}

impl ValidationRow {
    pub fn new(threshold: f64, quantity: &str, estimator: &str, oracle: f64, estimate: f64, stderr: f64) -> Self {
        let diff = estimate - oracle;
        let z = if stderr > 0.0 {
            diff / stderr
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        };
        Self {
            threshold,
            quantity: quantity.into(),
            estimator: estimator.into(),
            oracle,
            estimate,
            stderr,
            z,
        }
    }
}

fn log_stderr(e: &ErrorEstimate) -> f64 {
    if e.rel_stderr > 0.0 {
        e.log_value + e.rel_stderr.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Scientific notation for `exp(log_value)`, exact even far below the
/// smallest f64.
pub fn format_log(log_value: f64) -> String {
    if log_value == f64::NEG_INFINITY {
        return "0".into();
    }
    if !log_value.is_finite() {
        return "nan".into();
    }
    let l10 = log_value / std::f64::consts::LN_10;
    let mut exponent = l10.floor();
    let mut mantissa = 10f64.powf(l10 - exponent);
    if format!("{mantissa:.6}").starts_with("10") {
        mantissa /= 10.0;
        exponent += 1.0;
    }
    format!("{mantissa:.6}e{}", exponent as i64)
}
