//! The estimate-verification engine: each lemma and theorem of the interior
//! W_X^{2,p} chain becomes a measurable check over the analytic corpus,
//! producing empirical constants, fitted scaling slopes and pass/fail
//! records. The constants in the underlying inequalities are existential, so
//! acceptance is slope- and stability-based; no fixed numeric constant is
//! asserted.

mod bb1;
mod interpolation;
mod lemma1;
mod lemma2;
mod lemma3;
mod main_estimate;
mod poincare;
mod thm36;

pub use bb1::{verify_lemma_bb1, Bb1Config};
pub use interpolation::{interpolation_scaling_identity, verify_interpolation};
pub use lemma1::{verify_lemma1, Lemma1Config};
pub use lemma2::{lemma2_corpus, lemma2_r_invariance, lemma2_ratio, verify_lemma2, Lemma2Config};
pub use lemma3::{lemma3_decomposition, lemma3_terms, verify_lemma3, Lemma3Config};
pub use main_estimate::{main_estimate_ratio, main_estimate_scaling_gap, verify_main, MainEstimateConfig};
pub use poincare::{estimate_poincare, PoincareConfig, PoincareEstimate};
pub use thm36::{verify_thm36, Thm36Config};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One scalar measurement inside a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Measurement {
    pub label: String,
    pub value: f64,
}

impl Measurement {
    pub fn new(label: impl Into<String>, value: f64) -> Self {
        Measurement {
            label: label.into(),
            value,
        }
    }
}

/// Per-check record: parameters, measurements, fitted slope where a scaling
/// law is asserted, the empirical constant, and the verdict. Serialization is
/// deterministic (sorted parameter keys, fixed measurement order); wall-clock
/// data lives outside the report so equal configs reproduce equal bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema: u32,
    pub check: String,
    pub params: BTreeMap<String, String>,
    pub measurements: Vec<Measurement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    pub pass: bool,
    pub inconclusive: bool,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn new(check: impl Into<String>) -> Self {
        VerificationReport {
            schema: 1,
            check: check.into(),
            params: BTreeMap::new(),
            measurements: Vec::new(),
            slope: None,
            r2: None,
            constant: None,
            pass: false,
            inconclusive: false,
            notes: Vec::new(),
        }
    }

    pub fn param(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    pub fn measure(&mut self, label: impl Into<String>, value: f64) -> &mut Self {
        self.measurements.push(Measurement::new(label, value));
        self
    }

    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// CSV rows of the measurements (label,value), for plotting.
    pub fn measurements_csv(&self) -> String {
        let mut out = String::from("label,value\n");
        for m in &self.measurements {
            out.push_str(&format!("{},{}\n", m.label, m.value));
        }
        out
    }
}

/// Least-squares line fit with the coefficient of determination.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Fit y = a·x + b; `None` with fewer than two points or degenerate x.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Some(LineFit {
        slope,
        intercept,
        r2,
    })
}
