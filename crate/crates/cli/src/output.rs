//! Machine-readable result emission: the fixed-schema CSV and the summary
//! JSON. All floating-point values are printed with 17 significant digits so
//! identical runs produce bitwise identical files.

use serde::Serialize;

use crate::config::EffectiveConfig;
use glhs_core::estimators::Verdict;
use glhs_core::stats::Estimate;

pub const CSV_HEADER: &str = "experiment,graph,side,dim,potential,epsilon,t,x,y,quantity,\
                              value,stderr,replicas,oracle,verdict,margin_sigmas,seed";

/// One CSV record.
#[derive(Debug, Clone)]
pub struct Row {
    pub experiment: &'static str,
    pub graph: String,
    pub side: usize,
    pub dim: usize,
    pub potential: String,
    pub epsilon: f64,
    pub t: Option<f64>,
    pub x: Option<usize>,
    pub y: Option<usize>,
    pub quantity: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub replicas: Option<usize>,
    pub oracle: Option<f64>,
    pub verdict: Option<bool>,
    pub margin_sigmas: Option<f64>,
    pub seed: u64,
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt_float(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn fmt_opt_usize(v: Option<usize>) -> String {
    v.map(|u| u.to_string()).unwrap_or_default()
}

impl Row {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.graph,
            self.side,
            self.dim,
            self.potential,
            fmt_float(self.epsilon),
            fmt_opt_float(self.t),
            fmt_opt_usize(self.x),
            fmt_opt_usize(self.y),
            self.quantity,
            fmt_float(self.value),
            fmt_opt_float(self.stderr),
            fmt_opt_usize(self.replicas),
            fmt_opt_float(self.oracle),
            self.verdict.map(verdict_str).unwrap_or(""),
            fmt_opt_float(self.margin_sigmas),
            self.seed,
        )
    }
}

pub fn verdict_str(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

pub fn render_csv(rows: &[Row]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

/// One verdict as recorded in the summary, inputs by quantity reference.
#[derive(Debug, Clone, Serialize)]
pub struct VerdictOut {
    pub experiment: &'static str,
    pub claim: String,
    pub pass: bool,
    pub margin_sigmas: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
    pub inputs: Vec<InputOut>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputOut {
    pub quantity: String,
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<usize>,
    pub value: f64,
    pub stderr: f64,
    pub replicas: usize,
}

impl VerdictOut {
    pub fn from_verdict(experiment: &'static str, v: &Verdict) -> VerdictOut {
        VerdictOut {
            experiment,
            claim: v.claim_tag.clone(),
            pass: v.pass,
            margin_sigmas: v.margin_in_sigmas,
            oracle: v.oracle,
            inputs: v.inputs.iter().map(InputOut::from_estimate).collect(),
        }
    }
}

impl InputOut {
    pub fn from_estimate(e: &Estimate) -> InputOut {
        InputOut {
            quantity: e.quantity_tag.clone(),
            t: e.t,
            x: e.x,
            y: e.y,
            value: e.value,
            stderr: e.stderr,
            replicas: e.replicas,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub seed: u64,
    pub all_pass: bool,
    pub csv_rows: usize,
    pub configs: &'a [EffectiveConfig],
    pub verdicts: &'a [VerdictOut],
}

pub fn render_summary(summary: &Summary<'_>) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serialization");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_matches_declared_schema() {
        assert_eq!(
            CSV_HEADER,
            "experiment,graph,side,dim,potential,epsilon,t,x,y,quantity,value,stderr,\
             replicas,oracle,verdict,margin_sigmas,seed"
        );
        assert_eq!(CSV_HEADER.split(',').count(), 17);
    }

    #[test]
    fn float_format_has_17_significant_digits() {
        assert_eq!(fmt_float(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
        let v = 0.584_858_584_858_585_9_f64;
        assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v, "round-trips");
    }

    #[test]
    fn row_renders_empty_optionals() {
        let row = Row {
            experiment: "kite",
            graph: "torus".into(),
            side: 16,
            dim: 2,
            potential: "gaussian".into(),
            epsilon: 0.0,
            t: None,
            x: None,
            y: None,
            quantity: "compensation".into(),
            value: 4.0,
            stderr: None,
            replicas: None,
            oracle: Some(4.0),
            verdict: Some(true),
            margin_sigmas: None,
            seed: 42,
        };
        let line = row.to_csv_line();
        assert_eq!(line.split(',').count(), 17);
        assert!(line.contains(",,,,compensation,"));
        assert!(line.ends_with(",pass,,42"));
    }
}
