//! JSON records (schema version "1") and their CSV companions.
//!
//! Non-finite numbers have no JSON spelling; fields that can be undefined
//! are optional and serialize as `null`.

use crate::io::fmt_g17;
use expectile_core::inference::{ConfidenceRegion, MarginalInterval};
use expectile_core::simulation::McReport;
use expectile_core::testing::TestResult;
use serde::Serialize;

pub const SCHEMA_VERSION: &str = "1";

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRecord {
    pub lower: f64,
    pub upper: f64,
}

impl From<&MarginalInterval> for IntervalRecord {
    fn from(i: &MarginalInterval) -> Self {
        Self { lower: i.lower, upper: i.upper }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginRecord {
    pub label: String,
    pub gamma_hat: f64,
    pub q_hat: f64,
    pub xi_laws: f64,
    pub xi_qb: Option<f64>,
    pub xi_star_laws: Option<f64>,
    pub xi_star_qb: Option<f64>,
    pub q_star: Option<f64>,
    pub interval_laws: Option<IntervalRecord>,
    pub interval_qb: Option<IntervalRecord>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub schema: &'static str,
    pub n: usize,
    pub k: usize,
    pub tau: f64,
    pub tau_prime: f64,
    pub alpha: f64,
    pub naive: bool,
    pub margins: Vec<MarginRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionRecord {
    pub schema: &'static str,
    pub kind: &'static str,
    pub scale: &'static str,
    pub alpha: f64,
    pub tau: f64,
    pub tau_prime: Option<f64>,
    pub naive: bool,
    pub margins: Vec<String>,
    pub center: Vec<f64>,
    pub bias_shift: Vec<f64>,
    pub shape: Vec<Vec<f64>>,
    pub radius: f64,
}

impl RegionRecord {
    pub fn new(region: &ConfidenceRegion, margins: Vec<String>) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            kind: region.kind.name(),
            scale: region.scale.name(),
            alpha: region.alpha,
            tau: region.tau,
            tau_prime: region.tau_prime,
            naive: region.naive,
            margins,
            center: region.center.clone(),
            bias_shift: region.bias_shift.clone(),
            shape: region.shape.rows(),
            radius: region.radius,
        }
    }
}

/// Boundary points of a 2-D or 3-D region, one per row.
pub fn boundary_csv(points: &[Vec<f64>], labels: &[String]) -> String {
    let mut out = labels.join(",");
    out.push('\n');
    for p in points {
        out.push_str(&p.iter().map(|&x| fmt_g17(x)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRecord {
    pub schema: &'static str,
    pub kind: &'static str,
    pub margins: Vec<String>,
    pub statistic: Option<f64>,
    pub df: Option<u32>,
    pub p_value: Option<f64>,
    pub reject: Option<bool>,
    pub alpha: f64,
    pub tau: f64,
    pub tau_prime: f64,
    pub k: usize,
    pub common_mean: Option<f64>,
    pub scaling: &'static str,
    pub scale_factor: Option<f64>,
    pub error: Option<String>,
}

impl TestRecord {
    pub fn new(t: &TestResult, labels: &[String]) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            kind: t.kind.name(),
            margins: t.margins.iter().map(|&j| labels[j].clone()).collect(),
            statistic: finite(t.statistic),
            df: Some(t.df),
            p_value: finite(t.p_value),
            reject: Some(t.reject),
            alpha: t.alpha,
            tau: t.tau,
            tau_prime: t.tau_prime,
            k: t.k,
            common_mean: finite(t.common_mean),
            scaling: t.scaling.name(),
            scale_factor: finite(t.scale_factor),
            error: None,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn failed(kind: &'static str, margins: Vec<String>, alpha: f64, tau: f64, tau_prime: f64, k: usize, scaling: &'static str, error: String) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            kind,
            margins,
            statistic: None,
            df: None,
            p_value: None,
            reject: None,
            alpha,
            tau,
            tau_prime,
            k,
            common_mean: None,
            scaling,
            scale_factor: None,
            error: Some(error),
        }
    }
}

pub const TEST_CSV_HEADER: &str = "kind,margins,statistic,df,p_value,reject,common_mean,scale_factor,error";

pub fn test_csv_row(t: &TestRecord) -> String {
    let opt = |x: Option<f64>| x.map(fmt_g17).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{}",
        t.kind,
        t.margins.join("|"),
        opt(t.statistic),
        t.df.map(|d| d.to_string()).unwrap_or_default(),
        opt(t.p_value),
        t.reject.map(|r| r.to_string()).unwrap_or_default(),
        opt(t.common_mean),
        opt(t.scale_factor),
        csv_text(t.error.as_deref().unwrap_or("")),
    )
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRecord {
    pub schema: &'static str,
    pub model: String,
    pub task: String,
    pub method: String,
    pub naive: bool,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub tau: f64,
    pub tau_prime: Option<f64>,
    pub alpha: f64,
    pub gammas: Vec<f64>,
    pub replications: usize,
    pub master_seed: u64,
    pub failures: usize,
    pub failure_samples: Vec<String>,
    pub rel_mse_laws: Option<Vec<f64>>,
    pub rel_mse_qb: Option<Vec<f64>>,
    pub root_rel_mse_laws: Option<f64>,
    pub root_rel_mse_qb: Option<f64>,
    pub rate: Option<f64>,
    pub mean_value: Option<f64>,
    /// Only filled when timing is requested, since it breaks byte-identical output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

impl From<&McReport> for McRecord {
    fn from(r: &McReport) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            model: r.model.clone(),
            task: r.task.clone(),
            method: r.method.clone(),
            naive: r.naive,
            n: r.n,
            d: r.d,
            k: r.k,
            tau: r.tau,
            tau_prime: r.tau_prime,
            alpha: r.alpha,
            gammas: r.gammas.clone(),
            replications: r.replications,
            master_seed: r.master_seed,
            failures: r.failures,
            failure_samples: r.failure_samples.clone(),
            rel_mse_laws: r.rel_mse_laws.clone(),
            rel_mse_qb: r.rel_mse_qb.clone(),
            root_rel_mse_laws: r.root_rel_mse_laws,
            root_rel_mse_qb: r.root_rel_mse_qb,
            rate: r.rate,
            mean_value: r.mean_value,
            wall_clock_seconds: r.wall_clock_seconds,
        }
    }
}

/// Key columns first: (model, n, d, k, method, naive, M, seed).
pub const MC_CSV_HEADER: &str =
    "model,n,d,k,method,naive,replications,master_seed,task,tau,tau_prime,alpha,gammas,failures,root_rel_mse_laws,root_rel_mse_qb,rate,mean_value";

pub fn mc_csv_row(r: &McRecord) -> String {
    let opt = |x: Option<f64>| x.map(fmt_g17).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.model,
        r.n,
        r.d,
        r.k,
        r.method,
        r.naive,
        r.replications,
        r.master_seed,
        r.task,
        fmt_g17(r.tau),
        opt(r.tau_prime),
        fmt_g17(r.alpha),
        r.gammas.iter().map(|&g| fmt_g17(g)).collect::<Vec<_>>().join("|"),
        r.failures,
        opt(r.root_rel_mse_laws),
        opt(r.root_rel_mse_qb),
        opt(r.rate),
        opt(r.mean_value),
    )
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("records serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use expectile_core::inference::{ConfidenceRegion, RegionKind, Scale};
    use expectile_core::numerics::SpdMatrix;

    #[test]
    fn region_record_fields() {
        let region = ConfidenceRegion {
            kind: RegionKind::ExtremeLaws,
            center: vec![1.0, 2.0],
            bias_shift: vec![0.1, -0.1],
            shape: SpdMatrix::new(2, vec![1.0, 0.5, 0.5, 2.0]).unwrap(),
            radius: 0.25,
            scale: Scale::Log,
            alpha: 0.05,
            tau: 0.9,
            tau_prime: Some(0.999),
            naive: false,
        };
        let v: serde_json::Value = serde_json::from_str(&to_json(&RegionRecord::new(&region, vec!["a".into(), "b".into()]))).unwrap();
        assert_eq!(v["schema"], "1");
        assert_eq!(v["kind"], "extreme_laws");
        assert_eq!(v["scale"], "log");
        assert_eq!(v["shape"][1][0], 0.5);
        assert_eq!(v["radius"], 0.25);
        for key in ["alpha", "tau", "tau_prime", "center", "bias_shift"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn csv_rows_match_headers() {
        let t = TestRecord::failed("laws", vec!["a".into(), "b".into()], 0.05, 0.9, 0.999, 10, "unsquared", "bad, \"x\"".into());
        let row = test_csv_row(&t);
        let text = format!("{TEST_CSV_HEADER}\n{row}\n");
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let rec = rdr.records().next().unwrap().unwrap();
        assert_eq!(rec.len(), TEST_CSV_HEADER.split(',').count());
        assert_eq!(&rec[8], "bad, \"x\"");
    }
}
