use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CampaignReport, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(format!("unknown report format `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricName {
    #[serde(rename = "EDR")]
    Edr,
    #[serde(rename = "EF")]
    Ef,
    #[serde(rename = "TTD")]
    Ttd,
    PCSensitivity,
    BBSensitivity,
    InputBreadth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Percent,
    CountPerRun,
    Steps,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scope {
    pub variant: String,
    pub opcode: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: MetricName,
    pub scope: Scope,
    pub value: Rational,
    pub unit: Unit,
}

impl CampaignReport {
    /// Every defined metric as a flat list. TTD is its median.
    pub fn metrics(&self) -> Vec<MetricValue> {
        let mut out = Vec::new();
        for v in &self.variants {
            let scope = |opcode: Option<&String>| Scope {
                variant: v.name.clone(),
                opcode: opcode.cloned(),
            };
            let mut push = |name, scope, value: Option<Rational>, unit| {
                if let Some(value) = value {
                    out.push(MetricValue { name, scope, value, unit });
                }
            };
            push(MetricName::Edr, scope(None), Some(v.edr), Unit::Percent);
            push(MetricName::Ef, scope(None), Some(v.ef), Unit::CountPerRun);
            push(MetricName::Ttd, scope(None), v.ttd.map(|t| t.median), Unit::Steps);
            for (op, r) in &v.opcodes {
                push(MetricName::PCSensitivity, scope(Some(op)), r.pc_sensitivity, Unit::Percent);
                push(MetricName::BBSensitivity, scope(Some(op)), r.bb_sensitivity, Unit::Percent);
                push(MetricName::InputBreadth, scope(Some(op)), r.input_breadth, Unit::Percent);
            }
        }
        out
    }
}

const CSV_HEADER: [&str; 21] = [
    "variant",
    "opcode",
    "runs_total",
    "runs_with_detection",
    "total_detections",
    "edr_percent",
    "ef",
    "ttd_min",
    "ttd_median",
    "ttd_mean",
    "ttd_max",
    "total_pcs",
    "failing_pcs",
    "pc_sensitivity_percent",
    "total_bbs",
    "failing_bbs",
    "bb_sensitivity_percent",
    "failing_inputs",
    "unique_failing_inputs",
    "input_breadth_percent",
    "schema_version",
];

fn cell(r: Option<Rational>) -> String {
    r.map(|r| format!("{:.6}", r.to_f64())).unwrap_or_default()
}

/// Render a report. JSON keeps everything, including the raw run log; CSV
/// has one row per variant and opcode with data.
pub fn serialize_report(r: &CampaignReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(r).expect("report serializes");
            out.push(b'\n');
            out
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER).expect("in-memory write");
            for v in &r.variants {
                for (op, o) in &v.opcodes {
                    let ttd = v.ttd;
                    w.write_record([
                        v.name.clone(),
                        op.clone(),
                        v.runs_total.to_string(),
                        v.runs_with_detection.to_string(),
                        v.total_detections.to_string(),
                        cell(Some(v.edr)),
                        cell(Some(v.ef)),
                        ttd.map(|t| t.min.to_string()).unwrap_or_default(),
                        cell(ttd.map(|t| t.median)),
                        cell(ttd.map(|t| t.mean)),
                        ttd.map(|t| t.max.to_string()).unwrap_or_default(),
                        o.total_pcs.to_string(),
                        o.failing_pcs.to_string(),
                        cell(o.pc_sensitivity),
                        o.total_bbs.to_string(),
                        o.failing_bbs.to_string(),
                        cell(o.bb_sensitivity),
                        o.failing_inputs.to_string(),
                        o.unique_failing_inputs.to_string(),
                        cell(o.input_breadth),
                        r.schema_version.to_string(),
                    ])
                    .expect("in-memory write");
                }
            }
            w.into_inner().expect("in-memory flush")
        }
    }
}
