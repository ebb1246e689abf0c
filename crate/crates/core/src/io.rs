//! Serialization: the `privexp-v1` JSON schema for models, policies, exponent
//! results, and test specs, plus the fixed CSV formats.
//!
//! Alphabets serialize as arrays of numbers, probabilities as arrays, and
//! conditionals as row-major arrays of arrays. Every document carries the
//! schema version field. CSV output uses `.` decimals, `\n` newlines, no
//! locale, and floats printed with 12 significant digits, so identical runs
//! produce identical bytes.

use serde::{Deserialize, Serialize};

use crate::adversary::{TestMode, TestSpec};
use crate::distributions::{Alphabet, ConditionalPmf, Pmf, PolicyPair, SourceModel};
use crate::error::{Error, Result};
use crate::exponents::{DistortionSpec, ExponentKind, ExponentResult, SweepTable};
use crate::policies::PolicyTrace;
use crate::smartmeter::{DemandModel, TraceApplication};

pub const SCHEMA_VERSION: &str = "privexp-v1";

fn check_schema(found: &str) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaMismatch {
            expected: SCHEMA_VERSION.into(),
            found: found.into(),
        });
    }
    Ok(())
}

/// Formats a float with 12 significant digits, locale-free.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.11e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// Documents

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmfDoc {
    pub schema: String,
    pub alphabet: Vec<f64>,
    pub probs: Vec<f64>,
}

impl PmfDoc {
    pub fn from_pmf(pmf: &Pmf) -> Self {
        Self {
            schema: SCHEMA_VERSION.into(),
            alphabet: pmf.alphabet().symbols().to_vec(),
            probs: pmf.probs().to_vec(),
        }
    }

    pub fn to_pmf(&self) -> Result<Pmf> {
        check_schema(&self.schema)?;
        Pmf::new(Alphabet::new(self.alphabet.clone())?, self.probs.clone())
    }
}

/// Optional custom distortion block inside a model document. When absent, the
/// supply-side constraint (distortion `x - y`, pairs with `y > x` forbidden,
/// supply alphabet equal to the data alphabet) is implied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistortionDoc {
    pub y_alphabet: Vec<f64>,
    /// Row-major `d[x][y]`.
    pub d: Vec<Vec<f64>>,
    /// Row-major forbidden-pair flags.
    pub mask: Vec<Vec<bool>>,
}

/// A hypothesis pair of source pmfs with priors; doubles as an appliance
/// demand model when the alphabet is watt-valued.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDoc {
    pub schema: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub hypothesis_labels: Option<[String; 2]>,
    pub x_alphabet: Vec<f64>,
    pub p_x_h0: Vec<f64>,
    pub p_x_h1: Vec<f64>,
    pub prior_h0: f64,
    pub prior_h1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion: Option<DistortionDoc>,
}

impl ModelDoc {
    pub fn from_demand_model(model: &DemandModel) -> Self {
        Self {
            schema: SCHEMA_VERSION.into(),
            name: model.name.clone(),
            hypothesis_labels: Some(model.hypothesis_labels.clone()),
            x_alphabet: model.source.x_alphabet().symbols().to_vec(),
            p_x_h0: model.source.p_x_h0().probs().to_vec(),
            p_x_h1: model.source.p_x_h1().probs().to_vec(),
            prior_h0: model.source.prior_h0(),
            prior_h1: model.source.prior_h1(),
            distortion: None,
        }
    }

    pub fn to_source_model(&self) -> Result<SourceModel> {
        check_schema(&self.schema)?;
        let a = Alphabet::new(self.x_alphabet.clone())?;
        SourceModel::new(
            Pmf::new(a.clone(), self.p_x_h0.clone())?,
            Pmf::new(a, self.p_x_h1.clone())?,
            self.prior_h0,
            self.prior_h1,
        )
    }

    pub fn to_demand_model(&self) -> Result<DemandModel> {
        let labels = self
            .hypothesis_labels
            .clone()
            .unwrap_or_else(|| ["h0".into(), "h1".into()]);
        DemandModel::new(self.name.clone(), labels, self.to_source_model()?)
    }

    /// The custom distortion block, when present.
    pub fn to_distortion(&self) -> Result<Option<DistortionSpec>> {
        let Some(doc) = &self.distortion else {
            return Ok(None);
        };
        let x = Alphabet::new(self.x_alphabet.clone())?;
        let y = Alphabet::new(doc.y_alphabet.clone())?;
        Ok(Some(DistortionSpec::new(
            x,
            y,
            doc.d.clone(),
            doc.mask.clone(),
        )?))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyPairDoc {
    pub schema: String,
    pub x_alphabet: Vec<f64>,
    pub y_alphabet: Vec<f64>,
    /// Row-major conditional `p(y|x)` under each hypothesis.
    pub cond_h0: Vec<Vec<f64>>,
    pub cond_h1: Vec<Vec<f64>>,
}

impl PolicyPairDoc {
    pub fn from_policy(policy: &PolicyPair) -> Self {
        Self {
            schema: SCHEMA_VERSION.into(),
            x_alphabet: policy.x_alphabet().symbols().to_vec(),
            y_alphabet: policy.y_alphabet().symbols().to_vec(),
            cond_h0: policy.cond_h0().rows().to_vec(),
            cond_h1: policy.cond_h1().rows().to_vec(),
        }
    }

    pub fn to_policy(&self) -> Result<PolicyPair> {
        check_schema(&self.schema)?;
        let x = Alphabet::new(self.x_alphabet.clone())?;
        let y = Alphabet::new(self.y_alphabet.clone())?;
        PolicyPair::new(
            ConditionalPmf::new(x.clone(), y.clone(), self.cond_h0.clone())?,
            ConditionalPmf::new(x, y, self.cond_h1.clone())?,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentResultDoc {
    pub schema: String,
    /// `"phi"` (minimal KL) or `"nu"` (minimal Chernoff information).
    pub objective: String,
    /// `None` encodes an infinite value (unreachable for feasible interior
    /// instances; see `effectively_infinite`).
    pub value_nats: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_bits: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_star: Option<f64>,
    pub distortion_h0: f64,
    pub distortion_h1: f64,
    pub iterations: usize,
    pub duality_gap: f64,
    pub converged: bool,
    pub effectively_infinite: bool,
    pub policy: PolicyPairDoc,
}

impl ExponentResultDoc {
    pub fn new(result: &ExponentResult, kind: ExponentKind, with_bits: bool) -> Self {
        Self {
            schema: SCHEMA_VERSION.into(),
            objective: kind.to_string(),
            value_nats: result.value.is_finite().then_some(result.value),
            value_bits: (with_bits && result.value.is_finite())
                .then(|| result.value / std::f64::consts::LN_2),
            tau_star: result.tau_star,
            distortion_h0: result.distortion_h0,
            distortion_h1: result.distortion_h1,
            iterations: result.iterations,
            duality_gap: result.duality_gap,
            converged: result.converged,
            effectively_infinite: result.effectively_infinite(),
            policy: PolicyPairDoc::from_policy(&result.policy),
        }
    }
}

/// Adversary test specification document. Either the per-slot pmfs or the
/// explicit joint pmfs must be present.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestSpecDoc {
    pub schema: String,
    pub n: usize,
    /// `"neyman_pearson"` or `"bayes"`.
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub y_alphabet: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_y_h0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_y_h1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_h0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_h1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_h0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_h1: Option<f64>,
}

impl TestSpecDoc {
    pub fn mode(&self) -> Result<TestMode> {
        match self.mode.as_str() {
            "neyman_pearson" => Ok(TestMode::NeymanPearson),
            "bayes" => Ok(TestMode::Bayes),
            other => Err(Error::InvalidParameter(format!(
                "unknown test mode {other:?} (expected \"neyman_pearson\" or \"bayes\")"
            ))),
        }
    }

    pub fn to_spec(&self) -> Result<TestSpec> {
        check_schema(&self.schema)?;
        let mode = self.mode()?;
        let alphabet = Alphabet::new(self.y_alphabet.clone())?;
        match (&self.p_y_h0, &self.p_y_h1, &self.joint_h0, &self.joint_h1) {
            (Some(p0), Some(p1), None, None) => TestSpec::per_slot(
                self.n,
                mode,
                self.epsilon,
                Pmf::new(alphabet.clone(), p0.clone())?,
                Pmf::new(alphabet, p1.clone())?,
            ),
            (None, None, Some(j0), Some(j1)) => TestSpec::joint(
                self.n,
                mode,
                self.epsilon,
                alphabet,
                j0.clone(),
                j1.clone(),
            ),
            _ => Err(Error::InvalidParameter(
                "provide either per-slot pmfs (p_y_h0/p_y_h1) or joint pmfs (joint_h0/joint_h1)"
                    .into(),
            )),
        }
    }

    pub fn priors(&self) -> (f64, f64) {
        match (self.prior_h0, self.prior_h1) {
            (Some(a), Some(b)) => (a, b),
            _ => (0.5, 0.5),
        }
    }
}

// ---------------------------------------------------------------------------
// CSV

/// Sweep table: `s,value_nats,tau_star,dist_h0,dist_h1,converged`.
pub fn sweep_csv(table: &SweepTable) -> String {
    let mut out = String::from("s,value_nats,tau_star,dist_h0,dist_h1,converged\n");
    for row in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_sig(row.s),
            fmt_sig(row.value),
            fmt_opt(row.tau_star),
            fmt_sig(row.distortion_h0),
            fmt_sig(row.distortion_h1),
            row.converged
        ));
    }
    out
}

/// Trend table: `n,error,exponent_nats`.
pub fn trend_csv(rows: &[crate::adversary::TrendRow]) -> String {
    let mut out = String::from("n,error,exponent_nats\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            row.n,
            fmt_sig(row.error),
            fmt_sig(row.exponent_nats)
        ));
    }
    out
}

/// Two-phase trace: `slot,x,y,phase,distortion` (slots are 1-based, phase is
/// 1 while learning and 2 afterwards).
pub fn policy_trace_csv(trace: &PolicyTrace) -> String {
    let mut out = String::from("slot,x,y,phase,distortion\n");
    for (i, ((x, y), d)) in trace
        .x_seq
        .iter()
        .zip(&trace.y_seq)
        .zip(&trace.distortions)
        .enumerate()
    {
        let phase = if i < trace.learning_slots { 1 } else { 2 };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            fmt_sig(*x),
            fmt_sig(*y),
            phase,
            fmt_sig(*d)
        ));
    }
    out
}

/// Smart-meter trace: `slot,demand_w,supply_w,renewable_w`.
pub fn meter_trace_csv(app: &TraceApplication) -> String {
    let mut out = String::from("slot,demand_w,supply_w,renewable_w\n");
    for (i, ((x, y), r)) in app
        .demand
        .iter()
        .zip(&app.supply)
        .zip(&app.renewable)
        .enumerate()
    {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            fmt_sig(*x),
            fmt_sig(*y),
            fmt_sig(*r)
        ));
    }
    out
}

/// Reads a demand trace from CSV. Accepts the `slot,demand_w,...` layout
/// (demand in the second column) or a single-column file; a non-numeric first
/// line is treated as a header.
pub fn parse_demand_trace_csv(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let cell = if fields.len() >= 2 { fields[1] } else { fields[0] };
        match cell.trim().parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if lineno == 0 => continue, // header
            Err(e) => {
                return Err(Error::InvalidParameter(format!(
                    "line {}: cannot parse {cell:?} as a demand value: {e}",
                    lineno + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidParameter("empty demand trace".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> DemandModel {
        DemandModel::table1_dishwasher()
    }

    #[test]
    fn fmt_sig_is_twelve_significant_digits() {
        assert_eq!(fmt_sig(0.5), "5.00000000000e-1");
        assert_eq!(fmt_sig(529.04), "5.29040000000e2");
        assert_eq!(fmt_sig(f64::INFINITY), "inf");
        assert_eq!(fmt_sig(f64::NAN), "nan");
        assert_eq!(fmt_sig(0.0), "0.00000000000e0");
    }

    #[test]
    fn model_doc_round_trip() {
        let doc = ModelDoc::from_demand_model(&model());
        let json = serde_json::to_string_pretty(&doc).unwrap();
        let back: ModelDoc = serde_json::from_str(&json).unwrap();
        let dm = back.to_demand_model().unwrap();
        assert_eq!(dm.source.x_alphabet().symbols(), &[0.0, 200.0, 500.0, 1200.0]);
        assert_eq!(dm.source.p_x_h0().probs()[2], 0.0);
        assert_eq!(dm.hypothesis_labels[0], "type A");
    }

    #[test]
    fn schema_version_is_enforced() {
        let mut doc = ModelDoc::from_demand_model(&model());
        doc.schema = "privexp-v0".into();
        assert!(matches!(
            doc.to_demand_model(),
            Err(Error::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn policy_doc_round_trip() {
        let a = Alphabet::new(vec![0.0, 2.0]).unwrap();
        let rows = vec![vec![1.0, 0.0], vec![0.25, 0.75]];
        let policy = PolicyPair::new(
            ConditionalPmf::new(a.clone(), a.clone(), rows.clone()).unwrap(),
            ConditionalPmf::new(a.clone(), a, rows).unwrap(),
        )
        .unwrap();
        let doc = PolicyPairDoc::from_policy(&policy);
        let json = serde_json::to_string(&doc).unwrap();
        let back: PolicyPairDoc = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_policy().unwrap(), policy);
    }

    #[test]
    fn test_spec_doc_requires_exactly_one_model_form() {
        let doc = TestSpecDoc {
            schema: SCHEMA_VERSION.into(),
            n: 3,
            mode: "bayes".into(),
            epsilon: None,
            y_alphabet: vec![0.0, 2.0],
            p_y_h0: Some(vec![0.75, 0.25]),
            p_y_h1: None,
            joint_h0: None,
            joint_h1: None,
            prior_h0: None,
            prior_h1: None,
        };
        assert!(doc.to_spec().is_err());
        let ok = TestSpecDoc {
            p_y_h1: Some(vec![0.2, 0.8]),
            ..doc
        };
        assert!(ok.to_spec().is_ok());
        assert_eq!(ok.priors(), (0.5, 0.5));
    }

    #[test]
    fn trace_csv_round_trip() {
        let text = "slot,demand_w\n1,200\n2,0\n3,1200\n";
        assert_eq!(
            parse_demand_trace_csv(text).unwrap(),
            vec![200.0, 0.0, 1200.0]
        );
        let bare = "200\n0\n1200\n";
        assert_eq!(
            parse_demand_trace_csv(bare).unwrap(),
            vec![200.0, 0.0, 1200.0]
        );
        assert!(parse_demand_trace_csv("slot,demand_w\n").is_err());
        // Only the first line may be a non-numeric header.
        assert!(parse_demand_trace_csv("1,2\n2,abc\n").is_err());
    }
}
