//! Model persistence: a versioned JSON document holding the fitted
//! parameters. Loading rebuilds the model through the same validated
//! constructors used at fit time, so a tampered or corrupted file is
//! rejected rather than silently accepted.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risknet::{Activation, Layer, ResidualRiskNet};
use crate::survival::{Standardizer, StepCumulativeHazard};
use crate::trainer::FittedModel;

/// Version written into every model file; loading any other value fails.
pub const FORMAT_VERSION: u32 = 1;

/// On-disk layout of a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub activation: Activation,
    pub theta: Vec<f64>,
    pub layers: Vec<Layer>,
    pub baseline_times: Vec<f64>,
    pub baseline_values: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub risk_offset: f64,
    pub final_loglik: f64,
    pub hierarchy_m: f64,
}

impl ModelDocument {
    pub fn from_model(model: &FittedModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            activation: model.net().activation(),
            theta: model.net().theta().to_vec(),
            layers: model.net().layers().to_vec(),
            baseline_times: model.baseline().times().to_vec(),
            baseline_values: model.baseline().values().to_vec(),
            means: model.standardizer().means().to_vec(),
            sds: model.standardizer().sds().to_vec(),
            risk_offset: model.risk_offset(),
            final_loglik: model.final_loglik(),
            hierarchy_m: model.hierarchy_m(),
        }
    }

    /// Rebuild the model, revalidating every invariant: layer shapes, the
    /// dimension chain, finiteness, baseline monotonicity, positive scale
    /// divisors, and hierarchy feasibility.
    pub fn into_model(self) -> Result<FittedModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        for layer in &self.layers {
            layer.w.check()?;
        }
        let d = self.theta.len();
        let net = ResidualRiskNet::from_parts(d, self.theta, self.layers, self.activation)?;
        let baseline = StepCumulativeHazard::new(self.baseline_times, self.baseline_values)?;
        let standardizer = Standardizer::from_parts(self.means, self.sds)?;
        FittedModel::from_parts(
            net,
            baseline,
            standardizer,
            self.risk_offset,
            self.final_loglik,
            self.hierarchy_m,
        )
    }
}

/// Serialize a fitted model to pretty-printed JSON.
pub fn to_json(model: &FittedModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelDocument::from_model(model))?)
}

/// Parse and fully revalidate a fitted model from JSON.
pub fn from_json(json: &str) -> Result<FittedModel> {
    let doc: ModelDocument = serde_json::from_str(json)?;
    doc.into_model()
}

/// Write a fitted model to `path` as JSON.
pub fn save_model(model: &FittedModel, path: &Path) -> Result<()> {
    fs::write(path, to_json(model)?)?;
    Ok(())
}

/// Read a fitted model from `path`, rejecting invalid documents.
pub fn load_model(path: &Path) -> Result<FittedModel> {
    let json = fs::read_to_string(path)?;
    from_json(&json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{simulate_study, RiskModel, SimConfig};
    use crate::trainer::{fit, predict_survival, FitConfig};
    use crate::risknet::NetConfig;

    fn fitted() -> FittedModel {
        let mut c = SimConfig::new(50, RiskModel::M1, 5);
        c.d = 5;
        let data = simulate_study(&c).unwrap().data;
        let cfg = FitConfig {
            epochs_b: 5,
            outer_iters_k: 2,
            lambda: 0.01,
            net: NetConfig {
                hidden_widths: vec![3],
                ..NetConfig::default()
            },
            ..FitConfig::default()
        };
        fit(&data, &cfg).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise_identical() {
        let model = fitted();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();

        assert_eq!(loaded.net().theta(), model.net().theta());
        assert_eq!(loaded.net().layers(), model.net().layers());
        assert_eq!(loaded.baseline(), model.baseline());
        assert_eq!(loaded.standardizer().means(), model.standardizer().means());
        assert_eq!(loaded.standardizer().sds(), model.standardizer().sds());
        assert_eq!(loaded.risk_offset(), model.risk_offset());
        assert_eq!(loaded.final_loglik(), model.final_loglik());
        assert_eq!(loaded.hierarchy_m(), model.hierarchy_m());

        let z = vec![0.7, -0.3, 1.1, 0.0, 2.0];
        let ts = [0.05, 0.1, 0.2, 0.4];
        assert_eq!(
            predict_survival(&loaded, &z, &ts).unwrap(),
            predict_survival(&model, &z, &ts).unwrap()
        );

        // a second save produces the identical byte stream
        let json1 = to_json(&model).unwrap();
        let json2 = to_json(&loaded).unwrap();
        assert_eq!(json1, json2);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let json = to_json(&fitted()).unwrap();
        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        doc["format_version"] = serde_json::json!(2);
        let err = from_json(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn tampered_documents_are_rejected() {
        let json = to_json(&fitted()).unwrap();

        // nonmonotone baseline
        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        let vals = doc["baseline_values"].as_array().unwrap().len();
        doc["baseline_values"][vals - 1] = serde_json::json!(-1.0);
        assert!(from_json(&doc.to_string()).is_err());

        // hierarchy violation: zero a skip coefficient whose first-layer
        // column is nonzero
        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        let w_col_nonzero = {
            let w = &doc["layers"][0]["w"];
            let cols = w["cols"].as_u64().unwrap() as usize;
            let data: Vec<f64> = w["data"]
                .as_array()
                .unwrap()
                .iter()
                .map(|x| x.as_f64().unwrap())
                .collect();
            (0..cols).find(|j| data.iter().skip(*j).step_by(cols).any(|x| *x != 0.0))
        };
        if let Some(j) = w_col_nonzero {
            doc["theta"][j] = serde_json::json!(0.0);
            assert!(from_json(&doc.to_string()).is_err());
        }

        // inconsistent layer shape
        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        doc["layers"][0]["w"]["rows"] = serde_json::json!(99);
        assert!(from_json(&doc.to_string()).is_err());

        // non-finite risk offset
        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        doc["risk_offset"] = serde_json::json!(f64::NAN);
        assert!(from_json(&doc.to_string()).is_err());

        // malformed JSON
        assert!(from_json("{not json").is_err());
    }
}
