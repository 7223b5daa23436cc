//! Versioned JSON documents for persisting models.
//!
//! ```json
//! {"format_version": 1, "kind": "linear", "theta": [0.5, -1.0]}
//! ```

use serde::{Deserialize, Serialize};

use super::{Activation, CategoricalSequenceModel, LinearModel, LogisticModel, MlpModel};
use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDocument {
    /// Rows are output units.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBody {
    Linear {
        theta: Vec<f64>,
    },
    Mlp {
        activation: Activation,
        layers: Vec<LayerDocument>,
    },
    Logistic {
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
    },
    Sequence {
        vocab_size: usize,
        context_order: usize,
        max_length: usize,
        logits: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    #[serde(flatten)]
    pub body: ModelBody,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

fn matrix_of(rows: &[Vec<f64>]) -> Result<Matrix> {
    if rows.is_empty() {
        return Err(Error::Serialization("empty weight matrix".into()));
    }
    Matrix::from_rows(rows)
}

impl ModelDocument {
    fn wrap(body: ModelBody) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            body,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model documents are always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        Ok(doc)
    }

    fn kind(&self) -> &'static str {
        match self.body {
            ModelBody::Linear { .. } => "linear",
            ModelBody::Mlp { .. } => "mlp",
            ModelBody::Logistic { .. } => "logistic",
            ModelBody::Sequence { .. } => "sequence",
        }
    }

    fn wrong_kind(&self, wanted: &str) -> Error {
        Error::Serialization(format!("expected a {wanted} model, found {}", self.kind()))
    }

    pub fn into_linear(self) -> Result<LinearModel> {
        match self.body {
            ModelBody::Linear { theta } => Ok(LinearModel::new(theta)),
            _ => Err(self.wrong_kind("linear")),
        }
    }

    pub fn into_mlp(self) -> Result<MlpModel> {
        match &self.body {
            ModelBody::Mlp { activation, layers } => {
                let weights = layers.iter().map(|l| matrix_of(&l.weights)).collect::<Result<Vec<_>>>()?;
                let biases = layers.iter().map(|l| l.biases.clone()).collect();
                MlpModel::new(weights, biases, *activation)
            }
            _ => Err(self.wrong_kind("mlp")),
        }
    }

    pub fn into_logistic(self) -> Result<LogisticModel> {
        match &self.body {
            ModelBody::Logistic { weights, biases } => LogisticModel::new(matrix_of(weights)?, biases.clone()),
            _ => Err(self.wrong_kind("logistic")),
        }
    }

    pub fn into_sequence(self) -> Result<CategoricalSequenceModel> {
        match self.body {
            ModelBody::Sequence {
                vocab_size,
                context_order,
                max_length,
                logits,
            } => CategoricalSequenceModel::new(vocab_size, context_order, max_length, logits),
            _ => Err(self.wrong_kind("sequence")),
        }
    }
}

impl From<&LinearModel> for ModelDocument {
    fn from(m: &LinearModel) -> Self {
        Self::wrap(ModelBody::Linear { theta: m.theta.clone() })
    }
}

impl From<&MlpModel> for ModelDocument {
    fn from(m: &MlpModel) -> Self {
        Self::wrap(ModelBody::Mlp {
            activation: m.activation,
            layers: m
                .layer_weights
                .iter()
                .zip(&m.layer_biases)
                .map(|(w, b)| LayerDocument {
                    weights: rows_of(w),
                    biases: b.clone(),
                })
                .collect(),
        })
    }
}

impl From<&LogisticModel> for ModelDocument {
    fn from(m: &LogisticModel) -> Self {
        Self::wrap(ModelBody::Logistic {
            weights: rows_of(&m.weights),
            biases: m.biases.clone(),
        })
    }
}

impl From<&CategoricalSequenceModel> for ModelDocument {
    fn from(m: &CategoricalSequenceModel) -> Self {
        Self::wrap(ModelBody::Sequence {
            vocab_size: m.vocab_size(),
            context_order: m.context_order(),
            max_length: m.max_length(),
            logits: m.logits().to_vec(),
        })
    }
}
