//! JSON snapshots of a fit, tagged by engine.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{predict_mean, GibbsCheckpoint};
use crate::online::OnlineCheckpoint;
use crate::ring::TRModel;
use crate::tensor::{DataKind, SparseTensor};

pub const FORMAT_VERSION: u32 = 1;

/// Affine map applied to continuous values before fitting: the engines see
/// `(y − shift) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTransform {
    pub shift: f64,
    pub scale: f64,
}

impl ValueTransform {
    /// Zero mean, unit variance over the observed values.
    pub fn standardizing(data: &SparseTensor) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::input("cannot standardize an empty tensor"));
        }
        let n = data.len() as f64;
        let mean = data.values().iter().sum::<f64>() / n;
        let var = data
            .values()
            .iter()
            .map(|y| (y - mean).powi(2))
            .sum::<f64>()
            / n;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        Ok(ValueTransform { shift: mean, scale })
    }

    pub fn forward(&self, data: &SparseTensor) -> Result<SparseTensor> {
        data.with_values(
            data.values()
                .iter()
                .map(|y| (y - self.shift) / self.scale)
                .collect(),
        )
    }

    pub fn inverse(&self, x: f64) -> f64 {
        x * self.scale + self.shift
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineState {
    Gibbs(Box<GibbsCheckpoint>),
    Online(Box<OnlineCheckpoint>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub shape: Vec<usize>,
    pub kind: DataKind,
    pub transform: Option<ValueTransform>,
    pub engine: EngineState,
}

impl Checkpoint {
    pub fn new(
        shape: Vec<usize>,
        kind: DataKind,
        transform: Option<ValueTransform>,
        engine: EngineState,
    ) -> Self {
        Checkpoint {
            format: FORMAT_VERSION,
            shape,
            kind,
            transform,
            engine,
        }
    }

    pub fn engine_name(&self) -> &'static str {
        match self.engine {
            EngineState::Gibbs(_) => "gibbs",
            EngineState::Online(_) => "online",
        }
    }

    /// Models whose average is the point prediction: the retained Gibbs
    /// draws (or the current state if none were retained) or the online fit.
    pub fn prediction_models(&self) -> &[TRModel] {
        match &self.engine {
            EngineState::Gibbs(g) if !g.samples.models.is_empty() => &g.samples.models,
            EngineState::Gibbs(g) => std::slice::from_ref(&g.model),
            EngineState::Online(o) => std::slice::from_ref(&o.model),
        }
    }

    /// Predictions in data units at the indices of `at`: values for
    /// continuous data, logits for binary data.
    pub fn predict(&self, at: &SparseTensor) -> Result<Vec<f64>> {
        if at.shape() != self.shape.as_slice() {
            return Err(Error::input(format!(
                "index shape {:?} does not match checkpoint shape {:?}",
                at.shape(),
                self.shape
            )));
        }
        let mut pred = predict_mean(self.prediction_models(), at)?;
        if let Some(t) = self.transform {
            pred.iter_mut().for_each(|x| *x = t.inverse(*x));
        }
        Ok(pred)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != FORMAT_VERSION {
            return Err(Error::Unsupported(format!(
                "checkpoint format {} (expected {FORMAT_VERSION})",
                ckpt.format
            )));
        }
        Ok(ckpt)
    }
}
