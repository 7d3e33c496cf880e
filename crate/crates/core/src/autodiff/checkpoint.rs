use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::tensor::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "subtype-params/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// JSON parameter container. Floats are written in shortest round-trip form
/// and parsed with correct rounding, so save → load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub seed: u64,
    pub step: u64,
    pub params: Vec<NamedTensor>,
    pub adam: Option<AdamState>,
    /// Free-form metadata, e.g. the model configuration.
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn capture(params: &ParamStore, seed: u64, adam: Option<&AdamState>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            seed,
            step: adam.map_or(0, |a| a.step),
            params: params
                .iter()
                .map(|(_, name, t)| NamedTensor {
                    name: name.to_string(),
                    tensor: t.clone(),
                })
                .collect(),
            adam: adam.cloned(),
            meta: serde_json::Value::Null,
        }
    }

    pub fn to_store(&self) -> ParamStore {
        let mut store = ParamStore::new();
        for p in &self.params {
            store.add(p.name.clone(), p.tensor.clone());
        }
        store
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::validation(format!(
                "unsupported checkpoint format '{}'",
                ck.format
            )));
        }
        for p in &ck.params {
            // re-validate shape against data length
            Tensor::new(p.tensor.shape().to_vec(), p.tensor.data().to_vec())?;
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::AdamConfig;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..40),
            seed in any::<u64>(),
        ) {
            let mut store = ParamStore::new();
            store.add("w", Tensor::vector(values.clone()));
            let mut adam = AdamState::new(AdamConfig::default(), &store);
            adam.step = 17;
            adam.first[0] = Tensor::vector(values.iter().map(|v| v / 3.0).collect());
            let ck = Checkpoint::capture(&store, seed, Some(&adam));
            let dir = std::env::temp_dir().join(format!("ckpt-{}", std::process::id()));
            std::fs::create_dir_all(&dir).unwrap();
            let path = dir.join("p.json");
            ck.save(&path).unwrap();
            let back = Checkpoint::load(&path).unwrap();
            prop_assert_eq!(back.seed, seed);
            prop_assert_eq!(back.step, 17);
            let a: Vec<u64> = back.params[0].tensor.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(back.adam, Some(adam));
        }
    }
}
