use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "blner-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized model with a format tag and version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<E> {
    pub format: String,
    pub version: u32,
    pub model: Model<E>,
}

impl<E: Serialize + DeserializeOwned> Checkpoint<E> {
    pub fn new(model: Model<E>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Input(format!("not a checkpoint (format {:?})", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Input(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }
}

pub fn save_checkpoint<E: Serialize + DeserializeOwned + Clone>(model: &Model<E>, path: &Path) -> Result<()> {
    fs::write(path, Checkpoint::new(model.clone()).to_json()?)?;
    Ok(())
}

pub fn load_checkpoint<E: Serialize + DeserializeOwned>(path: &Path) -> Result<Model<E>> {
    Ok(Checkpoint::from_json(&fs::read_to_string(path)?)?.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundler::{Hyperparams, RunMode};
    use crate::corpus::{gen_synthetic, Dataset};
    use crate::encoder::EncoderParams;
    use crate::seqdec::Tagging;

    fn model(tagging: Tagging) -> (Model, Dataset) {
        let c = gen_synthetic(5, 30, &["A".to_string()]).unwrap();
        let hp = Hyperparams {
            tagging,
            dim: 8,
            mode: RunMode::BlSeq,
            ..Hyperparams::default()
        };
        (Model::new(&c.train, &hp).unwrap(), c.test)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for tagging in [Tagging::Softmax, Tagging::Crf] {
            let (m, test) = model(tagging);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("ck.json");
            save_checkpoint(&m, &path).unwrap();
            let back: Model<EncoderParams> = load_checkpoint(&path).unwrap();
            assert_eq!(back, m);
            let bits = |m: &Model| -> Vec<u64> {
                use crate::params::ParamTensors;
                m.flatten().iter().map(|v| v.to_bits()).collect()
            };
            assert_eq!(bits(&back), bits(&m));
            for mode in [RunMode::BlSeq, RunMode::BlSpan] {
                assert_eq!(
                    crate::bundler::predict(&back, &test.sentences, mode).unwrap(),
                    crate::bundler::predict(&m, &test.sentences, mode).unwrap()
                );
            }
        }
    }

    #[test]
    fn rejects_foreign_json() {
        let (m, _) = model(Tagging::Softmax);
        let mut ck = Checkpoint::new(m);
        ck.version = 99;
        let text = ck.to_json().unwrap();
        assert!(matches!(Checkpoint::<EncoderParams>::from_json(&text), Err(Error::Input(_))));
        assert!(Checkpoint::<EncoderParams>::from_json("{}").is_err());
    }
}
