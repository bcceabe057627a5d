//! Parameter snapshots.
//!
//! Layout of a checkpoint file:
//!
//! ```text
//! 8 bytes   magic "SAUNACK1"
//! 4 bytes   header length N, u32 little-endian
//! N bytes   UTF-8 JSON header
//! rest      every section's values as f64 little-endian, in header order
//! ```
//!
//! The header is `{"format_version":1,"meta":{...},"sections":[...]}` where
//! each section carries `name`, `len`, and for dense networks `layer_sizes`
//! and `output_activation`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dense::{Activation, DenseNet};
use super::model::{ActorCritic, ModelShape, Tensor, ValueVexNet};
use super::policy::GaussianPolicy;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SAUNACK1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionHeader {
    pub name: String,
    pub len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_activation: Option<Activation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub header: SectionHeader,
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    #[serde(default)]
    meta: serde_json::Value,
    sections: Vec<SectionHeader>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub sections: Vec<Section>,
}

impl Checkpoint {
    pub fn push_dense(&mut self, name: &str, net: &DenseNet) {
        self.sections.push(Section {
            header: SectionHeader {
                name: name.to_string(),
                len: net.num_params(),
                layer_sizes: Some(net.sizes().to_vec()),
                output_activation: Some(net.output_activation()),
            },
            data: net.params().to_vec(),
        });
    }

    pub fn push_vector(&mut self, name: &str, data: &[f64]) {
        self.sections.push(Section {
            header: SectionHeader {
                name: name.to_string(),
                len: data.len(),
                layer_sizes: None,
                output_activation: None,
            },
            data: data.to_vec(),
        });
    }

    pub fn section(&self, name: &str) -> Result<&Section> {
        self.sections
            .iter()
            .find(|s| s.header.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing section {name}")))
    }

    pub fn dense(&self, name: &str) -> Result<DenseNet> {
        let s = self.section(name)?;
        let sizes = s
            .header
            .layer_sizes
            .as_ref()
            .ok_or_else(|| Error::Checkpoint(format!("{name} has no layer sizes")))?;
        let act = s.header.output_activation.unwrap_or(Activation::Identity);
        DenseNet::from_params(sizes, act, s.data.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format_version: FORMAT_VERSION,
            meta: self.meta.clone(),
            sections: self.sections.iter().map(|s| s.header.clone()).collect(),
        };
        let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
        let n_values: usize = self.sections.iter().map(|s| s.data.len()).sum();
        let mut out = Vec::with_capacity(12 + json.len() + 8 * n_values);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for s in &self.sections {
            for v in &s.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = bytes
            .get(12..12 + hlen)
            .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
        let header: Header = serde_json::from_slice(body)
            .map_err(|e| Error::Checkpoint(format!("header json: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        let mut values = bytes[12 + hlen..].chunks_exact(8);
        if values.remainder().len() != 0 {
            return Err(Error::Checkpoint("payload is not a whole number of f64".into()));
        }
        let total: usize = header.sections.iter().map(|s| s.len).sum();
        if values.len() != total {
            return Err(Error::Checkpoint(format!(
                "payload holds {} values, header declares {total}",
                values.len()
            )));
        }
        let sections = header
            .sections
            .into_iter()
            .map(|h| {
                let data = values
                    .by_ref()
                    .take(h.len)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Section { header: h, data }
            })
            .collect();
        Ok(Self {
            meta: header.meta,
            sections,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

impl ActorCritic {
    /// Writes every tensor into `ckpt`, recording the shape in `meta.model`.
    pub fn write_checkpoint(&self, ckpt: &mut Checkpoint) {
        let shape = self.shape();
        let model_meta = serde_json::json!({
            "state_dim": shape.state_dim,
            "action_dim": shape.action_dim,
            "hidden": shape.hidden,
            "shared_trunk": shape.shared_trunk,
        });
        if !ckpt.meta.is_object() {
            ckpt.meta = serde_json::json!({});
        }
        ckpt.meta["model"] = model_meta;
        ckpt.push_dense(Tensor::MeanNet.name(), &self.policy.mean_net);
        ckpt.push_vector(Tensor::LogStd.name(), &self.policy.log_std);
        ckpt.push_dense(Tensor::Trunk.name(), &self.critic.trunk);
        ckpt.push_dense(Tensor::ValueHead.name(), &self.critic.value_head);
        ckpt.push_dense(Tensor::VexHead.name(), &self.critic.vex_head);
    }

    pub fn read_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let m = &ckpt.meta["model"];
        let bad = || Error::Checkpoint("meta.model is incomplete".into());
        let shape = ModelShape {
            state_dim: m["state_dim"].as_u64().ok_or_else(bad)? as usize,
            action_dim: m["action_dim"].as_u64().ok_or_else(bad)? as usize,
            hidden: m["hidden"]
                .as_array()
                .ok_or_else(bad)?
                .iter()
                .map(|v| v.as_u64().map(|x| x as usize).ok_or_else(bad))
                .collect::<Result<_>>()?,
            shared_trunk: m["shared_trunk"].as_bool().ok_or_else(bad)?,
        };
        let mut policy = GaussianPolicy::new(ckpt.dense(Tensor::MeanNet.name())?, 0.0);
        policy.log_std = ckpt.section(Tensor::LogStd.name())?.data.clone();
        let critic = ValueVexNet {
            trunk: ckpt.dense(Tensor::Trunk.name())?,
            value_head: ckpt.dense(Tensor::ValueHead.name())?,
            vex_head: ckpt.dense(Tensor::VexHead.name())?,
        };
        ActorCritic::from_parts(shape, policy, critic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn model_survives_a_round_trip() {
        let shape = ModelShape {
            state_dim: 4,
            action_dim: 2,
            hidden: vec![8, 8],
            shared_trunk: false,
        };
        let m = ActorCritic::new(&shape, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut ck = Checkpoint::default();
        m.write_checkpoint(&mut ck);
        let back = ActorCritic::read_checkpoint(&Checkpoint::from_bytes(&ck.to_bytes()).unwrap())
            .unwrap();
        assert_eq!(back.flat_params(), m.flat_params());
        assert_eq!(back.shape(), m.shape());
    }

    #[test]
    fn header_is_json_and_payload_little_endian() {
        let mut ck = Checkpoint::default();
        ck.push_vector("v", &[1.0, -2.5]);
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[12..12 + hlen]).unwrap();
        assert_eq!(header["sections"][0]["len"], 2);
        assert_eq!(&bytes[12 + hlen..12 + hlen + 8], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[12 + hlen + 8..], &(-2.5f64).to_le_bytes());
    }

    #[test]
    fn corrupted_payload_is_rejected() {
        let mut ck = Checkpoint::default();
        ck.push_vector("v", &[1.0]);
        let mut bytes = ck.to_bytes();
        bytes.pop();
        assert!(Checkpoint::from_bytes(&bytes).is_err());
        assert!(Checkpoint::from_bytes(b"nonsense").is_err());
    }

    proptest! {
        #[test]
        fn vectors_round_trip_bitwise(data in proptest::collection::vec(any::<f64>(), 0..64)) {
            let mut ck = Checkpoint::default();
            ck.push_vector("x", &data);
            let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
            let got: Vec<u64> = back.sections[0].data.iter().map(|v| v.to_bits()).collect();
            let want: Vec<u64> = data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, want);
        }
    }
}
