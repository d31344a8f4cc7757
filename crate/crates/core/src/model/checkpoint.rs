//! Checkpoint container: a JSON header (format version, mode, full
//! architecture config, fingerprint) followed by the raw f64 parameter
//! blob, running normalization statistics, and optional optimizer state.
//! Round-trips are bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DetectorNet, Mode, ModelConfig, ModelError};
use crate::nn::ParamSet;

const MAGIC: &[u8; 8] = b"SYDTCKP1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    mode: Mode,
    config: ModelConfig,
    fingerprint: String,
    next_epoch: u64,
    tensors: Vec<TensorMeta>,
}

#[derive(Debug, Clone)]
pub struct DetectorCheckpoint {
    header: Header,
    data: Vec<Vec<f64>>,
}

impl DetectorCheckpoint {
    pub fn mode(&self) -> Mode {
        self.header.mode
    }

    pub fn config(&self) -> &ModelConfig {
        &self.header.config
    }

    pub fn fingerprint(&self) -> &str {
        &self.header.fingerprint
    }

    pub fn next_epoch(&self) -> u64 {
        self.header.next_epoch
    }

    /// Capture the full network state. Optimizer slots are stored when
    /// `include_optimizer` is set, enabling exact training resume.
    pub fn from_net(net: &DetectorNet, next_epoch: u64, include_optimizer: bool) -> Self {
        let mut tensors = Vec::new();
        let mut data = Vec::new();
        for p in net.params() {
            tensors.push(TensorMeta { name: p.name.clone(), shape: p.value.shape().to_vec() });
            data.push(p.value.iter().cloned().collect());
            if include_optimizer {
                if let Some(a) = &p.state_a {
                    tensors.push(TensorMeta {
                        name: format!("{}#opt_a", p.name),
                        shape: a.shape().to_vec(),
                    });
                    data.push(a.iter().cloned().collect());
                }
                if let Some(b) = &p.state_b {
                    tensors.push(TensorMeta {
                        name: format!("{}#opt_b", p.name),
                        shape: b.shape().to_vec(),
                    });
                    data.push(b.iter().cloned().collect());
                }
            }
        }
        for (i, norm) in net.norm_layers().iter().enumerate() {
            tensors.push(TensorMeta {
                name: format!("norm{i}#running_mean"),
                shape: vec![norm.running_mean.len()],
            });
            data.push(norm.running_mean.to_vec());
            tensors.push(TensorMeta {
                name: format!("norm{i}#running_var"),
                shape: vec![norm.running_var.len()],
            });
            data.push(norm.running_var.to_vec());
        }
        DetectorCheckpoint {
            header: Header {
                format_version: FORMAT_VERSION,
                mode: net.mode(),
                config: net.config.clone(),
                fingerprint: net.config.fingerprint(),
                next_epoch,
                tensors,
            },
            data,
        }
    }

    /// Reject checkpoints whose architecture fingerprint differs from
    /// the expected config.
    pub fn verify_config(&self, expected: &ModelConfig) -> Result<(), ModelError> {
        let expected_fp = expected.fingerprint();
        if expected_fp != self.header.fingerprint {
            return Err(ModelError::ConfigMismatch {
                expected: expected_fp,
                got: self.header.fingerprint.clone(),
            });
        }
        Ok(())
    }

    /// Rebuild the network this checkpoint captured, bit-exact.
    pub fn instantiate(&self) -> Result<DetectorNet, ModelError> {
        let mut net = match self.header.mode {
            Mode::Pretrain => DetectorNet::new_pretrain(&self.header.config)?,
            Mode::Calibrated => DetectorNet::new_calibrated(&self.header.config)?,
        };
        let by_name: std::collections::BTreeMap<&str, usize> = self
            .header
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (t.name.as_str(), i))
            .collect();
        let lookup = |name: &str| -> Option<&Vec<f64>> { by_name.get(name).map(|&i| &self.data[i]) };

        for p in net.params_mut() {
            let values = lookup(&p.name).ok_or_else(|| {
                ModelError::CheckpointFormat(format!("missing tensor {}", p.name))
            })?;
            if values.len() != p.value.len() {
                return Err(ModelError::CheckpointFormat(format!(
                    "tensor {} has {} values, expected {}",
                    p.name,
                    values.len(),
                    p.value.len()
                )));
            }
            for (dst, src) in p.value.iter_mut().zip(values) {
                *dst = *src;
            }
            if let Some(a) = lookup(&format!("{}#opt_a", p.name)) {
                let mut buf = ndarray::ArrayD::zeros(p.value.raw_dim());
                for (dst, src) in buf.iter_mut().zip(a) {
                    *dst = *src;
                }
                p.state_a = Some(buf);
            }
            if let Some(b) = lookup(&format!("{}#opt_b", p.name)) {
                let mut buf = ndarray::ArrayD::zeros(p.value.raw_dim());
                for (dst, src) in buf.iter_mut().zip(b) {
                    *dst = *src;
                }
                p.state_b = Some(buf);
            }
        }
        for (i, norm) in net.norm_layers_mut().into_iter().enumerate() {
            let mean = lookup(&format!("norm{i}#running_mean")).ok_or_else(|| {
                ModelError::CheckpointFormat(format!("missing running stats for norm{i}"))
            })?;
            let var = lookup(&format!("norm{i}#running_var")).ok_or_else(|| {
                ModelError::CheckpointFormat(format!("missing running stats for norm{i}"))
            })?;
            norm.running_mean = ndarray::Array1::from_vec(mean.clone());
            norm.running_var = ndarray::Array1::from_vec(var.clone());
        }
        Ok(net)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for tensor in &self.data {
            for v in tensor {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let fail = |msg: &str| ModelError::CheckpointFormat(msg.to_string());
        if bytes.len() < 20 || &bytes[0..8] != MAGIC {
            return Err(fail("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("sized"));
        if version != FORMAT_VERSION {
            return Err(fail(&format!("unsupported format version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("sized")) as usize;
        if bytes.len() < 20 + header_len {
            return Err(fail("truncated header"));
        }
        let header: Header = serde_json::from_slice(&bytes[20..20 + header_len])
            .map_err(|e| fail(&format!("header parse: {e}")))?;
        let mut offset = 20 + header_len;
        let mut data = Vec::with_capacity(header.tensors.len());
        for meta in &header.tensors {
            let count: usize = meta.shape.iter().product::<usize>().max(
                // Rank-0 tensors are not produced, but guard anyway.
                usize::from(meta.shape.is_empty()),
            );
            let bytes_needed = count * 8;
            if bytes.len() < offset + bytes_needed {
                return Err(fail(&format!("truncated tensor {}", meta.name)));
            }
            let mut values = Vec::with_capacity(count);
            for i in 0..count {
                let chunk: [u8; 8] = bytes[offset + i * 8..offset + (i + 1) * 8]
                    .try_into()
                    .expect("sized");
                values.push(f64::from_bits(u64::from_le_bytes(chunk)));
            }
            offset += bytes_needed;
            data.push(values);
        }
        Ok(DetectorCheckpoint { header, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut net = DetectorNet::new_pretrain(&ModelConfig::tiny(11)).unwrap();
        // Disturb state so defaults are not what round-trips.
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let x = Array4::from_shape_fn((2, 3, 32, 32), |_| rng.random_range(0.0..1.0));
        net.begin_stat_capture();
        let _ = net.embed_train(&x).unwrap();
        net.commit_stat_momentum();

        let ckpt = DetectorCheckpoint::from_net(&net, 3, false);
        let bytes = ckpt.to_bytes();
        let back = DetectorCheckpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.next_epoch(), 3);
        let rebuilt = back.instantiate().unwrap();
        assert_eq!(rebuilt.value_checksum(), net.value_checksum());
        for (a, b) in rebuilt.norm_layers().iter().zip(net.norm_layers()) {
            assert_eq!(a.running_mean, b.running_mean);
            assert_eq!(a.running_var, b.running_var);
        }
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn config_mismatch_rejected() {
        let net = DetectorNet::new_pretrain(&ModelConfig::tiny(1)).unwrap();
        let ckpt = DetectorCheckpoint::from_net(&net, 0, false);
        ckpt.verify_config(&ModelConfig::tiny(1)).unwrap();
        let err = ckpt.verify_config(&ModelConfig::small(1)).unwrap_err();
        assert!(matches!(err, ModelError::ConfigMismatch { .. }));
    }

    #[test]
    fn corrupt_bytes_rejected() {
        let net = DetectorNet::new_pretrain(&ModelConfig::tiny(2)).unwrap();
        let mut bytes = DetectorCheckpoint::from_net(&net, 0, false).to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            DetectorCheckpoint::from_bytes(&bytes),
            Err(ModelError::CheckpointFormat(_))
        ));
        assert!(matches!(
            DetectorCheckpoint::from_bytes(&bytes[..40]),
            Err(ModelError::CheckpointFormat(_))
        ));
    }
}
