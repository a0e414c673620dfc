//! `model.bin`: magic, format version, JSON header, little-endian f64
//! parameters, SHA-256 trailer.

use std::path::Path;

use divcomb_core::net::{MetaNet, NetConfig, TrainConfig};
use divcomb_core::pool::{self, ForecasterSpec};
use divcomb_core::series::Frequency;
use divcomb_core::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

pub const MAGIC: &[u8; 8] = b"DIVCOMB\0";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

/// Trained network plus everything needed to reproduce its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelContainer {
    pub net: MetaNet,
    pub frequency: Frequency,
    pub horizon: usize,
    pub seasonal_period: usize,
    pub pool: Vec<ForecasterSpec>,
    pub train: TrainConfig,
    pub tau: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Architecture {
    input_len: usize,
    methods: usize,
    filters: [usize; 3],
    kernels: [usize; 3],
    se_ratio: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainSnapshot {
    lr: f64,
    batch_size: usize,
    lambda: f64,
    max_epochs: usize,
    patience: usize,
    seed: u64,
    validation_fraction: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    frequency: String,
    horizon: usize,
    seasonal_period: usize,
    pool: Vec<String>,
    tau: Option<f64>,
    train: TrainSnapshot,
    tensors: Vec<TensorEntry>,
}

impl ModelContainer {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let cfg = self.net.config();
        let t = &self.train;
        let named = self.net.named_params();
        let header = Header {
            architecture: Architecture {
                input_len: cfg.input_len,
                methods: cfg.methods,
                filters: cfg.filters,
                kernels: cfg.kernels,
                se_ratio: cfg.se_ratio,
            },
            frequency: self.frequency.to_string(),
            horizon: self.horizon,
            seasonal_period: self.seasonal_period,
            pool: pool::pool_names(&self.pool),
            tau: self.tau,
            train: TrainSnapshot {
                lr: t.lr,
                batch_size: t.batch_size,
                lambda: t.lambda,
                max_epochs: t.max_epochs,
                patience: t.patience,
                seed: t.seed,
                validation_fraction: t.validation_fraction,
            },
            tensors: named
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &named {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(digest.as_slice());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| AppError::CorruptFile(m.to_string());
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt("missing magic bytes"));
        }
        let mut at = MAGIC.len();
        let version = u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        at += 4;
        if version != FORMAT_VERSION {
            return Err(AppError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < at + 8 + CHECKSUM_LEN {
            return Err(corrupt("file truncated"));
        }
        let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != checksum {
            return Err(corrupt("checksum mismatch"));
        }
        let header_len = u64::from_le_bytes(body[at..at + 8].try_into().expect("8 bytes")) as usize;
        at += 8;
        let header_end = at
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| corrupt("header length out of range"))?;
        let header: Header = serde_json::from_slice(&body[at..header_end])
            .map_err(|e| AppError::CorruptFile(format!("header: {e}")))?;
        let mut payload = body[header_end..].chunks_exact(8);
        let expected: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        if payload.len() != expected || !payload.remainder().is_empty() {
            return Err(corrupt("parameter payload size does not match header"));
        }
        let named = header
            .tensors
            .into_iter()
            .map(|e| {
                let n = e.shape.iter().product();
                let data = payload
                    .by_ref()
                    .take(n)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                Ok((e.name, Tensor::new(&e.shape, data)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let a = header.architecture;
        let config = NetConfig {
            input_len: a.input_len,
            methods: a.methods,
            filters: a.filters,
            kernels: a.kernels,
            se_ratio: a.se_ratio,
        };
        let net = MetaNet::from_named(config, named)?;
        let pool = pool::parse_pool(&header.pool.join(","))?;
        let t = header.train;
        Ok(Self {
            net,
            frequency: header.frequency.parse().unwrap_or_else(|never| match never {}),
            horizon: header.horizon,
            seasonal_period: header.seasonal_period,
            pool,
            train: TrainConfig {
                lr: t.lr,
                batch_size: t.batch_size,
                lambda: t.lambda,
                max_epochs: t.max_epochs,
                patience: t.patience,
                seed: t.seed,
                validation_fraction: t.validation_fraction,
            },
            tau: header.tau,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| AppError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
