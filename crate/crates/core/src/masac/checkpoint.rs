use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ganet::ActorNet;
use crate::nn::ParamStore;
use crate::simcore::EnvConfig;

const MAGIC: &[u8; 8] = b"SUBNETCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionInfo {
    pub name: String,
    pub shapes: Vec<(usize, usize)>,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    /// `"actor"` or `"full"`.
    pub kind: String,
    pub fingerprint: String,
    pub variant: String,
    pub env: EnvConfig,
    /// Architecture description needed to rebuild the networks.
    pub arch: serde_json::Value,
    pub sections: Vec<SectionInfo>,
}

/// Versioned binary container: magic, version, JSON header, little-endian f64 payload.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointFile {
    pub header: CheckpointHeader,
    pub sections: Vec<Vec<f64>>,
}

impl CheckpointFile {
    pub fn new(kind: &str, variant: &str, env: &EnvConfig, arch: serde_json::Value, stores: &[(&str, &ParamStore)]) -> Self {
        let sections = stores
            .iter()
            .map(|(name, s)| SectionInfo { name: name.to_string(), shapes: s.shapes(), len: s.num_scalars() })
            .collect();
        Self {
            header: CheckpointHeader {
                version: CHECKPOINT_VERSION,
                kind: kind.to_string(),
                fingerprint: env.fingerprint(),
                variant: variant.to_string(),
                env: env.clone(),
                arch,
                sections,
            },
            sections: stores.iter().map(|(_, s)| s.flatten()).collect(),
        }
    }

    pub fn section(&self, name: &str) -> Option<&[f64]> {
        let i = self.header.sections.iter().position(|s| s.name == name)?;
        Some(&self.sections[i])
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let total: usize = self.sections.iter().map(Vec::len).sum();
        let mut out = Vec::with_capacity(16 + header.len() + 8 * total);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let len = u32::try_from(header.len()).map_err(|_| Error::Checkpoint("header too large".into()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&header);
        for s in &self.sections {
            for v in s {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(body)?;
        let mut off = 16 + hlen;
        let mut sections = Vec::with_capacity(header.sections.len());
        for info in &header.sections {
            let end = off + 8 * info.len;
            let raw = bytes.get(off..end).ok_or_else(|| bad("truncated payload"))?;
            sections.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect());
            off = end;
        }
        if off != bytes.len() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self { header, sections })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorArch {
    pub n_agents: usize,
    pub obs_dim: usize,
    pub n_actions: usize,
    pub hidden: [usize; 2],
}

/// Decentralised policies only: everything needed for execution, no critics.
#[derive(Clone, Debug)]
pub struct ActorCheckpoint {
    pub env: EnvConfig,
    pub variant: String,
    pub arch: ActorArch,
    pub net: ActorNet,
    pub params: ParamStore,
}

impl ActorCheckpoint {
    pub fn new(env: &EnvConfig, variant: &str, net: &ActorNet, params: &ParamStore, hidden: [usize; 2]) -> Self {
        Self {
            env: env.clone(),
            variant: variant.to_string(),
            arch: ActorArch { n_agents: net.n_agents(), obs_dim: net.obs_dim, n_actions: net.n_actions, hidden },
            net: net.clone(),
            params: params.clone(),
        }
    }

    pub fn fingerprint(&self) -> String {
        self.env.fingerprint()
    }

    pub fn to_file(&self) -> Result<CheckpointFile> {
        Ok(CheckpointFile::new("actor", &self.variant, &self.env, serde_json::to_value(&self.arch)?, &[("actor", &self.params)]))
    }

    pub fn from_file(file: &CheckpointFile) -> Result<Self> {
        if file.header.kind != "actor" && file.header.kind != "full" {
            return Err(Error::Checkpoint(format!("unknown checkpoint kind {}", file.header.kind)));
        }
        let arch: ActorArch = match file.header.arch.get("actor") {
            Some(v) => serde_json::from_value(v.clone())?,
            None => serde_json::from_value(file.header.arch.clone())?,
        };
        let section = if file.header.kind == "full" { "actor_target" } else { "actor" };
        let flat = file.section(section).ok_or_else(|| Error::Checkpoint(format!("missing section {section}")))?;
        let mut params = ParamStore::new();
        // Layer construction order fixes parameter layout; the values are overwritten below.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let net = ActorNet::new(arch.n_agents, arch.obs_dim, arch.n_actions, arch.hidden, &mut params, &mut rng);
        params.load_flat(flat)?;
        Ok(Self { env: file.header.env.clone(), variant: file.header.variant.clone(), arch, net, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_file()?.write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(&CheckpointFile::read(path)?)
    }

    /// Refuses to run under a configuration the policies were not trained for.
    pub fn check_compatible(&self, cfg: &EnvConfig) -> Result<()> {
        let (expected, found) = (cfg.fingerprint(), self.fingerprint());
        if expected != found {
            return Err(Error::FingerprintMismatch { expected, found });
        }
        Ok(())
    }
}
