//! Named learnable tensors, their initialization, and checkpoints.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tape::{numel, Tape, Var};
use crate::error::{Error, Result};
use crate::io::gbin::{read_gbin, write_gbin, Dtype};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum InitScheme {
    Zeros,
    Ones,
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    UniformFanIn {
        fan_in: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub init: InitScheme,
}

#[derive(Debug, Clone, Default)]
pub struct ParameterSet {
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

/// Tape handles for every parameter of a set, in registration order.
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn new(vars: Vec<Var>) -> Self {
        Bound(vars)
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    file: String,
    shape: Vec<usize>,
    dtype: String,
    init: InitScheme,
}

const MANIFEST: &str = "manifest.json";

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: InitScheme, rng: &mut Rng) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Spec(format!("duplicate parameter name {name:?}")));
        }
        let n = numel(shape);
        let data = match init {
            InitScheme::Zeros => vec![0.0; n],
            InitScheme::Ones => vec![1.0; n],
            InitScheme::UniformFanIn { fan_in } => {
                if fan_in == 0 {
                    return Err(Error::Spec(format!("{name}: fan_in must be positive")));
                }
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| (2.0 * rng.uniform() - 1.0) * bound).collect()
            }
        };
        let id = self.params.len();
        self.index.insert(name.to_string(), id);
        self.params.push(Parameter { name: name.to_string(), shape: shape.to_vec(), data, init });
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.id(name).map(|id| &self.params[id.0])
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// L2 norm over all parameters.
    pub fn norm(&self) -> f64 {
        self.params.iter().flat_map(|p| &p.data).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// FNV-1a over names, shapes and value bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for p in &self.params {
            eat(p.name.as_bytes());
            for &d in &p.shape {
                eat(&(d as u64).to_le_bytes());
            }
            for v in &p.data {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Places every parameter on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Result<Bound> {
        let vars = self.params.iter().map(|p| tape.leaf(&p.shape, p.data.clone())).collect::<Result<Vec<_>>>()?;
        Ok(Bound(vars))
    }

    pub fn save_checkpoint(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut manifest = Vec::with_capacity(self.params.len());
        for (i, p) in self.params.iter().enumerate() {
            let file = format!("{i:04}.gbin");
            write_gbin(dir.join(&file), Dtype::F64, &p.shape, &p.data)?;
            manifest.push(ManifestEntry {
                name: p.name.clone(),
                file,
                shape: p.shape.clone(),
                dtype: Dtype::F64.name().to_string(),
                init: p.init,
            });
        }
        std::fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    /// Overwrites values from a checkpoint. Names and shapes must match exactly.
    pub fn load_checkpoint(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let manifest: Vec<ManifestEntry> = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST))?)?;
        if manifest.len() != self.params.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} tensors, model has {}",
                manifest.len(),
                self.params.len()
            )));
        }
        let mut loaded = Vec::with_capacity(manifest.len());
        for e in &manifest {
            let id = self.id(&e.name).ok_or_else(|| Error::Format(format!("unknown parameter {:?}", e.name)))?;
            let arr = read_gbin(dir.join(&e.file))?;
            if arr.dims != self.params[id.0].shape {
                return Err(Error::Format(format!(
                    "{}: checkpoint shape {:?}, model shape {:?}",
                    e.name, arr.dims, self.params[id.0].shape
                )));
            }
            loaded.push((id, arr.data));
        }
        for (id, data) in loaded {
            self.params[id.0].data = data;
        }
        Ok(())
    }
}
