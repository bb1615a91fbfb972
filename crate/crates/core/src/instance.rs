//! Market data: customer zones, candidate locations, customer types, capacity.
//!
//! Utilities are stored already normalized against the competitor, i.e. the competitor's
//! aggregate utility in every zone is exactly 1 (see [`normalize_competitor`]).

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cpgf::{CpgfModel, ModelKind, NestStructure};
use crate::error::{Error, Result};

pub const FILE_VERSION: u32 = 1;

/// One customer zone with `N` customer types.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub q: f64,
    pub tau_hat: Vec<f64>,
    pub type_utilities: Vec<Vec<f64>>,
}

impl Zone {
    pub fn num_types(&self) -> usize {
        self.tau_hat.len()
    }

    /// `Σ_n η_n ṽ^n`, written into `out`.
    pub fn mixture_utilities_into(&self, eta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (row, &w) in self.type_utilities.iter().zip(eta) {
            for (o, &u) in out.iter_mut().zip(row) {
                *o += w * u;
            }
        }
    }

    pub fn mixture_utilities(&self, eta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.type_utilities.first().map_or(0, Vec::len)];
        self.mixture_utilities_into(eta, &mut out);
        out
    }

    /// Utilities at the estimated proportions.
    pub fn mean_utilities(&self) -> Vec<f64> {
        self.mixture_utilities(&self.tau_hat)
    }

    fn validate(&self, index: usize, m: usize, n: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("zone {index}: {msg}")));
        if !(self.q > 0.0) || !self.q.is_finite() {
            return fail(format!("demand q = {} must be positive", self.q));
        }
        if self.tau_hat.is_empty() {
            return fail("at least one customer type is required".into());
        }
        if self.tau_hat.len() != n || self.type_utilities.len() != n {
            return fail(format!(
                "expected {n} types, found {} proportions and {} utility rows",
                self.tau_hat.len(),
                self.type_utilities.len()
            ));
        }
        if self.tau_hat.iter().any(|&t| !(t >= 0.0)) {
            return fail("tau_hat entries must be non-negative".into());
        }
        let total: f64 = self.tau_hat.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return fail(format!("tau_hat sums to {total}, not 1"));
        }
        for (t, row) in self.type_utilities.iter().enumerate() {
            if row.len() != m {
                return fail(format!("type {t} has {} utilities, expected {m}", row.len()));
            }
            if row.iter().any(|u| !u.is_finite()) {
                return fail(format!("type {t} has a non-finite utility"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub zones: Vec<Zone>,
    pub m: usize,
    pub capacity: usize,
    pub model: CpgfModel,
}

impl Instance {
    pub fn new(zones: Vec<Zone>, capacity: usize, model: CpgfModel) -> Result<Self> {
        let m = model.num_locations();
        let instance = Instance { zones, m, capacity, model };
        instance.validate()?;
        Ok(instance)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.num_locations() != self.m {
            return Err(Error::Validation(format!(
                "model covers {} locations but m = {}",
                self.model.num_locations(),
                self.m
            )));
        }
        if self.capacity < 1 || self.capacity > self.m {
            return Err(Error::Validation(format!(
                "capacity {} must lie in [1, m = {}]",
                self.capacity, self.m
            )));
        }
        if self.zones.is_empty() {
            return Err(Error::Validation("instance has no zones".into()));
        }
        let n = self.zones[0].num_types();
        for (i, zone) in self.zones.iter().enumerate() {
            zone.validate(i, self.m, n)?;
        }
        Ok(())
    }

    pub fn num_zones(&self) -> usize {
        self.zones.len()
    }

    pub fn num_types(&self) -> usize {
        self.zones[0].num_types()
    }

    pub fn total_demand(&self) -> f64 {
        self.zones.iter().map(|z| z.q).sum()
    }

    pub fn with_capacity(&self, capacity: usize) -> Result<Self> {
        let mut out = self.clone();
        out.capacity = capacity;
        out.validate()?;
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        if file.version != FILE_VERSION {
            return Err(Error::Validation(format!(
                "unsupported instance file version {} (expected {FILE_VERSION})",
                file.version
            )));
        }
        let model = match file.model {
            ModelFile::Mnl => CpgfModel::mnl(file.m),
            ModelFile::Nested { nests, mu } => {
                CpgfModel::nested(NestStructure::new(nests, mu, file.m)?)
            }
        };
        let instance = Instance { zones: file.zones, m: file.m, capacity: file.capacity, model };
        instance.validate()?;
        Ok(instance)
    }

    pub fn to_json(&self) -> Result<String> {
        let model = match self.model.kind() {
            ModelKind::Mnl => ModelFile::Mnl,
            ModelKind::NestedLogit(ns) => {
                ModelFile::Nested { nests: ns.nests().to_vec(), mu: ns.mu().to_vec() }
            }
        };
        let file = InstanceFile {
            version: FILE_VERSION,
            m: self.m,
            capacity: self.capacity,
            model,
            zones: self.zones.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    version: u32,
    m: usize,
    capacity: usize,
    model: ModelFile,
    zones: Vec<Zone>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ModelFile {
    Mnl,
    Nested { nests: Vec<Vec<usize>>, mu: Vec<f64> },
}

/// Rescales raw utilities so the competitor's utility `U` becomes 1: `v - ln U`.
pub fn normalize_competitor(raw: &[Vec<f64>], competitor_utility: f64) -> Result<Vec<Vec<f64>>> {
    if !(competitor_utility > 0.0) || !competitor_utility.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "competitor utility must be positive, got {competitor_utility}"
        )));
    }
    let shift = competitor_utility.ln();
    Ok(raw.iter().map(|row| row.iter().map(|v| v - shift).collect()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GeneratedModel {
    Mnl,
    /// Contiguous nests, one per `mu` entry.
    Nested { mu: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_zones: usize,
    pub m: usize,
    pub capacity: usize,
    pub num_types: usize,
    pub utility_range: (f64, f64),
    pub demand_range: (f64, f64),
    pub model: GeneratedModel,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_zones: 100,
            m: 50,
            capacity: 5,
            num_types: 5,
            utility_range: (-2.0, 2.0),
            demand_range: (1.0, 10.0),
            model: GeneratedModel::Mnl,
            seed: 0,
        }
    }
}

/// Dissimilarity parameters used for the nested-logit experiments.
pub const EXPERIMENT_MU: [f64; 5] = [1.1, 1.2, 1.3, 1.4, 1.5];

/// Uniform draw from the probability simplex via normalized exponential spacings.
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|t| *t /= total);
    w
}

/// Random instance; a pure function of `config`.
pub fn generate(config: &GeneratorConfig) -> Result<Instance> {
    let (lo, hi) = config.utility_range;
    let (qlo, qhi) = config.demand_range;
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("utility range ({lo}, {hi}) is empty")));
    }
    if !(qlo > 0.0 && qlo <= qhi) {
        return Err(Error::InvalidArgument(format!("demand range ({qlo}, {qhi}) is invalid")));
    }
    if config.num_zones == 0 || config.m == 0 || config.num_types == 0 {
        return Err(Error::InvalidArgument("zones, locations and types must be positive".into()));
    }
    let model = match &config.model {
        GeneratedModel::Mnl => CpgfModel::mnl(config.m),
        GeneratedModel::Nested { mu } => {
            CpgfModel::nested(NestStructure::contiguous(config.m, mu.clone())?)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let zones = (0..config.num_zones)
        .map(|_| {
            let q = if qlo == qhi { qlo } else { rng.gen_range(qlo..qhi) };
            let tau_hat = sample_simplex(&mut rng, config.num_types);
            let type_utilities = (0..config.num_types)
                .map(|_| (0..config.m).map(|_| rng.gen_range(lo..hi)).collect())
                .collect();
            Zone { q, tau_hat, type_utilities }
        })
        .collect();
    Instance::new(zones, config.capacity, model)
}
