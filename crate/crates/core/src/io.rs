//! JSON file formats for specs and chains.
//!
//! Complex numbers are `[re, im]` pairs and matrices are lists of rows.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{c, CMat, C64};
use crate::mps::{Boundary, MpsChain};
use crate::tensor::{make_bond_basis, random_delta_spec, random_spec, BondBasis, PepsSpec, PhysRule, SiteTensor};

pub const PEPS_FORMAT: &str = "dissprep.peps/1";
pub const MPS_FORMAT: &str = "dissprep.mps/1";

pub const PEPS_CONVENTION: &str = "matrix rows are physical states; columns index the virtual product basis over \
     leg_order, row-major with the first leg most significant; on edge (i, j) with i < j the first factor of \
     phi0 belongs to vertex i; complex entries are [re, im]";
pub const MPS_CONVENTION: &str = "sites[p][s] is the bond_dim x bond_dim matrix A^s at position p, repeated \
     cyclically along the chain; complex entries are [re, im]";

pub type JsonMat = Vec<Vec<[f64; 2]>>;

pub fn mat_to_json(m: &CMat) -> JsonMat {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn mat_from_json(rows: &JsonMat, what: &str) -> Result<CMat> {
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::validation(format!("{what}: rows have unequal length")));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

pub fn vec_to_json(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn vec_from_json(v: &[[f64; 2]]) -> Vec<C64> {
    v.iter().map(|z| c(z[0], z[1])).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorFile {
    pub vertex: usize,
    pub leg_order: Vec<usize>,
    pub matrix: JsonMat,
}

/// Seeded random tensors in place of an explicit list.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomTensors {
    pub seed: u64,
    #[serde(default = "default_rule")]
    pub phys: PhysRule,
    /// Exact uniform δ; plain Gaussian tensors when absent.
    #[serde(default)]
    pub delta: Option<f64>,
}

fn default_rule() -> PhysRule {
    PhysRule::Square
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PepsFile {
    #[serde(default)]
    pub format: Option<String>,
    #[serde(default)]
    pub convention: Option<String>,
    pub graph: Graph,
    pub bond_dim: usize,
    /// Maximally entangled when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi0: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensors: Option<Vec<TensorFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomTensors>,
}

impl PepsFile {
    pub fn into_spec(self) -> Result<PepsSpec> {
        if let Some(f) = &self.format {
            if f != PEPS_FORMAT {
                return Err(Error::validation(format!("key format: expected {PEPS_FORMAT:?}, got {f:?}")));
            }
        }
        let bond = match &self.phi0 {
            Some(p) => BondBasis::from_phi0(vec_from_json(p))?,
            None => make_bond_basis(self.bond_dim)?,
        };
        if bond.bond_dim() != self.bond_dim {
            return Err(Error::validation(format!(
                "key phi0: length {} does not match bond_dim {}",
                bond.phi0.len(),
                self.bond_dim
            )));
        }
        match (self.tensors, self.random) {
            (Some(ts), None) => {
                let tensors = ts
                    .iter()
                    .map(|t| {
                        let m = mat_from_json(&t.matrix, &format!("tensors[{}].matrix", t.vertex))?;
                        SiteTensor::new(t.vertex, m, self.bond_dim, t.leg_order.clone())
                    })
                    .collect::<Result<Vec<_>>>()?;
                PepsSpec::new(self.graph, tensors, bond)
            }
            (None, Some(r)) => {
                if self.phi0.is_some() {
                    return Err(Error::validation("key phi0 cannot be combined with random tensors"));
                }
                match r.delta {
                    Some(d) => random_delta_spec(&self.graph, self.bond_dim, r.phys, d, r.seed),
                    None => random_spec(&self.graph, self.bond_dim, r.phys, r.seed),
                }
            }
            _ => Err(Error::validation("exactly one of the keys tensors, random must be given")),
        }
    }
}

impl From<&PepsSpec> for PepsFile {
    fn from(s: &PepsSpec) -> Self {
        PepsFile {
            format: Some(PEPS_FORMAT.into()),
            convention: Some(PEPS_CONVENTION.into()),
            graph: s.graph.clone(),
            bond_dim: s.bond_dim,
            phi0: match make_bond_basis(s.bond_dim) {
                Ok(b) if b.phi0 == s.bond.phi0 => None,
                _ => Some(vec_to_json(&s.bond.phi0)),
            },
            tensors: Some(
                s.tensors
                    .iter()
                    .map(|t| TensorFile { vertex: t.vertex, leg_order: t.leg_order.clone(), matrix: mat_to_json(&t.matrix) })
                    .collect(),
            ),
            random: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpsFile {
    #[serde(default)]
    pub format: Option<String>,
    #[serde(default)]
    pub convention: Option<String>,
    pub length: usize,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    pub sites: Vec<Vec<JsonMat>>,
}

fn default_boundary() -> Boundary {
    Boundary::Periodic
}

impl MpsFile {
    pub fn into_chain(self) -> Result<MpsChain> {
        if let Some(f) = &self.format {
            if f != MPS_FORMAT {
                return Err(Error::validation(format!("key format: expected {MPS_FORMAT:?}, got {f:?}")));
            }
        }
        let sites = self
            .sites
            .iter()
            .enumerate()
            .map(|(p, s)| {
                s.iter()
                    .enumerate()
                    .map(|(k, m)| mat_from_json(m, &format!("sites[{p}][{k}]")))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let chain = MpsChain { sites, length: self.length, boundary: self.boundary };
        chain.validate()?;
        Ok(chain)
    }
}

impl From<&MpsChain> for MpsFile {
    fn from(m: &MpsChain) -> Self {
        MpsFile {
            format: Some(MPS_FORMAT.into()),
            convention: Some(MPS_CONVENTION.into()),
            length: m.length,
            boundary: m.boundary,
            sites: m.sites.iter().map(|s| s.iter().map(mat_to_json).collect()).collect(),
        }
    }
}

impl Serialize for PepsSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PepsFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for PepsSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        PepsFile::deserialize(d)?.into_spec().map_err(serde::de::Error::custom)
    }
}

impl Serialize for MpsChain {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MpsFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for MpsChain {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        MpsFile::deserialize(d)?.into_chain().map_err(serde::de::Error::custom)
    }
}
