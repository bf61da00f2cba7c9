//! Indirect exposure, thresholding, propensity classes and degree capping.

use serde::{Deserialize, Serialize};

use crate::data::{partition_rows, ExperimentData, Network};
use crate::error::{Error, Result};

/// Number of treated out-neighbors of every unit.
pub fn compute_exposure(network: &Network, treatment: &[u8]) -> Result<Vec<u32>> {
    if treatment.len() != network.n_units() {
        return Err(Error::LengthMismatch {
            what: "treatment",
            got: treatment.len(),
            expected: network.n_units(),
        });
    }
    Ok((0..network.n_units())
        .map(|i| {
            network
                .neighbors(i)
                .iter()
                .map(|&j| u32::from(treatment[j]))
                .sum()
        })
        .collect())
}

/// `W_i = 1` iff `z_i >= z_min`.
pub fn threshold_exposure(z: &[u32], z_min: u32) -> Vec<u8> {
    z.iter().map(|&zi| u8::from(zi >= z_min)).collect()
}

/// Per-unit value used to key propensity classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKey {
    OutDegree,
    InDegree,
    Covariate(String),
}

impl ClassKey {
    fn describe(&self) -> String {
        match self {
            ClassKey::OutDegree => "out-degree".into(),
            ClassKey::InDegree => "in-degree".into(),
            ClassKey::Covariate(c) => c.clone(),
        }
    }

    fn values(&self, data: &ExperimentData) -> Result<Vec<f64>> {
        Ok(match self {
            ClassKey::OutDegree => data.network().out_degrees().iter().map(|&d| d as f64).collect(),
            ClassKey::InDegree => data.network().in_degrees().iter().map(|&d| d as f64).collect(),
            ClassKey::Covariate(c) => data.covariate(c)?.to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityClasses {
    pub class_of: Vec<usize>,
    pub sizes: Vec<usize>,
    pub key: String,
}

impl PropensityClasses {
    /// Builds classes from an explicit labelling (`0..K`, all occupied).
    pub fn from_labels(class_of: Vec<usize>, key: &str) -> Result<Self> {
        let k = class_of.iter().max().map_or(0, |&m| m + 1);
        let mut sizes = vec![0; k];
        for &c in &class_of {
            sizes[c] += 1;
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidValue {
                row: 0,
                column: key.to_string(),
                message: "class labels must be contiguous".into(),
            });
        }
        Ok(PropensityClasses {
            class_of,
            sizes,
            key: key.to_string(),
        })
    }

    /// A single class holding every unit.
    pub fn single(n_units: usize) -> Self {
        PropensityClasses {
            class_of: vec![0; n_units],
            sizes: vec![n_units],
            key: "all".into(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.sizes.len()
    }

    pub fn n_units(&self) -> usize {
        self.class_of.len()
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.n_classes()];
        for (i, &c) in self.class_of.iter().enumerate() {
            m[c].push(i);
        }
        m
    }

    /// Class means of `values`.
    pub fn class_means(&self, values: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_classes()];
        for (&c, &v) in self.class_of.iter().zip(values) {
            sums[c] += v;
        }
        sums.iter()
            .zip(&self.sizes)
            .map(|(s, &n)| s / n as f64)
            .collect()
    }

    /// `values` minus their class mean.
    pub fn demean(&self, values: &[f64]) -> Vec<f64> {
        let means = self.class_means(values);
        values
            .iter()
            .zip(&self.class_of)
            .map(|(v, &c)| v - means[c])
            .collect()
    }
}

/// Classes are the distinct tuples of key values, numbered in order of first appearance.
pub fn build_propensity_classes(
    data: &ExperimentData,
    keys: &[ClassKey],
) -> Result<PropensityClasses> {
    if keys.is_empty() {
        return Err(Error::EmptyKeys);
    }
    let cols: Vec<Vec<f64>> = keys.iter().map(|k| k.values(data)).collect::<Result<_>>()?;
    let class_of = partition_rows(data.n_units(), |i| {
        cols.iter().map(|c| c[i].to_bits()).collect::<Vec<u64>>()
    });
    let key = keys
        .iter()
        .map(ClassKey::describe)
        .collect::<Vec<_>>()
        .join(" x ");
    PropensityClasses::from_labels(class_of, &key)
}

/// Keeps each unit's `d_max` lowest-index out-edges, then drops in-edges
/// beyond `d_max` per target, keeping those from the lowest-index sources.
pub fn cap_degree(network: &Network, d_max: usize) -> Network {
    let n = network.n_units();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        edges.extend(network.neighbors(i).iter().take(d_max).map(|&j| (i, j)));
    }
    // Edges are sorted by source, so in-edges are visited in source order.
    let mut in_count = vec![0usize; n];
    edges.retain(|&(_, j)| {
        in_count[j] += 1;
        in_count[j] <= d_max
    });
    Network::from_edges(n, &edges)
        .expect("subset of a valid network")
        .0
}
