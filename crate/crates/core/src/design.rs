//! Randomization designs and per-draw seeding.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{partition_rows, ExperimentData};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignKind {
    /// Independent assignment with probability `rho`.
    Bernoulli { rho: f64 },
    /// Sampling `n_treated` units without replacement.
    Srs { n_treated: usize },
    /// Sampling without replacement inside each stratum.
    StratifiedSrs { n_treated: Vec<usize> },
    /// Replications supplied by the user; draw `r` is `draws[r % len]`.
    External { draws: Vec<Vec<u8>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDescriptor {
    #[serde(flatten)]
    pub kind: DesignKind,
    /// Stratum index per unit (`0..S`), required for stratified designs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strata: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
}

/// Fixed-count structure of an srs or stratified-srs design.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedCounts {
    pub block_of: Vec<usize>,
    pub sizes: Vec<usize>,
    pub n_treated: Vec<usize>,
}

impl FixedCounts {
    pub fn prob(&self, block: usize) -> f64 {
        self.n_treated[block] as f64 / self.sizes[block] as f64
    }
}

impl DesignDescriptor {
    pub fn bernoulli(rho: f64, seed: u64) -> Self {
        DesignDescriptor {
            kind: DesignKind::Bernoulli { rho },
            strata: None,
            seed,
        }
    }

    pub fn srs(n_treated: usize, seed: u64) -> Self {
        DesignDescriptor {
            kind: DesignKind::Srs { n_treated },
            strata: None,
            seed,
        }
    }

    pub fn stratified(strata: Vec<usize>, n_treated: Vec<usize>, seed: u64) -> Self {
        DesignDescriptor {
            kind: DesignKind::StratifiedSrs { n_treated },
            strata: Some(strata),
            seed,
        }
    }

    /// Srs with the observed number of treated units.
    pub fn srs_like(data: &ExperimentData, seed: u64) -> Self {
        Self::srs(data.n_treated(), seed)
    }

    /// Stratified srs over the distinct values of `column`, with the observed
    /// treated count in each stratum.
    pub fn stratified_like(data: &ExperimentData, column: &str, seed: u64) -> Result<Self> {
        let col = data.covariate(column)?;
        let strata = partition_rows(data.n_units(), |i| col[i].to_bits());
        let n_strata = strata.iter().max().map_or(0, |&s| s + 1);
        let mut n_treated = vec![0; n_strata];
        for (i, &s) in strata.iter().enumerate() {
            n_treated[s] += usize::from(data.treatment()[i]);
        }
        Ok(Self::stratified(strata, n_treated, seed))
    }

    pub fn validate(&self, n_units: usize) -> Result<()> {
        match &self.kind {
            DesignKind::Bernoulli { rho } => {
                if !(*rho > 0.0 && *rho < 1.0) {
                    return Err(Error::InvalidDesign(format!("bernoulli rho {rho} not in (0,1)")));
                }
            }
            DesignKind::Srs { n_treated } => {
                if *n_treated == 0 || *n_treated >= n_units {
                    return Err(Error::InvalidDesign(format!(
                        "srs needs 0 < N1 < N, got N1={n_treated}, N={n_units}"
                    )));
                }
            }
            DesignKind::StratifiedSrs { n_treated } => {
                let strata = self
                    .strata
                    .as_ref()
                    .ok_or_else(|| Error::InvalidDesign("stratified design without strata".into()))?;
                if strata.len() != n_units {
                    return Err(Error::LengthMismatch {
                        what: "strata",
                        got: strata.len(),
                        expected: n_units,
                    });
                }
                let mut sizes = vec![0usize; n_treated.len()];
                for &s in strata {
                    if s >= n_treated.len() {
                        return Err(Error::InvalidDesign(format!(
                            "stratum {s} has no treated count"
                        )));
                    }
                    sizes[s] += 1;
                }
                for (s, (&k, &n)) in n_treated.iter().zip(&sizes).enumerate() {
                    if k > n {
                        return Err(Error::InvalidDesign(format!(
                            "stratum {s}: {k} treated out of {n} units"
                        )));
                    }
                }
                let total: usize = n_treated.iter().sum();
                if total == 0 || total == n_units {
                    return Err(Error::DegenerateArms {
                        n_treated: total,
                        n_units,
                    });
                }
            }
            DesignKind::External { draws } => {
                if draws.is_empty() {
                    return Err(Error::InvalidDesign("no external replications".into()));
                }
                for d in draws {
                    if d.len() != n_units || d.iter().any(|&x| x > 1) {
                        return Err(Error::InvalidDesign(
                            "external draw has wrong length or non-binary entries".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_srs(&self) -> bool {
        matches!(self.kind, DesignKind::Srs { .. })
    }

    /// Block structure when treated counts are fixed within blocks.
    pub fn fixed_counts(&self, n_units: usize) -> Option<FixedCounts> {
        match &self.kind {
            DesignKind::Srs { n_treated } => Some(FixedCounts {
                block_of: vec![0; n_units],
                sizes: vec![n_units],
                n_treated: vec![*n_treated],
            }),
            DesignKind::StratifiedSrs { n_treated } => {
                let strata = self.strata.as_ref()?;
                let mut sizes = vec![0; n_treated.len()];
                for &s in strata {
                    sizes[s] += 1;
                }
                Some(FixedCounts {
                    block_of: strata.clone(),
                    sizes,
                    n_treated: n_treated.clone(),
                })
            }
            _ => None,
        }
    }

    /// Marginal treatment probability of every unit.
    pub fn treat_probs(&self, n_units: usize) -> Vec<f64> {
        match &self.kind {
            DesignKind::Bernoulli { rho } => vec![*rho; n_units],
            DesignKind::External { draws } => {
                let mut p = vec![0.0; n_units];
                for d in draws {
                    for (pi, &x) in p.iter_mut().zip(d) {
                        *pi += f64::from(x);
                    }
                }
                p.iter().map(|v| v / draws.len() as f64).collect()
            }
            _ => {
                let fc = self.fixed_counts(n_units).expect("fixed-count design");
                fc.block_of.iter().map(|&b| fc.prob(b)).collect()
            }
        }
    }

    /// Draws one assignment from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, n_units: usize, rng: &mut R) -> Vec<u8> {
        match &self.kind {
            DesignKind::Bernoulli { rho } => {
                (0..n_units).map(|_| u8::from(rng.random::<f64>() < *rho)).collect()
            }
            DesignKind::Srs { n_treated } => {
                let mut x = vec![0u8; n_units];
                for i in index::sample(rng, n_units, *n_treated) {
                    x[i] = 1;
                }
                x
            }
            DesignKind::StratifiedSrs { n_treated } => {
                let strata = self.strata.as_ref().expect("validated stratified design");
                let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_treated.len()];
                for (i, &s) in strata.iter().enumerate() {
                    members[s].push(i);
                }
                let mut x = vec![0u8; n_units];
                for (s, m) in members.iter().enumerate() {
                    for k in index::sample(rng, m.len(), n_treated[s]) {
                        x[m[k]] = 1;
                    }
                }
                x
            }
            DesignKind::External { draws } => {
                let r = rng.random_range(0..draws.len());
                draws[r].clone()
            }
        }
    }

    /// The `index`-th replication, reproducible from `(seed, index)` alone.
    pub fn draw(&self, n_units: usize, index: u64) -> Vec<u8> {
        if let DesignKind::External { draws } = &self.kind {
            return draws[(index % draws.len() as u64) as usize].clone();
        }
        self.sample(n_units, &mut draw_rng(self.seed, index))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `index` derived from a base seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Independent RNG for stream `index`.
pub fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srs_draws_have_fixed_count() {
        let d = DesignDescriptor::srs(3, 7);
        d.validate(10).unwrap();
        for r in 0..50 {
            let x = d.draw(10, r);
            assert_eq!(x.iter().map(|&v| v as usize).sum::<usize>(), 3);
        }
        assert_eq!(d.draw(10, 4), d.draw(10, 4));
    }

    #[test]
    fn stratified_draws_respect_strata() {
        let strata = vec![0, 0, 0, 1, 1, 1, 1];
        let d = DesignDescriptor::stratified(strata.clone(), vec![1, 3], 1);
        d.validate(7).unwrap();
        for r in 0..20 {
            let x = d.draw(7, r);
            assert_eq!(x[..3].iter().filter(|&&v| v == 1).count(), 1);
            assert_eq!(x[3..].iter().filter(|&&v| v == 1).count(), 3);
        }
        let fc = d.fixed_counts(7).unwrap();
        assert_eq!(fc.sizes, vec![3, 4]);
        assert!((fc.prob(1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn validation_cases() {
        assert!(DesignDescriptor::bernoulli(0.0, 0).validate(3).is_err());
        assert!(DesignDescriptor::bernoulli(1.0, 0).validate(3).is_err());
        assert!(DesignDescriptor::srs(0, 0).validate(3).is_err());
        assert!(DesignDescriptor::srs(3, 0).validate(3).is_err());
        assert!(DesignDescriptor::stratified(vec![0, 1], vec![2, 0], 0)
            .validate(2)
            .is_err());
    }

    #[test]
    fn bernoulli_mean() {
        let d = DesignDescriptor::bernoulli(0.3, 11);
        let n = 1000;
        let total: usize = (0..100)
            .map(|r| d.draw(n, r).iter().map(|&v| v as usize).sum::<usize>())
            .sum();
        let mean = total as f64 / (100.0 * n as f64);
        let se = (0.3f64 * 0.7 / 1e5).sqrt();
        assert!((mean - 0.3).abs() < 4.0 * se);
    }

    #[test]
    fn serde_round_trip() {
        let d = DesignDescriptor::srs(5, 9);
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"kind":"srs","n_treated":5,"seed":9}"#);
        assert_eq!(serde_json::from_str::<DesignDescriptor>(&s).unwrap(), d);
    }
}
