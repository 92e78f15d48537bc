//! Synthetic cities with known ground truth.
//!
//! Stores are scattered over a square; customers live at uniform random homes
//! and visit each store independently with probability
//! `base_visit_prob · exp(-distance / λ_chain)`. Nearby stores therefore share
//! more customers than distant ones.
//!
//! Randomness comes from ChaCha8 (portable and platform-independent). Store
//! placement uses stream 0 of the configured seed and customer `k` uses
//! stream `k + 1`, so customers could be generated in any order or in
//! parallel with identical output.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, PlanarPoint};
use crate::sharing::{StoreRef, TransactionRecord};

const CHAIN_NAMES: [&str; 4] = ["coffee", "fast-food", "pharmacy", "supermarket"];
const CLUSTER_COUNT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreLayout {
    #[default]
    Uniform,
    /// Mixture of Gaussian blobs with σ = extent / 20.
    Clustered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    /// Side of the square city, meters.
    pub city_extent: f64,
    pub n_stores: usize,
    pub n_chains: usize,
    pub n_customers: usize,
    /// Distance decay scale λ, meters.
    pub decay_scale: f64,
    pub base_visit_prob: f64,
    pub store_layout: StoreLayout,
    /// Multiplier on λ per chain, cycled when there are more chains.
    pub chain_decay: Vec<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            city_extent: 10_000.0,
            n_stores: 200,
            n_chains: 4,
            n_customers: 5000,
            decay_scale: 800.0,
            base_visit_prob: 0.9,
            store_layout: StoreLayout::Uniform,
            chain_decay: vec![1.0, 0.8, 1.2, 1.5],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_stores == 0 || self.n_chains == 0 || self.n_customers == 0 {
            return Err(Error::Config("store, chain and customer counts must be positive".into()));
        }
        if !(self.city_extent > 0.0) || !self.city_extent.is_finite() {
            return Err(Error::Config("city_extent must be positive".into()));
        }
        if !(self.decay_scale > 0.0) {
            return Err(Error::Config("decay_scale must be positive".into()));
        }
        if !(self.base_visit_prob > 0.0 && self.base_visit_prob <= 1.0) {
            return Err(Error::Config("base_visit_prob must lie in (0, 1]".into()));
        }
        if self.chain_decay.is_empty() || self.chain_decay.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::Config("chain_decay needs positive multipliers".into()));
        }
        Ok(())
    }

    pub fn chain_name(&self, chain: usize) -> String {
        if self.n_chains <= CHAIN_NAMES.len() {
            CHAIN_NAMES[chain].to_string()
        } else {
            format!("chain-{chain}")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthStore {
    pub store: StoreRef,
    pub location: PlanarPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCity {
    /// Sorted by store key.
    pub stores: Vec<SynthStore>,
    pub records: Vec<TransactionRecord>,
    pub truth: BTreeMap<StoreRef, PlanarPoint>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn place_stores(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<PlanarPoint> {
    let side = cfg.city_extent;
    match cfg.store_layout {
        StoreLayout::Uniform => (0..cfg.n_stores)
            .map(|_| PlanarPoint::new(rng.random_range(0.0..side), rng.random_range(0.0..side)))
            .collect(),
        StoreLayout::Clustered => {
            let centers: Vec<PlanarPoint> = (0..CLUSTER_COUNT)
                .map(|_| PlanarPoint::new(rng.random_range(0.0..side), rng.random_range(0.0..side)))
                .collect();
            let spread = Normal::new(0.0, side / 20.0).expect("positive sigma");
            (0..cfg.n_stores)
                .map(|_| {
                    let c = centers[rng.random_range(0..CLUSTER_COUNT)];
                    loop {
                        let p = PlanarPoint::new(c.x + spread.sample(rng), c.y + spread.sample(rng));
                        if (0.0..side).contains(&p.x) && (0.0..side).contains(&p.y) {
                            break p;
                        }
                    }
                })
                .collect()
        }
    }
}

/// Generates a city. Identical configs give identical cities.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCity> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, 0);
    let locations = place_stores(cfg, &mut rng);

    let mut per_chain = vec![0usize; cfg.n_chains];
    let mut stores = Vec::with_capacity(cfg.n_stores);
    let mut scales = Vec::with_capacity(cfg.n_stores);
    for (k, &location) in locations.iter().enumerate() {
        let chain = k % cfg.n_chains;
        let id = per_chain[chain];
        per_chain[chain] += 1;
        stores.push(SynthStore {
            store: StoreRef::new(cfg.chain_name(chain), format!("{id:04}")),
            location,
        });
        scales.push(cfg.decay_scale * cfg.chain_decay[chain % cfg.chain_decay.len()]);
    }

    let side = cfg.city_extent;
    let mut records = Vec::new();
    for customer in 0..cfg.n_customers {
        let mut rng = stream_rng(cfg.seed, customer as u64 + 1);
        let home = PlanarPoint::new(rng.random_range(0.0..side), rng.random_range(0.0..side));
        let user = format!("u{customer:06}");
        for (s, &scale) in stores.iter().zip(&scales) {
            let p = cfg.base_visit_prob * (-dist(home, s.location) / scale).exp();
            if rng.random::<f64>() < p {
                records.push(TransactionRecord::new(
                    user.clone(),
                    s.store.merchant.clone(),
                    s.store.store_id.clone(),
                ));
            }
        }
    }

    stores.sort_by(|a, b| a.store.cmp(&b.store));
    let truth = stores.iter().map(|s| (s.store.clone(), s.location)).collect();
    Ok(SynthCity {
        stores,
        records,
        truth,
    })
}

/// Seeded split of a city's stores into known (with locations) and unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownSplit {
    pub known: BTreeMap<StoreRef, PlanarPoint>,
    pub unknown: Vec<StoreRef>,
}

pub fn split_known(city: &SynthCity, known_fraction: f64, seed: u64) -> Result<KnownSplit> {
    if !(known_fraction > 0.0 && known_fraction < 1.0) {
        return Err(Error::Config("known_fraction must lie in (0, 1)".into()));
    }
    let n = city.stores.len();
    let n_known = (known_fraction * n as f64).round() as usize;
    if n_known < 2 {
        return Err(Error::InsufficientKnown {
            found: n_known,
            required: 2,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let known = order[..n_known]
        .iter()
        .map(|&i| (city.stores[i].store.clone(), city.stores[i].location))
        .collect();
    let mut unknown: Vec<StoreRef> = order[n_known..]
        .iter()
        .map(|&i| city.stores[i].store.clone())
        .collect();
    unknown.sort();
    Ok(KnownSplit { known, unknown })
}
