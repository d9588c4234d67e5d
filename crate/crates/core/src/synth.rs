//! Synthetic multi-view fixtures.
//!
//! Every identity gets a Gaussian centre. Camera `v` (numbered from 1) adds
//! a shared offset of length `view_offset` along a random direction drawn
//! once per camera, camera 1 excepted, followed by isotropic noise.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{seeded_rng, Dataset, FeatureRows};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub identities: usize,
    pub views: usize,
    pub d: usize,
    /// Standard deviation of per-sample noise.
    pub noise: f64,
    /// Length of each camera's shared offset.
    pub view_offset: f64,
    /// Standard deviation of identity centres.
    pub spread: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            identities: 40,
            views: 2,
            d: 20,
            noise: 0.6,
            view_offset: 20.0,
            spread: 1.0,
            seed: 0,
        }
    }
}

fn gaussian(rng: &mut impl Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn synthesize(params: &SynthParams) -> Result<Dataset> {
    let SynthParams {
        identities,
        views,
        d,
        noise,
        view_offset,
        spread,
        seed,
    } = *params;
    if identities == 0 || views == 0 || d == 0 {
        return Err(Error::invalid("identities, views and d must be positive"));
    }
    for (name, v) in [("noise", noise), ("view_offset", view_offset), ("spread", spread)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("{name} must be a non-negative real, got {v}")));
        }
    }
    let mut rng = seeded_rng(seed);
    let offsets: Vec<Vec<f64>> = (0..views)
        .map(|v| {
            if v == 0 {
                return vec![0.0; d];
            }
            let dir = gaussian(&mut rng, d, 1.0);
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            dir.iter().map(|x| view_offset * x / norm).collect()
        })
        .collect();
    let centres: Vec<Vec<f64>> = (0..identities).map(|_| gaussian(&mut rng, d, spread)).collect();
    let mut data = Vec::with_capacity(identities * views * d);
    let mut ids = Vec::with_capacity(identities * views);
    let mut cams = Vec::with_capacity(identities * views);
    for (i, centre) in centres.iter().enumerate() {
        for (v, offset) in offsets.iter().enumerate() {
            let eps = gaussian(&mut rng, d, noise);
            data.extend(centre.iter().zip(offset).zip(&eps).map(|((c, o), e)| c + o + e));
            ids.push(format!("id{i:03}"));
            cams.push(v as u32 + 1);
        }
    }
    Dataset::new(FeatureRows::new(data, d)?, ids, cams)
}
