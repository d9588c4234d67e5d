//! Feature datasets, class indexing and seeded identity splits.
//!
//! A [`Dataset`] is an `n x d` feature matrix with one identity label and one
//! camera label per row. Everything downstream (kernels, scatter matrices,
//! probe/gallery ranking) addresses samples by their row index in the dataset.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Identity label reserved for gallery-only distractor rows. Distractors never
/// enter training and are appended to every test gallery.
pub const DISTRACTOR_ID: &str = "-1";

/// Deterministic generator behind every seeded choice in the crate:
/// ChaCha8 seeded through `SeedableRng::seed_from_u64`.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fisher-Yates shuffle drawing `j` in `0..=i` by multiply-shift of a 64-bit
/// word, so the permutation only depends on the ChaCha8 stream.
pub fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let bound = (i + 1) as u128;
        let j = ((rng.next_u64() as u128 * bound) >> 64) as usize;
        items.swap(i, j);
    }
}

/// Row-major matrix of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRows {
    data: Vec<f64>,
    dim: usize,
}

impl FeatureRows {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        Ok(Self { data, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(data, dim)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select(&self, indices: &[usize]) -> FeatureRows {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureRows {
            data,
            dim: self.dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: FeatureRows,
    identities: Vec<String>,
    cameras: Vec<u32>,
}

impl Dataset {
    pub fn new(features: FeatureRows, identities: Vec<String>, cameras: Vec<u32>) -> Result<Self> {
        let n = features.len();
        if n < 2 {
            return Err(Error::invalid(format!("dataset needs at least 2 samples, got {n}")));
        }
        if identities.len() != n || cameras.len() != n {
            return Err(Error::invalid(format!(
                "{n} feature rows but {} identities and {} cameras",
                identities.len(),
                cameras.len()
            )));
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite feature in sample {}",
                pos / features.dim()
            )));
        }
        Ok(Self {
            features,
            identities,
            cameras,
        })
    }

    pub fn len(&self) -> usize {
        self.identities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn features(&self) -> &FeatureRows {
        &self.features
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn identity(&self, i: usize) -> &str {
        &self.identities[i]
    }

    pub fn identities(&self) -> &[String] {
        &self.identities
    }

    pub fn camera(&self, i: usize) -> u32 {
        self.cameras[i]
    }

    pub fn cameras(&self) -> &[u32] {
        &self.cameras
    }

    /// Distinct camera labels in ascending order.
    pub fn camera_labels(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.cameras.iter().copied().collect();
        set.into_iter().collect()
    }

    /// Sample indices whose identity is in `ids`, ascending.
    pub fn indices_of<'a>(&'a self, ids: &'a BTreeSet<String>) -> impl Iterator<Item = usize> + 'a {
        (0..self.len()).filter(move |&i| ids.contains(&self.identities[i]))
    }

    /// Stable content fingerprint, used in run digests.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        for v in self.features.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
        for (id, cam) in self.identities.iter().zip(&self.cameras) {
            h.update(id.as_bytes());
            h.update([0]);
            h.update(cam.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Supported on-disk feature formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureFormat {
    #[default]
    Csv,
}

/// Reads a feature file with header `id,cam,f1,...,fd`.
pub fn load_features(path: impl AsRef<Path>, format: FeatureFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        FeatureFormat::Csv => parse_features_csv(&text),
    }
}

pub fn parse_features_csv(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse {
        row: 1,
        message: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "id" || cols[1] != "cam" {
        return Err(Error::Parse {
            row: 1,
            message: "header must be `id,cam,f1,...,fd`".into(),
        });
    }
    let dim = cols.len() - 2;

    let mut data = Vec::new();
    let mut identities = Vec::new();
    let mut cameras = Vec::new();
    for (lineno, line) in lines {
        let row = lineno + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                row,
                message: format!("expected {} columns, found {}", cols.len(), fields.len()),
            });
        }
        if fields[0].is_empty() {
            return Err(Error::Parse {
                row,
                message: "empty identity".into(),
            });
        }
        let cam = fields[1].parse::<u32>().map_err(|_| Error::Parse {
            row,
            message: format!("camera `{}` is not a non-negative integer", fields[1]),
        })?;
        for (k, f) in fields[2..].iter().enumerate() {
            let v = f.parse::<f64>().map_err(|_| Error::Parse {
                row,
                message: format!("feature f{} `{f}` is not a number", k + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    message: format!("feature f{} is not finite", k + 1),
                });
            }
            data.push(v);
        }
        identities.push(fields[0].to_string());
        cameras.push(cam);
    }
    if identities.len() < 2 {
        return Err(Error::Parse {
            row: text.lines().count().max(1),
            message: format!("need at least 2 samples, found {}", identities.len()),
        });
    }
    Dataset::new(FeatureRows::new(data, dim)?, identities, cameras)
}

pub fn features_to_csv(ds: &Dataset) -> String {
    let mut out = String::from("id,cam");
    for k in 1..=ds.dim() {
        let _ = write!(out, ",f{k}");
    }
    out.push('\n');
    for i in 0..ds.len() {
        let _ = write!(out, "{},{}", ds.identity(i), ds.camera(i));
        for v in ds.sample(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_features(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, features_to_csv(ds)).map_err(|e| Error::io(path, e))
}

/// Samples grouped by identity, classes in ascending label order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassIndex {
    pub classes: Vec<String>,
    /// Dataset sample indices per class, ascending.
    pub members: Vec<Vec<usize>>,
    pub counts: Vec<usize>,
}

impl ClassIndex {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn num_samples(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn index_classes(ds: &Dataset, subset: &[usize]) -> Result<ClassIndex> {
    if subset.is_empty() {
        return Err(Error::invalid("cannot index an empty subset"));
    }
    let mut seen = HashSet::with_capacity(subset.len());
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in subset {
        if i >= ds.len() {
            return Err(Error::invalid(format!("sample index {i} out of range")));
        }
        if !seen.insert(i) {
            return Err(Error::invalid(format!("duplicate sample index {i}")));
        }
        groups.entry(ds.identity(i)).or_default().push(i);
    }
    let mut classes = Vec::with_capacity(groups.len());
    let mut members = Vec::with_capacity(groups.len());
    for (label, mut idx) in groups {
        idx.sort_unstable();
        classes.push(label.to_string());
        members.push(idx);
    }
    let counts = members.iter().map(Vec::len).collect();
    Ok(ClassIndex {
        classes,
        members,
        counts,
    })
}

/// Probe and gallery camera labels of a two-view protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CameraPair {
    pub probe: u32,
    pub gallery: u32,
}

impl CameraPair {
    /// The two smallest camera labels present in the dataset.
    pub fn default_for(ds: &Dataset) -> Result<Self> {
        let cams = ds.camera_labels();
        if cams.len() < 2 {
            return Err(Error::invalid("dataset needs at least two camera labels"));
        }
        Ok(Self {
            probe: cams[0],
            gallery: cams[1],
        })
    }
}

/// Identities eligible for a probe/gallery protocol: non-distractors with at
/// least one sample in each of the two cameras. Returns (eligible, excluded).
pub fn eligible_identities(ds: &Dataset, cams: CameraPair) -> (Vec<String>, Vec<String>) {
    let mut seen: BTreeMap<&str, (bool, bool)> = BTreeMap::new();
    for i in 0..ds.len() {
        let id = ds.identity(i);
        if id == DISTRACTOR_ID {
            continue;
        }
        let e = seen.entry(id).or_default();
        e.0 |= ds.camera(i) == cams.probe;
        e.1 |= ds.camera(i) == cams.gallery;
    }
    let mut eligible = Vec::new();
    let mut excluded = Vec::new();
    for (id, (p, g)) in seen {
        if p && g {
            eligible.push(id.to_string());
        } else {
            excluded.push(id.to_string());
        }
    }
    (eligible, excluded)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
    pub trial_seed: u64,
    pub probe_camera: u32,
    pub gallery_camera: u32,
    /// Identities left out because one of the two cameras has no sample.
    pub excluded: Vec<String>,
}

impl SplitPlan {
    pub fn cameras(&self) -> CameraPair {
        CameraPair {
            probe: self.probe_camera,
            gallery: self.gallery_camera,
        }
    }

    /// Every sample of a training identity, any camera.
    pub fn train_indices(&self, ds: &Dataset) -> Vec<usize> {
        ds.indices_of(&self.train_ids).collect()
    }

    pub fn probe_indices(&self, ds: &Dataset) -> Vec<usize> {
        ds.indices_of(&self.test_ids)
            .filter(|&i| ds.camera(i) == self.probe_camera)
            .collect()
    }

    /// Test identities in the gallery camera plus any distractor rows there.
    pub fn gallery_indices(&self, ds: &Dataset) -> Vec<usize> {
        (0..ds.len())
            .filter(|&i| ds.camera(i) == self.gallery_camera)
            .filter(|&i| {
                let id = ds.identity(i);
                id == DISTRACTOR_ID || self.test_ids.contains(id)
            })
            .collect()
    }
}

/// Seeded identity split using the two smallest camera labels.
pub fn make_split(ds: &Dataset, trial_seed: u64, train_fraction: f64) -> Result<SplitPlan> {
    make_split_with(ds, trial_seed, train_fraction, CameraPair::default_for(ds)?)
}

pub fn make_split_with(
    ds: &Dataset,
    trial_seed: u64,
    train_fraction: f64,
    cams: CameraPair,
) -> Result<SplitPlan> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if cams.probe == cams.gallery {
        return Err(Error::invalid("probe and gallery cameras must differ"));
    }
    let (mut ids, excluded) = eligible_identities(ds, cams);
    for id in &excluded {
        log::warn!(
            "identity `{id}` lacks a sample in camera {} or {}; excluded from the split",
            cams.probe,
            cams.gallery
        );
    }
    if ids.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 identities seen by both cameras, found {}",
            ids.len()
        )));
    }
    let mut rng = seeded_rng(trial_seed);
    shuffle(&mut ids, &mut rng);
    let n_train = ((train_fraction * ids.len() as f64).ceil() as usize).clamp(1, ids.len() - 1);
    let test_ids = ids.split_off(n_train).into_iter().collect();
    Ok(SplitPlan {
        train_ids: ids.into_iter().collect(),
        test_ids,
        trial_seed,
        probe_camera: cams.probe,
        gallery_camera: cams.gallery,
        excluded,
    })
}
