//! Dataset synthesis, the three partitioning regimes (Dirichlet,
//! pathological, IID), and a flat binary on-disk format.
//!
//! All randomness comes from caller-supplied generators, so identical seeds
//! produce bit-identical datasets and index lists.

use crate::error::{Error, Result};
use crate::model::{Batch, FeatureShape};
use crate::numerics::Matrix;
use rand::prelude::*;
use rand_distr::{Distribution, Gamma, StandardNormal};
use std::io::{Read, Write};
use std::path::Path;

/// Labeled samples with a fixed per-sample feature shape. Features are stored
/// sample-major; image samples are channel-major within each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub shape: FeatureShape,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_len(&self) -> usize {
        self.shape.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if self.features.len() != self.len() * self.feature_len() {
            return Err(Error::shape_mismatch(
                format!("{} feature values", self.len() * self.feature_len()),
                format!("{}", self.features.len()),
            ));
        }
        for (i, &label) in self.labels.iter().enumerate() {
            if label >= self.num_classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    num_classes: self.num_classes,
                });
            }
            let _ = i;
        }
        if !self.features.iter().all(|x| x.is_finite()) {
            return Err(Error::shape_mismatch("finite features", "non-finite value"));
        }
        Ok(())
    }

    /// Assemble a column-major batch (and its labels) from sample indices.
    pub fn batch(&self, indices: &[usize]) -> Result<(Batch, Vec<usize>)> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let d = self.feature_len();
        let mut data = Matrix::zeros(d, indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for (col, &idx) in indices.iter().enumerate() {
            let sample = &self.features[idx * d..(idx + 1) * d];
            for (f, &v) in sample.iter().enumerate() {
                data[(f, col)] = v;
            }
            labels.push(self.labels[idx]);
        }
        Ok((Batch::new(self.shape, data)?, labels))
    }

    /// Batch over every sample.
    pub fn full_batch(&self) -> Result<(Batch, Vec<usize>)> {
        let indices: Vec<usize> = (0..self.len()).collect();
        self.batch(&indices)
    }

    /// Split off the last `fraction` of samples (per a seeded shuffle) as a
    /// held-out set.
    pub fn split_holdout(&self, fraction: f64, rng: &mut impl Rng) -> (Dataset, Dataset) {
        assert!((0.0..1.0).contains(&fraction));
        let mut order: Vec<usize> = (0..self.len()).collect();
        shuffle(&mut order, rng);
        let holdout = ((self.len() as f64) * fraction).round() as usize;
        let holdout = holdout.clamp(1, self.len() - 1);
        let (test_idx, train_idx) = order.split_at(holdout);
        (self.subset(train_idx), self.subset(test_idx))
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.feature_len();
        let mut features = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &idx in indices {
            features.extend_from_slice(&self.features[idx * d..(idx + 1) * d]);
            labels.push(self.labels[idx]);
        }
        Dataset {
            shape: self.shape,
            features,
            labels,
            num_classes: self.num_classes,
        }
    }
}

/// Per-client index lists into a parent dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub clients: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn total_samples(&self) -> usize {
        self.clients.iter().map(|c| c.len()).sum()
    }

    pub fn validate(&self, parent_len: usize) -> Result<()> {
        let mut seen = vec![false; parent_len];
        for (client, indices) in self.clients.iter().enumerate() {
            if indices.is_empty() {
                return Err(Error::config(
                    format!("partition.client[{client}]"),
                    "empty client",
                ));
            }
            for &idx in indices {
                if idx >= parent_len || seen[idx] {
                    return Err(Error::config(
                        format!("partition.client[{client}]"),
                        "index out of range or duplicated",
                    ));
                }
                seen[idx] = true;
            }
        }
        Ok(())
    }
}

/// Deterministic Fisher-Yates shuffle.
pub fn shuffle<T>(items: &mut [T], rng: &mut impl Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

fn indices_by_class(ds: &Dataset) -> Result<Vec<Vec<usize>>> {
    let mut by_class = vec![Vec::new(); ds.num_classes];
    for (i, &label) in ds.labels.iter().enumerate() {
        by_class[label].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::TooFewSamples { class, count: 0 });
        }
    }
    Ok(by_class)
}

/// Move single samples from the largest clients until no client is empty.
fn repair_empty_clients(clients: &mut [Vec<usize>]) {
    loop {
        let Some(empty) = clients.iter().position(|c| c.is_empty()) else {
            return;
        };
        let largest = (0..clients.len())
            .max_by_key(|&i| clients[i].len())
            .expect("at least one client");
        let moved = clients[largest].pop().expect("largest client nonempty");
        clients[empty].push(moved);
    }
}

/// Label-skew partition: for each class, a Dirichlet(alpha) draw over clients
/// sets the share of that class each client receives.
pub fn dirichlet_partition(
    ds: &Dataset,
    num_clients: usize,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<Partition> {
    assert!(num_clients > 0);
    assert!(alpha > 0.0, "concentration must be positive");
    let by_class = indices_by_class(ds)?;
    let gamma = Gamma::new(alpha, 1.0).expect("valid gamma shape");
    let mut clients = vec![Vec::new(); num_clients];

    for mut members in by_class {
        shuffle(&mut members, rng);
        // Dirichlet draw via normalized gammas.
        let mut weights: Vec<f64> = (0..num_clients).map(|_| gamma.sample(rng)).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            // All-zero draws happen at extreme alpha; fall back to uniform.
            weights = vec![1.0; num_clients];
        }
        let total: f64 = weights.iter().sum();
        let n = members.len();
        let mut cum = 0.0;
        let mut start = 0usize;
        for (client, w) in weights.iter().enumerate() {
            cum += w / total;
            let end = if client + 1 == num_clients {
                n
            } else {
                ((cum * n as f64).round() as usize).min(n)
            };
            clients[client].extend_from_slice(&members[start..end.max(start)]);
            start = end.max(start);
        }
    }
    repair_empty_clients(&mut clients);
    Ok(Partition { clients })
}

/// Restricted-label partition: each client is dealt exactly
/// `labels_per_client` distinct labels, and each label's samples are split
/// evenly among the clients holding it.
pub fn pathological_partition(
    ds: &Dataset,
    num_clients: usize,
    labels_per_client: usize,
    rng: &mut impl Rng,
) -> Result<Partition> {
    assert!(num_clients > 0);
    let k = ds.num_classes;
    if labels_per_client == 0 || labels_per_client > k || num_clients * labels_per_client < k {
        return Err(Error::InfeasibleAssignment {
            clients: num_clients,
            labels_per_client,
            num_classes: k,
        });
    }
    let by_class = indices_by_class(ds)?;

    // Label multiset of size C*lpc with per-class counts as even as possible,
    // so every class appears and no class appears more than C times.
    let total = num_clients * labels_per_client;
    let base = total / k;
    let extra = total % k;
    let mut class_order: Vec<usize> = (0..k).collect();
    shuffle(&mut class_order, rng);
    let mut deck = Vec::with_capacity(total);
    for (rank, &class) in class_order.iter().enumerate() {
        let copies = base + usize::from(rank < extra);
        deck.extend(std::iter::repeat_n(class, copies));
    }

    // Deal lpc distinct labels per client; reshuffle and retry on the rare
    // deals where the greedy scan strands duplicates at the end.
    let assignments = loop {
        shuffle(&mut deck, rng);
        if let Some(assignments) = deal_distinct(&deck, num_clients, labels_per_client) {
            break assignments;
        }
    };

    let mut clients = vec![Vec::new(); num_clients];
    for (class, mut members) in by_class.into_iter().enumerate() {
        let holders: Vec<usize> = (0..num_clients)
            .filter(|&c| assignments[c].contains(&class))
            .collect();
        shuffle(&mut members, rng);
        for (i, idx) in members.into_iter().enumerate() {
            clients[holders[i % holders.len()]].push(idx);
        }
    }
    repair_empty_clients(&mut clients);
    Ok(Partition { clients })
}

fn deal_distinct(deck: &[usize], num_clients: usize, lpc: usize) -> Option<Vec<Vec<usize>>> {
    let mut remaining: Vec<usize> = deck.to_vec();
    let mut assignments = Vec::with_capacity(num_clients);
    for _ in 0..num_clients {
        let mut block: Vec<usize> = Vec::with_capacity(lpc);
        while block.len() < lpc {
            let pos = remaining.iter().position(|c| !block.contains(c))?;
            block.push(remaining.remove(pos));
        }
        assignments.push(block);
    }
    Some(assignments)
}

/// Equal-share IID partition of a shuffled sample order.
pub fn iid_partition(ds: &Dataset, num_clients: usize, rng: &mut impl Rng) -> Result<Partition> {
    assert!(num_clients > 0);
    if ds.len() < num_clients {
        return Err(Error::TooFewSamples {
            class: 0,
            count: ds.len(),
        });
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    shuffle(&mut order, rng);
    let mut clients = vec![Vec::new(); num_clients];
    for (i, idx) in order.into_iter().enumerate() {
        clients[i % num_clients].push(idx);
    }
    Ok(Partition { clients })
}

/// Class-conditional Gaussian blobs: class `k` is centered on
/// `separation * u_k` for a random unit direction `u_k`, with unit isotropic
/// noise. Labels are dealt round-robin, so class counts are balanced within
/// one sample.
pub fn make_synthetic_classification(
    feature_dim: usize,
    classes: usize,
    samples: usize,
    separation: f64,
    rng: &mut impl Rng,
) -> Dataset {
    assert!(classes >= 2);
    assert!(samples >= classes, "need at least one sample per class");
    assert!(separation >= 0.0);
    let mut means = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut dir: Vec<f64> = (0..feature_dim)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        for x in &mut dir {
            *x *= separation / norm;
        }
        means.push(dir);
    }
    let mut features = Vec::with_capacity(samples * feature_dim);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let label = i % classes;
        labels.push(label);
        for mean in &means[label] {
            let noise: f64 = StandardNormal.sample(rng);
            features.push(mean + noise);
        }
    }
    Dataset {
        shape: FeatureShape::Flat(feature_dim),
        features,
        labels,
        num_classes: classes,
    }
}

/// Blob dataset shaped as single-channel images, for exercising conv stacks.
pub fn make_synthetic_images(
    height: usize,
    width: usize,
    classes: usize,
    samples: usize,
    separation: f64,
    rng: &mut impl Rng,
) -> Dataset {
    let flat = make_synthetic_classification(height * width, classes, samples, separation, rng);
    Dataset {
        shape: FeatureShape::Image {
            channels: 1,
            height,
            width,
        },
        ..flat
    }
}

const MAGIC: &[u8; 4] = b"FDS1";
const FORMAT_VERSION: u32 = 1;

/// Write the dataset in the flat binary format:
/// magic `FDS1`, then little-endian u32s `version`, `num_classes`,
/// `n_samples`, `ndim` (1 for flat, 3 for channels/height/width) and the
/// `ndim` dims, then `n_samples * prod(dims)` f32 features sample-major,
/// then `n_samples` u32 labels.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let push_u32 = |buf: &mut Vec<u8>, v: u32| buf.extend_from_slice(&v.to_le_bytes());
    push_u32(&mut out, FORMAT_VERSION);
    push_u32(&mut out, ds.num_classes as u32);
    push_u32(&mut out, ds.len() as u32);
    match ds.shape {
        FeatureShape::Flat(d) => {
            push_u32(&mut out, 1);
            push_u32(&mut out, d as u32);
        }
        FeatureShape::Image {
            channels,
            height,
            width,
        } => {
            push_u32(&mut out, 3);
            push_u32(&mut out, channels as u32);
            push_u32(&mut out, height as u32);
            push_u32(&mut out, width as u32);
        }
    }
    for &v in &ds.features {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &label in &ds.labels {
        out.extend_from_slice(&(label as u32).to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |reason: &str| Error::config(path.display().to_string(), reason);
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(bad("not a dataset file (bad magic)"));
    }
    let mut off = 4usize;
    let read_u32 = |bytes: &[u8], off: &mut usize| -> Result<u32> {
        if *off + 4 > bytes.len() {
            return Err(Error::config(
                path.display().to_string(),
                "truncated header",
            ));
        }
        let v = u32::from_le_bytes(bytes[*off..*off + 4].try_into().unwrap());
        *off += 4;
        Ok(v)
    };
    let version = read_u32(&bytes, &mut off)?;
    if version != FORMAT_VERSION {
        return Err(bad("unsupported format version"));
    }
    let num_classes = read_u32(&bytes, &mut off)? as usize;
    let n = read_u32(&bytes, &mut off)? as usize;
    let ndim = read_u32(&bytes, &mut off)? as usize;
    let shape = match ndim {
        1 => FeatureShape::Flat(read_u32(&bytes, &mut off)? as usize),
        3 => FeatureShape::Image {
            channels: read_u32(&bytes, &mut off)? as usize,
            height: read_u32(&bytes, &mut off)? as usize,
            width: read_u32(&bytes, &mut off)? as usize,
        },
        _ => return Err(bad("feature ndim must be 1 or 3")),
    };
    let per = shape.len();
    let need = off + n * per * 4 + n * 4;
    if bytes.len() != need {
        return Err(bad("payload length mismatch"));
    }
    let mut features = Vec::with_capacity(n * per);
    for _ in 0..n * per {
        let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        features.push(v as f64);
        off += 4;
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize);
        off += 4;
    }
    let ds = Dataset {
        shape,
        features,
        labels,
        num_classes,
    };
    ds.validate()?;
    Ok(ds)
}

/// Mean per-client label entropy (nats) of a partition.
pub fn mean_label_entropy(ds: &Dataset, partition: &Partition) -> f64 {
    let mut total = 0.0;
    for indices in &partition.clients {
        let mut counts = vec![0usize; ds.num_classes];
        for &idx in indices {
            counts[ds.labels[idx]] += 1;
        }
        let n = indices.len() as f64;
        let mut h = 0.0;
        for &c in &counts {
            if c > 0 {
                let p = c as f64 / n;
                h -= p * p.ln();
            }
        }
        total += h;
    }
    total / partition.num_clients() as f64
}
