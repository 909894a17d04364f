//! Train/test partitions under the three protocols.
//!
//! * SWT: within each cut type, pooled samples split at random.
//! * RWT: within each cut type, whole replicates split at random, so test
//!   replicates are never seen in training.
//! * SAT: all cut types pooled, samples split at random.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ContactError, CutType, Replicate, N_FEATURES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitKind {
    Swt,
    Rwt,
    Sat,
}

impl SplitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitKind::Swt => "SWT",
            SplitKind::Rwt => "RWT",
            SplitKind::Sat => "SAT",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitScheme {
    pub kind: SplitKind,
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitScheme {
    pub fn new(kind: SplitKind, seed: u64) -> Self {
        Self { kind, train_fraction: 0.6, seed }
    }
}

/// Identifies a sample by replicate position in the input and sample
/// position inside that replicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleKey {
    pub replicate: u32,
    pub sample: u32,
}

/// Flat design matrix with binary labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub features: Vec<[f64; N_FEATURES]>,
    pub labels: Vec<u8>,
    pub keys: Vec<SampleKey>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, x: [f64; N_FEATURES], y: u8, key: SampleKey) {
        self.features.push(x);
        self.labels.push(y);
        self.keys.push(key);
    }

    pub fn from_replicates(reps: &[Replicate]) -> Dataset {
        let mut d = Dataset::default();
        for (ri, r) in reps.iter().enumerate() {
            for (si, s) in r.samples.iter().enumerate() {
                d.push(s.features, s.contact, SampleKey { replicate: ri as u32, sample: si as u32 });
            }
        }
        d
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }
}

/// One model's worth of data: a cut type, or every type for SAT.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitGroup {
    pub cut_type: Option<CutType>,
    pub train: Dataset,
    pub test: Dataset,
    /// Replicate indices used for training (RWT only; empty otherwise).
    pub train_replicates: Vec<usize>,
    pub test_replicates: Vec<usize>,
}

fn n_train(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).round() as usize
}

fn gather(reps: &[Replicate], members: &[usize]) -> Vec<(SampleKey, usize)> {
    members
        .iter()
        .flat_map(|&ri| (0..reps[ri].samples.len()).map(move |si| (SampleKey { replicate: ri as u32, sample: si as u32 }, ri)))
        .collect()
}

fn dataset(reps: &[Replicate], keys: &[(SampleKey, usize)]) -> Dataset {
    let mut d = Dataset::default();
    for (k, ri) in keys {
        let s = &reps[*ri].samples[k.sample as usize];
        d.push(s.features, s.contact, *k);
    }
    d
}

pub fn build_split(reps: &[Replicate], scheme: &SplitScheme) -> Result<Vec<SplitGroup>, ContactError> {
    if !(scheme.train_fraction > 0.0 && scheme.train_fraction < 1.0) {
        return Err(ContactError::InfeasibleSplit(format!("train fraction {} outside (0, 1)", scheme.train_fraction)));
    }
    if reps.is_empty() {
        return Err(ContactError::Empty("no replicates"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);
    let groups: Vec<(Option<CutType>, Vec<usize>)> = match scheme.kind {
        SplitKind::Sat => vec![(None, (0..reps.len()).collect())],
        SplitKind::Swt | SplitKind::Rwt => CutType::ALL
            .iter()
            .map(|&ct| (Some(ct), (0..reps.len()).filter(|&i| reps[i].cut_type == ct).collect::<Vec<_>>()))
            .filter(|(_, m)| !m.is_empty())
            .collect(),
    };
    let mut out = Vec::with_capacity(groups.len());
    for (cut_type, members) in groups {
        let label = cut_type.map_or("all".to_owned(), |c| c.to_string());
        match scheme.kind {
            SplitKind::Rwt => {
                if members.len() < 2 {
                    return Err(ContactError::InfeasibleSplit(format!(
                        "{label} has {} replicate(s), need at least 2",
                        members.len()
                    )));
                }
                let mut order = members.clone();
                order.shuffle(&mut rng);
                let k = n_train(order.len(), scheme.train_fraction).clamp(1, order.len() - 1);
                let (train_r, test_r) = order.split_at(k);
                let (mut train_r, mut test_r) = (train_r.to_vec(), test_r.to_vec());
                train_r.sort_unstable();
                test_r.sort_unstable();
                out.push(SplitGroup {
                    cut_type,
                    train: dataset(reps, &gather(reps, &train_r)),
                    test: dataset(reps, &gather(reps, &test_r)),
                    train_replicates: train_r,
                    test_replicates: test_r,
                });
            }
            SplitKind::Swt | SplitKind::Sat => {
                let mut keys = gather(reps, &members);
                if keys.len() < 2 {
                    return Err(ContactError::InfeasibleSplit(format!("{label} has fewer than 2 samples")));
                }
                keys.shuffle(&mut rng);
                let k = n_train(keys.len(), scheme.train_fraction).clamp(1, keys.len() - 1);
                let (train, test) = keys.split_at(k);
                out.push(SplitGroup {
                    cut_type,
                    train: dataset(reps, train),
                    test: dataset(reps, test),
                    train_replicates: Vec::new(),
                    test_replicates: Vec::new(),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SensorSample;

    fn reps(n: usize, ct: CutType, len: usize) -> Vec<Replicate> {
        (0..n)
            .map(|i| Replicate {
                id: format!("{ct}-{i}"),
                cut_type: ct,
                samples: (0..len)
                    .map(|k| SensorSample { t_ms: k as f64 * 10.0, features: [k as f64; N_FEATURES], contact: (k % 2) as u8 })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn rwt_six_four() {
        let r = reps(10, CutType::Slicing, 5);
        let g = build_split(&r, &SplitScheme::new(SplitKind::Rwt, 1)).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!((g[0].train_replicates.len(), g[0].test_replicates.len()), (6, 4));
        assert_eq!(g[0].train.len(), 30);
    }

    #[test]
    fn swt_sizes() {
        let r = reps(4, CutType::Cubing, 250);
        let g = build_split(&r, &SplitScheme::new(SplitKind::Swt, 1)).unwrap();
        assert_eq!((g[0].train.len(), g[0].test.len()), (600, 400));
    }

    #[test]
    fn rwt_needs_two_replicates() {
        let mut r = reps(3, CutType::Slicing, 5);
        r.extend(reps(1, CutType::Trimming, 5));
        assert!(matches!(build_split(&r, &SplitScheme::new(SplitKind::Rwt, 1)), Err(ContactError::InfeasibleSplit(_))));
        assert!(build_split(&r, &SplitScheme::new(SplitKind::Swt, 1)).is_ok());
    }

    #[test]
    fn sat_pools_types() {
        let mut r = reps(2, CutType::Slicing, 10);
        r.extend(reps(2, CutType::Trimming, 10));
        let g = build_split(&r, &SplitScheme::new(SplitKind::Sat, 3)).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].cut_type, None);
        assert_eq!(g[0].train.len() + g[0].test.len(), 40);
    }
}
