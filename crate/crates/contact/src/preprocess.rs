//! Centering, scaling and outlier removal.

use serde::{Deserialize, Serialize};

use crate::data::{ContactError, Replicate, FEATURE_NAMES, N_FEATURES};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Standardize {
    /// Statistics from each replicate separately.
    #[default]
    PerReplicate,
    /// Statistics pooled over all replicates.
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub mode: Standardize,
    /// Samples with any standardized feature beyond this are dropped.
    pub z_limit: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { mode: Standardize::PerReplicate, z_limit: 5.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub replicates: Vec<Replicate>,
    /// Samples dropped per replicate, in input order.
    pub removed: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Population mean and standard deviation per feature.
pub fn feature_stats<'a>(samples: impl Iterator<Item = &'a [f64; N_FEATURES]>) -> ([f64; N_FEATURES], [f64; N_FEATURES]) {
    let mut n = 0usize;
    let mut mean = [0.0; N_FEATURES];
    let mut m2 = [0.0; N_FEATURES];
    for x in samples {
        n += 1;
        for f in 0..N_FEATURES {
            let d = x[f] - mean[f];
            mean[f] += d / n as f64;
            m2[f] += d * (x[f] - mean[f]);
        }
    }
    let sd = m2.map(|v| if n > 0 { (v / n as f64).sqrt() } else { 0.0 });
    (mean, sd)
}

pub fn preprocess(replicates: &[Replicate], cfg: &PreprocessConfig) -> Result<Preprocessed, ContactError> {
    if replicates.is_empty() {
        return Err(ContactError::Empty("no replicates"));
    }
    let global = match cfg.mode {
        Standardize::Global => Some(feature_stats(replicates.iter().flat_map(|r| r.samples.iter().map(|s| &s.features)))),
        Standardize::PerReplicate => None,
    };
    let mut out = Vec::with_capacity(replicates.len());
    let mut removed = Vec::with_capacity(replicates.len());
    let mut warnings = Vec::new();
    for rep in replicates {
        if rep.samples.is_empty() {
            return Err(ContactError::Empty("replicate without samples"));
        }
        let (mean, sd) = global.unwrap_or_else(|| feature_stats(rep.samples.iter().map(|s| &s.features)));
        let mut scale = sd;
        for f in 0..N_FEATURES {
            if !(sd[f] > 0.0) {
                let msg = format!("{}: feature {} has zero variance, left unscaled", rep.id, FEATURE_NAMES[f]);
                log::warn!("{msg}");
                warnings.push(msg);
                scale[f] = 1.0;
            }
        }
        let mut kept = Vec::with_capacity(rep.samples.len());
        for s in &rep.samples {
            let mut z = s.features;
            for f in 0..N_FEATURES {
                z[f] = (z[f] - mean[f]) / scale[f];
            }
            if z.iter().all(|v| v.abs() <= cfg.z_limit) {
                kept.push(crate::data::SensorSample { features: z, ..*s });
            }
        }
        removed.push(rep.samples.len() - kept.len());
        out.push(Replicate { id: rep.id.clone(), cut_type: rep.cut_type, samples: kept });
    }
    Ok(Preprocessed { replicates: out, removed, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CutType, SensorSample};

    fn rep(values: &[[f64; N_FEATURES]]) -> Replicate {
        Replicate {
            id: "r".into(),
            cut_type: CutType::Slicing,
            samples: values
                .iter()
                .enumerate()
                .map(|(i, v)| SensorSample { t_ms: i as f64 * 10.0, features: *v, contact: 0 })
                .collect(),
        }
    }

    #[test]
    fn constant_feature_becomes_zero_with_warning() {
        let vals: Vec<[f64; N_FEATURES]> = (0..20).map(|i| {
            let mut v = [i as f64; N_FEATURES];
            v[3] = 7.5;
            v
        }).collect();
        let out = preprocess(&[rep(&vals)], &PreprocessConfig::default()).unwrap();
        assert!(out.replicates[0].samples.iter().all(|s| s.features[3] == 0.0));
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.removed, vec![0]);
    }

    #[test]
    fn spike_is_removed() {
        // 99 alternating values plus one spike; the spike's z exceeds 5
        let mut vals: Vec<[f64; N_FEATURES]> =
            (0..99).map(|i| [if i % 2 == 0 { -1.0 } else { 1.0 }; N_FEATURES]).collect();
        let mut spike = [0.0; N_FEATURES];
        spike[0] = 60.0;
        vals.push(spike);
        let out = preprocess(&[rep(&vals)], &PreprocessConfig::default()).unwrap();
        assert_eq!(out.removed, vec![1]);
        assert_eq!(out.replicates[0].samples.len(), 99);
    }

    #[test]
    fn global_mode_pools() {
        let a = rep(&[[0.0; N_FEATURES], [2.0; N_FEATURES]]);
        let b = rep(&[[4.0; N_FEATURES], [6.0; N_FEATURES]]);
        let cfg = PreprocessConfig { mode: Standardize::Global, ..PreprocessConfig::default() };
        let out = preprocess(&[a, b], &cfg).unwrap();
        let sd = 5.0f64.sqrt();
        assert!((out.replicates[0].samples[0].features[0] + 3.0 / sd).abs() < 1e-12);
        assert!((out.replicates[1].samples[1].features[0] - 3.0 / sd).abs() < 1e-12);
    }
}
