//! Relabelling for the approaching-contact task.

use serde::{Deserialize, Serialize};

use crate::data::{Replicate, SensorSample};

/// Inclusive gap, in milliseconds, between a sample and the next contact
/// onset for the sample to count as approaching.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproachWindow {
    pub min_ms: f64,
    pub max_ms: f64,
}

impl Default for ApproachWindow {
    fn default() -> Self {
        Self { min_ms: 10.0, max_ms: 100.0 }
    }
}

/// Times of 0 -> 1 transitions. The first sample is never an onset.
pub fn contact_onsets(samples: &[SensorSample]) -> Vec<f64> {
    samples.windows(2).filter(|w| w[0].contact == 0 && w[1].contact == 1).map(|w| w[1].t_ms).collect()
}

/// Keeps only out-of-contact samples; the response becomes 1 when an onset
/// follows within the window.
pub fn label_approaching(rep: &Replicate, window: &ApproachWindow) -> Replicate {
    let onsets = contact_onsets(&rep.samples);
    let mut next = 0;
    let samples = rep
        .samples
        .iter()
        .filter(|s| s.contact == 0)
        .map(|s| {
            while next < onsets.len() && onsets[next] < s.t_ms + window.min_ms {
                next += 1;
            }
            let hit = next < onsets.len() && onsets[next] - s.t_ms <= window.max_ms;
            SensorSample { contact: u8::from(hit), ..*s }
        })
        .collect();
    Replicate { id: rep.id.clone(), cut_type: rep.cut_type, samples }
}
