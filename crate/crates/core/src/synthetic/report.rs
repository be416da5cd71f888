use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::generate::SyntheticSample;
use crate::metrics::distance_to_party_mean_partial;
use crate::survey::PartyMean;

/// Summary of the samples generated at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureRow {
    pub temperature: f64,
    pub n_samples: usize,
    /// Average RMS distance from each sample to its party mean.
    pub mean_distance: f64,
    /// Average per-cell standard deviation across trials of the same party.
    pub response_std: f64,
    /// True when no (party, question) cell had two or more trials.
    pub std_undefined: bool,
    pub missing: usize,
    pub missing_pct: f64,
}

pub fn temperature_report(samples: &[SyntheticSample], means: &[PartyMean]) -> Vec<TemperatureRow> {
    let mut by_temp: BTreeMap<u64, Vec<&SyntheticSample>> = BTreeMap::new();
    for s in samples {
        // Positive floats order the same as their bit patterns.
        by_temp.entry(s.temperature.to_bits()).or_default().push(s);
    }
    by_temp
        .into_iter()
        .map(|(bits, group)| {
            let distances: Vec<f64> = group
                .iter()
                .filter_map(|s| {
                    let m = means.iter().find(|m| m.party == s.party)?;
                    distance_to_party_mean_partial(&s.answers, &m.mean)
                })
                .collect();
            let mean_distance = if distances.is_empty() { 0.0 } else { distances.iter().sum::<f64>() / distances.len() as f64 };

            let mut by_party: BTreeMap<&str, Vec<&SyntheticSample>> = BTreeMap::new();
            for s in &group {
                by_party.entry(s.party.as_str()).or_default().push(s);
            }
            let mut stds = Vec::new();
            for trials in by_party.values() {
                let n_q = trials[0].answers.len();
                for k in 0..n_q {
                    let vals: Vec<f64> = trials.iter().filter_map(|s| s.answers.get(k).copied().flatten()).collect();
                    if vals.len() >= 2 {
                        let mu = vals.iter().sum::<f64>() / vals.len() as f64;
                        stds.push((vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / vals.len() as f64).sqrt());
                    }
                }
            }
            let cells: usize = group.iter().map(|s| s.answers.len()).sum();
            let missing = group.iter().flat_map(|s| &s.answers).filter(|a| a.is_none()).count();
            TemperatureRow {
                temperature: f64::from_bits(bits),
                n_samples: group.len(),
                mean_distance,
                response_std: if stds.is_empty() { 0.0 } else { stds.iter().sum::<f64>() / stds.len() as f64 },
                std_undefined: stds.is_empty(),
                missing,
                missing_pct: if cells == 0 { 0.0 } else { 100.0 * missing as f64 / cells as f64 },
            }
        })
        .collect()
}
