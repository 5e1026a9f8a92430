// SPDX-License-Identifier: Apache-2.0

//! Virtual characterization: repeated counter readings per site, per-site
//! statistics, and rejection of oscillators whose normalized spread is too
//! large to give stable comparisons.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::chipmodel::{self, ChipProfile, EnvCondition, DEFAULT_T_ON_US};
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const DEFAULT_SAMPLES: usize = 32;
pub const DEFAULT_THRESHOLD: f64 = 0.002;
pub const DEFAULT_KEEP_QUANTILE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyProfile {
    /// Indices into `ChipProfile::sites`.
    pub site_refs: Vec<usize>,
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
    pub m: usize,
    pub t_on: f64,
}

impl FrequencyProfile {
    pub fn len(&self) -> usize {
        self.site_refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.site_refs.is_empty()
    }

    pub fn normalized_sigma(&self) -> Vec<f64> {
        self.sigma
            .iter()
            .zip(&self.mean)
            .map(|(s, m)| s / m)
            .collect()
    }

    fn subset(&self, keep: &[usize]) -> FrequencyProfile {
        FrequencyProfile {
            site_refs: keep.iter().map(|&i| self.site_refs[i]).collect(),
            mean: keep.iter().map(|&i| self.mean[i]).collect(),
            sigma: keep.iter().map(|&i| self.sigma[i]).collect(),
            m: self.m,
            t_on: self.t_on,
        }
    }

    /// Writes the profile in the ingestion CSV schema. Each site becomes two
    /// pseudo-samples `mean ± sigma/√2`, whose mean and sample deviation
    /// reproduce the stored statistics.
    pub fn to_csv(&self, chip: &ChipProfile) -> String {
        let mut out = String::from("clb_x,clb_y,corner,mhz_1,mhz_2\n");
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for ((&r, &mu), &sd) in self.site_refs.iter().zip(&self.mean).zip(&self.sigma) {
            let s = &chip.sites[r];
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.clb_x,
                s.clb_y,
                s.corner.as_str(),
                mu - sd * h,
                mu + sd * h
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanProfile {
    pub kept: FrequencyProfile,
    pub rejected_count: usize,
    /// Number of surviving sites.
    pub z_bar: usize,
    pub threshold_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "lowercase")]
pub enum RejectMode {
    Fixed(f64),
    Quantile(f64),
}

impl Default for RejectMode {
    fn default() -> Self {
        RejectMode::Fixed(DEFAULT_THRESHOLD)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileStats {
    pub mean_span: f64,
    /// kHz
    pub sigma_span: f64,
    pub mean_of_means: f64,
}

/// Takes `m` counter readings of every site under `env` and keeps mean and
/// sample deviation in MHz. Raw readings are dropped once summarized.
pub fn characterize(
    chip: &ChipProfile,
    m: usize,
    t_on: f64,
    env: EnvCondition,
    rng: &mut SimRng,
) -> Result<FrequencyProfile> {
    if m < 2 {
        return Err(Error::arg(format!(
            "need at least 2 samples per site, got {m}"
        )));
    }
    if !(t_on > 0.0) {
        return Err(Error::arg("t_on must be positive"));
    }
    let n = chip.len();
    let mut mean = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut samples = vec![0.0; m];
    for i in 0..n {
        let f = chipmodel::env_frequency(chip, i, env)?;
        for s in samples.iter_mut() {
            let count = chipmodel::measure_count(f, t_on, chip.meas_sigma[i], rng);
            *s = chipmodel::count_to_mhz(count, t_on);
        }
        let (mu, sd) = chipmodel::mean_sd(&samples);
        mean.push(mu);
        sigma.push(sd);
    }
    Ok(FrequencyProfile {
        site_refs: (0..n).collect(),
        mean,
        sigma,
        m,
        t_on,
    })
}

/// Default characterization window and sample count.
pub fn characterize_default(
    chip: &ChipProfile,
    env: EnvCondition,
    rng: &mut SimRng,
) -> Result<FrequencyProfile> {
    characterize(chip, DEFAULT_SAMPLES, DEFAULT_T_ON_US, env, rng)
}

pub fn reject_erroneous(prof: &FrequencyProfile, mode: RejectMode) -> Result<CleanProfile> {
    if prof.is_empty() {
        return Err(Error::arg("empty frequency profile"));
    }
    let ratios = prof.normalized_sigma();
    let threshold = match mode {
        RejectMode::Fixed(th) => {
            if !(th > 0.0) {
                return Err(Error::arg(format!("threshold must be positive, got {th}")));
            }
            th
        }
        RejectMode::Quantile(q) => {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::arg(format!("quantile must be in (0, 1), got {q}")));
            }
            quantile(&ratios, q)
        }
    };
    let keep: Vec<usize> = (0..prof.len())
        .filter(|&i| ratios[i] <= threshold)
        .collect();
    if keep.is_empty() {
        return Err(Error::NoSurvivors { threshold });
    }
    let kept = prof.subset(&keep);
    Ok(CleanProfile {
        rejected_count: prof.len() - keep.len(),
        z_bar: kept.len(),
        kept,
        threshold_used: threshold,
    })
}

/// Linear-interpolated sample quantile.
fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn profile_stats(prof: &FrequencyProfile) -> Result<ProfileStats> {
    if prof.is_empty() {
        return Err(Error::arg("empty frequency profile"));
    }
    let (lo, hi) = chipmodel::min_max(&prof.mean);
    let (slo, shi) = chipmodel::min_max(&prof.sigma);
    Ok(ProfileStats {
        mean_span: hi - lo,
        sigma_span: (shi - slo) * 1000.0,
        mean_of_means: prof.mean.iter().sum::<f64>() / prof.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chipmodel::{ingest_csv_str, synth_chip, DeviceKind, DeviceSpec};
    use crate::rng;

    fn profile(mean: Vec<f64>, sigma: Vec<f64>) -> FrequencyProfile {
        FrequencyProfile {
            site_refs: (0..mean.len()).collect(),
            mean,
            sigma,
            m: 32,
            t_on: DEFAULT_T_ON_US,
        }
    }

    #[test]
    fn fixed_threshold_keeps_by_ratio() {
        let p = profile(vec![100.0; 3], vec![0.1, 0.3, 0.15]);
        let clean = reject_erroneous(&p, RejectMode::Fixed(0.002)).unwrap();
        assert_eq!(clean.kept.site_refs, vec![0, 2]);
        assert_eq!(clean.rejected_count, 1);
        assert_eq!(clean.z_bar, 2);
    }

    #[test]
    fn zero_sigma_keeps_everything() {
        let p = profile(vec![400.0, 401.0], vec![0.0, 0.0]);
        let clean = reject_erroneous(&p, RejectMode::Fixed(1e-9)).unwrap();
        assert_eq!(clean.rejected_count, 0);
    }

    #[test]
    fn rejection_errors() {
        let empty = profile(vec![], vec![]);
        assert!(matches!(
            reject_erroneous(&empty, RejectMode::default()),
            Err(Error::Argument(_))
        ));
        let p = profile(vec![100.0], vec![1.0]);
        assert!(matches!(
            reject_erroneous(&p, RejectMode::Fixed(0.002)),
            Err(Error::NoSurvivors { .. })
        ));
        assert!(reject_erroneous(&p, RejectMode::Fixed(0.0)).is_err());
        assert!(reject_erroneous(&p, RejectMode::Quantile(1.0)).is_err());
    }

    #[test]
    fn quantile_mode_discards_tail() {
        let sigma: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let p = profile(vec![400.0; 100], sigma);
        let clean = reject_erroneous(&p, RejectMode::Quantile(0.95)).unwrap();
        assert_eq!(clean.rejected_count, 5);
    }

    #[test]
    fn stats_examples() {
        let p = profile(vec![400.0, 410.0, 432.51], vec![0.0, 0.1, 0.2]);
        let s = profile_stats(&p).unwrap();
        assert!((s.mean_span - 32.51).abs() < 1e-9);
        assert!((s.sigma_span - 200.0).abs() < 1e-9);
        let one = profile(vec![400.0], vec![0.3]);
        let s = profile_stats(&one).unwrap();
        assert_eq!((s.mean_span, s.sigma_span), (0.0, 0.0));
    }

    #[test]
    fn noise_free_characterization_is_quantization_limited() {
        let text = "clb_x,clb_y,corner,mhz_1\n0,0,TL,400\n";
        let chip = ingest_csv_str(text, "one").unwrap();
        let mut rng = rng::seeded(1);
        let p = characterize_default(&chip, EnvCondition::REFERENCE, &mut rng).unwrap();
        assert_eq!(p.m, 32);
        assert_eq!(p.t_on, 122.87);
        assert!((p.mean[0] - 400.0).abs() <= 1.0 / 122.87);
        assert!(p.sigma[0] < 1.0 / 122.87);
    }

    #[test]
    fn characterize_requires_two_samples() {
        let chip = ingest_csv_str("clb_x,clb_y,corner,mhz_1\n0,0,TL,400\n", "x").unwrap();
        let mut rng = rng::seeded(1);
        assert!(matches!(
            characterize(&chip, 1, 122.87, EnvCondition::REFERENCE, &mut rng),
            Err(Error::Argument(_))
        ));
        assert!(characterize(&chip, 2, 0.0, EnvCondition::REFERENCE, &mut rng).is_err());
    }

    #[test]
    fn presets_reject_at_most_five_percent() {
        for kind in [DeviceKind::Nexys4ddr, DeviceKind::Basys3, DeviceKind::Zybo] {
            let chip = synth_chip(&DeviceSpec::preset(kind), 5).unwrap();
            let mut rng = rng::seeded(9);
            let p = characterize_default(&chip, EnvCondition::REFERENCE, &mut rng).unwrap();
            let clean = reject_erroneous(&p, RejectMode::default()).unwrap();
            let frac = clean.rejected_count as f64 / p.len() as f64;
            assert!(frac <= 0.05, "{kind}: rejected {frac}");
            assert!(clean.kept.normalized_sigma().iter().all(|&r| r <= 0.002));
        }
    }

    #[test]
    fn csv_export_round_trips_statistics() {
        let chip = synth_chip(&DeviceSpec::preset(DeviceKind::Zybo), 2).unwrap();
        let mut rng = rng::seeded(4);
        let p = characterize_default(&chip, EnvCondition::REFERENCE, &mut rng).unwrap();
        let back = ingest_csv_str(&p.to_csv(&chip), "rt").unwrap();
        assert_eq!(back.len(), p.len());
        for i in 0..p.len() {
            assert_eq!(back.sites[i].key(), chip.sites[p.site_refs[i]].key());
            assert!((back.nominal_freq[i] - p.mean[i]).abs() < 1e-9);
            assert!((back.meas_sigma[i] - p.sigma[i]).abs() < 1e-9);
        }
    }
}
