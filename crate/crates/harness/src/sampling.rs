//! Seeded random game instances.
//!
//! Every UAV, every RSU and every (UAV, RSU) link draws from its own stream
//! of the seed, so an instance with more UAVs or RSUs extends a smaller one
//! built from the same seed instead of reshuffling it.

use rand::Rng;
use serde::{Deserialize, Serialize};
use tinymarl_core::game::{ChannelLink, GameInstance, RsuProfile, SsimTriple, UavProfile};
use tinymarl_core::rng;

use crate::config::ConfigError;

/// Closed interval `[low, high]`, written as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    pub fn low(self) -> f64 {
        self.0
    }

    pub fn high(self) -> f64 {
        self.1
    }

    /// One uniform draw; always consumes exactly one value from `rng`.
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.0 + u * (self.1 - self.0)
    }

    fn check(self, name: &str, errors: &mut Vec<String>) {
        if !(self.0.is_finite() && self.1.is_finite()) {
            errors.push(format!("ranges.{name}: bounds must be finite, got [{}, {}]", self.0, self.1));
        } else if self.0 > self.1 {
            errors.push(format!("ranges.{name}: empty range [{}, {}]", self.0, self.1));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingRanges {
    pub noise_dbm: Range,
    pub channel_gain_db: Range,
    pub transmit_power_dbm: Range,
    pub luminance: Range,
    pub contrast: Range,
    pub structure: Range,
    pub ssim_threshold: Range,
    pub delta: Range,
    pub bandwidth_cost: Range,
    pub price_cap: Range,
    pub budget: Range,
}

impl Default for SamplingRanges {
    fn default() -> Self {
        SamplingRanges {
            noise_dbm: Range(-116.0, -112.0),
            channel_gain_db: Range(-25.0, -22.0),
            transmit_power_dbm: Range(20.0, 25.0),
            luminance: Range(0.8, 1.0),
            contrast: Range(0.8, 1.0),
            structure: Range(0.8, 1.0),
            ssim_threshold: Range(0.5, 0.55),
            delta: Range(10.0, 20.0),
            bandwidth_cost: Range(1.0, 4.0),
            price_cap: Range(5.0, 35.0),
            budget: Range(2.0, 6.0),
        }
    }
}

impl SamplingRanges {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        self.collect_errors(&mut errors);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    pub(crate) fn collect_errors(&self, errors: &mut Vec<String>) {
        let named = [
            ("noise_dbm", self.noise_dbm),
            ("channel_gain_db", self.channel_gain_db),
            ("transmit_power_dbm", self.transmit_power_dbm),
            ("luminance", self.luminance),
            ("contrast", self.contrast),
            ("structure", self.structure),
            ("ssim_threshold", self.ssim_threshold),
            ("delta", self.delta),
            ("bandwidth_cost", self.bandwidth_cost),
            ("price_cap", self.price_cap),
            ("budget", self.budget),
        ];
        for (name, r) in named {
            r.check(name, errors);
        }
        for (name, r) in [("luminance", self.luminance), ("contrast", self.contrast), ("structure", self.structure)] {
            if r.0 < 0.0 || r.1 > 1.0 {
                errors.push(format!("ranges.{name}: similarity must lie in [0, 1]"));
            }
        }
        if self.ssim_threshold.0 <= 0.0 || self.ssim_threshold.1 >= 1.0 {
            errors.push("ranges.ssim_threshold: must lie strictly inside (0, 1)".into());
        }
        for (name, r) in [("delta", self.delta), ("bandwidth_cost", self.bandwidth_cost), ("budget", self.budget)] {
            if r.0 <= 0.0 {
                errors.push(format!("ranges.{name}: must be positive"));
            }
        }
        if self.bandwidth_cost.1 > self.price_cap.0 {
            errors.push(format!(
                "ranges: bandwidth_cost upper bound {} exceeds price_cap lower bound {}",
                self.bandwidth_cost.1, self.price_cap.0
            ));
        }
    }
}

/// Draw an instance with `uavs` UAVs and `rsus` RSUs, every parameter
/// uniform in its range.
pub fn sample_instance(ranges: &SamplingRanges, uavs: usize, rsus: usize, seed: u64) -> Result<GameInstance, ConfigError> {
    ranges.validate()?;
    if uavs == 0 || rsus == 0 {
        return Err(ConfigError::Invalid(vec!["instance needs at least one UAV and one RSU".into()]));
    }
    let rsu_profiles = (0..rsus)
        .map(|j| {
            let mut r = rng::stream(seed, "instance/rsu", j as u64, 0);
            let power = ranges.transmit_power_dbm.sample(&mut r);
            let gain = ranges.channel_gain_db.sample(&mut r);
            let noise = ranges.noise_dbm.sample(&mut r);
            let cost = ranges.bandwidth_cost.sample(&mut r);
            let cap = ranges.price_cap.sample(&mut r);
            let link = ChannelLink::new(power, gain, noise).map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
            Ok(RsuProfile { bandwidth_cost: cost, price_cap: cap, link })
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    let uav_profiles = (0..uavs)
        .map(|i| {
            let mut r = rng::stream(seed, "instance/uav", i as u64, 0);
            let delta = ranges.delta.sample(&mut r);
            let budget = ranges.budget.sample(&mut r);
            let threshold = ranges.ssim_threshold.sample(&mut r);
            let per_rsu_ssim = (0..rsus)
                .map(|j| {
                    let mut r = rng::stream(seed, "instance/ssim", i as u64, j as u64);
                    let l = ranges.luminance.sample(&mut r);
                    let c = ranges.contrast.sample(&mut r);
                    let s = ranges.structure.sample(&mut r);
                    SsimTriple::new(l, c, s).map_err(|e| ConfigError::Invalid(vec![e.to_string()]))
                })
                .collect::<Result<Vec<_>, ConfigError>>()?;
            Ok(UavProfile { delta, budget, ssim_threshold: threshold, per_rsu_ssim })
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    GameInstance::new(uav_profiles, rsu_profiles).map_err(|e| ConfigError::Invalid(vec![e.to_string()]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ranges_are_respected() {
        let ranges = SamplingRanges::default();
        for seed in 0..50 {
            let g = sample_instance(&ranges, 4, 3, seed).unwrap();
            for u in g.uavs() {
                assert!((10.0..=20.0).contains(&u.delta));
                assert!((0.5..=0.55).contains(&u.ssim_threshold));
                assert!((2.0..=6.0).contains(&u.budget));
            }
            for r in g.rsus() {
                assert!((1.0..=4.0).contains(&r.bandwidth_cost));
                assert!((5.0..=35.0).contains(&r.price_cap));
                assert!((-116.0..=-112.0).contains(&r.link.noise_dbm()));
            }
        }
    }

    #[test]
    fn same_seed_same_instance() {
        let ranges = SamplingRanges::default();
        assert_eq!(sample_instance(&ranges, 3, 2, 9).unwrap(), sample_instance(&ranges, 3, 2, 9).unwrap());
        assert_ne!(sample_instance(&ranges, 3, 2, 9).unwrap(), sample_instance(&ranges, 3, 2, 10).unwrap());
    }

    #[test]
    fn degenerate_ranges_fix_every_value() {
        let point = |v| Range(v, v);
        let ranges = SamplingRanges {
            noise_dbm: point(-114.0),
            channel_gain_db: point(-23.0),
            transmit_power_dbm: point(22.0),
            luminance: point(0.9),
            contrast: point(0.9),
            structure: point(0.9),
            ssim_threshold: point(0.5),
            delta: point(12.0),
            bandwidth_cost: point(2.0),
            price_cap: point(20.0),
            budget: point(3.0),
        };
        let a = sample_instance(&ranges, 2, 2, 1).unwrap();
        assert_eq!(a, sample_instance(&ranges, 2, 2, 77).unwrap());
        assert_eq!(a.uav(1).delta, 12.0);
        assert_eq!(a.rsu(0).link.snr_db(), 22.0 - 23.0 + 114.0);
    }

    #[test]
    fn larger_instances_extend_smaller_ones() {
        let ranges = SamplingRanges::default();
        let small = sample_instance(&ranges, 3, 2, 4).unwrap();
        let big = sample_instance(&ranges, 5, 4, 4).unwrap();
        for j in 0..2 {
            assert_eq!(small.rsu(j), big.rsu(j));
        }
        for i in 0..3 {
            assert_eq!(small.uav(i).delta, big.uav(i).delta);
            assert_eq!(small.uav(i).per_rsu_ssim[..], big.uav(i).per_rsu_ssim[..2]);
        }
    }

    #[test]
    fn cost_above_cap_is_rejected() {
        let ranges = SamplingRanges { bandwidth_cost: Range(1.0, 6.0), ..Default::default() };
        let err = sample_instance(&ranges, 1, 1, 0).unwrap_err();
        assert!(err.to_string().contains("exceeds price_cap"), "{err}");
        let empty = SamplingRanges { delta: Range(20.0, 10.0), ..Default::default() };
        assert!(empty.validate().is_err());
    }
}
