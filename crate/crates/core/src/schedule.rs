//! Bob's attenuation schedule and the per-pulse random choice of ratio.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewer than three ratios cannot distinguish an affine noise law from the
/// quadratic injection of the wavelength attack.
pub const MIN_LEVELS: usize = 3;

/// Ordered attenuation ratios `r_0 < … < r_{K-1}` applied to the signal path.
///
/// The least attenuated group (`K-1`) produces key; the others are used for
/// parameter estimation only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationSchedule {
    ratios: Vec<f64>,
    /// Relative selection weights; `None` means uniform.
    weights: Option<Vec<f64>>,
    /// Multiplicative systematic error of the attenuator per level: the
    /// hardware applies `r_i * (1 + bias_i)` while analysis assumes `r_i`.
    bias: Option<Vec<f64>>,
}

impl AttenuationSchedule {
    /// `r_i = top * step^(k-1-i)`.
    pub fn geometric(k: usize, step: f64, top: f64) -> Result<Self> {
        if k < MIN_LEVELS {
            return Err(Error::invalid("k", format!("need at least {MIN_LEVELS} levels, got {k}")));
        }
        if !(step > 0.0 && step < 1.0) {
            return Err(Error::invalid("step", format!("must lie in (0, 1), got {step}")));
        }
        if !(top > 0.0 && top <= 1.0) {
            return Err(Error::invalid("top", format!("must lie in (0, 1], got {top}")));
        }
        let ratios = (0..k)
            .map(|i| top * step.powi((k - 1 - i) as i32))
            .collect();
        Self::from_ratios(ratios)
    }

    pub fn from_ratios(ratios: Vec<f64>) -> Result<Self> {
        if ratios.len() < MIN_LEVELS {
            return Err(Error::invalid(
                "ratios",
                format!("need at least {MIN_LEVELS} levels, got {}", ratios.len()),
            ));
        }
        if ratios.len() > u16::MAX as usize {
            return Err(Error::invalid("ratios", "too many levels"));
        }
        for (i, &r) in ratios.iter().enumerate() {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid(format!("ratios[{i}]"), format!("{r} outside [0, 1]")));
            }
        }
        if let Some(i) = ratios.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                format!("ratios[{}]", i + 1),
                "ratios must be strictly increasing",
            ));
        }
        Ok(AttenuationSchedule {
            ratios,
            weights: None,
            bias: None,
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::invalid(
                "weights",
                format!("expected {} entries, got {}", self.len(), weights.len()),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("weights", "every weight must be finite and > 0"));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn with_bias(mut self, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != self.len() {
            return Err(Error::invalid(
                "bias",
                format!("expected {} entries, got {}", self.len(), bias.len()),
            ));
        }
        for (i, (&b, &r)) in bias.iter().zip(&self.ratios).enumerate() {
            let applied = r * (1.0 + b);
            if !b.is_finite() || !(0.0..=1.0).contains(&applied) {
                return Err(Error::invalid(
                    format!("bias[{i}]"),
                    format!("applied ratio {applied} outside [0, 1]"),
                ));
            }
        }
        self.bias = Some(bias);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    /// Nominal ratios, as known to the analysis.
    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    /// Ratio the attenuator actually applies to group `i`.
    pub fn applied_ratio(&self, i: usize) -> f64 {
        let r = self.ratios[i];
        match &self.bias {
            Some(b) => r * (1.0 + b[i]),
            None => r,
        }
    }

    pub fn key_group_index(&self) -> usize {
        self.ratios.len() - 1
    }

    /// `-10 log10(r_0 / r_{K-1})`; infinite when `r_0 = 0`.
    pub fn dynamic_range_db(&self) -> f64 {
        -10.0 * (self.ratios[0] / self.ratios[self.key_group_index()]).log10()
    }

    /// Probability that a pulse falls into group `i`.
    pub fn selection_probability(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i] / w.iter().sum::<f64>(),
            None => 1.0 / self.len() as f64,
        }
    }

    /// Expected fraction of pulses spent on parameter estimation, i.e. not
    /// in the key group.
    pub fn parameter_estimation_fraction(&self) -> f64 {
        match &self.weights {
            Some(w) => {
                let total: f64 = w.iter().sum();
                (total - w[self.key_group_index()]) / total
            }
            None => (self.len() - 1) as f64 / self.len() as f64,
        }
    }

    /// Per-pulse group chooser shared by every assignment path.
    pub fn sampler(&self) -> GroupSampler {
        match &self.weights {
            Some(w) => GroupSampler::Weighted(WeightedIndex::new(w).expect("weights validated")),
            None => GroupSampler::Uniform(self.len()),
        }
    }

    /// Independently draws a group index for each of `count` pulses.
    pub fn assign_random<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<u16>> {
        self.check_count(count)?;
        let sampler = self.sampler();
        Ok((0..count).map(|_| sampler.sample(rng) as u16).collect())
    }

    /// Group sizes produced by [`assign_random`](Self::assign_random) for the
    /// same RNG state, without materializing the assignment.
    pub fn count_assignments<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<usize>> {
        self.check_count(count)?;
        let sampler = self.sampler();
        let mut counts = vec![0usize; self.len()];
        for _ in 0..count {
            counts[sampler.sample(rng)] += 1;
        }
        Ok(counts)
    }

    fn check_count(&self, count: usize) -> Result<()> {
        if count < self.len() {
            return Err(Error::invalid(
                "count",
                format!("need at least one pulse per level ({}), got {count}", self.len()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum GroupSampler {
    Uniform(usize),
    Weighted(WeightedIndex<f64>),
}

impl GroupSampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            GroupSampler::Uniform(k) => rng.random_range(0..*k),
            GroupSampler::Weighted(w) => w.sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Quadrature;
    use crate::rng::{stream, StreamId, StreamKind};

    #[test]
    fn geometric_sixteen_levels() {
        let s = AttenuationSchedule::geometric(16, 0.7, 1.0).unwrap();
        assert_eq!(s.len(), 16);
        assert_eq!(s.ratios()[15], 1.0);
        assert!((s.ratios()[14] - 0.7).abs() < 1e-15);
        let r0 = 0.7f64.powi(15);
        assert!((s.ratios()[0] - r0).abs() < 1e-15);
        assert!((r0 - 4.747561509943e-3).abs() < 1e-14);
        // -10 log10(0.7^15) computed directly
        assert!((s.dynamic_range_db() - 23.2353).abs() < 1e-4);
        assert_eq!(s.key_group_index(), 15);
    }

    #[test]
    fn three_levels_half_step() {
        let s = AttenuationSchedule::geometric(3, 0.5, 1.0).unwrap();
        assert_eq!(s.ratios(), &[0.25, 0.5, 1.0]);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(AttenuationSchedule::geometric(16, 1.0, 1.0).is_err());
        assert!(AttenuationSchedule::geometric(2, 0.7, 1.0).is_err());
        assert!(AttenuationSchedule::geometric(16, 0.7, 1.2).is_err());
        assert!(AttenuationSchedule::from_ratios(vec![0.1, 0.1, 0.5]).is_err());
        assert!(AttenuationSchedule::from_ratios(vec![0.1, 0.5, 1.1]).is_err());
    }

    #[test]
    fn parameter_estimation_fraction_uniform() {
        let s = AttenuationSchedule::geometric(16, 0.7, 1.0).unwrap();
        assert_eq!(s.parameter_estimation_fraction(), 15.0 / 16.0);
        let w = s.clone().with_weights(vec![1.0; 15].into_iter().chain([5.0]).collect()).unwrap();
        assert!((w.parameter_estimation_fraction() - 15.0 / 20.0).abs() < 1e-15);
    }

    #[test]
    fn counts_match_assignment() {
        let s = AttenuationSchedule::geometric(16, 0.7, 1.0).unwrap();
        let id = StreamId::new(StreamKind::Assign, Quadrature::X, 0);
        let assigned = s.assign_random(10_000, &mut stream(9, id)).unwrap();
        let counts = s.count_assignments(10_000, &mut stream(9, id)).unwrap();
        let mut manual = vec![0usize; 16];
        for a in assigned {
            manual[a as usize] += 1;
        }
        assert_eq!(manual, counts);
    }

    #[test]
    fn assignment_group_sizes_within_binomial_bound() {
        let s = AttenuationSchedule::geometric(16, 0.7, 1.0).unwrap();
        let n = 16_000_000usize;
        let counts = s
            .count_assignments(n, &mut stream(3, StreamId::user(0)))
            .unwrap();
        // binomial: sqrt(n p (1-p)) with p = 1/16
        let sigma = (n as f64 * (1.0 / 16.0) * (15.0 / 16.0)).sqrt();
        for c in &counts {
            assert!((*c as f64 - 1e6).abs() < 5.0 * sigma, "{c}");
        }
        let key = counts[15] as f64 / n as f64;
        assert!(((1.0 - key) - 0.9375).abs() < 5.0 * sigma / n as f64);
    }

    #[test]
    fn assignment_deterministic_and_rejects_short_counts() {
        let s = AttenuationSchedule::geometric(4, 0.5, 1.0).unwrap();
        let a = s.assign_random(100, &mut stream(5, StreamId::user(1))).unwrap();
        let b = s.assign_random(100, &mut stream(5, StreamId::user(1))).unwrap();
        assert_eq!(a, b);
        assert!(s.assign_random(3, &mut stream(5, StreamId::user(1))).is_err());
    }

    #[test]
    fn bias_changes_applied_ratio_only() {
        let s = AttenuationSchedule::geometric(3, 0.5, 1.0)
            .unwrap()
            .with_bias(vec![0.01, 0.0, -0.02])
            .unwrap();
        assert_eq!(s.ratios(), &[0.25, 0.5, 1.0]);
        assert!((s.applied_ratio(0) - 0.2525).abs() < 1e-15);
        assert!((s.applied_ratio(2) - 0.98).abs() < 1e-15);
        assert!(AttenuationSchedule::geometric(3, 0.5, 1.0)
            .unwrap()
            .with_bias(vec![0.0, 0.0, 0.1])
            .is_err());
    }
}
