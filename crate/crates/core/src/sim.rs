//! Pulse-level GG02 simulation at the quadrature level.
//!
//! A pulse carries Alice's Gaussian symbol `a` plus modulation noise `z`
//! through the channel (`sqrt(T)`), Bob's attenuator and detector
//! (`sqrt(r * eta)`), and picks up shot noise and electronic noise:
//!
//! `y = sqrt(gain) * (sqrt(r eta T) (a + z) + n0 + n_el)` volts.
//!
//! Each (quadrature, group) owns its own Alice, noise and attack streams, so
//! the pulse-ordered iterator and the group-parallel moment path draw exactly
//! the same numbers.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{
    apply_intercept_resend, apply_saturation, apply_wavelength_injection, AttackConfig,
    AttackPipeline, INTERCEPT_RESEND_NOISE,
};
use crate::error::{Error, Result};
use crate::params::{Quadrature, SystemParams};
use crate::rng::{stream, SimRng, StreamId, StreamKind};
use crate::schedule::{AttenuationSchedule, GroupSampler};
use crate::stats::Moments;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseRecord {
    /// Global pulse counter; even indices are X, odd are P.
    pub index: u64,
    pub quadrature: Quadrature,
    pub atten_index: usize,
    /// Alice's symbol, sqrt(SNU).
    pub alice_value: f64,
    pub bob_value_volts: f64,
}

/// Independent `N(0, v_a)` draws.
pub fn draw_alice_symbols<R: Rng + ?Sized>(params: &SystemParams, count: usize, rng: &mut R) -> Vec<f64> {
    let sd = params.v_a.max(0.0).sqrt();
    (0..count).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Honest detection of one pulse at attenuation `r`, in volts.
pub fn simulate_pulse<R: Rng + ?Sized>(
    params: &SystemParams,
    alice_value: f64,
    r: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::invalid("r", format!("{r} outside [0, 1]")));
    }
    let honest = AttackPipeline::honest();
    let det = Detector::new(params, &honest, r);
    Ok(det.detect(alice_value, rng, None::<&mut R>))
}

struct Detector<'a> {
    attack: &'a AttackPipeline,
    ratio: f64,
    sqrt_gain: f64,
    sqrt_eps: f64,
    sqrt_t: f64,
    sqrt_vel: f64,
    amp: f64,
    sqrt_ratio: f64,
}

impl<'a> Detector<'a> {
    fn new(params: &SystemParams, attack: &'a AttackPipeline, ratio: f64) -> Self {
        Detector {
            attack,
            ratio,
            sqrt_gain: params.gain_v2.sqrt(),
            sqrt_eps: params.eps_mod.sqrt(),
            sqrt_t: params.t_channel.sqrt(),
            sqrt_vel: params.v_el.sqrt(),
            amp: (ratio * params.eta).sqrt(),
            sqrt_ratio: ratio.sqrt(),
        }
    }

    #[inline]
    fn detect<R: Rng + ?Sized, A: Rng + ?Sized>(
        &self,
        alice: f64,
        noise: &mut R,
        mut attack_rng: Option<&mut A>,
    ) -> f64 {
        let z: f64 = noise.sample(StandardNormal);
        let n0: f64 = noise.sample(StandardNormal);
        let n_el: f64 = noise.sample(StandardNormal);

        let mut channel = self.sqrt_t * (alice + self.sqrt_eps * z);
        if let (Some(mu), Some(rng)) = (self.attack.intercept_resend, attack_rng.as_deref_mut()) {
            channel = apply_intercept_resend(mu, channel, rng);
        }
        let mut y = self.amp * channel + n0 + self.sqrt_vel * n_el;
        if let (Some(poly), Some(rng)) = (&self.attack.wavelength, attack_rng) {
            y += apply_wavelength_injection(poly, self.ratio, rng);
        }
        if let Some(sat) = self.attack.saturation {
            // Eve's displacement travels through Bob's attenuator.
            y = apply_saturation(sat.alpha, sat.delta * self.sqrt_ratio, y);
        }
        self.sqrt_gain * y
    }
}

/// Random state of one (quadrature, attenuation) group.
struct GroupStream<'a> {
    detector: Detector<'a>,
    alice_sd: f64,
    alice: SimRng,
    noise: SimRng,
    attack: SimRng,
}

impl<'a> GroupStream<'a> {
    fn new(
        params: &SystemParams,
        schedule: &AttenuationSchedule,
        pipeline: &'a AttackPipeline,
        quadrature: Quadrature,
        group: usize,
    ) -> Self {
        let g = group as u32;
        GroupStream {
            detector: Detector::new(params, pipeline, schedule.applied_ratio(group)),
            alice_sd: params.v_a.sqrt(),
            alice: stream(params.seed, StreamId::new(StreamKind::Alice, quadrature, g)),
            noise: stream(params.seed, StreamId::new(StreamKind::Noise, quadrature, g)),
            attack: stream(params.seed, StreamId::new(StreamKind::Attack, quadrature, g)),
        }
    }

    #[inline]
    fn next_pulse(&mut self) -> (f64, f64) {
        let a = self.alice_sd * self.alice.sample::<f64, _>(StandardNormal);
        let y = self.detector.detect(a, &mut self.noise, Some(&mut self.attack));
        (a, y)
    }
}

fn check_inputs(params: &SystemParams, schedule: &AttenuationSchedule) -> Result<()> {
    params.validate()?;
    if schedule.is_empty() {
        return Err(Error::invalid("schedule", "must not be empty"));
    }
    Ok(())
}

fn assign_stream(params: &SystemParams, quadrature: Quadrature) -> SimRng {
    stream(params.seed, StreamId::new(StreamKind::Assign, quadrature, 0))
}

/// Pulses per quadrature in a block.
pub fn pulses_per_quadrature(params: &SystemParams, schedule: &AttenuationSchedule) -> usize {
    schedule.len() * params.n_per_group
}

/// Realized group sizes, indexed `[quadrature][group]`.
pub fn group_counts(params: &SystemParams, schedule: &AttenuationSchedule) -> Result<[Vec<usize>; 2]> {
    let total = pulses_per_quadrature(params, schedule);
    let x = schedule.count_assignments(total, &mut assign_stream(params, Quadrature::X))?;
    let p = schedule.count_assignments(total, &mut assign_stream(params, Quadrature::P))?;
    Ok([x, p])
}

/// Pulse-ordered stream of a block's records, generated lazily.
pub struct BlockPulses<'a> {
    sampler: GroupSampler,
    groups: [Vec<GroupStream<'a>>; 2],
    assign: [SimRng; 2],
    next_index: u64,
    total: u64,
}

impl<'a> BlockPulses<'a> {
    pub fn new(
        params: &'a SystemParams,
        schedule: &'a AttenuationSchedule,
        pipeline: &'a AttackPipeline,
    ) -> Result<Self> {
        check_inputs(params, schedule)?;
        let per_quad = pulses_per_quadrature(params, schedule);
        let make = |q| {
            (0..schedule.len())
                .map(|g| GroupStream::new(params, schedule, pipeline, q, g))
                .collect::<Vec<_>>()
        };
        Ok(BlockPulses {
            sampler: schedule.sampler(),
            groups: [make(Quadrature::X), make(Quadrature::P)],
            assign: [
                assign_stream(params, Quadrature::X),
                assign_stream(params, Quadrature::P),
            ],
            next_index: 0,
            total: 2 * per_quad as u64,
        })
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

impl Iterator for BlockPulses<'_> {
    type Item = PulseRecord;

    fn next(&mut self) -> Option<PulseRecord> {
        if self.next_index >= self.total {
            return None;
        }
        let index = self.next_index;
        self.next_index += 1;
        let quadrature = if index.is_multiple_of(2) { Quadrature::X } else { Quadrature::P };
        let q = quadrature.index();
        let atten_index = self.sampler.sample(&mut self.assign[q]);
        let (alice_value, y) = self.groups[q][atten_index].next_pulse();
        Some(PulseRecord {
            index,
            quadrature,
            atten_index,
            alice_value,
            bob_value_volts: y,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.total - self.next_index) as usize;
        (left, Some(left))
    }
}

/// Every record of a block, `K * n_per_group` per quadrature, interleaved
/// X, P, X, P, … by pulse index.
pub fn simulate_block(
    params: &SystemParams,
    schedule: &AttenuationSchedule,
    attack: Option<&AttackConfig>,
) -> Result<Vec<PulseRecord>> {
    let pipeline = AttackPipeline::from_config(attack)?;
    let pulses = BlockPulses::new(params, schedule, &pipeline)?;
    Ok(pulses.collect())
}

/// Alice symbols and Bob volts for the first `count` pulses of one group.
pub fn simulate_group_values(
    params: &SystemParams,
    schedule: &AttenuationSchedule,
    attack: Option<&AttackConfig>,
    quadrature: Quadrature,
    group: usize,
    count: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let pipeline = AttackPipeline::from_config(attack)?;
    check_inputs(params, schedule)?;
    check_group(schedule, group)?;
    let mut gs = GroupStream::new(params, schedule, &pipeline, quadrature, group);
    Ok((0..count).map(|_| gs.next_pulse()).unzip())
}

fn check_group(schedule: &AttenuationSchedule, group: usize) -> Result<()> {
    if group >= schedule.len() {
        return Err(Error::invalid(
            "atten_index",
            format!("{group} out of range for {} levels", schedule.len()),
        ));
    }
    Ok(())
}

/// Sufficient statistics of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMoments {
    pub quadrature: Quadrature,
    pub atten_index: usize,
    pub moments: Moments,
}

/// Group moments of a whole block, ordered X groups then P groups.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMoments {
    pub ratios: Vec<f64>,
    pub groups: Vec<GroupMoments>,
}

impl BlockMoments {
    pub fn quadrature(&self, q: Quadrature) -> impl Iterator<Item = &GroupMoments> {
        self.groups.iter().filter(move |g| g.quadrature == q)
    }
}

/// Group moments without materializing records; groups run in parallel.
pub fn simulate_block_moments(
    params: &SystemParams,
    schedule: &AttenuationSchedule,
    attack: Option<&AttackConfig>,
) -> Result<BlockMoments> {
    let pipeline = AttackPipeline::from_config(attack)?;
    check_inputs(params, schedule)?;
    let counts = group_counts(params, schedule)?;
    let jobs: Vec<(Quadrature, usize, usize)> = Quadrature::BOTH
        .iter()
        .flat_map(|&q| (0..schedule.len()).map(move |g| (q, g)))
        .map(|(q, g)| (q, g, counts[q.index()][g]))
        .collect();
    let groups = jobs
        .into_par_iter()
        .map(|(quadrature, atten_index, count)| {
            let mut gs = GroupStream::new(params, schedule, &pipeline, quadrature, atten_index);
            let mut moments = Moments::new();
            for _ in 0..count {
                let (a, y) = gs.next_pulse();
                moments.push(a, y);
            }
            GroupMoments {
                quadrature,
                atten_index,
                moments,
            }
        })
        .collect();
    Ok(BlockMoments {
        ratios: schedule.ratios().to_vec(),
        groups,
    })
}

/// Accumulates group moments from records, e.g. a trace read back from disk.
pub fn moments_from_records<'r>(
    records: impl IntoIterator<Item = &'r PulseRecord>,
    ratios: &[f64],
) -> Result<BlockMoments> {
    let mut acc = RecordAccumulator::new(ratios.to_vec());
    for r in records {
        acc.push(r)?;
    }
    Ok(acc.finish())
}

/// Streaming form of [`moments_from_records`].
#[derive(Debug, Clone)]
pub struct RecordAccumulator {
    ratios: Vec<f64>,
    acc: Vec<Moments>,
}

impl RecordAccumulator {
    pub fn new(ratios: Vec<f64>) -> Self {
        let acc = vec![Moments::new(); 2 * ratios.len()];
        RecordAccumulator { ratios, acc }
    }

    pub fn push(&mut self, r: &PulseRecord) -> Result<()> {
        let k = self.ratios.len();
        if r.atten_index >= k {
            return Err(Error::invalid(
                "atten_index",
                format!("pulse {} uses level {} of {k}", r.index, r.atten_index),
            ));
        }
        self.acc[r.quadrature.index() * k + r.atten_index].push(r.alice_value, r.bob_value_volts);
        Ok(())
    }

    pub fn finish(self) -> BlockMoments {
        let k = self.ratios.len();
        let groups = self
            .acc
            .into_iter()
            .enumerate()
            .map(|(i, moments)| GroupMoments {
                quadrature: Quadrature::BOTH[i / k],
                atten_index: i % k,
                moments,
            })
            .collect();
        BlockMoments {
            ratios: self.ratios,
            groups,
        }
    }
}

/// Closed-form group variances (SNU) at the attenuator's applied ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectedPoint {
    pub ratio: f64,
    pub signal: f64,
    pub noise: f64,
}

/// Expected signal and noise variance of each group. Saturation has no
/// affine closed form here and is rejected.
pub fn expected_curve(
    params: &SystemParams,
    schedule: &AttenuationSchedule,
    attack: &AttackPipeline,
) -> Result<Vec<ExpectedPoint>> {
    if attack.saturation.is_some() {
        return Err(Error::Unsupported("closed-form curve under saturation"));
    }
    let mu = attack.intercept_resend.unwrap_or(0.0);
    Ok((0..schedule.len())
        .map(|i| {
            let r = schedule.applied_ratio(i);
            let wl = attack.wavelength.map_or(0.0, |p| p.variance_at(r));
            ExpectedPoint {
                ratio: schedule.ratios()[i],
                signal: params.expected_signal(r),
                noise: params.expected_noise(r) + INTERCEPT_RESEND_NOISE * mu * r * params.eta + wl,
            }
        })
        .collect())
}
