//! The countermeasure: split each group into signal and noise by projecting
//! Bob's data on Alice's symbols, fit noise-vs-signal and signal-vs-
//! attenuation lines, normalize to shot-noise units with the noise
//! intercept, and accept a block only when both lines stay affine.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Quadrature;
use crate::sim::BlockMoments;
use crate::stats::Moments;

/// Pulses per group in the reference experiment; residual budgets quoted
/// for it are rescaled by `sqrt(N_REFERENCE / n)` for smaller runs.
pub const N_REFERENCE: f64 = 5e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceUnit {
    #[serde(rename = "V2")]
    Volts2,
    #[serde(rename = "SNU")]
    Snu,
}

/// Signal and noise variance of one (attenuation, quadrature) group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub atten_index: usize,
    pub quadrature: Quadrature,
    pub n: u64,
    /// Signal variance.
    pub s: f64,
    /// Noise variance.
    pub n_var: f64,
    pub unit: VarianceUnit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub signal_var: f64,
    pub noise_var: f64,
    pub correlation: f64,
}

/// Projects mean-centered `bob` onto mean-centered `alice`:
/// `S = (<X,Y> / <X,X>) X`, signal = Var(S), noise = Var(Y - S).
pub fn project_signal_noise(alice: &[f64], bob: &[f64]) -> Result<Projection> {
    if alice.len() != bob.len() {
        return Err(Error::LengthMismatch {
            left: alice.len(),
            right: bob.len(),
        });
    }
    let n = alice.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mx = alice.iter().sum::<f64>() / n as f64;
    let my = bob.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in alice.iter().zip(bob) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::VarZero);
    }
    let coef = sxy / sxx;
    let denom = (n - 1) as f64;
    let mut noise_ss = 0.0;
    for (&a, &b) in alice.iter().zip(bob) {
        let r = (b - my) - coef * (a - mx);
        noise_ss += r * r;
    }
    Ok(Projection {
        signal_var: coef * coef * sxx / denom,
        noise_var: noise_ss / denom,
        correlation: correlation(sxx, syy, sxy),
    })
}

/// Same split from streaming moments, using `Var(Y) = Var(S) + Var(Y - S)`.
pub fn project_moments(m: &Moments) -> Result<Projection> {
    if m.count() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: m.count() as usize,
        });
    }
    let (sxx, syy, sxy) = m.centered_sums();
    if sxx == 0.0 {
        return Err(Error::VarZero);
    }
    let denom = m.count() as f64 - 1.0;
    let signal_ss = sxy * sxy / sxx;
    Ok(Projection {
        signal_var: signal_ss / denom,
        noise_var: (syy - signal_ss).max(0.0) / denom,
        correlation: correlation(sxx, syy, sxy),
    })
}

fn correlation(sxx: f64, syy: f64, sxy: f64) -> f64 {
    if syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Per-group statistics in volts². Groups whose nominal ratio is exactly 0
/// carry no signal by construction and skip the projection.
pub fn group_stats(block: &BlockMoments) -> Result<Vec<GroupStats>> {
    block
        .groups
        .iter()
        .map(|g| {
            let (s, n_var) = if block.ratios[g.atten_index] == 0.0 {
                (0.0, g.moments.var_y())
            } else {
                let p = project_moments(&g.moments)?;
                (p.signal_var, p.noise_var)
            };
            Ok(GroupStats {
                atten_index: g.atten_index,
                quadrature: g.quadrature,
                n: g.moments.count(),
                s,
                n_var,
                unit: VarianceUnit::Volts2,
            })
        })
        .collect()
}

/// Ordinary least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// `Cov²(x, y) / (Var(x) Var(y))`.
    pub r_squared: f64,
    /// Observed minus fitted, in input order.
    pub residuals: Vec<f64>,
    pub max_abs_residual: f64,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

pub fn fit_affine(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::FitDegenerate(format!("need at least 3 points, got {n}")));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::FitDegenerate("non-finite input".into()));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let x_scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if sxx <= (f64::EPSILON * x_scale).powi(2) * n as f64 {
        return Err(Error::FitDegenerate("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    let residuals: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| y - (intercept + slope * x))
        .collect();
    let max_abs_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        residuals,
        max_abs_residual,
    })
}

/// Divides every variance by the noise-fit intercept.
pub fn normalize_to_snu(stats: &[GroupStats], fit: &LinearFit) -> Result<Vec<GroupStats>> {
    if !(fit.intercept > 0.0) {
        return Err(Error::ShotNonPositive(fit.intercept));
    }
    stats
        .iter()
        .map(|g| {
            if g.unit == VarianceUnit::Snu {
                return Err(Error::invalid("unit", "statistics are already in SNU"));
            }
            Ok(GroupStats {
                s: g.s / fit.intercept,
                n_var: g.n_var / fit.intercept,
                unit: VarianceUnit::Snu,
                ..*g
            })
        })
        .collect()
}

/// Relative standard deviation of a Gaussian variance estimate from `n`
/// samples, `sqrt(2 / n)`.
pub fn estimator_sigma(n: u64) -> f64 {
    (2.0 / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub r2_min: f64,
    pub residual_max_snu: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            r2_min: 0.99,
            residual_max_snu: 2e-4,
        }
    }
}

impl Thresholds {
    /// Residual budget widened by `sqrt(N_REFERENCE / n)` for groups of `n`
    /// pulses; never tightened.
    pub fn scaled_for_group_size(self, n: u64) -> Self {
        let factor = (N_REFERENCE / n as f64).sqrt().max(1.0);
        Thresholds {
            residual_max_snu: self.residual_max_snu * factor,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r2_min) {
            return Err(Error::invalid("thresholds.r2_min", "must lie in [0, 1]"));
        }
        if !(self.residual_max_snu >= 0.0) {
            return Err(Error::invalid("thresholds.residual_max_snu", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    NoiseFitR2,
    ResidualBudget,
    AttenFitR2,
    FitDegenerate,
    ShotNonpositive,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::NoiseFitR2 => "NOISE_FIT_R2",
            RejectReason::ResidualBudget => "RESIDUAL_BUDGET",
            RejectReason::AttenFitR2 => "ATTEN_FIT_R2",
            RejectReason::FitDegenerate => "FIT_DEGENERATE",
            RejectReason::ShotNonpositive => "SHOT_NONPOSITIVE",
        })
    }
}

/// Accept/reject decision for one quadrature of a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub quadrature: Quadrature,
    pub accepted: bool,
    pub r2_noise_signal: f64,
    pub r2_signal_atten: f64,
    pub max_residual_snu: f64,
    /// Noise-fit intercept, volts².
    pub shot_noise_estimate_v2: f64,
    /// Always 1: the intercept defines the unit.
    pub shot_noise_estimate_snu: f64,
    /// Noise-fit slope, SNU per SNU.
    pub excess_noise_slope: f64,
    pub reject_reasons: Vec<RejectReason>,
}

/// Everything computed while gating one quadrature; the report and the
/// figure-data files are written from this.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureAnalysis {
    pub ratios: Vec<f64>,
    pub stats: Vec<GroupStats>,
    pub stats_snu: Option<Vec<GroupStats>>,
    pub noise_fit: Option<LinearFit>,
    pub atten_fit: Option<LinearFit>,
    pub verdict: GateVerdict,
}

/// Runs both fits on one quadrature's groups and applies the thresholds.
pub fn analyze_quadrature(
    ratios: &[f64],
    stats: &[GroupStats],
    thresholds: &Thresholds,
) -> Result<QuadratureAnalysis> {
    let quadrature = stats
        .first()
        .map(|g| g.quadrature)
        .ok_or_else(|| Error::invalid("stats", "no groups"))?;
    if stats.iter().any(|g| g.quadrature != quadrature) {
        return Err(Error::invalid("stats", "mixed quadratures"));
    }
    if stats.iter().any(|g| g.unit != VarianceUnit::Volts2) {
        return Err(Error::invalid("stats", "expected raw (volts²) statistics"));
    }
    let mut stats = stats.to_vec();
    stats.sort_by_key(|g| g.atten_index);
    if let Some(g) = stats.iter().find(|g| g.atten_index >= ratios.len()) {
        return Err(Error::invalid("atten_index", format!("{} has no ratio", g.atten_index)));
    }

    let mut verdict = GateVerdict {
        quadrature,
        accepted: false,
        r2_noise_signal: 0.0,
        r2_signal_atten: 0.0,
        max_residual_snu: 0.0,
        shot_noise_estimate_v2: 0.0,
        shot_noise_estimate_snu: 1.0,
        excess_noise_slope: 0.0,
        reject_reasons: Vec::new(),
    };
    let mut out = QuadratureAnalysis {
        ratios: ratios.to_vec(),
        stats_snu: None,
        noise_fit: None,
        atten_fit: None,
        stats,
        verdict: verdict.clone(),
    };

    let s: Vec<f64> = out.stats.iter().map(|g| g.s).collect();
    let n: Vec<f64> = out.stats.iter().map(|g| g.n_var).collect();
    let r: Vec<f64> = out.stats.iter().map(|g| ratios[g.atten_index]).collect();

    match fit_affine(&s, &n) {
        Ok(fit) => {
            verdict.r2_noise_signal = fit.r_squared;
            verdict.shot_noise_estimate_v2 = fit.intercept;
            verdict.excess_noise_slope = fit.slope;
            match normalize_to_snu(&out.stats, &fit) {
                Ok(snu) => {
                    verdict.max_residual_snu = fit.max_abs_residual / fit.intercept;
                    if verdict.r2_noise_signal < thresholds.r2_min {
                        verdict.reject_reasons.push(RejectReason::NoiseFitR2);
                    }
                    if verdict.max_residual_snu > thresholds.residual_max_snu {
                        verdict.reject_reasons.push(RejectReason::ResidualBudget);
                    }
                    out.stats_snu = Some(snu);
                }
                Err(_) => verdict.reject_reasons.push(RejectReason::ShotNonpositive),
            }
            out.noise_fit = Some(fit);
        }
        Err(_) => verdict.reject_reasons.push(RejectReason::FitDegenerate),
    }

    match fit_affine(&r, &s) {
        Ok(fit) => {
            verdict.r2_signal_atten = fit.r_squared;
            if fit.r_squared < thresholds.r2_min {
                verdict.reject_reasons.push(RejectReason::AttenFitR2);
            }
            out.atten_fit = Some(fit);
        }
        Err(_) => {
            if !verdict.reject_reasons.contains(&RejectReason::FitDegenerate) {
                verdict.reject_reasons.push(RejectReason::FitDegenerate);
            }
        }
    }

    verdict.accepted = verdict.reject_reasons.is_empty();
    out.verdict = verdict;
    Ok(out)
}

/// Gate one quadrature: both R² at or above `r2_min` and every noise-fit
/// residual within `residual_max_snu`.
pub fn gate(ratios: &[f64], stats: &[GroupStats], thresholds: &Thresholds) -> Result<GateVerdict> {
    analyze_quadrature(ratios, stats, thresholds).map(|a| a.verdict)
}

/// Verdicts for both quadratures; the block feeds key production only when
/// both accept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockVerdict {
    pub accepted: bool,
    pub x: GateVerdict,
    pub p: GateVerdict,
    /// `(shot_X - shot_P) / mean(shot_X, shot_P)`.
    pub shot_noise_relative_discrepancy: f64,
}

impl BlockVerdict {
    pub fn reject_reasons(&self) -> impl Iterator<Item = RejectReason> + '_ {
        self.x.reject_reasons.iter().chain(&self.p.reject_reasons).copied()
    }

    /// Larger of the two measured noise slopes.
    pub fn excess_noise_slope(&self) -> f64 {
        self.x.excess_noise_slope.max(self.p.excess_noise_slope)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockAnalysis {
    pub x: QuadratureAnalysis,
    pub p: QuadratureAnalysis,
    pub verdict: BlockVerdict,
}

pub fn analyze_block(ratios: &[f64], stats: &[GroupStats], thresholds: &Thresholds) -> Result<BlockAnalysis> {
    thresholds.validate()?;
    let split = |q: Quadrature| -> Vec<GroupStats> {
        stats.iter().filter(|g| g.quadrature == q).copied().collect()
    };
    let (xs, ps) = (split(Quadrature::X), split(Quadrature::P));
    for (q, v) in [(Quadrature::X, &xs), (Quadrature::P, &ps)] {
        if v.len() < 3 {
            return Err(Error::invalid(
                "stats",
                format!("quadrature {q} needs at least 3 groups, got {}", v.len()),
            ));
        }
    }
    let x = analyze_quadrature(ratios, &xs, thresholds)?;
    let p = analyze_quadrature(ratios, &ps, thresholds)?;
    let (sx, sp) = (x.verdict.shot_noise_estimate_v2, p.verdict.shot_noise_estimate_v2);
    let mean = 0.5 * (sx + sp);
    let verdict = BlockVerdict {
        accepted: x.verdict.accepted && p.verdict.accepted,
        shot_noise_relative_discrepancy: if mean > 0.0 { (sx - sp) / mean } else { 0.0 },
        x: x.verdict.clone(),
        p: p.verdict.clone(),
    };
    Ok(BlockAnalysis { x, p, verdict })
}

pub fn gate_block(ratios: &[f64], stats: &[GroupStats], thresholds: &Thresholds) -> Result<BlockVerdict> {
    analyze_block(ratios, stats, thresholds).map(|a| a.verdict)
}

/// Projection, fits and gate straight from simulated or re-read moments.
pub fn analyze_moments(block: &BlockMoments, thresholds: &Thresholds) -> Result<BlockAnalysis> {
    let stats = group_stats(block)?;
    analyze_block(&block.ratios, &stats, thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn noiseless_proportional_projection() {
        let alice = [1.0, -2.0, 0.5, 3.0, -1.5];
        let bob: Vec<f64> = alice.iter().map(|a| 2.0 * a).collect();
        let p = project_signal_noise(&alice, &bob).unwrap();
        let m = Moments::from_slices(&alice, &alice).unwrap();
        assert!(p.noise_var.abs() < 1e-15);
        assert!((p.signal_var - 4.0 * m.var_x()).abs() < 1e-12);
        assert!((p.correlation - 1.0).abs() < 1e-15);
    }

    #[test]
    fn projection_errors() {
        assert_eq!(project_signal_noise(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]), Err(Error::VarZero));
        assert!(matches!(project_signal_noise(&[1.0], &[1.0]), Err(Error::TooFewSamples { .. })));
        assert!(matches!(
            project_signal_noise(&[1.0, 2.0], &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert_eq!(project_moments(&Moments::from_slices(&[2.0; 3], &[1.0, 0.0, 1.0]).unwrap()), Err(Error::VarZero));
    }

    #[test]
    fn exact_line_fit() {
        let xs = [0.0, 1.0, 2.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let f = fit_affine(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept - 1.0).abs() < 1e-14);
        assert_eq!(f.r_squared, 1.0);
        assert!(f.max_abs_residual < 1e-14);
    }

    #[test]
    fn degenerate_fits() {
        assert!(matches!(fit_affine(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]), Err(Error::FitDegenerate(_))));
        assert!(matches!(fit_affine(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::FitDegenerate(_))));
        let flat = fit_affine(&[1.0, 2.0, 3.0], &[5.0; 3]).unwrap();
        assert_eq!(flat.r_squared, 1.0);
        assert_eq!(flat.slope, 0.0);
    }

    fn volts(q: Quadrature, i: usize, s: f64, n_var: f64) -> GroupStats {
        GroupStats {
            atten_index: i,
            quadrature: q,
            n: 1000,
            s,
            n_var,
            unit: VarianceUnit::Volts2,
        }
    }

    #[test]
    fn snu_normalization() {
        let stats = vec![
            volts(Quadrature::X, 0, 0.0, 783.16),
            volts(Quadrature::X, 1, 100.0, 783.4),
        ];
        let fit = LinearFit {
            slope: 2.4e-3,
            intercept: 783.16,
            r_squared: 1.0,
            residuals: vec![],
            max_abs_residual: 0.0,
        };
        let snu = normalize_to_snu(&stats, &fit).unwrap();
        assert_eq!(snu[0].n_var, 1.0);
        assert_eq!(snu[0].unit, VarianceUnit::Snu);
        let bad = LinearFit { intercept: 0.0, ..fit.clone() };
        assert_eq!(normalize_to_snu(&stats, &bad), Err(Error::ShotNonPositive(0.0)));
        assert!(normalize_to_snu(&snu, &fit).is_err());
        // X/P intercepts 783.16 vs 783.19 mV²
        let rel: f64 = (783.19 - 783.16) / 783.16;
        assert!((rel - 3.8306e-5).abs() < 1e-8);
    }

    #[test]
    fn estimator_sigma_values() {
        assert_eq!(estimator_sigma(2), 1.0);
        assert!((estimator_sigma(500_000_000) - 6.324555320336759e-5).abs() < 1e-18);
        assert!((3.5e-5 / estimator_sigma(500_000_000) - 0.5534).abs() < 1e-4);
    }

    #[test]
    fn thresholds_scale_with_group_size() {
        let t = Thresholds::default().scaled_for_group_size(1_000_000);
        assert!((t.residual_max_snu - 2e-4 * 500f64.sqrt()).abs() < 1e-15);
        assert_eq!(Thresholds::default().scaled_for_group_size(1_000_000_000), Thresholds::default());
    }

    fn line_stats(q: Quadrature, ratios: &[f64], bend: f64) -> Vec<GroupStats> {
        ratios
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let s = 10.0 * r - bend * r * r * 10.0;
                volts(q, i, s, 2.0 * (1.0 + 0.01 * s))
            })
            .collect()
    }

    #[test]
    fn gate_accepts_lines_and_flags_bent_attenuation_curve() {
        let ratios = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0];
        let ok = gate(&ratios, &line_stats(Quadrature::X, &ratios, 0.0), &Thresholds::default()).unwrap();
        assert!(ok.accepted, "{ok:?}");
        assert!((ok.shot_noise_estimate_v2 - 2.0).abs() < 1e-12);
        assert!((ok.excess_noise_slope - 0.02).abs() < 1e-12);

        let bent = gate(&ratios, &line_stats(Quadrature::X, &ratios, 0.9), &Thresholds::default()).unwrap();
        assert!(!bent.accepted);
        assert!(bent.reject_reasons.contains(&RejectReason::AttenFitR2));
        assert!(!bent.reject_reasons.contains(&RejectReason::NoiseFitR2));
    }

    #[test]
    fn gate_reports_residual_budget() {
        let ratios = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0];
        let mut st = line_stats(Quadrature::P, &ratios, 0.0);
        st[3].n_var += 2.0 * 1e-3;
        let v = gate(&ratios, &st, &Thresholds::default()).unwrap();
        assert_eq!(v.reject_reasons, vec![RejectReason::ResidualBudget]);
        assert!(v.r2_noise_signal > 0.99);
    }

    #[test]
    fn gate_turns_fit_errors_into_reasons() {
        let ratios = [0.1, 0.5, 1.0];
        let st: Vec<GroupStats> = (0..3).map(|i| volts(Quadrature::X, i, 1.0, 1.0)).collect();
        let v = gate(&ratios, &st, &Thresholds::default()).unwrap();
        assert!(v.reject_reasons.contains(&RejectReason::FitDegenerate));
        assert!(!v.accepted);

        let neg: Vec<GroupStats> = (0..3)
            .map(|i| volts(Quadrature::X, i, i as f64, -1.0 + i as f64))
            .collect();
        let v = gate(&ratios, &neg, &Thresholds::default()).unwrap();
        assert!(v.reject_reasons.contains(&RejectReason::ShotNonpositive));
    }

    #[test]
    fn block_needs_both_quadratures() {
        let ratios = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0];
        let mut all = line_stats(Quadrature::X, &ratios, 0.0);
        all.extend(line_stats(Quadrature::P, &ratios, 0.9));
        let b = gate_block(&ratios, &all, &Thresholds::default()).unwrap();
        assert!(b.x.accepted && !b.p.accepted && !b.accepted);
        assert!(gate_block(&ratios, &all[..6], &Thresholds::default()).is_err());
    }

    fn r2_residual_formula(xs: &[f64], ys: &[f64], f: &LinearFit) -> f64 {
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - f.predict(*x)).powi(2)).sum();
        1.0 - ss_res / ss_tot
    }

    proptest! {
        #[test]
        fn r2_matches_sum_of_squares_route(
            pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40)
        ) {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            if let Ok(f) = fit_affine(&xs, &ys) {
                let spread = ys.iter().cloned().fold(f64::MIN, f64::max) - ys.iter().cloned().fold(f64::MAX, f64::min);
                prop_assume!(spread > 1e-6);
                prop_assert!((f.r_squared - r2_residual_formula(&xs, &ys, &f)).abs() < 1e-12);
                for ((x, y), r) in xs.iter().zip(&ys).zip(&f.residuals) {
                    prop_assert!((y - f.predict(*x) - r).abs() <= 1e-12 * y.abs().max(1.0));
                }
                prop_assert!((0.0..=1.0).contains(&f.r_squared));
            }
        }

        #[test]
        fn projection_is_orthogonal(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..200),
            gain in -5.0f64..5.0,
        ) {
            let (alice, noise): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let bob: Vec<f64> = alice.iter().zip(&noise).map(|(a, n)| gain * a + n).collect();
            if let Ok(p) = project_signal_noise(&alice, &bob) {
                let total = Moments::from_slices(&bob, &bob).unwrap().var_x();
                prop_assert!((p.signal_var + p.noise_var - total).abs() <= 1e-10 * total.max(1e-12));
                let m = project_moments(&Moments::from_slices(&alice, &bob).unwrap()).unwrap();
                prop_assert!((m.signal_var - p.signal_var).abs() <= 1e-10 * total.max(1e-12));
                prop_assert!((m.noise_var - p.noise_var).abs() <= 1e-10 * total.max(1e-12));
            }
        }
    }
}
