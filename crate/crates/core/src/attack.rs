//! Attack models, applied where they act physically: intercept-resend on
//! the channel, wavelength injection at the detector input, saturation at
//! the detector output. [`AttackPipeline`] fixes that order.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::fit_affine;
use crate::params::SystemParams;
use crate::schedule::AttenuationSchedule;
use crate::sim::expected_curve;

/// Excess noise of a full intercept-resend on an unattenuated signal, SNU.
pub const INTERCEPT_RESEND_NOISE: f64 = 2.0;

/// Rail and offset used in the saturation scenarios, in shot-noise std.
pub const DEFAULT_SATURATION_LEVEL: f64 = 4.0;

/// Attack section of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackConfig {
    /// Eve intercepts a fraction `mu` of the pulses at the channel output.
    InterceptResend { mu: f64 },
    /// Detector output clipped to `±alpha` after Eve displaces the signal by
    /// `delta` (both in shot-noise standard deviations, offset referred to
    /// the detector at r = 1).
    Saturation {
        #[serde(rename = "alpha_shot_std")]
        alpha: f64,
        #[serde(rename = "delta_shot_std")]
        delta: f64,
    },
    /// Injected variance `c2 r² + c1 r + c0` (SNU) at the detector input.
    WavelengthInjection {
        #[serde(rename = "c0_snu")]
        c0: f64,
        #[serde(rename = "c1_snu")]
        c1: f64,
        #[serde(rename = "c2_snu")]
        c2: f64,
    },
    Composite { attacks: Vec<AttackConfig> },
}

impl AttackConfig {
    pub fn saturation_default() -> Self {
        AttackConfig::Saturation {
            alpha: DEFAULT_SATURATION_LEVEL,
            delta: DEFAULT_SATURATION_LEVEL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        AttackPipeline::from_config(Some(self)).map(|_| ())
    }
}

/// Degree-2 injected variance with its minimum at r = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthPoly {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl WavelengthPoly {
    pub const NULL: WavelengthPoly = WavelengthPoly {
        c0: 0.0,
        c1: 0.0,
        c2: 0.0,
    };

    pub fn new(c0: f64, c1: f64, c2: f64) -> Result<Self> {
        let p = WavelengthPoly { c0, c1, c2 };
        p.validate()?;
        Ok(p)
    }

    /// `c2 (1 - r)² + (c0 - c2)`, i.e. `c1 = -2 c2`.
    pub fn with_minimum_at_one(c0: f64, c2: f64) -> Result<Self> {
        Self::new(c0, -2.0 * c2, c2)
    }

    /// Coefficients whose linear term cancels the excess noise `2 mu eta r`
    /// of an intercept-resend attack, with zero injection on the key group.
    pub fn cancel_intercept_resend(mu: f64, eta: f64) -> Result<Self> {
        let c2 = mu * eta * INTERCEPT_RESEND_NOISE / 2.0;
        Self::with_minimum_at_one(c2, c2)
    }

    pub fn is_null(&self) -> bool {
        *self == Self::NULL
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_null() {
            return Ok(());
        }
        if ![self.c0, self.c1, self.c2].iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("wavelength", "coefficients must be finite"));
        }
        if self.c2 <= 0.0 {
            return Err(Error::invalid("wavelength.c2_snu", "must be > 0"));
        }
        if (self.c1 + 2.0 * self.c2).abs() > 1e-12 * self.c2 {
            return Err(Error::invalid(
                "wavelength.c1_snu",
                format!("minimum must sit at r = 1 (c1 = -2 c2 = {})", -2.0 * self.c2),
            ));
        }
        if self.c0 < self.c2 {
            return Err(Error::invalid(
                "wavelength.c0_snu",
                "c0 >= c2 is required for a non-negative variance at r = 1",
            ));
        }
        Ok(())
    }

    pub fn variance_at(&self, r: f64) -> f64 {
        (self.c2 * r + self.c1) * r + self.c0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Saturation {
    pub alpha: f64,
    pub delta: f64,
}

/// Flattened attack set in the fixed application order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttackPipeline {
    pub intercept_resend: Option<f64>,
    pub wavelength: Option<WavelengthPoly>,
    pub saturation: Option<Saturation>,
}

impl AttackPipeline {
    pub fn honest() -> Self {
        Self::default()
    }

    pub fn from_config(config: Option<&AttackConfig>) -> Result<Self> {
        let mut pipeline = AttackPipeline::default();
        if let Some(c) = config {
            pipeline.add(c)?;
        }
        Ok(pipeline)
    }

    fn add(&mut self, config: &AttackConfig) -> Result<()> {
        match *config {
            AttackConfig::InterceptResend { mu } => {
                if !(0.0..=1.0).contains(&mu) {
                    return Err(Error::invalid("attack.mu", format!("must lie in [0, 1], got {mu}")));
                }
                set_once(&mut self.intercept_resend, mu, "intercept_resend")
            }
            AttackConfig::Saturation { alpha, delta } => {
                if !(alpha > 0.0) {
                    return Err(Error::invalid("attack.alpha_shot_std", "must be > 0"));
                }
                if !delta.is_finite() {
                    return Err(Error::invalid("attack.delta_shot_std", "must be finite"));
                }
                set_once(&mut self.saturation, Saturation { alpha, delta }, "saturation")
            }
            AttackConfig::WavelengthInjection { c0, c1, c2 } => {
                let poly = WavelengthPoly::new(c0, c1, c2)?;
                set_once(&mut self.wavelength, poly, "wavelength_injection")
            }
            AttackConfig::Composite { ref attacks } => {
                for a in attacks {
                    self.add(a)?;
                }
                Ok(())
            }
        }
    }

    pub fn is_honest(&self) -> bool {
        self.intercept_resend.is_none_or(|mu| mu == 0.0)
            && self.wavelength.is_none_or(|w| w.is_null())
            && self.saturation.is_none()
    }
}

fn set_once<T>(slot: &mut Option<T>, value: T, name: &str) -> Result<()> {
    if slot.is_some() {
        return Err(Error::invalid("attack", format!("{name} listed more than once")));
    }
    *slot = Some(value);
    Ok(())
}

/// With probability `mu` adds the 2 SNU intercept-resend noise to a channel
/// output amplitude.
#[inline]
pub fn apply_intercept_resend<R: Rng + ?Sized>(mu: f64, channel_output: f64, rng: &mut R) -> f64 {
    if mu <= 0.0 {
        return channel_output;
    }
    let hit = mu >= 1.0 || rng.random::<f64>() < mu;
    let e: f64 = rng.sample(StandardNormal);
    if hit {
        channel_output + INTERCEPT_RESEND_NOISE.sqrt() * e
    } else {
        channel_output
    }
}

/// `clip(x + delta, -alpha, alpha)` in shot-noise std coordinates.
#[inline]
pub fn apply_saturation(alpha: f64, delta: f64, detector_output_snu: f64) -> f64 {
    (detector_output_snu + delta).clamp(-alpha, alpha)
}

/// Injected amplitude `±sqrt(v_wl(r))` with a random sign, so a group gains
/// exactly `v_wl(r)` of variance and no mean shift.
#[inline]
pub fn apply_wavelength_injection<R: Rng + ?Sized>(poly: &WavelengthPoly, r: f64, rng: &mut R) -> f64 {
    let v = poly.variance_at(r);
    if v <= 0.0 {
        return 0.0;
    }
    let a = v.sqrt();
    if rng.random::<bool>() {
        a
    } else {
        -a
    }
}

/// Result of [`max_hidden_slope`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HiddenSlope {
    /// Reduction of the noise-vs-signal slope, SNU per SNU.
    pub hidden_slope: f64,
    pub poly: WavelengthPoly,
    /// Largest fit residual the injection causes, in gate SNU.
    pub max_residual_snu: f64,
}

impl HiddenSlope {
    fn none() -> Self {
        HiddenSlope {
            hidden_slope: 0.0,
            poly: WavelengthPoly::NULL,
            max_residual_snu: 0.0,
        }
    }
}

/// Largest slope reduction a wavelength injection can achieve on the
/// expected curve of `params` while every noise-fit residual stays within
/// `residual_budget` SNU.
///
/// The constant part `c0 - c2` only shifts the intercept, and left free it
/// would loosen the SNU budget without bound, so it is held at zero and the
/// search runs over the curvature `c2`.
pub fn max_hidden_slope(
    params: &SystemParams,
    schedule: &AttenuationSchedule,
    residual_budget: f64,
) -> Result<HiddenSlope> {
    if !(residual_budget >= 0.0) {
        return Err(Error::invalid("residual_budget", "must be >= 0"));
    }
    let base = curve_fit(params, schedule, None)?;
    if residual_budget == 0.0 {
        return Ok(HiddenSlope::none());
    }
    let eval = |c2: f64| -> Result<HiddenSlope> {
        let poly = WavelengthPoly::with_minimum_at_one(c2, c2)?;
        let fit = curve_fit(params, schedule, Some(poly))?;
        Ok(HiddenSlope {
            hidden_slope: base.0 - fit.0,
            poly,
            max_residual_snu: fit.1,
        })
    };

    let mut lo = 0.0;
    let mut hi = 1e-9;
    loop {
        if eval(hi)?.max_residual_snu > residual_budget {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::FitDegenerate(
                "injection never violates the residual budget".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)?.max_residual_snu <= residual_budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    if lo == 0.0 {
        return Ok(HiddenSlope::none());
    }
    eval(lo)
}

/// `(slope, max |residual| / intercept)` of the expected noise-vs-signal
/// curve, optionally with a wavelength injection.
fn curve_fit(
    params: &SystemParams,
    schedule: &AttenuationSchedule,
    poly: Option<WavelengthPoly>,
) -> Result<(f64, f64)> {
    let pipeline = AttackPipeline {
        wavelength: poly,
        ..AttackPipeline::default()
    };
    let points = expected_curve(params, schedule, &pipeline)?;
    let xs: Vec<f64> = points.iter().map(|p| p.signal).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.noise).collect();
    let fit = fit_affine(&xs, &ys)?;
    if fit.intercept <= 0.0 {
        return Err(Error::ShotNonPositive(fit.intercept));
    }
    Ok((fit.slope, fit.max_abs_residual / fit.intercept))
}
