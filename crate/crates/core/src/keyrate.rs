//! Excess-noise referral and the asymptotic collective key rate of GG02
//! with homodyne detection, reverse reconciliation and trusted detector
//! noise (inefficiency `eta` and electronic noise `v_el` are not given to
//! the eavesdropper).
//!
//! Variances are in shot-noise units. `V = V_A + 1` is the variance of
//! Alice's EPR mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LOSS_DB_PER_KM: f64 = 0.2;
pub const DEFAULT_SLOPE_MARGIN: f64 = 1e-3;

/// Slack allowed below 1 on a symplectic eigenvalue before the state is
/// declared unphysical.
const EIGEN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    pub length_km: f64,
    #[serde(default = "default_loss")]
    pub loss_db_per_km: f64,
    pub eta: f64,
    pub v_el: f64,
    pub beta: f64,
    pub snr_target: f64,
    #[serde(default = "default_margin")]
    pub slope_margin: f64,
}

fn default_loss() -> f64 {
    DEFAULT_LOSS_DB_PER_KM
}

fn default_margin() -> f64 {
    DEFAULT_SLOPE_MARGIN
}

impl LinkParams {
    /// 80.5 km, eta 0.322, 1% electronic noise, beta 0.948, SNR 0.075.
    pub fn reference_80km() -> Self {
        LinkParams {
            length_km: 80.5,
            loss_db_per_km: DEFAULT_LOSS_DB_PER_KM,
            eta: 0.322,
            v_el: 0.01,
            beta: 0.948,
            snr_target: 0.075,
            slope_margin: DEFAULT_SLOPE_MARGIN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("length_km", self.length_km),
            ("loss_db_per_km", self.loss_db_per_km),
            ("v_el", self.v_el),
            ("snr_target", self.snr_target),
            ("slope_margin", self.slope_margin),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::invalid("eta", format!("must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.beta >= 0.0 && self.beta <= 1.0) {
            return Err(Error::invalid("beta", format!("must lie in [0, 1], got {}", self.beta)));
        }
        Ok(())
    }

    pub fn transmittance(&self) -> f64 {
        transmittance_for_length(self.length_km, self.loss_db_per_km)
    }
}

pub fn transmittance_for_length(length_km: f64, loss_db_per_km: f64) -> f64 {
    10f64.powf(-loss_db_per_km * length_km / 10.0)
}

/// `xi_bob * 10^(0.02 L) / eta`: undoes 0.2 dB/km of fiber and the
/// detection efficiency.
pub fn refer_excess_noise_to_alice(xi_bob: f64, length_km: f64, eta: f64) -> f64 {
    xi_bob / (transmittance_for_length(length_km, DEFAULT_LOSS_DB_PER_KM) * eta)
}

/// Excess noise at Bob bounded by the measured slope plus an allowance for
/// what a wavelength injection could hide.
pub fn conservative_xi_bob(measured_slope: f64, slope_margin: f64, signal_var_bob: f64) -> f64 {
    (measured_slope + slope_margin) * signal_var_bob
}

/// Solves `snr = T eta V_A / (1 + v_el)` for `V_A`.
pub fn modulation_for_snr(snr_target: f64, t_channel: f64, eta: f64, v_el: f64) -> f64 {
    snr_target * (1.0 + v_el) / (t_channel * eta)
}

/// Noise terms of the channel and detector, referred to the channel input.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Noise {
    line: f64,
    hom: f64,
    tot: f64,
}

fn noise(t: f64, eta: f64, v_el: f64, xi: f64) -> Noise {
    let line = 1.0 / t - 1.0 + xi;
    let hom = (1.0 - eta) / eta + v_el / eta;
    Noise {
        line,
        hom,
        tot: line + hom / t,
    }
}

fn check_inputs(v_a: f64, t: f64, eta: f64, v_el: f64, xi: f64) -> Result<()> {
    let ok = v_a.is_finite()
        && v_a > 0.0
        && t > 0.0
        && t <= 1.0
        && eta > 0.0
        && eta <= 1.0
        && v_el.is_finite()
        && v_el >= 0.0
        && xi.is_finite()
        && xi >= 0.0;
    if ok {
        Ok(())
    } else {
        Err(Error::UnphysicalState(format!(
            "need V_A > 0, T and eta in (0, 1], v_el, xi >= 0; got V_A={v_a}, T={t}, eta={eta}, v_el={v_el}, xi={xi}"
        )))
    }
}

/// Alice-Bob mutual information from the signal-to-noise ratio,
/// `1/2 log2(1 + V_A / (1 + chi_tot))`.
pub fn mutual_information(v_a: f64, t: f64, eta: f64, v_el: f64, xi: f64) -> Result<f64> {
    check_inputs(v_a, t, eta, v_el, xi)?;
    let n = noise(t, eta, v_el, xi);
    Ok(0.5 * (1.0 + v_a / (1.0 + n.tot)).log2())
}

/// Same quantity from the covariance matrix: Bob's variance `b`, Alice's
/// `a = V` and their correlation `c`, with `I = 1/2 log2(b / (b - c²/(a+1)))`.
pub fn mutual_information_cm(v_a: f64, t: f64, eta: f64, v_el: f64, xi: f64) -> Result<f64> {
    check_inputs(v_a, t, eta, v_el, xi)?;
    let n = noise(t, eta, v_el, xi);
    let v = v_a + 1.0;
    let a = v;
    let b = t * eta * (v + n.tot);
    let c2 = t * eta * (v * v - 1.0);
    let cond = b - c2 / (a + 1.0);
    if !(cond > 0.0) {
        return Err(Error::UnphysicalState(format!("conditional variance {cond} <= 0")));
    }
    Ok(0.5 * (b / cond).log2())
}

/// Von Neumann entropy of a thermal mode with mean photon number `x`.
fn g(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (x + 1.0) * (x + 1.0).log2() - x * x.log2()
    }
}

fn eigen_pair(sum: f64, product: f64, what: &str) -> Result<[f64; 2]> {
    let disc = sum * sum - 4.0 * product;
    if !(disc >= -EIGEN_TOL * sum * sum) {
        return Err(Error::UnphysicalState(format!("{what}: negative discriminant {disc}")));
    }
    let root = disc.max(0.0).sqrt();
    let mut out = [0.0; 2];
    for (o, sq) in out.iter_mut().zip([0.5 * (sum + root), 0.5 * (sum - root)]) {
        let l = sq.max(0.0).sqrt();
        if !(l >= 1.0 - EIGEN_TOL) {
            return Err(Error::UnphysicalState(format!("{what}: symplectic eigenvalue {l} < 1")));
        }
        *o = l.max(1.0);
    }
    Ok(out)
}

/// Holevo bound on Eve's information about Bob's data (entangling cloner,
/// reverse reconciliation, trusted detector).
pub fn holevo_chi_be(v_a: f64, t: f64, eta: f64, v_el: f64, xi: f64) -> Result<f64> {
    check_inputs(v_a, t, eta, v_el, xi)?;
    let n = noise(t, eta, v_el, xi);
    let v = v_a + 1.0;
    let a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + n.line).powi(2);
    let b = t * t * (v * n.line + 1.0).powi(2);
    let [l1, l2] = eigen_pair(a, b, "Eve's state")?;
    let sb = b.sqrt();
    let denom = t * (v + n.tot);
    let c = (v * sb + t * (v + n.line) + a * n.hom) / denom;
    let d = sb * (v + sb * n.hom) / denom;
    let [l3, l4] = eigen_pair(c, d, "Eve's state conditioned on Bob")?;
    let h = |l: f64| g((l - 1.0) / 2.0);
    let chi = h(l1) + h(l2) - h(l3) - h(l4);
    if !chi.is_finite() {
        return Err(Error::UnphysicalState(format!("non-finite Holevo bound {chi}")));
    }
    Ok(chi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRate {
    pub i_ab: f64,
    pub chi_be: f64,
    /// `max(0, beta I_AB - chi_BE)`, bits per symbol.
    pub rate: f64,
}

pub fn key_rate_terms(v_a: f64, t: f64, eta: f64, v_el: f64, xi_alice: f64, beta: f64) -> Result<KeyRate> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid("beta", format!("must lie in [0, 1], got {beta}")));
    }
    let i_ab = mutual_information(v_a, t, eta, v_el, xi_alice)?;
    let chi_be = holevo_chi_be(v_a, t, eta, v_el, xi_alice)?;
    Ok(KeyRate {
        i_ab,
        chi_be,
        rate: (beta * i_ab - chi_be).max(0.0),
    })
}

/// Asymptotic collective key rate in bits per symbol.
pub fn collective_key_rate(v_a: f64, t: f64, eta: f64, v_el: f64, xi_alice: f64, beta: f64) -> Result<f64> {
    key_rate_terms(v_a, t, eta, v_el, xi_alice, beta).map(|k| k.rate)
}

/// Every intermediate of the conservative estimate, for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateSummary {
    pub link: LinkParams,
    pub measured_slope: f64,
    pub signal_var_bob_snu: f64,
    pub t_channel: f64,
    pub v_a_snu: f64,
    pub xi_bob_snu: f64,
    pub xi_alice_snu: f64,
    pub i_ab: f64,
    pub chi_be: f64,
    pub rate_bits_per_symbol: f64,
}

/// Refers a measured noise slope to Alice and evaluates the rate at the
/// modulation that gives `link.snr_target`.
pub fn evaluate(link: &LinkParams, measured_slope: f64, signal_var_bob: f64) -> Result<KeyRateSummary> {
    link.validate()?;
    if !(measured_slope.is_finite() && measured_slope >= 0.0) {
        return Err(Error::invalid("measured_slope", format!("must be >= 0, got {measured_slope}")));
    }
    if !(signal_var_bob.is_finite() && signal_var_bob >= 0.0) {
        return Err(Error::invalid("signal_var_bob", format!("must be >= 0, got {signal_var_bob}")));
    }
    let t = link.transmittance();
    let v_a = modulation_for_snr(link.snr_target, t, link.eta, link.v_el);
    let xi_bob = conservative_xi_bob(measured_slope, link.slope_margin, signal_var_bob);
    let xi_alice = xi_bob / (t * link.eta);
    let k = key_rate_terms(v_a, t, link.eta, link.v_el, xi_alice, link.beta)?;
    Ok(KeyRateSummary {
        link: *link,
        measured_slope,
        signal_var_bob_snu: signal_var_bob,
        t_channel: t,
        v_a_snu: v_a,
        xi_bob_snu: xi_bob,
        xi_alice_snu: xi_alice,
        i_ab: k.i_ab,
        chi_be: k.chi_be,
        rate_bits_per_symbol: k.rate,
    })
}
