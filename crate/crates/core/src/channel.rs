//! Link-level rate model: Shannon rate of the legitimate link, eavesdropper
//! rate on the same band, secrecy rate, and the concave surrogate obtained by
//! linearizing the eavesdropper rate in bandwidth about an anchor point.
//!
//! All arithmetic is in linear SI units (W, Hz, bit/s). The dB/dBm helpers at
//! the bottom of this module are the only unit-conversion boundary.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest bandwidth (Hz) accepted by the rate functions.
pub const B_FLOOR: f64 = 1.0;

/// Constants of one legitimate link and its paired eavesdropper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Linear channel power gain of the legitimate link.
    pub h: f64,
    /// Noise power spectral density at the user (W/Hz).
    pub noise_var: f64,
    /// Eavesdropper-link transmit power (W).
    pub eve_p: f64,
    /// Eavesdropper channel gain.
    pub eve_h: f64,
    /// Eavesdropper noise power spectral density (W/Hz).
    pub eve_noise_var: f64,
}

impl LinkParams {
    pub fn new(h: f64, noise_var: f64, eve_p: f64, eve_h: f64, eve_noise_var: f64) -> Result<Self> {
        let link = Self {
            h,
            noise_var,
            eve_p,
            eve_h,
            eve_noise_var,
        };
        link.validate()?;
        Ok(link)
    }

    /// Checks the field invariants. `eve_p = 0` is accepted so that a link
    /// without an eavesdropper can be expressed.
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("h", self.h),
            ("noise_var", self.noise_var),
            ("eve_h", self.eve_h),
            ("eve_noise_var", self.eve_noise_var),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(what, v, "must be positive and finite"));
            }
        }
        if !(self.eve_p >= 0.0 && self.eve_p.is_finite()) {
            return Err(Error::domain("eve_p", self.eve_p, "must be non-negative"));
        }
        Ok(())
    }

    /// Received SNR per unit bandwidth per watt, h / σ².
    #[inline]
    pub fn snr_per_watt_hz(&self) -> f64 {
        self.h / self.noise_var
    }

    /// Eavesdropper SNR-bandwidth product p_e·h_e / σ_e² (Hz).
    #[inline]
    pub fn eve_snr_hz(&self) -> f64 {
        self.eve_p * self.eve_h / self.eve_noise_var
    }

    /// Smallest transmit power for which the legitimate link is never worse
    /// than the eavesdropper on any bandwidth.
    pub fn secrecy_power_threshold(&self) -> f64 {
        self.noise_var * self.eve_h * self.eve_p / (self.eve_noise_var * self.h)
    }
}

/// Bandwidth about which the eavesdropper rate is linearized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaAnchor {
    pub b_anchor: f64,
}

impl ScaAnchor {
    pub fn new(b_anchor: f64) -> Result<Self> {
        if !(b_anchor > 0.0 && b_anchor.is_finite()) {
            return Err(Error::domain("b_anchor", b_anchor, "must be positive"));
        }
        Ok(Self { b_anchor })
    }
}

// B·log2(1 + c/B) and its B-derivative log2(1+x) − x/(ln2·(1+x)), x = c/B.

#[inline]
pub(crate) fn shannon(c: f64, b: f64) -> f64 {
    b * (c / b).ln_1p() / LN_2
}

#[inline]
pub(crate) fn shannon_db(c: f64, b: f64) -> f64 {
    let x = c / b;
    if x < 1e-3 {
        // ln(1+x) − x/(1+x) = Σ_{k≥2} (−1)^k (k−1)/k · x^k
        let x2 = x * x;
        x2 * (0.5 - x * (2.0 / 3.0 - x * (0.75 - x * (0.8 - x * (5.0 / 6.0))))) / LN_2
    } else {
        (x.ln_1p() - x / (1.0 + x)) / LN_2
    }
}

fn check_bandwidth(b: f64) -> Result<()> {
    if !(b >= B_FLOOR && b.is_finite()) {
        return Err(Error::domain("B", b, "bandwidth must be at least the 1 Hz floor"));
    }
    Ok(())
}

fn check_power(p: f64) -> Result<()> {
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::domain("p", p, "power must be non-negative"));
    }
    Ok(())
}

/// Shannon rate of the legitimate link, `B·log2(1 + p·h/(σ²·B))`.
pub fn rate(p: f64, b: f64, link: &LinkParams) -> Result<f64> {
    check_power(p)?;
    check_bandwidth(b)?;
    Ok(shannon(p * link.snr_per_watt_hz(), b))
}

/// Rate the eavesdropper achieves on the same band.
pub fn eavesdrop_rate(b: f64, link: &LinkParams) -> Result<f64> {
    check_bandwidth(b)?;
    Ok(shannon(link.eve_snr_hz(), b))
}

/// Secrecy rate `rate − eavesdrop_rate`. Requires `p` to meet the secrecy
/// power threshold so that the result is non-negative.
pub fn secrecy_rate(p: f64, b: f64, link: &LinkParams) -> Result<f64> {
    let threshold = link.secrecy_power_threshold();
    if p < threshold {
        return Err(Error::SecrecyPrecondition {
            user: 0,
            p_min: p,
            threshold,
        });
    }
    Ok(rate(p, b, link)? - eavesdrop_rate(b, link)?)
}

/// Concave lower bound of the secrecy rate: the eavesdropper rate is replaced
/// by its tangent at `anchor`, which over-estimates it because it is concave.
pub fn surrogate_rate(p: f64, b: f64, link: &LinkParams, anchor: ScaAnchor) -> Result<f64> {
    check_power(p)?;
    check_bandwidth(b)?;
    check_bandwidth(anchor.b_anchor)?;
    Ok(surrogate_unchecked(p, b, link, anchor.b_anchor))
}

#[inline]
pub(crate) fn surrogate_unchecked(p: f64, b: f64, link: &LinkParams, b_anchor: f64) -> f64 {
    let e = link.eve_snr_hz();
    shannon(p * link.snr_per_watt_hz(), b)
        - shannon(e, b_anchor)
        - shannon_db(e, b_anchor) * (b - b_anchor)
}

/// ∂rate/∂p in bit/s per W.
pub fn d_rate_dp(p: f64, b: f64, link: &LinkParams) -> Result<f64> {
    check_power(p)?;
    check_bandwidth(b)?;
    Ok(d_rate_dp_unchecked(p, b, link))
}

#[inline]
pub(crate) fn d_rate_dp_unchecked(p: f64, b: f64, link: &LinkParams) -> f64 {
    let a = link.snr_per_watt_hz();
    a / (LN_2 * (1.0 + a * p / b))
}

/// ∂rate/∂B in bit/s per Hz.
#[allow(non_snake_case)]
pub fn d_rate_dB(p: f64, b: f64, link: &LinkParams) -> Result<f64> {
    check_power(p)?;
    check_bandwidth(b)?;
    Ok(shannon_db(p * link.snr_per_watt_hz(), b))
}

/// ∂eavesdrop_rate/∂B in bit/s per Hz.
#[allow(non_snake_case)]
pub fn d_eavesdrop_dB(b: f64, link: &LinkParams) -> Result<f64> {
    check_bandwidth(b)?;
    Ok(shannon_db(link.eve_snr_hz(), b))
}

/// Surrogate rate together with its partials in `p` and `B`. This is the hot
/// path of the inner solver and skips argument validation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SurrogateEval {
    pub value: f64,
    pub d_p: f64,
    pub d_b: f64,
}

/// Precomputed anchor terms for one user's surrogate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Surrogate {
    snr_per_watt_hz: f64,
    /// r_e(B_a) − r_e'(B_a)·B_a, the intercept of the tangent line.
    intercept: f64,
    /// r_e'(B_a)
    slope: f64,
}

impl Surrogate {
    pub fn new(link: &LinkParams, b_anchor: f64) -> Self {
        let e = link.eve_snr_hz();
        let slope = shannon_db(e, b_anchor);
        Self {
            snr_per_watt_hz: link.snr_per_watt_hz(),
            intercept: shannon(e, b_anchor) - slope * b_anchor,
            slope,
        }
    }

    #[inline]
    pub fn eval(&self, p: f64, b: f64) -> SurrogateEval {
        let c = p * self.snr_per_watt_hz;
        let x = c / b;
        SurrogateEval {
            value: b * x.ln_1p() / LN_2 - self.intercept - self.slope * b,
            d_p: self.snr_per_watt_hz / (LN_2 * (1.0 + x)),
            d_b: shannon_db(c, b) - self.slope,
        }
    }
}

// ---------------------------------------------------------------------------
// Unit conversions

/// Distance-dependent path loss `128.1 + 37.6·log10(d)` in dB, `d` in km.
pub fn path_loss_db(distance_km: f64) -> Result<f64> {
    if !(distance_km > 0.0 && distance_km.is_finite()) {
        return Err(Error::domain("distance_km", distance_km, "must be positive"));
    }
    Ok(128.1 + 37.6 * distance_km.log10())
}

/// Linear power gain for a total attenuation of `loss_db + shadow_db`.
pub fn gain_from_loss(loss_db: f64, shadow_db: f64) -> f64 {
    10f64.powf(-(loss_db + shadow_db) / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

/// Noise power spectral density: dBm/Hz to W/Hz.
pub fn noise_psd_watts_per_hz(dbm_per_hz: f64) -> f64 {
    dbm_to_watts(dbm_per_hz)
}
