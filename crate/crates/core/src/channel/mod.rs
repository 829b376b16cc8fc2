//! Stochastic wireless uplink model.
//!
//! A single upload attempt takes `L = S / (B log2(1 + SNR))` seconds, where the
//! SNR is set by the compound channel gain (log-distance path loss, lognormal
//! shadowing and Nakagami-m power fading) against thermal noise `k_B T B`.
//! Failed attempts are retried; the attempt count is geometric on `{1, 2, ..}`
//! with success probability `1 - PER`, so the total airtime is `L * attempts`.

mod pmf;

pub use pmf::{expected_responses, response_pmf_heterogeneous, response_pmf_homogeneous, ResponsePmf};

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Boltzmann constant in J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("rate underflows to zero (SNR {snr:e}); latency is unbounded")]
    DegenerateSnr { snr: f64 },
    #[error("probability {value} at index {index} is outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
}

/// Static distribution parameters of one directed wireless link.
///
/// The three random gain factors can be switched off individually; a disabled
/// factor contributes exactly 1 to the gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub bandwidth_hz: f64,
    pub transmit_power_w: f64,
    pub packet_bits: u64,
    pub per: f64,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    pub shadowing_sigma_db: f64,
    pub fading_m: f64,
    pub antenna_gain: f64,
    pub noise_temp_k: f64,
    pub distance_m: f64,
    pub path_loss: bool,
    pub shadowing: bool,
    pub fading: bool,
}

impl Default for ChannelParams {
    /// Experiment defaults: 10 MHz, 720 mW, 1 kbit packets, PER 1e-4, unit
    /// gain (client at the reference distance, no shadowing, no fading).
    fn default() -> Self {
        Self {
            bandwidth_hz: 1.0e7,
            transmit_power_w: 0.72,
            packet_bits: 1000,
            per: 1.0e-4,
            path_loss_exponent: 2.0,
            reference_distance_m: 1.0,
            shadowing_sigma_db: 0.0,
            fading_m: 1.0,
            antenna_gain: 1.0,
            noise_temp_k: 290.0,
            distance_m: 1.0,
            path_loss: true,
            shadowing: false,
            fading: false,
        }
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), ChannelError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ChannelError::InvalidParam { field, reason: format!("must be a positive finite number, got {v}") })
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("transmit_power_w", self.transmit_power_w)?;
        positive("reference_distance_m", self.reference_distance_m)?;
        positive("fading_m", self.fading_m)?;
        positive("antenna_gain", self.antenna_gain)?;
        positive("noise_temp_k", self.noise_temp_k)?;
        positive("distance_m", self.distance_m)?;
        if self.packet_bits == 0 {
            return Err(ChannelError::InvalidParam { field: "packet_bits", reason: "must be at least 1".into() });
        }
        if !(0.0..1.0).contains(&self.per) {
            return Err(ChannelError::InvalidParam {
                field: "per",
                reason: format!("must lie in [0, 1), got {}", self.per),
            });
        }
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent >= 2.0) {
            return Err(ChannelError::InvalidParam {
                field: "path_loss_exponent",
                reason: format!("must be >= 2, got {}", self.path_loss_exponent),
            });
        }
        if !(self.shadowing_sigma_db.is_finite() && self.shadowing_sigma_db >= 0.0) {
            return Err(ChannelError::InvalidParam {
                field: "shadowing_sigma_db",
                reason: format!("must be >= 0, got {}", self.shadowing_sigma_db),
            });
        }
        Ok(())
    }

    /// A channel with unit gain and no randomness in the gain whose single
    /// attempt latency is exactly `latency_s` (SNR = 1, so `L = S / B`).
    pub fn deterministic_with_latency(latency_s: f64, per: f64) -> Self {
        let packet_bits = 1000;
        let bandwidth_hz = packet_bits as f64 / latency_s;
        let noise_temp_k = 290.0;
        Self {
            bandwidth_hz,
            transmit_power_w: BOLTZMANN * noise_temp_k * bandwidth_hz,
            packet_bits,
            per,
            noise_temp_k,
            path_loss: false,
            shadowing: false,
            fading: false,
            ..Self::default()
        }
    }

    /// True when the gain has no random component.
    pub fn is_deterministic_gain(&self) -> bool {
        !(self.shadowing && self.shadowing_sigma_db > 0.0) && !self.fading
    }

    /// Deterministic part of the gain: antenna gain times log-distance path
    /// loss, with the distance clamped to the reference distance.
    pub fn mean_path_gain(&self) -> f64 {
        let path = if self.path_loss {
            let d = self.distance_m.max(self.reference_distance_m);
            (self.reference_distance_m / d).powf(self.path_loss_exponent)
        } else {
            1.0
        };
        self.antenna_gain * path
    }

    pub fn noise_power_w(&self) -> f64 {
        BOLTZMANN * self.noise_temp_k * self.bandwidth_hz
    }
}

/// One stochastic draw of an uplink transmission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSample {
    pub gain: f64,
    pub single_latency_s: f64,
    pub retransmissions: u32,
    pub total_time_s: f64,
}

impl LinkSample {
    pub fn new(gain: f64, single_latency_s: f64, retransmissions: u32) -> Self {
        Self { gain, single_latency_s, retransmissions, total_time_s: single_latency_s * f64::from(retransmissions) }
    }
}

/// Draw the compound channel power gain.
pub fn sample_gain<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> f64 {
    let mut gain = params.mean_path_gain();
    if params.shadowing && params.shadowing_sigma_db > 0.0 {
        let x_db = Normal::new(0.0, params.shadowing_sigma_db).expect("validated sigma").sample(rng);
        gain *= 10f64.powf(x_db / 10.0);
    }
    if params.fading {
        let m = params.fading_m;
        let h: f64 = Gamma::new(m, 1.0 / m).expect("validated shape").sample(rng);
        // Gamma can return exactly 0 for tiny shapes; keep the gain positive.
        gain *= h.max(f64::MIN_POSITIVE);
    }
    gain
}

/// Single-attempt latency in seconds for a given power gain.
pub fn shannon_latency(params: &ChannelParams, gain: f64) -> Result<f64, ChannelError> {
    let snr = params.transmit_power_w * gain / params.noise_power_w();
    let spectral = (1.0 + snr).log2();
    let rate = params.bandwidth_hz * spectral;
    if rate.is_nan() || rate <= 0.0 || !rate.is_finite() {
        return Err(ChannelError::DegenerateSnr { snr });
    }
    let latency = params.packet_bits as f64 / rate;
    if !latency.is_finite() {
        return Err(ChannelError::DegenerateSnr { snr });
    }
    Ok(latency)
}

/// Attempt count until the first success: geometric on `{1, 2, ..}` with
/// success probability `1 - per`.
///
/// Sampled by inversion, so for a fixed uniform draw the count is
/// non-decreasing in `per`.
pub fn sample_retransmissions<R: Rng + ?Sized>(per: f64, rng: &mut R) -> u32 {
    let u: f64 = rng.random();
    retransmissions_from_uniform(per, u)
}

fn retransmissions_from_uniform(per: f64, u: f64) -> u32 {
    if per <= 0.0 {
        return 1;
    }
    // 1 - u lies in (0, 1]; P(count > k) = per^k.
    let tail = 1.0 - u;
    let k = (tail.ln() / per.ln()).floor();
    if k >= f64::from(u32::MAX - 1) {
        u32::MAX
    } else {
        1 + k as u32
    }
}

/// Draw one complete uplink transmission.
pub fn sample_link<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> Result<LinkSample, ChannelError> {
    let gain = sample_gain(params, rng);
    let latency = shannon_latency(params, gain)?;
    let attempts = sample_retransmissions(params.per, rng);
    Ok(LinkSample::new(gain, latency, attempts))
}

/// `P{attempts * latency > window}` for a fixed single-attempt latency.
pub fn loss_prob_given_latency(latency_s: f64, per: f64, window_s: f64) -> f64 {
    // Largest attempt count that still fits, computed with the same product the
    // sampler compares against the window.
    let mut fits = (window_s / latency_s).floor().max(0.0);
    while fits > 0.0 && latency_s * fits > window_s {
        fits -= 1.0;
    }
    while latency_s * (fits + 1.0) <= window_s {
        fits += 1.0;
    }
    if fits < 1.0 {
        1.0
    } else if per <= 0.0 {
        0.0
    } else {
        per.powf(fits)
    }
}

/// Probability that the total airtime exceeds the time window.
///
/// Exact when the gain is deterministic; otherwise a Monte-Carlo estimate
/// over `n_samples` draws.
pub fn packet_loss_prob<R: Rng + ?Sized>(
    params: &ChannelParams,
    window_s: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64, ChannelError> {
    if params.is_deterministic_gain() {
        let latency = shannon_latency(params, params.mean_path_gain())?;
        return Ok(loss_prob_given_latency(latency, params.per, window_s));
    }
    let n = n_samples.max(1);
    let mut lost = 0usize;
    for _ in 0..n {
        if sample_link(params, rng)?.total_time_s > window_s {
            lost += 1;
        }
    }
    Ok(lost as f64 / n as f64)
}
