//! Photodetection noise model: detector (NEP), shot, and source
//! relative-intensity noise, combined in quadrature into a per-sample SNR
//! and an effective bit count. Also provides the seeded per-arm noise draws
//! consumed by the optical MVM.
//!
//! RMS input-equivalent powers over the readout bandwidth `B = R/2`:
//!
//! ```text
//! N_det  = NEP * sqrt(B)
//! N_shot = sqrt(2 * h*nu * P * B / eta)
//! N_rin  = P * sqrt(RIN * B)
//! SNR    = P / sqrt(N_det^2 + N_shot^2 + N_rin^2)
//! ```

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardware::HardwareConfig;
use crate::rng;

/// Planck constant in J*s.
pub const PLANCK: f64 = 6.62607015e-34;
/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.99792458e8;

/// Detector and source noise parameters.
///
/// `rin` is the linear relative intensity noise per Hz; use
/// [`NoiseParams::with_rin_dbc`] to set it from a dBc/Hz figure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Noise-equivalent power of the receiver, W/sqrt(Hz).
    pub nep: f64,
    /// Photodetector quantum efficiency, in (0, 1].
    pub quantum_efficiency: f64,
    /// Source wavelength in meters (photon energy h*c/lambda).
    pub wavelength: f64,
    /// Linear relative intensity noise per Hz.
    pub rin: f64,
    /// Sampling clock rate in samples/second; bandwidth is R/2.
    pub clock_rate: f64,
    /// Treat RIN as common-mode between the signal and reference arms so it
    /// largely cancels in balanced detection. Default: independent per arm.
    #[serde(default)]
    pub rin_common_mode: bool,
}

impl NoiseParams {
    pub fn new(
        nep: f64,
        quantum_efficiency: f64,
        wavelength: f64,
        rin: f64,
        clock_rate: f64,
    ) -> Result<Self> {
        let p = Self {
            nep,
            quantum_efficiency,
            wavelength,
            rin,
            clock_rate,
            rin_common_mode: false,
        };
        p.validate()?;
        Ok(p)
    }

    /// High-speed reference operating point: 25 GS/s clock, eta = 0.65,
    /// lambda = 975 nm, NEP = 5 pW/sqrt(Hz), RIN = -145 dBc/Hz.
    pub fn reference_25gsps() -> Self {
        Self::new(5e-12, 0.65, 975e-9, dbc_to_linear(-145.0), 25e9).unwrap()
    }

    /// Set RIN from a dBc/Hz value.
    pub fn with_rin_dbc(mut self, dbc_per_hz: f64) -> Self {
        self.rin = dbc_to_linear(dbc_per_hz);
        self
    }

    pub fn with_common_mode_rin(mut self, enabled: bool) -> Self {
        self.rin_common_mode = enabled;
        self
    }

    /// Detector-noise-only parameters tuned so one differential readout of
    /// `cfg` carries additive output noise of standard deviation
    /// `sigma_out` (in normalized output units). Both arms draw independent
    /// detector noise; the difference is divided by the reference split.
    pub fn tuned_for_output_std(cfg: &HardwareConfig, sigma_out: f64) -> Self {
        let bandwidth = cfg.clock_rate / 2.0;
        let nep =
            sigma_out * cfg.reference_split * cfg.max_power_per_vcsel / (2.0f64.sqrt() * bandwidth.sqrt());
        Self {
            nep,
            quantum_efficiency: 1.0,
            wavelength: 975e-9,
            rin: 0.0,
            clock_rate: cfg.clock_rate,
            rin_common_mode: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nep < 0.0 || !self.nep.is_finite() {
            return Err(Error::Config(format!("nep must be >= 0, got {}", self.nep)));
        }
        if !(self.quantum_efficiency > 0.0 && self.quantum_efficiency <= 1.0) {
            return Err(Error::Config(format!(
                "quantum_efficiency must be in (0, 1], got {}",
                self.quantum_efficiency
            )));
        }
        if self.wavelength <= 0.0 {
            return Err(Error::Config(format!(
                "wavelength must be > 0, got {}",
                self.wavelength
            )));
        }
        if self.rin < 0.0 {
            return Err(Error::Config(format!("rin must be >= 0, got {}", self.rin)));
        }
        if self.clock_rate <= 0.0 {
            return Err(Error::Config(format!(
                "clock_rate must be > 0, got {}",
                self.clock_rate
            )));
        }
        Ok(())
    }

    /// Readout noise bandwidth B = R/2.
    pub fn bandwidth(&self) -> f64 {
        self.clock_rate / 2.0
    }

    /// Acquisition time T = 1/R.
    pub fn acquisition_time(&self) -> f64 {
        1.0 / self.clock_rate
    }

    /// Photon energy h*nu = h*c/lambda in joules.
    pub fn photon_energy(&self) -> f64 {
        PLANCK * SPEED_OF_LIGHT / self.wavelength
    }
}

/// Convert a dBc/Hz RIN figure to linear per-Hz units.
pub fn dbc_to_linear(dbc_per_hz: f64) -> f64 {
    10f64.powf(dbc_per_hz / 10.0)
}

/// Convert linear per-Hz RIN to dBc/Hz.
pub fn linear_to_dbc(rin: f64) -> f64 {
    10.0 * rin.log10()
}

/// RMS input-equivalent noise powers of the three sources, in watts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseRms {
    pub detector: f64,
    pub shot: f64,
    pub rin: f64,
}

impl NoiseRms {
    /// Quadrature sum of all three components.
    pub fn total(&self) -> f64 {
        (self.detector * self.detector + self.shot * self.shot + self.rin * self.rin).sqrt()
    }

    /// Quadrature sum of the signal-power-uncorrelated-with-source terms
    /// (detector + shot); used when RIN is treated as common-mode.
    pub fn detector_shot(&self) -> f64 {
        (self.detector * self.detector + self.shot * self.shot).sqrt()
    }
}

/// RMS noise components at incident optical power `power` (watts).
pub fn noise_rms_components(power: f64, params: &NoiseParams) -> Result<NoiseRms> {
    if power < 0.0 || !power.is_finite() {
        return Err(Error::Domain(format!(
            "optical power must be >= 0, got {power}"
        )));
    }
    params.validate()?;
    let bandwidth = params.bandwidth();
    let detector = params.nep * bandwidth.sqrt();
    let shot =
        (2.0 * params.photon_energy() * power * bandwidth / params.quantum_efficiency).sqrt();
    let rin = power * (params.rin * bandwidth).sqrt();
    Ok(NoiseRms {
        detector,
        shot,
        rin,
    })
}

/// Total SNR and the effective bit count log2(SNR).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnrReport {
    pub snr: f64,
    pub effective_bits: f64,
}

/// Per-source SNRs alongside the quadrature-combined total; all for one
/// sample at incident power `power`.
#[derive(Clone, Copy, Debug)]
pub struct SnrBreakdown {
    pub snr_detector: f64,
    pub snr_shot: f64,
    pub snr_rin: f64,
    pub total: SnrReport,
}

pub fn snr_total(power: f64, params: &NoiseParams) -> Result<SnrReport> {
    if power <= 0.0 || !power.is_finite() {
        return Err(Error::Domain(format!(
            "optical power must be > 0, got {power}"
        )));
    }
    let rms = noise_rms_components(power, params)?;
    let snr = power / rms.total();
    Ok(SnrReport {
        snr,
        effective_bits: snr.log2(),
    })
}

pub fn snr_breakdown(power: f64, params: &NoiseParams) -> Result<SnrBreakdown> {
    let rms = noise_rms_components(power, params)?;
    let total = snr_total(power, params)?;
    let inf = f64::INFINITY;
    Ok(SnrBreakdown {
        snr_detector: if rms.detector > 0.0 { power / rms.detector } else { inf },
        snr_shot: if rms.shot > 0.0 { power / rms.shot } else { inf },
        snr_rin: if rms.rin > 0.0 { power / rms.rin } else { inf },
        total,
    })
}

/// The RIN-limited SNR ceiling sqrt(2T/RIN); infinite when RIN is zero.
pub fn rin_plateau_snr(params: &NoiseParams) -> f64 {
    if params.rin <= 0.0 {
        f64::INFINITY
    } else {
        (2.0 * params.acquisition_time() / params.rin).sqrt()
    }
}

/// Smallest optical power whose effective bit count reaches `target_bits`,
/// found by bisection to 0.1% relative width. Errors when the target sits
/// at or above the RIN plateau.
pub fn required_power(target_bits: f64, params: &NoiseParams) -> Result<f64> {
    params.validate()?;
    let target_snr = 2f64.powf(target_bits);
    let plateau = rin_plateau_snr(params);
    if target_snr >= plateau {
        return Err(Error::Infeasible {
            target_bits,
            plateau_bits: plateau.log2(),
        });
    }

    let bits_at = |p: f64| snr_total(p, params).map(|r| r.effective_bits);

    let mut lo = 1e-18;
    let mut hi = 1e-12;
    let mut expansions = 0;
    while bits_at(hi)? < target_bits {
        hi *= 10.0;
        expansions += 1;
        if expansions > 40 {
            return Err(Error::Internal(
                "required_power failed to bracket the target".into(),
            ));
        }
    }
    while bits_at(lo)? >= target_bits && lo > 1e-30 {
        lo /= 10.0;
    }

    while (hi - lo) / hi > 1e-3 {
        let mid = (lo + hi) / 2.0;
        if bits_at(mid)? >= target_bits {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// One zero-mean Gaussian draw whose standard deviation is the total RMS
/// noise at arm power `p_arm`; deterministic per seed.
pub fn sample_arm_noise(p_arm: f64, params: &NoiseParams, seed: u64) -> Result<f64> {
    let mut rng = rng::substream(seed, rng::HARDWARE_NOISE_STREAM);
    sample_arm_noise_with(p_arm, params, &mut rng)
}

/// As [`sample_arm_noise`] but drawing from a caller-owned RNG; this is the
/// hot path used inside the optical MVM.
pub fn sample_arm_noise_with(p_arm: f64, params: &NoiseParams, rng: &mut impl Rng) -> Result<f64> {
    let rms = noise_rms_components(p_arm, params)?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(z * rms.total())
}
