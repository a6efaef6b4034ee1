//! Behavioral model of one optical clock cycle: VCSEL input encoding,
//! diffractive fanout with nearest-neighbor crosstalk, per-copy polarization
//! weighting on the SLM, and balanced differential detection with ADC
//! readout.
//!
//! Inputs are non-negative normalized powers in [0, 1]; signs live entirely
//! in the weights. Each SLM pixel realizes a transmission sin^2(phi/2), and
//! subtracting a reference arm carrying a fraction `r` of the copy power
//! turns that into a signed weight `2*sin^2(phi/2) - 1 = -cos(phi)`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::float17;
use crate::noise::{noise_rms_components, NoiseParams};
use crate::rng;

/// Full-scale range of the differential readout per unit of input power:
/// sweeping a weight across [-1, 1] at unit input moves the output across a
/// range of 2. Percent-of-full-scale error figures are relative to this.
pub const OUTPUT_FULL_SCALE: f64 = 2.0;

/// Geometry and electrical parameters of the simulated system.
///
/// Loadable from a TOML file whose keys match the field names exactly.
/// `dac_bits`/`adc_bits` of 0 disable the corresponding quantizer (ideal
/// converter); config files normally keep them in [1, 16].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HardwareConfig {
    /// Number of VCSEL input channels (N).
    pub n_inputs: usize,
    /// Number of fanout copies / weight kernels (M).
    pub n_fanout: usize,
    /// Optical clock rate in samples/second (R).
    pub clock_rate: f64,
    /// Maximum emitted optical power per VCSEL, watts.
    pub max_power_per_vcsel: f64,
    /// Input DAC depth in bits; 0 disables input quantization.
    pub dac_bits: u32,
    /// Readout ADC depth in bits; 0 disables output quantization.
    pub adc_bits: u32,
    /// Nearest-neighbor power leakage coefficient kappa in [0, 0.2].
    #[serde(default)]
    pub crosstalk: f64,
    /// Per-copy power efficiency factors in (0, 1]. Empty means all ones.
    #[serde(default)]
    pub fanout_efficiencies: Vec<f64>,
    /// Fraction of each copy's power routed to the reference arm.
    #[serde(default = "default_reference_split")]
    pub reference_split: f64,
}

fn default_reference_split() -> f64 {
    0.5
}

impl HardwareConfig {
    /// Defaults matching the demonstrated system: 100 MS/s clock, 2 mW per
    /// VCSEL, 8-bit DAC, 10-bit ADC, no crosstalk, unit efficiencies.
    pub fn new(n_inputs: usize, n_fanout: usize) -> Self {
        Self {
            n_inputs,
            n_fanout,
            clock_rate: 1e8,
            max_power_per_vcsel: 2e-3,
            dac_bits: 8,
            adc_bits: 10,
            crosstalk: 0.0,
            fanout_efficiencies: vec![1.0; n_fanout],
            reference_split: 0.5,
        }
    }

    /// Ideal instrument for property tests: quantizers disabled, no
    /// crosstalk, unit efficiencies.
    pub fn ideal(n_inputs: usize, n_fanout: usize) -> Self {
        let mut cfg = Self::new(n_inputs, n_fanout);
        cfg.dac_bits = 0;
        cfg.adc_bits = 0;
        cfg
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("hardware config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Efficiency of copy `m`; defaults to 1 when the vector is empty.
    pub fn fanout_efficiency(&self, m: usize) -> f64 {
        if self.fanout_efficiencies.is_empty() {
            1.0
        } else {
            self.fanout_efficiencies[m]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_inputs < 1 {
            return Err(Error::Config("n_inputs must be >= 1".into()));
        }
        if self.n_fanout < 1 {
            return Err(Error::Config("n_fanout must be >= 1".into()));
        }
        if self.clock_rate <= 0.0 {
            return Err(Error::Config(format!(
                "clock_rate must be > 0, got {}",
                self.clock_rate
            )));
        }
        if self.max_power_per_vcsel <= 0.0 {
            return Err(Error::Config(format!(
                "max_power_per_vcsel must be > 0, got {}",
                self.max_power_per_vcsel
            )));
        }
        for (name, bits) in [("dac_bits", self.dac_bits), ("adc_bits", self.adc_bits)] {
            if bits > 16 {
                return Err(Error::Config(format!(
                    "{name} must be in [1, 16] (or 0 to disable), got {bits}"
                )));
            }
        }
        if !(0.0..=0.2).contains(&self.crosstalk) {
            return Err(Error::Config(format!(
                "crosstalk must be in [0, 0.2], got {}",
                self.crosstalk
            )));
        }
        if !self.fanout_efficiencies.is_empty() {
            if self.fanout_efficiencies.len() != self.n_fanout {
                return Err(Error::Dimension {
                    context: "fanout_efficiencies",
                    expected: self.n_fanout,
                    actual: self.fanout_efficiencies.len(),
                });
            }
            for (m, &eff) in self.fanout_efficiencies.iter().enumerate() {
                if !(eff > 0.0 && eff <= 1.0) {
                    return Err(Error::Config(format!(
                        "fanout efficiency {m} must be in (0, 1], got {eff}"
                    )));
                }
            }
        }
        if !(self.reference_split > 0.0 && self.reference_split < 1.0) {
            return Err(Error::Config(format!(
                "reference_split must be in (0, 1), got {}",
                self.reference_split
            )));
        }
        Ok(())
    }

    /// Worst-case difference between the noiseless analog readout and the
    /// exact dot product caused by input quantization alone.
    pub fn dac_quantization_bound(&self) -> f64 {
        if self.dac_bits == 0 {
            0.0
        } else {
            self.n_inputs as f64 * 2f64.powi(-(self.dac_bits as i32))
        }
    }

    /// Half of one ADC step on the [-N, N] full scale; 0 when disabled.
    pub fn adc_quantization_bound(&self) -> f64 {
        if self.adc_bits == 0 {
            0.0
        } else {
            let max_code = (1u32 << (self.adc_bits - 1)) - 1;
            self.n_inputs as f64 / max_code as f64 / 2.0
        }
    }
}

/// One optical clock cycle's configuration plus optional detector noise;
/// selects how higher layers execute their matrix products.
#[derive(Clone, Debug)]
pub struct OpticalBackend {
    pub config: HardwareConfig,
    pub noise: Option<NoiseParams>,
}

/// Execution path for convolution layers: exact digital arithmetic, or the
/// simulated optical datapath.
#[derive(Clone, Debug)]
pub enum Backend {
    Digital,
    Optical(OpticalBackend),
}

/// Normalized per-VCSEL optical powers for one clock cycle, each in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct InputFrame {
    activations: Vec<f64>,
}

impl InputFrame {
    /// Wrap pre-validated activations; values must already be in [0, 1].
    pub fn try_new(activations: Vec<f64>, cfg: &HardwareConfig) -> Result<Self> {
        if activations.len() != cfg.n_inputs {
            return Err(Error::Dimension {
                context: "input frame",
                expected: cfg.n_inputs,
                actual: activations.len(),
            });
        }
        for &a in &activations {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Domain(format!(
                    "activation {a} outside [0, 1]; use encode_input to clip"
                )));
            }
        }
        Ok(Self { activations })
    }

    pub fn values(&self) -> &[f64] {
        &self.activations
    }

    pub fn len(&self) -> usize {
        self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }
}

/// Clip raw inputs to [0, 1] and quantize them to the DAC grid
/// (round-half-away-from-zero). Deterministic.
pub fn encode_input(x: &[f64], cfg: &HardwareConfig) -> Result<InputFrame> {
    if x.len() != cfg.n_inputs {
        return Err(Error::Dimension {
            context: "encode_input",
            expected: cfg.n_inputs,
            actual: x.len(),
        });
    }
    let levels = if cfg.dac_bits == 0 {
        None
    } else {
        Some(((1u32 << cfg.dac_bits) - 1) as f64)
    };
    let activations = x
        .iter()
        .map(|&v| {
            let clipped = v.clamp(0.0, 1.0);
            match levels {
                Some(l) => (clipped * l).round() / l,
                None => clipped,
            }
        })
        .collect();
    Ok(InputFrame { activations })
}

/// SLM drive phase realizing signed weight `w` under the ideal map:
/// phi = arccos(-w), so -cos(phi) = w exactly. Returns radians in [0, pi].
pub fn weight_to_phase(w: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&w) {
        return Err(Error::Domain(format!("weight {w} outside [-1, 1]")));
    }
    Ok((-w).acos())
}

/// Differential weight realized by drive phase `phi`.
pub fn phase_to_weight(phi: f64) -> f64 {
    -phi.cos()
}

/// The M x N signed weight matrix as programmed onto the SLM, together with
/// its realized drive phases.
#[derive(Clone, Debug)]
pub struct WeightPlane {
    copies: usize,
    inputs: usize,
    weights: Vec<f64>,
    phases: Vec<f64>,
    transmissions: Vec<f64>,
    /// Worst-case |realized - requested| weight error of the phase
    /// realization (zero for the ideal closed-form map).
    max_realization_error: f64,
}

impl WeightPlane {
    /// Build from row-major M x N weights using the ideal phase map.
    pub fn from_weights(copies: usize, inputs: usize, weights: &[f64]) -> Result<Self> {
        if weights.len() != copies * inputs {
            return Err(Error::Dimension {
                context: "weight plane",
                expected: copies * inputs,
                actual: weights.len(),
            });
        }
        let phases = weights
            .iter()
            .map(|&w| weight_to_phase(w))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self::from_parts(copies, inputs, weights.to_vec(), phases, 0.0))
    }

    /// Build from explicit phases (e.g. produced through a calibration LUT).
    /// `max_realization_error` bounds |(-cos(phase)) - weight| over entries.
    pub fn from_parts(
        copies: usize,
        inputs: usize,
        weights: Vec<f64>,
        phases: Vec<f64>,
        max_realization_error: f64,
    ) -> Self {
        debug_assert_eq!(weights.len(), copies * inputs);
        debug_assert_eq!(phases.len(), copies * inputs);
        let transmissions = phases.iter().map(|&p| (p / 2.0).sin().powi(2)).collect();
        Self {
            copies,
            inputs,
            weights,
            phases,
            transmissions,
            max_realization_error,
        }
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn weight(&self, m: usize, n: usize) -> f64 {
        self.weights[m * self.inputs + n]
    }

    pub fn phase(&self, m: usize, n: usize) -> f64 {
        self.phases[m * self.inputs + n]
    }

    /// Signal-arm transmission sin^2(phi/2) of pixel (m, n).
    pub fn transmission(&self, m: usize, n: usize) -> f64 {
        self.transmissions[m * self.inputs + n]
    }

    pub fn max_realization_error(&self) -> f64 {
        self.max_realization_error
    }
}

/// Per-channel differential outputs of one clock cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorReadout {
    /// Differential outputs in normalized units; full scale [-N, N].
    pub analog: Vec<f64>,
    /// Post-ADC two's-complement codes (all zero when the ADC is disabled).
    pub digital: Vec<i32>,
    /// Seed that drove this cycle's noise draws.
    pub seed_used: u64,
}

/// Replicate a frame into M copies scaled by the per-copy efficiencies,
/// then apply nearest-neighbor crosstalk mixing along the flattened VCSEL
/// order. Leakage that would cross an array edge reflects back into the
/// edge cell, so total power per copy is conserved.
pub fn fanout_replicate(frame: &InputFrame, cfg: &HardwareConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if frame.len() != cfg.n_inputs {
        return Err(Error::Dimension {
            context: "fanout_replicate",
            expected: cfg.n_inputs,
            actual: frame.len(),
        });
    }
    let kappa = cfg.crosstalk;
    let mut copies = Vec::with_capacity(cfg.n_fanout);
    for m in 0..cfg.n_fanout {
        let eff = cfg.fanout_efficiency(m);
        let scaled: Vec<f64> = frame.values().iter().map(|&p| p * eff).collect();
        copies.push(mix_crosstalk(&scaled, kappa));
    }
    Ok(copies)
}

fn mix_crosstalk(p: &[f64], kappa: f64) -> Vec<f64> {
    let n = p.len();
    if kappa == 0.0 || n == 1 {
        return p.to_vec();
    }
    let half = kappa / 2.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let left = if i == 0 { p[0] } else { p[i - 1] };
        let right = if i == n - 1 { p[n - 1] } else { p[i + 1] };
        out.push((1.0 - kappa) * p[i] + half * (left + right));
    }
    out
}

/// One full optical clock cycle: fanout, per-pixel weighting, intensity
/// accumulation on both detector arms, optional arm noise, balanced
/// differencing, and ADC quantization. Deterministic for a fixed seed.
pub fn optical_mvm(
    frame: &InputFrame,
    plane: &WeightPlane,
    cfg: &HardwareConfig,
    noise: Option<&NoiseParams>,
    seed: u64,
) -> Result<DetectorReadout> {
    cfg.validate()?;
    if plane.copies() != cfg.n_fanout || plane.inputs() != cfg.n_inputs {
        return Err(Error::Dimension {
            context: "optical_mvm weight plane",
            expected: cfg.n_fanout * cfg.n_inputs,
            actual: plane.copies() * plane.inputs(),
        });
    }
    if frame.len() != cfg.n_inputs {
        return Err(Error::Dimension {
            context: "optical_mvm frame",
            expected: cfg.n_inputs,
            actual: frame.len(),
        });
    }

    let copies = fanout_replicate(frame, cfg)?;
    let split = cfg.reference_split;
    let p_max = cfg.max_power_per_vcsel;
    let mut rng = noise.map(|_| rng::substream(seed, rng::HARDWARE_NOISE_STREAM));

    let mut analog = Vec::with_capacity(cfg.n_fanout);
    for (m, powers) in copies.iter().enumerate() {
        let mut signal = 0.0;
        let mut total = 0.0;
        for (n, &p) in powers.iter().enumerate() {
            signal += p * plane.transmission(m, n);
            total += p;
        }
        let mut reference = split * total;

        if let (Some(params), Some(rng)) = (noise, rng.as_mut()) {
            let signal_rms = noise_rms_components(signal * p_max, params)?;
            let reference_rms = noise_rms_components(reference * p_max, params)?;
            let (noise_signal, noise_reference) = if params.rin_common_mode {
                // One source-intensity fluctuation shared by both arms; the
                // detector and shot terms stay independent.
                let z: f64 = rng.sample(StandardNormal);
                let gs: f64 = rng.sample(StandardNormal);
                let gr: f64 = rng.sample(StandardNormal);
                (
                    gs * signal_rms.detector_shot() + z * signal_rms.rin,
                    gr * reference_rms.detector_shot() + z * reference_rms.rin,
                )
            } else {
                let gs: f64 = rng.sample(StandardNormal);
                let gr: f64 = rng.sample(StandardNormal);
                (gs * signal_rms.total(), gr * reference_rms.total())
            };
            signal += noise_signal / p_max;
            reference += noise_reference / p_max;
        }

        analog.push((signal - reference) / split);
    }

    let digital = analog.iter().map(|&a| quantize_adc(a, cfg)).collect();
    Ok(DetectorReadout {
        analog,
        digital,
        seed_used: seed,
    })
}

/// ADC code for an analog value on the [-N, N] full scale
/// (round-half-away-from-zero, symmetric two's-complement range).
pub fn quantize_adc(analog: f64, cfg: &HardwareConfig) -> i32 {
    if cfg.adc_bits == 0 {
        return 0;
    }
    let full = cfg.n_inputs as f64;
    let max_code = ((1u32 << (cfg.adc_bits - 1)) - 1) as f64;
    (analog.clamp(-full, full) / full * max_code).round() as i32
}

/// Analog value reconstructed from an ADC code.
pub fn dequantize_adc(code: i32, cfg: &HardwareConfig) -> f64 {
    if cfg.adc_bits == 0 {
        return 0.0;
    }
    let full = cfg.n_inputs as f64;
    let max_code = ((1u32 << (cfg.adc_bits - 1)) - 1) as f64;
    code as f64 * full / max_code
}

/// Write a batch of readouts as CSV with columns
/// `frame_index,channel,analog,digital`.
pub fn write_readout_csv(path: &Path, readouts: &[DetectorReadout]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "frame_index,channel,analog,digital")?;
    for (frame, r) in readouts.iter().enumerate() {
        for (channel, (&a, &d)) in r.analog.iter().zip(&r.digital).enumerate() {
            writeln!(w, "{frame},{channel},{},{d}", float17(a))?;
        }
    }
    Ok(())
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mvm_quantization_bound_holds(
            x in proptest::collection::vec(0.0f64..=1.0, 9),
            w in proptest::collection::vec(-1.0f64..=1.0, 81),
        ) {
            let cfg = HardwareConfig::new(9, 9);
            let plane = WeightPlane::from_weights(9, 9, &w).unwrap();
            let frame = encode_input(&x, &cfg).unwrap();
            let out = optical_mvm(&frame, &plane, &cfg, None, 0).unwrap();
            let bound = cfg.dac_quantization_bound();
            for m in 0..9 {
                let exact: f64 = (0..9).map(|n| x[n] * w[m * 9 + n]).sum();
                prop_assert!((out.analog[m] - exact).abs() <= bound);
            }
        }

        #[test]
        fn crosstalk_total_power_is_preserved(
            p in proptest::collection::vec(0.0f64..=1.0, 1..40),
            kappa in 0.0f64..=0.2,
        ) {
            let mixed = mix_crosstalk(&p, kappa);
            let before: f64 = p.iter().sum();
            let after: f64 = mixed.iter().sum();
            prop_assert!((before - after).abs() <= 1e-12 * before.max(1.0));
        }
    }
}
