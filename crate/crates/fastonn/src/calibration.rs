//! SLM calibration against a simulated imperfect device: measure reflected
//! intensity versus gray level, fit a monotone response, invert it into a
//! weight-to-gray lookup table, flat-field per-channel gains, and sparsely
//! recalibrate after drift.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fmt::float17;
use crate::hardware::WeightPlane;
use crate::rng;

/// Simulated SLM: a monotone phase response phi(g) sampled at each gray
/// level, plus a multiplicative intensity gain per fanout channel.
#[derive(Clone, Debug)]
pub struct SlmDeviceModel {
    phase_response: Vec<f64>,
    pixel_gains: Vec<f64>,
}

impl SlmDeviceModel {
    /// Linear phase ramp from 0 to pi, unit gains.
    pub fn ideal(gray_levels: usize, channels: usize) -> Self {
        let g_max = (gray_levels - 1) as f64;
        Self {
            phase_response: (0..gray_levels)
                .map(|g| std::f64::consts::PI * g as f64 / g_max)
                .collect(),
            pixel_gains: vec![1.0; channels],
        }
    }

    /// Smooth invertible nonlinearity on top of the linear ramp:
    /// phi(g) = pi*t + 0.1*sin(2*pi*t) with t = g/(G-1). Still strictly
    /// monotone and pinned to 0 and pi at the ends.
    pub fn perturbed(gray_levels: usize, channels: usize) -> Self {
        let g_max = (gray_levels - 1) as f64;
        Self {
            phase_response: (0..gray_levels)
                .map(|g| {
                    let t = g as f64 / g_max;
                    std::f64::consts::PI * t + 0.1 * (2.0 * std::f64::consts::PI * t).sin()
                })
                .collect(),
            pixel_gains: vec![1.0; channels],
        }
    }

    /// Replace the per-channel gains. Healthy devices keep gains in
    /// [0.8, 1.2]; out-of-range values are accepted so dead channels can be
    /// simulated.
    pub fn with_gains(mut self, gains: Vec<f64>) -> Self {
        self.pixel_gains = gains;
        self
    }

    /// Add a constant phase offset to every gray level (drift injection).
    pub fn with_phase_offset(mut self, delta: f64) -> Self {
        for phi in &mut self.phase_response {
            *phi += delta;
        }
        self
    }

    pub fn gray_levels(&self) -> usize {
        self.phase_response.len()
    }

    pub fn channels(&self) -> usize {
        self.pixel_gains.len()
    }

    pub fn phase_at(&self, gray: usize) -> f64 {
        self.phase_response[gray]
    }

    /// Reflected intensity of `channel` at gray level `gray`:
    /// gain * sin^2(phi/2).
    pub fn transmission(&self, channel: usize, gray: usize) -> f64 {
        self.pixel_gains[channel] * (self.phase_at(gray) / 2.0).sin().powi(2)
    }

    /// Differential weight realized by gray level `gray` (gain-free).
    pub fn realized_weight(&self, gray: usize) -> f64 {
        -self.phase_at(gray).cos()
    }
}

/// Measure the reflected intensity of one channel at every gray level, with
/// zero-mean Gaussian measurement noise of std `noise_std`. Deterministic
/// per seed.
pub fn measure_response(
    device: &SlmDeviceModel,
    channel: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if channel >= device.channels() {
        return Err(Error::Dimension {
            context: "measure_response channel",
            expected: device.channels(),
            actual: channel,
        });
    }
    if noise_std < 0.0 {
        return Err(Error::Domain(format!(
            "noise_std must be >= 0, got {noise_std}"
        )));
    }
    let mut rng = rng::substream(seed, rng::CALIBRATION_NOISE_STREAM);
    Ok((0..device.gray_levels())
        .map(|g| {
            let z: f64 = rng.sample(StandardNormal);
            device.transmission(channel, g) + noise_std * z
        })
        .collect())
}

/// Measurement-to-fit pipeline shared by calibration and recalibration: a
/// fixed-width moving average (window = G/16, reflected at the ends) knocks
/// down single-sample measurement noise, then pool-adjacent-violators
/// enforces monotonicity.
fn fit_response(samples: &[f64]) -> Vec<f64> {
    isotonic_non_decreasing(&moving_average_reflect(samples, (samples.len() / 16) | 1))
}

fn moving_average_reflect(y: &[f64], window: usize) -> Vec<f64> {
    let n = y.len();
    let half = (window.max(1) - 1) / 2;
    if half == 0 || n < 2 {
        return y.to_vec();
    }
    let reflect = |i: isize| -> f64 {
        let m = (n - 1) as isize;
        let mut j = i;
        if j < 0 {
            j = -j;
        }
        if j > m {
            j = 2 * m - j;
        }
        y[j as usize]
    };
    (0..n as isize)
        .map(|i| {
            let mut acc = 0.0;
            for d in -(half as isize)..=(half as isize) {
                acc += reflect(i + d);
            }
            acc / (2 * half + 1) as f64
        })
        .collect()
}

/// Pool-adjacent-violators fit: the non-decreasing sequence minimizing the
/// squared distance to `y` (equal weights).
pub fn isotonic_non_decreasing(y: &[f64]) -> Vec<f64> {
    // Each block holds (sum, count); merging keeps block means monotone.
    let mut blocks: Vec<(f64, f64)> = Vec::with_capacity(y.len());
    for &v in y {
        let mut sum = v;
        let mut count = 1.0;
        while let Some(&(prev_sum, prev_count)) = blocks.last() {
            if prev_sum / prev_count > sum / count {
                sum += prev_sum;
                count += prev_count;
                blocks.pop();
            } else {
                break;
            }
        }
        blocks.push((sum, count));
    }
    let mut out = Vec::with_capacity(y.len());
    for (sum, count) in blocks {
        let mean = sum / count;
        for _ in 0..count as usize {
            out.push(mean);
        }
    }
    out
}

/// Lookup table mapping a weight grid on [-1, 1] to SLM gray levels, plus
/// per-channel flat-field corrections.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightLut {
    knots: Vec<f64>,
    gray: Vec<u16>,
    /// Fit-predicted realized weight at each knot's chosen gray level.
    realized: Vec<f64>,
    /// Per-channel multiplicative target-intensity corrections.
    pub gain_map: Vec<f64>,
    /// Largest realized-weight change across one gray-level step of the fit.
    lut_step: f64,
    /// Largest |realized - knot| over the table.
    max_residual: f64,
}

/// Default inversion grid: 2049 evenly spaced knots covering [-1, 1].
pub fn default_weight_grid() -> Vec<f64> {
    let k = 2049;
    (0..k)
        .map(|i| -1.0 + 2.0 * i as f64 / (k - 1) as f64)
        .collect()
}

/// Fit a monotone response through the measured samples and invert it into
/// a LUT over `target_grid`. Intensity I maps to weight w = 2I - 1; the
/// inverse uses linear interpolation between fitted samples, rounded to the
/// nearest gray level.
pub fn build_lut(samples: &[f64], target_grid: &[f64]) -> Result<WeightLut> {
    if samples.len() < 2 {
        return Err(Error::CalibrationRange(
            "need at least two gray-level samples".into(),
        ));
    }
    if target_grid.is_empty() {
        return Err(Error::Domain("empty target grid".into()));
    }
    let fit = fit_response(samples);
    let lo = *fit.first().unwrap();
    let hi = *fit.last().unwrap();
    if lo > 0.02 || hi < 0.98 {
        return Err(Error::CalibrationRange(format!(
            "fitted intensity spans [{lo:.4}, {hi:.4}], need at least [0.02, 0.98]"
        )));
    }

    let mut knots = Vec::with_capacity(target_grid.len());
    let mut gray = Vec::with_capacity(target_grid.len());
    let mut realized = Vec::with_capacity(target_grid.len());
    let mut max_residual: f64 = 0.0;
    for &w in target_grid {
        if !(-1.0..=1.0).contains(&w) {
            return Err(Error::Domain(format!("grid weight {w} outside [-1, 1]")));
        }
        let g = invert_fit(&fit, (w + 1.0) / 2.0);
        let r = 2.0 * fit[g as usize] - 1.0;
        max_residual = max_residual.max((r - w).abs());
        knots.push(w);
        gray.push(g);
        realized.push(r);
    }

    let lut_step = fit
        .windows(2)
        .map(|p| 2.0 * (p[1] - p[0]))
        .fold(0.0, f64::max);

    Ok(WeightLut {
        knots,
        gray,
        realized,
        gain_map: vec![],
        lut_step,
        max_residual,
    })
}

/// Gray level whose fitted intensity is nearest `target`, by linear
/// interpolation between fitted samples.
fn invert_fit(fit: &[f64], target: f64) -> u16 {
    let t = target.clamp(fit[0], *fit.last().unwrap());
    // First index whose fitted value reaches the target.
    let j = fit.partition_point(|&v| v < t);
    let frac = if j == 0 {
        0.0
    } else {
        let (a, b) = (fit[j - 1], fit[j]);
        if b > a {
            (j - 1) as f64 + (t - a) / (b - a)
        } else {
            (j - 1) as f64
        }
    };
    frac.round() as u16
}

impl WeightLut {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn gray_levels(&self) -> &[u16] {
        &self.gray
    }

    pub fn realized(&self) -> &[f64] {
        &self.realized
    }

    pub fn lut_step(&self) -> f64 {
        self.lut_step
    }

    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    pub fn with_gain_map(mut self, gain_map: Vec<f64>) -> Self {
        self.gain_map = gain_map;
        self
    }

    /// Gray level for weight `w` (nearest knot).
    pub fn gray_for(&self, w: f64) -> Result<u16> {
        if !(-1.0..=1.0).contains(&w) {
            return Err(Error::Domain(format!("weight {w} outside [-1, 1]")));
        }
        let k = self.knots.len() - 1;
        let idx = ((w + 1.0) / 2.0 * k as f64).round() as usize;
        Ok(self.gray[idx.min(k)])
    }

    /// Gray level for weight `w` on channel `ch`, applying the flat-field
    /// correction so all channels realize the same scaled response.
    pub fn gray_for_channel(&self, w: f64, ch: usize) -> Result<u16> {
        let gain = if self.gain_map.is_empty() {
            1.0
        } else {
            self.gain_map[ch]
        };
        // Scaling the target intensity by the gain correction is the same
        // as looking up the rescaled weight gain*(w+1) - 1.
        self.gray_for((gain * (w + 1.0) - 1.0).clamp(-1.0, 1.0))
    }

    /// Realize an M x N weight matrix as drive phases through this LUT and
    /// the given device (channel m weights copy m).
    pub fn realize_plane(
        &self,
        copies: usize,
        inputs: usize,
        weights: &[f64],
        device: &SlmDeviceModel,
    ) -> Result<WeightPlane> {
        if weights.len() != copies * inputs {
            return Err(Error::Dimension {
                context: "realize_plane",
                expected: copies * inputs,
                actual: weights.len(),
            });
        }
        let mut phases = Vec::with_capacity(weights.len());
        for (i, &w) in weights.iter().enumerate() {
            let ch = (i / inputs).min(device.channels() - 1);
            let gray = self.gray_for_channel(w, ch)?;
            phases.push(device.phase_at(gray as usize));
        }
        let bound = self.max_residual.max(self.lut_step);
        Ok(WeightPlane::from_parts(
            copies,
            inputs,
            weights.to_vec(),
            phases,
            bound,
        ))
    }
}

/// Estimate per-channel gains from the full-on intensity and return the
/// correction map normalizing every channel to the weakest one.
pub fn flat_field(device: &SlmDeviceModel) -> Result<Vec<f64>> {
    if device.channels() == 0 {
        return Err(Error::Domain("flat_field needs at least one channel".into()));
    }
    let full_on: Vec<f64> = (0..device.channels())
        .map(|ch| device.transmission(ch, device.gray_levels() - 1))
        .collect();
    for (ch, &f) in full_on.iter().enumerate() {
        if f < 1e-9 {
            return Err(Error::DeadChannel(ch));
        }
    }
    let min = full_on.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(full_on.iter().map(|&f| min / f).collect())
}

/// Re-measure a deterministic pseudo-random fraction of the LUT knots and
/// refit only those whose realized weight drifted by more than twice the
/// LUT step; all other knots are left untouched.
pub fn recalibrate(
    device: &SlmDeviceModel,
    lut: &WeightLut,
    subset_fraction: f64,
    seed: u64,
) -> Result<WeightLut> {
    if !(subset_fraction > 0.0 && subset_fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "subset_fraction must be in (0, 1], got {subset_fraction}"
        )));
    }
    let k = lut.knots.len();
    let count = ((subset_fraction * k as f64).ceil() as usize).clamp(1, k);

    let mut indices: Vec<usize> = (0..k).collect();
    let mut rng = rng::substream(seed, rng::CALIBRATION_NOISE_STREAM);
    for i in 0..count {
        let j = rng.gen_range(i..k);
        indices.swap(i, j);
    }
    let mut selected = indices[..count].to_vec();
    selected.sort_unstable();

    let threshold = 2.0 * lut.lut_step;
    let drifted: Vec<usize> = selected
        .into_iter()
        .filter(|&i| {
            let realized = 2.0 * device.transmission(0, lut.gray[i] as usize) - 1.0;
            (realized - lut.knots[i]).abs() > threshold
        })
        .collect();

    if drifted.is_empty() {
        return Ok(lut.clone());
    }

    let fresh = measure_response(device, 0, 0.0, seed)?;
    let fit = fit_response(&fresh);
    let mut updated = lut.clone();
    for i in drifted {
        let w = updated.knots[i];
        let g = invert_fit(&fit, (w + 1.0) / 2.0);
        updated.gray[i] = g;
        updated.realized[i] = 2.0 * fit[g as usize] - 1.0;
    }
    updated.max_residual = updated
        .knots
        .iter()
        .zip(&updated.realized)
        .map(|(k, r)| (k - r).abs())
        .fold(0.0, f64::max);
    Ok(updated)
}

/// Write the LUT as CSV with columns `weight_knot,gray_level,realized_weight`.
pub fn write_lut_csv(path: &Path, lut: &WeightLut) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "weight_knot,gray_level,realized_weight")?;
    for i in 0..lut.knots.len() {
        writeln!(
            w,
            "{},{},{}",
            float17(lut.knots[i]),
            lut.gray[i],
            float17(lut.realized[i])
        )?;
    }
    Ok(())
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn isotonic_output_is_monotone_and_mean_preserving(
            y in proptest::collection::vec(-1.0f64..=2.0, 2..80),
        ) {
            let fit = isotonic_non_decreasing(&y);
            prop_assert_eq!(fit.len(), y.len());
            for pair in fit.windows(2) {
                prop_assert!(pair[1] >= pair[0] - 1e-12);
            }
            let mean_in: f64 = y.iter().sum::<f64>() / y.len() as f64;
            let mean_out: f64 = fit.iter().sum::<f64>() / fit.len() as f64;
            prop_assert!((mean_in - mean_out).abs() < 1e-9);
        }
    }
}
