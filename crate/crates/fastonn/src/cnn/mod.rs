//! Compact convolutional classifier matching the optical geometry: one
//! bias-free layer of nine 3x3 kernels at stride 3 over a zero-padded
//! 30x30 input, ReLU, then a bias-free 900x10 dense layer with softmax.
//!
//! The convolution can run digitally or through the simulated optical
//! datapath (each 9-pixel patch becomes one MVM against the nine kernels);
//! gradients are always computed from digital forward values.

mod train;

pub use train::{evaluate, train, write_history_csv, Adam, EpochStats, Evaluation, TrainConfig};

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{extract_patches, PatchMatrix};
use crate::error::{Error, Result};
use crate::hardware::{
    dequantize_adc, encode_input, optical_mvm, Backend, OpticalBackend, WeightPlane,
};
use crate::rng;

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const KERNEL_COUNT: usize = 9;
pub const KERNEL_PIXELS: usize = 9;
pub const FEATURE_GRID: usize = 10;
pub const PATCH_COUNT: usize = FEATURE_GRID * FEATURE_GRID;
pub const FEATURE_DIM: usize = KERNEL_COUNT * PATCH_COUNT;
pub const CLASS_COUNT: usize = 10;

const CHECKPOINT_MAGIC: &[u8; 4] = b"FONN";
const CHECKPOINT_VERSION: u32 = 1;

/// Conv kernels (9 x 3 x 3, kernel-major row-major) and dense weights
/// (900 x 10, feature-major), both bias-free. Conv weights are kept inside
/// [-1, 1] by clipping after every optimizer step; dense weights are not
/// clipped.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnModel {
    conv: Vec<f64>,
    dense: Vec<f64>,
}

impl CnnModel {
    pub fn from_weights(conv: Vec<f64>, dense: Vec<f64>) -> Result<Self> {
        if conv.len() != KERNEL_COUNT * KERNEL_PIXELS {
            return Err(Error::Dimension {
                context: "conv weights",
                expected: KERNEL_COUNT * KERNEL_PIXELS,
                actual: conv.len(),
            });
        }
        if dense.len() != FEATURE_DIM * CLASS_COUNT {
            return Err(Error::Dimension {
                context: "dense weights",
                expected: FEATURE_DIM * CLASS_COUNT,
                actual: dense.len(),
            });
        }
        for &w in &conv {
            if !(-1.0..=1.0).contains(&w) {
                return Err(Error::Domain(format!("conv weight {w} outside [-1, 1]")));
            }
        }
        Ok(Self { conv, dense })
    }

    /// Glorot-uniform initialization, deterministic per seed.
    pub fn init(seed: u64) -> Self {
        let mut rng = rng::substream(seed, rng::INIT_STREAM);
        let conv_limit = (6.0 / (KERNEL_PIXELS + KERNEL_PIXELS * KERNEL_COUNT) as f64).sqrt();
        let dense_limit = (6.0 / (FEATURE_DIM + CLASS_COUNT) as f64).sqrt();
        let conv = (0..KERNEL_COUNT * KERNEL_PIXELS)
            .map(|_| rng.gen_range(-conv_limit..conv_limit))
            .collect();
        let dense = (0..FEATURE_DIM * CLASS_COUNT)
            .map(|_| rng.gen_range(-dense_limit..dense_limit))
            .collect();
        Self { conv, dense }
    }

    pub fn conv(&self) -> &[f64] {
        &self.conv
    }

    pub fn dense(&self) -> &[f64] {
        &self.dense
    }

    pub fn kernel(&self, k: usize) -> &[f64] {
        &self.conv[k * KERNEL_PIXELS..(k + 1) * KERNEL_PIXELS]
    }

    /// Clamp every conv weight to [-1, 1]; dense weights are untouched.
    pub fn clip_conv(&mut self) {
        for w in &mut self.conv {
            *w = w.clamp(-1.0, 1.0);
        }
    }

    pub(crate) fn apply_step(&mut self, conv_delta: &[f64], dense_delta: &[f64]) {
        for (w, d) in self.conv.iter_mut().zip(conv_delta) {
            *w -= d;
        }
        for (w, d) in self.dense.iter_mut().zip(dense_delta) {
            *w -= d;
        }
    }

    /// Serialize as magic "FONN", little-endian version, then little-endian
    /// f64s: conv kernels kernel-major row-major, dense row-major.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        for &v in self.conv.iter().chain(&self.dense) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::IdxFormat("bad checkpoint magic".into()));
        }
        let version = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
        if version != CHECKPOINT_VERSION {
            return Err(Error::IdxFormat(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let count = KERNEL_COUNT * KERNEL_PIXELS + FEATURE_DIM * CLASS_COUNT;
        if bytes.len() != 8 + count * 8 {
            return Err(Error::IdxTruncated(format!(
                "checkpoint: need {} bytes, got {}",
                8 + count * 8,
                bytes.len()
            )));
        }
        let mut values = Vec::with_capacity(count);
        for chunk in bytes[8..].chunks_exact(8) {
            values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        let dense = values.split_off(KERNEL_COUNT * KERNEL_PIXELS);
        Self::from_weights(values, dense)
    }
}

/// Output of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Post-activation feature maps, kernel-major then row-major spatial.
    pub feature_maps: Vec<f64>,
    /// Softmax class probabilities.
    pub probabilities: [f64; CLASS_COUNT],
    /// Argmax class (lowest index wins ties).
    pub label: usize,
}

/// Forward activations retained for backpropagation.
pub(crate) struct Trace {
    pub patches: PatchMatrix,
    pub pre_relu: Vec<f64>,
    pub features: Vec<f64>,
    pub probabilities: [f64; CLASS_COUNT],
}

fn conv_digital(model: &CnnModel, patches: &PatchMatrix) -> Vec<f64> {
    let mut pre = vec![0.0; FEATURE_DIM];
    for p in 0..PATCH_COUNT {
        let patch = patches.patch(p);
        for k in 0..KERNEL_COUNT {
            let kernel = model.kernel(k);
            let mut acc = 0.0;
            for q in 0..KERNEL_PIXELS {
                acc += kernel[q] * patch[q];
            }
            pre[k * PATCH_COUNT + p] = acc;
        }
    }
    pre
}

/// Route every patch through the optical MVM against the nine kernels.
/// Patches are rescaled to [0, 1] by their max value and the scale is
/// re-applied digitally after readout; all-zero patches skip the optics.
fn conv_optical(model: &CnnModel, patches: &PatchMatrix, optical: &OpticalBackend, seed: u64) -> Result<Vec<f64>> {
    let cfg = &optical.config;
    if cfg.n_inputs != KERNEL_PIXELS || cfg.n_fanout != KERNEL_COUNT {
        return Err(Error::Config(format!(
            "optical conv backend needs a {KERNEL_PIXELS}-input {KERNEL_COUNT}-copy system, got {}x{}",
            cfg.n_inputs, cfg.n_fanout
        )));
    }
    let plane = WeightPlane::from_weights(KERNEL_COUNT, KERNEL_PIXELS, &model.conv)?;
    let mut pre = vec![0.0; FEATURE_DIM];
    let mut scaled = vec![0.0; KERNEL_PIXELS];
    for p in 0..PATCH_COUNT {
        let patch = patches.patch(p);
        let scale = patch.iter().cloned().fold(0.0, f64::max);
        if scale <= 0.0 {
            continue;
        }
        for (s, &v) in scaled.iter_mut().zip(patch) {
            *s = v / scale;
        }
        let frame = encode_input(&scaled, cfg)?;
        let readout = optical_mvm(
            &frame,
            &plane,
            cfg,
            optical.noise.as_ref(),
            rng::frame_seed(seed, p as u64),
        )?;
        for k in 0..KERNEL_COUNT {
            let value = if cfg.adc_bits == 0 {
                readout.analog[k]
            } else {
                dequantize_adc(readout.digital[k], cfg)
            };
            pre[k * PATCH_COUNT + p] = value * scale;
        }
    }
    Ok(pre)
}

fn softmax(logits: &[f64; CLASS_COUNT]) -> Result<[f64; CLASS_COUNT]> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs = [0.0; CLASS_COUNT];
    let mut denom = 0.0;
    for (p, &l) in probs.iter_mut().zip(logits.iter()) {
        *p = (l - max).exp();
        denom += *p;
    }
    for p in &mut probs {
        *p /= denom;
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || !sum.is_finite() {
        return Err(Error::Internal(format!("softmax sum {sum}")));
    }
    Ok(probs)
}

fn argmax(probs: &[f64; CLASS_COUNT]) -> usize {
    let mut best = 0;
    for (j, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = j;
        }
    }
    best
}

pub(crate) fn forward_trace(
    model: &CnnModel,
    image: &[f64],
    backend: &Backend,
    noise_sigma: f64,
    seed: u64,
) -> Result<Trace> {
    if image.len() != IMAGE_PIXELS {
        return Err(Error::Dimension {
            context: "forward image",
            expected: IMAGE_PIXELS,
            actual: image.len(),
        });
    }
    let patches = extract_patches(image, IMAGE_SIDE, IMAGE_SIDE, 3, 3, 1)?;
    let pre_relu = match backend {
        Backend::Digital => conv_digital(model, &patches),
        Backend::Optical(optical) => conv_optical(model, &patches, optical, seed)?,
    };

    let mut features: Vec<f64> = pre_relu.iter().map(|&v| v.max(0.0)).collect();
    if noise_sigma > 0.0 {
        let mut rng = rng::substream(seed, rng::ACTIVATION_NOISE_STREAM);
        for f in &mut features {
            let z: f64 = rng.sample(StandardNormal);
            *f += noise_sigma * z;
        }
    }

    let mut logits = [0.0; CLASS_COUNT];
    for (i, &f) in features.iter().enumerate() {
        if f == 0.0 {
            continue;
        }
        let row = &model.dense[i * CLASS_COUNT..(i + 1) * CLASS_COUNT];
        for (l, &w) in logits.iter_mut().zip(row) {
            *l += f * w;
        }
    }
    let probabilities = softmax(&logits)?;

    Ok(Trace {
        patches,
        pre_relu,
        features,
        probabilities,
    })
}

/// One forward pass. `noise_sigma` adds zero-mean Gaussian perturbation to
/// every post-activation value (the hardware-robustness protocol);
/// deterministic per seed.
pub fn forward(
    model: &CnnModel,
    image: &[f64],
    backend: &Backend,
    noise_sigma: f64,
    seed: u64,
) -> Result<Forward> {
    let trace = forward_trace(model, image, backend, noise_sigma, seed)?;
    Ok(Forward {
        label: argmax(&trace.probabilities),
        feature_maps: trace.features,
        probabilities: trace.probabilities,
    })
}

/// Gradients matching the model shape.
#[derive(Clone, Debug)]
pub struct Grads {
    pub conv: Vec<f64>,
    pub dense: Vec<f64>,
}

impl Grads {
    fn zeros() -> Self {
        Self {
            conv: vec![0.0; KERNEL_COUNT * KERNEL_PIXELS],
            dense: vec![0.0; FEATURE_DIM * CLASS_COUNT],
        }
    }

    fn add(&mut self, other: &Grads) {
        for (a, b) in self.conv.iter_mut().zip(&other.conv) {
            *a += b;
        }
        for (a, b) in self.dense.iter_mut().zip(&other.dense) {
            *a += b;
        }
    }

    fn scale(&mut self, factor: f64) {
        for g in &mut self.conv {
            *g *= factor;
        }
        for g in &mut self.dense {
            *g *= factor;
        }
    }
}

fn example_loss_and_grads(
    model: &CnnModel,
    image: &[f64],
    label: u8,
    config: &TrainConfig,
    seed: u64,
) -> Result<(f64, Grads)> {
    if label > 9 {
        return Err(Error::LabelOutOfRange(label));
    }
    let target = label as usize;

    // Gradients always flow through digital forward values; when the
    // loss-forward runs optically only the reported loss uses its
    // probabilities.
    let digital = forward_trace(model, image, &Backend::Digital, config.noise_sigma, seed)?;
    let loss = match &config.backend {
        Backend::Digital => -digital.probabilities[target].max(f64::MIN_POSITIVE).ln(),
        Backend::Optical(_) => {
            let optical =
                forward_trace(model, image, &config.backend, config.noise_sigma, seed)?;
            -optical.probabilities[target].max(f64::MIN_POSITIVE).ln()
        }
    };

    let mut dlogits = digital.probabilities;
    dlogits[target] -= 1.0;

    let mut grads = Grads::zeros();
    let mut dfeat = vec![0.0; FEATURE_DIM];
    for i in 0..FEATURE_DIM {
        let f = digital.features[i];
        let dense_row = &model.dense[i * CLASS_COUNT..(i + 1) * CLASS_COUNT];
        let grad_row = &mut grads.dense[i * CLASS_COUNT..(i + 1) * CLASS_COUNT];
        let mut acc = 0.0;
        for j in 0..CLASS_COUNT {
            grad_row[j] = f * dlogits[j];
            acc += dense_row[j] * dlogits[j];
        }
        dfeat[i] = acc;
    }

    for k in 0..KERNEL_COUNT {
        let grad_kernel = &mut grads.conv[k * KERNEL_PIXELS..(k + 1) * KERNEL_PIXELS];
        for p in 0..PATCH_COUNT {
            let idx = k * PATCH_COUNT + p;
            if digital.pre_relu[idx] <= 0.0 {
                continue;
            }
            let d = dfeat[idx];
            let patch = digital.patches.patch(p);
            for q in 0..KERNEL_PIXELS {
                grad_kernel[q] += d * patch[q];
            }
        }
    }

    Ok((loss, grads))
}

/// Mean sparse categorical cross-entropy and its exact gradients over a
/// batch. Per-example seeds derive from `batch_seed`.
pub fn loss_and_grads(
    model: &CnnModel,
    batch: &[(Vec<f64>, u8)],
    config: &TrainConfig,
    batch_seed: u64,
) -> Result<(f64, Grads)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    use rayon::prelude::*;
    let per_example: Vec<(f64, Grads)> = batch
        .par_iter()
        .enumerate()
        .map(|(i, (image, label))| {
            example_loss_and_grads(model, image, *label, config, rng::frame_seed(batch_seed, i as u64))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = Grads::zeros();
    let mut loss = 0.0;
    for (l, g) in &per_example {
        loss += l;
        total.add(g);
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    Ok((loss * inv, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardware::HardwareConfig;

    fn small_model(seed: u64) -> CnnModel {
        CnnModel::init(seed)
    }

    #[test]
    fn zero_image_gives_uniform_probabilities() {
        let model = small_model(1);
        let out = forward(&model, &vec![0.0; IMAGE_PIXELS], &Backend::Digital, 0.0, 0).unwrap();
        assert!(out.feature_maps.iter().all(|&f| f == 0.0));
        for &p in &out.probabilities {
            assert!((p - 0.1).abs() < 1e-12);
        }
        assert_eq!(out.label, 0);
    }

    #[test]
    fn delta_kernel_passes_the_image_through() {
        let mut conv = vec![0.0; KERNEL_COUNT * KERNEL_PIXELS];
        conv[4] = 1.0; // kernel 0 = center one
        let model =
            CnnModel::from_weights(conv, vec![0.0; FEATURE_DIM * CLASS_COUNT]).unwrap();
        let c = 0.6;
        let out = forward(&model, &vec![c; IMAGE_PIXELS], &Backend::Digital, 0.0, 0).unwrap();
        for p in 0..PATCH_COUNT {
            assert!((out.feature_maps[p] - c).abs() < 1e-15);
        }
        for k in 1..KERNEL_COUNT {
            for p in 0..PATCH_COUNT {
                assert_eq!(out.feature_maps[k * PATCH_COUNT + p], 0.0);
            }
        }
    }

    #[test]
    fn digital_conv_matches_a_naive_nested_loop() {
        let model = small_model(3);
        let image: Vec<f64> = (0..IMAGE_PIXELS).map(|i| (i % 89) as f64 / 88.0).collect();
        let out = forward(&model, &image, &Backend::Digital, 0.0, 0).unwrap();

        // Independent oracle: explicit zero-pad + nested loops.
        let mut padded = vec![0.0; 30 * 30];
        for r in 0..28 {
            for c in 0..28 {
                padded[(r + 1) * 30 + (c + 1)] = image[r * 28 + c];
            }
        }
        for k in 0..KERNEL_COUNT {
            for orow in 0..FEATURE_GRID {
                for ocol in 0..FEATURE_GRID {
                    let mut acc = 0.0;
                    for dr in 0..3 {
                        for dc in 0..3 {
                            acc += padded[(orow * 3 + dr) * 30 + ocol * 3 + dc]
                                * model.kernel(k)[dr * 3 + dc];
                        }
                    }
                    let got = out.feature_maps[k * PATCH_COUNT + orow * FEATURE_GRID + ocol];
                    assert!((got - acc.max(0.0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_shape() {
        let model = small_model(1);
        assert!(matches!(
            forward(&model, &[0.0; 100], &Backend::Digital, 0.0, 0),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn probabilities_sum_to_one() {
        let model = small_model(7);
        let image: Vec<f64> = (0..IMAGE_PIXELS).map(|i| ((i * 37) % 255) as f64 / 255.0).collect();
        let out = forward(&model, &image, &Backend::Digital, 0.0, 0).unwrap();
        let sum: f64 = out.probabilities.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(out.probabilities.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn optical_forward_matches_digital_within_quantization() {
        let model = small_model(5);
        let cfg = HardwareConfig::new(9, 9);
        let bound = cfg.dac_quantization_bound() + cfg.adc_quantization_bound();
        let backend = Backend::Optical(OpticalBackend {
            config: cfg,
            noise: None,
        });
        let image: Vec<f64> = (0..IMAGE_PIXELS).map(|i| ((i * 13) % 200) as f64 / 255.0).collect();
        let digital = forward(&model, &image, &Backend::Digital, 0.0, 0).unwrap();
        let optical = forward(&model, &image, &backend, 0.0, 0).unwrap();
        for (a, b) in optical.feature_maps.iter().zip(&digital.feature_maps) {
            assert!((a - b).abs() <= bound + 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn ideal_optical_forward_is_exact() {
        let model = small_model(6);
        let backend = Backend::Optical(OpticalBackend {
            config: HardwareConfig::ideal(9, 9),
            noise: None,
        });
        let image: Vec<f64> = (0..IMAGE_PIXELS).map(|i| ((i * 29) % 251) as f64 / 250.0).collect();
        let digital = forward(&model, &image, &Backend::Digital, 0.0, 0).unwrap();
        let optical = forward(&model, &image, &backend, 0.0, 0).unwrap();
        for (a, b) in optical.feature_maps.iter().zip(&digital.feature_maps) {
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn activation_noise_is_seeded() {
        let model = small_model(8);
        let image = vec![0.5; IMAGE_PIXELS];
        let a = forward(&model, &image, &Backend::Digital, 0.1, 3).unwrap();
        let b = forward(&model, &image, &Backend::Digital, 0.1, 3).unwrap();
        let c = forward(&model, &image, &Backend::Digital, 0.1, 4).unwrap();
        assert_eq!(a.feature_maps, b.feature_maps);
        assert_ne!(a.feature_maps, c.feature_maps);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut model = small_model(11);
        let config = TrainConfig::digital(1, 0);
        let batch: Vec<(Vec<f64>, u8)> = vec![
            (
                (0..IMAGE_PIXELS).map(|i| ((i * 7) % 256) as f64 / 255.0).collect(),
                3,
            ),
            (
                (0..IMAGE_PIXELS).map(|i| ((i * 11) % 256) as f64 / 255.0).collect(),
                8,
            ),
        ];
        let (_, grads) = loss_and_grads(&model, &batch, &config, 0).unwrap();

        let h = 1e-4;
        let loss_at = |model: &CnnModel| loss_and_grads(model, &batch, &config, 0).unwrap().0;
        let mut check = |analytic: f64, idx: usize, is_conv: bool, model: &mut CnnModel| {
            let original = if is_conv { model.conv[idx] } else { model.dense[idx] };
            let set = |model: &mut CnnModel, v: f64| {
                if is_conv {
                    model.conv[idx] = v;
                } else {
                    model.dense[idx] = v;
                }
            };
            set(model, original + h);
            let up = loss_at(model);
            set(model, original - h);
            let down = loss_at(model);
            set(model, original);
            let numeric = (up - down) / (2.0 * h);
            if analytic.abs() < 1e-8 && numeric.abs() < 1e-8 {
                return;
            }
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
            assert!(
                rel < 1e-4,
                "{} index {idx}: analytic {analytic}, numeric {numeric}",
                if is_conv { "conv" } else { "dense" }
            );
        };

        for idx in 0..KERNEL_COUNT * KERNEL_PIXELS {
            check(grads.conv[idx], idx, true, &mut model);
        }
        // Dense is large; a strided sample covers every class column and
        // many feature rows.
        for idx in (0..FEATURE_DIM * CLASS_COUNT).step_by(173) {
            check(grads.dense[idx], idx, false, &mut model);
        }
    }

    #[test]
    fn cross_entropy_pulls_the_true_logit_up() {
        let model =
            CnnModel::from_weights(vec![0.1; 81], vec![0.0; FEATURE_DIM * CLASS_COUNT]).unwrap();
        let config = TrainConfig::digital(1, 0);
        let image = vec![0.9; IMAGE_PIXELS];
        let (_, grads) = loss_and_grads(&model, &[(image, 4)], &config, 0).unwrap();
        // Uniform probabilities: the true-class column gradient is negative
        // (gradient descent raises that logit), others positive.
        for i in 0..FEATURE_DIM {
            let row = &grads.dense[i * CLASS_COUNT..(i + 1) * CLASS_COUNT];
            if row.iter().any(|&g| g != 0.0) {
                assert!(row[4] < 0.0);
                assert!(row[0] > 0.0);
            }
        }
    }

    #[test]
    fn zero_images_produce_zero_conv_grads() {
        let model = small_model(13);
        let config = TrainConfig::digital(1, 0);
        let batch = vec![(vec![0.0; IMAGE_PIXELS], 1u8), (vec![0.0; IMAGE_PIXELS], 2u8)];
        let (_, grads) = loss_and_grads(&model, &batch, &config, 0).unwrap();
        assert!(grads.conv.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn out_of_range_labels_are_rejected() {
        let model = small_model(1);
        let config = TrainConfig::digital(1, 0);
        let batch = vec![(vec![0.5; IMAGE_PIXELS], 10u8)];
        assert!(matches!(
            loss_and_grads(&model, &batch, &config, 0),
            Err(Error::LabelOutOfRange(10))
        ));
    }

    #[test]
    fn checkpoint_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.fonn");
        let model = small_model(17);
        model.save(&path).unwrap();
        let back = CnnModel::load(&path).unwrap();
        assert_eq!(back, model);

        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"FONN");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(bytes.len(), 8 + (81 + 9000) * 8);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.fonn");
        small_model(1).save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(CnnModel::load(&path).is_err());
        std::fs::write(&path, &bytes[..100]).unwrap();
        assert!(CnnModel::load(&path).is_err());
    }
}
