//! Dataset ingestion (IDX image/label files), patch extraction matching the
//! optical convolution geometry, and edge-detection utilities.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hardware::{encode_input, optical_mvm, Backend, WeightPlane};
use crate::rng;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// A labeled set of 8-bit grayscale images.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    rows: usize,
    cols: usize,
    images: Vec<u8>,
    labels: Vec<u8>,
}

impl ImageSet {
    pub fn from_parts(rows: usize, cols: usize, images: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        let pixel_count = rows * cols;
        if pixel_count == 0 || images.len() % pixel_count != 0 {
            return Err(Error::IdxFormat(format!(
                "image payload of {} bytes is not a multiple of {rows}x{cols}",
                images.len()
            )));
        }
        let count = images.len() / pixel_count;
        if count != labels.len() {
            return Err(Error::IdxPairing {
                images: count,
                labels: labels.len(),
            });
        }
        for &l in &labels {
            if l > 9 {
                return Err(Error::LabelOutOfRange(l));
            }
        }
        Ok(Self {
            rows,
            cols,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.images[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    /// Pixel values scaled to [0, 1].
    pub fn normalized(&self, i: usize) -> Vec<f64> {
        self.pixels(i).iter().map(|&b| f64::from(b) / 255.0).collect()
    }

    /// Deterministic random subset of `n` distinct items.
    pub fn random_subset(&self, n: usize, seed: u64) -> Result<Self> {
        if n > self.len() {
            return Err(Error::Domain(format!(
                "subset of {n} from a set of {}",
                self.len()
            )));
        }
        let mut indices: Vec<usize> = (0..self.len()).collect();
        let mut rng = rng::substream(seed, rng::SUBSET_STREAM);
        for i in 0..n {
            let j = rng.gen_range(i..indices.len());
            indices.swap(i, j);
        }
        let pixel_count = self.rows * self.cols;
        let mut images = Vec::with_capacity(n * pixel_count);
        let mut labels = Vec::with_capacity(n);
        for &idx in &indices[..n] {
            images.extend_from_slice(self.pixels(idx));
            labels.push(self.labels[idx]);
        }
        Self::from_parts(self.rows, self.cols, images, labels)
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::IdxTruncated(format!(
            "{what}: need {end} bytes, file has {}",
            bytes.len()
        )));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parse a pair of IDX files: big-endian magic 0x00000803 for images
/// (count, rows, cols, raw bytes) and 0x00000801 for labels (count, bytes).
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<ImageSet> {
    let mut image_bytes = Vec::new();
    File::open(images_path)?.read_to_end(&mut image_bytes)?;
    let mut label_bytes = Vec::new();
    File::open(labels_path)?.read_to_end(&mut label_bytes)?;

    let magic = read_u32_be(&image_bytes, 0, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::IdxFormat(format!(
            "image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}"
        )));
    }
    let count = read_u32_be(&image_bytes, 4, "image count")? as usize;
    let rows = read_u32_be(&image_bytes, 8, "image rows")? as usize;
    let cols = read_u32_be(&image_bytes, 12, "image cols")? as usize;
    let payload = count * rows * cols;
    if image_bytes.len() < 16 + payload {
        return Err(Error::IdxTruncated(format!(
            "image payload: need {} bytes, file has {}",
            16 + payload,
            image_bytes.len()
        )));
    }

    let magic = read_u32_be(&label_bytes, 0, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::IdxFormat(format!(
            "label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}"
        )));
    }
    let label_count = read_u32_be(&label_bytes, 4, "label count")? as usize;
    if label_bytes.len() < 8 + label_count {
        return Err(Error::IdxTruncated(format!(
            "label payload: need {} bytes, file has {}",
            8 + label_count,
            label_bytes.len()
        )));
    }
    if count != label_count {
        return Err(Error::IdxPairing {
            images: count,
            labels: label_count,
        });
    }

    ImageSet::from_parts(
        rows,
        cols,
        image_bytes[16..16 + payload].to_vec(),
        label_bytes[8..8 + label_count].to_vec(),
    )
}

/// Write a set back out as a pair of IDX files (bit-exact round trip).
pub fn write_idx(set: &ImageSet, images_path: &Path, labels_path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(images_path)?);
    w.write_all(&IMAGE_MAGIC.to_be_bytes())?;
    w.write_all(&(set.len() as u32).to_be_bytes())?;
    w.write_all(&(set.rows as u32).to_be_bytes())?;
    w.write_all(&(set.cols as u32).to_be_bytes())?;
    w.write_all(&set.images)?;
    w.flush()?;

    let mut w = BufWriter::new(File::create(labels_path)?);
    w.write_all(&LABEL_MAGIC.to_be_bytes())?;
    w.write_all(&(set.len() as u32).to_be_bytes())?;
    w.write_all(&set.labels)?;
    w.flush()?;
    Ok(())
}

/// Flattened k x k patches of a zero-padded image, row-major within each
/// patch, patches ordered row-major over the output grid.
#[derive(Clone, Debug)]
pub struct PatchMatrix {
    patch_len: usize,
    patches: Vec<f64>,
    origins: Vec<(usize, usize)>,
    grid: (usize, usize),
    padded: (usize, usize),
}

impl PatchMatrix {
    pub fn count(&self) -> usize {
        self.origins.len()
    }

    pub fn patch_len(&self) -> usize {
        self.patch_len
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        &self.patches[i * self.patch_len..(i + 1) * self.patch_len]
    }

    /// Top-left corner of patch `i` in padded-image coordinates.
    pub fn origin(&self, i: usize) -> (usize, usize) {
        self.origins[i]
    }

    /// Output grid shape (rows, cols).
    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    /// Padded image shape the patches were cut from.
    pub fn padded_shape(&self) -> (usize, usize) {
        self.padded
    }
}

/// Zero-pad an image and cut it into k x k patches at the given stride.
/// Errors when the kernel/stride do not tile the padded size exactly.
pub fn extract_patches(
    image: &[f64],
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<PatchMatrix> {
    if image.len() != height * width {
        return Err(Error::Dimension {
            context: "extract_patches image",
            expected: height * width,
            actual: image.len(),
        });
    }
    if kernel == 0 || stride == 0 {
        return Err(Error::Geometry("kernel and stride must be >= 1".into()));
    }
    let ph = height + 2 * pad;
    let pw = width + 2 * pad;
    if ph < kernel || pw < kernel || (ph - kernel) % stride != 0 || (pw - kernel) % stride != 0 {
        return Err(Error::Geometry(format!(
            "kernel {kernel} stride {stride} does not tile the padded {ph}x{pw} image"
        )));
    }

    let mut padded = vec![0.0; ph * pw];
    for r in 0..height {
        for c in 0..width {
            padded[(r + pad) * pw + (c + pad)] = image[r * width + c];
        }
    }

    let grid_rows = (ph - kernel) / stride + 1;
    let grid_cols = (pw - kernel) / stride + 1;
    let patch_len = kernel * kernel;
    let mut patches = Vec::with_capacity(grid_rows * grid_cols * patch_len);
    let mut origins = Vec::with_capacity(grid_rows * grid_cols);
    for gr in 0..grid_rows {
        for gc in 0..grid_cols {
            let r0 = gr * stride;
            let c0 = gc * stride;
            origins.push((r0, c0));
            for dr in 0..kernel {
                for dc in 0..kernel {
                    patches.push(padded[(r0 + dr) * pw + (c0 + dc)]);
                }
            }
        }
    }

    Ok(PatchMatrix {
        patch_len,
        patches,
        origins,
        grid: (grid_rows, grid_cols),
        padded: (ph, pw),
    })
}

/// 3x3 Laplacian, scaled by 1/8 so every weight sits in [-1, 1].
pub const EDGE_KERNEL: [f64; 9] = [
    -0.125, -0.125, -0.125, -0.125, 1.0, -0.125, -0.125, -0.125, -0.125,
];

/// Binarization threshold for edge maps, as a fraction of the unit output
/// full scale of the 1/8-scaled Laplacian on [0, 1] inputs.
pub const EDGE_BINARIZE_THRESHOLD: f64 = 0.2;

/// Result of one edge-detection run.
#[derive(Clone, Debug)]
pub struct EdgeDetection {
    /// Signed edge response per pixel, row-major, same shape as the input.
    pub map: Vec<f64>,
    /// Fraction of pixels whose binarized response matches the exact
    /// digital oracle (1.0 for the digital backend by definition).
    pub agreement: f64,
}

/// Convolve a grayscale image with the scaled Laplacian (stride 1, zero pad
/// 1). The optical backend streams every 9-pixel patch through the MVM with
/// the kernel on a single fanout copy; `agreement` compares binarized maps
/// against the exact digital convolution.
pub fn edge_detect(
    image: &[f64],
    height: usize,
    width: usize,
    backend: &Backend,
    seed: u64,
) -> Result<EdgeDetection> {
    for &v in image {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("pixel value {v} outside [0, 1]")));
        }
    }
    let patches = extract_patches(image, height, width, 3, 1, 1)?;
    let digital: Vec<f64> = (0..patches.count())
        .map(|i| {
            patches
                .patch(i)
                .iter()
                .zip(EDGE_KERNEL.iter())
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();

    let map = match backend {
        Backend::Digital => digital.clone(),
        Backend::Optical(optical) => {
            let cfg = &optical.config;
            if cfg.n_inputs != 9 || cfg.n_fanout != 1 {
                return Err(Error::Config(format!(
                    "edge detection needs a 9-input single-copy system, got {}x{}",
                    cfg.n_inputs, cfg.n_fanout
                )));
            }
            let plane = WeightPlane::from_weights(1, 9, &EDGE_KERNEL)?;
            let mut out = Vec::with_capacity(patches.count());
            for i in 0..patches.count() {
                let frame = encode_input(patches.patch(i), cfg)?;
                let readout = optical_mvm(
                    &frame,
                    &plane,
                    cfg,
                    optical.noise.as_ref(),
                    rng::frame_seed(seed, i as u64),
                )?;
                out.push(readout.analog[0]);
            }
            out
        }
    };

    let matches = map
        .iter()
        .zip(&digital)
        .filter(|(a, b)| {
            (a.abs() > EDGE_BINARIZE_THRESHOLD) == (b.abs() > EDGE_BINARIZE_THRESHOLD)
        })
        .count();
    let agreement = matches as f64 / map.len() as f64;

    Ok(EdgeDetection { map, agreement })
}

/// Write values as a binary PGM (P5, maxval 255); each pixel is the
/// magnitude clamped to [0, 1] and scaled to 255.
pub fn write_pgm(path: &Path, values: &[f64], height: usize, width: usize) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::Dimension {
            context: "write_pgm",
            expected: height * width,
            actual: values.len(),
        });
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = values
        .iter()
        .map(|&v| (v.abs().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Read a binary PGM (P5) into [0, 1] grayscale values.
pub fn read_pgm(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::IdxFormat("truncated pgm header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::IdxFormat(format!(
            "unsupported pgm type {}, expected P5",
            fields[0]
        )));
    }
    let width: usize = fields[1]
        .parse()
        .map_err(|_| Error::IdxFormat("bad pgm width".into()))?;
    let height: usize = fields[2]
        .parse()
        .map_err(|_| Error::IdxFormat("bad pgm height".into()))?;
    let maxval: f64 = fields[3]
        .parse()
        .map_err(|_| Error::IdxFormat("bad pgm maxval".into()))?;
    if !(1.0..=255.0).contains(&maxval) {
        return Err(Error::IdxFormat(format!("unsupported pgm maxval {maxval}")));
    }
    pos += 1; // single whitespace after maxval
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(Error::IdxTruncated(format!(
            "pgm payload: need {need} bytes, have {}",
            bytes.len().saturating_sub(pos)
        )));
    }
    let values = bytes[pos..pos + need]
        .iter()
        .map(|&b| f64::from(b) / maxval)
        .collect();
    Ok((values, height, width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardware::{HardwareConfig, OpticalBackend};

    fn tiny_idx_images(count: u32, rows: u32, cols: u32, payload: &[u8]) -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&count.to_be_bytes());
        bytes.extend_from_slice(&rows.to_be_bytes());
        bytes.extend_from_slice(&cols.to_be_bytes());
        bytes.extend_from_slice(payload);
        bytes
    }

    fn tiny_idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        bytes.extend_from_slice(labels);
        bytes
    }

    fn write_temp(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, bytes).unwrap();
        path
    }

    #[test]
    fn parses_a_hand_built_idx_pair() {
        let dir = tempfile::tempdir().unwrap();
        let payload: Vec<u8> = (0..1568u32).map(|i| (i % 251) as u8).collect();
        let images = write_temp(dir.path(), "img", &tiny_idx_images(2, 28, 28, &payload));
        let labels = write_temp(dir.path(), "lbl", &tiny_idx_labels(&[3, 7]));
        let set = load_idx(&images, &labels).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.rows(), 28);
        assert_eq!(set.cols(), 28);
        assert_eq!(set.label(1), 7);
        assert_eq!(set.pixels(0), &payload[..784]);
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = tiny_idx_images(1, 2, 2, &[0; 4]);
        bytes[3] = 0x04;
        let images = write_temp(dir.path(), "img", &bytes);
        let labels = write_temp(dir.path(), "lbl", &tiny_idx_labels(&[0]));
        assert!(matches!(
            load_idx(&images, &labels),
            Err(Error::IdxFormat(_))
        ));
    }

    #[test]
    fn rejects_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_temp(dir.path(), "img", &tiny_idx_images(2, 2, 2, &[0; 7]));
        let labels = write_temp(dir.path(), "lbl", &tiny_idx_labels(&[0, 1]));
        assert!(matches!(
            load_idx(&images, &labels),
            Err(Error::IdxTruncated(_))
        ));
    }

    #[test]
    fn rejects_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_temp(dir.path(), "img", &tiny_idx_images(2, 2, 2, &[0; 8]));
        let labels = write_temp(dir.path(), "lbl", &tiny_idx_labels(&[0, 1, 2]));
        assert!(matches!(
            load_idx(&images, &labels),
            Err(Error::IdxPairing {
                images: 2,
                labels: 3
            })
        ));
    }

    #[test]
    fn idx_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let payload: Vec<u8> = (0..3 * 28 * 28u32).map(|i| (i * 7 % 256) as u8).collect();
        let set = ImageSet::from_parts(28, 28, payload, vec![1, 5, 9]).unwrap();
        let img_path = dir.path().join("img");
        let lbl_path = dir.path().join("lbl");
        write_idx(&set, &img_path, &lbl_path).unwrap();
        let back = load_idx(&img_path, &lbl_path).unwrap();
        assert_eq!(back, set);
        // And the files themselves round-trip byte for byte.
        let img_bytes = std::fs::read(&img_path).unwrap();
        write_idx(&back, &img_path, &lbl_path).unwrap();
        assert_eq!(std::fs::read(&img_path).unwrap(), img_bytes);
    }

    #[test]
    fn default_patching_yields_100_patches_of_9() {
        let image = vec![0.5; 28 * 28];
        let patches = extract_patches(&image, 28, 28, 3, 3, 1).unwrap();
        assert_eq!(patches.count(), 100);
        assert_eq!(patches.patch_len(), 9);
        assert_eq!(patches.grid(), (10, 10));
    }

    #[test]
    fn zero_image_gives_zero_patches() {
        let image = vec![0.0; 28 * 28];
        let patches = extract_patches(&image, 28, 28, 3, 3, 1).unwrap();
        for i in 0..patches.count() {
            assert!(patches.patch(i).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_corner_pixel_lands_at_flat_position_4() {
        let mut image = vec![0.0; 28 * 28];
        image[0] = 1.0;
        let patches = extract_patches(&image, 28, 28, 3, 3, 1).unwrap();
        let hot: Vec<(usize, usize)> = (0..patches.count())
            .flat_map(|i| {
                patches
                    .patch(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(move |(j, _)| (i, j))
                    .collect::<Vec<_>>()
            })
            .collect();
        assert_eq!(hot, vec![(0, 4)]);
    }

    #[test]
    fn patches_partition_the_padded_image() {
        let image: Vec<f64> = (0..28 * 28).map(|i| (i % 97) as f64 / 96.0).collect();
        let patches = extract_patches(&image, 28, 28, 3, 3, 1).unwrap();
        let (ph, pw) = patches.padded_shape();
        let mut rebuilt = vec![f64::NAN; ph * pw];
        for i in 0..patches.count() {
            let (r0, c0) = patches.origin(i);
            for dr in 0..3 {
                for dc in 0..3 {
                    let dst = (r0 + dr) * pw + (c0 + dc);
                    assert!(rebuilt[dst].is_nan(), "pixel covered twice");
                    rebuilt[dst] = patches.patch(i)[dr * 3 + dc];
                }
            }
        }
        for r in 0..28 {
            for c in 0..28 {
                assert_eq!(rebuilt[(r + 1) * pw + (c + 1)], image[r * 28 + c]);
            }
        }
    }

    #[test]
    fn non_tiling_geometry_is_rejected() {
        let image = vec![0.0; 28 * 28];
        assert!(matches!(
            extract_patches(&image, 28, 28, 3, 4, 1),
            Err(Error::Geometry(_))
        ));
        assert!(matches!(
            extract_patches(&image, 28, 28, 40, 3, 1),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn laplacian_kills_constants_away_from_the_border() {
        let image = vec![0.7; 16 * 16];
        let edges = edge_detect(&image, 16, 16, &Backend::Digital, 0).unwrap();
        for r in 1..15 {
            for c in 1..15 {
                assert!(edges.map[r * 16 + c].abs() < 1e-15);
            }
        }
        // All-zero input has no border response either.
        let zeros = edge_detect(&vec![0.0; 16 * 16], 16, 16, &Backend::Digital, 0).unwrap();
        assert!(zeros.map.iter().all(|&v| v == 0.0));
        assert_eq!(zeros.agreement, 1.0);
    }

    #[test]
    fn ideal_optical_edge_map_agrees_exactly() {
        let image: Vec<f64> = (0..12 * 12)
            .map(|i| if (i / 12 + i % 12) % 3 == 0 { 0.9 } else { 0.1 })
            .collect();
        let backend = Backend::Optical(OpticalBackend {
            config: HardwareConfig::ideal(9, 1),
            noise: None,
        });
        let edges = edge_detect(&image, 12, 12, &backend, 0).unwrap();
        assert_eq!(edges.agreement, 1.0);
        let digital = edge_detect(&image, 12, 12, &Backend::Digital, 0).unwrap();
        for (a, b) in edges.map.iter().zip(&digital.map) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn quantized_optical_edge_map_stays_close() {
        let image: Vec<f64> = (0..20 * 20)
            .map(|i| ((i * 31 % 101) as f64 / 100.0))
            .collect();
        let backend = Backend::Optical(OpticalBackend {
            config: HardwareConfig::new(9, 1),
            noise: None,
        });
        let edges = edge_detect(&image, 20, 20, &backend, 0).unwrap();
        assert!(edges.agreement >= 0.99, "agreement {}", edges.agreement);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.pgm");
        let values: Vec<f64> = (0..64).map(|i| i as f64 / 63.0).collect();
        write_pgm(&path, &values, 8, 8).unwrap();
        let (back, h, w) = read_pgm(&path).unwrap();
        assert_eq!((h, w), (8, 8));
        for (a, b) in back.iter().zip(&values) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn random_subset_is_deterministic_and_distinct() {
        let payload: Vec<u8> = (0..20 * 4).map(|i| i as u8).collect();
        let set = ImageSet::from_parts(2, 2, payload, (0..20).map(|i| i % 10).collect()).unwrap();
        let a = set.random_subset(8, 42).unwrap();
        let b = set.random_subset(8, 42).unwrap();
        let c = set.random_subset(8, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 8);
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn idx_round_trip(
            count in 1usize..5,
            rows in 1usize..6,
            cols in 1usize..6,
            seed in 0u64..1000,
        ) {
            let mut b = seed;
            let mut next = move || { b = b.wrapping_mul(6364136223846793005).wrapping_add(1); (b >> 33) as u8 };
            let images: Vec<u8> = (0..count * rows * cols).map(|_| next()).collect();
            let labels: Vec<u8> = (0..count).map(|_| next() % 10).collect();
            let set = ImageSet::from_parts(rows, cols, images, labels).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let ip = dir.path().join("i");
            let lp = dir.path().join("l");
            write_idx(&set, &ip, &lp).unwrap();
            prop_assert_eq!(load_idx(&ip, &lp).unwrap(), set);
        }
    }
}
