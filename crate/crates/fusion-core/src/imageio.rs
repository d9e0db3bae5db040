//! Grayscale images, registered image pairs, and 8-bit PNG/PGM I/O.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageBuffer, Rgb};

use crate::autodiff::{Element, Tensor};
use crate::error::{FusionError, Result};

/// Grayscale image with values in [0,1], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(FusionError::InvalidShape(format!(
                "image data length {} does not match {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(FusionError::InvalidArgument(
                "image values must be finite and in [0,1]".into(),
            ));
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    /// Scales 8-bit samples by 1/255.
    pub fn from_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| b as f64 / 255.0).collect();
        Image::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// (1, 1, H, W) tensor view of this image.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        Tensor::from_image(
            self.height,
            self.width,
            self.data.iter().map(|&v| T::from_f64(v)).collect(),
        )
        .expect("image data matches its dimensions")
    }

    /// Rounds to 8-bit samples.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

/// Minimum image side accepted by the data pipeline.
pub const MIN_IMAGE_SIDE: usize = 32;

/// Registered anatomical + functional grayscale image pair.
#[derive(Clone, Debug)]
pub struct ImagePair {
    pub anatomical: Image,
    pub functional: Image,
    pub id: String,
}

impl ImagePair {
    pub fn new(anatomical: Image, functional: Image, id: impl Into<String>) -> Result<Self> {
        if anatomical.height != functional.height || anatomical.width != functional.width {
            return Err(FusionError::DimensionMismatch {
                left: "anatomical".into(),
                left_dims: format!("{}x{}", anatomical.height, anatomical.width),
                right: "functional".into(),
                right_dims: format!("{}x{}", functional.height, functional.width),
            });
        }
        if anatomical.height < MIN_IMAGE_SIDE || anatomical.width < MIN_IMAGE_SIDE {
            return Err(FusionError::InvalidShape(format!(
                "image pair is {}x{}, both sides must be >= {}",
                anatomical.height, anatomical.width, MIN_IMAGE_SIDE
            )));
        }
        Ok(ImagePair {
            anatomical,
            functional,
            id: id.into(),
        })
    }

    pub fn height(&self) -> usize {
        self.anatomical.height
    }

    pub fn width(&self) -> usize {
        self.anatomical.width
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FusionError + '_ {
    move |source| FusionError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> FusionError + '_ {
    move |source| FusionError::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads an 8-bit grayscale PNG or PGM image.
pub fn load_gray_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let decoded = image::open(path).map_err(image_err(path))?;
    match decoded {
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            Image::from_u8(h as usize, w as usize, img.as_raw())
        }
        DynamicImage::ImageLuma16(_) => Err(FusionError::UnsupportedBitDepth {
            path: path.to_path_buf(),
        }),
        _ => Err(FusionError::NonGrayscale {
            path: path.to_path_buf(),
        }),
    }
}

/// Writes an image as 8-bit grayscale; the format follows the extension
/// (`.png` or `.pgm`).
pub fn save_gray_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(path))?;
        }
    }
    let buf: GrayImage =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, img.to_u8())
            .expect("buffer sized from image");
    buf.save(path).map_err(image_err(path))
}

/// Writes an H×W×3 buffer of [0,1] channel values as an 8-bit RGB PNG.
pub fn save_rgb_image(rgb: &[f64], height: usize, width: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if rgb.len() != height * width * 3 {
        return Err(FusionError::InvalidShape(format!(
            "rgb buffer length {} does not match {}x{}x3",
            rgb.len(),
            height,
            width
        )));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(path))?;
        }
    }
    let bytes: Vec<u8> = rgb
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(width as u32, height as u32, bytes)
            .expect("buffer sized from dimensions");
    buf.save(path).map_err(image_err(path))
}

/// Derives a pair id from the anatomical file name, dropping a trailing
/// `_anat` if present.
pub fn pair_id_from(path: impl AsRef<Path>) -> String {
    let stem = path
        .as_ref()
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    stem.strip_suffix("_anat").unwrap_or(&stem).to_string()
}

/// Loads a registered pair from two grayscale files of equal dimensions.
pub fn load_pair(path_a: impl AsRef<Path>, path_b: impl AsRef<Path>) -> Result<ImagePair> {
    let (path_a, path_b) = (path_a.as_ref(), path_b.as_ref());
    let anatomical = load_gray_image(path_a)?;
    let functional = load_gray_image(path_b)?;
    if anatomical.height() != functional.height() || anatomical.width() != functional.width() {
        return Err(FusionError::DimensionMismatch {
            left: path_a.display().to_string(),
            left_dims: format!("{}x{}", anatomical.height(), anatomical.width()),
            right: path_b.display().to_string(),
            right_dims: format!("{}x{}", functional.height(), functional.width()),
        });
    }
    ImagePair::new(anatomical, functional, pair_id_from(path_a))
}

/// Scans a directory for `<id>_anat.*` / `<id>_func.*` pairs, sorted by id.
/// Per-pair failures are returned alongside the successfully loaded pairs.
pub fn load_dataset_lenient(dir: impl AsRef<Path>) -> Result<(Vec<ImagePair>, Vec<(String, FusionError)>)> {
    let dir = dir.as_ref();
    let mut anat_files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().ends_with("_anat"))
                .unwrap_or(false)
        })
        .collect();
    anat_files.sort();

    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    for anat in anat_files {
        let id = pair_id_from(&anat);
        let ext = anat.extension().map(|e| e.to_string_lossy().into_owned());
        let mut func = anat.clone();
        func.set_file_name(match &ext {
            Some(ext) => format!("{}_func.{}", id, ext),
            None => format!("{}_func", id),
        });
        match load_pair(&anat, &func) {
            Ok(pair) => pairs.push(pair),
            Err(e) => failures.push((id, e)),
        }
    }
    Ok((pairs, failures))
}

/// Loads a directory of pairs, failing on the first broken pair.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<ImagePair>> {
    let dir = dir.as_ref();
    let (pairs, mut failures) = load_dataset_lenient(dir)?;
    if let Some((id, err)) = failures.drain(..).next() {
        return Err(FusionError::InvalidArgument(format!(
            "pair {} failed to load: {}",
            id, err
        )));
    }
    if pairs.is_empty() {
        return Err(FusionError::EmptyDataset(format!(
            "no *_anat/*_func pairs found in {}",
            dir.display()
        )));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_out_of_range() {
        assert!(Image::new(1, 2, vec![0.0, 1.5]).is_err());
        assert!(Image::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(Image::new(1, 2, vec![0.0]).is_err());
    }

    #[test]
    fn from_u8_scales_by_255() {
        let img = Image::from_u8(1, 3, &[0, 128, 255]).unwrap();
        assert_eq!(img.data()[0], 0.0);
        assert_eq!(img.data()[2], 1.0);
        assert!((img.data()[1] - 128.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn pair_requires_equal_dims() {
        let a = Image::new(32, 32, vec![0.0; 32 * 32]).unwrap();
        let b = Image::new(32, 33, vec![0.0; 32 * 33]).unwrap();
        let err = ImagePair::new(a, b, "x").unwrap_err();
        assert!(matches!(err, FusionError::DimensionMismatch { .. }));
    }

    #[test]
    fn pair_requires_min_side() {
        let a = Image::new(16, 16, vec![0.0; 256]).unwrap();
        let err = ImagePair::new(a.clone(), a, "x").unwrap_err();
        assert!(matches!(err, FusionError::InvalidShape(_)));
    }

    #[test]
    fn pair_id_strips_suffix() {
        assert_eq!(pair_id_from("data/p0007_anat.png"), "p0007");
        assert_eq!(pair_id_from("data/scan.png"), "scan");
    }

    #[test]
    fn png_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let data: Vec<f64> = (0..64 * 64).map(|i| (i % 256) as f64 / 255.0).collect();
        let img = Image::new(64, 64, data).unwrap();
        save_gray_image(&img, &path).unwrap();
        let back = load_gray_image(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn pgm_roundtrip_exact_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let bytes: Vec<u8> = (0..40 * 32).map(|i| (i * 7 % 256) as u8).collect();
        let img = Image::from_u8(40, 32, &bytes).unwrap();
        save_gray_image(&img, &path).unwrap();
        let back = load_gray_image(&path).unwrap();
        assert_eq!(back.to_u8(), bytes);
    }

    #[test]
    fn zero_and_full_scale_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.png");
        let img = Image::from_u8(33, 33, &vec![0u8; 33 * 33]).unwrap();
        save_gray_image(&img, &path).unwrap();
        assert!(load_gray_image(&path).unwrap().data().iter().all(|&v| v == 0.0));

        let img = Image::from_u8(33, 33, &vec![255u8; 33 * 33]).unwrap();
        save_gray_image(&img, &path).unwrap();
        assert!(load_gray_image(&path).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn non_grayscale_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        save_rgb_image(&vec![0.5; 32 * 32 * 3], 32, 32, &path).unwrap();
        let err = load_gray_image(&path).unwrap_err();
        assert!(matches!(err, FusionError::NonGrayscale { .. }));
    }

    #[test]
    fn load_pair_reports_dimension_mismatch_with_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let pa = dir.path().join("p1_anat.png");
        let pb = dir.path().join("p1_func.png");
        save_gray_image(&Image::new(64, 64, vec![0.5; 64 * 64]).unwrap(), &pa).unwrap();
        save_gray_image(&Image::new(65, 64, vec![0.5; 65 * 64]).unwrap(), &pb).unwrap();
        let err = load_pair(&pa, &pb).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("p1_anat") && msg.contains("p1_func"), "{}", msg);
    }
}
