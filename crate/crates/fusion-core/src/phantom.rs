//! Deterministic synthetic phantom pairs: sharp, textured anatomical images
//! and smooth, blobby functional images, spatially correlated.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::error::{FusionError, Result};
use crate::imageio::{save_gray_image, Image, ImagePair, MIN_IMAGE_SIDE};

/// Parameters of the phantom generator.
#[derive(Clone, Debug)]
pub struct PhantomSpec {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Ellipses/polygons per anatomical image.
    pub shapes: usize,
    /// Gaussian blobs per functional image (placed on a subset of the
    /// anatomical shapes).
    pub blobs: usize,
    /// Smoothing applied to the functional image, in pixels.
    pub smooth_sigma: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            count: 16,
            width: 64,
            height: 64,
            seed: 7,
            shapes: 7,
            blobs: 3,
            smooth_sigma: 3.0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(FusionError::InvalidArgument(
                "phantom count must be >= 1".into(),
            ));
        }
        if self.width < MIN_IMAGE_SIDE || self.height < MIN_IMAGE_SIDE {
            return Err(FusionError::InvalidArgument(format!(
                "phantom size {}x{} too small, both sides must be >= {}",
                self.height, self.width, MIN_IMAGE_SIDE
            )));
        }
        if self.shapes == 0 || self.blobs == 0 {
            return Err(FusionError::InvalidArgument(
                "phantoms need at least one shape and one blob".into(),
            ));
        }
        if !(self.smooth_sigma > 0.0) {
            return Err(FusionError::InvalidArgument(
                "smooth_sigma must be positive".into(),
            ));
        }
        Ok(())
    }
}

enum ShapeKind {
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        rot: f64,
    },
    ConvexPolygon {
        pts: Vec<(f64, f64)>,
    },
}

impl ShapeKind {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            ShapeKind::Ellipse { cx, cy, rx, ry, rot } => {
                let (dx, dy) = (x - cx, y - cy);
                let (c, s) = (rot.cos(), rot.sin());
                let u = (dx * c + dy * s) / rx;
                let v = (-dx * s + dy * c) / ry;
                u * u + v * v <= 1.0
            }
            ShapeKind::ConvexPolygon { pts } => {
                let n = pts.len();
                let mut sign = 0.0f64;
                for i in 0..n {
                    let (x1, y1) = pts[i];
                    let (x2, y2) = pts[(i + 1) % n];
                    let cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
                    if cross.abs() < 1e-12 {
                        continue;
                    }
                    if sign == 0.0 {
                        sign = cross.signum();
                    } else if cross.signum() != sign {
                        return false;
                    }
                }
                true
            }
        }
    }

    fn center(&self) -> (f64, f64) {
        match self {
            ShapeKind::Ellipse { cx, cy, .. } => (*cx, *cy),
            ShapeKind::ConvexPolygon { pts } => {
                let n = pts.len() as f64;
                (
                    pts.iter().map(|p| p.0).sum::<f64>() / n,
                    pts.iter().map(|p| p.1).sum::<f64>() / n,
                )
            }
        }
    }
}

fn random_shape(rng: &mut ChaCha12Rng, w: f64, h: f64) -> ShapeKind {
    let cx = rng.random_range(0.15 * w..0.85 * w);
    let cy = rng.random_range(0.15 * h..0.85 * h);
    let max_r = 0.28 * w.min(h);
    if rng.random::<f64>() < 0.6 {
        ShapeKind::Ellipse {
            cx,
            cy,
            rx: rng.random_range(0.25 * max_r..max_r),
            ry: rng.random_range(0.25 * max_r..max_r),
            rot: rng.random_range(0.0..PI),
        }
    } else {
        let sides = rng.random_range(3..=5usize);
        let base = rng.random_range(0.0..2.0 * PI);
        let mut pts = Vec::with_capacity(sides);
        for i in 0..sides {
            // Angles in increasing order keep the polygon convex.
            let ang = base + 2.0 * PI * (i as f64 + rng.random_range(0.0..0.6)) / sides as f64;
            let r = rng.random_range(0.35 * max_r..max_r);
            pts.push((cx + r * ang.cos(), cy + r * ang.sin()));
        }
        ShapeKind::ConvexPolygon { pts }
    }
}

/// Separable Gaussian blur with replicated edges.
fn gaussian_blur(data: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for d in -radius..=radius {
        kernel.push((-(d * d) as f64 / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let xx = clamp(x as i64 + i as i64 - radius, w);
                acc += k * data[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let yy = clamp(y as i64 + i as i64 - radius, h);
                acc += k * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Snaps to the 8-bit grid so in-memory phantoms equal their PNG round-trip.
fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Generates one deterministic pair; `index` selects an independent RNG
/// stream under the spec's seed.
pub fn generate_pair(spec: &PhantomSpec, index: usize) -> Result<ImagePair> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let (h, w) = (spec.height, spec.width);
    let (hf, wf) = (h as f64, w as f64);

    let shapes: Vec<ShapeKind> = (0..spec.shapes)
        .map(|_| random_shape(&mut rng, wf, hf))
        .collect();
    let background = rng.random_range(0.05..0.12);
    let shade: Vec<f64> = (0..spec.shapes)
        .map(|_| rng.random_range(0.3..0.9))
        .collect();
    struct Texture {
        amp: f64,
        fx: f64,
        fy: f64,
        phase: f64,
    }
    let textures: Vec<Texture> = (0..spec.shapes)
        .map(|_| Texture {
            amp: rng.random_range(0.04..0.08),
            fx: rng.random_range(0.20..0.45),
            fy: rng.random_range(0.20..0.45),
            phase: rng.random_range(0.0..2.0 * PI),
        })
        .collect();

    let mut anat = vec![background; h * w];
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
            for (s, shape) in shapes.iter().enumerate() {
                if shape.contains(xf, yf) {
                    let t = &textures[s];
                    let tex = t.amp * (2.0 * PI * (t.fx * xf + t.fy * yf) + t.phase).sin();
                    anat[y * w + x] = shade[s] + tex;
                }
            }
        }
    }

    // Functional content: a smooth metabolic field that tracks the blurred
    // anatomy at low frequency, a gentle global modulation, and blobs on a
    // random subset of the anatomical shapes.
    let mut order: Vec<usize> = (0..spec.shapes).collect();
    order.shuffle(&mut rng);
    let chosen = &order[..spec.blobs.min(spec.shapes)];
    struct Wave {
        amp: f64,
        fx: f64,
        fy: f64,
        phase: f64,
    }
    let waves: Vec<Wave> = (0..2)
        .map(|_| {
            let angle = rng.random_range(0.0..PI);
            let freq = rng.random_range(0.6..1.4) / wf.min(hf);
            Wave {
                amp: rng.random_range(0.04..0.08),
                fx: freq * angle.cos(),
                fy: freq * angle.sin(),
                phase: rng.random_range(0.0..2.0 * PI),
            }
        })
        .collect();
    let base = rng.random_range(0.10..0.16);
    let uptake = rng.random_range(0.5..0.7);
    let anat_smooth = gaussian_blur(&anat, h, w, 2.0 * spec.smooth_sigma);
    let mut func = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut v = base + uptake * anat_smooth[y * w + x];
            for wv in &waves {
                v += wv.amp * (2.0 * PI * (wv.fx * xf + wv.fy * yf) + wv.phase).sin();
            }
            func[y * w + x] = v;
        }
    }
    for &s in chosen {
        let (cx, cy) = shapes[s].center();
        let cx = (cx + rng.random_range(-2.0..2.0)).clamp(0.0, wf - 1.0);
        let cy = (cy + rng.random_range(-2.0..2.0)).clamp(0.0, hf - 1.0);
        let sigma = rng.random_range(0.08..0.16) * wf.min(hf);
        let amp = rng.random_range(0.4..0.7);
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                func[y * w + x] += amp * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    for v in &mut func {
        *v = v.clamp(0.0, 1.0);
    }
    let func = gaussian_blur(&func, h, w, spec.smooth_sigma);

    let anat: Vec<f64> = anat.into_iter().map(quantize).collect();
    let func: Vec<f64> = func.into_iter().map(quantize).collect();
    ImagePair::new(
        Image::new(h, w, anat)?,
        Image::new(h, w, func)?,
        format!("ph{:03}", index),
    )
}

/// Generates the whole dataset in memory.
pub fn generate_dataset(spec: &PhantomSpec) -> Result<Vec<ImagePair>> {
    spec.validate()?;
    (0..spec.count).map(|i| generate_pair(spec, i)).collect()
}

/// Writes `<id>_anat.png` / `<id>_func.png` files; returns the path pairs.
pub fn generate_phantoms(
    spec: &PhantomSpec,
    dir: impl AsRef<Path>,
) -> Result<Vec<(PathBuf, PathBuf)>> {
    let dir = dir.as_ref();
    let pairs = generate_dataset(spec)?;
    let mut paths = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let anat_path = dir.join(format!("{}_anat.png", pair.id));
        let func_path = dir.join(format!("{}_func.png", pair.id));
        save_gray_image(&pair.anatomical, &anat_path)?;
        save_gray_image(&pair.functional, &func_path)?;
        paths.push((anat_path, func_path));
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageio::load_pair;

    /// 4-neighbor Laplacian energy over interior pixels.
    fn laplacian_energy(img: &Image) -> f64 {
        let (h, w) = (img.height(), img.width());
        let mut acc = 0.0;
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let lap = 4.0 * img.at(y, x)
                    - img.at(y - 1, x)
                    - img.at(y + 1, x)
                    - img.at(y, x - 1)
                    - img.at(y, x + 1);
                acc += lap * lap;
            }
        }
        acc / ((h - 2) * (w - 2)) as f64
    }

    #[test]
    fn functional_is_smoother_than_anatomical() {
        let spec = PhantomSpec::default();
        for pair in generate_dataset(&spec).unwrap() {
            let ea = laplacian_energy(&pair.anatomical);
            let ef = laplacian_energy(&pair.functional);
            assert!(
                ef < ea,
                "pair {}: functional energy {} >= anatomical {}",
                pair.id,
                ef,
                ea
            );
        }
    }

    #[test]
    fn zero_count_is_an_error() {
        let spec = PhantomSpec {
            count: 0,
            ..Default::default()
        };
        assert!(generate_dataset(&spec).is_err());
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let spec = PhantomSpec {
            count: 4,
            ..Default::default()
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let pa = generate_phantoms(&spec, dir_a.path()).unwrap();
        let pb = generate_phantoms(&spec, dir_b.path()).unwrap();
        assert_eq!(pa.len(), 4);
        for ((a1, f1), (a2, f2)) in pa.iter().zip(&pb) {
            assert_eq!(std::fs::read(a1).unwrap(), std::fs::read(a2).unwrap());
            assert_eq!(std::fs::read(f1).unwrap(), std::fs::read(f2).unwrap());
        }
    }

    #[test]
    fn disk_roundtrip_equals_in_memory() {
        let spec = PhantomSpec {
            count: 2,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let paths = generate_phantoms(&spec, dir.path()).unwrap();
        let mem = generate_dataset(&spec).unwrap();
        for ((anat, func), pair) in paths.iter().zip(&mem) {
            let loaded = load_pair(anat, func).unwrap();
            assert_eq!(loaded.anatomical.data(), pair.anatomical.data());
            assert_eq!(loaded.functional.data(), pair.functional.data());
            assert_eq!(loaded.id, pair.id);
        }
    }

    #[test]
    fn pairs_differ_across_indices() {
        let spec = PhantomSpec::default();
        let a = generate_pair(&spec, 0).unwrap();
        let b = generate_pair(&spec, 1).unwrap();
        assert_ne!(a.anatomical.data(), b.anatomical.data());
    }
}
