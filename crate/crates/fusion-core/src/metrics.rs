//! No-reference fusion quality metrics and the batch evaluation report.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use crate::error::{FusionError, Result};
use crate::imageio::{Image, ImagePair};
use crate::loss::{ssim, SsimParams};
use crate::network::fuse;
use crate::params::ParamSet;

/// Averaged source-to-fused SSIM: `(ssim(i1,f) + ssim(i2,f)) / 2`.
pub fn q_ssim(i1: &Image, i2: &Image, f: &Image) -> Result<f64> {
    let p = SsimParams::default();
    let ft = f.to_tensor::<f64>();
    let s1 = ssim(&i1.to_tensor(), &ft, &p)?;
    let s2 = ssim(&i2.to_tensor(), &ft, &p)?;
    Ok(0.5 * (s1 + s2))
}

/// Sigmoid constants of the edge-preservation metric (published reference
/// defaults; the perfect-preservation ceiling they give is about 0.975).
#[derive(Clone, Copy, Debug)]
pub struct QgParams {
    pub gamma_g: f64,
    pub kappa_g: f64,
    pub sigma_g: f64,
    pub gamma_a: f64,
    pub kappa_a: f64,
    pub sigma_a: f64,
}

impl Default for QgParams {
    fn default() -> Self {
        QgParams {
            gamma_g: 0.9994,
            kappa_g: -15.0,
            sigma_g: 0.5,
            gamma_a: 0.9879,
            kappa_a: -22.0,
            sigma_a: 0.8,
        }
    }
}

/// Sobel gradient magnitude and orientation over the full image, with
/// replicated borders so a constant image has no gradient anywhere.
/// Orientation is `atan(gy/gx)` in [-pi/2, pi/2]; a zero-gradient pixel gets
/// orientation 0.
pub(crate) fn sobel_fields(img: &Image) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (img.height(), img.width());
    let at = |y: i64, x: i64| -> f64 {
        img.at(
            y.clamp(0, h as i64 - 1) as usize,
            x.clamp(0, w as i64 - 1) as usize,
        )
    };
    let mut strength = vec![0.0; h * w];
    let mut orient = vec![0.0; h * w];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let gx = -at(y - 1, x - 1) + at(y - 1, x + 1) - 2.0 * at(y, x - 1)
                + 2.0 * at(y, x + 1)
                - at(y + 1, x - 1)
                + at(y + 1, x + 1);
            let gy = -at(y - 1, x - 1) - 2.0 * at(y - 1, x) - at(y - 1, x + 1)
                + at(y + 1, x - 1)
                + 2.0 * at(y + 1, x)
                + at(y + 1, x + 1);
            let idx = y as usize * w + x as usize;
            strength[idx] = (gx * gx + gy * gy).sqrt();
            orient[idx] = if gx == 0.0 {
                if gy == 0.0 {
                    0.0
                } else {
                    FRAC_PI_2 * gy.signum()
                }
            } else {
                (gy / gx).atan()
            };
        }
    }
    (strength, orient)
}

fn preservation(
    g_src: f64,
    a_src: f64,
    g_fused: f64,
    a_fused: f64,
    p: &QgParams,
) -> f64 {
    let strength_ratio = if g_src == 0.0 && g_fused == 0.0 {
        0.0
    } else if g_src > g_fused {
        g_fused / g_src
    } else {
        g_src / g_fused
    };
    let orient_sim = 1.0 - (a_src - a_fused).abs() / FRAC_PI_2;
    let qg = p.gamma_g / (1.0 + (p.kappa_g * (strength_ratio - p.sigma_g)).exp());
    let qa = p.gamma_a / (1.0 + (p.kappa_a * (orient_sim - p.sigma_a)).exp());
    qg * qa
}

/// Edge-preservation metric with explicit sigmoid constants: per-pixel edge
/// strength and orientation preservation of each source within the fused
/// image, weighted by source edge strength.
pub fn q_g_with(i1: &Image, i2: &Image, f: &Image, p: &QgParams) -> Result<f64> {
    if i1.height() != f.height()
        || i1.width() != f.width()
        || i2.height() != f.height()
        || i2.width() != f.width()
    {
        return Err(FusionError::InvalidShape(format!(
            "q_g: image dimensions differ ({}x{}, {}x{}, {}x{})",
            i1.height(),
            i1.width(),
            i2.height(),
            i2.width(),
            f.height(),
            f.width()
        )));
    }
    let (ga, aa) = sobel_fields(i1);
    let (gb, ab) = sobel_fields(i2);
    let (gf, af) = sobel_fields(f);
    let mut num = 0.0;
    let mut den = 0.0;
    for idx in 0..ga.len() {
        let qa = preservation(ga[idx], aa[idx], gf[idx], af[idx], p);
        let qb = preservation(gb[idx], ab[idx], gf[idx], af[idx], p);
        num += qa * ga[idx] + qb * gb[idx];
        den += ga[idx] + gb[idx];
    }
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// Edge-preservation metric at the reference constants.
pub fn q_g(i1: &Image, i2: &Image, f: &Image) -> Result<f64> {
    q_g_with(i1, i2, f, &QgParams::default())
}

/// Metrics of one fused pair. `q_ssim` is clamped to [0,1] for reporting.
#[derive(Clone, Debug)]
pub struct PairMetrics {
    pub pair_id: String,
    pub q_ssim: f64,
    pub q_g: f64,
    pub fuse_ms: f64,
}

/// Per-pair and mean metrics of one evaluation cell.
#[derive(Clone, Debug)]
pub struct MetricReport {
    pub lambda: f64,
    pub omega: f64,
    pub per_pair: Vec<PairMetrics>,
    pub mean_q_ssim: f64,
    pub mean_q_g: f64,
    pub runtime_seconds: f64,
}

impl MetricReport {
    /// Per-pair CSV with the fixed column set.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_id,q_ssim,q_g,fuse_ms\n");
        for p in &self.per_pair {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.pair_id, p.q_ssim, p.q_g, p.fuse_ms
            ));
        }
        out
    }

    /// Human-readable table with a trailing mean row.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "lambda={:.2} omega={:.2} ({} pairs, {:.3} s)\n",
            self.lambda,
            self.omega,
            self.per_pair.len(),
            self.runtime_seconds
        ));
        out.push_str(&format!(
            "{:<12} {:>8} {:>8} {:>9}\n",
            "pair_id", "q_ssim", "q_g", "fuse_ms"
        ));
        for p in &self.per_pair {
            out.push_str(&format!(
                "{:<12} {:>8.4} {:>8.4} {:>9.2}\n",
                p.pair_id, p.q_ssim, p.q_g, p.fuse_ms
            ));
        }
        out.push_str(&format!(
            "{:<12} {:>8.4} {:>8.4}\n",
            "mean", self.mean_q_ssim, self.mean_q_g
        ));
        out
    }
}

/// Fuses every pair and scores it with both metrics. Deterministic given the
/// parameters and pairs; wall-clock fields are informational only.
pub fn evaluate_batch(
    params: &ParamSet,
    pairs: &[ImagePair],
    lambda: f64,
    omega: f64,
) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(FusionError::EmptyDataset(
            "evaluation requires at least one image pair".into(),
        ));
    }
    let started = Instant::now();
    let mut per_pair = Vec::with_capacity(pairs.len());
    let mut sum_ssim = 0.0;
    let mut sum_g = 0.0;
    for pair in pairs {
        let t0 = Instant::now();
        let fused_tensor = fuse(params, pair)?;
        let fuse_ms = t0.elapsed().as_secs_f64() * 1e3;
        let fused = Image::new(
            pair.height(),
            pair.width(),
            fused_tensor.into_data(),
        )?;
        let qs = q_ssim(&pair.anatomical, &pair.functional, &fused)?.clamp(0.0, 1.0);
        let qg = q_g(&pair.anatomical, &pair.functional, &fused)?;
        sum_ssim += qs;
        sum_g += qg;
        per_pair.push(PairMetrics {
            pair_id: pair.id.clone(),
            q_ssim: qs,
            q_g: qg,
            fuse_ms,
        });
    }
    let n = pairs.len() as f64;
    Ok(MetricReport {
        lambda,
        omega,
        per_pair,
        mean_q_ssim: sum_ssim / n,
        mean_q_g: sum_g / n,
        runtime_seconds: started.elapsed().as_secs_f64().max(f64::MIN_POSITIVE),
    })
}

/// Evaluates a lambda x omega grid, one report per cell. The fused output of
/// a fixed checkpoint does not depend on lambda or omega, so the metrics are
/// computed once and echoed into every cell.
pub fn evaluate_grid(
    params: &ParamSet,
    pairs: &[ImagePair],
    lambdas: &[f64],
    omegas: &[f64],
) -> Result<Vec<MetricReport>> {
    if lambdas.is_empty() || omegas.is_empty() {
        return Err(FusionError::InvalidArgument(
            "grid sweep needs at least one lambda and one omega".into(),
        ));
    }
    let base = evaluate_batch(params, pairs, lambdas[0], omegas[0])?;
    let mut reports = Vec::with_capacity(lambdas.len() * omegas.len());
    for &lambda in lambdas {
        for &omega in omegas {
            let mut cell = base.clone();
            cell.lambda = lambda;
            cell.omega = omega;
            reports.push(cell);
        }
    }
    Ok(reports)
}

/// One CSV row per grid cell.
pub fn grid_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("lambda,omega,mean_q_ssim,mean_q_g,runtime_seconds\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.lambda, r.omega, r.mean_q_ssim, r.mean_q_g, r.runtime_seconds
        ));
    }
    out
}
