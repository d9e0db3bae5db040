use std::time::Instant;
use fusion_core::*;

fn main() {
    let train_spec = phantom::PhantomSpec { count: 16, seed: 42, ..Default::default() };
    let data = phantom::generate_dataset(&train_spec).unwrap();
    let cfg = FusionConfig { epochs: 50, lambda: 0.8, seed: 42, ..Default::default() };
    let t0 = Instant::now();
    let out = train(&cfg, &data, 42).unwrap();
    println!("50-epoch train: {:.1} s", t0.elapsed().as_secs_f64());
    let e1 = out.records[0].mean.total;
    let e50 = out.records[49].mean.total;
    println!("epoch1 {:.4} -> epoch50 {:.4} (ratio {:.3}, need < 0.5)", e1, e50, e50 / e1);

    // Held-out set: 8 fresh pairs under a different stream.
    let held_spec = phantom::PhantomSpec { count: 8, seed: 4242, ..Default::default() };
    let held = phantom::generate_dataset(&held_spec).unwrap();
    let mut net_sum = 0.0;
    let mut base_sum = 0.0;
    for pair in &held {
        let fused = fuse(&out.params, pair).unwrap();
        let fimg = Image::new(pair.height(), pair.width(), fused.into_data()).unwrap();
        net_sum += q_ssim(&pair.anatomical, &pair.functional, &fimg).unwrap();
        let avg: Vec<f64> = pair.anatomical.data().iter().zip(pair.functional.data())
            .map(|(a, b)| 0.5 * (a + b)).collect();
        let aimg = Image::new(pair.height(), pair.width(), avg).unwrap();
        base_sum += q_ssim(&pair.anatomical, &pair.functional, &aimg).unwrap();
    }
    println!("held-out q_ssim: net {:.4} vs baseline {:.4} (need net >= baseline)", net_sum / 8.0, base_sum / 8.0);

    // Monotone trend: 10-epoch moving average over final 30 epochs.
    let totals: Vec<f64> = out.records.iter().map(|r| r.mean.total).collect();
    let ma: Vec<f64> = (0..=40).map(|i| totals[i..i + 10].iter().sum::<f64>() / 10.0).collect();
    let mut violations = 0;
    for i in 11..=40 { if ma[i] > ma[i - 1] { violations += 1; } }
    println!("moving-average violations in final 30 epochs: {} (allow <= 2)", violations);
}
