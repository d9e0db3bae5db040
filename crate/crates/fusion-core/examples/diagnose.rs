use fusion_core::*;
use fusion_core::network::{forward, Mode, GradTargets};

fn main() {
    let train_spec = phantom::PhantomSpec { count: 16, seed: 42, ..Default::default() };
    let data = phantom::generate_dataset(&train_spec).unwrap();
    let cfg = FusionConfig { epochs: 50, lambda: 0.8, seed: 42, ..Default::default() };
    let out = train_with_progress(&cfg, &data, 42, |r| {
        if r.epoch % 5 == 0 || r.epoch <= 3 {
            println!("epoch {:>3}: total {:.4} ssim_a {:.4} ssim_b {:.4} l2 {:.4}",
                r.epoch, r.mean.total, r.mean.ssim_anat, r.mean.ssim_func, r.mean.l2);
        }
    }).unwrap();

    // Inspect H_o spikiness on a training pair with trained params.
    let pass = forward::<f64>(&out.params, &data[0], Mode::Infer, GradTargets::none()).unwrap();
    // fuse_hf node: find max |value| across all tape nodes (the largest is H_o if spiky)
    let fused = pass.tape.value(pass.output);
    println!("fused range: [{:.3}, {:.3}]",
        fused.data().iter().cloned().fold(f64::INFINITY, f64::min),
        fused.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max));
}
