use std::time::Instant;
use fusion_core::*;

fn main() {
    let spec = phantom::PhantomSpec::default(); // 16 pairs 64x64
    let data = phantom::generate_dataset(&spec).unwrap();
    let cfg = FusionConfig { epochs: 3, lambda: 0.8, ..Default::default() };
    let t0 = Instant::now();
    let out = train(&cfg, &data, 42).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("3 epochs x 16 pairs: {:.2} s  ({:.3} s/iter)", dt, dt / 48.0);
    println!("epoch1 mean total: {:.4}", out.records[0].mean.total);
    println!("epoch3 mean total: {:.4}", out.records[2].mean.total);

    // 256x256 inference forward
    let big = phantom::generate_pair(&phantom::PhantomSpec { width: 256, height: 256, ..Default::default() }, 0).unwrap();
    let params = out.params;
    let t0 = Instant::now();
    let _ = fuse(&params, &big).unwrap();
    println!("256x256 fuse: {:.3} s", t0.elapsed().as_secs_f64());
    let t0 = Instant::now();
    let _ = fuse(&params, &big).unwrap();
    println!("256x256 fuse (warm): {:.3} s", t0.elapsed().as_secs_f64());

    // 64x64 fuse
    let t0 = Instant::now();
    for p in &data { let _ = fuse(&params, p).unwrap(); }
    println!("16x 64x64 fuse: {:.3} s total", t0.elapsed().as_secs_f64());
}
