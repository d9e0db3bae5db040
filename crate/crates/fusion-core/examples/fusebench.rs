use std::time::Instant;
use fusion_core::*;

fn main() {
    let cfg = FusionConfig::default();
    let params = ParamSet::init(&cfg, 42).unwrap();
    let big = phantom::generate_pair(
        &phantom::PhantomSpec { width: 256, height: 256, ..Default::default() }, 0).unwrap();
    for i in 0..5 {
        let t0 = Instant::now();
        let _ = fuse(&params, &big).unwrap();
        println!("fuse 256 run {}: {:.3} s", i, t0.elapsed().as_secs_f64());
    }
}
