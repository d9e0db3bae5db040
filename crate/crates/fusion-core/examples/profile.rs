use std::time::Instant;
use fusion_core::autodiff::{Padding, Shape, Tape, Tensor};

fn t<R>(label: &str, f: impl FnOnce() -> R) -> R {
    let t0 = Instant::now();
    let r = f();
    println!("{:<32} {:>8.1} ms", label, t0.elapsed().as_secs_f64() * 1e3);
    r
}

fn main() {
    let (h, w) = (256usize, 256usize);
    let mk = |b: usize, c: usize| Tensor::<f64>::filled(Shape::new(b, c, h, w), 0.3);

    let mut tape = Tape::new();
    let x1 = tape.leaf(mk(1, 1), false);
    let x16 = tape.leaf(mk(1, 16), false);
    let x32 = tape.leaf(mk(1, 32), false);
    let x64 = tape.leaf(mk(1, 64), false);

    let w1_16 = tape.leaf(Tensor::filled(Shape::new(16, 1, 3, 3), 0.01), false);
    let w16_32 = tape.leaf(Tensor::filled(Shape::new(32, 16, 3, 3), 0.01), false);
    let w32_64 = tape.leaf(Tensor::filled(Shape::new(64, 32, 3, 3), 0.01), false);
    let w64_32 = tape.leaf(Tensor::filled(Shape::new(32, 64, 3, 3), 0.01), false);
    let w1_32_9 = tape.leaf(Tensor::filled(Shape::new(32, 1, 9, 9), 0.01), false);
    let b16 = tape.leaf(Tensor::zeros(Shape::new(1, 16, 1, 1)), false);
    let b32 = tape.leaf(Tensor::zeros(Shape::new(1, 32, 1, 1)), false);
    let b64 = tape.leaf(Tensor::zeros(Shape::new(1, 64, 1, 1)), false);

    t("conv 1->16 3x3", || tape.conv2d(x1, w1_16, b16, Padding::Reflect).unwrap());
    t("conv 16->32 3x3", || tape.conv2d(x16, w16_32, b32, Padding::Reflect).unwrap());
    t("conv 32->64 3x3", || tape.conv2d(x32, w32_64, b64, Padding::Reflect).unwrap());
    t("conv 64->32 3x3", || tape.conv2d(x64, w64_32, b32, Padding::Reflect).unwrap());
    t("conv 1->32 9x9", || tape.conv2d(x1, w1_32_9, b32, Padding::Reflect).unwrap());
    let g32 = tape.leaf(Tensor::filled(Shape::new(1, 32, 1, 1), 1.0), false);
    let s32 = tape.leaf(Tensor::zeros(Shape::new(1, 32, 1, 1)), false);
    let rm = vec![0.0; 32]; let rv = vec![1.0; 32];
    let n = t("norm_infer 32ch", || tape.norm_infer(x32, g32, s32, &rm, &rv).unwrap());
    t("leaky_relu 32ch", || tape.leaky_relu(n, 0.2).unwrap());
    t("fuse_hf 64ch", || tape.fuse_hf(x64, x64, 1e-6).unwrap());
    t("tanh 1ch", || tape.tanh_act(x1));
    t("alloc+clone 64ch", || mk(1, 64));
}
