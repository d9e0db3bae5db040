use std::time::Instant;
use fusion_core::autodiff::Element;

fn bench(m: usize, k: usize, n: usize, reps: usize) {
    let a = vec![0.5f64; m * k];
    let b = vec![0.25f64; k * n];
    let mut c = vec![0.0f64; m * n];
    let t0 = Instant::now();
    for _ in 0..reps {
        f64::gemm(m, k, n, &a, &b, 0.0, &mut c);
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    let gflops = 2.0 * (m * k * n) as f64 / dt / 1e9;
    println!("dgemm {}x{}x{}: {:.1} ms  {:.1} GFLOPS (1 thread)", m, k, n, dt * 1e3, gflops);

    let mut cf = vec![0.0f32; m * n];
    let af = vec![0.5f32; m * k];
    let bf = vec![0.25f32; k * n];
    let t0 = Instant::now();
    for _ in 0..reps {
        f32::gemm(m, k, n, &af, &bf, 0.0, &mut cf);
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    let gflops = 2.0 * (m * k * n) as f64 / dt / 1e9;
    println!("sgemm {}x{}x{}: {:.1} ms  {:.1} GFLOPS (1 thread)", m, k, n, dt * 1e3, gflops);
}

fn main() {
    bench(64, 576, 2048, 20);
    bench(32, 144, 2048, 20);
    bench(64, 576, 65536, 3);
    bench(512, 512, 512, 10);
}
