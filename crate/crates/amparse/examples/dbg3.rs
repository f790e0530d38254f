use amparse::sinkhorn::*;
use amparse::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst = (0.0f64, 0usize, 0u64);
    let mut over_1e6 = 0;
    for trial in 0..10_000u64 {
        let n = 2 + (trial as usize % 19);
        let data: Vec<f64> = (0..n*n).map(|_| (rng.random::<f64>() - 0.5) * 10.0).collect();
        let phi = Tensor::from_vec(vec![n, n], data).unwrap();
        let noise = sample_gumbel(n, 40_000 + trial);
        let cfg = SinkhornConfig { iterations: 200, ..Default::default() };
        let out = gumbel_sinkhorn(&phi, &noise, &cfg).unwrap();
        let err = col_sums(&out.a_hat).iter().map(|c| (c - 1.0).abs()).fold(0.0f64, f64::max);
        if err > 1e-6 { over_1e6 += 1; }
        if err > worst.0 { worst = (err, n, trial); }
    }
    println!("10000 trials at t=1, l=200: {} exceed 1e-6; worst {:.2e} (n={}, trial {})", over_1e6, worst.0, worst.1, worst.2);
}
