use mortsig::randsig::{gaussian_projection, jl_min_dimension};
use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

fn main() {
    let k = jl_min_dimension(50, 0.5).unwrap();
    println!("k = {k}");
    for seed in 0..12u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(900_000 + seed);
        let points: Vec<DVector<f64>> = (0..50)
            .map(|_| DVector::from_fn(256, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let proj = gaussian_projection(256, k, seed);
        let mapped: Vec<DVector<f64>> = points.iter().map(|p| &proj * p).collect();
        let mut total = 0usize;
        let mut ok = 0usize;
        for i in 0..50 {
            for j in (i + 1)..50 {
                let orig = (&points[i] - &points[j]).norm_squared();
                let new = (&mapped[i] - &mapped[j]).norm_squared();
                let ratio = new / orig;
                total += 1;
                if (0.5..=1.5).contains(&ratio) {
                    ok += 1;
                }
            }
        }
        println!("seed {seed}: {ok}/{total} = {:.4}", ok as f64 / total as f64);
    }
}
