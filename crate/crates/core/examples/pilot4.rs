//! Scratch: locate the finite-difference outlier (not part of the suite).
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use viewalign::model::{Image, Network, NetworkConfig};

fn main() {
    let cfg = NetworkConfig {
        image_h: 6, image_w: 6, conv_channels: 2, hidden: 4, rows: 3, cols: 3, seed: 77,
    };
    let net = Network::new(cfg);
    let n = net.params.param_count();
    let h = 1e-5;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4242);
    for sample in 0..20 {
        let img = Image::new(ndarray::Array2::from_shape_fn((6, 6), |_| rng.random_range(0.0..1.0))).unwrap();
        let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..3)).collect();
        let analytic = net.backward(&img, &labels).unwrap();
        for idx in 0..n {
            let mut plus = net.clone();
            plus.params.add_at(idx, h);
            let mut minus = net.clone();
            minus.params.add_at(idx, -h);
            let fd = (plus.row_ce_loss(&img, &labels).unwrap() - minus.row_ce_loss(&img, &labels).unwrap()) / (2.0 * h);
            let an = analytic.get(idx);
            let denom = fd.abs().max(an.abs());
            let rel = if denom > 1e-6 { (fd - an).abs() / denom } else { (fd - an).abs() };
            if rel > 1e-4 {
                println!("sample {sample} param {idx}: an {an:.9e} fd {fd:.9e} rel {rel:.3e}");
            }
        }
    }
}
