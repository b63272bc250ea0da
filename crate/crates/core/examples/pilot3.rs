//! Scratch: confusable-variant comparison pilot (not part of the suite).

use viewalign::alignment::{train, TrainConfig};
use viewalign::baselines::*;
use viewalign::data::{generate_dataset, DatasetConfig, DatasetVariant};
use viewalign::geometry::enumerate_candidates;
use viewalign::inference::{build_pose_table, evaluate};
use viewalign::model::{Network, NetworkConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let fg_epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(120);
    let jitter: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1.0);

    let cfg = DatasetConfig {
        variant: DatasetVariant::Confusable,
        jitter,
        ..Default::default()
    };
    let ds = generate_dataset(&cfg).unwrap();
    let candidates = enumerate_candidates(&ds.setup);
    let m = ds.setup.view_count();
    let n = cfg.classes;

    // main method
    let mut net = Network::new(NetworkConfig {
        image_h: 16, image_w: 16, conv_channels: 0, hidden: 64,
        rows: m, cols: n + 1, seed: 42,
    });
    let tcfg = TrainConfig { epochs, ..Default::default() };
    let t = std::time::Instant::now();
    train(&ds.train, &ds.setup, &candidates, &mut net, &tcfg).unwrap();
    let table = build_pose_table(&net, &ds.train, &candidates, &ds.setup).unwrap();
    let metrics = evaluate(&ds.test, &net, &candidates, &table, &[m], 120, 99).unwrap();
    println!(
        "viewalign: class {:.2}% view {:.2}% ({:.1}s)",
        metrics.rows[0].class_accuracy * 100.0,
        metrics.rows[0].view_accuracy * 100.0,
        t.elapsed().as_secs_f64()
    );

    // late pooling
    let mut lp = Network::new(NetworkConfig {
        image_h: 16, image_w: 16, conv_channels: 0, hidden: 64,
        rows: 1, cols: n, seed: 42,
    });
    let t = std::time::Instant::now();
    train_late_pool(&ds.train, n, &mut lp, &tcfg).unwrap();
    let rows = late_pool_evaluate(&lp, &ds.test, &[m], 120, 99).unwrap();
    println!(
        "latepool:  class {:.2}% ({:.1}s)",
        rows[0].class_accuracy * 100.0,
        t.elapsed().as_secs_f64()
    );

    // fine-grained trade-off
    let mut fg = Network::new(NetworkConfig {
        image_h: 16, image_w: 16, conv_channels: 0, hidden: 64,
        rows: 1, cols: n * m, seed: 42,
    });
    let fg_cfg = TrainConfig { epochs: fg_epochs, ..Default::default() };
    let t = std::time::Instant::now();
    let ckpts = train_fine_grained_with_checkpoints(
        &ds.train, &ds.test, n, m, &mut fg, &fg_cfg, 5, ViewMarginalization::Max,
    ).unwrap();
    println!("finegrained ({:.1}s):", t.elapsed().as_secs_f64());
    for c in &ckpts {
        println!("  epoch {:4}  class {:6.2}%  view {:6.2}%", c.epoch, c.class_accuracy * 100.0, c.view_accuracy * 100.0);
    }
}
