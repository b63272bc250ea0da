//! Scratch pilot for threshold calibration (not part of the test suite).

use std::time::Instant;
use viewalign::alignment::{train, TrainConfig};
use viewalign::data::{generate_dataset, DatasetConfig};
use viewalign::geometry::enumerate_candidates;
use viewalign::inference::{build_pose_table, evaluate};
use viewalign::model::{Network, NetworkConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.0005);
    let hidden: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(64);

    let t0 = Instant::now();
    let cfg = DatasetConfig::default();
    let ds = generate_dataset(&cfg).unwrap();
    println!("generated in {:.2}s", t0.elapsed().as_secs_f64());

    let candidates = enumerate_candidates(&ds.setup);
    let mut net = Network::new(NetworkConfig {
        image_h: 16,
        image_w: 16,
        conv_channels: 0,
        hidden,
        rows: ds.setup.view_count(),
        cols: cfg.classes + 1,
        seed: 42,
    });
    let tcfg = TrainConfig {
        epochs,
        lr,
        ..Default::default()
    };
    let t1 = Instant::now();
    let history = train(&ds.train, &ds.setup, &candidates, &mut net, &tcfg).unwrap();
    println!("trained {} epochs in {:.2}s", epochs, t1.elapsed().as_secs_f64());
    for row in &history.rows {
        println!(
            "iter {:5}  loss {:9.4}  var {:?}",
            row.iteration, row.loss, row.mean_alignment_variance
        );
    }

    let table = build_pose_table(&net, &ds.train, &candidates, &ds.setup).unwrap();
    let m = ds.setup.view_count();
    let views: Vec<usize> = (1..=m).collect();
    let t2 = Instant::now();
    let metrics = evaluate(&ds.test, &net, &candidates, &table, &views, 120, 99).unwrap();
    println!("evaluated in {:.2}s", t2.elapsed().as_secs_f64());
    for row in &metrics.rows {
        println!(
            "views {:2}  class {:6.2}%  view {:6.2}%  pose med {:6.2}  ave {:6.2}  fallbacks {}",
            row.views,
            row.class_accuracy * 100.0,
            row.view_accuracy * 100.0,
            row.pose_median_deg,
            row.pose_mean_deg,
            row.pose_fallbacks
        );
    }
    println!("total {:.2}s", t0.elapsed().as_secs_f64());
}
