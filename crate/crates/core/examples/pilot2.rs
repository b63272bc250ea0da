//! Scratch: inspect per-class alignment gauges (not part of the suite).

use viewalign::alignment::{select_assignment, train, TrainConfig};
use viewalign::data::{generate_dataset, DatasetConfig};
use viewalign::geometry::enumerate_candidates;
use viewalign::model::{Network, NetworkConfig};

fn main() {
    let cfg = DatasetConfig::default();
    let ds = generate_dataset(&cfg).unwrap();
    let candidates = enumerate_candidates(&ds.setup);
    let mut net = Network::new(NetworkConfig {
        image_h: 16, image_w: 16, conv_channels: 0, hidden: 64,
        rows: ds.setup.view_count(), cols: cfg.classes + 1, seed: 42,
    });
    let tcfg = TrainConfig { epochs: 30, ..Default::default() };
    train(&ds.train, &ds.setup, &candidates, &mut net, &tcfg).unwrap();

    let m = ds.setup.view_count();
    // shift = (selected - gt) mod M per training sample, grouped by class
    for class in 0..cfg.classes {
        let mut hist = vec![0usize; m];
        for s in ds.train.iter().filter(|s| s.label == class) {
            let ps: Vec<_> = s.images.iter().map(|i| net.forward(i).unwrap()).collect();
            let sel = select_assignment(&ps, s.label, &candidates).unwrap();
            let shift = (sel.candidate_id + m - s.pose_candidate) % m;
            hist[shift] += 1;
        }
        println!("class {class} train shift histogram: {hist:?}");
    }
    for class in 0..cfg.classes {
        let mut hist = vec![0usize; m];
        for s in ds.test.iter().filter(|s| s.label == class) {
            let ps: Vec<_> = s.images.iter().map(|i| net.forward(i).unwrap()).collect();
            let sel = select_assignment(&ps, s.label, &candidates).unwrap();
            let shift = (sel.candidate_id + m - s.pose_candidate) % m;
            hist[shift] += 1;
        }
        println!("class {class} test  shift histogram: {hist:?}");
    }
}
