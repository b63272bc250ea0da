//! `viewalign train`: fit a model on a dataset container and checkpoint it.

use crate::util::{load_config, Meta};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use viewalign::alignment::{train_with_optimizer, TrainConfig};
use viewalign::baselines::{train_fine_grained_with_optimizer, train_late_pool_with_optimizer};
use viewalign::data::load_dataset;
use viewalign::geometry::enumerate_candidates;
use viewalign::model::{Checkpoint, Network, NetworkConfig, SgdMomentum};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub method: String,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_objects: usize,
    pub record_every: usize,
    pub shuffle: bool,
    pub shuffle_seed: u64,
    pub hidden: usize,
    pub conv_channels: usize,
    pub net_seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            method: "viewalign".into(),
            epochs: 30,
            lr: viewalign::model::DEFAULT_LEARNING_RATE,
            momentum: viewalign::model::DEFAULT_MOMENTUM,
            batch_objects: 1,
            record_every: 50,
            shuffle: true,
            shuffle_seed: 0x5EED,
            hidden: 64,
            conv_channels: 0,
            net_seed: 42,
        }
    }
}

#[derive(clap::Args)]
pub struct TrainArgs {
    /// JSON parameter file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset container produced by `viewalign generate`.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Training-history CSV output (viewalign method only).
    #[arg(long)]
    history: Option<PathBuf>,
    /// Method: viewalign, latepool or finegrained.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    /// Objects accumulated into one optimizer step.
    #[arg(long)]
    batch_objects: Option<usize>,
    /// History cadence in iterations (viewalign method).
    #[arg(long)]
    record_every: Option<usize>,
    #[arg(long)]
    shuffle: Option<bool>,
    #[arg(long, env = "VIEWALIGN_SHUFFLE_SEED")]
    shuffle_seed: Option<u64>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Channels of the 3x3 convolution front (0 disables it).
    #[arg(long)]
    conv_channels: Option<usize>,
    #[arg(long, env = "VIEWALIGN_NET_SEED")]
    net_seed: Option<u64>,
}

pub fn run(args: TrainArgs) -> anyhow::Result<()> {
    let mut params: TrainParams = match &args.config {
        Some(path) => load_config(path)?,
        None => TrainParams::default(),
    };
    super::merge_flags!(
        params, args, method, epochs, lr, momentum, batch_objects, record_every, shuffle,
        shuffle_seed, hidden, conv_channels, net_seed
    );

    let dataset = load_dataset(&args.data)?;
    let candidates = enumerate_candidates(&dataset.setup);
    let m = dataset.setup.view_count();
    let n = dataset.config.classes;
    let (rows, cols) = match params.method.as_str() {
        "viewalign" => (m, n + 1),
        "latepool" => (1, n),
        "finegrained" => (1, n * m),
        other => anyhow::bail!("unknown method '{other}' (viewalign, latepool or finegrained)"),
    };
    let net_cfg = NetworkConfig {
        image_h: dataset.config.render.height,
        image_w: dataset.config.render.width,
        conv_channels: params.conv_channels,
        hidden: params.hidden,
        rows,
        cols,
        seed: params.net_seed,
    };
    let mut net = Network::new(net_cfg);
    let mut opt = SgdMomentum::new(params.lr, params.momentum, &net);
    let train_cfg = TrainConfig {
        epochs: params.epochs,
        lr: params.lr,
        momentum: params.momentum,
        batch_objects: params.batch_objects,
        record_every: params.record_every,
        shuffle: params.shuffle,
        seed: params.shuffle_seed,
    };

    let start = std::time::Instant::now();
    match params.method.as_str() {
        "viewalign" => {
            let history = train_with_optimizer(
                &dataset.train,
                &dataset.setup,
                &candidates,
                &mut net,
                &mut opt,
                &train_cfg,
            )?;
            if let Some(path) = &args.history {
                let mut text = Vec::new();
                history.write_csv(&mut text)?;
                let meta = Meta::new("train", params.shuffle_seed, &params);
                let full = format!("{}\n{}", meta.csv_comment(), String::from_utf8(text)?);
                std::fs::write(path, full)?;
            }
        }
        "latepool" => {
            if args.history.is_some() {
                anyhow::bail!("--history is only recorded for the viewalign method");
            }
            train_late_pool_with_optimizer(&dataset.train, n, &mut net, &mut opt, &train_cfg)?;
        }
        _ => {
            if args.history.is_some() {
                anyhow::bail!("--history is only recorded for the viewalign method");
            }
            train_fine_grained_with_optimizer(
                &dataset.train,
                n,
                m,
                &mut net,
                &mut opt,
                &train_cfg,
            )?;
        }
    }
    let wall = start.elapsed().as_secs_f64();
    Checkpoint::capture(&net, &opt).save(&args.out)?;
    println!(
        "{}",
        serde_json::json!({
            "out": args.out,
            "method": params.method,
            "wall_time_s": wall,
            "meta": Meta::new("train", params.shuffle_seed, &params),
        })
    );
    Ok(())
}
