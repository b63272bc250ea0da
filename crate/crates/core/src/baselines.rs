//! Comparison methods sharing the main backbone and optimizer settings:
//! a plain per-image classifier aggregated by late average view-pooling, and a
//! pose-supervised "fine-grained" classifier over joint (class, view) labels.
//! Also hosts the camera-system orientation experiment driver.

use crate::alignment::{AlignmentError, TrainConfig};
use crate::data::{Dataset, DataError, DatasetConfig, MultiViewSample};
use crate::geometry::enumerate_candidates;
use crate::inference::{build_pose_table, evaluate, InferenceError};
use crate::model::{Gradients, ModelError, Network, NetworkConfig};
use rand::seq::SliceRandom;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rayon::prelude::*;
use std::io::Write;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("no score vectors supplied")]
    EmptyInput,
    #[error("score vectors have inconsistent lengths")]
    InconsistentLengths,
    #[error("network head is {got} wide, expected {expected} ({what})")]
    HeadMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    LatePoolAverage,
    FineGrained,
}

/// How the fine-grained classifier folds its per-view scores into a class
/// decision at test time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewMarginalization {
    Max,
    Sum,
}

/// Argmax of the element-wise mean of per-view class score vectors
/// (average pooling of softmax outputs); ties go to the smallest class.
pub fn late_pool_predict(per_view_scores: &[Vec<f64>]) -> Result<usize, BaselineError> {
    let first = per_view_scores.first().ok_or(BaselineError::EmptyInput)?;
    let n = first.len();
    if per_view_scores.iter().any(|v| v.len() != n) || n == 0 {
        return Err(BaselineError::InconsistentLengths);
    }
    let mut sums = vec![0.0; n];
    for scores in per_view_scores {
        for (s, v) in sums.iter_mut().zip(scores) {
            *s += v;
        }
    }
    let mut best = 0usize;
    for (i, &s) in sums.iter().enumerate() {
        if s > sums[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Joint (class, view) label used by the fine-grained baseline: class-major.
pub fn joint_label(class: usize, view: usize, views: usize) -> usize {
    class * views + view
}

/// Supervised per-image training with one accumulated optimizer step per
/// object, mirroring the main loop's update granularity.
fn train_per_image<L>(
    samples: &[MultiViewSample],
    net: &mut Network,
    opt: &mut crate::model::SgdMomentum,
    cfg: &TrainConfig,
    label_of: L,
) -> Result<(), BaselineError>
where
    L: Fn(&MultiViewSample, usize) -> usize,
{
    if net.config().rows != 1 {
        return Err(BaselineError::HeadMismatch {
            what: "baseline heads are single-row",
            expected: 1,
            got: net.config().rows,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for &idx in &order {
            let sample = &samples[idx];
            let mut acc: Option<Gradients> = None;
            for (i, img) in sample.images.iter().enumerate() {
                let g = net.backward(img, &[label_of(sample, i)])?;
                match &mut acc {
                    Some(total) => total.add_assign(&g),
                    None => acc = Some(g),
                }
            }
            if let Some(total) = acc {
                opt.step(net, &total)?;
            }
        }
    }
    Ok(())
}

/// Trains the late-pooling baseline: an N-class per-image classifier.
pub fn train_late_pool(
    samples: &[MultiViewSample],
    n_classes: usize,
    net: &mut Network,
    cfg: &TrainConfig,
) -> Result<(), BaselineError> {
    let mut opt = crate::model::SgdMomentum::new(cfg.lr, cfg.momentum, net);
    train_late_pool_with_optimizer(samples, n_classes, net, &mut opt, cfg)
}

/// [`train_late_pool`] against a caller-owned optimizer.
pub fn train_late_pool_with_optimizer(
    samples: &[MultiViewSample],
    n_classes: usize,
    net: &mut Network,
    opt: &mut crate::model::SgdMomentum,
    cfg: &TrainConfig,
) -> Result<(), BaselineError> {
    if net.config().cols != n_classes {
        return Err(BaselineError::HeadMismatch {
            what: "late-pool head must be one score per class",
            expected: n_classes,
            got: net.config().cols,
        });
    }
    train_per_image(samples, net, opt, cfg, |s, _| s.label)
}

/// Trains the fine-grained baseline over N*M joint labels. Unlike the main
/// method this consumes ground-truth discrete views (it is pose-supervised).
pub fn train_fine_grained(
    samples: &[MultiViewSample],
    n_classes: usize,
    views: usize,
    net: &mut Network,
    cfg: &TrainConfig,
) -> Result<(), BaselineError> {
    let mut opt = crate::model::SgdMomentum::new(cfg.lr, cfg.momentum, net);
    train_fine_grained_with_optimizer(samples, n_classes, views, net, &mut opt, cfg)
}

/// [`train_fine_grained`] against a caller-owned optimizer.
pub fn train_fine_grained_with_optimizer(
    samples: &[MultiViewSample],
    n_classes: usize,
    views: usize,
    net: &mut Network,
    opt: &mut crate::model::SgdMomentum,
    cfg: &TrainConfig,
) -> Result<(), BaselineError> {
    if net.config().cols != n_classes * views {
        return Err(BaselineError::HeadMismatch {
            what: "fine-grained head must cover all joint labels",
            expected: n_classes * views,
            got: net.config().cols,
        });
    }
    train_per_image(samples, net, opt, cfg, |s, i| {
        joint_label(s.label, s.gt_views[i], views)
    })
}

/// Fine-grained decision for a set of per-image joint score vectors: classes
/// are marginalized from the mean joint scores (max over views by default);
/// each image's view estimate is its own unrestricted joint argmax.
pub fn fine_grained_predict(
    per_image_joint: &[Vec<f64>],
    n_classes: usize,
    views: usize,
    marg: ViewMarginalization,
) -> Result<(usize, Vec<usize>), BaselineError> {
    let first = per_image_joint.first().ok_or(BaselineError::EmptyInput)?;
    if first.len() != n_classes * views
        || per_image_joint.iter().any(|v| v.len() != first.len())
    {
        return Err(BaselineError::InconsistentLengths);
    }
    let mut mean = vec![0.0; first.len()];
    for scores in per_image_joint {
        for (m, v) in mean.iter_mut().zip(scores) {
            *m += v / per_image_joint.len() as f64;
        }
    }
    let mut best_class = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for y in 0..n_classes {
        let cells = &mean[y * views..(y + 1) * views];
        let score = match marg {
            ViewMarginalization::Max => cells.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ViewMarginalization::Sum => cells.iter().sum(),
        };
        if score > best_score {
            best_score = score;
            best_class = y;
        }
    }
    let view_of_image = per_image_joint
        .iter()
        .map(|scores| {
            let mut best = 0usize;
            for (i, &s) in scores.iter().enumerate() {
                if s > scores[best] {
                    best = i;
                }
            }
            best % views
        })
        .collect();
    Ok((best_class, view_of_image))
}

fn scores_of(net: &Network, sample: &MultiViewSample) -> Result<Vec<Vec<f64>>, BaselineError> {
    sample
        .images
        .iter()
        .map(|img| {
            let p = net.forward(img)?;
            Ok(p.values().row(0).to_vec())
        })
        .collect()
}

/// Accuracy row of a baseline evaluation.
#[derive(Debug, Clone)]
pub struct BaselineEvalRow {
    pub views: usize,
    pub trials: usize,
    pub class_accuracy: f64,
    /// Per-image view accuracy; None for view-agnostic baselines.
    pub view_accuracy: Option<f64>,
}

fn subset_trials<F>(
    test: &[MultiViewSample],
    views_list: &[usize],
    trials: usize,
    seed: u64,
    per_trial: F,
) -> Result<Vec<BaselineEvalRow>, BaselineError>
where
    F: Fn(&MultiViewSample, &[usize]) -> Result<(bool, Option<(usize, usize)>), BaselineError>
        + Sync,
{
    let m = test
        .first()
        .map(|s| s.images.len())
        .ok_or(BaselineError::EmptyInput)?;
    let mut rows = Vec::new();
    for &k in views_list {
        let outcomes: Vec<(bool, Option<(usize, usize)>)> = test
            .par_iter()
            .enumerate()
            .map(|(s_idx, sample)| {
                (0..trials)
                    .map(|t| {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(((k as u64) << 44) | ((t as u64) << 22) | s_idx as u64);
                        let offsets = crate::inference::random_offsets(&mut rng, m, k);
                        per_trial(sample, &offsets)
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<Vec<_>>, _>>()?
            .into_iter()
            .flatten()
            .collect();
        let total = outcomes.len() as f64;
        let class_accuracy = outcomes.iter().filter(|(c, _)| *c).count() as f64 / total;
        let view_counts: Vec<(usize, usize)> = outcomes.iter().filter_map(|(_, v)| *v).collect();
        let view_accuracy = (!view_counts.is_empty()).then(|| {
            view_counts.iter().map(|(h, _)| h).sum::<usize>() as f64
                / view_counts.iter().map(|(_, t)| t).sum::<usize>() as f64
        });
        rows.push(BaselineEvalRow {
            views: k,
            trials,
            class_accuracy,
            view_accuracy,
        });
    }
    Ok(rows)
}

/// Evaluates the late-pooling baseline under the same random-subset protocol
/// as the main method.
pub fn late_pool_evaluate(
    net: &Network,
    test: &[MultiViewSample],
    views_list: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<BaselineEvalRow>, BaselineError> {
    subset_trials(test, views_list, trials, seed, |sample, offsets| {
        let all = scores_of(net, sample)?;
        let subset: Vec<Vec<f64>> = offsets.iter().map(|&o| all[o].clone()).collect();
        let class = late_pool_predict(&subset)?;
        Ok((class == sample.label, None))
    })
}

/// Evaluates the fine-grained baseline; views are compared directly against
/// ground truth (this baseline is view-supervised, so no gauge is involved).
pub fn fine_grained_evaluate(
    net: &Network,
    test: &[MultiViewSample],
    n_classes: usize,
    views: usize,
    views_list: &[usize],
    trials: usize,
    seed: u64,
    marg: ViewMarginalization,
) -> Result<Vec<BaselineEvalRow>, BaselineError> {
    subset_trials(test, views_list, trials, seed, |sample, offsets| {
        let all = scores_of(net, sample)?;
        let subset: Vec<Vec<f64>> = offsets.iter().map(|&o| all[o].clone()).collect();
        let (class, view_of_image) = fine_grained_predict(&subset, n_classes, views, marg)?;
        let hits = view_of_image
            .iter()
            .zip(offsets)
            .filter(|(&v, &o)| v == sample.gt_views[o])
            .count();
        Ok((class == sample.label, Some((hits, offsets.len()))))
    })
}

/// Test accuracies of the fine-grained baseline recorded along its training
/// trajectory (full view set, deterministic).
#[derive(Debug, Clone)]
pub struct FineGrainedCheckpoint {
    pub epoch: usize,
    pub class_accuracy: f64,
    pub view_accuracy: f64,
}

/// Trains the fine-grained baseline while recording test accuracy every
/// `eval_every` epochs, to expose the classification/viewpoint trade-off.
pub fn train_fine_grained_with_checkpoints(
    train: &[MultiViewSample],
    test: &[MultiViewSample],
    n_classes: usize,
    views: usize,
    net: &mut Network,
    cfg: &TrainConfig,
    eval_every: usize,
    marg: ViewMarginalization,
) -> Result<Vec<FineGrainedCheckpoint>, BaselineError> {
    assert!(eval_every > 0, "eval cadence must be positive");
    let mut checkpoints = Vec::new();
    let mut done = 0usize;
    while done < cfg.epochs {
        let chunk = eval_every.min(cfg.epochs - done);
        // continue the shuffle stream across chunks so the trajectory matches
        // an uninterrupted run of the same total length
        let chunk_cfg = TrainConfig {
            epochs: chunk,
            seed: cfg.seed.wrapping_add(done as u64),
            ..cfg.clone()
        };
        train_fine_grained(train, n_classes, views, net, &chunk_cfg)?;
        done += chunk;
        let rows = fine_grained_evaluate(
            net,
            test,
            n_classes,
            views,
            &[views],
            1,
            0,
            marg,
        )?;
        checkpoints.push(FineGrainedCheckpoint {
            epoch: done,
            class_accuracy: rows[0].class_accuracy,
            view_accuracy: rows[0].view_accuracy.unwrap_or(0.0),
        });
    }
    Ok(checkpoints)
}

/// One row of the comparison report.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub method: String,
    pub views_used: usize,
    pub class_acc: f64,
    pub view_acc: Option<f64>,
    pub pose_med_deg: Option<f64>,
    pub pose_ave_deg: Option<f64>,
    pub wall_time_s: f64,
}

/// CSV schema: method, views_used, class_acc, view_acc, pose_med_deg,
/// pose_ave_deg, wall_time_s.
pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "method,views_used,class_acc,view_acc,pose_med_deg,pose_ave_deg,wall_time_s"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.method,
            r.views_used,
            r.class_acc,
            r.view_acc.map_or(String::new(), |v| v.to_string()),
            r.pose_med_deg.map_or(String::new(), |v| v.to_string()),
            r.pose_ave_deg.map_or(String::new(), |v| v.to_string()),
            r.wall_time_s
        )?;
    }
    Ok(())
}

/// Shared settings for experiment drivers.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub hidden: usize,
    pub conv_channels: usize,
    pub net_seed: u64,
    pub train: TrainConfig,
    pub eval_trials: usize,
    pub eval_seed: u64,
}

fn main_method_config(ds: &Dataset, exp: &ExperimentConfig) -> NetworkConfig {
    NetworkConfig {
        image_h: ds.config.render.height,
        image_w: ds.config.render.width,
        conv_channels: exp.conv_channels,
        hidden: exp.hidden,
        rows: ds.setup.view_count(),
        cols: ds.config.classes + 1,
        seed: exp.net_seed,
    }
}

/// Trains and evaluates the latent-viewpoint method once on a dataset,
/// reporting full-view accuracy and pose errors.
pub fn run_main_method(
    ds: &Dataset,
    exp: &ExperimentConfig,
    method: &str,
) -> Result<ComparisonRow, BaselineError> {
    let start = Instant::now();
    let candidates = enumerate_candidates(&ds.setup);
    let mut net = Network::new(main_method_config(ds, exp));
    crate::alignment::train(&ds.train, &ds.setup, &candidates, &mut net, &exp.train)?;
    let table = build_pose_table(&net, &ds.train, &candidates, &ds.setup)?;
    let m = ds.setup.view_count();
    let metrics = evaluate(
        &ds.test,
        &net,
        &candidates,
        &table,
        &[m],
        exp.eval_trials,
        exp.eval_seed,
    )?;
    let row = &metrics.rows[0];
    Ok(ComparisonRow {
        method: method.to_string(),
        views_used: m,
        class_acc: row.class_accuracy,
        view_acc: Some(row.view_accuracy),
        pose_med_deg: Some(row.pose_median_deg),
        pose_ave_deg: Some(row.pose_mean_deg),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Re-renders the dataset under each camera-system orientation, trains the
/// main method with identical seeds per orientation, and reports per-trial
/// accuracy plus mean/std summary rows (encoded in the method column).
pub fn orientation_experiment<F>(
    dataset_factory: F,
    trials: usize,
    exp: &ExperimentConfig,
) -> Result<Vec<ComparisonRow>, BaselineError>
where
    F: Fn(usize) -> Result<Dataset, DataError> + Sync,
{
    assert!((1..=11).contains(&trials), "at most 11 orientation trials");
    let mut rows: Vec<ComparisonRow> = (1..=trials)
        .into_par_iter()
        .map(|t| {
            let ds = dataset_factory(t)?;
            run_main_method(&ds, exp, &format!("viewalign[orientation={t}]"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let accs: Vec<f64> = rows.iter().map(|r| r.class_acc).collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let std = (accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / accs.len() as f64)
        .sqrt();
    let views_used = rows.first().map_or(0, |r| r.views_used);
    let total_time: f64 = rows.iter().map(|r| r.wall_time_s).sum();
    rows.push(ComparisonRow {
        method: "viewalign[mean]".into(),
        views_used,
        class_acc: mean,
        view_acc: None,
        pose_med_deg: None,
        pose_ave_deg: None,
        wall_time_s: total_time,
    });
    rows.push(ComparisonRow {
        method: "viewalign[std]".into(),
        views_used,
        class_acc: std,
        view_acc: None,
        pose_med_deg: None,
        pose_ave_deg: None,
        wall_time_s: total_time,
    });
    Ok(rows)
}

/// Convenience factory for orientation sweeps over a base dataset config.
pub fn sweep_dataset_factory(
    base: DatasetConfig,
) -> impl Fn(usize) -> Result<Dataset, DataError> + Sync {
    move |trial| {
        let cfg = DatasetConfig {
            orientation_trial: trial,
            ..base.clone()
        };
        crate::data::generate_dataset(&cfg)
    }
}
