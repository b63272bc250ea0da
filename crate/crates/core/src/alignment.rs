//! Latent-viewpoint machinery: scoring assignment candidates, building
//! per-image training targets from a chosen assignment, the alternating
//! training loop, and the self-alignment variance diagnostic.
//!
//! Training alternates two moves on each multi-view sample: with the network
//! frozen, pick the assignment candidate maximizing the product of per-view
//! likelihood ratios; with the assignment frozen, descend the summed per-row
//! cross-entropy against the targets it induces.

use crate::data::MultiViewSample;
use crate::geometry::RotationCandidate;
use crate::model::{
    loss_fixed_assignment, Gradients, ModelError, Network, PredictionMatrix, SgdMomentum,
    DEFAULT_LEARNING_RATE, DEFAULT_MOMENTUM,
};
use crate::ViewpointSetup;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("sample {index} has {got} images, the setup has {expected} viewpoints")]
    SampleSizeMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("sample {index} has label {label}, network expects < {classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-image 0/1 target matrix: the selected viewpoint row carries the class,
/// every other row carries the incorrect-view class.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    values: Array2<f64>,
}

impl TargetMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Target class per row (what the summed row-wise cross entropy consumes).
    pub fn row_labels(&self) -> Vec<usize> {
        self.values
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .position(|&v| v == 1.0)
                    .expect("target rows are one-hot")
            })
            .collect()
    }
}

/// Targets for all M images of a sample under a fixed assignment candidate.
/// Image i's matrix is one at (perm[i], y) and at (j, N) for every j != perm[i].
pub fn build_targets(
    candidate: &RotationCandidate,
    y: usize,
    m: usize,
    n_classes: usize,
) -> Vec<TargetMatrix> {
    assert_eq!(candidate.perm.len(), m, "candidate arity must match M");
    assert!(y < n_classes, "label out of range");
    (0..m)
        .map(|i| {
            let mut values = Array2::zeros((m, n_classes + 1));
            for j in 0..m {
                let col = if j == candidate.perm[i] { y } else { n_classes };
                values[(j, col)] = 1.0;
            }
            TargetMatrix { values }
        })
        .collect()
}

/// Log of the assignment objective: sum over images of
/// `log p[v_i, y] - log p[v_i, incorrect]` for the candidate's viewpoints.
pub fn score_candidate(
    predictions: &[PredictionMatrix],
    candidate: &RotationCandidate,
    y: usize,
) -> f64 {
    assert_eq!(
        predictions.len(),
        candidate.perm.len(),
        "need one prediction per image"
    );
    predictions
        .iter()
        .zip(&candidate.perm)
        .map(|(p, &v)| p.log_prob(v, y) - p.log_prob(v, p.incorrect_col()))
        .sum()
}

/// The winning candidate for a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    pub candidate_id: usize,
    pub log_score: f64,
    /// Selected viewpoint row per image (the winning candidate's permutation).
    pub per_image_rows: Vec<usize>,
}

/// Scores every candidate and returns the maximizer; exact ties go to the
/// smallest candidate id.
pub fn select_assignment(
    predictions: &[PredictionMatrix],
    y: usize,
    candidates: &[RotationCandidate],
) -> Result<AssignmentResult, AlignmentError> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, cand) in candidates.iter().enumerate() {
        let score = score_candidate(predictions, cand, y);
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((idx, score));
        }
    }
    let (candidate_id, log_score) = best.ok_or(AlignmentError::EmptyCandidates)?;
    Ok(AssignmentResult {
        candidate_id,
        log_score,
        per_image_rows: candidates[candidate_id].perm.clone(),
    })
}

/// Training loop configuration. One iteration is one optimizer step
/// (one object, or `batch_objects` objects when accumulating).
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Objects whose gradients are accumulated into a single step.
    pub batch_objects: usize,
    /// History cadence in iterations; iteration 0 is always recorded.
    pub record_every: usize,
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            lr: DEFAULT_LEARNING_RATE,
            momentum: DEFAULT_MOMENTUM,
            batch_objects: 1,
            record_every: 50,
            shuffle: true,
            seed: 0x5EED,
        }
    }
}

/// One recorded point of the training history.
#[derive(Debug, Clone)]
pub struct HistoryRow {
    pub iteration: usize,
    /// Mean per-object loss since the previous record (at iteration 0: over a
    /// full evaluation pass with the initial parameters).
    pub loss: f64,
    pub mean_alignment_variance: Option<f64>,
    pub per_class_variance: Vec<Option<f64>>,
    /// Currently selected candidate id per training object.
    pub selected_candidates: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
}

impl TrainHistory {
    pub fn row_at_iteration(&self, iteration: usize) -> Option<&HistoryRow> {
        self.rows.iter().find(|r| r.iteration == iteration)
    }

    /// CSV: iteration, loss, mean_alignment_variance, then one variance column
    /// per class (empty when undefined).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n_classes = self.rows.first().map_or(0, |r| r.per_class_variance.len());
        write!(w, "iteration,loss,mean_alignment_variance")?;
        for c in 0..n_classes {
            write!(w, ",var_class_{c}")?;
        }
        writeln!(w)?;
        for row in &self.rows {
            write!(w, "{},{}", row.iteration, row.loss)?;
            match row.mean_alignment_variance {
                Some(v) => write!(w, ",{v}")?,
                None => write!(w, ",")?,
            }
            for v in &row.per_class_variance {
                match v {
                    Some(v) => write!(w, ",{v}")?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Variance of the viewpoint-reordered image stacks about their per-class
/// average; the self-alignment diagnostic.
#[derive(Debug, Clone)]
pub struct VarianceReport {
    pub per_class: Vec<Option<f64>>,
    /// Classes skipped because they hold fewer than two instances.
    pub skipped_classes: Vec<usize>,
    pub mean: Option<f64>,
}

fn reordered_stack(
    sample: &MultiViewSample,
    rows: &[usize],
) -> Vec<f64> {
    let m = sample.images.len();
    let pixels = sample.images[0].pixels.len();
    let mut stack = vec![0.0; m * pixels];
    for (i, img) in sample.images.iter().enumerate() {
        let v = rows[i];
        stack[v * pixels..(v + 1) * pixels]
            .copy_from_slice(img.pixels.as_slice().expect("contiguous"));
    }
    stack
}

/// Reorders every instance's images by its selected assignment, averages the
/// stacks per class, and measures the mean pixel variance of instances about
/// that average. Classes with fewer than two instances are excluded.
pub fn alignment_variance(
    samples: &[MultiViewSample],
    net: &Network,
    candidates: &[RotationCandidate],
) -> Result<VarianceReport, AlignmentError> {
    let n_classes = samples.iter().map(|s| s.label + 1).max().unwrap_or(0);
    let mut stacks: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_classes];
    for sample in samples {
        let ps = forward_all(net, sample)?;
        let sel = select_assignment(&ps, sample.label, candidates)?;
        stacks[sample.label].push(reordered_stack(sample, &sel.per_image_rows));
    }
    let mut per_class = vec![None; n_classes];
    let mut skipped = Vec::new();
    for (class, class_stacks) in stacks.iter().enumerate() {
        if class_stacks.len() < 2 {
            skipped.push(class);
            continue;
        }
        let count = class_stacks.len() as f64;
        let dim = class_stacks[0].len();
        let mut mean = vec![0.0; dim];
        for stack in class_stacks {
            for (m, x) in mean.iter_mut().zip(stack) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= count;
        }
        let ss: f64 = class_stacks
            .iter()
            .map(|stack| {
                stack
                    .iter()
                    .zip(&mean)
                    .map(|(x, m)| (x - m) * (x - m))
                    .sum::<f64>()
            })
            .sum();
        per_class[class] = Some(ss / (count * dim as f64));
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok(VarianceReport {
        per_class,
        skipped_classes: skipped,
        mean,
    })
}

/// Per-class average of the viewpoint-reordered stacks, as M mean images per
/// class (None for classes with no instances). Used for alignment exports.
pub fn class_average_stacks(
    samples: &[MultiViewSample],
    net: &Network,
    candidates: &[RotationCandidate],
) -> Result<Vec<Option<Vec<Array2<f64>>>>, AlignmentError> {
    let n_classes = samples.iter().map(|s| s.label + 1).max().unwrap_or(0);
    let mut sums: Vec<Option<(usize, Vec<Array2<f64>>)>> = vec![None; n_classes];
    for sample in samples {
        let ps = forward_all(net, sample)?;
        let sel = select_assignment(&ps, sample.label, candidates)?;
        let entry = sums[sample.label].get_or_insert_with(|| {
            let shape = sample.images[0].pixels.dim();
            (0, vec![Array2::zeros(shape); sample.images.len()])
        });
        entry.0 += 1;
        for (i, img) in sample.images.iter().enumerate() {
            entry.1[sel.per_image_rows[i]] += &img.pixels;
        }
    }
    Ok(sums
        .into_iter()
        .map(|slot| {
            slot.map(|(count, mut imgs)| {
                for img in &mut imgs {
                    img.mapv_inplace(|v| v / count as f64);
                }
                imgs
            })
        })
        .collect())
}

fn forward_all(
    net: &Network,
    sample: &MultiViewSample,
) -> Result<Vec<PredictionMatrix>, ModelError> {
    sample.images.iter().map(|img| net.forward(img)).collect()
}

fn validate_samples(
    samples: &[MultiViewSample],
    setup: &ViewpointSetup,
    n_classes: usize,
) -> Result<(), AlignmentError> {
    let m = setup.view_count();
    for (index, s) in samples.iter().enumerate() {
        if s.images.len() != m {
            return Err(AlignmentError::SampleSizeMismatch {
                index,
                got: s.images.len(),
                expected: m,
            });
        }
        if s.label >= n_classes {
            return Err(AlignmentError::LabelOutOfRange {
                index,
                label: s.label,
                classes: n_classes,
            });
        }
    }
    Ok(())
}

/// Alternating training: each object's assignment is re-selected from the
/// current network output on every visit, then one accumulated gradient step
/// is taken over all of its images jointly.
pub fn train(
    samples: &[MultiViewSample],
    setup: &ViewpointSetup,
    candidates: &[RotationCandidate],
    net: &mut Network,
    cfg: &TrainConfig,
) -> Result<TrainHistory, AlignmentError> {
    let mut opt = SgdMomentum::new(cfg.lr, cfg.momentum, net);
    train_with_optimizer(samples, setup, candidates, net, &mut opt, cfg)
}

/// [`train`] against a caller-owned optimizer (whose learning rate and
/// momentum take precedence over the config), so its velocity can be
/// checkpointed or resumed.
pub fn train_with_optimizer(
    samples: &[MultiViewSample],
    setup: &ViewpointSetup,
    candidates: &[RotationCandidate],
    net: &mut Network,
    opt: &mut SgdMomentum,
    cfg: &TrainConfig,
) -> Result<TrainHistory, AlignmentError> {
    if candidates.is_empty() {
        return Err(AlignmentError::EmptyCandidates);
    }
    let n_classes = net.config().cols - 1;
    validate_samples(samples, setup, n_classes)?;
    let m = setup.view_count();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = TrainHistory::default();
    let mut selected = vec![0usize; samples.len()];

    // iteration-0 snapshot: loss and diagnostics under the initial parameters
    let mut initial_loss = 0.0;
    for (idx, sample) in samples.iter().enumerate() {
        let ps = forward_all(net, sample)?;
        let sel = select_assignment(&ps, sample.label, candidates)?;
        selected[idx] = sel.candidate_id;
        initial_loss += loss_fixed_assignment(&ps, &candidates[sel.candidate_id], sample.label)?;
    }
    let var0 = alignment_variance(samples, net, candidates)?;
    history.rows.push(HistoryRow {
        iteration: 0,
        loss: initial_loss / samples.len() as f64,
        mean_alignment_variance: var0.mean,
        per_class_variance: var0.per_class,
        selected_candidates: selected.clone(),
    });

    let mut iteration = 0usize;
    let mut window_loss = 0.0;
    let mut window_count = 0usize;
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for _epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut acc: Option<Gradients> = None;
        let mut in_batch = 0usize;
        for &idx in &order {
            let sample = &samples[idx];
            let ps = forward_all(net, sample)?;
            let sel = select_assignment(&ps, sample.label, candidates)?;
            selected[idx] = sel.candidate_id;
            let cand = &candidates[sel.candidate_id];
            window_loss += loss_fixed_assignment(&ps, cand, sample.label)?;
            window_count += 1;

            let targets = build_targets(cand, sample.label, m, n_classes);
            for (img, target) in sample.images.iter().zip(&targets) {
                let g = net.backward(img, &target.row_labels())?;
                match &mut acc {
                    Some(total) => total.add_assign(&g),
                    None => acc = Some(g),
                }
            }
            in_batch += 1;

            if in_batch == cfg.batch_objects {
                opt.step(net, &acc.take().expect("accumulated gradients"))?;
                in_batch = 0;
                iteration += 1;
                if cfg.record_every > 0 && iteration % cfg.record_every == 0 {
                    let report = alignment_variance(samples, net, candidates)?;
                    history.rows.push(HistoryRow {
                        iteration,
                        loss: window_loss / window_count as f64,
                        mean_alignment_variance: report.mean,
                        per_class_variance: report.per_class,
                        selected_candidates: selected.clone(),
                    });
                    window_loss = 0.0;
                    window_count = 0;
                }
            }
        }
        // flush a trailing partial batch at the epoch boundary
        if let Some(total) = acc.take() {
            opt.step(net, &total)?;
            iteration += 1;
        }
    }

    if history.rows.last().map(|r| r.iteration) != Some(iteration) && window_count > 0 {
        let report = alignment_variance(samples, net, candidates)?;
        history.rows.push(HistoryRow {
            iteration,
            loss: window_loss / window_count as f64,
            mean_alignment_variance: report.mean,
            per_class_variance: report.per_class,
            selected_candidates: selected,
        });
    }

    Ok(history)
}

/// Fixed-assignment reference loop: identical to [`train`] except that the
/// assignment is pinned to the given candidate for every sample instead of
/// being re-selected. Anchors regression tests of the alternating loop.
pub fn train_fixed_assignment(
    samples: &[MultiViewSample],
    setup: &ViewpointSetup,
    candidate: &RotationCandidate,
    net: &mut Network,
    cfg: &TrainConfig,
) -> Result<Vec<f64>, AlignmentError> {
    let n_classes = net.config().cols - 1;
    validate_samples(samples, setup, n_classes)?;
    let m = setup.view_count();
    let mut opt = SgdMomentum::new(cfg.lr, cfg.momentum, net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::new();
    for _epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for &idx in &order {
            let sample = &samples[idx];
            let ps = forward_all(net, sample)?;
            losses.push(loss_fixed_assignment(&ps, candidate, sample.label)?);
            let targets = build_targets(candidate, sample.label, m, n_classes);
            let mut acc: Option<Gradients> = None;
            for (img, target) in sample.images.iter().zip(&targets) {
                let g = net.backward(img, &target.row_labels())?;
                match &mut acc {
                    Some(total) => total.add_assign(&g),
                    None => acc = Some(g),
                }
            }
            opt.step(net, &acc.expect("at least one image"))?;
        }
    }
    Ok(losses)
}
