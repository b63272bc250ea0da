//! Aggregating per-view predictions into category and pose estimates.
//!
//! A partial set of views (any subset, down to a single image) is scored
//! jointly over classes and assignment candidates by summing per-view
//! log-likelihood ratios against the incorrect-view class. A sequential state
//! supports one-view-at-a-time updates that agree exactly with batch
//! prediction. Discrete viewpoint decisions are decoded through a table built
//! from the training split, which also resolves the global relabeling freedom
//! the latent-viewpoint training leaves behind.

use crate::data::MultiViewSample;
use crate::geometry::{angular_error_deg, GeometryError, RotationCandidate};
use crate::model::{Image, ModelError, Network, PredictionMatrix};
use nalgebra::Matrix3;
use ndarray::Array2;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

/// Random view subsets drawn per (views, object) cell during evaluation.
pub const DEFAULT_EVAL_TRIALS: usize = 120;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("no views supplied")]
    EmptyInput,
    #[error("got {got} predictions but {expected} offsets")]
    OffsetCountMismatch { got: usize, expected: usize },
    #[error("offset {offset} out of range for {views} viewpoints")]
    OffsetOutOfRange { offset: usize, views: usize },
    #[error("offset {offset} already observed")]
    DuplicateOffset { offset: usize },
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("prediction matrices disagree in shape")]
    InconsistentShapes,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A partial capture: images plus their known relative offsets in the rig's
/// canonical capture order.
#[derive(Debug, Clone)]
pub struct PartialObservation {
    pub images: Vec<Image>,
    pub offsets: Vec<usize>,
}

impl PartialObservation {
    pub fn validate(&self, views: usize) -> Result<(), InferenceError> {
        if self.images.is_empty() {
            return Err(InferenceError::EmptyInput);
        }
        if self.images.len() != self.offsets.len() {
            return Err(InferenceError::OffsetCountMismatch {
                got: self.images.len(),
                expected: self.offsets.len(),
            });
        }
        let mut seen = vec![false; views];
        for &o in &self.offsets {
            if o >= views {
                return Err(InferenceError::OffsetOutOfRange { offset: o, views });
            }
            if seen[o] {
                return Err(InferenceError::DuplicateOffset { offset: o });
            }
            seen[o] = true;
        }
        Ok(())
    }
}

/// Joint category/viewpoint decision for an observed view set.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Predicted class, 0-based.
    pub class: usize,
    /// Winning candidate id (smallest id among ties).
    pub candidate_id: usize,
    /// Viewpoint assigned to each observed image, in observation order.
    pub view_of_image: Vec<usize>,
    pub log_score: f64,
    /// Best candidate score per class.
    pub per_class_scores: Vec<f64>,
}

fn check_stack(
    predictions: &[PredictionMatrix],
    offsets: &[usize],
    candidates: &[RotationCandidate],
) -> Result<(usize, usize), InferenceError> {
    if predictions.is_empty() {
        return Err(InferenceError::EmptyInput);
    }
    if predictions.len() != offsets.len() {
        return Err(InferenceError::OffsetCountMismatch {
            got: predictions.len(),
            expected: offsets.len(),
        });
    }
    if candidates.is_empty() {
        return Err(InferenceError::EmptyCandidates);
    }
    let views = candidates[0].perm.len();
    let cols = predictions[0].cols();
    for p in predictions {
        if p.rows() != views || p.cols() != cols {
            return Err(InferenceError::InconsistentShapes);
        }
    }
    let mut seen = vec![false; views];
    for &o in offsets {
        if o >= views {
            return Err(InferenceError::OffsetOutOfRange { offset: o, views });
        }
        if seen[o] {
            return Err(InferenceError::DuplicateOffset { offset: o });
        }
        seen[o] = true;
    }
    Ok((views, cols - 1))
}

fn argmax_scores(scores: &Array2<f64>) -> (usize, usize, f64, Vec<f64>) {
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    let mut per_class = vec![f64::NEG_INFINITY; scores.nrows()];
    for y in 0..scores.nrows() {
        for c in 0..scores.ncols() {
            let s = scores[(y, c)];
            if s > per_class[y] {
                per_class[y] = s;
            }
            if s > best.2 {
                best = (y, c, s);
            }
        }
    }
    (best.0, best.1, best.2, per_class)
}

/// Joint argmax over classes and candidates of the summed per-view
/// log-likelihood ratios for the observed offsets. Ties break to the smallest
/// class index, then the smallest candidate id.
pub fn predict(
    predictions: &[PredictionMatrix],
    candidates: &[RotationCandidate],
    offsets: &[usize],
) -> Result<Prediction, InferenceError> {
    let (_views, n_classes) = check_stack(predictions, offsets, candidates)?;
    let mut scores = Array2::zeros((n_classes, candidates.len()));
    for (p, &offset) in predictions.iter().zip(offsets) {
        let incorrect = p.incorrect_col();
        for y in 0..n_classes {
            for (c, cand) in candidates.iter().enumerate() {
                let v = cand.perm[offset];
                scores[(y, c)] += p.log_prob(v, y) - p.log_prob(v, incorrect);
            }
        }
    }
    let (class, candidate_id, log_score, per_class_scores) = argmax_scores(&scores);
    Ok(Prediction {
        class,
        candidate_id,
        view_of_image: offsets
            .iter()
            .map(|&o| candidates[candidate_id].perm[o])
            .collect(),
        log_score,
        per_class_scores,
    })
}

/// Forwards a partial observation through the network, then predicts.
pub fn predict_observation(
    net: &Network,
    observation: &PartialObservation,
    candidates: &[RotationCandidate],
) -> Result<Prediction, InferenceError> {
    if candidates.is_empty() {
        return Err(InferenceError::EmptyCandidates);
    }
    observation.validate(candidates[0].perm.len())?;
    let ps = observation
        .images
        .iter()
        .map(|img| net.forward(img))
        .collect::<Result<Vec<_>, _>>()?;
    predict(&ps, candidates, &observation.offsets)
}

/// Running per-(class, candidate) log scores for sequential view input.
/// Reading the argmax after any number of updates equals batch [`predict`] on
/// the views seen so far, exactly.
#[derive(Debug, Clone)]
pub struct SequentialState {
    scores: Array2<f64>,
    offsets: Vec<usize>,
    views: usize,
}

impl SequentialState {
    pub fn new(n_classes: usize, candidates: &[RotationCandidate]) -> Result<Self, InferenceError> {
        if candidates.is_empty() {
            return Err(InferenceError::EmptyCandidates);
        }
        Ok(SequentialState {
            scores: Array2::zeros((n_classes, candidates.len())),
            offsets: Vec::new(),
            views: candidates[0].perm.len(),
        })
    }

    pub fn observed(&self) -> &[usize] {
        &self.offsets
    }

    /// Folds one new view into the running scores.
    pub fn update(
        &mut self,
        prediction: &PredictionMatrix,
        offset: usize,
        candidates: &[RotationCandidate],
    ) -> Result<(), InferenceError> {
        if offset >= self.views {
            return Err(InferenceError::OffsetOutOfRange {
                offset,
                views: self.views,
            });
        }
        if self.offsets.contains(&offset) {
            return Err(InferenceError::DuplicateOffset { offset });
        }
        if prediction.rows() != self.views || prediction.cols() != self.scores.nrows() + 1 {
            return Err(InferenceError::InconsistentShapes);
        }
        let incorrect = prediction.incorrect_col();
        for y in 0..self.scores.nrows() {
            for (c, cand) in candidates.iter().enumerate() {
                let v = cand.perm[offset];
                self.scores[(y, c)] += prediction.log_prob(v, y) - prediction.log_prob(v, incorrect);
            }
        }
        self.offsets.push(offset);
        Ok(())
    }

    /// Current decision over everything observed so far.
    pub fn prediction(&self, candidates: &[RotationCandidate]) -> Result<Prediction, InferenceError> {
        if self.offsets.is_empty() {
            return Err(InferenceError::EmptyInput);
        }
        let (class, candidate_id, log_score, per_class_scores) = argmax_scores(&self.scores);
        Ok(Prediction {
            class,
            candidate_id,
            view_of_image: self
                .offsets
                .iter()
                .map(|&o| candidates[candidate_id].perm[o])
                .collect(),
            log_score,
            per_class_scores,
        })
    }
}

/// Where a decoded pose came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseDecodeSource {
    /// Modal pose of the training bucket for the predicted first viewpoint.
    Table,
    /// Empty bucket: fell back to the winning candidate's geometric rotation.
    Fallback,
}

/// Representative rotation of a discrete viewpoint: the per-image pose of an
/// image observed from that viewpoint.
///
/// Upright cases use the azimuth turn about the up-axis (elevation is not a
/// pose degree of freedom under the upright assumption). For the dodecahedral
/// rig the representative is the smallest-id candidate rotation carrying
/// viewpoint 0 to the given viewpoint.
pub fn viewpoint_rotation(
    setup: &crate::ViewpointSetup,
    candidates: &[RotationCandidate],
    view: usize,
) -> Matrix3<f64> {
    match setup.case {
        crate::SetupCase::UprightRing | crate::SetupCase::UprightGrid => {
            let azimuth = (view % setup.azimuth_count.max(1)) as f64 * setup.theta_deg;
            let rot = crate::geometry::rotation_z_deg(azimuth);
            setup.orientation * rot * setup.orientation.transpose()
        }
        crate::SetupCase::Dodecahedron => candidates
            .iter()
            .find(|c| c.perm[0] == view)
            .map(|c| c.rotation)
            .unwrap_or_else(Matrix3::identity),
    }
}

/// Decode table built from the training split after training.
///
/// Buckets are keyed by (category, assigned viewpoint) and hold the
/// ground-truth viewpoints of the training images the trained model assigns
/// there. Bucket modes resolve the relabeling freedom latent-viewpoint
/// training leaves behind; keying by category is required because
/// self-alignment fixes an arbitrary reference per class.
#[derive(Debug, Clone)]
pub struct PoseTable {
    /// `view_mode[class][assigned]` -> modal ground-truth viewpoint, None when
    /// no training image of any class landed in the bucket.
    view_mode: Vec<Vec<Option<usize>>>,
    /// Representative per-image pose rotation of each ground-truth viewpoint.
    viewpoint_rotations: Vec<Matrix3<f64>>,
    candidate_rotations: Vec<Matrix3<f64>>,
}

fn bucket_mode(bucket: &[usize], domain: usize) -> Option<usize> {
    if bucket.is_empty() {
        return None;
    }
    let mut counts = vec![0usize; domain];
    for &v in bucket {
        counts[v] += 1;
    }
    counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))) // ties to the smallest index
        .map(|(idx, _)| idx)
}

/// Builds the decode table by running the trained model over the training
/// split and recording, per category, where each image's ground-truth
/// viewpoint lands.
pub fn build_pose_table(
    net: &Network,
    train: &[MultiViewSample],
    candidates: &[RotationCandidate],
    setup: &crate::ViewpointSetup,
) -> Result<PoseTable, InferenceError> {
    if candidates.is_empty() {
        return Err(InferenceError::EmptyCandidates);
    }
    let views = candidates[0].perm.len();
    let n_classes = net.config().cols - 1;
    let mut buckets = vec![vec![Vec::new(); views]; n_classes];
    for sample in train {
        let ps = sample
            .images
            .iter()
            .map(|img| net.forward(img))
            .collect::<Result<Vec<_>, _>>()?;
        // training-time selection conditions on the known label
        let sel = crate::alignment::select_assignment(&ps, sample.label, candidates)
            .map_err(|_| InferenceError::EmptyCandidates)?;
        for (i, &row) in sel.per_image_rows.iter().enumerate() {
            buckets[sample.label][row].push(sample.gt_views[i]);
        }
    }
    // class-specific mode first, pooled mode across classes as a fallback
    let view_mode = (0..n_classes)
        .map(|y| {
            (0..views)
                .map(|v| {
                    bucket_mode(&buckets[y][v], views).or_else(|| {
                        let pooled: Vec<usize> = buckets
                            .iter()
                            .flat_map(|per_class| per_class[v].iter().copied())
                            .collect();
                        bucket_mode(&pooled, views)
                    })
                })
                .collect()
        })
        .collect();
    Ok(PoseTable {
        view_mode,
        viewpoint_rotations: (0..views)
            .map(|v| viewpoint_rotation(setup, candidates, v))
            .collect(),
        candidate_rotations: candidates.iter().map(|c| c.rotation).collect(),
    })
}

impl PoseTable {
    /// Table without training statistics: viewpoints decode to themselves and
    /// pose decoding always falls back to candidate rotations.
    pub fn identity(
        setup: &crate::ViewpointSetup,
        candidates: &[RotationCandidate],
        n_classes: usize,
    ) -> Self {
        let views = candidates.first().map_or(0, |c| c.perm.len());
        PoseTable {
            view_mode: vec![vec![None; views]; n_classes],
            viewpoint_rotations: (0..views)
                .map(|v| viewpoint_rotation(setup, candidates, v))
                .collect(),
            candidate_rotations: candidates.iter().map(|c| c.rotation).collect(),
        }
    }

    /// Gauge-corrected viewpoint: the modal ground-truth viewpoint of training
    /// images of the predicted category assigned to `assigned`; identity when
    /// the bucket is empty.
    pub fn decode_view(&self, class: usize, assigned: usize) -> usize {
        self.view_mode[class][assigned].unwrap_or(assigned)
    }

    /// Per-image pose rotation of a ground-truth viewpoint.
    pub fn pose_of_view(&self, view: usize) -> Matrix3<f64> {
        self.viewpoint_rotations[view]
    }

    /// Modal pose for the predicted viewpoint of the first observed image
    /// under the predicted category, falling back to the winning candidate's
    /// geometric rotation when the bucket is empty.
    pub fn decode_pose(&self, prediction: &Prediction) -> (Matrix3<f64>, PoseDecodeSource) {
        let first_view = prediction.view_of_image[0];
        match self.view_mode[prediction.class][first_view] {
            Some(view) => (self.viewpoint_rotations[view], PoseDecodeSource::Table),
            None => (
                self.candidate_rotations[prediction.candidate_id],
                PoseDecodeSource::Fallback,
            ),
        }
    }
}

/// Everything the evaluator needs about one test object, with the network
/// already applied to all of its views.
#[derive(Debug, Clone)]
pub struct ScoredSample {
    pub predictions: Vec<PredictionMatrix>,
    pub label: usize,
    pub gt_views: Vec<usize>,
    pub pose: Matrix3<f64>,
}

impl ScoredSample {
    pub fn from_sample(net: &Network, sample: &MultiViewSample) -> Result<Self, InferenceError> {
        Ok(ScoredSample {
            predictions: sample
                .images
                .iter()
                .map(|img| net.forward(img))
                .collect::<Result<Vec<_>, _>>()?,
            label: sample.label,
            gt_views: sample.gt_views.clone(),
            pose: sample.object.pose,
        })
    }
}

/// Aggregate metrics for one number-of-views setting.
#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub views: usize,
    pub trials: usize,
    pub class_accuracy: f64,
    pub view_accuracy: f64,
    pub pose_median_deg: f64,
    pub pose_mean_deg: f64,
    /// Pose statistics over correctly classified trials only.
    pub pose_median_correct_deg: Option<f64>,
    pub pose_mean_correct_deg: Option<f64>,
    pub pose_fallbacks: usize,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct Metrics {
    pub rows: Vec<EvalRow>,
}

impl Metrics {
    /// CSV: one row per views setting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "views,trials,class_acc,view_acc,pose_med_deg,pose_ave_deg,\
             pose_med_c_deg,pose_ave_c_deg,pose_fallbacks"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.views,
                r.trials,
                r.class_accuracy,
                r.view_accuracy,
                r.pose_median_deg,
                r.pose_mean_deg,
                r.pose_median_correct_deg.map_or(String::new(), |v| v.to_string()),
                r.pose_mean_correct_deg.map_or(String::new(), |v| v.to_string()),
                r.pose_fallbacks
            )?;
        }
        Ok(())
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Random distinct offsets in random order (partial Fisher-Yates).
pub(crate) fn random_offsets(rng: &mut ChaCha8Rng, views: usize, k: usize) -> Vec<usize> {
    use rand::Rng;
    let mut pool: Vec<usize> = (0..views).collect();
    for i in 0..k {
        let j = rng.random_range(i..views);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

struct TrialOutcome {
    class_correct: bool,
    view_hits: usize,
    view_total: usize,
    /// Per observed image: decoded per-image pose vs ground truth.
    pose_errors_deg: Vec<f64>,
    fallback: bool,
}

fn run_trial(
    sample: &ScoredSample,
    candidates: &[RotationCandidate],
    table: &PoseTable,
    offsets: &[usize],
) -> Result<TrialOutcome, InferenceError> {
    let subset: Vec<PredictionMatrix> = offsets
        .iter()
        .map(|&o| sample.predictions[o].clone())
        .collect();
    let pred = predict(&subset, candidates, offsets)?;
    let class_correct = pred.class == sample.label;
    let mut view_hits = 0;
    let mut pose_errors_deg = Vec::with_capacity(offsets.len());
    for (&o, &v) in offsets.iter().zip(&pred.view_of_image) {
        let decoded = table.decode_view(pred.class, v);
        if decoded == sample.gt_views[o] {
            view_hits += 1;
        }
        pose_errors_deg.push(angular_error_deg(
            &table.pose_of_view(decoded),
            &table.pose_of_view(sample.gt_views[o]),
        )?);
    }
    let (_, source) = table.decode_pose(&pred);
    Ok(TrialOutcome {
        class_correct,
        view_hits,
        view_total: offsets.len(),
        pose_errors_deg,
        fallback: source == PoseDecodeSource::Fallback,
    })
}

/// Evaluation over precomputed per-view predictions: for every views setting,
/// draws `trials` random view subsets per object and aggregates accuracy and
/// pose-error statistics.
pub fn evaluate_scored(
    samples: &[ScoredSample],
    candidates: &[RotationCandidate],
    table: &PoseTable,
    views_list: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Metrics, InferenceError> {
    if samples.is_empty() {
        return Err(InferenceError::EmptyInput);
    }
    let m = candidates
        .first()
        .ok_or(InferenceError::EmptyCandidates)?
        .perm
        .len();
    let mut rows = Vec::new();
    for &k in views_list {
        if k == 0 || k > m {
            return Err(InferenceError::OffsetOutOfRange { offset: k, views: m });
        }
        let outcomes: Vec<Vec<TrialOutcome>> = samples
            .par_iter()
            .enumerate()
            .map(|(s_idx, sample)| {
                (0..trials)
                    .map(|t| {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(
                            ((k as u64) << 44) | ((t as u64) << 22) | s_idx as u64,
                        );
                        let offsets = random_offsets(&mut rng, m, k);
                        run_trial(sample, candidates, table, &offsets)
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;

        let flat: Vec<&TrialOutcome> = outcomes.iter().flatten().collect();
        let total = flat.len() as f64;
        let class_accuracy = flat.iter().filter(|o| o.class_correct).count() as f64 / total;
        let view_accuracy = flat.iter().map(|o| o.view_hits).sum::<usize>() as f64
            / flat.iter().map(|o| o.view_total).sum::<usize>() as f64;
        let mut errors: Vec<f64> = flat
            .iter()
            .flat_map(|o| o.pose_errors_deg.iter().copied())
            .collect();
        let mut correct_errors: Vec<f64> = flat
            .iter()
            .filter(|o| o.class_correct)
            .flat_map(|o| o.pose_errors_deg.iter().copied())
            .collect();
        let pose_mean_deg = errors.iter().sum::<f64>() / errors.len() as f64;
        let pose_mean_correct_deg = (!correct_errors.is_empty())
            .then(|| correct_errors.iter().sum::<f64>() / correct_errors.len() as f64);
        rows.push(EvalRow {
            views: k,
            trials,
            class_accuracy,
            view_accuracy,
            pose_median_deg: median(&mut errors),
            pose_mean_deg,
            pose_median_correct_deg: (!correct_errors.is_empty())
                .then(|| median(&mut correct_errors)),
            pose_mean_correct_deg,
            pose_fallbacks: flat.iter().filter(|o| o.fallback).count(),
        });
    }
    Ok(Metrics { rows })
}

/// Full evaluation of a trained network on test samples.
pub fn evaluate(
    test: &[MultiViewSample],
    net: &Network,
    candidates: &[RotationCandidate],
    table: &PoseTable,
    views_list: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Metrics, InferenceError> {
    let scored = test
        .par_iter()
        .map(|s| ScoredSample::from_sample(net, s))
        .collect::<Result<Vec<_>, _>>()?;
    evaluate_scored(&scored, candidates, table, views_list, trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::select_assignment;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn cyclic_candidates(m: usize, theta: f64) -> Vec<RotationCandidate> {
        (0..m)
            .map(|k| RotationCandidate {
                id: k,
                perm: (0..m).map(|i| (i + k) % m).collect(),
                rotation: crate::geometry::rotation_z_deg(k as f64 * theta),
            })
            .collect()
    }

    fn random_stack(seed: u64, m: usize, n: usize) -> Vec<PredictionMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| {
                let mut v = Array2::from_shape_fn((m, n + 1), |_| rng.random_range(0.05..1.0));
                for mut row in v.rows_mut() {
                    let s: f64 = row.sum();
                    row.mapv_inplace(|x| x / s);
                }
                PredictionMatrix::from_values(v)
            })
            .collect()
    }

    #[test]
    fn single_view_reduces_to_best_ratio_cell() {
        let m = 6;
        let n = 3;
        let ps = random_stack(1, m, n);
        let candidates = cyclic_candidates(m, 60.0);
        let pred = predict(&ps[..1], &candidates, &[0]).unwrap();
        // brute force over (row, class) of the single matrix
        let p = &ps[0];
        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        for y in 0..n {
            for v in 0..m {
                let s = p.log_prob(v, y) - p.log_prob(v, p.incorrect_col());
                if s > best.2 {
                    best = (y, v, s);
                }
            }
        }
        assert_eq!(pred.class, best.0);
        assert_eq!(pred.view_of_image[0], best.1);
        assert_abs_diff_eq!(pred.log_score, best.2, epsilon = 1e-12);
    }

    #[test]
    fn full_views_agree_with_training_selection() {
        let m = 8;
        let n = 4;
        let candidates = cyclic_candidates(m, 45.0);
        let offsets: Vec<usize> = (0..m).collect();
        for seed in 0..50 {
            let ps = random_stack(seed, m, n);
            let pred = predict(&ps, &candidates, &offsets).unwrap();
            // the prediction's class must carry the best per-class selection
            let per_class: Vec<_> = (0..n)
                .map(|y| select_assignment(&ps, y, &candidates).unwrap())
                .collect();
            let best_y = (0..n)
                .max_by(|&a, &b| {
                    per_class[a]
                        .log_score
                        .total_cmp(&per_class[b].log_score)
                        .then(b.cmp(&a))
                })
                .unwrap();
            assert_eq!(pred.class, best_y);
            assert_eq!(pred.candidate_id, per_class[best_y].candidate_id);
            assert_abs_diff_eq!(pred.log_score, per_class[best_y].log_score, epsilon = 1e-9);
        }
    }

    #[test]
    fn uniform_stack_ties_break_to_first() {
        let m = 4;
        let n = 3;
        let uniform: Vec<PredictionMatrix> = (0..m)
            .map(|_| {
                PredictionMatrix::from_values(Array2::from_elem((m, n + 1), 1.0 / (n as f64 + 1.0)))
            })
            .collect();
        let candidates = cyclic_candidates(m, 90.0);
        let pred = predict(&uniform, &candidates, &[0, 1, 2, 3]).unwrap();
        assert_eq!(pred.class, 0);
        assert_eq!(pred.candidate_id, 0);
        assert_abs_diff_eq!(pred.log_score, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn per_image_score_shift_leaves_candidate_choice_alone() {
        // scaling one image's class column and renormalizing shifts all
        // candidate scores for that class by the same constant
        let m = 6;
        let n = 2;
        let candidates = cyclic_candidates(m, 60.0);
        let y = 1usize;
        for seed in 0..20 {
            let ps = random_stack(seed + 100, m, n);
            let base = select_assignment(&ps, y, &candidates).unwrap();
            let mut scaled = ps.clone();
            let target_image = (seed as usize) % m;
            let mut v = scaled[target_image].values().clone();
            for mut row in v.rows_mut() {
                row[y] *= 7.5;
                let s: f64 = row.sum();
                row.mapv_inplace(|x| x / s);
            }
            scaled[target_image] = PredictionMatrix::from_values(v);
            let shifted = select_assignment(&scaled, y, &candidates).unwrap();
            assert_eq!(base.candidate_id, shifted.candidate_id);
            assert_abs_diff_eq!(
                shifted.log_score - base.log_score,
                7.5_f64.ln(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn sequential_matches_batch_on_each_prefix() {
        let m = 10;
        let n = 3;
        let candidates = cyclic_candidates(m, 36.0);
        for seed in 0..30 {
            let ps = random_stack(seed + 500, m, n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let offsets = random_offsets(&mut rng, m, 7);
            let mut state = SequentialState::new(n, &candidates).unwrap();
            for prefix in 1..=offsets.len() {
                state
                    .update(
                        &ps[offsets[prefix - 1]],
                        offsets[prefix - 1],
                        &candidates,
                    )
                    .unwrap();
                let incremental = state.prediction(&candidates).unwrap();
                let subset: Vec<_> = offsets[..prefix]
                    .iter()
                    .map(|&o| ps[o].clone())
                    .collect();
                let batch = predict(&subset, &candidates, &offsets[..prefix]).unwrap();
                assert_eq!(incremental, batch, "prefix {prefix} seed {seed}");
            }
        }
    }

    #[test]
    fn sequential_rejects_duplicate_offsets() {
        let candidates = cyclic_candidates(4, 90.0);
        let ps = random_stack(2, 4, 2);
        let mut state = SequentialState::new(2, &candidates).unwrap();
        state.update(&ps[1], 1, &candidates).unwrap();
        assert!(matches!(
            state.update(&ps[1], 1, &candidates),
            Err(InferenceError::DuplicateOffset { offset: 1 })
        ));
    }

    #[test]
    fn insertion_order_does_not_change_the_decision() {
        let m = 8;
        let n = 2;
        let candidates = cyclic_candidates(m, 45.0);
        let ps = random_stack(7, m, n);
        let offsets = [3usize, 0, 6, 2];
        let reversed = [2usize, 6, 0, 3];
        let feed = |order: &[usize]| {
            let mut state = SequentialState::new(n, &candidates).unwrap();
            for &o in order {
                state.update(&ps[o], o, &candidates).unwrap();
            }
            state.prediction(&candidates).unwrap()
        };
        let a = feed(&offsets);
        let b = feed(&reversed);
        assert_eq!(a.class, b.class);
        assert_eq!(a.candidate_id, b.candidate_id);
        assert_abs_diff_eq!(a.log_score, b.log_score, epsilon = 1e-12);
    }

    fn oracle_stack(
        label: usize,
        n_classes: usize,
        gt_views: &[usize],
        confidence: f64,
    ) -> Vec<PredictionMatrix> {
        let m = gt_views.len();
        gt_views
            .iter()
            .map(|&view| {
                let residual = (1.0 - confidence) / n_classes as f64;
                let mut v = Array2::from_elem((m, n_classes + 1), residual);
                for j in 0..m {
                    let col = if j == view { label } else { n_classes };
                    v[(j, col)] = confidence;
                }
                // renormalize rows
                for mut row in v.rows_mut() {
                    let s: f64 = row.sum();
                    row.mapv_inplace(|x| x / s);
                }
                PredictionMatrix::from_values(v)
            })
            .collect()
    }

    #[test]
    fn perfect_oracle_scores_perfectly() {
        let m = 6;
        let n = 3;
        let setup = crate::ViewpointSetup::build(crate::SetupCase::UprightRing, 60.0, 30.0).unwrap();
        let candidates = crate::geometry::enumerate_candidates(&setup);
        let table = PoseTable::identity(&setup, &candidates, n);
        let samples: Vec<ScoredSample> = (0..12)
            .map(|i| {
                let cand = &candidates[i % m];
                ScoredSample {
                    predictions: oracle_stack(i % n, n, &cand.perm, 0.97),
                    label: i % n,
                    gt_views: cand.perm.clone(),
                    pose: cand.rotation,
                }
            })
            .collect();
        let metrics =
            evaluate_scored(&samples, &candidates, &table, &[1, 3, 6], 40, 99).unwrap();
        for row in &metrics.rows {
            assert_abs_diff_eq!(row.class_accuracy, 1.0);
            assert_abs_diff_eq!(row.view_accuracy, 1.0);
            assert_abs_diff_eq!(row.pose_median_deg, 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(row.pose_mean_deg, 0.0, epsilon = 1e-9);
            // all decodes fell back to candidate rotations (identity table)
            assert_eq!(row.pose_fallbacks, 40 * samples.len());
        }
    }

    #[test]
    fn uniform_predictions_hit_chance_level_exactly() {
        // a tie-broken always-class-0 predictor scores 1/N on balanced data
        let m = 4;
        let n = 4;
        let setup = crate::ViewpointSetup::build(crate::SetupCase::UprightRing, 90.0, 30.0).unwrap();
        let candidates = crate::geometry::enumerate_candidates(&setup);
        let table = PoseTable::identity(&setup, &candidates, n);
        let uniform: Vec<PredictionMatrix> = (0..m)
            .map(|_| {
                PredictionMatrix::from_values(Array2::from_elem((m, n + 1), 1.0 / (n as f64 + 1.0)))
            })
            .collect();
        let samples: Vec<ScoredSample> = (0..20)
            .map(|i| ScoredSample {
                predictions: uniform.clone(),
                label: i % n,
                gt_views: (0..m).collect(),
                pose: Matrix3::identity(),
            })
            .collect();
        let metrics = evaluate_scored(&samples, &candidates, &table, &[2], 10, 5).unwrap();
        assert_abs_diff_eq!(metrics.rows[0].class_accuracy, 1.0 / n as f64, epsilon = 1e-12);
    }

    #[test]
    fn pose_table_decodes_shifts() {
        // a true per-image pose at azimuth 60 whose predicted viewpoint is
        // shifted by one 30-degree step decodes 30 degrees away
        let m = 12;
        let setup = crate::ViewpointSetup::build(crate::SetupCase::UprightRing, 30.0, 30.0).unwrap();
        let candidates = crate::geometry::enumerate_candidates(&setup);
        let mut table = PoseTable::identity(&setup, &candidates, 1);
        table.view_mode = vec![(0..m).map(|v| Some((v + 1) % m)).collect()];
        let pred = Prediction {
            class: 0,
            candidate_id: 0,
            view_of_image: vec![2],
            log_score: 0.0,
            per_class_scores: vec![0.0],
        };
        let (pose, source) = table.decode_pose(&pred);
        assert_eq!(source, PoseDecodeSource::Table);
        let true_pose = table.pose_of_view(2); // true per-image pose: azimuth 60
        let err = angular_error_deg(&pose, &true_pose).unwrap();
        assert_abs_diff_eq!(err, 30.0, epsilon = 1e-9);

        // single-entry buckets return exactly the bucket's pose
        table.view_mode = vec![(0..m).map(Some).collect()];
        let (pose, _) = table.decode_pose(&pred);
        assert_abs_diff_eq!(
            angular_error_deg(&pose, &table.pose_of_view(2)).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn empty_bucket_falls_back_to_candidate_rotation() {
        let setup = crate::ViewpointSetup::build(crate::SetupCase::UprightRing, 90.0, 30.0).unwrap();
        let candidates = crate::geometry::enumerate_candidates(&setup);
        let table = PoseTable::identity(&setup, &candidates, 2);
        let pred = Prediction {
            class: 1,
            candidate_id: 3,
            view_of_image: vec![2, 3],
            log_score: 0.5,
            per_class_scores: vec![0.0, 0.5],
        };
        let (pose, source) = table.decode_pose(&pred);
        assert_eq!(source, PoseDecodeSource::Fallback);
        assert_eq!(pose, candidates[3].rotation);
    }

    #[test]
    fn observation_validation() {
        let obs = PartialObservation {
            images: vec![],
            offsets: vec![],
        };
        assert!(matches!(obs.validate(4), Err(InferenceError::EmptyInput)));
        let img = Image::new(Array2::zeros((2, 2))).unwrap();
        let obs = PartialObservation {
            images: vec![img.clone(), img.clone()],
            offsets: vec![1, 1],
        };
        assert!(matches!(
            obs.validate(4),
            Err(InferenceError::DuplicateOffset { offset: 1 })
        ));
        let obs = PartialObservation {
            images: vec![img],
            offsets: vec![9],
        };
        assert!(matches!(
            obs.validate(4),
            Err(InferenceError::OffsetOutOfRange { offset: 9, .. })
        ));
    }
}
