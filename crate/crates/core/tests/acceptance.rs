//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//! Run with `cargo test -p viewalign --test acceptance -- --nocapture`.
//!
//! Heavy artifacts (the default benchmark run and the confusable-variant
//! comparison) are computed once and shared across criteria.

mod support;

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::{Duration, Instant};
use support::{argmax_set, full_objective_longhand, random_stack, rotation_search_oracle};
use viewalign::alignment::{train, TrainConfig, TrainHistory};
use viewalign::baselines::{
    late_pool_evaluate, train_fine_grained_with_checkpoints, train_late_pool,
    FineGrainedCheckpoint, ViewMarginalization,
};
use viewalign::data::{generate_dataset, write_pgm, Dataset, DatasetConfig, DatasetVariant};
use viewalign::geometry::{
    dodecahedron_vertices, enumerate_candidates, SetupCase, ViewpointSetup,
};
use viewalign::inference::{build_pose_table, evaluate, predict, Metrics, SequentialState};
use viewalign::model::{Network, NetworkConfig};

fn check(criterion: usize, ok: bool, detail: &str) {
    if ok {
        println!("acceptance criterion {criterion}: PASS — {detail}");
    } else {
        println!("acceptance criterion {criterion}: FAIL — {detail}");
        panic!("acceptance criterion {criterion} failed: {detail}");
    }
}

// ---------------------------------------------------------------- criterion 1

#[test]
fn criterion_1_candidate_enumeration_exactness() {
    let start = Instant::now();

    let ring = ViewpointSetup::build(SetupCase::UprightRing, 30.0, 30.0).unwrap();
    let ring_cands = enumerate_candidates(&ring);
    let ring_ok = ring_cands.len() == 12
        && ring_cands
            .iter()
            .enumerate()
            .all(|(k, c)| (0..12).all(|i| c.perm[i] == (i + k) % 12));

    let dodeca = ViewpointSetup::build(SetupCase::Dodecahedron, 0.0, 0.0).unwrap();
    let dodeca_cands = enumerate_candidates(&dodeca);
    let enumerated: BTreeSet<Vec<usize>> =
        dodeca_cands.iter().map(|c| c.perm.clone()).collect();
    let oracle = rotation_search_oracle(&dodecahedron_vertices());
    let oracle_ok = dodeca_cands.len() == 60 && oracle.len() == 60 && enumerated == oracle;

    // orientation-preserving and adjacency-preserving
    let orientation_ok = dodeca_cands
        .iter()
        .all(|c| (c.rotation.determinant() - 1.0).abs() < 1e-9);
    let min_dot = {
        let mut best = f64::NEG_INFINITY;
        for i in 0..20 {
            for j in i + 1..20 {
                best = best.max(dodeca.positions[i].dot(&dodeca.positions[j]));
            }
        }
        best
    };
    let adjacent = |i: usize, j: usize| dodeca.positions[i].dot(&dodeca.positions[j]) > min_dot - 1e-9;
    let adjacency_ok = dodeca_cands.iter().all(|c| {
        (0..20).all(|i| {
            (i + 1..20).all(|j| !adjacent(i, j) || adjacent(c.perm[i], c.perm[j]))
        })
    });

    let grid = ViewpointSetup::build(SetupCase::UprightGrid, 30.0, 30.0).unwrap();
    let grid_ok = enumerate_candidates(&grid).len() == grid.azimuth_count;

    let elapsed = start.elapsed();
    check(
        1,
        ring_ok && oracle_ok && orientation_ok && adjacency_ok && grid_ok
            && elapsed < Duration::from_secs(1),
        &format!(
            "12 cyclic candidates, 60 = oracle set (orientation- and adjacency-preserving), \
             M_a = {} for the grid; {:.0} ms",
            grid.azimuth_count,
            elapsed.as_secs_f64() * 1e3
        ),
    );
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn criterion_2_ratio_selection_equals_full_objective() {
    let start = Instant::now();
    let setups = [
        ViewpointSetup::build(SetupCase::UprightRing, 120.0, 30.0).unwrap(), // M = 3
        ViewpointSetup::build(SetupCase::UprightRing, 30.0, 30.0).unwrap(),  // M = 12
        ViewpointSetup::build(SetupCase::Dodecahedron, 0.0, 0.0).unwrap(),   // M = 20
    ];
    let candidate_sets: Vec<_> = setups.iter().map(enumerate_candidates).collect();
    let mut stacks_checked = 0usize;
    let mut agreements = 0usize;
    'outer: for seed in 0.. {
        for (setup, cands) in setups.iter().zip(&candidate_sets) {
            for &n in &[2usize, 5] {
                if stacks_checked == 1000 {
                    break 'outer;
                }
                let m = setup.view_count();
                let stacks = random_stack(31_000 + seed * 61 + (m + n) as u64, m, n);
                let y = (seed as usize) % n;
                let ratio: Vec<f64> = cands
                    .iter()
                    .map(|c| viewalign::alignment::score_candidate(&stacks, c, y))
                    .collect();
                let full: Vec<f64> = cands
                    .iter()
                    .map(|c| full_objective_longhand(&stacks, c, y))
                    .collect();
                stacks_checked += 1;
                if argmax_set(&ratio) == argmax_set(&full) {
                    agreements += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        2,
        agreements == 1000 && elapsed < Duration::from_secs(10),
        &format!(
            "{agreements}/1000 stacks agree on argmax and tie structure (M in {{3,12,20}}, \
             N in {{2,5}}); {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_gradients_match_finite_differences() {
    let start = Instant::now();
    let cfg = NetworkConfig {
        image_h: 6,
        image_w: 6,
        conv_channels: 2,
        hidden: 6,
        rows: 3,
        cols: 3,
        seed: 77,
    };
    let mut net = Network::new(cfg.clone());
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4242);
    // zero-initialized biases can sit exactly on a ReLU kink (the loss is not
    // differentiable there), so the probe net gets randomized biases
    for (name, slice) in net.params.tensors_mut() {
        if name.starts_with('b') || name == "conv_b" {
            for v in slice {
                *v = rng.random_range(-0.05..0.05);
            }
        }
    }
    let n_params = net.params.param_count();
    assert!(n_params <= 500, "test backbone stays finite-difference sized");
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    while checked < 20 {
        let img = viewalign::model::Image::new(ndarray::Array2::from_shape_fn((6, 6), |_| {
            rng.random_range(0.0..1.0)
        }))
        .unwrap();
        let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..3)).collect();
        // central differences are only meaningful away from the kinks: the
        // perturbation moves pre-activations by at most ~2h, so require a
        // margin two orders above that and redraw degenerate samples
        if net.activation_kink_margin(&img).unwrap() < 1e-3 {
            continue;
        }
        checked += 1;
        let analytic = net.backward(&img, &labels).unwrap();
        for idx in 0..n_params {
            let mut plus = net.clone();
            plus.params.add_at(idx, h);
            let mut minus = net.clone();
            minus.params.add_at(idx, -h);
            let fd = (plus.row_ce_loss(&img, &labels).unwrap()
                - minus.row_ce_loss(&img, &labels).unwrap())
                / (2.0 * h);
            let an = analytic.get(idx);
            let denom = fd.abs().max(an.abs());
            let rel = if denom > 1e-6 { (fd - an).abs() / denom } else { (fd - an).abs() };
            worst = worst.max(rel);
        }
    }
    let elapsed = start.elapsed();
    check(
        3,
        worst < 1e-4 && elapsed < Duration::from_secs(30),
        &format!(
            "max relative error {worst:.3e} over {n_params} params x 20 samples; {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_sequential_inference_is_exact() {
    let start = Instant::now();
    let setup = ViewpointSetup::build(SetupCase::UprightRing, 30.0, 30.0).unwrap();
    let cands = enumerate_candidates(&setup);
    let m = setup.view_count();
    let n = 3;
    let mut exact = 0usize;
    for seed in 0..200u64 {
        let stacks = random_stack(90_000 + seed, m, n);
        // seed-derived observation order
        let mut order: Vec<usize> = (0..m).collect();
        let mut s = seed;
        for i in (1..m).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let mut state = SequentialState::new(n, &cands).unwrap();
        let mut all_equal = true;
        for prefix in 1..=m {
            let o = order[prefix - 1];
            state.update(&stacks[o], o, &cands).unwrap();
            let incremental = state.prediction(&cands).unwrap();
            let subset: Vec<_> = order[..prefix].iter().map(|&i| stacks[i].clone()).collect();
            let batch = predict(&subset, &cands, &order[..prefix]).unwrap();
            // bitwise equality, scores included
            all_equal &= incremental == batch
                && incremental.log_score.to_bits() == batch.log_score.to_bits();
        }
        exact += usize::from(all_equal);
    }
    let elapsed = start.elapsed();
    check(
        4,
        exact == 200 && elapsed < Duration::from_secs(5),
        &format!(
            "{exact}/200 stacks bit-exact on every prefix; {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
}

// ------------------------------------------------- shared runs for 5, 7 and 8

struct DefaultRun {
    history: TrainHistory,
    metrics: Metrics,
    train_seconds: f64,
    dataset: Dataset,
    net: Network,
}

fn main_net_config(ds: &Dataset, seed: u64) -> NetworkConfig {
    NetworkConfig {
        image_h: ds.config.render.height,
        image_w: ds.config.render.width,
        conv_channels: 0,
        hidden: 64,
        rows: ds.setup.view_count(),
        cols: ds.config.classes + 1,
        seed,
    }
}

fn benchmark_train_config() -> TrainConfig {
    TrainConfig {
        epochs: 30,
        ..Default::default()
    }
}

fn default_run() -> &'static DefaultRun {
    static RUN: OnceLock<DefaultRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dataset = generate_dataset(&DatasetConfig::default()).unwrap();
        let candidates = enumerate_candidates(&dataset.setup);
        let mut net = Network::new(main_net_config(&dataset, 42));
        let start = Instant::now();
        let history = train(
            &dataset.train,
            &dataset.setup,
            &candidates,
            &mut net,
            &benchmark_train_config(),
        )
        .unwrap();
        let train_seconds = start.elapsed().as_secs_f64();
        let table = build_pose_table(&net, &dataset.train, &candidates, &dataset.setup).unwrap();
        let views: Vec<usize> = (1..=dataset.setup.view_count()).collect();
        let metrics = evaluate(&dataset.test, &net, &candidates, &table, &views, 120, 99).unwrap();
        DefaultRun {
            history,
            metrics,
            train_seconds,
            dataset,
            net,
        }
    })
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_synthetic_benchmark_thresholds() {
    let run = default_run();
    let last = run.metrics.rows.last().unwrap();
    assert_eq!(last.views, 12);
    let ok = last.class_accuracy >= 0.95
        && last.view_accuracy >= 0.80
        && run.train_seconds < 600.0;
    check(
        5,
        ok,
        &format!(
            "all-views class accuracy {:.2}% (>= 95%), viewpoint accuracy {:.2}% (>= 80%), \
             training took {:.1} s (< 600 s)",
            last.class_accuracy * 100.0,
            last.view_accuracy * 100.0,
            run.train_seconds
        ),
    );
}

// ---------------------------------------------------------------- criterion 6

struct ConfusableRun {
    main_acc: f64,
    latepool_acc: f64,
    fg_checkpoints: Vec<FineGrainedCheckpoint>,
}

fn confusable_run() -> &'static ConfusableRun {
    static RUN: OnceLock<ConfusableRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = DatasetConfig {
            variant: DatasetVariant::Confusable,
            jitter: 2.0,
            ..Default::default()
        };
        viewalign::data::confusable_certificate(&cfg).unwrap();
        let ds = generate_dataset(&cfg).unwrap();
        let candidates = enumerate_candidates(&ds.setup);
        let m = ds.setup.view_count();
        let n = cfg.classes;
        let tcfg = benchmark_train_config();

        let mut main_net = Network::new(main_net_config(&ds, 42));
        train(&ds.train, &ds.setup, &candidates, &mut main_net, &tcfg).unwrap();
        let table = build_pose_table(&main_net, &ds.train, &candidates, &ds.setup).unwrap();
        let main_metrics =
            evaluate(&ds.test, &main_net, &candidates, &table, &[m], 120, 99).unwrap();

        let mut lp_net = Network::new(NetworkConfig {
            rows: 1,
            cols: n,
            ..main_net_config(&ds, 42)
        });
        train_late_pool(&ds.train, n, &mut lp_net, &tcfg).unwrap();
        let lp_rows = late_pool_evaluate(&lp_net, &ds.test, &[m], 120, 99).unwrap();

        let mut fg_net = Network::new(NetworkConfig {
            rows: 1,
            cols: n * m,
            ..main_net_config(&ds, 42)
        });
        let fg_cfg = TrainConfig {
            epochs: 60,
            ..benchmark_train_config()
        };
        let fg_checkpoints = train_fine_grained_with_checkpoints(
            &ds.train,
            &ds.test,
            n,
            m,
            &mut fg_net,
            &fg_cfg,
            5,
            ViewMarginalization::Max,
        )
        .unwrap();

        ConfusableRun {
            main_acc: main_metrics.rows[0].class_accuracy,
            latepool_acc: lp_rows[0].class_accuracy,
            fg_checkpoints,
        }
    })
}

#[test]
fn criterion_6_mechanism_advantage_on_confusable_classes() {
    let run = confusable_run();
    let gap = run.main_acc - run.latepool_acc;
    let first = run.fg_checkpoints.first().unwrap();
    let last = run.fg_checkpoints.last().unwrap();
    let peak_class = run
        .fg_checkpoints
        .iter()
        .map(|c| c.class_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    let tradeoff = last.view_accuracy > first.view_accuracy && last.class_accuracy < peak_class;
    check(
        6,
        gap >= 0.05 - 1e-9 && tradeoff,
        &format!(
            "latent-viewpoint {:.2}% vs late pooling {:.2}% (gap {:.1} points, >= 5); \
             fine-grained view accuracy {:.2}% -> {:.2}% while class accuracy ends {:.2}% \
             below its {:.2}% peak",
            run.main_acc * 100.0,
            run.latepool_acc * 100.0,
            gap * 100.0,
            first.view_accuracy * 100.0,
            last.view_accuracy * 100.0,
            last.class_accuracy * 100.0,
            peak_class * 100.0
        ),
    );
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_accuracy_monotone_in_views() {
    let run = default_run();
    let accs: Vec<f64> = run.metrics.rows.iter().map(|r| r.class_accuracy).collect();
    let ok = accs.windows(2).all(|w| w[1] >= w[0] - 0.01);
    check(
        7,
        ok,
        &format!(
            "mean accuracy over 120 random view subsets non-decreasing within 1 point: {:?}",
            accs.iter().map(|a| (a * 1000.0).round() / 10.0).collect::<Vec<_>>()
        ),
    );
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_alignment_variance_decreases() {
    let run = default_run();
    let v0 = run
        .history
        .row_at_iteration(0)
        .and_then(|r| r.mean_alignment_variance)
        .unwrap();
    let v400 = run
        .history
        .row_at_iteration(400)
        .and_then(|r| r.mean_alignment_variance)
        .unwrap();

    // export the per-class reordered average stacks before and after training
    let out_dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("alignment_exports");
    std::fs::create_dir_all(&out_dir).unwrap();
    let candidates = enumerate_candidates(&run.dataset.setup);
    let untrained = Network::new(run.net.config().clone());
    for (net, stage) in [(&untrained, "initial"), (&run.net, "trained")] {
        let stacks =
            viewalign::alignment::class_average_stacks(&run.dataset.train, net, &candidates)
                .unwrap();
        for (class, imgs) in stacks.iter().enumerate() {
            let Some(imgs) = imgs else { continue };
            // one mosaic per class: reordered average views side by side
            let (h, w) = imgs[0].dim();
            let mut mosaic = ndarray::Array2::zeros((h, w * imgs.len()));
            for (v, img) in imgs.iter().enumerate() {
                mosaic
                    .slice_mut(ndarray::s![.., v * w..(v + 1) * w])
                    .assign(img);
            }
            write_pgm(
                &mosaic.view(),
                &out_dir.join(format!("class{class}_{stage}.pgm")),
            )
            .unwrap();
        }
    }

    check(
        8,
        v400 < v0,
        &format!(
            "mean alignment variance {v0:.5} at iteration 0 -> {v400:.5} at iteration 400; \
             per-class average stacks exported to {}",
            out_dir.display()
        ),
    );
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_9_docs_cite_out_of_scope_benchmarks() {
    let readme_path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../README.md");
    let readme = std::fs::read_to_string(&readme_path).unwrap_or_default();
    let has_numbers =
        readme.contains("97.37") && readme.contains("98.46") && readme.contains("18.9");
    let states_scope = readme.to_lowercase().contains("not reproduc");
    check(
        9,
        has_numbers && states_scope,
        "README cites the full-scale benchmark figures and marks them non-reproducible here",
    );
}
