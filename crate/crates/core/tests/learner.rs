mod common;

use common::*;
use gacl_core::experiment::{align_columns, compare_with_joint, run_stream, RunConfig};
use gacl_core::io::{checkpoint_size, encode_checkpoint, load_checkpoint, save_checkpoint};
use gacl_core::linalg::spd_inverse;
use gacl_core::oracle::{joint_solve, AccumulatedDataset};
use gacl_core::rng::BoxMuller;
use gacl_core::scenario::TaskBatch;
use gacl_core::{DenseMatrix, LearnerState};
use proptest::prelude::*;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut g = BoxMuller::new(rng(seed));
    DenseMatrix::from_fn(rows, cols, |_, _| g.next())
}

fn batch(rows: usize, width: usize, labels: Vec<u32>, seed: u64) -> TaskBatch {
    assert_eq!(labels.len(), rows);
    TaskBatch::buffered(gaussian(rows, width, seed), labels)
}

#[test]
fn two_tasks_with_a_returning_class_match_the_batch_solve() {
    let t1 = batch(7, 6, vec![0, 1, 0, 1, 1, 0, 0], 1);
    let t2 = batch(6, 6, vec![2, 1, 2, 1, 2, 2], 2);
    let mut s = LearnerState::new(10.0, 6).unwrap();
    s.update_task(&t1).unwrap();
    let dec = s.update_task(&t2).unwrap();
    assert!(dec.eclg_max_abs() > 0.0);
    let data = AccumulatedDataset::from_tasks(6, [&t1, &t2]).unwrap();
    let joint = align_columns(&s, &data, &joint_solve(&data, 10.0).unwrap()).unwrap();
    let diff = s.weights().max_abs_diff(&joint).unwrap();
    assert!(diff <= 1e-10, "diff {diff}");
}

#[test]
fn memory_is_the_regularized_inverse_of_all_data() {
    let tasks = [
        batch(9, 5, vec![0; 9], 3),
        batch(4, 5, vec![1; 4], 4),
        batch(12, 5, vec![0; 12], 5),
    ];
    let mut s = LearnerState::new(100.0, 5).unwrap();
    for t in &tasks {
        s.update_task(t).unwrap();
    }
    let mut all = DenseMatrix::zeros(0, 5);
    for t in &tasks {
        all = all.vstack(&t.features).unwrap();
    }
    let mut gram = all.t_matmul(&all).unwrap();
    gram.add_diagonal(100.0);
    let direct = spd_inverse(&gram).unwrap();
    assert!(s.memory().max_abs_diff(&direct).unwrap() <= 1e-12);
    assert_eq!(s.memory().max_asymmetry(), 0.0);
}

#[test]
fn task_order_does_not_change_the_classifier() {
    let stream = RunConfig {
        buffer_width: 32,
        classes: 6,
        per_class: 60,
        input_dim: 8,
        num_tasks: 4,
        disjoint_ratio: 0.0,
        blurry_ratio: 0.5,
        ..RunConfig::default()
    }
    .buffered_stream()
    .unwrap();
    let forward = train(&stream, 100.0);
    let mut reversed = stream.clone();
    reversed.tasks.reverse();
    let backward = train(&reversed, 100.0);
    for (col, id) in forward.registry().ids().iter().enumerate() {
        let other = backward.registry().column_of(*id).unwrap();
        for i in 0..32 {
            let d = (forward.weights()[(i, col)] - backward.weights()[(i, other)]).abs();
            assert!(d <= 1e-9, "class {id} row {i}: {d}");
        }
    }
}

#[test]
fn separable_gaussians_are_learned() {
    // Means at ±1.5 in each of 4 coordinates: six standard deviations apart.
    let mut g = BoxMuller::new(rng(11));
    let mut labels = Vec::new();
    let x = DenseMatrix::from_fn(400, 4, |i, _| g.next() + if i % 2 == 0 { 1.5 } else { -1.5 });
    for i in 0..400 {
        labels.push((i % 2) as u32);
    }
    let layer = gacl_core::buffer::BufferLayer::new(5, 4, 64).unwrap();
    let t = TaskBatch::backbone(x, labels).embed(&layer).unwrap();
    let mut s = LearnerState::new(1.0, 64).unwrap();
    s.update_task(&t.slice(0, 200)).unwrap();
    s.update_task(&t.slice(200, 400)).unwrap();
    let pred = s.predict(&t.features).unwrap();
    let acc = gacl_core::metrics::task_accuracy(&pred.labels, &t.labels).unwrap();
    assert!(acc >= 0.95, "training accuracy {acc}");
}

#[test]
fn disjoint_streams_never_produce_exposed_gain() {
    for seed in 0..5 {
        let stream = RunConfig {
            disjoint_ratio: 1.0,
            seed,
            ..RunConfig::default()
        }
        .buffered_stream()
        .unwrap();
        let mut s = LearnerState::new(100.0, 64).unwrap();
        for t in &stream.tasks {
            assert_eq!(s.update_task(t).unwrap().eclg_max_abs(), 0.0);
        }
    }
}

#[test]
fn resuming_from_any_boundary_is_bit_identical() {
    let stream = RunConfig::default().buffered_stream().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let full = run_stream(&stream, 100.0, 100, true, None, |k, s| {
        save_checkpoint(dir.path().join(format!("{k}.gacl")), s)
    })
    .unwrap();
    for k in 0..stream.tasks.len() - 1 {
        let start = load_checkpoint(dir.path().join(format!("{k}.gacl"))).unwrap();
        let resumed = run_stream(&stream, 100.0, 100, true, Some(start), |_, _| Ok(())).unwrap();
        assert_eq!(resumed.state, full.state, "resume after task {}", k + 1);
    }
}

#[test]
fn checkpoint_size_ignores_sample_count() {
    let small = train(
        &RunConfig {
            per_class: 40,
            ..RunConfig::default()
        }
        .buffered_stream()
        .unwrap(),
        100.0,
    );
    let large = train(
        &RunConfig {
            per_class: 300,
            ..RunConfig::default()
        }
        .buffered_stream()
        .unwrap(),
        100.0,
    );
    assert_eq!(encode_checkpoint(&small).len(), encode_checkpoint(&large).len());
    assert_eq!(encode_checkpoint(&small).len(), checkpoint_size(64, 10));
}

#[test]
fn verification_report_agrees_with_the_learner() {
    let stream = RunConfig::default().buffered_stream().unwrap();
    let s = train(&stream, 100.0);
    let rep = compare_with_joint(&s, &stream.tasks, &stream.test).unwrap();
    assert!(rep.passes(1e-8));
    assert_eq!(rep.per_class.len(), 10);
    assert_eq!(rep.recursive_accuracy, rep.joint_accuracy);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn recursive_equals_joint_on_random_streams(
        seed in any::<u64>(),
        sizes in prop::collection::vec(1usize..30, 1..6),
        width in 2usize..20,
        classes in 1u32..6,
        gamma in prop::sample::select(vec![0.5, 10.0, 100.0, 1000.0]),
    ) {
        let mut r = rng(seed);
        let tasks: Vec<TaskBatch> = sizes
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                use rand::Rng;
                let labels = (0..n).map(|_| r.random_range(0..classes)).collect();
                batch(n, width, labels, seed.wrapping_add(k as u64))
            })
            .collect();
        let mut s = LearnerState::new(gamma, width).unwrap();
        for t in &tasks {
            let before = s.weights().cols();
            let dec = s.update_task(t).unwrap();
            // The exposed gain never touches columns of classes new in this task.
            for i in 0..width {
                for j in before..dec.w_eclg.cols() {
                    prop_assert_eq!(dec.w_eclg[(i, j)], 0.0);
                }
            }
        }
        let rep = compare_with_joint(&s, &tasks, &tasks[0]).unwrap();
        prop_assert!(rep.max_abs_diff <= 1e-8, "diff {}", rep.max_abs_diff);
        prop_assert_eq!(s.memory().max_asymmetry(), 0.0);
    }
}
