#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use gacl_core::experiment::RunConfig;
use gacl_core::scenario::{TaskBatch, TaskStream};
use gacl_core::{ClassId, LearnerState};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub fn rng(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Problems with a generated stream relative to the training set it was cut from.
pub fn partition_violations(stream: &TaskStream, train: &TaskBatch) -> Vec<String> {
    let mut errs = Vec::new();
    let mut hits = vec![0usize; train.len()];
    for (k, (task, rows)) in stream.tasks.iter().zip(&stream.source_rows).enumerate() {
        if task.is_empty() {
            errs.push(format!("task {k} is empty"));
        }
        if rows.len() != task.len() {
            errs.push(format!(
                "task {k}: {} source rows for {} samples",
                rows.len(),
                task.len()
            ));
            continue;
        }
        for (i, &src) in rows.iter().enumerate() {
            hits[src] += 1;
            if task.labels[i] != train.labels[src] || task.features.row(i) != train.features.row(src) {
                errs.push(format!("task {k} row {i} differs from source row {src}"));
            }
        }
    }
    if let Some(src) = hits.iter().position(|&h| h != 1) {
        errs.push(format!("source row {src} used {} times", hits[src]));
    }
    let train_rows: BTreeSet<Vec<u64>> = (0..train.len())
        .map(|i| train.features.row(i).iter().map(|v| v.to_bits()).collect())
        .collect();
    if (0..stream.test.len()).any(|i| {
        let key: Vec<u64> = stream.test.features.row(i).iter().map(|v| v.to_bits()).collect();
        train_rows.contains(&key)
    }) {
        errs.push("a test row also occurs in training".into());
    }
    errs
}

/// Tasks in which each class occurs.
pub fn class_tasks(stream: &TaskStream) -> BTreeMap<ClassId, BTreeSet<usize>> {
    let mut m: BTreeMap<ClassId, BTreeSet<usize>> = BTreeMap::new();
    for (k, t) in stream.tasks.iter().enumerate() {
        for &c in &t.labels {
            m.entry(c).or_default().insert(k);
        }
    }
    m
}

pub fn disjoint_reappears(stream: &TaskStream) -> Option<ClassId> {
    let tasks = class_tasks(stream);
    stream
        .manifest
        .disjoint_classes
        .iter()
        .copied()
        .find(|c| tasks.get(c).map_or(0, BTreeSet::len) != 1)
}

/// The number of classes differs between tasks.
pub fn class_count_varies(stream: &TaskStream) -> bool {
    let counts: BTreeSet<usize> = stream.tasks.iter().map(|t| t.class_counts().len()).collect();
    counts.len() > 1
}

/// Some class occurs in two or more tasks.
pub fn classes_overlap(stream: &TaskStream) -> bool {
    class_tasks(stream).values().any(|t| t.len() > 1)
}

/// Some task holds different numbers of samples for different classes.
pub fn within_task_imbalance(stream: &TaskStream) -> bool {
    stream.tasks.iter().any(|t| {
        let sizes: BTreeSet<usize> = t.class_counts().values().copied().collect();
        sizes.len() > 1
    })
}

/// Random configuration inside the ranges used by the invariance check:
/// width in {16, 32, 64}, at most 2000 training samples and 12 classes.
pub fn random_invariance_config(seed: u64) -> RunConfig {
    let mut r = rng(seed ^ 0x1a2b_3c4d);
    let k = [3usize, 5, 8][r.random_range(0..3)];
    let classes = r.random_range(k.max(2)..=12);
    // 90 % of each class trains, rounded half up.
    let max_per_class = ((2000.0 / classes as f64 - 1.0) / 0.9).floor() as usize;
    let per_class = r.random_range(20..=max_per_class.min(220));
    RunConfig {
        gamma: [10.0, 100.0, 1000.0][r.random_range(0..3)],
        buffer_width: [16, 32, 64][r.random_range(0..3)],
        num_tasks: k,
        disjoint_ratio: [0.0, 0.5, 1.0][r.random_range(0..3)],
        blurry_ratio: [0.1, 0.5][r.random_range(0..2)],
        seed,
        eval_interval: 100,
        eclg: true,
        classes,
        per_class,
        input_dim: r.random_range(4..=24),
        separation: r.random_range(0.0..8.0),
    }
}

/// Recursive pass over a buffered stream.
pub fn train(stream: &TaskStream, gamma: f64) -> LearnerState {
    let mut s = LearnerState::new(gamma, stream.tasks[0].features.cols()).unwrap();
    for t in &stream.tasks {
        s.update_task(t).unwrap();
    }
    s
}
