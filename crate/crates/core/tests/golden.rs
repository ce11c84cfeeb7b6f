//! Byte-level fixtures produced by the Python scripts in `scripts/`.

use std::path::PathBuf;

use gacl_core::buffer::BufferLayer;
use gacl_core::io::{decode_checkpoint, decode_embeddings, encode_checkpoint, encode_embeddings, Dtype};
use gacl_core::DenseMatrix;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn buffer_weights_match_reference_generator() {
    let text = std::fs::read_to_string(fixture("buffer_seed42_4x4.txt")).unwrap();
    let layer = BufferLayer::new(42, 4, 4).unwrap();
    let weights = layer.weight().as_slice();
    let mut checked = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut parts = line.split_whitespace();
        let idx: usize = parts.next().unwrap().parse().unwrap();
        let bits = u64::from_str_radix(parts.next().unwrap(), 16).unwrap();
        assert_eq!(
            weights[idx].to_bits(),
            bits,
            "entry {idx}: got {} expected {}",
            weights[idx],
            f64::from_bits(bits)
        );
        checked += 1;
    }
    assert_eq!(checked, 16);
}

fn expected_features() -> DenseMatrix {
    DenseMatrix::from_rows(&[[1.5, -2.25], [0.0, 1e-3], [3.0, 4.0]]).unwrap()
}

#[test]
fn f64_embedding_fixture() {
    let bytes = std::fs::read(fixture("small_f64.gemb")).unwrap();
    let (x, labels) = decode_embeddings(&bytes).unwrap();
    assert_eq!(x, expected_features());
    assert_eq!(labels, vec![7, 9, 7]);
    assert_eq!(encode_embeddings(&x, &labels, Dtype::F64).unwrap(), bytes);
}

#[test]
fn f32_embedding_fixture() {
    let bytes = std::fs::read(fixture("small_f32.gemb")).unwrap();
    let (x, labels) = decode_embeddings(&bytes).unwrap();
    let widened = expected_features().map(|v| v as f32 as f64);
    assert_eq!(x, widened);
    assert_eq!(labels, vec![7, 9, 7]);
    assert_eq!(encode_embeddings(&x, &labels, Dtype::F32).unwrap(), bytes);
}

#[test]
fn checkpoint_fixture() {
    let bytes = std::fs::read(fixture("tiny.gacl")).unwrap();
    let state = decode_checkpoint(&bytes).unwrap();
    assert_eq!(state.gamma(), 10.0);
    assert_eq!(state.width(), 2);
    assert_eq!(state.tasks_seen(), 3);
    assert_eq!(state.registry().ids(), &[4, 1]);
    assert_eq!(state.memory().as_slice(), &[0.08, -0.01, -0.01, 0.05]);
    assert_eq!(state.weights().as_slice(), &[0.25, -0.5, 1.0, 0.125]);
    assert_eq!(encode_checkpoint(&state), bytes);
}
