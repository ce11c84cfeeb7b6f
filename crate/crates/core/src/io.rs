//! Binary embedding files and learner checkpoints.
//!
//! Both formats are little-endian with fixed-width fields; byte layouts are
//! listed in `docs/formats.md`.
//!
//! Embedding file:
//! ```text
//! "GEMB" u32 version=1 u64 rows u64 cols u8 dtype (0=f32, 1=f64)
//! rows*cols values, row-major
//! "GLBL" u64 rows rows*u32 class ids
//! ```
//!
//! Checkpoint:
//! ```text
//! "GACL" u32 version=1 f64 gamma u64 width u64 tasks u64 classes
//! classes*u32 ids | width*width f64 memory | width*classes f64 weights
//! u32 CRC-32 (IEEE) of every preceding byte
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::learner::LearnerState;
use crate::linalg::DenseMatrix;
use crate::registry::{ClassId, ClassRegistry};
use crate::scenario::{ScenarioManifest, TaskBatch, TaskStream};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"GEMB";
pub const LABEL_MAGIC: [u8; 4] = *b"GLBL";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GACL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let found: [u8; 4] = self.take(4)?.try_into().unwrap();
        if found != expected {
            return Err(FormatError::BadMagic { expected, found });
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Reads a count and checks that `count * elem_size` more bytes could exist.
    fn count(&mut self, elem_size: usize) -> Result<usize, FormatError> {
        let n = self.u64()?;
        let available = self.buf.len() - self.pos;
        match usize::try_from(n).ok().and_then(|n| n.checked_mul(elem_size)) {
            Some(bytes) if bytes <= available => Ok(n as usize),
            _ => Err(FormatError::Truncated {
                offset: self.pos,
                needed: usize::try_from(n).unwrap_or(usize::MAX).saturating_mul(elem_size),
                available,
            }),
        }
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or(FormatError::DimMismatch("size overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>, FormatError> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or(FormatError::DimMismatch("size overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<(), FormatError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}

/// Writes to a sibling temp file and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn encode_embeddings(features: &DenseMatrix, labels: &[ClassId], dtype: Dtype) -> Result<Vec<u8>> {
    if labels.len() != features.rows() {
        return Err(Error::shape(
            "encode_embeddings",
            format!("{} labels", features.rows()),
            labels.len(),
        ));
    }
    let mut out = Vec::with_capacity(33 + features.as_slice().len() * dtype.size() + 12 + labels.len() * 4);
    out.extend_from_slice(&EMBEDDING_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(features.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(features.cols() as u64).to_le_bytes());
    out.push(dtype as u8);
    for &v in features.as_slice() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out.extend_from_slice(&LABEL_MAGIC);
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    for &l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    Ok(out)
}

/// Decodes an embedding file. `f32` payloads are widened to `f64`.
pub fn decode_embeddings(bytes: &[u8]) -> Result<(DenseMatrix, Vec<ClassId>), FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(EMBEDDING_MAGIC)?;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let rows = r.u64()?;
    let cols = r.u64()?;
    let dtype = match r.u8()? {
        0 => Dtype::F32,
        1 => Dtype::F64,
        other => return Err(FormatError::UnknownDtype(other)),
    };
    let n = usize::try_from(rows)
        .ok()
        .zip(usize::try_from(cols).ok())
        .and_then(|(a, b)| a.checked_mul(b))
        .ok_or_else(|| FormatError::DimMismatch(format!("{rows}x{cols} overflows")))?;
    let payload = r.take(
        n.checked_mul(dtype.size())
            .ok_or_else(|| FormatError::DimMismatch("payload size overflows".into()))?,
    )?;
    let data: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    r.magic(LABEL_MAGIC)?;
    let label_rows = r.count(4)?;
    if label_rows as u64 != rows {
        return Err(FormatError::DimMismatch(format!("{label_rows} labels for {rows} rows")));
    }
    let labels = r.u32s(label_rows)?;
    r.finish()?;
    let features = DenseMatrix::from_vec(rows as usize, cols as usize, data)
        .map_err(|e| FormatError::DimMismatch(e.to_string()))?;
    Ok((features, labels))
}

pub fn write_embeddings(
    path: impl AsRef<Path>,
    features: &DenseMatrix,
    labels: &[ClassId],
    dtype: Dtype,
) -> Result<()> {
    write_atomic(path.as_ref(), &encode_embeddings(features, labels, dtype)?)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<(DenseMatrix, Vec<ClassId>)> {
    let bytes = fs::read(path)?;
    Ok(decode_embeddings(&bytes)?)
}

pub fn encode_checkpoint(state: &LearnerState) -> Vec<u8> {
    let width = state.width();
    let classes = state.registry().len();
    let mut out = Vec::with_capacity(checkpoint_size(width, classes));
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&state.gamma().to_le_bytes());
    out.extend_from_slice(&(width as u64).to_le_bytes());
    out.extend_from_slice(&state.tasks_seen().to_le_bytes());
    out.extend_from_slice(&(classes as u64).to_le_bytes());
    for &id in state.registry().ids() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    for m in [state.memory(), state.weights()] {
        for &v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Exact encoded size of a checkpoint. Depends only on the buffer width and
/// the number of registered classes.
pub fn checkpoint_size(width: usize, classes: usize) -> usize {
    4 + 4 + 8 + 8 + 8 + 8 + 4 * classes + 8 * width * width + 8 * width * classes + 4
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<LearnerState> {
    let mut r = Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    if bytes.len() < 4 {
        return Err(FormatError::Truncated {
            offset: 0,
            needed: 4,
            available: bytes.len(),
        }
        .into());
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(FormatError::Corrupted { stored, computed }.into());
    }

    let mut r = Reader { buf: body, pos: r.pos };
    let gamma = r.f64()?;
    let width = r.count(8)?;
    let tasks = r.u64()?;
    let classes = r.count(4)?;
    let expected = checkpoint_size(width, classes) - 4;
    if body.len() != expected {
        return Err(FormatError::DimMismatch(format!(
            "checkpoint body is {} bytes, header implies {expected}",
            body.len()
        ))
        .into());
    }
    let ids = r.u32s(classes)?;
    let memory = r.f64s(width * width)?;
    let weights = r.f64s(width * classes)?;
    r.finish()?;

    let registry = ClassRegistry::from_ids(ids).ok_or_else(|| FormatError::DimMismatch("duplicate class id".into()))?;
    LearnerState::from_parts(
        DenseMatrix::from_vec(width, width, memory)?,
        DenseMatrix::from_vec(width, classes, weights)?,
        registry,
        gamma,
        tasks,
    )
}

pub fn save_checkpoint(path: impl AsRef<Path>, state: &LearnerState) -> Result<()> {
    write_atomic(path.as_ref(), &encode_checkpoint(state))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<LearnerState> {
    decode_checkpoint(&fs::read(path)?)
}

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const TEST_FILE: &str = "test.gemb";

pub fn task_file_name(task: usize) -> String {
    format!("task_{task}.gemb")
}

/// Writes a backbone-space stream as `manifest.txt`, `task_<k>.gemb` and `test.gemb`.
pub fn write_stream_dir(dir: impl AsRef<Path>, stream: &TaskStream, dtype: Dtype) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (k, t) in stream.tasks.iter().enumerate() {
        write_embeddings(dir.join(task_file_name(k)), &t.features, &t.labels, dtype)?;
    }
    write_embeddings(dir.join(TEST_FILE), &stream.test.features, &stream.test.labels, dtype)?;
    write_atomic(&dir.join(MANIFEST_FILE), stream.manifest.to_text().as_bytes())
}

/// Reads a directory written by [`write_stream_dir`]. Each task file must hold
/// exactly the class counts its manifest line records.
pub fn read_stream_dir(dir: impl AsRef<Path>) -> Result<TaskStream> {
    let dir = dir.as_ref();
    let manifest = ScenarioManifest::parse(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let mut tasks = Vec::with_capacity(manifest.tasks.len());
    for (k, entry) in manifest.tasks.iter().enumerate() {
        let (features, labels) = read_embeddings(dir.join(task_file_name(k)))?;
        let batch = TaskBatch::backbone(features, labels);
        if batch.class_counts() != entry.class_counts {
            return Err(FormatError::DimMismatch(format!("{} disagrees with the manifest", task_file_name(k))).into());
        }
        tasks.push(batch);
    }
    let (features, labels) = read_embeddings(dir.join(TEST_FILE))?;
    let test = TaskBatch::backbone(features, labels);
    if let Some(bad) = tasks
        .iter()
        .chain(std::iter::once(&test))
        .find(|t| t.features.cols() != test.features.cols())
    {
        return Err(FormatError::DimMismatch(format!(
            "feature width {} differs from test width {}",
            bad.features.cols(),
            test.features.cols()
        ))
        .into());
    }
    Ok(TaskStream {
        source_rows: vec![Vec::new(); tasks.len()],
        tasks,
        test,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_matrix() -> DenseMatrix {
        DenseMatrix::from_fn(10, 4, |i, j| (i as f64 - 4.5) * 0.37 + j as f64 * 1e-3 + 1.0 / 3.0)
    }

    fn trained_state() -> LearnerState {
        let mut s = LearnerState::new(10.0, 4).unwrap();
        let x = sample_matrix().map(f64::abs);
        s.update_task(&TaskBatch::buffered(x, (0..10).map(|i| i % 3).collect()))
            .unwrap();
        s
    }

    #[test]
    fn f64_embeddings_round_trip_bitwise() {
        let m = sample_matrix();
        let labels: Vec<ClassId> = (0..10).map(|i| i * 7).collect();
        let bytes = encode_embeddings(&m, &labels, Dtype::F64).unwrap();
        let (m2, l2) = decode_embeddings(&bytes).unwrap();
        assert_eq!(
            m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            m2.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(labels, l2);
    }

    #[test]
    fn f32_embeddings_widen_within_single_precision() {
        let m = sample_matrix();
        let labels = vec![1; 10];
        let (m2, _) = decode_embeddings(&encode_embeddings(&m, &labels, Dtype::F32).unwrap()).unwrap();
        for (a, b) in m.as_slice().iter().zip(m2.as_slice()) {
            assert_eq!(*b, (*a as f32) as f64);
            assert!((a - b).abs() <= f32::EPSILON as f64 * a.abs());
        }
    }

    #[test]
    fn embedding_parse_errors_are_distinct() {
        let m = sample_matrix();
        let labels = vec![0; 10];
        let good = encode_embeddings(&m, &labels, Dtype::F64).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            decode_embeddings(&bad_magic),
            Err(FormatError::BadMagic { .. })
        ));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert_eq!(decode_embeddings(&bad_version), Err(FormatError::UnsupportedVersion(9)));

        let mut bad_dtype = good.clone();
        bad_dtype[24] = 7;
        assert_eq!(decode_embeddings(&bad_dtype), Err(FormatError::UnknownDtype(7)));

        assert!(matches!(
            decode_embeddings(&good[..100]),
            Err(FormatError::Truncated { .. })
        ));
        assert!(matches!(
            decode_embeddings(&good[..3]),
            Err(FormatError::Truncated { .. })
        ));

        let mut bad_label_rows = good.clone();
        let at = 25 + 10 * 4 * 8 + 4;
        bad_label_rows[at] = 9;
        assert!(matches!(
            decode_embeddings(&bad_label_rows),
            Err(FormatError::DimMismatch(_))
        ));

        let mut trailing = good;
        trailing.push(0);
        assert_eq!(decode_embeddings(&trailing), Err(FormatError::TrailingBytes(1)));

        assert!(encode_embeddings(&m, &[1, 2], Dtype::F64).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let s = trained_state();
        let back = decode_checkpoint(&encode_checkpoint(&s)).unwrap();
        assert_eq!(back, s);
        assert_eq!(encode_checkpoint(&s).len(), checkpoint_size(4, 3));
    }

    #[test]
    fn fresh_checkpoint_keeps_inverse_gamma_memory() {
        let s = LearnerState::new(100.0, 5).unwrap();
        let back = decode_checkpoint(&encode_checkpoint(&s)).unwrap();
        assert_eq!(back.memory(), &DenseMatrix::from_diagonal_value(5, 0.01));
        assert_eq!(back.weights().shape(), (5, 0));
    }

    #[test]
    fn any_flipped_byte_is_detected() {
        let bytes = encode_checkpoint(&trained_state());
        for pos in (0..bytes.len()).step_by(7) {
            let mut tampered = bytes.clone();
            tampered[pos] ^= 0x10;
            assert!(decode_checkpoint(&tampered).is_err(), "byte {pos} flip undetected");
        }
        let mut tampered = bytes.clone();
        tampered[60] ^= 1;
        assert!(matches!(
            decode_checkpoint(&tampered),
            Err(Error::Format(FormatError::Corrupted { .. }))
        ));
    }

    #[test]
    fn checkpoint_version_mismatch() {
        let mut bytes = encode_checkpoint(&trained_state());
        bytes[4] = 2;
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(Error::Format(FormatError::UnsupportedVersion(2)))
        ));
    }

    #[test]
    fn truncated_checkpoint() {
        let bytes = encode_checkpoint(&trained_state());
        assert!(decode_checkpoint(&bytes[..2]).is_err());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 9]).is_err());
    }

    #[test]
    fn stream_dir_round_trip() {
        use crate::scenario::{generate_siblurry, generate_synthetic, ScenarioSpec, SyntheticSpec};
        let data = generate_synthetic(&SyntheticSpec {
            classes: 4,
            per_class: 20,
            dim: 3,
            separation: 4.0,
            seed: 5,
        })
        .unwrap();
        let spec = ScenarioSpec {
            num_tasks: 3,
            disjoint_ratio: 0.5,
            blurry_ratio: 0.3,
            seed: 5,
        };
        let stream = generate_siblurry(&spec, &data.train, data.test).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_stream_dir(dir.path(), &stream, Dtype::F64).unwrap();
        let back = read_stream_dir(dir.path()).unwrap();
        assert_eq!(back.tasks, stream.tasks);
        assert_eq!(back.test, stream.test);
        assert_eq!(back.manifest, stream.manifest);

        let other = stream.tasks[0].slice(0, 1);
        write_embeddings(
            dir.path().join(task_file_name(1)),
            &other.features,
            &other.labels,
            Dtype::F64,
        )
        .unwrap();
        assert!(matches!(
            read_stream_dir(dir.path()),
            Err(Error::Format(FormatError::DimMismatch(_)))
        ));
    }
}
