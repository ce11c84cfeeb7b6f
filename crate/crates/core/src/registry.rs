//! Class-id to column bookkeeping and the exposed/unexposed label split.

use std::collections::HashMap;

use crate::linalg::DenseMatrix;

pub type ClassId = u32;

/// Append-only map from external class ids to classifier columns.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClassRegistry {
    ids: Vec<ClassId>,
    index: HashMap<ClassId, usize>,
}

/// One-hot targets of a task, split by whether the class was known before it.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitLabels {
    /// N × (classes known before the task).
    pub exposed: DenseMatrix,
    /// N × (classes first seen in the task), in first-appearance order.
    pub unexposed: DenseMatrix,
}

impl SplitLabels {
    /// `[exposed | unexposed]`.
    pub fn combined(&self) -> DenseMatrix {
        self.exposed
            .hstack(&self.unexposed)
            .expect("split blocks share a row count")
    }
}

impl ClassRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a registry from ids in column order. Returns `None` on duplicates.
    pub fn from_ids(ids: Vec<ClassId>) -> Option<Self> {
        let mut index = HashMap::with_capacity(ids.len());
        for (col, &id) in ids.iter().enumerate() {
            if index.insert(id, col).is_some() {
                return None;
            }
        }
        Some(ClassRegistry { ids, index })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[ClassId] {
        &self.ids
    }

    pub fn column_of(&self, id: ClassId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn id_at(&self, column: usize) -> ClassId {
        self.ids[column]
    }

    pub fn contains(&self, id: ClassId) -> bool {
        self.index.contains_key(&id)
    }

    fn register(&mut self, id: ClassId) -> usize {
        *self.index.entry(id).or_insert_with(|| {
            self.ids.push(id);
            self.ids.len() - 1
        })
    }

    /// Registers unseen ids from `labels` and returns the task's split targets.
    ///
    /// Columns `0..len_before` of the combined targets are the exposed block;
    /// the rest belong to classes this call appended.
    pub fn split_and_register(&mut self, labels: &[ClassId]) -> SplitLabels {
        let known = self.len();
        let columns: Vec<usize> = labels.iter().map(|&id| self.register(id)).collect();
        let fresh = self.len() - known;

        let mut exposed = DenseMatrix::zeros(labels.len(), known);
        let mut unexposed = DenseMatrix::zeros(labels.len(), fresh);
        for (row, &col) in columns.iter().enumerate() {
            if col < known {
                exposed[(row, col)] = 1.0;
            } else {
                unexposed[(row, col - known)] = 1.0;
            }
        }
        SplitLabels { exposed, unexposed }
    }

    /// Plain one-hot encoding against the current column order.
    /// Returns `None` if some label is not registered.
    pub fn one_hot(&self, labels: &[ClassId]) -> Option<DenseMatrix> {
        let mut y = DenseMatrix::zeros(labels.len(), self.len());
        for (row, id) in labels.iter().enumerate() {
            y[(row, self.column_of(*id)?)] = 1.0;
        }
        Some(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]], cols: usize) -> DenseMatrix {
        if rows.is_empty() || cols == 0 {
            return DenseMatrix::zeros(rows.len(), cols);
        }
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn first_task_is_all_unexposed() {
        let mut reg = ClassRegistry::new();
        let split = reg.split_and_register(&[7, 7, 9]);
        assert_eq!(reg.ids(), &[7, 9]);
        assert_eq!(split.exposed.shape(), (3, 0));
        assert_eq!(split.unexposed, m(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]], 2));
    }

    #[test]
    fn mixed_task_splits_by_history() {
        let mut reg = ClassRegistry::from_ids(vec![7, 9]).unwrap();
        let split = reg.split_and_register(&[9, 4]);
        assert_eq!(split.exposed, m(&[&[0.0, 1.0], &[0.0, 0.0]], 2));
        assert_eq!(split.unexposed, m(&[&[0.0], &[1.0]], 1));
        assert_eq!(reg.ids(), &[7, 9, 4]);
    }

    #[test]
    fn no_new_classes_leaves_unexposed_empty() {
        let mut reg = ClassRegistry::from_ids(vec![7, 9]).unwrap();
        let split = reg.split_and_register(&[9, 7]);
        assert_eq!(split.exposed, m(&[&[0.0, 1.0], &[1.0, 0.0]], 2));
        assert_eq!(split.unexposed.shape(), (2, 0));
        assert_eq!(reg.ids(), &[7, 9]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(ClassRegistry::from_ids(vec![1, 2, 1]).is_none());
    }

    proptest! {
        #[test]
        fn split_concatenates_to_one_hot(
            prior in proptest::collection::vec(0u32..20, 0..15),
            labels in proptest::collection::vec(0u32..20, 1..40),
        ) {
            let mut reg = ClassRegistry::new();
            reg.split_and_register(&prior);
            let before = reg.len();
            let split = reg.split_and_register(&labels);
            prop_assert_eq!(split.exposed.cols(), before);
            prop_assert_eq!(split.combined(), reg.one_hot(&labels).unwrap());
            for i in 0..labels.len() {
                let s: f64 = split.exposed.row(i).iter().chain(split.unexposed.row(i)).sum();
                prop_assert_eq!(s, 1.0);
            }
        }

        #[test]
        fn registry_is_partition_invariant_as_a_set(
            labels in proptest::collection::vec(0u32..30, 1..60),
            cut in 0usize..60,
        ) {
            let cut = cut.min(labels.len());
            let mut split_reg = ClassRegistry::new();
            split_reg.split_and_register(&labels[..cut]);
            split_reg.split_and_register(&labels[cut..]);
            let mut joint = ClassRegistry::new();
            joint.split_and_register(&labels);
            let mut a = split_reg.ids().to_vec();
            let mut b = joint.ids().to_vec();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn columns_are_stable(
            first in proptest::collection::vec(0u32..10, 1..20),
            second in proptest::collection::vec(0u32..10, 1..20),
        ) {
            let mut reg = ClassRegistry::new();
            reg.split_and_register(&first);
            let before: Vec<_> = reg.ids().to_vec();
            reg.split_and_register(&second);
            prop_assert_eq!(&reg.ids()[..before.len()], &before[..]);
        }
    }
}
