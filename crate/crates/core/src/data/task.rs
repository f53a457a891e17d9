use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Largest evaluation subset drawn for sample-unlearning termination checks.
pub const EVAL_SUBSET_CAP: usize = 500;

/// What to unlearn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskSpec {
    /// Every training sample of one class.
    Class { class_id: usize },
    /// `count` training samples drawn uniformly without replacement.
    Sample { count: usize, seed: u64 },
    /// An explicit list of training-row indices.
    Indices { indices: Vec<usize>, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskKind {
    Class { class_id: usize },
    Sample,
}

/// Data used by the termination checks.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalSets {
    /// All test samples of the unlearning class.
    Class { unlearn_test: Dataset },
    /// Subsample of the unlearning set and of the test set.
    Sample { unlearn: Dataset, test: Dataset },
}

/// A train/test pair partitioned into unlearning and remaining subsets.
#[derive(Debug, Clone)]
pub struct UnlearnTask {
    kind: TaskKind,
    train: Dataset,
    test: Dataset,
    unlearn_idx: Vec<usize>,
    remain_idx: Vec<usize>,
    unlearn_train: Dataset,
    remain_train: Dataset,
    unlearn_test: Option<Dataset>,
    remain_test: Option<Dataset>,
    eval: EvalSets,
}

fn sorted_sample(n: usize, amount: usize, seed: u64, tag: &str) -> Vec<usize> {
    let mut picked = index::sample(&mut rng::stream(seed, tag), n, amount).into_vec();
    picked.sort_unstable();
    picked
}

fn complement(n: usize, chosen: &[usize]) -> Vec<usize> {
    let mut mask = vec![false; n];
    chosen.iter().for_each(|&i| mask[i] = true);
    (0..n).filter(|&i| !mask[i]).collect()
}

/// Partitions `train` (and `test`, for class tasks) per `spec`.
pub fn make_task(train: Dataset, test: Dataset, spec: &TaskSpec) -> Result<UnlearnTask> {
    if train.dim() != test.dim() || train.num_classes() != test.num_classes() {
        return Err(Error::Validation(format!(
            "train ({} features, {} classes) and test ({} features, {} classes) disagree",
            train.dim(),
            train.num_classes(),
            test.dim(),
            test.num_classes()
        )));
    }
    let n = train.len();
    match spec {
        TaskSpec::Class { class_id } => {
            let c = *class_id;
            if c >= train.num_classes() {
                return Err(Error::Validation(format!(
                    "class {c} is out of range for {} classes",
                    train.num_classes()
                )));
            }
            let (unlearn_idx, remain_idx): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| train.labels()[i] == c);
            if unlearn_idx.is_empty() {
                return Err(Error::EmptySet(format!("class {c} has no training samples")));
            }
            if remain_idx.is_empty() {
                return Err(Error::EmptySet("no training samples remain outside the unlearning class".into()));
            }
            let (u_ts, r_ts): (Vec<usize>, Vec<usize>) = (0..test.len()).partition(|&i| test.labels()[i] == c);
            if u_ts.is_empty() {
                return Err(Error::EmptySet(format!("class {c} has no test samples")));
            }
            if r_ts.is_empty() {
                return Err(Error::EmptySet("test split contains only the unlearning class".into()));
            }
            let unlearn_test = test.subset(&u_ts)?;
            let task = UnlearnTask {
                kind: TaskKind::Class { class_id: c },
                unlearn_train: train.subset(&unlearn_idx)?,
                remain_train: train.subset(&remain_idx)?,
                remain_test: Some(test.subset(&r_ts)?),
                eval: EvalSets::Class {
                    unlearn_test: unlearn_test.clone(),
                },
                unlearn_test: Some(unlearn_test),
                unlearn_idx,
                remain_idx,
                train,
                test,
            };
            task.check_partition()?;
            Ok(task)
        }
        TaskSpec::Sample { count, seed } => {
            if *count == 0 {
                return Err(Error::EmptySet("sample task requests zero samples".into()));
            }
            if *count > n {
                return Err(Error::Validation(format!("requested {count} samples from {n} training rows")));
            }
            let chosen = sorted_sample(n, *count, *seed, "task-sample");
            sample_task(train, test, chosen, *seed)
        }
        TaskSpec::Indices { indices, seed } => {
            if indices.is_empty() {
                return Err(Error::EmptySet("sample task index list is empty".into()));
            }
            let mut chosen = indices.clone();
            chosen.sort_unstable();
            if chosen.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Validation("duplicate indices in unlearning set".into()));
            }
            if let Some(&bad) = chosen.iter().find(|&&i| i >= n) {
                return Err(Error::Validation(format!("index {bad} out of range for {n} training rows")));
            }
            sample_task(train, test, chosen, *seed)
        }
    }
}

fn sample_task(train: Dataset, test: Dataset, unlearn_idx: Vec<usize>, seed: u64) -> Result<UnlearnTask> {
    let remain_idx = complement(train.len(), &unlearn_idx);
    if remain_idx.is_empty() {
        return Err(Error::EmptySet("no training samples remain".into()));
    }
    let unlearn_train = train.subset(&unlearn_idx)?;
    let u_eval = sorted_sample(
        unlearn_train.len(),
        unlearn_train.len().min(EVAL_SUBSET_CAP),
        seed,
        "task-eval-unlearn",
    );
    let t_eval = sorted_sample(test.len(), test.len().min(EVAL_SUBSET_CAP), seed, "task-eval-test");
    let task = UnlearnTask {
        kind: TaskKind::Sample,
        eval: EvalSets::Sample {
            unlearn: unlearn_train.subset(&u_eval)?,
            test: test.subset(&t_eval)?,
        },
        unlearn_train,
        remain_train: train.subset(&remain_idx)?,
        unlearn_test: None,
        remain_test: None,
        unlearn_idx,
        remain_idx,
        train,
        test,
    };
    task.check_partition()?;
    Ok(task)
}

impl UnlearnTask {
    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn is_class(&self) -> bool {
        matches!(self.kind, TaskKind::Class { .. })
    }

    pub fn num_classes(&self) -> usize {
        self.train.num_classes()
    }

    pub fn input_dim(&self) -> usize {
        self.train.dim()
    }

    /// `D_tr`
    pub fn train(&self) -> &Dataset {
        &self.train
    }

    /// `D_ts`
    pub fn test(&self) -> &Dataset {
        &self.test
    }

    /// `D^u_tr`
    pub fn unlearn_train(&self) -> &Dataset {
        &self.unlearn_train
    }

    /// `D^r_tr`
    pub fn remain_train(&self) -> &Dataset {
        &self.remain_train
    }

    /// `D^u_ts`, class tasks only.
    pub fn unlearn_test(&self) -> Option<&Dataset> {
        self.unlearn_test.as_ref()
    }

    /// `D^r_ts`, class tasks only.
    pub fn remain_test(&self) -> Option<&Dataset> {
        self.remain_test.as_ref()
    }

    pub fn eval_sets(&self) -> &EvalSets {
        &self.eval
    }

    /// Training-row indices of the unlearning set, ascending.
    pub fn unlearn_indices(&self) -> &[usize] {
        &self.unlearn_idx
    }

    /// Training-row indices of the remaining set, ascending.
    pub fn remain_indices(&self) -> &[usize] {
        &self.remain_idx
    }

    /// Verifies that the unlearning and remaining index sets partition `D_tr`
    /// and, for class tasks, that membership follows the class label.
    pub fn check_partition(&self) -> Result<()> {
        let n = self.train.len();
        let mut seen = vec![0u8; n];
        for &i in self.unlearn_idx.iter().chain(&self.remain_idx) {
            if i >= n {
                return Err(Error::Validation(format!("partition index {i} out of range")));
            }
            seen[i] += 1;
        }
        if let Some(bad) = seen.iter().position(|&c| c != 1) {
            return Err(Error::Validation(format!(
                "training row {bad} appears {} times across the partition",
                seen[bad]
            )));
        }
        if let TaskKind::Class { class_id } = self.kind {
            let labels = self.train.labels();
            if self.unlearn_idx.iter().any(|&i| labels[i] != class_id)
                || self.remain_idx.iter().any(|&i| labels[i] == class_id)
            {
                return Err(Error::Validation("class partition does not follow labels".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn balanced(per_class: usize, classes: usize) -> Dataset {
        let n = per_class * classes;
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let features = Tensor::matrix(n, 2, (0..2 * n).map(|v| v as f64).collect()).unwrap();
        Dataset::new(features, labels, classes).unwrap()
    }

    #[test]
    fn class_task_sizes_match_reported_setup() {
        let task = make_task(balanced(5000, 10), balanced(1000, 10), &TaskSpec::Class { class_id: 5 }).unwrap();
        assert_eq!(task.unlearn_train().len(), 5000);
        assert_eq!(task.remain_train().len(), 45000);
        assert_eq!(task.unlearn_test().unwrap().len(), 1000);
        assert!(task.unlearn_train().labels().iter().all(|&l| l == 5));
        assert!(task.remain_train().labels().iter().all(|&l| l != 5));
        assert!(task.remain_test().unwrap().labels().iter().all(|&l| l != 5));
        match task.eval_sets() {
            EvalSets::Class { unlearn_test } => assert_eq!(unlearn_test.len(), 1000),
            _ => panic!("class task needs class eval"),
        }
    }

    #[test]
    fn sample_task_sizes_match_reported_setup() {
        let task = make_task(balanced(5000, 10), balanced(100, 10), &TaskSpec::Sample { count: 500, seed: 3 }).unwrap();
        assert_eq!(task.unlearn_train().len(), 500);
        assert_eq!(task.remain_train().len(), 49500);
        match task.eval_sets() {
            EvalSets::Sample { unlearn, test } => {
                assert_eq!(unlearn.len(), 500);
                assert_eq!(test.len(), 500);
            }
            _ => panic!("sample task needs sample eval"),
        }
        task.check_partition().unwrap();
    }

    #[test]
    fn eval_subsets_are_capped() {
        let task = make_task(balanced(200, 4), balanced(200, 4), &TaskSpec::Sample { count: 600, seed: 1 }).unwrap();
        match task.eval_sets() {
            EvalSets::Sample { unlearn, test } => {
                assert_eq!(unlearn.len(), EVAL_SUBSET_CAP);
                assert_eq!(test.len(), EVAL_SUBSET_CAP);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn class_missing_from_test_is_error() {
        let train = balanced(10, 3);
        let test = Dataset::new(Tensor::zeros(&[2, 2]), vec![0, 1], 3).unwrap();
        assert!(matches!(make_task(train, test, &TaskSpec::Class { class_id: 2 }), Err(Error::EmptySet(_))));
    }

    #[test]
    fn class_missing_from_train_is_error() {
        let train = Dataset::new(Tensor::zeros(&[2, 2]), vec![0, 1], 3).unwrap();
        let test = balanced(3, 3);
        assert!(matches!(make_task(train, test, &TaskSpec::Class { class_id: 2 }), Err(Error::EmptySet(_))));
    }

    #[test]
    fn duplicate_and_empty_indices_rejected() {
        let spec = TaskSpec::Indices { indices: vec![1, 4, 1], seed: 0 };
        assert!(matches!(make_task(balanced(5, 2), balanced(2, 2), &spec), Err(Error::Validation(_))));
        let spec = TaskSpec::Indices { indices: vec![], seed: 0 };
        assert!(matches!(make_task(balanced(5, 2), balanced(2, 2), &spec), Err(Error::EmptySet(_))));
        let spec = TaskSpec::Sample { count: 11, seed: 0 };
        assert!(make_task(balanced(5, 2), balanced(2, 2), &spec).is_err());
    }

    #[test]
    fn explicit_indices_are_used() {
        let spec = TaskSpec::Indices { indices: vec![7, 2], seed: 0 };
        let task = make_task(balanced(5, 2), balanced(2, 2), &spec).unwrap();
        assert_eq!(task.unlearn_indices(), &[2, 7]);
        assert_eq!(task.remain_train().len(), 8);
    }

    proptest::proptest! {
        #[test]
        fn sample_tasks_partition_training_rows(count in 1usize..40, seed in 0u64..1000) {
            let task = make_task(balanced(10, 4), balanced(2, 4), &TaskSpec::Sample { count, seed }).unwrap();
            let mut all: Vec<usize> = task.unlearn_indices().iter().chain(task.remain_indices()).copied().collect();
            all.sort_unstable();
            proptest::prop_assert_eq!(all, (0..40).collect::<Vec<_>>());
            proptest::prop_assert_eq!(task.unlearn_train().len(), count);
        }
    }
}
