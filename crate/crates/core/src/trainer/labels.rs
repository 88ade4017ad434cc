use std::sync::atomic::{AtomicUsize, Ordering};

use crate::data::Split;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Ground truth behind a split. Training labels are freely readable,
/// validation labels only through accuracy, and every test-accuracy query is
/// counted so callers can audit that training never looked at them.
#[derive(Debug)]
pub struct LabelData {
    classes: usize,
    labels: Vec<usize>,
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
    test_reads: AtomicUsize,
}

impl Clone for LabelData {
    fn clone(&self) -> Self {
        LabelData {
            classes: self.classes,
            labels: self.labels.clone(),
            train: self.train.clone(),
            val: self.val.clone(),
            test: self.test.clone(),
            test_reads: AtomicUsize::new(self.test_reads()),
        }
    }
}

impl LabelData {
    pub fn new(labels: Vec<usize>, classes: usize, split: &Split) -> Result<Self> {
        Self::from_sets(labels, classes, split.train.clone(), split.val.clone(), split.test.clone())
    }

    pub fn from_sets(
        labels: Vec<usize>,
        classes: usize,
        train: Vec<usize>,
        val: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self> {
        let n = labels.len();
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Data(format!("label {l} outside 0..{classes}")));
        }
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&val).chain(&test) {
            if i >= n {
                return Err(Error::Input(format!("split node {i} outside 0..{n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Input(format!("node {i} appears in more than one split set")));
            }
        }
        Ok(LabelData {
            classes,
            labels,
            train,
            val,
            test,
            test_reads: AtomicUsize::new(0),
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn val(&self) -> &[usize] {
        &self.val
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    pub fn train_label(&self, i: usize) -> usize {
        debug_assert!(self.train.contains(&i));
        self.labels[i]
    }

    pub fn labeled_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n()];
        for &i in &self.train {
            m[i] = true;
        }
        m
    }

    /// `n × c` matrix with one-hot rows on training nodes and zeros elsewhere.
    pub fn one_hot_train<T: Real>(&self) -> DenseMatrix<T> {
        let mut y = DenseMatrix::zeros(self.n(), self.classes);
        for &i in &self.train {
            y.set(i, self.labels[i], T::one());
        }
        y
    }

    /// One-hot targets for the training nodes, in `train()` order.
    pub fn train_targets<T: Real>(&self) -> DenseMatrix<T> {
        let mut y = DenseMatrix::zeros(self.train.len(), self.classes);
        for (r, &i) in self.train.iter().enumerate() {
            y.set(r, self.labels[i], T::one());
        }
        y
    }

    /// Accuracy of node-indexed predictions on the validation set.
    pub fn val_accuracy(&self, pred: &[usize]) -> f64 {
        accuracy(&self.val, &self.labels, |_, i| pred[i])
    }

    /// Accuracy of predictions given in `val()` order.
    pub fn val_accuracy_aligned(&self, pred: &[usize]) -> f64 {
        accuracy(&self.val, &self.labels, |r, _| pred[r])
    }

    /// Accuracy of node-indexed predictions on the test set. Counted.
    pub fn test_accuracy(&self, pred: &[usize]) -> f64 {
        self.test_reads.fetch_add(1, Ordering::Relaxed);
        accuracy(&self.test, &self.labels, |_, i| pred[i])
    }

    /// Accuracy of predictions given in `test()` order. Counted.
    pub fn test_accuracy_aligned(&self, pred: &[usize]) -> f64 {
        self.test_reads.fetch_add(1, Ordering::Relaxed);
        accuracy(&self.test, &self.labels, |r, _| pred[r])
    }

    pub fn test_reads(&self) -> usize {
        self.test_reads.load(Ordering::Relaxed)
    }

    /// Labels of the kept nodes, renumbered by `new_to_old`. Split
    /// sets keep only their kept members.
    pub(crate) fn restrict(&self, new_to_old: &[usize], old_to_new: &[Option<usize>]) -> LabelData {
        let map = |set: &[usize]| set.iter().filter_map(|&i| old_to_new[i]).collect::<Vec<_>>();
        LabelData {
            classes: self.classes,
            labels: new_to_old.iter().map(|&i| self.labels[i]).collect(),
            train: map(&self.train),
            val: map(&self.val),
            test: map(&self.test),
            test_reads: AtomicUsize::new(0),
        }
    }
}

fn accuracy(nodes: &[usize], labels: &[usize], pred: impl Fn(usize, usize) -> usize) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let hits = nodes.iter().enumerate().filter(|&(r, &i)| pred(r, i) == labels[i]).count();
    hits as f64 / nodes.len() as f64
}
