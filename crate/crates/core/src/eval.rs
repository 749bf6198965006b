//! Classifier-in-the-loop fitness.
//!
//! A feature mask is scored by training LDA (two classes) or multinomial
//! logistic regression (any number of classes) on the masked features and
//! measuring balanced accuracy under a stratified k-fold plan that is fixed
//! for the whole run. The objective pair is `(1 - mean fold balanced
//! accuracy, number of selected features)`.
//!
//! [`cv_error`] is the straightforward reference implementation.
//! [`CvEvaluator`] computes the same numbers from per-fold statistics
//! precomputed over a column universe and caches results per mask; it is
//! what the search uses.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::MultiViewDataset;
use crate::linalg::solve_ridged;
use crate::metrics::{
    auc_binary, auc_multiclass_ova, balanced_accuracy_k, feature_f1, ConfusionMatrix, EvaluationReport,
};
use crate::moo::Fitness;
use crate::variation::BinaryChromosome;
use crate::{rng, Error, Result};

/// Stratified assignment of samples to folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    assignments: Vec<usize>,
    n_folds: usize,
}

impl FoldPlan {
    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }
}

/// Builds a stratified fold plan. Each class is shuffled and dealt
/// round-robin, continuing where the previous class stopped so fold sizes
/// stay balanced overall.
pub fn make_fold_plan(labels: &[usize], n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 folds, got {n_folds}"
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < n_folds {
            return Err(Error::Data(format!(
                "class {c} has {} samples, fewer than {n_folds} folds",
                members.len()
            )));
        }
    }
    let mut rng = rng::substream(seed, &[rng::tag::FOLDS]);
    let mut assignments = vec![0; labels.len()];
    let mut next = 0;
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignments[i] = next;
            next = (next + 1) % n_folds;
        }
    }
    Ok(FoldPlan {
        assignments,
        n_folds,
    })
}

/// Per-feature centering and scaling fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            scale.push(if var > 1e-24 { var.sqrt() } else { 1.0 });
        }
        Self { mean, scale }
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.apply(|v| *v = (*v - m) / s);
        }
        out
    }
}

fn check_finite(x: &DMatrix<f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Data("feature matrix contains non-finite values".into()))
    }
}

fn class_counts(y: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for &c in y {
        counts[c] += 1;
    }
    counts
}

/// Two-class linear discriminant on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub weights: DVector<f64>,
    pub intercept: f64,
    pub standardizer: Standardizer,
}

/// Class means and pooled within-class covariance of (already standardized)
/// training data.
struct LdaStats {
    means: [DVector<f64>; 2],
    pooled: DMatrix<f64>,
    log_prior_ratio: f64,
}

fn lda_stats(z: &DMatrix<f64>, y: &[usize]) -> Result<LdaStats> {
    let counts = class_counts(y, 2);
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::InvalidArgument(
            "LDA needs samples from both classes".into(),
        ));
    }
    let p = z.ncols();
    let mut means = [DVector::zeros(p), DVector::zeros(p)];
    for (i, &c) in y.iter().enumerate() {
        means[c] += z.row(i).transpose();
    }
    for c in 0..2 {
        means[c] /= counts[c] as f64;
    }
    let mut centered = z.clone();
    for (i, &c) in y.iter().enumerate() {
        let mut row = centered.row_mut(i);
        row -= means[c].transpose();
    }
    let dof = (y.len() as f64 - 2.0).max(1.0);
    let pooled = centered.tr_mul(&centered) / dof;
    Ok(LdaStats {
        means,
        pooled,
        log_prior_ratio: (counts[1] as f64 / counts[0] as f64).ln(),
    })
}

fn lda_from_stats(
    means: [&DVector<f64>; 2],
    pooled: &DMatrix<f64>,
    log_prior_ratio: f64,
    ridge: f64,
) -> Result<(DVector<f64>, f64)> {
    let diff = means[1] - means[0];
    let w = solve_ridged(pooled, &diff, ridge)?;
    let mid = (means[0] + means[1]) * 0.5;
    let intercept = -w.dot(&mid) + log_prior_ratio;
    Ok((w, intercept))
}

/// Fits LDA with labels in `{0, 1}`. The pooled covariance gets
/// `ridge × mean diagonal` added to its diagonal.
pub fn fit_lda(x: &DMatrix<f64>, y: &[usize], ridge: f64) -> Result<LdaModel> {
    if x.ncols() == 0 {
        return Err(Error::InvalidArgument("LDA needs at least one feature".into()));
    }
    if y.iter().any(|&c| c > 1) {
        return Err(Error::InvalidArgument("LDA labels must be 0 or 1".into()));
    }
    check_finite(x)?;
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform(x);
    let stats = lda_stats(&z, y)?;
    let (weights, intercept) = lda_from_stats(
        [&stats.means[0], &stats.means[1]],
        &stats.pooled,
        stats.log_prior_ratio,
        ridge,
    )?;
    Ok(LdaModel {
        weights,
        intercept,
        standardizer,
    })
}

impl LdaModel {
    /// Signed discriminant value; positive favours class 1.
    pub fn decision_function(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let z = self.standardizer.transform(x);
        (z * &self.weights).iter().map(|s| s + self.intercept).collect()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        self.decision_function(x)
            .into_iter()
            .map(|s| usize::from(s > 0.0))
            .collect()
    }
}

/// Optimizer settings for multinomial logistic regression.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlrOptions {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MlrOptions {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

/// Softmax-linear classifier on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct MlrModel {
    /// `n_classes × n_features`.
    pub coef: DMatrix<f64>,
    pub intercept: DVector<f64>,
    pub standardizer: Standardizer,
}

#[derive(Debug, Clone)]
pub struct MlrFit {
    pub model: MlrModel,
    /// Objective value after every accepted iterate, starting at the origin.
    pub loss_history: Vec<f64>,
    pub converged: bool,
}

fn unpack(theta: &[f64], n_classes: usize, p: usize) -> (DMatrix<f64>, DVector<f64>) {
    let coef = DMatrix::from_row_slice(n_classes, p + 1, theta);
    let w = coef.columns(0, p).into_owned();
    let b = coef.column(p).into_owned();
    (w, b)
}

fn softmax_rows(logits: &mut DMatrix<f64>) {
    for mut row in logits.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let s = row.sum();
        row /= s;
    }
}

/// Penalized mean negative log-likelihood and its gradient.
///
/// `theta` holds, row by row for each class, `p` weights followed by the
/// intercept. The L2 penalty `l2/2 · ‖W‖²` excludes intercepts.
pub fn mlr_loss_grad(
    theta: &[f64],
    z: &DMatrix<f64>,
    y: &[usize],
    n_classes: usize,
    l2: f64,
) -> (f64, Vec<f64>) {
    mlr_loss_grad_t(theta, z, &z.transpose(), y, n_classes, l2)
}

/// [`mlr_loss_grad`] with `zt = zᵀ` precomputed. Logits are laid out one
/// column per sample so the per-sample softmax runs over contiguous memory.
fn mlr_loss_grad_t(
    theta: &[f64],
    z: &DMatrix<f64>,
    zt: &DMatrix<f64>,
    y: &[usize],
    n_classes: usize,
    l2: f64,
) -> (f64, Vec<f64>) {
    let (p, n) = zt.shape();
    let (w, b) = unpack(theta, n_classes, p);
    let mut resid = &w * zt;
    let mut nll = 0.0;
    for (i, mut col) in resid.column_iter_mut().enumerate() {
        col += &b;
        let max = col.max();
        let own = col[y[i]];
        let mut sum = 0.0;
        for v in col.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        nll += max + sum.ln() - own;
        col /= sum;
        col[y[i]] -= 1.0;
    }
    let inv_n = 1.0 / n as f64;
    let grad_w = &resid * z * inv_n + &w * l2;
    let grad_b = resid.column_sum() * inv_n;
    let loss = nll * inv_n + 0.5 * l2 * w.norm_squared();

    let mut grad = Vec::with_capacity(theta.len());
    for c in 0..n_classes {
        grad.extend(grad_w.row(c).iter());
        grad.push(grad_b[c]);
    }
    (loss, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with a backtracking Armijo line search.
/// Every accepted step strictly decreases the objective.
fn lbfgs(
    mut theta: Vec<f64>,
    f: impl Fn(&[f64]) -> (f64, Vec<f64>),
    max_iter: usize,
    tol: f64,
) -> (Vec<f64>, Vec<f64>, bool) {
    const MEMORY: usize = 10;
    let (mut loss, mut grad) = f(&theta);
    let mut history = vec![loss];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    for _ in 0..max_iter {
        if dot(&grad, &grad).sqrt() < tol {
            return (theta, history, true);
        }
        // Two-loop recursion.
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push((a, rho));
        }
        let gamma = match (s_hist.last(), y_hist.last()) {
            (Some(s), Some(y)) => dot(s, y) / dot(y, y),
            _ => 1.0 / dot(&grad, &grad).sqrt().max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y), (a, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let bcoef = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - bcoef) * si);
        }
        let mut dir: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            // Not a descent direction; restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let (l, g) = f(&cand);
            if l.is_finite() && l <= loss + 1e-4 * step * slope {
                accepted = Some((cand, l, g));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, l, g)) = accepted else {
            return (theta, history, false);
        };
        let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g.iter().zip(&grad).map(|(a, b)| a - b).collect();
        if dot(&s, &yv) > 1e-12 {
            if s_hist.len() == MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(yv);
        }
        let improved = l < loss;
        theta = cand;
        loss = l;
        grad = g;
        history.push(loss);
        if !improved {
            break;
        }
    }
    let converged = dot(&grad, &grad).sqrt() < tol;
    (theta, history, converged)
}

fn fit_mlr_standardized(
    z: &DMatrix<f64>,
    y: &[usize],
    n_classes: usize,
    opts: &MlrOptions,
) -> (DMatrix<f64>, DVector<f64>, Vec<f64>, bool) {
    let p = z.ncols();
    let theta0 = vec![0.0; n_classes * (p + 1)];
    let zt = z.transpose();
    let (theta, history, converged) = lbfgs(
        theta0,
        |t| mlr_loss_grad_t(t, z, &zt, y, n_classes, opts.l2),
        opts.max_iter,
        opts.tol,
    );
    let (w, b) = unpack(&theta, n_classes, p);
    (w, b, history, converged)
}

/// Fits multinomial logistic regression with labels in `0..n_classes`.
pub fn fit_mlr(
    x: &DMatrix<f64>,
    y: &[usize],
    n_classes: usize,
    opts: &MlrOptions,
) -> Result<MlrFit> {
    check_finite(x)?;
    if x.ncols() == 0 {
        return Err(Error::InvalidArgument("MLR needs at least one feature".into()));
    }
    if y.iter().any(|&c| c >= n_classes) {
        return Err(Error::InvalidArgument("label outside 0..n_classes".into()));
    }
    if class_counts(y, n_classes).iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InvalidArgument("MLR needs at least two classes".into()));
    }
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform(x);
    let (coef, intercept, loss_history, converged) = fit_mlr_standardized(&z, y, n_classes, opts);
    Ok(MlrFit {
        model: MlrModel {
            coef,
            intercept,
            standardizer,
        },
        loss_history,
        converged,
    })
}

fn mlr_proba_standardized(coef: &DMatrix<f64>, intercept: &DVector<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut logits = z * coef.transpose();
    for mut row in logits.row_iter_mut() {
        row += intercept.transpose();
    }
    softmax_rows(&mut logits);
    logits
}

fn argmax_rows(m: &DMatrix<f64>) -> Vec<usize> {
    m.row_iter()
        .map(|r| {
            let mut best = 0;
            for j in 1..r.len() {
                if r[j] > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

impl MlrModel {
    /// `n_samples × n_classes` class probabilities.
    pub fn predict_proba(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        mlr_proba_standardized(&self.coef, &self.intercept, &self.standardizer.transform(x))
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        argmax_rows(&self.predict_proba(x))
    }
}

/// Classifier used inside the fitness function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierChoice {
    /// LDA for two classes, MLR otherwise.
    #[default]
    Auto,
    Lda,
    Mlr,
}

impl ClassifierChoice {
    fn resolve(self, n_classes: usize) -> Result<ClassifierKind> {
        match (self, n_classes) {
            (_, c) if c < 2 => Err(Error::Data("need at least two classes".into())),
            (ClassifierChoice::Auto, 2) | (ClassifierChoice::Lda, 2) => Ok(ClassifierKind::Lda),
            (ClassifierChoice::Lda, c) => Err(Error::config(
                "classifier",
                format!("LDA is binary only, data has {c} classes"),
            )),
            _ => Ok(ClassifierKind::Mlr),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Lda,
    Mlr,
}

/// Settings of the fitness function.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub n_folds: usize,
    pub classifier: ClassifierChoice,
    /// LDA ridge, relative to the mean diagonal of the pooled covariance.
    pub lda_ridge: f64,
    pub mlr: MlrOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            n_folds: 10,
            classifier: ClassifierChoice::Auto,
            lda_ridge: 1e-6,
            mlr: MlrOptions::default(),
        }
    }
}

/// A trained classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierModel {
    Lda(LdaModel),
    Mlr(MlrModel),
}

/// Continuous outputs used for AUC: signed discriminant values for LDA,
/// class probabilities for MLR.
#[derive(Debug, Clone, PartialEq)]
pub enum Scores {
    Binary(Vec<f64>),
    PerClass(DMatrix<f64>),
}

impl ClassifierModel {
    pub fn n_features(&self) -> usize {
        match self {
            ClassifierModel::Lda(m) => m.weights.len(),
            ClassifierModel::Mlr(m) => m.coef.ncols(),
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        match self {
            ClassifierModel::Lda(m) => m.predict(x),
            ClassifierModel::Mlr(m) => m.predict(x),
        }
    }

    pub fn scores(&self, x: &DMatrix<f64>) -> Scores {
        match self {
            ClassifierModel::Lda(m) => Scores::Binary(m.decision_function(x)),
            ClassifierModel::Mlr(m) => Scores::PerClass(m.predict_proba(x)),
        }
    }
}

/// Fits the classifier that `opts.classifier` selects for `n_classes`.
pub fn fit_classifier(
    x: &DMatrix<f64>,
    y: &[usize],
    n_classes: usize,
    opts: &EvalOptions,
) -> Result<ClassifierModel> {
    match opts.classifier.resolve(n_classes)? {
        ClassifierKind::Lda => Ok(ClassifierModel::Lda(fit_lda(x, y, opts.lda_ridge)?)),
        ClassifierKind::Mlr => Ok(ClassifierModel::Mlr(fit_mlr(x, y, n_classes, &opts.mlr)?.model)),
    }
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    x.select_rows(rows)
}

/// Reference cross-validated error of a global feature mask: fit on the
/// training folds, balanced accuracy on each held-out fold, averaged over
/// folds, returned as `1 - mean`.
pub fn cv_error(
    dataset: &MultiViewDataset,
    mask: &BinaryChromosome,
    plan: &FoldPlan,
    opts: &EvalOptions,
) -> Result<f64> {
    if mask.count_ones() == 0 {
        return Err(Error::InvalidArgument(
            "mask selects no features; at least one feature must be selected".into(),
        ));
    }
    let x = dataset.select_global(mask)?;
    let y = &dataset.labels;
    let mut total = 0.0;
    for fold in 0..plan.n_folds() {
        let (tr, te) = (plan.train_indices(fold), plan.test_indices(fold));
        let y_tr: Vec<usize> = tr.iter().map(|&i| y[i]).collect();
        let y_te: Vec<usize> = te.iter().map(|&i| y[i]).collect();
        let model = fit_classifier(&select_rows(&x, &tr), &y_tr, dataset.n_classes, opts)?;
        let pred = model.predict(&select_rows(&x, &te));
        total += balanced_accuracy_k(&y_te, &pred, dataset.n_classes)?;
    }
    Ok(1.0 - total / plan.n_folds() as f64)
}

struct FoldData {
    y_train: Vec<usize>,
    y_test: Vec<usize>,
    z_train: DMatrix<f64>,
    z_test: DMatrix<f64>,
    lda: Option<LdaStats>,
}

/// Cached, precomputed cross-validation over a fixed universe of columns.
///
/// The universe is a list of global column indices; masks passed to
/// [`CvEvaluator::evaluate`] are over the universe positions. Results are
/// identical to [`cv_error`] on the corresponding global mask.
pub struct CvEvaluator {
    universe: Vec<usize>,
    folds: Vec<FoldData>,
    n_classes: usize,
    kind: ClassifierKind,
    opts: EvalOptions,
    cache: Mutex<HashMap<BinaryChromosome, f64>>,
    evaluations: AtomicUsize,
    min_features: AtomicUsize,
}

impl CvEvaluator {
    pub fn new(
        dataset: &MultiViewDataset,
        universe: Vec<usize>,
        plan: &FoldPlan,
        opts: &EvalOptions,
    ) -> Result<Self> {
        let kind = opts.classifier.resolve(dataset.n_classes)?;
        let x = dataset.select_columns(&universe)?;
        check_finite(&x)?;
        let folds = (0..plan.n_folds())
            .map(|fold| {
                let (tr, te) = (plan.train_indices(fold), plan.test_indices(fold));
                let x_tr = select_rows(&x, &tr);
                let standardizer = Standardizer::fit(&x_tr);
                let z_train = standardizer.transform(&x_tr);
                let z_test = standardizer.transform(&select_rows(&x, &te));
                let y_train: Vec<usize> = tr.iter().map(|&i| dataset.labels[i]).collect();
                let y_test: Vec<usize> = te.iter().map(|&i| dataset.labels[i]).collect();
                let lda = match kind {
                    ClassifierKind::Lda => Some(lda_stats(&z_train, &y_train)?),
                    ClassifierKind::Mlr => None,
                };
                Ok(FoldData {
                    y_train,
                    y_test,
                    z_train,
                    z_test,
                    lda,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            universe,
            folds,
            n_classes: dataset.n_classes,
            kind,
            opts: *opts,
            cache: Mutex::new(HashMap::new()),
            evaluations: AtomicUsize::new(0),
            min_features: AtomicUsize::new(usize::MAX),
        })
    }

    pub fn universe(&self) -> &[usize] {
        &self.universe
    }

    /// Number of distinct masks actually trained (cache misses).
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// Smallest feature count ever evaluated, `usize::MAX` if none.
    pub fn min_features_evaluated(&self) -> usize {
        self.min_features.load(Ordering::Relaxed)
    }

    fn fold_balanced_accuracy(&self, fold: &FoldData, cols: &[usize]) -> Result<f64> {
        let pred = match self.kind {
            ClassifierKind::Lda => {
                let stats = fold.lda.as_ref().expect("LDA statistics");
                let m0 = stats.means[0].select_rows(cols);
                let m1 = stats.means[1].select_rows(cols);
                let pooled = stats.pooled.select_rows(cols).select_columns(cols);
                let (w, b) =
                    lda_from_stats([&m0, &m1], &pooled, stats.log_prior_ratio, self.opts.lda_ridge)?;
                let scores = fold.z_test.select_columns(cols) * w;
                scores.iter().map(|s| usize::from(s + b > 0.0)).collect::<Vec<_>>()
            }
            ClassifierKind::Mlr => {
                let z = fold.z_train.select_columns(cols);
                let (coef, intercept, _, _) =
                    fit_mlr_standardized(&z, &fold.y_train, self.n_classes, &self.opts.mlr);
                argmax_rows(&mlr_proba_standardized(
                    &coef,
                    &intercept,
                    &fold.z_test.select_columns(cols),
                ))
            }
        };
        balanced_accuracy_k(&fold.y_test, &pred, self.n_classes)
    }

    fn compute(&self, mask: &BinaryChromosome) -> Result<f64> {
        let cols = mask.ones_indices();
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.min_features.fetch_min(cols.len(), Ordering::Relaxed);
        let mut total = 0.0;
        for fold in &self.folds {
            total += self.fold_balanced_accuracy(fold, &cols)?;
        }
        Ok(1.0 - total / self.folds.len() as f64)
    }

    /// Fitness of a mask over the universe positions.
    pub fn evaluate(&self, mask: &BinaryChromosome) -> Result<Fitness> {
        if mask.len() != self.universe.len() {
            return Err(Error::InvalidArgument(format!(
                "mask length {} does not match evaluator universe {}",
                mask.len(),
                self.universe.len()
            )));
        }
        let n = mask.count_ones();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "mask selects no features; at least one feature must be selected".into(),
            ));
        }
        if let Some(&e) = self.cache.lock().expect("cache lock").get(mask) {
            return Ok(Fitness::new(e, n));
        }
        let e = self.compute(mask)?;
        self.cache.lock().expect("cache lock").insert(mask.clone(), e);
        Ok(Fitness::new(e, n))
    }

    /// Evaluates many masks, training distinct uncached masks in parallel.
    pub fn evaluate_many(&self, masks: &[&BinaryChromosome]) -> Result<Vec<Fitness>> {
        let mut pending: Vec<&BinaryChromosome> = {
            let cache = self.cache.lock().expect("cache lock");
            masks
                .iter()
                .copied()
                .filter(|m| !cache.contains_key(*m))
                .collect()
        };
        pending.sort();
        pending.dedup();
        let fresh: Vec<(BinaryChromosome, Result<f64>)> = pending
            .par_iter()
            .map(|m| {
                let r = if m.count_ones() == 0 || m.len() != self.universe.len() {
                    Err(Error::InvalidArgument("invalid mask for evaluation".into()))
                } else {
                    self.compute(m)
                };
                ((*m).clone(), r)
            })
            .collect();
        {
            let mut cache = self.cache.lock().expect("cache lock");
            for (m, r) in fresh {
                cache.insert(m, r?);
            }
        }
        masks.iter().map(|m| self.evaluate(m)).collect()
    }

    /// Maps a global mask onto universe positions.
    pub fn project(&self, global: &BinaryChromosome) -> Result<BinaryChromosome> {
        let mut local = BinaryChromosome::zeros(self.universe.len());
        for g in global.ones_indices() {
            let pos = self.universe.binary_search(&g).map_err(|_| {
                Error::InvalidArgument(format!("column {g} is outside the evaluator universe"))
            })?;
            local.set(pos, true);
        }
        Ok(local)
    }
}

/// Trains the task's classifier on `train` restricted to `mask` and scores
/// it on `test`.
pub fn evaluate_on_test(
    train: &MultiViewDataset,
    test: &MultiViewDataset,
    mask: &BinaryChromosome,
    opts: &EvalOptions,
) -> Result<(EvaluationReport, ClassifierModel)> {
    train.check_compatible(test)?;
    if mask.count_ones() == 0 {
        return Err(Error::InvalidArgument(
            "mask selects no features; at least one feature must be selected".into(),
        ));
    }
    let model = fit_classifier(&train.select_global(mask)?, &train.labels, train.n_classes, opts)?;
    let x_test = test.select_global(mask)?;
    let pred = model.predict(&x_test);
    let c = test.n_classes;
    let y = &test.labels;
    let cm = ConfusionMatrix::new(y, &pred, c)?;
    let per_class_tpf = cm.true_positive_fractions()?;
    let (sensitivity, specificity) = if c == 2 {
        (Some(per_class_tpf[1]), Some(per_class_tpf[0]))
    } else {
        (None, None)
    };
    let auc = match model.scores(&x_test) {
        Scores::Binary(s) => auc_binary(&y.iter().map(|&k| k == 1).collect::<Vec<_>>(), &s)?,
        Scores::PerClass(p) if c == 2 => {
            let s: Vec<f64> = p.column(1).iter().copied().collect();
            auc_binary(&y.iter().map(|&k| k == 1).collect::<Vec<_>>(), &s)?
        }
        Scores::PerClass(p) => {
            let rows: Vec<Vec<f64>> = p.row_iter().map(|r| r.iter().copied().collect()).collect();
            auc_multiclass_ova(y, &rows, c)?
        }
    };
    let parts = train.split_mask(mask)?;
    let feature_f1 = parts
        .iter()
        .zip(&train.views)
        .map(|(m, v)| v.informative.as_ref().map(|inf| feature_f1(m, inf)).transpose())
        .collect::<Result<Vec<_>>>()?;
    let report = EvaluationReport {
        n_samples: y.len(),
        balanced_accuracy: per_class_tpf.iter().sum::<f64>() / c as f64,
        sensitivity,
        specificity,
        auc,
        per_class_tpf,
        confusion: cm.rows().to_vec(),
        view_names: train.views.iter().map(|v| v.name.clone()).collect(),
        selected_counts: parts.iter().map(|m| m.count_ones()).collect(),
        feature_f1,
    };
    Ok((report, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{MultiViewDataset, View};
    use crate::rng::from_seed;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(rng: &mut crate::rng::Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn dataset(x: DMatrix<f64>, y: Vec<usize>, n_classes: usize) -> MultiViewDataset {
        MultiViewDataset::new(vec![View::new("v", x)], y, n_classes).unwrap()
    }

    #[test]
    fn fold_plan_is_stratified_and_deterministic() {
        let labels: Vec<usize> = (0..200).map(|i| i / 100).collect();
        let plan = make_fold_plan(&labels, 10, 4).unwrap();
        for f in 0..10 {
            let te = plan.test_indices(f);
            let ones = te.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!((te.len() - ones, ones), (10, 10));
        }
        assert_eq!(plan, make_fold_plan(&labels, 10, 4).unwrap());
        assert_ne!(plan, make_fold_plan(&labels, 10, 5).unwrap());

        let four: Vec<usize> = (0..400).map(|i| i / 100).collect();
        let plan = make_fold_plan(&four, 10, 0).unwrap();
        for f in 0..10 {
            let counts = class_counts(
                &plan.test_indices(f).iter().map(|&i| four[i]).collect::<Vec<_>>(),
                4,
            );
            assert_eq!(counts, vec![10; 4]);
        }
    }

    #[test]
    fn fold_plan_rejects_small_class() {
        let labels = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
        let err = make_fold_plan(&labels, 10, 0).unwrap_err();
        assert!(err.to_string().contains("class 1"));
    }

    #[test]
    fn lda_separates_well_separated_classes() {
        let mut rng = from_seed(1);
        let y: Vec<usize> = (0..200).map(|i| i % 2).collect();
        let x = DMatrix::from_fn(200, 1, |i, _| if y[i] == 1 { 3.0 } else { -3.0 } + normal(&mut rng));
        let m = fit_lda(&x, &y, 1e-6).unwrap();
        let acc = balanced_accuracy_k(&y, &m.predict(&x), 2).unwrap();
        assert!(acc >= 0.95, "{acc}");
    }

    #[test]
    fn lda_without_signal_is_at_chance() {
        let mut rng = from_seed(2);
        let y: Vec<usize> = (0..400).map(|i| i % 2).collect();
        let x = DMatrix::from_fn(400, 3, |_, _| normal(&mut rng));
        let m = fit_lda(&x.rows(0, 200).into_owned(), &y[..200], 1e-6).unwrap();
        let acc = balanced_accuracy_k(&y[200..], &m.predict(&x.rows(200, 200).into_owned()), 2).unwrap();
        assert!((acc - 0.5).abs() <= 0.1, "{acc}");
    }

    #[test]
    fn lda_survives_duplicated_column() {
        let mut rng = from_seed(3);
        let y: Vec<usize> = (0..60).map(|i| i % 2).collect();
        let base: Vec<f64> = y.iter().map(|&c| c as f64 + normal(&mut rng)).collect();
        let x = DMatrix::from_fn(60, 2, |i, _| base[i]);
        let m = fit_lda(&x, &y, 1e-6).unwrap();
        assert!(m.weights.iter().all(|w| w.is_finite()));
        assert!(fit_lda(&x, &vec![0; 60], 1e-6).is_err());
    }

    #[test]
    fn mlr_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = from_seed(100 + seed);
            let (n, p, c) = (30, 3, 3);
            let z = DMatrix::from_fn(n, p, |_, _| normal(&mut rng));
            let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
            let theta: Vec<f64> = (0..c * (p + 1)).map(|_| 0.5 * normal(&mut rng)).collect();
            let (_, g) = mlr_loss_grad(&theta, &z, &y, c, 0.01);
            for k in 0..theta.len() {
                let h = 1e-6;
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[k] += h;
                tm[k] -= h;
                let fd = (mlr_loss_grad(&tp, &z, &y, c, 0.01).0 - mlr_loss_grad(&tm, &z, &y, c, 0.01).0)
                    / (2.0 * h);
                let rel = (fd - g[k]).abs() / g[k].abs().max(1e-3);
                assert!(rel < 1e-5, "component {k}: fd {fd} vs analytic {}", g[k]);
            }
        }
    }

    #[test]
    fn mlr_fits_separable_blobs_with_monotone_loss() {
        let mut rng = from_seed(7);
        let centers = [(0.0, 4.0), (4.0, -2.0), (-4.0, -2.0)];
        let y: Vec<usize> = (0..150).map(|i| i % 3).collect();
        let x = DMatrix::from_fn(150, 2, |i, j| {
            let (cx, cy) = centers[y[i]];
            (if j == 0 { cx } else { cy }) + 0.5 * normal(&mut rng)
        });
        let fit = fit_mlr(&x, &y, 3, &MlrOptions::default()).unwrap();
        let acc = balanced_accuracy_k(&y, &fit.model.predict(&x), 3).unwrap();
        assert!(acc >= 0.95, "{acc}");
        for w in fit.loss_history.windows(2) {
            assert!(w[1] <= w[0], "loss increased: {} -> {}", w[0], w[1]);
        }
        let proba = fit.model.predict_proba(&x);
        for row in proba.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mlr_rejects_non_finite() {
        let x = DMatrix::from_row_slice(2, 1, &[f64::NAN, 1.0]);
        assert!(fit_mlr(&x, &[0, 1], 2, &MlrOptions::default()).is_err());
    }

    fn noisy_binary(seed: u64, with_label_column: bool) -> MultiViewDataset {
        let mut rng = from_seed(seed);
        let y: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let x = DMatrix::from_fn(100, 6, |i, j| {
            if j == 0 && with_label_column {
                y[i] as f64
            } else {
                normal(&mut rng)
            }
        });
        dataset(x, y, 2)
    }

    #[test]
    fn cv_error_of_perfect_feature_is_zero() {
        let ds = noisy_binary(1, true);
        let plan = make_fold_plan(&ds.labels, 10, 0).unwrap();
        let mask = BinaryChromosome::from_indices(6, [0]);
        let e = cv_error(&ds, &mask, &plan, &EvalOptions::default()).unwrap();
        assert!(e < 1e-12, "{e}");
        assert!(cv_error(&ds, &BinaryChromosome::zeros(6), &plan, &EvalOptions::default()).is_err());
    }

    #[test]
    fn cv_error_of_noise_is_near_chance() {
        let mut binary = 0.0;
        let mut four = 0.0;
        let reps = 5;
        for seed in 0..reps {
            let ds = noisy_binary(10 + seed, false);
            let plan = make_fold_plan(&ds.labels, 10, seed).unwrap();
            binary += cv_error(&ds, &BinaryChromosome::from_indices(6, 1..6), &plan, &EvalOptions::default()).unwrap();

            let mut rng = from_seed(50 + seed);
            let y: Vec<usize> = (0..200).map(|i| i % 4).collect();
            let x = DMatrix::from_fn(200, 3, |_, _| normal(&mut rng));
            let ds = dataset(x, y, 4);
            let plan = make_fold_plan(&ds.labels, 10, seed).unwrap();
            four += cv_error(&ds, &BinaryChromosome::ones(3), &plan, &EvalOptions::default()).unwrap();
        }
        let (binary, four) = (binary / reps as f64, four / reps as f64);
        assert!((binary - 0.5).abs() <= 0.1, "{binary}");
        assert!((four - 0.75).abs() <= 0.1, "{four}");
    }

    #[test]
    fn evaluator_matches_reference_and_caches() {
        for (n_classes, seed) in [(2usize, 3u64), (3, 4)] {
            let mut rng = from_seed(seed);
            let y: Vec<usize> = (0..90).map(|i| i % n_classes).collect();
            let x = DMatrix::from_fn(90, 8, |i, j| {
                normal(&mut rng) + if j < 3 { y[i] as f64 * 0.8 } else { 0.0 }
            });
            let ds = dataset(x, y, n_classes);
            let plan = make_fold_plan(&ds.labels, 5, seed).unwrap();
            let opts = EvalOptions { n_folds: 5, ..Default::default() };
            let ev = CvEvaluator::new(&ds, (0..8).collect(), &plan, &opts).unwrap();
            for cols in [vec![0], vec![0, 1, 2], vec![1, 4, 6, 7], (0..8).collect()] {
                let mask = BinaryChromosome::from_indices(8, cols.iter().copied());
                let fast = ev.evaluate(&mask).unwrap();
                let slow = cv_error(&ds, &mask, &plan, &opts).unwrap();
                assert!((fast.error - slow).abs() < 1e-9, "{cols:?}: {} vs {slow}", fast.error);
                assert_eq!(fast.n_features, cols.len());
                assert_eq!(ev.evaluate(&mask).unwrap(), fast);
            }
            assert_eq!(ev.evaluations(), 4);
            assert!(ev.evaluate(&BinaryChromosome::zeros(8)).is_err());
        }
    }
}
