//! Multi-view datasets: the in-memory model, the synthetic Gaussian
//! benchmark with its Monte Carlo oracles, CSV ingestion through a TOML
//! manifest, and noise augmentation.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::eval::ClassifierModel;
use crate::linalg::cholesky_lower;
use crate::rng::{self, Rng};
use crate::variation::BinaryChromosome;
use crate::{Error, Result};

/// One feature group: an `n_samples × k_v` matrix with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub name: String,
    pub data: DMatrix<f64>,
    pub feature_names: Vec<String>,
    /// Ground-truth informative columns, when known.
    pub informative: Option<BinaryChromosome>,
    /// For generated or augmented views, `column_origin[j]` is the
    /// pre-permutation index of column `j`.
    pub column_origin: Option<Vec<usize>>,
}

impl View {
    /// A view with feature names `{name}_f{j}`.
    pub fn new(name: impl Into<String>, data: DMatrix<f64>) -> Self {
        let name = name.into();
        let feature_names = (0..data.ncols()).map(|j| format!("{name}_f{j}")).collect();
        Self {
            name,
            data,
            feature_names,
            informative: None,
            column_origin: None,
        }
    }

    pub fn n_features(&self) -> usize {
        self.data.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    pub views: Vec<View>,
    /// Class indices in `0..n_classes`.
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub sample_ids: Vec<String>,
    pub class_names: Vec<String>,
}

impl MultiViewDataset {
    /// Builds a dataset with default sample ids and class names, then
    /// validates it.
    pub fn new(views: Vec<View>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let ds = Self {
            sample_ids: (0..labels.len()).map(|i| format!("s{i:05}")).collect(),
            class_names: (0..n_classes).map(|c| c.to_string()).collect(),
            views,
            labels,
            n_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.labels.len();
        if self.views.is_empty() {
            return Err(Error::Data("dataset has no views".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Data(format!("need at least 2 classes, got {}", self.n_classes)));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= self.n_classes) {
            return Err(Error::Data(format!("label {bad} outside 0..{}", self.n_classes)));
        }
        if self.sample_ids.len() != e || self.class_names.len() != self.n_classes {
            return Err(Error::Data("sample ids or class names have the wrong length".into()));
        }
        for v in &self.views {
            if v.data.nrows() != e {
                return Err(Error::Data(format!(
                    "view '{}' has {} rows, expected {e}",
                    v.name,
                    v.data.nrows()
                )));
            }
            if v.n_features() == 0 {
                return Err(Error::Data(format!("view '{}' has no features", v.name)));
            }
            if v.feature_names.len() != v.n_features() {
                return Err(Error::Data(format!("view '{}' feature names mismatch", v.name)));
            }
            if v.informative.as_ref().is_some_and(|m| m.len() != v.n_features()) {
                return Err(Error::Data(format!("view '{}' informative mask mismatch", v.name)));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn n_features(&self) -> usize {
        self.views.iter().map(View::n_features).sum()
    }

    pub fn view_sizes(&self) -> Vec<usize> {
        self.views.iter().map(View::n_features).collect()
    }

    /// Global index of each view's first column.
    pub fn view_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.views
            .iter()
            .map(|v| {
                let o = acc;
                acc += v.n_features();
                o
            })
            .collect()
    }

    pub fn view_index(&self, name: &str) -> Option<usize> {
        self.views.iter().position(|v| v.name == name)
    }

    /// `(view, column)` of a global column index.
    pub fn locate(&self, global: usize) -> Result<(usize, usize)> {
        let mut g = global;
        for (v, view) in self.views.iter().enumerate() {
            if g < view.n_features() {
                return Ok((v, g));
            }
            g -= view.n_features();
        }
        Err(Error::InvalidArgument(format!(
            "column {global} out of range for {} features",
            self.n_features()
        )))
    }

    /// `n_samples × cols.len()` matrix of the given global columns.
    pub fn select_columns(&self, cols: &[usize]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.n_samples(), cols.len());
        for (k, &g) in cols.iter().enumerate() {
            let (v, j) = self.locate(g)?;
            out.set_column(k, &self.views[v].data.column(j));
        }
        Ok(out)
    }

    pub fn select_global(&self, mask: &BinaryChromosome) -> Result<DMatrix<f64>> {
        self.check_global(mask)?;
        self.select_columns(&mask.ones_indices())
    }

    fn check_global(&self, mask: &BinaryChromosome) -> Result<()> {
        if mask.len() != self.n_features() {
            return Err(Error::InvalidArgument(format!(
                "mask has length {}, dataset has {} features",
                mask.len(),
                self.n_features()
            )));
        }
        Ok(())
    }

    /// Splits a global mask into per-view masks.
    pub fn split_mask(&self, mask: &BinaryChromosome) -> Result<Vec<BinaryChromosome>> {
        self.check_global(mask)?;
        let offsets = self.view_offsets();
        Ok(self
            .views
            .iter()
            .zip(offsets)
            .map(|(v, o)| mask.slice(o, v.n_features()))
            .collect())
    }

    /// Concatenation of the per-view informative masks, if every view has one.
    pub fn informative_mask(&self) -> Option<BinaryChromosome> {
        let parts: Option<Vec<&BinaryChromosome>> =
            self.views.iter().map(|v| v.informative.as_ref()).collect();
        parts.map(|p| BinaryChromosome::concat(p.into_iter()))
    }

    /// Same shape and labelling: view names, sizes, feature names, classes.
    pub fn check_compatible(&self, other: &MultiViewDataset) -> Result<()> {
        if self.n_classes != other.n_classes {
            return Err(Error::Data(format!(
                "class count differs: {} vs {}",
                self.n_classes, other.n_classes
            )));
        }
        if self.views.len() != other.views.len() {
            return Err(Error::Data("view count differs".into()));
        }
        for (a, b) in self.views.iter().zip(&other.views) {
            if a.name != b.name || a.feature_names != b.feature_names {
                return Err(Error::Data(format!(
                    "view '{}' does not match '{}' in columns",
                    a.name, b.name
                )));
            }
        }
        Ok(())
    }
}

/// Distribution of pure-noise columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDist {
    /// U(0, 1).
    Uniform,
    /// χ²(1), uncentered.
    ChiSquare1,
    /// N(0, 1).
    Gaussian,
}

impl NoiseDist {
    pub fn sample(self, rng: &mut Rng) -> f64 {
        match self {
            NoiseDist::Uniform => rng.random::<f64>(),
            NoiseDist::ChiSquare1 => ChiSquared::new(1.0).expect("valid dof").sample(rng),
            NoiseDist::Gaussian => StandardNormal.sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Binary,
    FourClass,
}

impl Task {
    pub fn n_classes(self) -> usize {
        match self {
            Task::Binary => 2,
            Task::FourClass => 4,
        }
    }

    /// Class-mean multipliers applied to the base mean vector.
    fn mean_scales(self) -> &'static [f64] {
        match self {
            Task::Binary => &[1.0, -1.0],
            Task::FourClass => &[1.0, -1.0, 3.0, 5.0],
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Task::Binary),
            "four_class" | "4class" | "four-class" => Ok(Task::FourClass),
            _ => Err(Error::InvalidArgument(format!(
                "unknown task '{s}', expected binary or four_class"
            ))),
        }
    }
}

/// Gaussian class-conditional model of a view's informative features,
/// shared covariance across classes.
#[derive(Debug, Clone, PartialEq)]
pub struct InformativeBlock {
    pub class_means: Vec<Vec<f64>>,
    pub cov: Vec<Vec<f64>>,
}

impl InformativeBlock {
    pub fn dim(&self) -> usize {
        self.cov.len()
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.cov[i][j])
    }

    fn validate(&self, what: &str) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if d == 0 || self.cov.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument(format!("{what}: covariance must be square")));
        }
        if self.class_means.iter().any(|m| m.len() != d) {
            return Err(Error::InvalidArgument(format!(
                "{what}: mean dimension does not match covariance dimension {d}"
            )));
        }
        let cov = self.cov_matrix();
        if (&cov - cov.transpose()).abs().max() > 1e-12 {
            return Err(Error::InvalidArgument(format!("{what}: covariance is not symmetric")));
        }
        cholesky_lower(&cov).map_err(|_| {
            Error::InvalidArgument(format!("{what}: covariance is not positive definite"))
        })
    }
}

const NESTED_BLOCK: [[f64; 3]; 3] = [[1.05, 0.48, 0.95], [0.48, 1.0, 0.20], [0.95, 0.20, 1.05]];
const MEAN_A: [f64; 6] = [0.635, 0.635, 0.635, 0.5, 0.4, 0.0];
const MEAN_B: [f64; 7] = [0.636, 0.546, 0.455, 0.364, 0.273, 0.182, 0.091];

/// Identity of size `d` with the nested 3×3 block in the last three slots
/// when `nested` is set.
fn block_cov(d: usize, nested: bool) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; d]; d];
    for (i, row) in c.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    if nested {
        let o = d - 3;
        for i in 0..3 {
            for j in 0..3 {
                c[o + i][o + j] = NESTED_BLOCK[i][j];
            }
        }
    }
    c
}

fn scaled_means(base: &[f64], task: Task) -> Vec<Vec<f64>> {
    task.mean_scales()
        .iter()
        .map(|s| base.iter().map(|m| s * m).collect())
        .collect()
}

/// The five-view synthetic benchmark: two informative views padded with
/// Gaussian noise and three pure-noise views.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub task: Task,
    pub view_a: InformativeBlock,
    pub view_b: InformativeBlock,
    /// Columns per view, informative included.
    pub view_dim: usize,
    pub noise_views: Vec<NoiseDist>,
    pub samples_per_class: usize,
}

impl SyntheticSpec {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            view_a: InformativeBlock {
                class_means: scaled_means(&MEAN_A, task),
                cov: block_cov(6, true),
            },
            view_b: InformativeBlock {
                class_means: scaled_means(&MEAN_B, task),
                cov: block_cov(7, task == Task::FourClass),
            },
            view_dim: 500,
            noise_views: vec![NoiseDist::Uniform, NoiseDist::ChiSquare1, NoiseDist::Gaussian],
            samples_per_class: 100,
        }
    }

    pub fn binary() -> Self {
        Self::new(Task::Binary)
    }

    pub fn four_class() -> Self {
        Self::new(Task::FourClass)
    }

    pub fn n_classes(&self) -> usize {
        self.task.n_classes()
    }

    pub fn n_views(&self) -> usize {
        2 + self.noise_views.len()
    }

    fn blocks(&self) -> [&InformativeBlock; 2] {
        [&self.view_a, &self.view_b]
    }

    pub fn validate(&self) -> Result<()> {
        for (b, name) in self.blocks().into_iter().zip(["view 1", "view 2"]) {
            b.validate(name)?;
            if b.class_means.len() != self.n_classes() {
                return Err(Error::InvalidArgument(format!(
                    "{name}: expected {} class means",
                    self.n_classes()
                )));
            }
            if self.view_dim < b.dim() {
                return Err(Error::InvalidArgument(format!(
                    "view_dim {} is smaller than the {} informative features of {name}",
                    self.view_dim,
                    b.dim()
                )));
            }
        }
        if self.samples_per_class == 0 {
            return Err(Error::InvalidArgument("samples_per_class must be positive".into()));
        }
        Ok(())
    }
}

struct PreparedBlock {
    means: Vec<DVector<f64>>,
    chol: DMatrix<f64>,
    /// Σ⁻¹ μ_c and ½ μ_cᵀ Σ⁻¹ μ_c, for the Bayes discriminant.
    precision_means: Vec<DVector<f64>>,
    offsets: Vec<f64>,
}

impl PreparedBlock {
    fn new(block: &InformativeBlock, what: &str) -> Result<Self> {
        let chol = block.validate(what)?;
        let means: Vec<DVector<f64>> = block
            .class_means
            .iter()
            .map(|m| DVector::from_column_slice(m))
            .collect();
        let cov = block.cov_matrix();
        let inv = cov
            .cholesky()
            .ok_or_else(|| Error::Numerical(format!("{what}: covariance factorization failed")))?
            .inverse();
        let precision_means: Vec<DVector<f64>> = means.iter().map(|m| &inv * m).collect();
        let offsets = means
            .iter()
            .zip(&precision_means)
            .map(|(m, pm)| 0.5 * m.dot(pm))
            .collect();
        Ok(Self {
            means,
            chol,
            precision_means,
            offsets,
        })
    }

    fn draw(&self, class: usize, rng: &mut Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.chol.nrows(), |_, _| StandardNormal.sample(rng));
        &self.means[class] + &self.chol * z
    }

    fn discriminants(&self, x: &DVector<f64>, acc: &mut [f64]) {
        for (c, a) in acc.iter_mut().enumerate() {
            *a += self.precision_means[c].dot(x) - self.offsets[c];
        }
    }
}

/// A synthetic benchmark instance: the settings plus the column permutation of
/// every view, fixed by the structure seed. Training and test sets drawn
/// from the same problem share column layout.
pub struct SyntheticProblem {
    spec: SyntheticSpec,
    blocks: [PreparedBlock; 2],
    /// Per view, `origin[j]`: informative index `< dim` or noise otherwise.
    origins: Vec<Vec<usize>>,
}

impl SyntheticProblem {
    pub fn new(spec: &SyntheticSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let blocks = [
            PreparedBlock::new(&spec.view_a, "view 1")?,
            PreparedBlock::new(&spec.view_b, "view 2")?,
        ];
        let mut prng = rng::substream(seed, &[rng::tag::STRUCTURE]);
        let origins = (0..spec.n_views())
            .map(|_| {
                let mut p: Vec<usize> = (0..spec.view_dim).collect();
                p.shuffle(&mut prng);
                p
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            blocks,
            origins,
        })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    fn informative_dim(&self, view: usize) -> usize {
        if view < 2 {
            self.blocks[view].chol.nrows()
        } else {
            0
        }
    }

    /// Ground-truth informative mask of each view.
    pub fn informative_masks(&self) -> Vec<BinaryChromosome> {
        (0..self.spec.n_views())
            .map(|v| {
                let d = self.informative_dim(v);
                BinaryChromosome::from_bools(
                    &self.origins[v].iter().map(|&o| o < d).collect::<Vec<_>>(),
                )
            })
            .collect()
    }

    fn noise_for(&self, view: usize) -> NoiseDist {
        if view < 2 {
            NoiseDist::Gaussian
        } else {
            self.spec.noise_views[view - 2]
        }
    }

    /// Draws one sample of class `class`, filling the requested global
    /// columns only. `needs` lists, per view, `(output position, column)`.
    fn draw_row(&self, class: usize, needs: &[Vec<(usize, usize)>], row: &mut [f64], rng: &mut Rng) {
        for (v, cols) in needs.iter().enumerate() {
            let informative = (v < 2).then(|| self.blocks[v].draw(class, rng));
            let d = self.informative_dim(v);
            let noise = self.noise_for(v);
            for &(pos, j) in cols {
                let o = self.origins[v][j];
                row[pos] = match &informative {
                    Some(x) if o < d => x[o],
                    _ => noise.sample(rng),
                };
            }
        }
    }

    fn needs(&self, cols: &[usize]) -> Result<Vec<Vec<(usize, usize)>>> {
        let dim = self.spec.view_dim;
        let mut needs = vec![Vec::new(); self.spec.n_views()];
        for (pos, &g) in cols.iter().enumerate() {
            let v = g / dim;
            if v >= needs.len() {
                return Err(Error::InvalidArgument(format!("column {g} out of range")));
            }
            needs[v].push((pos, g % dim));
        }
        Ok(needs)
    }

    /// Draws `per_class` samples of every class over the requested global
    /// columns. Rows are ordered by class.
    pub fn sample_columns(&self, cols: &[usize], per_class: usize, rng: &mut Rng) -> Result<(DMatrix<f64>, Vec<usize>)> {
        let needs = self.needs(cols)?;
        let c = self.spec.n_classes();
        let mut x = DMatrix::zeros(per_class * c, cols.len());
        let mut labels = Vec::with_capacity(per_class * c);
        let mut row = vec![0.0; cols.len()];
        for class in 0..c {
            for _ in 0..per_class {
                self.draw_row(class, &needs, &mut row, rng);
                let i = labels.len();
                for (k, v) in row.iter().enumerate() {
                    x[(i, k)] = *v;
                }
                labels.push(class);
            }
        }
        Ok((x, labels))
    }

    /// A full dataset of `per_class` samples per class.
    pub fn sample(&self, per_class: usize, rng: &mut Rng) -> Result<MultiViewDataset> {
        let dim = self.spec.view_dim;
        let all: Vec<usize> = (0..dim * self.spec.n_views()).collect();
        let (x, labels) = self.sample_columns(&all, per_class, rng)?;
        let masks = self.informative_masks();
        let views = masks
            .into_iter()
            .enumerate()
            .map(|(v, m)| {
                let name = format!("view{}", v + 1);
                let mut view = View::new(name.clone(), x.columns(v * dim, dim).into_owned());
                view.feature_names = (0..dim).map(|j| format!("v{}_{j:03}", v + 1)).collect();
                view.informative = Some(m);
                view.column_origin = Some(self.origins[v].clone());
                view
            })
            .collect();
        MultiViewDataset::new(views, labels, self.spec.n_classes())
    }

    /// Training and independent test set of the problem, each with
    /// `samples_per_class` per class.
    pub fn train_test(&self, seed: u64) -> Result<(MultiViewDataset, MultiViewDataset)> {
        let n = self.spec.samples_per_class;
        let train = self.sample(n, &mut rng::substream(seed, &[rng::tag::TRAIN]))?;
        let test = self.sample(n, &mut rng::substream(seed, &[rng::tag::TEST]))?;
        Ok((train, test))
    }
}

/// The training set of the benchmark instance for `seed`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<MultiViewDataset> {
    Ok(generate_synthetic_split(spec, seed)?.0)
}

/// Training and test set of the benchmark instance for `seed`.
pub fn generate_synthetic_split(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(MultiViewDataset, MultiViewDataset)> {
    SyntheticProblem::new(spec, seed)?.train_test(seed)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl McEstimate {
    fn from_errors(errors: usize, n: usize) -> Self {
        let p = errors as f64 / n as f64;
        Self {
            value: p,
            std_error: (p * (1.0 - p) / n as f64).sqrt(),
            n_samples: n,
        }
    }
}

/// Error rate of the Bayes classifier that sees the informative features of
/// `views` (0-based; views beyond the first two carry no class
/// information). Classes are drawn in equal numbers.
pub fn bayes_error_mc(spec: &SyntheticSpec, views: &[usize], n_samples: usize, seed: u64) -> Result<McEstimate> {
    if views.is_empty() {
        return Err(Error::InvalidArgument("view subset is empty".into()));
    }
    if let Some(&v) = views.iter().find(|&&v| v >= spec.n_views()) {
        return Err(Error::InvalidArgument(format!("view index {v} out of range")));
    }
    spec.validate()?;
    let blocks = [
        PreparedBlock::new(&spec.view_a, "view 1")?,
        PreparedBlock::new(&spec.view_b, "view 2")?,
    ];
    let used: Vec<&PreparedBlock> = (0..2).filter(|v| views.contains(v)).map(|v| &blocks[v]).collect();
    let c = spec.n_classes();
    let per_class = (n_samples / c).max(1);
    let mut rng = rng::substream(seed, &[rng::tag::NOISE]);
    let mut errors = 0;
    let mut disc = vec![0.0; c];
    for class in 0..c {
        for _ in 0..per_class {
            disc.iter_mut().for_each(|d| *d = 0.0);
            for b in &used {
                let x = b.draw(class, &mut rng);
                b.discriminants(&x, &mut disc);
            }
            // With no informative view every class ties; pick uniformly.
            let pred = if used.is_empty() {
                rng.random_range(0..c)
            } else {
                argmax(&disc)
            };
            errors += usize::from(pred != class);
        }
    }
    Ok(McEstimate::from_errors(errors, per_class * c))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Misclassification probability of a trained classifier over fresh draws
/// from the problem's distribution. `mask` is the global mask the model
/// was trained on. Samples are generated in batches, columns outside the
/// mask are never materialized.
pub fn conditional_pmc(
    model: &ClassifierModel,
    mask: &BinaryChromosome,
    problem: &SyntheticProblem,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let total = problem.spec.view_dim * problem.spec.n_views();
    if mask.len() != total {
        return Err(Error::InvalidArgument(format!(
            "mask has length {}, problem has {total} features",
            mask.len()
        )));
    }
    let cols = mask.ones_indices();
    if cols.len() != model.n_features() {
        return Err(Error::InvalidArgument(format!(
            "mask selects {} features, model expects {}",
            cols.len(),
            model.n_features()
        )));
    }
    let c = problem.spec.n_classes();
    let per_class = (n_samples / c).max(1);
    const BATCH: usize = 5000;
    let mut rng = rng::substream(seed, &[rng::tag::NOISE]);
    let (mut errors, mut done) = (0, 0);
    while done < per_class {
        let b = BATCH.min(per_class - done);
        let (x, y) = problem.sample_columns(&cols, b, &mut rng)?;
        let pred = model.predict(&x);
        errors += pred.iter().zip(&y).filter(|(p, t)| p != t).count();
        done += b;
    }
    Ok(McEstimate::from_errors(errors, per_class * c))
}

/// Pads each view with i.i.d. noise up to `targets[v]` columns and permutes
/// its columns. New columns are named `{view}_noise{k}`; `column_origin`
/// records the permutation, indices `< k_v` being the original columns.
pub fn add_noise_features(
    dataset: &MultiViewDataset,
    targets: &[usize],
    dists: &[NoiseDist],
    seed: u64,
) -> Result<MultiViewDataset> {
    if targets.len() != dataset.n_views() || dists.len() != dataset.n_views() {
        return Err(Error::InvalidArgument(format!(
            "need one target and one distribution per view ({})",
            dataset.n_views()
        )));
    }
    let n = dataset.n_samples();
    let mut out = dataset.clone();
    for (v, view) in out.views.iter_mut().enumerate() {
        let k = view.n_features();
        let t = targets[v];
        if t < k {
            return Err(Error::InvalidArgument(format!(
                "view '{}': target {t} is below its {k} features",
                view.name
            )));
        }
        let mut rng = rng::substream(seed, &[rng::tag::NOISE, v as u64]);
        let mut perm: Vec<usize> = (0..t).collect();
        perm.shuffle(&mut rng);
        let noise = DMatrix::from_fn(n, t - k, |_, _| dists[v].sample(&mut rng));
        let mut data = DMatrix::zeros(n, t);
        let mut names = Vec::with_capacity(t);
        let mut informative = view.informative.as_ref().map(|_| BinaryChromosome::zeros(t));
        for (j, &o) in perm.iter().enumerate() {
            if o < k {
                data.set_column(j, &view.data.column(o));
                names.push(view.feature_names[o].clone());
                if let (Some(new), Some(old)) = (informative.as_mut(), view.informative.as_ref()) {
                    new.set(j, old.get(o));
                }
            } else {
                data.set_column(j, &noise.column(o - k));
                names.push(format!("{}_noise{}", view.name, o - k));
            }
        }
        view.data = data;
        view.feature_names = names;
        view.informative = informative;
        view.column_origin = Some(perm);
    }
    out.validate()?;
    Ok(out)
}

/// On-disk description of a multi-view dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default = "default_id_column")]
    pub id_column: String,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    /// CSV with columns `id_column,label_column`.
    pub labels: PathBuf,
    pub views: Vec<ManifestView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestView {
    pub name: String,
    pub path: PathBuf,
    /// Ground-truth informative feature names, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub informative: Option<Vec<String>>,
}

fn default_id_column() -> String {
    "id".into()
}

fn default_label_column() -> String {
    "label".into()
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: u64, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        reason: reason.into(),
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn record_line(r: &csv::StringRecord) -> u64 {
    r.position().map_or(0, |p| p.line())
}

/// Reads `id,label`. Returns ids in file order and raw label strings.
fn read_labels(path: &Path, id_col: &str, label_col: &str) -> Result<(Vec<String>, Vec<String>)> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(path, 1, format!("missing column '{name}'")))
    };
    let (ic, lc) = (find(id_col)?, find(label_col)?);
    let (mut ids, mut labels) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record_line(&rec);
        let label = rec.get(lc).unwrap_or("");
        if label.is_empty() {
            return Err(parse_err(path, line, "empty label"));
        }
        ids.push(rec.get(ic).unwrap_or("").to_string());
        labels.push(label.to_string());
    }
    if ids.is_empty() {
        return Err(Error::Data(format!("{}: no samples", path.display())));
    }
    Ok((ids, labels))
}

/// Maps label strings to `0..C`. Integer labels sort numerically, anything
/// else lexicographically.
fn encode_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let mut names: Vec<String> = raw.to_vec();
    names.sort();
    names.dedup();
    if names.iter().all(|n| n.parse::<i64>().is_ok()) {
        names.sort_by_key(|n| n.parse::<i64>().expect("checked"));
    }
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    (raw.iter().map(|r| index[r.as_str()]).collect(), names)
}

fn read_view(path: &Path, name: &str, id_col: &str, order: &HashMap<&str, usize>) -> Result<View> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if headers.get(0) != Some(id_col) {
        return Err(parse_err(path, 1, format!("first column must be '{id_col}'")));
    }
    let feature_names: Vec<String> = headers.iter().skip(1).map(String::from).collect();
    let k = feature_names.len();
    if k == 0 {
        return Err(parse_err(path, 1, "no feature columns"));
    }
    let n = order.len();
    let mut data = DMatrix::zeros(n, k);
    let mut seen = vec![false; n];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record_line(&rec);
        let id = rec.get(0).unwrap_or("");
        let &i = order
            .get(id)
            .ok_or_else(|| parse_err(path, line, format!("sample id '{id}' has no label")))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(parse_err(path, line, format!("duplicate sample id '{id}'")));
        }
        for j in 0..k {
            let cell = rec.get(j + 1).unwrap_or("");
            data[(i, j)] = cell.parse::<f64>().map_err(|_| {
                parse_err(
                    path,
                    line,
                    format!("column '{}': '{cell}' is not a number", feature_names[j]),
                )
            })?;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        let id = order.iter().find(|(_, &i)| i == missing).map(|(id, _)| *id).unwrap_or("?");
        return Err(Error::Data(format!(
            "{}: sample id '{id}' is missing from view '{name}'",
            path.display()
        )));
    }
    Ok(View {
        name: name.to_string(),
        data,
        feature_names,
        informative: None,
        column_origin: None,
    })
}

/// Loads a dataset from a TOML manifest. Relative paths resolve against
/// the manifest's directory; rows follow the order of the labels file.
pub fn load_multiview_csv(manifest_path: &Path) -> Result<MultiViewDataset> {
    let text = read_to_string(manifest_path)?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.to_path_buf(),
        line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
        reason: e.message().to_string(),
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let (ids, raw_labels) = read_labels(&base.join(&manifest.labels), &manifest.id_column, &manifest.label_column)?;
    let mut order = HashMap::new();
    for (i, id) in ids.iter().enumerate() {
        if order.insert(id.as_str(), i).is_some() {
            return Err(Error::Data(format!("duplicate sample id '{id}' in labels")));
        }
    }
    let (labels, class_names) = encode_labels(&raw_labels);
    if manifest.views.is_empty() {
        return Err(Error::Data(format!("{}: manifest lists no views", manifest_path.display())));
    }
    let mut views = Vec::with_capacity(manifest.views.len());
    for mv in &manifest.views {
        let mut view = read_view(&base.join(&mv.path), &mv.name, &manifest.id_column, &order)?;
        if let Some(names) = &mv.informative {
            let mut m = BinaryChromosome::zeros(view.n_features());
            for n in names {
                let j = view.feature_names.iter().position(|f| f == n).ok_or_else(|| {
                    Error::Data(format!("view '{}': informative feature '{n}' not found", mv.name))
                })?;
                m.set(j, true);
            }
            view.informative = Some(m);
        }
        views.push(view);
    }
    let ds = MultiViewDataset {
        n_classes: class_names.len(),
        views,
        labels,
        sample_ids: ids,
        class_names,
    };
    ds.validate()?;
    Ok(ds)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the dataset as `{prefix}_{view}.csv` files, `{prefix}_labels.csv`
/// and the manifest `{prefix}.toml` in `dir`. Returns the manifest path.
/// Values are written in shortest round-trip form, so loading reproduces
/// the data exactly.
pub fn write_multiview_csv(dataset: &MultiViewDataset, dir: &Path, prefix: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut views = Vec::new();
    for view in &dataset.views {
        let file = format!("{prefix}_{}.csv", view.name);
        let path = dir.join(&file);
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let mut header = vec!["id".to_string()];
        header.extend(view.feature_names.iter().cloned());
        let to_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
        w.write_record(&header).map_err(to_err)?;
        for i in 0..dataset.n_samples() {
            let mut row = vec![dataset.sample_ids[i].clone()];
            row.extend(view.data.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        views.push(ManifestView {
            name: view.name.clone(),
            path: file.into(),
            informative: view.informative.as_ref().map(|m| {
                m.ones_indices().into_iter().map(|j| view.feature_names[j].clone()).collect()
            }),
        });
    }
    let labels_file = format!("{prefix}_labels.csv");
    let mut labels = String::from("id,label\n");
    for (id, &y) in dataset.sample_ids.iter().zip(&dataset.labels) {
        labels.push_str(&format!("{id},{}\n", dataset.class_names[y]));
    }
    write_file(&dir.join(&labels_file), &labels)?;
    let manifest = Manifest {
        id_column: "id".into(),
        label_column: "label".into(),
        labels: labels_file.into(),
        views,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Data(format!("manifest: {e}")))?;
    let path = dir.join(format!("{prefix}.toml"));
    write_file(&path, &text)?;
    Ok(path)
}

/// Reads a mask file: one line per view, `name: feat_a,feat_b,...`. Views
/// not listed select nothing.
pub fn read_mask_file(path: &Path, dataset: &MultiViewDataset) -> Result<BinaryChromosome> {
    let text = read_to_string(path)?;
    let offsets = dataset.view_offsets();
    let mut mask = BinaryChromosome::zeros(dataset.n_features());
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, rest) = line
            .split_once(':')
            .ok_or_else(|| parse_err(path, ln as u64 + 1, "expected 'view: features'"))?;
        let v = dataset
            .view_index(name.trim())
            .ok_or_else(|| parse_err(path, ln as u64 + 1, format!("unknown view '{}'", name.trim())))?;
        let lookup: BTreeMap<&str, usize> = dataset.views[v]
            .feature_names
            .iter()
            .enumerate()
            .map(|(j, f)| (f.as_str(), j))
            .collect();
        for feat in rest.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            let j = lookup.get(feat).ok_or_else(|| {
                parse_err(path, ln as u64 + 1, format!("view '{}' has no feature '{feat}'", name.trim()))
            })?;
            mask.set(offsets[v] + j, true);
        }
    }
    Ok(mask)
}

/// Inverse of [`read_mask_file`]; every view gets a line, possibly empty.
pub fn format_mask(mask: &BinaryChromosome, dataset: &MultiViewDataset) -> Result<String> {
    let parts = dataset.split_mask(mask)?;
    let mut s = String::new();
    for (view, part) in dataset.views.iter().zip(parts) {
        let names: Vec<&str> = part.ones_indices().into_iter().map(|j| view.feature_names[j].as_str()).collect();
        s.push_str(&format!("{}: {}\n", view.name, names.join(",")));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn small_spec(task: Task) -> SyntheticSpec {
        SyntheticSpec {
            view_dim: 20,
            ..SyntheticSpec::new(task)
        }
    }

    #[test]
    fn shapes_match_the_benchmark() {
        let (train, test) = generate_synthetic_split(&SyntheticSpec::binary(), 0).unwrap();
        assert_eq!(train.n_samples(), 200);
        assert_eq!(train.n_views(), 5);
        assert!(train.views.iter().all(|v| v.data.shape() == (200, 500)));
        assert_eq!(test.n_samples(), 200);
        train.check_compatible(&test).unwrap();
        let four = generate_synthetic(&small_spec(Task::FourClass), 0).unwrap();
        assert_eq!(four.n_samples(), 400);
        assert_eq!(four.n_classes, 4);
    }

    #[test]
    fn informative_masks_count_and_follow_permutation() {
        let ds = generate_synthetic(&SyntheticSpec::binary(), 3).unwrap();
        let counts: Vec<usize> = ds.views.iter().map(|v| v.informative.as_ref().unwrap().count_ones()).collect();
        assert_eq!(counts, vec![6, 7, 0, 0, 0]);
        let v1 = &ds.views[0];
        let origin = v1.column_origin.as_ref().unwrap();
        for j in v1.informative.as_ref().unwrap().ones_indices() {
            assert!(origin[j] < 6);
        }
        // Class-0 means of informative columns, placed back in order.
        let mut means = [0.0; 6];
        for j in v1.informative.as_ref().unwrap().ones_indices() {
            let m: f64 = (0..200).filter(|&i| ds.labels[i] == 0).map(|i| v1.data[(i, j)]).sum::<f64>() / 100.0;
            means[origin[j]] = m;
        }
        for (m, t) in means.iter().zip(MEAN_A) {
            assert!((m - t).abs() <= 0.2, "{m} vs {t}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = small_spec(Task::Binary);
        assert_eq!(generate_synthetic(&spec, 9).unwrap(), generate_synthetic(&spec, 9).unwrap());
        assert_ne!(generate_synthetic(&spec, 9).unwrap(), generate_synthetic(&spec, 10).unwrap());
    }

    #[test]
    fn sample_covariance_converges() {
        let spec = SyntheticSpec::four_class();
        let problem = SyntheticProblem::new(&spec, 1).unwrap();
        let target = DMatrix::from_fn(3, 3, |i, j| NESTED_BLOCK[i][j]);
        let dist = |n: usize| {
            let mut r = rng::from_seed(5);
            let xs: Vec<DVector<f64>> = (0..n).map(|_| problem.blocks[0].draw(0, &mut r)).collect();
            let mean = xs.iter().fold(DVector::zeros(6), |a, x| a + x) / n as f64;
            let mut cov = DMatrix::zeros(6, 6);
            for x in &xs {
                let d = x - &mean;
                cov += &d * d.transpose();
            }
            cov /= (n - 1) as f64;
            (cov.view((3, 3), (3, 3)) - &target).norm()
        };
        let (small, large) = (dist(100), dist(10_000));
        assert!(large < small, "{large} !< {small}");
        assert!(large < 0.1);
    }

    #[test]
    fn rejects_bad_covariance() {
        let mut spec = SyntheticSpec::binary();
        spec.view_a.cov[3][5] = 2.0;
        spec.view_a.cov[5][3] = 2.0;
        assert!(SyntheticProblem::new(&spec, 0).is_err());
        let mut spec = SyntheticSpec::binary();
        spec.view_b.class_means[0].pop();
        assert!(spec.validate().is_err());
    }

    /// For two classes at ±μ with shared Σ the Bayes error is Φ(-√(μᵀΣ⁻¹μ)).
    fn closed_form_binary(blocks: &[&InformativeBlock]) -> f64 {
        let mut d2 = 0.0;
        for b in blocks {
            let mu = DVector::from_column_slice(&b.class_means[0]);
            let inv = b.cov_matrix().try_inverse().unwrap();
            d2 += mu.dot(&(inv * &mu));
        }
        Normal::new(0.0, 1.0).unwrap().cdf(-d2.sqrt())
    }

    #[test]
    fn bayes_mc_agrees_with_closed_form() {
        let spec = SyntheticSpec::binary();
        for views in [vec![0], vec![1], vec![0, 1]] {
            let blocks: Vec<&InformativeBlock> = views.iter().map(|&v| spec.blocks()[v]).collect();
            let exact = closed_form_binary(&blocks);
            let mc = bayes_error_mc(&spec, &views, 200_000, 11).unwrap();
            assert!((mc.value - exact).abs() < 4.0 * mc.std_error + 1e-4, "{views:?}: {} vs {exact}", mc.value);
        }
        assert!(bayes_error_mc(&spec, &[], 10, 0).is_err());
        let noise = bayes_error_mc(&spec, &[2], 20_000, 0).unwrap();
        assert!((noise.value - 0.5).abs() < 0.02);
    }

    #[test]
    fn bayes_error_decreases_with_views() {
        for spec in [SyntheticSpec::binary(), SyntheticSpec::four_class()] {
            let a = bayes_error_mc(&spec, &[0], 100_000, 1).unwrap().value;
            let ab = bayes_error_mc(&spec, &[0, 1], 100_000, 1).unwrap().value;
            assert!(ab <= a);
        }
    }

    #[test]
    fn noise_augmentation_pads_and_records_permutation() {
        let x = DMatrix::from_fn(10, 5, |i, j| (i * 5 + j) as f64);
        let mut view = View::new("clin", x.clone());
        view.informative = Some(BinaryChromosome::from_indices(5, [0, 2]));
        let ds = MultiViewDataset::new(vec![view], (0..10).map(|i| i % 2).collect(), 2).unwrap();
        let out = add_noise_features(&ds, &[300], &[NoiseDist::ChiSquare1], 4).unwrap();
        let v = &out.views[0];
        assert_eq!(v.n_features(), 300);
        assert_eq!(v.feature_names.iter().filter(|n| n.contains("_noise")).count(), 295);
        assert_eq!(v.informative.as_ref().unwrap().count_ones(), 2);
        let origin = v.column_origin.as_ref().unwrap();
        for (j, &o) in origin.iter().enumerate() {
            if o < 5 {
                assert_eq!(v.data.column(j), x.column(o));
            } else {
                assert!(v.data.column(j).iter().all(|&z| z >= 0.0));
            }
        }
        let same = add_noise_features(&ds, &[5], &[NoiseDist::Gaussian], 4).unwrap();
        let mut cols: Vec<String> = same.views[0].feature_names.clone();
        cols.sort();
        assert_eq!(cols, ds.views[0].feature_names);
        assert!(add_noise_features(&ds, &[4], &[NoiseDist::Gaussian], 4).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_synthetic(&small_spec(Task::FourClass), 2).unwrap();
        let manifest = write_multiview_csv(&ds, dir.path(), "train").unwrap();
        let back = load_multiview_csv(&manifest).unwrap();
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.sample_ids, ds.sample_ids);
        for (a, b) in ds.views.iter().zip(&back.views) {
            assert_eq!(a.data, b.data);
            assert_eq!(a.feature_names, b.feature_names);
            assert_eq!(a.informative, b.informative);
        }
    }

    #[test]
    fn mask_file_round_trip() {
        let ds = generate_synthetic(&small_spec(Task::Binary), 0).unwrap();
        let mask = BinaryChromosome::from_indices(ds.n_features(), [1, 5, 22, 99]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.txt");
        fs::write(&p, format_mask(&mask, &ds).unwrap()).unwrap();
        assert_eq!(read_mask_file(&p, &ds).unwrap(), mask);
        fs::write(&p, "view9: x\n").unwrap();
        assert!(read_mask_file(&p, &ds).is_err());
    }
}
