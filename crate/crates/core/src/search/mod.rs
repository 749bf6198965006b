//! The two-stage multi-niche search.
//!
//! Every niche first runs intra-view selection ([`ivfs`]) on each view,
//! producing six candidate masks per view, then between-view selection
//! ([`bvfs`]) over integer chromosomes that pick one candidate (or none) per
//! view. Niches evolve intra-view populations in lockstep so migration can
//! happen at generation boundaries without any blocking protocol; the
//! result is the same as a set of workers meeting at a barrier.

use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::MultiViewDataset;
use crate::eval::{make_fold_plan, EvalOptions, FoldPlan};
use crate::moo::{crowded_cmp, Fitness, Ranked};
use crate::variation::{BinaryChromosome, Genome, IntegerChromosome, VariationConfig, SOLUTIONS_PER_VIEW};
use crate::{Error, Result};

pub mod bvfs;
pub mod ivfs;

pub use bvfs::{decode, run_bvfs, BvfsResult};
pub use ivfs::{run_ivfs, run_ivfs_niches, IvfsResult};

/// Sets one uniformly chosen gene when the mask is empty.
pub fn repair<R: Rng + ?Sized>(mut chromosome: BinaryChromosome, rng: &mut R) -> BinaryChromosome {
    if chromosome.count_ones() == 0 && !chromosome.is_empty() {
        let i = rng.random_range(0..chromosome.len());
        chromosome.set(i, true);
    }
    chromosome
}

/// Gives one uniformly chosen view a uniformly chosen nonzero solution
/// index when every view is excluded.
pub fn repair_integer<R: Rng + ?Sized>(mut chromosome: IntegerChromosome, rng: &mut R) -> IntegerChromosome {
    if chromosome.genes.iter().all(|&g| g == 0) && !chromosome.genes.is_empty() {
        let i = rng.random_range(0..chromosome.genes.len());
        chromosome.genes[i] = rng.random_range(1..SOLUTIONS_PER_VIEW as u8);
    }
    chromosome
}

/// Mean Jaccard index over all unordered pairs. Two empty masks count as
/// identical.
pub fn jaccard_similarity(population: &[BinaryChromosome]) -> Result<f64> {
    let n = population.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "similarity needs at least 2 individuals, got {n}"
        )));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let union = population[i].union_count(&population[j]);
            sum += if union == 0 {
                1.0
            } else {
                population[i].intersection_count(&population[j]) as f64 / union as f64
            };
        }
    }
    Ok(sum / (n * (n - 1) / 2) as f64)
}

/// Duplicate elimination. When the population's mean similarity exceeds
/// `threshold`, every repeated copy of a mask (all but its first
/// occurrence) is replaced by a new individual: a uniformly drawn parent,
/// crossed with a second one with probability `repair_prob`, then mutated
/// with probability `repair_prob`, then repaired.
///
/// Returns the new population and the positions that were replaced.
pub fn diversify<R: Rng + ?Sized>(
    population: &[BinaryChromosome],
    threshold: f64,
    repair_prob: f64,
    variation: &VariationConfig,
    rng: &mut R,
) -> Result<(Vec<BinaryChromosome>, Vec<usize>)> {
    let mut out = population.to_vec();
    if population.len() < 2 || jaccard_similarity(population)? <= threshold {
        return Ok((out, Vec::new()));
    }
    let mut seen = std::collections::HashSet::new();
    let duplicates: Vec<usize> = (0..population.len())
        .filter(|&i| !seen.insert(&population[i]))
        .collect();
    for &i in &duplicates {
        let mut child = population.choose(rng).expect("non-empty").clone();
        if rng.random_bool(repair_prob) {
            let other = population.choose(rng).expect("non-empty");
            child = child.crossover(other, variation, rng)?;
        }
        if rng.random_bool(repair_prob) {
            child = child.mutate(variation, rng);
        }
        out[i] = repair(child, rng);
    }
    Ok((out, duplicates))
}

/// Number of individuals a niche of `size` sends per migration.
pub fn migrant_count(size: usize, fraction: f64) -> usize {
    (size as f64 * fraction).round() as usize
}

/// Ring migration. Each niche's best `fraction` (front rank, then crowding
/// distance) leaves for the next niche, and the arrivals take the slots
/// the emigrants vacated, so the multiset of individuals over all niches is
/// unchanged. Rank and crowding values of the result are stale; re-rank
/// before using them. Returns the number of migrants per niche.
pub fn migrate<G: Clone>(niches: &mut [Vec<Ranked<G>>], fraction: f64) -> Result<usize> {
    if niches.len() < 2 {
        return Ok(0);
    }
    let size = niches[0].len();
    if niches.iter().any(|n| n.len() != size) {
        return Err(Error::InvalidArgument("niche populations differ in size".into()));
    }
    let m = migrant_count(size, fraction).min(size);
    if m == 0 {
        return Ok(0);
    }
    let slots: Vec<Vec<usize>> = niches
        .iter()
        .map(|pop| {
            let mut order: Vec<usize> = (0..pop.len()).collect();
            order.sort_by(|&a, &b| crowded_cmp(&pop[a], &pop[b]).then(a.cmp(&b)));
            order.truncate(m);
            order
        })
        .collect();
    let emigrants: Vec<Vec<Ranked<G>>> = niches
        .iter()
        .zip(&slots)
        .map(|(pop, s)| s.iter().map(|&i| pop[i].clone()).collect())
        .collect();
    let n = niches.len();
    for (from, group) in emigrants.into_iter().enumerate() {
        let to = (from + 1) % n;
        for (&slot, ind) in slots[to].iter().zip(group) {
            niches[to][slot] = ind;
        }
    }
    Ok(m)
}

/// Population/generation overrides of one stage; `None` keeps the
/// size-dependent default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub pop: Option<usize>,
    pub gen: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Published settings: six niches, size-dependent schedules.
    Paper,
    /// Reduced budget: two niches, population 50, 100 generations.
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            _ => Err(Error::config("preset", format!("unknown preset '{s}', expected paper or desk"))),
        }
    }
}

/// Everything that drives a search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NicheConfig {
    pub n_niches: usize,
    /// Generations between migrations; `None` means `max(1, round(0.05 · gen))`.
    pub migration_interval: Option<usize>,
    pub migration_fraction: f64,
    pub ivfs: Schedule,
    pub bvfs: Schedule,
    pub ivfs_variation: VariationConfig,
    pub bvfs_variation: VariationConfig,
    pub similarity_threshold: f64,
    pub repair_prob: f64,
    /// Bernoulli rate of the initial intra-view population. `None` draws
    /// each individual's rate log-uniformly between `1/k_v` and 0.5.
    pub init_density: Option<f64>,
    pub eval: EvalOptions,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub seed: u64,
}

impl Default for NicheConfig {
    fn default() -> Self {
        Self::preset(Preset::Paper)
    }
}

impl NicheConfig {
    pub fn preset(preset: Preset) -> Self {
        let (n_niches, ivfs, bvfs) = match preset {
            Preset::Paper => (6, Schedule::default(), Schedule::default()),
            Preset::Desk => {
                let s = Schedule {
                    pop: Some(50),
                    gen: Some(100),
                };
                (2, s, s)
            }
        };
        Self {
            n_niches,
            migration_interval: None,
            migration_fraction: 0.25,
            ivfs,
            bvfs,
            ivfs_variation: VariationConfig::default(),
            bvfs_variation: VariationConfig {
                crossover_prob: 0.5,
                ..VariationConfig::default()
            },
            similarity_threshold: 0.8,
            repair_prob: 0.9,
            init_density: None,
            eval: EvalOptions::default(),
            threads: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_niches == 0 {
            return Err(Error::config("n_niches", "must be at least 1"));
        }
        if !(self.migration_fraction > 0.0 && self.migration_fraction < 1.0) {
            return Err(Error::config("migration_fraction", "must lie in (0, 1)"));
        }
        if self.migration_interval == Some(0) {
            return Err(Error::config("migration_interval", "must be at least 1"));
        }
        for (name, v) in [
            ("similarity_threshold", self.similarity_threshold),
            ("repair_prob", self.repair_prob),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(name, "must lie in (0, 1)"));
            }
        }
        if let Some(q) = self.init_density {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::config("init_density", "must lie in (0, 1]"));
            }
        }
        for (name, s) in [("ivfs", self.ivfs), ("bvfs", self.bvfs)] {
            if s.pop.is_some_and(|p| p < 2) {
                return Err(Error::config(&format!("{name}.pop"), "must be at least 2"));
            }
            if s.gen == Some(0) {
                return Err(Error::config(&format!("{name}.gen"), "must be at least 1"));
            }
        }
        self.ivfs_variation
            .validate()
            .map_err(|e| prefix_field(e, "ivfs_variation"))?;
        self.bvfs_variation
            .validate()
            .map_err(|e| prefix_field(e, "bvfs_variation"))?;
        if self.eval.n_folds < 2 {
            return Err(Error::config("eval.n_folds", "must be at least 2"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be at least 1"));
        }
        Ok(())
    }

    /// `(pop, gen)` of intra-view selection on a view with `k_v` features.
    pub fn ivfs_schedule(&self, k_v: usize) -> (usize, usize) {
        let (pop, gen) = if k_v < 100 { (100, 500) } else { (200, 1000) };
        (self.ivfs.pop.unwrap_or(pop), self.ivfs.gen.unwrap_or(gen))
    }

    /// `(pop, gen)` of between-view selection over `n_views` views.
    pub fn bvfs_schedule(&self, n_views: usize) -> (usize, usize) {
        let (pop, gen) = if n_views > 5 { (100, 600) } else { (50, 300) };
        (self.bvfs.pop.unwrap_or(pop), self.bvfs.gen.unwrap_or(gen))
    }

    pub fn migration_interval_for(&self, gen: usize) -> usize {
        self.migration_interval
            .unwrap_or_else(|| ((0.05 * gen as f64).round() as usize).max(1))
    }
}

fn prefix_field(e: Error, prefix: &str) -> Error {
    match e {
        Error::Config { field, reason } => Error::Config {
            field: format!("{prefix}.{field}"),
            reason,
        },
        other => other,
    }
}

/// The six candidate masks one niche produced for one view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewSolutionSet {
    masks: Vec<BinaryChromosome>,
}

impl ViewSolutionSet {
    /// `candidates` are `z_1..z_5`; `z_0` is added as the empty mask.
    pub fn new(candidates: [BinaryChromosome; SOLUTIONS_PER_VIEW - 1]) -> Result<Self> {
        let len = candidates[0].len();
        if candidates.iter().any(|c| c.len() != len || c.count_ones() == 0) {
            return Err(Error::InvalidArgument(
                "candidate masks must share a length and select at least one feature".into(),
            ));
        }
        let mut masks = vec![BinaryChromosome::zeros(len)];
        masks.extend(candidates);
        Ok(Self { masks })
    }

    pub fn masks(&self) -> &[BinaryChromosome] {
        &self.masks
    }

    pub fn get(&self, index: usize) -> Option<&BinaryChromosome> {
        self.masks.get(index)
    }

    pub fn n_features(&self) -> usize {
        self.masks[0].len()
    }
}

/// Population summary after one generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_error: f64,
    pub mean_error: f64,
    /// Mean pairwise Jaccard index; `None` for integer populations.
    pub similarity: Option<f64>,
}

pub(crate) fn generation_stats<G>(
    generation: usize,
    pop: &[Ranked<G>],
    similarity: Option<f64>,
) -> GenerationStats {
    let errors = pop.iter().map(|r| r.fitness.error);
    GenerationStats {
        generation,
        best_error: errors.clone().fold(f64::INFINITY, f64::min),
        mean_error: errors.sum::<f64>() / pop.len() as f64,
        similarity,
    }
}

/// Best individual by error, then feature count, then position.
pub(crate) fn select_best<G>(pop: &[Ranked<G>]) -> &Ranked<G> {
    pop.iter()
        .min_by(|a, b| a.fitness.accuracy_cmp(&b.fitness))
        .expect("non-empty population")
}

/// One niche's complete outcome.
#[derive(Debug, Clone)]
pub struct NicheResult {
    pub niche: usize,
    pub solution_sets: Vec<ViewSolutionSet>,
    pub genes: IntegerChromosome,
    pub mask: BinaryChromosome,
    pub fitness: Fitness,
    pub selected_per_view: Vec<usize>,
    pub bvfs_trajectory: Vec<GenerationStats>,
}

#[derive(Debug, Clone, Default)]
pub struct Timings {
    pub ivfs_secs: Vec<f64>,
    pub bvfs_secs: f64,
    pub total_secs: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub best_niche: usize,
    pub best_mask: BinaryChromosome,
    pub best_fitness: Fitness,
    pub niches: Vec<NicheResult>,
    /// `[view][niche]` per-generation intra-view statistics.
    pub ivfs_trajectories: Vec<Vec<Vec<GenerationStats>>>,
    pub timings: Timings,
    /// Distinct masks trained, over all evaluators.
    pub evaluations: usize,
    /// Smallest feature count of any evaluated mask.
    pub min_features_evaluated: usize,
}

fn niche_error(niche: usize, phase: &str, e: Error) -> Error {
    Error::Niche {
        niche,
        phase: phase.to_string(),
        source: Box::new(e),
    }
}

/// Runs the full search on a dataset and returns the winning global mask
/// with the per-niche report. The fold plan is derived from `cfg.seed` and
/// shared by every evaluation of the run.
pub fn run_mmfs_ga(dataset: &MultiViewDataset, cfg: &NicheConfig) -> Result<RunReport> {
    cfg.validate()?;
    dataset.validate()?;
    match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| run_inner(dataset, cfg)),
        None => run_inner(dataset, cfg),
    }
}

fn run_inner(dataset: &MultiViewDataset, cfg: &NicheConfig) -> Result<RunReport> {
    let start = Instant::now();
    let plan: FoldPlan = make_fold_plan(&dataset.labels, cfg.eval.n_folds, cfg.seed)?;
    let niche_ids: Vec<usize> = (0..cfg.n_niches).collect();

    let mut per_niche_sets: Vec<Vec<ViewSolutionSet>> = vec![Vec::new(); cfg.n_niches];
    let mut ivfs_trajectories = Vec::with_capacity(dataset.n_views());
    let mut timings = Timings::default();
    let mut evaluations = 0;
    let mut min_features = usize::MAX;
    for v in 0..dataset.n_views() {
        let t = Instant::now();
        let out = run_ivfs_niches(dataset, v, &plan, cfg, &niche_ids).map_err(|e| match e {
            Error::Niche { .. } => e,
            e => niche_error(0, &format!("intra-view selection, view '{}'", dataset.views[v].name), e),
        })?;
        evaluations += out.evaluations;
        min_features = min_features.min(out.min_features_evaluated);
        let mut traj = Vec::with_capacity(cfg.n_niches);
        for (n, r) in out.niches.into_iter().enumerate() {
            per_niche_sets[n].push(r.solution_set);
            traj.push(r.trajectory);
        }
        ivfs_trajectories.push(traj);
        timings.ivfs_secs.push(t.elapsed().as_secs_f64());
    }

    let t = Instant::now();
    use rayon::prelude::*;
    let bv: Vec<BvfsResult> = per_niche_sets
        .par_iter()
        .enumerate()
        .map(|(n, sets)| {
            run_bvfs(dataset, sets, &plan, cfg, n).map_err(|e| niche_error(n, "between-view selection", e))
        })
        .collect::<Result<_>>()?;
    timings.bvfs_secs = t.elapsed().as_secs_f64();

    let mut niches = Vec::with_capacity(cfg.n_niches);
    for (n, (r, sets)) in bv.into_iter().zip(per_niche_sets).enumerate() {
        evaluations += r.evaluations;
        min_features = min_features.min(r.min_features_evaluated);
        let selected_per_view = dataset.split_mask(&r.mask)?.iter().map(|m| m.count_ones()).collect();
        niches.push(NicheResult {
            niche: n,
            solution_sets: sets,
            genes: r.genes,
            mask: r.mask,
            fitness: r.fitness,
            selected_per_view,
            bvfs_trajectory: r.trajectory,
        });
    }
    // Best error, then fewer features, then lowest niche id.
    let best = niches
        .iter()
        .min_by(|a, b| a.fitness.accuracy_cmp(&b.fitness).then(a.niche.cmp(&b.niche)))
        .expect("at least one niche");
    timings.total_secs = start.elapsed().as_secs_f64();
    Ok(RunReport {
        best_niche: best.niche,
        best_mask: best.mask.clone(),
        best_fitness: best.fitness,
        niches,
        ivfs_trajectories,
        timings,
        evaluations,
        min_features_evaluated: min_features,
    })
}
