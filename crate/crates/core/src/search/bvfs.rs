//! Between-view selection: integer NSGA-II choosing one candidate mask per
//! view, or none.

use super::{generation_stats, select_best, GenerationStats, NicheConfig, ViewSolutionSet};
use crate::data::MultiViewDataset;
use crate::eval::{CvEvaluator, FoldPlan};
use crate::moo::{environmental_selection, rank_population, Fitness};
use crate::rng::{self, tag};
use crate::variation::{crossover_or_mutation, BinaryChromosome, Genome, IntegerChromosome, SOLUTIONS_PER_VIEW};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct BvfsResult {
    pub genes: IntegerChromosome,
    /// Global mask over all features.
    pub mask: BinaryChromosome,
    pub fitness: Fitness,
    pub trajectory: Vec<GenerationStats>,
    pub evaluations: usize,
    pub min_features_evaluated: usize,
}

/// Concatenates, view by view, the candidate mask each gene points at.
/// Gene 0 excludes its view. An all-zero chromosome decodes as if the
/// first view's gene were 1, so the result always selects something.
pub fn decode(chromosome: &IntegerChromosome, sets: &[ViewSolutionSet]) -> Result<BinaryChromosome> {
    if chromosome.len() != sets.len() {
        return Err(Error::InvalidArgument(format!(
            "chromosome has {} genes for {} views",
            chromosome.len(),
            sets.len()
        )));
    }
    if let Some(&g) = chromosome.genes.iter().find(|&&g| g as usize >= SOLUTIONS_PER_VIEW) {
        return Err(Error::InvalidArgument(format!(
            "gene {g} outside 0..{SOLUTIONS_PER_VIEW}"
        )));
    }
    let all_zero = chromosome.genes.iter().all(|&g| g == 0);
    let parts: Vec<&BinaryChromosome> = chromosome
        .genes
        .iter()
        .zip(sets)
        .enumerate()
        .map(|(v, (&g, set))| {
            let g = if all_zero && v == 0 { 1 } else { g as usize };
            &set.masks()[g]
        })
        .collect();
    Ok(BinaryChromosome::concat(parts))
}

fn score(
    ev: &CvEvaluator,
    sets: &[ViewSolutionSet],
    genomes: Vec<IntegerChromosome>,
) -> Result<Vec<(IntegerChromosome, Fitness)>> {
    let local = genomes
        .iter()
        .map(|c| ev.project(&decode(c, sets)?))
        .collect::<Result<Vec<_>>>()?;
    let fit = ev.evaluate_many(&local.iter().collect::<Vec<_>>())?;
    Ok(genomes.into_iter().zip(fit).collect())
}

/// Runs between-view selection for one niche over its solution sets and
/// returns the final population's most accurate individual (fewer features
/// on ties).
pub fn run_bvfs(
    dataset: &MultiViewDataset,
    sets: &[ViewSolutionSet],
    plan: &FoldPlan,
    cfg: &NicheConfig,
    niche_id: usize,
) -> Result<BvfsResult> {
    if sets.len() != dataset.n_views() {
        return Err(Error::InvalidArgument(format!(
            "{} solution sets for {} views",
            sets.len(),
            dataset.n_views()
        )));
    }
    for (s, v) in sets.iter().zip(&dataset.views) {
        if s.n_features() != v.n_features() {
            return Err(Error::InvalidArgument(format!(
                "solution set for view '{}' has the wrong length",
                v.name
            )));
        }
    }
    // Only columns that some candidate selects can ever be evaluated.
    let mut universe = Vec::new();
    for (s, offset) in sets.iter().zip(dataset.view_offsets()) {
        let mut any = BinaryChromosome::zeros(s.n_features());
        for m in s.masks() {
            for j in m.ones_indices() {
                any.set(j, true);
            }
        }
        universe.extend(any.ones_indices().into_iter().map(|j| offset + j));
    }
    let ev = CvEvaluator::new(dataset, universe, plan, &cfg.eval)?;
    let (pop_size, gen) = cfg.bvfs_schedule(dataset.n_views());
    let var = &cfg.bvfs_variation;
    let mut rng = rng::substream(cfg.seed, &[tag::BVFS, niche_id as u64]);

    let init: Vec<IntegerChromosome> = (0..pop_size)
        .map(|_| IntegerChromosome::random(sets.len(), &mut rng).repair(&mut rng))
        .collect();
    let mut pop = rank_population(score(&ev, sets, init)?)?;
    let mut trajectory = Vec::with_capacity(gen);
    for g in 1..=gen {
        let combined = crossover_or_mutation(&pop, var, &mut rng)?;
        pop = environmental_selection(score(&ev, sets, combined)?, pop_size)?;
        trajectory.push(generation_stats(g, &pop, None));
    }
    let best = select_best(&pop);
    Ok(BvfsResult {
        genes: best.genome.clone(),
        mask: decode(&best.genome, sets)?,
        fitness: best.fitness,
        trajectory,
        evaluations: ev.evaluations(),
        min_features_evaluated: ev.min_features_evaluated(),
    })
}
