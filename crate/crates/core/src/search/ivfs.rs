//! Intra-view selection: binary NSGA-II on one view, run for several
//! niches in lockstep.

use rand::Rng;
use rayon::prelude::*;

use super::{diversify, generation_stats, jaccard_similarity, migrate, select_best, GenerationStats, NicheConfig, ViewSolutionSet};
use crate::data::MultiViewDataset;
use crate::eval::{CvEvaluator, FoldPlan};
use crate::moo::{environmental_selection, rank_population, Fitness, Ranked};
use crate::rng::{self, tag};
use crate::variation::{crossover_or_mutation, BinaryChromosome};
use crate::{Error, Result};

/// Outcome of one niche on one view.
#[derive(Debug, Clone)]
pub struct IvfsNicheResult {
    pub niche: usize,
    pub solution_set: ViewSolutionSet,
    pub trajectory: Vec<GenerationStats>,
}

#[derive(Debug, Clone)]
pub struct IvfsResult {
    pub niches: Vec<IvfsNicheResult>,
    pub evaluations: usize,
    pub min_features_evaluated: usize,
}

struct NicheState {
    id: usize,
    rng: rng::Rng,
    pop: Vec<Ranked<BinaryChromosome>>,
    snapshots: [Option<BinaryChromosome>; 3],
    trajectory: Vec<GenerationStats>,
}

/// Generations `⌈0.3·gen⌉, ⌈0.6·gen⌉, ⌈0.9·gen⌉` at which the best mask
/// is recorded.
pub fn snapshot_generations(gen: usize) -> [usize; 3] {
    [(3 * gen).div_ceil(10), (6 * gen).div_ceil(10), (9 * gen).div_ceil(10)]
}

/// Features selected by more than half of the population. Falls back to
/// the single most frequent feature (lowest index on ties) so the result
/// is never empty.
pub fn frequent_features(pop: &[BinaryChromosome]) -> BinaryChromosome {
    let len = pop[0].len();
    let mut counts = vec![0usize; len];
    for m in pop {
        for j in m.ones_indices() {
            counts[j] += 1;
        }
    }
    let mask = BinaryChromosome::from_indices(len, (0..len).filter(|&j| 2 * counts[j] > pop.len()));
    if mask.count_ones() > 0 {
        return mask;
    }
    let top = (0..len).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap_or(0);
    BinaryChromosome::from_indices(len, [top])
}

fn score(ev: &CvEvaluator, genomes: Vec<BinaryChromosome>) -> Result<Vec<(BinaryChromosome, Fitness)>> {
    let refs: Vec<&BinaryChromosome> = genomes.iter().collect();
    let fit = ev.evaluate_many(&refs)?;
    Ok(genomes.into_iter().zip(fit).collect())
}

fn initial_population(k: usize, pop: usize, cfg: &NicheConfig, rng: &mut rng::Rng) -> Vec<BinaryChromosome> {
    let lo = (1.0 / k as f64).min(0.5).ln();
    let hi = 0.5f64.ln();
    (0..pop)
        .map(|_| {
            let q = cfg
                .init_density
                .unwrap_or_else(|| if hi > lo { rng.random_range(lo..hi).exp() } else { 0.5 });
            super::repair(BinaryChromosome::random(k, q, rng), rng)
        })
        .collect()
}

/// Runs one view for the niches `niche_ids`, migrating between them.
/// Niche `n` draws from the substream `(seed, IVFS, n, view)`, so a niche's
/// trajectory does not depend on how many threads run it.
pub fn run_ivfs_niches(
    dataset: &MultiViewDataset,
    view: usize,
    plan: &FoldPlan,
    cfg: &NicheConfig,
    niche_ids: &[usize],
) -> Result<IvfsResult> {
    let k = dataset
        .views
        .get(view)
        .ok_or_else(|| Error::InvalidArgument(format!("view {view} out of range")))?
        .n_features();
    if niche_ids.is_empty() {
        return Err(Error::InvalidArgument("no niches to run".into()));
    }
    let offset = dataset.view_offsets()[view];
    let ev = CvEvaluator::new(dataset, (offset..offset + k).collect(), plan, &cfg.eval)?;
    let (pop_size, gen) = cfg.ivfs_schedule(k);
    let interval = cfg.migration_interval_for(gen);
    let snaps = snapshot_generations(gen);
    let var = &cfg.ivfs_variation;

    let mut states = niche_ids
        .iter()
        .map(|&id| {
            let mut rng = rng::substream(cfg.seed, &[tag::IVFS, id as u64, view as u64]);
            let init = initial_population(k, pop_size, cfg, &mut rng);
            let pop = rank_population(score(&ev, init)?)?;
            Ok(NicheState {
                id,
                rng,
                pop,
                snapshots: [None, None, None],
                trajectory: Vec::with_capacity(gen),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    for g in 1..=gen {
        states.par_iter_mut().try_for_each(|st| -> Result<()> {
            let combined = crossover_or_mutation(&st.pop, var, &mut st.rng)?;
            st.pop = environmental_selection(score(&ev, combined)?, pop_size)?;
            let genomes: Vec<BinaryChromosome> = st.pop.iter().map(|r| r.genome.clone()).collect();
            let (fresh, replaced) =
                diversify(&genomes, cfg.similarity_threshold, cfg.repair_prob, var, &mut st.rng)?;
            if !replaced.is_empty() {
                st.pop = rank_population(score(&ev, fresh)?)?;
            }
            Ok(())
        })?;

        if states.len() > 1 && g % interval == 0 {
            let mut pops: Vec<_> = states.iter_mut().map(|s| std::mem::take(&mut s.pop)).collect();
            migrate(&mut pops, cfg.migration_fraction)?;
            for (st, pop) in states.iter_mut().zip(pops) {
                let scored = pop.into_iter().map(|r| (r.genome, r.fitness)).collect();
                st.pop = rank_population(scored)?;
            }
        }

        for st in states.iter_mut() {
            for (slot, &at) in st.snapshots.iter_mut().zip(&snaps) {
                if g == at {
                    *slot = Some(select_best(&st.pop).genome.clone());
                }
            }
            let genomes: Vec<BinaryChromosome> = st.pop.iter().map(|r| r.genome.clone()).collect();
            let sim = jaccard_similarity(&genomes).ok();
            st.trajectory.push(generation_stats(g, &st.pop, sim));
        }
    }

    let niches = states
        .into_iter()
        .map(|st| {
            let genomes: Vec<BinaryChromosome> = st.pop.iter().map(|r| r.genome.clone()).collect();
            let [s3, s4, s5] = st.snapshots;
            let solution_set = ViewSolutionSet::new([
                select_best(&st.pop).genome.clone(),
                frequent_features(&genomes),
                s3.expect("snapshot at 30%"),
                s4.expect("snapshot at 60%"),
                s5.expect("snapshot at 90%"),
            ])?;
            Ok(IvfsNicheResult {
                niche: st.id,
                solution_set,
                trajectory: st.trajectory,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IvfsResult {
        niches,
        evaluations: ev.evaluations(),
        min_features_evaluated: ev.min_features_evaluated(),
    })
}

/// Single-niche intra-view selection, without migration.
pub fn run_ivfs(
    dataset: &MultiViewDataset,
    view: usize,
    plan: &FoldPlan,
    cfg: &NicheConfig,
    niche_id: usize,
) -> Result<IvfsNicheResult> {
    let mut out = run_ivfs_niches(dataset, view, plan, cfg, &[niche_id])?;
    Ok(out.niches.remove(0))
}
