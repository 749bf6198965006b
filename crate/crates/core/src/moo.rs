//! Pareto dominance, fast non-dominated sorting, crowding distance and the
//! NSGA-II selection operators.
//!
//! Everything here is independent of the chromosome encoding: individuals
//! carry an arbitrary genome payload next to their [`Fitness`].

use std::cmp::Ordering;

use rand::Rng;

use crate::{Error, Result};

/// Objective pair of a feature subset, both minimized.
///
/// `error` is the cross-validated balanced classification error in `[0, 1]`
/// and `n_features` the number of selected features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fitness {
    pub error: f64,
    pub n_features: usize,
}

impl Fitness {
    pub fn new(error: f64, n_features: usize) -> Self {
        Self { error, n_features }
    }

    pub fn objectives(&self) -> [f64; 2] {
        [self.error, self.n_features as f64]
    }

    /// Lexicographic "best accuracy" order: lower error, then fewer features.
    pub fn accuracy_cmp(&self, other: &Fitness) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then(self.n_features.cmp(&other.n_features))
    }
}

/// True iff `a` is no worse than `b` in every objective and strictly better
/// in at least one.
pub fn dominates(a: &Fitness, b: &Fitness) -> bool {
    let (oa, ob) = (a.objectives(), b.objectives());
    let mut strictly = false;
    for (x, y) in oa.iter().zip(ob.iter()) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Splits a population into Pareto fronts (indices into `population`).
///
/// Uses the dominance-count / dominated-set bookkeeping of NSGA-II. Front
/// order is best first; indices inside a front are ascending.
pub fn fast_nondominated_sort(population: &[Fitness]) -> Result<Vec<Vec<usize>>> {
    let n = population.len();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "cannot sort an empty population".into(),
        ));
    }
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for p in 0..n {
        for q in (p + 1)..n {
            if dominates(&population[p], &population[q]) {
                dominated_by_me[p].push(q);
                domination_count[q] += 1;
            } else if dominates(&population[q], &population[p]) {
                dominated_by_me[q].push(p);
                domination_count[p] += 1;
            }
        }
    }

    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by_me[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    Ok(fronts)
}

/// Crowding distance of every member of one front.
///
/// Per objective, the first and last individuals of the (index-stable)
/// sorted order get `+inf`; interior individuals accumulate the normalized
/// gap between their two neighbours. An objective with zero range adds
/// nothing to interior points. A front that collapses to a single point in
/// objective space is all `+inf`.
pub fn crowding_distance(front: &[Fitness]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    if front.iter().all(|f| f == &front[0]) {
        return vec![f64::INFINITY; n];
    }

    let mut distance = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for m in 0..2 {
        let value = |i: usize| front[i].objectives()[m];
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)));
        let lo = value(order[0]);
        let hi = value(order[n - 1]);
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let i = order[w];
            if distance[i].is_finite() {
                distance[i] += (value(order[w + 1]) - value(order[w - 1])).abs() / range;
            }
        }
    }
    distance
}

/// An individual with its NSGA-II rank (1 = non-dominated) and crowding.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranked<G> {
    pub genome: G,
    pub fitness: Fitness,
    pub front_rank: usize,
    pub crowding: f64,
}

/// Crowded-comparison order: lower front first, then larger crowding.
pub fn crowded_cmp<G>(a: &Ranked<G>, b: &Ranked<G>) -> Ordering {
    a.front_rank
        .cmp(&b.front_rank)
        .then_with(|| b.crowding.total_cmp(&a.crowding))
}

/// Computes front ranks and per-front crowding for a scored population.
/// Output order matches input order.
pub fn rank_population<G>(scored: Vec<(G, Fitness)>) -> Result<Vec<Ranked<G>>> {
    let fitness: Vec<Fitness> = scored.iter().map(|(_, f)| *f).collect();
    let fronts = fast_nondominated_sort(&fitness)?;
    let mut rank = vec![0usize; scored.len()];
    let mut crowd = vec![0.0f64; scored.len()];
    for (r, front) in fronts.iter().enumerate() {
        let members: Vec<Fitness> = front.iter().map(|&i| fitness[i]).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&members)) {
            rank[i] = r + 1;
            crowd[i] = d;
        }
    }
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (genome, fitness))| Ranked {
            genome,
            fitness,
            front_rank: rank[i],
            crowding: crowd[i],
        })
        .collect())
}

/// Binary tournament on rank, then crowding, then a fair coin.
pub fn tournament_select<'a, G, R: Rng + ?Sized>(
    population: &'a [Ranked<G>],
    rng: &mut R,
) -> &'a Ranked<G> {
    assert!(!population.is_empty(), "tournament on empty population");
    let n = population.len();
    if n == 1 {
        return &population[0];
    }
    let t = rng.random_range(0..n);
    let mut u = rng.random_range(0..n - 1);
    if u >= t {
        u += 1;
    }
    let (a, b) = (&population[t], &population[u]);
    match crowded_cmp(a, b) {
        Ordering::Less => a,
        Ordering::Greater => b,
        Ordering::Equal => {
            if rng.random_bool(0.5) {
                a
            } else {
                b
            }
        }
    }
}

/// Elitist NSGA-II truncation of a combined parent+offspring population.
///
/// Whole fronts are admitted in rank order; the front that overflows is cut
/// by descending crowding distance (ties keep the earlier index). Ranks and
/// crowding of the survivors are those computed on `combined`.
pub fn environmental_selection<G>(
    combined: Vec<(G, Fitness)>,
    target_size: usize,
) -> Result<Vec<Ranked<G>>> {
    if target_size > combined.len() {
        return Err(Error::InvalidArgument(format!(
            "selection target {target_size} exceeds population size {}",
            combined.len()
        )));
    }
    if combined.is_empty() {
        return Ok(Vec::new());
    }
    let ranked = rank_population(combined)?;
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    order.sort_by(|&a, &b| crowded_cmp(&ranked[a], &ranked[b]).then(a.cmp(&b)));
    let mut keep = vec![false; ranked.len()];
    for &i in order.iter().take(target_size) {
        keep[i] = true;
    }
    Ok(ranked
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;
    use proptest::prelude::*;

    fn fit(e: f64, k: usize) -> Fitness {
        Fitness::new(e, k)
    }

    /// Front assignment by repeated brute-force extraction of the
    /// non-dominated set.
    fn brute_force_fronts(pop: &[Fitness]) -> Vec<Vec<usize>> {
        let mut remaining: Vec<usize> = (0..pop.len()).collect();
        let mut fronts = Vec::new();
        while !remaining.is_empty() {
            let front: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&i| !remaining.iter().any(|&j| dominates(&pop[j], &pop[i])))
                .collect();
            remaining.retain(|i| !front.contains(i));
            fronts.push(front);
        }
        fronts
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&fit(0.1, 3), &fit(0.2, 5)));
        assert!(!dominates(&fit(0.1, 5), &fit(0.2, 3)));
        assert!(!dominates(&fit(0.1, 3), &fit(0.1, 3)));
        assert!(dominates(&fit(0.1, 3), &fit(0.1, 4)));
    }

    #[test]
    fn sort_example_matches_hand_fronts() {
        let pop = [fit(1.0, 1), fit(2.0, 2), fit(1.0, 3), fit(3.0, 1)];
        let fronts = fast_nondominated_sort(&pop).unwrap();
        assert_eq!(fronts, vec![vec![0], vec![1, 2, 3]]);
        assert_eq!(fronts, brute_force_fronts(&pop));
    }

    #[test]
    fn sort_single_and_incomparable() {
        assert_eq!(fast_nondominated_sort(&[fit(0.3, 4)]).unwrap(), vec![vec![0]]);
        let pop: Vec<_> = (0..6).map(|i| fit(i as f64 * 0.1, 10 - i)).collect();
        assert_eq!(
            fast_nondominated_sort(&pop).unwrap(),
            vec![(0..6).collect::<Vec<_>>()]
        );
        assert!(fast_nondominated_sort(&[]).is_err());
    }

    #[test]
    fn crowding_examples() {
        let d = crowding_distance(&[fit(1.0, 3), fit(2.0, 2), fit(3.0, 1)]);
        assert!(d[0].is_infinite() && d[2].is_infinite());
        assert!((d[1] - 2.0).abs() < 1e-12);

        assert!(crowding_distance(&[fit(0.1, 1), fit(0.2, 2)])
            .iter()
            .all(|d| d.is_infinite()));
        assert!(crowding_distance(&[fit(0.4, 2); 5])
            .iter()
            .all(|d| d.is_infinite()));
    }

    #[test]
    fn crowding_degenerate_objective_contributes_zero() {
        // Same error everywhere: only the feature-count axis spreads points.
        let front = [fit(0.2, 1), fit(0.2, 2), fit(0.2, 4), fit(0.2, 5)];
        let d = crowding_distance(&front);
        // Objective 1 boundaries (stable order): indices 0 and 3.
        assert!(d[0].is_infinite() && d[3].is_infinite());
        assert!((d[1] - 3.0 / 4.0).abs() < 1e-12);
        assert!((d[2] - 3.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn tournament_prefers_rank_then_crowding() {
        let a = Ranked { genome: 'a', fitness: fit(0.1, 1), front_rank: 1, crowding: 0.1 };
        let b = Ranked { genome: 'b', fitness: fit(0.2, 1), front_rank: 2, crowding: 9.0 };
        let mut rng = from_seed(1);
        for _ in 0..50 {
            assert_eq!(tournament_select(&[a.clone(), b.clone()], &mut rng).genome, 'a');
        }
        let c = Ranked { genome: 'c', fitness: fit(0.1, 1), front_rank: 1, crowding: 2.0 };
        let d = Ranked { genome: 'd', fitness: fit(0.1, 1), front_rank: 1, crowding: 0.5 };
        for _ in 0..50 {
            assert_eq!(tournament_select(&[c.clone(), d.clone()], &mut rng).genome, 'c');
        }
    }

    #[test]
    fn tournament_tie_is_a_fair_coin() {
        let pop: Vec<_> = ['x', 'y']
            .into_iter()
            .map(|g| Ranked { genome: g, fitness: fit(0.1, 1), front_rank: 1, crowding: 1.0 })
            .collect();
        let mut wins = 0;
        let draws = 4000;
        for seed in 0..draws {
            let mut rng = from_seed(seed);
            if tournament_select(&pop, &mut rng).genome == 'x' {
                wins += 1;
            }
        }
        // 4 sigma band around 0.5 for n = 4000.
        let p = wins as f64 / draws as f64;
        assert!((p - 0.5).abs() < 4.0 * (0.25 / draws as f64).sqrt(), "p = {p}");
    }

    #[test]
    fn selection_takes_whole_first_front() {
        let pop: Vec<_> = (0..10)
            .map(|i| (i, fit(i as f64 * 0.05, 10 - i)))
            .chain((0..5).map(|i| (100 + i, fit(0.9, 20 + i))))
            .collect();
        let kept = environmental_selection(pop, 10).unwrap();
        let mut ids: Vec<_> = kept.iter().map(|r| r.genome).collect();
        ids.sort();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn selection_truncates_overflowing_front_by_crowding() {
        // F1: six points on the line e + k/100 = 0.2 shifted; F2: eight points
        // strictly dominated by F1.
        let f1: Vec<Fitness> = (0..6).map(|i| fit(0.05 * i as f64, 6 - i)).collect();
        let f2: Vec<Fitness> = [0.31, 0.32, 0.36, 0.5, 0.52, 0.7, 0.8, 0.81]
            .iter()
            .enumerate()
            .map(|(i, &e)| fit(e, 20 - 2 * i))
            .collect();
        let pop: Vec<(usize, Fitness)> =
            f1.iter().chain(f2.iter()).copied().enumerate().collect();

        // Oracle: recompute crowding of F2 on its own and take the top 4.
        let d2 = crowding_distance(&f2);
        let mut order: Vec<usize> = (0..f2.len()).collect();
        order.sort_by(|&a, &b| d2[b].total_cmp(&d2[a]).then(a.cmp(&b)));
        let mut expected: Vec<usize> = (0..6).chain(order[..4].iter().map(|i| i + 6)).collect();
        expected.sort();

        let kept = environmental_selection(pop, 10).unwrap();
        let mut ids: Vec<_> = kept.iter().map(|r| r.genome).collect();
        ids.sort();
        assert_eq!(ids, expected);
    }

    #[test]
    fn selection_identity_and_errors() {
        let pop: Vec<_> = (0..7).map(|i| (i, fit(0.1 * (i % 3) as f64, 1 + i % 4))).collect();
        let kept = environmental_selection(pop.clone(), 7).unwrap();
        assert_eq!(kept.len(), 7);
        assert!(environmental_selection(pop, 8).is_err());
    }

    fn arb_fitness() -> impl Strategy<Value = Fitness> {
        (0u32..6, 1usize..6).prop_map(|(e, k)| fit(e as f64 / 5.0, k))
    }

    proptest! {
        #[test]
        fn dominance_is_a_strict_partial_order(a in arb_fitness(), b in arb_fitness(), c in arb_fitness()) {
            prop_assert!(!dominates(&a, &a));
            prop_assert!(!(dominates(&a, &b) && dominates(&b, &a)));
            if dominates(&a, &b) && dominates(&b, &c) {
                prop_assert!(dominates(&a, &c));
            }
        }

        #[test]
        fn sort_matches_brute_force(pop in prop::collection::vec(arb_fitness(), 1..=12)) {
            prop_assert_eq!(fast_nondominated_sort(&pop).unwrap(), brute_force_fronts(&pop));
        }

        #[test]
        fn crowding_is_affine_invariant(
            pop in prop::collection::vec((0u32..100, 1usize..50), 3..10),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            // Rescale the error axis; feature counts stay integral.
            let a: Vec<_> = pop.iter().map(|&(e, k)| fit(e as f64 / 100.0, k)).collect();
            let b: Vec<_> = pop.iter().map(|&(e, k)| fit(e as f64 / 100.0 * scale + shift, k)).collect();
            let (da, db) = (crowding_distance(&a), crowding_distance(&b));
            for (x, y) in da.iter().zip(db.iter()) {
                if x.is_infinite() || y.is_infinite() {
                    prop_assert_eq!(x, y);
                } else {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn selection_never_drops_better_front(
            pop in prop::collection::vec(arb_fitness(), 2..30),
            frac in 0.1f64..1.0,
        ) {
            let target = ((pop.len() as f64 * frac) as usize).max(1);
            let scored: Vec<_> = pop.iter().copied().enumerate().collect();
            let kept = environmental_selection(scored, target).unwrap();
            prop_assert_eq!(kept.len(), target);
            let fronts = fast_nondominated_sort(&pop).unwrap();
            let rank_of = |i: usize| fronts.iter().position(|f| f.contains(&i)).unwrap();
            let worst_kept = kept.iter().map(|r| rank_of(r.genome)).max().unwrap();
            let kept_ids: Vec<usize> = kept.iter().map(|r| r.genome).collect();
            for i in 0..pop.len() {
                if rank_of(i) < worst_kept {
                    prop_assert!(kept_ids.contains(&i));
                }
            }
        }
    }
}
