//! Chromosome encodings and the operators that build offspring.
//!
//! Intra-view selection uses [`BinaryChromosome`] (one bit per feature) with
//! binomial crossover and bit-flip mutation. Between-view selection uses
//! [`IntegerChromosome`] (one gene in `0..=5` per view) with two-point
//! crossover and shuffle mutation. [`crossover_or_mutation`] produces the
//! combined parent+offspring population for one generation.

use std::fmt;

use rand::Rng;

use crate::moo::{tournament_select, Ranked};
use crate::{Error, Result};

/// Number of candidate masks kept per view; integer genes index into them.
pub const SOLUTIONS_PER_VIEW: usize = 6;

/// Fixed-length bit set marking selected features.
///
/// Bits past `len` in the last word are always zero, so word-level popcounts
/// and equality are exact.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinaryChromosome {
    words: Vec<u64>,
    len: usize,
}

impl BinaryChromosome {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut c = Self::zeros(len);
        for i in 0..len {
            c.set(i, true);
        }
        c
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut c = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            c.set(i, b);
        }
        c
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut c = Self::zeros(len);
        for i in indices {
            c.set(i, true);
        }
        c
    }

    /// Each gene independently set with probability `p`.
    pub fn random<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Self {
        let mut c = Self::zeros(len);
        for i in 0..len {
            if rng.random_bool(p) {
                c.set(i, true);
            }
        }
        c
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "gene {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "gene {i} out of range {}", self.len);
        let bit = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    pub fn flip(&mut self, i: usize) {
        let v = self.get(i);
        self.set(i, !v);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn intersection_count(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn union_count(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Indices of selected genes in ascending order.
    pub fn ones_indices(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.count_ones());
        for (w, &word) in self.words.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let tz = bits.trailing_zeros() as usize;
                out.push(w * 64 + tz);
                bits &= bits - 1;
            }
        }
        out
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    /// Concatenates masks end to end.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a BinaryChromosome>) -> Self {
        let parts: Vec<&BinaryChromosome> = parts.into_iter().collect();
        let total = parts.iter().map(|p| p.len).sum();
        let mut out = Self::zeros(total);
        let mut offset = 0;
        for p in parts {
            for i in p.ones_indices() {
                out.set(offset + i, true);
            }
            offset += p.len;
        }
        out
    }

    /// Copies genes `start..start + len` into a new mask.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.len);
        let mut out = Self::zeros(len);
        for i in 0..len {
            if self.get(start + i) {
                out.set(i, true);
            }
        }
        out
    }
}

impl fmt::Debug for BinaryChromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.len)
            .map(|i| if self.get(i) { '1' } else { '0' })
            .collect();
        write!(f, "BinaryChromosome({s})")
    }
}

/// One gene per view, each indexing that view's candidate masks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntegerChromosome {
    pub genes: Vec<u8>,
}

impl IntegerChromosome {
    pub fn new(genes: Vec<u8>) -> Result<Self> {
        if let Some(g) = genes.iter().find(|&&g| g as usize >= SOLUTIONS_PER_VIEW) {
            return Err(Error::InvalidArgument(format!(
                "gene value {g} outside 0..{SOLUTIONS_PER_VIEW}"
            )));
        }
        Ok(Self { genes })
    }

    /// Genes drawn uniformly from `0..=5`.
    pub fn random<R: Rng + ?Sized>(n_views: usize, rng: &mut R) -> Self {
        Self {
            genes: (0..n_views)
                .map(|_| rng.random_range(0..SOLUTIONS_PER_VIEW as u8))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }
}

/// How parents are drawn for crossover, mutation and reproduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentSelection {
    /// Uniformly random parent.
    Uniform,
    /// Binary tournament on front rank and crowding distance.
    Tournament,
}

/// Operator probabilities for one stage.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationConfig {
    /// Probability that an offspring comes from crossover.
    pub crossover_prob: f64,
    /// Probability that an offspring comes from mutation.
    pub mutation_prob: f64,
    /// Per-gene flip probability of bit-flip mutation; `None` means
    /// `1 / chromosome length`.
    pub per_gene_flip_prob: Option<f64>,
    /// Per-gene swap probability of shuffle mutation.
    pub per_gene_shuffle_prob: f64,
    /// Probability that binomial crossover takes a gene from the second parent.
    pub binomial_mix_prob: f64,
    pub parent_selection: ParentSelection,
}

impl Default for VariationConfig {
    fn default() -> Self {
        Self {
            crossover_prob: 0.2,
            mutation_prob: 0.1,
            per_gene_flip_prob: None,
            per_gene_shuffle_prob: 0.1,
            binomial_mix_prob: 0.5,
            parent_selection: ParentSelection::Tournament,
        }
    }
}

impl VariationConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(name, format!("{v} is outside [0, 1]")))
            }
        };
        unit("crossover_prob", self.crossover_prob)?;
        unit("mutation_prob", self.mutation_prob)?;
        unit("per_gene_shuffle_prob", self.per_gene_shuffle_prob)?;
        unit("binomial_mix_prob", self.binomial_mix_prob)?;
        if let Some(p) = self.per_gene_flip_prob {
            unit("per_gene_flip_prob", p)?;
        }
        if self.crossover_prob + self.mutation_prob > 1.0 + 1e-12 {
            return Err(Error::config(
                "mutation_prob",
                "crossover_prob + mutation_prob must not exceed 1",
            ));
        }
        Ok(())
    }
}

/// Binomial crossover: each gene comes from `p2` with probability
/// `mix_prob`, otherwise from `p1`.
pub fn binomial_crossover<R: Rng + ?Sized>(
    p1: &BinaryChromosome,
    p2: &BinaryChromosome,
    mix_prob: f64,
    rng: &mut R,
) -> Result<BinaryChromosome> {
    if p1.len() != p2.len() {
        return Err(Error::InvalidArgument(format!(
            "crossover of chromosomes with lengths {} and {}",
            p1.len(),
            p2.len()
        )));
    }
    let mut child = p1.clone();
    for i in 0..p1.len() {
        if rng.random_bool(mix_prob) {
            child.set(i, p2.get(i));
        }
    }
    Ok(child)
}

/// Flips every gene independently with probability `flip_prob`.
pub fn bitflip_mutation<R: Rng + ?Sized>(
    p: &BinaryChromosome,
    flip_prob: f64,
    rng: &mut R,
) -> BinaryChromosome {
    let mut child = p.clone();
    if flip_prob <= 0.0 {
        return child;
    }
    for i in 0..p.len() {
        if rng.random_bool(flip_prob) {
            child.flip(i);
        }
    }
    child
}

/// Child with genes `cut_a..cut_b` from `p2` and the rest from `p1`.
pub fn two_point_crossover_at(
    p1: &IntegerChromosome,
    p2: &IntegerChromosome,
    cut_a: usize,
    cut_b: usize,
) -> IntegerChromosome {
    let mut genes = p1.genes.clone();
    genes[cut_a..cut_b].copy_from_slice(&p2.genes[cut_a..cut_b]);
    IntegerChromosome { genes }
}

/// Two-point crossover with two distinct cut points drawn uniformly from
/// `0..=len`.
pub fn two_point_crossover<R: Rng + ?Sized>(
    p1: &IntegerChromosome,
    p2: &IntegerChromosome,
    rng: &mut R,
) -> Result<IntegerChromosome> {
    if p1.len() != p2.len() {
        return Err(Error::InvalidArgument(format!(
            "crossover of chromosomes with lengths {} and {}",
            p1.len(),
            p2.len()
        )));
    }
    let n = p1.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "two-point crossover needs at least 2 genes".into(),
        ));
    }
    let a = rng.random_range(0..=n);
    let mut b = rng.random_range(0..n);
    if b >= a {
        b += 1;
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    Ok(two_point_crossover_at(p1, p2, lo, hi))
}

/// One step of shuffle mutation: swap gene `i` with a uniformly chosen
/// different position.
pub fn shuffle_step<R: Rng + ?Sized>(genes: &mut [u8], i: usize, rng: &mut R) {
    let n = genes.len();
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    genes.swap(i, j);
}

/// Shuffle mutation: visits every position and, with probability
/// `swap_prob`, swaps it with another position. Gene multiset is preserved.
pub fn shuffle_mutation<R: Rng + ?Sized>(
    p: &IntegerChromosome,
    swap_prob: f64,
    rng: &mut R,
) -> IntegerChromosome {
    let mut genes = p.genes.clone();
    if genes.len() < 2 {
        return IntegerChromosome { genes };
    }
    for i in 0..genes.len() {
        if rng.random_bool(swap_prob) {
            shuffle_step(&mut genes, i, rng);
        }
    }
    IntegerChromosome { genes }
}

/// A chromosome encoding that the generic offspring procedure can vary.
pub trait Genome: Clone + Eq + std::hash::Hash + Send + Sync {
    fn crossover<R: Rng + ?Sized>(&self, other: &Self, cfg: &VariationConfig, rng: &mut R)
        -> Result<Self>;
    fn mutate<R: Rng + ?Sized>(&self, cfg: &VariationConfig, rng: &mut R) -> Self;
    /// Restores the "at least one feature selected" constraint.
    fn repair<R: Rng + ?Sized>(self, rng: &mut R) -> Self;
}

impl Genome for BinaryChromosome {
    fn crossover<R: Rng + ?Sized>(
        &self,
        other: &Self,
        cfg: &VariationConfig,
        rng: &mut R,
    ) -> Result<Self> {
        binomial_crossover(self, other, cfg.binomial_mix_prob, rng)
    }

    fn mutate<R: Rng + ?Sized>(&self, cfg: &VariationConfig, rng: &mut R) -> Self {
        let p = cfg
            .per_gene_flip_prob
            .unwrap_or(1.0 / self.len().max(1) as f64);
        bitflip_mutation(self, p, rng)
    }

    fn repair<R: Rng + ?Sized>(self, rng: &mut R) -> Self {
        crate::search::repair(self, rng)
    }
}

impl Genome for IntegerChromosome {
    fn crossover<R: Rng + ?Sized>(
        &self,
        other: &Self,
        _cfg: &VariationConfig,
        rng: &mut R,
    ) -> Result<Self> {
        // A single gene has no cut points; crossover degenerates to a copy.
        if self.len() < 2 && self.len() == other.len() {
            return Ok(self.clone());
        }
        two_point_crossover(self, other, rng)
    }

    fn mutate<R: Rng + ?Sized>(&self, cfg: &VariationConfig, rng: &mut R) -> Self {
        shuffle_mutation(self, cfg.per_gene_shuffle_prob, rng)
    }

    fn repair<R: Rng + ?Sized>(self, rng: &mut R) -> Self {
        crate::search::repair_integer(self, rng)
    }
}

/// Which branch of the offspring procedure produced a child.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Crossover,
    Mutation,
    Reproduction,
}

fn pick<'a, G, R: Rng + ?Sized>(
    parents: &'a [Ranked<G>],
    how: ParentSelection,
    rng: &mut R,
) -> &'a Ranked<G> {
    match how {
        ParentSelection::Uniform => &parents[rng.random_range(0..parents.len())],
        ParentSelection::Tournament => tournament_select(parents, rng),
    }
}

/// Draws one offspring. Crossover keeps only the first child.
pub fn make_offspring<G: Genome, R: Rng + ?Sized>(
    parents: &[Ranked<G>],
    cfg: &VariationConfig,
    rng: &mut R,
) -> Result<(G, Branch)> {
    let r: f64 = rng.random();
    let how = cfg.parent_selection;
    if r < cfg.crossover_prob {
        let p1 = &pick(parents, how, rng).genome;
        let p2 = &pick(parents, how, rng).genome;
        let child = p1.crossover(p2, cfg, rng)?.repair(rng);
        Ok((child, Branch::Crossover))
    } else if r < cfg.crossover_prob + cfg.mutation_prob {
        let p1 = &pick(parents, how, rng).genome;
        Ok((p1.mutate(cfg, rng).repair(rng), Branch::Mutation))
    } else {
        Ok((pick(parents, how, rng).genome.clone(), Branch::Reproduction))
    }
}

/// Returns `R = P ∪ Q`: the parent genomes (unchanged, first) followed by
/// `|P|` offspring, each produced by exactly one of crossover, mutation or
/// reproduction.
pub fn crossover_or_mutation<G: Genome, R: Rng + ?Sized>(
    parents: &[Ranked<G>],
    cfg: &VariationConfig,
    rng: &mut R,
) -> Result<Vec<G>> {
    if parents.is_empty() {
        return Err(Error::InvalidArgument("empty parent population".into()));
    }
    let mut out: Vec<G> = parents.iter().map(|p| p.genome.clone()).collect();
    for _ in 0..parents.len() {
        out.push(make_offspring(parents, cfg, rng)?.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moo::Fitness;
    use crate::rng::from_seed;
    use proptest::prelude::*;

    fn ranked<G>(genomes: Vec<G>) -> Vec<Ranked<G>> {
        genomes
            .into_iter()
            .map(|g| Ranked { genome: g, fitness: Fitness::new(0.5, 1), front_rank: 1, crowding: 1.0 })
            .collect()
    }

    #[test]
    fn bitset_basics() {
        let mut c = BinaryChromosome::zeros(130);
        c.set(0, true);
        c.set(64, true);
        c.set(129, true);
        assert_eq!(c.count_ones(), 3);
        assert_eq!(c.ones_indices(), vec![0, 64, 129]);
        let o = BinaryChromosome::ones(130);
        assert_eq!(o.count_ones(), 130);
        assert_eq!(c.intersection_count(&o), 3);
        assert_eq!(c.union_count(&o), 130);
        let cat = BinaryChromosome::concat([&c, &o]);
        assert_eq!(cat.len(), 260);
        assert_eq!(cat.count_ones(), 133);
        assert_eq!(cat.slice(130, 130), o);
    }

    #[test]
    fn binomial_crossover_identical_parents() {
        let m = BinaryChromosome::from_bools(&[true, false, true, true, false]);
        for seed in 0..20 {
            let child = binomial_crossover(&m, &m, 0.5, &mut from_seed(seed)).unwrap();
            assert_eq!(child, m);
        }
    }

    #[test]
    fn binomial_crossover_concentrates() {
        let ones = BinaryChromosome::ones(1000);
        let zeros = BinaryChromosome::zeros(1000);
        let mut inside = 0;
        for seed in 0..200 {
            let c = binomial_crossover(&ones, &zeros, 0.5, &mut from_seed(seed)).unwrap();
            if (400..=600).contains(&c.count_ones()) {
                inside += 1;
            }
        }
        assert!(inside >= 198);
        assert!(binomial_crossover(&ones, &BinaryChromosome::zeros(3), 0.5, &mut from_seed(0)).is_err());
    }

    #[test]
    fn bitflip_rate() {
        let p = BinaryChromosome::from_indices(40, [1, 5, 7]);
        assert_eq!(bitflip_mutation(&p, 0.0, &mut from_seed(3)), p);
        let runs = 2000;
        let total: usize = (0..runs)
            .map(|s| bitflip_mutation(&p, 1.0 / 40.0, &mut from_seed(s)).hamming(&p))
            .sum();
        let mean = total as f64 / runs as f64;
        assert!((0.8..=1.2).contains(&mean), "mean hamming {mean}");
    }

    #[test]
    fn two_point_exhaustive_length_five() {
        let p1 = IntegerChromosome::new(vec![0, 1, 2, 3, 4]).unwrap();
        let p2 = IntegerChromosome::new(vec![5, 5, 5, 5, 5]).unwrap();
        for a in 0..=5 {
            for b in (a + 1)..=5 {
                let child = two_point_crossover_at(&p1, &p2, a, b);
                for i in 0..5 {
                    let expect = if (a..b).contains(&i) { 5 } else { i as u8 };
                    assert_eq!(child.genes[i], expect);
                }
            }
        }
        assert!(two_point_crossover(
            &IntegerChromosome { genes: vec![1] },
            &IntegerChromosome { genes: vec![2] },
            &mut from_seed(0)
        )
        .is_err());
    }

    #[test]
    fn shuffle_length_two_trace() {
        // With swap probability 1 the first step exchanges the two genes and
        // the second step exchanges them back.
        let mut genes = vec![1u8, 2];
        shuffle_step(&mut genes, 0, &mut from_seed(0));
        assert_eq!(genes, vec![2, 1]);
        let p = IntegerChromosome::new(vec![1, 2]).unwrap();
        assert_eq!(shuffle_mutation(&p, 1.0, &mut from_seed(0)).genes, vec![1, 2]);
        assert_eq!(shuffle_mutation(&p, 0.0, &mut from_seed(0)), p);
    }

    #[test]
    fn reproduction_only_copies_parents() {
        let parents = ranked(vec![
            BinaryChromosome::from_indices(8, [0]),
            BinaryChromosome::from_indices(8, [1, 2]),
            BinaryChromosome::from_indices(8, [7]),
        ]);
        let cfg = VariationConfig { crossover_prob: 0.0, mutation_prob: 0.0, ..Default::default() };
        let r = crossover_or_mutation(&parents, &cfg, &mut from_seed(9)).unwrap();
        assert_eq!(r.len(), 6);
        for (i, p) in parents.iter().enumerate() {
            assert_eq!(r[i], p.genome);
        }
        for q in &r[3..] {
            assert!(parents.iter().any(|p| &p.genome == q));
        }
        assert!(crossover_or_mutation::<BinaryChromosome, _>(&[], &cfg, &mut from_seed(0)).is_err());
    }

    #[test]
    fn branch_frequencies_match_probabilities() {
        let parents = ranked(vec![
            BinaryChromosome::from_indices(16, [0, 3]),
            BinaryChromosome::from_indices(16, [5]),
        ]);
        let cfg = VariationConfig { crossover_prob: 0.2, mutation_prob: 0.1, ..Default::default() };
        let n = 10_000;
        let mut counts = [0usize; 3];
        let mut rng = from_seed(11);
        for _ in 0..n {
            let (_, b) = make_offspring(&parents, &cfg, &mut rng).unwrap();
            counts[b as usize] += 1;
        }
        for (count, p) in counts.iter().zip([0.2, 0.1, 0.7]) {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*count as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(VariationConfig::default().validate().is_ok());
        let bad = VariationConfig { crossover_prob: 0.7, mutation_prob: 0.4, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn binary_operators_keep_length_and_genes_from_parents(
            a in prop::collection::vec(any::<bool>(), 1..100),
            seed in any::<u64>(),
        ) {
            let p1 = BinaryChromosome::from_bools(&a);
            let b: Vec<bool> = a.iter().map(|x| !x).collect();
            let p2 = BinaryChromosome::from_bools(&b);
            let mut rng = from_seed(seed);
            let child = binomial_crossover(&p1, &p2, 0.5, &mut rng).unwrap();
            prop_assert_eq!(child.len(), a.len());
            for i in 0..a.len() {
                prop_assert!(child.get(i) == p1.get(i) || child.get(i) == p2.get(i));
            }
            let m = bitflip_mutation(&p1, 0.3, &mut rng);
            prop_assert_eq!(m.len(), a.len());
            prop_assert_eq!(m.count_ones(), m.ones_indices().len());
        }

        #[test]
        fn integer_operators_keep_alphabet_and_multiset(
            a in prop::collection::vec(0u8..6, 2..12),
            seed in any::<u64>(),
        ) {
            let p1 = IntegerChromosome::new(a.clone()).unwrap();
            let p2 = IntegerChromosome::new(a.iter().rev().copied().collect()).unwrap();
            let mut rng = from_seed(seed);
            let child = two_point_crossover(&p1, &p2, &mut rng).unwrap();
            prop_assert_eq!(child.len(), a.len());
            for i in 0..a.len() {
                prop_assert!(child.genes[i] == p1.genes[i] || child.genes[i] == p2.genes[i]);
            }
            let m = shuffle_mutation(&p1, 0.5, &mut rng);
            let (mut x, mut y) = (m.genes.clone(), a.clone());
            x.sort();
            y.sort();
            prop_assert_eq!(x, y);
        }
    }
}
