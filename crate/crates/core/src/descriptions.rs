//! Sensor partitions and the description chains built on them.
//!
//! For a symbol `l` with threshold `theta`, groups `A_1, ..., A_J` speak in
//! turn and the running description is
//!
//! ```text
//! U_0 = 0,   U_m = U_{m-1} + sum_{i in A_m} 1{U_{m-1} < theta, S_i = l}
//! ```
//!
//! so `min(U_J, theta)` is the clipped frequency of `l`. Internally sensor
//! indices are 0-based; the JSON form of a [`Partition`] is 1-based.

use std::collections::HashMap;
use std::io::{self, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::entropy::{binomial_pmf, poisson_binomial_pmf, poisson_binomial_pmf_truncated};
use crate::error::{invalid, Error, Result};
use crate::model::SourceModel;

/// Groups larger than this get a tail-truncated kernel.
const EXACT_KERNEL_MAX_GROUP: usize = 2048;
const KERNEL_TAIL_EPS: f64 = 1e-15;

/// RNG stream carrying source symbols.
pub const SOURCE_STREAM: u64 = 0;
/// RNG stream carrying random shifts.
pub const SHIFT_STREAM: u64 = 1;

/// Deterministic generator for one `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Ordered disjoint cover of the sensors `[0, M)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    groups: Vec<Vec<usize>>,
    num_sensors: usize,
}

impl Partition {
    /// Checks non-empty groups, disjointness and full cover of `[0, m)`.
    pub fn new(groups: Vec<Vec<usize>>, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(invalid("a partition needs at least one sensor"));
        }
        let mut seen = vec![false; m];
        for (g, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(invalid(format!("group {g} is empty")));
            }
            for &i in group {
                if i >= m {
                    return Err(invalid(format!("sensor {i} outside [0, {m})")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(invalid(format!("sensor {i} appears in more than one group")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(invalid(format!("sensor {missing} is not covered")));
        }
        Ok(Partition {
            groups,
            num_sensors: m,
        })
    }

    pub fn from_one_based(groups: Vec<Vec<usize>>) -> Result<Self> {
        let m = groups.iter().map(Vec::len).sum();
        let zero_based = groups
            .into_iter()
            .map(|g| {
                g.into_iter()
                    .map(|i| i.checked_sub(1).ok_or_else(|| invalid("sensor indices are 1-based")))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Partition::new(zero_based, m)
    }

    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|i| i + 1).collect())
            .collect()
    }

    fn from_lengths(lengths: &[usize]) -> Partition {
        let mut start = 0;
        let groups = lengths
            .iter()
            .map(|&len| {
                let g: Vec<usize> = (start..start + len).collect();
                start += len;
                g
            })
            .collect();
        Partition {
            groups,
            num_sensors: start,
        }
    }

    pub fn singletons(m: usize) -> Result<Self> {
        a_partition(m, 1)
    }

    pub fn whole(m: usize) -> Result<Self> {
        a_partition(m, m)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_sensors(&self) -> usize {
        self.num_sensors
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Group order `d, d+1, ..., J-1, 0, ..., d-1`.
    pub fn rotated(&self, d: usize) -> Result<Partition> {
        let j = self.num_groups();
        if d >= j {
            return Err(invalid(format!("shift {d} outside [0:{}]", j - 1)));
        }
        let groups = (0..j).map(|t| self.groups[(d + t) % j].clone()).collect();
        Ok(Partition {
            groups,
            num_sensors: self.num_sensors,
        })
    }

    /// Short human-readable descriptor, e.g. `J=3 sizes=[2,2,1]`.
    pub fn describe(&self) -> String {
        let sizes = self.group_sizes();
        if sizes.len() > 8 {
            format!(
                "J={} sizes=[{},...,{}]",
                sizes.len(),
                sizes[0],
                sizes[sizes.len() - 1]
            )
        } else {
            let parts: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
            format!("J={} sizes=[{}]", sizes.len(), parts.join(","))
        }
    }
}

impl Serialize for Partition {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_one_based().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let groups = Vec::<Vec<usize>>::deserialize(deserializer)?;
        Partition::from_one_based(groups).map_err(serde::de::Error::custom)
    }
}

/// Consecutive blocks of size `a`, the last one absorbing the remainder:
/// `J = floor(M / a)` groups, the last of size `M - (J - 1) a`.
pub fn a_partition(m: usize, a: usize) -> Result<Partition> {
    if m == 0 {
        return Err(invalid("a partition needs at least one sensor"));
    }
    if a == 0 || a > m {
        return Err(invalid(format!("group size a = {a} outside [1:{m}]")));
    }
    let j = m / a;
    let mut lengths = vec![a; j - 1];
    lengths.push(m - (j - 1) * a);
    Ok(Partition::from_lengths(&lengths))
}

/// Result of [`lemma_partition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaPartition {
    pub partition: Partition,
    /// Set when the interval rules could not be met exactly and a short
    /// remainder was merged into the previous interval.
    pub tail_merged: bool,
}

/// Interval partition with bounded description entropy.
///
/// If `theta = 0` or `sum p <= theta` the whole sensor set is one group.
/// Otherwise each non-final interval is the shortest run of consecutive
/// sensors whose indicator mass reaches `theta`, and the final interval has
/// mass in `[theta, 2 theta)`. When a remainder with mass below `theta` is
/// left over it is merged into the last interval and `tail_merged` is set.
pub fn lemma_partition(p: &[f64], theta: usize) -> Result<LemmaPartition> {
    let m = p.len();
    if m == 0 {
        return Err(invalid("a partition needs at least one sensor"));
    }
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(invalid("indicator probabilities must lie in [0,1]"));
    }
    let th = theta as f64;
    let total: f64 = p.iter().sum();
    if theta == 0 || total <= th {
        return Ok(LemmaPartition {
            partition: Partition::from_lengths(&[m]),
            tail_merged: false,
        });
    }
    let mut suffix = vec![0.0; m + 1];
    for i in (0..m).rev() {
        suffix[i] = suffix[i + 1] + p[i];
    }
    let mut lengths = Vec::new();
    let mut start = 0;
    let mut tail_merged = false;
    loop {
        if suffix[start] < 2.0 * th {
            lengths.push(m - start);
            break;
        }
        let mut acc = 0.0;
        let mut end = start;
        while acc < th && end < m {
            acc += p[end];
            end += 1;
        }
        lengths.push(end - start);
        start = end;
        if start == m {
            break;
        }
        if suffix[start] < th {
            let last = lengths.pop().expect("just pushed");
            lengths.push(last + m - start);
            tail_merged = true;
            break;
        }
    }
    let partition = Partition::from_lengths(&lengths);
    debug_assert!(tail_merged || satisfies_interval_rules(p, theta, &partition));
    Ok(LemmaPartition {
        partition,
        tail_merged,
    })
}

/// Checks the interval rules of [`lemma_partition`] on a partition of
/// consecutive blocks: non-final blocks cross `theta` exactly at their last
/// element, the final block has mass in `[theta, 2 theta)`.
pub fn satisfies_interval_rules(p: &[f64], theta: usize, partition: &Partition) -> bool {
    const TOL: f64 = 1e-9;
    let th = theta as f64;
    let groups = partition.groups();
    let Some((last, rest)) = groups.split_last() else {
        return false;
    };
    for g in rest {
        let before: f64 = g[..g.len() - 1].iter().map(|&i| p[i]).sum();
        let with_last = before + p[g[g.len() - 1]];
        if before >= th + TOL || with_last < th - TOL {
            return false;
        }
    }
    let tail: f64 = last.iter().map(|&i| p[i]).sum();
    if groups.len() == 1 {
        return true;
    }
    tail >= th - TOL && tail < 2.0 * th + TOL
}

/// How the group order is rotated before transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ShiftPolicy {
    #[default]
    None,
    /// The same rotation `d` for every symbol, taken modulo its group count.
    Fixed { d: usize },
    /// Independent uniform rotation per symbol.
    UniformRandom,
}

impl ShiftPolicy {
    /// Concrete shift per symbol given each symbol's group count.
    pub fn resolve<R: Rng>(&self, group_counts: &[usize], rng: &mut R) -> Vec<usize> {
        group_counts
            .iter()
            .map(|&j| match *self {
                ShiftPolicy::None => 0,
                ShiftPolicy::Fixed { d } => d % j.max(1),
                ShiftPolicy::UniformRandom => rng.gen_range(0..j.max(1)),
            })
            .collect()
    }
}

/// Law of one description chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLaw {
    theta: usize,
    shift: usize,
    /// Natural group index of each transmission slot.
    order: Vec<usize>,
    /// Count PMF of each group in transmission order.
    kernels: Vec<Vec<f64>>,
    /// `state_pmfs[m]` is the law of `U_m`, m = 0..=J; entries past the end
    /// of a vector are zero.
    state_pmfs: Vec<Vec<f64>>,
    /// Mass dropped from the tails of truncated kernels.
    truncated_mass: f64,
}

impl ChainLaw {
    pub fn theta(&self) -> usize {
        self.theta
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn num_steps(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernels(&self) -> &[Vec<f64>] {
        &self.kernels
    }

    pub fn state_pmfs(&self) -> &[Vec<f64>] {
        &self.state_pmfs
    }

    pub fn final_pmf(&self) -> &[f64] {
        self.state_pmfs.last().expect("U_0 is always present")
    }

    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    /// `P(U_m >= x)`.
    pub fn survival(&self, m: usize, x: usize) -> f64 {
        self.state_pmfs[m].iter().skip(x).sum()
    }
}

/// Count PMF of one group of sensors.
pub(crate) fn group_kernel(p: &[f64], group: &[usize]) -> (Vec<f64>, f64) {
    let probs: Vec<f64> = group.iter().map(|&i| p[i]).collect();
    if probs.len() > EXACT_KERNEL_MAX_GROUP {
        let t = poisson_binomial_pmf_truncated(&probs, KERNEL_TAIL_EPS);
        (t.pmf, t.dropped_mass)
    } else {
        (poisson_binomial_pmf(&probs), 0.0)
    }
}

/// Count PMFs of every group in natural order, plus the total truncated
/// mass. Identical probabilities use the binomial law, cached per size.
pub(crate) fn partition_kernels(p: &[f64], partition: &Partition) -> (Vec<Vec<f64>>, f64) {
    if let Some(&first) = p.first() {
        if p.iter().all(|&x| x == first) {
            let mut cache: HashMap<usize, Vec<f64>> = HashMap::new();
            let kernels = partition
                .groups()
                .iter()
                .map(|g| {
                    cache
                        .entry(g.len())
                        .or_insert_with(|| binomial_pmf(g.len(), first))
                        .clone()
                })
                .collect();
            return (kernels, 0.0);
        }
    }
    let mut dropped = 0.0;
    let kernels = partition
        .groups()
        .iter()
        .map(|g| {
            let (k, d) = group_kernel(p, g);
            dropped += d;
            k
        })
        .collect();
    (kernels, dropped)
}

/// Chain law for symbol `l` of `src`.
pub fn chain_law(
    src: &SourceModel,
    l: usize,
    theta: usize,
    partition: &Partition,
    shift: usize,
) -> Result<ChainLaw> {
    if l >= src.q() {
        return Err(invalid(format!("symbol {l} outside the alphabet")));
    }
    chain_law_from_probs(&src.indicator_probs(l), theta, partition, shift)
}

/// Chain law from per-sensor indicator probabilities `p_i = P(S_i = l)`.
///
/// A shift `d` rotates the group order so that group `d` speaks first.
pub fn chain_law_from_probs(
    p: &[f64],
    theta: usize,
    partition: &Partition,
    shift: usize,
) -> Result<ChainLaw> {
    if partition.num_sensors() != p.len() {
        return Err(invalid(format!(
            "partition covers {} sensors, the source has {}",
            partition.num_sensors(),
            p.len()
        )));
    }
    let j = partition.num_groups();
    if shift >= j {
        return Err(invalid(format!("shift {shift} outside [0:{}]", j - 1)));
    }
    let order: Vec<usize> = (0..j).map(|t| (shift + t) % j).collect();
    let (natural, truncated_mass) = partition_kernels(p, partition);
    let kernels: Vec<Vec<f64>> = order.iter().map(|&g| natural[g].clone()).collect();
    let mut state_pmfs = Vec::with_capacity(j + 1);
    state_pmfs.push(vec![1.0]);
    for kernel in &kernels {
        let prev = state_pmfs.last().expect("non-empty");
        state_pmfs.push(step_law(prev, kernel, theta));
    }
    Ok(ChainLaw {
        theta,
        shift,
        order,
        kernels,
        state_pmfs,
        truncated_mass,
    })
}

/// `P(U_m = u) = sum_{j < theta} P(U_{m-1} = j) k(u - j) + 1{u >= theta} P(U_{m-1} = u)`.
fn step_law(prev: &[f64], kernel: &[f64], theta: usize) -> Vec<f64> {
    let reach = if theta == 0 {
        0
    } else {
        (theta - 1).min(prev.len().saturating_sub(1)) + kernel.len()
    };
    let mut next = vec![0.0; prev.len().max(reach)];
    for (u, &pu) in prev.iter().enumerate() {
        if pu == 0.0 {
            continue;
        }
        if u >= theta {
            next[u] += pu;
        } else {
            for (x, &kx) in kernel.iter().enumerate() {
                next[u + x] += pu * kx;
            }
        }
    }
    while next.len() > 1 && *next.last().unwrap() == 0.0 {
        next.pop();
    }
    next
}

/// Block of `k` i.i.d. source columns, stored sensor-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceBlock {
    num_sensors: usize,
    k: usize,
    symbols: Vec<u32>,
}

impl SourceBlock {
    /// Draws `k` columns from the source stream of `seed`.
    pub fn draw(src: &SourceModel, k: usize, seed: u64) -> SourceBlock {
        let m = src.num_sensors();
        let cdfs: Vec<Vec<f64>> = src
            .pmfs()
            .iter()
            .map(|pmf| {
                pmf.iter()
                    .scan(0.0, |acc, &p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        let mut rng = stream_rng(seed, SOURCE_STREAM);
        let mut symbols = vec![0u32; m * k];
        for j in 0..k {
            for (i, cdf) in cdfs.iter().enumerate() {
                let u: f64 = rng.gen();
                let v = cdf.iter().position(|&c| u < c).unwrap_or_else(|| {
                    // u landed in the rounding gap above the last cdf value
                    cdf.iter().rposition(|_| true).unwrap_or(0)
                });
                symbols[i * k + j] = v as u32;
            }
        }
        SourceBlock {
            num_sensors: m,
            k,
            symbols,
        }
    }

    pub fn from_columns(columns: &[Vec<usize>]) -> Result<SourceBlock> {
        let k = columns.len();
        let m = columns.first().map(Vec::len).unwrap_or(0);
        if columns.iter().any(|c| c.len() != m) {
            return Err(invalid("columns differ in length"));
        }
        let mut symbols = vec![0u32; m * k];
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                symbols[i * k + j] = v as u32;
            }
        }
        Ok(SourceBlock {
            num_sensors: m,
            k,
            symbols,
        })
    }

    pub fn num_sensors(&self) -> usize {
        self.num_sensors
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    /// All `k` symbols observed by one sensor.
    pub fn sensor(&self, i: usize) -> &[u32] {
        &self.symbols[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.symbols[i * self.k + j] as usize
    }

    pub fn column(&self, j: usize) -> Vec<usize> {
        (0..self.num_sensors).map(|i| self.get(i, j)).collect()
    }
}

/// Sampled descriptions of one symbol `l` over a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledChain {
    pub symbol: usize,
    pub theta: usize,
    pub shift: usize,
    /// Natural group index per transmission slot.
    pub order: Vec<usize>,
    k: usize,
    /// `U_m[j]` for m = 1..=J, stored as `values[(m - 1) * k + j]`.
    values: Vec<u32>,
    pub clipped: Vec<u32>,
}

impl SampledChain {
    pub fn num_steps(&self) -> usize {
        self.order.len()
    }

    /// `U_m[j]`, with `U_0 = 0`.
    pub fn value(&self, m: usize, j: usize) -> u32 {
        if m == 0 {
            0
        } else {
            self.values[(m - 1) * self.k + j]
        }
    }

    /// `(U_1[j], ..., U_J[j])`.
    pub fn trajectory(&self, j: usize) -> Vec<u32> {
        (1..=self.num_steps()).map(|m| self.value(m, j)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptionSample {
    pub sources: SourceBlock,
    pub chains: Vec<SampledChain>,
}

impl DescriptionSample {
    /// Clipped type vector of column `j`.
    pub fn clipped_column(&self, j: usize) -> Vec<usize> {
        self.chains.iter().map(|c| c.clipped[j] as usize).collect()
    }

    /// CSV trace, one row per `(symbol_index, l, m)`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "symbol_index,l,m,U_value")?;
        for chain in &self.chains {
            for j in 0..self.sources.len() {
                for m in 1..=chain.num_steps() {
                    writeln!(out, "{},{},{},{}", j, chain.symbol, m, chain.value(m, j))?;
                }
            }
        }
        Ok(())
    }
}

/// Draws `k` source columns and runs the description recursion for every
/// symbol `l`, with `partitions[l]` and thresholds `theta[l]`.
pub fn sample_descriptions(
    src: &SourceModel,
    theta: &[usize],
    partitions: &[Partition],
    shift: ShiftPolicy,
    seed: u64,
    k: usize,
) -> Result<DescriptionSample> {
    let q = src.q();
    if theta.len() != q || partitions.len() != q {
        return Err(invalid(format!(
            "need {q} thresholds and partitions, got {} and {}",
            theta.len(),
            partitions.len()
        )));
    }
    if let Some(p) = partitions.iter().find(|p| p.num_sensors() != src.num_sensors()) {
        return Err(invalid(format!(
            "partition covers {} sensors, the source has {}",
            p.num_sensors(),
            src.num_sensors()
        )));
    }
    let sources = SourceBlock::draw(src, k, seed);
    let counts: Vec<usize> = partitions.iter().map(Partition::num_groups).collect();
    let shifts = shift.resolve(&counts, &mut stream_rng(seed, SHIFT_STREAM));
    let chains = (0..q)
        .map(|l| run_chain(&sources, l, theta[l], &partitions[l], shifts[l]))
        .collect();
    Ok(DescriptionSample { sources, chains })
}

fn run_chain(sources: &SourceBlock, l: usize, theta: usize, partition: &Partition, shift: usize) -> SampledChain {
    let k = sources.len();
    let j_count = partition.num_groups();
    let order: Vec<usize> = (0..j_count).map(|t| (shift + t) % j_count).collect();
    let mut values = Vec::with_capacity(j_count * k);
    let mut u = vec![0u32; k];
    for &g in &order {
        let prev = u.clone();
        for &i in &partition.groups()[g] {
            let row = sources.sensor(i);
            for j in 0..k {
                if (prev[j] as usize) < theta && row[j] as usize == l {
                    u[j] += 1;
                }
            }
        }
        values.extend_from_slice(&u);
    }
    let clipped = u.iter().map(|&x| x.min(theta as u32)).collect();
    SampledChain {
        symbol: l,
        theta,
        shift,
        order,
        k,
        values,
        clipped,
    }
}

/// One stage of the binary search for the maximum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStage {
    /// Threshold `D` tested in this stage.
    pub threshold: usize,
    /// `(U~_1, ..., U~_J)`.
    pub chain: Vec<usize>,
    /// `U~_J`; positive iff some sensor observed a value `>= threshold`.
    pub outcome: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinarySearchOutcome {
    pub stages: Vec<SearchStage>,
    pub maximum: usize,
}

/// `ceil(log2 q)`.
pub fn search_stages(q: usize) -> usize {
    assert!(q >= 2);
    (usize::BITS - (q - 1).leading_zeros()) as usize
}

/// Midpoint recursion written directly in terms of earlier outcomes, valid
/// when `q` is a power of two.
fn closed_form_midpoint(q: usize, stage: usize, positives: &[bool]) -> usize {
    let scale = 1usize << stage;
    let mut numerator = 1usize;
    for (j, &pos) in positives.iter().enumerate() {
        if pos {
            numerator += 1 << (stage - (j + 1));
        }
    }
    (q * numerator).div_ceil(scale)
}

/// Binary search for `max S` over `ceil(log2 q)` stages, one partition per
/// stage.
///
/// The live interval `[lo, hi]` starts at `[0, q-1]`; each stage tests
/// `D = lo + ceil((hi - lo + 1) / 2)` with a threshold-1 chain on the
/// indicators `1{S_i >= D}` and keeps the upper or lower half.
pub fn binary_search_max_descriptions(
    realization: &[usize],
    q: usize,
    partitions: &[Partition],
) -> Result<BinarySearchOutcome> {
    if q < 2 {
        return Err(invalid("alphabet size must be at least 2"));
    }
    let stages = search_stages(q);
    if partitions.len() != stages {
        return Err(invalid(format!(
            "need {stages} stage partitions, got {}",
            partitions.len()
        )));
    }
    for (position, &symbol) in realization.iter().enumerate() {
        if symbol >= q {
            return Err(Error::SymbolOutOfRange {
                position,
                symbol,
                max: q - 1,
            });
        }
    }
    let (mut lo, mut hi) = (0usize, q - 1);
    let mut positives = Vec::with_capacity(stages);
    let mut records = Vec::with_capacity(stages);
    for (s, partition) in partitions.iter().enumerate() {
        if partition.num_sensors() != realization.len() {
            return Err(invalid("stage partition does not cover the sensors"));
        }
        let threshold = lo + (hi - lo + 1).div_ceil(2);
        if q.is_power_of_two() {
            assert_eq!(threshold, closed_form_midpoint(q, s + 1, &positives));
        }
        let mut chain = Vec::with_capacity(partition.num_groups());
        let mut u = 0usize;
        for group in partition.groups() {
            if u == 0 {
                u += group.iter().filter(|&&i| realization[i] >= threshold).count();
            }
            chain.push(u);
        }
        let positive = u > 0;
        if positive {
            lo = threshold;
        } else {
            hi = threshold - 1;
        }
        positives.push(positive);
        records.push(SearchStage {
            threshold,
            chain,
            outcome: u,
        });
    }
    debug_assert_eq!(lo, hi);
    Ok(BinarySearchOutcome {
        stages: records,
        maximum: lo,
    })
}

/// Stage partitions built with [`lemma_partition`] on `P(S_i >= ceil(q / 2^s))`,
/// the smallest threshold stage `s` can test.
pub fn binary_search_stage_partitions(src: &SourceModel) -> Result<Vec<Partition>> {
    let q = src.q();
    (1..=search_stages(q))
        .map(|s| {
            let reference = q.div_ceil(1 << s).max(1);
            Ok(lemma_partition(&src.tail_probs(reference), 1)?.partition)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_partition_shapes() {
        let p = a_partition(5, 2).unwrap();
        assert_eq!(p.to_one_based(), vec![vec![1, 2], vec![3, 4, 5]]);
        assert_eq!(a_partition(4, 4).unwrap().num_groups(), 1);
        assert_eq!(a_partition(4, 1).unwrap().group_sizes(), vec![1, 1, 1, 1]);
        assert!(a_partition(4, 0).is_err());
        assert!(a_partition(4, 5).is_err());
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![vec![0], vec![]], 1).is_err());
        assert!(Partition::new(vec![vec![0, 1], vec![1]], 2).is_err());
        assert!(Partition::new(vec![vec![0]], 2).is_err());
        assert!(Partition::new(vec![vec![2, 0], vec![1]], 3).is_ok());
    }

    #[test]
    fn partition_json_is_one_based() {
        let p = a_partition(3, 2).unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), "[[1,2,3]]");
        let q: Partition = serde_json::from_str("[[2],[1,3]]").unwrap();
        assert_eq!(q.groups(), &[vec![1], vec![0, 2]]);
        assert!(serde_json::from_str::<Partition>("[[0,1]]").is_err());
        assert!(serde_json::from_str::<Partition>("[[1],[1]]").is_err());
    }

    #[test]
    fn lemma_partition_pairs() {
        let lp = lemma_partition(&[0.5; 10], 1).unwrap();
        assert!(!lp.tail_merged);
        assert_eq!(
            lp.partition.to_one_based(),
            vec![vec![1, 2], vec![3, 4], vec![5, 6], vec![7, 8], vec![9, 10]]
        );
    }

    #[test]
    fn lemma_partition_small_mass() {
        let lp = lemma_partition(&[0.1, 0.1, 0.1], 1).unwrap();
        assert_eq!(lp.partition.num_groups(), 1);
        let lp = lemma_partition(&[0.9, 0.9], 0).unwrap();
        assert_eq!(lp.partition.num_groups(), 1);
    }

    #[test]
    fn lemma_partition_merges_short_tail() {
        // first interval is forced to {1,2}; the rest has mass 0.6 < 1
        let lp = lemma_partition(&[0.5, 1.0, 0.6], 1).unwrap();
        assert!(lp.tail_merged);
        assert_eq!(lp.partition.num_groups(), 1);
        let lp = lemma_partition(&[1.0, 1.0, 1.0, 0.5, 0.0], 1).unwrap();
        assert!(!lp.tail_merged);
        assert_eq!(lp.partition.to_one_based(), vec![vec![1], vec![2], vec![3, 4, 5]]);
    }

    #[test]
    fn chain_law_binary_max() {
        let p = [0.5, 0.5];
        let part = Partition::singletons(2).unwrap();
        let law = chain_law_from_probs(&p, 1, &part, 0).unwrap();
        assert_eq!(law.state_pmfs()[0], vec![1.0]);
        assert_eq!(law.state_pmfs()[1], vec![0.5, 0.5]);
        assert_eq!(law.state_pmfs()[2], vec![0.25, 0.75]);
    }

    #[test]
    fn chain_law_zero_threshold() {
        let p = [0.3, 0.9, 0.5];
        let part = Partition::singletons(3).unwrap();
        let law = chain_law_from_probs(&p, 0, &part, 1).unwrap();
        for pmf in law.state_pmfs() {
            assert_eq!(pmf, &vec![1.0]);
        }
    }

    #[test]
    fn chain_law_rejects_bad_shift() {
        let part = Partition::singletons(2).unwrap();
        assert!(chain_law_from_probs(&[0.5, 0.5], 1, &part, 2).is_err());
        assert!(chain_law_from_probs(&[0.5], 1, &part, 0).is_err());
    }

    #[test]
    fn search_stage_count() {
        assert_eq!(search_stages(2), 1);
        assert_eq!(search_stages(3), 2);
        assert_eq!(search_stages(4), 2);
        assert_eq!(search_stages(5), 3);
        assert_eq!(search_stages(16), 4);
    }

    #[test]
    fn binary_search_hand_case() {
        let parts = vec![Partition::whole(1).unwrap(); 2];
        let out = binary_search_max_descriptions(&[2], 4, &parts).unwrap();
        let thresholds: Vec<usize> = out.stages.iter().map(|s| s.threshold).collect();
        let outcomes: Vec<usize> = out.stages.iter().map(|s| s.outcome).collect();
        assert_eq!(thresholds, vec![2, 3]);
        assert_eq!(outcomes, vec![1, 0]);
        assert_eq!(out.maximum, 2);
    }

    #[test]
    fn binary_search_all_zero() {
        let parts = vec![Partition::singletons(3).unwrap(); 3];
        let out = binary_search_max_descriptions(&[0, 0, 0], 8, &parts).unwrap();
        assert!(out.stages.iter().all(|s| s.outcome == 0));
        assert_eq!(out.maximum, 0);
    }

    #[test]
    fn midpoint_formula_examples() {
        assert_eq!(closed_form_midpoint(8, 1, &[]), 4);
        assert_eq!(closed_form_midpoint(8, 2, &[true]), 6);
        assert_eq!(closed_form_midpoint(8, 2, &[false]), 2);
        assert_eq!(closed_form_midpoint(8, 3, &[true, false]), 5);
    }

    #[test]
    fn constant_sources_clip() {
        let src = SourceModel::iid(6, vec![0.0, 0.0, 1.0]).unwrap();
        let parts = vec![Partition::singletons(6).unwrap(); 3];
        let s = sample_descriptions(&src, &[0, 0, 2], &parts, ShiftPolicy::None, 3, 5).unwrap();
        let chain = &s.chains[2];
        assert_eq!(chain.trajectory(0), vec![1, 2, 2, 2, 2, 2]);
        assert!(chain.clipped.iter().all(|&c| c == 2));
    }

    #[test]
    fn sampling_is_deterministic() {
        let src = SourceModel::iid(5, vec![0.2, 0.5, 0.3]).unwrap();
        let parts = vec![a_partition(5, 2).unwrap(); 3];
        let a = sample_descriptions(&src, &[1, 2, 1], &parts, ShiftPolicy::UniformRandom, 11, 64).unwrap();
        let b = sample_descriptions(&src, &[1, 2, 1], &parts, ShiftPolicy::UniformRandom, 11, 64).unwrap();
        assert_eq!(a, b);
        let mut x = Vec::new();
        let mut y = Vec::new();
        a.write_trace_csv(&mut x).unwrap();
        b.write_trace_csv(&mut y).unwrap();
        assert_eq!(x, y);
        assert!(String::from_utf8(x).unwrap().starts_with("symbol_index,l,m,U_value\n"));
    }

    #[test]
    fn shift_policy_resolution() {
        let mut rng = stream_rng(1, SHIFT_STREAM);
        assert_eq!(ShiftPolicy::None.resolve(&[3, 4], &mut rng), vec![0, 0]);
        assert_eq!(ShiftPolicy::Fixed { d: 5 }.resolve(&[3, 4], &mut rng), vec![2, 1]);
        let r = ShiftPolicy::UniformRandom.resolve(&[3, 1], &mut rng);
        assert!(r[0] < 3 && r[1] == 0);
    }
}
