//! Sources, type vectors and type-threshold functions.
//!
//! A type-threshold function only looks at the clipped frequencies
//! `min(theta_l, b_l)`, so everything downstream (entropies, cut-set
//! denominators, the fusion decoder) works on the clipped box
//! `[0:theta_0] x ... x [0:theta_{q-1}]` rather than on raw realizations.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::entropy::entropy_bits;
use crate::error::{invalid, Error, Result};

/// Default cap on the number of clipped-box states a DP may allocate.
pub const DEFAULT_MAX_STATES: usize = 1 << 22;

const PMF_SUM_TOL: f64 = 1e-12;

/// Resource caps for exact computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_states: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_states: DEFAULT_MAX_STATES,
        }
    }
}

/// Independent per-sensor distributions over the alphabet `[0:q-1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSourceModel")]
pub struct SourceModel {
    q: usize,
    pmfs: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawSourceModel {
    q: usize,
    pmfs: Vec<Vec<f64>>,
}

impl TryFrom<RawSourceModel> for SourceModel {
    type Error = Error;

    fn try_from(raw: RawSourceModel) -> Result<Self> {
        SourceModel::new(raw.q, raw.pmfs)
    }
}

impl SourceModel {
    pub fn new(q: usize, pmfs: Vec<Vec<f64>>) -> Result<Self> {
        if q < 2 {
            return Err(invalid(format!("alphabet size must be at least 2, got {q}")));
        }
        if pmfs.is_empty() {
            return Err(invalid("a source model needs at least one sensor"));
        }
        for (i, pmf) in pmfs.iter().enumerate() {
            if pmf.len() != q {
                return Err(invalid(format!(
                    "pmf of sensor {i} has length {}, expected {q}",
                    pmf.len()
                )));
            }
            if pmf.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(invalid(format!("pmf of sensor {i} has entries outside [0,1]")));
            }
            let total: f64 = pmf.iter().sum();
            if (total - 1.0).abs() > PMF_SUM_TOL {
                return Err(invalid(format!("pmf of sensor {i} sums to {total}")));
            }
        }
        Ok(SourceModel { q, pmfs })
    }

    /// `m` sensors sharing one distribution.
    pub fn iid(m: usize, pmf: Vec<f64>) -> Result<Self> {
        let q = pmf.len();
        SourceModel::new(q, vec![pmf; m])
    }

    /// Binary sources with `P(S_i = 1) = ps[i]`.
    pub fn bernoulli(ps: &[f64]) -> Result<Self> {
        if ps.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(invalid("Bernoulli parameters must lie in [0,1]"));
        }
        SourceModel::new(2, ps.iter().map(|&p| vec![1.0 - p, p]).collect())
    }

    pub fn bernoulli_iid(m: usize, beta: f64) -> Result<Self> {
        SourceModel::bernoulli(&vec![beta; m])
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn num_sensors(&self) -> usize {
        self.pmfs.len()
    }

    pub fn pmfs(&self) -> &[Vec<f64>] {
        &self.pmfs
    }

    pub fn pmf(&self, sensor: usize) -> &[f64] {
        &self.pmfs[sensor]
    }

    /// `P(S_i = symbol)` for every sensor.
    pub fn indicator_probs(&self, symbol: usize) -> Vec<f64> {
        self.pmfs.iter().map(|pmf| pmf[symbol]).collect()
    }

    /// `P(S_i >= threshold)` for every sensor.
    pub fn tail_probs(&self, threshold: usize) -> Vec<f64> {
        self.pmfs
            .iter()
            .map(|pmf| pmf.iter().skip(threshold).sum::<f64>().min(1.0))
            .collect()
    }

    /// Restriction to a subset of sensors (0-based indices, order kept).
    pub fn restrict(&self, sensors: &[usize]) -> Result<SourceModel> {
        let pmfs = sensors
            .iter()
            .map(|&i| {
                self.pmfs
                    .get(i)
                    .cloned()
                    .ok_or_else(|| invalid(format!("sensor index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        SourceModel::new(self.q, pmfs)
    }
}

/// Frequency histogram `b_l = #{m : s_m = l}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeVector(Vec<usize>);

impl TypeVector {
    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn clipped(&self, theta: &[usize]) -> Vec<usize> {
        self.0.iter().zip(theta).map(|(&b, &t)| b.min(t)).collect()
    }
}

pub fn type_vector(symbols: &[usize], q: usize) -> Result<TypeVector> {
    let mut counts = vec![0usize; q];
    for (position, &symbol) in symbols.iter().enumerate() {
        if symbol >= q {
            return Err(Error::SymbolOutOfRange {
                position,
                symbol,
                max: q.saturating_sub(1),
            });
        }
        counts[symbol] += 1;
    }
    Ok(TypeVector(counts))
}

/// Output label of a type-threshold function.
///
/// Heavy-hitter sets are kept sorted; top-average values are the exact
/// `(sum, count)` pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Int(i64),
    Set(Vec<usize>),
    Ratio { sum: u64, count: u64 },
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Int(v) => write!(f, "{v}"),
            Label::Set(items) => {
                let parts: Vec<String> = items.iter().map(|v| v.to_string()).collect();
                write!(f, "{{{}}}", parts.join(","))
            }
            Label::Ratio { sum, count } => write!(f, "{sum}/{count}"),
        }
    }
}

/// The standard type-threshold functions with their threshold vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionKind {
    Maximum,
    DistinctCount,
    /// Average of the `count` largest values.
    AvgTop { count: usize },
    FrequencyIndicator { symbol: usize },
    HeavyHitters { threshold: usize },
}

impl FunctionKind {
    /// Parses `maximum`, `distinct_count`, `avg_top:<l>`,
    /// `frequency_indicator:<l>` or `heavy_hitters:<T>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, param) = match spec.split_once(':') {
            Some((n, p)) => {
                let v = p
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| invalid(format!("bad parameter in `{spec}`")))?;
                (n.trim(), Some(v))
            }
            None => (spec.trim(), None),
        };
        let need = |p: Option<usize>| {
            p.ok_or_else(|| invalid(format!("`{name}` needs a parameter, e.g. `{name}:2`")))
        };
        match name {
            "maximum" | "max" => Ok(FunctionKind::Maximum),
            "distinct_count" | "distinct" => Ok(FunctionKind::DistinctCount),
            "avg_top" => Ok(FunctionKind::AvgTop { count: need(param)? }),
            "frequency_indicator" => Ok(FunctionKind::FrequencyIndicator {
                symbol: need(param)?,
            }),
            "heavy_hitters" => Ok(FunctionKind::HeavyHitters {
                threshold: need(param)?,
            }),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }

    /// Kinds for which `f(s, 0, ..., 0) = f(s)` holds by construction.
    pub fn padding_invariant(&self) -> bool {
        match self {
            FunctionKind::Maximum | FunctionKind::AvgTop { .. } => true,
            FunctionKind::FrequencyIndicator { symbol } => *symbol != 0,
            FunctionKind::DistinctCount | FunctionKind::HeavyHitters { .. } => false,
        }
    }
}

impl FromStr for FunctionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FunctionKind::parse(s)
    }
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionKind::Maximum => write!(f, "maximum"),
            FunctionKind::DistinctCount => write!(f, "distinct_count"),
            FunctionKind::AvgTop { count } => write!(f, "avg_top:{count}"),
            FunctionKind::FrequencyIndicator { symbol } => write!(f, "frequency_indicator:{symbol}"),
            FunctionKind::HeavyHitters { threshold } => write!(f, "heavy_hitters:{threshold}"),
        }
    }
}

/// Mixed-radix indexing of the clipped box, last coordinate fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ClippedBox {
    theta: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl ClippedBox {
    pub(crate) fn new(theta: &[usize], limits: Limits) -> Result<Self> {
        let required = theta
            .iter()
            .try_fold(1u128, |acc, &t| acc.checked_mul(t as u128 + 1))
            .unwrap_or(u128::MAX);
        if required > limits.max_states as u128 {
            return Err(Error::StateSpaceTooLarge {
                required,
                cap: limits.max_states,
            });
        }
        let mut strides = vec![1usize; theta.len()];
        for l in (0..theta.len().saturating_sub(1)).rev() {
            strides[l] = strides[l + 1] * (theta[l + 1] + 1);
        }
        Ok(ClippedBox {
            theta: theta.to_vec(),
            strides,
            size: required as usize,
        })
    }

    pub(crate) fn size(&self) -> usize {
        self.size
    }

    pub(crate) fn index(&self, clipped: &[usize]) -> usize {
        clipped.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    pub(crate) fn coord(&self, index: usize, l: usize) -> usize {
        (index / self.strides[l]) % (self.theta[l] + 1)
    }

    pub(crate) fn coords(&self, index: usize) -> Vec<usize> {
        (0..self.theta.len()).map(|l| self.coord(index, l)).collect()
    }

    fn contains(&self, clipped: &[usize]) -> bool {
        clipped.len() == self.theta.len() && clipped.iter().zip(&self.theta).all(|(c, t)| c <= t)
    }
}

/// A type-threshold function: threshold vector plus a reducer table over
/// the clipped box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFunction")]
pub struct TypeThresholdFunction {
    q: usize,
    theta: Vec<usize>,
    /// Row-major over `(b_0, ..., b_{q-1})`, last coordinate fastest.
    reducer: Vec<Label>,
}

#[derive(Deserialize)]
struct RawFunction {
    q: usize,
    theta: Vec<usize>,
    reducer: Vec<Label>,
}

impl TryFrom<RawFunction> for TypeThresholdFunction {
    type Error = Error;

    fn try_from(raw: RawFunction) -> Result<Self> {
        TypeThresholdFunction::from_table(raw.q, raw.theta, raw.reducer)
    }
}

impl TypeThresholdFunction {
    pub fn from_table(q: usize, theta: Vec<usize>, reducer: Vec<Label>) -> Result<Self> {
        if q < 2 {
            return Err(invalid(format!("alphabet size must be at least 2, got {q}")));
        }
        if theta.len() != q {
            return Err(invalid(format!(
                "threshold vector has length {}, expected {q}",
                theta.len()
            )));
        }
        let cells = ClippedBox::new(&theta, Limits::default())?;
        if reducer.len() != cells.size() {
            return Err(invalid(format!(
                "reducer table has {} entries, the clipped box has {}",
                reducer.len(),
                cells.size()
            )));
        }
        Ok(TypeThresholdFunction { q, theta, reducer })
    }

    /// Tabulates `reducer` over the whole clipped box.
    pub fn from_reducer<F>(q: usize, theta: Vec<usize>, reducer: F) -> Result<Self>
    where
        F: Fn(&[usize]) -> Label,
    {
        if theta.len() != q {
            return Err(invalid(format!(
                "threshold vector has length {}, expected {q}",
                theta.len()
            )));
        }
        let cells = ClippedBox::new(&theta, Limits::default())?;
        let table = (0..cells.size()).map(|i| reducer(&cells.coords(i))).collect();
        TypeThresholdFunction::from_table(q, theta, table)
    }

    pub fn standard(kind: FunctionKind, q: usize) -> Result<Self> {
        if q < 2 {
            return Err(invalid(format!("alphabet size must be at least 2, got {q}")));
        }
        match kind {
            FunctionKind::Maximum => {
                let mut theta = vec![1; q];
                theta[0] = 0;
                Self::from_reducer(q, theta, |c| {
                    let top = (1..c.len()).rev().find(|&l| c[l] >= 1).unwrap_or(0);
                    Label::Int(top as i64)
                })
            }
            FunctionKind::DistinctCount => Self::from_reducer(q, vec![1; q], |c| {
                Label::Int(c.iter().filter(|&&v| v >= 1).count() as i64)
            }),
            FunctionKind::AvgTop { count } => {
                if count == 0 {
                    return Err(invalid("avg_top needs at least one value"));
                }
                let mut theta = vec![count; q];
                theta[0] = 0;
                Self::from_reducer(q, theta, move |c| {
                    let mut remaining = count;
                    let mut sum = 0u64;
                    for v in (1..c.len()).rev() {
                        let take = remaining.min(c[v]);
                        sum += (take * v) as u64;
                        remaining -= take;
                    }
                    // Missing values are zeros (padding), so the divisor is fixed.
                    Label::Ratio {
                        sum,
                        count: count as u64,
                    }
                })
            }
            FunctionKind::FrequencyIndicator { symbol } => {
                if symbol >= q {
                    return Err(invalid(format!("frequency indicator symbol {symbol} >= q = {q}")));
                }
                let mut theta = vec![0; q];
                theta[symbol] = 1;
                Self::from_reducer(q, theta, move |c| Label::Int((c[symbol] >= 1) as i64))
            }
            FunctionKind::HeavyHitters { threshold } => {
                if threshold == 0 {
                    return Err(invalid("heavy hitters threshold must be at least 1"));
                }
                Self::from_reducer(q, vec![threshold; q], move |c| {
                    Label::Set((0..c.len()).filter(|&l| c[l] >= threshold).collect())
                })
            }
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn theta(&self) -> &[usize] {
        &self.theta
    }

    pub fn reducer_table(&self) -> &[Label] {
        &self.reducer
    }

    pub(crate) fn cells(&self) -> ClippedBox {
        ClippedBox::new(&self.theta, Limits::default()).expect("validated at construction")
    }

    /// Reducer applied to an already clipped vector.
    pub fn evaluate_clipped(&self, clipped: &[usize]) -> Result<&Label> {
        let cells = self.cells();
        if !cells.contains(clipped) {
            return Err(invalid(format!("{clipped:?} is outside the clipped box {:?}", self.theta)));
        }
        Ok(&self.reducer[cells.index(clipped)])
    }

    pub(crate) fn label_at(&self, index: usize) -> &Label {
        &self.reducer[index]
    }

    pub fn evaluate(&self, symbols: &[usize]) -> Result<Label> {
        let types = type_vector(symbols, self.q)?;
        let clipped = types.clipped(&self.theta);
        Ok(self.evaluate_clipped(&clipped)?.clone())
    }
}

/// Exact law of the clipped type vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ClippedTypeDistribution {
    cells: ClippedBox,
    probs: Vec<f64>,
}

impl ClippedTypeDistribution {
    pub fn theta(&self) -> &[usize] {
        &self.cells.theta
    }

    pub fn prob(&self, clipped: &[usize]) -> f64 {
        if !self.cells.contains(clipped) {
            return 0.0;
        }
        self.probs[self.cells.index(clipped)]
    }

    /// Non-zero entries in box order.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (self.cells.coords(i), p))
    }

    pub fn to_map(&self) -> BTreeMap<Vec<usize>, f64> {
        self.iter().collect()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Law of `min(theta_l, b_l)` for one symbol.
    pub fn marginal(&self, l: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.cells.theta[l] + 1];
        for (i, &p) in self.probs.iter().enumerate() {
            out[self.cells.coord(i, l)] += p;
        }
        out
    }

    /// Law of `f(S)` obtained by pushing the clipped law through the reducer.
    pub fn pushforward(&self, f: &TypeThresholdFunction) -> Result<BTreeMap<Label, f64>> {
        if f.theta() != self.theta() {
            return Err(invalid("function thresholds differ from the distribution's"));
        }
        let mut out = BTreeMap::new();
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                *out.entry(f.label_at(i).clone()).or_insert(0.0) += p;
            }
        }
        Ok(out)
    }
}

/// Exact distribution of the clipped type vector by DP over sensors.
///
/// `initial` seeds the counts (e.g. with the clipped type of sensors that are
/// already known); it defaults to all zeros.
pub fn clipped_type_distribution(
    src: &SourceModel,
    theta: &[usize],
    initial: Option<&[usize]>,
    limits: Limits,
) -> Result<ClippedTypeDistribution> {
    let sensors: Vec<usize> = (0..src.num_sensors()).collect();
    clipped_type_distribution_over(src, &sensors, theta, initial, limits)
}

pub(crate) fn clipped_type_distribution_over(
    src: &SourceModel,
    sensors: &[usize],
    theta: &[usize],
    initial: Option<&[usize]>,
    limits: Limits,
) -> Result<ClippedTypeDistribution> {
    if theta.len() != src.q() {
        return Err(invalid(format!(
            "threshold vector has length {}, the alphabet has {} symbols",
            theta.len(),
            src.q()
        )));
    }
    let cells = ClippedBox::new(theta, limits)?;
    let start = match initial {
        Some(c) if !cells.contains(c) => {
            return Err(invalid(format!("initial counts {c:?} outside the clipped box {theta:?}")))
        }
        Some(c) => cells.index(c),
        None => 0,
    };
    let mut probs = vec![0.0; cells.size()];
    probs[start] = 1.0;
    let mut next = vec![0.0; cells.size()];
    for &sensor in sensors {
        let pmf = src.pmf(sensor);
        next.iter_mut().for_each(|x| *x = 0.0);
        for (idx, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (v, &pv) in pmf.iter().enumerate() {
                if pv == 0.0 {
                    continue;
                }
                let target = if cells.coord(idx, v) < theta[v] {
                    idx + cells.strides[v]
                } else {
                    idx
                };
                next[target] += p * pv;
            }
        }
        std::mem::swap(&mut probs, &mut next);
    }
    Ok(ClippedTypeDistribution { cells, probs })
}

/// `H(f(S))`, or `H(f(S) | S_cond)` when a conditioning set (0-based sensor
/// indices) is given.
///
/// The conditional entropy only depends on a realization of the conditioning
/// sensors through its clipped type, so realizations are aggregated by that
/// type before the inner entropies are averaged.
pub fn function_entropy(
    f: &TypeThresholdFunction,
    src: &SourceModel,
    conditioning: Option<&[usize]>,
    limits: Limits,
) -> Result<f64> {
    if f.q() != src.q() {
        return Err(invalid("function and source alphabets differ"));
    }
    let m = src.num_sensors();
    let known: Vec<usize> = match conditioning {
        None => Vec::new(),
        Some(set) => {
            let mut v = set.to_vec();
            v.sort_unstable();
            v.dedup();
            if let Some(&bad) = v.iter().find(|&&i| i >= m) {
                return Err(invalid(format!("conditioning index {bad} out of range")));
            }
            v
        }
    };
    let unknown: Vec<usize> = (0..m).filter(|i| known.binary_search(i).is_err()).collect();
    let theta = f.theta();
    if known.is_empty() {
        let dist = clipped_type_distribution_over(src, &unknown, theta, None, limits)?;
        return Ok(label_entropy(&dist.pushforward(f)?));
    }
    let seeds = clipped_type_distribution_over(src, &known, theta, None, limits)?;
    let mut total = 0.0;
    for (seed, weight) in seeds.iter() {
        let dist = clipped_type_distribution_over(src, &unknown, theta, Some(&seed), limits)?;
        total += weight * label_entropy(&dist.pushforward(f)?);
    }
    Ok(total)
}

fn label_entropy(law: &BTreeMap<Label, f64>) -> f64 {
    let probs: Vec<f64> = law.values().copied().collect();
    entropy_bits(&probs)
}
