//! Entropies of description chains and the associated bounds.
//!
//! All entropies are in bits with `0 log 0 = 0`.

use serde::{Deserialize, Serialize};

use crate::descriptions::{chain_law, ChainLaw, Partition};
use crate::error::{invalid, Result};
use crate::model::{SourceModel, TypeThresholdFunction};

/// Sub-threshold mass below which a streamed chain is cut short.
const STREAM_CUTOFF: f64 = 1e-30;

pub fn entropy_bits(pmf: &[f64]) -> f64 {
    pmf.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Binary entropy function.
pub fn h2(p: f64) -> f64 {
    entropy_bits(&[p, 1.0 - p])
}

/// Exact PMF of a sum of independent Bernoulli variables, by iterative
/// convolution.
pub fn poisson_binomial_pmf(p: &[f64]) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(p.len() + 1);
    pmf.push(1.0);
    for &pi in p {
        pmf.push(0.0);
        for k in (1..pmf.len()).rev() {
            pmf[k] = pmf[k] * (1.0 - pi) + pmf[k - 1] * pi;
        }
        pmf[0] *= 1.0 - pi;
    }
    pmf
}

/// PMF with an explicitly dropped upper tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedPmf {
    pub pmf: Vec<f64>,
    /// Probability mass removed from the upper tail (before renormalizing).
    pub dropped_mass: f64,
}

/// Poisson-binomial PMF keeping only the support whose upper tail mass stays
/// above `tail_eps`. The kept part is renormalized.
pub fn poisson_binomial_pmf_truncated(p: &[f64], tail_eps: f64) -> TruncatedPmf {
    let mut pmf = vec![1.0];
    let mut dropped = 0.0;
    for &pi in p {
        pmf.push(0.0);
        for k in (1..pmf.len()).rev() {
            pmf[k] = pmf[k] * (1.0 - pi) + pmf[k - 1] * pi;
        }
        pmf[0] *= 1.0 - pi;
        let mut tail = 0.0;
        while pmf.len() > 1 {
            let last = *pmf.last().unwrap();
            if tail + last >= tail_eps {
                break;
            }
            tail += last;
            pmf.pop();
        }
        dropped += tail;
    }
    let kept: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|x| *x /= kept);
    TruncatedPmf {
        pmf,
        dropped_mass: dropped,
    }
}

/// Binomial(n, beta) PMF, built in log space so that large `n` does not
/// underflow, then normalized.
pub fn binomial_pmf(n: usize, beta: f64) -> Vec<f64> {
    if beta <= 0.0 {
        let mut v = vec![0.0; n + 1];
        v[0] = 1.0;
        return v;
    }
    if beta >= 1.0 {
        let mut v = vec![0.0; n + 1];
        v[n] = 1.0;
        return v;
    }
    let log_odds = (beta / (1.0 - beta)).ln();
    let mut logs = Vec::with_capacity(n + 1);
    let mut current = n as f64 * (1.0 - beta).ln();
    logs.push(current);
    for k in 0..n {
        current += ((n - k) as f64 / (k + 1) as f64).ln() + log_odds;
        logs.push(current);
    }
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut pmf: Vec<f64> = logs.iter().map(|&l| (l - peak).exp()).collect();
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|x| *x /= total);
    pmf
}

pub fn binomial_entropy(n: usize, beta: f64) -> f64 {
    entropy_bits(&binomial_pmf(n, beta))
}

/// Per-step conditional entropies of one description chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyBreakdown {
    /// `H(U_m | U_{m-1})` for m = 1..J, in transmission order.
    pub per_step: Vec<f64>,
    pub total: f64,
    /// `(5/2) log2(1 + theta) + 12`.
    pub bound: f64,
}

/// Joint entropy `H(U_1, ..., U_J)` of a chain via its Markov decomposition.
///
/// Given `U_{m-1} >= theta` the next step is deterministic; below the
/// threshold the increment is the group's Poisson-binomial count, whatever
/// the current value is.
pub fn chain_entropy(law: &ChainLaw) -> EntropyBreakdown {
    let theta = law.theta();
    let per_step: Vec<f64> = law
        .kernels()
        .iter()
        .zip(law.state_pmfs())
        .map(|(kernel, prev)| {
            let below: f64 = prev.iter().take(theta).sum();
            below * entropy_bits(kernel)
        })
        .collect();
    let total = per_step.iter().sum();
    EntropyBreakdown {
        per_step,
        total,
        bound: lemma_bound(theta),
    }
}

/// Which coefficient to use on the last-group term of the binary-maximum
/// closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedFormVariant {
    /// `(1 - beta)^(J - 1)`, as printed in the original derivation.
    Literal,
    /// `(1 - beta)^((J - 1) a)`, i.e. `P(U_{J-1} = 0)`.
    Consistent,
}

/// Entropy of the binary-maximum descriptions for i.i.d. Bernoulli(beta)
/// sources under an `a`-partition, in closed form.
///
/// Only [`ClosedFormVariant::Consistent`] matches the exact chain entropy
/// for `a > 1`; the two variants coincide when `a = 1`.
pub fn binary_max_entropy_closed_form(
    m: usize,
    beta: f64,
    a: usize,
    variant: ClosedFormVariant,
) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("beta must lie in (0,1), got {beta}")));
    }
    if a == 0 || a > m {
        return Err(invalid(format!("group size a = {a} outside [1:{m}]")));
    }
    let j = m / a;
    let miss = 1.0 - beta;
    let first = if j > 1 {
        (1.0 - miss.powf(((j - 1) * a) as f64)) / (1.0 - miss.powf(a as f64)) * binomial_entropy(a, beta)
    } else {
        0.0
    };
    let coefficient = match variant {
        ClosedFormVariant::Literal => miss.powf((j - 1) as f64),
        ClosedFormVariant::Consistent => miss.powf(((j - 1) * a) as f64),
    };
    Ok(first + coefficient * binomial_entropy(m - (j - 1) * a, beta))
}

/// Upper bound on the entropy of a sum of independent Bernoulli variables:
/// `(1/2) log2(2 pi e (sum p + 1/12))`.
pub fn bernoulli_sum_entropy_bound(p: &[f64]) -> f64 {
    let mean: f64 = p.iter().sum();
    0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * (mean + 1.0 / 12.0)).log2()
}

/// Constant that bounds the description entropy of one clipped frequency
/// under the interval partition.
pub fn lemma_bound(theta: usize) -> f64 {
    2.5 * (1.0 + theta as f64).log2() + 12.0
}

/// Sum over symbols of the constant in [`lemma_bound`].
pub fn aggregate_bound(theta: &[usize]) -> f64 {
    theta.iter().map(|&t| lemma_bound(t)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyBudget {
    /// Total chain entropy per symbol `l`.
    pub per_frequency: Vec<f64>,
    /// Sum of the per-symbol totals; upper-bounds the joint description entropy.
    pub total: f64,
    /// `12 q + (5/2) sum_l log2(1 + theta_l)`.
    pub constant: f64,
}

pub fn description_entropy_budget(
    f: &TypeThresholdFunction,
    src: &SourceModel,
    partitions: &[Partition],
) -> Result<EntropyBudget> {
    if partitions.len() != f.q() {
        return Err(invalid(format!(
            "need one partition per symbol ({}), got {}",
            f.q(),
            partitions.len()
        )));
    }
    let per_frequency = partitions
        .iter()
        .enumerate()
        .map(|(l, part)| Ok(chain_entropy(&chain_law(src, l, f.theta()[l], part, 0)?).total))
        .collect::<Result<Vec<f64>>>()?;
    Ok(EntropyBudget {
        total: per_frequency.iter().sum(),
        per_frequency,
        constant: aggregate_bound(f.theta()),
    })
}

/// Chain entropies for every cyclic rotation of one partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSweep {
    /// Total chain entropy when transmission starts at group `d`.
    pub rotation_totals: Vec<f64>,
    /// For each group, the sum over all rotations of its step entropy.
    pub group_step_sums: Vec<f64>,
    /// Upper bound on the entropy dropped by cutting streams short.
    pub truncation_bound: f64,
}

impl ShiftSweep {
    pub fn max_total(&self) -> f64 {
        self.rotation_totals.iter().copied().fold(0.0, f64::max)
    }

    /// Shift-averaged step entropy of each group.
    pub fn averaged_steps(&self) -> Vec<f64> {
        let j = self.group_step_sums.len() as f64;
        self.group_step_sums.iter().map(|s| s / j).collect()
    }
}

/// Streams the sub-threshold mass of the chain for every starting group.
///
/// `kernels` are the per-group count PMFs in natural group order. A stream
/// stops once less than `1e-30` of the mass is still below `theta`; what it
/// would still have contributed is bounded in `truncation_bound`.
pub fn shift_sweep(kernels: &[Vec<f64>], theta: usize) -> ShiftSweep {
    let j = kernels.len();
    let step_entropy: Vec<f64> = kernels.iter().map(|k| entropy_bits(k)).collect();
    let mut rotation_totals = vec![0.0; j];
    let mut group_step_sums = vec![0.0; j];
    let mut truncation_bound: f64 = 0.0;
    if theta == 0 {
        return ShiftSweep {
            rotation_totals,
            group_step_sums,
            truncation_bound,
        };
    }
    let all_steps: f64 = step_entropy.iter().sum();
    let mut below = vec![0.0; theta];
    let mut next = vec![0.0; theta];
    for start in 0..j {
        below.iter_mut().for_each(|x| *x = 0.0);
        below[0] = 1.0;
        let mut done = 0.0;
        for t in 0..j {
            let g = (start + t) % j;
            let mass: f64 = below.iter().sum();
            if mass < STREAM_CUTOFF {
                truncation_bound = truncation_bound.max(mass * (all_steps - done));
                break;
            }
            let contribution = mass * step_entropy[g];
            rotation_totals[start] += contribution;
            group_step_sums[g] += contribution;
            done += step_entropy[g];
            let kernel = &kernels[g];
            for u in 0..theta {
                let mut acc = 0.0;
                for (jj, &pb) in below.iter().enumerate().take(u + 1) {
                    if let Some(&k) = kernel.get(u - jj) {
                        acc += pb * k;
                    }
                }
                next[u] = acc;
            }
            std::mem::swap(&mut below, &mut next);
        }
    }
    ShiftSweep {
        rotation_totals,
        group_step_sums,
        truncation_bound,
    }
}
