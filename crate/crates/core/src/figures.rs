//! Data behind the entropy and rate curves, the interval-partition sweep
//! and the rate table.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptions::{a_partition, chain_law, lemma_partition, partition_kernels, Partition};
use crate::ensembles::{isqrt, Ensemble, PartitionRule};
use crate::entropy::{binary_max_entropy_closed_form, chain_entropy, lemma_bound, shift_sweep, ClosedFormVariant};
use crate::error::{Error, Result};
use crate::model::{FunctionKind, SourceModel, TypeThresholdFunction};
use crate::rates::{
    binary_max_irr_denominator, cutset_bound_gaussian, default_rho_grid, irr_upper_bound, lemma_j_min,
    mrgb_rate_gaussian_corollary, mrgb_rate_gaussian_equal_time, CutFamily, RateReport,
};

pub fn binary_max() -> TypeThresholdFunction {
    TypeThresholdFunction::standard(FunctionKind::Maximum, 2).expect("q = 2 is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure3Row {
    pub m: usize,
    pub beta: f64,
    pub sqrt_a: usize,
    pub h_one_partition_bits: f64,
    pub h_sqrt_partition_bits: f64,
    pub h_m_partition_bits: f64,
    /// Square-root partition with the `(1 - beta)^(J-1)` coefficient.
    pub h_sqrt_partition_literal_bits: f64,
    /// Largest gap between closed form and DP over the three partitions.
    pub dp_max_abs_diff_bits: f64,
}

/// Description entropy of the binary maximum under the 1-, sqrt(M)- and
/// M-partitions for Bernoulli(beta(M)) sources.
pub fn figure3_row(m: usize, ensemble: Ensemble) -> Result<Figure3Row> {
    let beta = ensemble.beta(m);
    let a = isqrt(m).max(1);
    let closed = |a| binary_max_entropy_closed_form(m, beta, a, ClosedFormVariant::Consistent);
    let src = SourceModel::bernoulli_iid(m, beta)?;
    let mut diff: f64 = 0.0;
    let mut values = [0.0; 3];
    for (slot, size) in [1, a, m].into_iter().enumerate() {
        let cf = closed(size)?;
        let dp = chain_entropy(&chain_law(&src, 1, 1, &a_partition(m, size)?, 0)?).total;
        diff = diff.max((cf - dp).abs());
        values[slot] = cf;
    }
    Ok(Figure3Row {
        m,
        beta,
        sqrt_a: a,
        h_one_partition_bits: values[0],
        h_sqrt_partition_bits: values[1],
        h_m_partition_bits: values[2],
        h_sqrt_partition_literal_bits: binary_max_entropy_closed_form(m, beta, a, ClosedFormVariant::Literal)?,
        dp_max_abs_diff_bits: diff,
    })
}

pub fn figure3(ms: &[usize], ensemble: Ensemble) -> Result<Vec<Figure3Row>> {
    ms.par_iter().map(|&m| figure3_row(m, ensemble)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure4Row {
    pub m: usize,
    pub beta: f64,
    pub power_linear: f64,
    pub mrgb_rate: f64,
    pub irr_upper_bound: f64,
    pub irr_denominator_bits: f64,
}

/// Binary-maximum rates: the group broadcast with the sqrt(M)-partition,
/// equal time and random shifts, against the round-robin upper bound.
pub fn figure4_row(m: usize, ensemble: Ensemble, power: f64) -> Result<Figure4Row> {
    let beta = ensemble.beta(m);
    let src = SourceModel::bernoulli_iid(m, beta)?;
    let part = a_partition(m, isqrt(m).max(1))?;
    let mrgb = mrgb_rate_gaussian_equal_time(&binary_max(), &src, &[part.clone(), part], power)?;
    let denom = binary_max_irr_denominator(m, beta)?;
    let irr = irr_upper_bound(denom, m, power)?;
    Ok(Figure4Row {
        m,
        beta,
        power_linear: power,
        mrgb_rate: mrgb.rate(),
        irr_upper_bound: irr.rate(),
        irr_denominator_bits: denom,
    })
}

pub fn figure4(ms: &[usize], ensemble: Ensemble, power: f64) -> Result<Vec<Figure4Row>> {
    ms.par_iter().map(|&m| figure4_row(m, ensemble, power)).collect()
}

/// Interval-partition check for one symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub symbol: usize,
    pub theta: usize,
    pub groups: usize,
    pub tail_merged: bool,
    /// Largest chain entropy over all cyclic shifts, plus the truncation
    /// allowance.
    pub max_shift_total_bits: f64,
    pub bound_bits: f64,
}

impl LemmaCheck {
    pub fn holds(&self) -> bool {
        self.max_shift_total_bits < self.bound_bits
    }
}

/// Builds the interval partition for every symbol and evaluates the chain
/// entropy for every cyclic shift.
pub fn lemma_check(src: &SourceModel, theta: &[usize]) -> Result<Vec<LemmaCheck>> {
    (0..src.q())
        .map(|l| {
            let p = src.indicator_probs(l);
            let lp = lemma_partition(&p, theta[l])?;
            let (kernels, _) = partition_kernels(&p, &lp.partition);
            let sweep = shift_sweep(&kernels, theta[l]);
            Ok(LemmaCheck {
                symbol: l,
                theta: theta[l],
                groups: lp.partition.num_groups(),
                tail_merged: lp.tail_merged,
                max_shift_total_bits: sweep.max_total() + sweep.truncation_bound,
                bound_bits: lemma_bound(theta[l]),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTableRow {
    pub ensemble: String,
    pub m: usize,
    pub beta: f64,
    pub power_linear: f64,
    pub rule: String,
    pub mrgb_rate: f64,
    pub corollary_rate: f64,
    pub j_min: usize,
    pub irr_upper_bound: f64,
    pub cutset_full_bound: f64,
}

pub fn rule_name(rule: PartitionRule) -> String {
    match rule {
        PartitionRule::Fixed { a } => format!("a={a}"),
        PartitionRule::Sqrt => "sqrt".into(),
        PartitionRule::Whole => "whole".into(),
        PartitionRule::Lemma => "lemma".into(),
    }
}

/// Binary-maximum rates for one ensemble, sensor count and power.
pub fn rate_table_row(ensemble: Ensemble, m: usize, power: f64, rule: PartitionRule) -> Result<RateTableRow> {
    let f = binary_max();
    let src = ensemble.source(m)?;
    let parts: Vec<Partition> = (0..2)
        .map(|l| rule.build(&src.indicator_probs(l), f.theta()[l]))
        .collect::<Result<_>>()?;
    let mrgb = unbounded_as_infinite(mrgb_rate_gaussian_equal_time(&f, &src, &parts, power))?;
    let j_min = lemma_j_min(&f, &src)?;
    let cor = mrgb_rate_gaussian_corollary(&f, &src, power, j_min)?;
    let beta = ensemble.beta(m);
    let irr = if m >= 2 {
        irr_upper_bound(binary_max_irr_denominator(m, beta)?, m, power)?.rate()
    } else {
        f64::NAN
    };
    let full = CutFamily::Custom(vec![(0..m).collect()]);
    // a function that is deterministic to double precision has infinite rates
    let cut = unbounded_as_infinite(cutset_bound_gaussian(&f, &src, power, &default_rho_grid(), &full))?;
    Ok(RateTableRow {
        ensemble: ensemble.label(),
        m,
        beta,
        power_linear: power,
        rule: rule_name(rule),
        mrgb_rate: mrgb,
        corollary_rate: cor.rate(),
        j_min,
        irr_upper_bound: irr,
        cutset_full_bound: cut,
    })
}

fn unbounded_as_infinite(r: Result<RateReport>) -> Result<f64> {
    match r {
        Ok(r) => Ok(r.rate()),
        Err(Error::Numeric(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

pub fn rate_table(
    ensembles: &[Ensemble],
    ms: &[usize],
    powers: &[f64],
    rules: &[PartitionRule],
) -> Result<Vec<RateTableRow>> {
    let mut grid = Vec::new();
    for &e in ensembles {
        for &m in ms {
            for &p in powers {
                for &r in rules {
                    grid.push((e, m, p, r));
                }
            }
        }
    }
    grid.par_iter()
        .map(|&(e, m, p, r)| rate_table_row(e, m, p, r))
        .collect()
}
