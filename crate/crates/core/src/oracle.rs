//! Brute-force counterparts of the dynamic programs, by enumerating every
//! source realization. Only for small instances.

use std::collections::BTreeMap;

use crate::descriptions::Partition;
use crate::entropy::entropy_bits;
use crate::error::{invalid, Result};
use crate::model::{Label, SourceModel, TypeThresholdFunction};

/// Largest number of realizations enumerated.
pub const MAX_REALIZATIONS: u64 = 1 << 24;

/// Calls `visit(symbols, probability)` for every realization with positive
/// probability.
pub fn for_each_realization<F: FnMut(&[usize], f64)>(src: &SourceModel, mut visit: F) -> Result<()> {
    let m = src.num_sensors();
    let q = src.q();
    let count = (q as u64).checked_pow(m as u32).filter(|&c| c <= MAX_REALIZATIONS);
    if count.is_none() {
        return Err(invalid(format!("{q}^{m} realizations are too many to enumerate")));
    }
    let mut symbols = vec![0usize; m];
    loop {
        let p: f64 = symbols.iter().enumerate().map(|(i, &s)| src.pmf(i)[s]).product();
        if p > 0.0 {
            visit(&symbols, p);
        }
        // odometer, last sensor fastest
        let mut i = m;
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            symbols[i] += 1;
            if symbols[i] < q {
                break;
            }
            symbols[i] = 0;
        }
    }
}

/// `(U_1, ..., U_J)` for one realization, groups in `order`.
pub fn chain_trajectory(symbols: &[usize], l: usize, theta: usize, partition: &Partition, order: &[usize]) -> Vec<usize> {
    let mut u = 0;
    order
        .iter()
        .map(|&g| {
            if u < theta {
                u += partition.groups()[g].iter().filter(|&&i| symbols[i] == l).count();
            }
            u
        })
        .collect()
}

fn entropy_of<K>(law: BTreeMap<K, f64>) -> f64 {
    let probs: Vec<f64> = law.into_values().collect();
    entropy_bits(&probs)
}

/// `H(U_1, ..., U_J)` of one chain, by enumeration.
pub fn chain_entropy_enumerated(src: &SourceModel, l: usize, theta: usize, partition: &Partition, shift: usize) -> Result<f64> {
    let j = partition.num_groups();
    if shift >= j {
        return Err(invalid(format!("shift {shift} outside [0:{}]", j - 1)));
    }
    let order: Vec<usize> = (0..j).map(|t| (shift + t) % j).collect();
    let mut law: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for_each_realization(src, |s, p| {
        *law.entry(chain_trajectory(s, l, theta, partition, &order)).or_default() += p;
    })?;
    Ok(entropy_of(law))
}

/// Joint entropy of every symbol's description chain, by enumeration.
pub fn joint_description_entropy(src: &SourceModel, theta: &[usize], partitions: &[Partition]) -> Result<f64> {
    if theta.len() != src.q() || partitions.len() != src.q() {
        return Err(invalid("need one threshold and one partition per symbol"));
    }
    let orders: Vec<Vec<usize>> = partitions.iter().map(|p| (0..p.num_groups()).collect()).collect();
    let mut law: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for_each_realization(src, |s, p| {
        let key: Vec<usize> = (0..theta.len())
            .flat_map(|l| chain_trajectory(s, l, theta[l], &partitions[l], &orders[l]))
            .collect();
        *law.entry(key).or_default() += p;
    })?;
    Ok(entropy_of(law))
}

/// Law of the clipped type vector, by enumeration.
pub fn clipped_distribution_enumerated(src: &SourceModel, theta: &[usize]) -> Result<BTreeMap<Vec<usize>, f64>> {
    let mut law: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for_each_realization(src, |s, p| {
        let mut b = vec![0usize; theta.len()];
        for &v in s {
            b[v] += 1;
        }
        for (x, &t) in b.iter_mut().zip(theta) {
            *x = (*x).min(t);
        }
        *law.entry(b).or_default() += p;
    })?;
    Ok(law)
}

/// `H(f(S) | S_cond)` by enumeration, evaluating `f` on raw symbols.
pub fn function_entropy_enumerated(f: &TypeThresholdFunction, src: &SourceModel, conditioning: &[usize]) -> Result<f64> {
    let mut joint: BTreeMap<(Vec<usize>, Label), f64> = BTreeMap::new();
    let mut marginal: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut err = None;
    for_each_realization(src, |s, p| {
        let known: Vec<usize> = conditioning.iter().map(|&i| s[i]).collect();
        match f.evaluate(s) {
            Ok(label) => {
                *joint.entry((known.clone(), label)).or_default() += p;
                *marginal.entry(known).or_default() += p;
            }
            Err(e) => err = Some(e),
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(entropy_of(joint) - entropy_of(marginal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FunctionKind;

    #[test]
    fn enumerates_every_realization() {
        let src = SourceModel::iid(3, vec![0.2, 0.3, 0.5]).unwrap();
        let mut n = 0;
        let mut total = 0.0;
        for_each_realization(&src, |_, p| {
            n += 1;
            total += p;
        })
        .unwrap();
        assert_eq!(n, 27);
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binary_max_chain() {
        let src = SourceModel::bernoulli_iid(2, 0.5).unwrap();
        let part = Partition::singletons(2).unwrap();
        let h = chain_entropy_enumerated(&src, 1, 1, &part, 0).unwrap();
        assert!((h - 1.5).abs() < 1e-12);
    }

    #[test]
    fn distinct_count_entropy() {
        let src = SourceModel::bernoulli_iid(2, 0.5).unwrap();
        let f = TypeThresholdFunction::standard(FunctionKind::DistinctCount, 2).unwrap();
        assert!((function_entropy_enumerated(&f, &src, &[]).unwrap() - 1.0).abs() < 1e-12);
        assert!(function_entropy_enumerated(&f, &src, &[0, 1]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn refuses_huge_instances() {
        let src = SourceModel::iid(30, vec![0.5, 0.5]).unwrap();
        assert!(for_each_realization(&src, |_, _| {}).is_err());
    }
}
