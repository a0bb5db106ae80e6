//! Parametric Bernoulli ensembles and random instances for sweeps.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::descriptions::Partition;
use crate::error::{invalid, Result};
use crate::model::SourceModel;

/// i.i.d. Bernoulli sources whose parameter may depend on `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ensemble", rename_all = "snake_case")]
pub enum Ensemble {
    /// Bernoulli(c), `c` fixed.
    Constant { c: f64 },
    /// Bernoulli(1/M).
    InverseM,
    /// Bernoulli(1/sqrt(M)).
    InverseSqrtM,
}

impl Ensemble {
    pub fn beta(&self, m: usize) -> f64 {
        match *self {
            Ensemble::Constant { c } => c,
            Ensemble::InverseM => 1.0 / m as f64,
            Ensemble::InverseSqrtM => 1.0 / (m as f64).sqrt(),
        }
    }

    pub fn source(&self, m: usize) -> Result<SourceModel> {
        if m == 0 {
            return Err(invalid("need at least one sensor"));
        }
        SourceModel::bernoulli_iid(m, self.beta(m))
    }

    pub fn label(&self) -> String {
        match *self {
            Ensemble::Constant { c } => format!("bernoulli({c})"),
            Ensemble::InverseM => "bernoulli(1/M)".into(),
            Ensemble::InverseSqrtM => "bernoulli(1/sqrt(M))".into(),
        }
    }
}

/// How a partition is chosen for a given sensor count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PartitionRule {
    /// Fixed group size `a` (clamped to `M`).
    Fixed { a: usize },
    /// `a = floor(sqrt(M))`.
    Sqrt,
    /// One group.
    Whole,
    /// Interval partition from the indicator probabilities.
    Lemma,
}

impl PartitionRule {
    pub fn build(&self, p: &[f64], theta: usize) -> Result<Partition> {
        let m = p.len();
        match *self {
            PartitionRule::Fixed { a } => crate::descriptions::a_partition(m, a.clamp(1, m)),
            PartitionRule::Sqrt => crate::descriptions::a_partition(m, isqrt(m).max(1)),
            PartitionRule::Whole => Partition::whole(m),
            PartitionRule::Lemma => Ok(crate::descriptions::lemma_partition(p, theta)?.partition),
        }
    }
}

pub fn isqrt(m: usize) -> usize {
    let mut r = (m as f64).sqrt() as usize;
    while r * r > m {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= m {
        r += 1;
    }
    r
}

/// Random independent source: each sensor draws a PMF from one of a few
/// shapes (flat, peaked, sparse, near-deterministic).
pub fn random_source<R: Rng>(rng: &mut R, m: usize, q: usize) -> Result<SourceModel> {
    let style = rng.gen_range(0..4);
    let shared = random_pmf(rng, q, style);
    let iid = rng.gen_bool(0.3);
    let pmfs = (0..m)
        .map(|_| if iid { shared.clone() } else { random_pmf(rng, q, style) })
        .collect();
    SourceModel::new(q, pmfs)
}

fn random_pmf<R: Rng>(rng: &mut R, q: usize, style: u32) -> Vec<f64> {
    let mut w: Vec<f64> = (0..q)
        .map(|_| match style {
            0 => rng.gen::<f64>(),
            1 => rng.gen::<f64>().powi(4),
            2 => {
                if rng.gen_bool(0.5) {
                    0.0
                } else {
                    rng.gen::<f64>()
                }
            }
            _ => rng.gen::<f64>().powi(12),
        })
        .collect();
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        w.iter_mut().for_each(|x| *x = 0.0);
        w[rng.gen_range(0..q)] = 1.0;
    } else {
        w.iter_mut().for_each(|x| *x /= total);
    }
    w
}

/// Source over `[0:q-1]` whose per-symbol mass is spread so that indicator
/// sums around `scale` appear; used for large-`M` stress instances.
pub fn random_scaled_source<R: Rng>(rng: &mut R, m: usize, q: usize, scale: f64) -> Result<SourceModel> {
    let base = (scale / m as f64).min(1.0 / q as f64);
    let pmfs = (0..m)
        .map(|_| {
            let mut w: Vec<f64> = (1..q).map(|_| base * rng.gen_range(0.0..2.0)).collect();
            let rest = 1.0 - w.iter().sum::<f64>();
            w.insert(0, rest.max(0.0));
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
            w
        })
        .collect();
    SourceModel::new(q, pmfs)
}

/// Random ordered partition of `[0, M)`.
pub fn random_partition<R: Rng>(rng: &mut R, m: usize) -> Result<Partition> {
    let mut sensors: Vec<usize> = (0..m).collect();
    sensors.shuffle(rng);
    let j = rng.gen_range(1..=m);
    let mut cuts: Vec<usize> = (1..m).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(j - 1).collect();
    cuts.sort_unstable();
    let mut groups = Vec::with_capacity(j);
    let mut start = 0;
    for c in cuts.into_iter().chain(std::iter::once(m)) {
        groups.push(sensors[start..c].to_vec());
        start = c;
    }
    Partition::new(groups, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptions::stream_rng;

    #[test]
    fn ensemble_parameters() {
        assert_eq!(Ensemble::InverseM.beta(100), 0.01);
        assert_eq!(Ensemble::InverseSqrtM.beta(100), 0.1);
        assert_eq!(Ensemble::Constant { c: 0.3 }.beta(7), 0.3);
    }

    #[test]
    fn integer_square_root() {
        assert_eq!(isqrt(0), 0);
        assert_eq!(isqrt(15), 3);
        assert_eq!(isqrt(16), 4);
        assert_eq!(isqrt(1_000_000), 1000);
    }

    #[test]
    fn random_instances_are_valid() {
        let mut rng = stream_rng(5, 0);
        for _ in 0..50 {
            let m = rng.gen_range(1..12);
            let q = rng.gen_range(2..5);
            let src = random_source(&mut rng, m, q).unwrap();
            assert_eq!(src.num_sensors(), m);
            let part = random_partition(&mut rng, m).unwrap();
            assert_eq!(part.num_sensors(), m);
        }
    }

    #[test]
    fn partition_rules() {
        let p = vec![0.1; 10];
        assert_eq!(PartitionRule::Sqrt.build(&p, 1).unwrap().num_groups(), 3);
        assert_eq!(PartitionRule::Whole.build(&p, 1).unwrap().num_groups(), 1);
        assert_eq!(PartitionRule::Fixed { a: 40 }.build(&p, 1).unwrap().num_groups(), 1);
        assert_eq!(PartitionRule::Lemma.build(&p, 1).unwrap().num_groups(), 1);
    }
}
