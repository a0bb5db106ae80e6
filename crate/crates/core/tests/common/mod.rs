//! Brute-force reference computations shared by the integration tests.
//! Deliberately independent of the library's own enumeration helpers.
#![allow(dead_code)]

use std::collections::HashMap;

use ttcomp_core::{Partition, SourceModel};

pub fn entropy(probs: impl IntoIterator<Item = f64>) -> f64 {
    probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum()
}

/// Every realization of the source with its probability.
pub fn realizations(src: &SourceModel) -> Vec<(Vec<usize>, f64)> {
    let m = src.num_sensors();
    let q = src.q();
    let total = q.pow(m as u32);
    (0..total)
        .map(|mut code| {
            let mut s = vec![0; m];
            for slot in s.iter_mut() {
                *slot = code % q;
                code /= q;
            }
            let p = s.iter().enumerate().map(|(i, &v)| src.pmf(i)[v]).product();
            (s, p)
        })
        .collect()
}

/// `(U_1, ..., U_J)` for groups spoken in the order `start, start+1, ...`.
pub fn trajectory(s: &[usize], l: usize, theta: usize, part: &Partition, start: usize) -> Vec<usize> {
    let groups = part.groups();
    let j = groups.len();
    let mut out = Vec::with_capacity(j);
    let mut u = 0;
    for t in 0..j {
        let g = &groups[(start + t) % j];
        let inc = if u < theta { g.iter().filter(|&&i| s[i] == l).count() } else { 0 };
        u += inc;
        out.push(u);
    }
    out
}

pub fn joint_chain_entropy(src: &SourceModel, l: usize, theta: usize, part: &Partition, start: usize) -> f64 {
    let mut law: HashMap<Vec<usize>, f64> = HashMap::new();
    for (s, p) in realizations(src) {
        *law.entry(trajectory(&s, l, theta, part, start)).or_insert(0.0) += p;
    }
    entropy(law.into_values())
}

/// Law of the indicator count by enumerating 2^n outcomes.
pub fn count_pmf(p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut pmf = vec![0.0; n + 1];
    for mask in 0u32..(1 << n) {
        let mut w = 1.0;
        for (i, &pi) in p.iter().enumerate() {
            w *= if mask >> i & 1 == 1 { pi } else { 1.0 - pi };
        }
        pmf[mask.count_ones() as usize] += w;
    }
    pmf
}

pub fn binomial(n: usize, beta: f64) -> Vec<f64> {
    // exp(lgamma) style evaluation, kept separate from the library recurrence
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, k| {
            *acc += (k as f64).ln();
            Some(*acc)
        }))
        .collect();
    (0..=n)
        .map(|k| {
            (ln_fact[n] - ln_fact[k] - ln_fact[n - k] + k as f64 * beta.ln() + (n - k) as f64 * (1.0 - beta).ln())
                .exp()
        })
        .collect()
}

pub fn h2(p: f64) -> f64 {
    entropy([p, 1.0 - p])
}
