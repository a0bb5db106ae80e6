//! Achievable rates and upper bounds, in bits per channel use.
//!
//! `log+` (clamped at zero) is used only in the compute-and-forward style
//! rate conditions; the round-robin and cut-set expressions use a plain
//! logarithm because their arguments are never below one.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::descriptions::{chain_law_from_probs, lemma_partition, partition_kernels, Partition, ShiftPolicy};
use crate::entropy::{aggregate_bound, chain_entropy, description_entropy_budget, h2, lemma_bound, shift_sweep};
use crate::error::{invalid, Error, Result};
use crate::model::{function_entropy, Limits, SourceModel, TypeThresholdFunction};

const BUDGET_SLACK: f64 = 1e-9;

pub fn log2_plus(x: f64) -> f64 {
    if x <= 1.0 {
        0.0
    } else {
        x.log2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    Achievable,
    UpperBound,
}

/// Parameters that produced a rate. Unset fields are omitted from JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RateParameters {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_sensors: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_linear: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity_bits: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partitions: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift_policy: Option<ShiftPolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_powers: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_min: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub denominator_bits: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub scheme: String,
    pub kind: RateKind,
    pub rate_bits_per_channel_use: f64,
    pub parameters: RateParameters,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RateReport {
    fn new(scheme: &str, kind: RateKind, rate: f64, parameters: RateParameters) -> Self {
        RateReport {
            scheme: scheme.to_string(),
            kind,
            rate_bits_per_channel_use: rate,
            parameters,
            notes: Vec::new(),
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate_bits_per_channel_use
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ChannelSpec {
    /// Linear finite-field network with capacity `I(W;Y)` in bits.
    FiniteField { capacity: f64 },
    /// Gaussian network with per-sensor average power `power` (linear).
    Gaussian { power: f64 },
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ChannelSpec::FiniteField { capacity } if !(capacity >= 0.0) => {
                Err(invalid(format!("capacity must be >= 0, got {capacity}")))
            }
            ChannelSpec::Gaussian { power } if !(power >= 0.0) => {
                Err(invalid(format!("power must be >= 0, got {power}")))
            }
            _ => Ok(()),
        }
    }
}

fn check_power(power: f64) -> Result<()> {
    ChannelSpec::Gaussian { power }.validate()
}

fn describe_partitions(partitions: &[Partition]) -> Vec<String> {
    partitions.iter().map(Partition::describe).collect()
}

fn check_partitions(f: &TypeThresholdFunction, src: &SourceModel, partitions: &[Partition]) -> Result<()> {
    if f.q() != src.q() {
        return Err(invalid("function and source alphabets differ"));
    }
    if partitions.len() != f.q() {
        return Err(invalid(format!(
            "need one partition per symbol ({}), got {}",
            f.q(),
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
    Ok(())
}

/// Compute-and-forward rate for a group of `group_size` simultaneous
/// transmitters: `(1/2) log2+(1/group_size + P)`.
pub fn cf_rate(group_size: usize, power: f64) -> Result<f64> {
    if group_size == 0 {
        return Err(invalid("group size must be at least 1"));
    }
    check_power(power)?;
    Ok(0.5 * log2_plus(1.0 / group_size as f64 + power))
}

/// Multi-round group broadcast over the finite-field network:
/// `capacity / sum_l H(U^(l)_[1:J_l])`.
pub fn mrgb_rate_finite_field(
    f: &TypeThresholdFunction,
    src: &SourceModel,
    partitions: &[Partition],
    capacity: f64,
) -> Result<RateReport> {
    check_partitions(f, src, partitions)?;
    ChannelSpec::FiniteField { capacity }.validate()?;
    let budget = description_entropy_budget(f, src, partitions)?;
    finite_field_report(f, src, partitions, capacity, budget.total, "sum of per-symbol chain entropies")
}

/// Same as [`mrgb_rate_finite_field`] with the exact joint description
/// entropy as denominator, by enumeration (`M <= 10`).
pub fn mrgb_rate_finite_field_exact(
    f: &TypeThresholdFunction,
    src: &SourceModel,
    partitions: &[Partition],
    capacity: f64,
) -> Result<RateReport> {
    check_partitions(f, src, partitions)?;
    ChannelSpec::FiniteField { capacity }.validate()?;
    let joint = crate::oracle::joint_description_entropy(src, f.theta(), partitions)?;
    finite_field_report(f, src, partitions, capacity, joint, "exact joint description entropy")
}

fn finite_field_report(
    f: &TypeThresholdFunction,
    src: &SourceModel,
    partitions: &[Partition],
    capacity: f64,
    denominator: f64,
    what: &str,
) -> Result<RateReport> {
    let rate = if capacity == 0.0 {
        0.0
    } else if denominator <= 0.0 {
        return Err(Error::Numeric(
            "descriptions carry no information; the rate is unbounded".into(),
        ));
    } else {
        capacity / denominator
    };
    let mut report = RateReport::new(
        "mrgb_finite_field",
        RateKind::Achievable,
        rate,
        RateParameters {
            num_sensors: Some(src.num_sensors()),
            capacity_bits: Some(capacity),
            q: Some(f.q()),
            theta: Some(f.theta().to_vec()),
            partitions: Some(describe_partitions(partitions)),
            denominator_bits: Some(denominator),
            ..Default::default()
        },
    );
    report.notes.push(format!("denominator: {what}"));
    report
        .notes
        .push("assumes every group is smaller than the field order".into());
    Ok(report)
}

/// Channel time fractions `alpha[l][m]` and transmit powers `powers[l][m]`
/// per group, indexed by symbol and natural group index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianAllocation {
    pub alpha: Vec<Vec<f64>>,
    pub powers: Vec<Vec<f64>>,
}

impl GaussianAllocation {
    /// Equal time for every group of every symbol with a positive threshold,
    /// and the largest common power the per-sensor budget allows.
    pub fn equal_time(partitions: &[Partition], theta: &[usize], power: f64) -> Result<Self> {
        if partitions.len() != theta.len() {
            return Err(invalid("need one partition per threshold"));
        }
        let active: Vec<bool> = theta.iter().map(|&t| t > 0).collect();
        let steps: usize = partitions
            .iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|(p, _)| p.num_groups())
            .sum();
        let symbols = active.iter().filter(|&&a| a).count();
        let mut alpha = Vec::with_capacity(partitions.len());
        let mut powers = Vec::with_capacity(partitions.len());
        for (p, &a) in partitions.iter().zip(&active) {
            let j = p.num_groups();
            if a {
                alpha.push(vec![1.0 / steps as f64; j]);
                powers.push(vec![steps as f64 * power / symbols as f64; j]);
            } else {
                alpha.push(vec![0.0; j]);
                powers.push(vec![0.0; j]);
            }
        }
        Ok(GaussianAllocation { alpha, powers })
    }

    /// `alpha_m = beta alpha_l / J_l`, `P_m = J_l P / beta`, with
    /// `alpha_l` proportional to the per-symbol entropy constant.
    pub fn corollary(partitions: &[Partition], theta: &[usize], power: f64, beta: f64) -> Result<Self> {
        if partitions.len() != theta.len() {
            return Err(invalid("need one partition per threshold"));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(invalid(format!("beta must lie in (0,1], got {beta}")));
        }
        let total = aggregate_bound(theta);
        let mut alpha = Vec::with_capacity(partitions.len());
        let mut powers = Vec::with_capacity(partitions.len());
        for (p, &t) in partitions.iter().zip(theta) {
            let j = p.num_groups() as f64;
            let share = lemma_bound(t) / total;
            alpha.push(vec![beta * share / j; p.num_groups()]);
            powers.push(vec![j * power / beta; p.num_groups()]);
        }
        Ok(GaussianAllocation { alpha, powers })
    }
}

/// Checks `sum alpha <= 1` and, for every sensor, `sum alpha_m P_m <= P`
/// over the groups it belongs to.
pub fn audit_power(partitions: &[Partition], alloc: &GaussianAllocation, power: f64) -> Result<()> {
    if alloc.alpha.len() != partitions.len() || alloc.powers.len() != partitions.len() {
        return Err(invalid("allocation shape does not match the partitions"));
    }
    let mut time = 0.0;
    for (l, p) in partitions.iter().enumerate() {
        let j = p.num_groups();
        if alloc.alpha[l].len() != j || alloc.powers[l].len() != j {
            return Err(invalid(format!(
                "symbol {l}: partition has {j} groups, allocation has {} / {}",
                alloc.alpha[l].len(),
                alloc.powers[l].len()
            )));
        }
        for m in 0..j {
            let (a, pw) = (alloc.alpha[l][m], alloc.powers[l][m]);
            if !(a >= 0.0) || !(pw >= 0.0) {
                return Err(Error::Constraint(format!(
                    "symbol {l} group {m}: alpha and power must be non-negative"
                )));
            }
            time += a;
        }
    }
    if time > 1.0 + BUDGET_SLACK {
        return Err(Error::Constraint(format!("time budget: sum alpha = {time} > 1")));
    }
    let m = partitions.first().map(Partition::num_sensors).unwrap_or(0);
    let mut spent = vec![0.0; m];
    for (l, p) in partitions.iter().enumerate() {
        for (g, group) in p.groups().iter().enumerate() {
            let e = alloc.alpha[l][g] * alloc.powers[l][g];
            for &i in group {
                spent[i] += e;
            }
        }
    }
    for (i, &s) in spent.iter().enumerate() {
        if s > power * (1.0 + BUDGET_SLACK) + BUDGET_SLACK {
            return Err(Error::Constraint(format!(
                "power budget of sensor {i}: spends {s}, allowed {power}"
            )));
        }
    }
    Ok(())
}

/// Per-group step entropies `D_m^(l)` in natural group order: averaged over
/// all cyclic shifts for [`ShiftPolicy::UniformRandom`], or for one fixed
/// rotation otherwise.
pub fn step_entropies(p: &[f64], theta: usize, partition: &Partition, shift: ShiftPolicy) -> Result<Vec<f64>> {
    let j = partition.num_groups();
    match shift {
        ShiftPolicy::UniformRandom => {
            let (kernels, _) = partition_kernels(p, partition);
            let sweep = shift_sweep(&kernels, theta);
            let pad = sweep.truncation_bound;
            Ok(sweep
                .averaged_steps()
                .into_iter()
                .map(|d| if d > 0.0 { d + pad } else { d })
                .collect())
        }
        ShiftPolicy::None | ShiftPolicy::Fixed { .. } => {
            let d = match shift {
                ShiftPolicy::Fixed { d } => d % j,
                _ => 0,
            };
            let law = chain_law_from_probs(p, theta, partition, d)?;
            let steps = chain_entropy(&law).per_step;
            let mut out = vec![0.0; j];
            for (t, &g) in law.order().iter().enumerate() {
                out[g] = steps[t];
            }
            Ok(out)
        }
    }
}

/// Multi-round group broadcast over the Gaussian network:
///
/// ```text
/// min_{l,m} (alpha_m/2) log2+(1/|A_m| + P_m) / D_m
/// ```
///
/// Steps with `D_m = 0` need no channel time and are skipped.
pub fn mrgb_rate_gaussian(
    f: &TypeThresholdFunction,
    src: &SourceModel,
    partitions: &[Partition],
    power: f64,
    alloc: &GaussianAllocation,
    shift: ShiftPolicy,
) -> Result<RateReport> {
    check_partitions(f, src, partitions)?;
    check_power(power)?;
    audit_power(partitions, alloc, power)?;
    let mut rate = f64::INFINITY;
    let mut binding = None;
    for (l, part) in partitions.iter().enumerate() {
        let d = step_entropies(&src.indicator_probs(l), f.theta()[l], part, shift)?;
        for (m, group) in part.groups().iter().enumerate() {
            if d[m] == 0.0 {
                continue;
            }
            let numerator = 0.5 * alloc.alpha[l][m] * log2_plus(1.0 / group.len() as f64 + alloc.powers[l][m]);
            let term = numerator / d[m];
            if term < rate {
                rate = term;
                binding = Some((l, m, d[m]));
            }
        }
    }
    let Some((l, m, d)) = binding else {
        return Err(Error::Numeric(
            "every description step is deterministic; the rate is unbounded".into(),
        ));
    };
    let mut report = RateReport::new(
        "mrgb_gaussian",
        RateKind::Achievable,
        rate,
        RateParameters {
            num_sensors: Some(src.num_sensors()),
            power_linear: Some(power),
            q: Some(f.q()),
            theta: Some(f.theta().to_vec()),
            partitions: Some(describe_partitions(partitions)),
            shift_policy: Some(shift),
            alpha: Some(alloc.alpha.clone()),
            step_powers: Some(alloc.powers.clone()),
            denominator_bits: Some(d),
            ..Default::default()
        },
    );
    report
        .notes
        .push(format!("binding step: symbol {l}, group {m}"));
    Ok(report)
}

/// Equal-time Gaussian rate with uniformly random shifts; for the binary
/// maximum this is `min_m (1/2) log2+(1/|A_m| + J P) / sum_d H(U_m(d) | U_m(d)-1)`.
pub fn mrgb_rate_gaussian_equal_time(
    f: &TypeThresholdFunction,
    src: &SourceModel,
    partitions: &[Partition],
    power: f64,
) -> Result<RateReport> {
    let alloc = GaussianAllocation::equal_time(partitions, f.theta(), power)?;
    mrgb_rate_gaussian(f, src, partitions, power, &alloc, ShiftPolicy::UniformRandom)
}

/// `min_l J_l` over the interval partitions of every symbol.
pub fn lemma_j_min(f: &TypeThresholdFunction, src: &SourceModel) -> Result<usize> {
    (0..f.q())
        .map(|l| Ok(lemma_partition(&src.indicator_probs(l), f.theta()[l])?.partition.num_groups()))
        .collect::<Result<Vec<usize>>>()
        .map(|js| js.into_iter().min().unwrap_or(1))
}

fn corollary_objective(beta: f64, m: usize, j_min: usize, power: f64, constant: f64) -> f64 {
    0.5 * beta * log2_plus(1.0 / m as f64 + j_min as f64 * power / beta) / constant
}

/// Maximizes a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_section_max<F: Fn(f64) -> f64>(g: F, lo: f64, hi: f64, rel_tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    while (b - a) > rel_tol * b.abs().max(1e-300) {
        if gc >= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d);
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = (mid, g(mid));
    for x in [lo, hi] {
        let gx = g(x);
        if gx > best.1 {
            best = (x, gx);
        }
    }
    best
}

/// Closed-form lower bound on the Gaussian rate with the interval partitions:
///
/// ```text
/// max_{beta in (0,1]} (beta/2) log2+(1/M + J_min P / beta) / (12 q + (5/2) sum_l log2(1 + theta_l))
/// ```
pub fn mrgb_rate_gaussian_corollary(
    f: &TypeThresholdFunction,
    src: &SourceModel,
    power: f64,
    j_min: usize,
) -> Result<RateReport> {
    if j_min == 0 {
        return Err(invalid("J_min must be at least 1"));
    }
    check_power(power)?;
    let m = src.num_sensors();
    let constant = aggregate_bound(f.theta());
    let (beta, rate) = golden_section_max(
        |b| corollary_objective(b, m, j_min, power, constant),
        1e-12,
        1.0,
        1e-12,
    );
    Ok(RateReport::new(
        "mrgb_gaussian_corollary",
        RateKind::Achievable,
        rate,
        RateParameters {
            num_sensors: Some(m),
            power_linear: Some(power),
            q: Some(f.q()),
            theta: Some(f.theta().to_vec()),
            beta: Some(beta),
            j_min: Some(j_min),
            denominator_bits: Some(constant),
            ..Default::default()
        },
    ))
}

/// Round-robin rate for a supplied description scheme:
/// `min_l (alpha_l/2) log2(1 + P_l) / r_l`, rounds with `r_l = 0` excluded.
///
/// `schedule[l]` is the (0-based) sensor active in round `l`.
pub fn irr_rate_gaussian(
    step_rates: &[f64],
    schedule: &[usize],
    alpha: &[f64],
    round_powers: &[f64],
    power: f64,
) -> Result<RateReport> {
    let n = step_rates.len();
    if n == 0 || schedule.len() != n || alpha.len() != n || round_powers.len() != n {
        return Err(invalid("step rates, schedule, alpha and powers must share one non-zero length"));
    }
    check_power(power)?;
    if step_rates.iter().chain(alpha).chain(round_powers).any(|x| !(*x >= 0.0)) {
        return Err(invalid("rates, time fractions and powers must be non-negative"));
    }
    let time: f64 = alpha.iter().sum();
    if (time - 1.0).abs() > BUDGET_SLACK {
        return Err(Error::Constraint(format!("time budget: sum alpha = {time}, expected 1")));
    }
    let mut spent: BTreeMap<usize, f64> = BTreeMap::new();
    for l in 0..n {
        *spent.entry(schedule[l]).or_default() += alpha[l] * round_powers[l];
    }
    for (&i, &s) in &spent {
        if s > power * (1.0 + BUDGET_SLACK) + BUDGET_SLACK {
            return Err(Error::Constraint(format!(
                "power budget of sensor {i}: spends {s}, allowed {power}"
            )));
        }
    }
    let rate = (0..n)
        .filter(|&l| step_rates[l] > 0.0)
        .map(|l| 0.5 * alpha[l] * (1.0 + round_powers[l]).log2() / step_rates[l])
        .fold(f64::INFINITY, f64::min);
    if !rate.is_finite() {
        return Err(Error::Numeric("all step rates are zero; the rate is unbounded".into()));
    }
    let mut report = RateReport::new(
        "irr_gaussian",
        RateKind::Achievable,
        rate,
        RateParameters {
            power_linear: Some(power),
            alpha: Some(vec![alpha.to_vec()]),
            step_powers: Some(vec![round_powers.to_vec()]),
            denominator_bits: Some(step_rates.iter().sum()),
            ..Default::default()
        },
    );
    report
        .notes
        .push("achievable for the supplied description scheme, not the round-robin optimum".into());
    Ok(report)
}

/// Round-robin rate without power control: `(1/2) log2(1 + P) / sum_l r_l`.
pub fn irr_rate_gaussian_no_power_control(step_rates: &[f64], power: f64) -> Result<RateReport> {
    let total: f64 = step_rates.iter().sum();
    if step_rates.iter().any(|r| !(*r >= 0.0)) || total <= 0.0 {
        return Err(invalid("step rates must be non-negative with a positive sum"));
    }
    let alpha: Vec<f64> = step_rates.iter().map(|r| r / total).collect();
    let schedule: Vec<usize> = (0..step_rates.len()).collect();
    let powers = vec![power; step_rates.len()];
    let mut report = irr_rate_gaussian(step_rates, &schedule, &alpha, &powers, power)?;
    report.scheme = "irr_gaussian_no_power_control".into();
    report.rate_bits_per_channel_use = 0.5 * (1.0 + power).log2() / total;
    Ok(report)
}

/// Upper bound for any round-robin scheme: `(1/2) log2(1 + M P) / I_total`.
pub fn irr_upper_bound(i_total: f64, m: usize, power: f64) -> Result<RateReport> {
    if !(i_total > 0.0) {
        return Err(invalid(format!("I_total must be positive, got {i_total}")));
    }
    if m == 0 {
        return Err(invalid("need at least one sensor"));
    }
    check_power(power)?;
    Ok(RateReport::new(
        "irr_upper_bound",
        RateKind::UpperBound,
        0.5 * (1.0 + m as f64 * power).log2() / i_total,
        RateParameters {
            num_sensors: Some(m),
            power_linear: Some(power),
            denominator_bits: Some(i_total),
            ..Default::default()
        },
    ))
}

/// Sum rate of the round-robin scheme for the binary maximum of `M`
/// i.i.d. Bernoulli(alpha) sources:
///
/// ```text
/// M h2(alpha) - (M-1) (1 - (1-alpha)^M) h2((M alpha / (1 - (1-alpha)^M) - 1) / (M-1))
/// ```
pub fn binary_max_irr_denominator(m: usize, alpha: f64) -> Result<f64> {
    if m < 2 {
        return Err(invalid("need at least two sensors"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let mf = m as f64;
    // 1 - (1-alpha)^M without cancellation for small alpha
    let hit = -((mf * (-alpha).ln_1p()).exp_m1());
    let inner = (mf * alpha / hit - 1.0) / (mf - 1.0);
    if !(-1e-12..=1.0 + 1e-12).contains(&inner) {
        return Err(Error::Numeric(format!(
            "inner argument {inner} outside [0,1] for M={m}, alpha={alpha}"
        )));
    }
    Ok(mf * h2(alpha) - (mf - 1.0) * hit * h2(inner.clamp(0.0, 1.0)))
}

/// Which cuts `Omega` (0-based sensor sets) enter the cut-set minimum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "family", content = "cuts", rename_all = "snake_case")]
pub enum CutFamily {
    /// Every singleton and the full set.
    #[default]
    Default,
    /// All non-empty subsets (`M <= 16`).
    All,
    Custom(Vec<Vec<usize>>),
}

pub const MAX_ALL_CUTS_SENSORS: usize = 16;

impl CutFamily {
    pub fn cuts(&self, m: usize) -> Result<Vec<Vec<usize>>> {
        let cuts = match self {
            CutFamily::Default => {
                let mut c: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
                if m > 1 {
                    c.push((0..m).collect());
                }
                c
            }
            CutFamily::All => {
                if m > MAX_ALL_CUTS_SENSORS {
                    return Err(invalid(format!(
                        "enumerating all cuts needs M <= {MAX_ALL_CUTS_SENSORS}, got {m}"
                    )));
                }
                (1u32..(1 << m))
                    .map(|mask| (0..m).filter(|&i| mask >> i & 1 == 1).collect())
                    .collect()
            }
            CutFamily::Custom(cuts) => {
                let mut out = Vec::with_capacity(cuts.len());
                for cut in cuts {
                    let mut c = cut.clone();
                    c.sort_unstable();
                    c.dedup();
                    if c.is_empty() || c.iter().any(|&i| i >= m) {
                        return Err(invalid(format!("cut {cut:?} is empty or out of range")));
                    }
                    out.push(c);
                }
                out
            }
        };
        if cuts.is_empty() {
            return Err(invalid("the cut family is empty"));
        }
        Ok(cuts)
    }
}

fn complement(cut: &[usize], m: usize) -> Vec<usize> {
    (0..m).filter(|i| cut.binary_search(i).is_err()).collect()
}

/// `P ((1 - rho) I + rho 11^T)`.
pub fn symmetric_covariance(m: usize, power: f64, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| if i == j { power } else { power * rho })
}

/// Covariance of `X_cut` given the remaining coordinates, via the Schur
/// complement. Returns `None` when the conditioning block is singular.
pub fn conditional_covariance(k: &DMatrix<f64>, cut: &[usize]) -> Option<DMatrix<f64>> {
    let rest = complement(cut, k.nrows());
    let koo = k.select_rows(cut).select_columns(cut);
    if rest.is_empty() {
        return Some(koo);
    }
    let kor = k.select_rows(cut).select_columns(&rest);
    let krr = k.select_rows(&rest).select_columns(&rest);
    let chol = krr.cholesky()?;
    let solved = chol.solve(&kor.transpose());
    Some(koo - kor * solved)
}

/// Entry sum of the conditional covariance for the symmetric family with
/// `s = |Omega|` and `r = M - s`, in closed form.
fn symmetric_conditional_sum(s: usize, r: usize, power: f64, rho: f64) -> Option<f64> {
    let (s, r) = (s as f64, r as f64);
    let denom = 1.0 - rho + r * rho;
    if r > 0.0 && (rho >= 1.0 || denom <= 0.0) {
        return None;
    }
    let shrink = if r > 0.0 { rho * rho * r / denom } else { 0.0 };
    Some(power * (s * (1.0 - rho) + s * s * (rho - shrink)))
}

/// Matrix path is used up to this many sensors; above it the closed form.
const MATRIX_CUTSET_MAX: usize = 64;

fn cut_numerator(m: usize, cut: &[usize], power: f64, rho_grid: &[f64]) -> f64 {
    let s = cut.len();
    let gain = (m + 1 - s) as f64;
    let mut best = 0.0f64;
    for &rho in rho_grid {
        let sum = if m <= MATRIX_CUTSET_MAX {
            conditional_covariance(&symmetric_covariance(m, power, rho), cut).map(|c| c.sum())
        } else {
            symmetric_conditional_sum(s, m - s, power, rho)
        };
        if let Some(sum) = sum {
            best = best.max(0.5 * (1.0 + gain * sum.max(0.0)).log2());
        }
    }
    if s == m {
        // rho -> 1 limit of the full cut
        best = best.max(0.5 * (1.0 + (m * m) as f64 * power).log2());
    }
    best
}

/// Default correlation grid `0, 0.01, ..., 0.99`.
pub fn default_rho_grid() -> Vec<f64> {
    (0..100).map(|i| i as f64 / 100.0).collect()
}

/// Per-cut pieces of a cut-set bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutValue {
    pub cut: Vec<usize>,
    pub numerator_bits: f64,
    pub conditional_entropy_bits: f64,
}

/// Gaussian cut-set bound over the symmetric covariance family:
///
/// ```text
/// min_Omega max_rho (1/2) log2(1 + (M + 1 - |Omega|) sum_ij K_{Omega|Omega^c}(rho)) / H(f(S) | S_{Omega^c})
/// ```
///
/// Cuts with `H(f | S_{Omega^c}) = 0` are uninformative and left out.
pub fn cutset_bound_gaussian(
    f: &TypeThresholdFunction,
    src: &SourceModel,
    power: f64,
    rho_grid: &[f64],
    family: &CutFamily,
) -> Result<RateReport> {
    check_power(power)?;
    if let Some(&bad) = rho_grid.iter().find(|&&r| !(0.0..1.0).contains(&r)) {
        return Err(invalid(format!("rho grid values must lie in [0,1), got {bad}")));
    }
    let m = src.num_sensors();
    let mut values = Vec::new();
    for cut in family.cuts(m)? {
        let h = function_entropy(f, src, Some(&complement(&cut, m)), Limits::default())?;
        let num = cut_numerator(m, &cut, power, rho_grid);
        values.push(CutValue {
            cut,
            numerator_bits: num,
            conditional_entropy_bits: h,
        });
    }
    cutset_report("cutset_gaussian", f, src, values, Some(power), None)
}

/// Finite-field cut-set bound from caller-supplied `I(W; Y_0, Y_{Omega^c})`
/// values keyed by the (0-based, sorted) cut.
pub fn cutset_bound_finite_field(
    f: &TypeThresholdFunction,
    src: &SourceModel,
    family: &CutFamily,
    capacities: &BTreeMap<Vec<usize>, f64>,
) -> Result<RateReport> {
    let m = src.num_sensors();
    let mut values = Vec::new();
    for cut in family.cuts(m)? {
        let &c = capacities
            .get(&cut)
            .ok_or_else(|| Error::MissingCutValue(cut.clone()))?;
        if !(c >= 0.0) {
            return Err(invalid(format!("capacity for cut {cut:?} must be >= 0")));
        }
        let h = function_entropy(f, src, Some(&complement(&cut, m)), Limits::default())?;
        values.push(CutValue {
            cut,
            numerator_bits: c,
            conditional_entropy_bits: h,
        });
    }
    cutset_report("cutset_finite_field", f, src, values, None, None)
}

fn cutset_report(
    scheme: &str,
    f: &TypeThresholdFunction,
    src: &SourceModel,
    values: Vec<CutValue>,
    power: Option<f64>,
    capacity: Option<f64>,
) -> Result<RateReport> {
    let mut rate = f64::INFINITY;
    let mut excluded = 0;
    let mut binding = None;
    for v in &values {
        if v.conditional_entropy_bits <= 0.0 {
            excluded += 1;
            continue;
        }
        let r = v.numerator_bits / v.conditional_entropy_bits;
        if r < rate {
            rate = r;
            binding = Some(v);
        }
    }
    let Some(binding) = binding else {
        return Err(Error::Numeric(
            "every cut is uninformative; the bound is infinite".into(),
        ));
    };
    let mut report = RateReport::new(
        scheme,
        RateKind::UpperBound,
        rate,
        RateParameters {
            num_sensors: Some(src.num_sensors()),
            power_linear: power,
            capacity_bits: capacity,
            q: Some(f.q()),
            theta: Some(f.theta().to_vec()),
            denominator_bits: Some(binding.conditional_entropy_bits),
            ..Default::default()
        },
    );
    report.notes.push(format!(
        "binding cut of size {} (0-based sensors {:?})",
        binding.cut.len(),
        if binding.cut.len() > 8 { &binding.cut[..8] } else { &binding.cut[..] }
    ));
    if excluded > 0 {
        report
            .notes
            .push(format!("{excluded} cut(s) with zero conditional entropy left out"));
    }
    Ok(report)
}
