//! Symbol-level simulation of the multi-round group broadcast.
//!
//! Each frequency phase `l` runs its rounds group by group. In a round the
//! active sensors transmit `1{S_i = l, counter < theta_l}` per symbol, the
//! channel delivers the sum, and every node adds it to its counter. Channels
//! are taken as reliable.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::descriptions::{search_stages, stream_rng, Partition, ShiftPolicy, SourceBlock, SHIFT_STREAM};
use crate::entropy::entropy_bits;
use crate::error::{invalid, Result};
use crate::model::{FunctionKind, Label, SourceModel, TypeThresholdFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TraceDetail {
    /// Per-round aggregates only.
    #[default]
    Summary,
    /// Also the per-symbol sums and counters of every round.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub function: TypeThresholdFunction,
    pub source: SourceModel,
    /// One partition per symbol, or one per stage for the binary search.
    pub partitions: Vec<Partition>,
    #[serde(default)]
    pub shift: ShiftPolicy,
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub early_termination: bool,
    #[serde(default)]
    pub detail: TraceDetail,
}

impl SimConfig {
    fn validate(&self, phases: usize) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if self.function.q() != self.source.q() {
            return Err(invalid("function and source alphabets differ"));
        }
        if self.partitions.len() != phases {
            return Err(invalid(format!(
                "need {phases} partitions, got {}",
                self.partitions.len()
            )));
        }
        if let Some(p) = self
            .partitions
            .iter()
            .find(|p| p.num_sensors() != self.source.num_sensors())
        {
            return Err(invalid(format!(
                "partition covers {} sensors, the source has {}",
                p.num_sensors(),
                self.source.num_sensors()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// Frequency symbol, or stage index for the binary search.
    pub phase: usize,
    /// 1-based position in the transmission order.
    pub round: usize,
    /// Natural index of the active group.
    pub group: usize,
    /// Sum over symbols of the transmitted sums.
    pub sum_total: u64,
    /// Symbols whose counter has reached the phase threshold after this round.
    pub saturated: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sums: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counters: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: usize,
    pub theta: usize,
    pub shift: usize,
    pub rounds_used: usize,
    pub rounds_skipped: usize,
    pub final_counters: Vec<u32>,
    /// Multiplicities of the distinct counter trajectories.
    pub trajectory_counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTrace {
    pub k: usize,
    pub rounds: Vec<RoundRecord>,
    pub phases: Vec<PhaseSummary>,
    pub outputs: Vec<Label>,
    pub mismatches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub k: usize,
    pub mismatches: usize,
    pub rounds_used: usize,
    pub rounds_skipped: usize,
    pub empirical_entropy_bits: Vec<f64>,
    pub note: String,
}

impl ProtocolTrace {
    pub fn rounds_used(&self) -> usize {
        self.phases.iter().map(|p| p.rounds_used).sum()
    }

    pub fn rounds_skipped(&self) -> usize {
        self.phases.iter().map(|p| p.rounds_skipped).sum()
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            k: self.k,
            mismatches: self.mismatches,
            rounds_used: self.rounds_used(),
            rounds_skipped: self.rounds_skipped(),
            empirical_entropy_bits: (0..self.phases.len())
                .map(|l| empirical_chain_entropy(self, l))
                .collect(),
            note: "plug-in estimates, biased low by about (support - 1) / (2 k ln 2) bits".into(),
        }
    }

    /// One row per round.
    pub fn write_rounds_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "phase,round,group,sum_total_count,saturated_symbols_count")?;
        for r in &self.rounds {
            writeln!(out, "{},{},{},{},{}", r.phase, r.round, r.group, r.sum_total, r.saturated)?;
        }
        Ok(())
    }
}

/// Plug-in entropy of the sampled trajectories `(U_1, ..., U_J)` of one phase.
pub fn empirical_chain_entropy(trace: &ProtocolTrace, phase: usize) -> f64 {
    let Some(p) = trace.phases.get(phase) else {
        return 0.0;
    };
    let k = trace.k as f64;
    let probs: Vec<f64> = p.trajectory_counts.iter().map(|&c| c as f64 / k).collect();
    entropy_bits(&probs)
}

/// Assigns each symbol an id for its trajectory prefix. Ids only change when
/// a counter moves, keyed by the round and the new value.
struct TrajectoryIds {
    ids: Vec<u32>,
    next: HashMap<(u32, u32, u32), u32>,
}

impl TrajectoryIds {
    fn new(k: usize) -> Self {
        TrajectoryIds {
            ids: vec![0; k],
            next: HashMap::new(),
        }
    }

    fn advance(&mut self, j: usize, round: usize, value: u32) {
        let fresh = self.next.len() as u32 + 1;
        self.ids[j] = *self
            .next
            .entry((self.ids[j], round as u32, value))
            .or_insert(fresh);
    }

    fn counts(&self) -> Vec<u64> {
        let mut c: BTreeMap<u32, u64> = BTreeMap::new();
        for &id in &self.ids {
            *c.entry(id).or_default() += 1;
        }
        let mut v: Vec<u64> = c.into_values().collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v
    }
}

/// Rounds of one phase. `active(i, j, counter)` is the bit sensor `i`
/// transmits for symbol `j`.
fn run_phase<F>(
    sources: &SourceBlock,
    phase: usize,
    theta: usize,
    partition: &Partition,
    shift: usize,
    early_termination: bool,
    detail: TraceDetail,
    rounds: &mut Vec<RoundRecord>,
    active: F,
) -> PhaseSummary
where
    F: Fn(u32, usize, u32) -> bool,
{
    let k = sources.len();
    let j_count = partition.num_groups();
    let mut counters = vec![0u32; k];
    let mut sums = vec![0u32; k];
    let mut traj = TrajectoryIds::new(k);
    let mut saturated = if theta == 0 { k } else { 0 };
    let mut used = 0;
    for t in 0..j_count {
        if early_termination && saturated == k {
            break;
        }
        let group = (shift + t) % j_count;
        sums.iter_mut().for_each(|s| *s = 0);
        for &i in &partition.groups()[group] {
            let row = sources.sensor(i);
            for j in 0..k {
                if active(row[j], j, counters[j]) {
                    sums[j] += 1;
                }
            }
        }
        let mut sum_total = 0u64;
        for j in 0..k {
            if sums[j] > 0 {
                let before = counters[j];
                counters[j] += sums[j];
                sum_total += sums[j] as u64;
                traj.advance(j, t, counters[j]);
                if (before as usize) < theta && counters[j] as usize >= theta {
                    saturated += 1;
                }
            }
        }
        used += 1;
        rounds.push(RoundRecord {
            phase,
            round: t + 1,
            group,
            sum_total,
            saturated,
            sums: (detail == TraceDetail::Full).then(|| sums.clone()),
            counters: (detail == TraceDetail::Full).then(|| counters.clone()),
        });
    }
    PhaseSummary {
        phase,
        theta,
        shift,
        rounds_used: used,
        rounds_skipped: j_count - used,
        final_counters: counters,
        trajectory_counts: traj.counts(),
    }
}

/// Runs every frequency phase and evaluates the function at the fusion
/// center from the clipped counters.
pub fn run_protocol(cfg: &SimConfig) -> Result<ProtocolTrace> {
    let q = cfg.source.q();
    cfg.validate(q)?;
    let theta = cfg.function.theta();
    let sources = SourceBlock::draw(&cfg.source, cfg.k, cfg.seed);
    let counts: Vec<usize> = cfg.partitions.iter().map(Partition::num_groups).collect();
    let shifts = cfg.shift.resolve(&counts, &mut stream_rng(cfg.seed, SHIFT_STREAM));
    let mut rounds = Vec::new();
    let mut phases = Vec::with_capacity(q);
    for l in 0..q {
        let th = theta[l] as u32;
        let sym = l as u32;
        phases.push(run_phase(
            &sources,
            l,
            theta[l],
            &cfg.partitions[l],
            shifts[l],
            cfg.early_termination,
            cfg.detail,
            &mut rounds,
            |s, _, c| s == sym && c < th,
        ));
    }
    let mut outputs = Vec::with_capacity(cfg.k);
    let mut mismatches = 0;
    let mut clipped = vec![0usize; q];
    for j in 0..cfg.k {
        for l in 0..q {
            clipped[l] = (phases[l].final_counters[j] as usize).min(theta[l]);
        }
        let fused = cfg.function.evaluate_clipped(&clipped)?.clone();
        if fused != cfg.function.evaluate(&sources.column(j))? {
            mismatches += 1;
        }
        outputs.push(fused);
    }
    Ok(ProtocolTrace {
        k: cfg.k,
        rounds,
        phases,
        outputs,
        mismatches,
    })
}

/// Binary search for the maximum, one stage per partition in `cfg`.
///
/// Stage `s` tests `S_i >= D[j]` with a threshold-1 counter; the live
/// interval of each symbol is halved after every stage.
pub fn run_binary_search_max(cfg: &SimConfig) -> Result<ProtocolTrace> {
    let q = cfg.source.q();
    if cfg.function != TypeThresholdFunction::standard(FunctionKind::Maximum, q)? {
        return Err(invalid("the binary search computes the maximum only"));
    }
    let stages = search_stages(q);
    cfg.validate(stages)?;
    let k = cfg.k;
    let sources = SourceBlock::draw(&cfg.source, k, cfg.seed);
    let counts: Vec<usize> = cfg.partitions.iter().map(Partition::num_groups).collect();
    let shifts = cfg.shift.resolve(&counts, &mut stream_rng(cfg.seed, SHIFT_STREAM));
    let mut lo = vec![0u32; k];
    let mut hi = vec![(q - 1) as u32; k];
    let mut rounds = Vec::new();
    let mut phases = Vec::with_capacity(stages);
    for s in 0..stages {
        let mid: Vec<u32> = (0..k).map(|j| lo[j] + (hi[j] - lo[j] + 1).div_ceil(2)).collect();
        let phase = run_phase(
            &sources,
            s,
            1,
            &cfg.partitions[s],
            shifts[s],
            cfg.early_termination,
            cfg.detail,
            &mut rounds,
            |v, j, c| c == 0 && v >= mid[j],
        );
        for j in 0..k {
            if phase.final_counters[j] > 0 {
                lo[j] = mid[j];
            } else {
                hi[j] = mid[j] - 1;
            }
        }
        phases.push(phase);
    }
    let mut outputs = Vec::with_capacity(k);
    let mut mismatches = 0;
    for j in 0..k {
        let truth = (0..sources.num_sensors()).map(|i| sources.get(i, j)).max().unwrap_or(0);
        if lo[j] != hi[j] || lo[j] as usize != truth {
            mismatches += 1;
        }
        outputs.push(Label::Int(lo[j] as i64));
    }
    Ok(ProtocolTrace {
        k,
        rounds,
        phases,
        outputs,
        mismatches,
    })
}
