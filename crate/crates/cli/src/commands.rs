//! One function per subcommand; each returns its table and assertions.

use anyhow::{bail, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use ttcomp_core::descriptions::{binary_search_stage_partitions, chain_law, stream_rng};
use ttcomp_core::ensembles::{random_partition, random_scaled_source, random_source, Ensemble, PartitionRule};
use ttcomp_core::entropy::{chain_entropy, lemma_bound};
use ttcomp_core::figures::{figure3_row, figure4_row, lemma_check, rule_name, LemmaCheck};
use ttcomp_core::oracle::chain_entropy_enumerated;
use ttcomp_core::sim::{run_binary_search_max, run_protocol, TraceDetail};
use ttcomp_core::{Partition, SimConfig, SourceModel};

use crate::config::{ExperimentConfig, SimulationSpec};
use crate::report::{num, Assertion, Table};

pub struct Run {
    pub table: Table,
    pub assertions: Vec<Assertion>,
}

/// Random instances for case `case` of seed `seed`, independent of how the
/// grid is split across workers.
fn case_rng(seed: u64, case: usize) -> impl Rng {
    stream_rng(seed, (1 << 32) | case as u64)
}

fn first_failure<T: Serialize>(items: &[T], ok: impl Fn(&T) -> bool) -> Option<serde_json::Value> {
    items.iter().find(|x| !ok(x)).and_then(|x| serde_json::to_value(x).ok())
}

fn increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

pub fn figure3(cfg: &ExperimentConfig) -> Result<Run> {
    let ms = cfg.sensor_counts(&[4, 16, 64, 256, 1024, 4096])?;
    let ensembles = cfg.ensembles(Ensemble::InverseSqrtM)?;
    let grid: Vec<(Ensemble, usize)> = ensembles.iter().flat_map(|&e| ms.iter().map(move |&m| (e, m))).collect();
    let rows = grid
        .par_iter()
        .map(|&(e, m)| figure3_row(m, e).map(|r| (e, r)))
        .collect::<ttcomp_core::Result<Vec<_>>>()?;

    let mut table = Table::new(vec![
        "ensemble",
        "M_sensors",
        "beta_probability",
        "sqrt_group_size_sensors",
        "H_one_partition_bits",
        "H_sqrt_partition_bits",
        "H_M_partition_bits",
        "H_sqrt_partition_literal_bits",
        "dp_max_abs_diff_bits",
    ]);
    for (e, r) in &rows {
        table.push(
            vec![
                e.label(),
                r.m.to_string(),
                num(r.beta),
                r.sqrt_a.to_string(),
                num(r.h_one_partition_bits),
                num(r.h_sqrt_partition_bits),
                num(r.h_m_partition_bits),
                num(r.h_sqrt_partition_literal_bits),
                num(r.dp_max_abs_diff_bits),
            ],
            &json!({ "ensemble": e.label(), "row": r }),
        )?;
    }

    let bound = lemma_bound(1);
    let plain: Vec<_> = rows.iter().map(|(_, r)| r.clone()).collect();
    let sqrt_max = plain.iter().map(|r| r.h_sqrt_partition_bits).fold(0.0, f64::max);
    let diff_max = plain.iter().map(|r| r.dp_max_abs_diff_bits).fold(0.0, f64::max);
    let mut assertions = vec![
        Assertion::new(
            "sqrt_partition_below_bound",
            plain.iter().all(|r| r.h_sqrt_partition_bits < bound),
            format!("largest value {sqrt_max} bits, bound {bound}"),
        )
        .with_case(first_failure(&plain, |r| r.h_sqrt_partition_bits < bound)),
        Assertion::new(
            "closed_form_matches_dp",
            diff_max <= 1e-9,
            format!("largest gap {diff_max:e} bits"),
        )
        .with_case(first_failure(&plain, |r| r.dp_max_abs_diff_bits <= 1e-9)),
    ];
    let sparse: Vec<_> = rows
        .iter()
        .filter(|(e, r)| *e == Ensemble::InverseM && r.m >= 4)
        .map(|(_, r)| r.clone())
        .collect();
    if !sparse.is_empty() {
        let ok = |r: &ttcomp_core::figures::Figure3Row| r.h_one_partition_bits >= 0.5 * (r.m as f64).log2();
        assertions.push(
            Assertion::new(
                "one_partition_diverges",
                sparse.iter().all(ok),
                "Bernoulli(1/M): 1-partition entropy at least 0.5 log2 M",
            )
            .with_case(first_failure(&sparse, ok)),
        );
    }
    Ok(Run { table, assertions })
}

pub fn figure4(cfg: &ExperimentConfig) -> Result<Run> {
    let mut ms = cfg.sensor_counts(&[100, 1000, 10_000])?;
    ms.sort_unstable();
    ms.dedup();
    if ms[0] < 2 {
        bail!("the round-robin bound needs at least two sensors");
    }
    let powers = cfg.powers(20.0)?;
    let ensembles = cfg.ensembles(Ensemble::InverseSqrtM)?;
    let m0 = cfg.m0.unwrap_or(ms[0]);
    let factor = cfg.irr_factor.unwrap_or(2.0);

    let mut grid = Vec::new();
    for &e in &ensembles {
        for &p in &powers {
            for &m in &ms {
                grid.push((e, p, m));
            }
        }
    }
    let rows = grid
        .par_iter()
        .map(|&(e, p, m)| figure4_row(m, e, p))
        .collect::<ttcomp_core::Result<Vec<_>>>()?;

    let mut table = Table::new(vec![
        "ensemble",
        "M_sensors",
        "beta_probability",
        "power_linear",
        "mrgb_rate_bits_per_channel_use",
        "irr_upper_bound_bits_per_channel_use",
        "irr_denominator_bits",
    ]);
    for (&(e, _, _), r) in grid.iter().zip(&rows) {
        table.push(
            vec![
                e.label(),
                r.m.to_string(),
                num(r.beta),
                num(r.power_linear),
                num(r.mrgb_rate),
                num(r.irr_upper_bound),
                num(r.irr_denominator_bits),
            ],
            &json!({ "ensemble": e.label(), "row": r }),
        )?;
    }

    let mut assertions = Vec::new();
    for (chunk, &(e, p, _)) in rows.chunks(ms.len()).zip(grid.iter().step_by(ms.len())) {
        let tail: Vec<f64> = chunk.iter().filter(|r| r.m >= m0).map(|r| r.mrgb_rate).collect();
        assertions.push(Assertion::new(
            format!("mrgb_increasing[{}, P={p}]", e.label()),
            increasing(&tail),
            format!("rates from M={m0}: {tail:?}"),
        ));
        let irr: Vec<f64> = chunk.iter().map(|r| r.irr_upper_bound).collect();
        let cap = factor * irr[0];
        assertions.push(Assertion::new(
            format!("irr_bounded[{}, P={p}]", e.label()),
            irr.iter().all(|&v| v <= cap),
            format!("bounds {irr:?}, cap {factor} x first = {cap}"),
        ));
    }
    Ok(Run { table, assertions })
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    seed: u64,
    case: usize,
    m: usize,
    q: usize,
    check: LemmaCheck,
}

pub fn lemma_sweep(cfg: &ExperimentConfig, cli_seed: Option<u64>) -> Result<Run> {
    let seeds = cfg.seeds(cli_seed, &[0])?;
    let cases = cfg.cases.unwrap_or(1000);
    let max_m = cfg.max_m.unwrap_or(10_000).max(1);
    let max_q = cfg.max_q.unwrap_or(4).max(2);
    let max_theta = cfg.max_theta.unwrap_or(8);
    let grid: Vec<(u64, usize)> = seeds.iter().flat_map(|&s| (0..cases).map(move |c| (s, c))).collect();
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&(seed, case)| {
            let mut rng = case_rng(seed, case);
            let m = (10f64.powf(rng.gen_range(0.0..=(max_m as f64).log10())).round() as usize).clamp(1, max_m);
            let q = rng.gen_range(2..=max_q);
            let src = if rng.gen_bool(0.5) {
                random_source(&mut rng, m, q)?
            } else {
                let scale = rng.gen_range(0.5..40.0);
                random_scaled_source(&mut rng, m, q, scale)?
            };
            let theta: Vec<usize> = (0..q).map(|_| rng.gen_range(0..=max_theta)).collect();
            Ok(lemma_check(&src, &theta)?
                .into_iter()
                .map(|check| SweepRow { seed, case, m, q, check })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut table = Table::new(vec![
        "seed",
        "case",
        "M_sensors",
        "q_symbols",
        "symbol",
        "theta_count",
        "groups_count",
        "tail_merged",
        "max_shift_entropy_bits",
        "bound_bits",
    ]);
    for r in &rows {
        table.push(
            vec![
                r.seed.to_string(),
                r.case.to_string(),
                r.m.to_string(),
                r.q.to_string(),
                r.check.symbol.to_string(),
                r.check.theta.to_string(),
                r.check.groups.to_string(),
                r.check.tail_merged.to_string(),
                num(r.check.max_shift_total_bits),
                num(r.check.bound_bits),
            ],
            r,
        )?;
    }
    let violations = rows.iter().filter(|r| !r.check.holds()).count();
    let slack = rows
        .iter()
        .map(|r| r.check.bound_bits - r.check.max_shift_total_bits)
        .fold(f64::INFINITY, f64::min);
    let assertions = vec![Assertion::new(
        "interval_partition_bound",
        violations == 0,
        format!("{violations} violations over {} models, smallest slack {slack} bits", grid.len()),
    )
    .with_case(first_failure(&rows, |r| r.check.holds()))];
    Ok(Run { table, assertions })
}

#[derive(Debug, Clone, Serialize)]
struct OracleRow {
    seed: u64,
    case: usize,
    m: usize,
    q: usize,
    symbol: usize,
    theta: usize,
    shift: usize,
    partition: Partition,
    dp_bits: f64,
    enumeration_bits: f64,
    abs_diff_bits: f64,
}

pub fn oracle_check(cfg: &ExperimentConfig, cli_seed: Option<u64>) -> Result<Run> {
    let seeds = cfg.seeds(cli_seed, &[0])?;
    let cases = cfg.cases.unwrap_or(200);
    let max_m = cfg.max_m.unwrap_or(10).max(1);
    let max_q = cfg.max_q.unwrap_or(3).max(2);
    if (max_q as f64).powi(max_m as i32) > 1e7 {
        bail!("max_q^max_m realizations is too many to enumerate");
    }
    let grid: Vec<(u64, usize)> = seeds.iter().flat_map(|&s| (0..cases).map(move |c| (s, c))).collect();
    let rows: Vec<OracleRow> = grid
        .par_iter()
        .map(|&(seed, case)| {
            let mut rng = case_rng(seed, case);
            let m = rng.gen_range(1..=max_m);
            let q = rng.gen_range(2..=max_q);
            let src = random_source(&mut rng, m, q)?;
            let part = random_partition(&mut rng, m)?;
            (0..q)
                .map(|l| {
                    let theta = rng.gen_range(0..=m);
                    let shift = rng.gen_range(0..part.num_groups());
                    let dp = chain_entropy(&chain_law(&src, l, theta, &part, shift)?).total;
                    let brute = chain_entropy_enumerated(&src, l, theta, &part, shift)?;
                    Ok(OracleRow {
                        seed,
                        case,
                        m,
                        q,
                        symbol: l,
                        theta,
                        shift,
                        partition: part.clone(),
                        dp_bits: dp,
                        enumeration_bits: brute,
                        abs_diff_bits: (dp - brute).abs(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut table = Table::new(vec![
        "seed",
        "case",
        "M_sensors",
        "q_symbols",
        "symbol",
        "theta_count",
        "shift_groups",
        "partition",
        "dp_bits",
        "enumeration_bits",
        "abs_diff_bits",
    ]);
    for r in &rows {
        table.push(
            vec![
                r.seed.to_string(),
                r.case.to_string(),
                r.m.to_string(),
                r.q.to_string(),
                r.symbol.to_string(),
                r.theta.to_string(),
                r.shift.to_string(),
                serde_json::to_string(&r.partition)?,
                num(r.dp_bits),
                num(r.enumeration_bits),
                num(r.abs_diff_bits),
            ],
            r,
        )?;
    }
    let worst = rows.iter().map(|r| r.abs_diff_bits).fold(0.0, f64::max);
    let assertions = vec![Assertion::new(
        "dp_matches_enumeration",
        worst <= 1e-9,
        format!("largest gap {worst:e} bits over {} chains", rows.len()),
    )
    .with_case(first_failure(&rows, |r| r.abs_diff_bits <= 1e-9))];
    Ok(Run { table, assertions })
}

pub fn rate_table(cfg: &ExperimentConfig) -> Result<Run> {
    let ensembles = match &cfg.ensembles {
        Some(_) => cfg.ensembles(Ensemble::InverseM)?,
        None => vec![Ensemble::Constant { c: 0.5 }, Ensemble::InverseM, Ensemble::InverseSqrtM],
    };
    let ms = cfg.sensor_counts(&[100, 10_000, 1_000_000])?;
    let powers = cfg.powers(20.0)?;
    let rules = cfg.rules.clone().unwrap_or_else(|| vec![PartitionRule::Lemma]);
    if rules.is_empty() {
        bail!("grid `rules` is empty");
    }
    let factor = cfg.spread_factor.unwrap_or(4.0);

    let rows = ttcomp_core::figures::rate_table(&ensembles, &ms, &powers, &rules)?;
    let mut table = Table::new(vec![
        "ensemble",
        "M_sensors",
        "beta_probability",
        "power_linear",
        "partition_rule",
        "mrgb_rate_bits_per_channel_use",
        "corollary_rate_bits_per_channel_use",
        "j_min_groups",
        "irr_upper_bound_bits_per_channel_use",
        "cutset_full_bound_bits_per_channel_use",
    ]);
    for r in &rows {
        table.push(
            vec![
                r.ensemble.clone(),
                r.m.to_string(),
                num(r.beta),
                num(r.power_linear),
                r.rule.clone(),
                num(r.mrgb_rate),
                num(r.corollary_rate),
                r.j_min.to_string(),
                num(r.irr_upper_bound),
                num(r.cutset_full_bound),
            ],
            r,
        )?;
    }

    let sandwich = |r: &ttcomp_core::figures::RateTableRow| r.mrgb_rate <= r.cutset_full_bound * (1.0 + 1e-12);
    let mut assertions = vec![Assertion::new(
        "achievable_below_cutset",
        rows.iter().all(sandwich),
        format!("{} rows", rows.len()),
    )
    .with_case(first_failure(&rows, sandwich))];

    // constant-parameter sources: rates should not drift with M
    for &e in ensembles.iter().filter(|e| matches!(e, Ensemble::Constant { .. })) {
        for &p in &powers {
            for &rule in &rules {
                let cell: Vec<_> = rows
                    .iter()
                    .filter(|r| r.ensemble == e.label() && r.power_linear == p && r.rule == rule_name(rule))
                    .collect();
                let mut series = vec![("corollary", cell.iter().map(|r| r.corollary_rate).collect::<Vec<f64>>())];
                if rule == PartitionRule::Lemma {
                    series.push(("mrgb", cell.iter().map(|r| r.mrgb_rate).collect()));
                }
                for (name, v) in series {
                    let spread = v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min);
                    assertions.push(Assertion::new(
                        format!("{name}_bounded_spread[{}, P={p}, {}]", e.label(), rule_name(rule)),
                        spread <= factor,
                        format!("max/min over M = {spread}, allowed {factor}"),
                    ));
                }
            }
        }
    }
    Ok(Run { table, assertions })
}

#[derive(Debug, Clone, Serialize)]
struct SimRow {
    seed: u64,
    m: usize,
    q: usize,
    k: usize,
    rounds_used: usize,
    rounds_skipped: usize,
    mismatches: usize,
    empirical_entropy_bits: Vec<f64>,
}

fn sim_config(spec: &SimulationSpec, m: usize, seed: u64) -> Result<SimConfig> {
    let f = spec.function.build()?;
    let q = f.q();
    let source = match &spec.source {
        Some(s) => s.clone(),
        None => SourceModel::iid(m, vec![1.0 / q as f64; q])?,
    };
    let partitions = match &spec.partitions {
        Some(p) => p.clone(),
        None if spec.binary_search => binary_search_stage_partitions(&source)?,
        None => (0..q)
            .map(|l| spec.partition_rule.build(&source.indicator_probs(l), f.theta()[l]))
            .collect::<ttcomp_core::Result<Vec<_>>>()?,
    };
    Ok(SimConfig {
        function: f,
        source,
        partitions,
        shift: spec.shift,
        k: spec.k,
        seed,
        early_termination: spec.early_termination,
        detail: TraceDetail::Summary,
    })
}

pub fn simulate(cfg: &ExperimentConfig, cli_seed: Option<u64>) -> Result<Run> {
    let spec = cfg.simulation.clone().unwrap_or_default();
    let seeds = cfg.seeds(cli_seed, &[0, 1, 2, 3, 4])?;
    let ms = match &spec.source {
        Some(s) => vec![s.num_sensors()],
        None => cfg.sensor_counts(&[8, 32])?,
    };
    let grid: Vec<(usize, u64)> = ms.iter().flat_map(|&m| seeds.iter().map(move |&s| (m, s))).collect();
    let rows: Vec<SimRow> = grid
        .par_iter()
        .map(|&(m, seed)| {
            let c = sim_config(&spec, m, seed)?;
            let trace = if spec.binary_search { run_binary_search_max(&c)? } else { run_protocol(&c)? };
            let s = trace.summary();
            Ok(SimRow {
                seed,
                m,
                q: c.function.q(),
                k: s.k,
                rounds_used: s.rounds_used,
                rounds_skipped: s.rounds_skipped,
                mismatches: s.mismatches,
                empirical_entropy_bits: s.empirical_entropy_bits,
            })
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(vec![
        "seed",
        "M_sensors",
        "q_symbols",
        "k_symbols",
        "rounds_used_count",
        "rounds_skipped_count",
        "mismatches_count",
        "empirical_entropy_bits_per_phase",
    ]);
    for r in &rows {
        let h: Vec<String> = r.empirical_entropy_bits.iter().map(|&v| num(v)).collect();
        table.push(
            vec![
                r.seed.to_string(),
                r.m.to_string(),
                r.q.to_string(),
                r.k.to_string(),
                r.rounds_used.to_string(),
                r.rounds_skipped.to_string(),
                r.mismatches.to_string(),
                h.join(";"),
            ],
            r,
        )?;
    }
    let total: usize = rows.iter().map(|r| r.mismatches).sum();
    let symbols: usize = rows.iter().map(|r| r.k).sum();
    let assertions = vec![Assertion::new(
        "zero_fusion_mismatches",
        total == 0,
        format!("{total} mismatches over {symbols} symbols"),
    )
    .with_case(first_failure(&rows, |r| r.mismatches == 0))];
    Ok(Run { table, assertions })
}
