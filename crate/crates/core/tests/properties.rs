mod common;

use proptest::prelude::*;

use ttcomp_core::descriptions::{
    binary_search_max_descriptions, chain_law, chain_law_from_probs, lemma_partition, sample_descriptions,
    satisfies_interval_rules,
};
use ttcomp_core::entropy::{
    bernoulli_sum_entropy_bound, binary_max_entropy_closed_form, chain_entropy, entropy_bits, poisson_binomial_pmf,
    shift_sweep, ClosedFormVariant,
};
use ttcomp_core::model::{clipped_type_distribution, function_entropy};
use ttcomp_core::rates::{
    cf_rate, cutset_bound_gaussian, default_rho_grid, irr_upper_bound, lemma_j_min, mrgb_rate_gaussian,
    mrgb_rate_gaussian_corollary, mrgb_rate_gaussian_equal_time, CutFamily, GaussianAllocation,
};
use ttcomp_core::sim::{run_protocol, TraceDetail};
use ttcomp_core::{a_partition, FunctionKind, Limits, Partition, ShiftPolicy, SimConfig, SourceModel, TypeThresholdFunction};

fn pmf(q: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64], q).prop_map(move |w| {
        let total: f64 = w.iter().sum();
        if total == 0.0 {
            let mut v = vec![0.0; w.len()];
            v[0] = 1.0;
            v
        } else {
            w.iter().map(|x| x / total).collect()
        }
    })
}

fn source(max_m: usize, max_q: usize) -> impl Strategy<Value = SourceModel> {
    (1..=max_m, 2..=max_q).prop_flat_map(|(m, q)| {
        prop::collection::vec(pmf(q), m).prop_map(move |pmfs| SourceModel::new(q, pmfs).unwrap())
    })
}

fn partition(m: usize) -> impl Strategy<Value = Partition> {
    (Just((0..m).collect::<Vec<usize>>()).prop_shuffle(), prop::collection::vec(any::<bool>(), m)).prop_map(
        move |(order, cuts)| {
            let mut groups: Vec<Vec<usize>> = vec![Vec::new()];
            for (t, &i) in order.iter().enumerate() {
                if t > 0 && cuts[t] {
                    groups.push(Vec::new());
                }
                groups.last_mut().unwrap().push(i);
            }
            Partition::new(groups, m).unwrap()
        },
    )
}

fn instance(max_m: usize, max_q: usize) -> impl Strategy<Value = (SourceModel, Partition, usize, usize, usize)> {
    source(max_m, max_q).prop_flat_map(|src| {
        let m = src.num_sensors();
        let q = src.q();
        (Just(src), partition(m), 0..q, 0..=m + 1, any::<usize>())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn chain_entropy_matches_enumeration((src, part, l, theta, d) in instance(7, 3)) {
        let shift = d % part.num_groups();
        let law = chain_law(&src, l, theta, &part, shift).unwrap();
        let dp = chain_entropy(&law);
        let brute = common::joint_chain_entropy(&src, l, theta, &part, shift);
        prop_assert!((dp.total - brute).abs() < 1e-9);
        prop_assert!((dp.total - dp.per_step.iter().sum::<f64>()).abs() < 1e-10);
        prop_assert!(dp.per_step.iter().all(|&h| h >= 0.0));
    }

    #[test]
    fn state_pmfs_are_monotone_with_bounded_support((src, part, l, theta, _) in instance(8, 3)) {
        let law = chain_law(&src, l, theta, &part, 0).unwrap();
        let sizes = part.group_sizes();
        let mut reach = 0;
        for m in 1..=part.num_groups() {
            reach += sizes[m - 1];
            let pmf = &law.state_pmfs()[m];
            prop_assert!(pmf.len() <= reach + 1);
            prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for x in 0..=reach {
                prop_assert!(law.survival(m, x) >= law.survival(m - 1, x) - 1e-12);
            }
        }
    }

    #[test]
    fn shift_equals_rotation((src, part, l, theta, d) in instance(8, 3)) {
        let shift = d % part.num_groups();
        let a = chain_law(&src, l, theta, &part, shift).unwrap();
        let b = chain_law(&src, l, theta, &part.rotated(shift).unwrap(), 0).unwrap();
        prop_assert_eq!(a.kernels(), b.kernels());
        prop_assert_eq!(a.state_pmfs(), b.state_pmfs());
    }

    #[test]
    fn final_law_matches_clipped_marginal((src, part, l, theta, _) in instance(8, 3)) {
        let theta = theta.min(4);
        let mut th = vec![0; src.q()];
        th[l] = theta;
        let law = chain_law(&src, l, theta, &part, 0).unwrap();
        let dist = clipped_type_distribution(&src, &th, None, Limits::default()).unwrap();
        let at_threshold = dist.marginal(l)[theta];
        prop_assert!((law.survival(part.num_groups(), theta) - at_threshold).abs() < 1e-10);
    }

    #[test]
    fn clipped_marginals_match_counts(src in source(8, 3), raw in prop::collection::vec(0usize..4, 3)) {
        let theta: Vec<usize> = raw[..src.q()].to_vec();
        let dist = clipped_type_distribution(&src, &theta, None, Limits::default()).unwrap();
        prop_assert!((dist.total() - 1.0).abs() < 1e-10);
        for l in 0..src.q() {
            let counts = poisson_binomial_pmf(&src.indicator_probs(l));
            let mut clipped = vec![0.0; theta[l] + 1];
            for (b, &p) in counts.iter().enumerate() {
                clipped[b.min(theta[l])] += p;
            }
            for (x, y) in dist.marginal(l).iter().zip(&clipped) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn conditioning_reduces_entropy(src in source(6, 3), kind in 0usize..4, mask in any::<u8>()) {
        let q = src.q();
        let kind = [FunctionKind::Maximum, FunctionKind::DistinctCount, FunctionKind::AvgTop { count: 2 },
                    FunctionKind::HeavyHitters { threshold: 2 }][kind];
        let f = TypeThresholdFunction::standard(kind, q).unwrap();
        let m = src.num_sensors();
        let outer: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let inner: Vec<usize> = outer.iter().copied().step_by(2).collect();
        let h0 = function_entropy(&f, &src, None, Limits::default()).unwrap();
        let h1 = function_entropy(&f, &src, Some(&inner), Limits::default()).unwrap();
        let h2 = function_entropy(&f, &src, Some(&outer), Limits::default()).unwrap();
        prop_assert!(h0 >= h1 - 1e-9);
        prop_assert!(h1 >= h2 - 1e-9);
    }

    #[test]
    fn poisson_binomial_matches_enumeration(p in prop::collection::vec(0.0..=1.0f64, 0..12)) {
        let a = poisson_binomial_pmf(&p);
        let b = common::count_pmf(&p);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!(entropy_bits(&a) <= bernoulli_sum_entropy_bound(&p));
    }

    #[test]
    fn steps_respect_bernoulli_bound((src, part, l, theta, _) in instance(8, 3)) {
        let law = chain_law(&src, l, theta, &part, 0).unwrap();
        let p = src.indicator_probs(l);
        for (t, &g) in law.order().iter().enumerate() {
            let probs: Vec<f64> = part.groups()[g].iter().map(|&i| p[i]).collect();
            prop_assert!(chain_entropy(&law).per_step[t] <= bernoulli_sum_entropy_bound(&probs) + 1e-12);
        }
    }

    #[test]
    fn sweep_matches_rotated_chains((src, part, l, theta, _) in instance(8, 3)) {
        let p = src.indicator_probs(l);
        let kernels: Vec<Vec<f64>> = part.groups().iter().map(|g| {
            poisson_binomial_pmf(&g.iter().map(|&i| p[i]).collect::<Vec<_>>())
        }).collect();
        let sweep = shift_sweep(&kernels, theta);
        for d in 0..part.num_groups() {
            let total = chain_entropy(&chain_law_from_probs(&p, theta, &part, d).unwrap()).total;
            prop_assert!((sweep.rotation_totals[d] - total).abs() < 1e-9);
        }
    }

    #[test]
    fn lemma_partition_rules(p in prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0..1.0f64], 1..60),
                             theta in 0usize..6) {
        let lp = lemma_partition(&p, theta).unwrap();
        let part = &lp.partition;
        prop_assert_eq!(part.num_sensors(), p.len());
        let flat: Vec<usize> = part.groups().iter().flatten().copied().collect();
        prop_assert_eq!(flat, (0..p.len()).collect::<Vec<_>>());
        if !lp.tail_merged {
            prop_assert!(satisfies_interval_rules(&p, theta, part));
        }
    }

    #[test]
    fn partition_json_round_trip(part in (1usize..20).prop_flat_map(partition)) {
        let text = serde_json::to_string(&part).unwrap();
        let back: Partition = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, part);
    }

    #[test]
    fn sampled_clipped_frequencies((src, part, _, theta, seed) in instance(8, 4)) {
        let q = src.q();
        let th = vec![theta.min(3); q];
        let parts = vec![part; q];
        let s = sample_descriptions(&src, &th, &parts, ShiftPolicy::UniformRandom, seed as u64, 40).unwrap();
        for j in 0..40 {
            let col = s.sources.column(j);
            for l in 0..q {
                let b = col.iter().filter(|&&v| v == l).count();
                prop_assert_eq!(s.chains[l].clipped[j] as usize, b.min(th[l]));
            }
        }
    }

    #[test]
    fn binary_search_finds_maximum(q in 2usize..20, symbols in prop::collection::vec(0usize..20, 1..12), seed in any::<u64>()) {
        let symbols: Vec<usize> = symbols.into_iter().map(|s| s % q).collect();
        let m = symbols.len();
        let stages = ttcomp_core::descriptions::search_stages(q);
        let parts: Vec<Partition> = (0..stages).map(|s| a_partition(m, 1 + (seed as usize >> s) % m).unwrap()).collect();
        let out = binary_search_max_descriptions(&symbols, q, &parts).unwrap();
        prop_assert_eq!(out.maximum, *symbols.iter().max().unwrap());
        prop_assert_eq!(out.stages.len(), stages);
    }

    #[test]
    fn protocol_matches_sampler((src, part, _, theta, seed) in instance(8, 4)) {
        let q = src.q();
        let th = vec![theta.min(3); q];
        let f = TypeThresholdFunction::from_reducer(q, th.clone(), |b| ttcomp_core::Label::Set(b.to_vec())).unwrap();
        let parts = vec![part; q];
        let cfg = SimConfig {
            function: f,
            source: src.clone(),
            partitions: parts.clone(),
            shift: ShiftPolicy::UniformRandom,
            k: 30,
            seed: seed as u64,
            early_termination: false,
            detail: TraceDetail::Full,
        };
        let trace = run_protocol(&cfg).unwrap();
        prop_assert_eq!(trace.mismatches, 0);
        let s = sample_descriptions(&src, &th, &parts, ShiftPolicy::UniformRandom, seed as u64, 30).unwrap();
        for l in 0..q {
            let rounds: Vec<_> = trace.rounds.iter().filter(|r| r.phase == l).collect();
            for (m, r) in rounds.iter().enumerate() {
                for j in 0..30 {
                    prop_assert_eq!(r.counters.as_ref().unwrap()[j], s.chains[l].value(m + 1, j));
                }
            }
        }
    }

    #[test]
    fn closed_form_matches_dp(m in 2usize..200, beta in 0.001..0.999f64, pick in 0usize..3) {
        let a = [1, ((m as f64).sqrt() as usize).max(1), m][pick];
        let src = SourceModel::bernoulli_iid(m, beta).unwrap();
        let dp = chain_entropy(&chain_law(&src, 1, 1, &a_partition(m, a).unwrap(), 0).unwrap()).total;
        let cf = binary_max_entropy_closed_form(m, beta, a, ClosedFormVariant::Consistent).unwrap();
        prop_assert!((dp - cf).abs() < 1e-9);
    }

    #[test]
    fn rate_monotonicity(size in 1usize..1000, p in 0.0..1e4f64, dp in 0.0..100.0f64, i in 0.01..10.0f64, m in 1usize..100) {
        prop_assert!(cf_rate(size, p).unwrap() >= 0.0);
        prop_assert!(cf_rate(size, p + dp).unwrap() >= cf_rate(size, p).unwrap());
        let b = irr_upper_bound(i, m, p).unwrap().rate();
        prop_assert!(irr_upper_bound(i, m, p + dp).unwrap().rate() >= b);
        prop_assert!(irr_upper_bound(i * 2.0, m, p).unwrap().rate() <= b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn achievable_below_cutset(src in source(5, 3), kind in 0usize..3, power in 0.1..1000.0f64, a in 1usize..5) {
        let q = src.q();
        let kind = [FunctionKind::Maximum, FunctionKind::DistinctCount, FunctionKind::HeavyHitters { threshold: 2 }][kind];
        let f = TypeThresholdFunction::standard(kind, q).unwrap();
        let m = src.num_sensors();
        let parts = vec![a_partition(m, a.min(m)).unwrap(); q];
        let achievable = match mrgb_rate_gaussian_equal_time(&f, &src, &parts, power) {
            Ok(r) => r.rate(),
            Err(_) => return Ok(()),
        };
        if let Ok(bound) = cutset_bound_gaussian(&f, &src, power, &default_rho_grid(), &CutFamily::Default) {
            prop_assert!(achievable <= bound.rate() + 1e-12);
            prop_assert!(achievable >= 0.0);
        }
    }

    #[test]
    fn corollary_allocation_beats_closed_form(m in 2usize..300, c in 0.01..0.99f64, power in 0.1..1000.0f64) {
        let src = SourceModel::bernoulli_iid(m, c).unwrap();
        let f = TypeThresholdFunction::standard(FunctionKind::Maximum, 2).unwrap();
        let j_min = lemma_j_min(&f, &src).unwrap();
        let cor = mrgb_rate_gaussian_corollary(&f, &src, power, j_min).unwrap();
        let beta = cor.parameters.beta.unwrap();
        let parts: Vec<Partition> = (0..2)
            .map(|l| lemma_partition(&src.indicator_probs(l), f.theta()[l]).unwrap().partition)
            .collect();
        let alloc = GaussianAllocation::corollary(&parts, f.theta(), power, beta).unwrap();
        let r = mrgb_rate_gaussian(&f, &src, &parts, power, &alloc, ShiftPolicy::UniformRandom).unwrap();
        prop_assert!(r.rate() >= cor.rate() - 1e-9);
        ttcomp_core::rates::audit_power(&parts, &alloc, power).unwrap();
    }
}

#[test]
fn maximum_is_padding_invariant() {
    let f = TypeThresholdFunction::standard(FunctionKind::Maximum, 5).unwrap();
    for s in [vec![3, 1], vec![0], vec![4, 4, 2]] {
        let mut padded = s.clone();
        padded.extend([0, 0, 0]);
        assert_eq!(f.evaluate(&s).unwrap(), f.evaluate(&padded).unwrap());
    }
}
