use std::collections::BTreeMap;

use geiringer::digraph::{build_digraph, exact_expected_payoff, Node, QEntry};
use geiringer::io::{canonical_string, population_from_str, population_to_json, PopulationFile};
use geiringer::random::{random_homologous_population, random_population, RandomParams};
use geiringer::rational::{from_int, to_f64};
use geiringer::recomb::{enumerate_orbit, generator_index, TransformDistribution};
use geiringer::stats::down_report;
use geiringer::verify::schemata_up_to;
use geiringer::{inflate, schema_count, PayoffMap, Population};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn population(params: RandomParams) -> impl Strategy<Value = Population> {
    any::<u64>().prop_map(move |s| random_population(&mut ChaCha8Rng::seed_from_u64(s), &params))
}

fn small() -> RandomParams {
    RandomParams {
        max_b: 3,
        max_height: 3,
        classes: 3,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn generators_are_conservative_involutions(p in population(RandomParams::default())) {
        let d = down_report(&p);
        for g in generator_index(&p) {
            let q = g.apply(&p);
            prop_assert_eq!(&g.apply(&q), &p);
            prop_assert_eq!(q.size(), p.size());
            prop_assert_eq!(down_report(&q), d.clone());
        }
    }

    #[test]
    fn flow_is_conserved(p in population(RandomParams::default())) {
        let d = down_report(&p);
        for h in schemata_up_to(&p, 2, false) {
            let sum: geiringer::Rational = d
                .frequency_children(&h)
                .unwrap()
                .values()
                .map(|f| f.value().clone())
                .sum();
            prop_assert_eq!(sum, d.limiting_frequency(&h).into_inner());
        }
    }

    #[test]
    fn inflation_keeps_limits_and_scales_counts(p in population(small()), m in 1u32..4) {
        let q = inflate(&p, m);
        let (dp, dq) = (down_report(&p), down_report(&q));
        for h in schemata_up_to(&p, 2, true) {
            prop_assert_eq!(dp.limiting_frequency(&h), dq.limiting_frequency(&h));
            prop_assert_eq!(schema_count(&h, &q), m as usize * schema_count(&h, &p));
        }
    }

    #[test]
    fn terminal_identity(p in population(RandomParams::default())) {
        let d = down_report(&p);
        prop_assert_eq!(d.terminal_total() + d.stateless_total(), d.b);
    }

    #[test]
    fn canonical_json_round_trips(p in population(RandomParams::default()), m in 1u32..3) {
        let p = inflate(&p, m);
        let payoffs: PayoffMap = p
            .terminal_names()
            .into_iter()
            .enumerate()
            .map(|(i, n)| (n, from_int(i as i64 - 1)))
            .collect();
        let f = PopulationFile { population: p, payoffs };
        let text = canonical_string(&population_to_json(&f));
        let back = population_from_str(&text, "mem").unwrap();
        prop_assert_eq!(canonical_string(&population_to_json(&back)), text);
        prop_assert_eq!(back, f);
    }

    #[test]
    fn running_mean_merge_matches_sequential(
        values in prop::collection::vec(-5.0f64..5.0, 1..200),
        cut in 0usize..200,
    ) {
        let cut = cut.min(values.len());
        let mut seq = QEntry::default();
        values.iter().for_each(|&v| seq.update(v));
        let (mut a, mut b) = (QEntry::default(), QEntry::default());
        values[..cut].iter().for_each(|&v| a.update(v));
        values[cut..].iter().for_each(|&v| b.update(v));
        a.merge(&b);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        prop_assert_eq!(a.n, seq.n);
        prop_assert!((a.q - seq.q).abs() < 1e-9);
        prop_assert!((seq.q - mean).abs() < 1e-9);
        prop_assert!((a.stddev() - seq.stddev()).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn homologous_orbits_match_closed_form(seed in any::<u64>()) {
        let params = RandomParams { max_b: 3, max_height: 3, classes: 3, ..Default::default() };
        let p = random_homologous_population(&mut ChaCha8Rng::seed_from_u64(seed), &params);
        let o = enumerate_orbit(&p, 1_000_000).unwrap();
        let d = down_report(&p);
        for h in schemata_up_to(&p, 3, true) {
            prop_assert_eq!(o.frequency(&h), d.limiting_frequency(&h), "{}", h);
        }
    }

    /// The chain's transition matrix on an orbit is symmetric (every move is
    /// an involution chosen with a fixed probability), hence doubly
    /// stochastic, so the uniform law is stationary.
    #[test]
    fn orbit_chain_is_symmetric(p in population(small())) {
        let o = enumerate_orbit(&p, 1_000_000).unwrap();
        let mu = TransformDistribution::new(&p, 0.01).unwrap();
        let mut moves: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for x in 0..o.size() {
            let px = o.member(x);
            for g in mu.generators() {
                let y = o.index_of(&g.apply(&px));
                prop_assert!(y.is_some(), "orbit not closed under {}", g);
                *moves.entry((x, y.unwrap())).or_default() += 1;
            }
        }
        for (&(x, y), &n) in &moves {
            prop_assert_eq!(moves.get(&(y, x)).copied(), Some(n));
        }
        // brute-force mean over members agrees with the shape-based count
        for h in schemata_up_to(&p, 2, true).into_iter().take(40) {
            let total: usize = o.members().map(|q| schema_count(&h, &q)).sum();
            prop_assert_eq!(total as u64, o.total_count(&h));
        }
    }

    /// The exact absorbing-chain value agrees with floating-point value
    /// iteration on the same digraph.
    #[test]
    fn exact_walk_value_matches_iteration(p in population(RandomParams::default())) {
        let g = build_digraph(&p);
        let payoffs: PayoffMap = p
            .terminal_names()
            .into_iter()
            .enumerate()
            .map(|(i, n)| (n, from_int((i as i64 * 7) % 5)))
            .collect();
        let nodes: Vec<&Node> = g.nodes().iter().collect();
        let mut value: BTreeMap<&Node, f64> = nodes
            .iter()
            .map(|n| {
                let v = match n {
                    Node::Terminal(t) => to_f64(payoffs.get(t).unwrap()),
                    _ => 0.0,
                };
                (*n, v)
            })
            .collect();
        for _ in 0..5000 {
            for n in &nodes {
                if matches!(n, Node::Terminal(_)) {
                    continue;
                }
                let w = g.out_weight(n) as f64;
                let v: f64 = g.successors(n).map(|(m, k)| k as f64 * value[m]).sum::<f64>() / w;
                value.insert(*n, v);
            }
        }
        for a in p.actions() {
            let exact = exact_expected_payoff(&g, &a, &payoffs).unwrap();
            let approx = value[&Node::Action(a.clone())];
            prop_assert!((to_f64(&exact) - approx).abs() < 1e-6, "{} {} vs {}", a, exact, approx);
        }
    }
}
