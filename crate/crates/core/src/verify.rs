//! The acceptance suite: ten end-to-end checks shared by `geiringer verify`
//! and the `acceptance` test target.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use num_traits::Signed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::digraph::{build_digraph, evaluate_actions, exact_expected_payoff, EvalConfig, DEFAULT_STEP_CAP};
use crate::fixtures::{p_a, p_a_payoffs, p_b, p_b_payoffs, p_seven};
use crate::model::{inflate, ActionLabel, ClassId, PayoffMap, Population, Schema, Tail, TaggedState, TerminalLabel};
use crate::random::{random_homologous_population, random_population, RandomParams};
use crate::rational::{self, ratio, Rational};
use crate::recomb::{
    enumerate_orbit, enumerate_quotient_orbit, generator_index, orbit_frequency,
    run_chain_observed, TransformDistribution, DEFAULT_IDENTITY_PROB, DEFAULT_ORBIT_CAP,
};
use crate::stats::down_report;
use crate::syntax::parse_schema;

pub const CRITERIA: [(u32, &str, u64); 10] = [
    (1, "involution & conservation", 30),
    (2, "stat invariance", 30),
    (3, "homologous exactness", 120),
    (4, "chain convergence", 60),
    (5, "uniform stationarity", 120),
    (6, "inflation limit", 300),
    (7, "evaluator vs oracle", 60),
    (8, "flow conservation", 60),
    (9, "terminal identity", 10),
    (10, "end-to-end determinism", 120),
];

/// Steps between recorded chain states in the stationarity check.
pub const STATIONARITY_THIN: u64 = 25;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Binary used by the end-to-end check; skipped (and failed) when absent.
    pub exe: Option<PathBuf>,
    pub workers: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 20240601,
            exe: None,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    #[serde(skip)]
    pub elapsed: Duration,
    #[serde(skip)]
    pub budget: Duration,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {} ({:.2}s of {}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs(),
            self.detail
        )
    }
}

type Check = Result<String, String>;

/// Runs one criterion. A criterion passes when its check succeeds within its
/// runtime budget.
pub fn run_criterion(id: u32, opts: &VerifyOptions) -> CriterionReport {
    let (_, name, budget) = CRITERIA
        .iter()
        .copied()
        .find(|c| c.0 == id)
        .expect("criterion ids are 1..=10");
    let start = Instant::now();
    let outcome = match id {
        1 => involution_and_conservation(opts.seed),
        2 => stat_invariance(opts.seed),
        3 => homologous_exactness(opts.seed),
        4 => chain_convergence(opts.seed),
        5 => uniform_stationarity(opts.seed),
        6 => inflation_limit(),
        7 => evaluator_vs_oracle(opts.seed, opts.workers),
        8 => flow_conservation(opts.seed),
        9 => terminal_identity(opts.seed),
        10 => match &opts.exe {
            Some(exe) => end_to_end(exe),
            None => Err("no binary to run".into()),
        },
        _ => unreachable!(),
    };
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(budget);
    let (mut passed, mut detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if elapsed > budget {
        passed = false;
        detail.push_str("; over the runtime budget");
    }
    CriterionReport {
        id,
        name: name.to_string(),
        passed,
        detail,
        elapsed,
        budget,
    }
}

pub fn run_all(opts: &VerifyOptions) -> Vec<CriterionReport> {
    CRITERIA.iter().map(|c| run_criterion(c.0, opts)).collect()
}

type Signature = (usize, Vec<TaggedState>, Vec<TerminalLabel>, Vec<ActionLabel>);

fn signature(p: &Population) -> Signature {
    let mut states: Vec<TaggedState> = p.states().cloned().collect();
    states.sort();
    let mut terminals: Vec<TerminalLabel> = p.terminals().cloned().collect();
    terminals.sort();
    let actions = p.rollouts().iter().map(|r| r.action.clone()).collect();
    (p.size(), states, terminals, actions)
}

fn involution_and_conservation(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = RandomParams::default();
    let mut cases = 0u64;
    for _ in 0..1000 {
        let p = random_population(&mut rng, &params);
        let sig = signature(&p);
        for g in generator_index(&p) {
            cases += 1;
            let q = g.apply(&p);
            if g.apply(&q) != p {
                return Err(format!("{g} is not an involution on {p}"));
            }
            if signature(&q) != sig {
                return Err(format!("{g} does not conserve the contents of {p}"));
            }
        }
    }
    Ok(format!("{cases} population/generator cases"))
}

fn stat_invariance(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = RandomParams::default();
    let mut moved = 0u64;
    for _ in 0..200 {
        let p = random_population(&mut rng, &params);
        let mu = TransformDistribution::new(&p, DEFAULT_IDENTITY_PROB).expect("valid epsilon");
        let d = down_report(&p);
        let mut q = p.clone();
        for _ in 0..100 {
            let g = mu.sample(&mut rng);
            let next = g.apply(&q);
            if next != q {
                moved += 1;
            }
            q = next;
        }
        if down_report(&q) != d {
            return Err(format!("down report changed along a walk from {p}"));
        }
    }
    Ok(format!("200 walks of 100 transforms, {moved} non-trivial moves"))
}

/// Every schema over the population's actions and classes (plus one absent
/// class) with at most `max_height` classes. Terminal-tailed schemata use the
/// population's terminal names.
pub fn schemata_up_to(p: &Population, max_height: usize, terminal_tails: bool) -> Vec<Schema> {
    let mut classes: Vec<ClassId> = p.classes().into_iter().collect();
    let absent = classes.last().map_or(1, |c| c.get() + 1);
    classes.push(ClassId::new(absent).expect("positive"));
    let names: BTreeSet<String> = p.terminal_names();
    let mut seqs: Vec<Vec<ClassId>> = vec![vec![]];
    let mut frontier = seqs.clone();
    for _ in 0..max_height {
        frontier = frontier
            .iter()
            .flat_map(|s| {
                classes.iter().map(move |c| {
                    let mut t = s.clone();
                    t.push(*c);
                    t
                })
            })
            .collect();
        seqs.extend(frontier.iter().cloned());
    }
    let mut out = vec![Schema::Root];
    for a in p.actions() {
        for s in &seqs {
            out.push(Schema::wildcard(a.clone(), s.clone()));
            if terminal_tails {
                for n in &names {
                    out.push(Schema::Pattern {
                        action: a.clone(),
                        classes: s.clone(),
                        tail: Tail::Terminal(n.clone()),
                    });
                }
            }
        }
    }
    out
}

fn homologous_exactness(seed: u64) -> Check {
    let target = parse_schema("alpha,1,2,f1").expect("schema");
    let orbit = enumerate_orbit(&p_a(), DEFAULT_ORBIT_CAP).map_err(|e| e.to_string())?;
    let lhs = orbit_frequency(&orbit, &target).into_inner();
    let rhs = crate::stats::limiting_frequency(&p_a(), &target).into_inner();
    if lhs != ratio(2, 9) || rhs != ratio(2, 9) {
        return Err(format!(
            "P_A (alpha,1,2,f1): orbit {} vs formula {}",
            rational::format(&lhs),
            rational::format(&rhs)
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = RandomParams {
        max_b: 4,
        min_height: 0,
        max_height: 3,
        classes: 4,
        actions: 2,
        terminal_names: 3,
    };
    let mut pops = vec![p_a()];
    pops.extend((0..24).map(|_| random_homologous_population(&mut rng, &params)));
    let mut checked = 0u64;
    let mut largest = 0;
    for p in &pops {
        let orbit = enumerate_orbit(p, DEFAULT_ORBIT_CAP).map_err(|e| format!("{p}: {e}"))?;
        largest = largest.max(orbit.size());
        let d = down_report(p);
        for h in schemata_up_to(p, 3, true) {
            checked += 1;
            let exact = orbit_frequency(&orbit, &h);
            let formula = d.limiting_frequency(&h);
            if exact != formula {
                return Err(format!("{p}: {h} orbit {exact} vs formula {formula}"));
            }
        }
    }
    Ok(format!(
        "P_A gives 2/9 on both sides; {checked} schemata over {} populations agree (largest orbit {largest})",
        pops.len()
    ))
}

fn chain_convergence(seed: u64) -> Check {
    let p = p_a();
    let mu = TransformDistribution::new(&p, DEFAULT_IDENTITY_PROB).expect("valid epsilon");
    let hs = [
        parse_schema("alpha,1,2,f1").expect("schema"),
        parse_schema("alpha,1,#").expect("schema"),
    ];
    let b = p.size() as u64;
    let mut drift = None;
    let trace = run_chain_observed(&p, 100_000, &mu, &hs, seed, |t, counts| {
        if drift.is_none() && 3 * counts[1] != 2 * b * (t + 1) {
            drift = Some(t);
        }
    });
    if let Some(t) = drift {
        return Err(format!("Phi_t(alpha,1,#) left 2/3 at t={t}"));
    }
    let phi = trace.phi(0);
    let gap = (phi - 2.0 / 9.0).abs();
    if gap > 0.02 {
        return Err(format!("Phi_T(alpha,1,2,f1) = {phi:.5}, off by {gap:.5}"));
    }
    Ok(format!(
        "Phi_T(alpha,1,2,f1) = {}/{} = {phi:.5} (gap {gap:.5}); Phi_t(alpha,1,#) = 2/3 for all t",
        trace.counts[0],
        b * (trace.steps + 1)
    ))
}

/// Pearson statistic and upper-tail p-value against the uniform law.
pub fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    let n: u64 = counts.iter().sum();
    let expected = n as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let df = (counts.len() - 1) as f64;
    let p = 1.0 - ChiSquared::new(df).expect("positive df").cdf(stat);
    (stat, p)
}

fn uniform_stationarity(seed: u64) -> Check {
    let p = p_b();
    let orbit = enumerate_orbit(&p, 50).map_err(|e| format!("orbit of P_B: {e}"))?;
    let mu = TransformDistribution::new(&p, DEFAULT_IDENTITY_PROB).expect("valid epsilon");
    let counts = orbit.visit_counts(&mu, 1_000_000, STATIONARITY_THIN, seed);
    let (stat, pvalue) = chi_square_uniform(&counts);
    let detail = format!(
        "orbit size {}, {} recorded states, chi2 = {stat:.2} on {} df, p = {pvalue:.4}",
        orbit.size(),
        counts.iter().sum::<u64>(),
        counts.len() - 1
    );
    if pvalue > 0.001 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn inflation_limit() -> Check {
    let h = parse_schema("alpha,1,2,f1").expect("schema");
    let target = crate::stats::limiting_frequency(&p_b(), &h).into_inner();
    if target != ratio(1, 8) {
        return Err(format!("closed form on P_B is {}", rational::format(&target)));
    }
    let mut values = Vec::new();
    for m in 1..=4 {
        let pm = inflate(&p_b(), m);
        let q = enumerate_quotient_orbit(&pm, DEFAULT_ORBIT_CAP).map_err(|e| format!("m={m}: {e}"))?;
        let v = q.frequency(&h).into_inner();
        if m <= 2 {
            let full = enumerate_orbit(&pm, DEFAULT_ORBIT_CAP).map_err(|e| format!("m={m}: {e}"))?;
            if orbit_frequency(&full, &h).into_inner() != v {
                return Err(format!("m={m}: quotient and literal orbits disagree"));
            }
        }
        values.push(v);
    }
    let gaps: Vec<Rational> = values.iter().map(|v| (v - &target).abs()).collect();
    let shown: Vec<String> = values.iter().map(rational::format).collect();
    let detail = format!(
        "m=1..4: {}; gaps {} -> {}",
        shown.join(", "),
        rational::format(&gaps[0]),
        rational::format(&gaps[3])
    );
    if gaps[3] < gaps[0] {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn evaluator_vs_oracle(seed: u64, workers: usize) -> Check {
    let cases: [(&str, Population, PayoffMap, [(&str, Rational); 2]); 2] = [
        ("P_B", p_b(), p_b_payoffs(), [("alpha", ratio(1, 3)), ("beta", ratio(2, 3))]),
        ("P_A", p_a(), p_a_payoffs(), [("alpha", ratio(1, 1)), ("beta", ratio(1, 1))]),
    ];
    let mut parts = Vec::new();
    for (name, p, phi, targets) in cases {
        let g = build_digraph(&p);
        let actions: Vec<ActionLabel> = targets
            .iter()
            .map(|(a, _)| ActionLabel::new(*a).expect("action"))
            .collect();
        let cfg = EvalConfig {
            walks: 100_000,
            cap: DEFAULT_STEP_CAP,
            seed,
            workers,
        };
        let ev = evaluate_actions(&g, &actions, &phi, cfg).map_err(|e| e.to_string())?;
        for (a, (_, want)) in actions.iter().zip(&targets) {
            let exact = exact_expected_payoff(&g, a, &phi).map_err(|e| e.to_string())?;
            if &exact != want {
                return Err(format!("{name} {a}: oracle {} expected {}", rational::format(&exact), rational::format(want)));
            }
            let e = ev.q.get(a).ok_or_else(|| format!("{name} {a}: no walks"))?;
            let dev = (e.q - rational::to_f64(&exact)).abs();
            let se = e.std_error();
            if e.n != 100_000 || dev > 3.0 * se {
                return Err(format!("{name} {a}: Q = {:.5} over {} walks, |Q - exact| = {dev:.5} > 3 SE = {:.5}", e.q, e.n, 3.0 * se));
            }
            parts.push(format!("{name} {a}: Q {:.4} vs {} (3 SE {:.4})", e.q, rational::format(&exact), 3.0 * se));
        }
    }
    Ok(parts.join("; "))
}

fn flow_conservation(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = RandomParams::default();
    let mut parents = 0u64;
    for _ in 0..100 {
        let p = random_population(&mut rng, &params);
        let d = down_report(&p);
        for h in schemata_up_to(&p, 3, false) {
            parents += 1;
            let kids = d.frequency_children(&h).map_err(|e| e.to_string())?;
            let sum: Rational = kids.values().map(|f| f.value().clone()).sum();
            let parent = d.limiting_frequency(&h).into_inner();
            if sum != parent {
                return Err(format!(
                    "{p}: children of {h} sum to {} but the parent has {}",
                    rational::format(&sum),
                    rational::format(&parent)
                ));
            }
        }
    }
    Ok(format!("{parents} #-tailed parents over 100 populations"))
}

fn terminal_identity(seed: u64) -> Check {
    let seven = down_report(&p_seven());
    let ends: Vec<u64> = seven.classes.values().map(|c| c.terminal_count()).collect();
    if ends != [0, 1, 0, 1, 2, 2, 1] {
        return Err(format!("seven-rollout example gives {ends:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = RandomParams {
        min_height: 1,
        ..Default::default()
    };
    let mut pops = vec![p_a(), p_b(), p_seven()];
    pops.extend((0..1000).map(|_| random_population(&mut rng, &params)));
    for p in &pops {
        let d = down_report(p);
        if d.terminal_total() != d.b {
            return Err(format!("{p}: sum of terminal counts {} != b = {}", d.terminal_total(), d.b));
        }
    }
    Ok(format!(
        "sum of i-down-sigma = b on {} populations; seven-rollout example 0+1+0+1+2+2+1 = 7",
        pops.len()
    ))
}

const PIPELINE_ENV: &str = r#"{
  "states": 5,
  "observations": 3,
  "actions": 2,
  "max_branching": 2,
  "depth_cap": 3,
  "payoff_min": 0,
  "payoff_max": 4,
  "rollouts": 4,
  "seed": 17
}
"#;

fn run_pipeline(exe: &Path, dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let schemata = ["--schema", "#", "--schema", "a0,1,#", "--schema", "a1,2,#"];
    let steps: Vec<Vec<&str>> = vec![
        vec!["gen", "--env", "env.json", "--seed", "3", "--out", "pop.json"],
        [vec!["mix", "--pop", "pop.json", "--steps", "20000", "--seed", "5"], schemata.to_vec()].concat(),
        [vec!["limit", "--pop", "pop.json"], schemata.to_vec()].concat(),
        [vec!["orbit", "--pop", "pop.json"], schemata.to_vec()].concat(),
        vec!["eval", "--pop", "pop.json", "--walks", "20000", "--seed", "7", "--workers", "3"],
    ];
    let mut out = Vec::new();
    for args in steps {
        let res = Command::new(exe)
            .args(&args)
            .current_dir(dir)
            .output()
            .map_err(|e| format!("cannot run {}: {e}", exe.display()))?;
        if !res.status.success() {
            return Err(format!(
                "`{}` exited with {}: {}",
                args.join(" "),
                res.status,
                String::from_utf8_lossy(&res.stderr).trim()
            ));
        }
        out.push((args[0].to_string(), res.stdout));
        if args[0] == "gen" {
            let pop = std::fs::read(dir.join("pop.json")).map_err(|e| e.to_string())?;
            out.push(("pop.json".into(), pop));
        }
    }
    Ok(out)
}

fn end_to_end(exe: &Path) -> Check {
    let dir = std::env::temp_dir().join(format!("geiringer-verify-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let result = (|| {
        std::fs::write(dir.join("env.json"), PIPELINE_ENV).map_err(|e| e.to_string())?;
        let first = run_pipeline(exe, &dir)?;
        let second = run_pipeline(exe, &dir)?;
        for ((name, a), (_, b)) in first.iter().zip(&second) {
            if a != b {
                return Err(format!("{name} output differs between runs"));
            }
        }
        let bytes: usize = first.iter().map(|(_, b)| b.len()).sum();
        Ok(format!(
            "gen, mix, limit, orbit, eval: {} outputs ({bytes} bytes) identical across two runs",
            first.len()
        ))
    })();
    let _ = std::fs::remove_dir_all(&dir);
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_enumeration_counts() {
        let p = p_b();
        // classes {1,2} plus one absent: 1 + 3 + 9 + 27 sequences
        let n = schemata_up_to(&p, 3, false).len();
        assert_eq!(n, 1 + 2 * 40);
        let with_tails = schemata_up_to(&p, 3, true).len();
        assert_eq!(with_tails, 1 + 2 * 40 * 3);
    }

    #[test]
    fn chi_square_of_flat_counts() {
        let (stat, p) = chi_square_uniform(&[100, 100, 100, 100]);
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
        let (_, p) = chi_square_uniform(&[1000, 0, 0, 0]);
        assert!(p < 1e-6);
    }

    #[test]
    fn fast_criteria_pass() {
        let opts = VerifyOptions::default();
        for id in [1, 2, 8, 9] {
            let r = run_criterion(id, &opts);
            assert!(r.passed, "{}", r.line());
        }
    }
}
