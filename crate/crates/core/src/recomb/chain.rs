use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Population, Schema};
use crate::rational::{ratio, Rational};

use super::codec::{Codec, EncodedTransform};
use super::TransformDistribution;

/// Running schema counts of one recombination chain.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    pub initial: Population,
    pub steps: u64,
    pub seed: u64,
    pub identity_prob: f64,
    pub schemata: Vec<Schema>,
    /// `Σ_{t=0}^{T} 𝒳(h, P^t)` per schema.
    pub counts: Vec<u64>,
    pub last: Population,
}

impl ChainTrace {
    pub fn b(&self) -> usize {
        self.initial.size()
    }

    /// `Φ_T(h) = counts / (b·(T+1))` as an exact rational.
    pub fn phi_exact(&self, idx: usize) -> Rational {
        ratio(self.counts[idx], self.b() as u64 * (self.steps + 1))
    }

    pub fn phi(&self, idx: usize) -> f64 {
        self.counts[idx] as f64 / (self.b() as f64 * (self.steps + 1) as f64)
    }
}

pub(crate) struct Chain {
    pub(crate) codec: Codec,
    moves: Vec<EncodedTransform>,
    pub(crate) state: Vec<u32>,
    rng: ChaCha8Rng,
}

impl Chain {
    pub(crate) fn new(p0: &Population, mu: &TransformDistribution, seed: u64) -> Self {
        let codec = Codec::new(p0);
        let moves = mu
            .generators()
            .iter()
            .map(|g| {
                codec
                    .encode_transform(g)
                    .expect("distribution built from a population with the same states")
            })
            .collect();
        let state = codec.encode(p0);
        Chain {
            codec,
            moves,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub(crate) fn step(&mut self, mu: &TransformDistribution) {
        if let Some(i) = mu.sample_index(&mut self.rng) {
            self.moves[i].apply(&mut self.state);
        }
    }
}

/// Iterates `P^{t+1} = θ_t(P^t)` with `θ_t ~ μ` for `steps` steps and
/// accumulates `𝒳(h, P^t)` for `t = 0..=steps`.
pub fn run_chain(
    p0: &Population,
    steps: u64,
    mu: &TransformDistribution,
    schemata: &[Schema],
    seed: u64,
) -> ChainTrace {
    run_chain_observed(p0, steps, mu, schemata, seed, |_, _| {})
}

/// [`run_chain`] that also hands `(t, running counts)` to `observe` after
/// every tally, starting with `t = 0`.
pub fn run_chain_observed(
    p0: &Population,
    steps: u64,
    mu: &TransformDistribution,
    schemata: &[Schema],
    seed: u64,
    mut observe: impl FnMut(u64, &[u64]),
) -> ChainTrace {
    let mut chain = Chain::new(p0, mu, seed);
    let compiled: Vec<_> = schemata.iter().map(|h| chain.codec.compile(h)).collect();
    let mut counts = vec![0u64; schemata.len()];
    let tally = |chain: &Chain, counts: &mut [u64]| {
        for (c, h) in counts.iter_mut().zip(&compiled) {
            *c += h.count(&chain.state, chain.codec.rollout_actions(), |t| {
                chain.codec.class_of(t)
            });
        }
    };
    tally(&chain, &mut counts);
    observe(0, &counts);
    for t in 1..=steps {
        chain.step(mu);
        tally(&chain, &mut counts);
        observe(t, &counts);
    }
    ChainTrace {
        initial: p0.clone(),
        steps,
        seed,
        identity_prob: mu.identity_prob(),
        schemata: schemata.to_vec(),
        counts,
        last: chain.codec.decode(&chain.state),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::p_a;
    use crate::model::schema_count;
    use crate::syntax::parse_schema;

    fn schemata(list: &[&str]) -> Vec<Schema> {
        list.iter().map(|s| parse_schema(s).unwrap()).collect()
    }

    #[test]
    fn root_and_invariant_schema_are_exact() {
        let p = p_a();
        let mu = TransformDistribution::new(&p, 0.01).unwrap();
        let hs = schemata(&["#", "alpha,1,#", "beta,1,2,#"]);
        for steps in [0, 1, 10, 1000] {
            let tr = run_chain(&p, steps, &mu, &hs, 3);
            assert_eq!(tr.phi_exact(0), ratio(1, 1));
            assert_eq!(tr.phi_exact(1), ratio(2, 3));
            assert_eq!(tr.phi_exact(2), ratio(1, 3));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let p = p_a();
        let mu = TransformDistribution::new(&p, 0.01).unwrap();
        let hs = schemata(&["alpha,1,2,f1"]);
        let a = run_chain(&p, 5000, &mu, &hs, 11);
        let b = run_chain(&p, 5000, &mu, &hs, 11);
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.last, b.last);
    }

    #[test]
    fn counts_at_zero_steps_match_initial_population() {
        let p = p_a();
        let mu = TransformDistribution::new(&p, 0.2).unwrap();
        let hs = schemata(&["alpha,1,2,f1", "alpha,1,2,f3", "beta,1,2,f3"]);
        let tr = run_chain(&p, 0, &mu, &hs, 0);
        for (h, c) in hs.iter().zip(&tr.counts) {
            assert_eq!(*c as usize, schema_count(h, &p));
        }
        assert_eq!(tr.last, p);
    }
}
