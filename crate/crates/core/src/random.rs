//! Random valid populations for property tests and the verification suite.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::{ActionLabel, ClassId, Population, Rollout, StateTag, TaggedState, TerminalLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomParams {
    /// Population size is drawn from `1..=max_b`.
    pub max_b: usize,
    pub min_height: usize,
    pub max_height: usize,
    pub classes: u32,
    pub actions: usize,
    /// Terminal names `f1..=fN`; repeated names get distinct copy indices.
    pub terminal_names: u32,
}

impl Default for RandomParams {
    fn default() -> Self {
        RandomParams {
            max_b: 5,
            min_height: 0,
            max_height: 4,
            classes: 4,
            actions: 2,
            terminal_names: 3,
        }
    }
}

const ACTIONS: [&str; 4] = ["alpha", "beta", "gamma", "delta"];

fn action(i: usize) -> ActionLabel {
    match ACTIONS.get(i) {
        Some(a) => ActionLabel::new(*a),
        None => ActionLabel::new(format!("act{i}")),
    }
    .expect("valid action")
}

/// Tag `k` of a class: `a`, `b`, ..., `z`, `a1`, `b1`, ...
fn tag(k: usize) -> StateTag {
    let letter = (b'a' + (k % 26) as u8) as char;
    let name = match k / 26 {
        0 => letter.to_string(),
        n => format!("{letter}{n}"),
    };
    StateTag::new(name).expect("valid tag")
}

struct Labels {
    per_class: Vec<usize>,
    per_terminal: Vec<u32>,
}

impl Labels {
    fn new(p: &RandomParams) -> Self {
        Labels {
            per_class: vec![0; p.classes as usize + 1],
            per_terminal: vec![0; p.terminal_names as usize + 1],
        }
    }

    fn state(&mut self, class: u32) -> TaggedState {
        let k = &mut self.per_class[class as usize];
        *k += 1;
        TaggedState::new(ClassId::new(class).expect("class ids start at 1"), tag(*k - 1))
    }

    fn terminal<R: Rng + ?Sized>(&mut self, rng: &mut R, names: u32) -> TerminalLabel {
        let n = rng.gen_range(1..=names);
        let k = &mut self.per_terminal[n as usize];
        *k += 1;
        TerminalLabel::with_copy(format!("f{n}"), *k - 1).expect("valid terminal")
    }
}

/// A population with independently drawn classes at every position.
pub fn random_population<R: Rng + ?Sized>(rng: &mut R, p: &RandomParams) -> Population {
    let b = rng.gen_range(1..=p.max_b);
    let mut labels = Labels::new(p);
    let rollouts = (0..b)
        .map(|_| {
            let a = action(rng.gen_range(0..p.actions));
            let h = rng.gen_range(p.min_height..=p.max_height);
            let states = (0..h)
                .map(|_| labels.state(rng.gen_range(1..=p.classes)))
                .collect();
            Rollout::new(a, states, labels.terminal(rng, p.terminal_names))
        })
        .collect();
    Population::new(rollouts).expect("fresh labels")
}

/// A homologous population: every class is pinned to one height, so
/// equivalent states never occur at different positions.
pub fn random_homologous_population<R: Rng + ?Sized>(rng: &mut R, p: &RandomParams) -> Population {
    let mut levels: Vec<Vec<u32>> = vec![Vec::new(); p.max_height];
    let mut classes: Vec<u32> = (1..=p.classes).collect();
    classes.shuffle(rng);
    for (k, c) in classes.into_iter().enumerate() {
        // fill levels in order first so deep rollouts are possible
        let level = if k < p.max_height {
            k
        } else {
            rng.gen_range(0..p.max_height)
        };
        levels[level].push(c);
    }
    let b = rng.gen_range(1..=p.max_b);
    let mut labels = Labels::new(p);
    let rollouts = (0..b)
        .map(|_| {
            let a = action(rng.gen_range(0..p.actions));
            let h = rng.gen_range(p.min_height..=p.max_height);
            let states = levels
                .iter()
                .take(h)
                .take_while(|l| !l.is_empty())
                .map(|l| labels.state(*l.choose(rng).expect("non-empty level")))
                .collect();
            Rollout::new(a, states, labels.terminal(rng, p.terminal_names))
        })
        .collect();
    Population::new(rollouts).expect("fresh labels")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::is_homologous;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = RandomParams {
            min_height: 1,
            max_height: 3,
            ..Default::default()
        };
        for _ in 0..500 {
            let pop = random_population(&mut rng, &p);
            assert!((1..=p.max_b).contains(&pop.size()));
            for r in pop.rollouts() {
                assert!((1..=3).contains(&r.height()));
                assert!(r.classes().all(|c| c.get() <= p.classes));
            }
        }
    }

    #[test]
    fn homologous_variant_is_homologous() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = RandomParams {
            max_b: 4,
            max_height: 3,
            ..Default::default()
        };
        for _ in 0..500 {
            assert!(is_homologous(&random_homologous_population(&mut rng, &p)));
        }
    }
}
