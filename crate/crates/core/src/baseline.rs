//! Predictive LZ: a myopic comparison controller.
//!
//! The opponent's observation string alone is parsed into LZ78 phrases. At
//! each step the most likely next observation under the add-half estimate at
//! the current context is predicted, and the action with the lowest
//! immediate cost against that prediction is played. The controller never
//! accounts for how its own actions shape future observations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Controller, Decision};
use crate::ctree::{ContextTree, NodeId};
use crate::env::{Alphabet, CostFunction};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionTie {
    #[default]
    LowestIndex,
    UniformRandom,
}

pub struct PredictiveLzAgent {
    /// Observation-only tree: a single dummy action labels every deep edge.
    tree: ContextTree,
    cost: CostFunction,
    tie: PredictionTie,
    rng: ChaCha8Rng,
}

impl PredictiveLzAgent {
    pub fn new(cost: CostFunction, tie: PredictionTie, seed: u64) -> Result<Self> {
        let alphabet = Alphabet::new(cost.alphabet().num_observations, 1)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        Ok(Self {
            // The discount is never used by a counts-only tree.
            tree: ContextTree::new(alphabet, 0.5)?,
            cost,
            tie,
            rng,
        })
    }

    pub fn tree(&self) -> &ContextTree {
        &self.tree
    }

    fn context(&self) -> NodeId {
        self.tree.current().unwrap_or(NodeId::ROOT)
    }

    /// Estimated distribution of the next observation.
    pub fn next_dist(&self) -> Vec<f64> {
        self.tree.kt_dist(self.context(), 0)
    }

    /// Most likely next observation.
    pub fn predict_next(&mut self) -> usize {
        let dist = self.next_dist();
        let best = dist.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..dist.len()).filter(|&x| dist[x] == best).collect();
        match self.tie {
            PredictionTie::LowestIndex => ties[0],
            PredictionTie::UniformRandom => ties[self.rng.random_range(0..ties.len())],
        }
    }

    /// Lowest-cost reply to `predicted` given the current observation,
    /// lowest index on ties.
    pub fn best_response(&self, observation: usize, predicted: usize) -> usize {
        let n_a = self.cost.alphabet().num_actions;
        (0..n_a)
            .map(|a| (a, self.cost.get(observation, a, predicted)))
            .fold((0, f64::INFINITY), |best, (a, g)| if g < best.1 { (a, g) } else { best })
            .0
    }

    pub fn step(&mut self, observation: usize) -> Result<Decision> {
        let edge = if self.tree.depth() == 0 { None } else { Some(0) };
        let seen = self.tree.descend(edge, observation)?;
        if !seen {
            self.tree.finalize_phrase_counts()?;
        }
        let predicted = self.predict_next();
        Ok(Decision {
            action: self.best_response(observation, predicted),
            coin_explore: false,
            novel: !seen,
            context: Some(self.context()),
        })
    }
}

impl Controller for PredictiveLzAgent {
    fn act(&mut self, observation: usize) -> Result<Decision> {
        self.step(observation)
    }

    fn phrases(&self) -> u64 {
        self.tree.phrases()
    }

    fn max_depth(&self) -> usize {
        self.tree.max_depth()
    }

    fn estimate(&self, decision: &Decision) -> Option<Vec<f64>> {
        decision.context.map(|node| self.tree.kt_dist(node, 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Environment, PAPER, ROCK, SCISSORS};

    fn agent() -> PredictiveLzAgent {
        PredictiveLzAgent::new(Environment::rps().cost().clone(), PredictionTie::LowestIndex, 0).unwrap()
    }

    #[test]
    fn empty_tree_predicts_first_symbol() {
        assert_eq!(agent().predict_next(), ROCK);
    }

    #[test]
    fn best_responses() {
        let a = agent();
        assert_eq!(a.best_response(0, ROCK), PAPER);
        assert_eq!(a.best_response(0, SCISSORS), ROCK);
        assert_eq!(a.best_response(2, PAPER), SCISSORS);
    }

    #[test]
    fn argmax_of_counts() {
        // LZ78 phrases 0 | 1 | 00 | 000 | 0000 | 00000 leave root child
        // counts (5, 1, 0).
        let mut a = agent();
        let seq = [0, 1].into_iter().chain(std::iter::repeat_n(0, 14));
        for x in seq {
            a.step(x).unwrap();
        }
        assert_eq!(a.tree().phrases(), 6);
        let root_counts: Vec<u64> = a
            .tree()
            .children(NodeId::ROOT)
            .map(|(_, id)| a.tree().node(id).count)
            .collect();
        assert_eq!(root_counts, vec![5, 1]);
        let d = a.tree().kt_dist(NodeId::ROOT, 0);
        assert!((d[0] - 5.5 / 7.5).abs() < 1e-15);
        assert!((d[1] - 1.5 / 7.5).abs() < 1e-15);
        assert!((d[2] - 0.5 / 7.5).abs() < 1e-15);
        assert_eq!(a.predict_next(), 0);
    }

    #[test]
    fn repeating_rock_is_eventually_always_predicted() {
        let mut a = agent();
        for t in 0..1000 {
            let d = a.step(ROCK).unwrap();
            if t >= 64 {
                assert_eq!(d.action, PAPER);
            }
        }
    }

    #[test]
    fn never_loses_to_its_own_prediction() {
        let env = Environment::rps();
        let mut a = PredictiveLzAgent::new(env.cost().clone(), PredictionTie::UniformRandom, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5000 {
            let obs = rng.random_range(0..3);
            let d = a.step(obs).unwrap();
            // The reply must not lose to the maximiser it was chosen against.
            let dist = a.next_dist();
            let best = dist.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let maximisers: Vec<usize> = (0..3).filter(|&x| dist[x] == best).collect();
            assert!(maximisers.iter().any(|&x| env.cost().get(obs, d.action, x) < 1.0));
        }
    }
}
