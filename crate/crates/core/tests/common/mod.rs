//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ulz_core::agent::{ActiveLzAgent, AgentConfig, Controller};
use ulz_core::ctree::{ContextTree, NodeId};
use ulz_core::env::{Alphabet, CostFunction, Environment, MarkovKernel};

/// Classic LZ78: end index (inclusive) of every completed phrase.
pub fn reference_lz78(s: &[usize]) -> Vec<usize> {
    let mut dict: HashSet<Vec<usize>> = HashSet::new();
    let mut cur = Vec::new();
    let mut ends = Vec::new();
    for (i, &x) in s.iter().enumerate() {
        cur.push(x);
        if !dict.contains(&cur) {
            dict.insert(std::mem::take(&mut cur));
            ends.push(i);
        }
    }
    ends
}

pub fn binary_strings(max_len: usize) -> impl Iterator<Item = Vec<usize>> {
    (1..=max_len).flat_map(|len| (0u32..(1 << len)).map(move |bits| (0..len).map(|i| ((bits >> i) & 1) as usize).collect()))
}

/// Phrase ends produced by an active LZ agent with a single action.
pub fn agent_phrase_ends(s: &[usize]) -> Vec<usize> {
    let alphabet = Alphabet::new(2, 1).unwrap();
    let cost = CostFunction::from_fn(alphabet, 1.0, |x, _, xn| if x == xn { 0.0 } else { 1.0 }).unwrap();
    let mut agent = ActiveLzAgent::new(AgentConfig::default(), cost).unwrap();
    s.iter()
        .enumerate()
        .filter_map(|(i, &x)| agent.act(x).unwrap().novel.then_some(i))
        .collect()
}

/// Root count equals completed phrases and every other node's count exceeds
/// its children's total by one. Returns a description of the first violation.
pub fn count_violation(tree: &ContextTree) -> Option<String> {
    let root_sum: u64 = tree.children(NodeId::ROOT).map(|(_, c)| tree.node(c).count).sum();
    if tree.root().count != tree.phrases() || root_sum != tree.phrases() {
        return Some(format!("root count {} / children {root_sum} / phrases {}", tree.root().count, tree.phrases()));
    }
    for id in tree.node_ids().filter(|&id| id != NodeId::ROOT) {
        let sum: u64 = tree.children(id).map(|(_, c)| tree.node(c).count).sum();
        if tree.node(id).count != sum + 1 {
            return Some(format!("node {} count {} children {sum}", id.index(), tree.node(id).count));
        }
    }
    None
}

/// Checks the tree after a completed phrase; `phrase` is `(x1, a1, ..., x_l)`
/// and `seen` holds earlier phrases (and the empty one).
pub fn tree_violation(
    tree: &ContextTree,
    g_max: f64,
    phrase: &[usize],
    seen: &mut HashSet<Vec<usize>>,
) -> Option<String> {
    if let Some(v) = count_violation(tree) {
        return Some(v);
    }
    let alpha = tree.alpha();
    let bound = g_max / (1.0 - alpha);
    for id in tree.node_ids() {
        let node = tree.node(id);
        if node.value.abs() > bound {
            return Some(format!("value {} exceeds {bound}", node.value));
        }
        for a in 0..tree.alphabet().num_actions {
            let d = tree.kt_dist(id, a);
            if (d.iter().sum::<f64>() - 1.0).abs() > 1e-12 || !d.iter().all(|&p| p > 0.0 && p < 1.0) {
                return Some(format!("estimate {d:?} is not a proper distribution"));
            }
        }
    }
    let parent = &phrase[..phrase.len().saturating_sub(2)];
    if !seen.contains(parent) {
        return Some(format!("prefix of {phrase:?} was never a phrase"));
    }
    if !seen.insert(phrase.to_vec()) {
        return Some(format!("phrase {phrase:?} repeated"));
    }
    None
}

/// Drives `agent` on `env` for `steps` steps, calling `check` with the phrase
/// string after every completed phrase. Stops at the first violation.
pub fn first_violation_in_run(
    env: &Environment,
    config: AgentConfig,
    steps: u64,
) -> Option<String> {
    let mut agent = ActiveLzAgent::new(config, env.cost().clone()).unwrap();
    let mut state = env.start();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xABCD);
    let mut phrase = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::from([Vec::new()]);
    for _ in 0..steps {
        let x = state.observation();
        let d = agent.act(x).unwrap();
        phrase.push(x);
        if d.novel {
            if let Some(v) = tree_violation(agent.tree(), env.cost().g_max(), &phrase, &mut seen) {
                return Some(v);
            }
            phrase.clear();
        } else {
            phrase.push(d.action);
        }
        state.step(env, d.action, &mut rng);
    }
    None
}

/// Maximum over all binary sequences of length T of the add-half code length
/// minus the best constant assignment's, in bits. Index 0 is T = 1.
pub const GOLDEN_MAX_REGRET: [f64; 12] = [
    1.0,
    1.415037499278844,
    1.6780719051126376,
    1.8707169830550336,
    2.0227200765000837,
    2.1482509585839424,
    2.2551661625004544,
    2.3482755668919357,
    2.430737727083909,
    2.5047383085276858,
    2.571852504386223,
    2.633253049050366,
];

/// Code length of the best constant assignment, `T * H(n1 / T)` bits.
pub fn best_constant_bits(n0: usize, n1: usize) -> f64 {
    let t = (n0 + n1) as f64;
    [n0, n1]
        .iter()
        .filter(|&&n| n > 0)
        .map(|&n| -(n as f64) * (n as f64 / t).log2())
        .sum()
}

/// The add-half probability of a binary sequence depends only on its counts:
/// `prod_i (i + 1/2)` over each symbol divided by `prod_j (j + 1)`.
pub fn closed_form_bits(n0: usize, n1: usize) -> f64 {
    let num: f64 = (0..n0).map(|i| (i as f64 + 0.5).log2()).sum::<f64>()
        + (0..n1).map(|i| (i as f64 + 0.5).log2()).sum::<f64>();
    let den: f64 = (0..n0 + n1).map(|j| (j as f64 + 1.0).log2()).sum();
    den - num
}

pub fn random_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

/// A random order-1 instance with costs in [-1, 1].
pub fn random_env(rng: &mut ChaCha8Rng, n_x: usize, n_a: usize) -> Environment {
    let alphabet = Alphabet::new(n_x, n_a).unwrap();
    let rows: Vec<Vec<f64>> = (0..n_x * n_a).map(|_| random_row(rng, n_x)).collect();
    let kernel = MarkovKernel::new(1, alphabet, rows).unwrap();
    let table: Vec<f64> = (0..n_x * n_a * n_x).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let cost = CostFunction::new(alphabet, table, 1.0).unwrap();
    Environment::new(kernel, cost, vec![0], vec![]).unwrap()
}

pub fn p(env: &Environment, x: usize, a: usize) -> &[f64] {
    env.kernel().next_dist(&[x], &[a]).unwrap()
}

/// Long-run average cost of a two-state order-1 chain started in state 0.
pub fn two_state_average(env: &Environment, policy: [usize; 2]) -> f64 {
    let c = |x: usize| -> f64 {
        let a = policy[x];
        (0..2).map(|xn| p(env, x, a)[xn] * env.cost().get(x, a, xn)).sum()
    };
    let p01 = p(env, 0, policy[0])[1];
    let p10 = p(env, 1, policy[1])[0];
    if p01 + p10 == 0.0 {
        return c(0);
    }
    (p10 * c(0) + p01 * c(1)) / (p01 + p10)
}

/// Minimum average cost over the four stationary policies of a 2x2 instance.
pub fn enumerated_optimum(env: &Environment) -> f64 {
    (0..4usize)
        .map(|code| two_state_average(env, [code & 1, code >> 1]))
        .fold(f64::INFINITY, f64::min)
}
