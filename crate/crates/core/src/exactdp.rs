//! Exact dynamic programming with full knowledge of the kernel.
//!
//! States are pairs `(x^K, a^{K-1})` of the last `K` observations and the
//! last `K - 1` actions, enumerated lexicographically (x-window major). This
//! module provides discounted value iteration, the α-discounted greedy action
//! sets, Cesàro-limit evaluation of stationary policies and the optimal
//! average cost `λ*` obtained from a Blackwell-style greedy policy.

use serde::Serialize;

use crate::env::{decode_window, encode_window, Environment};
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.999;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-9;

/// Successive Cesàro estimates must agree to this before evaluation stops.
pub const AVERAGE_COST_TOLERANCE: f64 = 1e-9;
pub const AVERAGE_COST_MAX_ITERATIONS: u64 = 10_000_000;

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("discount alpha must lie in (0, 1), got {alpha}")))
    }
}

// ---------------------------------------------------------------------------
// State space
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct StateSpace {
    order: usize,
    num_obs: usize,
    num_act: usize,
    a_states: usize,
    len: usize,
}

impl StateSpace {
    pub fn new(env: &Environment) -> Self {
        let order = env.order();
        let alphabet = env.alphabet();
        let a_states = alphabet.num_actions.pow(order as u32 - 1);
        Self {
            order,
            num_obs: alphabet.num_observations,
            num_act: alphabet.num_actions,
            a_states,
            len: alphabet.num_observations.pow(order as u32) * a_states,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn index(&self, x_window: &[usize], a_window: &[usize]) -> Result<usize> {
        if x_window.len() != self.order {
            return Err(Error::Dimension {
                what: "state x-window",
                expected: self.order,
                got: x_window.len(),
            });
        }
        if a_window.len() != self.order - 1 {
            return Err(Error::Dimension {
                what: "state a-window",
                expected: self.order - 1,
                got: a_window.len(),
            });
        }
        if x_window.iter().any(|&x| x >= self.num_obs) || a_window.iter().any(|&a| a >= self.num_act) {
            return Err(Error::param("state symbol out of range"));
        }
        Ok(encode_window(x_window, self.num_obs) * self.a_states + encode_window(a_window, self.num_act))
    }

    pub fn decode(&self, index: usize) -> (Vec<usize>, Vec<usize>) {
        let xw = decode_window(index / self.a_states, self.num_obs, self.order);
        let aw = decode_window(index % self.a_states, self.num_act, self.order - 1);
        (xw, aw)
    }
}

/// Precomputed transition structure: for each `(state, action)` the kernel
/// row, the current observation and the successor state for each next
/// observation.
struct Model<'a> {
    env: &'a Environment,
    states: StateSpace,
    /// `[state * A + a]` -> kernel row index
    row: Vec<usize>,
    /// `[(state * A + a) * X + x']` -> successor state
    next: Vec<usize>,
    /// `[state]` -> most recent observation
    last_obs: Vec<usize>,
}

impl<'a> Model<'a> {
    fn new(env: &'a Environment) -> Self {
        let states = StateSpace::new(env);
        let n_a = env.alphabet().num_actions;
        let n_x = env.alphabet().num_observations;
        let mut row = Vec::with_capacity(states.len() * n_a);
        let mut next = Vec::with_capacity(states.len() * n_a * n_x);
        let mut last_obs = Vec::with_capacity(states.len());
        for s in 0..states.len() {
            let (xw, aw) = states.decode(s);
            last_obs.push(*xw.last().expect("K >= 1"));
            for a in 0..n_a {
                let mut full_a = aw.clone();
                full_a.push(a);
                row.push(env.kernel().row_index_unchecked(&xw, &full_a));
                for xn in 0..n_x {
                    let mut nx = xw[1..].to_vec();
                    nx.push(xn);
                    let na = &full_a[1..];
                    next.push(states.index(&nx, na).expect("in range"));
                }
            }
        }
        Self {
            env,
            states,
            row,
            next,
            last_obs,
        }
    }

    fn n_a(&self) -> usize {
        self.env.alphabet().num_actions
    }

    fn n_x(&self) -> usize {
        self.env.alphabet().num_observations
    }

    #[inline]
    fn q_value(&self, values: &[f64], alpha: f64, s: usize, a: usize) -> f64 {
        let sa = s * self.n_a() + a;
        let probs = self.env.kernel().row(self.row[sa]);
        let x = self.last_obs[s];
        let cost = self.env.cost();
        let mut q = 0.0;
        for (xn, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                let succ = self.next[sa * self.n_x() + xn];
                q += p * (cost.get(x, a, xn) + alpha * values[succ]);
            }
        }
        q
    }

    fn q_values(&self, values: &[f64], alpha: f64, s: usize) -> Vec<f64> {
        (0..self.n_a()).map(|a| self.q_value(values, alpha, s, a)).collect()
    }

    fn backup_into(&self, values: &[f64], alpha: f64, out: &mut [f64]) {
        for (s, slot) in out.iter_mut().enumerate() {
            *slot = (0..self.n_a())
                .map(|a| self.q_value(values, alpha, s, a))
                .fold(f64::INFINITY, f64::min);
        }
    }

    /// Expected one-step cost under `action` in state `s`.
    fn expected_cost(&self, s: usize, a: usize) -> f64 {
        let zero = vec![0.0; self.states.len()];
        self.q_value(&zero, 0.0, s, a)
    }
}

// ---------------------------------------------------------------------------
// Value functions and policies
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    pub alpha: f64,
}

impl ValueFunction {
    pub fn zeros(env: &Environment, alpha: f64) -> Self {
        Self {
            values: vec![0.0; StateSpace::new(env).len()],
            alpha,
        }
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StationaryPolicy {
    pub actions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyActionSet {
    pub actions: Vec<usize>,
    pub tie_tolerance: f64,
}

impl GreedyActionSet {
    pub fn contains(&self, action: usize) -> bool {
        self.actions.contains(&action)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscountedSolution {
    pub value: ValueFunction,
    pub iterations: usize,
    pub tol: f64,
}

fn check_values(env: &Environment, j: &ValueFunction) -> Result<()> {
    let n = StateSpace::new(env).len();
    if j.values.len() != n {
        return Err(Error::Dimension {
            what: "value function",
            expected: n,
            got: j.values.len(),
        });
    }
    Ok(())
}

/// One application of the discounted Bellman operator `T`.
pub fn bellman_backup(env: &Environment, j: &ValueFunction, alpha: f64) -> Result<ValueFunction> {
    check_alpha(alpha)?;
    check_values(env, j)?;
    let model = Model::new(env);
    let mut out = vec![0.0; j.values.len()];
    model.backup_into(&j.values, alpha, &mut out);
    Ok(ValueFunction { values: out, alpha })
}

/// Lookahead values `Q(s, a)` for every action at `state`.
pub fn q_values(env: &Environment, j: &ValueFunction, alpha: f64, state: usize) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    check_values(env, j)?;
    let model = Model::new(env);
    if state >= model.states.len() {
        return Err(Error::param(format!("state {state} out of range")));
    }
    Ok(model.q_values(&j.values, alpha, state))
}

/// Value iteration from `J = 0` until successive iterates are within
/// `tol (1 - α) / (2α)` in sup norm, which puts the result within `tol` of
/// the fixed point.
pub fn solve_discounted(env: &Environment, alpha: f64, tol: f64) -> Result<DiscountedSolution> {
    check_alpha(alpha)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::param(format!("tolerance must be positive, got {tol}")));
    }
    let model = Model::new(env);
    let n = model.states.len();
    let stop = tol * (1.0 - alpha) / (2.0 * alpha);
    // Rounding can keep the residual just above a very small `stop`; past the
    // contraction bound the iterate is as accurate as floating point allows.
    let g_max = env.cost().g_max().max(f64::MIN_POSITIVE);
    let cap = 2 * ((g_max / stop).ln() / (1.0 / alpha).ln()).ceil().max(1.0) as usize + 100;

    let mut current = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    loop {
        model.backup_into(&current, alpha, &mut next);
        iterations += 1;
        let diff = current
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut current, &mut next);
        if diff <= stop || iterations >= cap {
            break;
        }
    }
    Ok(DiscountedSolution {
        value: ValueFunction {
            values: current,
            alpha,
        },
        iterations,
        tol,
    })
}

/// All actions whose lookahead value is within `tie_tolerance` of the best.
pub fn greedy_actions(
    env: &Environment,
    j: &ValueFunction,
    alpha: f64,
    state: usize,
    tie_tolerance: f64,
) -> Result<GreedyActionSet> {
    let q = q_values(env, j, alpha, state)?;
    Ok(greedy_set_from_q(&q, tie_tolerance))
}

fn greedy_set_from_q(q: &[f64], tie_tolerance: f64) -> GreedyActionSet {
    let best = q.iter().copied().fold(f64::INFINITY, f64::min);
    let actions = q
        .iter()
        .enumerate()
        .filter(|(_, &v)| v - best <= tie_tolerance)
        .map(|(a, _)| a)
        .collect();
    GreedyActionSet {
        actions,
        tie_tolerance,
    }
}

/// Greedy action sets for every state.
pub fn greedy_table(env: &Environment, j: &ValueFunction, tie_tolerance: f64) -> Result<Vec<GreedyActionSet>> {
    check_alpha(j.alpha)?;
    check_values(env, j)?;
    let model = Model::new(env);
    Ok((0..model.states.len())
        .map(|s| greedy_set_from_q(&model.q_values(&j.values, j.alpha, s), tie_tolerance))
        .collect())
}

/// Greedy policy, ties broken towards the lowest action index.
pub fn greedy_policy(env: &Environment, j: &ValueFunction, tie_tolerance: f64) -> Result<StationaryPolicy> {
    Ok(StationaryPolicy {
        actions: greedy_table(env, j, tie_tolerance)?
            .into_iter()
            .map(|set| set.actions[0])
            .collect(),
    })
}

/// Long-run average cost of a stationary policy started from `init_state`.
///
/// The Cesàro limit of the state distribution is reached by power iteration
/// on the lazy chain `(I + P)/2`, whose powers converge to the Cesàro
/// projector of `P` even when `P` is periodic.
pub fn policy_average_cost(env: &Environment, policy: &StationaryPolicy, init_state: usize) -> Result<f64> {
    let model = Model::new(env);
    let n = model.states.len();
    if policy.actions.len() != n {
        return Err(Error::Dimension {
            what: "policy",
            expected: n,
            got: policy.actions.len(),
        });
    }
    if init_state >= n {
        return Err(Error::param(format!("initial state {init_state} out of range")));
    }
    let n_a = model.n_a();
    let n_x = model.n_x();
    for &a in &policy.actions {
        env.alphabet().check_action(a)?;
    }
    let reward: Vec<f64> = (0..n).map(|s| model.expected_cost(s, policy.actions[s])).collect();

    let mut dist = vec![0.0; n];
    dist[init_state] = 1.0;
    let mut next = vec![0.0; n];
    let dot = |d: &[f64]| d.iter().zip(&reward).map(|(p, r)| p * r).sum::<f64>();
    let mut estimate = dot(&dist);
    let mut gap = f64::INFINITY;
    for iteration in 1..=AVERAGE_COST_MAX_ITERATIONS {
        next.iter_mut().zip(&dist).for_each(|(n, d)| *n = 0.5 * d);
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let sa = s * n_a + policy.actions[s];
            let probs = env.kernel().row(model.row[sa]);
            for (xn, &p) in probs.iter().enumerate() {
                if p > 0.0 {
                    next[model.next[sa * n_x + xn]] += 0.5 * mass * p;
                }
            }
        }
        let moved: f64 = next.iter().zip(&dist).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut dist, &mut next);
        let updated = dot(&dist);
        gap = (updated - estimate).abs();
        estimate = updated;
        if gap <= AVERAGE_COST_TOLERANCE && moved <= AVERAGE_COST_TOLERANCE && iteration > 1 {
            return Ok(estimate);
        }
    }
    Err(Error::NotConverged {
        iterations: AVERAGE_COST_MAX_ITERATIONS,
        gap,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AverageCostSolution {
    pub lambda: f64,
    pub policy: StationaryPolicy,
    pub discounted: DiscountedSolution,
}

/// Initial state index of the environment's fixed history.
pub fn initial_state(env: &Environment) -> usize {
    StateSpace::new(env)
        .index(env.initial_x(), env.initial_a())
        .expect("environment validates its initial history")
}

/// `λ*` from the environment's initial state, via the lowest-index greedy
/// policy for the α-discounted problem.
pub fn optimal_average_cost(env: &Environment, alpha: f64) -> Result<AverageCostSolution> {
    let discounted = solve_discounted(env, alpha, DEFAULT_TOL)?;
    let policy = greedy_policy(env, &discounted.value, DEFAULT_TIE_TOLERANCE)?;
    let lambda = policy_average_cost(env, &policy, initial_state(env))?;
    Ok(AverageCostSolution {
        lambda,
        policy,
        discounted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Alphabet, CostFunction, MarkovKernel, PAPER, ROCK, SCISSORS};

    fn constant_env(c: f64) -> Environment {
        let alphabet = Alphabet::new(2, 2).unwrap();
        let kernel = MarkovKernel::from_fn(1, alphabet, |xw, aw| {
            if xw[0] == aw[0] {
                vec![0.25, 0.75]
            } else {
                vec![0.6, 0.4]
            }
        })
        .unwrap();
        let cost = CostFunction::from_fn(alphabet, c.abs(), |_, _, _| c).unwrap();
        Environment::new(kernel, cost, vec![0], vec![]).unwrap()
    }

    #[test]
    fn backup_of_zero_with_constant_cost() {
        let env = constant_env(0.7);
        let tj = bellman_backup(&env, &ValueFunction::zeros(&env, 0.9), 0.9).unwrap();
        assert!(tj.values.iter().all(|v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn alpha_out_of_range_is_rejected() {
        let env = constant_env(1.0);
        for alpha in [0.0, 1.0, -0.5, 1.5] {
            assert!(bellman_backup(&env, &ValueFunction::zeros(&env, alpha), alpha).is_err());
        }
    }

    #[test]
    fn constant_cost_fixed_point() {
        let env = constant_env(-0.4);
        let alpha = 0.95;
        let tol = 1e-7;
        let sol = solve_discounted(&env, alpha, tol).unwrap();
        for v in &sol.value.values {
            assert!((v - (-0.4 / (1.0 - alpha))).abs() <= tol);
        }
    }

    #[test]
    fn constant_cost_greedy_set_is_everything() {
        let env = constant_env(1.0);
        let sol = solve_discounted(&env, 0.9, 1e-9).unwrap();
        for s in 0..2 {
            assert_eq!(greedy_actions(&env, &sol.value, 0.9, s, 0.0).unwrap().actions, vec![0, 1]);
            assert_eq!(
                greedy_actions(&env, &sol.value, 0.9, s, f64::INFINITY).unwrap().actions,
                vec![0, 1]
            );
        }
        let policy = StationaryPolicy { actions: vec![1, 0] };
        assert!((policy_average_cost(&env, &policy, 0).unwrap() - 1.0).abs() < 1e-9);
        assert!((optimal_average_cost(&env, 0.9).unwrap().lambda - 1.0).abs() < 1e-9);
    }

    #[test]
    fn state_space_enumeration_round_trips() {
        let env = Environment::rps();
        let states = StateSpace::new(&env);
        assert_eq!(states.len(), 27);
        for s in 0..states.len() {
            let (xw, aw) = states.decode(s);
            assert_eq!(states.index(&xw, &aw).unwrap(), s);
        }
        assert_eq!(states.index(&[0, 1], &[2]).unwrap(), 5);
    }

    #[test]
    fn rps_trigger_state_prefers_paper() {
        let env = Environment::rps();
        let alpha = 0.999;
        let sol = solve_discounted(&env, alpha, DEFAULT_TOL).unwrap();
        let states = StateSpace::new(&env);
        for s in 0..states.len() {
            let (xw, aw) = states.decode(s);
            let set = greedy_actions(&env, &sol.value, alpha, s, DEFAULT_TIE_TOLERANCE).unwrap();
            if xw[1] == ROCK && aw[0] == SCISSORS {
                assert_eq!(set.actions, vec![PAPER]);
            } else {
                assert_eq!(set.actions, vec![SCISSORS]);
            }
        }
    }

    #[test]
    fn rps_optimal_average_cost() {
        let env = Environment::rps();
        let sol = optimal_average_cost(&env, DEFAULT_ALPHA).unwrap();
        assert!((sol.lambda + 0.25).abs() < 1e-6, "lambda = {}", sol.lambda);
    }

    #[test]
    fn hand_written_rps_policy_costs_a_quarter() {
        let env = Environment::rps();
        let states = StateSpace::new(&env);
        let actions = (0..states.len())
            .map(|s| {
                let (xw, aw) = states.decode(s);
                if xw[1] == ROCK && aw[0] == SCISSORS {
                    PAPER
                } else {
                    SCISSORS
                }
            })
            .collect();
        let lambda = policy_average_cost(&env, &StationaryPolicy { actions }, initial_state(&env)).unwrap();
        assert!((lambda + 0.25).abs() < 1e-6);
    }

    #[test]
    fn periodic_chain_is_evaluated() {
        // Deterministic flip 0 -> 1 -> 0 with cost 1 on leaving 0 and -1 on
        // leaving 1: period two, average zero.
        let alphabet = Alphabet::new(2, 1).unwrap();
        let kernel = MarkovKernel::from_fn(1, alphabet, |xw, _| {
            if xw[0] == 0 {
                vec![0.0, 1.0]
            } else {
                vec![1.0, 0.0]
            }
        })
        .unwrap();
        let cost = CostFunction::from_fn(alphabet, 1.0, |x, _, _| if x == 0 { 1.0 } else { -1.0 }).unwrap();
        let env = Environment::new(kernel, cost, vec![0], vec![]).unwrap();
        let lambda = policy_average_cost(&env, &StationaryPolicy { actions: vec![0, 0] }, 0).unwrap();
        assert!(lambda.abs() < 1e-6, "lambda = {lambda}");
    }

    #[test]
    fn policy_length_is_checked() {
        let env = Environment::rps();
        let err = policy_average_cost(&env, &StationaryPolicy { actions: vec![0; 3] }, 0).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }
}
