//! The active LZ controller: a context tree whose transition and cost-to-go
//! estimates drive greedy action selection, mixed with uniform exploration
//! at rate `γ_t`, plus the epoch-doubling wrapper that lets the discount
//! approach 1 over time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::{RunTrace, TraceRecorder};
use crate::ctree::{ContextTree, NodeId};
use crate::env::{CostFunction, EnvState, Environment};
use crate::error::{Error, Result};
use crate::exactdp::check_alpha;

// ---------------------------------------------------------------------------
// Exploration schedules
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExplorationSchedule {
    /// `(a1 / ln t)^{1 / (a2 Kbar)}`, the slowest decay the optimality
    /// argument allows.
    Theory { a1: f64, a2: f64, kbar: f64 },
    /// `min(1, c0 t^{-rho})`.
    Power { c0: f64, rho: f64 },
    Constant { gamma: f64 },
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        ExplorationSchedule::Power { c0: 0.5, rho: 0.2 }
    }
}

impl ExplorationSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ExplorationSchedule::Theory { a1, a2, kbar } => a1 > 0.0 && a2 > 1.0 && kbar > 0.0,
            ExplorationSchedule::Power { c0, rho } => c0 > 0.0 && rho >= 0.0,
            ExplorationSchedule::Constant { gamma } => (0.0..=1.0).contains(&gamma),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid exploration schedule {self:?}")))
        }
    }

    /// Exploration probability at time `t >= 1`.
    pub fn gamma(&self, t: u64) -> f64 {
        let t = t.max(1) as f64;
        let g = match *self {
            // ln is clamped at t = 3 so the value stays finite and monotone
            // at t = 1, 2.
            ExplorationSchedule::Theory { a1, a2, kbar } => (a1 / t.max(3.0).ln()).powf(1.0 / (a2 * kbar)),
            ExplorationSchedule::Power { c0, rho } => c0 * t.powf(-rho),
            ExplorationSchedule::Constant { gamma } => gamma,
        };
        g.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    LowestIndex,
    #[default]
    UniformRandom,
}

/// Lookahead values within this of the minimum count as tied under
/// [`TieRule::UniformRandom`].
const TIE_EPSILON: f64 = 1e-12;

pub const DEFAULT_AGENT_ALPHA: f64 = 0.7;

fn default_agent_alpha() -> f64 {
    DEFAULT_AGENT_ALPHA
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    #[serde(default = "default_agent_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub schedule: ExplorationSchedule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tie_rule: TieRule,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_AGENT_ALPHA,
            schedule: ExplorationSchedule::default(),
            seed: 0,
            tie_rule: TieRule::UniformRandom,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        self.schedule.validate()
    }
}

// ---------------------------------------------------------------------------
// RNG streams
// ---------------------------------------------------------------------------

/// Independent deterministic streams derived from one seed: the
/// explore/exploit coin, uniform action draws and environment sampling.
pub struct Streams {
    pub coin: ChaCha8Rng,
    pub action: ChaCha8Rng,
    pub env: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let stream = |id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            coin: stream(1),
            action: stream(2),
            env: stream(3),
        }
    }
}

// ---------------------------------------------------------------------------
// Controllers
// ---------------------------------------------------------------------------

/// Outcome of one decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub action: usize,
    /// The exploration coin came up heads this step.
    pub coin_explore: bool,
    /// The context was new, so the action was uniform and a phrase closed.
    pub novel: bool,
    /// Node of the (previously visited) context the action was chosen in.
    pub context: Option<NodeId>,
}

/// Anything that maps observations to actions online.
pub trait Controller {
    fn act(&mut self, observation: usize) -> Result<Decision>;

    fn phrases(&self) -> u64 {
        0
    }

    fn max_depth(&self) -> usize {
        0
    }

    /// Estimated distribution of the next observation in the context of
    /// `decision`; `None` when the context had never been visited.
    fn estimate(&self, _decision: &Decision) -> Option<Vec<f64>> {
        None
    }
}

pub struct ActiveLzAgent {
    tree: ContextTree,
    config: AgentConfig,
    cost: CostFunction,
    t: u64,
    coin: ChaCha8Rng,
    action_rng: ChaCha8Rng,
    last_action: Option<usize>,
    q_buf: Vec<f64>,
}

impl ActiveLzAgent {
    pub fn new(config: AgentConfig, cost: CostFunction) -> Result<Self> {
        config.validate()?;
        let Streams { coin, action, .. } = Streams::new(config.seed);
        Ok(Self {
            tree: ContextTree::new(cost.alphabet(), config.alpha)?,
            config,
            q_buf: Vec::with_capacity(cost.alphabet().num_actions),
            cost,
            t: 0,
            coin,
            action_rng: action,
            last_action: None,
        })
    }

    pub fn tree(&self) -> &ContextTree {
        &self.tree
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// Number of steps taken so far.
    pub fn time(&self) -> u64 {
        self.t
    }

    /// Observes `X_t` and returns `A_t`.
    pub fn step(&mut self, observation: usize) -> Result<Decision> {
        self.t += 1;
        let n_a = self.cost.alphabet().num_actions;
        let coin_explore = self.coin.random::<f64>() < self.config.schedule.gamma(self.t);
        let uniform = self.action_rng.random_range(0..n_a);

        let edge_action = if self.tree.depth() == 0 { None } else { self.last_action };
        let seen = self.tree.descend(edge_action, observation)?;
        let decision = if seen {
            let node = self.tree.current().expect("descended into a visited node");
            let action = if coin_explore { uniform } else { self.greedy(node, observation) };
            Decision {
                action,
                coin_explore,
                novel: false,
                context: Some(node),
            }
        } else {
            self.tree.finalize_phrase(&self.cost)?;
            Decision {
                action: uniform,
                coin_explore,
                novel: true,
                context: None,
            }
        };
        self.last_action = Some(decision.action);
        Ok(decision)
    }

    fn greedy(&mut self, node: NodeId, observation: usize) -> usize {
        match self.config.tie_rule {
            TieRule::LowestIndex => self.tree.greedy_eval(node, &self.cost, observation).0,
            TieRule::UniformRandom => {
                self.q_buf.clear();
                self.q_buf.extend(self.tree.lookahead(node, &self.cost, observation));
                let best = self.q_buf.iter().copied().fold(f64::INFINITY, f64::min);
                let ties: Vec<usize> = (0..self.q_buf.len())
                    .filter(|&a| self.q_buf[a] - best <= TIE_EPSILON)
                    .collect();
                ties[self.action_rng.random_range(0..ties.len())]
            }
        }
    }
}

impl Controller for ActiveLzAgent {
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
        decision.context.map(|node| self.tree.kt_dist(node, decision.action))
    }
}

// ---------------------------------------------------------------------------
// Episode drivers
// ---------------------------------------------------------------------------

/// Drives `controller` against `env` for `steps` steps, feeding each step to
/// `recorder`.
pub fn run_steps<C: Controller + ?Sized>(
    controller: &mut C,
    env: &Environment,
    state: &mut EnvState,
    env_rng: &mut ChaCha8Rng,
    steps: u64,
    recorder: &mut TraceRecorder,
) -> Result<()> {
    for _ in 0..steps {
        let decision = controller.act(state.observation())?;
        recorder.before_step(env, state, &decision, &*controller);
        let (_, cost) = state.step(env, decision.action, env_rng);
        recorder.after_step(cost, &*controller);
    }
    Ok(())
}

/// Runs one controller for `horizon` steps from the environment's initial
/// history, with environment noise drawn from the `seed` environment stream.
pub fn run_episode<C: Controller + ?Sized>(
    controller: &mut C,
    env: &Environment,
    seed: u64,
    horizon: u64,
    mut recorder: TraceRecorder,
) -> Result<RunTrace> {
    if horizon == 0 {
        return Err(Error::param("horizon must be at least 1"));
    }
    let mut env_rng = Streams::new(seed).env;
    let mut state = env.start();
    recorder.set_seed(seed);
    run_steps(controller, env, &mut state, &mut env_rng, horizon, &mut recorder)?;
    Ok(recorder.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublingConfig {
    /// `β_k = b0 / ln ln (k + e^e)`; must lie in (0, 1).
    pub b0: f64,
}

impl Default for DoublingConfig {
    fn default() -> Self {
        Self { b0: 0.3 }
    }
}

impl DoublingConfig {
    pub fn beta(&self, k: u32) -> f64 {
        let e_e = std::f64::consts::E.powf(std::f64::consts::E);
        self.b0 / (k as f64 + e_e).ln().ln()
    }

    pub fn validate(&self) -> Result<()> {
        if self.b0 > 0.0 && self.b0 < 1.0 {
            Ok(())
        } else {
            Err(Error::param(format!("doubling b0 must lie in (0, 1), got {}", self.b0)))
        }
    }
}

/// Seed of the agent used in epoch `k`; epoch 0 reuses the template seed.
pub fn epoch_seed(base: u64, k: u32) -> u64 {
    base.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs a fresh active LZ agent with `α = 1 - β_k` over global times
/// `[2^k, 2^{k+1})` for `k = 0, 1, ...` until `horizon` steps are done. The
/// environment keeps running across epochs.
pub fn run_doubling(
    env: &Environment,
    doubling: &DoublingConfig,
    template: &AgentConfig,
    horizon: u64,
    mut recorder: TraceRecorder,
) -> Result<RunTrace> {
    doubling.validate()?;
    if horizon < 2 {
        return Err(Error::param("doubling horizon must be at least 2"));
    }
    let mut env_rng = Streams::new(template.seed).env;
    let mut state = env.start();
    recorder.set_seed(template.seed);
    let mut start = 1u64;
    let mut k = 0u32;
    while start <= horizon {
        let end = ((1u64 << (k + 1)) - 1).min(horizon);
        let config = AgentConfig {
            alpha: 1.0 - doubling.beta(k),
            seed: epoch_seed(template.seed, k),
            ..*template
        };
        let mut agent = ActiveLzAgent::new(config, env.cost().clone())?;
        recorder.mark_epoch(start);
        run_steps(&mut agent, env, &mut state, &mut env_rng, end - start + 1, &mut recorder)?;
        start = end + 1;
        k += 1;
    }
    Ok(recorder.finish())
}
