//! Experiment harness and diagnostics.
//!
//! Runs controllers against an environment, records cumulative average cost
//! and diagnostic fractions at checkpoints, and persists traces as CSV. The
//! diagnostics that need the true kernel (suboptimal actions against the
//! exact α-discounted greedy sets, one-step inaccuracy of the estimated
//! transition law) live here and are opt-in, so controllers never see ground
//! truth.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{
    run_doubling, run_episode, ActiveLzAgent, AgentConfig, Controller, Decision, DoublingConfig,
};
use crate::baseline::{PredictionTie, PredictiveLzAgent};
use crate::env::{EnvState, Environment};
use crate::error::{Error, Result};
use crate::exactdp::{
    greedy_table, optimal_average_cost, solve_discounted, GreedyActionSet, StateSpace,
    StationaryPolicy, DEFAULT_ALPHA, DEFAULT_TIE_TOLERANCE, DEFAULT_TOL,
};

/// Exact CSV header.
pub const CSV_HEADER: [&str; 9] = [
    "t",
    "avg_cost",
    "explore_frac",
    "subopt_frac",
    "onestep_inacc_frac",
    "phrases",
    "max_depth",
    "seed",
    "agent",
];

const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Distances between distributions
// ---------------------------------------------------------------------------

/// A validated probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::param("distribution entries must be finite and nonnegative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(Error::param(format!("distribution sums to {sum}")));
        }
        Ok(Self(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Distribution {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_same_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Dimension {
            what: "distribution length",
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(())
}

/// Half the L1 distance.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    check_same_len(p, q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    /// Nats; `f64::INFINITY` when `p` is not absolutely continuous w.r.t. `q`.
    pub value: f64,
    pub absolutely_continuous: bool,
}

/// `Σ p ln(p/q)` with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<Divergence> {
    check_same_len(p, q)?;
    let mut value = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Ok(Divergence {
                    value: f64::INFINITY,
                    absolutely_continuous: false,
                });
            }
            value += pi * (pi / qi).ln();
        }
    }
    Ok(Divergence {
        value: value.max(0.0),
        absolutely_continuous: true,
    })
}

/// Whether the step is ε̄-one-step inaccurate: the context was never visited
/// (`estimate` is `None`) or the estimate is more than `epsilon` from the
/// true row in total variation.
pub fn measure_one_step_inaccuracy(estimate: Option<&[f64]>, true_row: &[f64], epsilon: f64) -> bool {
    match estimate {
        None => true,
        Some(p) => tv_distance(p, true_row).map_or(true, |tv| tv > epsilon),
    }
}

// ---------------------------------------------------------------------------
// Suboptimality against the exact greedy sets
// ---------------------------------------------------------------------------

/// α-discounted greedy action sets for every state of an environment.
#[derive(Debug, Clone)]
pub struct GreedyTable {
    pub alpha: f64,
    pub states: StateSpace,
    pub sets: Vec<GreedyActionSet>,
}

impl GreedyTable {
    pub fn solve(env: &Environment, alpha: f64) -> Result<Self> {
        let sol = solve_discounted(env, alpha, DEFAULT_TOL)?;
        Ok(Self {
            alpha,
            states: StateSpace::new(env),
            sets: greedy_table(env, &sol.value, DEFAULT_TIE_TOLERANCE)?,
        })
    }

    pub fn is_optimal(&self, state: &EnvState, action: usize) -> bool {
        let s = self
            .states
            .index(state.x_window(), state.a_window())
            .expect("environment state matches its state space");
        self.sets[s].contains(action)
    }
}

/// Counts steps `t >= K` whose action falls outside the exact greedy set.
#[derive(Debug, Clone)]
pub struct SuboptimalityMonitor {
    table: Arc<GreedyTable>,
    order: u64,
    pub suboptimal: u64,
    pub eligible: u64,
}

impl SuboptimalityMonitor {
    pub fn new(env: &Environment, table: Arc<GreedyTable>, agent_alpha: Option<f64>) -> Result<Self> {
        if let Some(alpha) = agent_alpha {
            if alpha != table.alpha {
                return Err(Error::param(format!(
                    "agent discount {alpha} differs from the exact solution's {}",
                    table.alpha
                )));
            }
        }
        Ok(Self {
            table,
            order: env.order() as u64,
            suboptimal: 0,
            eligible: 0,
        })
    }

    pub fn record(&mut self, t: u64, state: &EnvState, action: usize) {
        if t >= self.order {
            self.eligible += 1;
            if !self.table.is_optimal(state, action) {
                self.suboptimal += 1;
            }
        }
    }

    pub fn fraction(&self) -> f64 {
        ratio(self.suboptimal, self.eligible)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointRecord {
    pub t: u64,
    pub avg_cost: f64,
    pub explore_frac: f64,
    pub subopt_frac: Option<f64>,
    pub onestep_inacc_frac: Option<f64>,
    pub phrases: u64,
    pub max_depth: usize,
    pub total_cost: f64,
    pub explore_count: u64,
    pub subopt_count: u64,
    pub subopt_eligible: u64,
    pub inacc_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub agent: String,
    pub seed: u64,
    pub records: Vec<CheckpointRecord>,
    /// Global start times of doubling epochs (empty for single runs).
    pub epoch_starts: Vec<u64>,
}

impl RunTrace {
    pub fn final_record(&self) -> Option<&CheckpointRecord> {
        self.records.last()
    }

    pub fn at(&self, t: u64) -> Option<&CheckpointRecord> {
        self.records.iter().find(|r| r.t == t)
    }

    /// Fraction of suboptimal eligible steps in `(from, to]`, both
    /// checkpoints.
    pub fn window_subopt_fraction(&self, from: u64, to: u64) -> Option<f64> {
        let end = self.at(to)?;
        let (s0, e0) = if from == 0 {
            (0, 0)
        } else {
            let start = self.at(from)?;
            (start.subopt_count, start.subopt_eligible)
        };
        end.subopt_frac?;
        Some(ratio(end.subopt_count - s0, end.subopt_eligible - e0))
    }
}

/// Accumulates per-step statistics and snapshots them at checkpoints.
pub struct TraceRecorder {
    agent: String,
    seed: u64,
    checkpoints: Vec<u64>,
    next: usize,
    t: u64,
    total_cost: f64,
    explore_count: u64,
    subopt: Option<SuboptimalityMonitor>,
    inacc_epsilon: Option<f64>,
    inacc_count: u64,
    records: Vec<CheckpointRecord>,
    epoch_starts: Vec<u64>,
}

impl TraceRecorder {
    pub fn new(agent: impl Into<String>, checkpoints: &[u64]) -> Self {
        let mut checkpoints = checkpoints.to_vec();
        checkpoints.sort_unstable();
        checkpoints.dedup();
        checkpoints.retain(|&c| c >= 1);
        Self {
            agent: agent.into(),
            seed: 0,
            checkpoints,
            next: 0,
            t: 0,
            total_cost: 0.0,
            explore_count: 0,
            subopt: None,
            inacc_epsilon: None,
            inacc_count: 0,
            records: Vec::new(),
            epoch_starts: Vec::new(),
        }
    }

    pub fn with_suboptimality(mut self, monitor: SuboptimalityMonitor) -> Self {
        self.subopt = Some(monitor);
        self
    }

    pub fn with_one_step_inaccuracy(mut self, epsilon: f64) -> Self {
        self.inacc_epsilon = Some(epsilon);
        self
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn mark_epoch(&mut self, start: u64) {
        self.epoch_starts.push(start);
    }

    /// Called after the controller decided and before the environment moves.
    pub fn before_step<C: Controller + ?Sized>(
        &mut self,
        env: &Environment,
        state: &EnvState,
        decision: &Decision,
        controller: &C,
    ) {
        self.t += 1;
        if decision.coin_explore {
            self.explore_count += 1;
        }
        if let Some(monitor) = &mut self.subopt {
            monitor.record(self.t, state, decision.action);
        }
        if let Some(eps) = self.inacc_epsilon {
            let mut a_window = state.a_window().to_vec();
            a_window.push(decision.action);
            let row = env
                .kernel()
                .next_dist(state.x_window(), &a_window)
                .expect("environment state is well formed");
            let estimate = controller.estimate(decision);
            if measure_one_step_inaccuracy(estimate.as_deref(), row, eps) {
                self.inacc_count += 1;
            }
        }
    }

    pub fn after_step<C: Controller + ?Sized>(&mut self, cost: f64, controller: &C) {
        self.total_cost += cost;
        if self.checkpoints.get(self.next) == Some(&self.t) {
            self.next += 1;
            let (subopt_count, subopt_eligible) = self
                .subopt
                .as_ref()
                .map_or((0, 0), |m| (m.suboptimal, m.eligible));
            self.records.push(CheckpointRecord {
                t: self.t,
                avg_cost: self.total_cost / self.t as f64,
                explore_frac: ratio(self.explore_count, self.t),
                subopt_frac: self.subopt.as_ref().map(SuboptimalityMonitor::fraction),
                onestep_inacc_frac: self.inacc_epsilon.map(|_| ratio(self.inacc_count, self.t)),
                phrases: controller.phrases(),
                max_depth: controller.max_depth(),
                total_cost: self.total_cost,
                explore_count: self.explore_count,
                subopt_count,
                subopt_eligible,
                inacc_count: self.inacc_count,
            });
        }
    }

    pub fn finish(self) -> RunTrace {
        RunTrace {
            agent: self.agent,
            seed: self.seed,
            records: self.records,
            epoch_starts: self.epoch_starts,
        }
    }
}

// ---------------------------------------------------------------------------
// Exact-policy controller
// ---------------------------------------------------------------------------

/// Plays a fixed stationary policy, tracking the state window itself from
/// the environment's initial history and its own actions.
pub struct PolicyAgent {
    states: StateSpace,
    policy: StationaryPolicy,
    order: usize,
    x_window: Vec<usize>,
    a_window: Vec<usize>,
    last_action: Option<usize>,
}

impl PolicyAgent {
    pub fn new(env: &Environment, policy: StationaryPolicy) -> Result<Self> {
        let states = StateSpace::new(env);
        if policy.actions.len() != states.len() {
            return Err(Error::Dimension {
                what: "policy",
                expected: states.len(),
                got: policy.actions.len(),
            });
        }
        Ok(Self {
            states,
            policy,
            order: env.order(),
            x_window: env.initial_x().to_vec(),
            a_window: env.initial_a().to_vec(),
            last_action: None,
        })
    }

    /// The lowest-index greedy policy of the α-discounted problem.
    pub fn optimal(env: &Environment, alpha: f64) -> Result<Self> {
        Self::new(env, optimal_average_cost(env, alpha)?.policy)
    }
}

impl Controller for PolicyAgent {
    fn act(&mut self, observation: usize) -> Result<Decision> {
        if let Some(a) = self.last_action {
            self.x_window.remove(0);
            self.x_window.push(observation);
            self.a_window.push(a);
            if self.a_window.len() > self.order - 1 {
                self.a_window.remove(0);
            }
        } else if self.x_window.last() != Some(&observation) {
            return Err(Error::State("first observation must match the initial history".into()));
        }
        let s = self.states.index(&self.x_window, &self.a_window)?;
        let action = self.policy.actions[s];
        self.last_action = Some(action);
        Ok(Decision {
            action,
            coin_explore: false,
            novel: false,
            context: None,
        })
    }
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    ActiveLz,
    PredictiveLz,
    Optimal,
    ActiveLzDoubling,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::ActiveLz => "active-lz",
            AgentKind::PredictiveLz => "predictive-lz",
            AgentKind::Optimal => "optimal",
            AgentKind::ActiveLzDoubling => "active-lz-doubling",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| Error::Config(format!("unknown agent kind {name:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    #[serde(default)]
    pub suboptimality: bool,
    #[serde(default)]
    pub one_step_epsilon: Option<f64>,
}

fn default_env() -> String {
    "rps".into()
}

fn default_agents() -> Vec<AgentKind> {
    vec![AgentKind::ActiveLz]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_horizon() -> u64 {
    1_000_000
}

fn default_dp_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// `"rps"` or a path to an environment JSON document.
    #[serde(default = "default_env")]
    pub env: String,
    #[serde(default = "default_agents")]
    pub agents: Vec<AgentKind>,
    #[serde(default)]
    pub agent_config: AgentConfig,
    #[serde(default)]
    pub predictive_tie: PredictionTie,
    #[serde(default)]
    pub doubling: DoublingConfig,
    /// Discount used to derive the exact optimal policy.
    #[serde(default = "default_dp_alpha")]
    pub dp_alpha: f64,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    /// Defaults to decade boundaries from 10^3 up to the horizon.
    #[serde(default)]
    pub checkpoints: Option<Vec<u64>>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

/// Decade boundaries `10^3, 10^4, ...` not exceeding `horizon`, plus the
/// horizon itself.
pub fn default_checkpoints(horizon: u64) -> Vec<u64> {
    let mut out: Vec<u64> = std::iter::successors(Some(1_000u64), |c| c.checked_mul(10))
        .take_while(|&c| c <= horizon)
        .collect();
    if out.last() != Some(&horizon) {
        out.push(horizon);
    }
    out
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let config_err = |e: Error| Error::Config(e.to_string());
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.agents.is_empty() {
            return Err(Error::Config("at least one agent is required".into()));
        }
        if let Some(max) = self.checkpoints.as_ref().and_then(|c| c.iter().max()) {
            if *max > self.horizon {
                return Err(Error::Config(format!(
                    "checkpoint {max} exceeds the horizon {}",
                    self.horizon
                )));
            }
        }
        if let Some(eps) = self.diagnostics.one_step_epsilon {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::Config(format!("one-step epsilon must lie in [0, 1], got {eps}")));
            }
        }
        if self.agents.contains(&AgentKind::ActiveLzDoubling) {
            self.doubling.validate().map_err(config_err)?;
            if self.diagnostics.suboptimality {
                return Err(Error::Config(
                    "suboptimality diagnostics need a fixed discount; not available with doubling".into(),
                ));
            }
        }
        crate::exactdp::check_alpha(self.dp_alpha).map_err(config_err)?;
        self.agent_config.validate().map_err(config_err)
    }

    pub fn checkpoints(&self) -> Vec<u64> {
        self.checkpoints
            .clone()
            .unwrap_or_else(|| default_checkpoints(self.horizon))
    }

    pub fn load_env(&self) -> Result<Environment> {
        load_env(&self.env)
    }
}

/// Resolves a builtin environment name or reads an environment JSON file.
pub fn load_env(source: &str) -> Result<Environment> {
    match source {
        "rps" => Ok(Environment::rps()),
        path => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read environment {path:?}: {e}")))?;
            Environment::from_json(&text).map_err(|e| Error::Config(format!("environment {path:?}: {e}")))
        }
    }
}

/// Shared, per-experiment exact-DP artefacts.
struct Exact {
    agent_table: Option<Arc<GreedyTable>>,
    optimal_table: Option<Arc<GreedyTable>>,
    optimal_policy: Option<StationaryPolicy>,
}

impl Exact {
    fn prepare(cfg: &ExperimentConfig, env: &Environment) -> Result<Self> {
        let needs_optimal = cfg.agents.contains(&AgentKind::Optimal);
        let subopt = cfg.diagnostics.suboptimality;
        let agent_table = if subopt {
            Some(Arc::new(GreedyTable::solve(env, cfg.agent_config.alpha)?))
        } else {
            None
        };
        let optimal_policy = if needs_optimal {
            Some(optimal_average_cost(env, cfg.dp_alpha)?.policy)
        } else {
            None
        };
        let optimal_table = if subopt && needs_optimal {
            Some(Arc::new(GreedyTable::solve(env, cfg.dp_alpha)?))
        } else {
            None
        };
        Ok(Self {
            agent_table,
            optimal_table,
            optimal_policy,
        })
    }
}

fn recorder_for(
    cfg: &ExperimentConfig,
    env: &Environment,
    exact: &Exact,
    kind: AgentKind,
    checkpoints: &[u64],
) -> Result<TraceRecorder> {
    let mut rec = TraceRecorder::new(kind.name(), checkpoints);
    if cfg.diagnostics.suboptimality {
        let (table, alpha) = match kind {
            AgentKind::Optimal => (exact.optimal_table.clone(), Some(cfg.dp_alpha)),
            AgentKind::ActiveLz => (exact.agent_table.clone(), Some(cfg.agent_config.alpha)),
            _ => (exact.agent_table.clone(), None),
        };
        let table = table.expect("prepared when suboptimality is enabled");
        rec = rec.with_suboptimality(SuboptimalityMonitor::new(env, table, alpha)?);
    }
    if let Some(eps) = cfg.diagnostics.one_step_epsilon {
        rec = rec.with_one_step_inaccuracy(eps);
    }
    Ok(rec)
}

fn run_one(
    cfg: &ExperimentConfig,
    env: &Environment,
    exact: &Exact,
    kind: AgentKind,
    seed: u64,
    checkpoints: &[u64],
) -> Result<RunTrace> {
    let rec = recorder_for(cfg, env, exact, kind, checkpoints)?;
    let agent_config = AgentConfig { seed, ..cfg.agent_config };
    match kind {
        AgentKind::ActiveLz => {
            let mut agent = ActiveLzAgent::new(agent_config, env.cost().clone())?;
            run_episode(&mut agent, env, seed, cfg.horizon, rec)
        }
        AgentKind::PredictiveLz => {
            let mut agent = PredictiveLzAgent::new(env.cost().clone(), cfg.predictive_tie, seed)?;
            run_episode(&mut agent, env, seed, cfg.horizon, rec)
        }
        AgentKind::Optimal => {
            let policy = exact.optimal_policy.clone().expect("prepared for optimal agent");
            let mut agent = PolicyAgent::new(env, policy)?;
            run_episode(&mut agent, env, seed, cfg.horizon, rec)
        }
        AgentKind::ActiveLzDoubling => run_doubling(env, &cfg.doubling, &agent_config, cfg.horizon, rec),
    }
}

/// Runs every `(agent, seed)` pair in parallel. Traces come back ordered by
/// agent (as listed) then seed.
pub fn run_traces(cfg: &ExperimentConfig) -> Result<Vec<RunTrace>> {
    cfg.validate()?;
    let env = cfg.load_env()?;
    let exact = Exact::prepare(cfg, &env)?;
    let checkpoints = cfg.checkpoints();
    let jobs: Vec<(AgentKind, u64)> = cfg
        .agents
        .iter()
        .flat_map(|&k| cfg.seeds.iter().map(move |&s| (k, s)))
        .collect();
    jobs.par_iter()
        .map(|&(kind, seed)| run_one(cfg, &env, &exact, kind, seed, &checkpoints))
        .collect()
}

/// Runs the experiment and writes one CSV per `(agent, seed)` plus
/// `aggregate.csv` (means across seeds) into `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunTrace>> {
    let traces = run_traces(cfg)?;
    fs::create_dir_all(&cfg.output)?;
    for trace in &traces {
        let path = cfg
            .output
            .join(format!("{}_seed{}.csv", trace.agent, trace.seed));
        write_csv(&path, std::slice::from_ref(trace))?;
    }
    write_aggregate_csv(&cfg.output.join("aggregate.csv"), &traces)?;
    Ok(traces)
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn record_fields(r: &CheckpointRecord, seed: &str, agent: &str) -> [String; 9] {
    [
        r.t.to_string(),
        r.avg_cost.to_string(),
        r.explore_frac.to_string(),
        opt_field(r.subopt_frac),
        opt_field(r.onestep_inacc_frac),
        r.phrases.to_string(),
        r.max_depth.to_string(),
        seed.to_string(),
        agent.to_string(),
    ]
}

pub fn write_csv(path: &Path, traces: &[RunTrace]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for trace in traces {
        for r in &trace.records {
            w.write_record(record_fields(r, &trace.seed.to_string(), &trace.agent))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-agent, per-checkpoint arithmetic means across seeds.
pub fn aggregate(traces: &[RunTrace]) -> Vec<(String, CheckpointRecord)> {
    let mut agents: Vec<&str> = Vec::new();
    for t in traces {
        if !agents.contains(&t.agent.as_str()) {
            agents.push(&t.agent);
        }
    }
    let mut out = Vec::new();
    for agent in agents {
        let group: Vec<&RunTrace> = traces.iter().filter(|t| t.agent == agent).collect();
        let Some(first) = group.first() else { continue };
        for (i, r0) in first.records.iter().enumerate() {
            let rows: Vec<&CheckpointRecord> = group.iter().filter_map(|t| t.records.get(i)).collect();
            let n = rows.len() as f64;
            let mean = |f: &dyn Fn(&CheckpointRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            let mean_opt = |f: &dyn Fn(&CheckpointRecord) -> Option<f64>| {
                rows.iter()
                    .map(|r| f(r))
                    .collect::<Option<Vec<f64>>>()
                    .map(|v| v.iter().sum::<f64>() / n)
            };
            out.push((
                agent.to_string(),
                CheckpointRecord {
                    t: r0.t,
                    avg_cost: mean(&|r| r.avg_cost),
                    explore_frac: mean(&|r| r.explore_frac),
                    subopt_frac: mean_opt(&|r| r.subopt_frac),
                    onestep_inacc_frac: mean_opt(&|r| r.onestep_inacc_frac),
                    phrases: mean(&|r| r.phrases as f64).round() as u64,
                    max_depth: mean(&|r| r.max_depth as f64).round() as usize,
                    total_cost: mean(&|r| r.total_cost),
                    explore_count: mean(&|r| r.explore_count as f64).round() as u64,
                    subopt_count: mean(&|r| r.subopt_count as f64).round() as u64,
                    subopt_eligible: mean(&|r| r.subopt_eligible as f64).round() as u64,
                    inacc_count: mean(&|r| r.inacc_count as f64).round() as u64,
                },
            ));
        }
    }
    out
}

pub fn write_aggregate_csv(path: &Path, traces: &[RunTrace]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for (agent, r) in aggregate(traces) {
        w.write_record(record_fields(&r, "mean", &agent))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::ExplorationSchedule;
    use crate::env::{Alphabet, CostFunction};

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(tv_distance(&[0.5, 0.5], &[0.75, 0.25]).unwrap(), 0.25);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap().value, 0.0);
        let d = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((d.value - 2f64.ln()).abs() < 1e-15);
        let bad = kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!(!bad.absolutely_continuous);
        assert!(bad.value.is_infinite());
    }

    #[test]
    fn distribution_validation() {
        assert!(Distribution::new(vec![0.5, 0.5]).is_ok());
        assert!(Distribution::new(vec![0.5, 0.6]).is_err());
        assert!(Distribution::new(vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn inaccuracy_branches() {
        assert!(measure_one_step_inaccuracy(None, &[1.0, 0.0], 0.5));
        assert!(!measure_one_step_inaccuracy(Some(&[0.0, 1.0]), &[1.0, 0.0], 1.0));
        assert!(measure_one_step_inaccuracy(Some(&[0.5, 0.5]), &[1.0, 0.0], 0.1));
    }

    #[test]
    fn default_checkpoints_are_decades() {
        assert_eq!(default_checkpoints(1_000_000), vec![1_000, 10_000, 100_000, 1_000_000]);
        assert_eq!(default_checkpoints(2_500), vec![1_000, 2_500]);
        assert_eq!(default_checkpoints(10), vec![10]);
    }

    #[test]
    fn config_validation() {
        let ok = ExperimentConfig::from_json(r#"{"horizon": 5000, "seeds": [1, 2]}"#).unwrap();
        assert_eq!(ok.agents, vec![AgentKind::ActiveLz]);
        assert!(ExperimentConfig::from_json(r#"{"horizon": 10, "checkpoints": [100]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"seeds": []}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"agents": ["nope"]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"agent_config": {"alpha": 1.5}}"#).is_err());
        assert_eq!(AgentKind::parse("predictive-lz").unwrap(), AgentKind::PredictiveLz);
    }

    #[test]
    fn constant_cost_average_is_exact() {
        let alphabet = Alphabet::new(2, 2).unwrap();
        let cost = CostFunction::from_fn(alphabet, 0.5, |_, _, _| 0.5).unwrap();
        let env = Environment::iid(vec![0.3, 0.7], 2, cost).unwrap();
        let mut agent = ActiveLzAgent::new(AgentConfig::default(), env.cost().clone()).unwrap();
        let trace = run_episode(&mut agent, &env, 3, 5000, TraceRecorder::new("x", &[1, 10, 5000])).unwrap();
        for r in &trace.records {
            assert_eq!(r.avg_cost, 0.5);
        }
    }

    #[test]
    fn policy_agent_always_greedy_has_no_suboptimal_steps() {
        let env = Environment::rps();
        let table = Arc::new(GreedyTable::solve(&env, 0.999).unwrap());
        let mon = SuboptimalityMonitor::new(&env, table.clone(), Some(0.999)).unwrap();
        let mut agent = PolicyAgent::optimal(&env, 0.999).unwrap();
        let rec = TraceRecorder::new("optimal", &[10_000]).with_suboptimality(mon);
        let trace = run_episode(&mut agent, &env, 1, 10_000, rec).unwrap();
        assert_eq!(trace.records[0].subopt_frac, Some(0.0));
        assert!(SuboptimalityMonitor::new(&env, table, Some(0.99)).is_err());
    }

    #[test]
    fn exploration_fraction_tracks_schedule() {
        let env = Environment::rps();
        let schedule = ExplorationSchedule::Power { c0: 0.5, rho: 0.2 };
        let cfg = AgentConfig {
            schedule,
            ..AgentConfig::default()
        };
        let mut agent = ActiveLzAgent::new(cfg, env.cost().clone()).unwrap();
        let t = 50_000;
        let trace = run_episode(&mut agent, &env, 0, t, TraceRecorder::new("a", &[t])).unwrap();
        let gammas: Vec<f64> = (1..=t).map(|s| schedule.gamma(s)).collect();
        let mean = gammas.iter().sum::<f64>() / t as f64;
        let sd = (gammas.iter().map(|g| g * (1.0 - g)).sum::<f64>()).sqrt() / t as f64;
        assert!((trace.records[0].explore_frac - mean).abs() <= 3.0 * sd);
    }
}
