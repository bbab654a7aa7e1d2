//! LZ78-style context tree over joint observation/action strings.
//!
//! A node at depth `ℓ` stands for a context `(x^ℓ, a^{ℓ-1})` seen since the
//! start of some phrase. Root edges carry an observation only; deeper edges
//! carry the action taken at the parent context and the observation that
//! followed. Each node keeps a visit count `N` and a cost-to-go estimate
//! `Ĵ`. Transition estimates are derived on demand from child counts with
//! the add-half rule `(N + 1/2) / (Σ N + |X|/2)`.
//!
//! Counts and estimates change only when a phrase completes: the new leaf is
//! attached and the path is walked back to the root, incrementing counts and
//! recomputing `Ĵ` by a one-step lookahead.

use serde_json::{json, Value};

use crate::env::{Alphabet, CostFunction};
use crate::error::{Error, Result};
use crate::exactdp::check_alpha;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeKey {
    /// `None` on root edges.
    pub action: Option<usize>,
    pub observation: usize,
}

#[derive(Debug, Clone)]
pub struct ContextNode {
    pub count: u64,
    pub value: f64,
    edge: Option<EdgeKey>,
    depth: u32,
    /// Child slots; 0 marks an absent child (the root is never a child).
    /// Empty until the first child is attached.
    children: Vec<u32>,
}

impl ContextNode {
    fn new(edge: Option<EdgeKey>, depth: u32) -> Self {
        Self {
            count: 0,
            value: 0.0,
            edge,
            depth,
            children: Vec::new(),
        }
    }

    pub fn edge(&self) -> Option<EdgeKey> {
        self.edge
    }

    pub fn depth(&self) -> usize {
        self.depth as usize
    }

    /// Final observation of the context this node represents.
    pub fn last_observation(&self) -> Option<usize> {
        self.edge.map(|e| e.observation)
    }
}

#[derive(Debug, Clone)]
pub struct ContextTree {
    alphabet: Alphabet,
    alpha: f64,
    nodes: Vec<ContextNode>,
    /// Nodes of the in-progress context, depth 1 first.
    path: Vec<NodeId>,
    pending: Option<EdgeKey>,
    phrases: u64,
    /// Symbols fed so far; the clock `t` of the last `descend`.
    time: u64,
    phrase_start: u64,
    max_depth: usize,
}

impl ContextTree {
    pub fn new(alphabet: Alphabet, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            alphabet,
            alpha,
            nodes: vec![ContextNode::new(None, 0)],
            path: Vec::new(),
            pending: None,
            phrases: 0,
            time: 0,
            phrase_start: 1,
            max_depth: 0,
        })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn node(&self, id: NodeId) -> &ContextNode {
        &self.nodes[id.index()]
    }

    pub fn root(&self) -> &ContextNode {
        &self.nodes[0]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    /// Number of completed phrases `c(t) - 1`.
    pub fn phrases(&self) -> u64 {
        self.phrases
    }

    /// Start time `τ_c` of the in-progress phrase.
    pub fn phrase_start(&self) -> u64 {
        self.phrase_start
    }

    /// Length `d(t)` of the in-progress context, counting a pending novel
    /// step.
    pub fn depth(&self) -> usize {
        self.path.len() + usize::from(self.pending.is_some())
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    /// Deepest context reached so far.
    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// The node of the current (already visited) context, if any.
    pub fn current(&self) -> Option<NodeId> {
        if self.pending.is_some() {
            None
        } else {
            self.path.last().copied()
        }
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }

    #[inline]
    fn slot(&self, parent: NodeId, action: Option<usize>, observation: usize) -> usize {
        if parent == NodeId::ROOT {
            observation
        } else {
            action.unwrap_or(0) * self.alphabet.num_observations + observation
        }
    }

    fn slot_count(&self, parent: NodeId) -> usize {
        if parent == NodeId::ROOT {
            self.alphabet.num_observations
        } else {
            self.alphabet.num_actions * self.alphabet.num_observations
        }
    }

    /// Child of `parent` along `(action, observation)`; `action` is ignored at
    /// the root.
    #[inline]
    pub fn child(&self, parent: NodeId, action: Option<usize>, observation: usize) -> Option<NodeId> {
        let children = &self.nodes[parent.index()].children;
        if children.is_empty() {
            return None;
        }
        match children[self.slot(parent, action, observation)] {
            0 => None,
            id => Some(NodeId(id)),
        }
    }

    pub fn children(&self, parent: NodeId) -> impl Iterator<Item = (EdgeKey, NodeId)> + '_ {
        self.nodes[parent.index()]
            .children
            .iter()
            .filter(|&&id| id != 0)
            .map(move |&id| (self.nodes[id as usize].edge.expect("child has an edge"), NodeId(id)))
    }

    #[inline]
    fn child_count(&self, parent: NodeId, action: usize, observation: usize) -> u64 {
        self.child(parent, Some(action), observation)
            .map_or(0, |c| self.nodes[c.index()].count)
    }

    /// Add-half estimate of the next observation at `node` under `action`.
    pub fn kt_dist(&self, node: NodeId, action: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.alphabet.num_observations];
        self.kt_dist_into(node, action, &mut out);
        out
    }

    pub fn kt_dist_into(&self, node: NodeId, action: usize, out: &mut [f64]) {
        let n_x = self.alphabet.num_observations;
        let mut total = 0u64;
        for (x, slot) in out.iter_mut().enumerate().take(n_x) {
            let n = self.child_count(node, action, x);
            total += n;
            *slot = n as f64 + 0.5;
        }
        let denom = total as f64 + n_x as f64 / 2.0;
        out.iter_mut().for_each(|p| *p /= denom);
    }

    /// One-step lookahead value of every action at `node`, with absent
    /// children contributing zero cost-to-go.
    pub fn lookahead(&self, node: NodeId, cost: &CostFunction, last_obs: usize) -> Vec<f64> {
        (0..self.alphabet.num_actions)
            .map(|a| self.action_value(node, cost, last_obs, a))
            .collect()
    }

    #[inline]
    fn action_value(&self, node: NodeId, cost: &CostFunction, last_obs: usize, action: usize) -> f64 {
        let n_x = self.alphabet.num_observations;
        let mut total = 0u64;
        let mut weighted = 0.0;
        for x in 0..n_x {
            let (n, v) = match self.child(node, Some(action), x) {
                Some(c) => {
                    let c = &self.nodes[c.index()];
                    (c.count, c.value)
                }
                None => (0, 0.0),
            };
            total += n;
            weighted += (n as f64 + 0.5) * (cost.get(last_obs, action, x) + self.alpha * v);
        }
        weighted / (total as f64 + n_x as f64 / 2.0)
    }

    /// Lowest-index minimiser of the lookahead and its value.
    pub fn greedy_eval(&self, node: NodeId, cost: &CostFunction, last_obs: usize) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for a in 0..self.alphabet.num_actions {
            let q = self.action_value(node, cost, last_obs, a);
            if q < best.1 {
                best = (a, q);
            }
        }
        best
    }

    /// Extends the current context by `(action, observation)`. Returns whether
    /// the extended context has been seen before; if not, the step is held
    /// pending until [`finalize_phrase`](Self::finalize_phrase).
    pub fn descend(&mut self, action: Option<usize>, observation: usize) -> Result<bool> {
        if self.pending.is_some() {
            return Err(Error::State("a novel context is pending; finalize the phrase first".into()));
        }
        self.alphabet.check_observation(observation)?;
        match (self.path.is_empty(), action) {
            (true, Some(_)) => return Err(Error::param("the first step of a phrase carries no action")),
            (false, None) => return Err(Error::param("steps after the first in a phrase need an action")),
            (false, Some(a)) => self.alphabet.check_action(a)?,
            (true, None) => {}
        }
        self.time += 1;
        let parent = self.path.last().copied().unwrap_or(NodeId::ROOT);
        match self.child(parent, action, observation) {
            Some(id) => {
                self.path.push(id);
                self.max_depth = self.max_depth.max(self.path.len());
                Ok(true)
            }
            None => {
                self.pending = Some(EdgeKey { action, observation });
                self.max_depth = self.max_depth.max(self.path.len() + 1);
                Ok(false)
            }
        }
    }

    fn attach_pending(&mut self) -> Result<()> {
        let key = self
            .pending
            .take()
            .ok_or_else(|| Error::State("no novel context pending".into()))?;
        let parent = self.path.last().copied().unwrap_or(NodeId::ROOT);
        let id = self.nodes.len() as u32;
        let depth = self.nodes[parent.index()].depth + 1;
        self.nodes.push(ContextNode::new(Some(key), depth));
        let slots = self.slot_count(parent);
        let slot = self.slot(parent, key.action, key.observation);
        let children = &mut self.nodes[parent.index()].children;
        if children.is_empty() {
            children.resize(slots, 0);
        }
        children[slot] = id;
        self.path.push(NodeId(id));
        Ok(())
    }

    fn close_phrase(&mut self) {
        self.nodes[0].count += 1;
        self.phrases += 1;
        self.path.clear();
        self.phrase_start = self.time + 1;
    }

    /// Attaches the pending leaf, then walks back from it to depth 1,
    /// incrementing each count and refreshing each `Ĵ` by greedy lookahead.
    pub fn finalize_phrase(&mut self, cost: &CostFunction) -> Result<()> {
        self.attach_pending()?;
        for i in (0..self.path.len()).rev() {
            let id = self.path[i];
            let last_obs = self.nodes[id.index()].last_observation().expect("non-root");
            let (_, value) = self.greedy_eval(id, cost, last_obs);
            let node = &mut self.nodes[id.index()];
            node.count += 1;
            node.value = value;
        }
        self.close_phrase();
        Ok(())
    }

    /// Like [`finalize_phrase`](Self::finalize_phrase) but updates counts
    /// only, for prediction-only use.
    pub fn finalize_phrase_counts(&mut self) -> Result<()> {
        self.attach_pending()?;
        for i in 0..self.path.len() {
            let id = self.path[i];
            self.nodes[id.index()].count += 1;
        }
        self.close_phrase();
        Ok(())
    }

    /// Nested JSON dump for debugging and golden files.
    pub fn to_json(&self) -> Value {
        self.node_json(NodeId::ROOT)
    }

    fn node_json(&self, id: NodeId) -> Value {
        let node = self.node(id);
        let children: Vec<Value> = self.children(id).map(|(_, c)| self.node_json(c)).collect();
        let edge = node.edge.map(|e| json!({"action": e.action, "observation": e.observation}));
        json!({
            "edge": edge,
            "count": node.count,
            "value": node.value,
            "children": children,
        })
    }
}

// ---------------------------------------------------------------------------
// Sequential add-half assignment
// ---------------------------------------------------------------------------

/// Sequential probability assignment `Q_t(y) = (N_t(y) + 1/2) / (t + |Y|/2)`
/// with a running code length in bits.
#[derive(Debug, Clone)]
pub struct KtSequenceEstimator {
    counts: Vec<u64>,
    total: u64,
    code_length: f64,
}

impl KtSequenceEstimator {
    pub fn new(alphabet_size: usize) -> Result<Self> {
        if alphabet_size == 0 {
            return Err(Error::param("alphabet size must be positive"));
        }
        Ok(Self {
            counts: vec![0; alphabet_size],
            total: 0,
            code_length: 0.0,
        })
    }

    pub fn prob(&self, y: usize) -> f64 {
        (self.counts[y] as f64 + 0.5) / (self.total as f64 + self.counts.len() as f64 / 2.0)
    }

    pub fn dist(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|y| self.prob(y)).collect()
    }

    /// Charges `-log2 Q(y)` and counts `y`. Returns the charge.
    pub fn update(&mut self, y: usize) -> Result<f64> {
        if y >= self.counts.len() {
            return Err(Error::param(format!("symbol {y} out of range")));
        }
        let bits = -self.prob(y).log2();
        self.code_length += bits;
        self.counts[y] += 1;
        self.total += 1;
        Ok(bits)
    }

    pub fn code_length(&self) -> f64 {
        self.code_length
    }
}

/// Total code length in bits of `sequence` under the add-half assignment.
pub fn kt_sequence_codelength(sequence: &[usize], alphabet_size: usize) -> Result<f64> {
    if sequence.is_empty() {
        return Err(Error::param("sequence must be nonempty"));
    }
    let mut est = KtSequenceEstimator::new(alphabet_size)?;
    for &y in sequence {
        est.update(y)?;
    }
    Ok(est.code_length())
}
