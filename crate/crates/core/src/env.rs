//! Finite alphabets, bounded costs and order-K transition kernels.
//!
//! An environment emits observations `X_t` whose conditional law given the
//! whole past depends only on the last `K` observations and the last `K`
//! actions (the final one being the action just taken). Kernels are stored as
//! dense row-stochastic tables with rows ordered lexicographically by
//! `(x-window, a-window)`, x-window major.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums must match 1 to this tolerance.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

pub const ROCK: usize = 0;
pub const PAPER: usize = 1;
pub const SCISSORS: usize = 2;

const RPS_NAMES: [&str; 3] = ["rock", "paper", "scissors"];

/// Name of a Rock-Paper-Scissors play, used at the CLI boundary only.
pub fn rps_name(play: usize) -> &'static str {
    RPS_NAMES.get(play).copied().unwrap_or("?")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    pub num_observations: usize,
    pub num_actions: usize,
}

impl Alphabet {
    pub fn new(num_observations: usize, num_actions: usize) -> Result<Self> {
        if num_observations == 0 || num_actions == 0 {
            return Err(Error::param("alphabet sizes must be at least 1"));
        }
        Ok(Self {
            num_observations,
            num_actions,
        })
    }

    pub fn check_observation(&self, x: usize) -> Result<()> {
        if x >= self.num_observations {
            return Err(Error::param(format!(
                "observation {x} out of range (|X| = {})",
                self.num_observations
            )));
        }
        Ok(())
    }

    pub fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.num_actions {
            return Err(Error::param(format!(
                "action {a} out of range (|A| = {})",
                self.num_actions
            )));
        }
        Ok(())
    }
}

/// Lexicographic rank of `window` in base `base`; the first entry is the most
/// significant digit.
pub(crate) fn encode_window(window: &[usize], base: usize) -> usize {
    window.iter().fold(0, |acc, &s| acc * base + s)
}

pub(crate) fn decode_window(mut index: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = index % base;
        index /= base;
    }
    out
}

// ---------------------------------------------------------------------------
// Costs
// ---------------------------------------------------------------------------

/// Per-step cost `g(x_t, a_t, x_{t+1})` with a known bound `g_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostFunction {
    alphabet: Alphabet,
    table: Vec<f64>,
    g_max: f64,
}

impl CostFunction {
    /// `table` is indexed `[x][a][x']`, flattened row-major.
    pub fn new(alphabet: Alphabet, table: Vec<f64>, g_max: f64) -> Result<Self> {
        let expected = alphabet.num_observations * alphabet.num_actions * alphabet.num_observations;
        if table.len() != expected {
            return Err(Error::Dimension {
                what: "cost table",
                expected,
                got: table.len(),
            });
        }
        if !(g_max.is_finite() && g_max >= 0.0) {
            return Err(Error::param(format!("g_max must be finite and >= 0, got {g_max}")));
        }
        if let Some(bad) = table.iter().find(|g| g.is_nan() || g.abs() > g_max) {
            return Err(Error::param(format!("cost entry {bad} exceeds g_max = {g_max}")));
        }
        Ok(Self {
            alphabet,
            table,
            g_max,
        })
    }

    pub fn from_fn(
        alphabet: Alphabet,
        g_max: f64,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut table = Vec::new();
        for x in 0..alphabet.num_observations {
            for a in 0..alphabet.num_actions {
                for xn in 0..alphabet.num_observations {
                    table.push(f(x, a, xn));
                }
            }
        }
        Self::new(alphabet, table, g_max)
    }

    #[inline]
    pub fn get(&self, x: usize, a: usize, x_next: usize) -> f64 {
        let n_obs = self.alphabet.num_observations;
        self.table[(x * self.alphabet.num_actions + a) * n_obs + x_next]
    }

    pub fn g_max(&self) -> f64 {
        self.g_max
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    /// A copy of this cost with `shift` added to every entry.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            alphabet: self.alphabet,
            table: self.table.iter().map(|g| g + shift).collect(),
            g_max: self.g_max + shift.abs(),
        }
    }
}

/// Rock-Paper-Scissors cost of playing `a_t` against the opponent's next play
/// `x_next`: -1 for a win, +1 for a loss, 0 for a draw.
pub fn rps_cost(_x_t: usize, a_t: usize, x_next: usize) -> f64 {
    // (a - x) mod 3 == 1 means `a` beats `x`.
    match (a_t + 3 - x_next) % 3 {
        0 => 0.0,
        1 => -1.0,
        _ => 1.0,
    }
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovKernel {
    order: usize,
    alphabet: Alphabet,
    rows: Vec<f64>,
}

impl MarkovKernel {
    pub fn new(order: usize, alphabet: Alphabet, rows: Vec<Vec<f64>>) -> Result<Self> {
        if order == 0 {
            return Err(Error::param("kernel order K must be at least 1"));
        }
        let n_obs = alphabet.num_observations;
        let expected = Self::row_count(order, alphabet);
        if rows.len() != expected {
            return Err(Error::Dimension {
                what: "kernel rows",
                expected,
                got: rows.len(),
            });
        }
        let mut flat = Vec::with_capacity(expected * n_obs);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_obs {
                return Err(Error::Dimension {
                    what: "kernel row length",
                    expected: n_obs,
                    got: row.len(),
                });
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::param(format!("kernel row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::param(format!("kernel row {i} sums to {sum}, not 1")));
            }
            flat.extend_from_slice(row);
        }
        Ok(Self {
            order,
            alphabet,
            rows: flat,
        })
    }

    pub fn from_fn(
        order: usize,
        alphabet: Alphabet,
        f: impl Fn(&[usize], &[usize]) -> Vec<f64>,
    ) -> Result<Self> {
        let n_x = alphabet.num_observations.pow(order as u32);
        let n_a = alphabet.num_actions.pow(order as u32);
        let mut rows = Vec::with_capacity(n_x * n_a);
        for xi in 0..n_x {
            let xw = decode_window(xi, alphabet.num_observations, order);
            for ai in 0..n_a {
                let aw = decode_window(ai, alphabet.num_actions, order);
                rows.push(f(&xw, &aw));
            }
        }
        Self::new(order, alphabet, rows)
    }

    fn row_count(order: usize, alphabet: Alphabet) -> usize {
        alphabet.num_observations.pow(order as u32) * alphabet.num_actions.pow(order as u32)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn num_rows(&self) -> usize {
        Self::row_count(self.order, self.alphabet)
    }

    pub fn row_index(&self, x_window: &[usize], a_window: &[usize]) -> Result<usize> {
        for (what, w) in [("x-window", x_window), ("a-window", a_window)] {
            if w.len() != self.order {
                return Err(Error::Dimension {
                    what,
                    expected: self.order,
                    got: w.len(),
                });
            }
        }
        for &x in x_window {
            self.alphabet.check_observation(x)?;
        }
        for &a in a_window {
            self.alphabet.check_action(a)?;
        }
        Ok(self.row_index_unchecked(x_window, a_window))
    }

    #[inline]
    pub(crate) fn row_index_unchecked(&self, x_window: &[usize], a_window: &[usize]) -> usize {
        let n_a = self.alphabet.num_actions.pow(self.order as u32);
        encode_window(x_window, self.alphabet.num_observations) * n_a
            + encode_window(a_window, self.alphabet.num_actions)
    }

    #[inline]
    pub fn row(&self, index: usize) -> &[f64] {
        let n = self.alphabet.num_observations;
        &self.rows[index * n..(index + 1) * n]
    }

    /// Distribution of the next observation given the last `K` observations
    /// and the last `K` actions.
    pub fn next_dist(&self, x_window: &[usize], a_window: &[usize]) -> Result<&[f64]> {
        let idx = self.row_index(x_window, a_window)?;
        Ok(self.row(idx))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks(self.alphabet.num_observations)
    }

    /// Smallest strictly positive transition probability.
    pub fn p_min(&self) -> f64 {
        self.rows
            .iter()
            .copied()
            .filter(|&p| p > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    alphabet: Alphabet,
    kernel: MarkovKernel,
    cost: CostFunction,
    init_x: Vec<usize>,
    init_a: Vec<usize>,
}

impl Environment {
    pub fn new(
        kernel: MarkovKernel,
        cost: CostFunction,
        init_x: Vec<usize>,
        init_a: Vec<usize>,
    ) -> Result<Self> {
        let alphabet = kernel.alphabet();
        if cost.alphabet() != alphabet {
            return Err(Error::param("kernel and cost alphabets differ"));
        }
        let k = kernel.order();
        if init_x.len() != k {
            return Err(Error::Dimension {
                what: "initial x-window",
                expected: k,
                got: init_x.len(),
            });
        }
        if init_a.len() != k - 1 {
            return Err(Error::Dimension {
                what: "initial a-window",
                expected: k - 1,
                got: init_a.len(),
            });
        }
        for &x in &init_x {
            alphabet.check_observation(x)?;
        }
        for &a in &init_a {
            alphabet.check_action(a)?;
        }
        Ok(Self {
            alphabet,
            kernel,
            cost,
            init_x,
            init_a,
        })
    }

    /// Rock-Paper-Scissors against an opponent who repeats rock after winning
    /// with rock against scissors and otherwise plays uniformly at random.
    /// The initial history is all rock.
    pub fn rps() -> Self {
        Self::rps_with_history(vec![ROCK; 2], vec![ROCK; 1]).expect("valid default history")
    }

    pub fn rps_with_history(init_x: Vec<usize>, init_a: Vec<usize>) -> Result<Self> {
        let alphabet = Alphabet::new(3, 3)?;
        let kernel = MarkovKernel::from_fn(2, alphabet, |xw, aw| {
            // aw[1] is the action being played right now, which the opponent
            // cannot see.
            if xw[1] == ROCK && aw[0] == SCISSORS {
                vec![1.0, 0.0, 0.0]
            } else {
                vec![1.0 / 3.0; 3]
            }
        })?;
        let cost = CostFunction::from_fn(alphabet, 1.0, rps_cost)?;
        Self::new(kernel, cost, init_x, init_a)
    }

    /// Order-1 environment whose observations are i.i.d. with distribution
    /// `dist`, regardless of the actions.
    pub fn iid(dist: Vec<f64>, num_actions: usize, cost: CostFunction) -> Result<Self> {
        let alphabet = Alphabet::new(dist.len(), num_actions)?;
        let kernel = MarkovKernel::from_fn(1, alphabet, |_, _| dist.clone())?;
        Self::new(kernel, cost, vec![0], vec![])
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn kernel(&self) -> &MarkovKernel {
        &self.kernel
    }

    pub fn cost(&self) -> &CostFunction {
        &self.cost
    }

    pub fn order(&self) -> usize {
        self.kernel.order()
    }

    pub fn initial_x(&self) -> &[usize] {
        &self.init_x
    }

    pub fn initial_a(&self) -> &[usize] {
        &self.init_a
    }

    pub fn start(&self) -> EnvState {
        EnvState {
            x_window: self.init_x.clone(),
            a_window: self.init_a.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: EnvironmentDoc = serde_json::from_str(text)?;
        doc.into_environment()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&EnvironmentDoc::from(self))?)
    }
}

/// Mutable per-run history window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvState {
    x_window: Vec<usize>,
    a_window: Vec<usize>,
}

impl EnvState {
    /// The most recent observation `X_t`.
    pub fn observation(&self) -> usize {
        *self.x_window.last().expect("K >= 1")
    }

    /// Last `K` observations.
    pub fn x_window(&self) -> &[usize] {
        &self.x_window
    }

    /// Last `K - 1` actions.
    pub fn a_window(&self) -> &[usize] {
        &self.a_window
    }

    /// Plays `action`, samples the next observation and returns it together
    /// with the incurred cost. Exactly one uniform draw is taken from `rng`.
    pub fn step<R: Rng + ?Sized>(&mut self, env: &Environment, action: usize, rng: &mut R) -> (usize, f64) {
        debug_assert!(action < env.alphabet.num_actions);
        self.a_window.push(action);
        let row = env.kernel.row(env.kernel.row_index_unchecked(&self.x_window, &self.a_window));
        let next = sample(row, rng.random::<f64>());
        let cost = env.cost.get(self.observation(), action, next);
        self.x_window.remove(0);
        self.x_window.push(next);
        self.a_window.remove(0);
        (next, cost)
    }
}

/// Inverse-CDF sampling with a uniform `u` in [0, 1).
pub(crate) fn sample(dist: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = i;
            if u < cum {
                return i;
            }
        }
    }
    last_positive
}

// ---------------------------------------------------------------------------
// JSON document
// ---------------------------------------------------------------------------

/// On-disk environment description. `rows` are ordered lexicographically by
/// `(x-window, a-window)`; `cost` is indexed `[x][a][x']`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvironmentDoc {
    #[serde(rename = "K")]
    pub k: usize,
    pub num_obs: usize,
    pub num_act: usize,
    pub rows: Vec<Vec<f64>>,
    pub cost: Vec<Vec<Vec<f64>>>,
    pub g_max: f64,
    #[serde(default)]
    pub init_x: Option<Vec<usize>>,
    #[serde(default)]
    pub init_a: Option<Vec<usize>>,
}

impl EnvironmentDoc {
    pub fn into_environment(self) -> Result<Environment> {
        let alphabet = Alphabet::new(self.num_obs, self.num_act)?;
        if self.cost.len() != self.num_obs {
            return Err(Error::Dimension {
                what: "cost outer dimension",
                expected: self.num_obs,
                got: self.cost.len(),
            });
        }
        let mut table = Vec::new();
        for per_x in &self.cost {
            if per_x.len() != self.num_act {
                return Err(Error::Dimension {
                    what: "cost action dimension",
                    expected: self.num_act,
                    got: per_x.len(),
                });
            }
            for per_a in per_x {
                if per_a.len() != self.num_obs {
                    return Err(Error::Dimension {
                        what: "cost next-observation dimension",
                        expected: self.num_obs,
                        got: per_a.len(),
                    });
                }
                table.extend_from_slice(per_a);
            }
        }
        let cost = CostFunction::new(alphabet, table, self.g_max)?;
        let kernel = MarkovKernel::new(self.k, alphabet, self.rows)?;
        let init_x = self.init_x.unwrap_or_else(|| vec![0; self.k]);
        let init_a = self.init_a.unwrap_or_else(|| vec![0; self.k.saturating_sub(1)]);
        Environment::new(kernel, cost, init_x, init_a)
    }
}

impl From<&Environment> for EnvironmentDoc {
    fn from(env: &Environment) -> Self {
        let Alphabet {
            num_observations: nx,
            num_actions: na,
        } = env.alphabet;
        let cost = (0..nx)
            .map(|x| {
                (0..na)
                    .map(|a| (0..nx).map(|xn| env.cost.get(x, a, xn)).collect())
                    .collect()
            })
            .collect();
        Self {
            k: env.order(),
            num_obs: nx,
            num_act: na,
            rows: env.kernel.rows().map(<[f64]>::to_vec).collect(),
            cost,
            g_max: env.cost.g_max(),
            init_x: Some(env.init_x.clone()),
            init_a: Some(env.init_a.clone()),
        }
    }
}
