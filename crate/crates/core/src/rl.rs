//! Two-timescale Q-learning over an adaptive state-action aggregation.
//!
//! The fast component is tabular Q-learning over aggregate cells. The slow
//! component is the annealing engine itself, run over the joint
//! state-action space: observed `(x, u)` pairs are buffered and fed to the
//! aggregator every `n_period` steps with the slower stepsize `beta`, so
//! the partition looks quasi-static to the Q-values. Whenever the
//! aggregator resizes, the Q table follows it (split: children copy the
//! parent; merge: mass-weighted average; idle removal: entries dropped).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::Divergence;
use crate::envs::{self, CartPoleState, PhysicsParams, SyntheticMdp};
use crate::error::{OdaError, Result};
use crate::model::{OdaModel, Prototype, ResizeEvent, Schedule, StopCriteria};
use crate::snapshot::{ModelSnapshot, SNAPSHOT_VERSION};

/// Stepsize `(a + b n)^(-power)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRule {
    pub a: f64,
    pub b: f64,
    pub power: f64,
}

impl StepRule {
    pub fn step(&self, n: u64) -> f64 {
        (self.a + self.b * n as f64).powf(-self.power)
    }
}

/// `max(floor, 1 / (1 + n / scale))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExploreRule {
    pub floor: f64,
    pub scale: f64,
}

impl ExploreRule {
    pub fn rate(&self, n: u64) -> f64 {
        (1.0 / (1.0 + n as f64 / self.scale)).max(self.floor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoTimescaleSchedule {
    /// Fast Q-value stepsize, indexed by the cell's visit count.
    pub alpha: StepRule,
    /// Slow aggregator stepsize, indexed by observations in the level.
    pub beta: StepRule,
    /// Slow-update period at the first level; doubles every level.
    pub n_period: usize,
    pub n_period_max: usize,
    pub discount: f64,
    pub explore: ExploreRule,
}

impl Default for TwoTimescaleSchedule {
    fn default() -> Self {
        Self {
            alpha: StepRule {
                a: 2.0,
                b: 1.0,
                power: 2.0 / 3.0,
            },
            beta: StepRule {
                a: 2.0,
                b: 1.0,
                power: 1.0,
            },
            n_period: 50,
            n_period_max: 10_000,
            discount: 0.95,
            explore: ExploreRule {
                floor: 0.05,
                scale: 5000.0,
            },
        }
    }
}

impl TwoTimescaleSchedule {
    /// Slow-update period in effect at `level`.
    pub fn period_at(&self, level: usize) -> usize {
        let shifted = self.n_period.checked_shl(level.min(32) as u32).unwrap_or(usize::MAX);
        shifted.clamp(1, self.n_period_max.max(self.n_period).max(1))
    }

    /// `beta_n / alpha_n`.
    pub fn timescale_ratio(&self, n: u64) -> f64 {
        self.beta.step(n) / self.alpha.step(n)
    }
}

/// A state-action table with a Q-value per cell.
pub trait QTable {
    fn num_actions(&self) -> usize;
    fn cell(&self, x: &[f64], action: usize) -> Result<usize>;
    fn q(&self) -> &[f64];
    fn q_mut(&mut self) -> &mut [f64];
    fn visit_counts_mut(&mut self) -> &mut [u64];
    /// Slow-timescale hook, called once per transition after the Q update.
    fn record(&mut self, _x: &[f64], _action: usize) -> Result<()> {
        Ok(())
    }
}

/// Minimum Q over the action-conditioned cells of state `x`.
pub fn min_q<T: QTable + ?Sized>(table: &T, x: &[f64]) -> Result<f64> {
    let mut best = f64::INFINITY;
    for u in 0..table.num_actions() {
        best = best.min(table.q()[table.cell(x, u)?]);
    }
    Ok(best)
}

/// Greedy action: lowest Q, ties to the first action.
pub fn greedy_policy<T: QTable + ?Sized>(table: &T, x: &[f64]) -> Result<usize> {
    let mut best = (0, f64::INFINITY);
    for u in 0..table.num_actions() {
        let v = table.q()[table.cell(x, u)?];
        if v < best.1 {
            best = (u, v);
        }
    }
    Ok(best.0)
}

/// Uniform random action with probability `explore_rate`, else greedy.
pub fn select_action<T: QTable + ?Sized, R: Rng + ?Sized>(
    table: &T,
    x: &[f64],
    explore_rate: f64,
    rng: &mut R,
) -> Result<usize> {
    if table.num_actions() == 0 {
        return Err(OdaError::InvalidArgument("empty action set".into()));
    }
    if rng.random::<f64>() < explore_rate {
        Ok(rng.random_range(0..table.num_actions()))
    } else {
        greedy_policy(table, x)
    }
}

/// `q[h] += alpha (cost + discount * next_min - q[h])`, with the bootstrap
/// dropped on terminal transitions.
pub fn q_update<T: QTable + ?Sized>(
    table: &mut T,
    h: usize,
    cost: f64,
    next_min: f64,
    discount: f64,
    alpha: f64,
    terminal: bool,
) -> Result<()> {
    let len = table.q().len();
    if h >= len {
        return Err(OdaError::Index { index: h, len });
    }
    let target = cost + if terminal { 0.0 } else { discount * next_min };
    let q = &mut table.q_mut()[h];
    *q += alpha * (target - *q);
    table.visit_counts_mut()[h] += 1;
    Ok(())
}

/// An episodic environment with a finite action set and non-negative costs.
pub trait Environment {
    fn num_actions(&self) -> usize;
    fn reset(&mut self, rng: &mut dyn rand::RngCore) -> Vec<f64>;
    /// Returns `(next state, cost, terminal)`.
    fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)>;
}

/// Annealing parameters for the cart-pole aggregator in the
/// [`JointEmbedding::cart_pole`] space.
pub fn cart_pole_schedule() -> Schedule {
    Schedule {
        t_init: 0.1,
        t_min: 5e-4,
        gamma: 0.8,
        k_max: 150,
        eps_c: 1e-3,
        eps_n: 1e-3,
        eps_r: 1e-3,
        delta: 0.01,
        max_obs_per_level: 5000,
        ..Schedule::default()
    }
}

/// Cart-pole with forces `{-10, +10}`, cost 1 on failure and 0 otherwise.
#[derive(Debug, Clone)]
pub struct CartPoleEnv {
    pub params: PhysicsParams,
    pub forces: Vec<f64>,
    pub state: CartPoleState,
}

impl Default for CartPoleEnv {
    fn default() -> Self {
        Self::new(PhysicsParams::default())
    }
}

impl CartPoleEnv {
    pub fn new(params: PhysicsParams) -> Self {
        Self {
            params,
            forces: vec![-10.0, 10.0],
            state: CartPoleState::default(),
        }
    }
}

impl Environment for CartPoleEnv {
    fn num_actions(&self) -> usize {
        self.forces.len()
    }

    fn reset(&mut self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        self.state = envs::reset(rng);
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)> {
        let force = *self.forces.get(action).ok_or(OdaError::Index {
            index: action,
            len: self.forces.len(),
        })?;
        let (next, failed) = envs::step(&self.state, force, &self.params);
        self.state = next;
        Ok((next.to_vec(), if failed { 1.0 } else { 0.0 }, failed))
    }
}

/// A [`SyntheticMdp`] with a fixed start state; the state is `[index]`.
#[derive(Debug, Clone)]
pub struct MdpEnv {
    pub mdp: SyntheticMdp,
    pub start: usize,
    pub state: usize,
    pub terminal: Vec<bool>,
}

impl MdpEnv {
    pub fn new(mdp: SyntheticMdp, start: usize) -> Self {
        let n = mdp.states();
        Self {
            mdp,
            start,
            state: start,
            terminal: vec![false; n],
        }
    }
}

impl Environment for MdpEnv {
    fn num_actions(&self) -> usize {
        self.mdp.actions(self.state)
    }

    fn reset(&mut self, _rng: &mut dyn rand::RngCore) -> Vec<f64> {
        self.state = self.start;
        vec![self.state as f64]
    }

    fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)> {
        let (next, cost) = self.mdp.step(self.state, action)?;
        self.state = next;
        Ok((vec![next as f64], cost, self.terminal[next]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeStats {
    pub steps: usize,
    pub total_cost: f64,
}

/// Runs one training episode of Q-learning on `table`.
///
/// `step_counter` is the global step count, used for the exploration
/// schedule; it is advanced by the number of steps taken.
pub fn train_episode<E, T, R>(
    env: &mut E,
    table: &mut T,
    schedule: &TwoTimescaleSchedule,
    max_steps: usize,
    step_counter: &mut u64,
    rng: &mut R,
) -> Result<EpisodeStats>
where
    E: Environment + ?Sized,
    T: QTable + ?Sized,
    R: Rng + rand::RngCore,
{
    let mut stats = EpisodeStats::default();
    if max_steps == 0 {
        return Ok(stats);
    }
    let mut x = env.reset(rng);
    while stats.steps < max_steps {
        let explore = schedule.explore.rate(*step_counter);
        let u = select_action(table, &x, explore, rng)?;
        let h = table.cell(&x, u)?;
        let (next, cost, terminal) = env.step(u)?;
        let next_min = if terminal { 0.0 } else { min_q(table, &next)? };
        let visits = table.visit_counts_mut()[h];
        let alpha = schedule.alpha.step(visits);
        q_update(table, h, cost, next_min, schedule.discount, alpha, terminal)?;
        table.record(&x, u)?;
        stats.steps += 1;
        stats.total_cost += cost;
        *step_counter += 1;
        if terminal {
            break;
        }
        x = next;
    }
    Ok(stats)
}

/// Runs the greedy policy without learning; returns the episode length.
pub fn evaluate_episode<E, T>(
    env: &mut E,
    table: &T,
    max_steps: usize,
    rng: &mut dyn rand::RngCore,
) -> Result<usize>
where
    E: Environment + ?Sized,
    T: QTable + ?Sized,
{
    let mut x = env.reset(rng);
    for t in 0..max_steps {
        let u = greedy_policy(table, &x)?;
        let (next, _, terminal) = env.step(u)?;
        if terminal {
            return Ok(t + 1);
        }
        x = next;
    }
    Ok(max_steps)
}

/// Maps states and actions into the joint space: each state coordinate is
/// divided by its half-range and each action gets a fixed coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEmbedding {
    pub half_ranges: Vec<f64>,
    pub action_codes: Vec<f64>,
}

impl JointEmbedding {
    /// Cart-pole scaling over `(x, theta, x_dot, theta_dot)`: the track
    /// bound for the position, a tenth of a radian for the angle and typical
    /// velocity ranges. Forces `-10, +10` are coded as `-1, +1`.
    pub fn cart_pole() -> Self {
        Self {
            half_ranges: vec![2.4, 0.1, 2.0, 1.0],
            action_codes: vec![-1.0, 1.0],
        }
    }

    /// The box `[-1,1] x [-4,4] x [-1,1] x [-4,4]` used by the uniform grid.
    /// It leaves the pole angle almost unresolved: the failure angle maps
    /// to 0.05.
    pub fn state_box() -> Self {
        Self {
            half_ranges: vec![1.0, 4.0, 1.0, 4.0],
            action_codes: vec![-1.0, 1.0],
        }
    }

    pub fn dimension(&self) -> usize {
        self.half_ranges.len() + 1
    }

    pub fn embed(&self, x: &[f64], action: usize) -> Result<Vec<f64>> {
        if x.len() != self.half_ranges.len() {
            return Err(OdaError::DimensionMismatch {
                expected: self.half_ranges.len(),
                got: x.len(),
            });
        }
        let code = *self.action_codes.get(action).ok_or(OdaError::Index {
            index: action,
            len: self.action_codes.len(),
        })?;
        let mut v: Vec<f64> = x.iter().zip(&self.half_ranges).map(|(a, r)| a / r).collect();
        v.push(code);
        Ok(v)
    }
}

fn action_label(action: usize) -> String {
    format!("u{action}")
}

/// Joint state-action prototypes with a Q-value each.
#[derive(Debug, Clone)]
pub struct AggregateQ {
    pub aggregator: OdaModel,
    pub q: Vec<f64>,
    pub visit_counts: Vec<u64>,
    /// Visits of cells removed as idle.
    pub retired_visits: u64,
    pub embedding: JointEmbedding,
    pub schedule: TwoTimescaleSchedule,
    buffer: Vec<(Vec<f64>, String)>,
    frozen: bool,
}

impl AggregateQ {
    /// One prototype per action at `state_center`, labeled by action so the
    /// aggregator never mixes actions.
    pub fn new(
        embedding: JointEmbedding,
        oda: Schedule,
        schedule: TwoTimescaleSchedule,
        state_center: &[f64],
        seed: u64,
    ) -> Result<Self> {
        let init = (0..embedding.action_codes.len())
            .map(|u| Ok((embedding.embed(state_center, u)?, action_label(u))))
            .collect::<Result<Vec<_>>>()?;
        let div = Divergence::squared_euclidean(embedding.dimension());
        let aggregator = OdaModel::classification(div, oda, init, seed)?;
        Ok(Self::from_aggregator(aggregator, embedding, schedule))
    }

    /// Prototypes on a uniform grid of `bins` per state coordinate, for
    /// every action.
    pub fn uniform_grid(
        embedding: JointEmbedding,
        oda: Schedule,
        schedule: TwoTimescaleSchedule,
        bins: usize,
        seed: u64,
    ) -> Result<Self> {
        let d = embedding.half_ranges.len();
        let bins = bins.max(1);
        let centers: Vec<f64> = (0..bins).map(|i| -1.0 + (2 * i + 1) as f64 / bins as f64).collect();
        let cells = bins.pow(d as u32);
        let mut protos = Vec::with_capacity(cells * embedding.action_codes.len());
        for (u, &code) in embedding.action_codes.iter().enumerate() {
            for mut idx in 0..cells {
                let mut mu = Vec::with_capacity(d + 1);
                for _ in 0..d {
                    mu.push(centers[idx % bins]);
                    idx /= bins;
                }
                mu.push(code);
                protos.push((mu, action_label(u)));
            }
        }
        let rho = 1.0 / protos.len() as f64;
        let protos = protos
            .into_iter()
            .map(|(mu, c)| Prototype::new(mu, Some(c), rho))
            .collect();
        let div = Divergence::squared_euclidean(embedding.dimension());
        let aggregator = OdaModel::from_prototypes(div, oda, protos, seed)?;
        Ok(Self::from_aggregator(aggregator, embedding, schedule))
    }

    pub fn from_aggregator(
        aggregator: OdaModel,
        embedding: JointEmbedding,
        schedule: TwoTimescaleSchedule,
    ) -> Self {
        let k = aggregator.len();
        Self {
            aggregator,
            q: vec![0.0; k],
            visit_counts: vec![0; k],
            retired_visits: 0,
            embedding,
            schedule,
            buffer: Vec::new(),
            frozen: false,
        }
    }

    pub fn with_stop(mut self, stop: StopCriteria) -> Self {
        self.aggregator.stop = stop;
        self
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Stops adapting the partition; Q-learning continues on it.
    pub fn freeze(&mut self) {
        self.frozen = true;
        self.buffer.clear();
    }

    /// Nearest prototype to the embedded pair, ties to the lowest index.
    pub fn nearest_aggregate(&self, x: &[f64], action: usize) -> Result<usize> {
        let z = self.embedding.embed(x, action)?;
        crate::tasks::quantize(&self.aggregator, &z)
    }

    /// Applies a resize to the Q-values and visit counts.
    pub fn apply_event(&mut self, event: &ResizeEvent) {
        match event {
            ResizeEvent::Split { parents } => {
                let mut q = Vec::with_capacity(parents.len());
                let mut visits = Vec::with_capacity(parents.len());
                let mut i = 0;
                while i < parents.len() {
                    let parent = parents[i];
                    let mut j = i;
                    while j < parents.len() && parents[j] == parent {
                        j += 1;
                    }
                    let n = (j - i) as u64;
                    let c = self.visit_counts[parent];
                    for r in 0..n {
                        q.push(self.q[parent]);
                        visits.push(c / n + u64::from(r < c % n));
                    }
                    i = j;
                }
                self.q = q;
                self.visit_counts = visits;
            }
            ResizeEvent::Merge { into, rho } => {
                let k = into.iter().copied().max().map_or(0, |m| m + 1);
                let mut num = vec![0.0; k];
                let mut den = vec![0.0; k];
                let mut visits = vec![0u64; k];
                for (old, &new) in into.iter().enumerate() {
                    num[new] += rho[old] * self.q[old];
                    den[new] += rho[old];
                    visits[new] += self.visit_counts[old];
                }
                self.q = num
                    .iter()
                    .zip(&den)
                    .map(|(n, d)| if *d > 0.0 { n / d } else { 0.0 })
                    .collect();
                self.visit_counts = visits;
            }
            ResizeEvent::Idle { kept } => {
                let mut q = Vec::new();
                let mut visits = Vec::new();
                for (old, k) in kept.iter().enumerate() {
                    if k.is_some() {
                        q.push(self.q[old]);
                        visits.push(self.visit_counts[old]);
                    } else {
                        self.retired_visits += self.visit_counts[old];
                    }
                }
                self.q = q;
                self.visit_counts = visits;
            }
        }
    }

    /// Feeds buffered joint observations through the aggregator at its
    /// current temperature, remapping Q-values across every resize.
    pub fn aggregate_slow_update(&mut self, buffer: &[(Vec<f64>, String)]) -> Result<()> {
        for (z, label) in buffer {
            if self.frozen || self.aggregator.stopped().is_some() {
                self.frozen = true;
                break;
            }
            let n = self.aggregator.obs_count_level as u64;
            let beta = self.schedule.beta.step(n);
            let step = self.aggregator.observe_with_step(z, Some(label), beta)?;
            for event in &step.events {
                self.apply_event(event);
            }
            debug_assert_eq!(self.q.len(), self.aggregator.len());
            if step.stop.is_some() {
                self.frozen = true;
            }
        }
        Ok(())
    }

    pub fn current_period(&self) -> usize {
        self.schedule.period_at(self.aggregator.level_index)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: SNAPSHOT_VERSION,
            aggregator: ModelSnapshot::of(&self.aggregator),
            q: self.q.clone(),
            visit_counts: self.visit_counts.clone(),
            embedding: self.embedding.clone(),
            schedule: self.schedule.clone(),
        }
    }
}

impl QTable for AggregateQ {
    fn num_actions(&self) -> usize {
        self.embedding.action_codes.len()
    }

    fn cell(&self, x: &[f64], action: usize) -> Result<usize> {
        self.nearest_aggregate(x, action)
    }

    fn q(&self) -> &[f64] {
        &self.q
    }

    fn q_mut(&mut self) -> &mut [f64] {
        &mut self.q
    }

    fn visit_counts_mut(&mut self) -> &mut [u64] {
        &mut self.visit_counts
    }

    fn record(&mut self, x: &[f64], action: usize) -> Result<()> {
        if self.frozen {
            return Ok(());
        }
        let z = self.embedding.embed(x, action)?;
        self.buffer.push((z, action_label(action)));
        if self.buffer.len() >= self.current_period() {
            let buffer = std::mem::take(&mut self.buffer);
            self.aggregate_slow_update(&buffer)?;
        }
        Ok(())
    }
}

/// Aggregator snapshot plus Q-values, in the model snapshot envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub aggregator: ModelSnapshot,
    pub q: Vec<f64>,
    pub visit_counts: Vec<u64>,
    pub embedding: JointEmbedding,
    pub schedule: TwoTimescaleSchedule,
}

impl Checkpoint {
    pub fn into_aggregate(self, seed: u64) -> Result<AggregateQ> {
        let aggregator = self.aggregator.into_model(seed)?;
        if aggregator.len() != self.q.len() || self.q.len() != self.visit_counts.len() {
            return Err(OdaError::Snapshot("Q table does not match the aggregator".into()));
        }
        let mut agg = AggregateQ::from_aggregator(aggregator, self.embedding, self.schedule);
        agg.q = self.q;
        agg.visit_counts = self.visit_counts;
        agg.frozen = true;
        Ok(agg)
    }
}

/// Uniform grid over a box, one cell per (bin tuple, action). Coordinates
/// outside the box fall into the edge bins.
#[derive(Debug, Clone, PartialEq)]
pub struct GridQ {
    pub lows: Vec<f64>,
    pub highs: Vec<f64>,
    pub bins: usize,
    pub actions: usize,
    pub q: Vec<f64>,
    pub visit_counts: Vec<u64>,
}

impl GridQ {
    pub fn new(lows: Vec<f64>, highs: Vec<f64>, bins: usize, actions: usize) -> Self {
        let cells = bins.pow(lows.len() as u32) * actions;
        Self {
            lows,
            highs,
            bins,
            actions,
            q: vec![0.0; cells],
            visit_counts: vec![0; cells],
        }
    }

    /// `bins` per dimension over `[-1,1] x [-4,4] x [-1,1] x [-4,4]`.
    pub fn cart_pole(bins: usize) -> Self {
        Self::new(vec![-1.0, -4.0, -1.0, -4.0], vec![1.0, 4.0, 1.0, 4.0], bins, 2)
    }

    pub fn state_cells(&self) -> usize {
        self.bins.pow(self.lows.len() as u32)
    }
}

impl QTable for GridQ {
    fn num_actions(&self) -> usize {
        self.actions
    }

    fn cell(&self, x: &[f64], action: usize) -> Result<usize> {
        if x.len() != self.lows.len() {
            return Err(OdaError::DimensionMismatch {
                expected: self.lows.len(),
                got: x.len(),
            });
        }
        if action >= self.actions {
            return Err(OdaError::Index {
                index: action,
                len: self.actions,
            });
        }
        let mut idx = 0;
        for ((v, lo), hi) in x.iter().zip(&self.lows).zip(&self.highs).rev() {
            let frac = (v - lo) / (hi - lo);
            let b = ((frac * self.bins as f64).floor().max(0.0) as usize).min(self.bins - 1);
            idx = idx * self.bins + b;
        }
        Ok(action * self.state_cells() + idx)
    }

    fn q(&self) -> &[f64] {
        &self.q
    }

    fn q_mut(&mut self) -> &mut [f64] {
        &mut self.q
    }

    fn visit_counts_mut(&mut self) -> &mut [u64] {
        &mut self.visit_counts
    }
}

/// Identity aggregation for finite MDPs: state `[s]`, cell `s * A + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    pub states: usize,
    pub actions: usize,
    pub q: Vec<f64>,
    pub visit_counts: Vec<u64>,
}

impl TabularQ {
    pub fn new(states: usize, actions: usize) -> Self {
        Self {
            states,
            actions,
            q: vec![0.0; states * actions],
            visit_counts: vec![0; states * actions],
        }
    }
}

impl QTable for TabularQ {
    fn num_actions(&self) -> usize {
        self.actions
    }

    fn cell(&self, x: &[f64], action: usize) -> Result<usize> {
        let s = x.first().copied().unwrap_or(-1.0);
        if !(s >= 0.0) || s as usize >= self.states || action >= self.actions {
            return Err(OdaError::Index {
                index: s.max(0.0) as usize,
                len: self.states,
            });
        }
        Ok(s as usize * self.actions + action)
    }

    fn q(&self) -> &[f64] {
        &self.q
    }

    fn q_mut(&mut self) -> &mut [f64] {
        &mut self.q
    }

    fn visit_counts_mut(&mut self) -> &mut [u64] {
        &mut self.visit_counts
    }
}

/// Dense value iteration for a finite MDP; returns `Q[s * A + u]`.
pub fn value_iteration(mdp: &SyntheticMdp, discount: f64, tol: f64) -> Vec<f64> {
    let a = mdp.actions(0);
    let n = mdp.states();
    let mut q = vec![0.0; n * a];
    loop {
        let v: Vec<f64> = (0..n)
            .map(|s| q[s * a..(s + 1) * a].iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let mut change: f64 = 0.0;
        for s in 0..n {
            for u in 0..a {
                let next = mdp.next[s][u];
                let new = mdp.cost[s][u] + discount * v[next];
                change = change.max((new - q[s * a + u]).abs());
                q[s * a + u] = new;
            }
        }
        if change < tol {
            return q;
        }
    }
}
