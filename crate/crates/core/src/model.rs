//! Annealing state and the per-level operations of online deterministic
//! annealing: Gibbs memberships, the stochastic-approximation update of
//! `(rho, sigma)`, perturbation into pairs, merging of coincident
//! prototypes, idle removal and cooling.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::divergence::Divergence;
use crate::error::{OdaError, Result};

/// A codevector together with its mass estimate and centroid accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub mu: Vec<f64>,
    pub label: Option<String>,
    pub rho: f64,
    pub sigma: Vec<f64>,
}

impl Prototype {
    pub fn new(mu: Vec<f64>, label: Option<String>, rho: f64) -> Self {
        let sigma = mu.iter().map(|m| m * rho).collect();
        Self {
            mu,
            label,
            rho,
            sigma,
        }
    }

    fn rebuild_sigma(&mut self) {
        let rho = self.rho;
        self.sigma.clear();
        self.sigma.extend(self.mu.iter().map(|m| m * rho));
    }
}

/// How the temperature moves between levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Cooling {
    /// `T <- gamma * T`.
    #[default]
    Geometric,
    /// `lambda <- gamma * lambda` with `T = lambda / (1 - lambda)`.
    Lambda,
}

/// How the convergence and merge tests weigh a divergence by temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// `d / T < eps`: tighter as the temperature drops.
    #[default]
    OverTemperature,
    /// `T d < eps`.
    TimesTemperature,
}

impl Threshold {
    pub fn passes(self, t: f64, d: f64, eps: f64) -> bool {
        match self {
            Threshold::OverTemperature => d < eps * t,
            Threshold::TimesTemperature => t * d < eps,
        }
    }
}

/// Annealing and stochastic-approximation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub gamma: f64,
    pub t_init: f64,
    pub t_min: f64,
    pub k_max: usize,
    /// Stepsize `alpha_n = 1 / (a + b n)`.
    pub a: f64,
    pub b: f64,
    pub eps_c: f64,
    pub eps_n: f64,
    pub eps_r: f64,
    pub delta: f64,
    pub max_obs_per_level: usize,
    #[serde(default = "default_check_period")]
    pub check_period: usize,
    #[serde(default)]
    pub cooling: Cooling,
    #[serde(default)]
    pub threshold: Threshold,
}

fn default_check_period() -> usize {
    10
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            gamma: 0.8,
            t_init: 1.0,
            t_min: 1e-3,
            k_max: 64,
            a: 10.0,
            b: 0.05,
            eps_c: 1e-3,
            eps_n: 1e-3,
            eps_r: 1e-3,
            delta: 0.01,
            max_obs_per_level: 20_000,
            check_period: 10,
            cooling: Cooling::Geometric,
            threshold: Threshold::OverTemperature,
        }
    }
}

impl Schedule {
    /// Defaults scaled to a dataset: the perturbation by the root mean
    /// per-coordinate variance and the starting temperature above the largest
    /// critical temperature of the whole set. Tolerances compare `d / T` and
    /// need no scaling.
    pub fn scaled_to(data: &[Vec<f64>], divergence: &Divergence) -> Result<Self> {
        if data.is_empty() {
            return Err(OdaError::InvalidArgument("empty dataset".into()));
        }
        let d = divergence.dimension;
        let n = data.len() as f64;
        let mut mean = vec![0.0; d];
        for x in data {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let var = data
            .iter()
            .map(|x| x.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (n * d as f64);
        let var = if var > 0.0 { var } else { 1.0 };
        let t_crit = crate::diagnostic::critical_temperature_of(divergence, &mean, data)?;
        let t_init = if t_crit.is_finite() && t_crit > 0.0 {
            2.0 * t_crit
        } else {
            1.0
        };
        Ok(Self {
            t_init,
            t_min: t_init * 1e-3,
            eps_c: 1e-3,
            eps_n: 1e-3,
            eps_r: 1e-3,
            delta: 0.01 * var.sqrt(),
            ..Self::default()
        })
    }

    /// Temperature from the lambda front end, `T = lambda / (1 - lambda)`.
    pub fn temperature_from_lambda(lambda: f64) -> f64 {
        lambda / (1.0 - lambda)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(OdaError::InvalidArgument(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.t_init > 0.0 && self.t_init.is_finite()) {
            return bad("t_init must be positive");
        }
        if !(self.t_min >= 0.0) {
            return bad("t_min must be non-negative");
        }
        if self.k_max == 0 {
            return bad("k_max must be positive");
        }
        if !(self.a > 0.0 && self.b >= 0.0) {
            return bad("stepsize requires a > 0 and b >= 0");
        }
        if !(self.eps_c > 0.0 && self.eps_n > 0.0 && self.eps_r > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.delta >= 0.0) {
            return bad("delta must be non-negative");
        }
        if self.max_obs_per_level == 0 || self.check_period == 0 {
            return bad("max_obs_per_level and check_period must be positive");
        }
        if self.cooling == Cooling::Lambda && self.t_init.is_infinite() {
            return bad("lambda cooling needs a finite t_init");
        }
        Ok(())
    }

    pub fn stepsize(&self, n: usize) -> f64 {
        1.0 / (self.a + self.b * n as f64)
    }

    pub fn next_temperature(&self, t: f64) -> f64 {
        match self.cooling {
            Cooling::Geometric => self.gamma * t,
            Cooling::Lambda => {
                let lambda = t / (1.0 + t);
                Self::temperature_from_lambda(self.gamma * lambda)
            }
        }
    }
}

/// One row of training history, written when a level completes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub temperature: f64,
    pub k_effective: usize,
    pub distortion: f64,
    pub obs_used: usize,
    pub wall_time: Duration,
    #[serde(default)]
    pub forced_cutoff: bool,
}

/// A data point, labeled in classification mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub c: Option<String>,
}

impl Observation {
    pub fn unlabeled(x: Vec<f64>) -> Self {
        Self { x, c: None }
    }

    pub fn labeled(x: Vec<f64>, c: impl Into<String>) -> Self {
        Self {
            x,
            c: Some(c.into()),
        }
    }
}

/// A change of prototype count, reported so that per-prototype tables
/// (such as Q-values) can follow the partition.
#[derive(Debug, Clone, PartialEq)]
pub enum ResizeEvent {
    /// `parents[new] = old` for every new prototype.
    Split { parents: Vec<usize> },
    /// `into[old] = new` survivor index; `rho[old]` is the pre-merge mass.
    Merge { into: Vec<usize>, rho: Vec<f64> },
    /// `kept[old] = Some(new)` or `None` for a removed prototype.
    Idle { kept: Vec<Option<usize>> },
}

/// Operation counts for the complexity accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub divergence_evals: u64,
    pub merge_comparisons: u64,
    pub sa_updates: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    KMax,
    TMin,
    TargetDistortion,
    MaxLevels,
    StreamEnded,
}

/// Which stopping criteria are active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopCriteria {
    pub k_max: bool,
    pub t_min: bool,
    pub target_distortion: Option<f64>,
    pub max_levels: Option<usize>,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self {
            k_max: true,
            t_min: true,
            target_distortion: None,
            max_levels: None,
        }
    }
}

/// Result of feeding one observation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Step {
    /// Resizes applied during this call, in order.
    pub events: Vec<ResizeEvent>,
    /// Record of the level that completed during this call, if any.
    pub completed: Option<LevelRecord>,
    pub stop: Option<StopReason>,
}

/// The full annealing state.
#[derive(Debug, Clone)]
pub struct OdaModel {
    pub prototypes: Vec<Prototype>,
    pub divergence: Divergence,
    pub temperature: f64,
    pub schedule: Schedule,
    pub stop: StopCriteria,
    pub obs_count_level: usize,
    pub obs_count_total: u64,
    pub level_index: usize,
    pub history: Vec<LevelRecord>,
    pub counters: Counters,
    rng: ChaCha8Rng,
    snapshot: Vec<Vec<f64>>,
    level_open: bool,
    level_started: Instant,
    distortion_ema: f64,
    stopped: Option<StopReason>,
    weights: Vec<f64>,
    distances: Vec<f64>,
}

impl OdaModel {
    fn build(
        prototypes: Vec<Prototype>,
        divergence: Divergence,
        schedule: Schedule,
        seed: u64,
    ) -> Result<Self> {
        schedule.validate()?;
        if prototypes.is_empty() {
            return Err(OdaError::DegenerateModel("no prototypes".into()));
        }
        for p in &prototypes {
            divergence.validate(&p.mu)?;
            if !(p.rho > 0.0) {
                return Err(OdaError::InvalidArgument("prototype mass must be positive".into()));
            }
        }
        let labeled = prototypes[0].label.is_some();
        if prototypes.iter().any(|p| p.label.is_some() != labeled) {
            return Err(OdaError::InvalidArgument(
                "prototypes must be all labeled or all unlabeled".into(),
            ));
        }
        Ok(Self {
            temperature: schedule.t_init,
            snapshot: prototypes.iter().map(|p| p.mu.clone()).collect(),
            prototypes,
            divergence,
            schedule,
            stop: StopCriteria::default(),
            obs_count_level: 0,
            obs_count_total: 0,
            level_index: 0,
            history: Vec::new(),
            counters: Counters::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            level_open: false,
            level_started: Instant::now(),
            distortion_ema: 0.0,
            stopped: None,
            weights: Vec::new(),
            distances: Vec::new(),
        })
    }

    /// A single unlabeled prototype at `init` with unit mass.
    pub fn clustering(
        divergence: Divergence,
        schedule: Schedule,
        init: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        Self::build(vec![Prototype::new(init, None, 1.0)], divergence, schedule, seed)
    }

    /// One prototype per class, masses split evenly.
    pub fn classification(
        divergence: Divergence,
        schedule: Schedule,
        init: Vec<(Vec<f64>, String)>,
        seed: u64,
    ) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for (_, c) in &init {
            if !seen.insert(c.clone()) {
                return Err(OdaError::InvalidArgument(format!("duplicate class {c:?}")));
            }
        }
        let rho = 1.0 / init.len().max(1) as f64;
        let protos = init
            .into_iter()
            .map(|(mu, c)| Prototype::new(mu, Some(c), rho))
            .collect();
        Self::build(protos, divergence, schedule, seed)
    }

    /// Arbitrary starting prototypes, e.g. restored from a snapshot.
    pub fn from_prototypes(
        divergence: Divergence,
        schedule: Schedule,
        prototypes: Vec<Prototype>,
        seed: u64,
    ) -> Result<Self> {
        Self::build(prototypes, divergence, schedule, seed)
    }

    pub fn with_stop(mut self, stop: StopCriteria) -> Self {
        self.stop = stop;
        self
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn is_classifier(&self) -> bool {
        self.prototypes.first().is_some_and(|p| p.label.is_some())
    }

    pub fn stopped(&self) -> Option<StopReason> {
        self.stopped
    }

    pub fn total_mass(&self) -> f64 {
        self.prototypes.iter().map(|p| p.rho).sum()
    }

    pub fn mus(&self) -> Vec<Vec<f64>> {
        self.prototypes.iter().map(|p| p.mu.clone()).collect()
    }

    pub fn classes(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<&String> =
            self.prototypes.iter().filter_map(|p| p.label.as_ref()).collect();
        set.into_iter().cloned().collect()
    }

    /// Distances from `x` to every prototype; `x` must already be validated.
    pub(crate) fn distances_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.prototypes
                .iter()
                .map(|p| self.divergence.distance_unchecked(x, &p.mu)),
        );
    }

    fn gibbs_from_distances(&self, distances: &[f64], out: &mut Vec<f64>) -> Result<()> {
        let t = self.temperature;
        out.clear();
        out.extend(
            self.prototypes
                .iter()
                .zip(distances)
                .map(|(p, d)| p.rho.ln() - d / t),
        );
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(OdaError::DegenerateModel(
                "membership exponents are not finite".into(),
            ));
        }
        let mut total = 0.0;
        for w in out.iter_mut() {
            *w = (*w - max).exp();
            total += *w;
        }
        // The max term contributes exp(0) = 1, so total >= 1.
        debug_assert!(total >= 1.0);
        for w in out.iter_mut() {
            *w /= total;
        }
        Ok(())
    }

    /// Mass-weighted Gibbs association probabilities of `x`.
    pub fn gibbs_memberships(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.divergence.validate(x)?;
        let mut d = Vec::with_capacity(self.len());
        self.distances_into(x, &mut d);
        let mut p = Vec::with_capacity(self.len());
        self.gibbs_from_distances(&d, &mut p)?;
        Ok(p)
    }

    /// One stochastic-approximation step with the scheduled stepsize.
    pub fn sa_update(&mut self, obs: &Observation) -> Result<()> {
        let alpha = self.schedule.stepsize(self.obs_count_level);
        self.sa_update_with_step(&obs.x, obs.c.as_deref(), alpha)
    }

    /// One stochastic-approximation step with an explicit stepsize.
    ///
    /// Memberships are taken against the pre-update prototypes. In
    /// classification mode a prototype only absorbs mass from observations of
    /// its own class.
    pub fn sa_update_with_step(&mut self, x: &[f64], c: Option<&str>, alpha: f64) -> Result<()> {
        self.divergence.validate(x)?;
        let classify = self.is_classifier();
        if classify && c.is_none() {
            return Err(OdaError::InvalidArgument(
                "classification model needs labeled observations".into(),
            ));
        }
        let mut d = std::mem::take(&mut self.distances);
        let mut p = std::mem::take(&mut self.weights);
        self.distances_into(x, &mut d);
        self.counters.divergence_evals += d.len() as u64;
        let res = self.gibbs_from_distances(&d, &mut p);
        if let Err(e) = res {
            self.distances = d;
            self.weights = p;
            return Err(e);
        }
        let min_d = d.iter().copied().fold(f64::INFINITY, f64::min);
        let mut failure = None;
        for (i, (proto, &pi)) in self.prototypes.iter_mut().zip(&p).enumerate() {
            let s = if classify {
                (proto.label.as_deref() == c) as u8 as f64
            } else {
                1.0
            };
            let sp = s * pi;
            proto.rho += alpha * (sp - proto.rho);
            for (sig, xv) in proto.sigma.iter_mut().zip(x) {
                *sig += alpha * (xv * sp - *sig);
            }
            if !(proto.rho > 0.0) {
                failure.get_or_insert(i);
                continue;
            }
            let rho = proto.rho;
            for (m, sig) in proto.mu.iter_mut().zip(&proto.sigma) {
                *m = sig / rho;
            }
        }
        self.distances = d;
        self.weights = p;
        if let Some(i) = failure {
            return Err(OdaError::Numerical(format!(
                "mass of prototype {i} became non-positive (stepsize {alpha})"
            )));
        }
        let n = self.obs_count_level as f64;
        let w = (1.0 / (n + 1.0)).max(1.0 / 500.0);
        self.distortion_ema += w * (min_d - self.distortion_ema);
        self.obs_count_level += 1;
        self.obs_count_total += 1;
        self.counters.sa_updates += 1;
        Ok(())
    }

    /// `d(mu_now, mu_prev)` passes the `eps_c` threshold for every
    /// prototype, or the level has used its observation budget.
    pub fn check_convergence(&self, previous: &[Vec<f64>]) -> Result<bool> {
        if previous.len() != self.len() {
            return Err(OdaError::Alignment {
                current: self.len(),
                previous: previous.len(),
            });
        }
        if self.obs_count_level >= self.schedule.max_obs_per_level {
            return Ok(true);
        }
        let t = self.temperature;
        let eps = self.schedule.eps_c;
        Ok(self
            .prototypes
            .iter()
            .zip(previous)
            .all(|(p, prev)| {
                let d = self.divergence.distance_unchecked(&p.mu, prev);
                self.schedule.threshold.passes(t, d, eps)
            }))
    }

    fn unit_direction(&mut self) -> Vec<f64> {
        let d = self.divergence.dimension;
        loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut self.rng)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return v.into_iter().map(|a| a / norm).collect();
            }
        }
    }

    fn child_pair(&self, mu: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut delta = self.schedule.delta;
        loop {
            let plus: Vec<f64> = mu.iter().zip(u).map(|(m, v)| m + delta * v).collect();
            let minus: Vec<f64> = mu.iter().zip(u).map(|(m, v)| m - delta * v).collect();
            if (self.divergence.contains(&plus) && self.divergence.contains(&minus))
                || delta == 0.0
            {
                return (plus, minus);
            }
            delta *= 0.5;
            if delta < 1e-300 {
                delta = 0.0;
            }
        }
    }

    fn reset_level(&mut self) {
        self.obs_count_level = 0;
        self.snapshot = self.mus();
        self.level_started = Instant::now();
        self.distortion_ema = 0.0;
        self.level_open = true;
    }

    /// Replaces every prototype by the pair `mu +/- delta u` along the given
    /// unit directions (one per prototype).
    pub fn perturb_with_directions(&mut self, directions: &[Vec<f64>]) -> Result<ResizeEvent> {
        let limit = 2 * self.schedule.k_max;
        if 2 * self.len() > limit {
            return Err(OdaError::CapacityExceeded {
                requested: 2 * self.len(),
                limit,
            });
        }
        if directions.len() != self.len() {
            return Err(OdaError::Alignment {
                current: self.len(),
                previous: directions.len(),
            });
        }
        let chosen: Vec<(usize, Vec<f64>)> = directions.iter().cloned().enumerate().collect();
        let extra = self.class_extras(&chosen, limit);
        Ok(self.apply_split(chosen, extra))
    }

    /// Doubles the prototype set along fresh random directions.
    pub fn perturb(&mut self) -> Result<ResizeEvent> {
        let limit = 2 * self.schedule.k_max;
        if 2 * self.len() > limit {
            return Err(OdaError::CapacityExceeded {
                requested: 2 * self.len(),
                limit,
            });
        }
        let dirs: Vec<Vec<f64>> = (0..self.len()).map(|_| self.unit_direction()).collect();
        self.perturb_with_directions(&dirs)
    }

    /// Splits only the `budget` most massive prototypes. Used when doubling
    /// would push the model past `k_max`.
    pub fn perturb_limited(&mut self, budget: usize) -> ResizeEvent {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.prototypes[b]
                .rho
                .total_cmp(&self.prototypes[a].rho)
                .then(a.cmp(&b))
        });
        order.truncate(budget.min(self.len()));
        order.sort_unstable();
        let chosen: Vec<(usize, Vec<f64>)> =
            order.into_iter().map(|i| (i, self.unit_direction())).collect();
        let limit = self.schedule.k_max;
        let extra = self.class_extras(&chosen, limit);
        self.apply_split(chosen, extra)
    }

    /// Classification mode: one additional perturbed child per class, taken
    /// from the class's most massive prototype, when capacity allows.
    fn class_extras(&mut self, chosen: &[(usize, Vec<f64>)], limit: usize) -> BTreeMap<usize, Vec<f64>> {
        let mut extra = BTreeMap::new();
        if !self.is_classifier() {
            return extra;
        }
        let mut best: BTreeMap<String, usize> = BTreeMap::new();
        for (i, p) in self.prototypes.iter().enumerate() {
            let label = p.label.clone().unwrap_or_default();
            match best.get(&label) {
                Some(&j) if self.prototypes[j].rho >= p.rho => {}
                _ => {
                    best.insert(label, i);
                }
            }
        }
        let after = self.len() + chosen.len();
        if after + best.len() > limit {
            return extra;
        }
        let chosen_set: std::collections::BTreeSet<usize> = chosen.iter().map(|c| c.0).collect();
        for &i in best.values() {
            if chosen_set.contains(&i) {
                let u = self.unit_direction();
                extra.insert(i, u);
            }
        }
        extra
    }

    fn apply_split(
        &mut self,
        chosen: Vec<(usize, Vec<f64>)>,
        extra: BTreeMap<usize, Vec<f64>>,
    ) -> ResizeEvent {
        let mut dirs: BTreeMap<usize, Vec<f64>> = chosen.into_iter().collect();
        let old = std::mem::take(&mut self.prototypes);
        let mut parents = Vec::with_capacity(old.len() * 2);
        for (i, p) in old.into_iter().enumerate() {
            match dirs.remove(&i) {
                None => {
                    parents.push(i);
                    self.prototypes.push(p);
                }
                Some(u) => {
                    let (plus, minus) = self.child_pair(&p.mu, &u);
                    let third = extra.get(&i).map(|w| self.child_pair(&p.mu, w).0);
                    let share = if third.is_some() { 3.0 } else { 2.0 };
                    let rho = p.rho / share;
                    let mut children = vec![plus, minus];
                    children.extend(third);
                    for mu in children {
                        parents.push(i);
                        self.prototypes.push(Prototype::new(mu, p.label.clone(), rho));
                    }
                }
            }
        }
        self.reset_level();
        ResizeEvent::Split { parents }
    }

    /// Removes prototypes within the `eps_n` threshold of an earlier survivor
    /// of the same label; the survivor absorbs the mass.
    pub fn merge_effective(&mut self) -> ResizeEvent {
        let t = self.temperature;
        let eps = self.schedule.eps_n;
        let rho: Vec<f64> = self.prototypes.iter().map(|p| p.rho).collect();
        let old = std::mem::take(&mut self.prototypes);
        let mut into = Vec::with_capacity(old.len());
        for p in old {
            let mut target = None;
            for (j, s) in self.prototypes.iter().enumerate() {
                self.counters.merge_comparisons += 1;
                if s.label == p.label
                    && self
                        .schedule
                        .threshold
                        .passes(t, self.divergence.distance_unchecked(&s.mu, &p.mu), eps)
                {
                    target = Some(j);
                    break;
                }
            }
            match target {
                Some(j) => {
                    let s = &mut self.prototypes[j];
                    s.rho += p.rho;
                    s.rebuild_sigma();
                    into.push(j);
                }
                None => {
                    into.push(self.prototypes.len());
                    self.prototypes.push(p);
                }
            }
        }
        ResizeEvent::Merge { into, rho }
    }

    /// Drops prototypes with `rho < eps_r` and renormalizes the rest. The last
    /// prototype, and the last prototype of each class, always survive.
    pub fn remove_idle(&mut self) -> ResizeEvent {
        let eps = self.schedule.eps_r;
        let n = self.len();
        let mut keep: Vec<bool> = self.prototypes.iter().map(|p| p.rho >= eps).collect();
        // Group by label (a single group when unlabeled) and protect the
        // heaviest member of any group that would vanish.
        let mut groups: BTreeMap<Option<&str>, Vec<usize>> = BTreeMap::new();
        for (i, p) in self.prototypes.iter().enumerate() {
            groups.entry(p.label.as_deref()).or_default().push(i);
        }
        for members in groups.values() {
            if members.iter().all(|&i| !keep[i]) {
                let best = members
                    .iter()
                    .copied()
                    .max_by(|&a, &b| {
                        self.prototypes[a]
                            .rho
                            .total_cmp(&self.prototypes[b].rho)
                            .then(b.cmp(&a))
                    })
                    .expect("non-empty group");
                keep[best] = true;
            }
        }
        let old = std::mem::take(&mut self.prototypes);
        let mut kept = Vec::with_capacity(n);
        for (p, k) in old.into_iter().zip(keep) {
            if k {
                kept.push(Some(self.prototypes.len()));
                self.prototypes.push(p);
            } else {
                kept.push(None);
            }
        }
        let total = self.total_mass();
        for p in &mut self.prototypes {
            p.rho /= total;
            p.rebuild_sigma();
        }
        ResizeEvent::Idle { kept }
    }

    /// Closes the current level: appends its record and cools. Returns true
    /// once the new temperature is below `t_min`.
    pub fn lower_temperature(&mut self) -> bool {
        let forced = self.obs_count_level >= self.schedule.max_obs_per_level;
        self.history.push(LevelRecord {
            temperature: self.temperature,
            k_effective: self.len(),
            distortion: self.distortion_ema,
            obs_used: self.obs_count_level,
            wall_time: self.level_started.elapsed(),
            forced_cutoff: forced,
        });
        self.temperature = self.schedule.next_temperature(self.temperature);
        self.level_index += 1;
        self.level_open = false;
        self.temperature < self.schedule.t_min
    }

    /// Opens a level by perturbing, respecting `k_max`.
    fn open_level(&mut self) -> Result<Option<ResizeEvent>> {
        if self.level_open {
            return Ok(None);
        }
        let k = self.len();
        let k_max = self.schedule.k_max;
        let event = if 2 * k <= k_max {
            self.perturb()?
        } else {
            self.perturb_limited(k_max.saturating_sub(k))
        };
        Ok(Some(event))
    }

    /// Feeds one observation through the level state machine: perturb at the
    /// start of a level, update, and on convergence merge, remove idle
    /// prototypes, cool, check the stopping criteria and open the next level.
    pub fn observe(&mut self, x: &[f64], c: Option<&str>) -> Result<Step> {
        self.observe_inner(x, c, None)
    }

    /// As [`OdaModel::observe`] with an externally supplied stepsize.
    pub fn observe_with_step(&mut self, x: &[f64], c: Option<&str>, alpha: f64) -> Result<Step> {
        self.observe_inner(x, c, Some(alpha))
    }

    fn observe_inner(&mut self, x: &[f64], c: Option<&str>, alpha: Option<f64>) -> Result<Step> {
        if self.stopped.is_some() {
            return Err(OdaError::InvalidArgument("training already stopped".into()));
        }
        let mut step = Step::default();
        step.events.extend(self.open_level()?);
        let alpha = alpha.unwrap_or_else(|| self.schedule.stepsize(self.obs_count_level));
        self.sa_update_with_step(x, c, alpha)?;
        let n = self.obs_count_level;
        if !n.is_multiple_of(self.schedule.check_period) && n < self.schedule.max_obs_per_level {
            return Ok(step);
        }
        let mus = self.mus();
        let snapshot = std::mem::replace(&mut self.snapshot, mus);
        if !self.check_convergence(&snapshot)? {
            return Ok(step);
        }
        step.events.push(self.merge_effective());
        step.events.push(self.remove_idle());
        let below = self.lower_temperature();
        let record = self.history.last().cloned().expect("record just pushed");
        let k = self.len();
        let stop = if self.stop.t_min && below {
            Some(StopReason::TMin)
        } else if self.stop.k_max && k >= self.schedule.k_max {
            Some(StopReason::KMax)
        } else if self
            .stop
            .target_distortion
            .is_some_and(|target| record.distortion <= target)
        {
            Some(StopReason::TargetDistortion)
        } else if self.stop.max_levels.is_some_and(|m| self.history.len() >= m) {
            Some(StopReason::MaxLevels)
        } else {
            None
        };
        self.stopped = stop;
        if stop.is_none() {
            step.events.extend(self.open_level()?);
        }
        step.completed = Some(record);
        step.stop = stop;
        Ok(step)
    }

    /// Marks training finished, e.g. when the stream ends.
    pub fn finish(&mut self, reason: StopReason) {
        self.stopped.get_or_insert(reason);
    }
}
