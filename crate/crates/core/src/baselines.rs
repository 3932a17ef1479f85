//! Reference algorithms for comparison: batch k-means, online winner-take-all
//! vector quantization, and batch deterministic annealing. All of them use
//! the same [`Divergence`] as the annealing engine.

use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};

use crate::divergence::Divergence;
use crate::error::{OdaError, Result};
use crate::model::Schedule;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub centroids: Vec<Vec<f64>>,
    /// `(observations consumed, average distortion)`.
    pub distortion_curve: Vec<(u64, f64)>,
    pub k: usize,
    pub wall_time: Duration,
}

impl BaselineResult {
    pub fn final_distortion(&self) -> f64 {
        self.distortion_curve.last().map_or(f64::NAN, |c| c.1)
    }
}

fn validate_all(div: &Divergence, data: &[Vec<f64>]) -> Result<()> {
    data.iter().try_for_each(|x| div.validate(x))
}

fn nearest(div: &Divergence, x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = div.distance_unchecked(x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Mean nearest-centroid divergence over `data`.
pub fn distortion(div: &Divergence, data: &[Vec<f64>], centroids: &[Vec<f64>]) -> f64 {
    data.iter().map(|x| nearest(div, x, centroids).1).sum::<f64>() / data.len() as f64
}

/// Lloyd iterations from `k` distinct random data points until the
/// assignment stops changing or 200 iterations pass.
pub fn kmeans_fit(div: &Divergence, data: &[Vec<f64>], k: usize, seed: u64) -> Result<BaselineResult> {
    if k == 0 || k > data.len() {
        return Err(OdaError::InvalidArgument(format!(
            "invalid k = {k} for {} points",
            data.len()
        )));
    }
    validate_all(div, data)?;
    let start = Instant::now();
    let mut rng = rng::stream(seed, 0x6b6d);
    let mut centroids: Vec<Vec<f64>> = sample(&mut rng, data.len(), k)
        .into_iter()
        .map(|i| data[i].clone())
        .collect();
    let n = data.len();
    let d = div.dimension;
    let mut assign = vec![usize::MAX; n];
    let mut curve = Vec::new();
    let mut consumed = 0u64;
    for _ in 0..200 {
        let mut changed = false;
        let mut contrib = vec![0.0; n];
        for (i, x) in data.iter().enumerate() {
            let (j, dist) = nearest(div, x, &centroids);
            contrib[i] = dist;
            if assign[i] != j {
                assign[i] = j;
                changed = true;
            }
        }
        consumed += n as u64;
        curve.push((consumed, contrib.iter().sum::<f64>() / n as f64));
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (x, &j) in data.iter().zip(&assign) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(x) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Re-seed the empty cluster at the worst-served point.
                let worst = contrib
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .expect("non-empty data");
                centroids[j] = data[worst].clone();
                contrib[worst] = 0.0;
                assign[worst] = j;
            } else {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    Ok(BaselineResult {
        k,
        centroids,
        distortion_curve: curve,
        wall_time: start.elapsed(),
    })
}

/// Best of `restarts` k-means runs on derived seeds.
pub fn kmeans_best_of(
    div: &Divergence,
    data: &[Vec<f64>],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<BaselineResult> {
    let mut best: Option<BaselineResult> = None;
    for r in 0..restarts.max(1) {
        let res = kmeans_fit(div, data, k, rng::derive_seed(seed, r as u64))?;
        if best
            .as_ref()
            .is_none_or(|b| res.final_distortion() < b.final_distortion())
        {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Where the online quantizer's initial centroids come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SvqInit {
    /// The first `k` observations of the stream.
    FirstDraws,
    /// Greedy farthest-point selection among the first `m` observations.
    FarthestOfFirst(usize),
}

/// Winner-take-all online vector quantization. The winner's step follows
/// `step(n)` where `n` counts that centroid's previous wins. `eval` is
/// scored every `eval_every` observations for the distortion curve.
pub fn svq_fit<I, S>(
    div: &Divergence,
    stream: I,
    k: usize,
    step: S,
    init: SvqInit,
    eval: &[Vec<f64>],
    eval_every: u64,
) -> Result<BaselineResult>
where
    I: IntoIterator<Item = Vec<f64>>,
    S: Fn(u64) -> f64,
{
    if k == 0 {
        return Err(OdaError::InvalidArgument("k must be positive".into()));
    }
    if eval.is_empty() {
        return Err(OdaError::InvalidArgument("empty evaluation set".into()));
    }
    let start = Instant::now();
    let mut it = stream.into_iter();
    let want = match init {
        SvqInit::FirstDraws => k,
        SvqInit::FarthestOfFirst(m) => m.max(k),
    };
    let mut first = Vec::with_capacity(want);
    while first.len() < want {
        let x = it
            .next()
            .ok_or(OdaError::StreamExhausted("the initial centroids were drawn"))?;
        div.validate(&x)?;
        first.push(x);
    }
    let mut centroids = match init {
        SvqInit::FirstDraws => first,
        SvqInit::FarthestOfFirst(_) => {
            let mut chosen = vec![first[0].clone()];
            while chosen.len() < k {
                let far = first
                    .iter()
                    .map(|x| nearest(div, x, &chosen).1)
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .expect("non-empty");
                chosen.push(first[far].clone());
            }
            chosen
        }
    };
    let mut wins = vec![0u64; k];
    let mut consumed = want as u64;
    let every = eval_every.max(1);
    let mut curve = vec![(consumed, distortion(div, eval, &centroids))];
    for x in it {
        div.validate(&x)?;
        let (j, _) = nearest(div, &x, &centroids);
        let alpha = step(wins[j]);
        wins[j] += 1;
        for (c, v) in centroids[j].iter_mut().zip(&x) {
            *c += alpha * (v - *c);
        }
        consumed += 1;
        if consumed.is_multiple_of(every) {
            curve.push((consumed, distortion(div, eval, &centroids)));
        }
    }
    if curve.last().is_none_or(|c| c.0 != consumed) {
        curve.push((consumed, distortion(div, eval, &centroids)));
    }
    Ok(BaselineResult {
        k,
        centroids,
        distortion_curve: curve,
        wall_time: start.elapsed(),
    })
}

/// Batch deterministic annealing: full-dataset soft assignments with
/// uniform priors, centroid re-estimation until the soft distortion moves
/// less than `eps_c`, then merge, cool and perturb, with the same
/// thresholds as the online engine. Every pass counts `|data|` accesses.
pub fn batch_da_fit(
    div: &Divergence,
    data: &[Vec<f64>],
    schedule: &Schedule,
    seed: u64,
) -> Result<BaselineResult> {
    batch_da_fit_with(div, data, schedule, seed, 500)
}

pub fn batch_da_fit_with(
    div: &Divergence,
    data: &[Vec<f64>],
    schedule: &Schedule,
    seed: u64,
    max_passes_per_level: usize,
) -> Result<BaselineResult> {
    if data.is_empty() {
        return Err(OdaError::InvalidArgument("empty dataset".into()));
    }
    schedule.validate()?;
    validate_all(div, data)?;
    let start = Instant::now();
    let mut rng = rng::stream(seed, 0xda);
    let n = data.len();
    let dim = div.dimension;
    let mean: Vec<f64> = (0..dim)
        .map(|j| data.iter().map(|x| x[j]).sum::<f64>() / n as f64)
        .collect();
    let mut centroids = vec![mean];
    let mut t = schedule.t_init;
    let mut consumed = 0u64;
    let mut curve = Vec::new();
    let mut logits = Vec::new();
    loop {
        // Perturb, bounded by k_max.
        let budget = centroids.len().min(schedule.k_max.saturating_sub(centroids.len()));
        let mut next = Vec::with_capacity(centroids.len() + budget);
        for (i, c) in centroids.iter().enumerate() {
            if i < budget {
                let u: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = u.iter().map(|v: &f64| v * v).sum::<f64>().sqrt().max(1e-12);
                let mut delta = schedule.delta;
                loop {
                    let plus: Vec<f64> = c.iter().zip(&u).map(|(m, v)| m + delta * v / norm).collect();
                    let minus: Vec<f64> = c.iter().zip(&u).map(|(m, v)| m - delta * v / norm).collect();
                    if (div.contains(&plus) && div.contains(&minus)) || delta < 1e-300 {
                        next.push(plus);
                        next.push(minus);
                        break;
                    }
                    delta *= 0.5;
                }
            } else {
                next.push(c.clone());
            }
        }
        centroids = next;
        let mut prev_soft = f64::INFINITY;
        for _ in 0..max_passes_per_level {
            let k = centroids.len();
            let mut sums = vec![vec![0.0; dim]; k];
            let mut mass = vec![0.0; k];
            let mut soft = 0.0;
            for x in data {
                logits.clear();
                logits.extend(centroids.iter().map(|c| -div.distance_unchecked(x, c) / t));
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for l in logits.iter_mut() {
                    *l = (*l - max).exp();
                    z += *l;
                }
                for (i, l) in logits.iter().enumerate() {
                    let p = l / z;
                    mass[i] += p;
                    soft += p * div.distance_unchecked(x, &centroids[i]);
                    for (s, v) in sums[i].iter_mut().zip(x) {
                        *s += p * v;
                    }
                }
            }
            consumed += n as u64;
            soft /= n as f64;
            let mut updated = Vec::with_capacity(k);
            for (s, m) in sums.into_iter().zip(mass) {
                if m > 0.0 {
                    updated.push(s.into_iter().map(|v| v / m).collect::<Vec<f64>>());
                }
            }
            centroids = updated;
            curve.push((consumed, distortion(div, data, &centroids)));
            if schedule.threshold.passes(t, (prev_soft - soft).abs(), schedule.eps_c) {
                break;
            }
            prev_soft = soft;
        }
        // Merge coincident centroids.
        let mut kept: Vec<Vec<f64>> = Vec::with_capacity(centroids.len());
        for c in centroids {
            if !kept
                .iter()
                .any(|s| schedule.threshold.passes(t, div.distance_unchecked(s, &c), schedule.eps_n))
            {
                kept.push(c);
            }
        }
        centroids = kept;
        t = schedule.next_temperature(t);
        if t < schedule.t_min || centroids.len() >= schedule.k_max {
            break;
        }
    }
    Ok(BaselineResult {
        k: centroids.len(),
        centroids,
        distortion_curve: curve,
        wall_time: start.elapsed(),
    })
}
