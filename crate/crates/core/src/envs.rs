//! Environments: the cart-pole simulator and a small deterministic MDP used
//! as an exact oracle for Q-learning.

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OdaError, Result};

/// Twelve degrees in radians.
pub const THETA_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;
pub const X_LIMIT: f64 = 2.4;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartPoleState {
    pub x: f64,
    pub theta: f64,
    pub x_dot: f64,
    pub theta_dot: f64,
}

impl CartPoleState {
    pub fn new(x: f64, theta: f64, x_dot: f64, theta_dot: f64) -> Self {
        Self {
            x,
            theta,
            x_dot,
            theta_dot,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.x, self.theta, self.x_dot, self.theta_dot]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.theta.is_finite() && self.x_dot.is_finite() && self.theta_dot.is_finite()
    }

    /// `|theta| > 12 deg` or `|x| > 2.4 m`.
    pub fn failed(&self) -> bool {
        self.theta.abs() > THETA_LIMIT || self.x.abs() > X_LIMIT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub g: f64,
    pub m_c: f64,
    pub m: f64,
    /// Half-pole length.
    pub l: f64,
    pub mu_c: f64,
    pub mu_p: f64,
    pub tau: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            g: 9.8,
            m_c: 1.0,
            m: 0.1,
            l: 0.5,
            mu_c: 0.0005,
            mu_p: 0.000002,
            tau: 0.02,
        }
    }
}

impl PhysicsParams {
    pub fn frictionless() -> Self {
        Self {
            mu_c: 0.0,
            mu_p: 0.0,
            ..Self::default()
        }
    }

    /// Total mechanical energy, pivot-height reference for the pole.
    pub fn energy(&self, s: &CartPoleState) -> f64 {
        let total = self.m_c + self.m;
        0.5 * total * s.x_dot * s.x_dot
            + self.m * self.l * s.x_dot * s.theta_dot * s.theta.cos()
            + (2.0 / 3.0) * self.m * self.l * self.l * s.theta_dot * s.theta_dot
            + self.m * self.g * self.l * s.theta.cos()
    }
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Uniform `[-0.05, 0.05]` draw for every component.
pub fn reset<R: Rng + ?Sized>(rng: &mut R) -> CartPoleState {
    let mut u = || rng.random_range(-0.05..=0.05);
    CartPoleState::new(u(), u(), u(), u())
}

/// Angular and linear accelerations; the angular one depends on the state
/// only and is substituted into the linear one.
pub fn accelerations(s: &CartPoleState, force: f64, p: &PhysicsParams) -> (f64, f64) {
    let total = p.m_c + p.m;
    let (sin, cos) = s.theta.sin_cos();
    let friction = p.mu_c * sgn(s.x_dot);
    let tmp = (-force - p.m * p.l * s.theta_dot * s.theta_dot * sin + friction) / total;
    let theta_acc = (p.g * sin + cos * tmp - p.mu_p * s.theta_dot / (p.m * p.l))
        / (p.l * (4.0 / 3.0 - p.m * cos * cos / total));
    let x_acc = (force + p.m * p.l * (s.theta_dot * s.theta_dot * sin - theta_acc * cos) - friction) / total;
    (theta_acc, x_acc)
}

/// One explicit Euler step of length `tau`.
pub fn step(s: &CartPoleState, force: f64, p: &PhysicsParams) -> (CartPoleState, bool) {
    let (theta_acc, x_acc) = accelerations(s, force, p);
    let next = CartPoleState {
        x: s.x + p.tau * s.x_dot,
        theta: s.theta + p.tau * s.theta_dot,
        x_dot: s.x_dot + p.tau * x_acc,
        theta_dot: s.theta_dot + p.tau * theta_acc,
    };
    assert!(next.is_finite(), "cart-pole produced a non-finite state: {next:?}");
    let failed = next.failed();
    (next, failed)
}

/// One trajectory row for CSV dumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: usize,
    pub state: CartPoleState,
    pub force: f64,
    pub failed: bool,
}

pub fn write_trajectory<W: Write>(mut w: W, rows: &[TrajectoryRow]) -> io::Result<()> {
    writeln!(w, "t,x,theta,x_dot,theta_dot,force,failed")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.t, r.state.x, r.state.theta, r.state.x_dot, r.state.theta_dot, r.force, r.failed as u8
        )?;
    }
    Ok(())
}

/// A finite deterministic MDP given by transition and cost tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMdp {
    /// `next[state][action]`.
    pub next: Vec<Vec<usize>>,
    /// `cost[state][action]`, non-negative.
    pub cost: Vec<Vec<f64>>,
}

impl SyntheticMdp {
    pub fn new(next: Vec<Vec<usize>>, cost: Vec<Vec<f64>>) -> Result<Self> {
        if next.len() != cost.len() || next.iter().zip(&cost).any(|(a, b)| a.len() != b.len()) {
            return Err(OdaError::InvalidArgument("transition and cost tables differ in shape".into()));
        }
        let n = next.len();
        if let Some(&bad) = next.iter().flatten().find(|&&s| s >= n) {
            return Err(OdaError::Index { index: bad, len: n });
        }
        if cost.iter().flatten().any(|c| !(*c >= 0.0)) {
            return Err(OdaError::InvalidArgument("costs must be non-negative".into()));
        }
        Ok(Self { next, cost })
    }

    pub fn states(&self) -> usize {
        self.next.len()
    }

    pub fn actions(&self, state: usize) -> usize {
        self.next.get(state).map_or(0, Vec::len)
    }

    pub fn step(&self, state: usize, action: usize) -> Result<(usize, f64)> {
        let row = self.next.get(state).ok_or(OdaError::Index {
            index: state,
            len: self.next.len(),
        })?;
        let next = *row.get(action).ok_or(OdaError::Index {
            index: action,
            len: row.len(),
        })?;
        Ok((next, self.cost[state][action]))
    }
}
