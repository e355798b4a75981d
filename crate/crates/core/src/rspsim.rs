//! Forward simulation of the network dynamics
//! `Z_{n+1} = (1 - r_n) Z_n + r_n X_{n+1}` and conditional continuations
//! from an observed snapshot.
//!
//! The update is evaluated as `Z + r (X - Z)`, which keeps exact barriers
//! exact: a component at 1 that draws 1 stays at 1 bit for bit. Once every
//! component sits at 0 (or every one at 1) the state is absorbing and the
//! remaining steps are skipped.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_indexed, Execution};
use crate::netgraph::ValidatedMatrix;
use crate::seq::ReinforcementSequence;
use crate::streams::SeedKey;

pub const DEFAULT_NEAR_BARRIER_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("initial condition invalid: {0}")]
    InvalidInitialCondition(String),
    #[error("horizon {t} is not after snapshot step {step}")]
    HorizonNotAfterSnapshot { t: usize, step: usize },
    #[error("checkpoint {checkpoint} beyond n_steps = {n_steps}")]
    CheckpointBeyondHorizon { checkpoint: usize, n_steps: usize },
}

/// Which barrier a state sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Barrier {
    Zero,
    One,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSnapshot {
    pub step: usize,
    pub z: Vec<f64>,
    pub z_tilde: f64,
}

impl NetworkSnapshot {
    pub fn new(
        matrix: &ValidatedMatrix,
        step: usize,
        z: Vec<f64>,
    ) -> Result<NetworkSnapshot, SimError> {
        check_state(matrix, &z)?;
        let z_tilde = z_tilde(&z_weights(matrix), &z);
        Ok(NetworkSnapshot { step, z, z_tilde })
    }

    /// Exact barrier membership: every component equal to 0, or every one
    /// equal to 1.
    pub fn barrier(&self) -> Option<Barrier> {
        exact_barrier(&self.z)
    }

    /// Barrier proximity of `z_tilde` within `eps`.
    pub fn near_barrier(&self, eps: f64) -> Option<Barrier> {
        if self.z_tilde <= eps {
            Some(Barrier::Zero)
        } else if self.z_tilde >= 1.0 - eps {
            Some(Barrier::One)
        } else {
            None
        }
    }

    pub fn sync_gap(&self) -> f64 {
        sync_gap(&self.z)
    }
}

/// Accumulated float-drift corrections.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClampStats {
    /// Bernoulli means that fell outside `[0, 1]`.
    pub prob_events: u64,
    /// Components of `Z` that fell outside `[0, 1]` after an update.
    pub state_events: u64,
    pub total_magnitude: f64,
    pub max_magnitude: f64,
}

impl ClampStats {
    fn record(&mut self, magnitude: f64, prob: bool) {
        if prob {
            self.prob_events += 1;
        } else {
            self.state_events += 1;
        }
        self.total_magnitude += magnitude;
        self.max_magnitude = self.max_magnitude.max(magnitude);
    }

    pub fn merge(&mut self, other: &ClampStats) {
        self.prob_events += other.prob_events;
        self.state_events += other.state_events;
        self.total_magnitude += other.total_magnitude;
        self.max_magnitude = self.max_magnitude.max(other.max_magnitude);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<NetworkSnapshot>,
    pub final_state: NetworkSnapshot,
    /// `actions[k]` holds `X_{k+1}` as 0/1 bytes, when retained.
    pub actions: Option<Vec<Vec<u8>>>,
    pub seed: Option<SeedKey>,
    pub replication: u64,
    pub clamp: ClampStats,
}

/// Initial condition for batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Fixed { z: Vec<f64> },
    /// Independent `Uniform(0, 1)` components, drawn from the replication's
    /// own stream before the first step.
    UniformProduct,
}

impl InitialCondition {
    pub fn mean(&self, n_agents: usize) -> Vec<f64> {
        match self {
            InitialCondition::Fixed { z } => z.clone(),
            InitialCondition::UniformProduct => vec![0.5; n_agents],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n_agents: usize, rng: &mut R) -> Vec<f64> {
        match self {
            InitialCondition::Fixed { z } => z.clone(),
            InitialCondition::UniformProduct => (0..n_agents).map(|_| rng.random()).collect(),
        }
    }
}

/// Weights defining `Z̃ = Σ v_l Z_l`: the left eigenvector when the matrix
/// is irreducible, the uniform vector otherwise (there is no unique `v`).
pub fn z_weights(matrix: &ValidatedMatrix) -> Vec<f64> {
    match matrix.left_eigenvector() {
        Some(v) => v.to_vec(),
        None => vec![1.0 / matrix.n_agents() as f64; matrix.n_agents()],
    }
}

fn z_tilde(v: &[f64], z: &[f64]) -> f64 {
    v.iter()
        .zip(z)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

fn check_state(matrix: &ValidatedMatrix, z: &[f64]) -> Result<(), SimError> {
    if z.len() != matrix.n_agents() {
        return Err(SimError::InvalidInitialCondition(format!(
            "expected {} components, got {}",
            matrix.n_agents(),
            z.len()
        )));
    }
    if let Some((i, x)) = z.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
        return Err(SimError::InvalidInitialCondition(format!(
            "z[{i}] = {x} outside [0, 1]"
        )));
    }
    Ok(())
}

fn exact_barrier(z: &[f64]) -> Option<Barrier> {
    let first = *z.first()?;
    if first == 0.0 && z.iter().all(|&x| x == 0.0) {
        Some(Barrier::Zero)
    } else if first == 1.0 && z.iter().all(|&x| x == 1.0) {
        Some(Barrier::One)
    } else {
        None
    }
}

/// `max_{l1,l2} |z[l1] - z[l2]|`.
pub fn sync_gap(z: &[f64]) -> f64 {
    let (lo, hi) = z
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if z.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Precomputed step data shared by every trajectory on one network.
#[derive(Debug, Clone)]
pub struct Kernel<'a> {
    n: usize,
    /// `W` transposed, row-major: row `l` holds the weights into agent `l`.
    wt: Vec<f64>,
    v: Vec<f64>,
    seq: &'a ReinforcementSequence,
}

impl<'a> Kernel<'a> {
    pub fn new(matrix: &ValidatedMatrix, seq: &'a ReinforcementSequence) -> Kernel<'a> {
        Kernel {
            n: matrix.n_agents(),
            wt: matrix.transposed(),
            v: z_weights(matrix),
            seq,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn seq(&self) -> &ReinforcementSequence {
        self.seq
    }

    pub fn z_tilde(&self, z: &[f64]) -> f64 {
        z_tilde(&self.v, z)
    }

    pub fn snapshot(&self, step: usize, z: &[f64]) -> NetworkSnapshot {
        NetworkSnapshot {
            step,
            z: z.to_vec(),
            z_tilde: self.z_tilde(z),
        }
    }

    /// One step from time `n`. Returns `true` when the new state is an exact
    /// barrier. `x` receives the drawn actions.
    #[inline]
    fn step_raw<R: Rng + ?Sized>(
        &self,
        z: &mut [f64],
        p: &mut [f64],
        x: &mut [u8],
        n: usize,
        rng: &mut R,
        stats: &mut ClampStats,
    ) -> bool {
        let r = self.seq.r(n);
        for (l, pl) in p.iter_mut().enumerate() {
            let row = &self.wt[l * self.n..(l + 1) * self.n];
            let mut acc = 0.0;
            for (w, zl) in row.iter().zip(z.iter()) {
                acc += w * zl;
            }
            if !(0.0..=1.0).contains(&acc) {
                let c = acc.clamp(0.0, 1.0);
                stats.record((acc - c).abs(), true);
                acc = c;
            }
            *pl = acc;
        }
        let mut edge = false;
        for ((zl, &pl), xl) in z.iter_mut().zip(p.iter()).zip(x.iter_mut()) {
            let draw = rng.random::<f64>() < pl;
            *xl = draw as u8;
            let target = f64::from(draw as u8);
            let mut next = *zl + r * (target - *zl);
            if !(0.0..=1.0).contains(&next) {
                let c = next.clamp(0.0, 1.0);
                stats.record((next - c).abs(), false);
                next = c;
            }
            edge |= next == 0.0 || next == 1.0;
            *zl = next;
        }
        edge && exact_barrier(z).is_some()
    }

    /// Advances `z` from step `from` to step `to`.
    pub fn advance<R: Rng + ?Sized>(
        &self,
        z: &mut [f64],
        from: usize,
        to: usize,
        rng: &mut R,
        stats: &mut ClampStats,
    ) {
        if exact_barrier(z).is_some() {
            return;
        }
        let mut p = vec![0.0; self.n];
        let mut x = vec![0u8; self.n];
        for n in from..to {
            if self.step_raw(z, &mut p, &mut x, n, rng, stats) {
                return;
            }
        }
    }
}

/// One step of the dynamics from `state`.
pub fn step<R: Rng + ?Sized>(
    state: &NetworkSnapshot,
    matrix: &ValidatedMatrix,
    seq: &ReinforcementSequence,
    rng: &mut R,
) -> NetworkSnapshot {
    let kernel = Kernel::new(matrix, seq);
    let mut z = state.z.clone();
    let mut stats = ClampStats::default();
    kernel.advance(&mut z, state.step, state.step + 1, rng, &mut stats);
    kernel.snapshot(state.step + 1, &z)
}

fn normalize_checkpoints(checkpoints: &[usize], n_steps: usize) -> Result<Vec<usize>, SimError> {
    if let Some(&c) = checkpoints.iter().find(|&&c| c > n_steps) {
        return Err(SimError::CheckpointBeyondHorizon {
            checkpoint: c,
            n_steps,
        });
    }
    let mut out: Vec<usize> = if checkpoints.is_empty() {
        vec![0, n_steps]
    } else {
        checkpoints.to_vec()
    };
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Simulates `n_steps` steps from `z0`, recording the state at each
/// checkpoint (at `0` and `n_steps` when none are given).
pub fn simulate_with_rng<R: Rng + ?Sized>(
    kernel: &Kernel<'_>,
    z0: &[f64],
    n_steps: usize,
    checkpoints: &[usize],
    retain_actions: bool,
    rng: &mut R,
) -> Result<Trajectory, SimError> {
    if z0.len() != kernel.n {
        return Err(SimError::InvalidInitialCondition(format!(
            "expected {} components, got {}",
            kernel.n,
            z0.len()
        )));
    }
    if let Some((i, x)) = z0.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
        return Err(SimError::InvalidInitialCondition(format!(
            "z0[{i}] = {x} outside [0, 1]"
        )));
    }
    let checkpoints = normalize_checkpoints(checkpoints, n_steps)?;
    let mut z = z0.to_vec();
    let mut stats = ClampStats::default();
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let mut actions = retain_actions.then(|| Vec::with_capacity(n_steps));
    let mut p = vec![0.0; kernel.n];
    let mut x = vec![0u8; kernel.n];
    let mut absorbed = exact_barrier(&z).is_some();
    let mut n = 0;
    for &c in &checkpoints {
        if let Some(acts) = actions.as_mut() {
            while n < c {
                if absorbed {
                    acts.push(z.iter().map(|&zl| zl as u8).collect());
                } else {
                    absorbed = kernel.step_raw(&mut z, &mut p, &mut x, n, rng, &mut stats);
                    acts.push(x.clone());
                }
                n += 1;
            }
        } else {
            if !absorbed {
                while n < c {
                    absorbed = kernel.step_raw(&mut z, &mut p, &mut x, n, rng, &mut stats);
                    n += 1;
                    if absorbed {
                        break;
                    }
                }
            }
            n = c;
        }
        snapshots.push(kernel.snapshot(c, &z));
    }
    if let Some(acts) = actions.as_mut() {
        while n < n_steps {
            if absorbed {
                acts.push(z.iter().map(|&zl| zl as u8).collect());
            } else {
                absorbed = kernel.step_raw(&mut z, &mut p, &mut x, n, rng, &mut stats);
                acts.push(x.clone());
            }
            n += 1;
        }
    } else if !absorbed && n < n_steps {
        kernel.advance(&mut z, n, n_steps, rng, &mut stats);
    }
    Ok(Trajectory {
        snapshots,
        final_state: kernel.snapshot(n_steps, &z),
        actions,
        seed: None,
        replication: 0,
        clamp: stats,
    })
}

/// Simulates one replication on the stream `key.rng(replication)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    matrix: &ValidatedMatrix,
    seq: &ReinforcementSequence,
    z0: &[f64],
    n_steps: usize,
    checkpoints: &[usize],
    key: SeedKey,
    replication: u64,
    retain_actions: bool,
) -> Result<Trajectory, SimError> {
    let kernel = Kernel::new(matrix, seq);
    let mut rng = key.rng(replication);
    let mut traj = simulate_with_rng(&kernel, z0, n_steps, checkpoints, retain_actions, &mut rng)?;
    traj.seed = Some(key);
    traj.replication = replication;
    Ok(traj)
}

/// Simulates replications `0..runs`, each on its own stream of `key`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_batch(
    matrix: &ValidatedMatrix,
    seq: &ReinforcementSequence,
    z0: &InitialCondition,
    n_steps: usize,
    checkpoints: &[usize],
    key: SeedKey,
    runs: usize,
    exec: Execution,
) -> Result<Vec<Trajectory>, SimError> {
    if let InitialCondition::Fixed { z } = z0 {
        check_state(matrix, z)?;
    }
    normalize_checkpoints(checkpoints, n_steps)?;
    let kernel = Kernel::new(matrix, seq);
    map_indexed(exec, runs, |i| {
        let mut rng = key.rng(i as u64);
        let z = z0.sample(kernel.n, &mut rng);
        let mut traj = simulate_with_rng(&kernel, &z, n_steps, checkpoints, false, &mut rng)?;
        traj.seed = Some(key);
        traj.replication = i as u64;
        Ok(traj)
    })
    .into_iter()
    .collect()
}

/// One conditional realization of the state at time `t` given `snapshot`.
pub fn continue_from<R: Rng + ?Sized>(
    snapshot: &NetworkSnapshot,
    matrix: &ValidatedMatrix,
    seq: &ReinforcementSequence,
    t: usize,
    rng: &mut R,
) -> Result<NetworkSnapshot, SimError> {
    let kernel = Kernel::new(matrix, seq);
    continue_with_kernel(&kernel, snapshot, t, rng)
}

pub fn continue_with_kernel<R: Rng + ?Sized>(
    kernel: &Kernel<'_>,
    snapshot: &NetworkSnapshot,
    t: usize,
    rng: &mut R,
) -> Result<NetworkSnapshot, SimError> {
    if t <= snapshot.step {
        return Err(SimError::HorizonNotAfterSnapshot {
            t,
            step: snapshot.step,
        });
    }
    let mut z = snapshot.z.clone();
    let mut stats = ClampStats::default();
    kernel.advance(&mut z, snapshot.step, t, rng, &mut stats);
    Ok(kernel.snapshot(t, &z))
}

/// `k` conditional realizations at time `t`, replication `j` on stream
/// `key.rng(j)`.
pub fn continue_batch(
    kernel: &Kernel<'_>,
    snapshot: &NetworkSnapshot,
    t: usize,
    key: SeedKey,
    k: usize,
    exec: Execution,
) -> Result<Vec<NetworkSnapshot>, SimError> {
    if t <= snapshot.step {
        return Err(SimError::HorizonNotAfterSnapshot {
            t,
            step: snapshot.step,
        });
    }
    Ok(map_indexed(exec, k, |j| {
        let mut rng = key.rng(j as u64);
        continue_with_kernel(kernel, snapshot, t, &mut rng).expect("horizon checked")
    }))
}

/// Proportions `H_n / s_n` of the urn whose additions are `α_{n+1} Y_{n+1}`
/// of the first colour and `α_{n+1}(1 - Y_{n+1})` of the second, starting
/// from `H_0 = m0 s0`. The output has `y.len() + 1` entries, the first being
/// `m0`.
pub fn urn_replay(seq: &ReinforcementSequence, s0: f64, y: &[f64], m0: f64) -> Vec<f64> {
    let mut h = m0 * s0;
    let mut s = s0;
    let mut out = Vec::with_capacity(y.len() + 1);
    out.push(m0);
    for (n, &yn) in y.iter().enumerate() {
        let r = seq.r(n);
        let alpha = s * r / (1.0 - r);
        h += alpha * yn;
        s += alpha;
        if s > 1e280 {
            h /= s;
            s = 1.0;
        }
        out.push(h / s);
    }
    out
}

/// The recursion `M_{n+1} = (1 - r_n) M_n + r_n Y_{n+1}` on the same inputs
/// as [`urn_replay`].
pub fn direct_replay(seq: &ReinforcementSequence, y: &[f64], m0: f64) -> Vec<f64> {
    let mut m = m0;
    let mut out = Vec::with_capacity(y.len() + 1);
    out.push(m0);
    for (n, &yn) in y.iter().enumerate() {
        let r = seq.r(n);
        m = (1.0 - r) * m + r * yn;
        out.push(m);
    }
    out
}
