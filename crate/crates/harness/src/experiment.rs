//! Per-run pipelines shared by the commands and the acceptance tests.
//!
//! Master run `i` draws its initial state and dynamics from
//! `SeedKey::new(master_seed).rng(i)`, the same stream `simulate_batch`
//! uses, so every command sees the same master trajectories. Continuations
//! for a snapshot at step `n` use lane `(n << 8) | kind` under run `i`.

use rspnet::confint::{composite_interval, ConfidenceInterval};
use rspnet::estimate::{mc_estimate_with_kernel, PolarizationEstimate};
use rspnet::exec::map_indexed;
use rspnet::netgraph::ValidatedMatrix;
use rspnet::rspsim::{simulate_with_rng, InitialCondition, Kernel, NetworkSnapshot, Trajectory};
use rspnet::{Execution, ReinforcementSequence, SeedKey};

use crate::config::{EstimationBlock, ExperimentConfig};
use crate::error::{runtime, HarnessError};

pub const LANE_MASTER: u64 = 0;
pub const LANE_CONTINUATION: u64 = 1;
pub const LANE_TARGET: u64 = 2;

pub fn lane(kind: u64, n: usize) -> u64 {
    ((n as u64) << 8) | kind
}

/// Everything a pipeline needs, built once from a config.
pub struct Context {
    pub matrix: ValidatedMatrix,
    pub seq: ReinforcementSequence,
    pub z0: InitialCondition,
    pub exec: Execution,
    pub master_seed: u64,
}

impl Context {
    pub fn new(cfg: &ExperimentConfig) -> Result<Context, HarnessError> {
        let matrix = cfg.build_matrix()?;
        let seq = cfg.build_sequence()?;
        let z0 = cfg.initial_condition(matrix.n_agents())?;
        Ok(Context {
            matrix,
            seq,
            z0,
            exec: cfg.replication.execution,
            master_seed: cfg.replication.master_seed,
        })
    }

    pub fn kernel(&self) -> Kernel<'_> {
        Kernel::new(&self.matrix, &self.seq)
    }

    pub fn master_key(&self) -> SeedKey {
        SeedKey::new(self.master_seed).with_lane(LANE_MASTER)
    }

    pub fn run_key(&self, run: usize) -> SeedKey {
        SeedKey::new(self.master_seed).with_run(run as u64)
    }

    /// Master run `run` to `n_steps`, recording `checkpoints`.
    pub fn master_trajectory(
        &self,
        run: usize,
        n_steps: usize,
        checkpoints: &[usize],
    ) -> Result<Trajectory, HarnessError> {
        let kernel = self.kernel();
        let key = self.master_key();
        let mut rng = key.rng(run as u64);
        let z = self.z0.sample(self.matrix.n_agents(), &mut rng);
        let mut traj =
            simulate_with_rng(&kernel, &z, n_steps, checkpoints, false, &mut rng).map_err(runtime)?;
        traj.seed = Some(key);
        traj.replication = run as u64;
        Ok(traj)
    }
}

/// What to compute for each master run.
#[derive(Debug, Clone)]
pub struct Plan {
    pub steps: Vec<usize>,
    /// Also estimate at the long horizon from the same snapshot.
    pub refine: bool,
    /// Record the master trajectory's state at the long horizon.
    pub proxy: bool,
}

#[derive(Debug, Clone)]
pub struct SnapshotOutcome {
    pub snapshot: NetworkSnapshot,
    pub estimate: PolarizationEstimate,
    pub interval: ConfidenceInterval,
    pub target: Option<PolarizationEstimate>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run: usize,
    pub snapshots: Vec<SnapshotOutcome>,
    /// `(step, Z̃)` of the master trajectory at the long horizon.
    pub proxy: Option<(usize, f64)>,
}

impl RunOutcome {
    /// Outcome at snapshot step `n`.
    pub fn at(&self, n: usize) -> Option<&SnapshotOutcome> {
        self.snapshots.iter().find(|s| s.snapshot.step == n)
    }

    /// Whether the long-horizon proxy lies in the interval at step `n`.
    pub fn covered(&self, n: usize, barrier_eps: f64) -> Option<bool> {
        let (_, z) = self.proxy?;
        Some(self.at(n)?.interval.contains(z, barrier_eps))
    }
}

pub fn run_master(
    ctx: &Context,
    est: &EstimationBlock,
    run: usize,
    plan: &Plan,
) -> Result<RunOutcome, HarnessError> {
    let mut checkpoints = plan.steps.clone();
    if plan.proxy {
        checkpoints.push(est.long_horizon);
    }
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let n_steps = *checkpoints.last().expect("at least one step");
    let traj = ctx.master_trajectory(run, n_steps, &checkpoints)?;
    let kernel = ctx.kernel();
    let run_key = ctx.run_key(run);
    let mut snapshots = Vec::with_capacity(plan.steps.len());
    for &n in &plan.steps {
        let snap = traj
            .snapshots
            .iter()
            .find(|s| s.step == n)
            .cloned()
            .expect("checkpoint recorded");
        let estimate = mc_estimate_with_kernel(
            &kernel,
            &snap,
            est.horizon_for(n),
            est.k,
            run_key.with_lane(lane(LANE_CONTINUATION, n)),
            ctx.exec,
        )
        .map_err(runtime)?;
        let interval = composite_interval(&estimate, est.alpha).map_err(runtime)?;
        let target = if plan.refine {
            let e = mc_estimate_with_kernel(
                &kernel,
                &snap,
                est.long_horizon,
                est.k,
                run_key.with_lane(lane(LANE_TARGET, n)),
                ctx.exec,
            )
            .map_err(runtime)?;
            Some(e)
        } else {
            None
        };
        snapshots.push(SnapshotOutcome {
            snapshot: snap,
            estimate,
            interval,
            target,
        });
    }
    let proxy = plan.proxy.then(|| {
        let s = traj
            .snapshots
            .iter()
            .find(|s| s.step == est.long_horizon)
            .expect("proxy checkpoint recorded");
        (s.step, s.z_tilde)
    });
    Ok(RunOutcome {
        run,
        snapshots,
        proxy,
    })
}

/// Runs `0..runs`, collected in run order.
pub fn run_all(
    ctx: &Context,
    est: &EstimationBlock,
    runs: usize,
    plan: &Plan,
) -> Result<Vec<RunOutcome>, HarnessError> {
    map_indexed(ctx.exec, runs, |i| run_master(ctx, est, i, plan))
        .into_iter()
        .collect()
}

/// Summary of intervals at one snapshot step across runs.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CoverageSummary {
    pub n: usize,
    pub runs: usize,
    pub covered: usize,
    pub coverage: f64,
    pub single_part: usize,
    /// Count per case 1..=7.
    pub cases: [usize; 7],
    pub normalized: usize,
}

pub fn coverage_summary(outcomes: &[RunOutcome], n: usize, barrier_eps: f64) -> CoverageSummary {
    let mut s = CoverageSummary {
        n,
        runs: 0,
        covered: 0,
        coverage: 0.0,
        single_part: 0,
        cases: [0; 7],
        normalized: 0,
    };
    for o in outcomes {
        let Some(at) = o.at(n) else { continue };
        s.runs += 1;
        if o.covered(n, barrier_eps) == Some(true) {
            s.covered += 1;
        }
        if at.interval.part_count() == 1 {
            s.single_part += 1;
        }
        s.cases[at.interval.case_id as usize - 1] += 1;
        if at.estimate.normalized {
            s.normalized += 1;
        }
    }
    if s.runs > 0 {
        s.coverage = s.covered as f64 / s.runs as f64;
    }
    s
}
