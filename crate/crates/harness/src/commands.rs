//! One function per CLI subcommand. Each writes its files into the output
//! directory and returns the index record.

use std::path::Path;

use rspnet::estimate::min_horizon;
use rspnet::regime::{classify, diagnose_conditions, PolarizationClass};
use rspnet::rspsim::simulate_batch;
use serde::Serialize;
use serde_json::json;

use crate::config::{EstimationBlock, ExperimentConfig};
use crate::error::{runtime, HarnessError};
use crate::experiment::{coverage_summary, run_all, Context, Plan, RunOutcome};
use crate::output::{Index, OutputDir};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Regime,
    Estimate,
    Interval,
    Figure1,
    Figure2,
    Coverage,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Regime => "regime",
            Command::Estimate => "estimate",
            Command::Interval => "interval",
            Command::Figure1 => "figure1",
            Command::Figure2 => "figure2",
            Command::Coverage => "coverage",
        }
    }
}

/// Runs `command` on a rayon pool of `threads` workers (default: all
/// available) and writes into `out`.
pub fn run(
    command: Command,
    cfg: &ExperimentConfig,
    out: &Path,
    threads: Option<usize>,
) -> Result<Index, HarnessError> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(runtime)?;
    pool.install(|| match command {
        Command::Simulate => cmd_simulate(cfg, out),
        Command::Regime => cmd_regime(cfg, out),
        Command::Estimate => cmd_estimation(command, cfg, out),
        Command::Interval => cmd_estimation(command, cfg, out),
        Command::Figure1 => cmd_estimation(command, cfg, out),
        Command::Figure2 => cmd_estimation(command, cfg, out),
        Command::Coverage => cmd_estimation(command, cfg, out),
    })
}

/// `THREADS` from the environment wins over the config key.
pub fn resolve_threads(cfg: &ExperimentConfig, env: Option<&str>) -> Result<Option<usize>, HarnessError> {
    match env {
        Some(s) if !s.trim().is_empty() => match s.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(HarnessError::Config(format!("THREADS must be a positive integer, got {s:?}"))),
            Ok(t) => Ok(Some(t)),
        },
        _ => Ok(cfg.replication.threads),
    }
}

fn sequence_notes(ctx: &Context) -> Vec<String> {
    let mut notes = Vec::new();
    let capped = ctx.seq.capped_terms();
    if capped > 0 {
        notes.push(format!(
            "the first {capped} value(s) of r_n exceeded the cap and were replaced by {}",
            ctx.seq.cap()
        ));
    }
    notes
}

pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Index, HarnessError> {
    let ctx = Context::new(cfg)?;
    let sim = &cfg.simulation;
    let runs = simulate_batch(
        &ctx.matrix,
        &ctx.seq,
        &ctx.z0,
        sim.n_steps,
        &sim.checkpoints,
        ctx.master_key(),
        cfg.replication.runs,
        ctx.exec,
    )
    .map_err(runtime)?;
    let hash = cfg.hash();
    let n = ctx.matrix.n_agents();
    let mut header: Vec<String> = ["run", "step", "z_tilde", "sync_gap"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=n).map(|i| format!("z{i}")));
    header.extend(["master_seed", "config_hash"].iter().map(|s| s.to_string()));
    let mut rows = Vec::new();
    let mut clamp_events = 0;
    for (i, traj) in runs.iter().enumerate() {
        clamp_events += traj.clamp.prob_events + traj.clamp.state_events;
        for s in &traj.snapshots {
            let mut row = vec![i.to_string(), s.step.to_string(), s.z_tilde.to_string(), s.sync_gap().to_string()];
            row.extend(s.z.iter().map(|x| x.to_string()));
            row.push(ctx.master_seed.to_string());
            row.push(hash.clone());
            rows.push(row);
        }
    }
    let mut dir = OutputDir::create(out)?;
    dir.write_table("trajectories.csv", &header, &rows)?;
    let notes = sequence_notes(&ctx);
    dir.finish(
        "simulate",
        hash,
        ctx.master_seed,
        notes,
        json!({ "runs": runs.len(), "rows": rows.len(), "clamp_events": clamp_events }),
    )
}

pub fn cmd_regime(cfg: &ExperimentConfig, out: &Path) -> Result<Index, HarnessError> {
    let ctx = Context::new(cfg)?;
    let mean = ctx.z0.mean(ctx.matrix.n_agents());
    let report = classify(&ctx.seq, &mean, &ctx.matrix).map_err(runtime)?;
    let diagnostics = ctx
        .seq
        .tail_model()
        .map(|_| diagnose_conditions(&ctx.seq, cfg.simulation.n_steps.max(1)));
    let t_min = cfg
        .estimation
        .as_ref()
        .map(|e| min_horizon(&ctx.seq, e.eta, e.eps).ok());
    let mut dir = OutputDir::create(out)?;
    let record = json!({
        "report": report,
        "period": ctx.matrix.period(),
        "irreducible": ctx.matrix.irreducible(),
        "left_eigenvector": ctx.matrix.left_eigenvector(),
        "diagnostics": diagnostics,
        "t_min": t_min.flatten(),
    });
    dir.write_json("regime.json", &record)?;
    let notes = sequence_notes(&ctx);
    dir.finish("regime", cfg.hash(), ctx.master_seed, notes, record)
}

/// One row per master run and snapshot step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub run: usize,
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub z_tilde_n: f64,
    pub u0: f64,
    pub u1: f64,
    pub u01: f64,
    pub normalized: bool,
    pub case_id: u8,
    pub includes_zero: bool,
    pub includes_one: bool,
    pub inner_lo: Option<f64>,
    pub inner_hi: Option<f64>,
    pub theta: Option<f64>,
    pub parts: usize,
    pub target_t: Option<usize>,
    pub target_u0: Option<f64>,
    pub target_u1: Option<f64>,
    pub target_u01: Option<f64>,
    pub master_seed: u64,
    pub config_hash: String,
}

/// An estimate row plus the long-horizon proxy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureRow {
    pub run: usize,
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub z_tilde_n: f64,
    pub u0: f64,
    pub u1: f64,
    pub u01: f64,
    pub normalized: bool,
    pub case_id: u8,
    pub includes_zero: bool,
    pub includes_one: bool,
    pub inner_lo: Option<f64>,
    pub inner_hi: Option<f64>,
    pub theta: Option<f64>,
    pub parts: usize,
    pub target_t: Option<usize>,
    pub target_u0: Option<f64>,
    pub target_u1: Option<f64>,
    pub target_u01: Option<f64>,
    pub proxy_step: usize,
    pub z_tilde_proxy: f64,
    pub covered: bool,
    pub master_seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordRow {
    pub run: usize,
    pub n: usize,
    pub j: usize,
    pub m_t: f64,
    pub u0_t: f64,
    pub u1_t: f64,
    pub u01_t: f64,
}

pub fn estimate_rows(outcomes: &[RunOutcome], master_seed: u64, hash: &str) -> Vec<EstimateRow> {
    let mut rows = Vec::new();
    for o in outcomes {
        for s in &o.snapshots {
            let e = &s.estimate;
            let iv = &s.interval;
            rows.push(EstimateRow {
                run: o.run,
                n: s.snapshot.step,
                t: e.t,
                k: e.k,
                z_tilde_n: s.snapshot.z_tilde,
                u0: e.u0,
                u1: e.u1,
                u01: e.u01,
                normalized: e.normalized,
                case_id: iv.case_id,
                includes_zero: iv.includes_zero,
                includes_one: iv.includes_one,
                inner_lo: iv.inner.map(|p| p.0),
                inner_hi: iv.inner.map(|p| p.1),
                theta: iv.theta_used,
                parts: iv.part_count(),
                target_t: s.target.as_ref().map(|x| x.t),
                target_u0: s.target.as_ref().map(|x| x.u0),
                target_u1: s.target.as_ref().map(|x| x.u1),
                target_u01: s.target.as_ref().map(|x| x.u01),
                master_seed,
                config_hash: hash.to_string(),
            });
        }
    }
    rows
}

pub fn figure_rows(
    outcomes: &[RunOutcome],
    barrier_eps: f64,
    master_seed: u64,
    hash: &str,
) -> Vec<FigureRow> {
    let base = estimate_rows(outcomes, master_seed, hash);
    let mut rows = Vec::with_capacity(base.len());
    let mut it = base.into_iter();
    for o in outcomes {
        let (proxy_step, z_proxy) = o.proxy.expect("figure plans record the proxy");
        for s in &o.snapshots {
            let b = it.next().expect("one base row per snapshot");
            rows.push(FigureRow {
                run: b.run,
                n: b.n,
                t: b.t,
                k: b.k,
                z_tilde_n: b.z_tilde_n,
                u0: b.u0,
                u1: b.u1,
                u01: b.u01,
                normalized: b.normalized,
                case_id: b.case_id,
                includes_zero: b.includes_zero,
                includes_one: b.includes_one,
                inner_lo: b.inner_lo,
                inner_hi: b.inner_hi,
                theta: b.theta,
                parts: b.parts,
                target_t: b.target_t,
                target_u0: b.target_u0,
                target_u1: b.target_u1,
                target_u01: b.target_u01,
                proxy_step,
                z_tilde_proxy: z_proxy,
                covered: s.interval.contains(z_proxy, barrier_eps),
                master_seed,
                config_hash: hash.to_string(),
            });
        }
    }
    rows
}

fn record_rows(outcomes: &[RunOutcome]) -> Vec<RecordRow> {
    let mut rows = Vec::new();
    for o in outcomes {
        for s in &o.snapshots {
            for (j, r) in s.estimate.records.iter().enumerate() {
                rows.push(RecordRow {
                    run: o.run,
                    n: s.snapshot.step,
                    j,
                    m_t: r.m_t,
                    u0_t: r.u0_t,
                    u1_t: r.u1_t,
                    u01_t: r.u01_t,
                });
            }
        }
    }
    rows
}

pub fn plan_for(command: Command, est: &EstimationBlock) -> Plan {
    match command {
        Command::Estimate => Plan {
            steps: vec![est.n],
            refine: true,
            proxy: false,
        },
        Command::Interval => Plan {
            steps: vec![est.n],
            refine: false,
            proxy: false,
        },
        Command::Figure1 => Plan {
            steps: est.snapshot_steps(),
            refine: true,
            proxy: true,
        },
        _ => Plan {
            steps: est.snapshot_steps(),
            refine: false,
            proxy: true,
        },
    }
}

fn cmd_estimation(command: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Index, HarnessError> {
    let est = cfg.estimation()?;
    let ctx = Context::new(cfg)?;
    let plan = plan_for(command, est);
    let outcomes = run_all(&ctx, est, cfg.replication.runs, &plan)?;
    let hash = cfg.hash();
    let mut notes = sequence_notes(&ctx);
    let mean = ctx.z0.mean(ctx.matrix.n_agents());
    if let Ok(report) = classify(&ctx.seq, &mean, &ctx.matrix) {
        if report.atomless_interior != Some(true) {
            notes.push(
                "the interior limit law is not known to be atomless; the inner interval may under-cover"
                    .into(),
            );
        }
        if report.polarization_class == PolarizationClass::AlmostSure {
            notes.push("polarization is almost sure in this regime".into());
        }
    }
    match min_horizon(&ctx.seq, est.eta, est.eps) {
        Ok(t_min) => {
            for n in &plan.steps {
                let t = est.horizon_for(*n);
                if t < t_min {
                    notes.push(format!("t = {t} is below the guideline horizon {t_min}"));
                }
            }
        }
        Err(e) => notes.push(format!("no guideline horizon: {e}")),
    }
    let mut dir = OutputDir::create(out)?;
    let summary = match command {
        Command::Estimate | Command::Interval => {
            let rows = estimate_rows(&outcomes, ctx.master_seed, &hash);
            dir.write_rows(&format!("{}.csv", command.name()), &rows)?;
            json!({ "rows": rows.len() })
        }
        Command::Figure1 | Command::Figure2 => {
            let rows = figure_rows(&outcomes, est.barrier_eps, ctx.master_seed, &hash);
            dir.write_rows(&format!("{}.csv", command.name()), &rows)?;
            json!({ "rows": rows.len() })
        }
        _ => {
            let rows = figure_rows(&outcomes, est.barrier_eps, ctx.master_seed, &hash);
            dir.write_rows("coverage.csv", &rows)?;
            let per_n: Vec<_> = plan
                .steps
                .iter()
                .map(|&n| coverage_summary(&outcomes, n, est.barrier_eps))
                .collect();
            json!({ "alpha": est.alpha, "barrier_eps": est.barrier_eps, "per_n": per_n })
        }
    };
    if cfg.output.records {
        dir.write_rows("records.csv", &record_rows(&outcomes))?;
    }
    dir.finish(command.name(), hash, ctx.master_seed, notes, summary)
}
