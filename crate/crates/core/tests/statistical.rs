//! Monte Carlo checks with fixed seeds. Each tolerance is a standard-error
//! band, so a failure means a bias well beyond sampling noise.

mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rspnet::estimate::{fixation_lower_bound, hoeffding_bounds, mc_estimate};
use rspnet::netgraph::{validate_matrix, DEFAULT_COLUMN_TOL};
use rspnet::rspsim::{
    continue_batch, simulate, simulate_batch, Barrier, InitialCondition, Kernel, NetworkSnapshot,
};
use rspnet::{Execution, SeedKey, SequenceSpec};

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

#[test]
fn network_mean_is_conserved_on_a_random_matrix() {
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
    let n = 4;
    let mut raw: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random::<f64>() + 0.05).collect()).collect();
    for col in 0..n {
        let s: f64 = raw.iter().map(|r| r[col]).sum();
        for row in raw.iter_mut() {
            row[col] /= s;
        }
    }
    let m = validate_matrix(&raw, 1e-12).unwrap();
    let v = m.left_eigenvector().unwrap().to_vec();
    let z0 = vec![0.1, 0.9, 0.4, 0.7];
    let target: f64 = v.iter().zip(&z0).map(|(a, b)| a * b).sum();
    let seq = SequenceSpec::power_law(1.0, 0.75, 0.1).build().unwrap();
    let checkpoints = [10, 100, 1000];
    let runs = simulate_batch(
        &m,
        &seq,
        &InitialCondition::Fixed { z: z0 },
        1000,
        &checkpoints,
        SeedKey::new(5),
        1000,
        Execution::Parallel,
    )
    .unwrap();
    for (i, &cp) in checkpoints.iter().enumerate() {
        let xs: Vec<f64> = runs.iter().map(|t| t.snapshots[i].z_tilde).collect();
        assert_eq!(runs[0].snapshots[i].step, cp);
        let (mean, se) = mean_and_se(&xs);
        assert!((mean - target).abs() <= 4.0 * se, "n={cp}: {mean} vs {target} (se {se})");
    }
}

#[test]
fn half_start_mean_stays_at_one_half() {
    let m = mf3();
    let seq = fig1();
    let checkpoints = [100, 1000, 10_000];
    let runs = simulate_batch(
        &m,
        &seq,
        &InitialCondition::Fixed { z: vec![0.5; 3] },
        10_000,
        &checkpoints,
        SeedKey::new(17),
        10_000,
        Execution::Parallel,
    )
    .unwrap();
    for i in 0..checkpoints.len() {
        let xs: Vec<f64> = runs.iter().map(|t| t.snapshots[i].z_tilde).collect();
        let (mean, se) = mean_and_se(&xs);
        assert!((mean - 0.5).abs() <= 3.0 * se, "n={}: {mean} (se {se})", checkpoints[i]);
    }
}

#[test]
fn continuations_preserve_the_snapshot_mean() {
    let m = mf3();
    let seq = fig1();
    // An interior snapshot; near a barrier the band collapses to rounding.
    let snap = (0..)
        .map(|run| simulate(&m, &seq, &[0.5; 3], 100, &[100], SeedKey::new(3).with_run(run), 0, false).unwrap().final_state)
        .find(|s| (0.2..=0.8).contains(&s.z_tilde))
        .unwrap();
    let kernel = Kernel::new(&m, &seq);
    let out = continue_batch(&kernel, &snap, 5000, SeedKey::new(3).with_lane(1), 10_000, Execution::Parallel).unwrap();
    let xs: Vec<f64> = out.iter().map(|s| s.z_tilde).collect();
    let (mean, se) = mean_and_se(&xs);
    assert!((mean - snap.z_tilde).abs() <= 3.0 * se, "{mean} vs {} (se {se})", snap.z_tilde);
}

#[test]
fn agents_synchronize_under_mean_field_interaction() {
    let m = mf3();
    let seq = fig1();
    let runs = simulate_batch(
        &m,
        &seq,
        &InitialCondition::UniformProduct,
        10_000,
        &[10_000],
        SeedKey::new(23),
        1000,
        Execution::Parallel,
    )
    .unwrap();
    let gaps: Vec<f64> = runs.iter().map(|t| t.final_state.sync_gap()).collect();
    let med = median(gaps);
    assert!(med < 0.05, "median sync gap {med}");
}

#[test]
fn interior_estimates_sharpen_with_data() {
    let m = mf3();
    let seq = fig1();
    let mut early = Vec::new();
    let mut late = Vec::new();
    let mut master_run = 0u64;
    while early.len() < 50 {
        let key = SeedKey::new(31).with_run(master_run);
        master_run += 1;
        let traj = simulate(&m, &seq, &[0.5; 3], 10_000, &[100, 10_000], key, 0, false).unwrap();
        let late_snap = &traj.snapshots[1];
        if !(0.05..=0.95).contains(&late_snap.z_tilde) {
            continue;
        }
        let a = mc_estimate(&traj.snapshots[0], &m, &seq, 10_100, 100, key.with_lane(1), Execution::Parallel).unwrap();
        let b = mc_estimate(late_snap, &m, &seq, 20_000, 100, key.with_lane(1), Execution::Parallel).unwrap();
        early.push(a.u01);
        late.push(b.u01);
    }
    let (e, l) = (median(early), median(late));
    assert!(l > e, "median u01 at 10^4 is {l}, at 10^2 is {e}");
}

#[test]
fn concentration_bounds_cover_barrier_frequencies() {
    // Hitting a neighbourhood of 0 at a finite horizon has probability at
    // most exp(-2 (Z - eps)^2 / tail), which u0 exceeds by a hair at eps =
    // 1e-3; the three-standard-error band absorbs that.
    let m = mf3();
    let seq = fig1();
    let kernel = Kernel::new(&m, &seq);
    let k = 1000;
    let tail = seq.tail_sq_sum(1000, 1e-12).unwrap().finite().unwrap();
    for run in 0..20u64 {
        let key = SeedKey::new(41).with_run(run);
        let traj = simulate(&m, &seq, &[0.5; 3], 1000, &[1000], key, 0, false).unwrap();
        let snap = traj.final_state;
        let (u0, u1) = hoeffding_bounds(snap.z_tilde, tail).unwrap();
        let out = continue_batch(&kernel, &snap, 10_000, key.with_lane(1), k, Execution::Parallel).unwrap();
        let f0 = out.iter().filter(|s| s.z_tilde <= 1e-3).count() as f64 / k as f64;
        let f1 = out.iter().filter(|s| s.z_tilde >= 1.0 - 1e-3).count() as f64 / k as f64;
        for (f, u) in [(f0, u0), (f1, u1)] {
            let p = u.max(1.0 / k as f64);
            let se = (p * (1.0 - p) / k as f64).sqrt();
            assert!(f <= u + 3.0 * se, "run {run}: frequency {f} vs bound {u}");
        }
    }
}

#[test]
fn fixation_bound_stays_below_observed_fixation() {
    let m = mf3();
    let seq = SequenceSpec::power_law(2.0, 1.0, 1.0).build().unwrap();
    let snap = NetworkSnapshot::new(&m, 10, vec![0.02; 3]).unwrap();
    let lb = fixation_lower_bound(&snap, &seq, m.v_min().unwrap(), Barrier::Zero, 1e-10).unwrap();
    assert!(lb > 0.5, "bound {lb}");
    let kernel = Kernel::new(&m, &seq);
    let k = 4000;
    let out = continue_batch(&kernel, &snap, 10_000, SeedKey::new(59), k, Execution::Parallel).unwrap();
    let p = out.iter().filter(|s| s.z_tilde < 1e-4).count() as f64 / k as f64;
    let upper = p + 2.576 * (p * (1.0 - p) / k as f64).sqrt();
    assert!(lb <= upper, "bound {lb} above empirical upper limit {upper}");
}

#[test]
fn uniform_start_conserves_its_mean() {
    let m = validate_matrix(
        &[vec![0.5, 0.25], vec![0.5, 0.75]],
        DEFAULT_COLUMN_TOL,
    )
    .unwrap();
    let seq = SequenceSpec::constant(0.2).build().unwrap();
    let runs = simulate_batch(&m, &seq, &InitialCondition::UniformProduct, 200, &[200], SeedKey::new(2), 4000, Execution::Parallel).unwrap();
    let xs: Vec<f64> = runs.iter().map(|t| t.final_state.z_tilde).collect();
    let (mean, se) = mean_and_se(&xs);
    assert!((mean - 0.5).abs() <= 4.0 * se, "{mean} (se {se})");
}
