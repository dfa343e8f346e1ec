//! Built-in invariant suite on small fields, shared by the `check` verb and the
//! acceptance tests.

use std::sync::{Arc, Mutex};
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{energy_norm_distance, CheckEntry, PICARD_MATCH_TOL, PICARD_RATIO_MAX};
use crate::energy::{energy, multiplier_residual};
use crate::error::Result;
use crate::fieldio::{read_field, write_field};
use crate::grid::{make_grid, Field, FieldPair, Grid};
use crate::kgz::{
    evolve_direct_n, evolve_with, picard_solve, DataProfile, EvolveOptions, FieldSelector, InitialData, PicardOptions,
};
use crate::propagator::LinearOperator;
use crate::vector_fields::{check_commutators, TimeJet};

pub const DRIFT_TOL: f64 = 1e-11;
pub const CONVERGENCE_FACTOR: f64 = 3.5;
pub const COMMUTATOR_TOL: f64 = 1e-8;
pub const FORMULATION_TOL: f64 = 1e-8;

fn entry(name: impl Into<String>, value: f64, bound: impl Into<String>, pass: bool) -> CheckEntry {
    CheckEntry { name: name.into(), value, bound: bound.into(), pass }
}

/// Sum of a few Gaussian wave packets with random centres (within radius 3),
/// widths in `[1.25, 2]` and carrier wavenumbers `|k| <= 1`. On grids with
/// `L >= 20` and spacing below 0.45 such fields vanish to round-off at the box
/// edge and their spectrum at the Nyquist wavenumber is below `e^-30`.
pub fn localized_random_field(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> Field {
    let packets: Vec<[f64; 7]> = (0..3)
        .map(|_| {
            let (rc, ac) = (3.0 * rng.gen::<f64>().sqrt(), std::f64::consts::TAU * rng.gen::<f64>());
            let (rk, ak) = (rng.gen::<f64>(), std::f64::consts::TAU * rng.gen::<f64>());
            [
                rng.gen_range(-1.0..1.0),
                rc * ac.cos(),
                rc * ac.sin(),
                rng.gen_range(1.25..2.0),
                rk * ak.cos(),
                rk * ak.sin(),
                std::f64::consts::TAU * rng.gen::<f64>(),
            ]
        })
        .collect();
    Field::from_fn(grid, 1, |_, x, y| {
        packets
            .iter()
            .map(|[a, cx, cy, w, k1, k2, ph]| {
                let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                a * (-r2 / (2.0 * w * w)).exp() * (k1 * x + k2 * y + ph).cos()
            })
            .sum()
    })
}

/// Largest relative drift of the free Klein-Gordon energy over `steps` exact
/// propagator steps.
pub fn free_energy_drift(grid: &Arc<Grid>, steps: usize, dt: f64) -> Result<f64> {
    let op = LinearOperator::klein_gordon(grid);
    let coeffs = op.coefficients(dt);
    let g = DataProfile::gaussian(1.0, 1.0);
    let mut p = FieldPair {
        u: Field::from_fn(grid, 1, |_, x, y| g.sample(x, y)),
        ut: Field::from_fn(grid, 1, |_, x, y| -0.5 * x * g.sample(x, y)),
    };
    let e0 = energy(&p, 1)?;
    let mut worst = 0.0_f64;
    for _ in 0..steps {
        p = op.free_step_with(&coeffs, &p);
        worst = worst.max((energy(&p, 1)? - e0).abs() / e0);
    }
    Ok(worst)
}

/// Largest `|imbalance|` of the multiplier identity for `E` over a run.
pub fn multiplier_imbalance(data: &InitialData, horizon: f64, dt: f64, delta: f64, kappa: f64) -> Result<f64> {
    let opts = EvolveOptions { check_window: false, ..EvolveOptions::default() };
    let traj = evolve_with(data, horizon, dt, &opts)?;
    let r = multiplier_residual(&traj, FieldSelector::E, 1, delta, kappa)?;
    Ok(r.values.iter().map(|v| v.abs()).fold(0.0, f64::max))
}

/// Ratio of the multiplier imbalance at `dt` to that at `dt / 2`.
pub fn multiplier_convergence(data: &InitialData, horizon: f64, dt: f64, delta: f64, kappa: f64) -> Result<f64> {
    Ok(multiplier_imbalance(data, horizon, dt, delta, kappa)?
        / multiplier_imbalance(data, horizon, dt / 2.0, delta, kappa)?)
}

/// Relative commutator residuals on `cases` seeded random Klein-Gordon jets.
pub fn commutator_residuals(grid: &Arc<Grid>, seed: u64, cases: usize) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = Field::zeros(grid, 1);
    (0..cases)
        .map(|_| {
            let u = localized_random_field(grid, &mut rng);
            let ut = localized_random_field(grid, &mut rng);
            let t = rng.gen_range(0.0..3.0);
            let jet = TimeJet::from_equation(t, &u, &ut, 1.0, &[zero.clone()]);
            Ok(check_commutators(&jet)?.relative())
        })
        .collect()
}

/// Relative max-norm gap on `n` at the horizon between the divergence-form and
/// direct wave formulations.
pub fn formulation_gap(data: &InitialData, horizon: f64, dt: f64) -> Result<f64> {
    let steps = crate::propagator::step_count(horizon, dt)?;
    let opts = EvolveOptions { snap_every: steps, ..EvolveOptions::default() };
    let a = evolve_with(data, horizon, dt, &opts)?;
    let b = evolve_direct_n(data, horizon, dt)?;
    let na = &a.states.last().expect("nonempty").n.u;
    let nb = &b.states.last().expect("nonempty").n.u;
    let scale = na.max_abs();
    Ok(if scale == 0.0 { 0.0 } else { na.sub(nb).max_abs() / scale })
}

/// Largest contraction ratio and the energy-norm gap to `evolve`.
pub fn picard_check(data: &InitialData, horizon: f64, dt: f64) -> Result<(f64, f64)> {
    let r = picard_solve(data, horizon, dt, &PicardOptions::default())?;
    let ev = evolve_with(data, horizon, dt, &EvolveOptions::default())?;
    let worst = r.contraction_ratios.iter().copied().fold(0.0, f64::max);
    Ok((worst, energy_norm_distance(&r.trajectory, &ev)?))
}

/// Whether a field survives a write/read cycle bit for bit.
pub fn field_round_trips(field: &Field, t: f64) -> Result<bool> {
    let mut buf = Vec::new();
    write_field(&mut buf, field, t)?;
    let (back, tb) = read_field(buf.as_slice(), Some(field.grid()))?;
    let same = back.data().iter().zip(field.data().iter()).all(|(a, b)| a.to_bits() == b.to_bits());
    Ok(same && tb.to_bits() == t.to_bits())
}

type Job = Box<dyn FnOnce() -> Result<Vec<CheckEntry>> + Send>;

fn jobs(seed: u64) -> Vec<Job> {
    vec![
        Box::new(|| {
            let g = make_grid(64, 12.0)?;
            let d = free_energy_drift(&g, 1000, 0.1)?;
            Ok(vec![entry("free KG energy drift, 1000 steps", d, format!("<= {DRIFT_TOL:e}"), d <= DRIFT_TOL)])
        }),
        Box::new(|| {
            let g = make_grid(96, 16.0)?;
            let data = InitialData::from_profile(&g, &DataProfile::gaussian(0.1, 1.0))?;
            [(0.1, 0.05), (0.2, 0.1)]
                .into_iter()
                .map(|(delta, kappa)| {
                    let r = multiplier_convergence(&data, 2.0, 0.1, delta, kappa)?;
                    Ok(entry(
                        format!("multiplier imbalance dt/(dt/2), delta={delta} kappa={kappa}"),
                        r,
                        format!(">= {CONVERGENCE_FACTOR}"),
                        r >= CONVERGENCE_FACTOR,
                    ))
                })
                .collect()
        }),
        Box::new(move || {
            let g = make_grid(96, 20.0)?;
            let worst = commutator_residuals(&g, seed, 20)?.into_iter().fold(0.0, f64::max);
            Ok(vec![entry("commutators, 20 random fields", worst, format!("<= {COMMUTATOR_TOL:e} x scale"), worst <= COMMUTATOR_TOL)])
        }),
        Box::new(|| {
            let g = make_grid(96, 14.0)?;
            let data = InitialData::from_profile(&g, &DataProfile::gaussian(1e-2, 1.0))?;
            let gap = formulation_gap(&data, 5.0, 0.1)?;
            Ok(vec![entry("divergence vs direct n at t=5", gap, format!("<= {FORMULATION_TOL:e}"), gap <= FORMULATION_TOL)])
        }),
        Box::new(|| {
            let g = make_grid(96, 14.0)?;
            let data = InitialData::from_profile(&g, &DataProfile::gaussian(1e-2, 1.0))?;
            let (ratio, gap) = picard_check(&data, 3.0, 0.1)?;
            Ok(vec![
                entry("Picard contraction ratio", ratio, format!("<= {PICARD_RATIO_MAX}"), ratio <= PICARD_RATIO_MAX),
                entry("Picard limit vs evolve", gap, format!("<= {PICARD_MATCH_TOL:e}"), gap <= PICARD_MATCH_TOL),
            ])
        }),
        Box::new(move || {
            let g = make_grid(32, 8.0)?;
            let f = localized_random_field(&g, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
            let ok = field_round_trips(&f, 1.25)?;
            Ok(vec![entry("field dump round trip", if ok { 0.0 } else { 1.0 }, "bitwise", ok)])
        }),
    ]
}

/// Runs the suite on at most `threads` workers; entries keep a fixed order.
pub fn check_suite(seed: u64, threads: usize) -> Result<Vec<CheckEntry>> {
    let jobs = jobs(seed);
    let n = jobs.len();
    let queue = Mutex::new(jobs.into_iter().enumerate().collect::<Vec<_>>());
    let results: Mutex<Vec<Option<Result<Vec<CheckEntry>>>>> = Mutex::new((0..n).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..threads.clamp(1, n) {
            s.spawn(|| loop {
                let next = queue.lock().expect("queue lock").pop();
                let Some((i, job)) = next else { break };
                let r = job();
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    let mut out = Vec::new();
    for r in results.into_inner().expect("results lock") {
        out.extend(r.expect("every job ran")?);
    }
    Ok(out)
}
