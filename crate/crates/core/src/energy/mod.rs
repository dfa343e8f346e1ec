//! Energy functionals, the ghost-weight functional, the multiplier identity
//! behind the weighted energy estimates, and diagnostic reports.

pub mod inequalities;
pub mod report;
pub mod xnorm;

use std::sync::Arc;

use crate::error::{KgzError, Result};
use crate::grid::{gradient, Field, FieldPair, Grid};
use crate::kgz::{FieldSelector, Trajectory};
use crate::vector_fields::{apply_gamma_all, regularized_inverse_radius, GammaWord};

pub use inequalities::{
    hessian_decay_ratio, kg_extra_decay_ratio, ks_ratio, ks_ratio_at, weighted_exterior_energy,
    ExteriorEnergy,
};
pub use report::{DiagnosticsReport, TimeSeries};
pub use xnorm::{picard_distance, xnorm_terms, WeightSpec, XTerm};

/// Japanese bracket `sqrt(1 + x^2)`.
pub fn bracket(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// The smooth increasing cut-off: 0 below 1, 1 above 2, quintic smoothstep between.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Cutoff;

impl Cutoff {
    pub fn value(self, s: f64) -> f64 {
        let x = s - 1.0;
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
        }
    }

    pub fn derivative(self, s: f64) -> f64 {
        let x = s - 1.0;
        if x <= 0.0 || x >= 1.0 {
            0.0
        } else {
            30.0 * x * x * (1.0 - x) * (1.0 - x)
        }
    }
}

/// `chi(s)` for the fixed cut-off.
pub fn chi(s: f64) -> f64 {
    Cutoff.value(s)
}

pub fn chi_prime(s: f64) -> f64 {
    Cutoff.derivative(s)
}

pub(crate) fn check_mass(m: u8) -> Result<f64> {
    match m {
        0 | 1 => Ok(m as f64),
        _ => Err(KgzError::InvalidArgument(format!("mass must be 0 or 1, got {m}"))),
    }
}

/// `E_m = int |dt u|^2 + |grad u|^2 + m^2 |u|^2`, summed over components.
///
/// Evaluated in Fourier space with the same symbol `|k|^2 + m^2` as the
/// propagator, so the free flow conserves it to round-off.
pub fn energy(p: &FieldPair, m: u8) -> Result<f64> {
    let m = check_mass(m)?;
    p.u.check_finite("energy position")?;
    p.ut.check_finite("energy velocity")?;
    let g = Arc::clone(p.grid());
    let u = g.forward(&p.u);
    Ok(u.weighted_sum_sq(|k2| k2 + m * m) + p.ut.integral_sq())
}

/// Pointwise `|dt u|^2 + |grad u|^2 + m^2 |u|^2` summed over components.
pub fn energy_density(p: &FieldPair, m: f64) -> Field {
    let [d1, d2] = gradient(&p.u);
    let mut e = p.ut.dot(&p.ut).add(&d1.dot(&d1)).add(&d2.dot(&d2));
    if m != 0.0 {
        e = e.add(&p.u.dot(&p.u).scale(m * m));
    }
    e
}

/// `sum_a |G_a u|^2` summed over components, with the regularized radius.
pub fn good_derivative_density(p: &FieldPair) -> Field {
    let g = Arc::clone(p.grid());
    let [d1, d2] = gradient(&p.u);
    let ga = |a: usize, da: &Field| {
        p.ut.mul_fn(|x1, x2| (if a == 1 { x1 } else { x2 }) * regularized_inverse_radius(&g, x1, x2)).add(da)
    };
    let g1 = ga(1, &d1);
    let g2 = ga(2, &d2);
    g1.dot(&g1).add(&g2.dot(&g2))
}

/// `int w(x) f(x) dx` for a scalar field.
pub(crate) fn weighted_integral(f: &Field, w: impl Fn(f64, f64) -> f64) -> f64 {
    let g = f.grid();
    let x = g.coords();
    let n = g.points_per_axis();
    let mut s = 0.0;
    for c in 0..f.components() {
        let d = f.component(c);
        for i2 in 0..n {
            for i1 in 0..n {
                s += w(x[i1], x[i2]) * d[[i2, i1]];
            }
        }
    }
    s * g.cell_area()
}

/// Running trapezoid integral of samples at `times`.
pub(crate) fn running_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in 0..values.len() {
        if i > 0 {
            acc += 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
        }
        out.push(acc);
    }
    out
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(KgzError::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    Ok(())
}

/// Ghost-weight energy of one field along a trajectory: `E_m(t)` plus the
/// running spacetime integral of `delta (|G u|^2 + m^2 u^2) / <tau - r>^{1+delta}`.
pub fn ghost_energy(traj: &Trajectory, field: FieldSelector, m: u8, delta: f64) -> Result<TimeSeries> {
    check_delta(delta)?;
    check_mass(m)?;
    let pairs: Vec<&FieldPair> = (0..traj.states.len()).map(|i| traj.pair(field, i)).collect();
    ghost_energy_of(&traj.times(), &pairs, m, delta)
}

/// [`ghost_energy`] on an explicit list of snapshots.
pub fn ghost_energy_of(times: &[f64], pairs: &[&FieldPair], m: u8, delta: f64) -> Result<TimeSeries> {
    check_delta(delta)?;
    let mf = check_mass(m)?;
    let mut energies = Vec::with_capacity(pairs.len());
    let mut bulk = Vec::with_capacity(pairs.len());
    for (&t, p) in times.iter().zip(pairs) {
        energies.push(energy(p, m)?);
        let mut dens = good_derivative_density(p);
        if mf != 0.0 {
            dens = dens.add(&p.u.dot(&p.u).scale(mf * mf));
        }
        bulk.push(weighted_integral(&dens, |x1, x2| delta * bracket(t - x1.hypot(x2)).powf(-1.0 - delta)));
    }
    let acc = running_trapezoid(times, &bulk);
    Ok(TimeSeries::new(times.to_vec(), energies.iter().zip(&acc).map(|(e, a)| e + a).collect()))
}

/// `(sum_{|I| <= order} E_gst(t, Gamma^I u))^{1/2}` along a trajectory,
/// accumulated snapshot by snapshot.
pub fn commuted_ghost_energy(traj: &Trajectory, field: FieldSelector, m: u8, delta: f64, order: usize) -> Result<TimeSeries> {
    check_delta(delta)?;
    let mf = check_mass(m)?;
    let words = GammaWord::all_up_to(order);
    let times = traj.times();
    let mut acc = vec![0.0; words.len()];
    let mut prev = vec![0.0; words.len()];
    let mut values = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let jets = apply_gamma_all(&words, &traj.jet(field, i))?;
        let mut total = 0.0;
        for (k, j) in jets.iter().enumerate() {
            if j.depth() < 2 {
                return Err(KgzError::Budget { needed: 2, available: j.depth() });
            }
            let p = FieldPair { u: j.levels()[0].clone(), ut: j.levels()[1].clone() };
            let mut dens = good_derivative_density(&p);
            if mf != 0.0 {
                dens = dens.add(&p.u.dot(&p.u).scale(mf * mf));
            }
            let rate = weighted_integral(&dens, |x1, x2| delta * bracket(t - x1.hypot(x2)).powf(-1.0 - delta));
            if i > 0 {
                acc[k] += 0.5 * (t - times[i - 1]) * (rate + prev[k]);
            }
            prev[k] = rate;
            total += energy(&p, m)? + acc[k];
        }
        values.push(total.sqrt());
    }
    Ok(TimeSeries::new(times, values))
}

/// `q(y) = delta int_{-inf}^{y} <s>^{-1-delta} ds` tabulated on a uniform
/// grid and evaluated by cubic Hermite interpolation with the exact slope.
#[derive(Clone, Debug)]
pub struct GhostPhase {
    delta: f64,
    y0: f64,
    dy: f64,
    values: Vec<f64>,
}

impl GhostPhase {
    pub fn new(delta: f64, y_min: f64, y_max: f64) -> GhostPhase {
        let dy = 1e-2;
        let y0 = y_min.min(-1.0) - dy;
        let count = ((y_max.max(1.0) + dy - y0) / dy).ceil() as usize + 2;
        let p = 0.5 * (1.0 + delta);
        let f = |s: f64| (1.0 + s * s).powf(-p);
        // tail int_{-inf}^{y0}: s = -|y0| / v, v = z^{1/delta} gives the
        // smooth integrand (|y0| / delta) (z^{2/delta} + y0^2)^{-p}
        let a = -y0;
        let tail = simpson(|z| (z.powf(2.0 / delta) + a * a).powf(-p), 0.0, 1.0, 4000) * a / delta;
        let mut values = Vec::with_capacity(count);
        let mut acc = tail;
        values.push(delta * acc);
        for i in 1..count {
            let lo = y0 + (i - 1) as f64 * dy;
            acc += simpson(f, lo, lo + dy, 4);
            values.push(delta * acc);
        }
        GhostPhase { delta, y0, dy, values }
    }

    pub fn slope(&self, y: f64) -> f64 {
        self.delta * (1.0 + y * y).powf(-0.5 * (1.0 + self.delta))
    }

    pub fn eval(&self, y: f64) -> f64 {
        let s = (y - self.y0) / self.dy;
        let i = (s.floor().max(0.0) as usize).min(self.values.len() - 2);
        let u = s - i as f64;
        let ya = self.y0 + i as f64 * self.dy;
        let (q0, q1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slope(ya) * self.dy, self.slope(ya + self.dy) * self.dy);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * q0 + (u3 - 2.0 * u2 + u) * m0 + (-2.0 * u3 + 3.0 * u2) * q1 + (u3 - u2) * m1
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels * 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Time series of the terms of the multiplier identity for
/// `-box u + m^2 u = F` with multiplier `<t>^{-kappa} e^q dt u`.
#[derive(Clone, Debug)]
pub struct MultiplierBalance {
    pub times: Vec<f64>,
    /// `1/2 int w e dx` at each time.
    pub weighted_energy: Vec<f64>,
    /// Running integral of the nonnegative ghost and `kappa` bulk terms.
    pub bulk: Vec<f64>,
    /// Running integral of `int w dt u F dx`.
    pub source: Vec<f64>,
}

impl MultiplierBalance {
    /// `|1/2 [int w e]_0^t + bulk - source|`.
    pub fn imbalance(&self) -> TimeSeries {
        let e0 = self.weighted_energy.first().copied().unwrap_or(0.0);
        let v = (0..self.times.len())
            .map(|i| (self.weighted_energy[i] - e0 + self.bulk[i] - self.source[i]).abs())
            .collect();
        TimeSeries::new(self.times.clone(), v)
    }
}

/// Integrates every term of the multiplier identity over `[t0, t] x box`.
///
/// The radius inside `q` and `G_a` is regularized to `rho = sqrt(r^2 + h^2)`,
/// which keeps the weight smooth at the origin; the identity then carries the
/// extra nonnegative bulk term `delta/2 w <rho - t>^{-1-delta} (h/rho)^2 (dt u)^2`.
/// With `delta = 0` the weight is `<t>^{-kappa}`.
pub fn multiplier_balance(
    traj: &Trajectory,
    field: FieldSelector,
    m: u8,
    delta: f64,
    kappa: f64,
) -> Result<MultiplierBalance> {
    let mf = check_mass(m)?;
    if !(delta >= 0.0) || !(kappa >= 0.0) {
        return Err(KgzError::InvalidArgument(format!(
            "delta and kappa must be nonnegative, got {delta}, {kappa}"
        )));
    }
    let g: &Arc<Grid> = &traj.grid;
    let h2 = g.spacing() * g.spacing();
    let times = traj.times();
    let horizon = traj.horizon();
    let phase = (delta > 0.0).then(|| GhostPhase::new(delta, -horizon - 2.0, g.half_width() * 2f64.sqrt() + 2.0));
    let mut weighted_energy = Vec::with_capacity(times.len());
    let mut bulk_rate = Vec::with_capacity(times.len());
    let mut source_rate = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let p = traj.pair(field, i);
        let f = traj.field_source(field, i);
        let tk = bracket(t).powf(-kappa);
        let rho = |x1: f64, x2: f64| (x1 * x1 + x2 * x2 + h2).sqrt();
        let w = |x1: f64, x2: f64| match &phase {
            Some(q) => tk * q.eval(rho(x1, x2) - t).exp(),
            None => tk,
        };
        let e = energy_density(p, mf);
        weighted_energy.push(0.5 * weighted_integral(&e, w));
        let mut rate = 0.5 * kappa * t / (1.0 + t * t) * weighted_integral(&e, w);
        if delta > 0.0 {
            let mut ghost = good_derivative_density(p);
            if mf != 0.0 {
                ghost = ghost.add(&p.u.dot(&p.u).scale(mf * mf));
            }
            let extra = p.ut.dot(&p.ut);
            rate += 0.5 * delta * weighted_integral(&ghost, |x1, x2| w(x1, x2) * bracket(rho(x1, x2) - t).powf(-1.0 - delta));
            rate += 0.5
                * delta
                * weighted_integral(&extra, |x1, x2| {
                    let r = rho(x1, x2);
                    w(x1, x2) * bracket(r - t).powf(-1.0 - delta) * h2 / (r * r)
                });
        }
        bulk_rate.push(rate);
        source_rate.push(weighted_integral(&p.ut.dot(&f), w));
    }
    let bulk = running_trapezoid(&times, &bulk_rate);
    let source = running_trapezoid(&times, &source_rate);
    Ok(MultiplierBalance { times, weighted_energy, bulk, source })
}

/// Absolute imbalance of the integrated multiplier identity.
pub fn multiplier_residual(
    traj: &Trajectory,
    field: FieldSelector,
    m: u8,
    delta: f64,
    kappa: f64,
) -> Result<TimeSeries> {
    Ok(multiplier_balance(traj, field, m, delta, kappa)?.imbalance())
}
