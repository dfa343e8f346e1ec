//! Measured constants of the pointwise and weighted-energy inequalities.
//!
//! Each check evaluates both sides on snapshots and reports the largest
//! quotient, masked to `|x| <= 3t` where the inequality is stated. Points
//! whose right-hand side is below [`RELATIVE_FLOOR`] times its maximum are
//! ignored: there both sides are round-off.

use crate::error::{KgzError, Result};
use crate::grid::{gradient, hessian, Field, FieldPair};
use crate::kgz::{FieldSelector, Trajectory};
use crate::vector_fields::{apply_gamma_all, Gamma, GammaWord, TimeJet};

use super::{
    bracket, check_mass, chi, chi_prime, energy, energy_density, good_derivative_density, running_trapezoid,
    weighted_integral, TimeSeries,
};

pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `sum_{alpha, beta} |d_alpha d_beta u|^2` from a jet with three levels.
pub fn hessian_sq(jet: &TimeJet) -> Result<Field> {
    if jet.depth() < 3 {
        return Err(KgzError::Budget { needed: 3, available: jet.depth() });
    }
    let l = jet.levels();
    let [h11, h12, h22] = hessian(&l[0]);
    let [dt1, dt2] = gradient(&l[1]);
    Ok(l[2]
        .dot(&l[2])
        .add(&dt1.dot(&dt1).scale(2.0))
        .add(&dt2.dot(&dt2).scale(2.0))
        .add(&h11.dot(&h11))
        .add(&h12.dot(&h12).scale(2.0))
        .add(&h22.dot(&h22)))
}

/// `sum_alpha |d_alpha u|^2` from the first two levels.
pub fn gradient_sq(jet: &TimeJet) -> Result<Field> {
    if jet.depth() < 2 {
        return Err(KgzError::Budget { needed: 2, available: jet.depth() });
    }
    let p = FieldPair { u: jet.levels()[0].clone(), ut: jet.levels()[1].clone() };
    Ok(energy_density(&p, 0.0))
}

/// `sum_{|I| = 1} sum_alpha |d_alpha Gamma^I u|^2`.
pub fn gamma_gradient_sq(jet: &TimeJet) -> Result<Field> {
    let words: Vec<GammaWord> = Gamma::ALL.into_iter().map(GammaWord::single).collect();
    let jets = apply_gamma_all(&words, jet)?;
    let mut acc = Field::zeros(jet.grid(), 1);
    for j in &jets {
        acc = acc.add(&gradient_sq(j)?);
    }
    Ok(acc)
}

/// Pointwise sides of one inequality at one time, both scalar fields.
#[derive(Clone, Debug)]
pub struct PointwiseSides {
    pub t: f64,
    pub lhs: Field,
    pub rhs: Field,
}

impl PointwiseSides {
    /// Largest `lhs / rhs` over `|x| <= 3t` with `rhs` above the floor.
    pub fn max_ratio(&self) -> f64 {
        let g = self.lhs.grid();
        let x = g.coords();
        let (l, r) = (self.lhs.component(0), self.rhs.component(0));
        let rmax_in = |i1: usize, i2: usize| x[i1].hypot(x[i2]) <= 3.0 * self.t;
        let mut rmax = 0.0_f64;
        for ((i2, i1), v) in r.indexed_iter() {
            if rmax_in(i1, i2) {
                rmax = rmax.max(*v);
            }
        }
        if rmax == 0.0 {
            return 0.0;
        }
        let mut best = 0.0_f64;
        for ((i2, i1), v) in r.indexed_iter() {
            if rmax_in(i1, i2) && *v > RELATIVE_FLOOR * rmax {
                best = best.max(l[[i2, i1]] / v);
            }
        }
        best
    }
}

fn sqrt_field(f: &Field) -> Field {
    let mut out = f.clone();
    out.data_mut().mapv_inplace(f64::sqrt);
    out
}

/// Sides of `|dd w| <~ <t-r>^-1 (|d Gamma w| + |d w|) + t <t-r>^-1 |F_w|`
/// for the divergence potential `w = n_delta`, `F_w = |E|^2`, at snapshot `i`.
pub fn hessian_decay_sides(traj: &Trajectory, i: usize) -> Result<PointwiseSides> {
    let jet = traj.n_delta_jet(i);
    let t = jet.time();
    let lhs = sqrt_field(&hessian_sq(&jet)?);
    let dg = sqrt_field(&gamma_gradient_sq(&jet)?);
    let d = sqrt_field(&gradient_sq(&jet)?);
    let f = traj.field_source(FieldSelector::NDelta, i).magnitude();
    let rhs = dg
        .add(&d)
        .add(&f.scale(t))
        .mul_fn(|x1, x2| 1.0 / bracket(t - x1.hypot(x2)));
    Ok(PointwiseSides { t, lhs, rhs })
}

/// Sides of `|v| <~ |t-r|/<t> |dd v| + <t>^-1 (|d Gamma v| + |d v|) + |F_v|`
/// for `v = E`, at snapshot `i`.
pub fn kg_extra_decay_sides(traj: &Trajectory, i: usize) -> Result<PointwiseSides> {
    let jet = traj.e_jet(i);
    let t = jet.time();
    let lhs = jet.value().magnitude();
    let tb = bracket(t);
    let dd = sqrt_field(&hessian_sq(&jet)?).mul_fn(|x1, x2| (t - x1.hypot(x2)).abs() / tb);
    let dg = sqrt_field(&gamma_gradient_sq(&jet)?);
    let d = sqrt_field(&gradient_sq(&jet)?);
    let f = traj.field_source(FieldSelector::E, i).magnitude();
    let rhs = dd.add(&dg.add(&d).scale(1.0 / tb)).add(&f);
    Ok(PointwiseSides { t, lhs, rhs })
}

fn ratio_series(traj: &Trajectory, sides: impl Fn(&Trajectory, usize) -> Result<PointwiseSides>) -> Result<TimeSeries> {
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, s) in traj.states.iter().enumerate() {
        if s.t < 1.0 - 1e-12 {
            continue;
        }
        times.push(s.t);
        values.push(sides(traj, i)?.max_ratio());
    }
    Ok(TimeSeries::new(times, values))
}

/// Measured constant of the wave Hessian decay bound for `t >= 1`.
pub fn hessian_decay_ratio(traj: &Trajectory) -> Result<TimeSeries> {
    ratio_series(traj, hessian_decay_sides)
}

/// Measured constant of the Klein-Gordon extra-decay bound for `t >= 1`.
pub fn kg_extra_decay_ratio(traj: &Trajectory) -> Result<TimeSeries> {
    ratio_series(traj, kg_extra_decay_sides)
}

/// `max_{|I| <= 2} ||Gamma^I u||` at snapshot `i`.
pub fn gamma_norm_max(traj: &Trajectory, field: FieldSelector, i: usize) -> Result<f64> {
    let words = GammaWord::all_up_to(2);
    let jets = apply_gamma_all(&words, &traj.jet(field, i))?;
    Ok(jets.iter().map(|j| j.value().l2_norm()).fold(0.0, f64::max))
}

/// `sup_x <t + |x|>^1/2 |u(t, x)|` at snapshot `i`.
pub fn weighted_sup_at(traj: &Trajectory, field: FieldSelector, i: usize) -> f64 {
    let s = &traj.states[i];
    let u = &traj.pair(field, i).u;
    let x = u.grid().coords();
    let mag = u.magnitude();
    let mut best = 0.0_f64;
    for ((i2, i1), v) in mag.component(0).indexed_iter() {
        best = best.max(bracket(s.t + x[i1].hypot(x[i2])).sqrt() * v);
    }
    best
}

/// Klainerman-Sobolev quotient at time `t`, using the words of order `<= 2`
/// on snapshots `s <= 2t`.
pub fn ks_ratio_at(traj: &Trajectory, field: FieldSelector, t: f64) -> Result<f64> {
    if 2.0 * t > traj.horizon() + 1e-9 {
        return Err(KgzError::Horizon(format!(
            "quotient at t = {t} needs data up to {}, trajectory ends at {}",
            2.0 * t,
            traj.horizon()
        )));
    }
    let i = traj.index_at(t);
    let mut denom = 0.0_f64;
    for (k, s) in traj.states.iter().enumerate() {
        if s.t <= 2.0 * t + 1e-9 {
            denom = denom.max(gamma_norm_max(traj, field, k)?);
        }
    }
    let num = weighted_sup_at(traj, field, i);
    Ok(if denom == 0.0 { 0.0 } else { num / denom })
}

/// [`ks_ratio_at`] at every snapshot whose doubled time lies in the run.
pub fn ks_ratio(traj: &Trajectory, field: FieldSelector) -> Result<TimeSeries> {
    let horizon = traj.horizon();
    let norms = traj
        .states
        .iter()
        .enumerate()
        .map(|(k, _)| gamma_norm_max(traj, field, k))
        .collect::<Result<Vec<f64>>>()?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, s) in traj.states.iter().enumerate() {
        if 2.0 * s.t > horizon + 1e-9 {
            break;
        }
        let denom = traj
            .states
            .iter()
            .zip(&norms)
            .filter(|(q, _)| q.t <= 2.0 * s.t + 1e-9)
            .map(|(_, n)| *n)
            .fold(0.0, f64::max);
        let num = weighted_sup_at(traj, field, i);
        times.push(s.t);
        values.push(if denom == 0.0 { 0.0 } else { num / denom });
    }
    if times.is_empty() {
        return Err(KgzError::Horizon("trajectory has no snapshots".into()));
    }
    Ok(TimeSeries::new(times, values))
}

/// Weighted energies outside and inside the light cone with the terms of
/// their multiplier identities.
#[derive(Clone, Debug)]
pub struct ExteriorEnergy {
    pub times: Vec<f64>,
    /// `int chi(r - t) <r - t>^{2 eta} (|d u|^2 + m^2 u^2)`
    pub exterior: Vec<f64>,
    /// `||<r>^eta d u(0)||^2 + m^2 ||<r>^eta u(0)||^2`
    pub exterior_data: f64,
    /// Running `int int chi(r - tau) <r - tau>^{2 eta} |F dt u|`.
    pub exterior_source: Vec<f64>,
    /// Running `int int chi(r - tau) <r - tau>^{2 eta} F dt u` (signed).
    pub exterior_signed_source: Vec<f64>,
    /// Running integral of the nonnegative `chi'` and `eta` bulk term.
    pub exterior_bulk: Vec<f64>,
    /// `int ((t - r)^-eta chi(t - r) + 1 - chi(t - r)) (|d u|^2 + m^2 u^2)`
    pub interior: Vec<f64>,
    /// `E_m(t0)`, the ghost energy at the initial time.
    pub interior_data: f64,
    /// Running `int int` of the interior weight times `|F dt u|`.
    pub interior_source: Vec<f64>,
}

impl ExteriorEnergy {
    /// Measured constant `exterior / (data + source)`.
    pub fn exterior_constant(&self) -> TimeSeries {
        let v = (0..self.times.len())
            .map(|i| quotient(self.exterior[i], self.exterior_data + self.exterior_source[i]))
            .collect();
        TimeSeries::new(self.times.clone(), v)
    }

    pub fn interior_constant(&self) -> TimeSeries {
        let v = (0..self.times.len())
            .map(|i| quotient(self.interior[i], self.interior_data + self.interior_source[i]))
            .collect();
        TimeSeries::new(self.times.clone(), v)
    }

    /// `exterior - 2 signed_source`, nonincreasing by the sign of the bulk term.
    pub fn exterior_minus_source(&self) -> TimeSeries {
        let v = (0..self.times.len())
            .map(|i| self.exterior[i] - 2.0 * self.exterior_signed_source[i])
            .collect();
        TimeSeries::new(self.times.clone(), v)
    }

    /// `|1/2 [exterior]_0^t + bulk - signed_source|`, the quadrature error of the identity.
    pub fn exterior_imbalance(&self) -> TimeSeries {
        let e0 = self.exterior.first().copied().unwrap_or(0.0);
        let v = (0..self.times.len())
            .map(|i| (0.5 * (self.exterior[i] - e0) + self.exterior_bulk[i] - self.exterior_signed_source[i]).abs())
            .collect();
        TimeSeries::new(self.times.clone(), v)
    }
}

fn quotient(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Exterior and interior weighted energies of one field along a trajectory.
pub fn weighted_exterior_energy(traj: &Trajectory, field: FieldSelector, m: u8, eta: f64) -> Result<ExteriorEnergy> {
    let mf = check_mass(m)?;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(KgzError::InvalidArgument(format!("eta must lie in (0, 1], got {eta}")));
    }
    let times = traj.times();
    let ext_w = |t: f64| move |x1: f64, x2: f64| {
        let s = x1.hypot(x2) - t;
        chi(s) * bracket(s).powf(2.0 * eta)
    };
    let int_w = |t: f64| move |x1: f64, x2: f64| {
        let s = t - x1.hypot(x2);
        let c = chi(s);
        if c > 0.0 {
            s.powf(-eta) * c + 1.0 - c
        } else {
            1.0
        }
    };
    let bulk_w = |t: f64| move |x1: f64, x2: f64| {
        let s = x1.hypot(x2) - t;
        0.5 * (chi_prime(s) * bracket(s).powf(2.0 * eta) + 2.0 * eta * chi(s) * bracket(s).powf(2.0 * eta - 2.0) * s)
    };

    let mut exterior = Vec::with_capacity(times.len());
    let mut interior = Vec::with_capacity(times.len());
    let mut ext_src = Vec::with_capacity(times.len());
    let mut ext_signed = Vec::with_capacity(times.len());
    let mut ext_bulk = Vec::with_capacity(times.len());
    let mut int_src = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let p = traj.pair(field, i);
        let e = energy_density(p, mf);
        exterior.push(weighted_integral(&e, ext_w(t)));
        interior.push(weighted_integral(&e, int_w(t)));
        let fu = traj.field_source(field, i).dot(&p.ut);
        let mut abs_fu = fu.clone();
        abs_fu.data_mut().mapv_inplace(f64::abs);
        ext_src.push(weighted_integral(&abs_fu, ext_w(t)));
        ext_signed.push(weighted_integral(&fu, ext_w(t)));
        int_src.push(weighted_integral(&abs_fu, int_w(t)));
        let mut ghost = good_derivative_density(p);
        if mf != 0.0 {
            ghost = ghost.add(&p.u.dot(&p.u).scale(mf * mf));
        }
        ext_bulk.push(weighted_integral(&ghost, bulk_w(t)));
    }
    let p0 = traj.pair(field, 0);
    let exterior_data = weighted_integral(&energy_density(p0, mf), |x1, x2| bracket(x1.hypot(x2)).powf(2.0 * eta));
    Ok(ExteriorEnergy {
        exterior_source: running_trapezoid(&times, &ext_src),
        exterior_signed_source: running_trapezoid(&times, &ext_signed),
        exterior_bulk: running_trapezoid(&times, &ext_bulk),
        interior_source: running_trapezoid(&times, &int_src),
        interior_data: energy(p0, m)?,
        times,
        exterior,
        exterior_data,
        interior,
    })
}
