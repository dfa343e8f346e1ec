//! Exact mode-wise propagators for `-box u + m^2 u = 0` with `m` in {0, 1},
//! and a Strang-split integrator for the forced equation.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{KgzError, Result};
use crate::grid::{Field, FieldPair, Grid, Spectrum};

/// Free linear wave (`m = 0`) or Klein-Gordon (`m = 1`) operator on a grid.
#[derive(Clone, Debug)]
pub struct LinearOperator {
    grid: Arc<Grid>,
    mass: f64,
    /// `omega(k) = sqrt(|k|^2 + m^2)`, row-major over `(k2, k1)`.
    omega: Vec<f64>,
}

/// Per-mode coefficients of the propagator over one fixed time increment.
#[derive(Clone, Debug)]
pub struct StepCoefficients {
    dt: f64,
    cos: Vec<f64>,
    /// `sin(omega dt) / omega`, equal to `dt` on a zero frequency.
    sin_over_omega: Vec<f64>,
    /// `omega sin(omega dt)`
    omega_sin: Vec<f64>,
}

impl StepCoefficients {
    pub fn dt(&self) -> f64 {
        self.dt
    }
}

impl LinearOperator {
    pub fn new(grid: &Arc<Grid>, mass: u8) -> Result<LinearOperator> {
        if mass > 1 {
            return Err(KgzError::InvalidArgument(format!("mass must be 0 or 1, got {mass}")));
        }
        let m = mass as f64;
        let k = grid.wavenumbers();
        let n = grid.points_per_axis();
        let omega = (0..n * n)
            .map(|idx| {
                let (j2, j1) = (idx / n, idx % n);
                (k[j1] * k[j1] + k[j2] * k[j2] + m * m).sqrt()
            })
            .collect();
        Ok(LinearOperator { grid: Arc::clone(grid), mass: m, omega })
    }

    pub fn wave(grid: &Arc<Grid>) -> LinearOperator {
        LinearOperator::new(grid, 0).expect("mass 0 is valid")
    }

    pub fn klein_gordon(grid: &Arc<Grid>) -> LinearOperator {
        LinearOperator::new(grid, 1).expect("mass 1 is valid")
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn omega(&self, j1: usize, j2: usize) -> f64 {
        self.omega[j2 * self.grid.points_per_axis() + j1]
    }

    pub fn coefficients(&self, dt: f64) -> StepCoefficients {
        let mut cos = Vec::with_capacity(self.omega.len());
        let mut sin_over_omega = Vec::with_capacity(self.omega.len());
        let mut omega_sin = Vec::with_capacity(self.omega.len());
        for &w in &self.omega {
            let (s, c) = (w * dt).sin_cos();
            cos.push(c);
            sin_over_omega.push(if w == 0.0 { dt } else { s / w });
            omega_sin.push(w * s);
        }
        StepCoefficients { dt, cos, sin_over_omega, omega_sin }
    }

    /// Advances a spectral pair in place.
    pub fn step_spectral(&self, coeffs: &StepCoefficients, u: &mut Spectrum, ut: &mut Spectrum) {
        let n2 = self.omega.len();
        let comps = u.components();
        let ud = u.data_mut().as_slice_mut().expect("contiguous spectrum");
        let vd = ut.data_mut().as_slice_mut().expect("contiguous spectrum");
        for c in 0..comps {
            for idx in 0..n2 {
                let a = ud[c * n2 + idx];
                let b = vd[c * n2 + idx];
                ud[c * n2 + idx] = coeffs.cos[idx] * a + coeffs.sin_over_omega[idx] * b;
                vd[c * n2 + idx] = -coeffs.omega_sin[idx] * a + coeffs.cos[idx] * b;
            }
        }
    }

    /// Exact free evolution over `dt` (any sign).
    pub fn free_step(&self, p: &FieldPair, dt: f64) -> FieldPair {
        self.free_step_with(&self.coefficients(dt), p)
    }

    pub fn free_step_with(&self, coeffs: &StepCoefficients, p: &FieldPair) -> FieldPair {
        let g = &self.grid;
        let mut u = g.forward(&p.u);
        let mut ut = g.forward(&p.ut);
        self.step_spectral(coeffs, &mut u, &mut ut);
        FieldPair { u: g.inverse(&u), ut: g.inverse(&ut) }
    }

    /// One Strang step: half free step, velocity kick `ut += dt F(t + dt/2)`,
    /// half free step.
    pub fn forced_step<F>(&self, p: &FieldPair, mut source: F, t: f64, dt: f64) -> Result<FieldPair>
    where
        F: FnMut(f64) -> Field,
    {
        if !(dt > 0.0) {
            return Err(KgzError::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let half = self.coefficients(0.5 * dt);
        self.forced_step_with(&half, p, &mut source, t)
    }

    fn forced_step_with(
        &self,
        half: &StepCoefficients,
        p: &FieldPair,
        source: &mut dyn FnMut(f64) -> Field,
        t: f64,
    ) -> Result<FieldPair> {
        let dt = 2.0 * half.dt;
        let g = &self.grid;
        let mut u = g.forward(&p.u);
        let mut ut = g.forward(&p.ut);
        self.step_spectral(half, &mut u, &mut ut);
        let f = source(t + 0.5 * dt);
        f.check_finite("source")?;
        p.u.ensure_same_shape(&f, "source shape differs from field")?;
        let fs = g.forward(&f);
        ut.data_mut().zip_mut_with(fs.data(), |v, &s| *v += s * Complex64::new(dt, 0.0));
        self.step_spectral(half, &mut u, &mut ut);
        Ok(FieldPair { u: g.inverse(&u), ut: g.inverse(&ut) })
    }
}

/// Time-stamped sequence of states of a linear evolution.
#[derive(Clone, Debug)]
pub struct LinearTrajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<FieldPair>,
}

/// Number of steps of size `dt` covering `[0, horizon]`, rejecting
/// horizons that `dt` does not divide.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(KgzError::InvalidArgument(format!(
            "need horizon > 0 and dt > 0, got {horizon} and {dt}"
        )));
    }
    let steps = (horizon / dt).round();
    if (steps * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(KgzError::InvalidArgument(format!("dt = {dt} does not divide T = {horizon}")));
    }
    Ok(steps as usize)
}

pub(crate) fn instability_limit(initial: f64) -> f64 {
    1e6 * initial
}

/// Solves `-box u + m^2 u = F` on `[0, horizon]` from `data`.
pub fn solve_linear<F>(
    op: &LinearOperator,
    data: &FieldPair,
    mut source: F,
    horizon: f64,
    dt: f64,
) -> Result<LinearTrajectory>
where
    F: FnMut(f64) -> Field,
{
    let steps = step_count(horizon, dt)?;
    let half = op.coefficients(0.5 * dt);
    let mut reference = data.max_abs();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(data.clone());
    for k in 0..steps {
        let t = k as f64 * dt;
        let next = op.forced_step_with(&half, &states[k], &mut source, t)?;
        if !next.is_finite() {
            return Err(KgzError::NonFinite(format!("linear solution at t = {}", t + dt)));
        }
        let norm = next.max_abs();
        if reference == 0.0 {
            reference = norm;
        } else if norm > instability_limit(reference) {
            return Err(KgzError::Unstable { t: t + dt, norm, limit: instability_limit(reference) });
        }
        times.push((k + 1) as f64 * dt);
        states.push(next);
    }
    Ok(LinearTrajectory { dt, times, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn cos_pair(g: &Arc<Grid>) -> FieldPair {
        FieldPair::new(Field::from_fn(g, 1, |_, x, _| x.cos()), Field::zeros(g, 1)).unwrap()
    }

    #[test]
    fn single_mode_klein_gordon() {
        let g = make_grid(16, PI).unwrap();
        let op = LinearOperator::klein_gordon(&g);
        let t = 1.7;
        let out = op.free_step(&cos_pair(&g), t);
        let w = 2f64.sqrt();
        let expect = Field::from_fn(&g, 1, |_, x, _| (w * t).cos() * x.cos());
        let expect_t = Field::from_fn(&g, 1, |_, x, _| -w * (w * t).sin() * x.cos());
        assert!(out.u.sub(&expect).max_abs() < 1e-13);
        assert!(out.ut.sub(&expect_t).max_abs() < 1e-13);
    }

    #[test]
    fn zero_step_and_group_property() {
        let g = make_grid(16, 4.0).unwrap();
        let op = LinearOperator::klein_gordon(&g);
        let p = FieldPair::new(
            Field::from_fn(&g, 2, |c, x, y| (-(x * x + y * y)).exp() * (1.0 + c as f64)),
            Field::from_fn(&g, 2, |_, x, y| x * (-(x * x + y * y)).exp()),
        )
        .unwrap();
        let id = op.free_step(&p, 0.0);
        assert!(id.sub(&p).max_abs() < 1e-14);
        let back = op.free_step(&op.free_step(&p, 0.37), -0.37);
        assert!(back.sub(&p).max_abs() < 1e-12);
        let a = op.free_step(&op.free_step(&p, 0.2), 0.5);
        let b = op.free_step(&p, 0.7);
        assert!(a.sub(&b).max_abs() < 1e-12);
    }

    #[test]
    fn mass_must_be_zero_or_one() {
        let g = make_grid(8, 1.0).unwrap();
        assert!(LinearOperator::new(&g, 2).is_err());
        let kg = LinearOperator::klein_gordon(&g);
        assert!((0..8).all(|a| (0..8).all(|b| kg.omega(a, b) > 0.0)));
        assert_eq!(LinearOperator::wave(&g).omega(0, 0), 0.0);
    }

    #[test]
    fn zero_source_matches_free_step() {
        let g = make_grid(16, PI).unwrap();
        let op = LinearOperator::klein_gordon(&g);
        let p = cos_pair(&g);
        let a = op.forced_step(&p, |_| Field::zeros(&g, 1), 0.0, 0.3).unwrap();
        let b = op.free_step(&p, 0.3);
        assert!(a.sub(&b).max_abs() < 1e-14);
        assert!(op.forced_step(&p, |_| Field::zeros(&g, 1), 0.0, 0.0).is_err());
    }

    #[test]
    fn wave_zero_mode_grows_linearly() {
        let g = make_grid(8, 1.0).unwrap();
        let op = LinearOperator::wave(&g);
        let p = FieldPair::new(Field::zeros(&g, 1), Field::from_fn(&g, 1, |_, _, _| 1.0)).unwrap();
        let tr = solve_linear(&op, &p, |_| Field::zeros(&g, 1), 2.0, 0.25).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let expect = Field::from_fn(&g, 1, |_, _, _| *t);
            assert!(s.u.sub(&expect).max_abs() < 1e-13);
            assert!((s.ut.max_abs() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn non_finite_source_is_rejected() {
        let g = make_grid(8, 1.0).unwrap();
        let op = LinearOperator::klein_gordon(&g);
        let p = FieldPair::zeros(&g, 1);
        let r = op.forced_step(&p, |_| Field::from_fn(&g, 1, |_, _, _| f64::NAN), 0.0, 0.1);
        assert!(matches!(r, Err(KgzError::NonFinite(_))));
    }

    #[test]
    fn forced_step_is_second_order() {
        // Constant source c cos(x1) on a KG mode with omega = sqrt(2):
        // u = (a - c/2) cos(w t) cos(x1) + c/2 cos(x1).
        let g = make_grid(16, PI).unwrap();
        let op = LinearOperator::klein_gordon(&g);
        let c = 0.8;
        let src = Field::from_fn(&g, 1, |_, x, _| c * x.cos());
        let p = cos_pair(&g);
        let horizon = 3.0;
        let w = 2f64.sqrt();
        let exact = Field::from_fn(&g, 1, |_, x, _| {
            ((1.0 - c / 2.0) * (w * horizon).cos() + c / 2.0) * x.cos()
        });
        let err = |dt: f64| {
            let tr = solve_linear(&op, &p, |_| src.clone(), horizon, dt).unwrap();
            tr.states.last().unwrap().u.sub(&exact).max_abs()
        };
        let (e1, e2, e3) = (err(0.1), err(0.05), err(0.025));
        let o1 = (e1 / e2).log2();
        let o2 = (e2 / e3).log2();
        assert!(o1 >= 1.9 && o2 >= 1.9, "orders {o1} {o2}");
    }

    #[test]
    fn strang_step_is_reversible_for_symmetric_source() {
        let g = make_grid(32, 6.0).unwrap();
        let op = LinearOperator::klein_gordon(&g);
        let p = FieldPair::new(
            Field::from_fn(&g, 1, |_, x, y| (-(x * x + y * y)).exp()),
            Field::from_fn(&g, 1, |_, x, y| 0.3 * y * (-(x * x + y * y)).exp()),
        )
        .unwrap();
        let (t0, dt) = (0.4, 0.2);
        let mid = t0 + dt / 2.0;
        // source symmetric in time about the interval midpoint
        let src = |t: f64| {
            let a = 1.0 + (t - mid).powi(2);
            Field::from_fn(&g, 1, move |_, x, y| a * (-(x - 1.0).powi(2) - y * y).exp())
        };
        let fwd = op.forced_step(&p, src, t0, dt).unwrap();
        let back = op.forced_step(&fwd.flip_velocity(), src, t0, dt).unwrap().flip_velocity();
        assert!(back.sub(&p).max_abs() < 1e-10);
    }

    #[test]
    fn unstable_growth_aborts() {
        let g = make_grid(8, 1.0).unwrap();
        let op = LinearOperator::klein_gordon(&g);
        let p = FieldPair::new(Field::from_fn(&g, 1, |_, _, _| 1e-3), Field::zeros(&g, 1)).unwrap();
        let r = solve_linear(&op, &p, |t| Field::from_fn(&g, 1, move |_, _, _| 1e6 * t), 1.0, 0.1);
        assert!(matches!(r, Err(KgzError::Unstable { .. })));
        assert!(solve_linear(&op, &p, |_| Field::zeros(&g, 1), 1.0, 0.3).is_err());
    }
}
