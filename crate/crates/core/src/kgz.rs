//! The coupled Klein-Gordon-Zakharov evolution
//!
//! ```text
//! -box E + E = -n E,      -box n = Laplacian |E|^2,
//! ```
//!
//! stepped either through the divergence-form potential `n = Laplacian n_delta`
//! with `-box n_delta = |E|^2`, or directly on `n`. The same Strang stepping
//! core drives the Picard solution map, which freezes the sources at those of
//! a guessed trajectory.

use std::sync::Arc;

use num_complex::Complex64;

use crate::energy::xnorm::picard_distance;
use crate::error::{KgzError, Result};
use crate::grid::{laplacian, Field, FieldPair, Grid, Spectrum};
use crate::propagator::{instability_limit, step_count, LinearOperator};
use crate::vector_fields::TimeJet;

/// Threshold defining the effective support radius of initial data.
pub const SUPPORT_THRESHOLD: f64 = 1e-14;
/// Relative tolerance of the `n = Laplacian n_delta` consistency check.
pub const DELTA_CONSISTENCY_TOL: f64 = 1e-8;

/// Shape of the initial profiles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProfileKind {
    Gaussian,
    /// Gaussian cross-section centred on a circle of the given radius.
    Ring { radius: f64 },
}

/// Parametric initial data: `E0 = eps (G, G/2)`, `E1 = 0`, `n0_delta = eps G`,
/// `n1_delta = 0`, where `G` is the profile with standard deviation `width`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataProfile {
    pub kind: ProfileKind,
    pub amplitude: f64,
    pub width: f64,
    pub center: (f64, f64),
}

impl DataProfile {
    pub fn gaussian(amplitude: f64, width: f64) -> DataProfile {
        DataProfile { kind: ProfileKind::Gaussian, amplitude, width, center: (0.0, 0.0) }
    }

    pub fn sample(&self, x1: f64, x2: f64) -> f64 {
        let r = (x1 - self.center.0).hypot(x2 - self.center.1);
        let s = match self.kind {
            ProfileKind::Gaussian => r,
            ProfileKind::Ring { radius } => r - radius,
        };
        (-(s * s) / (2.0 * self.width * self.width)).exp()
    }
}

/// Cauchy data `(E0, E1, n0_delta, n1_delta)`; `n0, n1` are their Laplacians.
#[derive(Clone, Debug)]
pub struct InitialData {
    pub e0: Field,
    pub e1: Field,
    pub n0_delta: Field,
    pub n1_delta: Field,
    n0: Field,
    n1: Field,
    support_radius: f64,
}

impl InitialData {
    pub fn new(e0: Field, e1: Field, n0_delta: Field, n1_delta: Field) -> Result<InitialData> {
        if e0.components() != 2 || n0_delta.components() != 1 {
            return Err(KgzError::ShapeMismatch(
                "E data needs 2 components and n_delta data 1 component".into(),
            ));
        }
        e0.ensure_same_shape(&e1, "E0 and E1 differ in shape")?;
        n0_delta.ensure_same_shape(&n1_delta, "n0_delta and n1_delta differ in shape")?;
        if *e0.grid() != *n0_delta.grid() {
            return Err(KgzError::ShapeMismatch("E and n data live on different grids".into()));
        }
        for (f, name) in [(&e0, "E0"), (&e1, "E1"), (&n0_delta, "n0_delta"), (&n1_delta, "n1_delta")] {
            f.check_finite(name)?;
        }
        let n0 = laplacian(&n0_delta);
        let n1 = laplacian(&n1_delta);
        let support_radius = [&e0, &e1, &n0_delta, &n1_delta, &n0, &n1]
            .iter()
            .map(|f| f.support_radius(SUPPORT_THRESHOLD))
            .fold(0.0, f64::max);
        Ok(InitialData { e0, e1, n0_delta, n1_delta, n0, n1, support_radius })
    }

    pub fn zeros(grid: &Arc<Grid>) -> InitialData {
        InitialData::new(
            Field::zeros(grid, 2),
            Field::zeros(grid, 2),
            Field::zeros(grid, 1),
            Field::zeros(grid, 1),
        )
        .expect("zero data is valid")
    }

    pub fn from_profile(grid: &Arc<Grid>, p: &DataProfile) -> Result<InitialData> {
        if !(p.width > 0.0) {
            return Err(KgzError::InvalidArgument(format!("profile width must be positive, got {}", p.width)));
        }
        let eps = p.amplitude;
        let e0 = Field::from_fn(grid, 2, |c, x, y| {
            let w = if c == 0 { 1.0 } else { 0.5 };
            w * eps * p.sample(x, y)
        });
        let n0_delta = Field::from_fn(grid, 1, |_, x, y| eps * p.sample(x, y));
        InitialData::new(e0, Field::zeros(grid, 2), n0_delta, Field::zeros(grid, 1))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.e0.grid()
    }

    pub fn n0(&self) -> &Field {
        &self.n0
    }

    pub fn n1(&self) -> &Field {
        &self.n1
    }

    /// Radius outside which every data sample is below [`SUPPORT_THRESHOLD`].
    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Data with `(E0, E1)` replaced by `(-E0, -E1)`.
    pub fn negate_e(&self) -> InitialData {
        InitialData { e0: self.e0.scale(-1.0), e1: self.e1.scale(-1.0), ..self.clone() }
    }

    pub fn e_pair(&self) -> FieldPair {
        FieldPair { u: self.e0.clone(), ut: self.e1.clone() }
    }

    pub fn state(&self) -> KgzState {
        KgzState {
            e: self.e_pair(),
            n: FieldPair { u: self.n0.clone(), ut: self.n1.clone() },
            n_delta: FieldPair { u: self.n0_delta.clone(), ut: self.n1_delta.clone() },
            t: 0.0,
        }
    }
}

/// Full simulation state at one time.
#[derive(Clone, Debug)]
pub struct KgzState {
    pub e: FieldPair,
    pub n: FieldPair,
    pub n_delta: FieldPair,
    pub t: f64,
}

impl KgzState {
    pub fn grid(&self) -> &Arc<Grid> {
        self.e.grid()
    }

    pub fn max_abs(&self) -> f64 {
        self.e.max_abs().max(self.n.max_abs()).max(self.n_delta.max_abs())
    }

    /// Checks `Laplacian n_delta = n` for positions and velocities.
    pub fn check_delta_consistency(&self) -> Result<()> {
        for (d, n, what) in [(&self.n_delta.u, &self.n.u, "n"), (&self.n_delta.ut, &self.n.ut, "dt n")] {
            let scale = n.max_abs();
            let err = laplacian(d).sub(n).max_abs();
            if err > DELTA_CONSISTENCY_TOL * scale.max(f64::MIN_POSITIVE) && err > 1e-300 {
                return Err(KgzError::Invariant(format!(
                    "Laplacian n_delta differs from {what} by {err:.3e} (scale {scale:.3e}) at t = {}",
                    self.t
                )));
            }
        }
        Ok(())
    }
}

/// Sources `Q = -n E` and `|E|^2` evaluated at one time.
#[derive(Clone, Debug)]
pub struct Sources {
    pub q: Field,
    pub e_sq: Field,
}

impl Sources {
    pub fn zeros(grid: &Arc<Grid>) -> Sources {
        Sources { q: Field::zeros(grid, 2), e_sq: Field::zeros(grid, 1) }
    }
}

/// Dealiased positions `(E, n)` at one step midpoint, the inputs of that
/// step's source kick.
#[derive(Clone, Debug)]
pub struct MidpointSample {
    pub t: f64,
    pub e: Field,
    pub n: Field,
}

impl MidpointSample {
    pub fn sources(&self) -> Sources {
        products(&self.e, &self.n)
    }
}

/// Per-step norms of the sources at the kick time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceNorms {
    pub t: f64,
    /// `||Q||_{H^s}` for `s = 0, 1, 2`.
    pub q: [f64; 3],
    pub e_sq_l2: f64,
}

impl SourceNorms {
    /// `||Q||_{H^s}` for integer `s` in 0..=2.
    pub fn q_norm(&self, s: f64) -> Option<f64> {
        let i = s.round();
        if (s - i).abs() > 1e-12 || !(0.0..=2.0).contains(&i) {
            None
        } else {
            Some(self.q[i as usize])
        }
    }
}

/// How the sources acting on a trajectory are evaluated at snapshot times.
#[derive(Clone, Debug)]
pub enum Forcing {
    /// Sources computed from the trajectory's own state.
    SelfConsistent,
    /// No sources: free evolution.
    Free,
    /// Sources frozen from another trajectory, one entry per snapshot.
    Prescribed(Vec<Sources>),
}

/// Which field of the coupled system carries `n` through the time stepping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WaveFormulation {
    /// Step `n_delta` with source `|E|^2`; `n = Laplacian n_delta`.
    Divergence,
    /// Step `n` with source `Laplacian |E|^2`.
    Direct,
}

/// Knobs for [`evolve_with`].
#[derive(Clone, Copy, Debug)]
pub struct EvolveOptions {
    pub snap_every: usize,
    /// Keep the dealiased midpoint positions of every step (needed by the
    /// Picard map and for source dumps).
    pub record_midpoints: bool,
    /// Accumulate `sum_k S_1(-t_k)(0, dt Q_k)` at each snapshot.
    pub track_duhamel: bool,
    pub formulation: WaveFormulation,
    /// Enforce the `T + R < L` wrap-free window.
    pub check_window: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            snap_every: 1,
            record_midpoints: false,
            track_duhamel: false,
            formulation: WaveFormulation::Divergence,
            check_window: true,
        }
    }
}

/// Time-ordered snapshots of the coupled evolution plus source history.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: Arc<Grid>,
    pub dt: f64,
    pub snap_every: usize,
    pub states: Vec<KgzState>,
    pub forcing: Forcing,
    /// Kick-time source norms, one per step.
    pub source_norms: Vec<SourceNorms>,
    /// Kick-time positions, one per step, when recorded.
    pub midpoints: Option<Vec<MidpointSample>>,
    /// Pulled-back Duhamel accumulator at each snapshot, when tracked.
    pub duhamel: Option<Vec<FieldPair>>,
    /// Support radius of the initial data.
    pub support_radius: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.states.last().map_or(0.0, |s| s.t)
    }

    pub fn snapshot_dt(&self) -> f64 {
        self.dt * self.snap_every as f64
    }

    pub fn steps(&self) -> usize {
        self.source_norms.len()
    }

    /// Index of the snapshot closest to `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let i = (t / self.snapshot_dt()).round().max(0.0) as usize;
        i.min(self.states.len() - 1)
    }

    /// Sources acting at snapshot `i`.
    pub fn sources_at(&self, i: usize) -> Sources {
        match &self.forcing {
            Forcing::SelfConsistent => {
                let s = &self.states[i];
                products(&dealiased(&s.e.u), &dealiased(&s.n.u))
            }
            Forcing::Free => Sources::zeros(&self.grid),
            Forcing::Prescribed(v) => v[i].clone(),
        }
    }

    /// Time derivatives of the sources at snapshot `i`, when known.
    fn source_rates_at(&self, i: usize) -> Option<Sources> {
        match &self.forcing {
            Forcing::SelfConsistent => {
                let s = &self.states[i];
                let (e, et) = (dealiased(&s.e.u), dealiased(&s.e.ut));
                let (n, nt) = (dealiased(&s.n.u), dealiased(&s.n.ut));
                let q = dealiased(&et.mul_scalar_field(&n).add(&e.mul_scalar_field(&nt)).scale(-1.0));
                let e_sq = dealiased(&e.dot(&et).scale(2.0));
                Some(Sources { q, e_sq })
            }
            Forcing::Free => Some(Sources::zeros(&self.grid)),
            Forcing::Prescribed(_) => None,
        }
    }

    /// Jet of `E` (levels `E, dt E, dt^2 E` and `dt^3 E` when available).
    pub fn e_jet(&self, i: usize) -> TimeJet {
        let s = &self.states[i];
        let src = self.sources_at(i);
        let mut levels = vec![s.e.u.clone(), s.e.ut.clone()];
        levels.push(laplacian(&s.e.u).sub(&s.e.u).add(&src.q));
        if let Some(rate) = self.source_rates_at(i) {
            levels.push(laplacian(&s.e.ut).sub(&s.e.ut).add(&rate.q));
        }
        TimeJet::new(s.t, levels)
    }

    /// Jet of `n_delta`.
    pub fn n_delta_jet(&self, i: usize) -> TimeJet {
        let s = &self.states[i];
        let src = self.sources_at(i);
        let mut levels = vec![s.n_delta.u.clone(), s.n_delta.ut.clone()];
        levels.push(laplacian(&s.n_delta.u).add(&src.e_sq));
        if let Some(rate) = self.source_rates_at(i) {
            levels.push(laplacian(&s.n_delta.ut).add(&rate.e_sq));
        }
        TimeJet::new(s.t, levels)
    }

    /// Jet of `n`.
    pub fn n_jet(&self, i: usize) -> TimeJet {
        let s = &self.states[i];
        let src = self.sources_at(i);
        let mut levels = vec![s.n.u.clone(), s.n.ut.clone()];
        levels.push(laplacian(&s.n.u.add(&src.e_sq)));
        if let Some(rate) = self.source_rates_at(i) {
            levels.push(laplacian(&s.n.ut.add(&rate.e_sq)));
        }
        TimeJet::new(s.t, levels)
    }

    pub fn jet(&self, field: FieldSelector, i: usize) -> TimeJet {
        match field {
            FieldSelector::E => self.e_jet(i),
            FieldSelector::N => self.n_jet(i),
            FieldSelector::NDelta => self.n_delta_jet(i),
        }
    }

    /// The pair `(u, dt u)` of the selected field at snapshot `i`.
    pub fn pair(&self, field: FieldSelector, i: usize) -> &FieldPair {
        let s = &self.states[i];
        match field {
            FieldSelector::E => &s.e,
            FieldSelector::N => &s.n,
            FieldSelector::NDelta => &s.n_delta,
        }
    }

    /// The source of the selected field's equation at snapshot `i`.
    pub fn field_source(&self, field: FieldSelector, i: usize) -> Field {
        let src = self.sources_at(i);
        match field {
            FieldSelector::E => src.q,
            FieldSelector::N => laplacian(&src.e_sq),
            FieldSelector::NDelta => src.e_sq,
        }
    }
}

/// Selects one field of a [`Trajectory`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldSelector {
    E,
    N,
    NDelta,
}

impl FieldSelector {
    /// Mass of the field's linear operator.
    pub fn mass(self) -> u8 {
        match self {
            FieldSelector::E => 1,
            FieldSelector::N | FieldSelector::NDelta => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldSelector::E => "E",
            FieldSelector::N => "n",
            FieldSelector::NDelta => "n_delta",
        }
    }
}

/// Projection onto the 2/3-rule band.
pub fn dealiased(f: &Field) -> Field {
    let g = Arc::clone(f.grid());
    let mut s = g.forward(f);
    s.dealias();
    g.inverse(&s)
}

/// `(Q, |E|^2) = (-n E, E.E)` from band-limited inputs, projected onto the
/// 2/3-rule band.
pub fn products(e: &Field, n: &Field) -> Sources {
    Sources { q: dealiased(&e.mul_scalar_field(n).scale(-1.0)), e_sq: dealiased(&e.dot(e)) }
}

/// Where the kick sources come from during stepping.
enum Driver<'a> {
    SelfConsistent,
    Free,
    Guess(&'a Trajectory),
}

struct SpectralState {
    e: Spectrum,
    et: Spectrum,
    w: Spectrum,
    wt: Spectrum,
}

fn neg_k2(g: &Grid, j1: usize, j2: usize) -> f64 {
    let k = g.wavenumbers();
    -(k[j1] * k[j1] + k[j2] * k[j2])
}

fn dealias_copy(s: &Spectrum) -> Spectrum {
    let mut c = s.clone();
    c.dealias();
    c
}

fn add_scaled(target: &mut Spectrum, src: &Spectrum, a: f64) {
    target.data_mut().zip_mut_with(src.data(), |t, &s| *t += s * a);
}

fn integrate(
    data: &InitialData,
    horizon: f64,
    dt: f64,
    opts: &EvolveOptions,
    driver: Driver<'_>,
) -> Result<Trajectory> {
    let grid = Arc::clone(data.grid());
    let steps = step_count(horizon, dt)?;
    if opts.snap_every == 0 || steps % opts.snap_every != 0 {
        return Err(KgzError::InvalidArgument(format!(
            "snap_every = {} must divide the step count {steps}",
            opts.snap_every
        )));
    }
    if opts.check_window && horizon + data.support_radius() >= grid.half_width() {
        return Err(KgzError::InvalidArgument(format!(
            "T + R = {:.3} must stay below L = {} to avoid wrap-around",
            horizon + data.support_radius(),
            grid.half_width()
        )));
    }
    if let Driver::Guess(g) = &driver {
        let mids = g.midpoints.as_ref().ok_or_else(|| {
            KgzError::InvalidArgument("guess trajectory has no recorded midpoints".into())
        })?;
        if *g.grid != *grid
            || mids.len() != steps
            || (g.dt - dt).abs() > 1e-12 * dt
            || g.snap_every != opts.snap_every
        {
            return Err(KgzError::ShapeMismatch("guess grid or time horizon differs".into()));
        }
    }

    let kg = LinearOperator::klein_gordon(&grid);
    let wave = LinearOperator::wave(&grid);
    let kg_half = kg.coefficients(0.5 * dt);
    let wave_half = wave.coefficients(0.5 * dt);
    let formulation = opts.formulation;

    let (w0, w1) = match formulation {
        WaveFormulation::Divergence => (&data.n0_delta, &data.n1_delta),
        WaveFormulation::Direct => (&data.n0, &data.n1),
    };
    let mut st = SpectralState {
        e: grid.forward(&data.e0),
        et: grid.forward(&data.e1),
        w: grid.forward(w0),
        wt: grid.forward(w1),
    };

    let initial = data.state();
    let reference = initial.max_abs();
    let mut states = Vec::with_capacity(steps / opts.snap_every + 1);
    states.push(initial);
    let mut source_norms = Vec::with_capacity(steps);
    let mut midpoints = opts.record_midpoints.then(|| Vec::with_capacity(steps));
    let mut duhamel_acc = opts.track_duhamel.then(|| (Spectrum::zeros(&grid, 2), Spectrum::zeros(&grid, 2)));
    let mut duhamel = opts.track_duhamel.then(|| vec![FieldPair::zeros(&grid, 2)]);
    let mut prescribed = match driver {
        Driver::Guess(_) => Some(Vec::with_capacity(states.capacity())),
        _ => None,
    };
    if let (Some(p), Driver::Guess(g)) = (prescribed.as_mut(), &driver) {
        p.push(g.sources_at(0));
    }

    for k in 0..steps {
        let t_mid = (k as f64 + 0.5) * dt;
        kg.step_spectral(&kg_half, &mut st.e, &mut st.et);
        wave.step_spectral(&wave_half, &mut st.w, &mut st.wt);

        let own_mid = || {
            let e = grid.inverse(&dealias_copy(&st.e));
            let n_spec = match formulation {
                WaveFormulation::Divergence => {
                    let g2 = Arc::clone(&grid);
                    dealias_copy(&st.w).map(|j1, j2| Complex64::new(neg_k2(&g2, j1, j2), 0.0))
                }
                WaveFormulation::Direct => dealias_copy(&st.w),
            };
            MidpointSample { t: t_mid, e, n: grid.inverse(&n_spec) }
        };
        let mid = match (&driver, opts.record_midpoints) {
            (Driver::SelfConsistent, _) | (_, true) => Some(own_mid()),
            _ => None,
        };
        let src = match &driver {
            Driver::SelfConsistent => mid.as_ref().expect("own midpoint").sources(),
            Driver::Free => Sources::zeros(&grid),
            Driver::Guess(g) => g.midpoints.as_ref().expect("checked above")[k].sources(),
        };
        src.q.check_finite("source -nE")?;
        src.e_sq.check_finite("source |E|^2")?;

        let q_spec = grid.forward(&src.q);
        let p_spec = grid.forward(&src.e_sq);
        source_norms.push(SourceNorms {
            t: t_mid,
            q: [0.0, 1.0, 2.0].map(|s| q_spec.weighted_sum_sq(|k2| (1.0 + k2).powf(s)).sqrt()),
            e_sq_l2: src.e_sq.l2_norm(),
        });
        add_scaled(&mut st.et, &q_spec, dt);
        match formulation {
            WaveFormulation::Divergence => add_scaled(&mut st.wt, &p_spec, dt),
            WaveFormulation::Direct => {
                let g2 = Arc::clone(&grid);
                let lap = p_spec.map(|j1, j2| Complex64::new(neg_k2(&g2, j1, j2), 0.0));
                add_scaled(&mut st.wt, &lap, dt);
            }
        }
        if let Some((au, aut)) = duhamel_acc.as_mut() {
            // S_1(-t_mid) applied to (0, dt Q)
            let pull = kg.coefficients(-t_mid);
            let mut pu = Spectrum::zeros(&grid, 2);
            let mut put = q_spec.clone();
            put.data_mut().mapv_inplace(|v| v * dt);
            kg.step_spectral(&pull, &mut pu, &mut put);
            add_scaled(au, &pu, 1.0);
            add_scaled(aut, &put, 1.0);
        }
        if let (Some(m), Some(s)) = (midpoints.as_mut(), mid) {
            m.push(s);
        }

        kg.step_spectral(&kg_half, &mut st.e, &mut st.et);
        wave.step_spectral(&wave_half, &mut st.w, &mut st.wt);

        if (k + 1) % opts.snap_every == 0 {
            let t = (k + 1) as f64 * dt;
            let state = snapshot(&grid, &st, formulation, t);
            if !(state.e.is_finite() && state.n.is_finite() && state.n_delta.is_finite()) {
                return Err(KgzError::NonFinite(format!("state at t = {t}")));
            }
            let norm = state.max_abs();
            if reference > 0.0 && norm > instability_limit(reference) {
                return Err(KgzError::Unstable { t, norm, limit: instability_limit(reference) });
            }
            state.check_delta_consistency()?;
            states.push(state);
            if let (Some(d), Some((au, aut))) = (duhamel.as_mut(), duhamel_acc.as_ref()) {
                d.push(FieldPair { u: grid.inverse(au), ut: grid.inverse(aut) });
            }
            if let (Some(p), Driver::Guess(g)) = (prescribed.as_mut(), &driver) {
                p.push(g.sources_at(states.len() - 1));
            }
        }
    }

    let forcing = match driver {
        Driver::SelfConsistent => Forcing::SelfConsistent,
        Driver::Free => Forcing::Free,
        Driver::Guess(_) => Forcing::Prescribed(prescribed.expect("guess sources")),
    };
    Ok(Trajectory {
        grid,
        dt,
        snap_every: opts.snap_every,
        states,
        forcing,
        source_norms,
        midpoints,
        duhamel,
        support_radius: data.support_radius(),
    })
}

fn snapshot(grid: &Arc<Grid>, st: &SpectralState, formulation: WaveFormulation, t: f64) -> KgzState {
    let g2 = Arc::clone(grid);
    let lap = |s: &Spectrum| s.map(|j1, j2| Complex64::new(neg_k2(&g2, j1, j2), 0.0));
    let e = FieldPair { u: grid.inverse(&st.e), ut: grid.inverse(&st.et) };
    let (n, n_delta) = match formulation {
        WaveFormulation::Divergence => (
            FieldPair { u: grid.inverse(&lap(&st.w)), ut: grid.inverse(&lap(&st.wt)) },
            FieldPair { u: grid.inverse(&st.w), ut: grid.inverse(&st.wt) },
        ),
        WaveFormulation::Direct => {
            // zero-mean inverse Laplacian recovers a potential for n
            let inv = |s: &Spectrum| {
                s.map(|j1, j2| {
                    let m = neg_k2(&g2, j1, j2);
                    Complex64::new(if m == 0.0 { 0.0 } else { 1.0 / m }, 0.0)
                })
            };
            let zero_mean = |s: &Spectrum| {
                let mut c = s.clone();
                c.data_mut()[[0, 0, 0]] = Complex64::new(0.0, 0.0);
                c
            };
            (
                FieldPair { u: grid.inverse(&zero_mean(&st.w)), ut: grid.inverse(&zero_mean(&st.wt)) },
                FieldPair { u: grid.inverse(&inv(&st.w)), ut: grid.inverse(&inv(&st.wt)) },
            )
        }
    };
    KgzState { e, n, n_delta, t }
}

/// Evolves the coupled system with `n` carried through `n_delta`.
pub fn evolve(data: &InitialData, horizon: f64, dt: f64) -> Result<Trajectory> {
    evolve_with(data, horizon, dt, &EvolveOptions::default())
}

pub fn evolve_with(data: &InitialData, horizon: f64, dt: f64, opts: &EvolveOptions) -> Result<Trajectory> {
    integrate(data, horizon, dt, opts, Driver::SelfConsistent)
}

/// Evolves the coupled system stepping `n` directly with source `Laplacian |E|^2`.
///
/// The stored `n_delta` is the zero-mean inverse Laplacian of `n`, and `n`
/// itself carries no zero mode (the source and `n0 = Laplacian n0_delta` have none).
pub fn evolve_direct_n(data: &InitialData, horizon: f64, dt: f64) -> Result<Trajectory> {
    let opts = EvolveOptions { formulation: WaveFormulation::Direct, ..EvolveOptions::default() };
    integrate(data, horizon, dt, &opts, Driver::SelfConsistent)
}

/// Free (source-off) evolution of the data.
pub fn evolve_free(data: &InitialData, horizon: f64, dt: f64, opts: &EvolveOptions) -> Result<Trajectory> {
    integrate(data, horizon, dt, opts, Driver::Free)
}

/// The solution map: solves the linear equations driven by the sources of
/// `guess`, from the fixed initial data. The result records its own midpoints
/// so that it can serve as the next guess.
pub fn picard_map(guess: &Trajectory, data: &InitialData) -> Result<Trajectory> {
    let opts = EvolveOptions {
        snap_every: guess.snap_every,
        record_midpoints: true,
        ..EvolveOptions::default()
    };
    integrate(data, guess.steps() as f64 * guess.dt, guess.dt, &opts, Driver::Guess(guess))
}

/// Outcome of [`picard_solve`].
#[derive(Clone, Debug)]
pub struct PicardResult {
    pub trajectory: Trajectory,
    /// `d(x_{k+1}, x_k) / d(x_k, x_{k-1})` for each iteration that has both.
    pub contraction_ratios: Vec<f64>,
    /// `d(x_{k+1}, x_k)` per iteration.
    pub distances: Vec<f64>,
    pub iterations: usize,
}

/// Parameters of [`picard_solve`].
#[derive(Clone, Copy, Debug)]
pub struct PicardOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub snap_every: usize,
    /// Ghost-weight exponent used in the distance.
    pub delta: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions { max_iter: 20, tol: 1e-10, snap_every: 1, delta: 0.1 }
    }
}

/// Iterates [`picard_map`] from the free evolution until successive iterates
/// are closer than `tol` in the truncated solution-space distance.
pub fn picard_solve(data: &InitialData, horizon: f64, dt: f64, opts: &PicardOptions) -> Result<PicardResult> {
    if opts.max_iter < 2 {
        return Err(KgzError::InvalidArgument(format!("max_iter must be >= 2, got {}", opts.max_iter)));
    }
    let evolve_opts = EvolveOptions {
        snap_every: opts.snap_every,
        record_midpoints: true,
        ..EvolveOptions::default()
    };
    let mut current = evolve_free(data, horizon, dt, &evolve_opts)?;
    let mut distances = Vec::new();
    let mut ratios = Vec::new();
    for iter in 1..=opts.max_iter {
        let next = picard_map(&current, data)?;
        let d = picard_distance(&next, &current, opts.delta);
        if let Some(&prev) = distances.last() {
            ratios.push(if prev > 0.0 { d / prev } else { 0.0 });
        }
        distances.push(d);
        current = next;
        if d < opts.tol {
            return Ok(PicardResult { trajectory: current, contraction_ratios: ratios, distances, iterations: iter });
        }
    }
    Err(KgzError::NoConvergence { iterations: opts.max_iter, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn small_grid() -> Arc<Grid> {
        make_grid(64, 10.0).unwrap()
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = small_grid();
        let d = InitialData::zeros(&g);
        for tr in [evolve(&d, 1.0, 0.1).unwrap(), evolve_direct_n(&d, 1.0, 0.1).unwrap()] {
            assert_eq!(tr.states.len(), 11);
            assert!(tr.states.iter().all(|s| s.max_abs() == 0.0));
        }
    }

    #[test]
    fn zero_electric_field_decouples() {
        let g = small_grid();
        let n0d = Field::from_fn(&g, 1, |_, x, y| 1e-2 * (-(x * x + y * y) / 2.0).exp());
        let d = InitialData::new(Field::zeros(&g, 2), Field::zeros(&g, 2), n0d, Field::zeros(&g, 1)).unwrap();
        let tr = evolve(&d, 1.0, 0.1).unwrap();
        let wave = LinearOperator::wave(&g);
        let free = wave.free_step(&FieldPair { u: d.n0().clone(), ut: d.n1().clone() }, 1.0);
        let last = tr.states.last().unwrap();
        assert_eq!(last.e.max_abs(), 0.0);
        assert!(last.n.sub(&free).max_abs() < 1e-13);
        let direct = evolve_direct_n(&d, 1.0, 0.1).unwrap();
        assert!(direct.states.last().unwrap().n.sub(&free).max_abs() < 1e-13);
    }

    #[test]
    fn window_and_snapshot_checks() {
        let g = small_grid();
        let d = InitialData::from_profile(&g, &DataProfile::gaussian(1e-2, 1.0)).unwrap();
        assert!(d.support_radius() > 5.0 && d.support_radius() < 9.0);
        assert!(evolve(&d, 5.0, 0.1).is_err());
        let opts = EvolveOptions { snap_every: 3, ..EvolveOptions::default() };
        assert!(evolve_with(&d, 1.0, 0.1, &opts).is_err());
    }

    #[test]
    fn delta_consistency_detects_mismatch() {
        let g = small_grid();
        let d = InitialData::from_profile(&g, &DataProfile::gaussian(1e-2, 1.0)).unwrap();
        let mut s = d.state();
        assert!(s.check_delta_consistency().is_ok());
        s.n.u = s.n.u.scale(1.01);
        assert!(matches!(s.check_delta_consistency(), Err(KgzError::Invariant(_))));
    }

    #[test]
    fn picard_rejects_bad_inputs() {
        let g = small_grid();
        let d = InitialData::zeros(&g);
        let opts = PicardOptions { max_iter: 1, ..PicardOptions::default() };
        assert!(picard_solve(&d, 1.0, 0.1, &opts).is_err());
        let plain = evolve(&d, 1.0, 0.1).unwrap();
        assert!(picard_map(&plain, &d).is_err());
    }

    #[test]
    fn zero_data_picard_converges_at_once() {
        let g = small_grid();
        let d = InitialData::zeros(&g);
        let r = picard_solve(&d, 1.0, 0.1, &PicardOptions::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.trajectory.states.iter().all(|s| s.max_abs() == 0.0));
    }
}
