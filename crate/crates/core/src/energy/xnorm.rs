//! Terms of the solution-space norm for a pair `(V, u) = (E, n)`.
//!
//! Every term is a running supremum over time of a weighted norm of
//! `Gamma^I V` or `Gamma^I u`, maximised over words. Word orders are capped at
//! 2 ("truncated"); the full norm commutes many more vector fields.

use std::fmt;
use std::str::FromStr;

use crate::error::{KgzError, Result};
use crate::grid::{gradient, Field, FieldPair};
use crate::kgz::{FieldSelector, Trajectory};
use crate::vector_fields::{apply_gamma_all, GammaWord, TimeJet, MAX_ORDER};

use super::{bracket, chi, energy, good_derivative_density, weighted_integral, DiagnosticsReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum XTerm {
    /// `<t>^-d (||G u|| + E_gst,1(G V)^1/2)`
    WaveL2KgGhost,
    /// `<t>^-d/2 (int_0^t ||G V / (<tau>^d/2 <tau - r>^{1/2 + d/2})||^2)^1/2`
    KgSpacetime,
    /// `<t>^-d ||<t + r> / <t - r> G V||`
    KgConformal,
    /// `E_gst(G u)^1/2`
    WaveGhost,
    /// `E_gst,1(G V)^1/2`
    KgGhost,
    /// `<t>^-d ||(1 - chi(r - 2t))^1/2 <t - r> G u||`
    WaveInterior,
    /// `||(1 - chi(r - 2t))^1/2 <t - r>^{1-d} G u||`
    WaveInteriorSharp,
    /// `<t>^{-1/2-d} ||chi(r - t)^1/2 <t - r> G u||`
    WaveExteriorGrowing,
    /// `<t>^-d ||chi(r - t)^1/2 <t - r> G u||`
    WaveExterior,
    /// `<t>^{-1/2-d} (||chi^1/2 <t - r> d G V|| + ||chi^1/2 <t - r> G V||)`
    KgExteriorGrowing,
    /// `<t>^-d (||chi^1/2 <t - r> d G V|| + ||chi^1/2 <t - r> G V||)`
    KgExterior,
    /// `sup_x <t + r> |G V|`
    KgPointwise,
    /// `sup_x <t - r>^-1 <t + r>^2 |G V|`
    KgPointwiseInterior,
    /// `sup_x <t - r>^{1-d} <t + r>^1/2 |G u| + chi(r - t) <t + r>^{5/4-d} |G V|`
    MixedPointwise,
}

impl XTerm {
    pub const ALL: [XTerm; 14] = [
        XTerm::WaveL2KgGhost,
        XTerm::KgSpacetime,
        XTerm::KgConformal,
        XTerm::WaveGhost,
        XTerm::KgGhost,
        XTerm::WaveInterior,
        XTerm::WaveInteriorSharp,
        XTerm::WaveExteriorGrowing,
        XTerm::WaveExterior,
        XTerm::KgExteriorGrowing,
        XTerm::KgExterior,
        XTerm::KgPointwise,
        XTerm::KgPointwiseInterior,
        XTerm::MixedPointwise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            XTerm::WaveL2KgGhost => "wave_l2_kg_ghost",
            XTerm::KgSpacetime => "kg_spacetime",
            XTerm::KgConformal => "kg_conformal",
            XTerm::WaveGhost => "wave_ghost",
            XTerm::KgGhost => "kg_ghost",
            XTerm::WaveInterior => "wave_interior",
            XTerm::WaveInteriorSharp => "wave_interior_sharp",
            XTerm::WaveExteriorGrowing => "wave_exterior_growing",
            XTerm::WaveExterior => "wave_exterior",
            XTerm::KgExteriorGrowing => "kg_exterior_growing",
            XTerm::KgExterior => "kg_exterior",
            XTerm::KgPointwise => "kg_pointwise",
            XTerm::KgPointwiseInterior => "kg_pointwise_interior",
            XTerm::MixedPointwise => "mixed_pointwise",
        }
    }

    fn uses_wave(self) -> bool {
        matches!(
            self,
            XTerm::WaveL2KgGhost
                | XTerm::WaveGhost
                | XTerm::WaveInterior
                | XTerm::WaveInteriorSharp
                | XTerm::WaveExteriorGrowing
                | XTerm::WaveExterior
                | XTerm::MixedPointwise
        )
    }

    fn uses_kg(self) -> bool {
        !matches!(
            self,
            XTerm::WaveGhost
                | XTerm::WaveInterior
                | XTerm::WaveInteriorSharp
                | XTerm::WaveExteriorGrowing
                | XTerm::WaveExterior
        )
    }
}

impl fmt::Display for XTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for XTerm {
    type Err = KgzError;

    fn from_str(s: &str) -> Result<XTerm> {
        XTerm::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| KgzError::UnknownTerm(s.to_string()))
    }
}

/// One requested term: its weight, the word-order cap and `delta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightSpec {
    pub term: XTerm,
    pub order: usize,
    pub delta: f64,
}

impl WeightSpec {
    pub fn new(term: XTerm, order: usize, delta: f64) -> Result<WeightSpec> {
        if order > MAX_ORDER {
            return Err(KgzError::InvalidArgument(format!("word order {order} exceeds the cap {MAX_ORDER}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(KgzError::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(WeightSpec { term, order, delta })
    }

    /// Parses a term name; order and `delta` are supplied separately.
    pub fn parse(name: &str, order: usize, delta: f64) -> Result<WeightSpec> {
        WeightSpec::new(name.parse()?, order, delta)
    }

    pub fn all(order: usize, delta: f64) -> Result<Vec<WeightSpec>> {
        XTerm::ALL.into_iter().map(|t| WeightSpec::new(t, order, delta)).collect()
    }

    /// Column label, marking the order cap.
    pub fn label(&self) -> String {
        format!("{}|I|<={}", self.term.name(), self.order)
    }
}

/// Per-word quantities at one time.
struct WordData {
    order: usize,
    value: Field,
    pair: Option<FieldPair>,
}

fn word_data(words: &[GammaWord], jet: &TimeJet) -> Result<Vec<WordData>> {
    let jets = apply_gamma_all(words, jet)?;
    Ok(words
        .iter()
        .zip(jets)
        .map(|(w, j)| {
            let pair = (j.depth() >= 2).then(|| FieldPair { u: j.levels()[0].clone(), ut: j.levels()[1].clone() });
            WordData { order: w.order(), value: j.levels()[0].clone(), pair }
        })
        .collect())
}

fn weighted_norm(f: &Field, w: impl Fn(f64, f64) -> f64) -> f64 {
    f.weighted_integral_sq(w).sqrt()
}

fn weighted_sup(f: &Field, w: impl Fn(f64, f64) -> f64) -> f64 {
    let g = f.grid();
    let x = g.coords();
    let mag = f.magnitude();
    let d = mag.component(0);
    let mut s = 0.0_f64;
    for ((i2, i1), v) in d.indexed_iter() {
        if *v != 0.0 {
            s = s.max(w(x[i1], x[i2]) * v);
        }
    }
    s
}

/// `sum_alpha ||weight d_alpha f||^2` from a pair.
fn spacetime_gradient_norm(p: &FieldPair, w: impl Fn(f64, f64) -> f64 + Copy) -> f64 {
    let [d1, d2] = gradient(&p.u);
    (p.ut.weighted_integral_sq(w) + d1.weighted_integral_sq(w) + d2.weighted_integral_sq(w)).sqrt()
}

fn ghost_rate(p: &FieldPair, m: f64, t: f64, delta: f64) -> f64 {
    let mut dens = good_derivative_density(p);
    if m != 0.0 {
        dens = dens.add(&p.u.dot(&p.u).scale(m * m));
    }
    weighted_integral(&dens, |x1, x2| delta * bracket(t - x1.hypot(x2)).powf(-1.0 - delta))
}

fn pair_of(d: &WordData) -> Result<&FieldPair> {
    d.pair.as_ref().ok_or(KgzError::Budget { needed: 2, available: 1 })
}

/// Evaluates the requested terms along a trajectory; one column per spec,
/// each the running supremum up to that time.
pub fn xnorm_terms(traj: &Trajectory, specs: &[WeightSpec]) -> Result<DiagnosticsReport> {
    if specs.windows(2).any(|w| w[0].delta != w[1].delta) {
        return Err(KgzError::InvalidArgument("all terms of one report must share delta".into()));
    }
    let times = traj.times();
    let mut report = DiagnosticsReport::new(times.clone());
    let kg_order = specs.iter().filter(|s| s.term.uses_kg()).map(|s| s.order).max();
    let wave_order = specs.iter().filter(|s| s.term.uses_wave()).map(|s| s.order).max();
    let kg_words = kg_order.map(GammaWord::all_up_to).unwrap_or_default();
    let wave_words = wave_order.map(GammaWord::all_up_to).unwrap_or_default();

    // running integrals per word: ghost (kg, wave), spacetime (kg)
    let mut kg_ghost = vec![(0.0, 0.0); kg_words.len()];
    let mut wave_ghost = vec![(0.0, 0.0); wave_words.len()];
    let mut kg_st = vec![(0.0, 0.0); kg_words.len()];
    let mut sups = vec![0.0_f64; specs.len()];
    let mut columns = vec![Vec::with_capacity(times.len()); specs.len()];
    let mut prev_t = 0.0;

    for (i, &t) in times.iter().enumerate() {
        let dt = t - prev_t;
        prev_t = t;
        let kg = if kg_words.is_empty() { Vec::new() } else { word_data(&kg_words, &traj.e_jet(i))? };
        let wave = if wave_words.is_empty() { Vec::new() } else { word_data(&wave_words, &traj.n_jet(i))? };
        let delta = specs.first().map_or(0.1, |s| s.delta);

        let need_kg_ghost = specs.iter().any(|s| matches!(s.term, XTerm::WaveL2KgGhost | XTerm::KgGhost));
        let need_wave_ghost = specs.iter().any(|s| s.term == XTerm::WaveGhost);
        let need_st = specs.iter().any(|s| s.term == XTerm::KgSpacetime);
        let mut kg_gst_now = vec![0.0; kg.len()];
        let mut wave_gst_now = vec![0.0; wave.len()];
        let mut kg_st_now = vec![0.0; kg.len()];
        for (k, d) in kg.iter().enumerate() {
            if need_kg_ghost {
                let p = pair_of(d)?;
                let rate = ghost_rate(p, 1.0, t, delta);
                let (acc, prev) = kg_ghost[k];
                let acc = if i == 0 { 0.0 } else { acc + 0.5 * dt * (rate + prev) };
                kg_ghost[k] = (acc, rate);
                kg_gst_now[k] = (energy(p, 1)? + acc).sqrt();
            }
            if need_st {
                let rate = d.value.weighted_integral_sq(|x1, x2| {
                    1.0 / (bracket(t).powf(delta) * bracket(t - x1.hypot(x2)).powf(1.0 + delta))
                });
                let (acc, prev) = kg_st[k];
                let acc = if i == 0 { 0.0 } else { acc + 0.5 * dt * (rate + prev) };
                kg_st[k] = (acc, rate);
                kg_st_now[k] = acc.sqrt();
            }
        }
        if need_wave_ghost {
            for (k, d) in wave.iter().enumerate() {
                let p = pair_of(d)?;
                let rate = ghost_rate(p, 0.0, t, delta);
                let (acc, prev) = wave_ghost[k];
                let acc = if i == 0 { 0.0 } else { acc + 0.5 * dt * (rate + prev) };
                wave_ghost[k] = (acc, rate);
                wave_gst_now[k] = (energy(p, 0)? + acc).sqrt();
            }
        }

        for (s, spec) in specs.iter().enumerate() {
            let dl = spec.delta;
            let tb = bracket(t);
            let kgw = || kg.iter().enumerate().filter(|(_, d)| d.order <= spec.order);
            let wvw = || wave.iter().enumerate().filter(|(_, d)| d.order <= spec.order);
            let r = |x1: f64, x2: f64| x1.hypot(x2);
            let ext = |x1: f64, x2: f64| chi(r(x1, x2) - t) * bracket(t - r(x1, x2)).powi(2);
            let mut now = 0.0_f64;
            match spec.term {
                XTerm::WaveL2KgGhost => {
                    // same word on both fields
                    for ((k, _), (_, dw)) in kgw().zip(wvw()) {
                        now = now.max(tb.powf(-dl) * (dw.value.l2_norm() + kg_gst_now[k]));
                    }
                }
                XTerm::KgSpacetime => {
                    for (k, _) in kgw() {
                        now = now.max(tb.powf(-0.5 * dl) * kg_st_now[k]);
                    }
                }
                XTerm::KgConformal => {
                    for (_, d) in kgw() {
                        let w = |x1: f64, x2: f64| (bracket(t + r(x1, x2)) / bracket(t - r(x1, x2))).powi(2);
                        now = now.max(tb.powf(-dl) * weighted_norm(&d.value, w));
                    }
                }
                XTerm::WaveGhost => {
                    for (k, _) in wvw() {
                        now = now.max(wave_gst_now[k]);
                    }
                }
                XTerm::KgGhost => {
                    for (k, _) in kgw() {
                        now = now.max(kg_gst_now[k]);
                    }
                }
                XTerm::WaveInterior | XTerm::WaveInteriorSharp => {
                    let (pow, pre) = if spec.term == XTerm::WaveInterior { (1.0, tb.powf(-dl)) } else { (1.0 - dl, 1.0) };
                    for (_, d) in wvw() {
                        let w = |x1: f64, x2: f64| {
                            (1.0 - chi(r(x1, x2) - 2.0 * t)) * bracket(t - r(x1, x2)).powf(2.0 * pow)
                        };
                        now = now.max(pre * weighted_norm(&d.value, w));
                    }
                }
                XTerm::WaveExteriorGrowing | XTerm::WaveExterior => {
                    let pre = if spec.term == XTerm::WaveExterior { tb.powf(-dl) } else { tb.powf(-0.5 - dl) };
                    for (_, d) in wvw() {
                        now = now.max(pre * weighted_norm(&d.value, ext));
                    }
                }
                XTerm::KgExteriorGrowing | XTerm::KgExterior => {
                    let pre = if spec.term == XTerm::KgExterior { tb.powf(-dl) } else { tb.powf(-0.5 - dl) };
                    for (_, d) in kgw() {
                        let p = pair_of(d)?;
                        now = now.max(pre * (spacetime_gradient_norm(p, ext) + weighted_norm(&d.value, ext)));
                    }
                }
                XTerm::KgPointwise => {
                    for (_, d) in kgw() {
                        now = now.max(weighted_sup(&d.value, |x1, x2| bracket(t + r(x1, x2))));
                    }
                }
                XTerm::KgPointwiseInterior => {
                    for (_, d) in kgw() {
                        now = now.max(weighted_sup(&d.value, |x1, x2| {
                            bracket(t + r(x1, x2)).powi(2) / bracket(t - r(x1, x2))
                        }));
                    }
                }
                XTerm::MixedPointwise => {
                    let wv = |x1: f64, x2: f64| {
                        bracket(t - r(x1, x2)).powf(1.0 - dl) * bracket(t + r(x1, x2)).sqrt()
                    };
                    let kv = |x1: f64, x2: f64| chi(r(x1, x2) - t) * bracket(t + r(x1, x2)).powf(1.25 - dl);
                    for ((_, dk), (_, dw)) in kgw().zip(wvw()) {
                        let a = dw.value.magnitude().mul_fn(wv);
                        let b = dk.value.magnitude().mul_fn(kv);
                        now = now.max(a.add(&b).max_abs());
                    }
                }
            }
            sups[s] = sups[s].max(now);
            columns[s].push(sups[s]);
        }
    }
    for (spec, col) in specs.iter().zip(columns) {
        report.push(spec.label(), col)?;
    }
    report.set_meta("gamma_order_cap", format!("{MAX_ORDER} (truncated)"));
    Ok(report)
}

/// Truncated solution-space distance between two trajectories on one time
/// axis, with words of order `<= 1`:
///
/// ```text
/// sup_t max_I <t>^-d (||G (u - u')|| + E_1(G (V - V'))^1/2)
///   + sup_t max_I <t>^-d ||<t + r> / <t - r> G (V - V')||
/// ```
pub fn picard_distance(a: &Trajectory, b: &Trajectory, delta: f64) -> f64 {
    assert_eq!(a.states.len(), b.states.len(), "trajectories differ in length");
    let words = GammaWord::all_up_to(1);
    let mut first = 0.0_f64;
    let mut second = 0.0_f64;
    for i in 0..a.states.len() {
        let t = a.states[i].t;
        let tb = bracket(t).powf(-delta);
        let de = a.jet(FieldSelector::E, i).sub(&b.jet(FieldSelector::E, i));
        let dn = a.jet(FieldSelector::N, i).sub(&b.jet(FieldSelector::N, i));
        let ke = apply_gamma_all(&words, &de).expect("jets carry three levels");
        let kn = apply_gamma_all(&words, &dn).expect("jets carry three levels");
        for (je, jn) in ke.iter().zip(&kn) {
            let p = FieldPair { u: je.levels()[0].clone(), ut: je.levels()[1].clone() };
            let e1 = energy(&p, 1).expect("finite difference fields");
            first = first.max(tb * (jn.value().l2_norm() + e1.sqrt()));
            let conformal = weighted_norm(je.value(), |x1, x2| {
                let r = x1.hypot(x2);
                (bracket(t + r) / bracket(t - r)).powi(2)
            });
            second = second.max(tb * conformal);
        }
    }
    first + second
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::kgz::{evolve, evolve_free, DataProfile, EvolveOptions, InitialData};

    #[test]
    fn names_round_trip_and_unknown_rejected() {
        for t in XTerm::ALL {
            assert_eq!(t.name().parse::<XTerm>().unwrap(), t);
        }
        assert!(matches!("nope".parse::<XTerm>(), Err(KgzError::UnknownTerm(_))));
        assert!(WeightSpec::new(XTerm::KgGhost, 3, 0.1).is_err());
        assert!(WeightSpec::new(XTerm::KgGhost, 1, 1.0).is_err());
    }

    #[test]
    fn zero_pair_gives_zero_terms() {
        let g = make_grid(32, 8.0).unwrap();
        let tr = evolve(&InitialData::zeros(&g), 1.0, 0.25).unwrap();
        let rep = xnorm_terms(&tr, &WeightSpec::all(2, 0.1).unwrap()).unwrap();
        for (_, c) in &rep.columns {
            assert!(c.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn free_kg_ghost_term_is_nonincreasing() {
        let g = make_grid(128, 20.0).unwrap();
        let d = InitialData::from_profile(&g, &DataProfile::gaussian(1e-2, 1.0)).unwrap();
        let tr = evolve_free(&d, 4.0, 0.1, &EvolveOptions { snap_every: 5, ..Default::default() }).unwrap();
        // the weighted natural energy <t>^-d E_1^1/2 decays since E_1 is conserved
        let mut prev = f64::INFINITY;
        for s in &tr.states {
            let v = bracket(s.t).powf(-0.1) * super::super::energy(&s.e, 1).unwrap().sqrt();
            assert!(v <= prev * (1.0 + 1e-12));
            prev = v;
        }
        // and the truncated term stays finite
        let spec = WeightSpec::new(XTerm::WaveL2KgGhost, 1, 0.1).unwrap();
        let rep = xnorm_terms(&tr, &[spec]).unwrap();
        assert!(rep.columns[0].1.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn distance_is_zero_on_identical_and_positive_otherwise() {
        let g = make_grid(80, 12.0).unwrap();
        let d = InitialData::from_profile(&g, &DataProfile::gaussian(1e-2, 1.0)).unwrap();
        let a = evolve(&d, 1.0, 0.25).unwrap();
        assert_eq!(picard_distance(&a, &a, 0.1), 0.0);
        let b = evolve_free(&d, 1.0, 0.25, &EvolveOptions::default()).unwrap();
        assert!(picard_distance(&a, &b, 0.1) > 0.0);
    }
}
