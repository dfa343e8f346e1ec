//! Klainerman vector fields on snapshots.
//!
//! A [`TimeJet`] holds `u, dt u, dt^2 u, ...` at one time, with the higher
//! time derivatives supplied by the field equation. Every generator maps a jet
//! to a jet: spatial generators act level by level, while `dt` and the boosts
//! `L_a = x_a dt + t d_a` consume one level, via
//!
//! ```text
//! dt^j (L_a u) = x_a u_{j+1} + t d_a u_j + j d_a u_{j-1}.
//! ```

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{KgzError, Result};
use crate::grid::{apply_partial, laplacian, Field, Grid};

/// Cap on the length of a word.
pub const MAX_ORDER: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gamma {
    Dt,
    D1,
    D2,
    Omega,
    L1,
    L2,
}

impl Gamma {
    pub const ALL: [Gamma; 6] = [Gamma::Dt, Gamma::D1, Gamma::D2, Gamma::Omega, Gamma::L1, Gamma::L2];

    /// Time levels consumed by one application.
    pub fn level_cost(self) -> usize {
        match self {
            Gamma::Dt | Gamma::L1 | Gamma::L2 => 1,
            _ => 0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Gamma::Dt => "dt",
            Gamma::D1 => "d1",
            Gamma::D2 => "d2",
            Gamma::Omega => "O12",
            Gamma::L1 => "L1",
            Gamma::L2 => "L2",
        }
    }
}

/// A product `Gamma_{i1} ... Gamma_{ik}`, applied right to left.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GammaWord(Vec<Gamma>);

impl GammaWord {
    pub fn new(letters: Vec<Gamma>) -> Result<GammaWord> {
        if letters.len() > MAX_ORDER {
            return Err(KgzError::InvalidArgument(format!(
                "word of order {} exceeds the cap {MAX_ORDER}",
                letters.len()
            )));
        }
        Ok(GammaWord(letters))
    }

    pub fn identity() -> GammaWord {
        GammaWord(Vec::new())
    }

    pub fn single(g: Gamma) -> GammaWord {
        GammaWord(vec![g])
    }

    pub fn letters(&self) -> &[Gamma] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn level_cost(&self) -> usize {
        self.0.iter().map(|g| g.level_cost()).sum()
    }

    /// Every word of order `<= max_order`, identity first.
    pub fn all_up_to(max_order: usize) -> Vec<GammaWord> {
        let mut out = vec![GammaWord::identity()];
        let mut frontier = vec![GammaWord::identity()];
        for _ in 0..max_order.min(MAX_ORDER) {
            let mut next = Vec::new();
            for w in &frontier {
                for g in Gamma::ALL {
                    let mut l = vec![g];
                    l.extend_from_slice(&w.0);
                    next.push(GammaWord(l));
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }
}

impl fmt::Display for GammaWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("1");
        }
        let s: Vec<&str> = self.0.iter().map(|g| g.symbol()).collect();
        f.write_str(&s.join("*"))
    }
}

impl FromStr for GammaWord {
    type Err = KgzError;

    fn from_str(s: &str) -> Result<GammaWord> {
        let s = s.trim();
        if s == "1" || s.is_empty() {
            return Ok(GammaWord::identity());
        }
        let letters = s
            .split('*')
            .map(|p| {
                Gamma::ALL
                    .into_iter()
                    .find(|g| g.symbol() == p.trim())
                    .ok_or_else(|| KgzError::InvalidArgument(format!("unknown vector field `{p}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        GammaWord::new(letters)
    }
}

/// Values and time derivatives of a field at one time.
#[derive(Clone, Debug)]
pub struct TimeJet {
    t: f64,
    levels: Vec<Field>,
}

impl TimeJet {
    /// `levels[j] = dt^j u`; all levels share one shape.
    pub fn new(t: f64, levels: Vec<Field>) -> TimeJet {
        assert!(!levels.is_empty(), "a jet needs at least one level");
        assert!(levels.iter().all(|l| l.same_shape(&levels[0])), "jet levels differ in shape");
        TimeJet { t, levels }
    }

    /// Jet of a solution of `dt^2 u = Laplacian u - m^2 u + F` from `u, dt u`
    /// and the forcing jet `F, dt F, ...`; gains one level per forcing level.
    pub fn from_equation(t: f64, u: &Field, ut: &Field, mass: f64, forcing: &[Field]) -> TimeJet {
        let mut levels = vec![u.clone(), ut.clone()];
        for (j, f) in forcing.iter().enumerate() {
            let prev = &levels[j];
            let next = laplacian(prev).sub(&prev.scale(mass * mass)).add(f);
            levels.push(next);
        }
        TimeJet::new(t, levels)
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn levels(&self) -> &[Field] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn value(&self) -> &Field {
        &self.levels[0]
    }

    pub fn level(&self, j: usize) -> Option<&Field> {
        self.levels.get(j)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.levels[0].grid()
    }

    /// Drops levels beyond `depth`.
    pub fn truncate(mut self, depth: usize) -> TimeJet {
        self.levels.truncate(depth.max(1));
        self
    }

    /// Levelwise difference, keeping the levels both jets have.
    pub fn sub(&self, other: &TimeJet) -> TimeJet {
        let levels = self.levels.iter().zip(&other.levels).map(|(a, b)| a.sub(b)).collect();
        TimeJet { t: self.t, levels }
    }

    /// Applies one generator.
    pub fn apply(&self, g: Gamma) -> Result<TimeJet> {
        let need = g.level_cost() + 1;
        if self.depth() < need {
            return Err(KgzError::Budget { needed: need, available: self.depth() });
        }
        let t = self.t;
        let levels = match g {
            Gamma::Dt => self.levels[1..].to_vec(),
            Gamma::D1 => self.levels.iter().map(|l| d(l, 1)).collect(),
            Gamma::D2 => self.levels.iter().map(|l| d(l, 2)).collect(),
            Gamma::Omega => self.levels.iter().map(rotation).collect(),
            Gamma::L1 | Gamma::L2 => {
                let a = if g == Gamma::L1 { 1 } else { 2 };
                let grads: Vec<Field> = self.levels.iter().map(|l| d(l, a)).collect();
                (0..self.depth() - 1)
                    .map(|j| {
                        let mut out = times_coord(&self.levels[j + 1], a);
                        out.axpy(t, &grads[j]);
                        if j > 0 {
                            out.axpy(j as f64, &grads[j - 1]);
                        }
                        out
                    })
                    .collect()
            }
        };
        Ok(TimeJet { t, levels })
    }

    pub fn apply_word(&self, word: &GammaWord) -> Result<TimeJet> {
        if self.depth() < word.level_cost() + 1 {
            return Err(KgzError::Budget { needed: word.level_cost() + 1, available: self.depth() });
        }
        let mut j = self.clone();
        for &g in word.letters().iter().rev() {
            j = j.apply(g)?;
        }
        Ok(j)
    }
}

/// Alias matching the jet terminology of the diagnostics.
pub type JetField = TimeJet;

fn d(f: &Field, axis: usize) -> Field {
    let g = Arc::clone(f.grid());
    let mut s = g.forward(f);
    apply_partial(&mut s, axis);
    g.inverse(&s)
}

fn times_coord(f: &Field, axis: usize) -> Field {
    if axis == 1 {
        f.mul_fn(|x1, _| x1)
    } else {
        f.mul_fn(|_, x2| x2)
    }
}

fn rotation(f: &Field) -> Field {
    times_coord(&d(f, 2), 1).sub(&times_coord(&d(f, 1), 2))
}

/// `Gamma^I u` at the jet's time.
pub fn apply_gamma(word: &GammaWord, jet: &TimeJet) -> Result<Field> {
    Ok(jet.apply_word(word)?.levels.swap_remove(0))
}

/// Evaluates many words on one jet, sharing common suffixes. The result is in
/// the order of `words`.
pub fn apply_gamma_all(words: &[GammaWord], jet: &TimeJet) -> Result<Vec<TimeJet>> {
    use std::collections::HashMap;
    let mut cache: HashMap<Vec<Gamma>, TimeJet> = HashMap::new();
    cache.insert(Vec::new(), jet.clone());
    let mut out = Vec::with_capacity(words.len());
    for w in words {
        if jet.depth() < w.level_cost() + 1 {
            return Err(KgzError::Budget { needed: w.level_cost() + 1, available: jet.depth() });
        }
        let l = w.letters();
        for k in (0..l.len()).rev() {
            let key = l[k..].to_vec();
            if !cache.contains_key(&key) {
                let base = cache[&l[k + 1..]].clone();
                cache.insert(key.clone(), base.apply(l[k])?);
            }
        }
        out.push(cache[l].clone());
    }
    Ok(out)
}

/// `1 / sqrt(r^2 + h^2)`: the regularized inverse radius used in the good
/// derivatives.
pub fn regularized_inverse_radius(g: &Grid, x1: f64, x2: f64) -> f64 {
    let h = g.spacing();
    1.0 / (x1 * x1 + x2 * x2 + h * h).sqrt()
}

/// `G_a u = (x_a / r) dt u + d_a u` with `r` replaced by `sqrt(r^2 + h^2)`.
pub fn good_derivative(a: usize, jet: &TimeJet) -> Result<Field> {
    if a != 1 && a != 2 {
        return Err(KgzError::InvalidArgument(format!("good derivative index must be 1 or 2, got {a}")));
    }
    if jet.depth() < 2 {
        return Err(KgzError::Budget { needed: 2, available: jet.depth() });
    }
    let g = Arc::clone(jet.grid());
    let radial = jet.levels[1].mul_fn(|x1, x2| {
        let xa = if a == 1 { x1 } else { x2 };
        xa * regularized_inverse_radius(&g, x1, x2)
    });
    Ok(radial.add(&d(&jet.levels[0], a)))
}

/// Max-norm residuals of the first-order commutator identities.
#[derive(Clone, Debug, PartialEq)]
pub struct CommutatorReport {
    /// `(name, residual)` for each identity checked.
    pub residuals: Vec<(String, f64)>,
    /// Max-norm of the field, the natural scale of the residuals.
    pub scale: f64,
}

impl CommutatorReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }

    /// Largest residual relative to the field scale (0 for a zero field).
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            self.max_residual() / self.scale
        }
    }
}

/// Checks `[dt, L_b] = d_b`, `[d_a, L_b] = delta_ab dt`, `[dt, Omega] = 0`,
/// `[d_1, Omega] = d_2` and `[d_2, Omega] = -d_1` on the jet, each side
/// evaluated independently.
pub fn check_commutators(jet: &TimeJet) -> Result<CommutatorReport> {
    if jet.depth() < 3 {
        return Err(KgzError::Budget { needed: 3, available: jet.depth() });
    }
    let word = |ls: &[Gamma]| GammaWord(ls.to_vec());
    let eval = |ls: &[Gamma]| apply_gamma(&word(ls), jet);
    let comm = |a: Gamma, b: Gamma| -> Result<Field> { Ok(eval(&[a, b])?.sub(&eval(&[b, a])?)) };
    let zero = Field::zeros(jet.grid(), jet.value().components());
    let mut residuals = Vec::new();
    let ls = [(Gamma::L1, Gamma::D1), (Gamma::L2, Gamma::D2)];
    for (l, db) in ls {
        residuals.push((format!("[dt,{}]-{}", l.symbol(), db.symbol()), comm(Gamma::Dt, l)?.sub(&eval(&[db])?).max_abs()));
        for da in [Gamma::D1, Gamma::D2] {
            let same = (da == Gamma::D1) == (l == Gamma::L1);
            let rhs = if same { eval(&[Gamma::Dt])? } else { zero.clone() };
            residuals.push((
                format!("[{},{}]-delta*dt", da.symbol(), l.symbol()),
                comm(da, l)?.sub(&rhs).max_abs(),
            ));
        }
    }
    residuals.push(("[dt,O12]".into(), comm(Gamma::Dt, Gamma::Omega)?.max_abs()));
    residuals.push(("[d1,O12]-d2".into(), comm(Gamma::D1, Gamma::Omega)?.sub(&eval(&[Gamma::D2])?).max_abs()));
    residuals.push(("[d2,O12]+d1".into(), comm(Gamma::D2, Gamma::Omega)?.add(&eval(&[Gamma::D1])?).max_abs()));
    let scale = jet.levels.iter().map(|l| l.max_abs()).fold(0.0, f64::max);
    Ok(CommutatorReport { residuals, scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::propagator::LinearOperator;
    use crate::grid::FieldPair;

    fn gauss(g: &Arc<Grid>, x0: f64, y0: f64) -> Field {
        Field::from_fn(g, 1, |_, x, y| (-((x - x0).powi(2) + (y - y0).powi(2)) / 2.0).exp())
    }

    #[test]
    fn rotation_kills_radial_fields() {
        let g = make_grid(64, 10.0).unwrap();
        let jet = TimeJet::new(0.0, vec![gauss(&g, 0.0, 0.0)]);
        let w = GammaWord::single(Gamma::Omega);
        assert!(apply_gamma(&w, &jet).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn boost_of_coordinate_is_t() {
        // u = x1 windowed far from the origin so the window's slope stays out of view
        let g = make_grid(96, 20.0).unwrap();
        let u = Field::from_fn(&g, 1, |_, x, y| x * (-(x * x + y * y) / 8.0).exp());
        let jet = TimeJet::new(2.5, vec![u, Field::zeros(&g, 1)]);
        let l1 = apply_gamma(&GammaWord::single(Gamma::L1), &jet).unwrap();
        // exact: t * d1 u, which equals t at the origin
        let i0 = 48;
        assert!((l1.data()[[0, i0, i0]] - 2.5).abs() < 1e-10);
    }

    #[test]
    fn budget_is_enforced() {
        let g = make_grid(16, 1.0).unwrap();
        let jet = TimeJet::new(0.0, vec![Field::zeros(&g, 1), Field::zeros(&g, 1)]);
        let w: GammaWord = "L1*dt".parse().unwrap();
        assert!(matches!(apply_gamma(&w, &jet), Err(KgzError::Budget { needed: 3, available: 2 })));
        assert!(GammaWord::new(vec![Gamma::Dt; 3]).is_err());
    }

    #[test]
    fn word_parsing_round_trips() {
        for w in GammaWord::all_up_to(2) {
            assert_eq!(w.to_string().parse::<GammaWord>().unwrap(), w);
        }
        assert_eq!(GammaWord::all_up_to(2).len(), 43);
    }

    #[test]
    fn cached_evaluation_matches_direct() {
        let g = make_grid(32, 6.0).unwrap();
        let u = gauss(&g, 0.5, -0.3);
        let jet = TimeJet::from_equation(1.0, &u, &u.scale(0.3), 1.0, &[Field::zeros(&g, 1)]);
        let words = GammaWord::all_up_to(2);
        let all = apply_gamma_all(&words, &jet.clone().truncate(3)).unwrap();
        for (w, j) in words.iter().zip(&all) {
            let direct = apply_gamma(w, &jet).unwrap();
            assert!(direct.sub(j.value()).max_abs() < 1e-14, "{w}");
        }
    }

    #[test]
    fn good_derivative_of_constant_vanishes_and_is_finite_at_origin() {
        let g = make_grid(16, 4.0).unwrap();
        let c = Field::from_fn(&g, 1, |_, _, _| 3.0);
        let jet = TimeJet::new(0.0, vec![c, Field::zeros(&g, 1)]);
        for a in [1, 2] {
            let ga = good_derivative(a, &jet).unwrap();
            assert!(ga.max_abs() < 1e-13);
        }
        let u = gauss(&g, 0.0, 0.0);
        let jet = TimeJet::new(0.0, vec![u.clone(), u]);
        assert!(good_derivative(1, &jet).unwrap().is_finite());
    }

    #[test]
    fn commutators_on_polynomial_and_zero() {
        let g = make_grid(96, 20.0).unwrap();
        let w = |x: f64, y: f64| (-(x * x + y * y) / 8.0).exp();
        let u = Field::from_fn(&g, 1, |_, x, y| x * y * w(x, y));
        let jet = TimeJet::from_equation(0.7, &u, &u.scale(-0.2), 1.0, &[Field::zeros(&g, 1)]);
        let rep = check_commutators(&jet).unwrap();
        assert!(rep.relative() < 1e-8, "{rep:?}");
        let z = TimeJet::new(0.0, vec![Field::zeros(&g, 1); 3]);
        assert_eq!(check_commutators(&z).unwrap().max_residual(), 0.0);
    }

    #[test]
    fn boost_commutes_with_free_flow() {
        let g = make_grid(64, 16.0).unwrap();
        let op = LinearOperator::klein_gordon(&g);
        let u0 = gauss(&g, 1.0, 0.0);
        let p0 = FieldPair { u: u0.clone(), ut: Field::zeros(&g, 1) };
        let jet0 = TimeJet::from_equation(0.0, &p0.u, &p0.ut, 1.0, &[Field::zeros(&g, 1)]);
        // (L1 u, dt L1 u) at t = 0 propagated freely equals L1 of the evolved jet
        let w = GammaWord::single(Gamma::L1);
        let lj = jet0.apply_word(&w).unwrap();
        let lp = FieldPair { u: lj.levels()[0].clone(), ut: lj.levels()[1].clone() };
        let t = 1.5;
        let moved = op.free_step(&lp, t);
        let p1 = op.free_step(&p0, t);
        let jet1 = TimeJet::from_equation(t, &p1.u, &p1.ut, 1.0, &[Field::zeros(&g, 1)]);
        let direct = apply_gamma(&w, &jet1).unwrap();
        assert!(direct.sub(&moved.u).max_abs() < 1e-6 * direct.max_abs());
    }
}
