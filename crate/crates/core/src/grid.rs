//! Periodic box discretization of the plane and spectral calculus on it.
//!
//! The domain `[-L, L)^2` is sampled at `points_per_axis` points per axis.
//! Fields live in physical space; Fourier transforms are an internal detail
//! used for derivatives, norms and the exact linear propagators.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array3, ArrayView2, ArrayViewMut2, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{KgzError, Result};

/// Uniform periodic grid on `[-L, L)^2`.
pub struct Grid {
    n: usize,
    half_width: f64,
    h: f64,
    /// Angular wavenumbers in FFT order: `pi*j/L` for `j = 0..n/2-1, -n/2..-1`.
    k: Vec<f64>,
    x: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("points_per_axis", &self.n)
            .field("half_width", &self.half_width)
            .field("spacing", &self.h)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.half_width == other.half_width
    }
}

/// Builds a grid with `points_per_axis` samples per axis on `[-L, L)^2`.
pub fn make_grid(points_per_axis: usize, half_width: f64) -> Result<Arc<Grid>> {
    Grid::new(points_per_axis, half_width)
}

impl Grid {
    pub fn new(points_per_axis: usize, half_width: f64) -> Result<Arc<Grid>> {
        let n = points_per_axis;
        if n < 8 || n % 2 != 0 {
            return Err(KgzError::InvalidGrid(format!(
                "points_per_axis must be even and >= 8, got {n}"
            )));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(KgzError::InvalidGrid(format!(
                "box half width must be positive, got {half_width}"
            )));
        }
        let h = 2.0 * half_width / n as f64;
        let k = (0..n)
            .map(|j| {
                let j = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                std::f64::consts::PI * j / half_width
            })
            .collect();
        let x = (0..n).map(|j| -half_width + j as f64 * h).collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Arc::new(Grid { n, half_width, h, k, x, fwd, inv }))
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    /// Wavenumbers in FFT storage order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    /// Sample coordinates along either axis.
    pub fn coords(&self) -> &[f64] {
        &self.x
    }

    /// Wavenumber used for first derivatives; the Nyquist mode is dropped so
    /// that derivatives of real fields stay real.
    pub fn derivative_wavenumber(&self, j: usize) -> f64 {
        if j == self.n / 2 {
            0.0
        } else {
            self.k[j]
        }
    }

    /// 2/3-rule mask: modes with `|j| < n/3` on both axes survive.
    pub fn dealias_keep(&self, j: usize) -> bool {
        let m = if j < self.n / 2 { j } else { self.n - j };
        3 * m < self.n
    }

    pub fn radius(&self, i1: usize, i2: usize) -> f64 {
        self.x[i1].hypot(self.x[i2])
    }

    fn fft_rows(&self, buf: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inv } else { &self.fwd };
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(buf, &mut scratch);
    }

    fn transpose(&self, buf: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            for j in (i + 1)..n {
                buf.swap(i * n + j, j * n + i);
            }
        }
    }

    /// In-place 2D transform of an `n x n` row-major buffer. The inverse is
    /// normalized so that forward followed by inverse is the identity.
    pub(crate) fn fft2(&self, buf: &mut [Complex64], inverse: bool) {
        debug_assert_eq!(buf.len(), self.n * self.n);
        self.fft_rows(buf, inverse);
        self.transpose(buf);
        self.fft_rows(buf, inverse);
        self.transpose(buf);
        if inverse {
            let scale = 1.0 / (self.n * self.n) as f64;
            buf.iter_mut().for_each(|c| *c *= scale);
        }
    }

    /// Forward transform of a field. Components are packed two at a time into
    /// one complex transform.
    pub fn forward(self: &Arc<Self>, f: &Field) -> Spectrum {
        assert!(Arc::ptr_eq(self, &f.grid) || **self == *f.grid, "grid mismatch");
        let n = self.n;
        let comps = f.components();
        let mut out = Array3::<Complex64>::zeros((comps, n, n));
        let mut c = 0;
        while c < comps {
            let a = f.data.index_axis(ndarray::Axis(0), c);
            let b = (c + 1 < comps).then(|| f.data.index_axis(ndarray::Axis(0), c + 1));
            let mut buf: Vec<Complex64> = match &b {
                Some(b) => a.iter().zip(b.iter()).map(|(&x, &y)| Complex64::new(x, y)).collect(),
                None => a.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            };
            self.fft2(&mut buf, false);
            if b.is_some() {
                for i2 in 0..n {
                    let m2 = (n - i2) % n;
                    for i1 in 0..n {
                        let m1 = (n - i1) % n;
                        let ck = buf[i2 * n + i1];
                        let cm = buf[m2 * n + m1].conj();
                        out[[c, i2, i1]] = 0.5 * (ck + cm);
                        out[[c + 1, i2, i1]] = Complex64::new(0.0, -0.5) * (ck - cm);
                    }
                }
                c += 2;
            } else {
                for (o, v) in out.index_axis_mut(ndarray::Axis(0), c).iter_mut().zip(buf) {
                    *o = v;
                }
                c += 1;
            }
        }
        Spectrum { grid: Arc::clone(self), data: out }
    }

    /// Inverse transform back to a real field (imaginary round-off dropped).
    pub fn inverse(self: &Arc<Self>, s: &Spectrum) -> Field {
        let n = self.n;
        let comps = s.components();
        let mut out = Array3::<f64>::zeros((comps, n, n));
        let i = Complex64::new(0.0, 1.0);
        let mut c = 0;
        while c < comps {
            let a = s.data.index_axis(ndarray::Axis(0), c);
            let pair = c + 1 < comps;
            let mut buf: Vec<Complex64> = if pair {
                let b = s.data.index_axis(ndarray::Axis(0), c + 1);
                a.iter().zip(b.iter()).map(|(&x, &y)| x + i * y).collect()
            } else {
                a.iter().copied().collect()
            };
            self.fft2(&mut buf, true);
            for (o, v) in out.index_axis_mut(ndarray::Axis(0), c).iter_mut().zip(&buf) {
                *o = v.re;
            }
            if pair {
                for (o, v) in out.index_axis_mut(ndarray::Axis(0), c + 1).iter_mut().zip(&buf) {
                    *o = v.im;
                }
                c += 2;
            } else {
                c += 1;
            }
        }
        Field { grid: Arc::clone(self), data: out }
    }
}

/// Real samples of a scalar (1 component) or vector (2 component) field,
/// stored as `(component, x2, x1)`.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    data: Array3<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>, components: usize) -> Field {
        let n = grid.n;
        Field { grid: Arc::clone(grid), data: Array3::zeros((components, n, n)) }
    }

    /// Samples `f(component, x1, x2)` on the grid.
    pub fn from_fn(grid: &Arc<Grid>, components: usize, mut f: impl FnMut(usize, f64, f64) -> f64) -> Field {
        let n = grid.n;
        let x = &grid.x;
        let data = Array3::from_shape_fn((components, n, n), |(c, i2, i1)| f(c, x[i1], x[i2]));
        Field { grid: Arc::clone(grid), data }
    }

    pub fn from_array(grid: &Arc<Grid>, data: Array3<f64>) -> Result<Field> {
        let n = grid.n;
        let (c, a, b) = data.dim();
        if a != n || b != n || !(c == 1 || c == 2) {
            return Err(KgzError::ShapeMismatch(format!(
                "array shape {:?} does not fit a {n}x{n} grid",
                data.dim()
            )));
        }
        Ok(Field { grid: Arc::clone(grid), data })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.data.dim().0
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<f64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn component(&self, c: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(ndarray::Axis(0), c)
    }

    pub fn component_mut(&mut self, c: usize) -> ArrayViewMut2<'_, f64> {
        self.data.index_axis_mut(ndarray::Axis(0), c)
    }

    /// Single component as a scalar field.
    pub fn scalar(&self, c: usize) -> Field {
        let d = self.component(c).to_owned().insert_axis(ndarray::Axis(0));
        Field { grid: Arc::clone(&self.grid), data: d }
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        *self.grid == *other.grid && self.components() == other.components()
    }

    pub fn ensure_same_shape(&self, other: &Field, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(KgzError::ShapeMismatch(what.to_string()))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(KgzError::NonFinite(what.to_string()))
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Pointwise Euclidean magnitude over components, as a scalar field.
    pub fn magnitude(&self) -> Field {
        let n = self.grid.n;
        let mut out = Array3::zeros((1, n, n));
        for c in 0..self.components() {
            Zip::from(out.index_axis_mut(ndarray::Axis(0), 0))
                .and(self.component(c))
                .for_each(|o, &v| *o += v * v);
        }
        out.mapv_inplace(f64::sqrt);
        Field { grid: Arc::clone(&self.grid), data: out }
    }

    /// `sum |f|^2` times the cell area.
    pub fn integral_sq(&self) -> f64 {
        self.grid.cell_area() * self.data.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.integral_sq().sqrt()
    }

    /// `int w(x1, x2) |f|^2 dx` by cell-area quadrature.
    pub fn weighted_integral_sq(&self, w: impl Fn(f64, f64) -> f64) -> f64 {
        let x = &self.grid.x;
        let n = self.grid.n;
        let mut s = 0.0;
        for i2 in 0..n {
            for i1 in 0..n {
                let mut v2 = 0.0;
                for c in 0..self.components() {
                    let v = self.data[[c, i2, i1]];
                    v2 += v * v;
                }
                if v2 != 0.0 {
                    s += w(x[i1], x[i2]) * v2;
                }
            }
        }
        s * self.grid.cell_area()
    }

    pub fn scale(&self, a: f64) -> Field {
        Field { grid: Arc::clone(&self.grid), data: &self.data * a }
    }

    pub fn add(&self, other: &Field) -> Field {
        assert!(self.same_shape(other), "field shape mismatch in add");
        Field { grid: Arc::clone(&self.grid), data: &self.data + &other.data }
    }

    pub fn sub(&self, other: &Field) -> Field {
        assert!(self.same_shape(other), "field shape mismatch in sub");
        Field { grid: Arc::clone(&self.grid), data: &self.data - &other.data }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Field) {
        assert!(self.same_shape(other), "field shape mismatch in axpy");
        Zip::from(&mut self.data).and(&other.data).for_each(|s, &o| *s += a * o);
    }

    /// Multiplies every component pointwise by `w(x1, x2)`.
    pub fn mul_fn(&self, w: impl Fn(f64, f64) -> f64) -> Field {
        let x = &self.grid.x;
        let mut data = self.data.clone();
        for ((_, i2, i1), v) in data.indexed_iter_mut() {
            *v *= w(x[i1], x[i2]);
        }
        Field { grid: Arc::clone(&self.grid), data }
    }

    /// Pointwise product with a scalar field (broadcast over components).
    pub fn mul_scalar_field(&self, s: &Field) -> Field {
        assert_eq!(s.components(), 1, "multiplier must be scalar");
        assert!(*self.grid == *s.grid, "grid mismatch");
        let mut data = self.data.clone();
        let sv = s.component(0);
        for mut comp in data.outer_iter_mut() {
            Zip::from(&mut comp).and(&sv).for_each(|v, &w| *v *= w);
        }
        Field { grid: Arc::clone(&self.grid), data }
    }

    /// Pointwise dot product over components, as a scalar field.
    pub fn dot(&self, other: &Field) -> Field {
        assert!(self.same_shape(other), "field shape mismatch in dot");
        let n = self.grid.n;
        let mut out = Array3::zeros((1, n, n));
        for c in 0..self.components() {
            Zip::from(out.index_axis_mut(ndarray::Axis(0), 0))
                .and(self.component(c))
                .and(other.component(c))
                .for_each(|o, &a, &b| *o += a * b);
        }
        Field { grid: Arc::clone(&self.grid), data: out }
    }

    /// Grid integral `sum f` times the cell area (per component, summed).
    pub fn integral(&self) -> f64 {
        self.grid.cell_area() * self.data.sum()
    }

    /// Radius beyond which every sample has magnitude below `threshold`.
    pub fn support_radius(&self, threshold: f64) -> f64 {
        let x = &self.grid.x;
        let mut r = 0.0_f64;
        for ((_, i2, i1), v) in self.data.indexed_iter() {
            if v.abs() >= threshold {
                r = r.max(x[i1].hypot(x[i2]));
            }
        }
        r
    }
}

/// Fourier coefficients of a field, same `(component, k2, k1)` layout.
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Arc<Grid>,
    data: Array3<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: &Arc<Grid>, components: usize) -> Spectrum {
        let n = grid.n;
        Spectrum { grid: Arc::clone(grid), data: Array3::zeros((components, n, n)) }
    }

    pub fn components(&self) -> usize {
        self.data.dim().0
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.data
    }

    /// Multiplies each mode by `m(k1, k2)` given the grid indices.
    pub fn apply(&mut self, m: impl Fn(usize, usize) -> Complex64) {
        for ((_, j2, j1), v) in self.data.indexed_iter_mut() {
            *v *= m(j1, j2);
        }
    }

    pub fn map(&self, m: impl Fn(usize, usize) -> Complex64) -> Spectrum {
        let mut s = self.clone();
        s.apply(m);
        s
    }

    /// Zeroes every mode outside the 2/3-rule band.
    pub fn dealias(&mut self) {
        let g = Arc::clone(&self.grid);
        for ((_, j2, j1), v) in self.data.indexed_iter_mut() {
            if !(g.dealias_keep(j1) && g.dealias_keep(j2)) {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// `sum_k w(k) |c_k|^2` scaled so that `w = 1` gives the grid L2 norm squared.
    pub fn weighted_sum_sq(&self, w: impl Fn(f64) -> f64) -> f64 {
        let g = &self.grid;
        let n = g.n;
        let mut s = 0.0;
        for ((_, j2, j1), v) in self.data.indexed_iter() {
            let k2 = g.k[j1] * g.k[j1] + g.k[j2] * g.k[j2];
            s += w(k2) * v.norm_sqr();
        }
        s * g.cell_area() / (n * n) as f64
    }
}

/// A field together with its time derivative.
#[derive(Clone, Debug)]
pub struct FieldPair {
    pub u: Field,
    pub ut: Field,
}

impl FieldPair {
    pub fn new(u: Field, ut: Field) -> Result<FieldPair> {
        u.ensure_same_shape(&ut, "field pair components differ in shape")?;
        Ok(FieldPair { u, ut })
    }

    pub fn zeros(grid: &Arc<Grid>, components: usize) -> FieldPair {
        FieldPair { u: Field::zeros(grid, components), ut: Field::zeros(grid, components) }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }

    pub fn components(&self) -> usize {
        self.u.components()
    }

    pub fn sub(&self, other: &FieldPair) -> FieldPair {
        FieldPair { u: self.u.sub(&other.u), ut: self.ut.sub(&other.ut) }
    }

    pub fn add(&self, other: &FieldPair) -> FieldPair {
        FieldPair { u: self.u.add(&other.u), ut: self.ut.add(&other.ut) }
    }

    pub fn scale(&self, a: f64) -> FieldPair {
        FieldPair { u: self.u.scale(a), ut: self.ut.scale(a) }
    }

    /// `(u, -ut)`: the time-reversed state.
    pub fn flip_velocity(&self) -> FieldPair {
        FieldPair { u: self.u.clone(), ut: self.ut.scale(-1.0) }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.ut.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.u.max_abs().max(self.ut.max_abs())
    }
}

/// Spectral Laplacian.
pub fn laplacian(f: &Field) -> Field {
    let g = Arc::clone(f.grid());
    let mut s = g.forward(f);
    let k = g.k.clone();
    s.apply(|j1, j2| Complex64::new(-(k[j1] * k[j1] + k[j2] * k[j2]), 0.0));
    g.inverse(&s)
}

/// Spectral first derivative along axis 1 or 2.
pub fn partial(f: &Field, axis: usize) -> Result<Field> {
    if axis != 1 && axis != 2 {
        return Err(KgzError::InvalidArgument(format!("axis must be 1 or 2, got {axis}")));
    }
    let g = Arc::clone(f.grid());
    let mut s = g.forward(f);
    apply_partial(&mut s, axis);
    Ok(g.inverse(&s))
}

pub(crate) fn apply_partial(s: &mut Spectrum, axis: usize) {
    let g = Arc::clone(s.grid());
    s.apply(|j1, j2| {
        let k = if axis == 1 { g.derivative_wavenumber(j1) } else { g.derivative_wavenumber(j2) };
        Complex64::new(0.0, k)
    });
}

/// Both first derivatives `(d1 f, d2 f)` from a single forward transform.
pub fn gradient(f: &Field) -> [Field; 2] {
    let g = Arc::clone(f.grid());
    let s = g.forward(f);
    let mut s1 = s.clone();
    apply_partial(&mut s1, 1);
    let mut s2 = s;
    apply_partial(&mut s2, 2);
    [g.inverse(&s1), g.inverse(&s2)]
}

/// Hessian entries `(d11, d12, d22)` from a single forward transform.
pub fn hessian(f: &Field) -> [Field; 3] {
    let g = Arc::clone(f.grid());
    let s = g.forward(f);
    let d = |a: usize, b: usize| {
        let mut t = s.clone();
        apply_partial(&mut t, a);
        apply_partial(&mut t, b);
        g.inverse(&t)
    };
    [d(1, 1), d(1, 2), d(2, 2)]
}

/// `H^s` norm of a single field computed from its Fourier coefficients.
pub fn sobolev_norm_field(f: &Field, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(KgzError::InvalidArgument(format!("sobolev index must be >= 0, got {s}")));
    }
    let g = Arc::clone(f.grid());
    let spec = g.forward(f);
    Ok(spec.weighted_sum_sq(|k2| (1.0 + k2).powf(s)).sqrt())
}

/// Norms reported by [`sobolev_norm`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SobolevNorms {
    /// `||u||_{H^s}`
    pub u: f64,
    /// `||ut||_{H^{s-1}}`, present when `s >= 1`.
    pub ut: Option<f64>,
}

impl SobolevNorms {
    pub fn total(&self) -> f64 {
        self.u + self.ut.unwrap_or(0.0)
    }
}

/// `(||u||_{H^s}, ||ut||_{H^{s-1}})` for `s >= 1`, otherwise `||u||_{H^s}` alone.
pub fn sobolev_norm(p: &FieldPair, s: f64) -> Result<SobolevNorms> {
    if !(s >= 0.0) {
        return Err(KgzError::InvalidArgument(format!("sobolev index must be >= 0, got {s}")));
    }
    let u = sobolev_norm_field(&p.u, s)?;
    let ut = if s >= 1.0 { Some(sobolev_norm_field(&p.ut, s - 1.0)?) } else { None };
    Ok(SobolevNorms { u, ut })
}
