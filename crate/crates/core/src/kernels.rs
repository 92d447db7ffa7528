//! Symmetric kernels `K(x, y)` on `R^n`, the integral operator `Tf = ∫ K(·, y) f(y) dy`,
//! and numerical checks of the standing assumptions on `K`: idempotency,
//! power-law off-diagonal decay and vanishing oscillation.
//!
//! The two projector families factor as
//! `K(x, y) = Π_i Σ_{a,b} u_a(x_i) M_ab u_b(y_i)` with a finite 1-D basis `u` and
//! a symmetric mixing matrix `M`:
//!
//! * `hermite`: `u` = first `rank` Hermite functions, `M = I` (orthogonal projector);
//! * `spline`: `u` = integer shifts of the centred cubic B-spline on
//!   `{-L, …, L}`, `M` = inverse Gram matrix, i.e. `Σ_k β(x - k) β̃(y - k)` with the
//!   dual generators `β̃` of the finite shift system.
//!
//! Both are exact orthogonal projectors, so `T² = T` up to quadrature error.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    field_with_tail, integrate_box, lp_norm_box, lp_norm_global_auto, CubeGrid, Envelope, QuadratureGrid,
    QuadratureSettings, ScalarField, Tail,
};
use crate::scalar::{from_usize, l1_distance, l1_norm, lit, to_f64, Real};

/// Multiplier applied to the grid maximum when fitting the decay amplitude `C`,
/// covering the gap between grid points.
pub const DECAY_FIT_SAFETY: f64 = 1.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// Orthogonal projector onto the first `rank` Hermite functions (per axis).
    Hermite { rank: usize },
    /// Projector onto cubic B-spline shifts `β(· - k)`, `k ∈ {-L, …, L}` per axis.
    Spline { lattice_half_width: usize },
    /// `s² h₀(x) h₀(y)`; idempotent only when `s = 1`.
    RankOneGaussian { scale: f64 },
    /// `amplitude / (1 + ‖x - y‖₁)^rate`, a shift-invariant kernel equal to its own envelope.
    Envelope { amplitude: f64, rate: f64 },
    Zero,
}

impl KernelFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            KernelFamily::Hermite { .. } => "hermite",
            KernelFamily::Spline { .. } => "spline",
            KernelFamily::RankOneGaussian { .. } => "rank_one_gaussian",
            KernelFamily::Envelope { .. } => "envelope",
            KernelFamily::Zero => "zero",
        }
    }

    /// Finite-rank orthogonal projectors (exactly idempotent).
    pub fn is_projector(&self) -> bool {
        matches!(self, KernelFamily::Hermite { .. } | KernelFamily::Spline { .. })
    }

    /// Declared decay rate for the family in dimension `n` (`4` for `n = 1`, `5` for `n = 2`).
    pub fn default_decay_rate(dim: usize) -> f64 {
        if dim >= 2 {
            5.0
        } else {
            4.0
        }
    }
}

/// Centred cubic B-spline, supported on `[-2, 2]`.
pub fn cubic_bspline<T: Real>(t: T) -> T {
    let a = t.abs();
    let two = lit::<T>(2.0);
    if a < T::one() {
        lit::<T>(2.0 / 3.0) - a * a + a * a * a / two
    } else if a < two {
        let b = two - a;
        b * b * b / lit(6.0)
    } else {
        T::zero()
    }
}

/// One-dimensional basis of a factorised kernel.
#[derive(Debug, Clone)]
pub enum Basis1d<T> {
    Hermite { count: usize, scale: T },
    Spline { half_width: usize },
}

impl<T: Real> Basis1d<T> {
    pub fn len(&self) -> usize {
        match self {
            Basis1d::Hermite { count, .. } => *count,
            Basis1d::Spline { half_width } => 2 * half_width + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Half-width of the joint support, if compact.
    pub fn support_half_width(&self) -> Option<T> {
        match self {
            Basis1d::Hermite { .. } => None,
            Basis1d::Spline { half_width } => Some(from_usize::<T>(*half_width) + lit(2.0)),
        }
    }

    pub fn eval_into(&self, x: T, out: &mut [T]) {
        match self {
            Basis1d::Hermite { count, scale } => {
                hermite_functions(x, &mut out[..*count]);
                for v in out.iter_mut().take(*count) {
                    *v = *v * *scale;
                }
            }
            Basis1d::Spline { half_width } => {
                let l = *half_width as i64;
                for (slot, k) in out.iter_mut().zip(-l..=l) {
                    *slot = cubic_bspline(x - lit(k as f64));
                }
            }
        }
    }

    pub fn eval(&self, x: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        self.eval_into(x, &mut out);
        out
    }
}

/// Orthonormal Hermite functions `h_0, …, h_{m-1}` at `x` via the three-term recurrence.
pub fn hermite_functions<T: Real>(x: T, out: &mut [T]) {
    if out.is_empty() {
        return;
    }
    let pi = T::PI();
    out[0] = pi.powf(lit(-0.25)) * (-(x * x) / lit(2.0)).exp();
    if out.len() > 1 {
        out[1] = lit::<T>(2.0).sqrt() * x * out[0];
    }
    for k in 1..out.len().saturating_sub(1) {
        let kt = from_usize::<T>(k);
        let next = (lit::<T>(2.0) / (kt + T::one())).sqrt() * x * out[k]
            - (kt / (kt + T::one())).sqrt() * out[k - 1];
        out[k + 1] = next;
    }
}

/// Factorised form `gain · Π_i Σ_{a,b} u_a(x_i) M_ab u_b(y_i)`.
#[derive(Debug, Clone)]
pub struct Expansion<T> {
    basis: Basis1d<T>,
    /// Row-major `m × m`; `None` is the identity.
    mix: Option<Vec<T>>,
    dim: usize,
}

impl<T: Real> Expansion<T> {
    pub fn basis(&self) -> &Basis1d<T> {
        &self.basis
    }

    pub fn axis_len(&self) -> usize {
        self.basis.len()
    }

    /// Number of tensor basis functions, `m^n`.
    pub fn len(&self) -> usize {
        self.axis_len().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mix_entry(&self, a: usize, b: usize) -> T {
        match &self.mix {
            Some(m) => m[a * self.axis_len() + b],
            None => {
                if a == b {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Tensor basis values at `x`; index `b = b_0 + m·b_1`.
    pub fn tensor_values(&self, x: &[T]) -> Vec<T> {
        let u0 = self.basis.eval(x[0]);
        if self.dim == 1 {
            return u0;
        }
        let u1 = self.basis.eval(x[1]);
        let m = self.axis_len();
        let mut out = vec![T::zero(); m * m];
        for (j, v1) in u1.iter().enumerate() {
            for (i, v0) in u0.iter().enumerate() {
                out[i + m * j] = *v0 * *v1;
            }
        }
        out
    }

    /// `Σ_b c_b u_b(x)`.
    pub fn eval_coefficients(&self, coeffs: &[T], x: &[T]) -> T {
        let m = self.axis_len();
        let u0 = self.basis.eval(x[0]);
        if self.dim == 1 {
            return coeffs.iter().zip(&u0).map(|(c, u)| *c * *u).sum();
        }
        let u1 = self.basis.eval(x[1]);
        let mut total = T::zero();
        for (j, v1) in u1.iter().enumerate() {
            if *v1 == T::zero() {
                continue;
            }
            let row: T = coeffs[m * j..m * (j + 1)]
                .iter()
                .zip(&u0)
                .map(|(c, u)| *c * *u)
                .sum();
            total = total + row * *v1;
        }
        total
    }

    /// Applies `M ⊗ … ⊗ M` to a tensor coefficient vector.
    pub fn apply_mix(&self, coeffs: &[T]) -> Vec<T> {
        let Some(mix) = &self.mix else {
            return coeffs.to_vec();
        };
        let m = self.axis_len();
        let along_axis0 = |v: &[T]| -> Vec<T> {
            let mut out = vec![T::zero(); v.len()];
            for block in 0..v.len() / m {
                for a in 0..m {
                    let mut acc = T::zero();
                    for b in 0..m {
                        acc = acc + mix[a * m + b] * v[block * m + b];
                    }
                    out[block * m + a] = acc;
                }
            }
            out
        };
        let first = along_axis0(coeffs);
        if self.dim == 1 {
            return first;
        }
        let mut out = vec![T::zero(); m * m];
        for i in 0..m {
            for a in 0..m {
                let mut acc = T::zero();
                for b in 0..m {
                    acc = acc + mix[a * m + b] * first[i + m * b];
                }
                out[i + m * a] = acc;
            }
        }
        out
    }

    fn kernel_1d(&self, x: T, y: T) -> T {
        let ux = self.basis.eval(x);
        let uy = self.basis.eval(y);
        match &self.mix {
            None => ux.iter().zip(&uy).map(|(a, b)| *a * *b).sum(),
            Some(mix) => {
                let m = self.axis_len();
                let mut total = T::zero();
                for (a, va) in ux.iter().enumerate() {
                    if *va == T::zero() {
                        continue;
                    }
                    let mut inner = T::zero();
                    for (b, vb) in uy.iter().enumerate() {
                        inner = inner + mix[a * m + b] * *vb;
                    }
                    total = total + *va * inner;
                }
                total
            }
        }
    }
}

fn spline_inverse_gram(half_width: usize) -> Result<Vec<f64>> {
    let m = 2 * half_width + 1;
    let support = half_width as f64 + 2.0;
    // unit cells with knots on cell boundaries: the degree-6 products are integrated exactly
    let grid = QuadratureGrid::<f64>::new(&[support], 2 * (half_width + 2), 8)?;
    let basis = Basis1d::<f64>::Spline { half_width };
    let mut gram = DMatrix::<f64>::zeros(m, m);
    grid.for_each_node(|x, w| {
        let u = basis.eval(x[0]);
        for a in 0..m {
            if u[a] == 0.0 {
                continue;
            }
            for b in 0..m {
                gram[(a, b)] += w * u[a] * u[b];
            }
        }
    });
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::degenerate("spline Gram matrix is not positive definite"))?;
    let inv = chol.inverse();
    // symmetrise to remove rounding asymmetry
    let mut out = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            out[a * m + b] = 0.5 * (inv[(a, b)] + inv[(b, a)]);
        }
    }
    Ok(out)
}

/// A concrete kernel with its declared decay constants `(C, α)` and exponent `p`.
#[derive(Debug, Clone)]
pub struct KernelSpec<T> {
    family: KernelFamily,
    dim: usize,
    p: T,
    p_conj: T,
    decay_amplitude: T,
    decay_rate: T,
    gain: T,
    working_half_width: T,
    expansion: Option<Expansion<T>>,
}

impl<T: Real> KernelSpec<T> {
    /// Kernel with an explicitly declared decay amplitude `C`.
    pub fn with_constants(
        family: KernelFamily,
        dim: usize,
        p: T,
        decay_rate: T,
        decay_amplitude: T,
        working_half_width: T,
    ) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::contract(format!("dimension must be 1 or 2, got {dim}")));
        }
        if !(p > T::one()) || !p.is_finite() {
            return Err(Error::contract(format!("exponent p must lie in (1, ∞), got {p}")));
        }
        let p_conj = p / (p - T::one());
        let n = from_usize::<T>(dim);
        let threshold = n / p_conj + n + T::one();
        if !(decay_rate > threshold) {
            return Err(Error::infeasible(format!(
                "decay rate α = {decay_rate} must exceed n/p' + n + 1 = {threshold}"
            )));
        }
        if !(decay_amplitude > T::zero()) || !decay_amplitude.is_finite() {
            return Err(Error::contract(format!(
                "decay amplitude C must be positive and finite, got {decay_amplitude}"
            )));
        }
        if !(working_half_width > T::zero()) {
            return Err(Error::contract("working half-width must be positive"));
        }
        let expansion = match &family {
            KernelFamily::Hermite { rank } => {
                if *rank == 0 {
                    return Err(Error::contract("hermite rank must be at least 1"));
                }
                Some(Expansion {
                    basis: Basis1d::Hermite { count: *rank, scale: T::one() },
                    mix: None,
                    dim,
                })
            }
            KernelFamily::Spline { lattice_half_width } => {
                let inv = spline_inverse_gram(*lattice_half_width)?;
                Some(Expansion {
                    basis: Basis1d::Spline { half_width: *lattice_half_width },
                    mix: Some(inv.into_iter().map(lit).collect()),
                    dim,
                })
            }
            KernelFamily::RankOneGaussian { scale } => {
                // s² h₀(x)h₀(y) in 1-D; the tensor product carries s^{2n}, so split the gain per axis
                let per_axis = scale.abs().powf(1.0 / dim as f64) * scale.signum();
                Some(Expansion {
                    basis: Basis1d::Hermite { count: 1, scale: lit(per_axis) },
                    mix: None,
                    dim,
                })
            }
            KernelFamily::Envelope { amplitude, rate } => {
                if !(*amplitude > 0.0 && *rate > 0.0) {
                    return Err(Error::contract("envelope kernel needs positive amplitude and rate"));
                }
                None
            }
            KernelFamily::Zero => None,
        };
        Ok(KernelSpec {
            family,
            dim,
            p,
            p_conj,
            decay_amplitude,
            decay_rate,
            gain: T::one(),
            working_half_width,
            expansion,
        })
    }

    /// Kernel whose `C` is fitted as [`DECAY_FIT_SAFETY`] times the maximum of
    /// `|K(x, y)| (1 + ‖x - y‖₁)^α` over a dense grid on the working box.
    pub fn fitted(
        family: KernelFamily,
        dim: usize,
        p: T,
        decay_rate: T,
        working_half_width: T,
        fit_points: usize,
    ) -> Result<Self> {
        let provisional =
            Self::with_constants(family, dim, p, decay_rate, T::one(), working_half_width)?;
        let max = provisional.decay_grid_max(fit_points);
        if !(max > T::zero()) {
            return Err(Error::degenerate(format!(
                "kernel `{}` vanishes on the fitting grid; declare C explicitly",
                provisional.family.tag()
            )));
        }
        Ok(provisional.with_decay_amplitude(max * lit(DECAY_FIT_SAFETY)))
    }

    /// Default number of fitting points per axis for the working dimension.
    pub fn default_fit_points(dim: usize) -> usize {
        if dim == 1 {
            481
        } else {
            33
        }
    }

    pub fn with_decay_amplitude(mut self, decay_amplitude: T) -> Self {
        self.decay_amplitude = decay_amplitude;
        self
    }

    /// The kernel `c·K`, with `C` rescaled to `|c|·C`.
    pub fn scaled(&self, c: T) -> Self {
        let mut out = self.clone();
        out.gain = self.gain * c;
        out.decay_amplitude = self.decay_amplitude * c.abs();
        out
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn p_conj(&self) -> T {
        self.p_conj
    }

    pub fn decay_amplitude(&self) -> T {
        self.decay_amplitude
    }

    pub fn decay_rate(&self) -> T {
        self.decay_rate
    }

    pub fn gain(&self) -> T {
        self.gain
    }

    pub fn working_half_width(&self) -> T {
        self.working_half_width
    }

    pub fn expansion(&self) -> Option<&Expansion<T>> {
        self.expansion.as_ref()
    }

    /// `K(x, y)`.
    pub fn eval(&self, x: &[T], y: &[T]) -> T {
        if let Some(exp) = &self.expansion {
            let mut v = self.gain;
            for i in 0..self.dim {
                v = v * exp.kernel_1d(x[i], y[i]);
            }
            return v;
        }
        match &self.family {
            KernelFamily::Envelope { amplitude, rate } => {
                self.gain * lit::<T>(*amplitude)
                    / (T::one() + l1_distance(x, y)).powf(lit(*rate))
            }
            _ => T::zero(),
        }
    }

    /// `C / (1 + ‖x - y‖₁)^α`.
    pub fn envelope_at(&self, x: &[T], y: &[T]) -> T {
        self.decay_amplitude / (T::one() + l1_distance(x, y)).powf(self.decay_rate)
    }

    /// Bound on `|K(x, ·)|` as a function of the second argument.
    pub fn row_envelope(&self, x: &[T]) -> Envelope<T> {
        Envelope {
            amplitude: self.decay_amplitude,
            shift: T::one(),
            offset: l1_norm(x),
            rate: self.decay_rate,
        }
    }

    /// Coefficients of `K(x, ·)` in the tensor basis.
    pub fn row_coefficients(&self, x: &[T]) -> Option<Vec<T>> {
        let exp = self.expansion.as_ref()?;
        let u = exp.tensor_values(x);
        Some(exp.apply_mix(&u).into_iter().map(|v| v * self.gain).collect())
    }

    /// The field `K(x, ·)`.
    pub fn row(self: &Arc<Self>, x: &[T]) -> Box<dyn ScalarField<T> + '_> {
        match self.row_coefficients(x) {
            Some(coeffs) => {
                let mut f = ExpandedField::new(Arc::clone(self), coeffs);
                if f.tail == Tail::Unknown {
                    f.tail = Tail::Envelope(self.row_envelope(x));
                }
                Box::new(f)
            }
            None => {
                let x = x.to_vec();
                let env = self.row_envelope(&x);
                let kernel = Arc::clone(self);
                Box::new(field_with_tail(
                    self.dim,
                    move |y: &[T]| kernel.eval(&x, y),
                    Tail::Envelope(env),
                ))
            }
        }
    }

    fn decay_grid_max(&self, points: usize) -> T {
        let axis = CubeGrid::new(self.dim, lit::<T>(2.0) * self.working_half_width, points).points();
        let rate = self.decay_rate;
        axis.par_iter()
            .map(|x| {
                axis.iter().fold(T::zero(), |acc, y| {
                    let ratio = self.eval(x, y).abs() * (T::one() + l1_distance(x, y)).powf(rate);
                    acc.max(ratio)
                })
            })
            .reduce(T::zero, |a, b| a.max(b))
    }
}

/// `Σ_b c_b u_b(x)` for a factorised kernel's tensor basis.
#[derive(Debug, Clone)]
pub struct ExpandedField<T> {
    kernel: Arc<KernelSpec<T>>,
    coeffs: Vec<T>,
    tail: Tail<T>,
}

impl<T: Real> ExpandedField<T> {
    pub fn new(kernel: Arc<KernelSpec<T>>, coeffs: Vec<T>) -> Self {
        let tail = kernel
            .expansion()
            .and_then(|e| e.basis().support_half_width())
            .map(|half_width| Tail::Compact { half_width })
            .unwrap_or(Tail::Unknown);
        ExpandedField { kernel, coeffs, tail }
    }

    pub fn with_tail(mut self, tail: Tail<T>) -> Self {
        self.tail = tail;
        self
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coeffs
    }

    pub fn kernel(&self) -> &Arc<KernelSpec<T>> {
        &self.kernel
    }
}

impl<T: Real> ScalarField<T> for ExpandedField<T> {
    fn dim(&self) -> usize {
        self.kernel.dim()
    }

    fn value(&self, x: &[T]) -> T {
        match self.kernel.expansion() {
            Some(e) => e.eval_coefficients(&self.coeffs, x),
            None => T::zero(),
        }
    }

    fn tail(&self) -> Tail<T> {
        self.tail
    }
}

/// Half-width of the box over which `∫ K(x, y) f(y) dy` is evaluated.
fn integration_half_width<T: Real>(
    kernel: &KernelSpec<T>,
    f: &(impl ScalarField<T> + ?Sized),
    settings: &QuadratureSettings<T>,
) -> T {
    let mut h = match f.tail() {
        Tail::Compact { half_width } => half_width,
        _ => settings.truncation_half_width,
    };
    if let Some(s) = kernel.expansion().and_then(|e| e.basis().support_half_width()) {
        h = h.min(s);
    }
    h
}

/// `Tf(x) = ∫ K(x, y) f(y) dy` by quadrature over the truncation box.
pub fn apply_t_at<T: Real>(
    kernel: &KernelSpec<T>,
    f: &(impl ScalarField<T> + ?Sized),
    x: &[T],
    settings: &QuadratureSettings<T>,
) -> Result<T> {
    let h = integration_half_width(kernel, f, settings);
    let grid = settings.grid(kernel.dim(), h)?;
    integrate_box(|y| kernel.eval(x, y) * f.value(y), &grid)
}

/// The field `Tf`.
pub enum Image<'a, T: Real> {
    /// `Tf` written in the kernel's tensor basis: coefficients `M ∫ u_b f`.
    Expanded(ExpandedField<T>),
    /// Evaluated by quadrature at every point.
    Pointwise {
        kernel: Arc<KernelSpec<T>>,
        source: &'a (dyn ScalarField<T> + 'a),
        settings: QuadratureSettings<T>,
    },
}

impl<T: Real> ScalarField<T> for Image<'_, T> {
    fn dim(&self) -> usize {
        match self {
            Image::Expanded(e) => e.dim(),
            Image::Pointwise { kernel, .. } => kernel.dim(),
        }
    }

    fn value(&self, x: &[T]) -> T {
        match self {
            Image::Expanded(e) => e.value(x),
            Image::Pointwise { kernel, source, settings } => {
                apply_t_at(kernel, *source, x, settings).unwrap_or_else(|_| T::nan())
            }
        }
    }

    fn tail(&self) -> Tail<T> {
        match self {
            Image::Expanded(e) => e.tail(),
            Image::Pointwise { .. } => Tail::Unknown,
        }
    }
}

/// Applies `T` to a field. Factorised kernels project `f` onto the basis by
/// quadrature; other kernels integrate pointwise on demand.
pub fn apply_t<'a, T: Real>(
    kernel: &Arc<KernelSpec<T>>,
    f: &'a (dyn ScalarField<T> + 'a),
    settings: &QuadratureSettings<T>,
) -> Result<Image<'a, T>> {
    let Some(exp) = kernel.expansion() else {
        return Ok(Image::Pointwise { kernel: Arc::clone(kernel), source: f, settings: *settings });
    };
    let h = integration_half_width(kernel, f, settings);
    let grid = settings.grid(kernel.dim(), h)?;
    let mut moments = vec![T::zero(); exp.len()];
    let mut failure = None;
    grid.for_each_node(|y, w| {
        let v = f.value(y);
        if !v.is_finite() {
            failure.get_or_insert_with(|| Error::NonFinite {
                node: y.iter().map(|c| to_f64(*c)).collect(),
                value: to_f64(v),
            });
            return;
        }
        let fw = v * w;
        for (m, u) in moments.iter_mut().zip(exp.tensor_values(y)) {
            *m = *m + fw * u;
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let coeffs = exp
        .apply_mix(&moments)
        .into_iter()
        .map(|c| c * kernel.gain())
        .collect();
    Ok(Image::Expanded(ExpandedField::new(Arc::clone(kernel), coeffs)))
}

/// `max_f ‖T(Tf) - Tf‖_{L^p(C_R)} / ‖Tf‖_{L^p(C_R)}` over the test fields that `T` does not annihilate.
pub fn idempotency_defect<T: Real>(
    kernel: &Arc<KernelSpec<T>>,
    test_fields: &[&dyn ScalarField<T>],
    side: T,
    settings: &QuadratureSettings<T>,
) -> Result<T> {
    let cube = settings.cube_grid(kernel.dim(), side)?;
    let p = kernel.p();
    let mut worst: Option<T> = None;
    for f in test_fields {
        let tf = apply_t(kernel, *f, settings)?;
        let denom = lp_norm_box(|x| tf.value(x), p, &cube)?;
        if denom < lit(1e-12) {
            continue;
        }
        let ttf = apply_t(kernel, &tf, settings)?;
        let num = lp_norm_box(|x| ttf.value(x) - tf.value(x), p, &cube)?;
        let ratio = num / denom;
        worst = Some(worst.map_or(ratio, |w: T| w.max(ratio)));
    }
    worst.ok_or_else(|| Error::degenerate("every test field is annihilated by T"))
}

/// `k = sup_{x ∈ C_R} ‖K(x, ·)‖_{L^{p'}(R^n)}` and the grid it was taken over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants<T> {
    pub k: T,
    pub side: T,
    pub points_per_axis: usize,
}

/// `max ‖K(x, ·)‖_{L^{p'}}` over the given points.
pub fn k_sup_over<T: Real>(
    kernel: &Arc<KernelSpec<T>>,
    points: &[Vec<T>],
    settings: &QuadratureSettings<T>,
) -> Result<T> {
    let norms: Result<Vec<T>> = points
        .par_iter()
        .map(|x| {
            let row = kernel.row(x);
            Ok(lp_norm_global_auto(&row, kernel.p_conj(), settings)?.value)
        })
        .collect();
    Ok(norms?.into_iter().fold(T::zero(), T::max))
}

/// `k` over the dense deterministic grid on `C_R` from `settings.cube_grid_points`.
pub fn k_sup<T: Real>(
    kernel: &Arc<KernelSpec<T>>,
    side: T,
    settings: &QuadratureSettings<T>,
) -> Result<KernelConstants<T>> {
    if !(side > T::zero()) {
        return Err(Error::contract("cube side R must be positive"));
    }
    let grid = CubeGrid::new(kernel.dim(), side, settings.cube_grid_points);
    let k = k_sup_over(kernel, &grid.points(), settings)?;
    if !(k > T::zero()) || !k.is_finite() {
        return Err(Error::degenerate(format!("k = {k} is not positive and finite")));
    }
    Ok(KernelConstants { k, side, points_per_axis: grid.points_per_axis })
}

/// Sampling density of the oscillation diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationGrid {
    /// Points per axis of the `z` grid over the box.
    pub z_points: usize,
    /// Points per axis of the perturbation grid on `[-ε, ε]`.
    pub perturbation_points: usize,
}

impl Default for OscillationGrid {
    fn default() -> Self {
        OscillationGrid { z_points: 33, perturbation_points: 5 }
    }
}

/// Estimate of `‖sup_z |osc_ε(K)(· + z, z)|‖_{L¹}` on `[-h, h]^n`, with
/// `osc_ε(K)(x, y) = sup_{x', y' ∈ [-ε, ε]^n} |K(x + x', y + y') - K(x, y)|`
/// maximised over finite grids.
pub fn oscillation_modulus<T: Real>(
    kernel: &KernelSpec<T>,
    eps: T,
    half_width: T,
    grid: OscillationGrid,
    settings: &QuadratureSettings<T>,
) -> Result<T> {
    if eps < T::zero() || !eps.is_finite() {
        return Err(Error::contract(format!("oscillation radius must be >= 0, got {eps}")));
    }
    if eps == T::zero() {
        return Ok(T::zero());
    }
    let n = kernel.dim();
    let z_points = CubeGrid::new(n, lit::<T>(2.0) * half_width, grid.z_points).points();
    let offsets = CubeGrid::new(n, lit::<T>(2.0) * eps, grid.perturbation_points.max(2)).points();
    let u_grid = settings.grid(n, half_width)?;

    let sup_osc = |u: &[T]| -> T {
        let mut best = T::zero();
        let mut x = vec![T::zero(); n];
        let mut xp = vec![T::zero(); n];
        let mut yp = vec![T::zero(); n];
        for z in &z_points {
            for i in 0..n {
                x[i] = u[i] + z[i];
            }
            let base = kernel.eval(&x, z);
            for dx in &offsets {
                for i in 0..n {
                    xp[i] = x[i] + dx[i];
                }
                for dy in &offsets {
                    for i in 0..n {
                        yp[i] = z[i] + dy[i];
                    }
                    best = best.max((kernel.eval(&xp, &yp) - base).abs());
                }
            }
        }
        best
    };
    integrate_box(sup_osc, &u_grid)
}

/// Outcome of [`decay_envelope_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayCheck<T> {
    pub holds: bool,
    pub worst_ratio: T,
}

/// Worst `|K(x, y)| (1 + ‖x - y‖₁)^α / C` over seeded uniform pairs in the working box.
pub fn decay_envelope_check<T: Real>(kernel: &KernelSpec<T>, trial_points: usize, seed: u64) -> Result<DecayCheck<T>> {
    if trial_points == 0 {
        return Err(Error::contract("decay check needs at least one point pair"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = to_f64(kernel.working_half_width());
    let n = kernel.dim();
    let mut worst = T::zero();
    let mut x = vec![T::zero(); n];
    let mut y = vec![T::zero(); n];
    for _ in 0..trial_points {
        for i in 0..n {
            x[i] = lit(rng.gen_range(-h..=h));
            y[i] = lit(rng.gen_range(-h..=h));
        }
        let ratio = kernel.eval(&x, &y).abs() / kernel.envelope_at(&x, &y);
        worst = worst.max(ratio);
    }
    Ok(DecayCheck { holds: worst <= T::one(), worst_ratio: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::field;
    use approx::assert_relative_eq;

    fn settings() -> QuadratureSettings<f64> {
        QuadratureSettings::default()
    }

    fn hermite(rank: usize) -> Arc<KernelSpec<f64>> {
        Arc::new(
            KernelSpec::fitted(KernelFamily::Hermite { rank }, 1, 2.0, 4.0, 12.0, 241).unwrap(),
        )
    }

    #[test]
    fn hermite_functions_are_orthonormal() {
        let grid = QuadratureGrid::<f64>::cube(1, 12.0, 96).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                let v = integrate_box(
                    |x| {
                        let mut h = [0.0; 6];
                        hermite_functions(x[0], &mut h);
                        h[a] * h[b]
                    },
                    &grid,
                )
                .unwrap();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-12, "<h{a}, h{b}> = {v}");
            }
        }
    }

    #[test]
    fn bspline_partition_of_unity() {
        for x in [-0.7, 0.0, 0.25, 1.5, 3.9] {
            let s: f64 = (-6..=6).map(|k| cubic_bspline(x - k as f64)).sum();
            assert_relative_eq!(s, 1.0, max_relative = 1e-14);
        }
        assert_eq!(cubic_bspline(2.0f64), 0.0);
        assert_relative_eq!(cubic_bspline(0.0f64), 2.0 / 3.0);
    }

    #[test]
    fn kernels_are_symmetric() {
        let kernels = [
            hermite(5),
            Arc::new(KernelSpec::fitted(KernelFamily::Spline { lattice_half_width: 6 }, 1, 2.0, 4.0, 8.0, 161).unwrap()),
            Arc::new(KernelSpec::fitted(KernelFamily::Hermite { rank: 3 }, 2, 2.0, 5.0, 6.0, 17).unwrap()),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kernel in &kernels {
            let n = kernel.dim();
            for _ in 0..1000 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
                assert!((kernel.eval(&x, &y) - kernel.eval(&y, &x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decay_rate_threshold_enforced() {
        // n = 1, p = 2: α must exceed 1/2 + 2 = 2.5
        let bad = KernelSpec::<f64>::with_constants(KernelFamily::Zero, 1, 2.0, 2.5, 1.0, 5.0);
        assert!(matches!(bad, Err(Error::Infeasible(_))));
        let ok = KernelSpec::<f64>::with_constants(KernelFamily::Zero, 1, 2.0, 2.51, 1.0, 5.0);
        assert!(ok.is_ok());
        // n = 2, p = 2: α > 1 + 3 = 4
        assert!(KernelSpec::<f64>::with_constants(KernelFamily::Zero, 2, 2.0, 4.0, 1.0, 5.0).is_err());
        assert!(KernelSpec::<f64>::with_constants(KernelFamily::Zero, 1, 1.0, 4.0, 1.0, 5.0).is_err());
    }

    #[test]
    fn zero_field_maps_to_zero() {
        let k = hermite(5);
        let zero = field(1, |_: &[f64]| 0.0).compact(3.0);
        assert_eq!(apply_t_at(&k, &zero, &[0.3], &settings()).unwrap(), 0.0);
    }

    #[test]
    fn projector_reproduces_basis_element() {
        let k = hermite(5);
        let h0 = field(1, |x: &[f64]| std::f64::consts::PI.powf(-0.25) * (-x[0] * x[0] / 2.0).exp());
        for x in [-2.0, -0.4, 0.0, 1.1, 3.0] {
            let v = apply_t_at(&k, &h0, &[x], &settings()).unwrap();
            assert!((v - h0.value(&[x])).abs() < 1e-8);
        }
    }

    #[test]
    fn projector_removes_orthogonal_component() {
        // g = h_7 (orthogonal to span{h_0..h_4}) checked by direct quadrature first
        let k = hermite(5);
        let hn = |x: f64, i: usize| {
            let mut h = [0.0; 8];
            hermite_functions(x, &mut h);
            h[i]
        };
        let grid = QuadratureGrid::<f64>::cube(1, 12.0, 96).unwrap();
        for i in 0..5 {
            let ip = integrate_box(|x| hn(x[0], i) * hn(x[0], 7), &grid).unwrap();
            assert!(ip.abs() < 1e-12);
        }
        let f = field(1, move |x: &[f64]| hn(x[0], 0) + 0.7 * hn(x[0], 7));
        let tf = apply_t(&k, &f, &settings()).unwrap();
        for x in [-1.5, 0.0, 0.8, 2.2] {
            assert!((tf.value(&[x]) - hn(x, 0)).abs() < 1e-10);
            assert!((apply_t_at(&k, &f, &[x], &settings()).unwrap() - hn(x, 0)).abs() < 1e-10);
        }
    }

    #[test]
    fn projector_idempotency_defect_is_tiny() {
        let k = hermite(5);
        let a = field(1, |x: &[f64]| (-(x[0] - 0.5).powi(2)).exp());
        let b = field(1, |x: &[f64]| x[0] / (1.0 + x[0] * x[0]).powi(3));
        let d = idempotency_defect(&k, &[&a, &b], 4.0, &settings()).unwrap();
        assert!(d < 1e-8, "defect {d}");
    }

    #[test]
    fn rank_one_gaussian_defect_is_norm_gap() {
        // K = g⊗g, ‖g‖² = 2 ⇒ T²f = 2·Tf, relative defect exactly 1
        let k = Arc::new(
            KernelSpec::<f64>::with_constants(
                KernelFamily::RankOneGaussian { scale: 2.0f64.sqrt() },
                1,
                2.0,
                4.0,
                5.0,
                10.0,
            )
            .unwrap(),
        );
        let f = field(1, |x: &[f64]| (-(x[0] - 0.3).powi(2)).exp());
        let d = idempotency_defect(&k, &[&f], 4.0, &settings()).unwrap();
        assert!((d - 1.0).abs() < 1e-10, "defect {d}");
        assert!(d > 0.1);
    }

    #[test]
    fn annihilated_test_fields_are_degenerate() {
        let k = hermite(1);
        let odd = field(1, |x: &[f64]| x[0] * (-x[0] * x[0]).exp());
        assert!(matches!(
            idempotency_defect(&k, &[&odd], 4.0, &settings()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn field_in_range_has_zero_defect() {
        let k = hermite(5);
        let f = field(1, |x: &[f64]| {
            let mut h = [0.0; 5];
            hermite_functions(x[0], &mut h);
            0.3 * h[1] - 1.2 * h[4]
        });
        let tf = apply_t(&k, &f, &settings()).unwrap();
        let cube = settings().cube_grid(1, 4.0).unwrap();
        let err = lp_norm_box(|x| tf.value(x) - f.value(x), 2.0, &cube).unwrap();
        assert!(err < 1e-10);
    }

    #[test]
    fn spline_projector_is_idempotent() {
        let k = Arc::new(
            KernelSpec::fitted(KernelFamily::Spline { lattice_half_width: 8 }, 1, 2.0, 4.0, 10.0, 201).unwrap(),
        );
        let f = field(1, |x: &[f64]| (1.3 * x[0]).sin() * (-0.1 * x[0] * x[0]).exp()).compact(10.0);
        let d = idempotency_defect(&k, &[&f], 4.0, &settings()).unwrap();
        assert!(d < 1e-8, "defect {d}");
    }

    #[test]
    fn rank_one_hermite_k_is_pi_quarter() {
        let k = Arc::new(
            KernelSpec::<f64>::with_constants(KernelFamily::Hermite { rank: 1 }, 1, 2.0, 4.0, 2.0, 10.0).unwrap(),
        );
        let expect = std::f64::consts::PI.powf(-0.25);
        for r in [1.0, 4.0, 9.0] {
            let c = k_sup(&k, r, &settings()).unwrap();
            assert!((c.k - expect).abs() < 1e-10, "R={r}: k={}", c.k);
        }
        // scaled kernel
        let scaled = Arc::new(k.scaled(-3.0));
        let c = k_sup(&scaled, 4.0, &settings()).unwrap();
        assert!((c.k - 3.0 * expect).abs() < 1e-9);
    }

    #[test]
    fn k_sup_is_monotone_and_order_independent() {
        let k = hermite(5);
        let s = settings();
        let mut last = 0.0;
        for r in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let c = k_sup(&k, r, &s).unwrap();
            assert!(c.k >= last);
            last = c.k;
        }
        let pts = CubeGrid::new(1, 4.0, 129).points();
        let mut rev = pts.clone();
        rev.reverse();
        assert_eq!(k_sup_over(&k, &pts, &s).unwrap(), k_sup_over(&k, &rev, &s).unwrap());
    }

    #[test]
    fn oscillation_decreases_with_radius() {
        let k = hermite(5);
        let s = settings();
        assert_eq!(oscillation_modulus(&*k, 0.0, 6.0, OscillationGrid::default(), &s).unwrap(), 0.0);
        assert!(oscillation_modulus(&*k, -0.1, 6.0, OscillationGrid::default(), &s).is_err());
        let values: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&e| oscillation_modulus(&*k, e, 6.0, OscillationGrid::default(), &s).unwrap())
            .collect();
        assert!(values[0] > values[1] && values[1] > values[2], "{values:?}");
        assert!(values[2] > 0.0);
    }

    #[test]
    fn envelope_kernel_saturates_its_envelope() {
        let k = KernelSpec::<f64>::with_constants(
            KernelFamily::Envelope { amplitude: 1.5, rate: 4.0 },
            1,
            2.0,
            4.0,
            1.5,
            6.0,
        )
        .unwrap();
        let c = decay_envelope_check(&k, 500, 3).unwrap();
        assert!((c.worst_ratio - 1.0).abs() < 1e-12);
        assert!(c.holds);
    }

    #[test]
    fn fitted_hermite_decay_holds_and_halving_breaks_it() {
        let k = hermite(5);
        let c = decay_envelope_check(&*k, 20_000, 99).unwrap();
        assert!(c.holds, "worst {}", c.worst_ratio);
        let halved = (*k).clone().with_decay_amplitude(k.decay_amplitude() / 2.0);
        let c = decay_envelope_check(&halved, 20_000, 99).unwrap();
        assert!(!c.holds);
    }

    #[test]
    fn two_dimensional_kernel_is_tensor_product() {
        let k1 = KernelSpec::<f64>::with_constants(KernelFamily::Hermite { rank: 3 }, 1, 2.0, 4.0, 1.0, 6.0).unwrap();
        let k2 = KernelSpec::<f64>::with_constants(KernelFamily::Hermite { rank: 3 }, 2, 2.0, 5.0, 1.0, 6.0).unwrap();
        let (x, y) = ([0.3, -1.2], [0.9, 0.1]);
        let prod = k1.eval(&x[..1], &y[..1]) * k1.eval(&x[1..], &y[1..]);
        assert_relative_eq!(k2.eval(&x, &y), prod, max_relative = 1e-14);
        // row coefficients reproduce the kernel
        let row = k2.row_coefficients(&x).unwrap();
        let v = k2.expansion().unwrap().eval_coefficients(&row, &y);
        assert_relative_eq!(v, k2.eval(&x, &y), max_relative = 1e-12);
    }
}
