//! Tensor-product Gauss–Legendre quadrature on centred boxes, `L^p` norms on
//! boxes and on the whole space, and the scalar-field abstraction every other
//! module integrates against.
//!
//! Boxes are always centred at the origin: `[-h_1, h_1] × … × [-h_n, h_n]`.
//! Each axis is split into equal cells and an order-`q` Gauss–Legendre rule is
//! placed in every cell, so polynomials of degree `2q - 1` per axis are
//! integrated exactly and piecewise-polynomial integrands are exact whenever
//! their breakpoints fall on cell boundaries.

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, l1_norm, lit, linf_norm, to_f64, Real};

/// Order of the per-cell Gauss–Legendre rule used unless a caller asks otherwise.
pub const DEFAULT_ORDER: usize = 8;

/// Tail mass allowed outside the truncation box, relative to the truncated `p`-th power mass.
pub const TAIL_TOLERANCE: f64 = 1e-3;

const MAX_TRUNCATION_DOUBLINGS: usize = 8;

/// Composite Gauss–Legendre rule on a centred box in `R^n`, `n ∈ {1, 2}`.
#[derive(Debug, Clone)]
pub struct QuadratureGrid<T> {
    dim: usize,
    half_widths: Vec<T>,
    cells: usize,
    order: usize,
    axis_nodes: Vec<Vec<T>>,
    axis_weights: Vec<Vec<T>>,
}

impl<T: Real> QuadratureGrid<T> {
    /// Cube `[-h, h]^n` with `cells` cells per axis and the default rule order.
    pub fn cube(dim: usize, half_width: T, cells: usize) -> Result<Self> {
        Self::new(&vec![half_width; dim], cells, DEFAULT_ORDER)
    }

    pub fn new(half_widths: &[T], cells: usize, order: usize) -> Result<Self> {
        let dim = half_widths.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::contract(format!("quadrature dimension must be 1 or 2, got {dim}")));
        }
        if cells == 0 || order == 0 || cells * order < 2 {
            return Err(Error::contract("quadrature needs at least 2 nodes per axis"));
        }
        if half_widths.iter().any(|h| !(*h > T::zero()) || !h.is_finite()) {
            return Err(Error::contract("quadrature half-widths must be positive and finite"));
        }
        let rule = GaussLegendre::new(order)
            .map_err(|e| Error::contract(format!("Gauss-Legendre rule of order {order}: {e}")))?;
        let reference: Vec<(T, T)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (lit(x), lit(w)))
            .collect();

        let two = lit::<T>(2.0);
        let mut axis_nodes = Vec::with_capacity(dim);
        let mut axis_weights = Vec::with_capacity(dim);
        for &h in half_widths {
            let width = two * h / from_usize(cells);
            let half_cell = width / two;
            let mut nodes = Vec::with_capacity(cells * order);
            let mut weights = Vec::with_capacity(cells * order);
            for c in 0..cells {
                let mid = -h + width * (from_usize::<T>(c) + lit(0.5));
                for &(x, w) in &reference {
                    nodes.push(mid + half_cell * x);
                    weights.push(half_cell * w);
                }
            }
            axis_nodes.push(nodes);
            axis_weights.push(weights);
        }
        Ok(QuadratureGrid {
            dim,
            half_widths: half_widths.to_vec(),
            cells,
            order,
            axis_nodes,
            axis_weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_widths(&self) -> &[T] {
        &self.half_widths
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.cells * self.order
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    pub fn volume(&self) -> T {
        self.half_widths
            .iter()
            .fold(T::one(), |acc, h| acc * lit::<T>(2.0) * *h)
    }

    /// Same box with every axis refined by a factor of two.
    pub fn refined(&self) -> Self {
        Self::new(&self.half_widths, self.cells * 2, self.order).expect("refining a valid grid")
    }

    /// Visits every node with its tensor weight, in a fixed order.
    pub fn for_each_node(&self, mut visit: impl FnMut(&[T], T)) {
        let m = self.nodes_per_axis();
        let mut point = vec![T::zero(); self.dim];
        match self.dim {
            1 => {
                for i in 0..m {
                    point[0] = self.axis_nodes[0][i];
                    visit(&point, self.axis_weights[0][i]);
                }
            }
            _ => {
                for i in 0..m {
                    point[0] = self.axis_nodes[0][i];
                    let wi = self.axis_weights[0][i];
                    for j in 0..m {
                        point[1] = self.axis_nodes[1][j];
                        visit(&point, wi * self.axis_weights[1][j]);
                    }
                }
            }
        }
    }

    /// Total weight; equals the box volume up to rounding.
    pub fn weight_sum(&self) -> T {
        let mut total = T::zero();
        self.for_each_node(|_, w| total = total + w);
        total
    }
}

/// Quadrature approximation of `∫_box f(x) dx`.
pub fn integrate_box<T: Real>(f: impl Fn(&[T]) -> T, grid: &QuadratureGrid<T>) -> Result<T> {
    let mut total = T::zero();
    let mut failure: Option<Error> = None;
    grid.for_each_node(|x, w| {
        if failure.is_some() {
            return;
        }
        let v = f(x);
        if !v.is_finite() {
            failure = Some(Error::NonFinite {
                node: x.iter().map(|c| to_f64(*c)).collect(),
                value: to_f64(v),
            });
            return;
        }
        total = total + v * w;
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

/// `(∫_box |f|^p)^{1/p}`.
pub fn lp_norm_box<T: Real>(f: impl Fn(&[T]) -> T, p: T, grid: &QuadratureGrid<T>) -> Result<T> {
    check_exponent(p)?;
    let mass = integrate_box(|x| f(x).abs().powf(p), grid)?;
    Ok(mass.powf(p.recip()))
}

pub(crate) fn check_exponent<T: Real>(p: T) -> Result<()> {
    if !(p >= T::one()) || !p.is_finite() {
        return Err(Error::contract(format!("norm exponent must be finite and >= 1, got {p}")));
    }
    Ok(())
}

/// Power-law bound `|f(x)| ≤ amplitude / (shift + ‖x‖₁ − offset)^rate`,
/// valid wherever the base is positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub amplitude: T,
    pub shift: T,
    pub offset: T,
    pub rate: T,
}

impl<T: Real> Envelope<T> {
    /// Pure power law `amplitude / ‖x‖₁^rate`.
    pub fn power(amplitude: T, rate: T) -> Self {
        Envelope { amplitude, shift: T::zero(), offset: T::zero(), rate }
    }

    pub fn bound_at(&self, x: &[T]) -> T {
        let base = self.shift + l1_norm(x) - self.offset;
        if base > T::zero() {
            self.amplitude / base.powf(self.rate)
        } else {
            T::infinity()
        }
    }

    /// Closed-form upper bound on `∫_{‖x‖∞ > T} |f|^p dx`.
    ///
    /// The region is enlarged to `‖x‖₁ > T`, whose level sets have surface
    /// measure `2^n t^{n-1} / (n-1)!`.
    pub fn tail_mass(&self, dim: usize, p: T, half_width: T) -> Result<T> {
        let q = self.rate * p;
        let c = self.shift - self.offset;
        let start = half_width + c;
        if !(start > T::zero()) {
            return Err(Error::contract(format!(
                "envelope not valid outside the box: half-width {half_width} does not clear offset {}",
                self.offset - self.shift
            )));
        }
        let dim_t = from_usize::<T>(dim);
        if !(q > dim_t) {
            return Err(Error::contract("envelope decays too slowly for a finite tail"));
        }
        let amp = self.amplitude.abs().powf(p);
        let one = T::one();
        let two = lit::<T>(2.0);
        let tail = match dim {
            1 => two * amp * start.powf(one - q) / (q - one),
            2 => {
                lit::<T>(4.0)
                    * amp
                    * (start.powf(two - q) / (q - two) - c * start.powf(one - q) / (q - one))
            }
            _ => return Err(Error::contract("tail bound implemented for n ∈ {1, 2}")),
        };
        Ok(tail.max(T::zero()))
    }
}

/// What is known about a field outside any bounded box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail<T> {
    /// Vanishes outside `[-h, h]^n`.
    Compact { half_width: T },
    Envelope(Envelope<T>),
    Unknown,
}

/// A real-valued function on `R^n`.
pub trait ScalarField<T: Real>: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[T]) -> T;

    fn tail(&self) -> Tail<T> {
        Tail::Unknown
    }
}

impl<T: Real, F: ScalarField<T> + ?Sized> ScalarField<T> for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[T]) -> T {
        (**self).value(x)
    }
    fn tail(&self) -> Tail<T> {
        (**self).tail()
    }
}

impl<T: Real, F: ScalarField<T> + ?Sized> ScalarField<T> for Box<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[T]) -> T {
        (**self).value(x)
    }
    fn tail(&self) -> Tail<T> {
        (**self).tail()
    }
}

/// Closure-backed field.
pub struct FnField<T, F> {
    dim: usize,
    f: F,
    tail: Tail<T>,
}

pub fn field<T: Real, F: Fn(&[T]) -> T + Sync>(dim: usize, f: F) -> FnField<T, F> {
    FnField { dim, f, tail: Tail::Unknown }
}

/// Closure-backed field with a known tail.
pub fn field_with_tail<T: Real, F: Fn(&[T]) -> T + Sync>(dim: usize, f: F, tail: Tail<T>) -> FnField<T, F> {
    FnField { dim, f, tail }
}

impl<T: Real, F: Fn(&[T]) -> T + Sync> FnField<T, F> {
    pub fn compact(mut self, half_width: T) -> Self {
        self.tail = Tail::Compact { half_width };
        self
    }

    pub fn with_envelope(mut self, envelope: Envelope<T>) -> Self {
        self.tail = Tail::Envelope(envelope);
        self
    }
}

impl<T: Real, F: Fn(&[T]) -> T + Sync> ScalarField<T> for FnField<T, F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[T]) -> T {
        (self.f)(x)
    }
    fn tail(&self) -> Tail<T> {
        self.tail
    }
}

/// Shared quadrature policy: cell density, rule order, default truncation box
/// and the dense grid used for suprema over `C_R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings<T> {
    /// Cells per unit length along each axis.
    pub cells_per_unit: usize,
    pub order: usize,
    /// Initial half-width of the truncation box for global norms.
    pub truncation_half_width: T,
    /// Points per axis of the deterministic grid on `C_R`.
    pub cube_grid_points: usize,
}

impl<T: Real> Default for QuadratureSettings<T> {
    fn default() -> Self {
        QuadratureSettings {
            cells_per_unit: 4,
            order: DEFAULT_ORDER,
            truncation_half_width: lit(12.0),
            cube_grid_points: 129,
        }
    }
}

impl<T: Real> QuadratureSettings<T> {
    /// Grid on `[-h, h]^n` with `ceil(2h · cells_per_unit)` cells per axis.
    pub fn grid(&self, dim: usize, half_width: T) -> Result<QuadratureGrid<T>> {
        let cells = (lit::<T>(2.0) * half_width * from_usize(self.cells_per_unit))
            .ceil()
            .to_usize()
            .unwrap_or(1)
            .max(1);
        QuadratureGrid::new(&vec![half_width; dim], cells, self.order)
    }

    /// Grid on the cube `C_R = [-R/2, R/2]^n`.
    pub fn cube_grid(&self, dim: usize, side: T) -> Result<QuadratureGrid<T>> {
        self.grid(dim, side / lit(2.0))
    }

    pub fn refined(&self) -> Self {
        QuadratureSettings { cells_per_unit: self.cells_per_unit * 2, ..*self }
    }
}

/// Truncated global norm together with the bound on the omitted `p`-th power mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalNorm<T> {
    pub value: T,
    pub tail_bound: T,
    pub half_width: T,
}

impl<T: Real> GlobalNorm<T> {
    /// Largest norm compatible with the tail bound.
    pub fn upper(&self, p: T) -> T {
        (self.value.powf(p) + self.tail_bound).powf(p.recip())
    }
}

/// `‖f‖_{L^p(R^n)}` truncated to `[-T, T]^n`, plus an analytic bound on the tail mass.
pub fn lp_norm_global<T: Real>(
    f: &(impl ScalarField<T> + ?Sized),
    p: T,
    tail_box_half_width: T,
    settings: &QuadratureSettings<T>,
) -> Result<GlobalNorm<T>> {
    check_exponent(p)?;
    let (box_half_width, tail_bound) = match f.tail() {
        Tail::Compact { half_width } if half_width <= tail_box_half_width => {
            (half_width, T::zero())
        }
        Tail::Compact { .. } => {
            return Err(Error::contract(
                "compactly supported field extends past the truncation box",
            ))
        }
        Tail::Envelope(env) => (
            tail_box_half_width,
            env.tail_mass(f.dim(), p, tail_box_half_width)?,
        ),
        Tail::Unknown => {
            return Err(Error::contract(
                "global norm needs a decay envelope or compact support for the field",
            ))
        }
    };
    let grid = settings.grid(f.dim(), box_half_width)?;
    let value = lp_norm_box(|x| f.value(x), p, &grid)?;
    Ok(GlobalNorm { value, tail_bound, half_width: box_half_width })
}

/// Global norm with the truncation box grown (by doubling) until the tail
/// bound is below [`TAIL_TOLERANCE`] of the truncated mass.
pub fn lp_norm_global_auto<T: Real>(
    f: &(impl ScalarField<T> + ?Sized),
    p: T,
    settings: &QuadratureSettings<T>,
) -> Result<GlobalNorm<T>> {
    let mut half_width = settings.truncation_half_width;
    if let Tail::Envelope(env) = f.tail() {
        // the envelope is only usable once the box clears its offset
        let clear = env.offset - env.shift + T::one();
        while half_width < clear {
            half_width = half_width * lit(2.0);
        }
    }
    let mut result = lp_norm_global(f, p, half_width, settings)?;
    for _ in 0..MAX_TRUNCATION_DOUBLINGS {
        if result.tail_bound <= lit::<T>(TAIL_TOLERANCE) * result.value.powf(p) {
            break;
        }
        half_width = half_width * lit(2.0);
        result = lp_norm_global(f, p, half_width, settings)?;
    }
    Ok(result)
}

/// Deterministic grid of `points` equispaced nodes per axis on `C_R`,
/// endpoints included. With an odd count the centre is a node.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeGrid<T> {
    pub dim: usize,
    pub side: T,
    pub points_per_axis: usize,
}

impl<T: Real> CubeGrid<T> {
    pub fn new(dim: usize, side: T, points_per_axis: usize) -> Self {
        CubeGrid { dim, side, points_per_axis: points_per_axis.max(2) }
    }

    pub fn axis(&self) -> Vec<T> {
        let m = self.points_per_axis;
        let h = self.side / lit(2.0);
        let step = self.side / from_usize(m - 1);
        (0..m).map(|i| -h + step * from_usize(i)).collect()
    }

    pub fn points(&self) -> Vec<Vec<T>> {
        let axis = self.axis();
        match self.dim {
            1 => axis.iter().map(|&x| vec![x]).collect(),
            _ => axis
                .iter()
                .flat_map(|&x| axis.iter().map(move |&y| vec![x, y]))
                .collect(),
        }
    }

    /// `max |f|` over the grid.
    pub fn sup_abs(&self, f: impl Fn(&[T]) -> T) -> T {
        self.points()
            .iter()
            .fold(T::zero(), |acc, x| acc.max(f(x).abs()))
    }
}

/// True if `x` lies in the closed cube `[-h, h]^n`.
pub fn in_cube<T: Real>(x: &[T], half_width: T) -> bool {
    linf_norm(x) <= half_width
}
