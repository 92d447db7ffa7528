//! The space `V = Range(T)` seen through a lattice `Γ`: frame functions
//! `φ_γ(x) = η^{-n/p} ∫_{C_η} K(γ + z, x) dz` with `C_η = [-η/2, η/2]^n`,
//! synthesised members `f = Σ c_γ φ_γ`, truncation to `V_N`, and membership
//! in the concentrated class `V(R, δ)`.

use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{apply_t, KernelFamily, KernelSpec};
use crate::numerics::{
    in_cube, integrate_box, lp_norm_box, lp_norm_global_auto, CubeGrid, Envelope,
    QuadratureGrid, QuadratureSettings, ScalarField, Tail,
};
use crate::scalar::{from_usize, l1_distance, l1_norm, lit, to_f64, Real};

/// Cells per axis used for the `C_η` integral in `φ_γ`. Even, so that a knot at `γ` is a cell boundary.
const PHI_CELLS: usize = 8;

/// Redraw limit of [`sample_random_member`].
pub const MAX_REJECTIONS: usize = 1000;

/// Tolerance on `‖f‖_{L^p(R^n)} = 1` for a function to count as normalised.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Relatively separated node set `Γ` with gap `η`, restricted to `[-h, h]^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice<T> {
    dim: usize,
    gap: T,
    half_width: T,
    nodes: Vec<Vec<T>>,
}

impl<T: Real> Lattice<T> {
    /// `η = 1/n`, the default gap.
    pub fn default_gap(dim: usize) -> T {
        T::one() / from_usize(dim)
    }

    /// `η Z^n ∩ [-h, h]^n`.
    pub fn uniform(dim: usize, gap: T, half_width: T) -> Result<Self> {
        Self::check_gap(dim, gap)?;
        if !(half_width >= T::zero()) {
            return Err(Error::contract("lattice half-width must be non-negative"));
        }
        let slack = lit::<T>(1e-9);
        let kmax = ((half_width + slack) / gap).floor().to_i64().unwrap_or(0);
        let axis: Vec<T> = (-kmax..=kmax).map(|k| gap * lit(k as f64)).collect();
        let nodes = match dim {
            1 => axis.iter().map(|&x| vec![x]).collect(),
            _ => axis
                .iter()
                .flat_map(|&y| axis.iter().map(move |&x| vec![x, y]))
                .collect(),
        };
        Ok(Lattice { dim, gap, half_width, nodes })
    }

    /// Arbitrary node set; pairwise `ℓ¹` separation of at least `η` is verified.
    pub fn from_nodes(dim: usize, gap: T, half_width: T, nodes: Vec<Vec<T>>) -> Result<Self> {
        Self::check_gap(dim, gap)?;
        if nodes.iter().any(|x| x.len() != dim) {
            return Err(Error::contract("node dimension mismatch"));
        }
        let lattice = Lattice { dim, gap, half_width, nodes };
        if let Some(sep) = lattice.min_separation() {
            if sep < gap * (T::one() - lit(1e-12)) {
                return Err(Error::contract(format!(
                    "nodes are not separated by the gap: min ℓ¹ distance {sep} < η = {gap}"
                )));
            }
        }
        if lattice.nodes.iter().any(|x| !in_cube(x, half_width + lit(1e-9))) {
            return Err(Error::contract("node outside the working box"));
        }
        Ok(lattice)
    }

    fn check_gap(dim: usize, gap: T) -> Result<()> {
        if !(1..=2).contains(&dim) {
            return Err(Error::contract(format!("dimension must be 1 or 2, got {dim}")));
        }
        let limit = lit::<T>(2.0) / from_usize(dim);
        if !(gap > T::zero() && gap < limit) {
            return Err(Error::contract(format!("gap η = {gap} must lie in (0, 2/n = {limit})")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gap(&self) -> T {
        self.gap
    }

    pub fn half_width(&self) -> T {
        self.half_width
    }

    pub fn nodes(&self) -> &[Vec<T>] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn min_separation(&self) -> Option<T> {
        let mut best: Option<T> = None;
        for (i, a) in self.nodes.iter().enumerate() {
            for b in &self.nodes[i + 1..] {
                let d = l1_distance(a, b);
                best = Some(best.map_or(d, |v: T| v.min(d)));
            }
        }
        best
    }

    /// `N₀(Γ)`: the largest number of nodes in a closed unit cell `k + [-1/2, 1/2]^n`, `k ∈ Z^n`.
    pub fn cell_occupancy(&self) -> usize {
        let half = lit::<T>(0.5);
        let eps = lit::<T>(1e-9);
        let mut counts: HashMap<Vec<i64>, usize> = HashMap::new();
        for x in &self.nodes {
            // every integer k with |x_i - k_i| <= 1/2 on each axis
            let ranges: Vec<(i64, i64)> = x
                .iter()
                .map(|&c| {
                    let lo = (c - half - eps).ceil().to_i64().unwrap_or(0);
                    let hi = (c + half + eps).floor().to_i64().unwrap_or(0);
                    (lo, hi)
                })
                .collect();
            let mut cells: Vec<Vec<i64>> = vec![vec![]];
            for (lo, hi) in ranges {
                cells = cells
                    .into_iter()
                    .flat_map(|prefix| {
                        (lo..=hi).map(move |k| {
                            let mut c = prefix.clone();
                            c.push(k);
                            c
                        })
                    })
                    .collect();
            }
            for c in cells {
                *counts.entry(c).or_insert(0) += 1;
            }
        }
        counts.values().copied().max().unwrap_or(0)
    }

    /// Indices of nodes in the closed cube `[-h, h]^n`.
    pub fn indices_within(&self, half_width: T) -> Vec<usize> {
        let tol = lit::<T>(1e-12);
        (0..self.nodes.len())
            .filter(|&i| in_cube(&self.nodes[i], half_width + tol))
            .collect()
    }
}

/// `φ_γ(x)` by direct quadrature of `K(γ + z, x)` over `C_η`.
pub fn phi_gamma<T: Real>(kernel: &KernelSpec<T>, lattice: &Lattice<T>, node: usize, x: &[T]) -> Result<T> {
    let gamma = lattice
        .nodes()
        .get(node)
        .ok_or_else(|| Error::contract(format!("node index {node} outside the lattice")))?;
    let eta = lattice.gap();
    let grid = QuadratureGrid::cube(lattice.dim(), eta / lit(2.0), PHI_CELLS)?;
    let integral = integrate_box(
        |z| {
            let shifted: Vec<T> = gamma.iter().zip(z).map(|(g, d)| *g + *d).collect();
            kernel.eval(&shifted, x)
        },
        &grid,
    )?;
    Ok(eta.powf(-from_usize::<T>(lattice.dim()) / kernel.p()) * integral)
}

/// The frame `Φ = {φ_γ}` of a kernel over a lattice, with the tensor-basis
/// coefficients of every `φ_γ` precomputed for factorised kernels.
#[derive(Debug, Clone)]
pub struct Frame<T> {
    kernel: Arc<KernelSpec<T>>,
    lattice: Arc<Lattice<T>>,
    table: Option<Vec<Vec<T>>>,
}

impl<T: Real> Frame<T> {
    pub fn new(kernel: Arc<KernelSpec<T>>, lattice: Arc<Lattice<T>>) -> Result<Self> {
        if kernel.dim() != lattice.dim() {
            return Err(Error::contract("kernel and lattice dimensions differ"));
        }
        let table = match kernel.expansion() {
            None => None,
            Some(exp) => {
                let eta = lattice.gap();
                let grid = QuadratureGrid::cube(1, eta / lit(2.0), PHI_CELLS)?;
                let scale = eta.powf(-from_usize::<T>(lattice.dim()) / kernel.p()) * kernel.gain();
                let m = exp.axis_len();
                let axis_integral = |c: T| -> Vec<T> {
                    let mut acc = vec![T::zero(); m];
                    grid.for_each_node(|z, w| {
                        for (a, u) in acc.iter_mut().zip(exp.basis().eval(c + z[0])) {
                            *a = *a + w * u;
                        }
                    });
                    acc
                };
                let rows = lattice
                    .nodes()
                    .iter()
                    .map(|gamma| {
                        let s0 = axis_integral(gamma[0]);
                        let s = if lattice.dim() == 1 {
                            s0
                        } else {
                            let s1 = axis_integral(gamma[1]);
                            let mut out = vec![T::zero(); m * m];
                            for j in 0..m {
                                for i in 0..m {
                                    out[i + m * j] = s0[i] * s1[j];
                                }
                            }
                            out
                        };
                        exp.apply_mix(&s).into_iter().map(|v| v * scale).collect()
                    })
                    .collect();
                Some(rows)
            }
        };
        Ok(Frame { kernel, lattice, table })
    }

    pub fn kernel(&self) -> &Arc<KernelSpec<T>> {
        &self.kernel
    }

    pub fn lattice(&self) -> &Arc<Lattice<T>> {
        &self.lattice
    }

    /// Tensor-basis coefficients of `φ_γ` (factorised kernels only).
    pub fn frame_coefficients(&self, node: usize) -> Option<&[T]> {
        self.table.as_ref().map(|t| t[node].as_slice())
    }

    /// `φ_γ(x)`, through the basis table when available.
    pub fn phi(&self, node: usize, x: &[T]) -> Result<T> {
        match (self.kernel.expansion(), &self.table) {
            (Some(exp), Some(table)) => Ok(exp.eval_coefficients(&table[node], x)),
            _ => phi_gamma(&self.kernel, &self.lattice, node, x),
        }
    }

    fn basis_of(&self, coefficients: &[T]) -> Option<Vec<T>> {
        let table = self.table.as_ref()?;
        let width = table.first().map_or(0, Vec::len);
        let mut out = vec![T::zero(); width];
        for (c, row) in coefficients.iter().zip(table) {
            if *c == T::zero() {
                continue;
            }
            for (o, r) in out.iter_mut().zip(row) {
                *o = *o + *c * *r;
            }
        }
        Some(out)
    }

    /// Pointwise bound `|φ_γ(x)| ≤ η^{n/p'} C / (1 - nη/2 + ‖γ - x‖₁)^α`.
    pub fn phi_envelope(&self, node: usize, x: &[T]) -> T {
        let n = from_usize::<T>(self.lattice.dim());
        let eta = self.lattice.gap();
        let base = T::one() - n * eta / lit(2.0) + l1_distance(&self.lattice.nodes()[node], x);
        eta.powf(n / self.kernel.p_conj()) * self.kernel.decay_amplitude()
            / base.powf(self.kernel.decay_rate())
    }
}

/// `f = Σ_γ c_γ φ_γ`, an element of `V`.
#[derive(Debug, Clone)]
pub struct SynthFunction<T> {
    frame: Arc<Frame<T>>,
    coefficients: Vec<T>,
    basis: Option<Vec<T>>,
    global_norm: Option<T>,
    seed: Option<u64>,
}

impl<T: Real> SynthFunction<T> {
    pub fn frame(&self) -> &Arc<Frame<T>> {
        &self.frame
    }

    pub fn kernel(&self) -> &Arc<KernelSpec<T>> {
        self.frame.kernel()
    }

    pub fn lattice(&self) -> &Arc<Lattice<T>> {
        self.frame.lattice()
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn basis_coefficients(&self) -> Option<&[T]> {
        self.basis.as_deref()
    }

    /// Cached `‖f‖_{L^p(R^n)}`, set by [`SynthFunction::normalize`].
    pub fn global_norm(&self) -> Option<T> {
        self.global_norm
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn is_normalized(&self) -> bool {
        self.global_norm
            .is_some_and(|n| (n - T::one()).abs() <= lit(NORMALIZATION_TOLERANCE))
    }

    pub fn p(&self) -> T {
        self.kernel().p()
    }

    /// `c·f`; the cached norm is scaled along.
    pub fn scaled(&self, c: T) -> Self {
        SynthFunction {
            frame: Arc::clone(&self.frame),
            coefficients: self.coefficients.iter().map(|v| *v * c).collect(),
            basis: self.basis.as_ref().map(|b| b.iter().map(|v| *v * c).collect()),
            global_norm: self.global_norm.map(|n| n * c.abs()),
            seed: self.seed,
        }
    }

    /// Replaces the basis representation by that of `Tf`, so the function lies
    /// in `Range(T)` to quadrature accuracy.
    pub fn project_onto_range(&mut self, settings: &QuadratureSettings<T>) -> Result<()> {
        if self.basis.is_none() {
            return Ok(());
        }
        let kernel = Arc::clone(self.kernel());
        let image = apply_t(&kernel, self, settings)?;
        if let crate::kernels::Image::Expanded(e) = image {
            self.basis = Some(e.coefficients().to_vec());
        }
        self.global_norm = None;
        Ok(())
    }

    /// Rescales so that `‖f‖_{L^p(R^n)} = 1`.
    pub fn normalize(&mut self, settings: &QuadratureSettings<T>) -> Result<()> {
        let norm = lp_norm_global_auto(self, self.p(), settings)?.value;
        if !(norm > lit(1e-300)) || !norm.is_finite() {
            return Err(Error::degenerate(format!("cannot normalise a function of norm {norm}")));
        }
        let inv = norm.recip();
        for c in &mut self.coefficients {
            *c = *c * inv;
        }
        if let Some(b) = &mut self.basis {
            for c in b {
                *c = *c * inv;
            }
        }
        self.global_norm = Some(T::one());
        Ok(())
    }

    fn require_normalized(&self) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(Error::contract("function must be normalised to unit global p-norm"))
        }
    }

    pub fn to_document(&self) -> SynthDocument {
        let kernel = self.kernel();
        let lattice = self.lattice();
        SynthDocument {
            kernel: KernelDescriptor {
                family: kernel.family().clone(),
                dim: kernel.dim(),
                p: to_f64(kernel.p()),
                decay_rate: to_f64(kernel.decay_rate()),
                decay_amplitude: to_f64(kernel.decay_amplitude()),
                working_half_width: to_f64(kernel.working_half_width()),
                gain: to_f64(kernel.gain()),
            },
            lattice: LatticeDescriptor {
                dim: lattice.dim(),
                gap: to_f64(lattice.gap()),
                half_width: to_f64(lattice.half_width()),
            },
            coefficients: self.coefficients.iter().map(|c| to_f64(*c)).collect(),
            basis_coefficients: self
                .basis
                .as_ref()
                .map(|b| b.iter().map(|c| to_f64(*c)).collect()),
            global_norm: self.global_norm.map(to_f64),
            seed: self.seed,
        }
    }

    pub fn from_document(doc: &SynthDocument) -> Result<Self> {
        let k = &doc.kernel;
        let kernel = KernelSpec::with_constants(
            k.family.clone(),
            k.dim,
            lit(k.p),
            lit(k.decay_rate),
            lit(k.decay_amplitude),
            lit(k.working_half_width),
        )?;
        let kernel = if k.gain == 1.0 {
            kernel
        } else {
            kernel.scaled(lit(k.gain)).with_decay_amplitude(lit(k.decay_amplitude))
        };
        let lattice = Lattice::uniform(doc.lattice.dim, lit(doc.lattice.gap), lit(doc.lattice.half_width))?;
        let frame = Arc::new(Frame::new(Arc::new(kernel), Arc::new(lattice))?);
        let coefficients: Vec<T> = doc.coefficients.iter().map(|c| lit(*c)).collect();
        let mut f = synthesize_raw(&frame, coefficients)?;
        if let Some(b) = &doc.basis_coefficients {
            if f.basis.as_ref().map(Vec::len) != Some(b.len()) {
                return Err(Error::contract("basis coefficient count does not match the kernel"));
            }
            f.basis = Some(b.iter().map(|c| lit(*c)).collect());
        }
        f.global_norm = doc.global_norm.map(lit);
        f.seed = doc.seed;
        Ok(f)
    }
}

impl<T: Real> ScalarField<T> for SynthFunction<T> {
    fn dim(&self) -> usize {
        self.lattice().dim()
    }

    fn value(&self, x: &[T]) -> T {
        match (self.kernel().expansion(), &self.basis) {
            (Some(exp), Some(b)) => exp.eval_coefficients(b, x),
            _ => self
                .coefficients
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != T::zero())
                .map(|(i, c)| *c * self.frame.phi(i, x).unwrap_or_else(|_| T::nan()))
                .sum(),
        }
    }

    fn tail(&self) -> Tail<T> {
        if let Some(h) = self
            .kernel()
            .expansion()
            .and_then(|e| e.basis().support_half_width())
        {
            return Tail::Compact { half_width: h };
        }
        let lattice = self.lattice();
        let n = from_usize::<T>(lattice.dim());
        let eta = lattice.gap();
        let mut mass = T::zero();
        let mut reach = T::zero();
        for (c, gamma) in self.coefficients.iter().zip(lattice.nodes()) {
            if *c != T::zero() {
                mass = mass + c.abs();
                reach = reach.max(l1_norm(gamma));
            }
        }
        Tail::Envelope(Envelope {
            amplitude: eta.powf(n / self.kernel().p_conj()) * self.kernel().decay_amplitude() * mass,
            shift: T::one() - n * eta / lit(2.0),
            offset: reach,
            rate: self.kernel().decay_rate(),
        })
    }
}

fn synthesize_raw<T: Real>(frame: &Arc<Frame<T>>, coefficients: Vec<T>) -> Result<SynthFunction<T>> {
    if coefficients.len() != frame.lattice().len() {
        return Err(Error::contract(format!(
            "{} coefficients for {} lattice nodes",
            coefficients.len(),
            frame.lattice().len()
        )));
    }
    let basis = frame.basis_of(&coefficients);
    Ok(SynthFunction { frame: Arc::clone(frame), coefficients, basis, global_norm: None, seed: None })
}

/// `x ↦ Σ c_γ φ_γ(x)`, optionally rescaled to unit global `p`-norm.
pub fn synthesize<T: Real>(
    frame: &Arc<Frame<T>>,
    coefficients: Vec<T>,
    normalize: bool,
    settings: &QuadratureSettings<T>,
) -> Result<SynthFunction<T>> {
    if normalize && coefficients.iter().all(|c| *c == T::zero()) {
        return Err(Error::degenerate("cannot normalise the zero coefficient vector"));
    }
    let mut f = synthesize_raw(frame, coefficients)?;
    if normalize {
        f.normalize(settings)?;
    }
    Ok(f)
}

/// `f_N`: keeps the coefficients of nodes in `[-N/2, N/2]^n`. Not renormalised.
pub fn truncate_to_box<T: Real>(f: &SynthFunction<T>, extent: T) -> Result<SynthFunction<T>> {
    if !(extent > T::zero()) {
        return Err(Error::contract("truncation extent N must be positive"));
    }
    let keep = extent / lit(2.0) + lit(1e-12);
    let coefficients = f
        .coefficients
        .iter()
        .zip(f.lattice().nodes())
        .map(|(c, gamma)| if in_cube(gamma, keep) { *c } else { T::zero() })
        .collect();
    let mut out = synthesize_raw(&f.frame, coefficients)?;
    out.seed = f.seed;
    Ok(out)
}

/// Measured concentration on `C_R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationResult<T> {
    /// `1 - ‖f‖^p_{L^p(C_R)} / ‖f‖^p_{L^p(R^n)}`.
    pub delta_measured: T,
    pub in_class: bool,
}

pub fn concentration<T: Real>(
    f: &SynthFunction<T>,
    side: T,
    delta: T,
    settings: &QuadratureSettings<T>,
) -> Result<ConcentrationResult<T>> {
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::contract(format!("δ = {delta} must lie in (0, 1)")));
    }
    f.require_normalized()?;
    let p = f.p();
    let grid = settings.cube_grid(f.dim(), side)?;
    let inside = lp_norm_box(|x| f.value(x), p, &grid)?.powf(p);
    let total = f.global_norm.unwrap_or_else(T::one).powf(p);
    let delta_measured = (T::one() - inside / total).max(T::zero()).min(T::one());
    Ok(ConcentrationResult { delta_measured, in_class: delta_measured <= delta })
}

/// A draw from `V(R, δ)` and the number of rejected candidates before it.
#[derive(Debug, Clone)]
pub struct Member<T> {
    pub function: SynthFunction<T>,
    pub rejections: usize,
}

/// Standard-normal coefficients on the nodes inside `C_R`, projected onto
/// `Range(T)` for projector kernels, normalised, and redrawn from a fresh
/// substream until the concentration test passes.
pub fn sample_random_member<T: Real>(
    frame: &Arc<Frame<T>>,
    side: T,
    delta: T,
    seed: u64,
    settings: &QuadratureSettings<T>,
) -> Result<Member<T>> {
    let inside = frame.lattice().indices_within(side / lit(2.0));
    if inside.is_empty() {
        return Err(Error::contract("no lattice node lies inside C_R"));
    }
    for attempt in 0..MAX_REJECTIONS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let mut coefficients = vec![T::zero(); frame.lattice().len()];
        for &i in &inside {
            let z: f64 = StandardNormal.sample(&mut rng);
            coefficients[i] = lit(z);
        }
        let f = candidate(frame, coefficients, settings)?.with_seed(seed);
        if concentration(&f, side, delta, settings)?.in_class {
            return Ok(Member { function: f, rejections: attempt });
        }
    }
    Err(Error::infeasible(format!(
        "{MAX_REJECTIONS} consecutive draws failed the concentration test; δ = {delta} is too small for this kernel, lattice and R = {side}"
    )))
}

/// Standard-normal coefficients on every lattice node, normalised.
pub fn sample_full_lattice_member<T: Real>(
    frame: &Arc<Frame<T>>,
    seed: u64,
    settings: &QuadratureSettings<T>,
) -> Result<SynthFunction<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coefficients = (0..frame.lattice().len())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            lit(z)
        })
        .collect();
    Ok(candidate(frame, coefficients, settings)?.with_seed(seed))
}

fn candidate<T: Real>(
    frame: &Arc<Frame<T>>,
    coefficients: Vec<T>,
    settings: &QuadratureSettings<T>,
) -> Result<SynthFunction<T>> {
    let mut f = synthesize_raw(frame, coefficients)?;
    if frame.kernel().family().is_projector() {
        f.project_onto_range(settings)?;
    }
    f.normalize(settings)?;
    Ok(f)
}

/// `‖f‖_{L^∞(C_R)}` over the same dense grid used for `k`.
pub fn linf_norm_cr<T: Real>(f: &(impl ScalarField<T> + ?Sized), side: T, points_per_axis: usize) -> T {
    CubeGrid::new(f.dim(), side, points_per_axis).sup_abs(|x| f.value(x))
}

/// Empirical stand-in for the upper `p`-frame constant: twice the largest
/// `Σ|c_γ|^p / ‖Σ c_γ φ_γ‖^p_{L^p}` over seeded standard-normal coefficient vectors.
pub fn empirical_frame_bound<T: Real>(
    frame: &Arc<Frame<T>>,
    trials: usize,
    seed: u64,
    settings: &QuadratureSettings<T>,
) -> Result<T> {
    if trials == 0 {
        return Err(Error::contract("frame bound needs at least one trial"));
    }
    let p = frame.kernel().p();
    let mut worst = T::zero();
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let coefficients: Vec<T> = (0..frame.lattice().len())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                lit(z)
            })
            .collect();
        let f = synthesize_raw(frame, coefficients)?;
        let norm = lp_norm_global_auto(&f, p, settings)?.value;
        if !(norm > T::zero()) {
            continue;
        }
        let mass: T = f.coefficients.iter().map(|c| c.abs().powf(p)).sum();
        worst = worst.max(mass / norm.powf(p));
    }
    if !(worst > T::zero()) || !worst.is_finite() {
        return Err(Error::degenerate("every synthesised function vanished"));
    }
    Ok(lit::<T>(2.0) * worst)
}

/// Serialisable kernel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDescriptor {
    #[serde(flatten)]
    pub family: KernelFamily,
    pub dim: usize,
    pub p: f64,
    pub decay_rate: f64,
    pub decay_amplitude: f64,
    pub working_half_width: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeDescriptor {
    pub dim: usize,
    pub gap: f64,
    pub half_width: f64,
}

/// JSON form of a [`SynthFunction`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDocument {
    pub kernel: KernelDescriptor,
    pub lattice: LatticeDescriptor,
    pub coefficients: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_coefficients: Option<Vec<f64>>,
    #[serde(default)]
    pub global_norm: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}
