//! Monte Carlo side of the library: uniform samples on `C_R`, the centred
//! statistics `Z_j(f) = |f(x_j)|^p - R^{-n} ∫_{C_R} |f|^p`, moment checks,
//! sampling trials and the diagnostics behind `verify`.
//!
//! Every random quantity comes from a ChaCha8 stream keyed by the master seed,
//! a purpose tag and an index, so results do not depend on thread scheduling.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{bernstein_tail, d_of, success_probability, truncation_n, BoundContext, SuccessBound};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::kernels::{
    apply_t, decay_envelope_check, idempotency_defect, k_sup, oscillation_modulus, KernelConstants,
    KernelSpec, OscillationGrid,
};
use crate::numerics::{field, lp_norm_box, CubeGrid, QuadratureSettings, ScalarField};
use crate::rkspace::{
    concentration, empirical_frame_bound, sample_full_lattice_member, sample_random_member,
    truncate_to_box, Frame, Lattice, SynthFunction,
};
use crate::scalar::{lit, to_f64, Real};

/// Normal quantile of the 95% Wilson interval.
pub const WILSON_Z: f64 = 1.96;

/// Description of the member generator, recorded in reports.
pub const GENERATOR: &str = "i.i.d. standard normal coefficients on lattice nodes inside C_R, \
projected through T for projector kernels, normalised to unit L^p norm, redrawn until the \
concentration test passes";

/// Purpose tags mixed into the master seed.
pub mod stream {
    pub const FRAME: u64 = 1;
    pub const MEMBER: u64 = 2;
    pub const SAMPLES: u64 = 3;
    pub const TRUNCATION: u64 = 4;
    pub const MOMENTS: u64 = 5;
    pub const DECAY: u64 = 6;
    pub const BERNSTEIN: u64 = 7;
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for item `index` of stream `tag` under `master`.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    mix(mix(mix(master) ^ tag) ^ index)
}

/// `r` points i.i.d. uniform on `[-R/2, R/2]^n`, from stream `trial_index` of `seed`.
pub fn draw_samples<T: Real>(dim: usize, side: T, r: usize, seed: u64, trial_index: u64) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    let h = to_f64(side) / 2.0;
    (0..r)
        .map(|_| (0..dim).map(|_| lit(rng.gen_range(-h..=h))).collect())
        .collect()
}

/// `Z(f)` with the cube average computed once.
#[derive(Clone)]
pub struct ZStatistic<'a, T: Real> {
    f: &'a (dyn ScalarField<T> + 'a),
    p: T,
    average: T,
}

impl<'a, T: Real> ZStatistic<'a, T> {
    pub fn new(f: &'a SynthFunction<T>, side: T, settings: &QuadratureSettings<T>) -> Result<Self> {
        if !f.is_normalized() {
            return Err(Error::contract("Z statistic needs a normalised function"));
        }
        Self::for_field(f, f.p(), side, settings)
    }

    /// For an arbitrary field; no normalisation is required.
    pub fn for_field(
        f: &'a (dyn ScalarField<T> + 'a),
        p: T,
        side: T,
        settings: &QuadratureSettings<T>,
    ) -> Result<Self> {
        let grid = settings.cube_grid(f.dim(), side)?;
        let mass = lp_norm_box(|x| f.value(x), p, &grid)?.powf(p);
        Ok(ZStatistic { f, p, average: mass / side.powi(f.dim() as i32) })
    }

    /// `R^{-n} ∫_{C_R} |f|^p`.
    pub fn average(&self) -> T {
        self.average
    }

    pub fn value(&self, x: &[T]) -> T {
        self.f.value(x).abs().powf(self.p) - self.average
    }
}

/// `Z(f)` at a single point.
pub fn z_statistic<T: Real>(
    f: &SynthFunction<T>,
    x: &[T],
    side: T,
    settings: &QuadratureSettings<T>,
) -> Result<T> {
    Ok(ZStatistic::new(f, side, settings)?.value(x))
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let ph = successes as f64 / nf;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / nf;
    let centre = (ph + z2 / (2.0 * nf)) / denom;
    let half = WILSON_Z / denom * (ph * (1.0 - ph) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Kernel, lattice, derived constants and the bound context of one configuration.
#[derive(Debug, Clone)]
pub struct Laboratory<T> {
    pub config: ExperimentConfig,
    pub settings: QuadratureSettings<T>,
    pub frame: Arc<Frame<T>>,
    pub constants: KernelConstants<T>,
    pub frame_bound: T,
    pub context: BoundContext<T>,
}

/// The configured kernel, with `C` fitted when it is not declared.
pub fn build_kernel<T: Real>(config: &ExperimentConfig) -> Result<KernelSpec<T>> {
    let k = &config.kernel;
    let rate = lit::<T>(config.decay_rate());
    let hw = lit::<T>(k.working_half_width);
    let kernel = match k.decay_amplitude {
        Some(c) => KernelSpec::with_constants(k.family.clone(), k.dim, lit(k.p), rate, lit(c), hw)?,
        None => KernelSpec::fitted(
            k.family.clone(),
            k.dim,
            lit(k.p),
            rate,
            hw,
            k.fit_points.unwrap_or_else(|| KernelSpec::<T>::default_fit_points(k.dim)),
        )?,
    };
    let c = kernel.decay_amplitude() * lit(k.decay_amplitude_scale);
    Ok(kernel.with_decay_amplitude(c))
}

impl<T: Real> Laboratory<T> {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let settings = config.quadrature_settings::<T>();
        let kernel = Arc::new(build_kernel::<T>(config)?);
        let lattice = Arc::new(Lattice::uniform(
            config.kernel.dim,
            lit(config.gap()),
            lit(config.lattice.half_width),
        )?);
        let frame = Arc::new(Frame::new(Arc::clone(&kernel), Arc::clone(&lattice))?);
        let e = &config.experiment;
        let side = lit::<T>(e.side);
        let constants = k_sup(&kernel, side, &settings)?;
        let frame_bound = empirical_frame_bound(
            &frame,
            e.frame_trials,
            derive_seed(e.seed, stream::FRAME, 0),
            &settings,
        )?;
        let context = BoundContext {
            n: kernel.dim(),
            p: kernel.p(),
            p_conj: kernel.p_conj(),
            side,
            delta: lit(e.delta),
            decay_amplitude: kernel.decay_amplitude(),
            alpha: kernel.decay_rate(),
            k: constants.k,
            frame_bound,
            n0: lattice.cell_occupancy(),
            eta: lattice.gap(),
        };
        context.validate()?;
        Ok(Laboratory { config: config.clone(), settings, frame, constants, frame_bound, context })
    }

    pub fn kernel(&self) -> &Arc<KernelSpec<T>> {
        self.frame.kernel()
    }

    pub fn dim(&self) -> usize {
        self.kernel().dim()
    }

    pub fn side(&self) -> T {
        self.context.side
    }

    pub fn seed(&self) -> u64 {
        self.config.experiment.seed
    }

    /// Member of `V(R, δ)` number `index`.
    pub fn member(&self, index: u64) -> Result<SynthFunction<T>> {
        let seed = derive_seed(self.seed(), stream::MEMBER, index);
        sample_random_member(&self.frame, self.side(), self.context.delta, seed, &self.settings)
            .map(|m| m.function)
            .map_err(|e| match e {
                Error::Infeasible(m) => Error::Infeasible(format!("member {index}: {m}")),
                other => other,
            })
    }

    /// Members `first .. first + count`, drawn in parallel.
    pub fn members(&self, first: u64, count: usize) -> Result<Vec<SynthFunction<T>>> {
        (0..count as u64).into_par_iter().map(|i| self.member(first + i)).collect()
    }
}

/// `‖Tf - f‖_{L^p(C_R)} / ‖f‖_{L^p(C_R)}`.
pub fn reproducing_defect<T: Real>(lab: &Laboratory<T>, f: &SynthFunction<T>) -> Result<T> {
    let grid = lab.settings.cube_grid(lab.dim(), lab.side())?;
    let p = f.p();
    let tf = apply_t(lab.kernel(), f, &lab.settings)?;
    let num = lp_norm_box(|x| tf.value(x) - f.value(x), p, &grid)?;
    let den = lp_norm_box(|x| f.value(x), p, &grid)?;
    if !(den > T::zero()) {
        return Err(Error::degenerate("function vanishes on C_R"));
    }
    Ok(num / den)
}

/// `‖f‖_{L^∞(C_R)}` against `D ‖f‖_{L^p(C_R)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupCheck {
    pub sup: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn sup_norm_check<T: Real>(lab: &Laboratory<T>, f: &SynthFunction<T>) -> Result<SupCheck> {
    let grid = lab.settings.cube_grid(lab.dim(), lab.side())?;
    let lp = lp_norm_box(|x| f.value(x), f.p(), &grid)?;
    let sup = crate::rkspace::linf_norm_cr(f, lab.side(), lab.settings.cube_grid_points);
    let bound = d_of(&lab.context)? * lp;
    Ok(SupCheck { sup: to_f64(sup), bound: to_f64(bound), holds: sup <= bound })
}

/// Empirical left-hand sides of the four moment bounds and their margins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentReport {
    /// Larger sample variance of `Z(f)` and `Z(g)`.
    pub variance: f64,
    pub variance_bound: f64,
    pub sup: f64,
    pub sup_bound: f64,
    pub difference_variance: f64,
    pub difference_variance_bound: f64,
    pub difference_sup: f64,
    pub difference_sup_bound: f64,
    /// Estimate of `‖f - g‖_{L^∞(C_R)}`.
    pub distance: f64,
}

impl MomentReport {
    /// `bound - estimate` for (i) to (iv).
    pub fn margins(&self) -> [f64; 4] {
        [
            self.variance_bound - self.variance,
            self.sup_bound - self.sup,
            self.difference_variance_bound - self.difference_variance,
            self.difference_sup_bound - self.difference_sup,
        ]
    }

    pub fn holds(&self) -> bool {
        self.margins().iter().all(|m| *m >= 0.0)
    }

    /// `estimate / bound` for (i) to (iv); `0` when both vanish.
    pub fn ratios(&self) -> [f64; 4] {
        let ratio = |est: f64, bound: f64| {
            if bound > 0.0 {
                est / bound
            } else if est > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        };
        [
            ratio(self.variance, self.variance_bound),
            ratio(self.sup, self.sup_bound),
            ratio(self.difference_variance, self.difference_variance_bound),
            ratio(self.difference_sup, self.difference_sup_bound),
        ]
    }
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Estimates each side of the four moment inequalities from `sample_count`
/// uniform draws; suprema also range over the dense grid on `C_R`.
pub fn moment_bounds_check<T: Real>(
    f: &SynthFunction<T>,
    g: &SynthFunction<T>,
    ctx: &BoundContext<T>,
    sample_count: usize,
    seed: u64,
    settings: &QuadratureSettings<T>,
) -> Result<MomentReport> {
    if sample_count == 0 {
        return Err(Error::contract("moment check needs at least one draw"));
    }
    for h in [f, g] {
        if !concentration(h, ctx.side, ctx.delta, settings)?.in_class {
            return Err(Error::contract("moment check needs members of V(R, δ)"));
        }
    }
    let zf = ZStatistic::new(f, ctx.side, settings)?;
    let zg = ZStatistic::new(g, ctx.side, settings)?;
    let draws = draw_samples::<T>(ctx.n, ctx.side, sample_count, seed, 0);
    let grid = CubeGrid::new(ctx.n, ctx.side, settings.cube_grid_points).points();

    let vf: Vec<f64> = draws.iter().map(|x| to_f64(zf.value(x))).collect();
    let vg: Vec<f64> = draws.iter().map(|x| to_f64(zg.value(x))).collect();
    let diff: Vec<f64> = vf.iter().zip(&vg).map(|(a, b)| a - b).collect();

    let mut sup = 0.0f64;
    let mut difference_sup = 0.0f64;
    let mut distance = 0.0f64;
    for x in draws.iter().chain(&grid) {
        let a = to_f64(zf.value(x));
        let b = to_f64(zg.value(x));
        sup = sup.max(a.abs()).max(b.abs());
        difference_sup = difference_sup.max((a - b).abs());
        distance = distance.max(to_f64((f.value(x) - g.value(x)).abs()));
    }

    let k = to_f64(ctx.k);
    let p = to_f64(ctx.p);
    let volume = to_f64(ctx.side).powi(ctx.n as i32);
    Ok(MomentReport {
        variance: sample_variance(&vf).max(sample_variance(&vg)),
        variance_bound: k.powf(p) / volume,
        sup,
        sup_bound: k.powf(p),
        difference_variance: sample_variance(&diff),
        difference_variance_bound: 2.0 * p / volume * k.powf(p - 1.0) * distance,
        difference_sup,
        difference_sup_bound: p * k.powf(p - 1.0) * distance,
        distance,
    })
}

/// One function in one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub func_seed: u64,
    /// `S = Σ_j |f(x_j)|^p`.
    pub sum: f64,
    pub lower: f64,
    pub upper: f64,
    pub success: bool,
}

/// Thresholds `(r/R^n)(1 - μ - δ)` and `(r/R^n)(1 + μ)` for unit-norm functions.
pub fn thresholds(r: usize, side: f64, dim: usize, mu: f64, delta: f64) -> (f64, f64) {
    let scale = r as f64 / side.powi(dim as i32);
    (scale * (1.0 - mu - delta), scale * (1.0 + mu))
}

/// Evaluates the sampling inequality for `f` on the given points.
pub fn sampling_trial<T: Real>(
    f: &SynthFunction<T>,
    points: &[Vec<T>],
    side: T,
    mu: T,
    delta: T,
    trial: usize,
) -> TrialRow {
    let p = f.p();
    let sum: f64 = points.iter().map(|x| to_f64(f.value(x).abs().powf(p))).sum();
    let (lower, upper) = thresholds(points.len(), to_f64(side), f.dim(), to_f64(mu), to_f64(delta));
    TrialRow {
        trial,
        func_seed: f.seed().unwrap_or_default(),
        sum,
        lower,
        upper,
        success: lower <= sum && sum <= upper,
    }
}

/// Aggregate of one batch of trials at a fixed `r`.
#[derive(Debug, Clone, Serialize)]
pub struct TrialReport {
    pub samples: usize,
    pub trials: usize,
    pub functions_per_trial: usize,
    pub rows: Vec<TrialRow>,
    /// Trials in which at least one function violated the inequality.
    pub failures: usize,
    pub failure_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub bound: BoundSummary,
    /// `min S R^n / r` over rows.
    pub a_emp: f64,
    /// `max S R^n / r` over rows.
    pub b_emp_samples: f64,
    pub frame_bound: f64,
    pub k: f64,
    pub generator: &'static str,
}

impl TrialReport {
    pub fn success_rate(&self) -> f64 {
        1.0 - self.failure_rate
    }

    /// Half-width of the Wilson interval around the failure rate (larger side).
    pub fn half_width(&self) -> f64 {
        (self.failure_rate - self.wilson_low).max(self.wilson_high - self.failure_rate)
    }
}

/// [`SuccessBound`] in `f64` with non-finite values mapped to `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSummary {
    pub clamped: f64,
    pub raw: Option<f64>,
    pub log_failure_bound: f64,
    pub vacuous: bool,
    pub gate: bool,
}

impl<T: Real> From<SuccessBound<T>> for BoundSummary {
    fn from(b: SuccessBound<T>) -> Self {
        let raw = to_f64(b.raw);
        BoundSummary {
            clamped: to_f64(b.clamped),
            raw: raw.is_finite().then_some(raw),
            log_failure_bound: to_f64(b.log_failure_bound),
            vacuous: b.vacuous,
            gate: b.gate,
        }
    }
}

/// Members for `trials × functions_per_trial`, grouped by trial.
pub fn draw_trial_members<T: Real>(lab: &Laboratory<T>, trials: usize) -> Result<Vec<Vec<SynthFunction<T>>>> {
    let per = lab.config.experiment.functions_per_trial;
    (0..trials)
        .into_par_iter()
        .map(|t| (0..per).map(|j| lab.member((t * per + j) as u64)).collect())
        .collect()
}

/// Runs every trial at `r` samples against pre-drawn members.
pub fn run_trials<T: Real>(
    lab: &Laboratory<T>,
    members: &[Vec<SynthFunction<T>>],
    r: usize,
) -> Result<TrialReport> {
    if r == 0 {
        return Err(Error::contract("r must be at least 1"));
    }
    let e = &lab.config.experiment;
    let mu = lit::<T>(e.mu);
    let sample_seed = derive_seed(e.seed, stream::SAMPLES, r as u64);
    let rows: Vec<Vec<TrialRow>> = members
        .par_iter()
        .enumerate()
        .map(|(t, fs)| {
            let points = draw_samples::<T>(lab.dim(), lab.side(), r, sample_seed, t as u64);
            fs.iter()
                .map(|f| sampling_trial(f, &points, lab.side(), mu, lab.context.delta, t))
                .collect()
        })
        .collect();
    let failures = rows.iter().filter(|fs| fs.iter().any(|row| !row.success)).count();
    let rows: Vec<TrialRow> = rows.into_iter().flatten().collect();
    let trials = members.len();
    let (wilson_low, wilson_high) = wilson_interval(failures, trials);
    let volume = e.side.powi(lab.dim() as i32);
    let ratios = rows.iter().map(|row| row.sum * volume / r as f64);
    let a_emp = ratios.clone().fold(f64::INFINITY, f64::min);
    let b_emp_samples = ratios.fold(0.0, f64::max);
    Ok(TrialReport {
        samples: r,
        trials,
        functions_per_trial: e.functions_per_trial,
        rows,
        failures,
        failure_rate: if trials == 0 { 0.0 } else { failures as f64 / trials as f64 },
        wilson_low,
        wilson_high,
        bound: success_probability(&lab.context, r, mu)?.into(),
        a_emp,
        b_emp_samples,
        frame_bound: to_f64(lab.frame_bound),
        k: to_f64(lab.constants.k),
        generator: GENERATOR,
    })
}

/// `trials` trials at the configured `r` with fresh members.
pub fn failure_rate_experiment<T: Real>(lab: &Laboratory<T>) -> Result<TrialReport> {
    let members = draw_trial_members(lab, lab.config.experiment.trials)?;
    run_trials(lab, &members, lab.config.experiment.samples)
}

/// One aggregate row of an `r` sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub samples: usize,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub bound: BoundSummary,
}

impl From<&TrialReport> for SweepRow {
    fn from(t: &TrialReport) -> Self {
        SweepRow {
            samples: t.samples,
            trials: t.trials,
            failures: t.failures,
            failure_rate: t.failure_rate,
            wilson_low: t.wilson_low,
            wilson_high: t.wilson_high,
            bound: t.bound,
        }
    }
}

/// Trials at each sample count, all against the same members.
pub fn sample_sweep<T: Real>(lab: &Laboratory<T>, samples: &[usize]) -> Result<Vec<TrialReport>> {
    let members = draw_trial_members(lab, lab.config.experiment.trials)?;
    samples.iter().map(|&r| run_trials(lab, &members, r)).collect()
}

/// Whether failure rates are non-increasing in `r` up to Wilson-interval overlap.
pub fn non_increasing_within_wilson(rows: &[SweepRow]) -> bool {
    rows.windows(2).all(|w| w[1].wilson_low <= w[0].wilson_high)
}

/// Outcome of the truncation measurement at one `ε`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationReport {
    pub eps: f64,
    /// Extent `N` from the truncation bound.
    pub extent: f64,
    /// `‖f - f_N‖_{L^p(C_R)}` per member.
    pub errors: Vec<f64>,
    /// Same at `N + η`.
    pub errors_next: Vec<f64>,
    pub max_ratio: f64,
    pub all_below: bool,
    pub monotone: bool,
}

/// Measures `‖f - f_N‖_{L^p(C_R)}` for `members` full-lattice members.
pub fn truncation_experiment<T: Real>(lab: &Laboratory<T>, eps: T, members: usize) -> Result<TruncationReport> {
    if members == 0 {
        return Err(Error::contract("truncation experiment needs at least one member"));
    }
    let extent = truncation_n(&lab.context, eps, T::one())?;
    let lattice = lab.frame.lattice();
    if lattice.half_width() < extent / lit(2.0) {
        return Err(Error::infeasible(format!(
            "lattice half-width {} is below N/2 = {}; ε = {eps} needs a lattice extending to [-{}, {}]^n",
            lattice.half_width(),
            extent / lit(2.0),
            extent / lit(2.0),
            extent / lit(2.0)
        )));
    }
    let grid = lab.settings.cube_grid(lab.dim(), lab.side())?;
    let p = lab.kernel().p();
    let next = extent + lattice.gap();
    let pairs: Result<Vec<(f64, f64)>> = (0..members as u64)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(lab.seed(), stream::TRUNCATION, i);
            let f = sample_full_lattice_member(&lab.frame, seed, &lab.settings)?;
            let err_at = |n: T| -> Result<f64> {
                let fnn = truncate_to_box(&f, n)?;
                Ok(to_f64(lp_norm_box(|x| f.value(x) - fnn.value(x), p, &grid)?))
            };
            Ok((err_at(extent)?, err_at(next)?))
        })
        .collect();
    let (errors, errors_next): (Vec<f64>, Vec<f64>) = pairs?.into_iter().unzip();
    let e = to_f64(eps);
    let max_ratio = errors.iter().fold(0.0f64, |m, v| m.max(v / e));
    Ok(TruncationReport {
        eps: e,
        extent: to_f64(extent),
        all_below: errors.iter().all(|v| *v < e),
        // a relative slack absorbs quadrature round-off when both errors are tiny
        monotone: errors
            .iter()
            .zip(&errors_next)
            .all(|(a, b)| *b <= *a + 1e-12 * a.max(1e-300) + 1e-300),
        errors,
        errors_next,
        max_ratio,
    })
}

/// Empirical tail frequency of `|Σ Z_j| ≥ λ` against the Bernstein bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernsteinRow {
    pub lambda: f64,
    pub frequency: f64,
    pub wilson_high: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `λ_i = (i/4) sqrt(r k^p / R^n)` for `i = 1..=10`.
pub fn default_lambda_grid<T: Real>(ctx: &BoundContext<T>, r: usize) -> Vec<f64> {
    let sigma2 = to_f64(ctx.k.powf(ctx.p)) / to_f64(ctx.side).powi(ctx.n as i32);
    let scale = (r as f64 * sigma2).sqrt();
    (1..=10).map(|i| i as f64 / 4.0 * scale).collect()
}

/// Tail frequencies of `Σ_{j≤r} Z_j(f)` over `trials` independent sample sets,
/// each compared with `bernstein_tail(λ, r, k^p/R^n, k^p)` plus the Wilson half-width.
pub fn bernstein_domination<T: Real>(
    f: &SynthFunction<T>,
    ctx: &BoundContext<T>,
    r: usize,
    trials: usize,
    lambdas: &[f64],
    seed: u64,
    settings: &QuadratureSettings<T>,
) -> Result<Vec<BernsteinRow>> {
    if trials == 0 {
        return Err(Error::contract("Bernstein check needs at least one trial"));
    }
    let z = ZStatistic::new(f, ctx.side, settings)?;
    let sums: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            draw_samples::<T>(ctx.n, ctx.side, r, seed, t)
                .iter()
                .map(|x| to_f64(z.value(x)))
                .sum()
        })
        .collect();
    let kp = to_f64(ctx.k.powf(ctx.p));
    let variance = kp / to_f64(ctx.side).powi(ctx.n as i32);
    lambdas
        .iter()
        .map(|&lambda| {
            let hits = sums.iter().filter(|s| s.abs() >= lambda).count();
            let frequency = hits as f64 / trials as f64;
            let (_, wilson_high) = wilson_interval(hits, trials);
            let bound = bernstein_tail(lambda, r, variance, kp)?.probability;
            Ok(BernsteinRow {
                lambda,
                frequency,
                wilson_high,
                bound,
                holds: frequency <= bound + (wilson_high - frequency),
            })
        })
        .collect()
}

/// One line of the `verify` table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, bound, passed: value <= bound }
    }

    pub fn margin(&self) -> f64 {
        self.bound - self.value
    }
}

/// Tolerance of the idempotency diagnostic.
pub const IDEMPOTENCY_TOLERANCE: f64 = 1e-8;
/// Tolerance of the reproducing-identity diagnostic.
pub const REPRODUCING_TOLERANCE: f64 = 1e-6;

fn gaussian_probe<T: Real>(dim: usize, centre: f64, width: f64) -> impl ScalarField<T> {
    let c = lit::<T>(centre);
    let w = lit::<T>(width);
    field(dim, move |x: &[T]| {
        let r2: T = x.iter().map(|&v| (v - c) * (v - c)).sum();
        (-r2 / (w * w)).exp()
    })
    .compact(lit(centre.abs() + 12.0 * width))
}

/// Kernel and space diagnostics run by `verify`.
pub fn verify_suite<T: Real>(lab: &Laboratory<T>) -> Result<Vec<Check>> {
    let e = &lab.config.experiment;
    let dim = lab.dim();
    let kernel = lab.kernel();
    let mut checks = Vec::new();

    let probes = [gaussian_probe::<T>(dim, 0.0, 1.0), gaussian_probe(dim, 0.7, 0.8), gaussian_probe(dim, -1.3, 1.5)];
    let fields: Vec<&dyn ScalarField<T>> = probes.iter().map(|f| f as &dyn ScalarField<T>).collect();
    let defect = idempotency_defect(kernel, &fields, lab.side(), &lab.settings)?;
    checks.push(Check::at_most("idempotency defect", to_f64(defect), IDEMPOTENCY_TOLERANCE));

    let decay = decay_envelope_check(kernel.as_ref(), e.decay_pairs, derive_seed(e.seed, stream::DECAY, 0))?;
    checks.push(Check::at_most("decay envelope |K|(1+|x-y|)^a/C", to_f64(decay.worst_ratio), 1.0));

    let (grid, half_width) = if dim == 1 {
        (OscillationGrid::default(), lit::<T>(4.0))
    } else {
        (OscillationGrid { z_points: 5, perturbation_points: 3 }, lit::<T>(1.5))
    };
    let coarse = QuadratureSettings { cells_per_unit: 1, ..lab.settings };
    let radii = [0.5, 0.25, 0.125, 0.0625];
    let mut osc = Vec::new();
    for r in radii {
        osc.push(to_f64(oscillation_modulus(kernel.as_ref(), lit(r), half_width, grid, &coarse)?));
    }
    let rising = osc.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::at_most("oscillation modulus: largest change as eps halves", rising, 0.0));

    let members = lab.members(0, e.verify_members)?;
    let mut worst_sup = f64::NEG_INFINITY;
    let mut worst_repro = 0.0f64;
    for f in &members {
        let s = sup_norm_check(lab, f)?;
        worst_sup = worst_sup.max(s.sup / s.bound);
        if kernel.family().is_projector() {
            worst_repro = worst_repro.max(to_f64(reproducing_defect(lab, f)?));
        }
    }
    if !members.is_empty() {
        checks.push(Check::at_most("sup norm over D * Lp norm on C_R", worst_sup, 1.0));
        if kernel.family().is_projector() {
            checks.push(Check::at_most("reproducing identity |Tf - f|/|f|", worst_repro, REPRODUCING_TOLERANCE));
        }
    }

    let pairs = lab.members(e.verify_members as u64, 2 * e.moment_pairs)?;
    let mut worst = [0.0f64; 4];
    for (i, pair) in pairs.chunks(2).enumerate() {
        let seed = derive_seed(e.seed, stream::MOMENTS, i as u64);
        let report = moment_bounds_check(&pair[0], &pair[1], &lab.context, e.moment_draws, seed, &lab.settings)?;
        for (w, r) in worst.iter_mut().zip(report.ratios()) {
            *w = w.max(r);
        }
    }
    if !pairs.is_empty() {
        let names = ["Var Z", "sup |Z|", "Var(Z(f)-Z(g))", "sup |Z(f)-Z(g)|"];
        for (name, r) in names.iter().zip(worst) {
            checks.push(Check::at_most(format!("moment estimate over bound: {name}"), r, 1.0));
        }
    }
    Ok(checks)
}
