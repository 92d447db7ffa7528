//! Closed-form constants of the sampling theorem. Every function here is a
//! pure evaluation; exponentials that can overflow are carried as logarithms
//! and `log` always means the natural logarithm.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

/// Inputs shared by every bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundContext<T> {
    pub n: usize,
    pub p: T,
    pub p_conj: T,
    /// Side `R` of the sampling cube `C_R`.
    pub side: T,
    pub delta: T,
    /// Decay amplitude `C`.
    pub decay_amplitude: T,
    /// Decay rate `α`.
    pub alpha: T,
    /// `k = sup_{x ∈ C_R} ‖K(x, ·)‖_{L^{p'}}`.
    pub k: T,
    /// Empirical stand-in for the upper frame constant `B`.
    pub frame_bound: T,
    /// Cell occupancy `N₀(Γ)`.
    pub n0: usize,
    /// Lattice gap `η`.
    pub eta: T,
}

impl<T: Real> BoundContext<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::contract("dimension n must be at least 1"));
        }
        let positive = [
            ("p", self.p),
            ("R", self.side),
            ("C", self.decay_amplitude),
            ("α", self.alpha),
            ("k", self.k),
            ("B_emp", self.frame_bound),
            ("η", self.eta),
        ];
        for (name, v) in positive {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::contract(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.p >= T::one()) {
            return Err(Error::contract(format!("p = {} must be at least 1", self.p)));
        }
        let expected = conjugate(self.p);
        if (self.p_conj - expected).abs() > lit::<T>(1e-9) * expected.max(T::one()) {
            return Err(Error::contract(format!("p' = {} is not the conjugate of p = {}", self.p_conj, self.p)));
        }
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return Err(Error::contract(format!("δ = {} must lie in (0, 1)", self.delta)));
        }
        if self.n0 == 0 {
            return Err(Error::contract("N₀ must be a positive integer"));
        }
        if !(self.alpha * self.p_conj > from_usize(self.n)) {
            return Err(Error::contract(format!(
                "αp' = {} must exceed n = {}",
                self.alpha * self.p_conj,
                self.n
            )));
        }
        Ok(())
    }

    fn nf(&self) -> T {
        from_usize(self.n)
    }

    /// `αp' - n`.
    fn gap_exponent(&self) -> T {
        self.alpha * self.p_conj - self.nf()
    }

    /// `B^{p'-1} R^{n(p'-1)} 4^n / w_α`, the factor common to `N` and `C₁`.
    fn truncation_core(&self) -> Result<T> {
        let w = w_alpha(self.alpha, self.p_conj, self.n)?;
        let q = self.p_conj - T::one();
        Ok(lit::<T>(4.0).powi(self.n as i32)
            * self.frame_bound.powf(q)
            * self.side.powf(self.nf() * q)
            / w)
    }
}

/// Conjugate exponent `p' = p / (p - 1)`; `∞` at `p = 1`.
pub fn conjugate<T: Real>(p: T) -> T {
    if p == T::one() {
        T::infinity()
    } else {
        p / (p - T::one())
    }
}

/// `w_α = Π_{j=1}^{n} (αp' - j)`.
pub fn w_alpha<T: Real>(alpha: T, p_conj: T, n: usize) -> Result<T> {
    if n == 0 {
        return Err(Error::contract("dimension n must be at least 1"));
    }
    let ap = alpha * p_conj;
    if !(ap > from_usize(n)) {
        return Err(Error::contract(format!("αp' = {ap} must exceed n = {n}")));
    }
    Ok((1..=n).map(|j| ap - from_usize(j)).fold(T::one(), |acc, v| acc * v))
}

/// Smallest admissible truncation extent `N` for accuracy `ε` on `C_R`.
pub fn truncation_n<T: Real>(ctx: &BoundContext<T>, eps: T, f_norm: T) -> Result<T> {
    ctx.validate()?;
    if !(eps > T::zero()) || !(f_norm > T::zero()) {
        return Err(Error::contract("ε and ‖f‖ must be positive"));
    }
    let two_n = lit::<T>(2.0) / ctx.nf();
    let bracket = ctx.truncation_core()? * f_norm.powf(ctx.p_conj) * ctx.decay_amplitude.powf(ctx.p_conj)
        / eps.powf(ctx.p_conj);
    Ok(ctx.side + two_n + two_n * bracket.powf(ctx.gap_exponent().recip()))
}

/// `D = k / (1 - δ)^{1/p}`. `δ = 0` is accepted and gives `D = k`.
pub fn d_constant<T: Real>(k: T, delta: T, p: T) -> Result<T> {
    if !(delta >= T::zero() && delta < T::one()) {
        return Err(Error::contract(format!("δ = {delta} must lie in [0, 1)")));
    }
    if !(k >= T::zero()) || !(p >= T::one()) {
        return Err(Error::contract("k must be non-negative and p at least 1"));
    }
    Ok(k / (T::one() - delta).powf(p.recip()))
}

/// `D` for a context.
pub fn d_of<T: Real>(ctx: &BoundContext<T>) -> Result<T> {
    d_constant(ctx.k, ctx.delta, ctx.p)
}

/// `C₁ = (2/n)^n (4^n B^{p'-1} (2CD)^{p'} R^{n(p'-1)} / w_α)^{n/(αp'-n)}`.
pub fn c_one<T: Real>(ctx: &BoundContext<T>) -> Result<T> {
    ctx.validate()?;
    let d = d_of(ctx)?;
    let two = lit::<T>(2.0);
    let inner = ctx.truncation_core()? * (two * ctx.decay_amplitude * d).powf(ctx.p_conj);
    Ok((two / ctx.nf()).powi(ctx.n as i32) * inner.powf(ctx.nf() / ctx.gap_exponent()))
}

/// `d_ε = 2^n N₀ [(R+2)^n + C₁ ε^{-np'/(αp'-n)}]`.
pub fn covering_dimension<T: Real>(ctx: &BoundContext<T>, eps: T) -> Result<T> {
    if !(eps > T::zero()) {
        return Err(Error::contract(format!("ε = {eps} must be positive")));
    }
    let c1 = c_one(ctx)?;
    let n = ctx.nf();
    let two = lit::<T>(2.0);
    let exponent = -n * ctx.p_conj / ctx.gap_exponent();
    Ok(two.powi(ctx.n as i32)
        * from_usize::<T>(ctx.n0)
        * ((ctx.side + two).powi(ctx.n as i32) + c1 * eps.powf(exponent)))
}

/// Covering number bound `N(ε) ≤ exp(d_ε log(8D/ε))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoveringCount<T> {
    pub log_value: T,
    /// `exp(log_value)` when finite.
    pub value: Option<T>,
}

pub fn covering_count<T: Real>(ctx: &BoundContext<T>, eps: T) -> Result<CoveringCount<T>> {
    let dim = covering_dimension(ctx, eps)?;
    covering_count_from(dim, d_of(ctx)?, eps)
}

/// `log N(ε) = d_ε · log(8D/ε)` for an explicit `d_ε`.
pub fn covering_count_from<T: Real>(dim: T, d: T, eps: T) -> Result<CoveringCount<T>> {
    let ratio = lit::<T>(8.0) * d / eps;
    if !(ratio > T::one()) {
        return Err(Error::contract(format!("ε = {eps} must be below 8D = {}", lit::<T>(8.0) * d)));
    }
    let log_value = dim * ratio.ln();
    let value = Some(log_value.exp()).filter(|v| v.is_finite());
    Ok(CoveringCount { log_value, value })
}

/// Bernstein tail `2 exp(-λ² / (2rσ² + (2/3)Mλ))` and its value as a probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernsteinTail<T> {
    pub value: T,
    pub probability: T,
}

pub fn bernstein_tail<T: Real>(lambda: T, r: usize, variance: T, bound: T) -> Result<BernsteinTail<T>> {
    if !(lambda >= T::zero()) || r == 0 || !(variance > T::zero()) || !(bound > T::zero()) {
        return Err(Error::contract("Bernstein tail needs λ ≥ 0, r ≥ 1, σ² > 0, M > 0"));
    }
    let denom = lit::<T>(2.0) * from_usize::<T>(r) * variance + lit::<T>(2.0 / 3.0) * bound * lambda;
    let value = lit::<T>(2.0) * (-lambda * lambda / denom).exp();
    Ok(BernsteinTail { value, probability: value.min(T::one()) })
}

/// Alternative readings of `a` and `b` that appear inside the chaining proof.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainingVariants<T> {
    /// `b` with `3/(4k^p)` in place of `3/(4k)`.
    pub b_k_power: T,
    /// `log a` with `N(1/2)` in place of `N(1/(2D))`; `None` when `16D ≤ 1`.
    pub log_a_half: Option<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainingConstants<T> {
    pub c1: T,
    pub c2: T,
    /// `log a = max(2^{(n+1)/(n+2)} c₂, log 2 + log N(1/(2D)))`.
    pub log_a: T,
    pub a: Option<T>,
    pub b: T,
    pub d: T,
    pub c_one: T,
    /// Threshold `2^{1/(n+2)}(n+2)/((n+1) log 2)` that `c₁φ - c₂` must reach.
    pub gate: T,
    pub variants: ChainingVariants<T>,
}

/// `c₁ = 2^{4/log 2 - 10} (log 2)^4 / (n+2)^4`.
pub fn c1_constant<T: Real>(n: usize) -> T {
    let ln2 = T::LN_2();
    let two = lit::<T>(2.0);
    two.powf(lit::<T>(4.0) / ln2 - lit(10.0)) * ln2.powi(4) / (from_usize::<T>(n) + two).powi(4)
}

pub fn chaining_constants<T: Real>(ctx: &BoundContext<T>) -> Result<ChainingConstants<T>> {
    ctx.validate()?;
    let n = ctx.nf();
    let two = lit::<T>(2.0);
    let ln2 = T::LN_2();
    let d = d_of(ctx)?;
    let log_d = d.ln();
    let c_one = c_one(ctx)?;
    let c1 = c1_constant::<T>(ctx.n);
    let m = (n + T::one()) * (n + two);
    let cube = (ctx.side + two).powi(ctx.n as i32);
    let cube_decay = two.powf(-two * (n + T::one()) / (n + two));
    let bracket = lit::<T>(9.0) * cube * cube_decay * ln2
        + two * cube * cube_decay * log_d
        + c_one * two * m * two.powf(-(two * m - lit::<T>(5.0) * ln2) / (two * m * ln2))
        + c_one * two.powf(T::one() - two / m) * log_d;
    let c2 = two.powi(ctx.n as i32) * from_usize::<T>(ctx.n0) * bracket;
    let lift = two.powf((n + T::one()) / (n + two));

    let dim = |eps: T| covering_dimension(ctx, eps);
    let cover_2d = covering_count_from(dim(T::one() / (two * d))?, d, T::one() / (two * d))?;
    let log_a = (lift * c2).max(ln2 + cover_2d.log_value);
    let a = Some(log_a.exp()).filter(|v| v.is_finite());
    let b = (lift * c1).min(lit::<T>(0.75) / ctx.k);

    let half = lit::<T>(0.5);
    let log_a_half = covering_count_from(dim(half)?, d, half)
        .ok()
        .map(|c| (lift * c2).max(ln2 + c.log_value));
    let variants = ChainingVariants {
        b_k_power: (lift * c1).min(lit::<T>(0.75) / ctx.k.powf(ctx.p)),
        log_a_half,
    };
    let gate = two.powf((n + two).recip()) * (n + two) / ((n + T::one()) * ln2);
    Ok(ChainingConstants { c1, c2, log_a, a, b, d, c_one, gate, variants })
}

/// Success probability of the sampling inequality for `r` samples and slack `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuccessBound<T> {
    /// `max(0, raw)`.
    pub clamped: T,
    /// `1 - 2a exp(-(b/(p k^{p-1} R^n)) rμ²/(12+μ))`, possibly hugely negative.
    pub raw: T,
    /// `log(2a) - (b/(p k^{p-1} R^n)) rμ²/(12+μ)`.
    pub log_failure_bound: T,
    pub vacuous: bool,
    /// Whether `c₁φ - c₂` reaches the threshold at `λ = rμ/R^n`.
    pub gate: bool,
}

fn check_mu<T: Real>(ctx: &BoundContext<T>, mu: T) -> Result<()> {
    if !(mu > T::zero() && mu < T::one() - ctx.delta) {
        return Err(Error::contract(format!("μ = {mu} must lie in (0, 1 - δ = {})", T::one() - ctx.delta)));
    }
    Ok(())
}

/// `p k^{p-1} R^n`.
fn scale<T: Real>(ctx: &BoundContext<T>) -> T {
    ctx.p * ctx.k.powf(ctx.p - T::one()) * ctx.side.powi(ctx.n as i32)
}

pub fn success_probability<T: Real>(ctx: &BoundContext<T>, r: usize, mu: T) -> Result<SuccessBound<T>> {
    ctx.validate()?;
    check_mu(ctx, mu)?;
    if r == 0 {
        return Err(Error::contract("r must be at least 1"));
    }
    let cc = chaining_constants(ctx)?;
    let rr = from_usize::<T>(r);
    let rate = rr * mu * mu / (lit::<T>(12.0) + mu) / scale(ctx);
    let log_failure_bound = T::LN_2() + cc.log_a - cc.b * rate;
    let raw = T::one() - log_failure_bound.exp();
    let phi = rate;
    let gate = cc.c1 * phi - cc.c2 >= cc.gate;
    Ok(SuccessBound {
        clamped: raw.max(T::zero()).min(T::one()),
        raw,
        log_failure_bound,
        vacuous: !(raw > T::zero()),
        gate,
    })
}

/// Smallest real `r` for which the gate holds.
pub fn min_sample_size<T: Real>(ctx: &BoundContext<T>, mu: T) -> Result<T> {
    ctx.validate()?;
    check_mu(ctx, mu)?;
    let cc = chaining_constants(ctx)?;
    Ok(scale(ctx) * (lit::<T>(12.0) + mu) / (cc.c1 * mu * mu) * (cc.gate + cc.c2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ctx() -> BoundContext<f64> {
        BoundContext {
            n: 1,
            p: 2.0,
            p_conj: 2.0,
            side: 4.0,
            delta: 0.2,
            decay_amplitude: 1.0,
            alpha: 4.0,
            k: std::f64::consts::PI.powf(-0.25),
            frame_bound: 1.0,
            n0: 1,
            eta: 1.0,
        }
    }

    #[test]
    fn w_alpha_products() {
        assert_eq!(w_alpha(4.0, 2.0, 1).unwrap(), 7.0);
        assert_eq!(w_alpha(4.0, 2.0, 2).unwrap(), 42.0);
        assert!(w_alpha(4.0, 2.0, 0).is_err());
        assert!(w_alpha(0.5, 2.0, 1).is_err());
    }

    #[test]
    fn truncation_extent() {
        let c = ctx();
        let n = truncation_n(&c, 0.1, 1.0).unwrap();
        // bracket 4·1·4/(7·0.01), exponent 1/(αp' - n) = 1/7
        let expected = 6.0 + 2.0 * (16.0f64 / 0.07).powf(1.0 / 7.0);
        assert_relative_eq!(n, expected, max_relative = 1e-14);
        assert_relative_eq!(n, 10.345_433_722_209_728, max_relative = 1e-12);
        let far = truncation_n(&c, 1e12, 1.0).unwrap();
        assert!((far - 6.0).abs() < 1e-3);
        assert!(truncation_n(&c, 0.0, 1.0).is_err());
    }

    #[test]
    fn d_values() {
        assert_eq!(d_constant(0.7, 0.0, 2.0).unwrap(), 0.7);
        let d = d_constant(std::f64::consts::PI.powf(-0.25), 0.2, 2.0).unwrap();
        assert_relative_eq!(d, 0.839_783_888_530_076_1, max_relative = 1e-12);
        assert!(d_constant(1.0, 1.0, 2.0).is_err());
        assert!(d_constant(1.0, 0.9, 2.0).unwrap() > d_constant(1.0, 0.5, 2.0).unwrap());
    }

    #[test]
    fn covering_fixtures() {
        let c = ctx();
        let d = covering_dimension(&c, 0.5).unwrap();
        assert_relative_eq!(d, 18.363_551_497_744_143, max_relative = 1e-10);
        let cnt = covering_count(&c, 0.5).unwrap();
        assert_relative_eq!(cnt.log_value, 47.708_103_278_438_297, max_relative = 1e-10);
        assert!(cnt.value.is_some());
        let big = covering_dimension(&c, 1e15).unwrap();
        assert!((big - 2.0 * 6.0).abs() < 1e-3);
        assert!(covering_count(&c, 100.0).is_err());
    }

    #[test]
    fn zero_dimension_counts_one() {
        let c = covering_count_from(0.0, 1.0, 0.5).unwrap();
        assert_eq!(c.log_value, 0.0);
        assert_eq!(c.value, Some(1.0));
    }

    #[test]
    fn bernstein_values() {
        let t = bernstein_tail(0.0, 10, 1.0, 1.0).unwrap();
        assert_eq!(t.value, 2.0);
        assert_eq!(t.probability, 1.0);
        let t = bernstein_tail(50.0, 100, 1.0, 1.0).unwrap();
        let oracle = 2.0 * (-2500.0f64 / (200.0 + 100.0 / 3.0)).exp();
        assert_relative_eq!(t.value, oracle, max_relative = 1e-14);
        assert!(bernstein_tail(-1.0, 10, 1.0, 1.0).is_err());
        assert!(bernstein_tail(1.0, 0, 1.0, 1.0).is_err());
    }

    #[test]
    fn chaining_fixture_and_structure() {
        let c = ctx();
        let cc = chaining_constants(&c).unwrap();
        assert_relative_eq!(cc.c1, 1.519_479_328_867_046_6e-4, max_relative = 1e-12);
        assert!(cc.b <= 0.75 / c.k);
        assert!(cc.d >= c.k);
        let cover = covering_count(&c, 1.0 / (2.0 * cc.d)).unwrap();
        assert!(cc.log_a >= std::f64::consts::LN_2 + cover.log_value);
        assert!(cc.variants.b_k_power <= 0.75 / c.k.powf(2.0));
        assert!(cc.c1 > 0.0 && cc.c2.is_finite());
    }

    #[test]
    fn success_bound_behaviour() {
        let c = ctx();
        let small = success_probability(&c, 10, 0.5).unwrap();
        assert!(small.vacuous && small.clamped == 0.0 && small.raw < 0.0);
        let huge = success_probability(&c, 1usize << 60, 0.5).unwrap();
        assert!(huge.clamped > 0.999 && !huge.vacuous);
        assert!(success_probability(&c, 10, 0.8).is_err());
        assert!(success_probability(&c, 10, 0.0).is_err());
    }

    #[test]
    fn gate_matches_min_sample_size() {
        for (n, n0) in [(1usize, 1usize), (2, 9)] {
            let mut c = ctx();
            c.n = n;
            c.n0 = n0;
            c.alpha = if n == 1 { 4.0 } else { 5.0 };
            c.eta = 1.0 / n as f64;
            let m = min_sample_size(&c, 0.5).unwrap();
            let at = success_probability(&c, m.ceil() as usize, 0.5).unwrap();
            let below = success_probability(&c, m.floor() as usize - 1, 0.5).unwrap();
            assert!(at.gate && !below.gate);
        }
    }

    #[test]
    fn min_sample_size_trends() {
        let c = ctx();
        let grid = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.79];
        let values: Vec<f64> = grid.iter().map(|&mu| min_sample_size(&c, mu).unwrap()).collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn deterministic_evaluation() {
        let c = ctx();
        let a = chaining_constants(&c).unwrap();
        let b = chaining_constants(&c).unwrap();
        assert_eq!(a.c2.to_bits(), b.c2.to_bits());
        assert_eq!(a.log_a.to_bits(), b.log_a.to_bits());
    }

    #[test]
    fn single_precision_agrees() {
        let c = ctx();
        let c32 = BoundContext::<f32> {
            n: 1,
            p: 2.0,
            p_conj: 2.0,
            side: 4.0,
            delta: 0.2,
            decay_amplitude: 1.0,
            alpha: 4.0,
            k: c.k as f32,
            frame_bound: 1.0,
            n0: 1,
            eta: 1.0,
        };
        let a = truncation_n(&c, 0.1, 1.0).unwrap();
        let b = truncation_n(&c32, 0.1, 1.0).unwrap();
        assert!((a - b as f64).abs() < 1e-4);
    }

    #[test]
    fn invalid_contexts() {
        let mut c = ctx();
        c.delta = 1.0;
        assert!(c.validate().is_err());
        let mut c = ctx();
        c.p_conj = 3.0;
        assert!(c.validate().is_err());
        let mut c = ctx();
        c.alpha = 0.4;
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn truncation_decreases_in_eps(e in 1e-4f64..10.0, f in 1.01f64..3.0) {
            let c = ctx();
            prop_assert!(truncation_n(&c, e * f, 1.0).unwrap() < truncation_n(&c, e, 1.0).unwrap());
        }

        #[test]
        fn covering_dimension_decreases(e in 1e-4f64..10.0, f in 1.01f64..3.0) {
            let c = ctx();
            prop_assert!(covering_dimension(&c, e * f).unwrap() < covering_dimension(&c, e).unwrap());
        }

        #[test]
        fn covering_count_grows_as_eps_shrinks(e in 1e-3f64..1.0, f in 1.01f64..2.0) {
            let c = ctx();
            let a = covering_count(&c, e).unwrap().log_value;
            let b = covering_count(&c, e * f).unwrap().log_value;
            prop_assert!(b < a);
        }

        #[test]
        fn bernstein_decreasing(l in 0.01f64..100.0, f in 1.01f64..2.0, r in 1usize..500) {
            let a = bernstein_tail(l, r, 0.5, 2.0).unwrap().value;
            let b = bernstein_tail(l * f, r, 0.5, 2.0).unwrap().value;
            prop_assert!(b < a);
        }

        #[test]
        fn success_nondecreasing_in_r(r in 1usize..1_000_000, extra in 1usize..1000, mu in 0.01f64..0.79) {
            let c = ctx();
            let a = success_probability(&c, r, mu).unwrap();
            let b = success_probability(&c, r + extra, mu).unwrap();
            prop_assert!(b.raw >= a.raw && b.clamped >= a.clamped);
            prop_assert!((0.0..=1.0).contains(&b.clamped));
        }

        #[test]
        fn d_increases_in_delta(d in 0.0f64..0.9, step in 0.001f64..0.09) {
            prop_assert!(d_constant(0.8, d + step, 2.0).unwrap() > d_constant(0.8, d, 2.0).unwrap());
        }

        #[test]
        fn min_sample_size_grows_with_side(r in 1.0f64..100.0, f in 1.01f64..2.0) {
            let mut a = ctx();
            a.side = r;
            let mut b = a;
            b.side = r * f;
            prop_assert!(min_sample_size(&b, 0.5).unwrap() > min_sample_size(&a, 0.5).unwrap());
        }
    }
}
