//! Chebyshev machinery and the error bounds on `Tr(A) - Tr(T)` and
//! `log det(I+A) - log det(I+T)`.
//!
//! Three bound families, all driven by the eigenvalue gap at the target
//! rank `k`:
//! - expectation and concentration bounds for the block Krylov estimator,
//!   with gap factor `(lambda_{k+1}/lambda_k) * T_{q-1}^{-2}(gamma)` and
//!   constants `C_ge` / `C_g`;
//! - the subspace-iteration baseline bounds with gap factor
//!   `(lambda_{k+1}/lambda_k)^{2q-1}`, optionally with oversampling
//!   substituted as `p -> q*l - k` (and `l -> q*l`) so both compressions
//!   have the same order;
//! - deterministic structural bounds for a fixed probe, driven by the
//!   interaction norm `w = |Omega_hat_2 * pinv(Omega_hat_1)|_2`.
//!
//! Chebyshev values at arguments > 1 grow like `exp(q * acosh(gamma))`, so
//! every bound evaluates them in log scale; `T_{q-1}^{-2}` then underflows
//! only where the true value is below the smallest positive double.

use std::f64::consts::{E, LN_2, PI};

use crate::error::{Error, Result};
use crate::estimators::{interaction_norm, SpectralSplit};
use crate::linop::SpectralModel;

/// Eigenvalue data at the split index: `lambda_k > lambda_{k+1} >= 0`.
#[derive(Clone, Copy, Debug)]
pub struct GapData {
    pub lambda_k: f64,
    pub lambda_k1: f64,
}

impl GapData {
    pub fn new(lambda_k: f64, lambda_k1: f64) -> Result<Self> {
        if !(lambda_k > lambda_k1) || lambda_k1 < 0.0 {
            return Err(Error::NoGap(format!(
                "need lambda_k > lambda_k+1 >= 0, got {lambda_k} and {lambda_k1}"
            )));
        }
        Ok(Self { lambda_k, lambda_k1 })
    }

    /// Gap data at split index `k` (1-based rank, i.e. eigenvalues `k` and
    /// `k+1` of the model).
    pub fn from_model(model: &SpectralModel, k: usize) -> Result<Self> {
        if k < 1 || k >= model.dim() {
            return Err(Error::InvalidParameter(format!(
                "split index k = {k} out of range for order {}",
                model.dim()
            )));
        }
        Self::new(model.eigenvalues()[k - 1], model.eigenvalues()[k])
    }

    /// Chebyshev argument `(2*lambda_k - lambda_{k+1}) / lambda_{k+1} > 1`;
    /// infinite when the tail eigenvalue is exactly zero.
    pub fn gamma(&self) -> f64 {
        (2.0 * self.lambda_k - self.lambda_k1) / self.lambda_k1
    }

    /// `lambda_{k+1} / lambda_k` in `[0, 1)`.
    pub fn ratio(&self) -> f64 {
        self.lambda_k1 / self.lambda_k
    }
}

/// Chebyshev polynomial `T_q(x)`: cosine form on `[-1, 1]`, closed form
/// `((x + sqrt(x^2-1))^q + (x - sqrt(x^2-1))^q) / 2` for `x >= 1`, parity
/// `T_q(-x) = (-1)^q T_q(x)` below `-1`. May overflow for large `q * x`;
/// the bounds use [`ln_chebyshev_t`] instead.
pub fn chebyshev_t(q: usize, x: f64) -> f64 {
    if q == 0 {
        return 1.0;
    }
    if q == 1 {
        return x;
    }
    if x > 1.0 {
        let s = x + (x * x - 1.0).sqrt();
        let sq = s.powi(q as i32);
        0.5 * (sq + 1.0 / sq)
    } else if x >= -1.0 {
        (q as f64 * x.acos()).cos()
    } else {
        let t = chebyshev_t(q, -x);
        if q % 2 == 0 {
            t
        } else {
            -t
        }
    }
}

/// `ln T_m(gamma)` for `gamma >= 1`, in log scale so it never overflows.
pub fn ln_chebyshev_t(m: usize, gamma: f64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    // s = gamma + sqrt(gamma^2 - 1); for huge gamma, gamma^2 overflows but
    // s ~ 2*gamma.
    let ln_s = if gamma > 1e100 {
        LN_2 + gamma.ln()
    } else {
        (gamma + (gamma * gamma - 1.0).sqrt()).ln()
    };
    let lead = m as f64 * ln_s;
    // T_m = (s^m + s^-m)/2 = s^m (1 + s^-2m) / 2
    lead + (-2.0 * lead).exp().ln_1p() - LN_2
}

/// `1 / T_{q-1}(gamma)^2` for the gap argument `gamma >= 1`.
///
/// Equals 1 when `q = 1` (`T_0 = 1`). Never overflows; underflows to a
/// subnormal (or zero) only where the true value is below ~1e-308 (~5e-324
/// respectively).
pub fn chebyshev_t_inv_sq(q: usize, gamma: f64) -> Result<f64> {
    if q < 1 {
        return Err(Error::InvalidParameter("depth q must be >= 1".into()));
    }
    if !(gamma >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Chebyshev gap argument must be >= 1, got {gamma}; the gap assumption is violated"
        )));
    }
    Ok((-2.0 * ln_chebyshev_t(q - 1, gamma)).exp())
}

fn check_cge_shape(n: usize, k: usize, p: usize, l: usize) -> Result<()> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!(
            "the bound constants require oversampling p >= 2, got {p}"
        )));
    }
    if l != k + p {
        return Err(Error::InvalidParameter(format!(
            "expected l = k + p, got l = {l}, k = {k}, p = {p}"
        )));
    }
    if l > n {
        return Err(Error::InvalidParameter(format!(
            "probe width l = {l} exceeds order n = {n}"
        )));
    }
    Ok(())
}

/// Expectation-bound constant
/// `C_ge = ((p+1)/(p-1)) (mu + sqrt(2))^2 (1/(2 pi (p+1)))^{1/(p+1)} (e sqrt(l)/(p+1))^2`
/// with `mu = sqrt(n-k) + sqrt(l)`.
pub fn constant_cge(n: usize, k: usize, p: usize, l: usize) -> Result<f64> {
    check_cge_shape(n, k, p, l)?;
    let mu = ((n - k) as f64).sqrt() + (l as f64).sqrt();
    let p1 = (p + 1) as f64;
    Ok((p1 / (p - 1) as f64)
        * (mu + 2.0f64.sqrt()).powi(2)
        * (1.0 / (2.0 * PI * p1)).powf(1.0 / p1)
        * (E * (l as f64).sqrt() / p1).powi(2))
}

/// Concentration-bound constant
/// `C_g = (mu + sqrt(2 log(2/delta)))^2 (2/delta)^{2/(p+1)} (e sqrt(l)/(p+1))^2`
/// (natural logarithm) with `mu = sqrt(n-k) + sqrt(l)`.
pub fn constant_cg(n: usize, k: usize, p: usize, l: usize, delta: f64) -> Result<f64> {
    check_cge_shape(n, k, p, l)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "failure probability delta must lie in (0,1], got {delta}"
        )));
    }
    let mu = ((n - k) as f64).sqrt() + (l as f64).sqrt();
    let p1 = (p + 1) as f64;
    Ok((mu + (2.0 * (2.0 / delta).ln()).sqrt()).powi(2)
        * (2.0 / delta).powf(2.0 / p1)
        * (E * (l as f64).sqrt() / p1).powi(2))
}

/// Gap factor of the block Krylov bounds:
/// `(lambda_{k+1}/lambda_k) * T_{q-1}^{-2}(gamma) * c`.
fn krylov_gap_factor(gap: &GapData, q: usize, c: f64) -> Result<f64> {
    let ratio = gap.ratio();
    if ratio == 0.0 {
        return Ok(0.0);
    }
    Ok(ratio * chebyshev_t_inv_sq(q, gap.gamma())? * c)
}

fn tail_bounds(model: &SpectralModel, k: usize, factor: f64) -> (f64, f64) {
    let tail = &model.eigenvalues()[k..];
    let trace_bound = (1.0 + factor) * tail.iter().sum::<f64>();
    let logdet_bound = tail.iter().map(|&v| (factor * v).ln_1p()).sum::<f64>()
        + tail.iter().map(|&v| v.ln_1p()).sum::<f64>();
    (trace_bound, logdet_bound)
}

/// Expectation bounds for the block Krylov estimator:
/// `(trace_bound, logdet_bound)` on the expected gaps.
pub fn expectation_bounds(
    model: &SpectralModel,
    k: usize,
    p: usize,
    q: usize,
) -> Result<(f64, f64)> {
    let gap = GapData::from_model(model, k)?;
    let cge = constant_cge(model.dim(), k, p, k + p)?;
    let factor = krylov_gap_factor(&gap, q, cge)?;
    Ok(tail_bounds(model, k, factor))
}

/// Concentration bounds (hold with probability at least `1 - delta`).
pub fn concentration_bounds(
    model: &SpectralModel,
    k: usize,
    p: usize,
    q: usize,
    delta: f64,
) -> Result<(f64, f64)> {
    let gap = GapData::from_model(model, k)?;
    let cg = constant_cg(model.dim(), k, p, k + p, delta)?;
    let factor = krylov_gap_factor(&gap, q, cg)?;
    Ok(tail_bounds(model, k, factor))
}

/// The four subspace-iteration baseline bounds.
#[derive(Clone, Copy, Debug)]
pub struct BaselineBounds {
    pub trace_expectation: f64,
    pub logdet_expectation: f64,
    pub trace_concentration: f64,
    pub logdet_concentration: f64,
}

/// Baseline bounds for subspace iteration, gap factor
/// `(lambda_{k+1}/lambda_k)^{2q-1}`.
///
/// With `substitute` the constants are evaluated at `p' = q*l - k`,
/// `l' = q*l`, so the compression order matches the Krylov one.
pub fn baseline_bounds(
    model: &SpectralModel,
    k: usize,
    p: usize,
    q: usize,
    delta: f64,
    substitute: bool,
) -> Result<BaselineBounds> {
    let gap = GapData::from_model(model, k)?;
    let l = k + p;
    let (pe, le) = if substitute { (q * l - k, q * l) } else { (p, l) };
    let cge = constant_cge(model.dim(), k, pe, le)?;
    let cg = constant_cg(model.dim(), k, pe, le, delta)?;
    let gapfac = gap.ratio().powi(2 * q as i32 - 1);
    let (trace_expectation, logdet_expectation) = tail_bounds(model, k, gapfac * cge);
    let (trace_concentration, logdet_concentration) = tail_bounds(model, k, gapfac * cg);
    Ok(BaselineBounds {
        trace_expectation,
        logdet_expectation,
        trace_concentration,
        logdet_concentration,
    })
}

/// Per-sample structural bounds for a fixed probe.
#[derive(Clone, Copy, Debug)]
pub struct StructuralBounds {
    /// `(1 + T_{q-1}^{-1}(gamma) * w) * Tr(Lambda_2)`.
    pub trace_loose: f64,
    /// `(1 + eta) * Tr(Lambda_2)`; only valid (and only returned) when
    /// `0 < w <= (lambda_k/lambda_{k+1}) * T_{q-1}(gamma)`.
    pub trace_tight: Option<f64>,
    /// `log det(I + eta*Lambda_2) + log det(I + Lambda_2)`.
    pub logdet: f64,
    /// Interaction norm `w` that produced these bounds.
    pub interaction: f64,
    /// `eta = (lambda_{k+1}/lambda_k) * T_{q-1}^{-2}(gamma) * w^2`.
    pub eta: f64,
}

/// Structural (deterministic, per-probe) bounds at split index `k`.
pub fn structural_bounds(
    model: &SpectralModel,
    split: &SpectralSplit,
    k: usize,
    q: usize,
) -> Result<StructuralBounds> {
    if split.k != k {
        return Err(Error::InvalidParameter(format!(
            "split index {} does not match requested k = {k}",
            split.k
        )));
    }
    if q < 1 {
        return Err(Error::InvalidParameter("depth q must be >= 1".into()));
    }
    let gap = GapData::from_model(model, k)?;
    let w = interaction_norm(split)?;
    let gamma = gap.gamma();
    let ln_t = ln_chebyshev_t(q - 1, gamma);
    let t_inv = (-ln_t).exp();
    let tail_trace = model.tail_trace(k);
    let tail_logdet = model.tail_logdet(k);

    let trace_loose = (1.0 + t_inv * w) * tail_trace;
    let eta = if w == 0.0 {
        0.0
    } else {
        gap.ratio() * (t_inv * w) * (t_inv * w)
    };
    // Tight bound requires 0 < w <= (lambda_k/lambda_{k+1}) * T_{q-1}(gamma);
    // compare in logs since the right side can be enormous.
    let tight_ok = w > 0.0 && (gap.ratio() == 0.0 || w.ln() <= -gap.ratio().ln() + ln_t);
    let trace_tight = tight_ok.then(|| (1.0 + eta) * tail_trace);
    let logdet = model.eigenvalues()[k..]
        .iter()
        .map(|&v| (eta * v).ln_1p())
        .sum::<f64>()
        + tail_logdet;
    Ok(StructuralBounds {
        trace_loose,
        trace_tight,
        logdet,
        interaction: w,
        eta,
    })
}

/// Every bound evaluated for one configuration. Theorem-bound fields are
/// absent when their hypotheses fail (`p < 2`, or no usable gap at `k`);
/// structural fields are absent when no probe split was supplied.
#[derive(Clone, Copy, Debug, Default)]
pub struct BoundReport {
    pub trace_expectation: Option<f64>,
    pub logdet_expectation: Option<f64>,
    pub trace_concentration: Option<f64>,
    pub logdet_concentration: Option<f64>,
    pub trace_expectation_baseline: Option<f64>,
    pub logdet_expectation_baseline: Option<f64>,
    pub trace_concentration_baseline: Option<f64>,
    pub logdet_concentration_baseline: Option<f64>,
    pub structural_trace_loose: Option<f64>,
    pub structural_trace_tight: Option<f64>,
    pub structural_logdet: Option<f64>,
    pub tail_trace: f64,
    pub tail_logdet: f64,
    pub delta: f64,
    pub eta: Option<f64>,
}

/// Evaluate every applicable bound for one `(k, p, q, delta)` and an
/// optional probe split. Baseline bounds use the order-matched
/// substitution.
pub fn bound_report(
    model: &SpectralModel,
    split: Option<&SpectralSplit>,
    k: usize,
    p: usize,
    q: usize,
    delta: f64,
) -> Result<BoundReport> {
    let mut report = BoundReport {
        tail_trace: model.tail_trace(k),
        tail_logdet: model.tail_logdet(k),
        delta,
        ..Default::default()
    };
    if let Ok((t, l)) = expectation_bounds(model, k, p, q) {
        report.trace_expectation = Some(t);
        report.logdet_expectation = Some(l);
    }
    if let Ok((t, l)) = concentration_bounds(model, k, p, q, delta) {
        report.trace_concentration = Some(t);
        report.logdet_concentration = Some(l);
    }
    if let Ok(b) = baseline_bounds(model, k, p, q, delta, true) {
        report.trace_expectation_baseline = Some(b.trace_expectation);
        report.logdet_expectation_baseline = Some(b.logdet_expectation);
        report.trace_concentration_baseline = Some(b.trace_concentration);
        report.logdet_concentration_baseline = Some(b.logdet_concentration);
    }
    if let Some(split) = split {
        let s = structural_bounds(model, split, k, q)?;
        report.structural_trace_loose = Some(s.trace_loose);
        report.structural_trace_tight = s.trace_tight;
        report.structural_logdet = Some(s.logdet);
        report.eta = Some(s.eta);
    }
    Ok(report)
}

/// The degree `q-1` comparison polynomial
/// `f(x) = T_{q-1}((2x - lambda_{k+1})/lambda_{k+1}) / T_{q-1}(gamma)`.
///
/// Exposed for property tests only; no bound value evaluates it.
pub fn gap_filter_poly(q: usize, gap: &GapData, x: f64) -> f64 {
    let m = q - 1;
    let arg = (2.0 * x - gap.lambda_k1) / gap.lambda_k1;
    let ln_tg = ln_chebyshev_t(m, gap.gamma());
    if arg > 1.0 {
        (ln_chebyshev_t(m, arg) - ln_tg).exp()
    } else {
        chebyshev_t(m, arg) * (-ln_tg).exp()
    }
}
