//! Comparison functions for curvature and eigenvalues under the normalized
//! flow, an RK4 oracle for the curvature barrier, and per-index verdicts.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{displaced_state, FlowTrace};
use crate::mesh::IntrinsicMesh;
use crate::spectrum::{
    self, assemble_operators, eigenvalue_time_derivative, track_eigenpairs, EigenTrack, SolverOptions,
};

/// Relative slack of the maximum-principle check, as a multiple of `|r|`.
pub const BARRIER_TOLERANCE: f64 = 1e-2;
/// Relative slack of the eigenvalue lower bound.
pub const EIGEN_BOUND_TOLERANCE: f64 = 1e-3;
/// Relative slack of the theorem inequalities.
pub const THEOREM_TOLERANCE: f64 = 1e-3;

/// Constants of the comparison functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub r: f64,
    pub sigma: f64,
    pub lambda0: f64,
}

impl BarrierParams {
    /// Requires `r < 0`, `sigma <= r / 2` and `lambda0 > 0`.
    pub fn new(r: f64, sigma: f64, lambda0: f64) -> Result<Self> {
        if !(r < 0.0 && r.is_finite()) {
            return Err(Error::Precondition(format!("r must be negative, got {r}")));
        }
        if !(sigma <= 0.5 * r && sigma.is_finite()) {
            return Err(Error::Precondition(format!("sigma must satisfy sigma <= r/2 = {}, got {sigma}", 0.5 * r)));
        }
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(Error::Precondition(format!("lambda0 must be positive, got {lambda0}")));
        }
        Ok(Self { r, sigma, lambda0 })
    }

    /// `r / (2 sigma)`, in `(0, 1]`.
    pub fn ratio(&self) -> f64 {
        self.r / (2.0 * self.sigma)
    }

    /// `1 - (1 - r/(2 sigma)) e^{r t}`.
    pub fn denominator(&self, t: f64) -> f64 {
        1.0 - (1.0 - self.ratio()) * (self.r * t).exp()
    }
}

/// `s(t) = r / (1 - (1 - r/(2 sigma)) e^{r t})`, the solution of
/// `s' = s (s - r)` with `s(0) = 2 sigma`.
pub fn barrier_s(t: f64, p: &BarrierParams) -> f64 {
    p.r / p.denominator(t)
}

/// Classical RK4 for `s' = s (s - r)`, `s(0) = 2 sigma`, with `steps` uniform steps.
pub fn barrier_s_oracle(t: f64, p: &BarrierParams, steps: usize) -> Result<f64> {
    if steps < 1000 {
        return Err(Error::Precondition(format!("oracle needs at least 1000 steps, got {steps}")));
    }
    let f = |s: f64| s * (s - p.r);
    let h = t / steps as f64;
    let mut s = 2.0 * p.sigma;
    for _ in 0..steps {
        let k1 = f(s);
        let k2 = f(s + 0.5 * h * k1);
        let k3 = f(s + 0.5 * h * k2);
        let k4 = f(s + h * k3);
        s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Ok(s)
}

/// `B(t) = lambda0 (r/(2 sigma)) / (1 - (1 - r/(2 sigma)) e^{r t})`. Decreases
/// from `lambda0` at `t = 0` to `lambda0 r / (2 sigma)` as `t` grows.
pub fn lower_bound_b(t: f64, p: &BarrierParams) -> f64 {
    p.lambda0 * p.ratio() / p.denominator(t)
}

/// Outcome of the curvature barrier check over all snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierVerdict {
    pub ok: bool,
    pub tolerance: f64,
    /// Smallest `min_i R_i(t) - s(t)` over the snapshots.
    pub worst_margin: f64,
    pub worst_t: f64,
    pub samples: Vec<BarrierSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSample {
    pub t: f64,
    pub min_scalar: f64,
    pub barrier: f64,
}

/// Checks `min_i R_i(t) >= s(t) - 1e-2 |r|` at every snapshot, with `sigma`
/// defaulting to the trace's initial minimum Gauss curvature.
pub fn check_max_principle(trace: &FlowTrace, sigma: Option<f64>) -> Result<BarrierVerdict> {
    let sigma = sigma.unwrap_or(trace.sigma);
    let p = BarrierParams::new(trace.r, sigma, 1.0)?;
    let tolerance = BARRIER_TOLERANCE * trace.r.abs();
    let mut worst_margin = f64::INFINITY;
    let mut worst_t = 0.0;
    let samples: Vec<BarrierSample> = trace
        .snapshots
        .iter()
        .map(|s| {
            let sample = BarrierSample { t: s.t(), min_scalar: s.curvature.min_scalar(), barrier: barrier_s(s.t(), &p) };
            let margin = sample.min_scalar - sample.barrier;
            if margin < worst_margin {
                worst_margin = margin;
                worst_t = sample.t;
            }
            sample
        })
        .collect();
    Ok(BarrierVerdict { ok: worst_margin >= -tolerance, tolerance, worst_margin, worst_t, samples })
}

/// Outcome of the eigenvalue lower bound along one track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenBoundVerdict {
    pub index: usize,
    /// `lambda_i(t) >= B(t) (1 - 1e-3)` at every sample.
    pub ok: bool,
    /// `lambda_i(T) >= lambda_i(0) r / (2 sigma) (1 - 1e-3)`.
    pub final_ok: bool,
    /// False when the track is ambiguous; the flags above are then not evidence.
    pub reliable: bool,
    /// Smallest `lambda_i(t) / B(t) - 1` over the samples.
    pub worst_relative_margin: f64,
    pub final_relative_margin: f64,
    pub bound: Vec<f64>,
}

/// Checks a track against `B(t)` built from its own initial eigenvalue.
pub fn check_eigen_bound(trace: &FlowTrace, track: &EigenTrack, sigma: Option<f64>) -> Result<EigenBoundVerdict> {
    let first = track
        .samples
        .first()
        .ok_or_else(|| Error::Precondition(format!("track {} has no samples", track.index)))?;
    let last = track.samples.last().unwrap();
    let p = BarrierParams::new(trace.r, sigma.unwrap_or(trace.sigma), first.lambda)?;
    let bound: Vec<f64> = track.samples.iter().map(|s| lower_bound_b(s.t, &p)).collect();
    let worst_relative_margin =
        track.samples.iter().zip(&bound).map(|(s, b)| s.lambda / b - 1.0).fold(f64::INFINITY, f64::min);
    let final_relative_margin = last.lambda / (p.lambda0 * p.ratio()) - 1.0;
    Ok(EigenBoundVerdict {
        index: track.index,
        ok: worst_relative_margin >= -EIGEN_BOUND_TOLERANCE,
        final_ok: final_relative_margin >= -EIGEN_BOUND_TOLERANCE,
        reliable: !track.ambiguous,
        worst_relative_margin,
        final_relative_margin,
        bound,
    })
}

/// One inequality `lhs <= rhs` (or `>=`) with its signed margin and slack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    /// Positive when the inequality holds strictly.
    pub margin: f64,
    pub tolerance: f64,
    pub ok: bool,
}

impl Inequality {
    fn at_most(lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let margin = rhs - lhs;
        Self { lhs, rhs, margin, tolerance, ok: margin >= -tolerance }
    }

    fn at_least(lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let margin = lhs - rhs;
        Self { lhs, rhs, margin, tolerance, ok: margin >= -tolerance }
    }

    /// `|margin| / |rhs|`.
    pub fn relative_margin(&self) -> f64 {
        self.margin.abs() / self.rhs.abs()
    }
}

/// Verdicts for one eigenvalue index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub index: usize,
    pub lambda_g: f64,
    pub lambda_tilde: f64,
    /// `1e-3 |lambda_tilde| |kappa_g / kappa_tilde|`.
    pub tolerance: f64,
    /// `lambda_g / kappa_g >= lambda_tilde / kappa_tilde`.
    pub theorem1: Inequality,
    /// `lambda_g <= (lambda_tilde / kappa_tilde) sigma`.
    pub theorem2a: Inequality,
    /// `lambda_g <= lambda_tilde vol / (2 pi chi) sigma`.
    pub theorem2b: Inequality,
    /// `lambda_g <= (lambda_tilde / kappa_tilde) kappa_g`.
    pub theorem2c: Inequality,
    pub theorem1_ok: bool,
    pub theorem2_ok: bool,
    /// The two algebraically equal right-hand sides of 2a and 2b agree.
    pub theorem2b_consistent: bool,
    /// Eigenvalue lower bound along the whole track.
    pub barrier_ok: bool,
    /// Eigenvalue lower bound at the final time.
    pub pointwise_bound_ok: bool,
    pub eigen_bound: EigenBoundVerdict,
    pub track_ambiguous: bool,
    pub min_pairing_quality: f64,
}

/// Everything the theorem checks consumed and concluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub euler_characteristic: i64,
    pub r: f64,
    pub sigma: f64,
    pub sigma_overridden: bool,
    pub kappa_g: f64,
    /// `r / 2`.
    pub kappa_tilde: f64,
    pub kappa_tilde_measured_min: f64,
    pub kappa_tilde_measured_max: f64,
    pub volume_g: f64,
    pub volume_tilde: f64,
    pub final_time: f64,
    pub step_count: usize,
    pub lambda_g: Vec<f64>,
    pub lambda_tilde: Vec<f64>,
    pub theorem1_ok: Vec<bool>,
    pub theorem2_ok: Vec<bool>,
    pub barrier_ok: Vec<bool>,
    pub pointwise_bound_ok: Vec<bool>,
    /// Per-index `theorem2c` margins.
    pub margins: Vec<f64>,
    pub indices: Vec<IndexReport>,
    pub max_principle: BarrierVerdict,
    /// Indices whose track crossed below the overlap floor.
    pub ambiguous_tracks: Vec<usize>,
    /// True when every verdict holds and no track is ambiguous.
    pub all_ok: bool,
}

/// Evaluates both theorems for each track of a converged trace.
///
/// `sigma` overrides the lower bound used by 2a/2b and the barriers; it must
/// not exceed the initial minimum Gauss curvature.
pub fn check_theorems(trace: &FlowTrace, tracks: &[EigenTrack], sigma: Option<f64>) -> Result<TheoremReport> {
    let last = trace.final_snapshot().ok_or(Error::NotConverged)?;
    let first = trace.initial();
    let kappa_g = first.curvature.min_gauss;
    if let Some(s) = sigma {
        if s > kappa_g {
            return Err(Error::Precondition(format!(
                "sigma override {s} exceeds the minimum Gauss curvature {kappa_g}"
            )));
        }
    }
    let sigma_value = sigma.unwrap_or(trace.sigma);
    let kappa_tilde = 0.5 * trace.r;
    let volume_tilde = last.curvature.volume;
    let chi = trace.euler_characteristic as f64;
    let max_principle = check_max_principle(trace, Some(sigma_value))?;

    let mut indices = Vec::with_capacity(tracks.len());
    for track in tracks {
        let lambda_g = track.samples.first().map(|s| s.lambda).unwrap_or(f64::NAN);
        let lambda_tilde = track.samples.last().map(|s| s.lambda).unwrap_or(f64::NAN);
        let tolerance = THEOREM_TOLERANCE * lambda_tilde.abs() * (kappa_g / kappa_tilde).abs();
        let slope = lambda_tilde / kappa_tilde;
        let theorem1 = Inequality::at_least(lambda_g / kappa_g, slope, tolerance / kappa_g.abs());
        let theorem2a = Inequality::at_most(lambda_g, slope * sigma_value, tolerance);
        let theorem2b = Inequality::at_most(lambda_g, lambda_tilde / (2.0 * PI * chi) * volume_tilde * sigma_value, tolerance);
        let theorem2c = Inequality::at_most(lambda_g, slope * kappa_g, tolerance);
        let theorem2b_consistent =
            theorem2a.ok == theorem2b.ok && (theorem2a.rhs - theorem2b.rhs).abs() <= 1e-9 * theorem2a.rhs.abs();
        let eigen_bound = check_eigen_bound(trace, track, Some(sigma_value))?;
        indices.push(IndexReport {
            index: track.index,
            lambda_g,
            lambda_tilde,
            tolerance,
            theorem1_ok: theorem1.ok,
            theorem2_ok: theorem2a.ok && theorem2b.ok && theorem2c.ok,
            theorem2b_consistent,
            barrier_ok: eigen_bound.ok,
            pointwise_bound_ok: eigen_bound.final_ok,
            theorem1,
            theorem2a,
            theorem2b,
            theorem2c,
            eigen_bound,
            track_ambiguous: track.ambiguous,
            min_pairing_quality: track.min_quality(),
        });
    }
    let ambiguous_tracks: Vec<usize> = indices.iter().filter(|r| r.track_ambiguous).map(|r| r.index).collect();
    let all_ok = max_principle.ok
        && ambiguous_tracks.is_empty()
        && indices.iter().all(|r| {
            r.theorem1_ok && r.theorem2_ok && r.theorem2b_consistent && r.barrier_ok && r.pointwise_bound_ok
        });
    Ok(TheoremReport {
        euler_characteristic: trace.euler_characteristic,
        r: trace.r,
        sigma: sigma_value,
        sigma_overridden: sigma.is_some(),
        kappa_g,
        kappa_tilde,
        kappa_tilde_measured_min: last.curvature.min_gauss,
        kappa_tilde_measured_max: last.curvature.max_gauss,
        volume_g: first.curvature.volume,
        volume_tilde,
        final_time: last.t(),
        step_count: trace.step_count,
        lambda_g: indices.iter().map(|r| r.lambda_g).collect(),
        lambda_tilde: indices.iter().map(|r| r.lambda_tilde).collect(),
        theorem1_ok: indices.iter().map(|r| r.theorem1_ok).collect(),
        theorem2_ok: indices.iter().map(|r| r.theorem2_ok).collect(),
        barrier_ok: indices.iter().map(|r| r.barrier_ok).collect(),
        pointwise_bound_ok: indices.iter().map(|r| r.pointwise_bound_ok).collect(),
        margins: indices.iter().map(|r| r.theorem2c.margin).collect(),
        indices,
        max_principle,
        ambiguous_tracks,
        all_ok,
    })
}

/// Centered difference of one eigenvalue along the flow velocity at a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDifference {
    pub value: f64,
    /// Half-width `h` of the accepted difference.
    pub step: f64,
    /// `|D(h) - D(2h)|` at the accepted step.
    pub plateau_gap: f64,
    /// Smallest overlap between the snapshot eigenvector and its displaced matches.
    pub overlap: f64,
}

/// Largest and smallest half-widths tried by [`finite_difference_derivatives`].
pub const FD_FIRST_STEP: f64 = 1e-3;
pub const FD_HALVINGS: usize = 7;

/// `(lambda(t + h) - lambda(t - h)) / 2h` for every non-trivial slot of the
/// snapshot's spectrum, where `t +- h` are the flow states displaced along
/// the velocity. `h` starts at [`FD_FIRST_STEP`] and is halved; the estimate
/// at the pair of consecutive steps that agree best is returned.
pub fn finite_difference_derivatives(
    mesh: &IntrinsicMesh,
    trace: &FlowTrace,
    snapshot: usize,
    options: &SolverOptions,
) -> Result<Vec<FiniteDifference>> {
    let snap = &trace.snapshots[snapshot];
    let slice = snap
        .spectrum
        .as_ref()
        .ok_or_else(|| Error::Precondition(format!("snapshot {snapshot} has no spectrum")))?;
    let k = slice.count();
    let lambda_at = |h: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let state = displaced_state(mesh, &snap.state, h)?;
        let ops = assemble_operators(mesh, &state)?;
        let next = spectrum::smallest_eigenpairs_warm(&ops, k, Some(slice), options)?;
        let pairing = track_eigenpairs(slice, &next);
        let lambdas = pairing.next_index.iter().map(|&q| next.eigenvalues[q]).collect();
        Ok((lambdas, pairing.quality))
    };

    let mut estimates: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut h = FD_FIRST_STEP;
    for _ in 0..=FD_HALVINGS {
        match (lambda_at(h), lambda_at(-h)) {
            (Ok((up, qu)), Ok((down, qd))) => {
                let d = up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect();
                let q = qu.iter().zip(&qd).map(|(a, b)| a.min(*b)).collect();
                estimates.push((h, d, q));
            }
            (Err(Error::DegenerateFace { .. }), _) | (_, Err(Error::DegenerateFace { .. })) => {}
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
        h *= 0.5;
    }
    if estimates.len() < 2 {
        return Err(Error::Precondition(format!("no admissible finite-difference steps at snapshot {snapshot}")));
    }
    Ok((1..=k)
        .map(|i| {
            let (best, gap) = (1..estimates.len())
                .map(|n| (n, (estimates[n].1[i] - estimates[n - 1].1[i]).abs()))
                .fold((1, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            let overlap = estimates[best].2[i].min(estimates[best - 1].2[i]);
            FiniteDifference { value: estimates[best].1[i], step: estimates[best].0, plateau_gap: gap, overlap }
        })
        .collect())
}

/// Predicted versus finite-difference eigenvalue slope at one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeSample {
    pub snapshot: usize,
    pub t: f64,
    pub index: usize,
    pub slot: usize,
    pub lambda: f64,
    pub predicted: f64,
    pub finite_difference: FiniteDifference,
    /// `max(1e-2 |predicted|, 1e-6 |r| lambda)`.
    pub tolerance: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub samples: Vec<DerivativeSample>,
    /// `(index, snapshot)` pairs left out because the pairing was ambiguous.
    pub skipped: Vec<(usize, usize)>,
    pub ok: bool,
}

/// Compares the quadrature `lambda sum (R - r) u^2 A / sum u^2 A` with a
/// centered finite difference at every interior snapshot where the track's
/// pairing into and out of the snapshot, and the finite-difference matches,
/// all clear the track's overlap floor.
pub fn check_derivative_formula(
    mesh: &IntrinsicMesh,
    trace: &FlowTrace,
    tracks: &[EigenTrack],
    options: &SolverOptions,
) -> Result<DerivativeReport> {
    let n = trace.snapshots.len();
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for snapshot in 1..n.saturating_sub(1) {
        let snap = &trace.snapshots[snapshot];
        let Some(slice) = snap.spectrum.as_ref() else { continue };
        let fd = finite_difference_derivatives(mesh, trace, snapshot, options)?;
        for track in tracks {
            let floor = track.overlap_floor;
            let paired = track.pairing_quality[snapshot - 1] >= floor && track.pairing_quality[snapshot] >= floor;
            let slot = track.samples[snapshot].slot;
            if !paired || slot == 0 || slot > fd.len() || fd[slot - 1].overlap < floor {
                skipped.push((track.index, snapshot));
                continue;
            }
            let estimate = &fd[slot - 1];
            let lambda = slice.eigenvalues[slot];
            let predicted = eigenvalue_time_derivative(&snap.curvature, slice, slot);
            let tolerance = (1e-2 * predicted.abs()).max(1e-6 * trace.r.abs() * lambda);
            let ok = (predicted - estimate.value).abs() <= tolerance;
            samples.push(DerivativeSample {
                snapshot,
                t: snap.t(),
                index: track.index,
                slot,
                lambda,
                predicted,
                finite_difference: estimate.clone(),
                tolerance,
                ok,
            });
        }
    }
    let ok = samples.iter().all(|s| s.ok);
    Ok(DerivativeReport { samples, skipped, ok })
}

/// `lambda_i(T)` against `lambda_i(0) exp(int_0^T q(tau) dtau)` where `q` is
/// the quadrature divided by `lambda`, accumulated by the trapezoidal rule
/// over the track's samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialForm {
    pub index: usize,
    pub measured: f64,
    pub integrated: f64,
    pub relative_error: f64,
    pub ok: bool,
}

pub fn check_exponential_form(trace: &FlowTrace, track: &EigenTrack) -> Result<ExponentialForm> {
    let mut rates = Vec::with_capacity(track.samples.len());
    for (snap, sample) in trace.snapshots.iter().zip(&track.samples) {
        let slice = snap
            .spectrum
            .as_ref()
            .ok_or_else(|| Error::Precondition("trace snapshot without spectrum".into()))?;
        rates.push(eigenvalue_time_derivative(&snap.curvature, slice, sample.slot) / sample.lambda);
    }
    let mut integral = 0.0;
    for w in 0..rates.len().saturating_sub(1) {
        integral += 0.5 * (rates[w] + rates[w + 1]) * (track.samples[w + 1].t - track.samples[w].t);
    }
    let measured = track.samples.last().map(|s| s.lambda).unwrap_or(f64::NAN);
    let integrated = track.samples[0].lambda * integral.exp();
    let relative_error = (measured - integrated).abs() / measured.abs();
    Ok(ExponentialForm { index: track.index, measured, integrated, relative_error, ok: relative_error <= 1e-2 })
}
