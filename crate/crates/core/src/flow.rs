//! Normalized Ricci flow in conformal-factor form.
//!
//! Each step is an explicit Euler update `u_i += dt (r - R_i) / 2` followed by
//! a constant shift of `u` that restores the volume of the input state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cotan_weights, curvature_field, CurvatureField, MetricState};
use crate::mesh::IntrinsicMesh;
use crate::spectrum::{self, SolverOptions, SpectrumSlice};

/// Flow integration parameters. Field names match the JSON configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    /// Factor applied to `dt` after a rejected step.
    pub safety_shrink: f64,
    /// Threshold on `max_i |R_i - r| / |r|`.
    pub convergence_tol: f64,
    pub max_steps: usize,
    /// A snapshot (with spectrum) is recorded every `snapshot_stride` accepted steps.
    pub snapshot_stride: usize,
    /// Number of non-trivial eigenpairs per snapshot; `0` disables spectra.
    pub eigen_count: usize,
    /// Fraction of the explicit-Euler stability bound used to cap `dt`.
    #[serde(default = "default_stability_factor")]
    pub stability_factor: f64,
    /// Iteration budget of the eigensolver.
    #[serde(default = "default_eigen_max_iter")]
    pub eigen_max_iter: usize,
}

fn default_stability_factor() -> f64 {
    0.5
}

fn default_eigen_max_iter() -> usize {
    500
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt_init: 0.05,
            dt_min: 1e-12,
            safety_shrink: 0.5,
            convergence_tol: 1e-3,
            max_steps: 100_000,
            snapshot_stride: 10,
            eigen_count: 5,
            stability_factor: default_stability_factor(),
            eigen_max_iter: default_eigen_max_iter(),
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Precondition(format!("invalid flow config: {m}")));
        if !(self.dt_init > 0.0 && self.dt_init.is_finite()) {
            return bad("dt_init must be positive");
        }
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_init) {
            return bad("dt_min must satisfy 0 < dt_min < dt_init");
        }
        if !(self.safety_shrink > 0.0 && self.safety_shrink < 1.0) {
            return bad("safety_shrink must lie in (0, 1)");
        }
        if !(self.convergence_tol > 0.0) {
            return bad("convergence_tol must be positive");
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be at least 1");
        }
        if !(self.stability_factor > 0.0) {
            return bad("stability_factor must be positive");
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { max_iter: self.eigen_max_iter, ..SolverOptions::default() }
    }
}

/// Metric, curvature and (optionally) spectrum at one flow time.
#[derive(Debug, Clone)]
pub struct FlowSnapshot {
    pub state: MetricState,
    pub curvature: CurvatureField,
    pub spectrum: Option<SpectrumSlice>,
}

impl FlowSnapshot {
    pub fn t(&self) -> f64 {
        self.state.t
    }
}

/// Time series produced by [`run_flow`].
#[derive(Debug, Clone)]
pub struct FlowTrace {
    /// Time-ordered; the first entry is the initial metric and the last the final one.
    pub snapshots: Vec<FlowSnapshot>,
    /// Lower bound of the initial Gauss curvature (its minimum).
    pub sigma: f64,
    /// Average scalar curvature `4 pi chi / V0`, constant along the flow.
    pub r: f64,
    pub volume: f64,
    pub converged: bool,
    pub step_count: usize,
    pub rejected_steps: usize,
    pub euler_characteristic: i64,
}

impl FlowTrace {
    pub fn initial(&self) -> &FlowSnapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &FlowSnapshot {
        self.snapshots.last().expect("trace has at least one snapshot")
    }

    /// The converged metric, if the run converged.
    pub fn final_snapshot(&self) -> Option<&FlowSnapshot> {
        self.converged.then(|| self.last())
    }

    /// Eigenvalue tracks `1..=count` across the snapshots that carry a spectrum.
    pub fn tracks(&self, count: usize, overlap_floor: f64) -> Vec<spectrum::EigenTrack> {
        let slices: Vec<&SpectrumSlice> = self.snapshots.iter().filter_map(|s| s.spectrum.as_ref()).collect();
        spectrum::build_tracks(&slices, count, overlap_floor)
    }
}

/// Outcome of one attempted step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Accepted(MetricState),
    /// The raw update broke the triangle inequality on `face`; retry with a smaller `dt`.
    Rejected { face: usize },
}

/// One explicit step of the normalized flow followed by exact volume projection.
pub fn flow_step(mesh: &IntrinsicMesh, state: &MetricState, dt: f64) -> Result<StepOutcome> {
    let field = curvature_field(mesh, state)?;
    flow_step_from(mesh, state, &field, dt)
}

fn flow_step_from(mesh: &IntrinsicMesh, state: &MetricState, field: &CurvatureField, dt: f64) -> Result<StepOutcome> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Precondition(format!("dt must be positive, got {dt}")));
    }
    displace(mesh, state, field, dt)
}

/// The volume-projected Euler displacement by a signed time increment `h`.
///
/// With small `|h|` this samples the flow's velocity field on both sides of
/// `state`, which is what a centered finite difference in time needs.
pub fn displaced_state(mesh: &IntrinsicMesh, state: &MetricState, h: f64) -> Result<MetricState> {
    let field = curvature_field(mesh, state)?;
    match displace(mesh, state, &field, h)? {
        StepOutcome::Accepted(next) => Ok(next),
        StepOutcome::Rejected { face } => Err(Error::DegenerateFace {
            face,
            reason: format!("displacement by {h} breaks the triangle inequality"),
        }),
    }
}

fn displace(mesh: &IntrinsicMesh, state: &MetricState, field: &CurvatureField, dt: f64) -> Result<StepOutcome> {
    let r = field.average_scalar;
    let mut next = MetricState {
        u: state.u.iter().zip(&field.scalar).map(|(u, s)| u + dt * 0.5 * (r - s)).collect(),
        t: state.t + dt,
    };
    if let Some(face) = next.first_inadmissible_face(mesh) {
        return Ok(StepOutcome::Rejected { face });
    }
    let raw_volume = volume(mesh, &next)?;
    let shift = 0.5 * (field.volume / raw_volume).ln();
    if shift != 0.0 {
        next.u.iter_mut().for_each(|u| *u += shift);
        // The uniform rescale can round a nearly flat triangle over the edge.
        if let Some(face) = next.first_inadmissible_face(mesh) {
            return Ok(StepOutcome::Rejected { face });
        }
    }
    Ok(StepOutcome::Accepted(next))
}

fn volume(mesh: &IntrinsicMesh, state: &MetricState) -> Result<f64> {
    let lengths = state.edge_lengths(mesh);
    let mut total = 0.0;
    for (f, fe) in mesh.face_edges().iter().enumerate() {
        let (a, b, c) = (lengths[fe[0]], lengths[fe[1]], lengths[fe[2]]);
        total += crate::geometry::triangle_area(a, b, c).map_err(|_| Error::DegenerateFace {
            face: f,
            reason: "triangle inequality fails at effective lengths".into(),
        })?;
    }
    Ok(total)
}

/// Largest `dt` allowed by a Gershgorin bound on the Jacobian of the update,
/// `dt <= factor * min_i A_i / (sum_j |w_ij| + |K_i|)`.
pub fn stability_limit(mesh: &IntrinsicMesh, state: &MetricState, field: &CurvatureField, factor: f64) -> Result<f64> {
    let weights = cotan_weights(mesh, state)?;
    let mut row = vec![0.0; mesh.vertex_count()];
    for (&[a, b], w) in mesh.edges().iter().zip(&weights) {
        row[a] += w.abs();
        row[b] += w.abs();
    }
    Ok(row
        .iter()
        .zip(&field.deficit)
        .zip(&field.area)
        .map(|((w, k), a)| a / (w + k.abs()))
        .fold(f64::INFINITY, f64::min)
        * factor)
}

/// `r = 4 pi chi / V`.
pub fn average_scalar(curvature: &CurvatureField) -> f64 {
    crate::geometry::average_scalar_of(curvature.euler_characteristic, curvature.volume)
}

/// Extra eigenpairs solved per snapshot beyond `eigen_count`, so that a
/// tracked mode crossing the top of the requested range is still found.
pub const TRACKING_GUARD: usize = 2;

/// Growth factor for `dt` after an accepted step.
const DT_GROWTH: f64 = 1.1;

/// Integrates the flow from the reference metric until
/// `max_i |R_i - r| <= convergence_tol * |r|` or `max_steps` accepted steps.
pub fn run_flow(mesh: &IntrinsicMesh, config: &FlowConfig) -> Result<FlowTrace> {
    run_flow_from(mesh, MetricState::initial(mesh), config)
}

/// Like [`run_flow`], starting from an arbitrary admissible state.
pub fn run_flow_from(mesh: &IntrinsicMesh, start: MetricState, config: &FlowConfig) -> Result<FlowTrace> {
    config.validate()?;
    let chi = mesh.euler_characteristic();
    if chi >= 0 {
        return Err(Error::NonNegativeEuler { chi });
    }
    let solver = config.solver_options();
    let spectrum_of = |state: &MetricState, curvature: &CurvatureField, warm: Option<&SpectrumSlice>| {
        if config.eigen_count == 0 {
            return Ok(None);
        }
        let ops = spectrum::assemble_operators_with(mesh, state, curvature)?;
        let count = (config.eigen_count + TRACKING_GUARD).min(mesh.vertex_count() - 1);
        spectrum::smallest_eigenpairs_warm(&ops, count, warm, &solver).map(|mut s| {
            s.t = state.t;
            Some(s)
        })
    };

    let mut state = start;
    let mut field = curvature_field(mesh, &state)?;
    let volume0 = field.volume;
    let sigma = field.min_gauss;
    let r = field.average_scalar;
    let first = FlowSnapshot { spectrum: spectrum_of(&state, &field, None)?, state: state.clone(), curvature: field.clone() };
    let mut snapshots = vec![first];

    let mut dt = config.dt_init;
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut converged = field.relative_deviation() <= config.convergence_tol;
    while !converged && steps < config.max_steps {
        let limit = stability_limit(mesh, &state, &field, config.stability_factor)?;
        let trial = dt.min(limit);
        match flow_step_from(mesh, &state, &field, trial)? {
            StepOutcome::Rejected { face } => {
                rejected += 1;
                dt = trial * config.safety_shrink;
                if dt < config.dt_min {
                    return Err(Error::DtUnderflow { dt, dt_min: config.dt_min, t: state.t, face });
                }
            }
            StepOutcome::Accepted(next) => {
                state = next;
                field = curvature_field(mesh, &state)?;
                steps += 1;
                if trial == dt {
                    dt = (dt * DT_GROWTH).min(config.dt_init);
                }
                converged = field.relative_deviation() <= config.convergence_tol;
                if converged || steps.is_multiple_of(config.snapshot_stride) || steps == config.max_steps {
                    let warm = snapshots.last().and_then(|s| s.spectrum.as_ref());
                    let spectrum = spectrum_of(&state, &field, warm)?;
                    snapshots.push(FlowSnapshot { state: state.clone(), curvature: field.clone(), spectrum });
                }
            }
        }
    }

    Ok(FlowTrace {
        snapshots,
        sigma,
        r,
        volume: volume0,
        converged,
        step_count: steps,
        rejected_steps: rejected,
        euler_characteristic: chi,
    })
}
