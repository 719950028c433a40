//! Angles, areas, curvature and cotangent weights under a conformal metric.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{triangle_slack, IntrinsicMesh};

/// Per-vertex conformal factors `u` and the flow time `t`.
///
/// The effective length of edge `ij` is `exp((u_i + u_j) / 2) * l0_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricState {
    pub u: Vec<f64>,
    pub t: f64,
}

impl MetricState {
    /// The reference metric (`u = 0`) at `t = 0`.
    pub fn initial(mesh: &IntrinsicMesh) -> Self {
        Self { u: vec![0.0; mesh.vertex_count()], t: 0.0 }
    }

    /// Effective edge lengths under this state.
    pub fn edge_lengths(&self, mesh: &IntrinsicMesh) -> Vec<f64> {
        mesh.edges()
            .iter()
            .zip(mesh.lengths())
            .map(|(&[a, b], &l0)| ((self.u[a] + self.u[b]) * 0.5).exp() * l0)
            .collect()
    }

    /// Returns the first face whose effective lengths violate the strict
    /// triangle inequality, if any.
    pub fn first_inadmissible_face(&self, mesh: &IntrinsicMesh) -> Option<usize> {
        let lengths = self.edge_lengths(mesh);
        mesh.face_edges().iter().position(|fe| {
            let l = [lengths[fe[0]], lengths[fe[1]], lengths[fe[2]]];
            !(triangle_slack(l) > 0.0)
        })
    }

    /// Bakes the effective lengths into a new reference mesh.
    pub fn bake(&self, mesh: &IntrinsicMesh) -> Result<IntrinsicMesh> {
        mesh.with_lengths(self.edge_lengths(mesh))
    }
}

/// Curvature quantities of one metric state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureField {
    /// Angle deficit `2pi - sum of corner angles` per vertex.
    pub deficit: Vec<f64>,
    /// Barycentric lumped area per vertex.
    pub area: Vec<f64>,
    /// Pointwise Gauss curvature `deficit / area`.
    pub gauss: Vec<f64>,
    /// Pointwise scalar curvature, twice the Gauss curvature.
    pub scalar: Vec<f64>,
    pub volume: f64,
    /// `4 pi chi / volume`.
    pub average_scalar: f64,
    pub min_gauss: f64,
    pub max_gauss: f64,
    pub euler_characteristic: i64,
}

impl CurvatureField {
    pub fn min_scalar(&self) -> f64 {
        2.0 * self.min_gauss
    }

    pub fn max_scalar(&self) -> f64 {
        2.0 * self.max_gauss
    }

    /// `max_i |R_i - r| / |r|`.
    pub fn relative_deviation(&self) -> f64 {
        let r = self.average_scalar;
        self.scalar.iter().map(|&s| (s - r).abs()).fold(0.0, f64::max) / r.abs()
    }
}

/// Area of a triangle from its side lengths (Kahan's stable form of Heron's formula).
pub fn triangle_area(a: f64, b: f64, c: f64) -> Result<f64> {
    let mut s = [a, b, c];
    s.sort_by(|x, y| y.total_cmp(x));
    let [a, b, c] = s;
    let slack = c - (a - b);
    if !(c > 0.0 && slack > 0.0) {
        return Err(Error::DegenerateTriangle(a, b, c));
    }
    let p = (a + (b + c)) * slack * (c + (a - b)) * (a + (b - c));
    Ok(0.25 * p.sqrt())
}

/// Corner angles opposite sides `a`, `b`, `c`.
pub fn corner_angles(a: f64, b: f64, c: f64) -> Result<[f64; 3]> {
    let four_area = 4.0 * triangle_area(a, b, c)?;
    let (a2, b2, c2) = (a * a, b * b, c * c);
    Ok([
        four_area.atan2(b2 + c2 - a2),
        four_area.atan2(a2 + c2 - b2),
        four_area.atan2(a2 + b2 - c2),
    ])
}

/// Cotangents of the corner angles opposite sides `a`, `b`, `c`.
pub fn corner_cotangents(a: f64, b: f64, c: f64) -> Result<[f64; 3]> {
    let four_area = 4.0 * triangle_area(a, b, c)?;
    let (a2, b2, c2) = (a * a, b * b, c * c);
    Ok([(b2 + c2 - a2) / four_area, (a2 + c2 - b2) / four_area, (a2 + b2 - c2) / four_area])
}

/// Per-face geometry under a metric state.
pub(crate) struct FaceGeometry {
    pub angles: Vec<[f64; 3]>,
    pub areas: Vec<f64>,
}

pub(crate) fn face_geometry(mesh: &IntrinsicMesh, lengths: &[f64]) -> Result<FaceGeometry> {
    let mut angles = Vec::with_capacity(mesh.face_count());
    let mut areas = Vec::with_capacity(mesh.face_count());
    for (f, fe) in mesh.face_edges().iter().enumerate() {
        let (a, b, c) = (lengths[fe[0]], lengths[fe[1]], lengths[fe[2]]);
        let area = triangle_area(a, b, c).map_err(|_| Error::DegenerateFace {
            face: f,
            reason: format!("triangle inequality fails at effective lengths ({a}, {b}, {c})"),
        })?;
        let four_area = 4.0 * area;
        let (a2, b2, c2) = (a * a, b * b, c * c);
        angles.push([
            four_area.atan2(b2 + c2 - a2),
            four_area.atan2(a2 + c2 - b2),
            four_area.atan2(a2 + b2 - c2),
        ]);
        areas.push(area);
    }
    Ok(FaceGeometry { angles, areas })
}

/// Computes deficits, lumped areas and curvature for `state`.
pub fn curvature_field(mesh: &IntrinsicMesh, state: &MetricState) -> Result<CurvatureField> {
    check_state(mesh, state)?;
    let lengths = state.edge_lengths(mesh);
    let geom = face_geometry(mesh, &lengths)?;
    let n = mesh.vertex_count();
    let mut angle_sum = vec![0.0; n];
    let mut area = vec![0.0; n];
    for (f, face) in mesh.faces().iter().enumerate() {
        let third = geom.areas[f] / 3.0;
        for k in 0..3 {
            angle_sum[face[k]] += geom.angles[f][k];
            area[face[k]] += third;
        }
    }
    let deficit: Vec<f64> = angle_sum.iter().map(|s| 2.0 * PI - s).collect();
    let gauss: Vec<f64> = deficit.iter().zip(&area).map(|(k, a)| k / a).collect();
    let scalar = gauss.iter().map(|k| 2.0 * k).collect();
    let volume: f64 = geom.areas.iter().sum();
    let chi = mesh.euler_characteristic();
    Ok(CurvatureField {
        min_gauss: gauss.iter().copied().fold(f64::INFINITY, f64::min),
        max_gauss: gauss.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        average_scalar: average_scalar_of(chi, volume),
        deficit,
        area,
        gauss,
        scalar,
        volume,
        euler_characteristic: chi,
    })
}

/// `r = 4 pi chi / V`.
pub(crate) fn average_scalar_of(chi: i64, volume: f64) -> f64 {
    4.0 * PI * chi as f64 / volume
}

/// Cotangent weight `(cot a + cot b) / 2` per edge, from the two opposite angles.
pub fn cotan_weights(mesh: &IntrinsicMesh, state: &MetricState) -> Result<Vec<f64>> {
    check_state(mesh, state)?;
    let lengths = state.edge_lengths(mesh);
    let mut weights = vec![0.0; mesh.edge_count()];
    for (f, fe) in mesh.face_edges().iter().enumerate() {
        let cot = corner_cotangents(lengths[fe[0]], lengths[fe[1]], lengths[fe[2]]).map_err(|_| {
            Error::DegenerateFace { face: f, reason: "triangle inequality fails at effective lengths".into() }
        })?;
        for k in 0..3 {
            weights[fe[k]] += 0.5 * cot[k];
        }
    }
    Ok(weights)
}

fn check_state(mesh: &IntrinsicMesh, state: &MetricState) -> Result<()> {
    if state.u.len() != mesh.vertex_count() {
        return Err(Error::Precondition(format!(
            "metric state has {} factors for {} vertices",
            state.u.len(),
            mesh.vertex_count()
        )));
    }
    if state.u.iter().any(|u| !u.is_finite()) {
        return Err(Error::Precondition("non-finite conformal factor".into()));
    }
    Ok(())
}
