//! Closed surfaces of genus `g >= 2` from the standard `4g`-gon gluing.
//!
//! The flat regular polygon is fan-triangulated from one corner; all corners
//! are identified into a single cone vertex. Intrinsic midpoint subdivision
//! then splits every flat triangle into four similar copies, and an optional
//! seeded vertex-based conformal perturbation roughens the metric.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::IntrinsicMesh;

/// Number of times the perturbation amplitude is halved before giving up.
pub const PERTURBATION_RETRIES: usize = 8;

/// Triangulation whose edges may be loops; every face side records whether it
/// runs along its edge's tail-to-head direction.
#[derive(Debug, Clone)]
struct Gluing {
    vertex_count: usize,
    faces: Vec<[usize; 3]>,
    face_edges: Vec<[usize; 3]>,
    forward: Vec<[bool; 3]>,
    edges: Vec<[usize; 2]>,
    lengths: Vec<f64>,
}

impl Gluing {
    /// Fan-triangulated regular `4g`-gon with sides glued by `a b a^-1 b^-1 ...`,
    /// scaled so its area is `2 pi (2g - 2)`.
    fn polygon(genus: usize) -> Self {
        let n = 4 * genus;
        let area = 2.0 * PI * (2 * genus - 2) as f64;
        let radius = (2.0 * area / (n as f64 * (2.0 * PI / n as f64).sin())).sqrt();
        let chord = |k: usize| 2.0 * radius * (k as f64 * PI / n as f64).sin();

        // Boundary side j runs P_j -> P_{j+1}.
        let boundary = |j: usize| -> (usize, bool) {
            let block = j / 4;
            match j % 4 {
                0 => (2 * block, true),
                1 => (2 * block + 1, true),
                2 => (2 * block, false),
                _ => (2 * block + 1, false),
            }
        };
        let mut edges = vec![[0usize, 0usize]; 2 * genus];
        let mut lengths = vec![chord(1); 2 * genus];
        // Diagonal P_0 -> P_k for k = 2..n-2.
        let diagonal = |k: usize| 2 * genus + (k - 2);
        for k in 2..=n - 2 {
            edges.push([0, 0]);
            lengths.push(chord(k));
        }

        let mut faces = Vec::new();
        let mut face_edges = Vec::new();
        let mut forward = Vec::new();
        for k in 1..=n - 2 {
            // Corners P_0, P_k, P_{k+1}.
            let side0 = boundary(k);
            let side1 = if k + 1 == n - 1 { boundary(n - 1) } else { (diagonal(k + 1), false) };
            let side2 = if k == 1 { boundary(0) } else { (diagonal(k), true) };
            faces.push([0, 0, 0]);
            face_edges.push([side0.0, side1.0, side2.0]);
            forward.push([side0.1, side1.1, side2.1]);
        }
        Self { vertex_count: 1, faces, face_edges, forward, edges, lengths }
    }

    /// One round of intrinsic 4-to-1 midpoint subdivision.
    fn subdivide(&self) -> Self {
        let ne = self.edges.len();
        let mid = |e: usize| self.vertex_count + e;
        let mut edges = Vec::with_capacity(2 * ne + 3 * self.faces.len());
        let mut lengths = Vec::with_capacity(edges.capacity());
        for (e, &[tail, head]) in self.edges.iter().enumerate() {
            let half = 0.5 * self.lengths[e];
            edges.push([tail, mid(e)]);
            edges.push([mid(e), head]);
            lengths.push(half);
            lengths.push(half);
        }
        // (child edge, forward) for the first and second halves of a face side.
        let halves = |e: usize, fwd: bool| -> [(usize, bool); 2] {
            if fwd {
                [(2 * e, true), (2 * e + 1, true)]
            } else {
                [(2 * e + 1, false), (2 * e, false)]
            }
        };

        let mut faces = Vec::with_capacity(4 * self.faces.len());
        let mut face_edges = Vec::with_capacity(faces.capacity());
        let mut forward = Vec::with_capacity(faces.capacity());
        for (f, &[v0, v1, v2]) in self.faces.iter().enumerate() {
            let fe = self.face_edges[f];
            let fw = self.forward[f];
            let [m0, m1, m2] = [mid(fe[0]), mid(fe[1]), mid(fe[2])];
            let h0 = halves(fe[0], fw[0]);
            let h1 = halves(fe[1], fw[1]);
            let h2 = halves(fe[2], fw[2]);

            // Midsegments, oriented as in the central face (m0, m1, m2).
            let base = edges.len();
            let (ea, eb, ec) = (base, base + 1, base + 2);
            edges.extend([[m1, m2], [m2, m0], [m0, m1]]);
            let l = [self.lengths[fe[0]], self.lengths[fe[1]], self.lengths[fe[2]]];
            lengths.extend([0.5 * l[0], 0.5 * l[1], 0.5 * l[2]]);

            let mut push = |corners: [usize; 3], sides: [(usize, bool); 3]| {
                faces.push(corners);
                face_edges.push([sides[0].0, sides[1].0, sides[2].0]);
                forward.push([sides[0].1, sides[1].1, sides[2].1]);
            };
            push([v0, m2, m1], [(ea, false), h1[1], h2[0]]);
            push([v1, m0, m2], [(eb, false), h2[1], h0[0]]);
            push([v2, m1, m0], [(ec, false), h0[1], h1[0]]);
            push([m0, m1, m2], [(ea, true), (eb, true), (ec, true)]);
        }
        Self { vertex_count: self.vertex_count + ne, faces, face_edges, forward, edges, lengths }
    }

    fn into_mesh(self, lengths: Vec<f64>) -> Result<IntrinsicMesh> {
        debug_assert!(self.faces.iter().zip(&self.face_edges).zip(&self.forward).all(|((face, fe), fw)| {
            (0..3).all(|k| {
                let [t, h] = self.edges[fe[k]];
                let (a, b) = (face[(k + 1) % 3], face[(k + 2) % 3]);
                if fw[k] { (a, b) == (t, h) } else { (a, b) == (h, t) }
            })
        }));
        IntrinsicMesh::from_parts(self.vertex_count, self.faces, self.face_edges, self.edges, lengths)
    }
}

/// Closed genus-2 mesh: octagon gluing, `subdivision_rounds` of midpoint
/// subdivision, then edge lengths multiplied by `exp((eta_i + eta_j) / 2)` with
/// `eta ~ Uniform(-amplitude, amplitude)` drawn from a seeded generator.
pub fn generate_genus2(subdivision_rounds: usize, perturbation_amplitude: f64, seed: u64) -> Result<IntrinsicMesh> {
    generate_surface(2, subdivision_rounds, perturbation_amplitude, seed)
}

/// Same construction for any genus `>= 2` (the `4g`-gon gluing).
pub fn generate_surface(
    genus: usize,
    subdivision_rounds: usize,
    perturbation_amplitude: f64,
    seed: u64,
) -> Result<IntrinsicMesh> {
    if genus < 2 {
        return Err(Error::Precondition(format!("genus must be at least 2, got {genus}")));
    }
    if subdivision_rounds < 1 {
        return Err(Error::Precondition("subdivision_rounds must be at least 1".into()));
    }
    if !(perturbation_amplitude >= 0.0 && perturbation_amplitude.is_finite()) {
        return Err(Error::Precondition(format!(
            "perturbation amplitude must be finite and non-negative, got {perturbation_amplitude}"
        )));
    }
    let mut gluing = Gluing::polygon(genus);
    for _ in 0..subdivision_rounds {
        gluing = gluing.subdivide();
    }
    if perturbation_amplitude == 0.0 {
        let lengths = gluing.lengths.clone();
        return gluing.into_mesh(lengths);
    }

    let mut amplitude = perturbation_amplitude;
    let mut last_err = None;
    for _ in 0..=PERTURBATION_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eta: Vec<f64> = (0..gluing.vertex_count).map(|_| rng.random_range(-amplitude..=amplitude)).collect();
        let lengths = gluing
            .edges
            .iter()
            .zip(&gluing.lengths)
            .map(|(&[a, b], &l)| l * (0.5 * (eta[a] + eta[b])).exp())
            .collect();
        match gluing.clone().into_mesh(lengths) {
            Ok(mesh) => return Ok(mesh),
            Err(err @ Error::DegenerateFace { .. }) => {
                last_err = Some(err);
                amplitude *= 0.5;
            }
            Err(err) => return Err(err),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Precondition("perturbation retries exhausted".into())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{curvature_field, MetricState};

    #[test]
    fn octagon_counts() {
        let g = Gluing::polygon(2);
        assert_eq!((g.vertex_count, g.edges.len(), g.faces.len()), (1, 9, 6));
        let area: f64 = (0..g.faces.len())
            .map(|f| {
                let fe = g.face_edges[f];
                crate::geometry::triangle_area(g.lengths[fe[0]], g.lengths[fe[1]], g.lengths[fe[2]]).unwrap()
            })
            .sum();
        assert!((area - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn genus2_one_round() {
        let m = generate_genus2(1, 0.0, 0).unwrap();
        assert_eq!((m.vertex_count(), m.edge_count(), m.face_count()), (10, 36, 24));
        assert_eq!(m.euler_characteristic(), -2);
        let c = curvature_field(&m, &MetricState::initial(&m)).unwrap();
        let total: f64 = c.deficit.iter().sum();
        assert!((total + 4.0 * PI).abs() < 1e-10);
        // All curvature sits at the cone vertex.
        assert!((c.deficit[0] + 4.0 * PI).abs() < 1e-10);
        assert!(c.deficit[1..].iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn subdivision_preserves_euler_characteristic() {
        for rounds in 1..=4 {
            assert_eq!(generate_genus2(rounds, 0.0, 0).unwrap().euler_characteristic(), -2);
        }
        assert_eq!(generate_surface(3, 2, 0.0, 0).unwrap().euler_characteristic(), -4);
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = generate_genus2(3, 0.05, 7).unwrap();
        let b = generate_genus2(3, 0.05, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_genus2(3, 0.05, 8).unwrap();
        assert_ne!(a.lengths(), c.lengths());
    }

    #[test]
    fn zero_rounds_rejected() {
        assert!(matches!(generate_genus2(0, 0.0, 1), Err(Error::Precondition(_))));
        assert!(generate_genus2(1, -0.1, 1).is_err());
        assert!(generate_surface(1, 1, 0.0, 1).is_err());
    }

    #[test]
    fn huge_perturbation_is_halved_until_admissible() {
        let m = generate_genus2(2, 4.0, 3).unwrap();
        assert!(m.validate().is_valid());
    }
}
