//! Closed intrinsic triangulated surfaces.
//!
//! An [`IntrinsicMesh`] stores only combinatorics and one reference length per
//! edge. Edges carry explicit identities, so two distinct edges may join the
//! same pair of vertices (this happens after subdividing polygon gluings).
//! Self-loops are not representable.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Combinatorics plus reference edge lengths of a closed triangulated surface.
///
/// Side `k` of a face is the side opposite corner `k`; it runs from corner
/// `k + 1` to corner `k + 2` (indices mod 3).
#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicMesh {
    vertex_count: usize,
    faces: Vec<[usize; 3]>,
    face_edges: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    lengths: Vec<f64>,
    edge_faces: Vec<[(usize, usize); 2]>,
    euler: i64,
}

/// Result of [`IntrinsicMesh::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshValidationReport {
    pub manifold_ok: bool,
    pub orientation_ok: bool,
    pub triangle_inequality_ok: bool,
    pub connected: bool,
    pub euler_characteristic: i64,
    /// Minimum over faces of `l_a + l_b - l_c` with `l_c` the longest side.
    pub worst_triangle_slack: f64,
}

impl MeshValidationReport {
    pub fn is_valid(&self) -> bool {
        self.manifold_ok && self.orientation_ok && self.triangle_inequality_ok && self.connected
    }
}

/// `l_a + l_b - l_c` for the longest side `l_c`.
pub(crate) fn triangle_slack(l: [f64; 3]) -> f64 {
    // Same rounding as `triangle_area`, so the two never disagree.
    let mut s = l;
    s.sort_by(|x, y| y.total_cmp(x));
    s[2] - (s[0] - s[1])
}

impl IntrinsicMesh {
    /// Builds a mesh from oriented vertex triples, creating one edge per
    /// unordered vertex pair. `edge_length(a, b)` supplies reference lengths.
    pub fn from_faces<F>(vertex_count: usize, faces: Vec<[usize; 3]>, mut edge_length: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> f64,
    {
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        let mut face_edges = Vec::with_capacity(faces.len());
        for (f, face) in faces.iter().enumerate() {
            let mut fe = [0usize; 3];
            for k in 0..3 {
                let a = face[(k + 1) % 3];
                let b = face[(k + 2) % 3];
                if a >= vertex_count || b >= vertex_count {
                    return Err(Error::DegenerateFace {
                        face: f,
                        reason: format!("vertex index out of range ({a}, {b})"),
                    });
                }
                if a == b {
                    return Err(Error::DegenerateFace { face: f, reason: "repeated vertex".into() });
                }
                let key = (a.min(b), a.max(b));
                let e = *index.entry(key).or_insert_with(|| {
                    edges.push([a, b]);
                    counts.push(0);
                    edges.len() - 1
                });
                counts[e] += 1;
                fe[k] = e;
            }
            face_edges.push(fe);
        }
        if let Some(e) = counts.iter().position(|&c| c > 2).or_else(|| counts.iter().position(|&c| c != 2)) {
            return Err(Error::NonManifold { a: edges[e][0], b: edges[e][1], count: counts[e] });
        }
        let lengths = edges.iter().map(|&[a, b]| edge_length(a, b)).collect();
        Self::from_parts(vertex_count, faces, face_edges, edges, lengths)
    }

    /// Builds a mesh from explicit face-to-edge incidences and validates it.
    pub fn from_parts(
        vertex_count: usize,
        faces: Vec<[usize; 3]>,
        face_edges: Vec<[usize; 3]>,
        edges: Vec<[usize; 2]>,
        lengths: Vec<f64>,
    ) -> Result<Self> {
        if vertex_count == 0 || faces.is_empty() {
            return Err(Error::Precondition("mesh has no vertices or faces".into()));
        }
        if face_edges.len() != faces.len() || lengths.len() != edges.len() {
            return Err(Error::Precondition("inconsistent mesh part sizes".into()));
        }
        let mut edge_faces = vec![[(usize::MAX, 0usize); 2]; edges.len()];
        let mut counts = vec![0usize; edges.len()];
        for (f, (face, fe)) in faces.iter().zip(&face_edges).enumerate() {
            for k in 0..3 {
                let e = fe[k];
                if e >= edges.len() {
                    return Err(Error::DegenerateFace { face: f, reason: format!("edge index {e} out of range") });
                }
                let (a, b) = (face[(k + 1) % 3], face[(k + 2) % 3]);
                let [ea, eb] = edges[e];
                if ea == eb {
                    return Err(Error::DegenerateFace { face: f, reason: "self-loop edge".into() });
                }
                if !((a == ea && b == eb) || (a == eb && b == ea)) {
                    return Err(Error::DegenerateFace {
                        face: f,
                        reason: format!("side {k} does not match the endpoints of edge {e}"),
                    });
                }
                if counts[e] < 2 {
                    edge_faces[e][counts[e]] = (f, k);
                }
                counts[e] += 1;
            }
        }
        if let Some(e) = counts.iter().position(|&c| c > 2).or_else(|| counts.iter().position(|&c| c != 2)) {
            return Err(Error::NonManifold { a: edges[e][0], b: edges[e][1], count: counts[e] });
        }
        let euler = vertex_count as i64 - edges.len() as i64 + faces.len() as i64;
        let mesh = Self { vertex_count, faces, face_edges, edges, lengths, edge_faces, euler };

        let report = mesh.validate();
        if !report.orientation_ok {
            let e = mesh.first_misoriented_edge().unwrap_or(0);
            return Err(Error::Orientation { a: mesh.edges[e][0], b: mesh.edges[e][1] });
        }
        if !report.manifold_ok {
            return Err(Error::Precondition("vertex link is not a single cycle, or a vertex is unused".into()));
        }
        if !report.triangle_inequality_ok {
            let face = mesh.worst_face();
            return Err(Error::DegenerateFace {
                face,
                reason: format!("triangle inequality fails at reference lengths {:?}", mesh.face_lengths(face)),
            });
        }
        if !report.connected {
            return Err(Error::Precondition("mesh is not connected".into()));
        }
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Per face, the edge on the side opposite each corner.
    pub fn face_edges(&self) -> &[[usize; 3]] {
        &self.face_edges
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Reference lengths, indexed like [`edges`](Self::edges).
    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// The two `(face, side)` pairs incident to each edge.
    pub fn edge_faces(&self) -> &[[(usize, usize); 2]] {
        &self.edge_faces
    }

    /// `V - E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        self.euler
    }

    /// Reference side lengths of a face, side `k` opposite corner `k`.
    pub fn face_lengths(&self, face: usize) -> [f64; 3] {
        let fe = self.face_edges[face];
        [self.lengths[fe[0]], self.lengths[fe[1]], self.lengths[fe[2]]]
    }

    /// Same combinatorics with new reference lengths, revalidated.
    pub fn with_lengths(&self, lengths: Vec<f64>) -> Result<Self> {
        Self::from_parts(
            self.vertex_count,
            self.faces.clone(),
            self.face_edges.clone(),
            self.edges.clone(),
            lengths,
        )
    }

    /// Uniformly rescales every reference length by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Precondition(format!("scale factor must be positive, got {factor}")));
        }
        self.with_lengths(self.lengths.iter().map(|l| l * factor).collect())
    }

    fn worst_face(&self) -> usize {
        (0..self.faces.len())
            .min_by(|&a, &b| triangle_slack(self.face_lengths(a)).total_cmp(&triangle_slack(self.face_lengths(b))))
            .unwrap_or(0)
    }

    fn first_misoriented_edge(&self) -> Option<usize> {
        (0..self.edges.len()).find(|&e| {
            let [(f0, s0), (f1, s1)] = self.edge_faces[e];
            let tail0 = self.faces[f0][(s0 + 1) % 3];
            let tail1 = self.faces[f1][(s1 + 1) % 3];
            tail0 == tail1
        })
    }

    /// Checks closed-manifold, orientation, triangle inequality and connectivity.
    pub fn validate(&self) -> MeshValidationReport {
        let orientation_ok = self.first_misoriented_edge().is_none();

        // Walk the corner fan around every vertex; a manifold vertex has a single cycle.
        let mut corners: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.vertex_count];
        for (f, face) in self.faces.iter().enumerate() {
            for (k, &v) in face.iter().enumerate() {
                corners[v].push((f, k));
            }
        }
        let mut manifold_ok = corners.iter().all(|c| !c.is_empty());
        if manifold_ok && orientation_ok {
            for (v, list) in corners.iter().enumerate() {
                let (f0, k0) = list[0];
                let (mut f, mut k) = (f0, k0);
                let mut steps = 0usize;
                loop {
                    // Outgoing side from corner k runs corner k -> k+1; it is side k+2.
                    let side = (k + 2) % 3;
                    let e = self.face_edges[f][side];
                    let [(fa, sa), (fb, sb)] = self.edge_faces[e];
                    let (g, s) = if (fa, sa) == (f, side) { (fb, sb) } else { (fa, sa) };
                    f = g;
                    k = (s + 2) % 3;
                    steps += 1;
                    if self.faces[f][k] != v || steps > list.len() {
                        manifold_ok = false;
                        break;
                    }
                    if (f, k) == (f0, k0) {
                        break;
                    }
                }
                if !manifold_ok || steps != list.len() {
                    manifold_ok = false;
                    break;
                }
            }
        }

        let worst_triangle_slack = (0..self.faces.len())
            .map(|f| triangle_slack(self.face_lengths(f)))
            .fold(f64::INFINITY, f64::min);
        let positive = self.lengths.iter().all(|&l| l > 0.0 && l.is_finite());
        let triangle_inequality_ok = positive && worst_triangle_slack > 0.0;

        MeshValidationReport {
            manifold_ok,
            orientation_ok,
            triangle_inequality_ok,
            connected: self.is_connected(),
            euler_characteristic: self.euler,
            worst_triangle_slack,
        }
    }

    fn is_connected(&self) -> bool {
        let mut adjacency = vec![Vec::new(); self.vertex_count];
        for &[a, b] in &self.edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut seen = vec![false; self.vertex_count];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.vertex_count
    }
}

/// `V - E + F` of a mesh.
pub fn euler_characteristic(mesh: &IntrinsicMesh) -> i64 {
    mesh.euler_characteristic()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Regular tetrahedron with all edges of the given length.
    pub fn tetrahedron(edge: f64) -> IntrinsicMesh {
        let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        IntrinsicMesh::from_faces(4, faces, |_, _| edge).unwrap()
    }

    /// `n x m` flat torus made of equilateral triangles.
    pub fn torus(n: usize, m: usize) -> IntrinsicMesh {
        let id = |i: usize, j: usize| (i % n) * m + (j % m);
        let mut faces = Vec::new();
        for i in 0..n {
            for j in 0..m {
                faces.push([id(i, j), id(i + 1, j), id(i, j + 1)]);
                faces.push([id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        IntrinsicMesh::from_faces(n * m, faces, |_, _| 1.0).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn tetrahedron_counts() {
        let t = tetrahedron(1.0);
        assert_eq!((t.vertex_count(), t.edge_count(), t.face_count()), (4, 6, 4));
        assert_eq!(euler_characteristic(&t), 2);
        assert!(t.validate().is_valid());
    }

    #[test]
    fn torus_has_zero_euler_characteristic() {
        let t = torus(4, 5);
        assert_eq!(t.euler_characteristic(), 0);
        assert_eq!(3 * t.face_count(), 2 * t.edge_count());
    }

    #[test]
    fn rejects_open_surface() {
        let err = IntrinsicMesh::from_faces(3, vec![[0, 1, 2]], |_, _| 1.0).unwrap_err();
        assert!(matches!(err, Error::NonManifold { count: 1, .. }));
    }

    #[test]
    fn rejects_edge_with_three_faces() {
        let faces = vec![[0, 1, 2], [1, 0, 3], [0, 1, 4], [1, 2, 3]];
        let err = IntrinsicMesh::from_faces(5, faces, |_, _| 1.0).unwrap_err();
        assert!(matches!(err, Error::NonManifold { count: 3, .. }));
    }

    #[test]
    fn rejects_flipped_face() {
        let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 2, 3]];
        let err = IntrinsicMesh::from_faces(4, faces, |_, _| 1.0).unwrap_err();
        assert!(matches!(err, Error::Orientation { .. }));
    }

    #[test]
    fn rejects_triangle_inequality_violation() {
        let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        let err = IntrinsicMesh::from_faces(4, faces, |a, b| if (a, b) == (1, 2) || (a, b) == (2, 1) { 2.0 } else { 1.0 })
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateFace { .. }));
    }

    #[test]
    fn pinched_vertex_is_not_manifold() {
        // Two tetrahedra sharing vertex 0.
        let mut faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        faces.extend([[0, 4, 5], [0, 6, 4], [0, 5, 6], [4, 6, 5]]);
        let err = IntrinsicMesh::from_faces(7, faces, |_, _| 1.0).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn scaling_keeps_combinatorics() {
        let t = tetrahedron(1.0).scaled(2.0).unwrap();
        assert!(t.lengths().iter().all(|&l| l == 2.0));
        assert!(tetrahedron(1.0).scaled(-1.0).is_err());
    }
}
