use nalgebra::{DMatrix, SymmetricEigen};

use super::{normalize_sign, Operators, SpectrumSlice};

/// Full generalized spectrum by a dense symmetric eigensolve of
/// `M^{-1/2} L M^{-1/2}`. Used as an oracle for the iterative solver.
pub fn dense_eigenpairs(ops: &Operators, count: usize) -> SpectrumSlice {
    let n = ops.dim();
    let scale: Vec<f64> = ops.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for (j, v) in ops.stiffness.row(i) {
            a[(i, j)] = v * scale[i] * scale[j];
        }
    }
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    order.truncate(count.min(n));
    let eigenvalues = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    let eigenvectors = order
        .iter()
        .map(|&c| {
            let mut v: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, c)] * scale[i]).collect();
            normalize_sign(&mut v);
            v
        })
        .collect();
    SpectrumSlice { t: 0.0, eigenvalues, eigenvectors, mass: ops.mass.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MetricState;
    use crate::mesh::fixtures::tetrahedron;
    use crate::spectrum::assemble_operators;

    #[test]
    fn tetrahedron_dense_oracle() {
        let t = tetrahedron(1.0);
        let ops = assemble_operators(&t, &MetricState::initial(&t)).unwrap();
        let s = dense_eigenpairs(&ops, 4);
        assert!(s.eigenvalues[0].abs() < 1e-12);
        for &l in &s.eigenvalues[1..] {
            assert!((l - 16.0 / 3.0).abs() < 1e-12);
        }
    }
}
