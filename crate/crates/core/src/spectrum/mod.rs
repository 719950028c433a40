//! Discrete Laplacian spectrum: assembly, eigensolves, tracking across flow
//! time and the eigenvalue evolution formula.
//!
//! The generalized problem `L u = lambda M u` uses the cotangent stiffness
//! matrix `L` and the diagonal lumped mass `M = diag(A_i)`.

mod dense;
pub mod sparse;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use dense::dense_eigenpairs;
pub use sparse::{EnvelopeCholesky, SymmetricCsr};

use crate::error::{Error, Result};
use crate::geometry::{cotan_weights, curvature_field, CurvatureField, MetricState};
use crate::mesh::IntrinsicMesh;

/// Stiffness and lumped mass of one metric state.
#[derive(Debug, Clone)]
pub struct Operators {
    pub stiffness: SymmetricCsr,
    pub mass: Vec<f64>,
}

impl Operators {
    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    /// `|| L x - lambda M x ||` and `|| M x ||` (Euclidean norms).
    pub fn residual(&self, x: &[f64], lambda: f64) -> (f64, f64) {
        let lx = self.stiffness.mul_vec(x);
        let mut res = 0.0;
        let mut mx = 0.0;
        for i in 0..x.len() {
            let m = self.mass[i] * x[i];
            res += (lx[i] - lambda * m).powi(2);
            mx += m * m;
        }
        (res.sqrt(), mx.sqrt())
    }

    /// `<x, y>_M`.
    pub fn mass_inner(&self, x: &[f64], y: &[f64]) -> f64 {
        mass_inner(&self.mass, x, y)
    }
}

fn mass_inner(mass: &[f64], x: &[f64], y: &[f64]) -> f64 {
    mass.iter().zip(x).zip(y).map(|((m, a), b)| m * a * b).sum()
}

/// Assembles `L` from cotangent weights and `M` from lumped areas.
pub fn assemble_operators(mesh: &IntrinsicMesh, state: &MetricState) -> Result<Operators> {
    let curvature = curvature_field(mesh, state)?;
    assemble_operators_with(mesh, state, &curvature)
}

/// Like [`assemble_operators`], reusing the lumped areas of an already computed field.
pub fn assemble_operators_with(
    mesh: &IntrinsicMesh,
    state: &MetricState,
    curvature: &CurvatureField,
) -> Result<Operators> {
    let weights = cotan_weights(mesh, state)?;
    let n = mesh.vertex_count();
    let mut triplets = Vec::with_capacity(4 * weights.len());
    for (&[a, b], &w) in mesh.edges().iter().zip(&weights) {
        triplets.push((a, a, w));
        triplets.push((b, b, w));
        triplets.push((a, b, -w));
        triplets.push((b, a, -w));
    }
    Ok(Operators { stiffness: SymmetricCsr::from_triplets(n, triplets), mass: curvature.area.clone() })
}

/// The smallest generalized eigenpairs at one flow time, `lambda_0 = 0` first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumSlice {
    pub t: f64,
    pub eigenvalues: Vec<f64>,
    /// Mass-orthonormal eigenvectors, one per eigenvalue.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Lumped masses of the state the slice was computed at.
    pub mass: Vec<f64>,
}

impl SpectrumSlice {
    /// Number of non-trivial eigenpairs (excluding the kernel).
    pub fn count(&self) -> usize {
        self.eigenvalues.len().saturating_sub(1)
    }
}

/// Eigensolver controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative residual target `||L x - lambda M x|| / (||M x|| max(lambda, 1))`.
    pub tol: f64,
    /// Shift `tau = shift_fraction * tr(L) / tr(M)` of the factored matrix `L + tau M`.
    pub shift_fraction: f64,
    /// Residual that is good enough once iteration stops making progress.
    pub accept: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-11, shift_fraction: 1e-4, accept: 1e-8, seed: 0x5eed }
    }
}

/// Iterations without halving the residual before `accept` applies.
const STALL_ITERATIONS: usize = 8;

/// `k + 1` smallest eigenpairs (kernel included) by shift-invert subspace iteration.
pub fn smallest_eigenpairs(ops: &Operators, k: usize) -> Result<SpectrumSlice> {
    smallest_eigenpairs_warm(ops, k, None, &SolverOptions::default())
}

/// Like [`smallest_eigenpairs`], seeding the block with the vectors of `warm`.
pub fn smallest_eigenpairs_warm(
    ops: &Operators,
    k: usize,
    warm: Option<&SpectrumSlice>,
    options: &SolverOptions,
) -> Result<SpectrumSlice> {
    let n = ops.dim();
    let need = k + 1;
    if k == 0 || need > n {
        return Err(Error::Precondition(format!("eigen count {k} must satisfy 1 <= k < {n}")));
    }
    let block = n.min((2 * need).max(need + 8));
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let random_vec = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();

    let mut x: Vec<Vec<f64>> = vec![vec![1.0; n]];
    if let Some(w) = warm {
        x.extend(w.eigenvectors.iter().skip(1).filter(|v| v.len() == n).take(block - 1).cloned());
    }
    while x.len() < block {
        x.push(random_vec(&mut rng));
    }
    orthonormalize(&ops.mass, &mut x, &mut || random_vec(&mut rng));

    let tr_l: f64 = ops.stiffness.diagonal().iter().sum();
    let tr_m: f64 = ops.mass.iter().sum();
    let shift = options.shift_fraction * tr_l / tr_m;
    let mut factor: Option<EnvelopeCholesky> = None;

    let (mut values, mut vectors) = rayleigh_ritz(ops, &x);
    let mut worst = worst_residual(ops, &values, &vectors, need);
    let mut iterations = 0;
    let (mut best, mut stalled) = (worst, 0);
    while worst > options.tol {
        if stalled >= STALL_ITERATIONS && worst <= options.accept {
            break;
        }
        if iterations == options.max_iter {
            return Err(Error::SolverNonConvergence { iterations, residual: worst });
        }
        iterations += 1;
        if factor.is_none() {
            let perm = ops.stiffness.reverse_cuthill_mckee();
            factor = Some(EnvelopeCholesky::factor_shifted(&ops.stiffness, shift, &ops.mass, perm).ok_or_else(
                || Error::Precondition("shifted stiffness matrix is not positive definite".into()),
            )?);
        }
        let chol = factor.as_ref().unwrap();
        let mut y: Vec<Vec<f64>> = vectors
            .iter()
            .map(|v| {
                let mv: Vec<f64> = v.iter().zip(&ops.mass).map(|(a, m)| a * m).collect();
                chol.solve(&mv)
            })
            .collect();
        orthonormalize(&ops.mass, &mut y, &mut || random_vec(&mut rng));
        (values, vectors) = rayleigh_ritz(ops, &y);
        worst = worst_residual(ops, &values, &vectors, need);
        if worst < 0.5 * best {
            (best, stalled) = (worst, 0);
        } else {
            stalled += 1;
        }
    }

    values.truncate(need);
    vectors.truncate(need);
    for v in vectors.iter_mut() {
        normalize_sign(v);
    }
    Ok(SpectrumSlice { t: 0.0, eigenvalues: values, eigenvectors: vectors, mass: ops.mass.clone() })
}

/// Relative residual of each pair, as used in the convergence test.
pub fn relative_residuals(ops: &Operators, slice: &SpectrumSlice) -> Vec<f64> {
    slice
        .eigenvalues
        .iter()
        .zip(&slice.eigenvectors)
        .map(|(&l, v)| {
            let (res, mx) = ops.residual(v, l);
            res / (mx * l.max(1.0))
        })
        .collect()
}

fn worst_residual(ops: &Operators, values: &[f64], vectors: &[Vec<f64>], need: usize) -> f64 {
    values
        .iter()
        .zip(vectors)
        .take(need)
        .map(|(&l, v)| {
            let (res, mx) = ops.residual(v, l);
            res / (mx * l.max(1.0))
        })
        .fold(0.0, f64::max)
}

/// Twice-repeated modified Gram-Schmidt in the mass inner product. Columns that
/// collapse are replaced by fresh vectors.
fn orthonormalize(mass: &[f64], x: &mut [Vec<f64>], fresh: &mut dyn FnMut() -> Vec<f64>) {
    for j in 0..x.len() {
        for attempt in 0..4 {
            let before = mass_inner(mass, &x[j], &x[j]).sqrt();
            for _ in 0..2 {
                for i in 0..j {
                    let c = mass_inner(mass, &x[i], &x[j]);
                    let (head, tail) = x.split_at_mut(j);
                    tail[0].iter_mut().zip(&head[i]).for_each(|(a, b)| *a -= c * b);
                }
            }
            let norm = mass_inner(mass, &x[j], &x[j]).sqrt();
            if norm > 1e-10 * before && norm > 0.0 {
                x[j].iter_mut().for_each(|a| *a /= norm);
                break;
            }
            debug_assert!(attempt < 3, "could not extend the orthonormal block");
            x[j] = fresh();
        }
    }
}

/// Rayleigh-Ritz on a mass-orthonormal block; returns ascending Ritz pairs.
fn rayleigh_ritz(ops: &Operators, basis: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = basis.len();
    let lb: Vec<Vec<f64>> = basis.iter().map(|v| ops.stiffness.mul_vec(v)).collect();
    let projected = DMatrix::from_fn(p, p, |i, j| {
        let a: f64 = basis[i].iter().zip(&lb[j]).map(|(x, y)| x * y).sum();
        let b: f64 = basis[j].iter().zip(&lb[i]).map(|(x, y)| x * y).sum();
        0.5 * (a + b)
    });
    let eig = SymmetricEigen::new(projected);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let n = ops.dim();
    let values = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    let vectors = order
        .iter()
        .map(|&c| {
            let mut v = vec![0.0; n];
            for (j, b) in basis.iter().enumerate() {
                let q = eig.eigenvectors[(j, c)];
                v.iter_mut().zip(b).for_each(|(a, x)| *a += q * x);
            }
            v
        })
        .collect();
    (values, vectors)
}

/// Makes the entry of largest magnitude positive (first one on ties).
pub(crate) fn normalize_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() * (1.0 + 1e-9) {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Matching of eigenvectors between two slices of the same mesh.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pairing {
    /// `next_index[p]` is the slot in the next slice paired with slot `p`.
    pub next_index: Vec<usize>,
    /// Absolute mass inner product of each matched pair, clamped to `[0, 1]`.
    pub quality: Vec<f64>,
}

/// Greedy matching by descending absolute mass overlap (mass of `next`).
pub fn track_eigenpairs(prev: &SpectrumSlice, next: &SpectrumSlice) -> Pairing {
    let np = prev.eigenvectors.len();
    let nn = next.eigenvectors.len();
    let mut overlaps = Vec::with_capacity(np * nn);
    for p in 0..np {
        for q in 0..nn {
            let o = mass_inner(&next.mass, &prev.eigenvectors[p], &next.eigenvectors[q]).abs().min(1.0);
            overlaps.push((o, p, q));
        }
    }
    overlaps.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut next_index = vec![usize::MAX; np];
    let mut quality = vec![0.0; np];
    let mut taken = vec![false; nn];
    for (o, p, q) in overlaps {
        if next_index[p] == usize::MAX && !taken[q] {
            next_index[p] = q;
            quality[p] = o;
            taken[q] = true;
        }
    }
    Pairing { next_index, quality }
}

/// Default minimum overlap for an unambiguous transition.
pub const DEFAULT_OVERLAP_FLOOR: f64 = 0.5;

/// One point of an eigenvalue track.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackSample {
    pub t: f64,
    pub lambda: f64,
    /// Slot of the eigenpair inside its slice.
    pub slot: usize,
}

/// The `index`-th eigenvalue followed through time by overlap pairing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenTrack {
    pub index: usize,
    pub samples: Vec<TrackSample>,
    /// Overlap of each transition between consecutive samples.
    pub pairing_quality: Vec<f64>,
    pub overlap_floor: f64,
    pub ambiguous: bool,
}

impl EigenTrack {
    pub fn min_quality(&self) -> f64 {
        self.pairing_quality.iter().copied().fold(1.0, f64::min)
    }
}

/// Builds tracks for indices `1..=count` over time-ordered slices. Slices may
/// hold more than `count` pairs; a track may wander into those extra slots.
pub fn build_tracks(slices: &[&SpectrumSlice], count: usize, overlap_floor: f64) -> Vec<EigenTrack> {
    let Some(first) = slices.first() else { return Vec::new() };
    let k = slices.iter().map(|s| s.count()).min().unwrap_or(0);
    let count = count.min(k);
    let pairings: Vec<Pairing> = slices.windows(2).map(|w| track_eigenpairs(w[0], w[1])).collect();
    (1..=count)
        .map(|index| {
            let mut slot = index;
            let mut samples = vec![TrackSample { t: first.t, lambda: first.eigenvalues[slot], slot }];
            let mut pairing_quality = Vec::with_capacity(pairings.len());
            let mut lost = false;
            for (pairing, next) in pairings.iter().zip(&slices[1..]) {
                pairing_quality.push(pairing.quality[slot]);
                slot = pairing.next_index[slot];
                if slot == 0 || slot > k {
                    lost = true;
                }
                samples.push(TrackSample { t: next.t, lambda: next.eigenvalues[slot], slot });
            }
            let ambiguous = lost || pairing_quality.iter().any(|&q| q < overlap_floor);
            EigenTrack { index, samples, pairing_quality, overlap_floor, ambiguous }
        })
        .collect()
}

/// `dlambda/dt = lambda * sum_j (R_j - r) u_j^2 A_j / sum_j u_j^2 A_j` for slot `i`,
/// with the lumped areas as the volume measure.
pub fn eigenvalue_time_derivative(curvature: &CurvatureField, slice: &SpectrumSlice, i: usize) -> f64 {
    let lambda = slice.eigenvalues[i];
    let u = &slice.eigenvectors[i];
    let r = curvature.average_scalar;
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..u.len() {
        let w = u[j] * u[j] * curvature.area[j];
        num += (curvature.scalar[j] - r) * w;
        den += w;
    }
    lambda * num / den
}
