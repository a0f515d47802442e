//! Eigenspace construction via the M×M Gram trick.
//!
//! For a training matrix A of M column vectors of length N (with M ≪ N),
//! the eigenvectors of the N×N matrix AAᵀ are obtained without ever forming
//! it: diagonalize the small Gram matrix L = AᵀA, then lift each eigenvector
//! v to u = Av and normalize. The nonzero eigenvalues of L and AAᵀ coincide,
//! so the lifted, unit-norm u form an orthonormal basis of the training
//! samples' span sorted by explained variance.
//!
//! Deliberately, no mean vector is subtracted anywhere: samples are projected
//! as raw byte vectors and the model carries no centering term.

// Index loops stay explicit here: the accumulation order of every dot
// product and reduction is pinned by the reproducibility contract.
#![allow(clippy::needless_range_loop)]

use thiserror::Error;

use crate::sample_prep::SampleVector;

/// Default relative eigenvalue cutoff below which lifted directions are
/// dropped as numerical null space (duplicate or near-duplicate columns).
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const MAX_JACOBI_SWEEPS: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EigenError {
    #[error("eigenvalue iteration did not converge within {MAX_JACOBI_SWEEPS} sweeps")]
    NoConvergence,
    #[error("training set is degenerate: every eigenvalue is at or below the rank tolerance")]
    DegenerateTrainingSet,
    #[error("m_prime must be between 1 and {max}, got {requested}")]
    InvalidMPrime { requested: usize, max: usize },
    #[error("vector length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// The M training columns Φ₁…Φ_M and their family labels.
#[derive(Debug, Clone)]
pub struct TrainingMatrix {
    columns: Vec<SampleVector>,
    labels: Vec<String>,
    n: usize,
}

impl TrainingMatrix {
    /// Panics if the matrix is empty, a label is empty, or column lengths
    /// disagree; those are construction bugs, not runtime conditions.
    pub fn new(columns: Vec<SampleVector>, labels: Vec<String>) -> Self {
        assert!(!columns.is_empty(), "training matrix needs at least one column");
        assert_eq!(columns.len(), labels.len(), "one label per column");
        assert!(labels.iter().all(|l| !l.is_empty()), "labels must be non-empty");
        let n = columns[0].len();
        assert!(columns.iter().all(|c| c.len() == n), "columns must share length");
        Self { columns, labels, n }
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> &[SampleVector] {
        &self.columns
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Orthonormal basis of the training span: unit-norm vectors sorted by
/// descending eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenbasis {
    vectors: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    n: usize,
}

impl Eigenbasis {
    /// Assembles a basis from parts, checking the structural invariants:
    /// unit norms within 1e-9, eigenvalues sorted non-increasing and
    /// numerically nonnegative.
    pub fn from_parts(vectors: Vec<Vec<f64>>, eigenvalues: Vec<f64>, n: usize) -> Self {
        assert!(!vectors.is_empty(), "basis needs at least one vector");
        assert_eq!(vectors.len(), eigenvalues.len());
        assert!(vectors.iter().all(|v| v.len() == n));
        for v in &vectors {
            let norm = dot(v, v).sqrt();
            assert!((norm - 1.0).abs() <= 1e-9, "basis vectors must be unit norm");
        }
        let lambda_max = eigenvalues[0];
        for w in eigenvalues.windows(2) {
            assert!(w[0] >= w[1], "eigenvalues must be sorted descending");
        }
        assert!(
            eigenvalues.iter().all(|&l| l >= -1e-9 * lambda_max.abs()),
            "eigenvalues must be numerically nonnegative"
        );
        Self { vectors, eigenvalues, n }
    }

    pub fn m_prime(&self) -> usize {
        self.vectors.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
}

/// An M′-dimensional eigenspace projection Ω of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Gram matrix L = AᵀA: `L[i][j]` is the dot product Φᵢ·Φⱼ.
///
/// Each pair is computed once and mirrored, so the result is exactly
/// symmetric as stored.
pub fn gram(a: &TrainingMatrix) -> Vec<Vec<f64>> {
    let m = a.column_count();
    let mut l = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let d = dot(a.columns[i].values(), a.columns[j].values());
            l[i][j] = d;
            l[j][i] = d;
        }
    }
    l
}

/// Eigendecomposition of a small symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order (ties broken by original index)
/// and the matching orthonormal eigenvectors. The input must be square and
/// symmetric; asymmetry beyond 1e-9 relative is a caller bug and panics.
pub fn sym_eigen(l: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>), EigenError> {
    let m = l.len();
    assert!(m >= 1, "matrix must be non-empty");
    let scale = l
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, &x| acc.max(x.abs()));
    for i in 0..m {
        assert_eq!(l[i].len(), m, "matrix must be square");
        for j in 0..i {
            assert!(
                (l[i][j] - l[j][i]).abs() <= 1e-9 * (1.0 + scale),
                "matrix must be symmetric"
            );
        }
    }

    let mut a: Vec<Vec<f64>> = l.to_vec();
    let mut v = identity(m);

    let frob: f64 = a
        .iter()
        .flat_map(|row| row.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    let target = f64::EPSILON * (1.0 + frob);

    let mut converged = false;
    for _ in 0..MAX_JACOBI_SWEEPS {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..m {
                for q in (p + 1)..m {
                    s += a[p][q] * a[p][q];
                }
            }
            (2.0 * s).sqrt()
        };
        if off <= target {
            converged = true;
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged {
        return Err(EigenError::NoConvergence);
    }

    // Stable descending sort by eigenvalue, ties by original index.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());

    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&c| (0..m).map(|r| v[r][c]).collect())
        .collect();
    Ok((eigenvalues, eigenvectors))
}

fn identity(m: usize) -> Vec<Vec<f64>> {
    let mut v = vec![vec![0.0; m]; m];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    v
}

/// One two-sided Jacobi rotation annihilating a[p][q], accumulating the
/// rotation into the columns of `v`.
fn rotate(a: &mut [Vec<f64>], v: &mut [Vec<f64>], p: usize, q: usize) {
    let m = a.len();
    let apq = a[p][q];
    if apq == 0.0 {
        return;
    }
    let app = a[p][p];
    let aqq = a[q][q];

    let theta = (aqq - app) / (2.0 * apq);
    // tan of the rotation angle, the root of t² + 2θt − 1 smaller in magnitude
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    a[p][p] = app - t * apq;
    a[q][q] = aqq + t * apq;
    a[p][q] = 0.0;
    a[q][p] = 0.0;

    for r in 0..m {
        if r == p || r == q {
            continue;
        }
        let g = a[r][p];
        let h = a[r][q];
        a[r][p] = g - s * (h + g * tau);
        a[r][q] = h + s * (g - h * tau);
        a[p][r] = a[r][p];
        a[q][r] = a[r][q];
    }
    for r in 0..m {
        let g = v[r][p];
        let h = v[r][q];
        v[r][p] = g - s * (h + g * tau);
        v[r][q] = h + s * (g - h * tau);
    }
}

/// Lift Gram-matrix eigenvectors into sample space: uᵢ = A vᵢ, normalized to
/// unit length. Directions with λᵢ ≤ rank_tol·λ_max are numerical null space
/// and are dropped; eigenvalues are carried over unchanged, order preserved.
pub fn lift_eigenvectors(
    a: &TrainingMatrix,
    eigenvectors: &[Vec<f64>],
    eigenvalues: &[f64],
    rank_tol: f64,
) -> Result<Eigenbasis, EigenError> {
    assert_eq!(eigenvectors.len(), eigenvalues.len());
    let lambda_max = eigenvalues.first().copied().unwrap_or(0.0);
    if lambda_max <= 0.0 {
        return Err(EigenError::DegenerateTrainingSet);
    }

    let n = a.n();
    let mut vectors = Vec::new();
    let mut kept_values = Vec::new();
    for (v, &lambda) in eigenvectors.iter().zip(eigenvalues) {
        if lambda <= rank_tol * lambda_max {
            continue;
        }
        let mut u = vec![0.0; n];
        for (col, &coeff) in a.columns().iter().zip(v.iter()) {
            let col = col.values();
            for i in 0..n {
                u[i] += coeff * col[i];
            }
        }
        let norm = dot(&u, &u).sqrt();
        if norm == 0.0 {
            continue;
        }
        for x in &mut u {
            *x /= norm;
        }
        vectors.push(u);
        kept_values.push(lambda);
    }

    if vectors.is_empty() {
        return Err(EigenError::DegenerateTrainingSet);
    }
    Ok(Eigenbasis { vectors, eigenvalues: kept_values, n })
}

/// Keep the first `m_prime` (largest-eigenvalue) basis vectors.
pub fn select_top(basis: &Eigenbasis, m_prime: usize) -> Result<Eigenbasis, EigenError> {
    if m_prime == 0 || m_prime > basis.m_prime() {
        return Err(EigenError::InvalidMPrime { requested: m_prime, max: basis.m_prime() });
    }
    Ok(Eigenbasis {
        vectors: basis.vectors[..m_prime].to_vec(),
        eigenvalues: basis.eigenvalues[..m_prime].to_vec(),
        n: basis.n,
    })
}

/// Project a sample into the eigenspace: ωⱼ = uⱼ·Φ.
pub fn project(phi: &SampleVector, basis: &Eigenbasis) -> Result<WeightVector, EigenError> {
    if phi.len() != basis.n {
        return Err(EigenError::LengthMismatch { expected: basis.n, got: phi.len() });
    }
    let weights = basis.vectors.iter().map(|u| dot(u, phi.values())).collect();
    Ok(WeightVector { weights })
}

/// Rebuild the eigenspace representation Φ_v = Σⱼ ωⱼuⱼ.
///
/// The result has length n but its entries are not byte values; it is the
/// orthogonal projection of the original sample onto the basis span.
pub fn reconstruct(omega: &WeightVector, basis: &Eigenbasis) -> Result<Vec<f64>, EigenError> {
    if omega.len() != basis.m_prime() {
        return Err(EigenError::LengthMismatch { expected: basis.m_prime(), got: omega.len() });
    }
    let mut out = vec![0.0; basis.n];
    for (u, &w) in basis.vectors.iter().zip(omega.weights()) {
        for i in 0..basis.n {
            out[i] += w * u[i];
        }
    }
    Ok(out)
}
