//! Rao-Fisher geometry of the manifold of symmetric positive definite matrices.
//!
//! Points are [`SpdMatrix`] values, tangent vectors are symmetric matrices
//! attached to a base point. The metric is the affine-invariant one,
//! `<v,w>_Y = tr(Y^-1 v Y^-1 w)`, under which congruence transformations
//! `Y -> A^T Y A` and matrix inversion are isometries. All matrix functions
//! (square root, power, log, exp) go through the symmetric eigendecomposition.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Validation tolerances for manifold types.
///
/// Thresholds are relative to the scale of the input so that validation
/// survives congruence by ill-conditioned transforms.
#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    /// Relative symmetry tolerance: max |Y_ij - Y_ji| <= sym_tol * max |Y_ij|.
    pub sym_tol: f64,
    /// Positive definiteness floor, relative to the largest eigenvalue.
    pub pd_floor_rel: f64,
    /// Max-abs entrywise tolerance on U^T U - I for orthogonal factors.
    pub orth_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            sym_tol: 1e-9,
            pd_floor_rel: 1e-12,
            orth_tol: 1e-10,
        }
    }
}

/// A validated m x m symmetric positive definite matrix, a point of the manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix {
    mat: DMatrix<f64>,
}

/// Eigendecomposition of an SPD matrix together with its square-root factors.
///
/// Computed once and shared by the hot loops (distance, Log and Exp maps all
/// need `Y^{1/2}` and `Y^{-1/2}` of the same base point).
#[derive(Clone, Debug)]
pub(crate) struct SpdFactors {
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates `raw` with the default [`Tolerances`].
    pub fn new(raw: DMatrix<f64>) -> Result<Self> {
        validate_spd(raw, &Tolerances::default())
    }

    /// The m x m identity.
    pub fn identity(dim: usize) -> Self {
        SpdMatrix {
            mat: DMatrix::identity(dim, dim),
        }
    }

    /// Diagonal SPD matrix from strictly positive entries.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::EmptyInput("diagonal"));
        }
        if let Some(&bad) = diag.iter().find(|&&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: bad,
                floor: 0.0,
            });
        }
        Ok(SpdMatrix {
            mat: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        })
    }

    /// Rebuilds from eigenvectors `u` (columns) and strictly positive eigenvalues.
    ///
    /// Used internally where positivity holds by construction (e.g. results of
    /// the exponential map); only symmetrises, no revalidation.
    pub(crate) fn from_eigen_parts(u: &DMatrix<f64>, eigenvalues: &DVector<f64>) -> Self {
        let composed = u * DMatrix::from_diagonal(eigenvalues) * u.transpose();
        SpdMatrix {
            mat: symmetrize(&composed),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// Matrix inverse; stays on the manifold.
    pub fn inverse(&self) -> SpdMatrix {
        let se = self.mat.clone().symmetric_eigen();
        let inv_vals = se.eigenvalues.map(|l| 1.0 / l);
        SpdMatrix::from_eigen_parts(&se.eigenvectors, &inv_vals)
    }

    pub fn log_det(&self) -> f64 {
        let se = self.mat.clone().symmetric_eigen();
        se.eigenvalues.iter().map(|l| l.ln()).sum()
    }

    pub(crate) fn factors(&self) -> SpdFactors {
        let se = self.mat.clone().symmetric_eigen();
        let sqrt_vals = se.eigenvalues.map(|l| l.sqrt());
        let inv_sqrt_vals = se.eigenvalues.map(|l| 1.0 / l.sqrt());
        let u = &se.eigenvectors;
        SpdFactors {
            sqrt: symmetrize(&(u * DMatrix::from_diagonal(&sqrt_vals) * u.transpose())),
            inv_sqrt: symmetrize(&(u * DMatrix::from_diagonal(&inv_sqrt_vals) * u.transpose())),
        }
    }
}

/// A tangent vector: a symmetric matrix attached to a base point.
#[derive(Clone, Debug)]
pub struct TangentVector {
    base: SpdMatrix,
    value: DMatrix<f64>,
}

impl TangentVector {
    /// Validates symmetry of `value` (relative tolerance) and symmetrises it.
    pub fn new(base: SpdMatrix, value: DMatrix<f64>) -> Result<Self> {
        let tol = Tolerances::default();
        if value.nrows() != value.ncols() {
            return Err(Error::NotSquare {
                rows: value.nrows(),
                cols: value.ncols(),
            });
        }
        if value.nrows() != base.dim() {
            return Err(Error::DimensionMismatch {
                left: base.dim(),
                right: value.nrows(),
            });
        }
        let scale = value.amax();
        let asym = asymmetry(&value);
        if asym > tol.sym_tol * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotSymmetric {
                asymmetry: asym,
                tolerance: tol.sym_tol * scale,
            });
        }
        Ok(TangentVector {
            base,
            value: symmetrize(&value),
        })
    }

    pub(crate) fn from_symmetric(base: SpdMatrix, value: DMatrix<f64>) -> Self {
        TangentVector { base, value }
    }

    /// The zero vector at `base`.
    pub fn zero(base: SpdMatrix) -> Self {
        let m = base.dim();
        TangentVector {
            base,
            value: DMatrix::zeros(m, m),
        }
    }

    pub fn base(&self) -> &SpdMatrix {
        &self.base
    }

    pub fn value(&self) -> &DMatrix<f64> {
        &self.value
    }

    /// Metric norm at the base point, `sqrt(<v,v>_Y)`.
    pub fn norm(&self) -> f64 {
        metric_inner(&self.base, self, self)
            .expect("vector is attached to its own base")
            .sqrt()
    }

    pub fn scale(&self, factor: f64) -> TangentVector {
        TangentVector {
            base: self.base.clone(),
            value: &self.value * factor,
        }
    }
}

/// Polar coordinates of an SPD matrix: log-eigenvalues `r` and orthogonal `U`
/// such that `Y = U^T diag(e^r) U`.
#[derive(Clone, Debug)]
pub struct PolarCoordinates {
    log_eigenvalues: DVector<f64>,
    orthogonal: DMatrix<f64>,
}

impl PolarCoordinates {
    pub fn new(log_eigenvalues: DVector<f64>, orthogonal: DMatrix<f64>) -> Result<Self> {
        let m = log_eigenvalues.len();
        if orthogonal.nrows() != m || orthogonal.ncols() != m {
            return Err(Error::DimensionMismatch {
                left: m,
                right: orthogonal.nrows(),
            });
        }
        let tol = Tolerances::default();
        let dev = (orthogonal.transpose() * &orthogonal - DMatrix::identity(m, m)).amax();
        if dev > tol.orth_tol {
            return Err(Error::NotOrthogonal {
                deviation: dev,
                tolerance: tol.orth_tol,
            });
        }
        Ok(PolarCoordinates {
            log_eigenvalues,
            orthogonal,
        })
    }

    pub fn log_eigenvalues(&self) -> &DVector<f64> {
        &self.log_eigenvalues
    }

    pub fn orthogonal(&self) -> &DMatrix<f64> {
        &self.orthogonal
    }
}

/// Orthonormal basis of the tangent space at a point, `p = m(m+1)/2` vectors.
#[derive(Clone, Debug)]
pub struct TangentBasis {
    base: SpdMatrix,
    vectors: Vec<TangentVector>,
}

impl TangentBasis {
    pub fn base(&self) -> &SpdMatrix {
        &self.base
    }

    pub fn vectors(&self) -> &[TangentVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Components of `v` in this basis.
    pub fn components(&self, v: &TangentVector) -> Result<Vec<f64>> {
        self.vectors
            .iter()
            .map(|e| metric_inner(&self.base, v, e))
            .collect()
    }
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Validates a raw matrix as a point of the manifold.
///
/// Symmetrises inputs whose asymmetry is within tolerance and requires every
/// eigenvalue to exceed `pd_floor_rel` times the largest one.
pub fn validate_spd(raw: DMatrix<f64>, tol: &Tolerances) -> Result<SpdMatrix> {
    if raw.nrows() != raw.ncols() {
        return Err(Error::NotSquare {
            rows: raw.nrows(),
            cols: raw.ncols(),
        });
    }
    if raw.nrows() == 0 {
        return Err(Error::EmptyInput("matrix"));
    }
    let scale = raw.amax();
    let asym = asymmetry(&raw);
    if asym > tol.sym_tol * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric {
            asymmetry: asym,
            tolerance: tol.sym_tol * scale,
        });
    }
    let sym = symmetrize(&raw);
    let se = sym.clone().symmetric_eigen();
    let min_eig = se.eigenvalues.min();
    let max_eig = se.eigenvalues.max();
    let floor = tol.pd_floor_rel * max_eig.max(0.0);
    if !(max_eig > 0.0) || min_eig <= floor || !min_eig.is_finite() {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min_eig,
            floor,
        });
    }
    Ok(SpdMatrix { mat: sym })
}

fn check_same_dim(y: &SpdMatrix, z: &SpdMatrix) -> Result<()> {
    if y.dim() != z.dim() {
        return Err(Error::DimensionMismatch {
            left: y.dim(),
            right: z.dim(),
        });
    }
    Ok(())
}

/// Log-eigenvalues of `Y^{-1/2} Z Y^{-1/2}` given precomputed factors of Y.
fn relative_log_eigenvalues(factors: &SpdFactors, z: &SpdMatrix) -> DVector<f64> {
    let w = symmetrize(&(&factors.inv_sqrt * z.matrix() * &factors.inv_sqrt));
    w.symmetric_eigen().eigenvalues.map(|l| l.ln())
}

/// Rao's distance `d(Y,Z) = sqrt(sum_i log^2 lambda_i(Y^{-1/2} Z Y^{-1/2}))`.
pub fn rao_distance(y: &SpdMatrix, z: &SpdMatrix) -> Result<f64> {
    check_same_dim(y, z)?;
    Ok(rao_distance_from(&y.factors(), z))
}

pub(crate) fn rao_distance_from(factors: &SpdFactors, z: &SpdMatrix) -> f64 {
    relative_log_eigenvalues(factors, z)
        .iter()
        .map(|r| r * r)
        .sum::<f64>()
        .sqrt()
}

/// Geodesic `gamma(t) = Y^{1/2} (Y^{-1/2} Z Y^{-1/2})^t Y^{1/2}`, with
/// `gamma(0) = Y` and `gamma(1) = Z`.
pub fn geodesic(y: &SpdMatrix, z: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    check_same_dim(y, z)?;
    let f = y.factors();
    let w = symmetrize(&(&f.inv_sqrt * z.matrix() * &f.inv_sqrt));
    let se = w.symmetric_eigen();
    let powered = se.eigenvalues.map(|l| l.powf(t));
    let inner = &se.eigenvectors * DMatrix::from_diagonal(&powered) * se.eigenvectors.transpose();
    let composed = symmetrize(&(&f.sqrt * inner * &f.sqrt));
    let se_out = composed.clone().symmetric_eigen();
    Ok(SpdMatrix::from_eigen_parts(
        &se_out.eigenvectors,
        &se_out.eigenvalues.map(|l| l.max(f64::MIN_POSITIVE)),
    ))
}

/// Riemannian logarithm `Log_Y(Z) = Y^{1/2} log(Y^{-1/2} Z Y^{-1/2}) Y^{1/2}`.
///
/// Its metric norm at `Y` equals `rao_distance(Y, Z)`.
pub fn log_map(y: &SpdMatrix, z: &SpdMatrix) -> Result<TangentVector> {
    check_same_dim(y, z)?;
    Ok(log_map_from(&y.factors(), y, z))
}

pub(crate) fn log_map_from(factors: &SpdFactors, y: &SpdMatrix, z: &SpdMatrix) -> TangentVector {
    let w = symmetrize(&(&factors.inv_sqrt * z.matrix() * &factors.inv_sqrt));
    let se = w.symmetric_eigen();
    let logged = se.eigenvalues.map(|l| l.ln());
    let inner = &se.eigenvectors * DMatrix::from_diagonal(&logged) * se.eigenvectors.transpose();
    let value = symmetrize(&(&factors.sqrt * inner * &factors.sqrt));
    TangentVector::from_symmetric(y.clone(), value)
}

/// Riemannian exponential `Exp_Y(V) = Y^{1/2} exp(Y^{-1/2} V Y^{-1/2}) Y^{1/2}`,
/// inverse to [`log_map`].
pub fn exp_map(v: &TangentVector) -> SpdMatrix {
    exp_map_from(&v.base().factors(), v.value())
}

pub(crate) fn exp_map_from(factors: &SpdFactors, value: &DMatrix<f64>) -> SpdMatrix {
    let w = symmetrize(&(&factors.inv_sqrt * value * &factors.inv_sqrt));
    let se = w.symmetric_eigen();
    let exped = se.eigenvalues.map(|l| l.exp());
    let inner = &se.eigenvectors * DMatrix::from_diagonal(&exped) * se.eigenvectors.transpose();
    let composed = symmetrize(&(&factors.sqrt * inner * &factors.sqrt));
    let se_out = composed.clone().symmetric_eigen();
    SpdMatrix::from_eigen_parts(
        &se_out.eigenvectors,
        &se_out.eigenvalues.map(|l| l.max(f64::MIN_POSITIVE)),
    )
}

/// Rao-Fisher inner product `<v,w>_Y = tr(Y^-1 v Y^-1 w)` of two tangent
/// vectors attached to `y`.
pub fn metric_inner(y: &SpdMatrix, v: &TangentVector, w: &TangentVector) -> Result<f64> {
    let scale = y.matrix().amax().max(1.0);
    let same_base = |b: &SpdMatrix| (b.matrix() - y.matrix()).amax() <= 1e-12 * scale;
    if !same_base(v.base()) || !same_base(w.base()) {
        return Err(Error::BaseMismatch);
    }
    let f = y.factors();
    let a = symmetrize(&(&f.inv_sqrt * v.value() * &f.inv_sqrt));
    let b = symmetrize(&(&f.inv_sqrt * w.value() * &f.inv_sqrt));
    Ok((a * b).trace())
}

/// Congruence action `Y . A = A^T Y A` of an invertible matrix on the manifold.
pub fn congruence(y: &SpdMatrix, a: &DMatrix<f64>) -> Result<SpdMatrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.nrows() != y.dim() {
        return Err(Error::DimensionMismatch {
            left: y.dim(),
            right: a.nrows(),
        });
    }
    let det = a.determinant();
    let scale = a.amax();
    let singular_tol = 1e-12 * scale.powi(a.nrows() as i32);
    if !det.is_finite() || det.abs() <= singular_tol {
        return Err(Error::SingularTransform { det });
    }
    let transformed = symmetrize(&(a.transpose() * y.matrix() * a));
    let se = transformed.clone().symmetric_eigen();
    let min_eig = se.eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(Error::SingularTransform { det });
    }
    Ok(SpdMatrix::from_eigen_parts(
        &se.eigenvectors,
        &se.eigenvalues,
    ))
}

/// Recomposes `Y = U^T diag(e^r) U` from polar coordinates.
pub fn polar_compose(p: &PolarCoordinates) -> SpdMatrix {
    let u_t = p.orthogonal().transpose();
    let vals = p.log_eigenvalues().map(|r| r.exp());
    // columns of U^T are the eigenvectors
    SpdMatrix::from_eigen_parts(&u_t, &vals)
}

/// Spectral decomposition into polar coordinates.
///
/// Eigenvalues come out in descending order and each eigenvector's first
/// nonzero entry is made positive, fixing one representative among the
/// `m! 2^m` equivalent choices.
pub fn polar_decompose(y: &SpdMatrix) -> PolarCoordinates {
    let se = y.matrix().clone().symmetric_eigen();
    let m = y.dim();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[b]
            .partial_cmp(&se.eigenvalues[a])
            .expect("SPD eigenvalues are finite")
    });
    let mut r = DVector::zeros(m);
    let mut u = DMatrix::zeros(m, m);
    for (pos, &idx) in order.iter().enumerate() {
        r[pos] = se.eigenvalues[idx].ln();
        let col = se.eigenvectors.column(idx);
        let sign = col
            .iter()
            .find(|e| **e != 0.0)
            .map(|e| e.signum())
            .unwrap_or(1.0);
        // rows of U are the eigenvectors: Y = U^T diag(e^r) U
        for k in 0..m {
            u[(pos, k)] = sign * col[k];
        }
    }
    PolarCoordinates {
        log_eigenvalues: r,
        orthogonal: u,
    }
}

/// Orthonormal tangent basis at `y` for the Rao-Fisher inner product.
///
/// The basis at the identity ({E_ii} and {(E_ij + E_ji)/sqrt(2)}) is pushed
/// forward by congruence with `y^{1/2}`, which preserves the metric.
pub fn tangent_basis(y: &SpdMatrix) -> TangentBasis {
    let m = y.dim();
    let f = y.factors();
    let mut vectors = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        let mut e = DMatrix::zeros(m, m);
        e[(i, i)] = 1.0;
        let pushed = symmetrize(&(&f.sqrt * e * &f.sqrt));
        vectors.push(TangentVector::from_symmetric(y.clone(), pushed));
    }
    let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
    for i in 0..m {
        for j in (i + 1)..m {
            let mut e = DMatrix::zeros(m, m);
            e[(i, j)] = inv_sqrt2;
            e[(j, i)] = inv_sqrt2;
            let pushed = symmetrize(&(&f.sqrt * e * &f.sqrt));
            vectors.push(TangentVector::from_symmetric(y.clone(), pushed));
        }
    }
    TangentBasis {
        base: y.clone(),
        vectors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spd(entries: &[f64], m: usize) -> SpdMatrix {
        SpdMatrix::new(DMatrix::from_row_slice(m, m, entries)).unwrap()
    }

    #[test]
    fn validate_accepts_identity() {
        let y = SpdMatrix::new(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(y.matrix(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn validate_rejects_negative_eigenvalue() {
        let raw = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            SpdMatrix::new(raw),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn validate_symmetrises_sub_tolerance_asymmetry() {
        let raw = DMatrix::from_row_slice(2, 2, &[1.0, 1e-14, 0.0, 1.0]);
        let y = SpdMatrix::new(raw).unwrap();
        assert_eq!(y.matrix()[(0, 1)], y.matrix()[(1, 0)]);
        assert_relative_eq!(y.matrix()[(0, 1)], 5e-15, max_relative = 1e-12);
    }

    #[test]
    fn validate_rejects_gross_asymmetry() {
        let raw = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            SpdMatrix::new(raw),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn validate_rejects_non_square() {
        let raw = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(SpdMatrix::new(raw), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn distance_of_point_to_itself_is_zero() {
        let y = spd(&[2.0, 0.3, 0.3, 1.0], 2);
        assert!(rao_distance(&y, &y).unwrap() < 1e-12);
    }

    #[test]
    fn distance_diagonal_case() {
        let y = SpdMatrix::identity(2);
        let z = SpdMatrix::from_diagonal(&[f64::exp(2.0), 1.0]).unwrap();
        assert_relative_eq!(rao_distance(&y, &z).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn distance_dimension_mismatch() {
        let y = SpdMatrix::identity(2);
        let z = SpdMatrix::identity(3);
        assert!(matches!(
            rao_distance(&y, &z),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn geodesic_endpoints_and_midpoint() {
        let y = SpdMatrix::identity(2);
        let z = SpdMatrix::from_diagonal(&[f64::exp(2.0), 1.0]).unwrap();
        let g0 = geodesic(&y, &z, 0.0).unwrap();
        assert!((g0.matrix() - y.matrix()).amax() < 1e-12);
        let mid = geodesic(&y, &z, 0.5).unwrap();
        assert_relative_eq!(mid.matrix()[(0, 0)], f64::exp(1.0), epsilon = 1e-10);
        assert_relative_eq!(mid.matrix()[(1, 1)], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn log_map_at_identity_is_matrix_log() {
        let z = SpdMatrix::from_diagonal(&[f64::exp(1.5), f64::exp(-0.5)]).unwrap();
        let v = log_map(&SpdMatrix::identity(2), &z).unwrap();
        assert_relative_eq!(v.value()[(0, 0)], 1.5, epsilon = 1e-12);
        assert_relative_eq!(v.value()[(1, 1)], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn log_of_self_is_zero() {
        let y = spd(&[2.0, 0.4, 0.4, 1.3], 2);
        let v = log_map(&y, &y).unwrap();
        assert!(v.value().amax() < 1e-12);
    }

    #[test]
    fn exp_of_zero_is_base() {
        let y = spd(&[2.0, 0.4, 0.4, 1.3], 2);
        let out = exp_map(&TangentVector::zero(y.clone()));
        assert!((out.matrix() - y.matrix()).amax() < 1e-12);
    }

    #[test]
    fn exp_at_identity_is_matrix_exp() {
        let v = TangentVector::new(
            SpdMatrix::identity(2),
            DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, -0.2]),
        )
        .unwrap();
        let out = exp_map(&v);
        // compare against a truncated series for the matrix exponential
        let a = v.value().clone();
        let mut series = DMatrix::identity(2, 2);
        let mut term = DMatrix::identity(2, 2);
        for k in 1..30 {
            term = &term * &a / k as f64;
            series += &term;
        }
        assert!((out.matrix() - series).amax() < 1e-12);
    }

    #[test]
    fn metric_inner_at_identity_is_trace_product() {
        let y = SpdMatrix::identity(2);
        let v = TangentVector::new(
            y.clone(),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, -1.0]),
        )
        .unwrap();
        let self_inner = metric_inner(&y, &v, &v).unwrap();
        let expected = (v.value() * v.value()).trace();
        assert_relative_eq!(self_inner, expected, epsilon = 1e-12);
    }

    #[test]
    fn metric_inner_symmetric_in_arguments() {
        let y = spd(&[2.0, 0.3, 0.3, 1.5], 2);
        let v = TangentVector::new(
            y.clone(),
            DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.1, 0.4]),
        )
        .unwrap();
        let w = TangentVector::new(
            y.clone(),
            DMatrix::from_row_slice(2, 2, &[-0.3, 0.2, 0.2, 0.1]),
        )
        .unwrap();
        assert_eq!(
            metric_inner(&y, &v, &w).unwrap(),
            metric_inner(&y, &w, &v).unwrap()
        );
    }

    #[test]
    fn metric_inner_base_mismatch() {
        let y = spd(&[2.0, 0.3, 0.3, 1.5], 2);
        let v = TangentVector::zero(y.clone());
        let w = TangentVector::zero(SpdMatrix::identity(2));
        assert!(matches!(
            metric_inner(&y, &v, &w),
            Err(Error::BaseMismatch)
        ));
    }

    #[test]
    fn congruence_identity_action() {
        let y = spd(&[2.0, 0.3, 0.3, 1.5], 2);
        let out = congruence(&y, &DMatrix::identity(2, 2)).unwrap();
        assert!((out.matrix() - y.matrix()).amax() < 1e-12);
    }

    #[test]
    fn congruence_right_action_law() {
        let y = spd(&[2.0, 0.3, 0.3, 1.5], 2);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.7, -0.2, 1.4]);
        let b = DMatrix::from_row_slice(2, 2, &[0.6, -0.3, 0.5, 1.1]);
        let lhs = congruence(&congruence(&y, &a).unwrap(), &b).unwrap();
        let rhs = congruence(&y, &(&a * &b)).unwrap();
        assert!((lhs.matrix() - rhs.matrix()).amax() < 1e-10);
    }

    #[test]
    fn congruence_sqrt_translates_identity() {
        let ybar = spd(&[2.0, 0.5, 0.5, 1.2], 2);
        let out = congruence(&SpdMatrix::identity(2), &ybar.factors().sqrt).unwrap();
        assert!((out.matrix() - ybar.matrix()).amax() < 1e-10);
    }

    #[test]
    fn congruence_rejects_singular() {
        let y = SpdMatrix::identity(2);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, 1.0]);
        assert!(matches!(
            congruence(&y, &a),
            Err(Error::SingularTransform { .. })
        ));
    }

    #[test]
    fn polar_zero_log_eigenvalues_give_identity() {
        let u = DMatrix::from_row_slice(
            2,
            2,
            &[
                0.6,
                0.8,
                -0.8,
                0.6,
            ],
        );
        let p = PolarCoordinates::new(DVector::zeros(2), u).unwrap();
        let y = polar_compose(&p);
        assert!((y.matrix() - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn polar_decompose_diagonal_orders_descending() {
        let y = SpdMatrix::from_diagonal(&[f64::exp(1.0), f64::exp(2.0)]).unwrap();
        let p = polar_decompose(&y);
        assert_relative_eq!(p.log_eigenvalues()[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(p.log_eigenvalues()[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn polar_roundtrip() {
        let y = spd(&[2.0, 0.3, 0.3, 1.5], 2);
        let back = polar_compose(&polar_decompose(&y));
        assert!((back.matrix() - y.matrix()).amax() < 1e-10);
    }

    #[test]
    fn tangent_basis_orthonormal_at_identity() {
        let y = SpdMatrix::identity(3);
        let basis = tangent_basis(&y);
        assert_eq!(basis.len(), 6);
        for (a, ea) in basis.vectors().iter().enumerate() {
            for (b, eb) in basis.vectors().iter().enumerate() {
                let inner = metric_inner(&y, ea, eb).unwrap();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((inner - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tangent_basis_gram_identity_at_general_point() {
        let y = spd(&[2.0, 0.4, 0.4, 1.2], 2);
        let basis = tangent_basis(&y);
        for (a, ea) in basis.vectors().iter().enumerate() {
            for (b, eb) in basis.vectors().iter().enumerate() {
                let inner = metric_inner(&y, ea, eb).unwrap();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((inner - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tangent_basis_component_recovery() {
        let y = spd(&[2.0, 0.4, 0.4, 1.2], 2);
        let basis = tangent_basis(&y);
        let v = TangentVector::new(
            y.clone(),
            DMatrix::from_row_slice(2, 2, &[0.3, -0.2, -0.2, 0.7]),
        )
        .unwrap();
        let comps = basis.components(&v).unwrap();
        let mut rebuilt = DMatrix::zeros(2, 2);
        for (c, e) in comps.iter().zip(basis.vectors()) {
            rebuilt += e.value() * *c;
        }
        assert!((rebuilt - v.value()).amax() < 1e-10);
    }
}
