//! Maximum-likelihood estimation for a single Riemannian Gaussian.
//!
//! The centre-of-mass estimate is the minimiser of the weighted sum of
//! squared Rao distances, computed by Riemannian gradient descent with
//! Armijo backtracking: the descent direction at the current iterate is
//! `Delta = sum_n w_n Log(Y_n)` and the update goes through the exponential
//! map. The dispersion estimate solves `g(sigma) = dispersion` through the
//! tabulated `Phi` function.

use nalgebra::DMatrix;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::manifold::{self, SpdMatrix, TangentVector};
use crate::normalization::ZetaTable;
use crate::sampler::{sample_gaussian, SamplerConfig};

/// Parameters of one Riemannian Gaussian `G(mean, sigma)`.
#[derive(Clone, Debug)]
pub struct GaussianParams {
    mean: SpdMatrix,
    sigma: f64,
}

impl GaussianParams {
    pub fn new(mean: SpdMatrix, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidSigma(sigma));
        }
        Ok(GaussianParams { mean, sigma })
    }

    pub fn mean(&self) -> &SpdMatrix {
        &self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Armijo backtracking settings.
#[derive(Clone, Copy, Debug)]
pub struct ArmijoOptions {
    pub initial_step: f64,
    pub shrink: f64,
    pub slope: f64,
}

impl Default for ArmijoOptions {
    fn default() -> Self {
        ArmijoOptions {
            initial_step: 1.0,
            shrink: 0.5,
            slope: 1e-4,
        }
    }
}

/// Stopping rules for the centre-of-mass solver.
#[derive(Clone, Copy, Debug)]
pub struct MeanSolverOptions {
    /// Stop when the metric norm of the descent direction drops below this.
    pub epsilon: f64,
    pub max_iters: usize,
    pub armijo: ArmijoOptions,
}

impl Default for MeanSolverOptions {
    fn default() -> Self {
        MeanSolverOptions {
            epsilon: 1e-8,
            max_iters: 200,
            armijo: ArmijoOptions::default(),
        }
    }
}

impl MeanSolverOptions {
    fn validate(&self) -> Result<()> {
        let a = &self.armijo;
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be > 0".into()));
        }
        if !(a.shrink > 0.0 && a.shrink < 1.0) {
            return Err(Error::InvalidArgument("armijo shrink must be in (0,1)".into()));
        }
        if !(a.slope > 0.0 && a.slope < 0.5) {
            return Err(Error::InvalidArgument(
                "armijo slope must be in (0, 1/2)".into(),
            ));
        }
        if !(a.initial_step > 0.0) {
            return Err(Error::InvalidArgument("armijo step must be > 0".into()));
        }
        Ok(())
    }
}

fn check_points(points: &[SpdMatrix], weights: &[f64]) -> Result<usize> {
    let first = points.first().ok_or(Error::EmptyInput("points"))?;
    let m = first.dim();
    if let Some(bad) = points.iter().find(|p| p.dim() != m) {
        return Err(Error::DimensionMismatch {
            left: m,
            right: bad.dim(),
        });
    }
    if weights.len() != points.len() {
        return Err(Error::DimensionMismatch {
            left: points.len(),
            right: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument("weights must be >= 0".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "weights must sum to 1 (got {total})"
        )));
    }
    Ok(m)
}

/// One full pass over the data at base point `x`: the Riemannian logs, the
/// squared distances they imply, and the weighted dispersion.
struct Pass {
    factors: manifold::SpdFactors,
    logs: Vec<DMatrix<f64>>,
    cost: f64,
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn pass_at(x: &SpdMatrix, points: &[SpdMatrix], weights: &[f64]) -> Pass {
    let factors = x.factors();
    let mut logs = Vec::with_capacity(points.len());
    let mut cost = 0.0;
    for (p, w) in points.iter().zip(weights) {
        let inner = symmetrize(&(&factors.inv_sqrt * p.matrix() * &factors.inv_sqrt));
        let se = inner.symmetric_eigen();
        let log_vals = se.eigenvalues.map(|l| l.ln());
        cost += w * log_vals.iter().map(|r| r * r).sum::<f64>();
        let log_inner = &se.eigenvectors
            * DMatrix::from_diagonal(&log_vals)
            * se.eigenvectors.transpose();
        logs.push(symmetrize(&(&factors.sqrt * log_inner * &factors.sqrt)));
    }
    Pass {
        factors,
        logs,
        cost,
    }
}

/// Index of the point with the smallest sum of squared distances to a set of
/// anchor points. Anchors are a deterministic stride subsample (all points
/// when there are at most 64), which keeps initialisation linear in N while
/// staying inside the data cloud; the minimiser itself is unique regardless
/// of where the descent starts.
pub(crate) fn least_dispersion_index(points: &[SpdMatrix]) -> usize {
    let n = points.len();
    if n == 1 {
        return 0;
    }
    let anchor_count = n.min(64);
    let stride = n.div_ceil(anchor_count);
    let anchors: Vec<&SpdMatrix> = points.iter().step_by(stride).collect();
    let factors: Vec<manifold::SpdFactors> = anchors.iter().map(|a| a.factors()).collect();
    let mut best = (0usize, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let mut total = 0.0;
        for f in &factors {
            let d = manifold::rao_distance_from(f, p);
            total += d * d;
        }
        if total < best.1 {
            best = (i, total);
        }
    }
    best.0
}

/// Weighted Riemannian centre of mass (Fréchet mean) of SPD points.
///
/// Converges to the unique global minimiser of the weighted sum of squared
/// Rao distances; stops when the metric norm of the weighted-log direction
/// falls below `opts.epsilon`.
pub fn frechet_mean(
    points: &[SpdMatrix],
    weights: &[f64],
    opts: &MeanSolverOptions,
) -> Result<SpdMatrix> {
    let init = points[least_dispersion_index(points).min(points.len().saturating_sub(1))].clone();
    frechet_mean_with_init(points, weights, init, opts)
}

/// Same as [`frechet_mean`] but starting the descent from `init`.
pub fn frechet_mean_with_init(
    points: &[SpdMatrix],
    weights: &[f64],
    init: SpdMatrix,
    opts: &MeanSolverOptions,
) -> Result<SpdMatrix> {
    let m = check_points(points, weights)?;
    if init.dim() != m {
        return Err(Error::DimensionMismatch {
            left: m,
            right: init.dim(),
        });
    }
    opts.validate()?;

    let mut x = init;
    let mut pass = pass_at(&x, points, weights);
    let mut grad_norm = 0.0;
    for _ in 0..opts.max_iters {
        let mut direction = DMatrix::zeros(m, m);
        for (log, w) in pass.logs.iter().zip(weights) {
            direction += log * *w;
        }
        let reduced = symmetrize(&(&pass.factors.inv_sqrt * &direction * &pass.factors.inv_sqrt));
        grad_norm = reduced.norm(); // Frobenius norm of Y^{-1/2} D Y^{-1/2}
        if grad_norm <= opts.epsilon {
            return Ok(x);
        }

        // Armijo backtracking on E(x) with grad E = -2 direction
        let mut tau = opts.armijo.initial_step;
        loop {
            let candidate = manifold::exp_map_from(&pass.factors, &(&direction * tau));
            let cand_pass = pass_at(&candidate, points, weights);
            if cand_pass.cost
                <= pass.cost - 2.0 * opts.armijo.slope * tau * grad_norm * grad_norm
            {
                x = candidate;
                pass = cand_pass;
                break;
            }
            tau *= opts.armijo.shrink;
            if tau < 1e-16 {
                return Err(Error::MaxItersExceeded {
                    iters: opts.max_iters,
                    grad_norm,
                    best: Box::new(x),
                });
            }
        }
    }
    Err(Error::MaxItersExceeded {
        iters: opts.max_iters,
        grad_norm,
        best: Box::new(x),
    })
}

/// Weighted empirical dispersion `sum_n w_n d^2(y, Y_n)`.
pub fn empirical_dispersion(points: &[SpdMatrix], weights: &[f64], y: &SpdMatrix) -> Result<f64> {
    let m = check_points(points, weights)?;
    if y.dim() != m {
        return Err(Error::DimensionMismatch {
            left: m,
            right: y.dim(),
        });
    }
    let factors = y.factors();
    let mut acc = 0.0;
    for (p, w) in points.iter().zip(weights) {
        let d = manifold::rao_distance_from(&factors, p);
        acc += w * d * d;
    }
    Ok(acc)
}

/// Maximum-likelihood fit of a single Gaussian: the Fréchet mean plus the
/// dispersion parameter solving `sigma^3 dlog zeta/dsigma = dispersion`.
pub fn fit_gaussian(
    points: &[SpdMatrix],
    table: &ZetaTable,
    opts: &MeanSolverOptions,
) -> Result<GaussianParams> {
    let first = points.first().ok_or(Error::EmptyInput("points"))?;
    if first.dim() != table.dim() {
        return Err(Error::DimensionMismatch {
            left: first.dim(),
            right: table.dim(),
        });
    }
    let weights = vec![1.0 / points.len() as f64; points.len()];
    let mean = frechet_mean(points, &weights, opts)?;
    let dispersion = empirical_dispersion(points, &weights, &mean)?;
    let sigma = table.phi(dispersion)?;
    GaussianParams::new(mean, sigma)
}

/// Log of the Gaussian density: `-log zeta(sigma) - d^2(y, mean) / 2 sigma^2`.
///
/// The normalising factor is read from the table, which depends on sigma
/// only; the centre of mass enters through the distance alone.
pub fn log_density(y: &SpdMatrix, params: &GaussianParams, table: &ZetaTable) -> Result<f64> {
    if y.dim() != table.dim() || y.dim() != params.mean().dim() {
        return Err(Error::DimensionMismatch {
            left: y.dim(),
            right: table.dim(),
        });
    }
    let d = manifold::rao_distance(params.mean(), y)?;
    let s = params.sigma();
    Ok(-table.log_zeta(s)? - d * d / (2.0 * s * s))
}

/// Result of the likelihood-ratio test of `H0: mean = y0` against the
/// unrestricted alternative, with sigma unknown under both hypotheses.
#[derive(Clone, Debug)]
pub struct LrtResult {
    /// Log-likelihood ratio statistic `T >= 0`.
    pub statistic: f64,
    pub dispersion_at_mle: f64,
    pub dispersion_at_null: f64,
    /// Degrees of freedom `p = m(m+1)/2` of the Wilks limit `2T ~ chi^2_p`.
    pub dof: usize,
    pub p_value: f64,
}

/// Likelihood-ratio test against a fixed centre of mass.
///
/// Both dispersions are profiled out through `Phi`; the p-value uses the
/// Wilks limit `2T ~ chi^2_p` with `p = m(m+1)/2`.
pub fn lrt_test(
    points: &[SpdMatrix],
    y0: &SpdMatrix,
    table: &ZetaTable,
    opts: &MeanSolverOptions,
) -> Result<LrtResult> {
    let n = points.len();
    if n < 2 {
        return Err(Error::EmptyInput("need at least two points"));
    }
    let weights = vec![1.0 / n as f64; n];
    let mean = frechet_mean(points, &weights, opts)?;
    let disp_mle = empirical_dispersion(points, &weights, &mean)?;
    let disp_null = empirical_dispersion(points, &weights, y0)?;
    let sigma_mle = table.phi(disp_mle)?;
    let sigma_null = table.phi(disp_null)?;
    let nf = n as f64;
    let statistic = nf * (table.log_zeta(sigma_null)? - table.log_zeta(sigma_mle)?)
        + nf * disp_null / (2.0 * sigma_null * sigma_null)
        - nf * disp_mle / (2.0 * sigma_mle * sigma_mle);
    let m = y0.dim();
    let dof = m * (m + 1) / 2;
    let chi2 = ChiSquared::new(dof as f64)
        .map_err(|e| Error::InvalidArgument(format!("chi-squared dof: {e}")))?;
    let p_value = 1.0 - chi2.cdf((2.0 * statistic).max(0.0));
    Ok(LrtResult {
        statistic,
        dispersion_at_mle: disp_mle,
        dispersion_at_null: disp_null,
        dof,
        p_value,
    })
}

/// Likelihood-ratio statistic when sigma is known: the scaled difference of
/// dispersions away from the null centre versus away from the MLE.
pub fn lrt_statistic_known_sigma(
    points: &[SpdMatrix],
    y0: &SpdMatrix,
    sigma0: f64,
    opts: &MeanSolverOptions,
) -> Result<f64> {
    if !(sigma0 > 0.0) || !sigma0.is_finite() {
        return Err(Error::InvalidSigma(sigma0));
    }
    let n = points.len();
    if n < 2 {
        return Err(Error::EmptyInput("need at least two points"));
    }
    let weights = vec![1.0 / n as f64; n];
    let mean = frechet_mean(points, &weights, opts)?;
    let disp_mle = empirical_dispersion(points, &weights, &mean)?;
    let disp_null = empirical_dispersion(points, &weights, y0)?;
    Ok(n as f64 * (disp_null - disp_mle) / (2.0 * sigma0 * sigma0))
}

/// Monte-Carlo estimate of the `p x p` matrix `C` of the asymptotic-normality
/// law: `C_ab = 4 E[Delta_a Delta_b]` with `Delta_a` the components of
/// `Log(Z)` at the centre of mass in an orthonormal tangent basis.
pub fn asymptotic_covariance<R: Rng + ?Sized>(
    params: &GaussianParams,
    n_mc: usize,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n_mc == 0 {
        return Err(Error::EmptyInput("n_mc"));
    }
    let mean = params.mean();
    let factors = mean.factors();
    let basis = manifold::tangent_basis(mean);
    let p = basis.len();
    // reduce the basis once: <v, e>_Y = tr[(Y^{-1/2} v Y^{-1/2})(Y^{-1/2} e Y^{-1/2})]
    let reduced_basis: Vec<DMatrix<f64>> = basis
        .vectors()
        .iter()
        .map(|e| symmetrize(&(&factors.inv_sqrt * e.value() * &factors.inv_sqrt)))
        .collect();

    let draws = sample_gaussian(params, n_mc, config, rng)?;
    let mut c = DMatrix::zeros(p, p);
    let mut comps = vec![0.0f64; p];
    for z in &draws {
        let log = manifold::log_map_from(&factors, mean, z);
        let reduced = symmetrize(&(&factors.inv_sqrt * log.value() * &factors.inv_sqrt));
        for (a, e) in reduced_basis.iter().enumerate() {
            comps[a] = (&reduced * e).trace();
        }
        for a in 0..p {
            for b in a..p {
                c[(a, b)] += 4.0 * comps[a] * comps[b];
            }
        }
    }
    let nf = n_mc as f64;
    for a in 0..p {
        for b in a..p {
            let v = c[(a, b)] / nf;
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    Ok(c)
}

/// Components of `Log_mean(z)` in the orthonormal tangent basis at `mean`.
pub fn tangent_components(mean: &SpdMatrix, z: &SpdMatrix) -> Result<Vec<f64>> {
    let basis = manifold::tangent_basis(mean);
    let v: TangentVector = manifold::log_map(mean, z)?;
    basis.components(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{geodesic, rao_distance};
    use crate::normalization::ZetaTable;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn small_table() -> &'static ZetaTable {
        static TABLE: OnceLock<ZetaTable> = OnceLock::new();
        TABLE.get_or_init(|| ZetaTable::build(2, 0.05, 2.5, 32, 150_000, 123).unwrap().0)
    }

    fn diag(entries: &[f64]) -> SpdMatrix {
        SpdMatrix::from_diagonal(entries).unwrap()
    }

    #[test]
    fn mean_of_single_point_is_that_point() {
        let y = diag(&[2.0, 0.5]);
        let out = frechet_mean(&[y.clone()], &[1.0], &MeanSolverOptions::default()).unwrap();
        assert!((out.matrix() - y.matrix()).amax() < 1e-12);
    }

    #[test]
    fn mean_of_two_points_is_geodesic_midpoint() {
        let y = diag(&[1.0, 1.0]);
        let z = SpdMatrix::new(nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[2.0, 0.6, 0.6, 1.4],
        ))
        .unwrap();
        let mean = frechet_mean(
            &[y.clone(), z.clone()],
            &[0.5, 0.5],
            &MeanSolverOptions::default(),
        )
        .unwrap();
        let midpoint = geodesic(&y, &z, 0.5).unwrap();
        assert!(rao_distance(&mean, &midpoint).unwrap() < 1e-8);
    }

    #[test]
    fn mean_of_commuting_points_is_geometric_mean() {
        let a = diag(&[1.0, 4.0]);
        let b = diag(&[9.0, 1.0]);
        let mean = frechet_mean(&[a, b], &[0.5, 0.5], &MeanSolverOptions::default()).unwrap();
        assert_relative_eq!(mean.matrix()[(0, 0)], 3.0, epsilon = 1e-7);
        assert_relative_eq!(mean.matrix()[(1, 1)], 2.0, epsilon = 1e-7);
    }

    #[test]
    fn dispersion_trivial_cases() {
        let y = diag(&[2.0, 1.0]);
        let z = diag(&[4.0, 1.0]);
        assert!(empirical_dispersion(&[y.clone()], &[1.0], &y).unwrap() < 1e-30);
        let d = rao_distance(&y, &z).unwrap();
        assert_relative_eq!(
            empirical_dispersion(&[z.clone()], &[1.0], &y).unwrap(),
            d * d,
            epsilon = 1e-12
        );
    }

    #[test]
    fn dispersion_is_minimal_at_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let params = GaussianParams::new(SpdMatrix::identity(2), 0.4).unwrap();
        let points =
            sample_gaussian(&params, 40, &SamplerConfig::default(), &mut rng).unwrap();
        let w = vec![1.0 / 40.0; 40];
        let mean = frechet_mean(&points, &w, &MeanSolverOptions::default()).unwrap();
        let at_mean = empirical_dispersion(&points, &w, &mean).unwrap();
        let basis = manifold::tangent_basis(&mean);
        for k in 0..20 {
            let dir = &basis.vectors()[k % basis.len()];
            let eps = 0.05 * (1.0 + (k as f64 % 3.0));
            let probe = manifold::exp_map(&dir.scale(eps));
            let there = empirical_dispersion(&points, &w, &probe).unwrap();
            assert!(there >= at_mean - 1e-12);
        }
    }

    #[test]
    fn fit_rejects_degenerate_dispersion() {
        let y = diag(&[2.0, 1.0]);
        let out = fit_gaussian(
            &[y.clone(), y.clone()],
            small_table(),
            &MeanSolverOptions::default(),
        );
        assert!(matches!(out, Err(Error::OutOfTableRange { .. })));
    }

    #[test]
    fn log_density_at_centre_is_minus_log_zeta() {
        let table = small_table();
        let params = GaussianParams::new(SpdMatrix::identity(2), 1.0).unwrap();
        let ld = log_density(&SpdMatrix::identity(2), &params, table).unwrap();
        // analytic zeta(1) for m = 2 is 10.526016704839462
        assert!(
            (ld + 10.526016704839462f64.ln()).abs() < 0.01,
            "log density {ld}"
        );
    }

    #[test]
    fn log_density_invariant_under_congruence() {
        let table = small_table();
        let ybar = diag(&[2.0, 0.7]);
        let y = SpdMatrix::new(nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[1.5, 0.2, 0.2, 0.9],
        ))
        .unwrap();
        let a = nalgebra::DMatrix::from_row_slice(2, 2, &[1.1, 0.4, -0.3, 0.9]);
        let params = GaussianParams::new(ybar.clone(), 0.8).unwrap();
        let params_t =
            GaussianParams::new(manifold::congruence(&ybar, &a).unwrap(), 0.8).unwrap();
        let lhs = log_density(&y, &params, table).unwrap();
        let rhs = log_density(&manifold::congruence(&y, &a).unwrap(), &params_t, table).unwrap();
        assert!((lhs - rhs).abs() < 1e-8);
    }

    #[test]
    fn lrt_zero_at_mle_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = GaussianParams::new(SpdMatrix::identity(2), 0.4).unwrap();
        let points =
            sample_gaussian(&params, 60, &SamplerConfig::default(), &mut rng).unwrap();
        let w = vec![1.0 / 60.0; 60];
        let mean = frechet_mean(&points, &w, &MeanSolverOptions::default()).unwrap();
        let at_mle = lrt_test(&points, &mean, small_table(), &MeanSolverOptions::default())
            .unwrap();
        assert!(at_mle.statistic.abs() < 1e-6, "T = {}", at_mle.statistic);
        let far = lrt_test(
            &points,
            &diag(&[6.0, 0.2]),
            small_table(),
            &MeanSolverOptions::default(),
        )
        .unwrap();
        assert!(far.statistic >= -1e-9);
        assert!(far.statistic > at_mle.statistic);
        assert!(far.p_value >= 0.0 && far.p_value <= 1.0);
        assert_eq!(far.dof, 3);
    }

    #[test]
    fn known_sigma_statistic_nonnegative_and_zero_at_mle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = GaussianParams::new(SpdMatrix::identity(2), 0.3).unwrap();
        let points =
            sample_gaussian(&params, 50, &SamplerConfig::default(), &mut rng).unwrap();
        let w = vec![1.0 / 50.0; 50];
        let mean = frechet_mean(&points, &w, &MeanSolverOptions::default()).unwrap();
        let t0 = lrt_statistic_known_sigma(&points, &mean, 0.3, &MeanSolverOptions::default())
            .unwrap();
        assert!(t0.abs() < 1e-9);
        let t1 = lrt_statistic_known_sigma(
            &points,
            &diag(&[3.0, 0.3]),
            0.3,
            &MeanSolverOptions::default(),
        )
        .unwrap();
        assert!(t1 > 0.0);
    }

    #[test]
    fn asymptotic_covariance_symmetric_and_near_small_sigma_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let sigma = 0.05;
        let params = GaussianParams::new(diag(&[1.5, 0.8]), sigma).unwrap();
        let c = asymptotic_covariance(&params, 20_000, &SamplerConfig::default(), &mut rng)
            .unwrap();
        assert_eq!(c, c.transpose());
        let expected = 4.0 * sigma * sigma;
        for a in 0..3 {
            for b in 0..3 {
                let target = if a == b { expected } else { 0.0 };
                assert!(
                    (c[(a, b)] - target).abs() < 0.1 * expected,
                    "C[{a},{b}] = {} target {target}",
                    c[(a, b)]
                );
            }
        }
    }
}
