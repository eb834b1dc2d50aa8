//! The normalising factor `zeta(sigma)` of the Riemannian Gaussian density.
//!
//! `zeta` depends on the dispersion parameter only, never on the centre of
//! mass, so it can be tabulated once per matrix dimension. The table stores
//! `log zeta` and its sigma-derivative on a grid; the latter backs the `Phi`
//! function (inverse of `g(sigma) = sigma^3 dlog zeta/dsigma`) which maps an
//! empirical dispersion to the maximum-likelihood dispersion parameter.
//!
//! For m = 1 the factor is `sqrt(2 pi) sigma` exactly; for m = 2 there is a
//! closed form involving the error function. For general m the m-fold
//! integral is evaluated by importance-sampled Monte Carlo: the Gaussian
//! factor of the integrand is matched exactly by an `N(0, sigma^2 I_m)`
//! proposal, leaving the positive weight `prod_{i<j} sinh(|r_i - r_j|/2)`.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erf;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;

/// Default sigma grid used by the CLI: geometric spacing on [0.05, 3.0].
pub const DEFAULT_SIGMA_MIN: f64 = 0.05;
pub const DEFAULT_SIGMA_MAX: f64 = 3.0;
pub const DEFAULT_GRID_SIZE: usize = 64;
pub const DEFAULT_MC_SAMPLES: u64 = 1_000_000;

/// Per-point Monte Carlo relative standard errors above this are refused.
pub const MAX_REL_STD_ERROR: f64 = 0.02;

const MC_CHUNK: u64 = 16_384;

/// Natural log of the multivariate Gamma function,
/// `Gamma_m(a) = pi^{m(m-1)/4} prod_{i=1..m} Gamma(a - (i-1)/2)`.
pub fn multivariate_ln_gamma(m: usize, a: f64) -> f64 {
    let mf = m as f64;
    let mut acc = mf * (mf - 1.0) / 4.0 * std::f64::consts::PI.ln();
    for i in 1..=m {
        acc += ln_gamma(a - (i as f64 - 1.0) / 2.0);
    }
    acc
}

/// Volume of the orthogonal group O(m),
/// `omega_m = 2^m pi^{m^2/2} / Gamma_m(m/2)`.
pub fn orthogonal_volume(m: usize) -> f64 {
    let mf = m as f64;
    let ln = mf * 2.0f64.ln() + mf * mf / 2.0 * std::f64::consts::PI.ln()
        - multivariate_ln_gamma(m, mf / 2.0);
    ln.exp()
}

/// Log of the constant in front of the eigenvalue integral.
///
/// `(m! 2^m)^{-1} omega_m (8/pi)^{m(m-1)/4}`: the first factor cancels the
/// eigenvalue-ordering and sign ambiguity of polar coordinates, the second is
/// the orthogonal-group volume, and the power of 8/pi carries the polar
/// volume element in the convention that makes the m = 1 and m = 2 closed
/// forms come out as `sqrt(2 pi) sigma` and the erf expression below.
fn ln_prefactor(m: usize) -> f64 {
    let mf = m as f64;
    let mut ln_m_factorial = 0.0;
    for k in 2..=m {
        ln_m_factorial += (k as f64).ln();
    }
    -ln_m_factorial - mf * 2.0f64.ln()
        + (mf * 2.0f64.ln() + mf * mf / 2.0 * std::f64::consts::PI.ln()
            - multivariate_ln_gamma(m, mf / 2.0))
        + mf * (mf - 1.0) / 4.0 * (8.0 / std::f64::consts::PI).ln()
}

/// Closed form for m = 2: `zeta(sigma) = (2 pi)^{3/2} sigma^2 e^{sigma^2/4} erf(sigma/2)`.
pub fn zeta_analytic_m2(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidSigma(sigma));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok(two_pi.powf(1.5) * sigma * sigma * (sigma * sigma / 4.0).exp() * erf(sigma / 2.0))
}

/// Analytic `d log zeta / d sigma` for m = 2.
pub fn dlog_zeta_dsigma_m2(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidSigma(sigma));
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    Ok(2.0 / sigma + sigma / 2.0 + (-sigma * sigma / 4.0).exp() / (sqrt_pi * erf(sigma / 2.0)))
}

/// Accumulates the weight `prod_{i<j} sinh(sigma |z_i - z_j| / 2)` statistics
/// for one deterministic chunk of standard-normal draws.
struct ChunkStats {
    sum: f64,
    sum_sq: f64,
    count: u64,
}

fn weight_chunk(m: usize, sigma: f64, chunk_index: u64, seed: u64, n: u64) -> ChunkStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk_index + 1);
    let mut z = vec![0.0f64; m];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let mut w = 1.0f64;
        for i in 0..m {
            for j in (i + 1)..m {
                w *= (sigma * (z[i] - z[j]).abs() / 2.0).sinh();
            }
        }
        sum += w;
        sum_sq += w * w;
    }
    ChunkStats {
        sum,
        sum_sq,
        count: n,
    }
}

/// Monte Carlo estimate of `zeta(sigma)` with its standard error.
///
/// Deterministic for a fixed seed: samples are drawn in fixed-size chunks,
/// each chunk on its own counter-derived stream, and reduced in chunk order.
pub fn zeta_mc(m: usize, sigma: f64, n_samples: u64, seed: u64) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidSigma(sigma));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut done = 0u64;
    let mut chunk_index = 0u64;
    while done < n_samples {
        let n = MC_CHUNK.min(n_samples - done);
        let stats = weight_chunk(m, sigma, chunk_index, seed, n);
        sum += stats.sum;
        sum_sq += stats.sum_sq;
        done += stats.count;
        chunk_index += 1;
    }
    let nf = n_samples as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0);
    let se_mean = (var / nf).sqrt();
    let mf = m as f64;
    let scale =
        (ln_prefactor(m) + mf / 2.0 * (2.0 * std::f64::consts::PI * sigma * sigma).ln()).exp();
    Ok((scale * mean, scale * se_mean))
}

/// Tabulated `log zeta(sigma)` and `d log zeta / d sigma` on a sigma grid,
/// for one matrix dimension.
///
/// Evaluation is anchored to the first grid point: `log zeta(sigma)` is the
/// stored value there plus the closed-form integral of the interpolated
/// `g(s) / s^3`. This makes the evaluated likelihood an exact antiderivative
/// of the curve Phi inverts, which is what keeps the EM objective monotone
/// to solver precision.
#[derive(Clone, Debug)]
pub struct ZetaTable {
    dim: usize,
    sigma_grid: Vec<f64>,
    log_zeta: Vec<f64>,
    dlog_zeta_dsigma: Vec<f64>,
    mc_samples: u64,
    seed: u64,
    g_interp: MonotoneCubic,
}

/// Integral of `p(s)/s^3` over `[a, b]` where `p` is the piecewise cubic.
///
/// Each Hermite segment expands to a monomial cubic in s, so the integrand
/// has the exact antiderivative
/// `-alpha/(2 s^2) - beta/s + gamma ln(s) + delta s`.
fn integral_over_cubed(interp: &MonotoneCubic, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (xs, ys, ds) = interp.knots();
    let mut total = 0.0;
    for i in 0..xs.len() - 1 {
        let (x0, x1) = (xs[i], xs[i + 1]);
        let lo = a.max(x0);
        let hi = b.min(x1);
        if lo >= hi {
            continue;
        }
        let h = x1 - x0;
        // Hermite coefficients in the local variable s = (sigma - x0)/h
        let (y0, y1, d0, d1) = (ys[i], ys[i + 1], ds[i], ds[i + 1]);
        let ca = y0;
        let cb = h * d0;
        let cc = -3.0 * y0 - 2.0 * h * d0 + 3.0 * y1 - h * d1;
        let cd = 2.0 * y0 + h * d0 - 2.0 * y1 + h * d1;
        // expand to monomials of sigma
        let (b1, c2, d3) = (cb / h, cc / (h * h), cd / (h * h * h));
        let alpha = ca - b1 * x0 + c2 * x0 * x0 - d3 * x0 * x0 * x0;
        let beta = b1 - 2.0 * c2 * x0 + 3.0 * d3 * x0 * x0;
        let gamma = c2 - 3.0 * d3 * x0;
        let delta = d3;
        let anti = |s: f64| -alpha / (2.0 * s * s) - beta / s + gamma * s.ln() + delta * s;
        total += anti(hi) - anti(lo);
    }
    total
}

/// Build-time Monte Carlo diagnostics (not persisted in the table file).
#[derive(Clone, Debug)]
pub struct BuildReport {
    pub rel_std_errors: Vec<f64>,
    pub max_rel_std_error: f64,
}

impl ZetaTable {
    /// Assembles a table from its columns, enforcing the grid and
    /// monotonicity invariants. `g(sigma) = sigma^3 dlog zeta/dsigma` must be
    /// strictly increasing, which is what makes Phi well defined.
    pub fn from_columns(
        dim: usize,
        sigma_grid: Vec<f64>,
        log_zeta: Vec<f64>,
        dlog_zeta_dsigma: Vec<f64>,
        mc_samples: u64,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("m must be >= 1".into()));
        }
        let n = sigma_grid.len();
        if n < 2 || log_zeta.len() != n || dlog_zeta_dsigma.len() != n {
            return Err(Error::InvalidArgument(
                "table columns must have equal length >= 2".into(),
            ));
        }
        if sigma_grid[0] <= 0.0 || sigma_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "sigma grid must be positive and strictly ascending".into(),
            ));
        }
        let g: Vec<f64> = sigma_grid
            .iter()
            .zip(&dlog_zeta_dsigma)
            .map(|(s, d)| s.powi(3) * d)
            .collect();
        if let Some(k) = g.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::NonMonotoneTable {
                sigma: sigma_grid[k + 1],
            });
        }
        let g_interp = MonotoneCubic::new(sigma_grid.clone(), g)?;
        Ok(ZetaTable {
            dim,
            sigma_grid,
            log_zeta,
            dlog_zeta_dsigma,
            mc_samples,
            seed,
            g_interp,
        })
    }

    /// Builds a table on a geometric sigma grid.
    ///
    /// `log zeta` is estimated by [`zeta_mc`]; all grid points share the same
    /// underlying standard-normal draws (`r = sigma z`) so the column is
    /// smooth in sigma and finite differences stay clean. The derivative
    /// column is analytic for m = 2 and a second-order nonuniform central
    /// difference of `log zeta` otherwise.
    pub fn build(
        m: usize,
        sigma_min: f64,
        sigma_max: f64,
        grid_size: usize,
        mc_samples: u64,
        seed: u64,
    ) -> Result<(Self, BuildReport)> {
        if m == 0 {
            return Err(Error::InvalidArgument("m must be >= 1".into()));
        }
        if !(sigma_min > 0.0 && sigma_max > sigma_min) {
            return Err(Error::InvalidArgument(
                "need 0 < sigma_min < sigma_max".into(),
            ));
        }
        if grid_size < 8 {
            return Err(Error::InvalidArgument("grid_size must be >= 8".into()));
        }
        if mc_samples == 0 {
            return Err(Error::InvalidArgument("mc_samples must be >= 1".into()));
        }

        let ratio = (sigma_max / sigma_min).powf(1.0 / (grid_size as f64 - 1.0));
        let sigma_grid: Vec<f64> = (0..grid_size)
            .map(|i| {
                if i + 1 == grid_size {
                    sigma_max
                } else {
                    sigma_min * ratio.powi(i as i32)
                }
            })
            .collect();

        // common random numbers across the grid
        let mut sums = vec![0.0f64; grid_size];
        let mut sums_sq = vec![0.0f64; grid_size];
        let mut z = vec![0.0f64; m];
        let mut pair_dists = vec![0.0f64; m * (m - 1) / 2];
        let mut done = 0u64;
        let mut chunk_index = 0u64;
        while done < mc_samples {
            let n = MC_CHUNK.min(mc_samples - done);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk_index + 1);
            let mut chunk_sums = vec![0.0f64; grid_size];
            let mut chunk_sums_sq = vec![0.0f64; grid_size];
            for _ in 0..n {
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                let mut k = 0;
                for i in 0..m {
                    for j in (i + 1)..m {
                        pair_dists[k] = (z[i] - z[j]).abs() / 2.0;
                        k += 1;
                    }
                }
                for (gi, sigma) in sigma_grid.iter().enumerate() {
                    let mut w = 1.0f64;
                    for d in &pair_dists {
                        w *= (sigma * d).sinh();
                    }
                    chunk_sums[gi] += w;
                    chunk_sums_sq[gi] += w * w;
                }
            }
            for gi in 0..grid_size {
                sums[gi] += chunk_sums[gi];
                sums_sq[gi] += chunk_sums_sq[gi];
            }
            done += n;
            chunk_index += 1;
        }

        let nf = mc_samples as f64;
        let mf = m as f64;
        let mut log_zeta = Vec::with_capacity(grid_size);
        let mut rel_std_errors = Vec::with_capacity(grid_size);
        for (gi, sigma) in sigma_grid.iter().enumerate() {
            let mean = sums[gi] / nf;
            let var = (sums_sq[gi] / nf - mean * mean).max(0.0);
            let rel = if m == 1 {
                0.0
            } else {
                (var / nf).sqrt() / mean
            };
            if !mean.is_finite() || mean <= 0.0 {
                return Err(Error::ExcessiveMcError {
                    sigma: *sigma,
                    rel_std_error: f64::INFINITY,
                    limit: MAX_REL_STD_ERROR,
                });
            }
            if rel > MAX_REL_STD_ERROR {
                return Err(Error::ExcessiveMcError {
                    sigma: *sigma,
                    rel_std_error: rel,
                    limit: MAX_REL_STD_ERROR,
                });
            }
            rel_std_errors.push(rel);
            log_zeta.push(
                ln_prefactor(m)
                    + mf / 2.0 * (2.0 * std::f64::consts::PI * sigma * sigma).ln()
                    + mean.ln(),
            );
        }

        let dlog = if m == 1 {
            // zeta = sqrt(2 pi) sigma exactly, so dlog zeta/dsigma = 1/sigma
            sigma_grid.iter().map(|s| 1.0 / s).collect()
        } else if m == 2 {
            sigma_grid
                .iter()
                .map(|s| dlog_zeta_dsigma_m2(*s))
                .collect::<Result<Vec<_>>>()?
        } else {
            nonuniform_gradient(&sigma_grid, &log_zeta)
        };

        let max_rel = rel_std_errors.iter().cloned().fold(0.0f64, f64::max);
        let table = ZetaTable::from_columns(m, sigma_grid, log_zeta, dlog, mc_samples, seed)?;
        Ok((
            table,
            BuildReport {
                rel_std_errors,
                max_rel_std_error: max_rel,
            },
        ))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mc_samples(&self) -> u64 {
        self.mc_samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sigma_grid(&self) -> &[f64] {
        &self.sigma_grid
    }

    pub fn log_zeta_column(&self) -> &[f64] {
        &self.log_zeta
    }

    pub fn dlog_zeta_column(&self) -> &[f64] {
        &self.dlog_zeta_dsigma
    }

    pub fn sigma_range(&self) -> (f64, f64) {
        (self.sigma_grid[0], *self.sigma_grid.last().unwrap())
    }

    /// Range of `g` over the grid, the domain of [`ZetaTable::phi`].
    pub fn g_range(&self) -> (f64, f64) {
        let (lo, hi) = self.sigma_range();
        (
            lo.powi(3) * self.dlog_zeta_dsigma[0],
            hi.powi(3) * self.dlog_zeta_dsigma.last().unwrap(),
        )
    }

    /// `log zeta(sigma)` evaluated as the anchored antiderivative of the
    /// interpolated `g(s)/s^3`; refuses sigma outside the grid.
    pub fn log_zeta(&self, sigma: f64) -> Result<f64> {
        let (lo, hi) = self.sigma_range();
        if !(sigma >= lo && sigma <= hi) {
            return Err(Error::OutOfTableRange {
                value: sigma,
                min: lo,
                max: hi,
            });
        }
        Ok(self.log_zeta[0] + integral_over_cubed(&self.g_interp, lo, sigma))
    }

    /// Interpolated `g(sigma) = sigma^3 dlog zeta/dsigma`.
    pub fn g(&self, sigma: f64) -> Result<f64> {
        let (lo, hi) = self.sigma_range();
        if !(sigma >= lo && sigma <= hi) {
            return Err(Error::OutOfTableRange {
                value: sigma,
                min: lo,
                max: hi,
            });
        }
        Ok(self.g_interp.value(sigma))
    }

    /// The Phi function: the sigma solving `g(sigma) = c`.
    ///
    /// `c` is an empirical dispersion; extrapolation outside the tabulated
    /// range of `g` is refused so the caller can rebuild the table wider.
    pub fn phi(&self, c: f64) -> Result<f64> {
        if !(c > 0.0) || !c.is_finite() {
            let (min, max) = self.g_range();
            return Err(Error::OutOfTableRange { value: c, min, max });
        }
        self.g_interp.invert_increasing(c, 1e-8)
    }

    /// Writes the CSV format: a self-describing comment header followed by
    /// `sigma,log_zeta,dlog_zeta_dsigma` rows at full double precision.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# spdgauss-zeta v1 m={} mc_samples={} seed={}\n",
            self.dim, self.mc_samples, self.seed
        ));
        for i in 0..self.sigma_grid.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e}\n",
                self.sigma_grid[i], self.log_zeta[i], self.dlog_zeta_dsigma[i]
            ));
        }
        out
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty zeta table file".into()))?;
        let rest = header
            .strip_prefix("# spdgauss-zeta v1 ")
            .ok_or_else(|| Error::Format("missing `# spdgauss-zeta v1` header".into()))?;
        let mut dim = None;
        let mut mc_samples = None;
        let mut seed = None;
        for token in rest.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header token {token:?}")))?;
            let parsed: u64 = value
                .parse()
                .map_err(|_| Error::Format(format!("bad header value {token:?}")))?;
            match key {
                "m" => dim = Some(parsed as usize),
                "mc_samples" => mc_samples = Some(parsed),
                "seed" => seed = Some(parsed),
                _ => {}
            }
        }
        let dim = dim.ok_or_else(|| Error::Format("header missing m=".into()))?;
        let (mut sigma, mut logz, mut dlog) = (Vec::new(), Vec::new(), Vec::new());
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Format(format!("expected 3 columns, got {line:?}")));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad float {s:?}")))
            };
            sigma.push(parse(fields[0])?);
            logz.push(parse(fields[1])?);
            dlog.push(parse(fields[2])?);
        }
        ZetaTable::from_columns(
            dim,
            sigma,
            logz,
            dlog,
            mc_samples.unwrap_or(0),
            seed.unwrap_or(0),
        )
    }
}

/// Second-order finite-difference gradient on a nonuniform grid.
fn nonuniform_gradient(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        d[i] = -h1 / (h0 * (h0 + h1)) * f[i - 1] + (h1 - h0) / (h0 * h1) * f[i]
            + h0 / (h1 * (h0 + h1)) * f[i + 1];
    }
    let (h0, h1) = (x[1] - x[0], x[2] - x[1]);
    d[0] = -(2.0 * h0 + h1) / (h0 * (h0 + h1)) * f[0] + (h0 + h1) / (h0 * h1) * f[1]
        - h0 / (h1 * (h0 + h1)) * f[2];
    let (g0, g1) = (x[n - 1] - x[n - 2], x[n - 2] - x[n - 3]);
    d[n - 1] = (2.0 * g0 + g1) / (g0 * (g0 + g1)) * f[n - 1] - (g0 + g1) / (g0 * g1) * f[n - 2]
        + g0 / (g1 * (g0 + g1)) * f[n - 3];
    d
}
