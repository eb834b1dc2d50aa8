//! EM estimation of mixtures of Riemannian Gaussians.
//!
//! The E step computes conditional membership probabilities in the log
//! domain with per-row max subtraction (small dispersions make raw densities
//! overflow-prone). The M step updates weights by conditional membership
//! counts, centres by weighted Fréchet means (warm-started from the previous
//! iteration), and dispersions through `Phi` applied to the weighted
//! dispersion around the new centre.

use nalgebra::DMatrix;
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    empirical_dispersion, frechet_mean_with_init, least_dispersion_index, GaussianParams,
    MeanSolverOptions,
};
use crate::manifold::{self, SpdMatrix};
use crate::normalization::ZetaTable;

/// One mixture component: a positive weight and Gaussian parameters.
#[derive(Clone, Debug)]
pub struct MixtureComponent {
    pub weight: f64,
    pub params: GaussianParams,
}

/// A finite mixture of Riemannian Gaussians with positive weights summing to one.
#[derive(Clone, Debug)]
pub struct MixtureModel {
    components: Vec<MixtureComponent>,
}

impl MixtureModel {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput("mixture components"));
        }
        let dim = components[0].params.mean().dim();
        if components.iter().any(|c| c.params.mean().dim() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: components
                    .iter()
                    .find(|c| c.params.mean().dim() != dim)
                    .unwrap()
                    .params
                    .mean()
                    .dim(),
            });
        }
        if components.iter().any(|c| !(c.weight > 0.0)) {
            return Err(Error::InvalidArgument(
                "mixture weights must be positive".into(),
            ));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights must sum to 1 (got {total})"
            )));
        }
        Ok(MixtureModel { components })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].params.mean().dim()
    }

    pub fn to_json(&self) -> String {
        let doc = MixtureModelJson {
            m: self.dim(),
            components: self
                .components
                .iter()
                .map(|c| ComponentJson {
                    weight: c.weight,
                    mean: matrix_rows(c.params.mean()),
                    sigma: c.params.sigma(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MixtureModelJson =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("mixture json: {e}")))?;
        let components = doc
            .components
            .into_iter()
            .map(|c| {
                let mean = matrix_from_rows(doc.m, &c.mean)?;
                Ok(MixtureComponent {
                    weight: c.weight,
                    params: GaussianParams::new(mean, c.sigma)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureModel::new(components)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct MixtureModelJson {
    m: usize,
    components: Vec<ComponentJson>,
}

#[derive(Serialize, Deserialize)]
struct ComponentJson {
    weight: f64,
    mean: Vec<Vec<f64>>,
    sigma: f64,
}

pub(crate) fn matrix_rows(y: &SpdMatrix) -> Vec<Vec<f64>> {
    let m = y.dim();
    (0..m)
        .map(|i| (0..m).map(|j| y.matrix()[(i, j)]).collect())
        .collect()
}

pub(crate) fn matrix_from_rows(m: usize, rows: &[Vec<f64>]) -> Result<SpdMatrix> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(Error::Format(format!("expected {m}x{m} matrix")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    SpdMatrix::new(DMatrix::from_row_slice(m, m, &flat))
}

/// Conditional membership probabilities, one row per data point.
#[derive(Clone, Debug)]
pub struct Responsibilities {
    data: DMatrix<f64>,
}

impl Responsibilities {
    /// Wraps a matrix of responsibilities, checking each row sums to one.
    pub fn from_matrix(data: DMatrix<f64>) -> Result<Self> {
        for n in 0..data.nrows() {
            let row_sum: f64 = data.row(n).iter().sum();
            if (row_sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "responsibility row {n} sums to {row_sum}"
                )));
            }
        }
        Ok(Responsibilities { data })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn num_points(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_components(&self) -> usize {
        self.data.ncols()
    }

    /// Conditional membership counts `N_mu` (column sums).
    pub fn counts(&self) -> Vec<f64> {
        (0..self.data.ncols())
            .map(|mu| self.data.column(mu).iter().sum())
            .collect()
    }
}

/// Initialisation strategies for EM.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitStrategy {
    /// Greedy centre selection maximising the minimum Rao distance to the
    /// centres already chosen; dispersions from the induced partition.
    FarthestPoint,
    /// M distinct data points drawn at random; dispersions from the global
    /// spread around each centre; uniform weights.
    Random,
}

/// EM options and stopping rules.
#[derive(Clone, Debug)]
pub struct EmOptions {
    pub max_iters: usize,
    /// Stop when the relative log-likelihood increase falls below this.
    pub ll_rel_tol: f64,
    /// Fallback stop: largest Rao movement of any component mean.
    pub mean_change_tol: f64,
    pub init: InitStrategy,
    pub seed: u64,
    pub mean_solver: MeanSolverOptions,
    /// Lower clamp on fitted dispersions, guarding against component collapse.
    pub sigma_floor: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iters: 100,
            ll_rel_tol: 1e-6,
            mean_change_tol: 1e-6,
            init: InitStrategy::FarthestPoint,
            seed: 0,
            mean_solver: MeanSolverOptions::default(),
            sigma_floor: 1e-3,
        }
    }
}

fn log_weighted_densities(
    points: &[SpdMatrix],
    model: &MixtureModel,
    table: &ZetaTable,
) -> Result<DMatrix<f64>> {
    let n = points.len();
    let mm = model.len();
    if model.dim() != table.dim() {
        return Err(Error::DimensionMismatch {
            left: model.dim(),
            right: table.dim(),
        });
    }
    if let Some(bad) = points.iter().find(|p| p.dim() != model.dim()) {
        return Err(Error::DimensionMismatch {
            left: model.dim(),
            right: bad.dim(),
        });
    }
    let mut out = DMatrix::zeros(n, mm);
    // distance work dominates: factorise each component mean once
    for (mu, comp) in model.components().iter().enumerate() {
        let factors = comp.params.mean().factors();
        let sigma = comp.params.sigma();
        let log_zeta = table.log_zeta(sigma)?;
        let log_w = comp.weight.ln();
        for (nn, p) in points.iter().enumerate() {
            let d = manifold::rao_distance_from(&factors, p);
            out[(nn, mu)] = log_w - log_zeta - d * d / (2.0 * sigma * sigma);
        }
    }
    Ok(out)
}

fn log_sum_exp_row(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// E step: posterior membership probabilities of every point, row-normalised
/// in the log domain.
pub fn e_step(
    points: &[SpdMatrix],
    model: &MixtureModel,
    table: &ZetaTable,
) -> Result<Responsibilities> {
    if points.is_empty() {
        return Err(Error::EmptyInput("points"));
    }
    let logs = log_weighted_densities(points, model, table)?;
    let mut data = DMatrix::zeros(points.len(), model.len());
    for n in 0..points.len() {
        let row: Vec<f64> = logs.row(n).iter().cloned().collect();
        let lse = log_sum_exp_row(&row);
        let mut sum = 0.0;
        for mu in 0..model.len() {
            let v = (row[mu] - lse).exp();
            data[(n, mu)] = v;
            sum += v;
        }
        for mu in 0..model.len() {
            data[(n, mu)] /= sum;
        }
    }
    Ok(Responsibilities { data })
}

/// M step: weight, centre and dispersion updates from fixed responsibilities.
///
/// `warm` supplies the previous iteration's model whose means seed the inner
/// Fréchet solves. A component whose membership count drops below
/// `1e-8 N` is reported as [`Error::EmptyComponent`] so the caller can apply
/// its reinitialisation policy.
pub fn m_step(
    points: &[SpdMatrix],
    resp: &Responsibilities,
    table: &ZetaTable,
    opts: &EmOptions,
    warm: Option<&MixtureModel>,
) -> Result<MixtureModel> {
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptyInput("points"));
    }
    if resp.num_points() != n {
        return Err(Error::DimensionMismatch {
            left: n,
            right: resp.num_points(),
        });
    }
    let mm = resp.num_components();
    let counts = resp.counts();
    if let Some((mu, &mass)) = counts
        .iter()
        .enumerate()
        .find(|(_, &c)| c < 1e-8 * n as f64)
    {
        return Err(Error::EmptyComponent {
            component: mu,
            mass,
        });
    }

    let total: f64 = counts.iter().sum();
    let mut components = Vec::with_capacity(mm);
    for mu in 0..mm {
        // within-component weights omega_mu(Y_n) / N_mu; for all-ones
        // responsibilities these are exactly the uniform 1/N weights
        let w: Vec<f64> = (0..n).map(|nn| resp.matrix()[(nn, mu)] / counts[mu]).collect();
        let init = match warm {
            Some(model) => model.components()[mu].params.mean().clone(),
            None => points[least_dispersion_index(points)].clone(),
        };
        let mean = match frechet_mean_with_init(points, &w, init, &opts.mean_solver) {
            Ok(m) => m,
            Err(Error::MaxItersExceeded { best, .. }) => *best,
            Err(e) => return Err(e),
        };
        let dispersion = empirical_dispersion(points, &w, &mean)?;
        let sigma = sigma_from_dispersion(dispersion, table, opts.sigma_floor)?;
        components.push(MixtureComponent {
            weight: counts[mu] / total,
            params: GaussianParams::new(mean, sigma)?,
        });
    }
    MixtureModel::new(components)
}

/// Maps a weighted dispersion to a dispersion parameter through Phi, with
/// the lower clamp policy: dispersions below the tabulated range yield the
/// smallest tabulated sigma, never an error; sigma_floor applies afterwards.
fn sigma_from_dispersion(dispersion: f64, table: &ZetaTable, sigma_floor: f64) -> Result<f64> {
    let (g_lo, _) = table.g_range();
    let (sigma_lo, _) = table.sigma_range();
    let sigma = if dispersion <= g_lo {
        sigma_lo
    } else {
        table.phi(dispersion)?
    };
    Ok(sigma.max(sigma_floor).max(sigma_lo))
}

/// Mixture log-likelihood `sum_n log sum_mu w_mu p(Y_n | mu)`.
pub fn mixture_log_likelihood(
    points: &[SpdMatrix],
    model: &MixtureModel,
    table: &ZetaTable,
) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyInput("points"));
    }
    let logs = log_weighted_densities(points, model, table)?;
    let mut acc = 0.0;
    for nn in 0..points.len() {
        let row: Vec<f64> = logs.row(nn).iter().cloned().collect();
        acc += log_sum_exp_row(&row);
    }
    Ok(acc)
}

/// Builds an initial model from the data.
pub fn init_model<R: Rng + ?Sized>(
    points: &[SpdMatrix],
    num_components: usize,
    strategy: InitStrategy,
    table: &ZetaTable,
    rng: &mut R,
) -> Result<MixtureModel> {
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptyInput("points"));
    }
    if num_components == 0 || num_components > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= M <= N, got M={num_components} N={n}"
        )));
    }
    let sigma_floor = EmOptions::default().sigma_floor;
    let centre_indices: Vec<usize> = match strategy {
        InitStrategy::FarthestPoint => {
            let mut chosen = vec![least_dispersion_index(points)];
            let mut nearest: Vec<f64> = {
                let f = points[chosen[0]].factors();
                points
                    .iter()
                    .map(|p| manifold::rao_distance_from(&f, p))
                    .collect()
            };
            while chosen.len() < num_components {
                let mut best = (0usize, -1.0f64);
                for (i, d) in nearest.iter().enumerate() {
                    if *d > best.1 {
                        best = (i, *d);
                    }
                }
                chosen.push(best.0);
                let f = points[best.0].factors();
                for (i, d) in nearest.iter_mut().enumerate() {
                    *d = d.min(manifold::rao_distance_from(&f, &points[i]));
                }
            }
            chosen
        }
        InitStrategy::Random => {
            // distinct indices, deterministic given the generator state
            let mut chosen: Vec<usize> = Vec::with_capacity(num_components);
            while chosen.len() < num_components {
                let idx = rng.random_range(0..n);
                if !chosen.contains(&idx) {
                    chosen.push(idx);
                }
            }
            chosen
        }
    };

    let centre_factors: Vec<manifold::SpdFactors> = centre_indices
        .iter()
        .map(|&i| points[i].factors())
        .collect();

    let mut components = Vec::with_capacity(num_components);
    match strategy {
        InitStrategy::FarthestPoint => {
            // nearest-centre partition, ties to the lower centre index
            let mut cell_count = vec![0usize; num_components];
            let mut cell_disp = vec![0.0f64; num_components];
            for p in points {
                let mut best = (0usize, f64::INFINITY);
                for (k, f) in centre_factors.iter().enumerate() {
                    let d = manifold::rao_distance_from(f, p);
                    if d < best.1 {
                        best = (k, d);
                    }
                }
                cell_count[best.0] += 1;
                cell_disp[best.0] += best.1 * best.1;
            }
            for k in 0..num_components {
                let count = cell_count[k].max(1);
                let dispersion = cell_disp[k] / count as f64;
                let sigma = sigma_from_dispersion(dispersion, table, sigma_floor)?;
                components.push(MixtureComponent {
                    weight: count as f64,
                    params: GaussianParams::new(points[centre_indices[k]].clone(), sigma)?,
                });
            }
        }
        InitStrategy::Random => {
            for (k, f) in centre_factors.iter().enumerate() {
                let dispersion = points
                    .iter()
                    .map(|p| {
                        let d = manifold::rao_distance_from(f, p);
                        d * d
                    })
                    .sum::<f64>()
                    / n as f64;
                let sigma = sigma_from_dispersion(dispersion, table, sigma_floor)?;
                components.push(MixtureComponent {
                    weight: 1.0,
                    params: GaussianParams::new(points[centre_indices[k]].clone(), sigma)?,
                });
            }
        }
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    for c in components.iter_mut() {
        c.weight /= total;
    }
    MixtureModel::new(components)
}

/// Runs EM from a given initial model. Returns the fitted model and the
/// log-likelihood trace (initial model first, then one entry per iteration).
///
/// Components that lose their responsibility mass are reinitialised at the
/// point with the lowest current mixture density and EM continues.
pub fn em_fit_with_init(
    points: &[SpdMatrix],
    init: MixtureModel,
    table: &ZetaTable,
    opts: &EmOptions,
) -> Result<(MixtureModel, Vec<f64>)> {
    if points.is_empty() {
        return Err(Error::EmptyInput("points"));
    }
    let mut model = init;
    let mut trace = vec![mixture_log_likelihood(points, &model, table)?];
    let mut reinits_left = 3 * model.len();
    let mut iter = 0;
    while iter < opts.max_iters {
        let resp = e_step(points, &model, table)?;
        let next = match m_step(points, &resp, table, opts, Some(&model)) {
            Ok(next) => next,
            Err(Error::EmptyComponent { component, .. }) if reinits_left > 0 => {
                reinits_left -= 1;
                model = reinitialise_component(points, &model, component, table)?;
                continue;
            }
            Err(e) => return Err(e),
        };
        let ll = mixture_log_likelihood(points, &next, table)?;
        let prev_ll = *trace.last().unwrap();
        let movement = model
            .components()
            .iter()
            .zip(next.components())
            .map(|(a, b)| {
                manifold::rao_distance(a.params.mean(), b.params.mean()).unwrap_or(f64::INFINITY)
            })
            .fold(0.0f64, f64::max);
        model = next;
        trace.push(ll);
        iter += 1;
        let small_gain = ll - prev_ll < opts.ll_rel_tol * ll.abs().max(1.0);
        if small_gain || movement < opts.mean_change_tol {
            break;
        }
    }
    Ok((model, trace))
}

/// Fits an M-component mixture by EM with the configured initialisation.
pub fn em_fit<R: Rng + ?Sized>(
    points: &[SpdMatrix],
    num_components: usize,
    table: &ZetaTable,
    opts: &EmOptions,
    rng: &mut R,
) -> Result<(MixtureModel, Vec<f64>)> {
    let init = init_model(points, num_components, opts.init, table, rng)?;
    em_fit_with_init(points, init, table, opts)
}

/// Moves a starved component to the point the current mixture explains worst.
fn reinitialise_component(
    points: &[SpdMatrix],
    model: &MixtureModel,
    component: usize,
    table: &ZetaTable,
) -> Result<MixtureModel> {
    let logs = log_weighted_densities(points, model, table)?;
    let mut worst = (0usize, f64::INFINITY);
    for nn in 0..points.len() {
        let row: Vec<f64> = logs.row(nn).iter().cloned().collect();
        let density = log_sum_exp_row(&row);
        if density < worst.1 {
            worst = (nn, density);
        }
    }
    let n = points.len() as f64;
    let mut components: Vec<MixtureComponent> = model.components().to_vec();
    components[component] = MixtureComponent {
        weight: 1.0 / n,
        params: GaussianParams::new(
            points[worst.0].clone(),
            model.components()[component].params.sigma(),
        )?,
    };
    let total: f64 = components.iter().map(|c| c.weight).sum();
    for c in components.iter_mut() {
        c.weight /= total;
    }
    MixtureModel::new(components)
}
