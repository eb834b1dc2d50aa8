//! Supervised classification of SPD-valued data.
//!
//! Training fits one Gaussian mixture per class; the flattened clusters form
//! the model. Three decision rules are provided: the Bayes rule (cluster
//! priors, dispersions and Rao distances all enter the score), the
//! nearest-centre rule (distances only), and a Wishart-density baseline
//! whose parameters are supplied by the caller.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{self, SpdMatrix};
use crate::mixture::{em_fit, matrix_from_rows, matrix_rows, EmOptions};
use crate::normalization::ZetaTable;

/// One trained cluster: a class label, a global prior weight, a centre of
/// mass and a dispersion.
#[derive(Clone, Debug)]
pub struct Cluster {
    pub label: String,
    pub weight: f64,
    pub mean: SpdMatrix,
    pub sigma: f64,
}

/// Flattened per-class mixture clusters with global priors summing to one.
#[derive(Clone, Debug)]
pub struct ClusterModel {
    clusters: Vec<Cluster>,
}

impl ClusterModel {
    pub fn new(clusters: Vec<Cluster>) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::EmptyInput("clusters"));
        }
        let dim = clusters[0].mean.dim();
        if clusters.iter().any(|c| c.mean.dim() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: clusters
                    .iter()
                    .find(|c| c.mean.dim() != dim)
                    .unwrap()
                    .mean
                    .dim(),
            });
        }
        if clusters.iter().any(|c| !(c.weight > 0.0) || !(c.sigma > 0.0)) {
            return Err(Error::InvalidArgument(
                "cluster weights and sigmas must be positive".into(),
            ));
        }
        let total: f64 = clusters.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "cluster weights must sum to 1 (got {total})"
            )));
        }
        Ok(ClusterModel { clusters })
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn dim(&self) -> usize {
        self.clusters[0].mean.dim()
    }

    /// Sorted unique class labels.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.clusters.iter().map(|c| c.label.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    pub fn to_json(&self) -> String {
        let doc = ClusterModelJson {
            m: self.dim(),
            components: self
                .clusters
                .iter()
                .map(|c| ClusterJson {
                    label: c.label.clone(),
                    weight: c.weight,
                    mean: matrix_rows(&c.mean),
                    sigma: c.sigma,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ClusterModelJson =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("cluster json: {e}")))?;
        let clusters = doc
            .components
            .into_iter()
            .map(|c| {
                Ok(Cluster {
                    label: c.label,
                    weight: c.weight,
                    mean: matrix_from_rows(doc.m, &c.mean)?,
                    sigma: c.sigma,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ClusterModel::new(clusters)
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
struct ClusterModelJson {
    m: usize,
    components: Vec<ClusterJson>,
}

#[derive(Serialize, Deserialize)]
struct ClusterJson {
    label: String,
    weight: f64,
    mean: Vec<Vec<f64>>,
    sigma: f64,
}

/// One Wishart cluster: scale matrix and degrees of freedom.
#[derive(Clone, Debug)]
pub struct WishartCluster {
    pub label: String,
    pub weight: f64,
    pub scale: SpdMatrix,
    pub dof: f64,
}

/// Wishart-classifier parameters, supplied externally.
#[derive(Clone, Debug)]
pub struct WishartClusterModel {
    clusters: Vec<WishartCluster>,
}

impl WishartClusterModel {
    pub fn new(clusters: Vec<WishartCluster>) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::EmptyInput("clusters"));
        }
        if clusters.iter().any(|c| !(c.weight > 0.0) || !(c.dof > 0.0)) {
            return Err(Error::InvalidArgument(
                "wishart weights and dofs must be positive".into(),
            ));
        }
        Ok(WishartClusterModel { clusters })
    }

    pub fn clusters(&self) -> &[WishartCluster] {
        &self.clusters
    }

    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.clusters.iter().map(|c| c.label.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    pub fn to_json(&self) -> String {
        let doc = WishartModelJson {
            clusters: self
                .clusters
                .iter()
                .map(|c| WishartClusterJson {
                    label: c.label.clone(),
                    weight: c.weight,
                    scale: matrix_rows(&c.scale),
                    dof: c.dof,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: WishartModelJson =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("wishart json: {e}")))?;
        let clusters = doc
            .clusters
            .into_iter()
            .map(|c| {
                let m = c.scale.len();
                Ok(WishartCluster {
                    label: c.label,
                    weight: c.weight,
                    scale: matrix_from_rows(m, &c.scale)?,
                    dof: c.dof,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        WishartClusterModel::new(clusters)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct WishartModelJson {
    clusters: Vec<WishartClusterJson>,
}

#[derive(Serialize, Deserialize)]
struct WishartClusterJson {
    label: String,
    weight: f64,
    scale: Vec<Vec<f64>>,
    dof: f64,
}

/// Result of classifying one point: winning class, winning cluster index and
/// the per-cluster scores (lower is better).
#[derive(Clone, Debug)]
pub struct Classification {
    pub label: String,
    pub cluster: usize,
    pub scores: Vec<f64>,
}

/// Trains a cluster model: one EM mixture per class, components flattened
/// with global priors proportional to in-class weight times class size.
pub fn train<R: Rng + ?Sized>(
    classes: &BTreeMap<String, Vec<SpdMatrix>>,
    components_per_class: usize,
    table: &ZetaTable,
    opts: &EmOptions,
    rng: &mut R,
) -> Result<ClusterModel> {
    if classes.is_empty() {
        return Err(Error::EmptyInput("classes"));
    }
    let total: usize = classes.values().map(|v| v.len()).sum();
    if classes.values().any(|v| v.is_empty()) {
        return Err(Error::EmptyInput("every class needs at least one point"));
    }
    let mut clusters = Vec::new();
    for (label, points) in classes {
        let m_class = components_per_class.min(points.len());
        let (mixture, _trace) = em_fit(points, m_class, table, opts, rng)?;
        let class_fraction = points.len() as f64 / total as f64;
        for comp in mixture.components() {
            clusters.push(Cluster {
                label: label.clone(),
                weight: comp.weight * class_fraction,
                mean: comp.params.mean().clone(),
                sigma: comp.params.sigma(),
            });
        }
    }
    let sum: f64 = clusters.iter().map(|c| c.weight).sum();
    for c in clusters.iter_mut() {
        c.weight /= sum;
    }
    ClusterModel::new(clusters)
}

fn argmin(scores: &[f64]) -> usize {
    let mut best = (0usize, f64::INFINITY);
    for (k, s) in scores.iter().enumerate() {
        if *s < best.1 {
            best = (k, *s);
        }
    }
    best.0
}

/// Bayes rule: minimise `-log w(k) + log zeta(sigma(k)) + d^2(y, mean(k)) / 2 sigma^2(k)`.
pub fn classify_gaussian(
    y: &SpdMatrix,
    model: &ClusterModel,
    table: &ZetaTable,
) -> Result<Classification> {
    if y.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            left: model.dim(),
            right: y.dim(),
        });
    }
    let scores = model
        .clusters()
        .iter()
        .map(|c| {
            let d = manifold::rao_distance(&c.mean, y)?;
            Ok(-c.weight.ln() + table.log_zeta(c.sigma)? + d * d / (2.0 * c.sigma * c.sigma))
        })
        .collect::<Result<Vec<f64>>>()?;
    let cluster = argmin(&scores);
    Ok(Classification {
        label: model.clusters()[cluster].label.clone(),
        cluster,
        scores,
    })
}

/// Nearest-centre rule: minimise the Rao distance to the cluster centres.
/// Weights and dispersions are ignored; the scores are the distances.
pub fn classify_nn(y: &SpdMatrix, model: &ClusterModel) -> Result<Classification> {
    if y.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            left: model.dim(),
            right: y.dim(),
        });
    }
    let scores = model
        .clusters()
        .iter()
        .map(|c| manifold::rao_distance(&c.mean, y))
        .collect::<Result<Vec<f64>>>()?;
    let cluster = argmin(&scores);
    Ok(Classification {
        label: model.clusters()[cluster].label.clone(),
        cluster,
        scores,
    })
}

/// Wishart baseline: minimise
/// `-2 log w(k) - dof(k) (log det(S^-1(k) y) - tr(S^-1(k) y))`.
pub fn classify_wishart(y: &SpdMatrix, model: &WishartClusterModel) -> Result<Classification> {
    let scores = model
        .clusters()
        .iter()
        .map(|c| {
            if c.scale.dim() != y.dim() {
                return Err(Error::DimensionMismatch {
                    left: c.scale.dim(),
                    right: y.dim(),
                });
            }
            let inv = c.scale.inverse();
            let log_det = y.log_det() - c.scale.log_det();
            let trace = (inv.matrix() * y.matrix()).trace();
            Ok(-2.0 * c.weight.ln() - c.dof * (log_det - trace))
        })
        .collect::<Result<Vec<f64>>>()?;
    let cluster = argmin(&scores);
    Ok(Classification {
        label: model.clusters()[cluster].label.clone(),
        cluster,
        scores,
    })
}

/// Which decision rule `evaluate` applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecisionRule {
    Bayes,
    NearestCentre,
    Wishart,
}

/// The model a rule runs against.
#[derive(Clone, Debug)]
pub enum ClassifierModel {
    Gaussian(ClusterModel),
    Wishart(WishartClusterModel),
}

impl ClassifierModel {
    fn labels(&self) -> Vec<String> {
        match self {
            ClassifierModel::Gaussian(m) => m.labels(),
            ClassifierModel::Wishart(m) => m.labels(),
        }
    }
}

/// Confusion counts over sorted labels, plus overall accuracy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<String>,
    /// `confusion[i][j]`: points of true label `labels[i]` predicted as `labels[j]`.
    pub confusion: Vec<Vec<usize>>,
    pub overall_accuracy: f64,
}

/// Classifies every test point and tallies the confusion matrix.
pub fn evaluate(
    test: &[(SpdMatrix, String)],
    rule: DecisionRule,
    model: &ClassifierModel,
    table: Option<&ZetaTable>,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyInput("test set"));
    }
    let labels = model.labels();
    let index_of = |label: &str| -> Result<usize> {
        labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    };
    let mut confusion = vec![vec![0usize; labels.len()]; labels.len()];
    let mut correct = 0usize;
    for (y, truth) in test {
        let truth_idx = index_of(truth)?;
        let predicted = match (rule, model) {
            (DecisionRule::Bayes, ClassifierModel::Gaussian(m)) => {
                let table = table.ok_or_else(|| {
                    Error::InvalidArgument("the Bayes rule needs a zeta table".into())
                })?;
                classify_gaussian(y, m, table)?.label
            }
            (DecisionRule::NearestCentre, ClassifierModel::Gaussian(m)) => {
                classify_nn(y, m)?.label
            }
            (DecisionRule::Wishart, ClassifierModel::Wishart(m)) => classify_wishart(y, m)?.label,
            _ => {
                return Err(Error::InvalidArgument(
                    "rule does not match the supplied model kind".into(),
                ))
            }
        };
        let pred_idx = index_of(&predicted)?;
        confusion[truth_idx][pred_idx] += 1;
        if pred_idx == truth_idx {
            correct += 1;
        }
    }
    Ok(EvalReport {
        labels,
        confusion,
        overall_accuracy: correct as f64 / test.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{fit_gaussian, GaussianParams, MeanSolverOptions};
    use crate::sampler::{sample_gaussian, SamplerConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn table() -> &'static ZetaTable {
        static TABLE: OnceLock<ZetaTable> = OnceLock::new();
        TABLE.get_or_init(|| ZetaTable::build(2, 0.05, 2.5, 32, 150_000, 123).unwrap().0)
    }

    fn diag(entries: &[f64]) -> SpdMatrix {
        SpdMatrix::from_diagonal(entries).unwrap()
    }

    fn sample_points(mean: SpdMatrix, sigma: f64, n: usize, seed: u64) -> Vec<SpdMatrix> {
        let params = GaussianParams::new(mean, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample_gaussian(&params, n, &SamplerConfig::default(), &mut rng).unwrap()
    }

    fn two_cluster_model(sigma_a: f64, sigma_b: f64, w_a: f64) -> ClusterModel {
        ClusterModel::new(vec![
            Cluster {
                label: "a".into(),
                weight: w_a,
                mean: SpdMatrix::identity(2),
                sigma: sigma_a,
            },
            Cluster {
                label: "b".into(),
                weight: 1.0 - w_a,
                mean: diag(&[f64::exp(2.0), f64::exp(-2.0)]),
                sigma: sigma_b,
            },
        ])
        .unwrap()
    }

    #[test]
    fn train_single_class_single_component_is_fit_gaussian() {
        let points = sample_points(SpdMatrix::identity(2), 0.4, 40, 20);
        let mut classes = BTreeMap::new();
        classes.insert("only".to_string(), points.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = train(&classes, 1, table(), &EmOptions::default(), &mut rng).unwrap();
        let fitted = fit_gaussian(&points, table(), &MeanSolverOptions::default()).unwrap();
        assert_eq!(model.clusters().len(), 1);
        assert_eq!(model.clusters()[0].weight, 1.0);
        assert_eq!(model.clusters()[0].mean.matrix(), fitted.mean().matrix());
        assert_eq!(model.clusters()[0].sigma, fitted.sigma());
    }

    #[test]
    fn train_two_equal_classes_split_weight() {
        let mut classes = BTreeMap::new();
        classes.insert(
            "a".to_string(),
            sample_points(SpdMatrix::identity(2), 0.3, 25, 21),
        );
        classes.insert(
            "b".to_string(),
            sample_points(diag(&[5.0, 0.2]), 0.3, 25, 22),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = train(&classes, 1, table(), &EmOptions::default(), &mut rng).unwrap();
        assert_eq!(model.clusters().len(), 2);
        for c in model.clusters() {
            assert!((c.weight - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn bayes_equals_nn_under_uniform_weights_and_shared_sigma() {
        let model = two_cluster_model(0.4, 0.4, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let probes = sample_gaussian(
            &GaussianParams::new(diag(&[2.0, 0.6]), 0.8).unwrap(),
            50,
            &SamplerConfig::default(),
            &mut rng,
        )
        .unwrap();
        for y in &probes {
            let bayes = classify_gaussian(y, &model, table()).unwrap();
            let nn = classify_nn(y, &model).unwrap();
            assert_eq!(bayes.cluster, nn.cluster);
        }
    }

    #[test]
    fn heaviest_cluster_wins_at_its_centre() {
        let model = two_cluster_model(0.4, 0.4, 0.9);
        let out = classify_gaussian(&SpdMatrix::identity(2), &model, table()).unwrap();
        assert_eq!(out.cluster, 0);
        assert_eq!(out.label, "a");
    }

    #[test]
    fn shrinking_sigma_flips_decision_at_fixed_distance() {
        // y sits nearer to cluster a; with equal dispersions a wins, but
        // a small enough sigma_a makes the d^2 / 2 sigma^2 term dominate
        let y = diag(&[f64::exp(0.8), f64::exp(-0.8)]);
        let wide = two_cluster_model(0.5, 0.5, 0.5);
        let narrow = two_cluster_model(0.1, 0.5, 0.5);
        assert_eq!(classify_gaussian(&y, &wide, table()).unwrap().cluster, 0);
        assert_eq!(classify_gaussian(&y, &narrow, table()).unwrap().cluster, 1);
    }

    #[test]
    fn nn_ignores_weights() {
        let balanced = two_cluster_model(0.4, 0.4, 0.5);
        let skewed = two_cluster_model(0.4, 0.4, 0.999);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let probes = sample_gaussian(
            &GaussianParams::new(diag(&[2.5, 0.5]), 0.7).unwrap(),
            30,
            &SamplerConfig::default(),
            &mut rng,
        )
        .unwrap();
        for y in &probes {
            assert_eq!(
                classify_nn(y, &balanced).unwrap().cluster,
                classify_nn(y, &skewed).unwrap().cluster
            );
        }
    }

    #[test]
    fn nn_returns_exact_centre() {
        let model = two_cluster_model(0.4, 0.4, 0.5);
        let centre = model.clusters()[1].mean.clone();
        let out = classify_nn(&centre, &model).unwrap();
        assert_eq!(out.cluster, 1);
        assert!(out.scores[1] < 1e-12);
    }

    #[test]
    fn wishart_weight_only_difference_prefers_heavier() {
        let model = WishartClusterModel::new(vec![
            WishartCluster {
                label: "light".into(),
                weight: 0.2,
                scale: SpdMatrix::identity(2),
                dof: 5.0,
            },
            WishartCluster {
                label: "heavy".into(),
                weight: 0.8,
                scale: SpdMatrix::identity(2),
                dof: 5.0,
            },
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let probes = sample_gaussian(
            &GaussianParams::new(SpdMatrix::identity(2), 0.6).unwrap(),
            20,
            &SamplerConfig::default(),
            &mut rng,
        )
        .unwrap();
        for y in &probes {
            assert_eq!(classify_wishart(y, &model).unwrap().label, "heavy");
        }
    }

    #[test]
    fn wishart_matched_scale_reduces_to_weights() {
        let y = diag(&[1.7, 0.4]);
        let model = WishartClusterModel::new(vec![
            WishartCluster {
                label: "a".into(),
                weight: 0.3,
                scale: y.clone(),
                dof: 7.0,
            },
            WishartCluster {
                label: "b".into(),
                weight: 0.7,
                scale: y.clone(),
                dof: 7.0,
            },
        ])
        .unwrap();
        let out = classify_wishart(&y, &model).unwrap();
        assert_eq!(out.label, "b");
        // the dof term is cluster-independent at the matched scale:
        // score difference equals the weight-term difference exactly
        let diff = out.scores[0] - out.scores[1];
        let expected = -2.0 * (0.3f64.ln() - 0.7f64.ln());
        assert!((diff - expected).abs() < 1e-10);
    }

    #[test]
    fn wishart_score_cross_checked_against_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for trial in 0..10 {
            let y = sample_gaussian(
                &GaussianParams::new(SpdMatrix::identity(3), 0.5).unwrap(),
                1,
                &SamplerConfig::default(),
                &mut rng,
            )
            .unwrap()
            .remove(0);
            let scale = sample_gaussian(
                &GaussianParams::new(SpdMatrix::identity(3), 0.5).unwrap(),
                1,
                &SamplerConfig::default(),
                &mut rng,
            )
            .unwrap()
            .remove(0);
            let weight = 0.2 + 0.06 * trial as f64;
            let dof = 4.0 + trial as f64;
            let model = WishartClusterModel::new(vec![WishartCluster {
                label: "x".into(),
                weight,
                scale: scale.clone(),
                dof,
            }])
            .unwrap();
            let score = classify_wishart(&y, &model).unwrap().scores[0];
            // independent route: plain LU determinant of S^-1 Y
            let sinv_y = scale
                .matrix()
                .clone()
                .lu()
                .solve(y.matrix())
                .expect("scale invertible");
            let direct =
                -2.0 * weight.ln() - dof * (sinv_y.determinant().ln() - sinv_y.trace());
            assert!(
                (score - direct).abs() < 1e-8 * (1.0 + direct.abs()),
                "trial {trial}: {score} vs {direct}"
            );
        }
    }

    #[test]
    fn evaluate_centres_classify_to_themselves() {
        let model = two_cluster_model(0.4, 0.4, 0.5);
        let test: Vec<(SpdMatrix, String)> = model
            .clusters()
            .iter()
            .map(|c| (c.mean.clone(), c.label.clone()))
            .collect();
        let report = evaluate(
            &test,
            DecisionRule::NearestCentre,
            &ClassifierModel::Gaussian(model.clone()),
            None,
        )
        .unwrap();
        assert_eq!(report.overall_accuracy, 1.0);
        let total: usize = report.confusion.iter().flatten().sum();
        assert_eq!(total, test.len());
    }

    #[test]
    fn evaluate_rejects_unknown_label() {
        let model = two_cluster_model(0.4, 0.4, 0.5);
        let test = vec![(SpdMatrix::identity(2), "mystery".to_string())];
        assert!(matches!(
            evaluate(
                &test,
                DecisionRule::NearestCentre,
                &ClassifierModel::Gaussian(model),
                None
            ),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn cluster_model_json_roundtrip() {
        let model = two_cluster_model(0.37, 0.52, 0.25);
        let back = ClusterModel::from_json(&model.to_json()).unwrap();
        for (a, b) in model.clusters().iter().zip(back.clusters()) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.weight, b.weight);
            assert_eq!(a.sigma, b.sigma);
            assert_eq!(a.mean.matrix(), b.mean.matrix());
        }
    }

    #[test]
    fn wishart_model_json_roundtrip() {
        let model = WishartClusterModel::new(vec![WishartCluster {
            label: "w".into(),
            weight: 1.0,
            scale: diag(&[2.0, 0.5]),
            dof: 6.5,
        }])
        .unwrap();
        let back = WishartClusterModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back.clusters()[0].label, "w");
        assert_eq!(back.clusters()[0].dof, 6.5);
        assert_eq!(
            back.clusters()[0].scale.matrix(),
            model.clusters()[0].scale.matrix()
        );
    }
}
