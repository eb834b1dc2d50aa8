//! Shared statistical helpers for the integration suites.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use spdgauss::normalization::ZetaTable;
use spdgauss::SpdMatrix;
use std::sync::OnceLock;

/// A dependable m = 2 table shared across the suites (grid wide enough for
/// every fitted dispersion these tests produce).
pub fn table_m2() -> &'static ZetaTable {
    static TABLE: OnceLock<ZetaTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        ZetaTable::build(2, 0.02, 2.5, 48, 300_000, 20_240_601)
            .expect("m=2 table builds")
            .0
    })
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut total = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        total += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * total).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
/// Returns (statistic, asymptotic p-value).
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        let lo = i as f64 / n;
        let hi = (i as f64 + 1.0) / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    (d, kolmogorov_q(lambda))
}

/// Two-sample Kolmogorov-Smirnov test. Returns (statistic, p-value).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xs: Vec<f64> = a.to_vec();
    let mut ys: Vec<f64> = b.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).unwrap());
    ys.sort_by(|u, v| u.partial_cmp(v).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let mut d = 0.0f64;
    let (mut i, mut j) = (0usize, 0usize);
    while i < n && j < m {
        let x = xs[i];
        let y = ys[j];
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n as f64 * m as f64) / (n as f64 + m as f64);
    let sqrt_n = n_eff.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    (d, kolmogorov_q(lambda))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * (1.0 + erf_approx((x - mean) / (sd * std::f64::consts::SQRT_2)))
}

fn erf_approx(x: f64) -> f64 {
    // Abramowitz-Stegun 7.1.26, 1.5e-7 absolute accuracy
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
            + 0.254829592)
            * t
            * (-x * x).exp();
    sign * y
}

/// Random SPD matrix: the exponential of a random symmetric matrix with
/// normal entries of the given spread.
pub fn random_spd<R: Rng + ?Sized>(m: usize, spread: f64, rng: &mut R) -> SpdMatrix {
    let mut sym = DMatrix::zeros(m, m);
    for i in 0..m {
        sym[(i, i)] = spread * rng.sample::<f64, _>(StandardNormal);
        for j in (i + 1)..m {
            let v = spread * rng.sample::<f64, _>(StandardNormal) / 2.0f64.sqrt();
            sym[(i, j)] = v;
            sym[(j, i)] = v;
        }
    }
    let se = sym.symmetric_eigen();
    let vals = se.eigenvalues.map(|l| l.exp());
    let mat = &se.eigenvectors * DMatrix::from_diagonal(&vals) * se.eigenvectors.transpose();
    SpdMatrix::new((&mat + mat.transpose()) * 0.5).expect("exp of symmetric is SPD")
}

/// Random invertible matrix with entries of order one.
pub fn random_invertible<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DMatrix<f64> {
    loop {
        let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        if a.determinant().abs() > 0.1 {
            return a;
        }
    }
}
