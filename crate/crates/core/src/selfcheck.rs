//! Numerical self-checks: closed forms against independent oracles.
//!
//! Each check compares an implementation path against a different route
//! to the same quantity (quadrature, Monte Carlo, finite differences,
//! algebraic round-trips) and reports the measured error against its
//! threshold. The comparison functions take the implementation under
//! test as a parameter so the test suite can verify that an injected
//! fault is actually detected.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::gaussian::{decode_cov, encode_cov, CovParam, Gaussian2};
use crate::optimizer::gradient_fd;
use crate::planner::{check_planner_gradients, Strategy};
use crate::scenario::load_config;

/// One check outcome: measured error against its threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub measured: f64,
    pub threshold: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.measured <= self.threshold
    }
}

/// A random Gaussian with covariance eigenvalues in [0.25, 4].
pub fn random_conditioned_gaussian(rng: &mut ChaCha20Rng) -> Gaussian2 {
    let e0 = rng.random_range(0.25..4.0);
    let e1 = rng.random_range(0.25..4.0);
    let theta: f64 = rng.random_range(0.0..PI);
    let (s, c) = theta.sin_cos();
    let r = Matrix2::new(c, -s, s, c);
    let cov = r * Matrix2::new(e0, 0.0, 0.0, e1) * r.transpose();
    let off = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
    let cov = Matrix2::new(cov[(0, 0)], off, off, cov[(1, 1)]);
    let mean = Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    Gaussian2::new(mean, cov).expect("construction from conditioned eigenvalues")
}

/// Max |closed form - Gauss-Hermite quadrature of E_p[ln p - ln q]| over
/// seeded pairs; the `kl` argument is the implementation under test.
pub fn check_kl_against_quadrature(
    kl: impl Fn(&Gaussian2, &Gaussian2) -> f64,
    seed: u64,
    pairs: usize,
) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let p = random_conditioned_gaussian(&mut rng);
        let q = random_conditioned_gaussian(&mut rng);
        let oracle = p.expect(|x| p.log_density(x) - q.log_density(x));
        worst = worst.max((kl(&p, &q) - oracle).abs());
    }
    worst
}

/// Max relative |closed form - Monte Carlo| of the density inner product
/// over seeded pairs, sampling `samples` points from p per pair.
pub fn check_overlap_against_monte_carlo(
    overlap: impl Fn(&Gaussian2, &Gaussian2) -> f64,
    seed: u64,
    pairs: usize,
    samples: usize,
) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let p = random_conditioned_gaussian(&mut rng);
        let q = random_conditioned_gaussian(&mut rng);
        let l = p.chol_lower();
        let mut acc = 0.0;
        for _ in 0..samples {
            let z = Vector2::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
            acc += q.density(p.mean() + l * z);
        }
        let mc = acc / samples as f64;
        let closed = overlap(&p, &q);
        worst = worst.max((closed - mc).abs() / closed);
    }
    worst
}

/// Max elementwise round-trip error of encode/decode over seeded SPD
/// covariances, plus an SPD guarantee for decode over random parameters.
pub fn check_cov_round_trip(seed: u64, cases: usize) -> Result<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let g = random_conditioned_gaussian(&mut rng);
        let cov = g.cov();
        let back = decode_cov(&encode_cov(&cov)?);
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((back[(i, j)] - cov[(i, j)]).abs());
            }
        }
        let p = CovParam::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-3.0..3.0),
        );
        if decode_cov(&p).cholesky().is_none() {
            return Ok(f64::INFINITY);
        }
    }
    Ok(worst)
}

/// Central differences must show second-order error reduction: returns
/// err(h) / err(h/10), which should be near 100.
pub fn check_fd_order() -> Result<f64> {
    let f = |z: &[f64]| (z[0]).exp() * (z[1]).sin() + z[0] * z[1];
    let z = [0.7f64, -0.4];
    let exact = [
        z[0].exp() * z[1].sin() + z[1],
        z[0].exp() * z[1].cos() + z[0],
    ];
    let err = |h: f64| -> Result<f64> {
        let g = gradient_fd(f, &z, h)?;
        Ok(g.iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    };
    Ok(err(1e-3)? / err(1e-4)?)
}

/// Runs the full self-check suite with the library implementations.
pub fn run_selfcheck(seed: u64) -> Result<Vec<CheckResult>> {
    let cfg = load_config(crate::CANONICAL_CONFIG)?;
    let mut results = vec![
        CheckResult {
            name: "kl_closed_form_vs_quadrature",
            measured: check_kl_against_quadrature(|p, q| p.kl_divergence(q), seed, 20),
            threshold: 1e-5,
        },
        CheckResult {
            name: "overlap_closed_form_vs_monte_carlo",
            measured: check_overlap_against_monte_carlo(
                |p, q| p.overlap(q),
                seed,
                20,
                1_000_000,
            ),
            threshold: 0.01,
        },
        CheckResult {
            name: "log_cholesky_round_trip",
            measured: check_cov_round_trip(seed, 1000)?,
            threshold: 1e-10,
        },
    ];
    for strategy in Strategy::ALL {
        results.push(CheckResult {
            name: match strategy {
                Strategy::Ptp => "gradients_ptp",
                Strategy::Tsc => "gradients_tsc",
                Strategy::Dsc => "gradients_dsc",
            },
            measured: check_planner_gradients(strategy, &cfg.scenario, &cfg.safety, seed)?,
            threshold: 1e-4,
        });
    }
    let order = check_fd_order()?;
    results.push(CheckResult {
        name: "fd_second_order_reduction",
        // expressed as a deficit against the expected ~100x reduction
        measured: if order >= 20.0 { 0.0 } else { 20.0 - order },
        threshold: 0.0,
    });
    Ok(results)
}
