//! Closed-form and quadrature computations on 2D Gaussians.
//!
//! Everything here is exact linear algebra on 2x2 SPD matrices: densities,
//! KL divergence, the density inner product ("overlap"), Gauss–Hermite
//! expectations of arbitrary smooth functions, and an unconstrained
//! log-Cholesky parameterization of the covariance so optimizers can move
//! freely without ever producing an invalid matrix.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;

/// Default Gauss–Hermite nodes per axis for [`Gaussian2::expect`].
pub const DEFAULT_QUAD_NODES: usize = 7;

/// Covariances with a larger condition number are rejected rather than
/// silently regularized.
pub const MAX_CONDITION_NUMBER: f64 = 1e8;

const SYMMETRY_TOL: f64 = 1e-12;

/// A 2D Gaussian over positions: mean in meters, SPD covariance in m^2.
///
/// Construction validates symmetry, positive definiteness (via Cholesky)
/// and conditioning, so a value of this type is always usable.
#[derive(Debug, Clone, Copy)]
pub struct Gaussian2 {
    mean: Vector2<f64>,
    cov: Matrix2<f64>,
    /// Cached lower Cholesky factor of `cov`.
    chol: Matrix2<f64>,
}

impl PartialEq for Gaussian2 {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl Gaussian2 {
    pub fn new(mean: Vector2<f64>, cov: Matrix2<f64>) -> Result<Self> {
        if !(mean.iter().all(|v| v.is_finite()) && cov.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidDistribution(
                "non-finite mean or covariance".into(),
            ));
        }
        if (cov[(0, 1)] - cov[(1, 0)]).abs() > SYMMETRY_TOL {
            return Err(Error::InvalidDistribution(format!(
                "covariance is not symmetric: off-diagonal mismatch {:e}",
                (cov[(0, 1)] - cov[(1, 0)]).abs()
            )));
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| {
                Error::InvalidDistribution("covariance is not positive definite".into())
            })?
            .l();
        let (lo, hi) = sym_eigenvalues(&cov);
        if lo <= 0.0 || hi / lo > MAX_CONDITION_NUMBER {
            return Err(Error::InvalidDistribution(format!(
                "covariance condition number {:e} exceeds {:e}",
                hi / lo,
                MAX_CONDITION_NUMBER
            )));
        }
        Ok(Self { mean, cov, chol })
    }

    /// Isotropic Gaussian with standard deviation `sigma`.
    pub fn isotropic(mean: Vector2<f64>, sigma: f64) -> Result<Self> {
        Self::new(mean, Matrix2::identity() * sigma * sigma)
    }

    pub fn mean(&self) -> Vector2<f64> {
        self.mean
    }

    pub fn cov(&self) -> Matrix2<f64> {
        self.cov
    }

    /// Lower-triangular Cholesky factor of the covariance.
    pub fn chol_lower(&self) -> Matrix2<f64> {
        self.chol
    }

    /// Willingness to deviate from the mean, measured as trace of the
    /// covariance.
    pub fn flexibility(&self) -> f64 {
        self.cov.trace()
    }

    pub fn det_cov(&self) -> f64 {
        let d = self.chol[(0, 0)] * self.chol[(1, 1)];
        d * d
    }

    /// Precision matrix (inverse covariance).
    pub fn precision(&self) -> Matrix2<f64> {
        inv_spd(&self.chol)
    }

    /// ln N(x; mean, cov).
    pub fn log_density(&self, x: Vector2<f64>) -> f64 {
        let delta = x - self.mean;
        // solve L w = delta; the quadratic form is |w|^2
        let w = solve_lower(&self.chol, delta);
        let log_det = 2.0 * (self.chol[(0, 0)].ln() + self.chol[(1, 1)].ln());
        -(2.0 * PI).ln() - 0.5 * log_det - 0.5 * w.norm_squared()
    }

    pub fn density(&self, x: Vector2<f64>) -> f64 {
        self.log_density(x).exp()
    }

    /// KL(self || other) in nats; zero iff the distributions coincide.
    pub fn kl_divergence(&self, other: &Gaussian2) -> f64 {
        let prec_q = other.precision();
        let trace_term = (prec_q * self.cov).trace();
        let delta = other.mean - self.mean;
        let quad = (delta.transpose() * prec_q * delta)[(0, 0)];
        let log_det_ratio = other.det_cov().ln() - self.det_cov().ln();
        0.5 * (trace_term + quad - 2.0 + log_det_ratio)
    }

    /// Density inner product `<p, q> = int p(x) q(x) dx`, the per-step
    /// distributional collision measure. Equals N(mu_p - mu_q; 0, cov_p + cov_q).
    pub fn overlap(&self, other: &Gaussian2) -> f64 {
        let sum = self.cov + other.cov;
        let chol = sum
            .cholesky()
            .expect("sum of SPD matrices is SPD")
            .l();
        let delta = self.mean - other.mean;
        let w = solve_lower(&chol, delta);
        let det = {
            let d = chol[(0, 0)] * chol[(1, 1)];
            d * d
        };
        (-0.5 * w.norm_squared()).exp() / (2.0 * PI * det.sqrt())
    }

    /// Gauss–Hermite estimate of `E[f(X)]` with the default rule.
    pub fn expect<F: FnMut(Vector2<f64>) -> f64>(&self, f: F) -> f64 {
        self.expect_with_nodes(f, DEFAULT_QUAD_NODES)
    }

    /// Gauss–Hermite estimate of `E[f(X)]` with `k` nodes per axis,
    /// mapping nodes through x = mean + sqrt(2) L z. Opposite first-axis
    /// nodes are accumulated pairwise, which makes the sum invariant
    /// under reflections of the integrand.
    pub fn expect_with_nodes<F: FnMut(Vector2<f64>) -> f64>(&self, mut f: F, k: usize) -> f64 {
        let rule = hermite_rule(k);
        let nodes = rule.nodes();
        let weights = rule.weights();
        let scaled = self.chol * std::f64::consts::SQRT_2;
        let mut acc = 0.0;
        for (j, &zj) in nodes.iter().enumerate() {
            let wj = weights[j];
            for i in 0..k / 2 {
                let lo = self.mean + scaled * Vector2::new(nodes[i], zj);
                let hi = self.mean + scaled * Vector2::new(nodes[k - 1 - i], zj);
                acc += wj * (weights[i] * f(lo) + weights[k - 1 - i] * f(hi));
            }
            if k % 2 == 1 {
                let mid = self.mean + scaled * Vector2::new(0.0, zj);
                acc += wj * weights[k / 2] * f(mid);
            }
        }
        acc
    }
}

/// Unconstrained parameterization of a 2x2 SPD covariance via the
/// log-Cholesky map: L = [[exp(l11), 0], [l21, exp(l22)]], cov = L L^T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovParam {
    pub l11: f64,
    pub l21: f64,
    pub l22: f64,
}

impl CovParam {
    pub fn new(l11: f64, l21: f64, l22: f64) -> Self {
        Self { l11, l21, l22 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.l11, self.l21, self.l22]
    }
}

/// Extracts log-Cholesky parameters from an SPD covariance.
pub fn encode_cov(cov: &Matrix2<f64>) -> Result<CovParam> {
    if (cov[(0, 1)] - cov[(1, 0)]).abs() > SYMMETRY_TOL {
        return Err(Error::InvalidDistribution(
            "cannot encode an asymmetric covariance".into(),
        ));
    }
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::InvalidDistribution("cannot encode a non-SPD covariance".into()))?
        .l();
    Ok(CovParam {
        l11: chol[(0, 0)].ln(),
        l21: chol[(1, 0)],
        l22: chol[(1, 1)].ln(),
    })
}

/// Rebuilds the covariance; SPD by construction for any finite input.
/// Log-diagonals are clamped to +-300 so the result stays finite.
pub fn decode_cov(p: &CovParam) -> Matrix2<f64> {
    let l = decode_chol(p);
    l * l.transpose()
}

/// Lower Cholesky factor corresponding to `p`.
pub fn decode_chol(p: &CovParam) -> Matrix2<f64> {
    let l11 = p.l11.clamp(-300.0, 300.0).exp();
    let l22 = p.l22.clamp(-300.0, 300.0).exp();
    Matrix2::new(l11, 0.0, p.l21, l22)
}

/// Eigenvalues of a symmetric 2x2 matrix, (low, high).
pub fn sym_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let half_trace = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let radius = (diff * diff + m[(0, 1)] * m[(1, 0)]).max(0.0).sqrt();
    (half_trace - radius, half_trace + radius)
}

fn solve_lower(l: &Matrix2<f64>, b: Vector2<f64>) -> Vector2<f64> {
    let w0 = b.x / l[(0, 0)];
    let w1 = (b.y - l[(1, 0)] * w0) / l[(1, 1)];
    Vector2::new(w0, w1)
}

/// Inverse of L L^T given the lower factor L.
fn inv_spd(l: &Matrix2<f64>) -> Matrix2<f64> {
    // L^{-1} for lower-triangular 2x2
    let a = 1.0 / l[(0, 0)];
    let c = -l[(1, 0)] / (l[(0, 0)] * l[(1, 1)]);
    let d = 1.0 / l[(1, 1)];
    // (L L^T)^{-1} = L^{-T} L^{-1}
    Matrix2::new(a * a + c * c, c * d, c * d, d * d)
}

pub(crate) fn hermite_rule(k: usize) -> Arc<GaussHermite> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(k)
        .or_insert_with(|| Arc::new(GaussHermite::new(k)))
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn standard() -> Gaussian2 {
        Gaussian2::isotropic(Vector2::zeros(), 1.0).unwrap()
    }

    /// Brute-force normalizer of exp(-0.5 (x-mu)^T cov^{-1} (x-mu)) on a grid,
    /// used as an independent density oracle.
    fn grid_normalizer(g: &Gaussian2, half_width: f64, n: usize) -> f64 {
        let prec = g.cov().try_inverse().unwrap();
        let h = 2.0 * half_width / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = Vector2::new(
                    g.mean().x - half_width + (i as f64 + 0.5) * h,
                    g.mean().y - half_width + (j as f64 + 0.5) * h,
                );
                let d = x - g.mean();
                let q = (d.transpose() * prec * d)[(0, 0)];
                total += (-0.5 * q).exp() * h * h;
            }
        }
        total
    }

    #[test]
    fn log_density_at_mean_of_standard_normal() {
        let g = standard();
        assert_abs_diff_eq!(
            g.log_density(Vector2::zeros()),
            -(2.0 * PI).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn log_density_quadratic_term() {
        let g = standard();
        // |x|^2 = 25 so the quadratic term is 12.5
        assert_abs_diff_eq!(
            g.log_density(Vector2::new(3.0, 4.0)),
            -(2.0 * PI).ln() - 12.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn log_density_matches_grid_normalized_oracle() {
        let g = Gaussian2::new(
            Vector2::new(0.3, -0.2),
            Matrix2::new(1.5, 0.4, 0.4, 0.8),
        )
        .unwrap();
        let z = grid_normalizer(&g, 9.0, 1400);
        let x = Vector2::new(1.0, 0.5);
        let d = x - g.mean();
        let prec = g.cov().try_inverse().unwrap();
        let q = (d.transpose() * prec * d)[(0, 0)];
        let oracle = ((-0.5 * q).exp() / z).ln();
        assert_abs_diff_eq!(g.log_density(x), oracle, epsilon = 1e-6);
    }

    #[test]
    fn log_density_at_mean_general_case() {
        let cov = Matrix2::new(2.0, 0.5, 0.5, 1.0);
        let g = Gaussian2::new(Vector2::new(1.0, 2.0), cov).unwrap();
        let expected = -(2.0 * PI).ln() - 0.5 * cov.determinant().ln();
        assert_abs_diff_eq!(g.log_density(g.mean()), expected, epsilon = 1e-12);
    }

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let g = Gaussian2::new(Vector2::new(0.7, -1.1), Matrix2::new(1.2, 0.3, 0.3, 2.0)).unwrap();
        assert_abs_diff_eq!(g.kl_divergence(&g), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn kl_mean_shift_only() {
        let p = Gaussian2::isotropic(Vector2::new(1.0, 0.0), 1.0).unwrap();
        let q = standard();
        assert_abs_diff_eq!(p.kl_divergence(&q), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn kl_covariance_scale_only() {
        let p = Gaussian2::new(Vector2::zeros(), Matrix2::identity() * 2.0).unwrap();
        let q = standard();
        assert_abs_diff_eq!(p.kl_divergence(&q), 1.0 - 2.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn kl_is_asymmetric() {
        let p = Gaussian2::new(Vector2::zeros(), Matrix2::new(4.0, 0.0, 0.0, 9.0)).unwrap();
        let q = standard();
        assert!((p.kl_divergence(&q) - q.kl_divergence(&p)).abs() > 1e-3);
    }

    #[test]
    fn kl_nonnegative_on_seeded_pairs() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = random_gaussian(&mut rng);
            let q = random_gaussian(&mut rng);
            assert!(p.kl_divergence(&q) >= 0.0);
            assert!(p.kl_divergence(&p).abs() <= 1e-12);
        }
    }

    #[test]
    fn kl_matches_quadrature_of_log_ratio() {
        // independent oracle: E_p[ln p - ln q] by Gauss-Hermite
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = random_gaussian(&mut rng);
            let q = random_gaussian(&mut rng);
            let oracle = p.expect(|x| p.log_density(x) - q.log_density(x));
            assert_abs_diff_eq!(p.kl_divergence(&q), oracle, epsilon = 1e-5);
        }
    }

    #[test]
    fn overlap_of_identical_standard_gaussians() {
        let g = standard();
        assert_abs_diff_eq!(g.overlap(&g), 1.0 / (4.0 * PI), epsilon = 1e-14);
    }

    #[test]
    fn overlap_with_unit_mean_offset() {
        let p = Gaussian2::isotropic(Vector2::new(1.0, 0.0), 1.0).unwrap();
        let q = standard();
        assert_abs_diff_eq!(
            p.overlap(&q),
            (-0.25f64).exp() / (4.0 * PI),
            epsilon = 1e-14
        );
    }

    #[test]
    fn overlap_decays_with_separation() {
        let q = standard();
        let mut last = f64::INFINITY;
        for d in [1.0, 3.0, 8.0, 20.0] {
            let p = Gaussian2::isotropic(Vector2::new(d, 0.0), 1.0).unwrap();
            let o = p.overlap(&q);
            assert!(o > 0.0 && o < last);
            last = o;
        }
        assert!(last < 1e-20);
    }

    #[test]
    fn overlap_is_symmetric() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..50 {
            let p = random_gaussian(&mut rng);
            let q = random_gaussian(&mut rng);
            assert_abs_diff_eq!(p.overlap(&q), q.overlap(&p), epsilon = 1e-12);
        }
    }

    #[test]
    fn expect_of_constant_is_one() {
        let g = Gaussian2::new(Vector2::new(2.0, -1.0), Matrix2::new(1.4, -0.3, -0.3, 0.9)).unwrap();
        assert_abs_diff_eq!(g.expect(|_| 1.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn expect_reproduces_mean_component() {
        let g = Gaussian2::new(Vector2::new(3.0, -2.0), Matrix2::new(2.2, 0.7, 0.7, 1.1)).unwrap();
        assert_abs_diff_eq!(g.expect(|x| x.x), 3.0, epsilon = 1e-10);
    }

    #[test]
    fn expect_second_moment_is_trace() {
        let cov = Matrix2::new(1.7, 0.4, 0.4, 0.6);
        let g = Gaussian2::new(Vector2::new(-1.0, 4.0), cov).unwrap();
        let m2 = g.expect(|x| (x - g.mean()).norm_squared());
        assert_abs_diff_eq!(m2, cov.trace(), epsilon = 1e-10);
    }

    #[test]
    fn encode_identity_is_zero_params() {
        let p = encode_cov(&Matrix2::identity()).unwrap();
        assert_abs_diff_eq!(p.l11, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.l21, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.l22, 0.0, epsilon = 1e-14);
        let back = decode_cov(&p);
        assert_abs_diff_eq!((back - Matrix2::identity()).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn encode_diagonal_takes_log_roots() {
        let p = encode_cov(&Matrix2::new(4.0, 0.0, 0.0, 9.0)).unwrap();
        assert_abs_diff_eq!(p.l11, 2.0f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(p.l21, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.l22, 3.0f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn round_trip_of_correlated_covariance() {
        // hand Cholesky: L = [[sqrt(2), 0], [1/sqrt(2), sqrt(3/2)]]
        let cov = Matrix2::new(2.0, 1.0, 1.0, 2.0);
        let p = encode_cov(&cov).unwrap();
        assert_abs_diff_eq!(p.l11, 2.0f64.sqrt().ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(p.l21, 1.0 / 2.0f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(p.l22, (1.5f64).sqrt().ln(), epsilon = 1e-14);
        let back = decode_cov(&p);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(back[(i, j)], cov[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn decode_always_yields_spd() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let p = CovParam::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-4.0..4.0),
            );
            let cov = decode_cov(&p);
            assert!(cov.cholesky().is_some(), "decode produced non-SPD: {cov:?}");
        }
    }

    #[test]
    fn encode_rejects_non_spd() {
        assert!(encode_cov(&Matrix2::new(1.0, 2.0, 2.0, 1.0)).is_err());
        assert!(matches!(
            encode_cov(&Matrix2::new(-1.0, 0.0, 0.0, 1.0)),
            Err(Error::InvalidDistribution(_))
        ));
    }

    #[test]
    fn construction_rejects_bad_covariances() {
        assert!(Gaussian2::new(Vector2::zeros(), Matrix2::new(1.0, 0.5, 0.2, 1.0)).is_err());
        assert!(Gaussian2::new(Vector2::zeros(), Matrix2::new(0.0, 0.0, 0.0, 0.0)).is_err());
        // condition number 1e10
        assert!(Gaussian2::new(Vector2::zeros(), Matrix2::new(1e6, 0.0, 0.0, 1e-4)).is_err());
    }

    /// Monte Carlo oracle for the overlap: draw from p, average q's density.
    fn mc_overlap(p: &Gaussian2, q: &Gaussian2, n: usize, seed: u64) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let l = p.chol_lower();
        let mut acc = 0.0;
        for _ in 0..n {
            let z = Vector2::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
            acc += q.density(p.mean() + l * z);
        }
        acc / n as f64
    }

    fn random_gaussian(rng: &mut ChaCha20Rng) -> Gaussian2 {
        // eigenvalues within [0.25, 4] via a rotation of a diagonal matrix
        let e0 = rng.random_range(0.25..4.0);
        let e1 = rng.random_range(0.25..4.0);
        let theta: f64 = rng.random_range(0.0..PI);
        let (s, c) = theta.sin_cos();
        let r = Matrix2::new(c, -s, s, c);
        let cov = r * Matrix2::new(e0, 0.0, 0.0, e1) * r.transpose();
        // exact symmetrization to keep the constructor happy
        let cov = Matrix2::new(
            cov[(0, 0)],
            0.5 * (cov[(0, 1)] + cov[(1, 0)]),
            0.5 * (cov[(0, 1)] + cov[(1, 0)]),
            cov[(1, 1)],
        );
        let mean = Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        Gaussian2::new(mean, cov).unwrap()
    }

    #[test]
    fn overlap_matches_monte_carlo() {
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        for i in 0..20 {
            let p = random_gaussian(&mut rng);
            let q = random_gaussian(&mut rng);
            let mc = mc_overlap(&p, &q, 100_000, 1000 + i);
            let closed = p.overlap(&q);
            assert!(
                (closed - mc).abs() / closed < 0.02,
                "pair {i}: closed {closed} vs mc {mc}"
            );
        }
    }
}
