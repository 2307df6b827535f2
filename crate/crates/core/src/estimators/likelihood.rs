use num_complex::Complex64;
use serde::Serialize;

use super::sieve::SievedBasis;
use crate::array_model::SensorArray;
use crate::error::{Result, SimlError};
use crate::field_sim::{SampleCovariance, SourceModel};
use crate::linalg::{self, CMatrix};
use crate::sphere_grid::SphereGrid;

/// Estimators refuse sieves with cond(GᴴG) above this.
pub const MAX_GRAM_CONDITIONING: f64 = 1e12;

/// Maximum-likelihood fit of the sieved kernel.
#[derive(Debug, Clone)]
pub struct KappaEstimate {
    pub r_hat: CMatrix,
    pub sigma_hat: f64,
    /// The joint trace formula went negative and σ̂ was clamped to zero.
    pub sigma_clamped: bool,
    /// σ was supplied rather than estimated.
    pub known_noise: bool,
    /// Per-snapshot log-likelihood at the estimate; `None` when the fitted model
    /// covariance is not positive definite (e.g. σ̂ = 0).
    pub log_likelihood: Option<f64>,
    pub basis: SievedBasis,
}

/// JSON sidecar describing a [`KappaEstimate`].
#[derive(Debug, Clone, Serialize)]
pub struct KappaSummary {
    #[serde(rename = "M")]
    pub m: usize,
    pub sigma_hat: f64,
    pub log_likelihood: Option<f64>,
    pub conditioning: f64,
    pub sigma_clamped: bool,
    pub known_noise: bool,
}

impl KappaEstimate {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn summary(&self) -> KappaSummary {
        KappaSummary {
            m: self.dim(),
            sigma_hat: self.sigma_hat,
            log_likelihood: self.log_likelihood,
            conditioning: self.basis.gram_conditioning(),
            sigma_clamped: self.sigma_clamped,
            known_noise: self.known_noise,
        }
    }
}

fn check_inputs(sample: &SampleCovariance, basis: &SievedBasis) -> Result<()> {
    if sample.dim() != basis.n_sensors() {
        return Err(SimlError::InvalidArgument(format!(
            "sample covariance is {0}x{0} but the sieve has {1} sensors",
            sample.dim(),
            basis.n_sensors()
        )));
    }
    let condition = basis.gram_conditioning();
    if condition.is_nan() || condition > MAX_GRAM_CONDITIONING {
        return Err(SimlError::Conditioning { condition, limit: MAX_GRAM_CONDITIONING });
    }
    Ok(())
}

/// G†(Σ̂ − σI)(G†)ᴴ, re-Hermitianized.
fn congruence(basis: &SievedBasis, sample: &CMatrix, sigma: f64) -> CMatrix {
    let pinv = basis.pinv();
    let mut centered = sample.clone();
    for i in 0..centered.nrows() {
        centered[(i, i)] -= Complex64::new(sigma, 0.0);
    }
    linalg::hermitianize(&(pinv * centered * pinv.adjoint()))
}

/// Closed-form maximizer of the sieved likelihood for a known noise power.
pub fn estimate_known_noise(sample: &SampleCovariance, basis: &SievedBasis, sigma: f64) -> Result<KappaEstimate> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(SimlError::InvalidArgument(format!("sigma must be ≥ 0, got {sigma}")));
    }
    check_inputs(sample, basis)?;
    let r_hat = congruence(basis, sample.matrix(), sigma);
    let log_likelihood = if sigma > 0.0 { log_likelihood(sample, basis, &r_hat, sigma).ok() } else { None };
    Ok(KappaEstimate {
        r_hat,
        sigma_hat: sigma,
        sigma_clamped: false,
        known_noise: true,
        log_likelihood,
        basis: basis.clone(),
    })
}

/// Joint closed-form maximizer over (R, σ). Requires M < L.
pub fn estimate_joint(sample: &SampleCovariance, basis: &SievedBasis) -> Result<KappaEstimate> {
    let (l, m) = (basis.n_sensors(), basis.dim());
    if m >= l {
        return Err(SimlError::Identifiability { m, l });
    }
    check_inputs(sample, basis)?;
    // Tr(Σ̂ − GG†Σ̂) with GG† = UUᴴ
    let u = basis.range_basis();
    let captured = linalg::trace_re(&(u.adjoint() * sample.matrix() * u));
    let raw = (linalg::trace_re(sample.matrix()) - captured) / (l - m) as f64;
    let (sigma_hat, sigma_clamped) = if raw < 0.0 { (0.0, true) } else { (raw, false) };
    let r_hat = congruence(basis, sample.matrix(), sigma_hat);
    let log_likelihood = if sigma_hat > 0.0 { log_likelihood(sample, basis, &r_hat, sigma_hat).ok() } else { None };
    Ok(KappaEstimate { r_hat, sigma_hat, sigma_clamped, known_noise: false, log_likelihood, basis: basis.clone() })
}

/// ℓ = −Tr[(GRGᴴ + σI)⁻¹Σ̂] − log|GRGᴴ + σI|, Wishart constants dropped.
pub fn log_likelihood(sample: &SampleCovariance, basis: &SievedBasis, r: &CMatrix, sigma: f64) -> Result<f64> {
    let m = basis.dim();
    if r.shape() != (m, m) {
        return Err(SimlError::InvalidArgument(format!("R must be {m}x{m}, got {}x{}", r.nrows(), r.ncols())));
    }
    if sample.dim() != basis.n_sensors() {
        return Err(SimlError::InvalidArgument("sample and sieve disagree on L".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SimlError::Domain(format!("log-likelihood needs σ > 0, got {sigma}")));
    }
    let g = basis.g();
    let mut model = g * r * g.adjoint();
    for i in 0..model.nrows() {
        model[(i, i)] += Complex64::new(sigma, 0.0);
    }
    let chol = linalg::cholesky_pd(linalg::hermitianize(&model))
        .ok_or_else(|| SimlError::Domain("model covariance GRGᴴ + σI is not positive definite".into()))?;
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum();
    let solved = chol.solve(sample.matrix());
    let value = -linalg::trace_re(&solved) - log_det;
    if !value.is_finite() {
        return Err(SimlError::Domain("log-likelihood is not finite".into()));
    }
    Ok(value)
}

/// E[R̂] = G†(Σ − σI)(G†)ᴴ computed from the population covariance.
pub fn kappa_project_expectation(
    model: &SourceModel,
    array: &SensorArray,
    sigma: f64,
    basis: &SievedBasis,
    grid: &SphereGrid,
) -> Result<CMatrix> {
    if basis.n_sensors() != array.len() {
        return Err(SimlError::InvalidArgument("sieve and array disagree on L".into()));
    }
    let condition = basis.gram_conditioning();
    if condition.is_nan() || condition > MAX_GRAM_CONDITIONING {
        return Err(SimlError::Conditioning { condition, limit: MAX_GRAM_CONDITIONING });
    }
    let population = model.population_covariance(array, sigma, grid)?;
    Ok(congruence(basis, &population, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::sieve::{eigen_sieve, EigenSieve};
    use crate::field_sim::{sample_covariance, standard_complex_normal, SourceComponent};
    use crate::linalg::{frobenius, identity};
    use crate::sphere_grid::{make_cap_grid, Direction};
    use proptest::prelude::*;

    fn setup(l: usize, seed: u64) -> (SensorArray, SampleCovariance) {
        let array = SensorArray::random_disk(l, 6.0, 1.0, seed).unwrap();
        let mix = standard_complex_normal(l, 3, seed + 100);
        let sigma = &mix * mix.adjoint() + identity(l);
        (array, sample_covariance(&sigma, 400, seed + 7).unwrap())
    }

    fn random_hermitian_psd(m: usize, seed: u64) -> CMatrix {
        let x = standard_complex_normal(m, m, seed);
        &x * x.adjoint()
    }

    #[test]
    fn known_noise_on_pure_noise_gives_zero() {
        let array = SensorArray::random_disk(8, 6.0, 1.0, 1).unwrap();
        let sample = SampleCovariance::new(identity(8).scale(0.7), 100).unwrap();
        let basis = eigen_sieve(&sample, &array, 5).unwrap();
        let est = estimate_known_noise(&sample, &basis, 0.7).unwrap();
        assert!(linalg::max_abs(&est.r_hat) < 1e-12);
        assert!(est.known_noise);
    }

    #[test]
    fn full_dimension_reconstructs_centered_sample() {
        let (array, sample) = setup(10, 3);
        let basis = eigen_sieve(&sample, &array, 10).unwrap();
        let est = estimate_known_noise(&sample, &basis, 0.5).unwrap();
        let recon = basis.g() * &est.r_hat * basis.g().adjoint();
        let target = sample.matrix() - identity(10).scale(0.5);
        assert!(frobenius(&(recon - &target)) / frobenius(&target) < 1e-10);
    }

    #[test]
    fn joint_on_pure_noise_recovers_sigma() {
        let array = SensorArray::random_disk(9, 6.0, 1.0, 5).unwrap();
        let sample = SampleCovariance::new(identity(9).scale(2.0), 50).unwrap();
        // Pure noise has a degenerate spectrum; any orthonormal W is a valid sieve.
        let w = standard_complex_normal(9, 4, 3).qr().q();
        let basis = SievedBasis::from_weights(w, &linalg::to_complex(&array.gram_matrix())).unwrap();
        let est = estimate_joint(&sample, &basis).unwrap();
        assert!((est.sigma_hat - 2.0).abs() < 1e-12);
        assert!(linalg::max_abs(&est.r_hat) < 1e-12);
        assert!(!est.sigma_clamped);
    }

    #[test]
    fn joint_recovers_exact_model() {
        let (array, sample) = setup(14, 9);
        let basis = eigen_sieve(&sample, &array, 5).unwrap();
        let q = random_hermitian_psd(5, 77);
        let sigma = 0.3;
        let exact = basis.g() * &q * basis.g().adjoint() + identity(14).scale(sigma);
        let exact = SampleCovariance::new(linalg::hermitianize(&exact), 1000).unwrap();
        let est = estimate_joint(&exact, &basis).unwrap();
        assert!((est.sigma_hat - sigma).abs() / sigma < 1e-10);
        assert!(frobenius(&(&est.r_hat - &q)) / frobenius(&q) < 1e-10);
    }

    #[test]
    fn joint_requires_m_below_l() {
        let (array, sample) = setup(6, 2);
        let basis = eigen_sieve(&sample, &array, 6).unwrap();
        assert!(matches!(estimate_joint(&sample, &basis), Err(SimlError::Identifiability { m: 6, l: 6 })));
    }

    #[test]
    fn joint_clamps_negative_sigma() {
        // All of Σ̂ lives in range(G) apart from a slightly negative direction
        // outside it, so the residual trace is negative.
        let l = 5;
        let w = CMatrix::identity(l, 2);
        let basis = SievedBasis::from_parts(w.clone(), w).unwrap();
        let mut m = CMatrix::zeros(l, l);
        m[(0, 0)] = Complex64::new(1.0, 0.0);
        m[(1, 1)] = Complex64::new(1.0, 0.0);
        m[(4, 4)] = Complex64::new(-1e-11, 0.0);
        let sample = SampleCovariance::new(m, 10).unwrap();
        let est = estimate_joint(&sample, &basis).unwrap();
        assert!(est.sigma_clamped);
        assert_eq!(est.sigma_hat, 0.0);
        assert!(est.log_likelihood.is_none());
    }

    #[test]
    fn conditioning_guard() {
        let l = 4;
        let w = CMatrix::identity(l, 2);
        let mut g = w.clone();
        g[(1, 1)] = Complex64::new(1e-7, 0.0);
        let basis = SievedBasis::from_parts(w, g).unwrap();
        let sample = SampleCovariance::new(identity(l), 10).unwrap();
        assert!(matches!(estimate_known_noise(&sample, &basis, 1.0), Err(SimlError::Conditioning { .. })));
    }

    #[test]
    fn log_likelihood_of_diagonal_model() {
        let (array, sample) = setup(8, 4);
        let basis = eigen_sieve(&sample, &array, 3).unwrap();
        let sigma = 1.3;
        let ll = log_likelihood(&sample, &basis, &CMatrix::zeros(3, 3), sigma).unwrap();
        let expected = -linalg::trace_re(sample.matrix()) / sigma - 8.0 * sigma.ln();
        assert!((ll - expected).abs() < 1e-10 * expected.abs());
    }

    #[test]
    fn log_likelihood_at_exact_fit() {
        let (array, sample) = setup(8, 5);
        let basis = eigen_sieve(&sample, &array, 3).unwrap();
        let r = random_hermitian_psd(3, 1);
        let exact = linalg::hermitianize(&(basis.g() * &r * basis.g().adjoint() + identity(8).scale(0.4)));
        let fitted = SampleCovariance::new(exact.clone(), 10).unwrap();
        let ll = log_likelihood(&fitted, &basis, &r, 0.4).unwrap();
        let log_det = nalgebra::Cholesky::new(exact).unwrap().determinant().ln();
        assert!((ll - (-8.0 - log_det)).abs() < 1e-9 * log_det.abs().max(1.0));
    }

    #[test]
    fn log_likelihood_matches_dense_evaluation() {
        let (array, sample) = setup(7, 6);
        let basis = eigen_sieve(&sample, &array, 4).unwrap();
        let r = random_hermitian_psd(4, 9).scale(0.01);
        let sigma = 0.9;
        let model = basis.g() * &r * basis.g().adjoint() + identity(7).scale(sigma);
        let inv = model.clone().try_inverse().unwrap();
        let det = model.determinant();
        let dense = -(inv * sample.matrix()).trace().re - det.re.ln();
        let ll = log_likelihood(&sample, &basis, &r, sigma).unwrap();
        assert!((ll - dense).abs() < 1e-9 * dense.abs());
    }

    #[test]
    fn log_likelihood_domain_errors() {
        let (array, sample) = setup(6, 7);
        let basis = eigen_sieve(&sample, &array, 2).unwrap();
        assert!(matches!(log_likelihood(&sample, &basis, &CMatrix::zeros(2, 2), 0.0), Err(SimlError::Domain(_))));
        let negative = CMatrix::identity(2, 2).scale(-1e6);
        assert!(matches!(log_likelihood(&sample, &basis, &negative, 1.0), Err(SimlError::Domain(_))));
    }

    #[test]
    fn expectation_of_empty_model_is_zero() {
        let array = SensorArray::random_disk(6, 6.0, 1.0, 2).unwrap();
        let grid = make_cap_grid(Direction::Z, 0.3, 4).unwrap();
        let w = standard_complex_normal(6, 3, 3).qr().q();
        let basis = SievedBasis::from_weights(w, &linalg::to_complex(&array.gram_matrix())).unwrap();
        let e = kappa_project_expectation(&SourceModel::default(), &array, 0.5, &basis, &grid).unwrap();
        assert!(linalg::max_abs(&e) < 1e-12);
    }

    #[test]
    fn expectation_at_full_dimension_reproduces_signal() {
        let array = SensorArray::random_disk(8, 6.0, 1.0, 2).unwrap();
        let grid = make_cap_grid(Direction::Z, 0.5, 8).unwrap();
        let model =
            SourceModel::new(vec![SourceComponent::Blob { center: Direction::Z, width: 0.1, peak_power: 2.0 }], vec![])
                .unwrap();
        let sigma = 0.2;
        let population = model.population_covariance(&array, sigma, &grid).unwrap();
        let basis = eigen_sieve(&SampleCovariance::new(population.clone(), 1).unwrap(), &array, 8).unwrap();
        let e = kappa_project_expectation(&model, &array, sigma, &basis, &grid).unwrap();
        let recon = basis.g() * e * basis.g().adjoint();
        let signal = population - identity(8).scale(sigma);
        assert!(frobenius(&(recon - &signal)) / frobenius(&signal) < 1e-10);
    }

    #[test]
    fn subspace_remixing_leaves_estimate_span_invariant() {
        // Rotating W by a unitary V gives R̂' = Vᴴ R̂ V, hence the same W R̂ Wᴴ.
        let (array, sample) = setup(12, 11);
        let sieve = EigenSieve::new(&sample, &array).unwrap();
        let basis = sieve.basis(4).unwrap();
        let v = standard_complex_normal(4, 4, 5).qr().q();
        let rotated = SievedBasis::from_weights(basis.w() * &v, &linalg::to_complex(&array.gram_matrix())).unwrap();
        let a = estimate_joint(&sample, &basis).unwrap();
        let b = estimate_joint(&sample, &rotated).unwrap();
        assert!((a.sigma_hat - b.sigma_hat).abs() < 1e-10 * a.sigma_hat);
        let ka = basis.w() * &a.r_hat * basis.w().adjoint();
        let kb = rotated.w() * &b.r_hat * rotated.w().adjoint();
        assert!(frobenius(&(ka - &kb)) < 1e-10 * frobenius(&kb));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]
        /// The closed form is a local maximum of the likelihood.
        #[test]
        fn joint_estimate_is_local_maximum(seed in 0u64..500) {
            let (array, sample) = setup(10, seed);
            let basis = eigen_sieve(&sample, &array, 4).unwrap();
            let est = estimate_joint(&sample, &basis).unwrap();
            let best = est.log_likelihood.unwrap();
            for k in 0..10u64 {
                let dr = linalg::hermitianize(&standard_complex_normal(4, 4, seed * 100 + k)).scale(1e-3);
                let ds = 1e-3 * ((k as f64) - 4.5) / 4.5;
                let ll = log_likelihood(&sample, &basis, &(&est.r_hat + dr), est.sigma_hat * (1.0 + ds));
                if let Ok(ll) = ll {
                    prop_assert!(ll <= best + 1e-12 * best.abs());
                }
            }
        }
    }
}
