//! Feedback compression at a smart mobile and its recovery at the BS.
//!
//! The MS feeds back `x_p = Z_pᴴ f̂_p[n|n]` for every tap. The BS tracks
//! `f̂_p` itself: it evolves as `f̂_p[n|n] = ρ f̂_p[n−1|n−1] + K_p ε`, with
//! `ε` the MS innovation, whose covariance the BS knows from its mirror of
//! the data-free MS recursion.

use crate::error::{Error, Result};
use crate::kalman_smart_ms::{KldBasis, MseMode, SmartGains, SmartMseRecursion};
use crate::linalg::{self, CCol, CMat, HermitianEigen};
use crate::path_align::GroupPartition;

/// Per-tap compression matrices `Z_p` (M×l_p, unit-norm columns).
#[derive(Debug, Clone)]
pub struct CompressionZ {
    pub per_tap: Vec<CMat>,
}

impl CompressionZ {
    pub fn scalars(&self) -> usize {
        self.per_tap.iter().map(|z| z.ncols()).sum()
    }
}

/// The `l` leading eigenvectors of the prediction MSE.
pub fn optimal_z(pred_mse: &CMat, l: usize) -> Result<CMat> {
    let m = pred_mse.nrows();
    if l == 0 || l > m {
        return Err(Error::invalid(format!(
            "feedback width {l} must lie in [1, {m}]"
        )));
    }
    Ok(HermitianEigen::new(pred_mse.as_ref())?.leading_vectors(l))
}

/// `Zᴴ f̂`.
pub fn compress_feedback(estimate: &CCol, z: &CMat) -> Result<CCol> {
    if z.nrows() != estimate.nrows() {
        return Err(Error::invalid(
            "compression matrix does not match the estimate",
        ));
    }
    Ok(z.adjoint() * estimate)
}

/// Upper bound on the one-step trace reduction with `l` scalars:
/// `Σ_{top l} γ² / (σ_o² + γ)` over the eigenvalues of the prediction MSE.
pub fn smart_objective_bound(pred_mse: &CMat, l: usize, sigma_o2: f64) -> Result<f64> {
    let evd = HermitianEigen::new(pred_mse.as_ref())?;
    Ok(evd
        .values
        .iter()
        .take(l)
        .map(|&g| g.max(0.0).powi(2) / (sigma_o2 + g.max(0.0)))
        .sum())
}

/// How the BS initializes `Ṁ[0|−1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BsInit {
    /// `Ṁ[0|−1] = Λ_p`.
    Prior,
    /// `Ṁ[0|−1] = K_p C K_pᴴ`, the exact value given `f̂[−1|−1] = 0`.
    Exact,
}

/// The base station's copy of the MS MSE recursion.
#[derive(Debug, Clone)]
pub struct BsMirror {
    recursion: SmartMseRecursion,
}

impl BsMirror {
    pub fn new(bases: Vec<KldBasis>, rho: f64, mode: MseMode) -> Result<Self> {
        Ok(Self {
            recursion: SmartMseRecursion::new(bases, rho, mode)?,
        })
    }

    /// Advances the mirror by one RS and returns gains and the innovation
    /// covariances `A M[n|n−1] Aᴴ + noise`.
    pub fn step(&mut self, partition: &GroupPartition, noise: &[Vec<f64>]) -> Result<SmartGains> {
        self.recursion.step(partition, noise)
    }

    pub fn recursion(&self) -> &SmartMseRecursion {
        &self.recursion
    }
}

/// Per-tap recovery filter state at the BS.
#[derive(Debug, Clone)]
pub struct BsRecovery {
    rho: f64,
    sigma_o2: f64,
    init: BsInit,
    priors: Vec<CMat>,
    estimate: Vec<CCol>,
    mse: Vec<CMat>,
    predicted: Option<Vec<CMat>>,
    time: i64,
}

impl BsRecovery {
    pub fn new(bases: &[KldBasis], rho: f64, sigma_o2: f64, init: BsInit) -> Result<Self> {
        if !(sigma_o2 > 0.0) {
            return Err(Error::invalid("feedback regularizer must be positive"));
        }
        let priors: Vec<CMat> = bases.iter().map(KldBasis::lambda).collect();
        let m = bases.first().map_or(0, |b| b.dim());
        Ok(Self {
            rho,
            sigma_o2,
            init,
            estimate: vec![CCol::zeros(m); priors.len()],
            mse: vec![CMat::zeros(m, m); priors.len()],
            priors,
            predicted: None,
            time: -1,
        })
    }

    /// Prediction and prediction MSE; returns `Ṁ_p[n|n−1]` for every tap.
    pub fn predict(&mut self, gains: &SmartGains) -> Result<&[CMat]> {
        let mut pred = Vec::with_capacity(self.priors.len());
        for p in 0..self.priors.len() {
            let (k, c) = gains
                .tap_gain(p)
                .ok_or_else(|| Error::invalid(format!("no gain for tap {p}")))?;
            let kck = &k * c * k.adjoint();
            let mut mp = if self.time < 0 {
                match self.init {
                    BsInit::Prior => self.priors[p].clone(),
                    BsInit::Exact => kck,
                }
            } else {
                linalg::scaled(self.mse[p].as_ref(), self.rho * self.rho) + kck
            };
            linalg::hermitize(&mut mp);
            pred.push(mp);
            self.estimate[p] = linalg::scaled_col(self.estimate[p].as_ref(), self.rho);
        }
        self.predicted = Some(pred);
        Ok(self.predicted.as_deref().unwrap())
    }

    /// Optimal compression for the current prediction MSE with `l` scalars per tap.
    pub fn design(&self, l: usize) -> Result<CompressionZ> {
        let pred = self
            .predicted
            .as_ref()
            .ok_or_else(|| Error::Protocol("design before predict".into()))?;
        Ok(CompressionZ {
            per_tap: pred
                .iter()
                .map(|m| optimal_z(m, l))
                .collect::<Result<_>>()?,
        })
    }

    /// Gain, correction and MSE update from the received scalars.
    pub fn correct(&mut self, feedback: &[CCol], z: &CompressionZ) -> Result<()> {
        let pred = self
            .predicted
            .take()
            .ok_or_else(|| Error::Protocol("correct before predict".into()))?;
        if feedback.len() != pred.len() || z.per_tap.len() != pred.len() {
            return Err(Error::Protocol("feedback does not cover every tap".into()));
        }
        for (p, mp) in pred.into_iter().enumerate() {
            let zp = &z.per_tap[p];
            if feedback[p].nrows() != zp.ncols() || zp.nrows() != mp.nrows() {
                return Err(Error::Protocol(format!(
                    "feedback width mismatch for tap {p}"
                )));
            }
            let noise = linalg::scaled(linalg::identity(zp.ncols()).as_ref(), self.sigma_o2);
            let upd = crate::kalman_smart_ms::linear_update(&mp, &zp.adjoint().to_owned(), &noise)?;
            let innovation = &feedback[p] - zp.adjoint() * &self.estimate[p];
            self.estimate[p] = &self.estimate[p] + &upd.gain * &innovation;
            self.mse[p] = upd.posterior;
        }
        self.time += 1;
        Ok(())
    }

    pub fn estimate(&self) -> &[CCol] {
        &self.estimate
    }

    pub fn mse(&self) -> &[CMat] {
        &self.mse
    }

    pub fn time(&self) -> i64 {
        self.time
    }
}

/// One full recovery step: predict, design `Z`, correct with the scalars
/// produced from the MS estimate (the uplink transmission itself).
pub fn bs_kalman_step_recovery(
    bs: &mut BsRecovery,
    gains: &SmartGains,
    ms_estimate: &[CCol],
    scalars_per_tap: usize,
) -> Result<CompressionZ> {
    bs.predict(gains)?;
    let z = bs.design(scalars_per_tap)?;
    let feedback = ms_estimate
        .iter()
        .zip(&z.per_tap)
        .map(|(f, zp)| compress_feedback(f, zp))
        .collect::<Result<Vec<_>>>()?;
    bs.correct(&feedback, &z)?;
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::PathSupport;
    use crate::kalman_smart_ms::SmartMsFilter;
    use crate::linalg::{complex_normal, diag_real};
    use crate::path_align::remainder_partition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_basis(m: usize, rng: &mut ChaCha8Rng) -> KldBasis {
        let a = CMat::from_fn(m, m, |_, _| complex_normal(rng, 1)[0]);
        KldBasis::new(&(&a * a.adjoint())).unwrap()
    }

    #[test]
    fn z_examples() {
        let d = diag_real(&[1.0, 5.0, 3.0]);
        let z = optimal_z(&d, 2).unwrap();
        assert!((z[(1, 0)].re - 1.0).abs() < 1e-12 && (z[(2, 1)].re - 1.0).abs() < 1e-12);
        let full = optimal_z(&d, 3).unwrap();
        assert!((full.adjoint() * &full - linalg::identity(3)).norm_l2() < 1e-12);
        assert!(optimal_z(&d, 0).is_err());
        let f = CCol::from_fn(3, |i| linalg::cr(i as f64 + 1.0));
        let e1 = CMat::from_fn(3, 1, |i, _| linalg::cr(if i == 1 { 1.0 } else { 0.0 }));
        assert_eq!(compress_feedback(&f, &e1).unwrap()[0], linalg::cr(2.0));
    }

    #[test]
    fn lossless_feedback_reproduces_ms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = 4;
        let support = PathSupport::new(vec![0, 3]).unwrap();
        let bases: Vec<KldBasis> = (0..2).map(|_| random_basis(m, &mut rng)).collect();
        let mut ms = SmartMsFilter::new(bases.clone(), 0.9, MseMode::BlockDiagonal).unwrap();
        let mut bs = BsRecovery::new(&bases, 0.9, 1e-8, BsInit::Prior).unwrap();
        for n in 0..5 {
            let part = remainder_partition(&support, [2, 3][n % 2]).unwrap();
            let noise = vec![vec![0.1; m]; part.num_groups()];
            let obs: Vec<CCol> = (0..part.num_groups())
                .map(|_| complex_normal(&mut rng, m))
                .collect();
            let gains = ms.step(&part, &obs, &noise).unwrap();
            bs_kalman_step_recovery(&mut bs, &gains, ms.estimate(), m).unwrap();
            for p in 0..2 {
                assert!((&bs.estimate()[p] - &ms.estimate()[p]).norm_l2() < 1e-4);
            }
        }
    }

    #[test]
    fn mirror_tracks_ms_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = 5;
        let support = PathSupport::new(vec![0, 2, 3]).unwrap();
        let bases: Vec<KldBasis> = (0..3).map(|_| random_basis(m, &mut rng)).collect();
        let mut ms = SmartMsFilter::new(bases.clone(), 0.95, MseMode::BlockDiagonal).unwrap();
        let mut mirror = BsMirror::new(bases, 0.95, MseMode::BlockDiagonal).unwrap();
        for n in 0..50 {
            let part = remainder_partition(&support, [3, 2][n % 2]).unwrap();
            let noise = vec![vec![0.2; m]; part.num_groups()];
            let obs: Vec<CCol> = (0..part.num_groups())
                .map(|_| complex_normal(&mut rng, m))
                .collect();
            let a = ms.step(&part, &obs, &noise).unwrap();
            let b = mirror.step(&part, &noise).unwrap();
            assert!((&a.predicted.to_dense() - &b.predicted.to_dense()).norm_l2() < 1e-10);
            for p in 0..3 {
                let (ka, ca) = a.tap_gain(p).unwrap();
                let (kb, cb) = b.tap_gain(p).unwrap();
                assert!((&ka - &kb).norm_l2() < 1e-10 && (ca - cb).norm_l2() < 1e-10);
                assert!(linalg::hermitian_defect(cb.as_ref()) < 1e-14);
            }
        }
    }

    #[test]
    fn single_tap_innovation_is_rotated_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 4;
        let basis = random_basis(m, &mut rng);
        let part = remainder_partition(&PathSupport::new(vec![5]).unwrap(), 2).unwrap();
        let mut mirror = BsMirror::new(vec![basis.clone()], 0.9, MseMode::Exact).unwrap();
        let gains = mirror.step(&part, &[vec![0.3; m]]).unwrap();
        let (_, c) = gains.tap_gain(0).unwrap();
        let u = linalg::shift_rows(basis.vectors.as_ref(), 2);
        let direct = &u * basis.lambda() * u.adjoint() + diag_real(&[0.3; 4]);
        assert!((c - &direct).norm_l2() < 1e-10);
    }
}
