//! One-shot MMSE estimate of each shifted tap in an overlap group.

use crate::error::{Error, Result};
use crate::linalg::{self, CCol, CMat, HermitianEigen};

/// Observation `X_r = Σ_p g̃_p + w` together with the shifted priors
/// `R̃_p = Θ_z R Θ_zᵀ`.
#[derive(Debug, Clone)]
pub struct GroupObservation {
    pub x: CCol,
    pub shifted_covs: Vec<CMat>,
    pub noise_var: f64,
}

impl GroupObservation {
    /// Builds the shifted priors from unshifted tap covariances.
    pub fn from_taps(x: CCol, covs: &[&CMat], shifts: &[usize], noise_var: f64) -> Result<Self> {
        if covs.len() != shifts.len() {
            return Err(Error::invalid("one shift per covariance is required"));
        }
        let shifted_covs = covs
            .iter()
            .zip(shifts)
            .map(|(r, &z)| linalg::shift_sym(r.as_ref(), z))
            .collect();
        Self::new(x, shifted_covs, noise_var)
    }

    pub fn new(x: CCol, shifted_covs: Vec<CMat>, noise_var: f64) -> Result<Self> {
        if shifted_covs.is_empty() {
            return Err(Error::invalid("a group needs at least one tap"));
        }
        let m = x.nrows();
        if shifted_covs
            .iter()
            .any(|r| r.nrows() != m || r.ncols() != m)
        {
            return Err(Error::invalid(
                "covariance dimensions do not match the observation",
            ));
        }
        if !(noise_var >= 0.0) {
            return Err(Error::invalid("noise variance must be non-negative"));
        }
        Ok(Self {
            x,
            shifted_covs,
            noise_var,
        })
    }

    /// `Σ_q R̃_q + σ² I`, checked for invertibility when σ² = 0.
    fn innovation_cov(&self) -> Result<CMat> {
        let m = self.x.nrows();
        let mut s = linalg::scaled(linalg::identity(m).as_ref(), self.noise_var);
        for r in &self.shifted_covs {
            s += r;
        }
        linalg::hermitize(&mut s);
        if self.noise_var == 0.0 {
            let evd = HermitianEigen::new(s.as_ref())?;
            let (hi, lo) = (evd.values[0], *evd.values.last().unwrap());
            if !(lo > 0.0) || hi / lo >= 1e12 {
                return Err(Error::numerical("noise-free group covariance is singular"));
            }
        }
        Ok(s)
    }

    fn check_tap(&self, p: usize) -> Result<&CMat> {
        self.shifted_covs
            .get(p)
            .ok_or_else(|| Error::invalid(format!("tap index {p} out of range")))
    }
}

/// `R̃_p (Σ_q R̃_q + σ²I)⁻¹ x`.
pub fn mmse_estimate(obs: &GroupObservation, p: usize) -> Result<CCol> {
    let rp = obs.check_tap(p)?;
    let s = obs.innovation_cov()?;
    let x = obs.x.as_mat().to_owned();
    let w = linalg::hpd_solve(s.as_ref(), x.as_ref())?;
    Ok((rp * &w).col(0).to_owned())
}

/// `R̃_p − R̃_p (Σ_q R̃_q + σ²I)⁻¹ R̃_p`.
pub fn mmse_error_cov(obs: &GroupObservation, p: usize) -> Result<CMat> {
    let rp = obs.check_tap(p)?;
    let s = obs.innovation_cov()?;
    let w = linalg::hpd_solve(s.as_ref(), rp.as_ref())?;
    let mut e = rp - rp * &w;
    linalg::hermitize(&mut e);
    Ok(e)
}
