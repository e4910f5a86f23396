//! Ground-truth downlink channels: tap supports, one-ring spatial
//! covariances and first-order Gauss–Markov evolution of the per-tap
//! spatial vectors.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c64, complex_normal, cr, CCol, CMat, HermitianEigen};

/// Sorted, distinct tap delays shared by every antenna's CIR.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSupport {
    delays: Vec<usize>,
    delay_spread: usize,
}

impl PathSupport {
    /// Builds a support whose delay spread is `max(delays) + 1`.
    pub fn new(delays: Vec<usize>) -> Result<Self> {
        let spread = delays.last().map_or(0, |d| d + 1);
        Self::with_delay_spread(delays, spread)
    }

    pub fn with_delay_spread(delays: Vec<usize>, delay_spread: usize) -> Result<Self> {
        if delays.is_empty() {
            return Err(Error::invalid("tap support must not be empty"));
        }
        if delays.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "tap delays must be strictly increasing: {delays:?}"
            )));
        }
        if delay_spread <= *delays.last().unwrap() {
            return Err(Error::invalid("delay spread must exceed the largest delay"));
        }
        Ok(Self {
            delays,
            delay_spread,
        })
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn num_taps(&self) -> usize {
        self.delays.len()
    }

    /// ν, the CIR length in OFDM chips.
    pub fn delay_spread(&self) -> usize {
        self.delay_spread
    }

    pub fn index_of(&self, delay: usize) -> Option<usize> {
        self.delays.binary_search(&delay).ok()
    }
}

/// One-ring scattering geometry of a single tap seen from a ULA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneRingConfig {
    pub aod_deg: f64,
    pub as_deg: f64,
    pub num_antennas: usize,
    pub spacing_wavelengths: f64,
    pub tap_power: f64,
}

impl OneRingConfig {
    pub fn new(aod_deg: f64, as_deg: f64, num_antennas: usize) -> Self {
        Self {
            aod_deg,
            as_deg,
            num_antennas,
            spacing_wavelengths: 0.5,
            tap_power: 1.0,
        }
    }

    pub fn with_power(mut self, tap_power: f64) -> Self {
        self.tap_power = tap_power;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.as_deg > 0.0) {
            return Err(Error::invalid("angle spread must be positive"));
        }
        if !(self.spacing_wavelengths > 0.0) {
            return Err(Error::invalid("antenna spacing must be positive"));
        }
        if !(self.aod_deg.abs() <= 90.0) {
            return Err(Error::invalid(
                "angle of departure must lie in [-90, 90] degrees",
            ));
        }
        if self.num_antennas == 0 {
            return Err(Error::invalid("at least one antenna is required"));
        }
        if !(self.tap_power >= 0.0) {
            return Err(Error::invalid("tap power must be non-negative"));
        }
        Ok(())
    }
}

/// Spatial covariance `R_{s_p}` of one channel tap.
#[derive(Debug, Clone)]
pub struct SpatialCovariance {
    matrix: CMat,
    tap_power: f64,
}

impl SpatialCovariance {
    /// Validates Hermitian symmetry and positive semi-definiteness.
    pub fn new(matrix: CMat) -> Result<Self> {
        let m = matrix.nrows();
        if m == 0 || m != matrix.ncols() {
            return Err(Error::invalid(
                "spatial covariance must be square and non-empty",
            ));
        }
        if linalg::hermitian_defect(matrix.as_ref()) > 1e-12 {
            return Err(Error::invalid("spatial covariance is not Hermitian"));
        }
        let evd = HermitianEigen::new(matrix.as_ref())?;
        let max = evd.values[0].max(0.0);
        let min = *evd.values.last().unwrap();
        if min < -1e-10 * max {
            return Err(Error::invalid(format!(
                "spatial covariance not PSD (min eigenvalue {min:e})"
            )));
        }
        let tap_power = linalg::trace_re(matrix.as_ref()) / m as f64;
        Ok(Self { matrix, tap_power })
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            matrix: CMat::zeros(m, m),
            tap_power: 0.0,
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn tap_power(&self) -> f64 {
        self.tap_power
    }

    pub fn num_antennas(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn sqrt(&self) -> Result<CMat> {
        linalg::psd_sqrt(self.matrix.as_ref())
    }

    /// Covariance assumed by an estimator that knows `R` only up to an
    /// additive Hermitian error `E`. The result must remain PSD.
    pub fn perturbed(&self, error: &CMat) -> Result<Self> {
        if error.nrows() != self.num_antennas() || error.ncols() != self.num_antennas() {
            return Err(Error::invalid(
                "perturbation does not match the covariance size",
            ));
        }
        Self::new(&self.matrix + error)
    }
}

const SIMPSON_TOL: f64 = 1e-9;
const SIMPSON_MAX_DEPTH: u32 = 40;

/// Adaptive Simpson integration of a complex integrand. Returns `None` if a
/// sub-interval fails to settle within the maximum recursion depth.
fn adaptive_simpson(f: &dyn Fn(f64) -> c64, a: f64, b: f64, tol: f64) -> Option<c64> {
    fn step(
        f: &dyn Fn(f64) -> c64,
        a: f64,
        b: f64,
        fa: c64,
        fm: c64,
        fb: c64,
        whole: c64,
        tol: f64,
        depth: u32,
    ) -> Option<c64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + flm * 4.0 + fm);
        let right = (b - m) / 6.0 * (fm + frm * 4.0 + fb);
        let delta = left + right - whole;
        if delta.norm() <= 15.0 * tol {
            return Some(left + right + delta / 15.0);
        }
        if depth == 0 {
            return None;
        }
        let l = step(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1)?;
        let r = step(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1)?;
        Some(l + r)
    }
    // Seed with a fixed number of panels so oscillatory integrands are not
    // mistaken for converged on the first coarse estimate.
    let panels = 16;
    let h = (b - a) / panels as f64;
    let mut total = c64::ZERO;
    for k in 0..panels {
        let lo = a + h * k as f64;
        let hi = lo + h;
        let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
        let whole = (hi - lo) / 6.0 * (fa + fm * 4.0 + fb);
        total += step(
            f,
            lo,
            hi,
            fa,
            fm,
            fb,
            whole,
            tol / panels as f64,
            SIMPSON_MAX_DEPTH,
        )?;
    }
    Some(total)
}

/// One-ring covariance:
/// `R(p,q) = P/(2Δθ) ∫_{θ̄−Δθ}^{θ̄+Δθ} exp(−j2πd(p−q) sinθ) dθ`.
pub fn one_ring_covariance(cfg: &OneRingConfig) -> Result<SpatialCovariance> {
    cfg.validate()?;
    let m = cfg.num_antennas;
    let center = cfg.aod_deg.to_radians();
    let spread = cfg.as_deg.to_radians();
    let (lo, hi) = (center - spread, center + spread);
    let width = hi - lo;
    let mut lags = Vec::with_capacity(m);
    for lag in 0..m {
        let k = 2.0 * PI * cfg.spacing_wavelengths * lag as f64;
        let integrand = move |theta: f64| c64::from_polar(1.0, -k * theta.sin());
        let value = adaptive_simpson(&integrand, lo, hi, SIMPSON_TOL * width).ok_or_else(|| {
            Error::numerical(format!("one-ring quadrature did not converge at lag {lag}"))
        })?;
        lags.push(value / width * cfg.tap_power);
    }
    let mut r = CMat::from_fn(m, m, |p, q| {
        if p >= q {
            lags[p - q]
        } else {
            lags[q - p].conj()
        }
    });
    for i in 0..m {
        r[(i, i)] = cr(r[(i, i)].re);
    }
    SpatialCovariance::new(r)
}

/// Per-tap spatial vectors `g_{s_p}` at one reference symbol.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub taps: Vec<CCol>,
    pub time_index: usize,
}

impl ChannelRealization {
    pub fn zeros(num_taps: usize, m: usize) -> Self {
        Self {
            taps: vec![CCol::zeros(m); num_taps],
            time_index: 0,
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.taps.first().map_or(0, |t| t.nrows())
    }

    /// The CIR of antenna `m` zero-padded to `len` samples.
    pub fn cir(&self, support: &PathSupport, antenna: usize, len: usize) -> Vec<c64> {
        let mut h = vec![c64::ZERO; len];
        for (tap, &d) in self.taps.iter().zip(support.delays()) {
            h[d] = tap[antenna];
        }
        h
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.squared_norm_l2()).sum()
    }
}

/// Draws each tap independently from `CN(0, R_{s_p})`.
pub fn generate_initial<R: Rng + ?Sized>(
    covs: &[SpatialCovariance],
    rng: &mut R,
) -> Result<ChannelRealization> {
    let roots = covs
        .iter()
        .map(SpatialCovariance::sqrt)
        .collect::<Result<Vec<_>>>()?;
    Ok(generate_initial_with_roots(&roots, rng))
}

pub fn generate_initial_with_roots<R: Rng + ?Sized>(
    roots: &[CMat],
    rng: &mut R,
) -> ChannelRealization {
    let taps = roots
        .iter()
        .map(|root| {
            let u = complex_normal(rng, root.ncols());
            root * &u
        })
        .collect();
    ChannelRealization {
        taps,
        time_index: 0,
    }
}

/// `g[n] = ρ g[n−1] + √(1−ρ²) R^{1/2} u`.
pub fn evolve<R: Rng + ?Sized>(
    prev: &ChannelRealization,
    rho: f64,
    cov_roots: &[CMat],
    rng: &mut R,
) -> Result<ChannelRealization> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid("temporal correlation must lie in [0, 1]"));
    }
    if cov_roots.len() != prev.taps.len() {
        return Err(Error::invalid("one covariance root per tap is required"));
    }
    let innov = (1.0 - rho * rho).max(0.0).sqrt();
    let taps = prev
        .taps
        .iter()
        .zip(cov_roots)
        .map(|(g, root)| {
            if innov == 0.0 {
                return g.clone();
            }
            let u = complex_normal(rng, root.ncols());
            linalg::scaled_col(g.as_ref(), rho) + linalg::scaled_col((root * &u).as_ref(), innov)
        })
        .collect();
    Ok(ChannelRealization {
        taps,
        time_index: prev.time_index + 1,
    })
}

/// Covariances and their square roots for one user's taps.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub support: PathSupport,
    pub covariances: Vec<SpatialCovariance>,
    pub roots: Vec<CMat>,
}

impl ChannelModel {
    pub fn new(support: PathSupport, covariances: Vec<SpatialCovariance>) -> Result<Self> {
        if covariances.len() != support.num_taps() {
            return Err(Error::invalid("one spatial covariance per tap is required"));
        }
        let roots = covariances
            .iter()
            .map(SpatialCovariance::sqrt)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            support,
            covariances,
            roots,
        })
    }

    /// Equal-power one-ring taps so that `Σ_p tr(R_{s_p}) = M`.
    pub fn one_ring(
        support: PathSupport,
        aods_deg: &[f64],
        as_deg: f64,
        m: usize,
        spacing: f64,
    ) -> Result<Self> {
        if aods_deg.len() != support.num_taps() {
            return Err(Error::invalid("one angle of departure per tap is required"));
        }
        let power = 1.0 / support.num_taps() as f64;
        let covs = aods_deg
            .iter()
            .map(|&aod| {
                let cfg = OneRingConfig {
                    aod_deg: aod,
                    as_deg,
                    num_antennas: m,
                    spacing_wavelengths: spacing,
                    tap_power: power,
                };
                one_ring_covariance(&cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(support, covs)
    }

    pub fn num_antennas(&self) -> usize {
        self.covariances[0].num_antennas()
    }

    pub fn initial<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        generate_initial_with_roots(&self.roots, rng)
    }

    pub fn evolve<R: Rng + ?Sized>(
        &self,
        prev: &ChannelRealization,
        rho: f64,
        rng: &mut R,
    ) -> Result<ChannelRealization> {
        evolve(prev, rho, &self.roots, rng)
    }
}
