//! Shifted-FFT pilots, the received pilot tone vector, and the
//! time-domain aggregate channel (TAC) with its folding and sampling.

use std::f64::consts::PI;

use faer::Mat;
use rand::Rng;

use crate::channel_model::{ChannelRealization, PathSupport};
use crate::error::{Error, Result};
use crate::linalg::{c64, complex_normal, CCol, UnitaryFft};
use crate::path_align;

/// Unit-modulus Zadoff–Chu sequence `exp(−jπ u k (k + N mod 2) / N)`.
pub fn zadoff_chu(len: usize, root: usize) -> Vec<c64> {
    let parity = (len % 2) as u128;
    let n = len as u128;
    (0..len as u128)
        .map(|k| {
            // Reduce the quadratic phase index exactly before converting to
            // floating point so long sequences keep full unit modulus.
            let idx = (root as u128 * k % (2 * n)) * ((k + parity) % (2 * n)) % (2 * n);
            c64::from_polar(1.0, -PI * idx as f64 / len as f64)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PilotConfig {
    pub fft_size: usize,
    pub num_antennas: usize,
    pub base_sequence: Vec<c64>,
    pub delta: usize,
}

impl PilotConfig {
    pub fn new(
        fft_size: usize,
        num_antennas: usize,
        base_sequence: Vec<c64>,
        delta: usize,
    ) -> Result<Self> {
        let cfg = Self {
            fft_size,
            num_antennas,
            base_sequence,
            delta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_zadoff_chu(
        fft_size: usize,
        num_antennas: usize,
        root: usize,
        delta: usize,
    ) -> Result<Self> {
        Self::new(fft_size, num_antennas, zadoff_chu(fft_size, root), delta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 || self.num_antennas == 0 {
            return Err(Error::invalid(
                "FFT size and antenna count must be positive",
            ));
        }
        if self.base_sequence.len() != self.fft_size {
            return Err(Error::invalid(
                "base sequence length must equal the FFT size",
            ));
        }
        if let Some(k) = self
            .base_sequence
            .iter()
            .position(|s| (s.norm() - 1.0).abs() > 1e-12)
        {
            return Err(Error::invalid(format!(
                "base sequence entry {k} is not unit modulus"
            )));
        }
        if self.delta == 0 {
            return Err(Error::invalid("cyclic-shift step must be at least 1"));
        }
        if (self.num_antennas - 1) * self.delta >= self.fft_size {
            return Err(Error::invalid("antenna cyclic shifts exceed the FFT size"));
        }
        Ok(())
    }

    /// `τ_m = mΔ` for antennas `m = 0..M`.
    pub fn shifts(&self) -> Vec<usize> {
        (0..self.num_antennas).map(|m| m * self.delta).collect()
    }

    pub fn with_delta(&self, delta: usize) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.delta = delta;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct TacVector {
    pub samples: Vec<c64>,
    pub noise_var: f64,
}

#[derive(Debug, Clone)]
pub struct FoldedTac {
    pub samples: Vec<c64>,
    /// Noise variance of each folded sample (doubled where two TAC
    /// samples were added together).
    pub noise_var: Vec<f64>,
    pub delta: usize,
}

impl FoldedTac {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Noise variances of the samples picked by [`sample_group`].
    pub fn group_noise(&self, remainder: usize, m: usize) -> Vec<f64> {
        (0..m)
            .map(|j| self.noise_var[remainder + j * self.delta])
            .collect()
    }
}

/// Noise-free aggregate `Σ_m Θ_{τ_m} h_m` of the zero-padded CIRs.
pub fn aggregate_cir(
    channel: &ChannelRealization,
    support: &PathSupport,
    cfg: &PilotConfig,
) -> Vec<c64> {
    let n = cfg.fft_size;
    let mut acc = vec![c64::ZERO; n];
    for (m, tau) in cfg.shifts().into_iter().enumerate() {
        for (tap, &d) in channel.taps.iter().zip(support.delays()) {
            acc[(d + tau) % n] += tap[m];
        }
    }
    acc
}

/// `y = Σ_m S_m F_N h_m + ω` with `S_m = S_0 · diag(e^{−j2πkτ_m/N})` and
/// `ω ~ CN(0, noise_var · I)`.
pub fn rx_pilot_signal<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    support: &PathSupport,
    cfg: &PilotConfig,
    noise_var: f64,
    fft: &UnitaryFft,
    rng: &mut R,
) -> Result<Vec<c64>> {
    cfg.validate()?;
    if support.delays().last().copied().unwrap_or(0) >= cfg.fft_size {
        return Err(Error::invalid("tap delay beyond the FFT size"));
    }
    if channel.num_antennas() != cfg.num_antennas || channel.taps.len() != support.num_taps() {
        return Err(Error::invalid(
            "channel shape does not match the pilot configuration",
        ));
    }
    if fft.len() != cfg.fft_size {
        return Err(Error::invalid("FFT plan length mismatch"));
    }
    let mut y = aggregate_cir(channel, support, cfg);
    fft.forward(&mut y);
    for (yk, s) in y.iter_mut().zip(&cfg.base_sequence) {
        *yk *= s;
    }
    if noise_var > 0.0 {
        let w = complex_normal(rng, cfg.fft_size);
        let sd = noise_var.sqrt();
        for (yk, wk) in y.iter_mut().zip(w.iter()) {
            *yk += wk * sd;
        }
    }
    Ok(y)
}

/// `h̄ = F_Nᴴ S_0ᴴ y`.
pub fn compute_tac(
    y: &[c64],
    cfg: &PilotConfig,
    noise_var: f64,
    fft: &UnitaryFft,
) -> Result<TacVector> {
    if y.len() != cfg.fft_size || fft.len() != cfg.fft_size {
        return Err(Error::invalid(
            "received vector length must equal the FFT size",
        ));
    }
    let mut samples: Vec<c64> = y
        .iter()
        .zip(&cfg.base_sequence)
        .map(|(yk, s)| yk * s.conj())
        .collect();
    fft.inverse(&mut samples);
    Ok(TacVector { samples, noise_var })
}

/// The circulant permutation with a single one at row `tau` of column 0.
pub fn cyclic_shift_matrix(tau: usize, size: usize) -> Result<Mat<f64>> {
    if tau >= size {
        return Err(Error::invalid(format!(
            "shift {tau} out of range for size {size}"
        )));
    }
    Ok(Mat::from_fn(size, size, |i, j| {
        if i == (j + tau) % size {
            1.0
        } else {
            0.0
        }
    }))
}

/// Folds the TAC to length `MΔ` after checking that `Δ` keeps paths aligned.
pub fn fold_tac(tac: &TacVector, delta: usize, nu: usize, m: usize) -> Result<FoldedTac> {
    let n = tac.samples.len();
    let allowed = path_align::delta_candidates(n, m, nu)?;
    if !allowed.contains(&delta) {
        return Err(Error::AlignmentViolation(format!(
            "delta {delta} not allowed for N={n}, M={m}, nu={nu} (allowed 1..={})",
            allowed.last().copied().unwrap_or(0)
        )));
    }
    fold_tac_unchecked(tac, delta, nu, m)
}

/// Folding without the alignment check; used to exhibit misalignment.
///
/// Every TAC sample below `Ñ = min((M−1)Δ + ν, N)` is accumulated at its
/// index modulo `Ň = MΔ`. When `Ñ ≤ 2Ň` this is the single tail fold
/// `out(i) = tac(i) + tac(Ň + i)` for `i < Ñ − Ň`.
pub fn fold_tac_unchecked(tac: &TacVector, delta: usize, nu: usize, m: usize) -> Result<FoldedTac> {
    let n = tac.samples.len();
    let folded_len = m * delta;
    if delta == 0 || folded_len > n {
        return Err(Error::invalid("folded length MΔ must lie in [1, N]"));
    }
    let extent = ((m - 1) * delta + nu).min(n).max(folded_len);
    let mut samples = tac.samples[..folded_len].to_vec();
    let mut noise_var = vec![tac.noise_var; folded_len];
    for i in folded_len..extent {
        samples[i % folded_len] += tac.samples[i];
        noise_var[i % folded_len] += tac.noise_var;
    }
    Ok(FoldedTac {
        samples,
        noise_var,
        delta,
    })
}

/// `X_r(j) = folded(r + jΔ)` for `j = 0..M`.
pub fn sample_group(folded: &FoldedTac, remainder: usize, m: usize) -> Result<CCol> {
    if remainder >= folded.delta {
        return Err(Error::invalid("remainder must be smaller than delta"));
    }
    if remainder + (m - 1) * folded.delta >= folded.len() {
        return Err(Error::invalid(
            "folded TAC too short for the requested group",
        ));
    }
    Ok(CCol::from_fn(m, |j| {
        folded.samples[remainder + j * folded.delta]
    }))
}
