//! Tone-domain channel reconstruction, estimation NMSE and downlink sum
//! spectral efficiency under matched-filter and zero-forcing precoding.

use serde::{Deserialize, Serialize};

use crate::channel_model::PathSupport;
use crate::error::{Error, Result};
use crate::linalg::{self, c64, CCol, CMat, HermitianEigen, UnitaryFft};

/// Per-tone `M×1` channel of one user, `H_m(f) = Σ_p h_m(s_p) e^{-j2πf s_p/N}/√N`.
#[derive(Debug, Clone)]
pub struct FrequencyChannel {
    pub tones: Vec<CCol>,
}

impl FrequencyChannel {
    pub fn num_tones(&self) -> usize {
        self.tones.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.tones.first().map_or(0, |h| h.nrows())
    }

    pub fn energy(&self) -> f64 {
        self.tones.iter().map(|h| h.squared_norm_l2()).sum()
    }
}

/// Unitary FFT of the zero-padded CIR at every antenna.
pub fn reconstruct_frequency(
    taps: &[CCol],
    support: &PathSupport,
    fft: &UnitaryFft,
) -> Result<FrequencyChannel> {
    let n = fft.len();
    if taps.len() != support.num_taps() {
        return Err(Error::invalid(
            "one spatial vector per support delay is required",
        ));
    }
    if support.delay_spread() > n {
        return Err(Error::invalid("delay spread exceeds the FFT size"));
    }
    let m = taps.first().map_or(0, |g| g.nrows());
    let mut tones = vec![CCol::zeros(m); n];
    let mut buf = vec![c64::ZERO; n];
    for a in 0..m {
        buf.iter_mut().for_each(|z| *z = c64::ZERO);
        for (g, &d) in taps.iter().zip(support.delays()) {
            buf[d] = g[a];
        }
        fft.forward(&mut buf);
        for (f, &v) in buf.iter().enumerate() {
            tones[f][a] = v;
        }
    }
    Ok(FrequencyChannel { tones })
}

/// `Σ‖h − ĥ‖² / Σ‖h‖²` over taps and antennas.
pub fn nmse(truth: &[CCol], estimate: &[CCol]) -> Result<f64> {
    if truth.len() != estimate.len()
        || truth
            .iter()
            .zip(estimate)
            .any(|(a, b)| a.nrows() != b.nrows())
    {
        return Err(Error::invalid("channel shapes differ"));
    }
    let power: f64 = truth.iter().map(|h| h.squared_norm_l2()).sum();
    if !(power > 0.0) {
        return Err(Error::UndefinedMetric("channel has zero power".into()));
    }
    let err: f64 = truth
        .iter()
        .zip(estimate)
        .map(|(h, e)| (h - e).squared_norm_l2())
        .sum();
    Ok(err / power)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precoder {
    Mf,
    Zf,
}

/// Sum and per-user spectral efficiency averaged over tones.
#[derive(Debug, Clone)]
pub struct SeReport {
    pub per_user: Vec<f64>,
    pub sum: f64,
    /// Set when zero-forcing needed diagonal loading on some tone.
    pub regularized: bool,
}

/// `K×M` matrix whose row `k` is `H_k(f)ᵀ`.
fn stack_users(channels: &[FrequencyChannel], f: usize) -> CMat {
    let m = channels[0].num_antennas();
    CMat::from_fn(channels.len(), m, |k, a| channels[k].tones[f][a])
}

/// `W(f)` with columns scaled to norm `1/√K` (total power 1).
pub fn precoder(h_est: &CMat, mode: Precoder) -> Result<(CMat, bool)> {
    let k = h_est.nrows();
    let ha = h_est.adjoint().to_owned();
    let (mut w, loaded) = match mode {
        Precoder::Mf => (ha, false),
        Precoder::Zf => {
            let mut gram = h_est * &ha;
            linalg::hermitize(&mut gram);
            let evd = HermitianEigen::new(gram.as_ref())?;
            let (hi, lo) = (evd.values[0], *evd.values.last().unwrap());
            let loaded = !(lo > 0.0) || hi / lo > 1e12;
            if loaded {
                let load = 1e-10 * linalg::trace_re(gram.as_ref()).max(f64::MIN_POSITIVE);
                for i in 0..k {
                    gram[(i, i)] += linalg::cr(load);
                }
            }
            let gi = linalg::hpd_solve(gram.as_ref(), linalg::identity(k).as_ref())?;
            (&ha * &gi, loaded)
        }
    };
    let target = 1.0 / (k as f64).sqrt();
    for j in 0..k {
        let nrm = w.col(j).norm_l2();
        let s = if nrm > 0.0 { target / nrm } else { 0.0 };
        w.col_mut(j).iter_mut().for_each(|z| *z *= s);
    }
    Ok((w, loaded))
}

/// Per-user SINR on one tone given the true channel rows and `W`.
pub fn sinr(h_true: &CMat, w: &CMat, noise_var: f64) -> Vec<f64> {
    let g = h_true * w;
    (0..g.nrows())
        .map(|k| {
            let sig = g[(k, k)].norm_sqr();
            let interf: f64 = (0..g.ncols())
                .filter(|&j| j != k)
                .map(|j| g[(k, j)].norm_sqr())
                .sum();
            sig / (interf + noise_var)
        })
        .collect()
}

/// Sum SE of all users, precoding on `estimated` and evaluated on `truth`.
pub fn precode_and_se(
    truth: &[FrequencyChannel],
    estimated: &[FrequencyChannel],
    mode: Precoder,
    noise_var: f64,
) -> Result<SeReport> {
    let k = truth.len();
    if k == 0 || estimated.len() != k {
        return Err(Error::invalid(
            "one true and one estimated channel per user",
        ));
    }
    let (m, n) = (truth[0].num_antennas(), truth[0].num_tones());
    if k > m {
        return Err(Error::invalid("more users than antennas"));
    }
    if truth
        .iter()
        .chain(estimated)
        .any(|c| c.num_tones() != n || c.num_antennas() != m)
    {
        return Err(Error::invalid("channel shapes differ across users"));
    }
    let mut per_user = vec![0.0; k];
    let mut regularized = false;
    for f in 0..n {
        let (w, loaded) = precoder(&stack_users(estimated, f), mode)?;
        regularized |= loaded;
        for (acc, s) in per_user
            .iter_mut()
            .zip(sinr(&stack_users(truth, f), &w, noise_var))
        {
            *acc += (1.0 + s).log2();
        }
    }
    per_user.iter_mut().for_each(|v| *v /= n as f64);
    let sum = per_user.iter().sum();
    Ok(SeReport {
        per_user,
        sum,
        regularized,
    })
}
