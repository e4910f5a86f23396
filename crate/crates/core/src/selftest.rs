//! Fast property checks run by `csi-align selftest`.
//!
//! Each check compares a library routine with a direct evaluation on a few
//! small random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel_model::{one_ring_covariance, ChannelRealization, OneRingConfig, PathSupport};
use crate::csi_feedback_dumb::{optimal_q, CodebookMessage, GroupCompression};
use crate::csi_feedback_smart::{optimal_z, smart_objective_bound};
use crate::kalman_smart_ms::linear_update;
use crate::linalg::{self, c64, complex_normal, CMat, HermitianEigen, UnitaryFft};
use crate::mmse_estimation::{mmse_error_cov, GroupObservation};
use crate::path_align::{
    delta_candidates, delta_cycle_set, is_valid_cycle_set, remainder_partition,
};
use crate::pilots_tac::{self, PilotConfig};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(&mut ChaCha8Rng) -> Result<(bool, String)>;

const CHECKS: [(&str, Check); 8] = [
    ("tac_shift_and_sum", tac_shift_and_sum),
    ("fold_and_sample_structure", fold_and_sample),
    ("cycle_set_full_scale", cycle_set),
    ("mmse_orthogonal_overlap", mmse_orthogonal),
    ("kalman_update_vs_dense", kalman_update),
    ("joint_compression_eigensum", joint_compression),
    ("smart_compression_bound", smart_compression),
    ("codebook_round_trip", codebook_round_trip),
];

/// Runs every check with a fixed seed.
pub fn run_all() -> Vec<CheckResult> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(i, (name, check))| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f + i as u64);
            match check(&mut rng) {
                Ok((passed, detail)) => CheckResult {
                    name,
                    passed,
                    detail,
                },
                Err(e) => CheckResult {
                    name,
                    passed: false,
                    detail: format!("error: {e}"),
                },
            }
        })
        .collect()
}

fn random_channel(rng: &mut ChaCha8Rng, t: usize, m: usize) -> ChannelRealization {
    ChannelRealization {
        taps: (0..t).map(|_| complex_normal(rng, m)).collect(),
        time_index: 0,
    }
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let a = CMat::from_fn(n, n, |_, _| complex_normal(rng, 1)[0]);
    &a * a.adjoint()
}

fn tac_shift_and_sum(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(16..=128usize);
        let m = rng.random_range(2..=8usize);
        let delta = rng.random_range(1..=(n - 1) / (m - 1));
        let support = PathSupport::new(vec![0, rng.random_range(1..n)])?;
        let chan = random_channel(rng, 2, m);
        let cfg = PilotConfig::with_zadoff_chu(n, m, 1, delta)?;
        let fft = UnitaryFft::new(n);
        let y = pilots_tac::rx_pilot_signal(&chan, &support, &cfg, 0.0, &fft, rng)?;
        let tac = pilots_tac::compute_tac(&y, &cfg, 0.0, &fft)?;
        let mut want = vec![c64::ZERO; n];
        for a in 0..m {
            for (p, &d) in support.delays().iter().enumerate() {
                want[(d + a * delta) % n] += chan.taps[p][a];
            }
        }
        let err: f64 = tac
            .samples
            .iter()
            .zip(&want)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum();
        let norm: f64 = want.iter().map(|v| v.norm_sqr()).sum();
        worst = worst.max((err / norm).sqrt());
    }
    Ok((worst <= 1e-10, format!("worst relative error {worst:.1e}")))
}

fn fold_and_sample(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let (n, m, nu) = (256, 16, 20);
    let support = PathSupport::new(vec![0, 3, 8, 11, 19])?;
    let chan = random_channel(rng, support.num_taps(), m);
    let fft = UnitaryFft::new(n);
    let mut worst = 0.0f64;
    for delta in delta_candidates(n, m, nu)? {
        let cfg = PilotConfig::with_zadoff_chu(n, m, 1, delta)?;
        let y = pilots_tac::rx_pilot_signal(&chan, &support, &cfg, 0.0, &fft, rng)?;
        let tac = pilots_tac::compute_tac(&y, &cfg, 0.0, &fft)?;
        let folded = pilots_tac::fold_tac(&tac, delta, nu, m)?;
        let part = remainder_partition(&support, delta)?;
        for (i, &r) in part.remainders.iter().enumerate() {
            let x = pilots_tac::sample_group(&folded, r, m)?;
            let mut want = linalg::CCol::zeros(m);
            for (&p, &z) in part.tap_indices[i].iter().zip(&part.shifts[i]) {
                want += linalg::shift_vec(chan.taps[p].as_ref(), z);
            }
            worst = worst.max((&x - &want).norm_l2() / want.norm_l2());
        }
    }
    Ok((worst <= 1e-10, format!("worst relative error {worst:.1e}")))
}

fn cycle_set(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let cands = delta_candidates(1024, 128, 56)?;
    let set = delta_cycle_set(&cands)?;
    Ok((
        set == [8, 7, 6, 5] && is_valid_cycle_set(&set, &cands),
        format!("{set:?}"),
    ))
}

fn mmse_orthogonal(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let m = 8;
    let u = HermitianEigen::new(random_psd(rng, m).as_ref())?.vectors;
    let l1: Vec<f64> = (0..m)
        .map(|i| {
            if i < 3 {
                rng.random_range(0.5..2.0)
            } else {
                0.0
            }
        })
        .collect();
    let l2: Vec<f64> = (0..m)
        .map(|i| {
            if i >= 3 {
                rng.random_range(0.5..2.0)
            } else {
                0.0
            }
        })
        .collect();
    let r1 = &u * linalg::diag_real(&l1) * u.adjoint();
    let r2 = &u * linalg::diag_real(&l2) * u.adjoint();
    let s2 = 0.1;
    let obs = GroupObservation::new(linalg::CCol::zeros(m), vec![r1, r2], s2)?;
    let got = linalg::trace_re(mmse_error_cov(&obs, 0)?.as_ref());
    let want: f64 = l1.iter().map(|&l| l * s2 / (l + s2)).sum();
    let err = (got - want).abs() / want;
    Ok((err <= 1e-8, format!("relative gap {err:.1e}")))
}

fn kalman_update(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let (n, k) = (6, 4);
    let p = random_psd(rng, n);
    let h = CMat::from_fn(k, n, |_, _| complex_normal(rng, 1)[0]);
    let noise = linalg::diag_real(&[0.3; 4]);
    let upd = linear_update(&p, &h, &noise)?;
    let s = &h * &p * h.adjoint() + &noise;
    let want = &p - &p * h.adjoint() * linalg::hpd_solve(s.as_ref(), (&h * &p).as_ref())?;
    let err = linalg::frob((&upd.posterior - &want).as_ref()) / linalg::frob(want.as_ref());
    Ok((err <= 1e-10, format!("relative error {err:.1e}")))
}

fn joint_compression(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let m = 8;
    let support = PathSupport::new(vec![0, 1, 4])?;
    let part = remainder_partition(&support, 3)?;
    let pred = random_psd(rng, 3 * m);
    let noise = vec![0.2; 2 * m];
    let mut worst = 0.0f64;
    for l in [1, 3, 6] {
        let jc = optimal_q(&pred, &part, &noise, l)?;
        let got = jc.problem.objective(&jc.q)?;
        let want: f64 = jc.problem.eigenvalues()[..l].iter().sum();
        worst = worst.max((got - want).abs() / want);
    }
    // A single tap group is its own joint problem.
    let r = one_ring_covariance(&OneRingConfig::new(20.0, 5.0, m))?;
    let gc = GroupCompression::new(r.matrix(), &[0], &[0.1; 8])?;
    let q = gc.optimal(2)?;
    worst = worst.max((gc.objective(&q)? - gc.eigenvalues()[..2].iter().sum::<f64>()).abs());
    Ok((worst <= 1e-8, format!("worst relative gap {worst:.1e}")))
}

fn smart_compression(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let m = 8;
    let p = random_psd(rng, m);
    let sigma_o2 = 1e-3;
    let mut worst = 0.0f64;
    for l in 1..=4 {
        let z = optimal_z(&p, l)?;
        let upd = linear_update(
            &p,
            &z.adjoint().to_owned(),
            &linalg::diag_real(&vec![sigma_o2; l]),
        )?;
        let reduction = linalg::trace_re(p.as_ref()) - linalg::trace_re(upd.posterior.as_ref());
        let bound = smart_objective_bound(&p, l, sigma_o2)?;
        worst = worst.max((reduction - bound).abs() / bound);
    }
    Ok((worst <= 1e-8, format!("worst relative gap {worst:.1e}")))
}

fn codebook_round_trip(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut ok = true;
    for _ in 0..50 {
        let m = rng.random_range(2..=512usize);
        let groups: Vec<Vec<u16>> = (0..rng.random_range(0..5))
            .map(|_| {
                (0..rng.random_range(0..4))
                    .map(|_| rng.random_range(0..m) as u16)
                    .collect()
            })
            .collect();
        let msg = CodebookMessage::new(m, groups)?;
        ok &= CodebookMessage::decode(&msg.encode()?, m)? == msg;
    }
    let cost = CodebookMessage::new(128, vec![vec![0; 7]])?.bit_cost();
    Ok((
        ok && cost == 49,
        format!("round trips exact: {ok}, bit cost {cost}"),
    ))
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for r in super::run_all() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
