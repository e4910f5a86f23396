//! Seeded multi-user Monte Carlo driver.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{MsType, ScenarioConfig};
use crate::channel_model::{
    one_ring_covariance, ChannelModel, OneRingConfig, PathSupport, SpatialCovariance,
};
use crate::csi_feedback_dumb::{ideal_round, signalling_round, DumbTracker};
use crate::csi_feedback_smart::{compress_feedback, BsRecovery};
use crate::error::{Error, Result};
use crate::kalman_smart_ms::{KldBasis, SmartMsFilter};
use crate::linalg::{CCol, CMat, UnitaryFft};
use crate::path_align::{remainder_partition, DeltaSchedule};
use crate::pilots_tac::{self, PilotConfig};
use crate::precoding_metrics::{nmse, precode_and_se, reconstruct_frequency, Precoder};

const STREAM_SUPPORT: u64 = 0;
const STREAM_CHANNEL: u64 = 1;
const STREAM_PILOT_NOISE: u64 = 2;
const STREAM_COMPRESSION: u64 = 3;

/// Independent ChaCha8 stream per (seed, user, purpose).
pub fn stream_rng(seed: u64, user: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((user as u64) << 8) | stream);
    rng
}

/// One row of the result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub seed: u64,
    pub user: usize,
    pub rs_index: usize,
    pub delta_used: usize,
    pub nmse_ms: f64,
    pub nmse_bs: f64,
    /// Sum over users at this (seed, RS); absent when SE is disabled.
    pub se_mf_sum: Option<f64>,
    pub se_zf_sum: Option<f64>,
    pub feedback_scalars: usize,
    pub bit_cost_dl: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSupport {
    pub seed: u64,
    pub user: usize,
    pub delays: Vec<usize>,
    pub aods_deg: Vec<f64>,
}

/// Sum SE with the true channels used for precoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfectSe {
    pub seed: u64,
    pub rs_index: usize,
    pub se_mf_sum: f64,
    pub se_zf_sum: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub records: Vec<ResultRecord>,
    pub supports: Vec<UserSupport>,
    pub perfect_se: Vec<PerfectSe>,
    /// Number of (seed, RS) pairs where ZF needed diagonal loading.
    pub zf_regularized: usize,
}

/// Everything a tap needs, computed once per distinct AoD.
#[derive(Debug)]
struct TapModel {
    cov: SpatialCovariance,
    root: CMat,
    basis: KldBasis,
}

struct Shared {
    cfg: ScenarioConfig,
    schedule: DeltaSchedule,
    taps: HashMap<u64, Arc<TapModel>>,
    pilots: HashMap<usize, PilotConfig>,
    fft: UnitaryFft,
}

impl Shared {
    fn tap(&self, aod: f64) -> &TapModel {
        &self.taps[&aod.to_bits()]
    }
}

struct Trajectory {
    seed: u64,
    user: usize,
    support: PathSupport,
    truth: Vec<Vec<CCol>>,
    bs_estimate: Vec<Vec<CCol>>,
    rows: Vec<ResultRecord>,
}

pub fn user_support(cfg: &ScenarioConfig, seed: u64, user: usize) -> Result<PathSupport> {
    let c = &cfg.channel;
    let delays = if user == 0 {
        c.traced_support.clone()
    } else {
        let mut rng = stream_rng(seed, user, STREAM_SUPPORT);
        let mut d = index::sample(&mut rng, c.max_delay + 1, c.num_taps).into_vec();
        d.sort_unstable();
        d
    };
    PathSupport::new(delays)
}

fn par_map<T: Send, R: Send>(items: Vec<T>, f: impl Fn(T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

fn build_shared(cfg: &ScenarioConfig) -> Result<Shared> {
    cfg.validate()?;
    let schedule = cfg.delta_schedule()?;
    let (m, n, t) = (
        cfg.system.num_antennas,
        cfg.system.fft_size,
        cfg.channel.num_taps,
    );
    let mut aods: Vec<f64> = (0..cfg.active_users())
        .flat_map(|k| (0..t).map(move |p| (k, p)))
        .map(|(k, p)| cfg.aod_deg(k, p))
        .collect();
    aods.sort_by(f64::total_cmp);
    aods.dedup();
    let power = 1.0 / t as f64;
    let models = par_map(aods, |aod| -> Result<(u64, Arc<TapModel>)> {
        let oc = OneRingConfig {
            aod_deg: aod,
            as_deg: cfg.channel.as_deg,
            num_antennas: m,
            spacing_wavelengths: cfg.channel.antenna_spacing,
            tap_power: power,
        };
        let cov = one_ring_covariance(&oc)?;
        let root = cov.sqrt()?;
        let basis = KldBasis::new(cov.matrix())?;
        Ok((aod.to_bits(), Arc::new(TapModel { cov, root, basis })))
    });
    let taps = models.into_iter().collect::<Result<HashMap<_, _>>>()?;
    let base = PilotConfig::with_zadoff_chu(n, m, cfg.pilot.zc_root, schedule.values()[0])?;
    let pilots = schedule
        .values()
        .into_iter()
        .map(|d| Ok((d, base.with_delta(d)?)))
        .collect::<Result<HashMap<_, _>>>()?;
    Ok(Shared {
        cfg: cfg.clone(),
        schedule,
        taps,
        pilots,
        fft: UnitaryFft::new(n),
    })
}

fn run_user(sh: &Shared, seed: u64, user: usize) -> Result<Trajectory> {
    let cfg = &sh.cfg;
    let (m, rho) = (cfg.system.num_antennas, cfg.system.rho);
    let support = user_support(cfg, seed, user)?;
    let t = support.num_taps();
    let taps: Vec<&TapModel> = (0..t).map(|p| sh.tap(cfg.aod_deg(user, p))).collect();
    let model = ChannelModel {
        support: support.clone(),
        covariances: taps.iter().map(|tm| tm.cov.clone()).collect(),
        roots: taps.iter().map(|tm| tm.root.clone()).collect(),
    };
    let bases: Vec<KldBasis> = taps.iter().map(|tm| tm.basis.clone()).collect();
    let priors: Vec<CMat> = taps.iter().map(|tm| tm.cov.matrix().clone()).collect();
    let mut chan_rng = stream_rng(seed, user, STREAM_CHANNEL);
    let mut noise_rng = stream_rng(seed, user, STREAM_PILOT_NOISE);
    let mut comp_rng = stream_rng(seed, user, STREAM_COMPRESSION);
    let sigma2 = cfg.pilot_noise_var();
    let nu = support.delay_spread();
    let fb = &cfg.feedback;

    enum Pipeline {
        Smart { ms: SmartMsFilter, bs: BsRecovery },
        Dumb { ideal: DumbTracker, bs: DumbTracker },
    }
    let mut pipe = match fb.ms_type {
        MsType::Smart => Pipeline::Smart {
            ms: SmartMsFilter::new(bases.clone(), rho, fb.mse_mode)?,
            bs: BsRecovery::new(&bases, rho, fb.sigma_o2, fb.bs_init)?,
        },
        MsType::Dumb => Pipeline::Dumb {
            ideal: DumbTracker::new(priors.clone(), rho, fb.mse_mode)?,
            bs: DumbTracker::new(priors, rho, fb.mse_mode)?,
        },
    };

    let mut chan = model.initial(&mut chan_rng);
    let mut out = Trajectory {
        seed,
        user,
        support: support.clone(),
        truth: Vec::with_capacity(cfg.run.num_rs),
        bs_estimate: Vec::with_capacity(cfg.run.num_rs),
        rows: Vec::with_capacity(cfg.run.num_rs),
    };
    for n in 0..cfg.run.num_rs {
        if n > 0 {
            chan = model.evolve(&chan, rho, &mut chan_rng)?;
            chan.time_index = n;
        }
        let delta = sh.schedule.delta_at(n);
        let pcfg = &sh.pilots[&delta];
        let part = remainder_partition(&support, delta)?;
        let y =
            pilots_tac::rx_pilot_signal(&chan, &support, pcfg, sigma2, &sh.fft, &mut noise_rng)?;
        let tac = pilots_tac::compute_tac(&y, pcfg, sigma2, &sh.fft)?;
        let folded = pilots_tac::fold_tac(&tac, delta, nu, m)?;
        let (ms_est, bs_est, scalars, bits) = match &mut pipe {
            Pipeline::Smart { ms, bs } => {
                let obs = part
                    .remainders
                    .iter()
                    .map(|&r| pilots_tac::sample_group(&folded, r, m))
                    .collect::<Result<Vec<_>>>()?;
                let noise: Vec<Vec<f64>> = part
                    .remainders
                    .iter()
                    .map(|&r| folded.group_noise(r, m))
                    .collect();
                // The BS mirror reproduces these gains exactly, so they are shared.
                let gains = ms.step(&part, &obs, &noise)?;
                bs.predict(&gains)?;
                let z = bs.design(fb.scalars_per_tap)?;
                let feedback = ms
                    .estimate()
                    .iter()
                    .zip(&z.per_tap)
                    .map(|(f, zp)| compress_feedback(f, zp))
                    .collect::<Result<Vec<_>>>()?;
                bs.correct(&feedback, &z)?;
                let bs_sp: Vec<CCol> = bs
                    .estimate()
                    .iter()
                    .zip(&bases)
                    .map(|(f, b)| b.to_spatial(f))
                    .collect();
                (ms.spatial_estimate(), bs_sp, z.scalars(), 0)
            }
            Pipeline::Dumb { ideal, bs } => {
                ideal_round(ideal, &part, &folded)?;
                let round = signalling_round(
                    bs,
                    &part,
                    &folded,
                    cfg.budget(),
                    fb.compression,
                    &mut comp_rng,
                )?;
                let bits = round.message.as_ref().map_or(0, |msg| msg.bit_cost());
                (
                    ideal.estimate().to_vec(),
                    bs.estimate().to_vec(),
                    round.q.total_width(),
                    bits,
                )
            }
        };
        let nmse_ms = nmse(&chan.taps, &ms_est)?;
        let nmse_bs = nmse(&chan.taps, &bs_est)?;
        if !(nmse_ms.is_finite() && nmse_bs.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite NMSE at seed {seed}, user {user}, RS {n}"
            )));
        }
        out.rows.push(ResultRecord {
            seed,
            user,
            rs_index: n,
            delta_used: delta,
            nmse_ms,
            nmse_bs,
            se_mf_sum: None,
            se_zf_sum: None,
            feedback_scalars: scalars,
            bit_cost_dl: bits,
        });
        out.truth.push(chan.taps.clone());
        out.bs_estimate.push(bs_est);
    }
    Ok(out)
}

struct SeRow {
    mf: f64,
    zf: f64,
    perfect_mf: f64,
    perfect_zf: f64,
    regularized: bool,
}

fn se_at(sh: &Shared, users: &[&Trajectory], n: usize) -> Result<SeRow> {
    let mut truth = Vec::with_capacity(users.len());
    let mut est = Vec::with_capacity(users.len());
    for tr in users {
        truth.push(reconstruct_frequency(&tr.truth[n], &tr.support, &sh.fft)?);
        est.push(reconstruct_frequency(
            &tr.bs_estimate[n],
            &tr.support,
            &sh.fft,
        )?);
    }
    let s2 = sh.cfg.data_noise_var();
    let mf = precode_and_se(&truth, &est, Precoder::Mf, s2)?;
    let zf = precode_and_se(&truth, &est, Precoder::Zf, s2)?;
    let pmf = precode_and_se(&truth, &truth, Precoder::Mf, s2)?;
    let pzf = precode_and_se(&truth, &truth, Precoder::Zf, s2)?;
    Ok(SeRow {
        mf: mf.sum,
        zf: zf.sum,
        perfect_mf: pmf.sum,
        perfect_zf: pzf.sum,
        regularized: zf.regularized,
    })
}

/// Runs every (seed, user) trajectory and, when enabled, the per-RS sum
/// SE. Records are sorted by (seed, user, rs_index).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let sh = build_shared(cfg)?;
    let jobs: Vec<(u64, usize)> = cfg
        .run
        .seeds
        .iter()
        .flat_map(|&s| (0..cfg.active_users()).map(move |k| (s, k)))
        .collect();
    let mut trajectories = par_map(jobs, |(s, k)| run_user(&sh, s, k))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    trajectories.sort_by_key(|t| (t.seed, t.user));

    let supports = trajectories
        .iter()
        .map(|t| UserSupport {
            seed: t.seed,
            user: t.user,
            delays: t.support.delays().to_vec(),
            aods_deg: (0..t.support.num_taps())
                .map(|p| cfg.aod_deg(t.user, p))
                .collect(),
        })
        .collect();

    let mut perfect_se = Vec::new();
    let mut zf_regularized = 0;
    if cfg.se_enabled() {
        let k = cfg.active_users();
        let mut seeds = cfg.run.seeds.clone();
        seeds.sort_unstable();
        let se_jobs: Vec<(usize, usize)> = (0..cfg.run.seeds.len())
            .flat_map(|si| (0..cfg.run.num_rs).map(move |n| (si, n)))
            .collect();
        let rows = par_map(se_jobs.clone(), |(si, n)| {
            let users: Vec<&Trajectory> = trajectories[si * k..(si + 1) * k].iter().collect();
            se_at(&sh, &users, n)
        });
        for ((si, n), row) in se_jobs.into_iter().zip(rows) {
            let row = row?;
            zf_regularized += row.regularized as usize;
            for tr in &mut trajectories[si * k..(si + 1) * k] {
                tr.rows[n].se_mf_sum = Some(row.mf);
                tr.rows[n].se_zf_sum = Some(row.zf);
            }
            perfect_se.push(PerfectSe {
                seed: seeds[si],
                rs_index: n,
                se_mf_sum: row.perfect_mf,
                se_zf_sum: row.perfect_zf,
            });
        }
    }
    perfect_se.sort_by_key(|p| (p.seed, p.rs_index));
    let records = trajectories.into_iter().flat_map(|t| t.rows).collect();
    Ok(RunOutput {
        config: cfg.clone(),
        records,
        supports,
        perfect_se,
        zf_regularized,
    })
}
