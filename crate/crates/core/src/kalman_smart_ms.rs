//! Kalman tracking of the per-tap KLD coordinates at a smart mobile.
//!
//! The state of tap `p` is `f_p = U_pᴴ g_p`, whose prior is `diag(Λ_p)`.
//! Group `i` observes `X_i = Σ_p Θ_{z_{i,p}} U_{t_{i,p}} f_{t_{i,p}} + w_i`.
//! Under a fixed Δ the groups never mix, so the filter splits exactly into
//! one small filter per group; with a varying Δ the cross-tap MSE blocks
//! are either carried (joint update) or dropped after each step.

use crate::error::{Error, Result};
use crate::linalg::{self, c64, CCol, CMat, HermitianEigen};
use crate::path_align::GroupPartition;

/// Eigenvectors `U` and descending eigenvalues `Λ` of one tap covariance.
#[derive(Debug, Clone)]
pub struct KldBasis {
    pub vectors: CMat,
    pub values: Vec<f64>,
}

impl KldBasis {
    /// Negative eigenvalues from round-off are clamped to zero.
    pub fn new(cov: &CMat) -> Result<Self> {
        let evd = HermitianEigen::new(cov.as_ref())?;
        let values = evd.values.iter().map(|&l| l.max(0.0)).collect();
        Ok(Self {
            vectors: evd.vectors,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn lambda(&self) -> CMat {
        linalg::diag_real(&self.values)
    }

    pub fn reconstruct(&self) -> CMat {
        let mut scaled_u = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            for i in 0..self.dim() {
                scaled_u[(i, j)] *= l;
            }
        }
        &scaled_u * self.vectors.adjoint()
    }

    /// `U f`.
    pub fn to_spatial(&self, f: &CCol) -> CCol {
        &self.vectors * f
    }
}

/// `f = Uᴴ Θ_zᵀ g̃`.
pub fn kld_transform(g_shifted: &CCol, basis: &KldBasis, z: usize) -> CCol {
    let g = linalg::unshift_vec(g_shifted.as_ref(), z);
    basis.vectors.adjoint() * &g
}

/// `g̃ = Θ_z U f`.
pub fn kld_inverse(f: &CCol, basis: &KldBasis, z: usize) -> CCol {
    linalg::shift_vec(basis.to_spatial(f).as_ref(), z)
}

/// Estimate and MSE pair `(x̂[n|m], M[n|m])`.
#[derive(Debug, Clone)]
pub struct KalmanState {
    pub estimate: CCol,
    pub mse: CMat,
    pub time: i64,
}

impl KalmanState {
    /// Posterior at `n = −1` equal to the prior, so that the first
    /// prediction yields `x̂[0|−1] = 0`, `M[0|−1] = prior`.
    pub fn from_prior(prior: CMat) -> Self {
        Self {
            estimate: CCol::zeros(prior.nrows()),
            mse: prior,
            time: -1,
        }
    }
}

/// Result of one linear-Gaussian measurement update.
#[derive(Debug, Clone)]
pub struct LinearUpdate {
    pub gain: CMat,
    pub innovation_cov: CMat,
    pub posterior: CMat,
}

/// `S = H P Hᴴ + N`, `K = P Hᴴ S⁻¹`, `P⁺ = P − K H P`.
pub fn linear_update(pred: &CMat, h: &CMat, noise: &CMat) -> Result<LinearUpdate> {
    let hp = h * pred;
    let mut s = &hp * h.adjoint() + noise;
    linalg::hermitize(&mut s);
    let sol = linalg::hpd_solve(s.as_ref(), hp.as_ref())?;
    let gain = sol.adjoint().to_owned();
    let post = pred - &gain * &hp;
    let posterior = linalg::psd_repair(&post, 1e-10)?;
    Ok(LinearUpdate {
        gain,
        innovation_cov: s,
        posterior,
    })
}

fn check_finite(m: &CMat, what: &str) -> Result<()> {
    if m.col_iter()
        .all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    {
        Ok(())
    } else {
        Err(Error::numerical(format!("non-finite {what}")))
    }
}

/// MSE of all taps stored as a `T×T` grid of `M×M` blocks; absent blocks
/// are exactly zero.
#[derive(Debug, Clone)]
pub struct TapBlockMse {
    m: usize,
    t: usize,
    blocks: Vec<Option<CMat>>,
}

impl TapBlockMse {
    pub fn block_diagonal(diag: Vec<CMat>) -> Self {
        let t = diag.len();
        let m = diag.first().map_or(0, |b| b.nrows());
        let mut blocks = vec![None; t * t];
        for (p, b) in diag.into_iter().enumerate() {
            blocks[p * t + p] = Some(b);
        }
        Self { m, t, blocks }
    }

    pub fn from_dense(dense: &CMat, m: usize) -> Self {
        let t = dense.nrows() / m;
        let mut blocks = Vec::with_capacity(t * t);
        for p in 0..t {
            for q in 0..t {
                blocks.push(Some(
                    dense.as_ref().submatrix(p * m, q * m, m, m).to_owned(),
                ));
            }
        }
        Self { m, t, blocks }
    }

    pub fn num_taps(&self) -> usize {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn block(&self, p: usize, q: usize) -> Option<&CMat> {
        self.blocks[p * self.t + q].as_ref()
    }

    pub fn diag_block(&self, p: usize) -> CMat {
        self.block(p, p)
            .cloned()
            .unwrap_or_else(|| CMat::zeros(self.m, self.m))
    }

    /// Dense `M·|taps|` square matrix of the selected taps, in the given order.
    pub fn gather(&self, taps: &[usize]) -> CMat {
        let m = self.m;
        let mut out = CMat::zeros(m * taps.len(), m * taps.len());
        for (a, &p) in taps.iter().enumerate() {
            for (b, &q) in taps.iter().enumerate() {
                if let Some(blk) = self.block(p, q) {
                    out.as_mut()
                        .submatrix_mut(a * m, b * m, m, m)
                        .copy_from(blk);
                }
            }
        }
        out
    }

    pub fn scatter(&mut self, taps: &[usize], dense: &CMat) {
        let m = self.m;
        for (a, &p) in taps.iter().enumerate() {
            for (b, &q) in taps.iter().enumerate() {
                self.blocks[p * self.t + q] =
                    Some(dense.as_ref().submatrix(a * m, b * m, m, m).to_owned());
            }
        }
    }

    pub fn to_dense(&self) -> CMat {
        let all: Vec<usize> = (0..self.t).collect();
        self.gather(&all)
    }

    /// `ρ² M + (1 − ρ²) blkdiag(priors)`.
    pub fn predict(&self, rho: f64, priors: &[CMat]) -> Self {
        let r2 = rho * rho;
        let mut out = self.clone();
        for p in 0..self.t {
            for q in 0..self.t {
                let idx = p * self.t + q;
                if let Some(b) = out.blocks[idx].as_mut() {
                    *b = linalg::scaled(b.as_ref(), r2);
                }
            }
            let add = linalg::scaled(priors[p].as_ref(), 1.0 - r2);
            let idx = p * self.t + p;
            out.blocks[idx] = Some(match out.blocks[idx].take() {
                Some(b) => b + add,
                None => add,
            });
        }
        out
    }

    /// `true` if every stored off-diagonal block pairs taps of one group.
    pub fn is_confined_to(&self, partition: &GroupPartition) -> bool {
        let mut group_of = vec![usize::MAX; self.t];
        for (g, taps) in partition.tap_indices.iter().enumerate() {
            for &p in taps {
                group_of[p] = g;
            }
        }
        (0..self.t)
            .all(|p| (0..self.t).all(|q| self.block(p, q).is_none() || group_of[p] == group_of[q]))
    }

    /// Drops every off-diagonal block; diagonal blocks are PSD-repaired.
    pub fn project_block_diag(&mut self) -> Result<()> {
        for p in 0..self.t {
            for q in 0..self.t {
                if p != q {
                    self.blocks[p * self.t + q] = None;
                }
            }
            if let Some(b) = self.blocks[p * self.t + p].take() {
                self.blocks[p * self.t + p] = Some(linalg::psd_repair(&b, 1e-10)?);
            }
        }
        Ok(())
    }

    pub fn trace(&self) -> f64 {
        (0..self.t).map(|p| self.tap_trace(p)).sum()
    }

    pub fn tap_trace(&self, p: usize) -> f64 {
        self.block(p, p)
            .map_or(0.0, |b| linalg::trace_re(b.as_ref()))
    }

    /// Off-diagonal share of the squared Frobenius norm.
    pub fn off_diagonal_mass(&self) -> f64 {
        let (mut off, mut total) = (0.0, 0.0);
        for p in 0..self.t {
            for q in 0..self.t {
                if let Some(b) = self.block(p, q) {
                    let e = b.squared_norm_l2();
                    total += e;
                    if p != q {
                        off += e;
                    }
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            off / total
        }
    }
}

/// Dense form of the off-diagonal block removal.
pub fn block_diag_project(mse: &CMat, m: usize) -> Result<CMat> {
    let mut blocks = TapBlockMse::from_dense(mse, m);
    blocks.project_block_diag()?;
    Ok(blocks.to_dense())
}

/// How cross-tap MSE blocks are handled from one RS to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MseMode {
    /// Exact recursion: decoupled while the MSE stays confined to the
    /// current groups, a joint update otherwise.
    Exact,
    /// Off-diagonal blocks are dropped after every update.
    BlockDiagonal,
}

/// One measurement update over a set of groups.
#[derive(Debug, Clone)]
pub struct GainBlock {
    pub groups: Vec<usize>,
    /// Support positions, in the row order of `gain`.
    pub taps: Vec<usize>,
    /// Observation matrix (rows: stacked group samples).
    pub h: CMat,
    pub gain: CMat,
    pub innovation_cov: CMat,
}

impl GainBlock {
    /// The `M` rows of the gain belonging to support position `p`.
    pub fn tap_gain(&self, p: usize, m: usize) -> Option<CMat> {
        let slot = self.taps.iter().position(|&t| t == p)?;
        Some(
            self.gain
                .as_ref()
                .submatrix(slot * m, 0, m, self.gain.ncols())
                .to_owned(),
        )
    }
}

/// Data-free products of one recursion step.
#[derive(Debug, Clone)]
pub struct SmartGains {
    pub time: i64,
    pub partition: GroupPartition,
    pub predicted: TapBlockMse,
    pub blocks: Vec<GainBlock>,
}

impl SmartGains {
    /// `(K_p, C)` where `C` is the innovation covariance seen by tap `p`.
    pub fn tap_gain(&self, p: usize) -> Option<(CMat, &CMat)> {
        let m = self.predicted.dim();
        self.blocks
            .iter()
            .find_map(|b| b.tap_gain(p, m).map(|k| (k, &b.innovation_cov)))
    }
}

/// Plans which groups are updated together.
pub(crate) fn plan_blocks(
    pred: &TapBlockMse,
    partition: &GroupPartition,
    mode: MseMode,
) -> Vec<Vec<usize>> {
    let g = partition.num_groups();
    if mode == MseMode::BlockDiagonal || pred.is_confined_to(partition) {
        (0..g).map(|i| vec![i]).collect()
    } else {
        vec![(0..g).collect()]
    }
}

/// Observation matrix `A` of a set of groups: rows follow the group order,
/// columns the taps of those groups in group order.
pub(crate) fn smart_block_matrix(
    partition: &GroupPartition,
    groups: &[usize],
    bases: &[KldBasis],
) -> (Vec<usize>, CMat) {
    let m = bases[0].dim();
    let taps: Vec<usize> = groups
        .iter()
        .flat_map(|&g| partition.tap_indices[g].iter().copied())
        .collect();
    let mut h = CMat::zeros(m * groups.len(), m * taps.len());
    let mut col = 0;
    for (row, &g) in groups.iter().enumerate() {
        for (&t, &z) in partition.tap_indices[g].iter().zip(&partition.shifts[g]) {
            let blk = linalg::shift_rows(bases[t].vectors.as_ref(), z);
            h.as_mut()
                .submatrix_mut(row * m, col * m, m, m)
                .copy_from(&blk);
            col += 1;
        }
    }
    (taps, h)
}

pub(crate) fn noise_matrix(groups: &[usize], noise: &[Vec<f64>]) -> CMat {
    let diag: Vec<f64> = groups
        .iter()
        .flat_map(|&g| noise[g].iter().copied())
        .collect();
    linalg::diag_real(&diag)
}

fn validate_noise(partition: &GroupPartition, noise: &[Vec<f64>], m: usize) -> Result<()> {
    if noise.len() != partition.num_groups() || noise.iter().any(|v| v.len() != m) {
        return Err(Error::invalid(
            "one noise variance per group sample is required",
        ));
    }
    if noise.iter().flatten().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("noise variances must be positive"));
    }
    Ok(())
}

/// The MSE and gain recursion of the smart-MS filter. It never touches
/// observations, so the base station can run an identical copy.
#[derive(Debug, Clone)]
pub struct SmartMseRecursion {
    bases: Vec<KldBasis>,
    priors: Vec<CMat>,
    rho: f64,
    mode: MseMode,
    posterior: TapBlockMse,
    time: i64,
}

impl SmartMseRecursion {
    pub fn new(bases: Vec<KldBasis>, rho: f64, mode: MseMode) -> Result<Self> {
        if bases.is_empty() {
            return Err(Error::invalid("at least one tap is required"));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::invalid("temporal correlation must lie in [0, 1]"));
        }
        let priors: Vec<CMat> = bases.iter().map(KldBasis::lambda).collect();
        let posterior = TapBlockMse::block_diagonal(priors.clone());
        Ok(Self {
            bases,
            priors,
            rho,
            mode,
            posterior,
            time: -1,
        })
    }

    pub fn bases(&self) -> &[KldBasis] {
        &self.bases
    }

    pub fn posterior(&self) -> &TapBlockMse {
        &self.posterior
    }

    pub fn time(&self) -> i64 {
        self.time
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn step(&mut self, partition: &GroupPartition, noise: &[Vec<f64>]) -> Result<SmartGains> {
        let m = self.bases[0].dim();
        validate_noise(partition, noise, m)?;
        if partition.tap_order().len() != self.bases.len() {
            return Err(Error::invalid("partition does not cover the tracked taps"));
        }
        let predicted = self.posterior.predict(self.rho, &self.priors);
        let mut posterior = TapBlockMse::block_diagonal(vec![CMat::zeros(m, m); self.bases.len()]);
        let mut blocks = Vec::new();
        for groups in plan_blocks(&predicted, partition, self.mode) {
            let (taps, h) = smart_block_matrix(partition, &groups, &self.bases);
            let pred = predicted.gather(&taps);
            let upd = linear_update(&pred, &h, &noise_matrix(&groups, noise))?;
            check_finite(&upd.posterior, "posterior MSE")?;
            posterior.scatter(&taps, &upd.posterior);
            blocks.push(GainBlock {
                groups,
                taps,
                h,
                gain: upd.gain,
                innovation_cov: upd.innovation_cov,
            });
        }
        if self.mode == MseMode::BlockDiagonal {
            posterior.project_block_diag()?;
        }
        self.posterior = posterior;
        self.time += 1;
        Ok(SmartGains {
            time: self.time,
            partition: partition.clone(),
            predicted,
            blocks,
        })
    }
}

/// Smart-MS tracker: the MSE recursion plus the KLD-domain estimates.
#[derive(Debug, Clone)]
pub struct SmartMsFilter {
    recursion: SmartMseRecursion,
    estimate: Vec<CCol>,
}

impl SmartMsFilter {
    pub fn new(bases: Vec<KldBasis>, rho: f64, mode: MseMode) -> Result<Self> {
        let estimate = bases.iter().map(|b| CCol::zeros(b.dim())).collect();
        Ok(Self {
            recursion: SmartMseRecursion::new(bases, rho, mode)?,
            estimate,
        })
    }

    /// Prediction, gain, correction and MSE update for one RS, given the
    /// sampled group observations `X_{r_i}`.
    pub fn step(
        &mut self,
        partition: &GroupPartition,
        observations: &[CCol],
        noise: &[Vec<f64>],
    ) -> Result<SmartGains> {
        if observations.len() != partition.num_groups() {
            return Err(Error::invalid("one observation per group is required"));
        }
        let gains = self.recursion.step(partition, noise)?;
        let m = self.recursion.bases[0].dim();
        let rho = self.recursion.rho;
        for f in &mut self.estimate {
            *f = linalg::scaled_col(f.as_ref(), rho);
        }
        for blk in &gains.blocks {
            let f_pred = stack(&blk.taps, &self.estimate, m);
            let x = stack(&blk.groups, observations, m);
            let innovation = &x - &blk.h * &f_pred;
            let f_post = &f_pred + &blk.gain * &innovation;
            for (slot, &p) in blk.taps.iter().enumerate() {
                self.estimate[p] = f_post.as_ref().subrows(slot * m, m).to_owned();
            }
        }
        Ok(gains)
    }

    pub fn estimate(&self) -> &[CCol] {
        &self.estimate
    }

    /// `g_p = U_p f_p` for every tap.
    pub fn spatial_estimate(&self) -> Vec<CCol> {
        self.estimate
            .iter()
            .zip(&self.recursion.bases)
            .map(|(f, b)| b.to_spatial(f))
            .collect()
    }

    pub fn mse(&self) -> &TapBlockMse {
        self.recursion.posterior()
    }

    pub fn recursion(&self) -> &SmartMseRecursion {
        &self.recursion
    }
}

pub(crate) fn stack(indices: &[usize], parts: &[CCol], m: usize) -> CCol {
    let mut out = CCol::zeros(m * indices.len());
    for (slot, &i) in indices.iter().enumerate() {
        out.as_mut().subrows_mut(slot * m, m).copy_from(&parts[i]);
    }
    out
}

/// Dense system matrices of the joint filter: `A` (block-diagonal over
/// groups, columns in group order), `Π` and the stacked prior `Λ`.
#[derive(Debug, Clone)]
pub struct SmartSystem {
    pub a: CMat,
    pub pi: CMat,
    pub lambda: Vec<f64>,
}

impl SmartSystem {
    pub fn new(partition: &GroupPartition, bases: &[KldBasis]) -> Result<Self> {
        let m = bases[0].dim();
        let t = bases.len();
        let groups: Vec<usize> = (0..partition.num_groups()).collect();
        let (_, a) = smart_block_matrix(partition, &groups, bases);
        let (pi, _) = crate::path_align::permutation(partition, t, m);
        let pi = CMat::from_fn(t * m, t * m, |i, j| linalg::cr(pi[(i, j)]));
        let lambda = bases
            .iter()
            .flat_map(|b| b.values.iter().copied())
            .collect();
        Ok(Self { a, pi, lambda })
    }
}

/// The joint filter over all `M·T` coordinates, written exactly as the
/// algorithm lists it (used as an oracle for the decoupled form).
pub fn kalman_step_smart(
    state: &KalmanState,
    obs: &CCol,
    sys: &SmartSystem,
    rho: f64,
    noise: &[f64],
) -> Result<KalmanState> {
    let n = sys.lambda.len();
    if state.estimate.nrows() != n || obs.nrows() != sys.a.nrows() || noise.len() != obs.nrows() {
        return Err(Error::invalid("joint filter dimensions do not match"));
    }
    let r2 = rho * rho;
    let f_pred = linalg::scaled_col(state.estimate.as_ref(), rho);
    let mut m_pred = linalg::scaled(state.mse.as_ref(), r2);
    for (i, &l) in sys.lambda.iter().enumerate() {
        m_pred[(i, i)] += c64::new((1.0 - r2) * l, 0.0);
    }
    let api = &sys.a * &sys.pi;
    let upd = linear_update(&m_pred, &api, &linalg::diag_real(noise))?;
    let innovation = obs - &api * &f_pred;
    let estimate = &f_pred + &upd.gain * &innovation;
    Ok(KalmanState {
        estimate,
        mse: upd.posterior,
        time: state.time + 1,
    })
}
