//! Base-station tracking for a dumb mobile that only forwards compressed
//! TAC samples `x_i = Q_iᴴ X_i`, plus the compression designs and the
//! codebook signalling protocol.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kalman_smart_ms::{
    linear_update, plan_blocks, stack, KalmanState, MseMode, TapBlockMse,
};
use crate::linalg::{self, complex_normal, CCol, CMat, HermitianEigen};
use crate::path_align::GroupPartition;
use crate::pilots_tac::{self, FoldedTac};

/// How the per-RS compression matrix is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompressionMode {
    /// One `MG×L` matrix over all groups.
    OptimalJoint,
    /// Independent optimal `Q_i` per group.
    OptimalBlock,
    /// `L_i` columns of the unitary FFT matrix per group.
    DftCodebook,
    /// First `L_i` columns of a random Householder reflector.
    HouseholderBaseline,
}

/// The quantities of the compression problem of one group:
/// `𝓑 = D + B M Bᴴ`, `𝓐 = B M² Bᴴ`, `𝒞 = 𝓑^{-1/2} 𝓐 𝓑^{-1/2}`.
#[derive(Debug, Clone)]
pub struct GroupCompression {
    pub script_b: CMat,
    pub script_a: CMat,
    pub b_inv_sqrt: CMat,
    pub c: CMat,
    pub eigen: HermitianEigen,
}

impl GroupCompression {
    /// `pred` is the group's prediction MSE with taps in group order,
    /// `shifts` their `z` values and `noise` the per-sample noise variance.
    pub fn new(pred: &CMat, shifts: &[usize], noise: &[f64]) -> Result<Self> {
        let m = noise.len();
        if pred.nrows() != m * shifts.len() || pred.ncols() != pred.nrows() {
            return Err(Error::invalid("group MSE does not match the shifts"));
        }
        if noise.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::numerical("compression design needs positive noise"));
        }
        let bm = apply_b(pred, shifts, m);
        let mut script_b = linalg::diag_real(noise);
        for (p, &z) in shifts.iter().enumerate() {
            script_b += linalg::shift_cols(bm.as_ref().subcols(p * m, m), z);
        }
        linalg::hermitize(&mut script_b);
        let mut script_a = &bm * bm.adjoint();
        linalg::hermitize(&mut script_a);
        Self::from_parts(script_b, script_a, noise)
    }

    fn from_parts(script_b: CMat, script_a: CMat, noise: &[f64]) -> Result<Self> {
        let floor = noise.iter().copied().fold(f64::INFINITY, f64::min) / 100.0;
        let b_inv_sqrt = linalg::psd_inv_sqrt(script_b.as_ref(), floor)?;
        let mut c = &b_inv_sqrt * &script_a * &b_inv_sqrt;
        linalg::hermitize(&mut c);
        let eigen = HermitianEigen::new(c.as_ref())?;
        if eigen.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite compression spectrum"));
        }
        Ok(Self {
            script_b,
            script_a,
            b_inv_sqrt,
            c,
            eigen,
        })
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    /// `Q = 𝓑^{-1/2} U(:, :L) Ω` with `Ω` normalizing the columns.
    pub fn optimal(&self, l: usize) -> Result<CMat> {
        self.check_width(l)?;
        let q = &self.b_inv_sqrt * self.eigen.vectors.as_ref().subcols(0, l);
        Ok(normalize_columns(q))
    }

    /// Rayleigh quotient `f_cᴴ𝓐f_c / f_cᴴ𝓑f_c` of every FFT column, i.e. the
    /// objective at `Q = f_c`. Equals the spectrum of `𝒞` when the group
    /// MSE is circulant.
    pub fn dft_scores(&self) -> Vec<f64> {
        let g = self.fft_grams();
        (0..self.dim())
            .map(|c| g.a[(c, c)].re / g.b[(c, c)].re)
            .collect()
    }

    /// The `L` best-scoring FFT columns (ties to the lower index).
    pub fn dft(&self, l: usize) -> Result<(CMat, Vec<usize>)> {
        self.check_width(l)?;
        let scores = self.dft_scores();
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let picked: Vec<usize> = order.into_iter().take(l).collect();
        Ok((dft_columns(self.dim(), &picked), picked))
    }

    /// `Fᴴ𝓑F` and `Fᴴ𝓐F`, so that FFT-column subsets are scored cheaply.
    pub fn fft_grams(&self) -> FftGrams {
        let f = linalg::dft_matrix(self.dim());
        let fh = f.adjoint().to_owned();
        FftGrams {
            b: &fh * &self.script_b * &f,
            a: &fh * &self.script_a * &f,
        }
    }

    /// `tr((Qᴴ𝓑Q)⁻¹ Qᴴ𝓐Q)`, the one-step reduction of the MSE trace.
    pub fn objective(&self, q: &CMat) -> Result<f64> {
        rayleigh_objective(&self.script_b, &self.script_a, q)
    }

    fn check_width(&self, l: usize) -> Result<()> {
        if l > self.dim() {
            return Err(Error::invalid(format!(
                "budget {l} exceeds group dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// FFT-domain form of one group's compression problem.
#[derive(Debug, Clone)]
pub struct FftGrams {
    b: CMat,
    a: CMat,
}

impl FftGrams {
    /// Objective of `Q = F(:, idx)`.
    pub fn objective(&self, idx: &[usize]) -> Result<f64> {
        if idx.is_empty() {
            return Ok(0.0);
        }
        let pick = |g: &CMat| CMat::from_fn(idx.len(), idx.len(), |i, j| g[(idx[i], idx[j])]);
        let sol = linalg::hpd_solve(pick(&self.b).as_ref(), pick(&self.a).as_ref())?;
        Ok(linalg::trace_re(sol.as_ref()))
    }
}

/// `B M` for `B = [Θ_{z_1}, …]`.
fn apply_b(mat: &CMat, shifts: &[usize], m: usize) -> CMat {
    let mut out = CMat::zeros(m, mat.ncols());
    for (p, &z) in shifts.iter().enumerate() {
        out += linalg::shift_rows(mat.as_ref().subrows(p * m, m), z);
    }
    out
}

fn rayleigh_objective(script_b: &CMat, script_a: &CMat, q: &CMat) -> Result<f64> {
    if q.ncols() == 0 {
        return Ok(0.0);
    }
    let qbq = q.adjoint() * script_b * q;
    let qaq = q.adjoint() * script_a * q;
    let sol = linalg::hpd_solve(qbq.as_ref(), qaq.as_ref())?;
    Ok(linalg::trace_re(sol.as_ref()))
}

pub fn normalize_columns(mut q: CMat) -> CMat {
    for j in 0..q.ncols() {
        let n = q.col(j).norm_l2();
        if n > 0.0 {
            let s = linalg::cr(1.0 / n);
            q.col_mut(j).iter_mut().for_each(|z| *z *= s);
        }
    }
    q
}

pub fn dft_columns(m: usize, indices: &[usize]) -> CMat {
    let mut q = CMat::zeros(m, indices.len());
    for (j, &c) in indices.iter().enumerate() {
        q.col_mut(j).copy_from(&linalg::dft_column(m, c));
    }
    q
}

/// Greedy split of `L` over groups by the largest eigenvalues overall;
/// ties go to the lower group, then the lower eigen-index.
pub fn allocate_budget(eigenvalues: &[Vec<f64>], l: usize) -> Result<Vec<usize>> {
    let total: usize = eigenvalues.iter().map(Vec::len).sum();
    if l > total {
        return Err(Error::invalid(format!(
            "budget {l} exceeds the {total} available directions"
        )));
    }
    let mut all: Vec<(f64, usize, usize)> = eigenvalues
        .iter()
        .enumerate()
        .flat_map(|(g, vals)| vals.iter().enumerate().map(move |(k, &v)| (v, g, k)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut counts = vec![0; eigenvalues.len()];
    for &(_, g, _) in all.iter().take(l) {
        counts[g] += 1;
    }
    Ok(counts)
}

/// First `l` columns of `I − 2vvᴴ` for a random unit `v`.
pub fn householder_q<R: Rng + ?Sized>(rng: &mut R, m: usize, l: usize) -> Result<CMat> {
    if l > m {
        return Err(Error::invalid("Householder width exceeds the dimension"));
    }
    let v = complex_normal(rng, m);
    let v = linalg::scaled_col(v.as_ref(), 1.0 / v.norm_l2());
    Ok(householder_from(&v, l))
}

pub fn householder_from(v: &CCol, l: usize) -> CMat {
    let m = v.nrows();
    CMat::from_fn(m, l, |i, j| {
        let id = if i == j {
            linalg::cr(1.0)
        } else {
            linalg::c64::ZERO
        };
        id - v[i] * v[j].conj() * 2.0
    })
}

/// Joint compression design over all groups.
#[derive(Debug, Clone)]
pub struct JointCompression {
    pub q: CMat,
    pub problem: GroupCompression,
}

/// `B Π` (MG×MT): the rows of group `i` see `Θ_z` at the columns of its
/// taps (support order).
pub fn joint_b_matrix(partition: &GroupPartition, num_taps: usize, m: usize) -> CMat {
    let g = partition.num_groups();
    let mut b = CMat::zeros(g * m, num_taps * m);
    for i in 0..g {
        for (&t, &z) in partition.tap_indices[i].iter().zip(&partition.shifts[i]) {
            for j in 0..m {
                b[(i * m + (j + z) % m, t * m + j)] = linalg::cr(1.0);
            }
        }
    }
    b
}

/// `Q = (D + BΠMΠᴴBᴴ)^{-1/2} U(:, :L) Ω` for the full MT×MT prediction MSE
/// (support order) and stacked per-sample noise.
pub fn optimal_q(
    pred: &CMat,
    partition: &GroupPartition,
    noise: &[f64],
    l: usize,
) -> Result<JointCompression> {
    let m = noise.len() / partition.num_groups().max(1);
    let t = pred.nrows() / m;
    let bpi = joint_b_matrix(partition, t, m);
    if bpi.nrows() != noise.len() {
        return Err(Error::invalid("noise vector does not match the groups"));
    }
    let bm = &bpi * pred;
    let mut script_b = &bm * bpi.adjoint() + linalg::diag_real(noise);
    linalg::hermitize(&mut script_b);
    let mut script_a = &bm * bm.adjoint();
    linalg::hermitize(&mut script_a);
    let problem = GroupCompression::from_parts(script_b, script_a, noise)?;
    let q = problem.optimal(l)?;
    Ok(JointCompression { q, problem })
}

/// Dumb-MS BS tracking over the whole `M·T` state in support order, with a dense
/// `MG×L` compression matrix (oracle form).
pub fn bs_kalman_step_dumb(
    state: &KalmanState,
    x: &CCol,
    q: &CMat,
    partition: &GroupPartition,
    priors: &[CMat],
    rho: f64,
    noise: &[f64],
) -> Result<KalmanState> {
    let m = priors[0].nrows();
    let t = priors.len();
    let bpi = joint_b_matrix(partition, t, m);
    if q.nrows() != bpi.nrows() || x.nrows() != q.ncols() || noise.len() != q.nrows() {
        return Err(Error::invalid(
            "compressed observation dimensions do not match",
        ));
    }
    let pred = TapBlockMse::from_dense(&state.mse, m)
        .predict(rho, priors)
        .to_dense();
    let x_pred = linalg::scaled_col(state.estimate.as_ref(), rho);
    let h = q.adjoint() * &bpi;
    let sigma = q.adjoint() * linalg::diag_real(noise) * q;
    let upd = linear_update(&pred, &h, &sigma)?;
    let estimate = &x_pred + &upd.gain * (x - &h * &x_pred);
    Ok(KalmanState {
        estimate,
        mse: upd.posterior,
        time: state.time + 1,
    })
}

/// Per-RS compression in one of the two structural forms.
#[derive(Debug, Clone)]
pub enum QChoice {
    /// `Q_i` per group (`M×L_i`, `L_i` may be zero).
    Block(Vec<CMat>),
    /// One `MG×L` matrix.
    Joint(CMat),
}

impl QChoice {
    pub fn total_width(&self) -> usize {
        match self {
            QChoice::Block(qs) => qs.iter().map(|q| q.ncols()).sum(),
            QChoice::Joint(q) => q.ncols(),
        }
    }

    /// `x = Qᴴ X` from the per-group samples.
    pub fn compress(&self, samples: &[CCol]) -> Vec<CCol> {
        match self {
            QChoice::Block(qs) => qs
                .iter()
                .zip(samples)
                .map(|(q, x)| q.adjoint() * x)
                .collect(),
            QChoice::Joint(q) => {
                let m = samples[0].nrows();
                let idx: Vec<usize> = (0..samples.len()).collect();
                vec![q.adjoint() * stack(&idx, samples, m)]
            }
        }
    }
}

/// The prediction half of a BS step, kept until the feedback arrives.
#[derive(Debug, Clone)]
pub struct DumbPrediction {
    pub partition: GroupPartition,
    pub predicted: TapBlockMse,
    pub noise: Vec<Vec<f64>>,
}

impl DumbPrediction {
    pub fn group_mse(&self, group: usize) -> CMat {
        self.predicted.gather(&self.partition.tap_indices[group])
    }

    pub fn group_compression(&self, group: usize) -> Result<GroupCompression> {
        GroupCompression::new(
            &self.group_mse(group),
            &self.partition.shifts[group],
            &self.noise[group],
        )
    }
}

/// Dumb-MS tracking at the BS: the state is the spatial tap vectors `g_p`.
#[derive(Debug, Clone)]
pub struct DumbTracker {
    priors: Vec<CMat>,
    rho: f64,
    mode: MseMode,
    estimate: Vec<CCol>,
    posterior: TapBlockMse,
    time: i64,
}

impl DumbTracker {
    pub fn new(priors: Vec<CMat>, rho: f64, mode: MseMode) -> Result<Self> {
        if priors.is_empty() {
            return Err(Error::invalid("at least one tap is required"));
        }
        let m = priors[0].nrows();
        Ok(Self {
            estimate: vec![CCol::zeros(m); priors.len()],
            posterior: TapBlockMse::block_diagonal(priors.clone()),
            priors,
            rho,
            mode,
            time: -1,
        })
    }

    pub fn dim(&self) -> usize {
        self.priors[0].nrows()
    }

    pub fn predict(
        &mut self,
        partition: &GroupPartition,
        noise: Vec<Vec<f64>>,
    ) -> Result<DumbPrediction> {
        let m = self.dim();
        if noise.len() != partition.num_groups() || noise.iter().any(|v| v.len() != m) {
            return Err(Error::invalid(
                "one noise variance per group sample is required",
            ));
        }
        if partition.tap_order().len() != self.priors.len() {
            return Err(Error::invalid("partition does not cover the tracked taps"));
        }
        for g in &mut self.estimate {
            *g = linalg::scaled_col(g.as_ref(), self.rho);
        }
        Ok(DumbPrediction {
            partition: partition.clone(),
            predicted: self.posterior.predict(self.rho, &self.priors),
            noise,
        })
    }

    /// Gain, correction and MSE update from the compressed feedback.
    pub fn correct(&mut self, pred: DumbPrediction, q: &QChoice, feedback: &[CCol]) -> Result<()> {
        let m = self.dim();
        let part = &pred.partition;
        let g_count = part.num_groups();
        let plan = match q {
            QChoice::Block(qs) => {
                if qs.len() != g_count || feedback.len() != g_count {
                    return Err(Error::Protocol(
                        "one compression matrix and feedback vector per group".into(),
                    ));
                }
                plan_blocks(&pred.predicted, part, self.mode)
            }
            QChoice::Joint(_) => {
                if feedback.len() != 1 {
                    return Err(Error::Protocol(
                        "joint compression sends a single feedback vector".into(),
                    ));
                }
                vec![(0..g_count).collect()]
            }
        };
        let mut posterior = TapBlockMse::block_diagonal(vec![CMat::zeros(m, m); self.priors.len()]);
        for groups in plan {
            let taps: Vec<usize> = groups
                .iter()
                .flat_map(|&g| part.tap_indices[g].iter().copied())
                .collect();
            let prior = pred.predicted.gather(&taps);
            let (h, sigma, x) = self.observation(part, &groups, &taps, q, feedback, &pred.noise)?;
            if h.nrows() == 0 {
                posterior.scatter(&taps, &prior);
                continue;
            }
            let upd = linear_update(&prior, &h, &sigma)?;
            let g_pred = stack(&taps, &self.estimate, m);
            let g_post = &g_pred + &upd.gain * (&x - &h * &g_pred);
            for (slot, &p) in taps.iter().enumerate() {
                self.estimate[p] = g_post.as_ref().subrows(slot * m, m).to_owned();
            }
            posterior.scatter(&taps, &upd.posterior);
        }
        if self.mode == MseMode::BlockDiagonal {
            posterior.project_block_diag()?;
        }
        self.posterior = posterior;
        self.time += 1;
        Ok(())
    }

    /// `(H, Σ, x)` for the groups of one update block, with columns in
    /// the order of `taps`.
    fn observation(
        &self,
        part: &GroupPartition,
        groups: &[usize],
        taps: &[usize],
        q: &QChoice,
        feedback: &[CCol],
        noise: &[Vec<f64>],
    ) -> Result<(CMat, CMat, CCol)> {
        let m = self.dim();
        let col_of = |t: usize| taps.iter().position(|&x| x == t).unwrap() * m;
        match q {
            QChoice::Block(qs) => {
                let rows: usize = groups.iter().map(|&g| qs[g].ncols()).sum();
                let mut h = CMat::zeros(rows, m * taps.len());
                let mut sigma = CMat::zeros(rows, rows);
                let mut x = CCol::zeros(rows);
                let mut r0 = 0;
                for &g in groups {
                    let qg = &qs[g];
                    let l = qg.ncols();
                    if qg.nrows() != m || feedback[g].nrows() != l {
                        return Err(Error::Protocol(format!(
                            "feedback width mismatch in group {g}"
                        )));
                    }
                    if l == 0 {
                        continue;
                    }
                    for (&t, &z) in part.tap_indices[g].iter().zip(&part.shifts[g]) {
                        // Q_iᴴ Θ_z = (Θ_zᵀ Q_i)ᴴ.
                        let blk = linalg::unshift_rows(qg.as_ref(), z).adjoint().to_owned();
                        h.as_mut()
                            .submatrix_mut(r0, col_of(t), l, m)
                            .copy_from(&blk);
                    }
                    let s = qg.adjoint() * linalg::diag_real(&noise[g]) * qg;
                    sigma.as_mut().submatrix_mut(r0, r0, l, l).copy_from(&s);
                    x.as_mut().subrows_mut(r0, l).copy_from(&feedback[g]);
                    r0 += l;
                }
                Ok((h, sigma, x))
            }
            QChoice::Joint(qj) => {
                let full_b = joint_b_matrix(part, self.priors.len(), m);
                let cols: Vec<usize> = taps
                    .iter()
                    .flat_map(|&t| (0..m).map(move |j| t * m + j))
                    .collect();
                let bsel = CMat::from_fn(full_b.nrows(), cols.len(), |i, j| full_b[(i, cols[j])]);
                let flat: Vec<f64> = noise.iter().flatten().copied().collect();
                if qj.nrows() != bsel.nrows() || feedback[0].nrows() != qj.ncols() {
                    return Err(Error::Protocol("joint feedback width mismatch".into()));
                }
                Ok((
                    qj.adjoint() * &bsel,
                    qj.adjoint() * linalg::diag_real(&flat) * qj,
                    feedback[0].clone(),
                ))
            }
        }
    }

    pub fn estimate(&self) -> &[CCol] {
        &self.estimate
    }

    pub fn mse(&self) -> &TapBlockMse {
        &self.posterior
    }

    pub fn time(&self) -> i64 {
        self.time
    }
}

/// Downlink index message: selected FFT columns, grouped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodebookMessage {
    pub num_antennas: usize,
    pub groups: Vec<Vec<u16>>,
}

impl CodebookMessage {
    pub fn new(num_antennas: usize, groups: Vec<Vec<u16>>) -> Result<Self> {
        let msg = Self {
            num_antennas,
            groups,
        };
        msg.validate()?;
        Ok(msg)
    }

    fn validate(&self) -> Result<()> {
        if self.groups.len() > u8::MAX as usize {
            return Err(Error::Protocol(
                "too many groups for the header byte".into(),
            ));
        }
        for (g, idx) in self.groups.iter().enumerate() {
            if idx.len() > u8::MAX as usize {
                return Err(Error::Protocol(format!(
                    "group {g} carries too many indices"
                )));
            }
            if let Some(bad) = idx.iter().find(|&&c| c as usize >= self.num_antennas) {
                return Err(Error::Protocol(format!(
                    "index {bad} out of range in group {g}"
                )));
            }
        }
        Ok(())
    }

    pub fn total_indices(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// `L · ⌈log2 M⌉`.
    pub fn bit_cost(&self) -> usize {
        self.total_indices() * bits_per_index(self.num_antennas)
    }

    /// `[G: u8] ([L_i: u8] [L_i × u16 LE])*`.
    pub fn encode(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(1 + self.groups.len() + 2 * self.total_indices());
        out.push(self.groups.len() as u8);
        for idx in &self.groups {
            out.push(idx.len() as u8);
            for &c in idx {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], num_antennas: usize) -> Result<Self> {
        let truncated = || Error::Protocol("truncated codebook message".into());
        let (&g, mut rest) = bytes.split_first().ok_or_else(truncated)?;
        let mut groups = Vec::with_capacity(g as usize);
        for _ in 0..g {
            let (&l, tail) = rest.split_first().ok_or_else(truncated)?;
            let need = 2 * l as usize;
            if tail.len() < need {
                return Err(truncated());
            }
            groups.push(
                tail[..need]
                    .chunks_exact(2)
                    .map(|b| u16::from_le_bytes([b[0], b[1]]))
                    .collect(),
            );
            rest = &tail[need..];
        }
        if !rest.is_empty() {
            return Err(Error::Protocol(
                "trailing bytes after codebook message".into(),
            ));
        }
        Self::new(num_antennas, groups)
    }
}

pub fn bits_per_index(m: usize) -> usize {
    if m <= 1 {
        0
    } else {
        (usize::BITS - (m - 1).leading_zeros()) as usize
    }
}

/// What one protocol round produced.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub message: Option<CodebookMessage>,
    pub wire: Vec<u8>,
    pub budgets: Vec<usize>,
    pub q: QChoice,
    pub uplink: Vec<CCol>,
}

/// Steps 1 to 4: the BS picks `Q` from its prediction, signals the choice,
/// the MS compresses its sampled TAC, the BS updates.
pub fn signalling_round<R: Rng + ?Sized>(
    bs: &mut DumbTracker,
    partition: &GroupPartition,
    ms_folded: &FoldedTac,
    budget: usize,
    mode: CompressionMode,
    rng: &mut R,
) -> Result<RoundOutcome> {
    let m = bs.dim();
    let g_count = partition.num_groups();
    let noise: Vec<Vec<f64>> = partition
        .remainders
        .iter()
        .map(|&r| ms_folded.group_noise(r, m))
        .collect();
    let pred = bs.predict(partition, noise)?;

    // Step 1: compression choice at the BS.
    let (q, budgets, message) = match mode {
        CompressionMode::OptimalJoint => {
            let flat: Vec<f64> = pred.noise.iter().flatten().copied().collect();
            let jc = optimal_q(&pred.predicted.to_dense(), partition, &flat, budget)?;
            (QChoice::Joint(jc.q), vec![budget], None)
        }
        _ => {
            let problems = (0..g_count)
                .map(|g| pred.group_compression(g))
                .collect::<Result<Vec<_>>>()?;
            let ranking: Vec<Vec<f64>> = if mode == CompressionMode::DftCodebook {
                problems
                    .iter()
                    .map(|p| {
                        let mut v = p.dft_scores();
                        v.sort_by(|a, b| b.total_cmp(a));
                        v
                    })
                    .collect()
            } else {
                problems.iter().map(|p| p.eigenvalues().to_vec()).collect()
            };
            let budgets = allocate_budget(&ranking, budget)?;
            let mut qs = Vec::with_capacity(g_count);
            let mut indices = Vec::with_capacity(g_count);
            for (p, &l) in problems.iter().zip(&budgets) {
                match mode {
                    CompressionMode::OptimalBlock => qs.push(p.optimal(l)?),
                    CompressionMode::HouseholderBaseline => qs.push(householder_q(rng, m, l)?),
                    _ => {
                        let (qg, idx) = p.dft(l)?;
                        qs.push(qg);
                        indices.push(idx.into_iter().map(|c| c as u16).collect());
                    }
                }
            }
            let message = if mode == CompressionMode::DftCodebook {
                Some(CodebookMessage::new(m, indices)?)
            } else {
                None
            };
            (QChoice::Block(qs), budgets, message)
        }
    };

    // Step 2: downlink signalling.
    let wire = match &message {
        Some(msg) => msg.encode()?,
        None => Vec::new(),
    };

    // Step 3: the MS rebuilds Q from the indices and compresses its samples.
    let ms_q = match &message {
        Some(_) => {
            let decoded = CodebookMessage::decode(&wire, m)?;
            if decoded.groups.len() != g_count {
                return Err(Error::Protocol("group count mismatch".into()));
            }
            QChoice::Block(
                decoded
                    .groups
                    .iter()
                    .map(|idx| dft_columns(m, &idx.iter().map(|&c| c as usize).collect::<Vec<_>>()))
                    .collect(),
            )
        }
        None => q.clone(),
    };
    let samples = partition
        .remainders
        .iter()
        .map(|&r| pilots_tac::sample_group(ms_folded, r, m))
        .collect::<Result<Vec<_>>>()?;
    let uplink = ms_q.compress(&samples);

    // Step 4: BS update.
    bs.correct(pred, &q, &uplink)?;
    Ok(RoundOutcome {
        message,
        wire,
        budgets,
        q,
        uplink,
    })
}

/// Uncompressed tracker used as the reference MS-side performance of the
/// dumb pipeline (`Q_i = I`).
pub fn ideal_round(
    bs: &mut DumbTracker,
    partition: &GroupPartition,
    folded: &FoldedTac,
) -> Result<()> {
    let m = bs.dim();
    let noise: Vec<Vec<f64>> = partition
        .remainders
        .iter()
        .map(|&r| folded.group_noise(r, m))
        .collect();
    let pred = bs.predict(partition, noise)?;
    let samples = partition
        .remainders
        .iter()
        .map(|&r| pilots_tac::sample_group(folded, r, m))
        .collect::<Result<Vec<_>>>()?;
    let q = QChoice::Block(vec![linalg::identity(m); partition.num_groups()]);
    bs.correct(pred, &q, &samples)
}
