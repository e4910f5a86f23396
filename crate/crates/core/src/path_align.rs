//! Remainder grouping of the tap support, the allowed and cycled Δ sets,
//! measurement and permutation matrices, and the overlap orthogonality test.

use faer::Mat;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel_model::PathSupport;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Taps sharing the same delay remainder modulo Δ, ordered by remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    pub delta: usize,
    pub remainders: Vec<usize>,
    /// Tap delays of each group, ascending.
    pub groups: Vec<Vec<usize>>,
    /// Positions of the group's taps inside the support.
    pub tap_indices: Vec<Vec<usize>>,
    /// `z = ⌊t/Δ⌋` for every tap of every group.
    pub shifts: Vec<Vec<usize>>,
}

impl GroupPartition {
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_size(&self, i: usize) -> usize {
        self.groups[i].len()
    }

    /// Support positions in group order (the row selection of Π̃).
    pub fn tap_order(&self) -> Vec<usize> {
        self.tap_indices.iter().flatten().copied().collect()
    }
}

pub fn remainder_partition(support: &PathSupport, delta: usize) -> Result<GroupPartition> {
    if delta == 0 {
        return Err(Error::invalid("delta must be at least 1"));
    }
    let mut remainders: Vec<usize> = support.delays().iter().map(|d| d % delta).collect();
    remainders.sort_unstable();
    remainders.dedup();
    let mut groups = vec![Vec::new(); remainders.len()];
    let mut tap_indices = vec![Vec::new(); remainders.len()];
    let mut shifts = vec![Vec::new(); remainders.len()];
    for (idx, &d) in support.delays().iter().enumerate() {
        let g = remainders.binary_search(&(d % delta)).unwrap();
        groups[g].push(d);
        tap_indices[g].push(idx);
        shifts[g].push(d / delta);
    }
    Ok(GroupPartition {
        delta,
        remainders,
        groups,
        tap_indices,
        shifts,
    })
}

/// `true` when the TAC entries of every antenna land where folding and
/// sampling expect them: either `MΔ = N` (wrap-around is itself a fold) or
/// `(M−1)Δ + ν ≤ N` (nothing wraps).
pub fn delta_is_aligned(n: usize, m: usize, nu: usize, delta: usize) -> bool {
    delta >= 1 && (m * delta == n || (m - 1) * delta + nu <= n)
}

/// Δ values for which folding and sampling keep every tap aligned.
pub fn delta_candidates(n: usize, m: usize, nu: usize) -> Result<Vec<usize>> {
    if m == 0 || m >= n {
        return Err(Error::invalid(format!("need 0 < M < N (M={m}, N={n})")));
    }
    if nu == 0 {
        return Err(Error::invalid("delay spread must be positive"));
    }
    let d0 = n / m;
    let r = n - m * d0;
    let top = if r == 0 || d0 + r >= nu { d0 } else { d0 - 1 };
    if top == 0 || !(1..=top).all(|d| delta_is_aligned(n, m, nu, d)) {
        return Err(Error::UnsupportedRegime(format!(
            "delay spread {nu} too long for N={n}, M={m}"
        )));
    }
    Ok((1..=top).collect())
}

/// Greedy pick from the largest candidate, keeping values pairwise
/// non-divisible.
pub fn delta_cycle_set(candidates: &[usize]) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::invalid("empty delta candidate list"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted.dedup();
    let mut chosen: Vec<usize> = Vec::new();
    for d in sorted {
        if chosen.iter().all(|&c| c % d != 0 && d % c != 0) {
            chosen.push(d);
        }
    }
    Ok(chosen)
}

/// Checks both cycle-set conditions: membership and mutual non-divisibility.
pub fn is_valid_cycle_set(cycle: &[usize], candidates: &[usize]) -> bool {
    cycle.iter().all(|d| candidates.contains(d))
        && cycle
            .iter()
            .enumerate()
            .all(|(i, &a)| cycle.iter().enumerate().all(|(j, &b)| i == j || a % b > 0))
}

/// Which Δ is used at each reference symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DeltaSchedule {
    Fixed(usize),
    /// Round-robin through `set`; with `shuffle_seed` every pass through the
    /// set uses a fresh seeded permutation.
    Cycle {
        set: Vec<usize>,
        shuffle_seed: Option<u64>,
    },
}

impl DeltaSchedule {
    pub fn delta_at(&self, n: usize) -> usize {
        match self {
            DeltaSchedule::Fixed(d) => *d,
            DeltaSchedule::Cycle {
                set,
                shuffle_seed: None,
            } => set[n % set.len()],
            DeltaSchedule::Cycle {
                set,
                shuffle_seed: Some(seed),
            } => {
                let pass = (n / set.len()) as u64;
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ pass);
                let mut order = set.clone();
                order.shuffle(&mut rng);
                order[n % set.len()]
            }
        }
    }

    pub fn values(&self) -> Vec<usize> {
        match self {
            DeltaSchedule::Fixed(d) => vec![*d],
            DeltaSchedule::Cycle { set, .. } => set.clone(),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, DeltaSchedule::Fixed(_)) || self.values().len() == 1
    }
}

/// `A_i = [Θ_{z_{i,1}} U_{t_{i,1}}, …]` given the eigenvector matrices of
/// every support tap.
pub fn measurement_matrix_smart(
    partition: &GroupPartition,
    group: usize,
    bases: &[CMat],
) -> Result<CMat> {
    let taps = &partition.tap_indices[group];
    let m = bases
        .first()
        .map(|b| b.nrows())
        .ok_or_else(|| Error::invalid("no KLD bases supplied"))?;
    let mut a = CMat::zeros(m, m * taps.len());
    for (p, (&t, &z)) in taps.iter().zip(&partition.shifts[group]).enumerate() {
        let u = bases
            .get(t)
            .ok_or_else(|| Error::invalid("missing KLD basis for tap"))?;
        let block = linalg::shift_rows(u.as_ref(), z);
        a.as_mut().submatrix_mut(0, p * m, m, m).copy_from(&block);
    }
    Ok(a)
}

/// `B_i = [Θ_{z_{i,1}}, …, Θ_{z_{i,P_i}}]`.
pub fn measurement_matrix_dumb(partition: &GroupPartition, group: usize, m: usize) -> Mat<f64> {
    let shifts = &partition.shifts[group];
    Mat::from_fn(m, m * shifts.len(), |i, c| {
        let (p, j) = (c / m, c % m);
        if i == (j + shifts[p]) % m {
            1.0
        } else {
            0.0
        }
    })
}

/// `Π` (MT×MT) and the per-group row blocks `Π_i = Π̃_i ⊗ I_M`.
pub fn permutation(
    partition: &GroupPartition,
    num_taps: usize,
    m: usize,
) -> (Mat<f64>, Vec<Mat<f64>>) {
    let order = partition.tap_order();
    let pi = Mat::from_fn(num_taps * m, num_taps * m, |r, c| {
        let (slot, i) = (r / m, r % m);
        if order.get(slot).map(|&q| q * m + i) == Some(c) {
            1.0
        } else {
            0.0
        }
    });
    let mut row = 0;
    let blocks = partition
        .tap_indices
        .iter()
        .map(|taps| {
            let rows = taps.len() * m;
            let b = pi.as_ref().submatrix(row, 0, rows, num_taps * m).to_owned();
            row += rows;
            b
        })
        .collect();
    (pi, blocks)
}

/// Pair `(p, q)` with `p < q` and whether `‖R_p Θ_{z_q−z_p} R_q‖_F ≤
/// tol · ‖R_p‖_F ‖R_q‖_F`.
pub fn orthogonality_check(
    covs: &[CMat],
    shifts: &[usize],
    tol: f64,
) -> Result<Vec<((usize, usize), bool)>> {
    if covs.len() != shifts.len() {
        return Err(Error::invalid("one shift per covariance is required"));
    }
    let mut out = Vec::new();
    for p in 0..covs.len() {
        for q in p + 1..covs.len() {
            let m = covs[p].nrows();
            let dz = (shifts[q] + m - shifts[p] % m) % m;
            let prod = &covs[p] * linalg::shift_rows(covs[q].as_ref(), dz);
            let scale = covs[p].norm_l2() * covs[q].norm_l2();
            out.push(((p, q), prod.norm_l2() <= tol * scale));
        }
    }
    Ok(out)
}

pub const DEFAULT_ORTHOGONALITY_TOL: f64 = 1e-8;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cr, dft_matrix, diag_real};

    fn support(d: &[usize]) -> PathSupport {
        PathSupport::new(d.to_vec()).unwrap()
    }

    #[test]
    fn fig2_and_fig4_partitions() {
        let p = remainder_partition(&support(&[0, 4, 6]), 4).unwrap();
        assert_eq!(p.groups, vec![vec![0, 4], vec![6]]);
        assert_eq!(p.remainders, vec![0, 2]);
        assert_eq!(p.shifts, vec![vec![0, 1], vec![1]]);
        let p = remainder_partition(&support(&[0, 4, 6]), 3).unwrap();
        assert_eq!(p.groups, vec![vec![0, 6], vec![4]]);
        assert_eq!(p.remainders, vec![0, 1]);
        assert_eq!(p.tap_order(), vec![0, 2, 1]);
        for d in 1..9 {
            let p = remainder_partition(&support(&[5]), d).unwrap();
            assert_eq!(p.groups, vec![vec![5]]);
        }
    }

    #[test]
    fn candidate_sets() {
        assert_eq!(
            delta_candidates(1024, 128, 55).unwrap(),
            (1..=8).collect::<Vec<_>>()
        );
        assert_eq!(delta_candidates(16, 4, 3).unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(delta_candidates(10, 3, 2).unwrap(), vec![1, 2, 3]);
        assert_eq!(delta_candidates(16, 4, 7).unwrap(), vec![1, 2, 3, 4]);
        assert!(matches!(
            delta_candidates(10, 3, 9),
            Err(Error::UnsupportedRegime(_))
        ));
        for n in 8..40 {
            for m in 2..n.min(9) {
                for nu in 1..12 {
                    if let Ok(c) = delta_candidates(n, m, nu) {
                        assert!(c.iter().all(|&d| delta_is_aligned(n, m, nu, d)));
                    }
                }
            }
        }
    }

    #[test]
    fn cycle_sets() {
        let all: Vec<usize> = (1..=8).collect();
        assert_eq!(delta_cycle_set(&all).unwrap(), vec![8, 7, 6, 5]);
        assert_eq!(delta_cycle_set(&[1, 2, 3, 4]).unwrap(), vec![4, 3]);
        assert_eq!(delta_cycle_set(&[2, 4]).unwrap(), vec![4]);
        assert!(is_valid_cycle_set(&[8, 7, 6, 5], &all));
        assert!(!is_valid_cycle_set(&[8, 4], &all));
    }

    #[test]
    fn schedule_round_robin_and_shuffle() {
        let s = DeltaSchedule::Cycle {
            set: vec![8, 7, 6, 5],
            shuffle_seed: None,
        };
        assert_eq!(
            (0..6).map(|n| s.delta_at(n)).collect::<Vec<_>>(),
            vec![8, 7, 6, 5, 8, 7]
        );
        let sh = DeltaSchedule::Cycle {
            set: vec![8, 7, 6, 5],
            shuffle_seed: Some(3),
        };
        let mut pass: Vec<usize> = (4..8).map(|n| sh.delta_at(n)).collect();
        pass.sort_unstable();
        assert_eq!(pass, vec![5, 6, 7, 8]);
        assert_eq!(sh.delta_at(5), sh.delta_at(5));
    }

    #[test]
    fn smart_measurement_structure() {
        let p = remainder_partition(&support(&[2]), 4).unwrap();
        let u = dft_matrix(4);
        let a = measurement_matrix_smart(&p, 0, &[u.clone()]).unwrap();
        assert_eq!(a, u);
        let p = remainder_partition(&support(&[0, 4, 6]), 4).unwrap();
        let bases: Vec<CMat> = (0..3).map(|_| dft_matrix(4)).collect();
        let a = measurement_matrix_smart(&p, 0, &bases).unwrap();
        let gram = a.adjoint() * &a;
        for i in 0..8 {
            assert!((gram[(i, i)] - cr(1.0)).norm() < 1e-12);
        }
        // Second block is Θ_1 U: row i equals row (i−1) mod 4 of U.
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a[(i, 4 + j)], bases[1][((i + 3) % 4, j)]);
            }
        }
    }

    #[test]
    fn dumb_measurement_gram() {
        let p = remainder_partition(&support(&[0, 4, 6]), 4).unwrap();
        let b = measurement_matrix_dumb(&p, 0, 4);
        let gram = &b * b.transpose();
        assert_eq!(gram, Mat::<f64>::identity(4, 4) * faer::Scale(2.0));
        let theta1 = crate::pilots_tac::cyclic_shift_matrix(1, 4).unwrap();
        assert_eq!(b.as_ref().submatrix(0, 4, 4, 4).to_owned(), theta1);
        assert_eq!(
            b.as_ref().submatrix(0, 0, 4, 4).to_owned(),
            Mat::<f64>::identity(4, 4)
        );
    }

    #[test]
    fn permutation_examples() {
        let s = support(&[0, 4, 6]);
        let (pi, blocks) = permutation(&remainder_partition(&s, 4).unwrap(), 3, 2);
        assert_eq!(pi, Mat::<f64>::identity(6, 6));
        assert_eq!(blocks.len(), 2);
        let (pi, _) = permutation(&remainder_partition(&s, 3).unwrap(), 3, 1);
        let expect = Mat::from_fn(3, 3, |r, c| if [0, 2, 1][r] == c { 1.0 } else { 0.0 });
        assert_eq!(pi, expect);
    }

    #[test]
    fn orthogonality_cases() {
        let u = dft_matrix(4);
        let r1 = &u * diag_real(&[1.0, 2.0, 0.0, 0.0]) * u.adjoint();
        let r2 = &u * diag_real(&[0.0, 0.0, 3.0, 1.0]) * u.adjoint();
        // Circulant covariances commute with the shift, so disjoint
        // FFT supports stay orthogonal for any shift difference.
        let res = orthogonality_check(&[r1.clone(), r2.clone()], &[0, 3], 1e-10).unwrap();
        assert_eq!(res, vec![((0, 1), true)]);
        let res = orthogonality_check(&[r1.clone(), CMat::zeros(4, 4)], &[0, 0], 1e-10).unwrap();
        assert!(res[0].1);
        let res = orthogonality_check(&[r1.clone(), r1.clone()], &[1, 1], 1e-10).unwrap();
        assert!(!res[0].1);
    }
}
