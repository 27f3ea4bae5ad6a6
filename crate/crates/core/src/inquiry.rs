//! Symptom selection: the "ensure" matrix of conditional probabilities, the
//! "distinguish" matrix of mutual information, and the learned gate `mu`
//! that blends them.
//!
//! Both matrices are `M x N` and row-stochastic. Given the disease posterior
//! `p` the symptom scores are
//!
//! ```text
//! raw = mu * (p . cond) + (1 - mu) * (p . mutual)
//! ```
//!
//! with already-known symptoms zeroed and the rest renormalized.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::CooccurrenceCounts;
use crate::dialogue::SymptomState;
use crate::diffcore::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::params::{Binder, Net};

pub const SWITCHER_WIDTH: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InquiryMatrices {
    pub cond: Vec<Vec<f64>>,
    pub mutual: Vec<Vec<f64>>,
}

impl InquiryMatrices {
    pub fn from_counts(counts: &CooccurrenceCounts) -> Self {
        Self { cond: conditional_matrix(counts), mutual: mutual_information_matrix(counts) }
    }

    pub fn num_diseases(&self) -> usize {
        self.cond.len()
    }

    pub fn num_symptoms(&self) -> usize {
        self.cond.first().map_or(0, Vec::len)
    }
}

/// Scales a row to sum to one; an all-zero row becomes uniform.
pub fn normalize_row(row: &[f64]) -> Vec<f64> {
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        row.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / row.len() as f64; row.len()]
    }
}

/// `cond[i][j] = n_ds[i][j] / sum_k n_ds[i][k]`.
pub fn conditional_matrix(counts: &CooccurrenceCounts) -> Vec<Vec<f64>> {
    counts
        .n_ds
        .iter()
        .map(|row| normalize_row(&row.iter().map(|&c| c as f64).collect::<Vec<_>>()))
        .collect()
}

/// Mutual information (nats) between two binary variables given their 2x2
/// contingency counts `table[a][b]`. Empty cells contribute zero.
pub fn mutual_information(table: &[[u64; 2]; 2]) -> f64 {
    let total: u64 = table.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let row = [(table[0][0] + table[0][1]) as f64 / n, (table[1][0] + table[1][1]) as f64 / n];
    let col = [(table[0][0] + table[1][0]) as f64 / n, (table[0][1] + table[1][1]) as f64 / n];
    let mut mi = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let joint = table[a][b] as f64 / n;
            if joint > 0.0 {
                mi += joint * (joint / (row[a] * col[b])).ln();
            }
        }
    }
    // rounding can leave a tiny negative on independent tables
    mi.max(0.0)
}

/// `I(D_i; S_j)` for every pair, before row normalization.
pub fn mutual_information_raw(counts: &CooccurrenceCounts) -> Vec<Vec<f64>> {
    counts.joint.iter().map(|row| row.iter().map(mutual_information).collect()).collect()
}

pub fn mutual_information_matrix(counts: &CooccurrenceCounts) -> Vec<Vec<f64>> {
    mutual_information_raw(counts).iter().map(|row| normalize_row(row)).collect()
}

pub fn new_switcher(num_symptoms: usize, num_diseases: usize, rng: &mut impl Rng) -> Mlp {
    Mlp::new(Net::Switcher, num_symptoms + num_diseases, SWITCHER_WIDTH, rng)
}

/// `mu = sigmoid(mlp([state; posterior]))`.
pub fn switch(
    mlp: &Mlp,
    state: &SymptomState,
    posterior: &[NodeId],
    tape: &mut Tape,
    binder: &mut Binder,
) -> Result<NodeId> {
    if mlp.input_len() != state.len() + posterior.len() {
        return Err(Error::Validation(format!(
            "switcher expects {} inputs, got {}",
            mlp.input_len(),
            state.len() + posterior.len()
        )));
    }
    let mut inputs: Vec<NodeId> = state.as_reals().into_iter().map(|v| tape.constant(v)).collect();
    inputs.extend_from_slice(posterior);
    let out = mlp.forward_tape(tape, binder, &inputs);
    Ok(tape.sigmoid(out))
}

/// Symptom scores on the tape plus the value of each logic's contribution.
#[derive(Debug, Clone)]
pub struct ScoreNodes {
    /// One node per symptom; masked symptoms are constant zeros.
    pub probs: Vec<NodeId>,
    /// `mu * (p . cond)[j]` before renormalization.
    pub ensure: Vec<f64>,
    /// `(1 - mu) * (p . mutual)[j]` before renormalization.
    pub distinguish: Vec<f64>,
    /// Sum of the unmasked raw scores used as the normalizer.
    pub normalizer: f64,
}

/// Masked, renormalized blend of the two inquiry logics.
pub fn symptom_scores(
    posterior: &[NodeId],
    matrices: &InquiryMatrices,
    mu: NodeId,
    mask: &[bool],
    tape: &mut Tape,
) -> Result<ScoreNodes> {
    let n = matrices.num_symptoms();
    if mask.len() != n || posterior.len() != matrices.num_diseases() {
        return Err(Error::Validation("symptom_scores: dimension mismatch".into()));
    }
    if mask.iter().all(|&m| m) {
        return Err(Error::Exhausted);
    }
    let one = tape.constant(1.0);
    let one_minus_mu = tape.sub(one, mu);
    let mu_v = tape.value(mu);
    let mut raw = vec![None; n];
    let mut ensure = vec![0.0; n];
    let mut distinguish = vec![0.0; n];
    for j in (0..n).filter(|&j| !mask[j]) {
        let column = |m: &Vec<Vec<f64>>, tape: &mut Tape| {
            let terms: Vec<NodeId> = posterior
                .iter()
                .zip(m)
                .filter(|(_, row)| row[j] != 0.0)
                .map(|(&p, row)| tape.scale(p, row[j]))
                .collect();
            tape.sum(&terms)
        };
        let c = column(&matrices.cond, tape);
        let mi = column(&matrices.mutual, tape);
        ensure[j] = mu_v * tape.value(c);
        distinguish[j] = (1.0 - mu_v) * tape.value(mi);
        let a = tape.mul(mu, c);
        let b = tape.mul(one_minus_mu, mi);
        raw[j] = Some(tape.add(a, b));
    }
    let unmasked: Vec<NodeId> = raw.iter().flatten().copied().collect();
    let total = tape.sum(&unmasked);
    let normalizer = tape.value(total);
    let zero = tape.constant(0.0);
    let probs = if normalizer > 0.0 {
        raw.iter()
            .map(|r| match r {
                Some(node) => tape.div(*node, total),
                None => Ok(zero),
            })
            .collect::<Result<Vec<_>, _>>()?
    } else {
        // nothing left scores above zero: ask uniformly among the unknowns
        let uniform = tape.constant(1.0 / unmasked.len() as f64);
        raw.iter().map(|r| if r.is_some() { uniform } else { zero }).collect()
    };
    Ok(ScoreNodes { probs, ensure, distinguish, normalizer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Parameterized, ParamKey};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn counts(n_ds: Vec<Vec<u64>>) -> CooccurrenceCounts {
        let m = n_ds.len();
        let n_d = vec![10; m];
        let joint = n_ds.iter().map(|r| r.iter().map(|_| [[0, 0], [0, 0]]).collect()).collect();
        CooccurrenceCounts { n_ds, n_d, joint, total: 10 * m as u64 }
    }

    #[test]
    fn conditional_rows() {
        let c = conditional_matrix(&counts(vec![vec![3, 1, 0], vec![0, 0, 0], vec![0, 5, 5]]));
        assert_eq!(c[0], vec![0.75, 0.25, 0.0]);
        assert_eq!(c[1], vec![1.0 / 3.0; 3]);
        assert_eq!(c[2], vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn mutual_information_cases() {
        assert_eq!(mutual_information(&[[2, 2], [2, 2]]), 0.0);
        assert_eq!(mutual_information(&[[1, 3], [2, 6]]), 0.0);
        let perfect = mutual_information(&[[5, 0], [0, 5]]);
        assert!((perfect - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(mutual_information(&[[0, 0], [0, 0]]), 0.0);
    }

    #[test]
    fn zero_switcher_gives_half() {
        let mlp = Mlp::zeros(Net::Switcher, 5, 4);
        let state = SymptomState::from_values(vec![1, 0, -1], 1);
        let mut tape = Tape::new();
        let mut binder = Binder::new();
        let post = vec![tape.constant(0.3), tape.constant(0.7)];
        let mu = switch(&mlp, &state, &post, &mut tape, &mut binder).unwrap();
        assert_eq!(tape.value(mu), 0.5);
    }

    #[test]
    fn switcher_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mlp = new_switcher(3, 2, &mut rng);
        mlp.output = crate::nn::Dense::random(SWITCHER_WIDTH, 1, &mut rng);
        let state = SymptomState::from_values(vec![1, 0, -1], 2);
        let eval = |m: &Mlp| {
            let mut tape = Tape::new();
            let mut binder = Binder::new();
            let post = vec![tape.constant(0.3), tape.constant(0.7)];
            let mu = switch(m, &state, &post, &mut tape, &mut binder).unwrap();
            (tape, binder, mu)
        };
        let (tape, binder, mu) = eval(&mlp);
        let v = tape.value(mu);
        assert!(v > 0.0 && v < 1.0);
        let grads = binder.gradients(&tape.backward(mu).unwrap());
        for key in mlp.keys().into_iter().step_by(7) {
            let h = 1e-5;
            let mut plus = mlp.clone();
            *plus.get_mut(&key).unwrap() += h;
            let mut minus = mlp.clone();
            *minus.get_mut(&key).unwrap() -= h;
            let (tp, _, mp) = eval(&plus);
            let (tm, _, mm) = eval(&minus);
            let fd = (tp.value(mp) - tm.value(mm)) / (2.0 * h);
            let g = grads.get(&key).copied().unwrap_or(0.0);
            assert!((g - fd).abs() <= 1e-4 * g.abs().max(fd.abs()).max(1e-6), "{key:?} {g} {fd}");
        }
        assert!(matches!(grads.keys().next(), Some(ParamKey::Mlp { .. })));
    }

    fn matrices() -> InquiryMatrices {
        InquiryMatrices {
            cond: vec![vec![0.6, 0.3, 0.1], vec![0.1, 0.1, 0.8]],
            mutual: vec![vec![0.2, 0.5, 0.3], vec![0.4, 0.4, 0.2]],
        }
    }

    fn scores_at(mu: f64, post: [f64; 2], mask: [bool; 3]) -> (Vec<f64>, f64) {
        let mut tape = Tape::new();
        let p: Vec<_> = post.iter().map(|&v| tape.constant(v)).collect();
        let mu = tape.constant(mu);
        let s = symptom_scores(&p, &matrices(), mu, &mask, &mut tape).unwrap();
        (tape.values(&s.probs), s.normalizer)
    }

    #[test]
    fn gate_boundaries() {
        let (s, _) = scores_at(1.0, [1.0, 0.0], [false; 3]);
        for (a, b) in s.iter().zip([0.6, 0.3, 0.1]) {
            assert!((a - b).abs() < 1e-15);
        }
        let (s, _) = scores_at(0.0, [0.0, 1.0], [false, false, true]);
        assert!((s[0] - 0.5).abs() < 1e-15 && (s[1] - 0.5).abs() < 1e-15 && s[2] == 0.0);
    }

    #[test]
    fn raw_scores_are_a_distribution_when_unmasked() {
        let (s, norm) = scores_at(0.37, [0.25, 0.75], [false; 3]);
        assert!((norm - 1.0).abs() < 1e-12);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_mask_is_exhaustion() {
        let mut tape = Tape::new();
        let p: Vec<_> = [0.5, 0.5].iter().map(|&v| tape.constant(v)).collect();
        let mu = tape.constant(0.5);
        assert!(matches!(symptom_scores(&p, &matrices(), mu, &[true; 3], &mut tape), Err(Error::Exhausted)));
    }

    #[test]
    fn zero_mass_falls_back_to_uniform() {
        let m = InquiryMatrices { cond: vec![vec![1.0, 0.0, 0.0]; 2], mutual: vec![vec![1.0, 0.0, 0.0]; 2] };
        let mut tape = Tape::new();
        let p: Vec<_> = [0.5, 0.5].iter().map(|&v| tape.constant(v)).collect();
        let mu = tape.constant(0.5);
        let s = symptom_scores(&p, &m, mu, &[true, false, false], &mut tape).unwrap();
        assert_eq!(tape.values(&s.probs), vec![0.0, 0.5, 0.5]);
    }
}
