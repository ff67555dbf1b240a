//! Order-2 factorization machine over one-hot `(user, item)` inputs.
//!
//! Variables `0..|U|` are users and `|U|..|U|+|I|` are items, the same layout
//! as [`ProfileMatrix`](crate::profiles::ProfileMatrix). With feature-aligned
//! initialization the factor dimension `k` equals the retained feature count,
//! so factor `f` keeps meaning "feature `f`" throughout training.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{dot_dense, FeatureRow, SparseVector};
use crate::profiles::ProfileMatrix;
use crate::seed;

/// Global bias `w0`, per-variable weights `w` and the `n × k` factor matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FmParams {
    pub w0: f64,
    pub w: Vec<f64>,
    factors: Vec<f64>,
    num_users: usize,
    num_items: usize,
    k: usize,
}

impl FmParams {
    pub fn zeros(num_users: usize, num_items: usize, k: usize) -> Self {
        let n = num_users + num_items;
        FmParams {
            w0: 0.0,
            w: vec![0.0; n],
            factors: vec![0.0; n * k],
            num_users,
            num_items,
            k,
        }
    }

    /// Assembles parameters from raw parts; `factors` is row-major `n × k`.
    pub fn from_parts(
        num_users: usize,
        num_items: usize,
        k: usize,
        w0: f64,
        w: Vec<f64>,
        factors: Vec<f64>,
    ) -> Result<Self> {
        let n = num_users + num_items;
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                left: w.len(),
                right: n,
            });
        }
        if factors.len() != n * k {
            return Err(Error::DimensionMismatch {
                left: factors.len(),
                right: n * k,
            });
        }
        Ok(FmParams {
            w0,
            w,
            factors,
            num_users,
            num_items,
            k,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Number of input variables, `|U| + |I|`.
    pub fn n(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub(crate) fn factors_mut(&mut self) -> &mut [f64] {
        &mut self.factors
    }

    pub fn item_var(&self, item: usize) -> usize {
        self.num_users + item
    }

    pub fn row(&self, var: usize) -> &[f64] {
        &self.factors[var * self.k..(var + 1) * self.k]
    }

    pub fn row_mut(&mut self, var: usize) -> &mut [f64] {
        &mut self.factors[var * self.k..(var + 1) * self.k]
    }

    pub fn user_row(&self, user: usize) -> &[f64] {
        self.row(user)
    }

    pub fn item_row(&self, item: usize) -> &[f64] {
        self.row(self.num_users + item)
    }

    pub fn item_row_mut(&mut self, item: usize) -> &mut [f64] {
        let var = self.num_users + item;
        self.row_mut(var)
    }

    /// Item block of the factor matrix, one slice per item.
    pub fn item_rows(&self) -> Vec<&[f64]> {
        (0..self.num_items).map(|i| self.item_row(i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.w0.is_finite() && self.w.iter().all(|x| x.is_finite()) && self.factors.iter().all(|x| x.is_finite())
    }

    fn check_pair(&self, user: usize, item: usize) -> Result<()> {
        if user >= self.num_users {
            return Err(Error::Unknown {
                kind: "user",
                id: user.to_string(),
            });
        }
        if item >= self.num_items {
            return Err(Error::Unknown {
                kind: "item",
                id: item.to_string(),
            });
        }
        Ok(())
    }

    /// `w0 + w_u + w_i + <v_u, v_i>`, the full model evaluated on the one-hot
    /// pair input where only the single user-item interaction term survives.
    pub fn score_pair(&self, user: usize, item: usize) -> Result<f64> {
        self.check_pair(user, item)?;
        Ok(self.score_pair_unchecked(user, item))
    }

    #[inline]
    pub fn score_pair_unchecked(&self, user: usize, item: usize) -> f64 {
        let var = self.num_users + item;
        self.w0 + self.w[user] + self.w[var] + dot_dense(self.row(user), self.row(var))
    }

    /// The general model on an arbitrary sparse input of length `n`:
    /// `w0 + Σ_j w_j x_j + Σ_{j<p} x_j x_p <v_j, v_p>`.
    pub fn score_full(&self, x: &SparseVector) -> Result<f64> {
        if x.dim() != self.n() {
            return Err(Error::DimensionMismatch {
                left: x.dim(),
                right: self.n(),
            });
        }
        let nz = x.entries();
        let mut score = self.w0;
        for &(j, xj) in nz {
            score += self.w[j] * xj;
        }
        for (a, &(j, xj)) in nz.iter().enumerate() {
            for &(p, xp) in &nz[a + 1..] {
                score += xj * xp * dot_dense(self.row(j), self.row(p));
            }
        }
        Ok(score)
    }

    /// The one-hot input `x^{ui}` with ones at the user and item variables.
    pub fn one_hot(&self, user: usize, item: usize) -> Result<SparseVector> {
        self.check_pair(user, item)?;
        SparseVector::from_pairs(self.n(), [(user, 1.0), (self.num_users + item, 1.0)])
    }
}

/// Feature-aligned initialization: `k = |F|`, factor rows copied from the
/// profile matrix, biases zero.
pub fn init_kahfm(profiles: &ProfileMatrix) -> FmParams {
    let mut params = FmParams::zeros(profiles.num_users(), profiles.num_items(), profiles.dim());
    for (var, row) in profiles.rows().iter().enumerate() {
        let dst = params.row_mut(var);
        row.for_each_stored(|f, v| dst[f] = v);
    }
    params
}

/// Random initialization for the plain BPR-FM baseline: factors i.i.d.
/// `N(0, scale²)` from a seeded stream, biases zero.
pub fn init_random(num_users: usize, num_items: usize, k: usize, seed: u64, scale: f64) -> Result<FmParams> {
    if k == 0 {
        return Err(Error::InvalidArgument("random init needs k > 0".into()));
    }
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::InvalidArgument(format!("invalid init scale {scale}")));
    }
    let mut rng = seed::rng(seed, "fm-random-init");
    let mut params = FmParams::zeros(num_users, num_items, k);
    for v in params.factors.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = scale * z;
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_scores_zero() {
        let p = FmParams::zeros(2, 3, 4);
        for u in 0..2 {
            for i in 0..3 {
                assert_eq!(p.score_pair(u, i).unwrap(), 0.0);
                assert_eq!(p.score_full(&p.one_hot(u, i).unwrap()).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn score_full_hand_example() {
        // variables a = user 0, b = item 0
        let mut p = FmParams::zeros(1, 1, 2);
        p.w = vec![0.1, 0.2];
        p.row_mut(0).copy_from_slice(&[1.0, 2.0]);
        p.row_mut(1).copy_from_slice(&[3.0, -1.0]);
        let x = p.one_hot(0, 0).unwrap();
        assert!((p.score_full(&x).unwrap() - 1.3).abs() < 1e-15);
        assert!((p.score_pair(0, 0).unwrap() - 1.3).abs() < 1e-15);
    }

    #[test]
    fn single_nonzero_has_no_pair_term() {
        let mut p = FmParams::zeros(1, 1, 2);
        p.w0 = 0.5;
        p.w = vec![0.25, 7.0];
        p.row_mut(0).copy_from_slice(&[1.0, 1.0]);
        p.row_mut(1).copy_from_slice(&[1.0, 1.0]);
        let x = SparseVector::from_pairs(2, [(0, 1.0)]).unwrap();
        assert_eq!(p.score_full(&x).unwrap(), 0.75);
    }

    #[test]
    fn bias_only_and_aligned_factors() {
        let mut p = FmParams::zeros(2, 2, 3);
        p.w0 = 0.1;
        p.w = vec![0.2, 0.3, 0.4, 0.5];
        assert!((p.score_pair(1, 0).unwrap() - (0.1 + 0.3 + 0.4)).abs() < 1e-15);
        p.row_mut(1)[2] = 1.0;
        p.item_row_mut(0)[2] = 1.0;
        assert!((p.score_pair(1, 0).unwrap() - (0.1 + 0.3 + 0.4 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let p = FmParams::zeros(2, 2, 1);
        assert!(p.score_pair(2, 0).is_err());
        assert!(p.score_pair(0, 2).is_err());
        assert!(p.score_full(&SparseVector::zeros(3)).is_err());
        assert!(FmParams::from_parts(1, 1, 2, 0.0, vec![0.0; 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn random_init_is_seeded() {
        let a = init_random(3, 4, 5, 42, 0.1).unwrap();
        let b = init_random(3, 4, 5, 42, 0.1).unwrap();
        let c = init_random(3, 4, 5, 43, 0.1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.w0, 0.0);
        assert!(a.w.iter().all(|&x| x == 0.0));
        let z = init_random(3, 4, 5, 42, 0.0).unwrap();
        assert!(z.factors().iter().all(|&x| x == 0.0));
        assert!(init_random(3, 4, 0, 42, 0.1).is_err());
    }

    #[test]
    fn kahfm_copies_profile_rows() {
        let rows = vec![
            SparseVector::from_pairs(3, [(0, 0.5)]).unwrap(),
            SparseVector::from_pairs(3, [(1, 0.25), (2, 2.0)]).unwrap(),
            SparseVector::from_pairs(3, [(2, 1.0)]).unwrap(),
        ];
        let m = ProfileMatrix::from_rows(1, 2, 3, rows.clone()).unwrap();
        let p = init_kahfm(&m);
        assert_eq!(p.k(), 3);
        assert_eq!(p.w0, 0.0);
        assert!(p.w.iter().all(|&x| x == 0.0));
        assert_eq!(p.item_row(0), rows[1].to_dense().as_slice());
        // item-item factor dot equals the description dot product
        let d = dot_dense(p.item_row(0), p.item_row(1));
        assert_eq!(d, crate::model::dot(&rows[1], &rows[2]).unwrap());
    }

    #[test]
    fn w0_shift_moves_every_score() {
        let mut p = init_random(3, 3, 2, 9, 0.5).unwrap();
        let before: Vec<f64> = (0..3).map(|i| p.score_pair(1, i).unwrap()).collect();
        p.w0 += 0.75;
        for (i, b) in before.iter().enumerate() {
            assert!((p.score_pair(1, i).unwrap() - b - 0.75).abs() < 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn pair_score_matches_full_expansion(
            nu in 1usize..6, ni in 1usize..6, k in 1usize..5, seed in 0u64..1000, w0 in -2.0f64..2.0,
        ) {
            let mut p = init_random(nu, ni, k, seed, 1.0).unwrap();
            p.w0 = w0;
            for (j, w) in p.w.iter_mut().enumerate() {
                *w = (j as f64 * 0.37).sin();
            }
            for u in 0..nu {
                for i in 0..ni {
                    let full = p.score_full(&p.one_hot(u, i).unwrap()).unwrap();
                    proptest::prop_assert!((p.score_pair(u, i).unwrap() - full).abs() <= 1e-12);
                }
            }
        }
    }
}
