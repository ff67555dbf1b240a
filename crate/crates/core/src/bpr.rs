//! Pairwise ranking training (BPR) of [`FmParams`] by stochastic gradient descent.
//!
//! Each epoch visits every training interaction `(u, i)` once in a seeded
//! permutation and pairs it with a uniformly drawn item `j` the user has not
//! interacted with. The per-triple objective is `-ln σ(d)` with
//! `d = ŷ(u,i) - ŷ(u,j)`; `w0` and `w_u` cancel out of `d` and are never touched.

use std::io::Write;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fm::FmParams;
use crate::model::Dataset;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct BprHyper {
    pub learning_rate: f64,
    pub bias_reg: f64,
    pub user_reg: f64,
    pub pos_item_reg: f64,
    pub neg_item_reg: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Keep user factor rows at their initial values.
    pub freeze_user_factors: bool,
}

impl Default for BprHyper {
    fn default() -> Self {
        BprHyper {
            learning_rate: 0.05,
            bias_reg: 0.0,
            user_reg: 0.0025,
            pos_item_reg: 0.0025,
            neg_item_reg: 0.00025,
            iterations: 10,
            seed: 0,
            freeze_user_factors: false,
        }
    }
}

impl BprHyper {
    pub fn validate(&self) -> Result<()> {
        let regs = [self.bias_reg, self.user_reg, self.pos_item_reg, self.neg_item_reg];
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if regs.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidArgument(
                "regularization weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

/// Draws epochs of `(u, i, j)` triples from a training log.
#[derive(Debug, Clone)]
pub struct TripleSampler {
    positives: Vec<(usize, usize)>,
    user_items: Vec<Vec<usize>>,
    num_items: usize,
    seed: u64,
    saturated_users: usize,
}

impl TripleSampler {
    pub fn new(train: &Dataset, seed: u64) -> Self {
        let user_items = train.items_by_user();
        let num_items = train.num_items();
        let mut saturated_users = 0;
        let mut positives = Vec::with_capacity(train.len());
        for (user, items) in user_items.iter().enumerate() {
            if items.is_empty() {
                continue;
            }
            if items.len() >= num_items {
                saturated_users += 1;
                continue;
            }
            positives.extend(items.iter().map(|&i| (user, i)));
        }
        if saturated_users > 0 {
            warn!("{saturated_users} users interacted with every item; their positives are skipped");
        }
        TripleSampler {
            positives,
            user_items,
            num_items,
            seed,
            saturated_users,
        }
    }

    /// Users whose positives are skipped because no negative item exists.
    pub fn saturated_users(&self) -> usize {
        self.saturated_users
    }

    pub fn epoch_len(&self) -> usize {
        self.positives.len()
    }

    pub fn epoch(&self, epoch_index: usize) -> Vec<Triple> {
        let mut rng = seed::rng(self.seed, &format!("bpr-epoch-{epoch_index}"));
        let mut order = self.positives.clone();
        order.shuffle(&mut rng);
        order
            .into_iter()
            .map(|(user, pos)| {
                let seen = &self.user_items[user];
                let neg = loop {
                    let j = rng.random_range(0..self.num_items);
                    if seen.binary_search(&j).is_err() {
                        break j;
                    }
                };
                Triple { user, pos, neg }
            })
            .collect()
    }
}

/// One epoch of triples for `(seed, epoch_index)`.
pub fn sample_epoch(train: &Dataset, seed: u64, epoch_index: usize) -> Vec<Triple> {
    TripleSampler::new(train, seed).epoch(epoch_index)
}

/// `d = ŷ(u,i) - ŷ(u,j) = w_i - w_j + <v_u, v_i - v_j>`.
pub fn pair_difference(params: &FmParams, t: Triple) -> f64 {
    let vu = params.user_row(t.user);
    let vi = params.item_row(t.pos);
    let vj = params.item_row(t.neg);
    let interaction: f64 = vu.iter().zip(vi.iter().zip(vj)).map(|(u, (i, j))| u * (i - j)).sum();
    params.w[params.item_var(t.pos)] - params.w[params.item_var(t.neg)] + interaction
}

/// `-ln σ(d)`, evaluated without overflow for large `|d|`.
pub fn pair_loss(d: f64) -> f64 {
    if d >= 0.0 {
        (-d).exp().ln_1p()
    } else {
        -d + d.exp().ln_1p()
    }
}

/// `σ(-d) = 1 / (1 + e^d)`, the magnitude of `∂(-ln σ(d))/∂d`.
fn loss_weight(d: f64) -> f64 {
    if d >= 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    }
}

/// Gradient of the unregularized loss `-ln σ(d)` for one triple.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub d: f64,
    pub w_pos: f64,
    pub w_neg: f64,
    pub v_user: Vec<f64>,
    pub v_pos: Vec<f64>,
    pub v_neg: Vec<f64>,
}

pub fn loss_gradient(params: &FmParams, t: Triple) -> PairGradient {
    let d = pair_difference(params, t);
    let g = loss_weight(d);
    let vu = params.user_row(t.user);
    let vi = params.item_row(t.pos);
    let vj = params.item_row(t.neg);
    PairGradient {
        d,
        w_pos: -g,
        w_neg: g,
        v_user: vi.iter().zip(vj).map(|(i, j)| -g * (i - j)).collect(),
        v_pos: vu.iter().map(|u| -g * u).collect(),
        v_neg: vu.iter().map(|u| g * u).collect(),
    }
}

/// One SGD update on `params` for triple `t`; returns the pre-update loss.
///
/// All updates read the parameter values from before the step.
pub fn bpr_step(params: &mut FmParams, t: Triple, hyper: &BprHyper) -> Result<f64> {
    let d = pair_difference(params, t);
    if !d.is_finite() {
        return Err(Error::NonFinite(format!(
            "pairwise difference {d} for triple {t:?}; learning rate {} is likely too high",
            hyper.learning_rate
        )));
    }
    let g = loss_weight(d);
    let lr = hyper.learning_rate;
    let (pos_var, neg_var) = (params.item_var(t.pos), params.item_var(t.neg));

    let wi = params.w[pos_var];
    let wj = params.w[neg_var];
    params.w[pos_var] = wi + lr * (g - hyper.bias_reg * wi);
    params.w[neg_var] = wj + lr * (-g - hyper.bias_reg * wj);

    let k = params.k();
    let update_user = !hyper.freeze_user_factors;
    let factors = params.factors_mut();
    let (u0, i0, j0) = (t.user * k, pos_var * k, neg_var * k);
    let mut finite = true;
    for f in 0..k {
        let vu = factors[u0 + f];
        let vi = factors[i0 + f];
        let vj = factors[j0 + f];
        if update_user {
            factors[u0 + f] = vu + lr * (g * (vi - vj) - hyper.user_reg * vu);
        }
        factors[i0 + f] = vi + lr * (g * vu - hyper.pos_item_reg * vi);
        factors[j0 + f] = vj + lr * (-g * vu - hyper.neg_item_reg * vj);
        finite &= factors[u0 + f].is_finite() && factors[i0 + f].is_finite() && factors[j0 + f].is_finite();
    }
    if !finite || !params.w[pos_var].is_finite() || !params.w[neg_var].is_finite() {
        return Err(Error::NonFinite(format!(
            "update for triple {t:?} produced a non-finite parameter; learning rate {} is likely too high",
            lr
        )));
    }
    Ok(pair_loss(d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochTrace {
    /// 1-based epoch number.
    pub epoch: usize,
    pub mean_loss: f64,
    pub triples: usize,
}

/// Runs `hyper.iterations` epochs in place. Zero iterations leaves `params` untouched.
pub fn train(params: &mut FmParams, train: &Dataset, hyper: &BprHyper) -> Result<Vec<EpochTrace>> {
    hyper.validate()?;
    if params.num_users() != train.num_users() || params.num_items() != train.num_items() {
        return Err(Error::InvalidArgument(format!(
            "model shape {}x{} does not match dataset {}x{}",
            params.num_users(),
            params.num_items(),
            train.num_users(),
            train.num_items()
        )));
    }
    if hyper.iterations == 0 {
        return Ok(Vec::new());
    }
    let sampler = TripleSampler::new(train, hyper.seed);
    let mut trace = Vec::with_capacity(hyper.iterations);
    for epoch in 1..=hyper.iterations {
        let triples = sampler.epoch(epoch);
        let mut total = 0.0;
        for &t in &triples {
            total += bpr_step(params, t, hyper)?;
        }
        let mean_loss = if triples.is_empty() {
            0.0
        } else {
            total / triples.len() as f64
        };
        log::debug!("epoch {epoch}: mean loss {mean_loss:.6}");
        trace.push(EpochTrace {
            epoch,
            mean_loss,
            triples: triples.len(),
        });
    }
    Ok(trace)
}

/// Writes `epoch \t mean_loss` lines.
pub fn write_trace<W: Write>(trace: &[EpochTrace], mut out: W) -> std::io::Result<()> {
    writeln!(out, "epoch\tmean_loss")?;
    for t in trace {
        writeln!(out, "{}\t{:?}", t.epoch, t.mean_loss)?;
    }
    Ok(())
}

/// Mean `-ln σ(d)` over a fixed set of triples.
pub fn mean_loss(params: &FmParams, triples: &[Triple]) -> f64 {
    if triples.is_empty() {
        return 0.0;
    }
    triples
        .iter()
        .map(|&t| pair_loss(pair_difference(params, t)))
        .sum::<f64>()
        / triples.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fm::init_random;
    use crate::ingest::parse_interactions;
    use std::collections::HashSet;

    fn toy() -> Dataset {
        parse_interactions("a\t1\na\t2\nb\t2\nb\t3\nc\t1\nc\t4\nd\t4\n".as_bytes(), "toy").unwrap()
    }

    #[test]
    fn epoch_is_a_permutation_of_positives() {
        let ds = toy();
        let triples = sample_epoch(&ds, 7, 1);
        assert_eq!(triples.len(), ds.len());
        let pairs: HashSet<(usize, usize)> = triples.iter().map(|t| (t.user, t.pos)).collect();
        let expected: HashSet<(usize, usize)> = ds.interactions().iter().map(|x| (x.user, x.item)).collect();
        assert_eq!(pairs, expected);
        let by_user = ds.items_by_user();
        for t in &triples {
            assert!(by_user[t.user].contains(&t.pos));
            assert!(!by_user[t.user].contains(&t.neg));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let ds = toy();
        assert_eq!(sample_epoch(&ds, 7, 3), sample_epoch(&ds, 7, 3));
        assert_ne!(sample_epoch(&ds, 7, 3), sample_epoch(&ds, 7, 4));
    }

    #[test]
    fn saturated_users_are_skipped() {
        let ds = parse_interactions("a\tx\na\ty\nb\tx\n".as_bytes(), "t").unwrap();
        let sampler = TripleSampler::new(&ds, 1);
        assert_eq!(sampler.saturated_users(), 1);
        let triples = sampler.epoch(1);
        assert_eq!(
            triples,
            vec![Triple {
                user: 1,
                pos: 0,
                neg: 1
            }]
        );
    }

    #[test]
    fn zero_model_step_hand_values() {
        let mut p = FmParams::zeros(1, 2, 3);
        let hyper = BprHyper {
            learning_rate: 0.1,
            bias_reg: 0.0,
            user_reg: 0.0,
            pos_item_reg: 0.0,
            neg_item_reg: 0.0,
            ..BprHyper::default()
        };
        let loss = bpr_step(
            &mut p,
            Triple {
                user: 0,
                pos: 0,
                neg: 1,
            },
            &hyper,
        )
        .unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!(p.w[1], 0.05);
        assert_eq!(p.w[2], -0.05);
        assert!(p.factors().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn saturated_pair_is_pure_shrinkage() {
        let mut p = FmParams::zeros(1, 2, 1);
        p.w[1] = 800.0;
        p.row_mut(0)[0] = 1.0;
        p.item_row_mut(0)[0] = 2.0;
        p.item_row_mut(1)[0] = 3.0;
        let hyper = BprHyper::default();
        bpr_step(
            &mut p,
            Triple {
                user: 0,
                pos: 0,
                neg: 1,
            },
            &hyper,
        )
        .unwrap();
        let lr = hyper.learning_rate;
        assert_eq!(p.row(0)[0], 1.0 - lr * hyper.user_reg * 1.0);
        assert_eq!(p.item_row(0)[0], 2.0 - lr * hyper.pos_item_reg * 2.0);
        assert_eq!(p.item_row(1)[0], 3.0 - lr * hyper.neg_item_reg * 3.0);
    }

    #[test]
    fn loss_is_stable_for_large_differences() {
        assert_eq!(pair_loss(1000.0), 0.0);
        assert!((pair_loss(-1000.0) - 1000.0).abs() < 1e-9);
        assert!((loss_weight(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(loss_weight(1000.0), 0.0);
        assert_eq!(loss_weight(-1000.0), 1.0);
    }

    #[test]
    fn non_finite_aborts() {
        let mut p = FmParams::zeros(1, 2, 1);
        p.w[1] = f64::INFINITY;
        let err = bpr_step(
            &mut p,
            Triple {
                user: 0,
                pos: 0,
                neg: 1,
            },
            &BprHyper::default(),
        );
        assert!(matches!(err, Err(Error::NonFinite(_))));

        let mut p = FmParams::zeros(1, 2, 1);
        p.row_mut(0)[0] = 1e300;
        p.item_row_mut(1)[0] = -1e300;
        let hyper = BprHyper {
            learning_rate: 1e10,
            ..BprHyper::default()
        };
        let err = bpr_step(
            &mut p,
            Triple {
                user: 0,
                pos: 0,
                neg: 1,
            },
            &hyper,
        );
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_iterations_and_zero_rate_are_identity() {
        let ds = toy();
        let init = init_random(ds.num_users(), ds.num_items(), 3, 5, 0.1).unwrap();
        let mut p = init.clone();
        let trace = train(
            &mut p,
            &ds,
            &BprHyper {
                iterations: 0,
                ..BprHyper::default()
            },
        )
        .unwrap();
        assert!(trace.is_empty());
        assert_eq!(p, init);

        let still = BprHyper {
            learning_rate: 0.0,
            bias_reg: 0.0,
            user_reg: 0.0,
            pos_item_reg: 0.0,
            neg_item_reg: 0.0,
            iterations: 5,
            ..BprHyper::default()
        };
        train(&mut p, &ds, &still).unwrap();
        assert_eq!(p, init);
    }

    #[test]
    fn frozen_user_rows_stay_put() {
        let ds = toy();
        let init = init_random(ds.num_users(), ds.num_items(), 3, 5, 0.1).unwrap();
        let mut p = init.clone();
        let hyper = BprHyper {
            freeze_user_factors: true,
            iterations: 3,
            ..BprHyper::default()
        };
        train(&mut p, &ds, &hyper).unwrap();
        for u in 0..ds.num_users() {
            assert_eq!(p.user_row(u), init.user_row(u));
        }
        assert_ne!(p.item_row(0), init.item_row(0));
    }

    #[test]
    fn training_is_deterministic() {
        let ds = toy();
        let hyper = BprHyper {
            iterations: 4,
            seed: 11,
            ..BprHyper::default()
        };
        let run = || {
            let mut p = init_random(ds.num_users(), ds.num_items(), 3, 5, 0.1).unwrap();
            let trace = train(&mut p, &ds, &hyper).unwrap();
            (p, trace)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let ds = toy();
        let mut p = FmParams::zeros(1, 1, 1);
        assert!(train(&mut p, &ds, &BprHyper::default()).is_err());
    }

    #[test]
    fn trace_tsv() {
        let mut out = Vec::new();
        write_trace(
            &[EpochTrace {
                epoch: 1,
                mean_loss: 0.5,
                triples: 3,
            }],
            &mut out,
        )
        .unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "epoch\tmean_loss\n1\t0.5\n");
    }
}
