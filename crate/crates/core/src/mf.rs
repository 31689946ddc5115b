//! Biased matrix factorization trained by plain SGD.
//!
//! Predictions are `mu + b_u + b_i + q_i . p_u`, clamped to the rating range
//! at inference time only. One SGD step on rating `r` with residual
//! `e = r - r_hat` (unclamped) updates
//!
//! ```text
//! b_u += lr (e - reg b_u)        p_u += lr (e q_i - reg p_u)
//! b_i += lr (e - reg b_i)        q_i += lr (e p_u - reg q_i)
//! ```
//!
//! where the factor updates read the pre-step values of both vectors.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{ItemId, RatingSet, UserId};
use crate::error::ModelError;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfHyperParams {
    pub n_factors: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub n_epochs: usize,
    pub init_std: f64,
    pub rating_min: f64,
    pub rating_max: f64,
    pub seed: u64,
}

impl Default for MfHyperParams {
    fn default() -> Self {
        Self {
            n_factors: 100,
            learning_rate: 0.005,
            regularization: 0.1,
            n_epochs: 20,
            init_std: 0.1,
            rating_min: 1.0,
            rating_max: 5.0,
            seed: 0,
        }
    }
}

impl MfHyperParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidHyperParams(msg));
        if self.n_factors < 1 {
            return bad("n_factors must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return bad(format!("regularization must be >= 0, got {}", self.regularization));
        }
        if self.n_epochs < 1 {
            return bad("n_epochs must be >= 1".into());
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return bad(format!("init_std must be >= 0, got {}", self.init_std));
        }
        if self.rating_min.is_nan() || self.rating_max.is_nan() || self.rating_min >= self.rating_max {
            return bad(format!(
                "rating_min ({}) must be below rating_max ({})",
                self.rating_min, self.rating_max
            ));
        }
        Ok(())
    }
}

/// Fitted parameters. Factor tables are row-major `n x n_factors`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfModel {
    mu: f64,
    user_bias: Vec<f64>,
    item_bias: Vec<f64>,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
    n_factors: usize,
    rating_min: f64,
    rating_max: f64,
}

impl MfModel {
    /// Assemble a model from explicit parameters.
    pub fn from_parts(
        mu: f64,
        user_bias: Vec<f64>,
        item_bias: Vec<f64>,
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
        n_factors: usize,
        rating_range: (f64, f64),
    ) -> Result<Self, ModelError> {
        if n_factors == 0
            || user_factors.len() != user_bias.len() * n_factors
            || item_factors.len() != item_bias.len() * n_factors
        {
            return Err(ModelError::InvalidHyperParams(
                "factor table shape does not match bias lengths".into(),
            ));
        }
        Ok(Self {
            mu,
            user_bias,
            item_bias,
            user_factors,
            item_factors,
            n_factors,
            rating_min: rating_range.0,
            rating_max: rating_range.1,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn n_users(&self) -> usize {
        self.user_bias.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_bias.len()
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    pub fn rating_range(&self) -> (f64, f64) {
        (self.rating_min, self.rating_max)
    }

    pub fn user_bias(&self, u: UserId) -> f64 {
        self.user_bias.get(u.index()).copied().unwrap_or(0.0)
    }

    pub fn item_bias(&self, i: ItemId) -> f64 {
        self.item_bias.get(i.index()).copied().unwrap_or(0.0)
    }

    pub fn user_factors(&self, u: UserId) -> Option<&[f64]> {
        let k = self.n_factors;
        self.user_factors.get(u.index() * k..(u.index() + 1) * k)
    }

    pub fn item_factors(&self, i: ItemId) -> Option<&[f64]> {
        let k = self.n_factors;
        self.item_factors.get(i.index() * k..(i.index() + 1) * k)
    }

    /// `mu + b_u + b_i + q_i . p_u` without clamping. Ids outside the model
    /// contribute zero bias and a zero factor vector.
    pub fn predict_raw(&self, u: UserId, i: ItemId) -> f64 {
        let dot = match (self.user_factors(u), self.item_factors(i)) {
            (Some(p), Some(q)) => dot(p, q),
            _ => 0.0,
        };
        self.mu + self.user_bias(u) + self.item_bias(i) + dot
    }

    pub fn predict(&self, u: UserId, i: ItemId) -> f64 {
        self.predict_raw(u, i).clamp(self.rating_min, self.rating_max)
    }

    pub fn is_finite(&self) -> bool {
        self.mu.is_finite()
            && [&self.user_bias, &self.item_bias, &self.user_factors, &self.item_factors]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// One SGD update on a single rating. Returns the residual used.
    pub fn sgd_step(&mut self, u: UserId, i: ItemId, rating: f64, lr: f64, reg: f64) -> f64 {
        let k = self.n_factors;
        let (ub, ib) = (u.index(), i.index());
        let e = rating - self.predict_raw(u, i);
        self.user_bias[ub] += lr * (e - reg * self.user_bias[ub]);
        self.item_bias[ib] += lr * (e - reg * self.item_bias[ib]);
        let p = &mut self.user_factors[ub * k..(ub + 1) * k];
        let q = &mut self.item_factors[ib * k..(ib + 1) * k];
        for (pf, qf) in p.iter_mut().zip(q.iter_mut()) {
            let (p0, q0) = (*pf, *qf);
            *pf += lr * (e * q0 - reg * p0);
            *qf += lr * (e * p0 - reg * q0);
        }
        e
    }

    /// Text checkpoint: a header line, `mu`, the two bias vectors and then
    /// the user and item factor rows, one row per line. Floats use the
    /// shortest representation that parses back to the same bits.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        writeln!(
            w,
            "minifair-mf 1 {} {} {} {} {}",
            self.n_users(),
            self.n_items(),
            self.n_factors,
            self.rating_min,
            self.rating_max
        )?;
        writeln!(w, "{}", self.mu)?;
        write_row(&mut w, &self.user_bias)?;
        write_row(&mut w, &self.item_bias)?;
        for row in self.user_factors.chunks(self.n_factors) {
            write_row(&mut w, row)?;
        }
        for row in self.item_factors.chunks(self.n_factors) {
            write_row(&mut w, row)?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Self, ModelError> {
        let bad = |m: &str| ModelError::Checkpoint(m.to_string());
        let mut lines = r.lines();
        let mut next = || -> Result<String, ModelError> {
            lines.next().ok_or_else(|| bad("truncated"))?.map_err(ModelError::from)
        };
        let header = next()?;
        let h: Vec<&str> = header.split(' ').collect();
        if h.len() != 7 || h[0] != "minifair-mf" || h[1] != "1" {
            return Err(bad("bad header"));
        }
        let n_users: usize = h[2].parse().map_err(|_| bad("bad n_users"))?;
        let n_items: usize = h[3].parse().map_err(|_| bad("bad n_items"))?;
        let n_factors: usize = h[4].parse().map_err(|_| bad("bad n_factors"))?;
        let rating_min: f64 = h[5].parse().map_err(|_| bad("bad rating_min"))?;
        let rating_max: f64 = h[6].parse().map_err(|_| bad("bad rating_max"))?;
        if n_factors == 0 {
            return Err(bad("n_factors is zero"));
        }
        let mu: f64 = next()?.trim().parse().map_err(|_| bad("bad mu"))?;
        let user_bias = parse_row(&next()?, n_users)?;
        let item_bias = parse_row(&next()?, n_items)?;
        let mut user_factors = Vec::new();
        for _ in 0..n_users {
            user_factors.extend(parse_row(&next()?, n_factors)?);
        }
        let mut item_factors = Vec::new();
        for _ in 0..n_items {
            item_factors.extend(parse_row(&next()?, n_factors)?);
        }
        Self::from_parts(
            mu,
            user_bias,
            item_bias,
            user_factors,
            item_factors,
            n_factors,
            (rating_min, rating_max),
        )
    }
}

fn write_row<W: Write>(w: &mut W, row: &[f64]) -> std::io::Result<()> {
    let mut first = true;
    for x in row {
        if !first {
            w.write_all(b" ")?;
        }
        first = false;
        write!(w, "{x}")?;
    }
    w.write_all(b"\n")
}

fn parse_row(line: &str, expected: usize) -> Result<Vec<f64>, ModelError> {
    let row: Vec<f64> = if line.is_empty() {
        Vec::new()
    } else {
        line.split(' ')
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| ModelError::Checkpoint(format!("bad number in row {line:?}")))?
    };
    if row.len() != expected {
        return Err(ModelError::Checkpoint(format!(
            "row has {} values, expected {expected}",
            row.len()
        )));
    }
    Ok(row)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fit a fresh model on `known`. Parameter tables are sized from the shape
/// of `known`.
pub fn train(known: &RatingSet, hp: &MfHyperParams) -> Result<MfModel, ModelError> {
    train_with_history(known, hp, None).map(|(m, _)| m)
}

/// Like [`train`], optionally continuing from `warm` instead of a random
/// initialization. Also returns the training RMSE (unclamped predictions)
/// measured after every epoch.
pub fn train_with_history(
    known: &RatingSet,
    hp: &MfHyperParams,
    warm: Option<&MfModel>,
) -> Result<(MfModel, Vec<f64>), ModelError> {
    let triples: Vec<Triple> = known.iter().map(|x| (x.user, x.item, x.rating)).collect();
    fit(&triples, known.n_users(), known.n_items(), hp, warm)
}

/// `(user, item, rating)` as consumed by the trainer.
pub type Triple = (UserId, ItemId, f64);

/// Fit on an explicit rating list. The visiting order of each epoch is a
/// seeded shuffle of `triples`, so callers that need reproducibility must
/// pass the list in a fixed order. Ids must lie below `n_users`/`n_items`
/// and pairs should be unique.
pub fn train_triples(
    triples: &[Triple],
    n_users: usize,
    n_items: usize,
    hp: &MfHyperParams,
) -> Result<MfModel, ModelError> {
    fit(triples, n_users, n_items, hp, None).map(|(m, _)| m)
}

fn fit(
    triples: &[Triple],
    n_users: usize,
    n_items: usize,
    hp: &MfHyperParams,
    warm: Option<&MfModel>,
) -> Result<(MfModel, Vec<f64>), ModelError> {
    hp.validate()?;
    if triples.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if triples
        .iter()
        .any(|&(u, i, _)| u.index() >= n_users || i.index() >= n_items)
    {
        return Err(ModelError::InvalidHyperParams(
            "rating id outside the model shape".into(),
        ));
    }
    let mu = triples.iter().map(|t| t.2).sum::<f64>() / triples.len() as f64;
    let k = hp.n_factors;

    let mut model = match warm {
        Some(w) if w.n_factors == k && w.n_users() == n_users && w.n_items() == n_items => MfModel {
            mu,
            rating_min: hp.rating_min,
            rating_max: hp.rating_max,
            ..w.clone()
        },
        _ => {
            let mut init = rng::stream(&[rng::TAG_MF_INIT, hp.seed]);
            let normal = Normal::new(0.0, hp.init_std)
                .map_err(|e| ModelError::InvalidHyperParams(e.to_string()))?;
            let user_factors = (0..n_users * k).map(|_| normal.sample(&mut init)).collect();
            let item_factors = (0..n_items * k).map(|_| normal.sample(&mut init)).collect();
            MfModel {
                mu,
                user_bias: vec![0.0; n_users],
                item_bias: vec![0.0; n_items],
                user_factors,
                item_factors,
                n_factors: k,
                rating_min: hp.rating_min,
                rating_max: hp.rating_max,
            }
        }
    };

    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut shuffle = rng::stream(&[rng::TAG_MF_SHUFFLE, hp.seed]);
    let mut history = Vec::with_capacity(hp.n_epochs);
    for _ in 0..hp.n_epochs {
        order.shuffle(&mut shuffle);
        for &ix in &order {
            let (u, i, r) = triples[ix];
            model.sgd_step(u, i, r, hp.learning_rate, hp.regularization);
        }
        let sse: f64 = triples
            .iter()
            .map(|&(u, i, r)| (r - model.predict_raw(u, i)).powi(2))
            .sum();
        history.push((sse / triples.len() as f64).sqrt());
    }

    // Users and items without training ratings predict with zero learned terms.
    let mut user_seen = vec![false; n_users];
    let mut item_seen = vec![false; n_items];
    for &(u, i, _) in triples {
        user_seen[u.index()] = true;
        item_seen[i.index()] = true;
    }
    for (u, _) in user_seen.iter().enumerate().filter(|(_, &s)| !s) {
        model.user_bias[u] = 0.0;
        model.user_factors[u * k..(u + 1) * k].fill(0.0);
    }
    for (i, _) in item_seen.iter().enumerate().filter(|(_, &s)| !s) {
        model.item_bias[i] = 0.0;
        model.item_factors[i * k..(i + 1) * k].fill(0.0);
    }
    Ok((model, history))
}

/// `(r - predict)^2` for every entry of `test`, in ascending `(user, item)` order.
pub fn squared_errors(model: &MfModel, test: &RatingSet) -> Result<Vec<f64>, ModelError> {
    if test.is_empty() {
        return Err(ModelError::EmptyTestSet);
    }
    Ok(test
        .iter()
        .map(|x| (x.rating - model.predict(x.user, x.item)).powi(2))
        .collect())
}

pub fn rmse(model: &MfModel, test: &RatingSet) -> Result<f64, ModelError> {
    let se = squared_errors(model, test)?;
    Ok((se.iter().sum::<f64>() / se.len() as f64).sqrt())
}
