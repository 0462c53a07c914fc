//! Additive MARS: mirrored hinge pairs added greedily, then pruned by GCV.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SupervisedSet;
use crate::numcore::{lstsq_aliased, Matrix};

/// Knot cost in the GCV effective-parameter count.
pub const GCV_PENALTY: f64 = 3.0;

/// Candidate knots per feature are thinned to this many observed values.
pub const MAX_KNOTS_PER_FEATURE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Basis {
    Intercept,
    /// `max(0, x - knot)` when `positive`, else `max(0, knot - x)`.
    Hinge { feature: usize, knot: f64, positive: bool },
}

impl Basis {
    pub fn eval(&self, row: &[f64]) -> f64 {
        match *self {
            Basis::Intercept => 1.0,
            Basis::Hinge { feature, knot, positive } => {
                let d = if positive { row[feature] - knot } else { knot - row[feature] };
                d.max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mars {
    pub terms: Vec<Basis>,
    pub coefficients: Vec<f64>,
}

impl Mars {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.terms.iter().zip(&self.coefficients).map(|(b, c)| c * b.eval(row)).sum()
    }
}

/// Fitted model plus the unpruned forward-pass basis, kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MarsFit {
    pub model: Mars,
    pub forward_terms: Vec<Basis>,
    pub gcv: f64,
    pub forward_gcv: f64,
}

/// GCV = (RSS / n) / (1 - C / n)² with C = M + penalty·(M - 1)/2.
pub fn gcv(rss: f64, n_terms: usize, n: usize, penalty: f64) -> f64 {
    let m = n_terms as f64;
    let c = m + penalty * (m - 1.0) / 2.0;
    let denom = 1.0 - c / n as f64;
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    (rss / n as f64) / (denom * denom)
}

pub fn design(x: &Matrix, terms: &[Basis]) -> Matrix {
    let mut d = Matrix::zeros(x.rows(), terms.len());
    for r in 0..x.rows() {
        let row = x.row(r);
        for (c, t) in terms.iter().enumerate() {
            d.set(r, c, t.eval(row));
        }
    }
    d
}

/// Least-squares coefficients and residual sum of squares for `terms`.
pub fn refit(x: &Matrix, y: &[f64], terms: &[Basis]) -> Result<(Vec<f64>, f64)> {
    let d = design(x, terms);
    let (coef, _) = lstsq_aliased(&d, y)?;
    let rss = (0..x.rows())
        .map(|r| {
            let p: f64 = d.row(r).iter().zip(&coef).map(|(a, b)| a * b).sum();
            (y[r] - p) * (y[r] - p)
        })
        .sum();
    Ok((coef, rss))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthogonalizes `v` against the orthonormal columns in `basis` (two passes).
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let p = dot(v, q);
            for (a, b) in v.iter_mut().zip(q) {
                *a -= p * b;
            }
        }
    }
}

fn candidate_knots(x: &Matrix, f: usize) -> Vec<f64> {
    let mut v = x.col(f);
    v.sort_by(f64::total_cmp);
    v.dedup();
    // The maximum yields an all-zero positive hinge.
    v.pop();
    if v.len() <= MAX_KNOTS_PER_FEATURE {
        return v;
    }
    let step = v.len() as f64 / MAX_KNOTS_PER_FEATURE as f64;
    (0..MAX_KNOTS_PER_FEATURE).map(|i| v[(i as f64 * step) as usize]).collect()
}

struct Candidate {
    gain: f64,
    columns: Vec<(Basis, Vec<f64>)>,
}

fn forward_pass(x: &Matrix, y: &[f64], max_terms: usize) -> Vec<Basis> {
    let n = x.rows();
    let mut terms = vec![Basis::Intercept];
    let inv = 1.0 / (n as f64).sqrt();
    let mut q: Vec<Vec<f64>> = vec![vec![inv; n]];
    let mean = y.iter().sum::<f64>() / n as f64;
    let mut resid: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let tss = dot(&resid, &resid);
    if tss <= 0.0 {
        return terms;
    }
    let knots: Vec<Vec<f64>> = (0..x.cols()).map(|f| candidate_knots(x, f)).collect();

    while terms.len() < max_terms {
        let room = max_terms - terms.len();
        let mut best: Option<Candidate> = None;
        for (f, fk) in knots.iter().enumerate() {
            for &knot in fk {
                let mut gain = 0.0;
                let mut columns = Vec::new();
                let mut local = Vec::new();
                for positive in [true, false] {
                    if columns.len() == room {
                        break;
                    }
                    let basis = Basis::Hinge { feature: f, knot, positive };
                    let mut v: Vec<f64> = (0..n).map(|r| basis.eval(x.row(r))).collect();
                    let raw = dot(&v, &v).sqrt();
                    orthogonalize(&mut v, &q);
                    orthogonalize(&mut v, &local);
                    let norm = dot(&v, &v).sqrt();
                    if raw == 0.0 || norm <= 1e-8 * raw {
                        continue;
                    }
                    v.iter_mut().for_each(|a| *a /= norm);
                    let p = dot(&v, &resid);
                    gain += p * p;
                    local.push(v.clone());
                    columns.push((basis, v));
                }
                if columns.is_empty() {
                    continue;
                }
                if best.as_ref().map_or(true, |b| gain > b.gain) {
                    best = Some(Candidate { gain, columns });
                }
            }
        }
        let Some(best) = best else { break };
        let rss = dot(&resid, &resid);
        if best.gain <= 1e-10 * tss {
            break;
        }
        for (basis, v) in best.columns {
            let p = dot(&v, &resid);
            for (r, a) in resid.iter_mut().zip(&v) {
                *r -= p * a;
            }
            terms.push(basis);
            q.push(v);
        }
        if rss - best.gain <= 1e-12 * tss {
            break;
        }
    }
    terms
}

pub fn fit_mars(data: &SupervisedSet, max_terms: usize) -> Result<MarsFit> {
    let n = data.len();
    if n < 10 {
        return Err(Error::Size(format!("mars needs at least 10 rows, got {n}")));
    }
    if max_terms == 0 {
        return Err(Error::Hyperparameter("max_terms must be at least 1".into()));
    }
    let x = &data.x;
    let y = &data.y;
    let forward_terms = forward_pass(x, y, max_terms);

    let (_, full_rss) = refit(x, y, &forward_terms)?;
    let forward_gcv = gcv(full_rss, forward_terms.len(), n, GCV_PENALTY);

    let mut current = forward_terms.clone();
    let mut best_terms = current.clone();
    let mut best_gcv = forward_gcv;
    while current.len() > 1 {
        let mut drop: Option<(usize, f64)> = None;
        for j in 1..current.len() {
            let mut trial = current.clone();
            trial.remove(j);
            let (_, rss) = refit(x, y, &trial)?;
            if drop.map_or(true, |(_, r)| rss < r) {
                drop = Some((j, rss));
            }
        }
        let (j, rss) = drop.expect("at least one removable term");
        current.remove(j);
        let score = gcv(rss, current.len(), n, GCV_PENALTY);
        if score < best_gcv {
            best_gcv = score;
            best_terms = current.clone();
        }
    }

    let (coefficients, _) = refit(x, y, &best_terms)?;
    Ok(MarsFit {
        model: Mars { terms: best_terms, coefficients },
        forward_terms,
        gcv: best_gcv,
        forward_gcv,
    })
}
