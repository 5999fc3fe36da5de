//! Fitting the rational efficiency model to measured points.
//!
//! The model is linear in its six coefficients once both sides are
//! multiplied by the denominator:
//!
//! ```text
//! η·(P³ + b2·P² + b1·P + b0) = a2·P² + a1·P + a0
//! ```
//!
//! That identity gives the first linear least-squares solve. It weights each
//! residual by the denominator, which strongly favours high-power samples,
//! so the solve is repeated with rows divided by the previous denominator
//! until the coefficients settle. The optional refinement then minimises the
//! true efficiency residual with Levenberg-Marquardt.

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};

use super::{EfficiencySample, HarvesterModel};
use crate::error::{Error, Result};

pub const MAX_REFINE_ITERATIONS: usize = 200;
/// Refinement stops once the relative drop in the residual sum of squares
/// falls below this.
pub const REFINE_TOLERANCE: f64 = 1e-9;

const REWEIGHT_ITERATIONS: usize = 30;
const REWEIGHT_TOLERANCE: f64 = 1e-12;
/// Smallest accepted ratio of the extreme singular values of the
/// column-scaled design matrix.
const RANK_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: HarvesterModel,
    /// Root-mean-square of `η_sample − η_model`, in percentage points.
    pub rms_residual: f64,
    pub refine_iterations: usize,
}

type Coeffs = Vector6<f64>;

fn to_model(name: &str, c: &Coeffs, lo: f64, hi: f64) -> Result<HarvesterModel> {
    HarvesterModel::new(name, [c[0], c[1], c[2]], [c[3], c[4], c[5]], lo, hi).map_err(|e| match e {
        Error::Evaluation { p_mw, .. } => Error::Fit(format!(
            "fitted denominator is not positive at {p_mw} mW inside the sample range"
        )),
        other => Error::Fit(other.to_string()),
    })
}

fn eval(c: &Coeffs, p: f64) -> (f64, f64) {
    let num = (c[0] * p + c[1]) * p + c[2];
    let den = ((p + c[3]) * p + c[4]) * p + c[5];
    (num, den)
}

fn sum_sq(c: &Coeffs, samples: &[EfficiencySample]) -> Option<f64> {
    let mut total = 0.0;
    for s in samples {
        let (num, den) = eval(c, s.input_power_mw);
        if den <= 0.0 {
            return None;
        }
        total += (s.efficiency_percent - num / den).powi(2);
    }
    Some(total)
}

/// Weighted linear solve of the multiplied-out identity.
fn linear_solve(samples: &[EfficiencySample], weights: &[f64]) -> Result<Coeffs> {
    let n = samples.len();
    let mut a = DMatrix::<f64>::zeros(n, 6);
    let mut b = DVector::<f64>::zeros(n);
    for (i, (s, &w)) in samples.iter().zip(weights).enumerate() {
        let (p, e) = (s.input_power_mw, s.efficiency_percent);
        let row = [p * p, p, 1.0, -e * p * p, -e * p, -e];
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = w * v;
        }
        b[i] = w * e * p * p * p;
    }
    let mut scale = [1.0; 6];
    for (j, sc) in scale.iter_mut().enumerate() {
        let norm = a.column(j).norm();
        if norm == 0.0 {
            return Err(Error::Fit(format!(
                "design matrix column {j} is identically zero; the system is rank-deficient"
            )));
        }
        *sc = norm;
        a.column_mut(j).scale_mut(1.0 / norm);
    }
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    if !(min_sv > RANK_TOLERANCE * max_sv) {
        return Err(Error::Fit(format!(
            "rank-deficient system (singular value ratio {:.3e})",
            min_sv / max_sv
        )));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Fit(format!("least-squares solve failed: {e}")))?;
    Ok(Coeffs::from_fn(|j, _| x[j] / scale[j]))
}

fn reweighted_solve(samples: &[EfficiencySample]) -> Result<Coeffs> {
    let mut weights = vec![1.0; samples.len()];
    let mut coeffs = linear_solve(samples, &weights)?;
    for _ in 1..REWEIGHT_ITERATIONS {
        for (w, s) in weights.iter_mut().zip(samples) {
            let (_, den) = eval(&coeffs, s.input_power_mw);
            *w = 1.0 / den.abs().max(f64::MIN_POSITIVE);
        }
        let next = linear_solve(samples, &weights)?;
        let change = (next - coeffs).abs().component_div(&next.abs().add_scalar(1e-300));
        coeffs = next;
        if change.max() < REWEIGHT_TOLERANCE {
            break;
        }
    }
    Ok(coeffs)
}

/// Raises `b0` just enough to lift the denominator above zero at every
/// sample, giving the refinement a pole-free starting point.
fn lift_denominator(mut c: Coeffs, samples: &[EfficiencySample]) -> Coeffs {
    let (min_den, max_den) = samples
        .iter()
        .map(|s| eval(&c, s.input_power_mw).1)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    if min_den <= 0.0 {
        c[5] += -min_den + 1e-3 * max_den.abs().max(1e-12);
    }
    c
}

/// Levenberg-Marquardt on the efficiency residual. Steps that would put a
/// pole among the samples are rejected.
fn refine(start: Coeffs, samples: &[EfficiencySample]) -> (Coeffs, usize) {
    let mut coeffs = lift_denominator(start, samples);
    let Some(mut cost) = sum_sq(&coeffs, samples) else {
        return (start, 0);
    };
    let mut damping = 1e-3;
    let mut iterations = 0;
    while iterations < MAX_REFINE_ITERATIONS {
        iterations += 1;
        let mut jtj = Matrix6::<f64>::zeros();
        let mut grad = Vector6::<f64>::zeros();
        for s in samples {
            let p = s.input_power_mw;
            let (num, den) = eval(&coeffs, p);
            let q = num / (den * den);
            let row = Vector6::new(p * p / den, p / den, 1.0 / den, -q * p * p, -q * p, -q);
            let resid = s.efficiency_percent - num / den;
            jtj += row * row.transpose();
            grad += row * resid;
        }
        let mut improved = None;
        while damping < 1e16 {
            let mut lhs = jtj;
            for k in 0..6 {
                lhs[(k, k)] += damping * jtj[(k, k)].max(f64::MIN_POSITIVE);
            }
            if let Some(step) = lhs.lu().solve(&grad) {
                let trial = coeffs + step;
                if let Some(c) = sum_sq(&trial, samples) {
                    if c < cost {
                        improved = Some((trial, c));
                        break;
                    }
                }
            }
            damping *= 10.0;
        }
        let Some((trial, new_cost)) = improved else {
            break;
        };
        let rel_drop = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
        coeffs = trial;
        cost = new_cost;
        damping = (damping / 10.0).max(1e-12);
        if rel_drop < REFINE_TOLERANCE || cost == 0.0 {
            break;
        }
    }
    (coeffs, iterations)
}

/// Fits the rational efficiency model to `samples`.
///
/// Needs at least six distinct input powers. The returned model's valid
/// range spans the sampled powers.
pub fn fit_model(name: &str, samples: &[EfficiencySample], refine_fit: bool) -> Result<FitReport> {
    let mut powers: Vec<f64> = samples.iter().map(|s| s.input_power_mw).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup();
    if powers.len() < 6 {
        return Err(Error::Underdetermined {
            needed: 6,
            got: powers.len(),
        });
    }
    let (lo, hi) = (powers[0], powers[powers.len() - 1]);

    let mut coeffs = reweighted_solve(samples)?;
    let mut refine_iterations = 0;
    if refine_fit {
        let (c, it) = refine(coeffs, samples);
        coeffs = c;
        refine_iterations = it;
    }
    let model = to_model(name, &coeffs, lo, hi)?;
    let sq = sum_sq(&coeffs, samples).unwrap_or(f64::INFINITY);
    Ok(FitReport {
        model,
        rms_residual: (sq / samples.len() as f64).sqrt(),
        refine_iterations,
    })
}
