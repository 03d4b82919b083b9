//! Ordinary least-squares affine fit used to rank coefficients.
//!
//! Columns are standardised before forming the normal equations. A ridge
//! term of `1e-10 * trace / d` is added only when the system is detected to
//! be rank deficient (constant columns, fewer samples than unknowns, or a
//! vanishing Cholesky pivot); constant columns then get coefficient zero.

use nalgebra::{DMatrix, DVector};

use crate::sampler::LabeledSample;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AffineFit {
    pub alpha: Vec<f64>,
    pub beta: f64,
    /// Whether the ridge fallback was used.
    pub ridged: bool,
}

const RIDGE: f64 = 1e-10;

pub fn least_squares_fit(samples: &[LabeledSample]) -> Result<AffineFit> {
    let inputs: Vec<&[f64]> = samples.iter().map(|s| s.input.values.as_slice()).collect();
    let targets: Vec<f64> = samples.iter().map(|s| s.delta).collect();
    fit_affine(&inputs, &targets)
}

pub fn fit_affine(inputs: &[&[f64]], targets: &[f64]) -> Result<AffineFit> {
    let n = inputs.len();
    if n == 0 || n != targets.len() {
        return Err(Error::invalid("least squares needs matching, nonempty inputs and targets"));
    }
    let d = inputs[0].len();
    if inputs.iter().any(|x| x.len() != d) {
        return Err(Error::invalid("inputs have inconsistent dimensions"));
    }
    let nf = n as f64;
    let mean_t = targets.iter().sum::<f64>() / nf;
    let mut mean = vec![0.0; d];
    for x in inputs {
        for (m, v) in mean.iter_mut().zip(x.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut scale = vec![0.0; d];
    for x in inputs {
        for j in 0..d {
            scale[j] += (x[j] - mean[j]).powi(2);
        }
    }
    let mut constant_column = false;
    for s in scale.iter_mut() {
        *s = (*s / nf).sqrt();
        if *s == 0.0 {
            constant_column = true;
            *s = 1.0;
        }
    }

    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    let mut z = vec![0.0; d];
    for (x, &t) in inputs.iter().zip(targets) {
        for j in 0..d {
            z[j] = (x[j] - mean[j]) / scale[j];
        }
        let tc = t - mean_t;
        for a in 0..d {
            rhs[a] += z[a] * tc;
            let za = z[a];
            for b in a..d {
                gram[(a, b)] += za * z[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }

    let trace = gram.trace();
    let mut ridged = constant_column || n < d + 1;
    let mut chol = if ridged { None } else { gram.clone().cholesky() };
    if let Some(c) = &chol {
        let min_pivot = (0..d).map(|i| c.l_dirty()[(i, i)].powi(2)).fold(f64::INFINITY, f64::min);
        if min_pivot < 1e-12 * nf {
            ridged = true;
            chol = None;
        }
    }
    let gamma = if d == 0 {
        DVector::zeros(0)
    } else {
        let c = match chol {
            Some(c) => c,
            None => {
                ridged = true;
                let ridge = if trace > 0.0 { RIDGE * trace / d as f64 } else { RIDGE };
                let mut g = gram;
                for i in 0..d {
                    g[(i, i)] += ridge;
                }
                g.cholesky()
                    .ok_or_else(|| Error::invalid("normal equations not positive definite after ridge"))?
            }
        };
        c.solve(&rhs)
    };

    let alpha: Vec<f64> = (0..d).map(|j| gamma[j] / scale[j]).collect();
    let beta = mean_t - alpha.iter().zip(&mean).map(|(a, m)| a * m).sum::<f64>();
    Ok(AffineFit { alpha, beta, ridged })
}
