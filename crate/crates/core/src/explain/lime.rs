use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{argmax, max_normalise, predicted, Classifier, Method, TokenScores};
use crate::corpus::{Example, Vocabulary};
use crate::error::{Error, Result};
use crate::numcore::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeOptions {
    pub n_samples: usize,
    pub kernel_width: f64,
    pub ridge_lambda: f64,
}

impl Default for LimeOptions {
    fn default() -> Self {
        LimeOptions {
            n_samples: 500,
            kernel_width: 0.25,
            ridge_lambda: 1.0,
        }
    }
}

/// Local linear surrogate over word keep-masks.
///
/// The first sample keeps every word; each other sample drops a uniformly
/// chosen number (1..=k) of uniformly chosen words, replacing them by PAD
/// in place. The response is the probability of the class predicted on the
/// full input. Samples are weighted by `exp(−D²/w²)` with `D` the fraction
/// of dropped words, and a ridge model with an unpenalised intercept is fit.
pub fn lime_scores<C: Classifier + ?Sized>(
    model: &C,
    example: &Example,
    opts: &LimeOptions,
    rng: &mut Rng,
) -> Result<TokenScores> {
    let k = example.word_count();
    if k == 0 {
        return Err(Error::input(format!("example {} has no words to explain", example.id)));
    }
    if opts.n_samples < 2 * k {
        return Err(Error::input(format!(
            "n_samples {} below twice the word count {k}",
            opts.n_samples
        )));
    }
    if !(opts.kernel_width > 0.0) || !(opts.ridge_lambda >= 0.0) {
        return Err(Error::input("kernel_width must be positive and ridge_lambda non-negative"));
    }
    let ids = example.real_ids();
    let probs = model.class_probs(ids)?;
    let class = predicted(&probs)?;
    let target = argmax(&probs);

    let n = opts.n_samples;
    let mut x = DMatrix::<f64>::from_element(n, k, 1.0);
    let mut y = DVector::<f64>::zeros(n);
    let mut w = DVector::<f64>::zeros(n);
    y[0] = probs[target];
    w[0] = 1.0;
    let mut perturbed = ids.to_vec();
    for s in 1..n {
        let drop = 1 + rng.below(k);
        perturbed.copy_from_slice(ids);
        for j in rng.sample_without_replacement(k, drop) {
            x[(s, j)] = 0.0;
            perturbed[j + 1] = Vocabulary::PAD_ID;
        }
        let p = model.class_probs(&perturbed)?;
        if p.len() <= target || !p[target].is_finite() {
            return Err(Error::numeric("classifier returned a non-finite probability"));
        }
        y[s] = p[target];
        let d = drop as f64 / k as f64;
        w[s] = (-(d * d) / (opts.kernel_width * opts.kernel_width)).exp();
    }

    let coef = match weighted_ridge(&x, &y, &w, opts.ridge_lambda) {
        Some(c) => c,
        None => weighted_ridge(&x, &y, &w, (opts.ridge_lambda * 10.0).max(1e-6))
            .ok_or_else(|| Error::numeric(format!("degenerate LIME design for {}", example.id)))?,
    };
    let raw: Vec<f64> = coef.iter().copied().collect();
    Ok(TokenScores {
        method: Method::Lime,
        scores: max_normalise(&raw),
        predicted_class: class,
        class_probs: probs,
        raw_coefficients: Some(raw),
    })
}

/// Solves `min Σ wᵢ (yᵢ − b − xᵢ·β)² + λ‖β‖²`, returning β. `None` when the
/// normal equations are not positive definite.
fn weighted_ridge(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let total: f64 = w.sum();
    if !(total > 0.0) {
        return None;
    }
    let k = x.ncols();
    if y.iter().all(|&v| v == y[0]) {
        // Exact solution; the centred system would leave rounding residue.
        return Some(DVector::zeros(k));
    }
    // Centering on the weighted means removes the intercept from the system.
    let x_mean: Vec<f64> = (0..k).map(|j| x.column(j).dot(w) / total).collect();
    let y_mean = y.dot(w) / total;
    let mut xc = x.clone();
    for j in 0..k {
        xc.column_mut(j).add_scalar_mut(-x_mean[j]);
    }
    let yc = y.add_scalar(-y_mean);
    let mut xw = xc.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let mut a = xc.transpose() * &xw;
    for j in 0..k {
        a[(j, j)] += lambda;
    }
    let b = xw.transpose() * yc;
    let beta = a.cholesky()?.solve(&b);
    beta.iter().all(|v| v.is_finite()).then_some(beta)
}
