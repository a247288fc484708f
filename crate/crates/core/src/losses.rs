//! Discriminative losses on sparse codes.
//!
//! Classes are 0-indexed. The multinomial classifier is a `(k+1) x C`
//! matrix: row `k` holds the per-class biases (acting on an appended
//! constant feature), and column `C-1` is pinned to zero so the softmax
//! parametrization is identifiable.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    weights: DMatrix<f64>,
}

impl ClassifierParams {
    pub fn zeros(n_atoms: usize, n_classes: usize) -> Self {
        ClassifierParams {
            weights: DMatrix::zeros(n_atoms + 1, n_classes),
        }
    }

    /// Fails if the last column is not identically zero.
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if weights.ncols() < 2 || weights.nrows() < 2 {
            return Err(Error::Shape(format!(
                "classifier must be (k+1) x C with k >= 1, C >= 2; got {:?}",
                weights.shape()
            )));
        }
        if weights.column(weights.ncols() - 1).iter().any(|&v| v != 0.0) {
            return Err(Error::Input("last classifier column must be zero".into()));
        }
        Ok(ClassifierParams { weights })
    }

    /// Zeroes the pinned column of an arbitrary matrix.
    pub fn pinned(mut weights: DMatrix<f64>) -> Self {
        let last = weights.ncols() - 1;
        weights.column_mut(last).fill(0.0);
        ClassifierParams { weights }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.weights
    }

    pub fn n_atoms(&self) -> usize {
        self.weights.nrows() - 1
    }

    pub fn n_classes(&self) -> usize {
        self.weights.ncols()
    }

    /// Class scores `w_c^T a + w0_c`.
    pub fn scores(&self, alpha_tilde: &DVector<f64>) -> DVector<f64> {
        let k = self.n_atoms();
        let w = &self.weights;
        DVector::from_fn(w.ncols(), |c, _| {
            w.column(c).rows(0, k).dot(alpha_tilde) + w[(k, c)]
        })
    }

    pub fn is_pinned(&self) -> bool {
        self.weights
            .column(self.weights.ncols() - 1)
            .iter()
            .all(|&v| v == 0.0)
    }
}

/// A one-hot label over `n_classes` classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHot {
    class: usize,
    n_classes: usize,
}

impl OneHot {
    pub fn new(class: usize, n_classes: usize) -> Result<Self> {
        if class >= n_classes {
            return Err(Error::Input(format!(
                "class {class} out of range for {n_classes} classes"
            )));
        }
        Ok(OneHot { class, n_classes })
    }

    pub fn from_slice(y: &[f64]) -> Result<Self> {
        let mut hot = None;
        for (c, &v) in y.iter().enumerate() {
            if v == 1.0 && hot.is_none() {
                hot = Some(c);
            } else if v != 0.0 {
                return Err(Error::Input(format!("malformed one-hot vector {y:?}")));
            }
        }
        let class = hot.ok_or_else(|| Error::Input(format!("one-hot vector {y:?} has no hot entry")))?;
        OneHot::new(class, y.len())
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn log_sum_exp(scores: &DVector<f64>) -> f64 {
    let max = scores.max();
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// `log(1 + exp(-y w^T [a; 1]))` for `y = +-1`; `w` has length `k+1` with
/// the bias last.
pub fn binary_logistic_loss(w: &DVector<f64>, alpha: &DVector<f64>, y: i8) -> f64 {
    let margin = f64::from(y) * binary_score(w, alpha);
    log1p_exp(-margin)
}

/// Gradients of [`binary_logistic_loss`] in `w` and in `alpha`.
pub fn binary_logistic_grads(w: &DVector<f64>, alpha: &DVector<f64>, y: i8) -> (DVector<f64>, DVector<f64>) {
    let k = alpha.len();
    let y = f64::from(y);
    let margin = y * binary_score(w, alpha);
    // d/dmargin log(1 + e^{-margin}) = -sigmoid(-margin)
    let coef = -y * sigmoid(-margin);
    let mut grad_w = DVector::zeros(k + 1);
    grad_w.rows_mut(0, k).axpy(coef, alpha, 0.0);
    grad_w[k] = coef;
    let grad_alpha = w.rows(0, k) * coef;
    (grad_w, grad_alpha)
}

fn binary_score(w: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let k = alpha.len();
    debug_assert_eq!(w.len(), k + 1);
    w.rows(0, k).dot(alpha) + w[k]
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_shapes(w: &ClassifierParams, alpha_tilde: &DVector<f64>, y: &OneHot) -> Result<()> {
    if alpha_tilde.len() != w.n_atoms() || y.n_classes() != w.n_classes() {
        return Err(Error::Shape(format!(
            "classifier {:?} vs code length {} and {} classes",
            w.weights.shape(),
            alpha_tilde.len(),
            y.n_classes()
        )));
    }
    Ok(())
}

/// Softmax negative log-likelihood plus `xi ||W||_F^2`.
pub fn multinomial_loss(w: &ClassifierParams, alpha_tilde: &DVector<f64>, y: &OneHot, xi: f64) -> Result<f64> {
    check_shapes(w, alpha_tilde, y)?;
    let scores = w.scores(alpha_tilde);
    Ok(log_sum_exp(&scores) - scores[y.class()] + xi * w.weights.norm_squared())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialGrads {
    pub loss: f64,
    /// Same shape as the classifier; pinned column is zero.
    pub grad_w: DMatrix<f64>,
    /// Gradient in the aggregated code (bias row excluded).
    pub grad_alpha: DVector<f64>,
}

pub fn multinomial_grads(w: &ClassifierParams, alpha_tilde: &DVector<f64>, y: &OneHot, xi: f64) -> Result<MultinomialGrads> {
    check_shapes(w, alpha_tilde, y)?;
    let k = w.n_atoms();
    let n_classes = w.n_classes();
    let scores = w.scores(alpha_tilde);
    let lse = log_sum_exp(&scores);
    let loss = lse - scores[y.class()] + xi * w.weights.norm_squared();

    let mut residual = scores.map(|s| (s - lse).exp());
    residual[y.class()] -= 1.0;

    let mut grad_w = &w.weights * (2.0 * xi);
    let mut grad_alpha = DVector::zeros(k);
    for c in 0..n_classes - 1 {
        let rc = residual[c];
        let mut col = grad_w.column_mut(c);
        col.rows_mut(0, k).axpy(rc, alpha_tilde, 1.0);
        col[k] += rc;
        grad_alpha.axpy(rc, &w.weights.column(c).rows(0, k), 1.0);
    }
    grad_w.column_mut(n_classes - 1).fill(0.0);
    Ok(MultinomialGrads {
        loss,
        grad_w,
        grad_alpha,
    })
}

/// Maximum-likelihood class; ties go to the lowest index.
pub fn predict(w: &ClassifierParams, alpha_tilde: &DVector<f64>) -> usize {
    let scores = w.scores(alpha_tilde);
    let mut best = 0;
    for c in 1..scores.len() {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_loss_values() {
        let w = DVector::zeros(4);
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!((binary_logistic_loss(&w, &a, 1) - std::f64::consts::LN_2).abs() < 1e-15);

        let mut w = DVector::zeros(4);
        w[3] = 50.0;
        assert!(binary_logistic_loss(&w, &a, 1) <= 2e-22);
        let l = binary_logistic_loss(&w, &a, -1);
        assert!((l - 50.0).abs() < 1e-12 && l.is_finite());
        w[3] = 800.0;
        assert!((binary_logistic_loss(&w, &a, -1) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_classifier_loss_is_log_c() {
        let w = ClassifierParams::zeros(5, 4);
        let a = DVector::from_element(5, 0.3);
        for c in 0..4 {
            let y = OneHot::new(c, 4).unwrap();
            let l = multinomial_loss(&w, &a, &y, 1e-9).unwrap();
            assert!((l - 4.0f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn regularizer_contribution() {
        let mut raw = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 + 1.0);
        raw.column_mut(2).fill(0.0);
        let raw = &raw * (1e3 / raw.norm());
        let w = ClassifierParams::new(raw).unwrap();
        let a = DVector::from_element(3, 0.1);
        let y = OneHot::new(0, 3).unwrap();
        let diff = multinomial_loss(&w, &a, &y, 1e-9).unwrap() - multinomial_loss(&w, &a, &y, 0.0).unwrap();
        assert!((diff - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn malformed_one_hot() {
        assert!(OneHot::from_slice(&[0.0, 0.0]).is_err());
        assert!(OneHot::from_slice(&[1.0, 1.0]).is_err());
        assert!(OneHot::from_slice(&[0.5, 0.5]).is_err());
        assert_eq!(OneHot::from_slice(&[0.0, 1.0, 0.0]).unwrap().class(), 1);
    }

    #[test]
    fn zero_weights_annihilate_grad_alpha() {
        let w = ClassifierParams::zeros(6, 4);
        let a = DVector::from_element(6, 1.5);
        let g = multinomial_grads(&w, &a, &OneHot::new(2, 4).unwrap(), 1e-3).unwrap();
        assert_eq!(g.grad_alpha, DVector::zeros(6));
        assert!(g.grad_w.column(3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn confident_correct_prediction_leaves_only_regularizer() {
        let mut raw = DMatrix::zeros(3, 3);
        raw[(2, 0)] = 800.0;
        let w = ClassifierParams::new(raw).unwrap();
        let a = DVector::zeros(2);
        let xi = 1e-4;
        let g = multinomial_grads(&w, &a, &OneHot::new(0, 3).unwrap(), xi).unwrap();
        let expected = w.weights() * (2.0 * xi);
        assert!((g.grad_w - expected).amax() < 1e-12);
        assert!(g.grad_alpha.amax() < 1e-300);
    }

    #[test]
    fn predict_tie_breaks_low() {
        let w = ClassifierParams::zeros(3, 4);
        assert_eq!(predict(&w, &DVector::from_element(3, 1.0)), 0);
    }

    #[test]
    fn predict_argmax() {
        let mut raw = DMatrix::zeros(2, 4);
        raw[(1, 0)] = 0.1;
        raw[(1, 1)] = 0.9;
        raw[(1, 2)] = 0.2;
        let w = ClassifierParams::new(raw).unwrap();
        assert_eq!(predict(&w, &DVector::zeros(1)), 1);
    }

    #[test]
    fn pinned_column_enforced() {
        assert!(ClassifierParams::new(DMatrix::from_element(3, 2, 1.0)).is_err());
        assert!(ClassifierParams::pinned(DMatrix::from_element(3, 2, 1.0)).is_pinned());
    }
}
