//! Built-in differentiable scorers with hand-derived gradients.
//!
//! These stand in for the per-modality networks: a logistic-of-affine scorer
//! and a two-layer tanh perceptron. Both can target the positive-class
//! probability or the pre-logistic score (whose linear case makes the path
//! integral exactly complete).

use super::DifferentiableScorer;
use crate::fusion::logistic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerTarget {
    /// `logistic(score)`: the positive-class probability.
    Probability,
    /// The raw affine/network output before the logistic.
    PreLogistic,
}

#[derive(Debug, Clone)]
pub struct LinearScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub target: ScorerTarget,
}

impl LinearScorer {
    pub fn probability(weights: Vec<f64>, bias: f64) -> Self {
        Self {
            weights,
            bias,
            target: ScorerTarget::Probability,
        }
    }

    pub fn pre_logistic(weights: Vec<f64>, bias: f64) -> Self {
        Self {
            weights,
            bias,
            target: ScorerTarget::PreLogistic,
        }
    }

    fn score(&self, x: &[f64]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(x)
                .map(|(w, xi)| w * xi)
                .sum::<f64>()
    }
}

impl DifferentiableScorer for LinearScorer {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let s = self.score(x);
        match self.target {
            ScorerTarget::Probability => logistic(s),
            ScorerTarget::PreLogistic => s,
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self.target {
            ScorerTarget::Probability => {
                let p = logistic(self.score(x));
                let factor = p * (1.0 - p);
                self.weights.iter().map(|w| factor * w).collect()
            }
            ScorerTarget::PreLogistic => self.weights.clone(),
        }
    }
}

/// Two-layer perceptron: `score = w2 · tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone)]
pub struct MlpScorer {
    /// Hidden × input weight matrix, one row per hidden unit.
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub target: ScorerTarget,
}

impl MlpScorer {
    pub fn new(
        w1: Vec<Vec<f64>>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
        target: ScorerTarget,
    ) -> Self {
        let hidden = w1.len();
        assert_eq!(b1.len(), hidden, "b1 length must match hidden units");
        assert_eq!(w2.len(), hidden, "w2 length must match hidden units");
        let input = w1.first().map_or(0, Vec::len);
        assert!(
            w1.iter().all(|row| row.len() == input),
            "w1 rows must share one input dimension"
        );
        Self {
            w1,
            b1,
            w2,
            b2,
            target,
        }
    }

    fn input_dim(&self) -> usize {
        self.w1.first().map_or(0, Vec::len)
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.w1
            .iter()
            .zip(&self.b1)
            .map(|(row, b)| {
                let pre = b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
                pre.tanh()
            })
            .collect()
    }

    fn score(&self, x: &[f64]) -> f64 {
        let h = self.hidden(x);
        self.b2 + self.w2.iter().zip(&h).map(|(w, hi)| w * hi).sum::<f64>()
    }
}

impl DifferentiableScorer for MlpScorer {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let s = self.score(x);
        match self.target {
            ScorerTarget::Probability => logistic(s),
            ScorerTarget::PreLogistic => s,
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let h = self.hidden(x);
        // ds/dx_i = Σ_j w2_j (1 − h_j²) w1_{ji}
        let mut grad = vec![0.0; self.input_dim()];
        for ((row, &w2j), &hj) in self.w1.iter().zip(&self.w2).zip(&h) {
            let factor = w2j * (1.0 - hj * hj);
            for (g, w1ji) in grad.iter_mut().zip(row) {
                *g += factor * w1ji;
            }
        }
        if self.target == ScorerTarget::Probability {
            let p = logistic(self.score(x));
            let factor = p * (1.0 - p);
            for g in grad.iter_mut() {
                *g *= factor;
            }
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::gradient_check;

    #[test]
    fn linear_gradient_closed_form() {
        let scorer = LinearScorer::probability(vec![0.8, -1.2], 0.3);
        let x = [0.6, 0.1];
        let p = scorer.value(&x);
        let grad = scorer.gradient(&x);
        assert!((grad[0] - p * (1.0 - p) * 0.8).abs() < 1e-15);
        assert!((grad[1] + p * (1.0 - p) * 1.2).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let linear = LinearScorer::probability(vec![0.4, -0.9, 1.3], -0.2);
        let mlp = MlpScorer::new(
            vec![vec![0.5, -0.3, 0.8], vec![-0.6, 0.2, 0.1]],
            vec![0.1, -0.4],
            vec![1.1, -0.7],
            0.05,
            ScorerTarget::Probability,
        );
        let x = [0.3, -0.5, 0.9];
        assert!(gradient_check(&linear, &x, 1e-5) < 1e-4);
        assert!(gradient_check(&mlp, &x, 1e-5) < 1e-4);
    }

    #[test]
    fn zero_weight_mlp_is_constant_with_zero_gradient() {
        let mlp = MlpScorer::new(
            vec![vec![0.0, 0.0]; 3],
            vec![0.0; 3],
            vec![0.0; 3],
            0.7,
            ScorerTarget::Probability,
        );
        assert_eq!(mlp.value(&[1.0, -2.0]), mlp.value(&[5.0, 5.0]));
        assert!(mlp.gradient(&[1.0, -2.0]).iter().all(|&g| g == 0.0));
    }
}
