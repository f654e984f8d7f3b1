//! Damped-Newton (IRLS) solver for binary logistic regression.
//!
//! Minimizes mean log-loss plus an optional ridge penalty on the weights
//! (the intercept is never penalized):
//!
//! ```text
//! J(w, b) = (1/n) Σ_i [ ln(1 + e^{s_i}) − y_i s_i ] + (λ/2) ‖w‖²,   s_i = w·x_i + b
//! ```
//!
//! The mean-loss convention makes the fit invariant to duplicating every row.
//! The same solver backs the stacking meta-learner, Platt scaling, and
//! logistic recalibration (slope/intercept).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LogregOptions {
    /// Ridge strength λ on the weights (per-sample scale). 0 disables.
    pub l2: f64,
    /// Convergence threshold on the L2 norm of the penalized gradient.
    pub tol: f64,
    pub max_iter: usize,
    /// Separation guard: with λ = 0, abort once any |w_j| exceeds this.
    pub weight_guard: f64,
}

impl Default for LogregOptions {
    fn default() -> Self {
        Self {
            l2: 0.0,
            tol: 1e-8,
            max_iter: 100,
            weight_guard: 35.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LogregFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub final_log_loss: f64,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Numerically stable per-sample log-loss `ln(1 + e^s) − y·s`.
fn sample_loss(s: f64, y: f64) -> f64 {
    if s > 0.0 {
        s * (1.0 - y) + (-s).exp().ln_1p()
    } else {
        -y * s + s.exp().ln_1p()
    }
}

fn mean_objective(rows: &[Vec<f64>], labels: &[u8], beta: &[f64], l2: f64) -> f64 {
    let k = beta.len() - 1;
    let n = rows.len() as f64;
    let mut total = 0.0;
    for (row, &y) in rows.iter().zip(labels) {
        let s = linear(row, beta);
        total += sample_loss(s, y as f64);
    }
    let penalty = 0.5 * l2 * beta[..k].iter().map(|w| w * w).sum::<f64>();
    total / n + penalty
}

fn linear(row: &[f64], beta: &[f64]) -> f64 {
    let k = beta.len() - 1;
    let mut s = beta[k];
    for (x, w) in row.iter().zip(&beta[..k]) {
        s += x * w;
    }
    s
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Penalized gradient of the mean objective at `beta` (intercept last).
pub fn gradient(rows: &[Vec<f64>], labels: &[u8], beta: &[f64], l2: f64) -> Vec<f64> {
    let k = beta.len() - 1;
    let n = rows.len() as f64;
    let mut g = vec![0.0; k + 1];
    for (row, &y) in rows.iter().zip(labels) {
        let resid = logistic(linear(row, beta)) - y as f64;
        for (gj, xj) in g[..k].iter_mut().zip(row) {
            *gj += resid * xj;
        }
        g[k] += resid;
    }
    for gj in g.iter_mut() {
        *gj /= n;
    }
    for (gj, wj) in g[..k].iter_mut().zip(&beta[..k]) {
        *gj += l2 * wj;
    }
    g
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::Numerical("singular normal matrix".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[row][c] -= factor * a[col][c];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for c in row + 1..n {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Ok(x)
}

fn validate(rows: &[Vec<f64>], labels: &[u8], opts: &LogregOptions) -> Result<usize> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("logistic regression features"));
    }
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            actual: labels.len(),
        });
    }
    let k = rows[0].len();
    if k == 0 {
        return Err(Error::EmptyInput("feature columns"));
    }
    for row in rows {
        if row.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: row.len(),
            });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    if rows.len() < k + 1 {
        return Err(Error::TooFewRecords {
            required: k + 1,
            actual: rows.len(),
        });
    }
    if !(opts.l2 >= 0.0) || !opts.tol.is_finite() || opts.tol <= 0.0 {
        return Err(Error::InvalidConfig(
            "l2 must be >= 0 and tol > 0".into(),
        ));
    }
    Ok(k)
}

/// Fit binary logistic regression by damped Newton steps.
///
/// Non-convergence within `max_iter` is not an error: the partial fit is
/// returned with `converged = false`. Suspected perfect separation (λ = 0 and
/// a weight beyond `weight_guard`) aborts with [`Error::PerfectSeparation`].
pub fn fit_logistic(rows: &[Vec<f64>], labels: &[u8], opts: &LogregOptions) -> Result<LogregFit> {
    let k = validate(rows, labels, opts)?;
    let n = rows.len() as f64;
    let prevalence = labels.iter().filter(|&&y| y == 1).count() as f64 / n;

    let mut beta = vec![0.0; k + 1];
    beta[k] = (prevalence / (1.0 - prevalence)).ln();

    let mut iterations = 0;
    let mut grad = gradient(rows, labels, &beta, opts.l2);
    let mut gnorm = norm(&grad);

    while gnorm > opts.tol && iterations < opts.max_iter {
        // Weighted normal matrix (1/n) X̃ᵀ R X̃ + λ diag(1…1, 0), tiny ridge for safety.
        let mut h = vec![vec![0.0; k + 1]; k + 1];
        for row in rows {
            let p = logistic(linear(row, &beta));
            let r = (p * (1.0 - p)).max(1e-12);
            for i in 0..=k {
                let xi = if i < k { row[i] } else { 1.0 };
                for j in i..=k {
                    let xj = if j < k { row[j] } else { 1.0 };
                    h[i][j] += r * xi * xj;
                }
            }
        }
        for i in 0..=k {
            for j in i..=k {
                h[i][j] /= n;
                h[j][i] = h[i][j];
            }
            if i < k {
                h[i][i] += opts.l2;
            }
            h[i][i] += 1e-10;
        }

        let direction = solve_dense(h, grad.iter().map(|g| -g).collect())?;

        // Backtracking line search on the penalized objective (Armijo).
        let objective = mean_objective(rows, labels, &beta, opts.l2);
        let slope: f64 = grad.iter().zip(&direction).map(|(g, d)| g * d).sum();
        let mut step = 1.0;
        let mut next = beta.clone();
        loop {
            for ((nj, bj), dj) in next.iter_mut().zip(&beta).zip(&direction) {
                *nj = bj + step * dj;
            }
            if mean_objective(rows, labels, &next, opts.l2) <= objective + 1e-4 * step * slope {
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                // Stalled by floating-point noise; report the current point.
                next.copy_from_slice(&beta);
                break;
            }
        }
        beta = next;
        iterations += 1;

        if opts.l2 == 0.0 {
            let max_w = beta[..k].iter().fold(0.0f64, |m, w| m.max(w.abs()));
            if max_w > opts.weight_guard {
                return Err(Error::PerfectSeparation {
                    guard: opts.weight_guard,
                });
            }
        }

        grad = gradient(rows, labels, &beta, opts.l2);
        let new_gnorm = norm(&grad);
        if new_gnorm == gnorm && step < 1e-12 {
            break;
        }
        gnorm = new_gnorm;
    }

    Ok(LogregFit {
        weights: beta[..k].to_vec(),
        intercept: beta[k],
        iterations,
        final_log_loss: mean_objective(rows, labels, &beta, 0.0),
        gradient_norm: gnorm,
        converged: gnorm <= opts.tol,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Vec<f64>>, Vec<u8>) {
        let rows = vec![
            vec![-2.0],
            vec![-1.5],
            vec![-1.0],
            vec![-0.4],
            vec![0.1],
            vec![0.5],
            vec![1.1],
            vec![1.8],
            vec![2.2],
            vec![2.9],
        ];
        let labels = vec![0, 0, 0, 1, 0, 1, 0, 1, 1, 1];
        (rows, labels)
    }

    #[test]
    fn gradient_vanishes_at_solution() {
        let (rows, labels) = toy();
        let fit = fit_logistic(&rows, &labels, &LogregOptions::default()).unwrap();
        assert!(fit.converged);
        let mut beta = fit.weights.clone();
        beta.push(fit.intercept);
        assert!(norm(&gradient(&rows, &labels, &beta, 0.0)) <= 1e-8);
    }

    #[test]
    fn duplicating_rows_leaves_fit_unchanged() {
        let (rows, labels) = toy();
        let opts = LogregOptions {
            l2: 0.1,
            ..Default::default()
        };
        let fit = fit_logistic(&rows, &labels, &opts).unwrap();
        let doubled_rows: Vec<Vec<f64>> = rows.iter().chain(rows.iter()).cloned().collect();
        let doubled_labels: Vec<u8> = labels.iter().chain(labels.iter()).copied().collect();
        let fit2 = fit_logistic(&doubled_rows, &doubled_labels, &opts).unwrap();
        assert!((fit.weights[0] - fit2.weights[0]).abs() < 1e-9);
        assert!((fit.intercept - fit2.intercept).abs() < 1e-9);
    }

    #[test]
    fn separation_is_detected() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let labels: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let err = fit_logistic(&rows, &labels, &LogregOptions::default()).unwrap_err();
        assert!(matches!(err, Error::PerfectSeparation { .. }));
    }

    #[test]
    fn single_class_is_rejected() {
        let rows = vec![vec![0.0], vec![1.0]];
        let err = fit_logistic(&rows, &[1, 1], &LogregOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SingleClass));
    }
}
