//! Cubic smoothing spline with a residual budget.
//!
//! Among natural cubic splines `g` with knots at the sample abscissae, finds the
//! one minimizing `∫ g''(x)² dx` subject to `Σ (y_i - g(x_i))² ≤ budget`. The
//! solution is the penalized fit `(R + α QᵀQ) γ = Qᵀy`, `g = y - α Q γ`
//! where `γ` holds the interior second derivatives; the residual grows
//! monotonically in `α`, which is searched on a log scale.

use crate::geometry::RoadGenome;

/// Smooths the curvature profile against arc length. Arc lengths are kept.
pub fn smooth(genome: &RoadGenome, factor: f64) -> RoadGenome {
    let fitted = smoothing_spline(genome.arc_lengths(), genome.curvatures(), factor);
    genome
        .with_curvatures(fitted)
        .expect("smoothing preserves length and finiteness")
}

/// Fitted values of the smoothing spline at each `x_i`.
///
/// `x` must be strictly increasing. With `budget <= 0` the data are returned
/// unchanged (interpolation); when the budget admits the least-squares line,
/// that line is returned.
pub fn smoothing_spline(x: &[f64], y: &[f64], budget: f64) -> Vec<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 3 || budget <= 0.0 {
        return y.to_vec();
    }
    let line = least_squares_line(x, y);
    if residual(y, &line) <= budget {
        return line;
    }
    let system = PenalizedSystem::new(x, y);

    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    // Bracket ln α so that residual(lo) <= budget < residual(hi).
    while system.residual(hi.exp()) <= budget {
        lo = hi;
        hi += 4.0;
        if hi > 300.0 {
            break;
        }
    }
    while system.residual(lo.exp()) > budget {
        hi = lo;
        lo -= 4.0;
        if lo < -200.0 {
            return y.to_vec();
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if system.residual(mid.exp()) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    system.fit(lo.exp())
}

/// `∫ g''²` of the natural cubic spline interpolating `(x, y)`.
pub fn roughness(x: &[f64], y: &[f64]) -> f64 {
    if x.len() < 3 {
        return 0.0;
    }
    let system = PenalizedSystem::new(x, y);
    let gamma = system.second_derivatives(0.0);
    system.r_quadratic(&gamma)
}

fn residual(y: &[f64], g: &[f64]) -> f64 {
    y.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn least_squares_line(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    x.iter().map(|v| my + slope * (v - mx)).collect()
}

/// Banded pieces of the Reinsch formulation.
struct PenalizedSystem<'a> {
    y: &'a [f64],
    h: Vec<f64>,
    qty: Vec<f64>,
}

impl<'a> PenalizedSystem<'a> {
    fn new(x: &[f64], y: &'a [f64]) -> Self {
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let m = x.len() - 2;
        let qty = (0..m)
            .map(|j| (y[j + 2] - y[j + 1]) / h[j + 1] - (y[j + 1] - y[j]) / h[j])
            .collect();
        Self { y, h, qty }
    }

    fn m(&self) -> usize {
        self.h.len() - 1
    }

    /// Column `j` of Q has entries at rows j, j+1, j+2.
    fn q_col(&self, j: usize) -> [f64; 3] {
        let (a, b) = (self.h[j], self.h[j + 1]);
        [1.0 / a, -1.0 / a - 1.0 / b, 1.0 / b]
    }

    /// Solves `(R + α QᵀQ) γ = Qᵀy`.
    fn second_derivatives(&self, alpha: f64) -> Vec<f64> {
        let m = self.m();
        // Lower band: band[i][k] = A[i][i-k].
        let mut band = vec![[0.0f64; 3]; m];
        for i in 0..m {
            let qi = self.q_col(i);
            band[i][0] = (self.h[i] + self.h[i + 1]) / 3.0 + alpha * qi.iter().map(|v| v * v).sum::<f64>();
            if i >= 1 {
                let qp = self.q_col(i - 1);
                band[i][1] = self.h[i] / 6.0 + alpha * (qp[1] * qi[0] + qp[2] * qi[1]);
            }
            if i >= 2 {
                let qpp = self.q_col(i - 2);
                band[i][2] = alpha * qpp[2] * qi[0];
            }
        }
        let chol = band_cholesky(&band);
        band_solve(&chol, &self.qty)
    }

    fn fit(&self, alpha: f64) -> Vec<f64> {
        let gamma = self.second_derivatives(alpha);
        let qg = self.q_times(&gamma);
        self.y.iter().zip(&qg).map(|(y, q)| y - alpha * q).collect()
    }

    fn residual(&self, alpha: f64) -> f64 {
        let gamma = self.second_derivatives(alpha);
        let qg = self.q_times(&gamma);
        alpha * alpha * qg.iter().map(|v| v * v).sum::<f64>()
    }

    fn q_times(&self, gamma: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.y.len()];
        for (j, g) in gamma.iter().enumerate() {
            let q = self.q_col(j);
            out[j] += q[0] * g;
            out[j + 1] += q[1] * g;
            out[j + 2] += q[2] * g;
        }
        out
    }

    fn r_quadratic(&self, gamma: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, g) in gamma.iter().enumerate() {
            acc += (self.h[i] + self.h[i + 1]) / 3.0 * g * g;
            if i + 1 < gamma.len() {
                acc += 2.0 * self.h[i + 1] / 6.0 * g * gamma[i + 1];
            }
        }
        acc
    }
}

fn band_cholesky(band: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let m = band.len();
    let mut l = vec![[0.0f64; 3]; m];
    let get = |l: &Vec<[f64; 3]>, i: usize, j: usize| -> f64 {
        if i >= j && i - j <= 2 {
            l[i][i - j]
        } else {
            0.0
        }
    };
    for i in 0..m {
        for j in i.saturating_sub(2)..=i {
            let mut sum = band[i][i - j];
            for k in i.saturating_sub(2)..j {
                sum -= get(&l, i, k) * get(&l, j, k);
            }
            if i == j {
                l[i][0] = sum.max(f64::MIN_POSITIVE).sqrt();
            } else {
                l[i][i - j] = sum / l[j][0];
            }
        }
    }
    l
}

fn band_solve(l: &[[f64; 3]], b: &[f64]) -> Vec<f64> {
    let m = l.len();
    let mut z = vec![0.0; m];
    for i in 0..m {
        let mut s = b[i];
        for k in 1..=2.min(i) {
            s -= l[i][k] * z[i - k];
        }
        z[i] = s / l[i][0];
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = z[i];
        for k in 1..=2 {
            if i + k < m {
                s -= l[i + k][k] * x[i + k];
            }
        }
        x[i] = s / l[i][0];
    }
    x
}
