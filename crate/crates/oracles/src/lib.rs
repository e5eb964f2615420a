//! Brute-force reference computations used to check `oamturb-core`.
//!
//! Nothing here shares code with the library under test: integrals are
//! dense midpoint sums, capacities are closed forms or exhaustive searches.

use std::f64::consts::PI;

use rayon::prelude::*;

/// Dense midpoint-rule evaluation of the thin-screen OAM crosstalk
/// probability
///
/// `P(delta) = (1/pi) int_0^1 rho drho int_0^{2pi} cos(delta theta) exp[-3.44 t^{5/3} (rho |sin(theta/2)|)^{5/3}] dtheta`
///
/// on an `n x n` grid over `(rho, theta)`.
pub struct CrosstalkOracle {
    /// Radial integral at each angular midpoint.
    profile: Vec<f64>,
}

impl CrosstalkOracle {
    pub fn new(d_over_r0: f64, n: usize) -> Self {
        let a = 3.44 * d_over_r0.powf(5.0 / 3.0);
        let h = 1.0 / n as f64;
        let dtheta = 2.0 * PI / n as f64;
        let profile = (0..n)
            .into_par_iter()
            .map(|j| {
                let theta = (j as f64 + 0.5) * dtheta;
                let s = a * (0.5 * theta).sin().abs().powf(5.0 / 3.0);
                (0..n)
                    .map(|i| {
                        let rho = (i as f64 + 0.5) * h;
                        rho * (-s * rho.powf(5.0 / 3.0)).exp()
                    })
                    .sum::<f64>()
                    * h
            })
            .collect();
        Self { profile }
    }

    pub fn probability(&self, delta: i32) -> f64 {
        let n = self.profile.len();
        let dtheta = 2.0 * PI / n as f64;
        let sum: f64 = self
            .profile
            .iter()
            .enumerate()
            .map(|(j, g)| g * (delta as f64 * (j as f64 + 0.5) * dtheta).cos())
            .sum();
        sum * dtheta / PI
    }
}

/// Mutual information in bits of a column-stochastic channel `q[d][s]`
/// (detected `d` given sent `s`) at input `p`.
pub fn mutual_information(q: &[Vec<f64>], p: &[f64]) -> f64 {
    let mut mi = 0.0;
    for row in q {
        let r: f64 = row.iter().zip(p).map(|(a, b)| a * b).sum();
        for (&qs, &ps) in row.iter().zip(p) {
            if ps > 0.0 && qs > 0.0 {
                mi += ps * qs * (qs / r).log2();
            }
        }
    }
    mi
}

/// Capacity of the circulant channel whose first column is `column`:
/// `log2 n - H(column)`.
pub fn circulant_capacity(column: &[f64]) -> f64 {
    let h: f64 = column.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum();
    (column.len() as f64).log2() - h
}

/// Best mutual information of a 3-input channel over the simplex lattice
/// with spacing `1/steps`.
pub fn simplex_search_3(q: &[Vec<f64>], steps: usize) -> f64 {
    (0..=steps)
        .into_par_iter()
        .map(|i| {
            let mut best = 0.0f64;
            for j in 0..=(steps - i) {
                let p = [i, j, steps - i - j].map(|k| k as f64 / steps as f64);
                best = best.max(mutual_information(q, &p));
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

/// Kolmogorov phase structure function `6.88 (r/r0)^{5/3}`.
pub fn kolmogorov(r: f64, r0: f64) -> f64 {
    6.88 * (r / r0).powf(5.0 / 3.0)
}
