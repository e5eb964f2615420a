//! Shannon capacity of discrete memoryless channels given as
//! column-stochastic matrices `Q[d, s] = P(d | s)`.
//!
//! All logarithms are base 2 and `0 log 0 = 0` throughout.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::channel::CrosstalkMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 10_000;

const SIMPLEX_TOL: f64 = 1e-12;
const STOCHASTIC_TOL: f64 = 1e-9;

/// Probabilities of the sent symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputDistribution(Vec<f64>);

impl InputDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidParameter("input distribution is empty".into()));
        }
        if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter("input probabilities must be non-negative".into()));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidParameter(format!("input probabilities sum to {sum}")));
        }
        Ok(Self(p))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        self.0.iter().map(|&p| -xlog2x(p)).sum()
    }
}

/// Which functional of the input distribution is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `I(X;Y) = H(Y) - H(Y|X)`.
    #[default]
    MutualInformation,
    /// `H(X) - H(Y|X)`, which equals `I(X;Y)` only when `H(X) = H(Y)`.
    EntropyDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    /// Mutual information attained by `optimal_input`, bits per use.
    pub capacity: f64,
    /// Upper bound on the true capacity at termination.
    pub upper_bound: f64,
    pub optimal_input: InputDistribution,
    pub iterations: usize,
    pub converged: bool,
    pub objective: Objective,
}

fn xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Checks that every column of `q` is a probability vector.
pub fn check_stochastic(q: ArrayView2<f64>) -> Result<()> {
    if q.ncols() == 0 || q.nrows() == 0 {
        return Err(Error::InvalidParameter("empty channel matrix".into()));
    }
    for (column, col) in q.axis_iter(Axis(1)).enumerate() {
        if col.iter().any(|&v| !(v >= -STOCHASTIC_TOL) || !v.is_finite()) {
            return Err(Error::NotStochastic {
                column,
                sum: col.sum(),
            });
        }
        let sum = col.sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NotStochastic { column, sum });
        }
    }
    Ok(())
}

fn check_input(q: ArrayView2<f64>, input: &InputDistribution) -> Result<()> {
    if input.len() != q.ncols() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} input probabilities", q.ncols()),
            found: input.len().to_string(),
        });
    }
    Ok(())
}

fn matrix_view(matrix: &CrosstalkMatrix) -> Result<ArrayView2<'_, f64>> {
    if !matrix.is_stochastic() {
        return Err(Error::NotStochastic {
            column: 0,
            sum: matrix.column_sums().iter().cloned().fold(f64::NAN, f64::min),
        });
    }
    Ok(matrix.entries().view())
}

fn output_distribution(q: ArrayView2<f64>, p: &[f64]) -> Vec<f64> {
    q.outer_iter()
        .map(|row| row.iter().zip(p).map(|(a, b)| a * b).sum())
        .collect()
}

/// `D_s = sum_d Q[d,s] log2(Q[d,s] / r_d)` for output distribution `r`.
fn divergences(q: ArrayView2<f64>, r: &[f64]) -> Vec<f64> {
    q.axis_iter(Axis(1))
        .map(|col| {
            col.iter()
                .zip(r)
                .map(|(&qd, &rd)| if qd > 0.0 { qd * (qd / rd).log2() } else { 0.0 })
                .sum()
        })
        .collect()
}

/// `sum_s p_s D_s`, skipping unused inputs whose divergence may be infinite.
fn average(p: &[f64], d: &[f64]) -> f64 {
    p.iter().zip(d).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * b).sum()
}

/// `I(X;Y)` of a column-stochastic array.
pub fn mutual_information_of(q: ArrayView2<f64>, input: &InputDistribution) -> Result<f64> {
    check_stochastic(q)?;
    check_input(q, input)?;
    let p = input.probabilities();
    let r = output_distribution(q, p);
    let d = divergences(q, &r);
    Ok(average(p, &d).max(0.0))
}

/// `H(X) - H(Y|X)` of a column-stochastic array.
pub fn entropy_difference_of(q: ArrayView2<f64>, input: &InputDistribution) -> Result<f64> {
    check_stochastic(q)?;
    check_input(q, input)?;
    let conditional: f64 = q
        .axis_iter(Axis(1))
        .zip(input.probabilities())
        .map(|(col, &ps)| -ps * col.iter().map(|&v| xlog2x(v)).sum::<f64>())
        .sum();
    Ok(input.entropy() - conditional)
}

/// `I(X;Y)` in bits; the matrix must be postselected or carry a loss row.
pub fn mutual_information(matrix: &CrosstalkMatrix, input: &InputDistribution) -> Result<f64> {
    mutual_information_of(matrix_view(matrix)?, input)
}

/// `H(X) - H(Y|X)` in bits at the given input, without optimization.
pub fn entropy_difference(matrix: &CrosstalkMatrix, input: &InputDistribution) -> Result<f64> {
    entropy_difference_of(matrix_view(matrix)?, input)
}

pub fn evaluate(matrix: &CrosstalkMatrix, input: &InputDistribution, objective: Objective) -> Result<f64> {
    match objective {
        Objective::MutualInformation => mutual_information(matrix, input),
        Objective::EntropyDifference => entropy_difference(matrix, input),
    }
}

/// Largest exponent multiplier tried by the accelerated update.
const MAX_STEP: f64 = 1048576.0;
/// Mass given back to a dropped input that turns out to be needed.
const RESTORE_MASS: f64 = 1e-4;
/// Times an input may be dropped by a Newton step before it is kept.
const MAX_DROPS: u32 = 3;
/// Reciprocal condition number below which the Newton system is skipped.
const MIN_RCOND: f64 = 1e-13;

struct State {
    p: Vec<f64>,
    d: Vec<f64>,
    info: f64,
}

impl State {
    fn new(q: ArrayView2<f64>, p: Vec<f64>) -> Self {
        let d = divergences(q, &output_distribution(q, &p));
        let info = average(&p, &d);
        Self { p, d, info }
    }

    fn upper(&self) -> f64 {
        self.d.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest divergence among inputs in use.
    fn active_upper(&self) -> f64 {
        self.p
            .iter()
            .zip(&self.d)
            .filter(|(a, _)| **a > 0.0)
            .map(|(_, b)| *b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `log2 sum_s p_s 2^{D_s}`, a lower bound on the capacity.
    fn lower(&self) -> f64 {
        let u = self.active_upper();
        u + self.p.iter().zip(&self.d).map(|(a, b)| weighted_exp2(*a, b - u)).sum::<f64>().log2()
    }

    /// Accepts `next` if it raises the mutual information, or keeps it
    /// level within rounding while shrinking the bracket.
    fn improved_by(&self, next: &State) -> bool {
        next.info > self.info
            || (next.info >= self.info - 4.0 * f64::EPSILON * self.info.abs().max(1.0)
                && next.upper() - next.lower() < self.upper() - self.lower())
    }
}

/// `a 2^x`, zero whenever `a` is.
fn weighted_exp2(a: f64, x: f64) -> f64 {
    if a > 0.0 {
        a * x.exp2()
    } else {
        0.0
    }
}

fn normalized(mut p: Vec<f64>) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

/// Newton step on the inputs in use, maximising `I(p)` subject to
/// `sum p = 1`. A step that would push an input negative stops at the
/// boundary and removes it; an input already dropped `MAX_DROPS` times
/// only moves halfway there instead.
fn newton_step(q: ArrayView2<f64>, st: &State, drops: &mut [u32]) -> Option<State> {
    let active: Vec<usize> = (0..st.p.len()).filter(|&s| st.p[s] > 0.0).collect();
    let m = active.len();
    if m < 2 {
        return None;
    }
    let r = output_distribution(q, &st.p);
    let mut k = DMatrix::<f64>::zeros(m + 1, m + 1);
    for (i, &a) in active.iter().enumerate() {
        for (j, &b) in active.iter().enumerate().skip(i) {
            let h: f64 = -q
                .column(a)
                .iter()
                .zip(q.column(b))
                .zip(&r)
                .map(|((x, y), rd)| if *rd > 0.0 { x * y / rd } else { 0.0 })
                .sum::<f64>()
                / std::f64::consts::LN_2;
            k[(i, j)] = h;
            k[(j, i)] = h;
        }
        k[(i, m)] = 1.0;
        k[(m, i)] = 1.0;
    }
    let rhs = DVector::from_iterator(m + 1, active.iter().map(|&a| -st.d[a]).chain([0.0]));
    let svd = k.svd(true, true);
    let sv = &svd.singular_values;
    if sv.min() <= MIN_RCOND * sv.max() {
        return None;
    }
    let sol = svd.solve(&rhs, 0.0).ok()?;
    let mut dir = vec![0.0; st.p.len()];
    for (i, &a) in active.iter().enumerate() {
        dir[a] = sol[i];
    }
    let slope: f64 = active.iter().map(|&a| dir[a] * st.d[a]).sum();
    if !dir.iter().all(|x| x.is_finite()) || !(slope > 0.0) {
        return None;
    }
    let mut t: f64 = 1.0;
    let mut blocking = None;
    for &a in &active {
        if dir[a] < 0.0 {
            let ta = st.p[a] / -dir[a] * if drops[a] < MAX_DROPS { 1.0 } else { 0.5 };
            if ta < t {
                t = ta;
                blocking = Some(a);
            }
        }
    }
    let t_boundary = t;
    for _ in 0..40 {
        let mut p: Vec<f64> = st.p.iter().zip(&dir).map(|(a, b)| (a + t * b).max(0.0)).collect();
        let dropped = blocking.filter(|&b| drops[b] < MAX_DROPS && t == t_boundary);
        if let Some(b) = dropped {
            p[b] = 0.0;
        }
        let next = State::new(q, normalized(p));
        if st.improved_by(&next) {
            if let Some(b) = dropped {
                drops[b] += 1;
            }
            return Some(next);
        }
        t *= 0.5;
    }
    None
}

/// Blahut-Arimoto update `p_s <- p_s 2^{mu D_s} / Z`. `mu = 1` is the
/// classical step, which never lowers the mutual information; larger
/// steps are tried first and kept only while it keeps rising.
fn multiplicative_step(q: ArrayView2<f64>, st: &State, step: &mut f64) -> State {
    let u = st.active_upper();
    loop {
        let p = st.p.iter().zip(&st.d).map(|(a, b)| weighted_exp2(*a, *step * (b - u))).collect();
        let next = State::new(q, normalized(p));
        if next.info >= st.info || *step <= 1.0 {
            *step = (*step * 2.0).min(MAX_STEP);
            return next;
        }
        *step = (*step / 4.0).max(1.0);
    }
}

/// Capacity of a column-stochastic array.
///
/// Starts from the uniform input and stops once
/// `max_s D_s - log2 sum_s p_s 2^{D_s} < tol`, where
/// `D_s = D(Q[., s] || Q p)`; the two terms bracket the capacity for any
/// input, so the stopping rule certifies the result however the input was
/// reached. Each iteration takes a Newton step on the inputs in use when
/// that system is well conditioned and otherwise an accelerated
/// Blahut-Arimoto step. Once the inputs in use have converged, the dropped
/// input that most violates the bound, if any, is restored.
///
/// The returned capacity is the mutual information of the final input.
pub fn blahut_arimoto_of(q: ArrayView2<f64>, tol: f64, max_iter: usize) -> Result<CapacityResult> {
    check_stochastic(q)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    let n = q.ncols();
    let mut st = State::new(q, vec![1.0 / n as f64; n]);
    let mut drops = vec![0u32; n];
    let mut step: f64 = 1.0;
    let mut upper = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        upper = st.upper();
        let lower = st.lower();
        if upper - lower < tol {
            converged = true;
            break;
        }
        if st.active_upper() - lower < tol {
            // the bound is violated only by dropped inputs
            let worst = (0..n)
                .filter(|&s| st.p[s] == 0.0)
                .max_by(|&a, &b| st.d[a].total_cmp(&st.d[b]))
                .expect("a dropped input violates the bound");
            let mut p = st.p.clone();
            p[worst] = RESTORE_MASS;
            st = State::new(q, normalized(p));
            continue;
        }
        st = match newton_step(q, &st, &mut drops) {
            Some(next) => {
                step = 1.0;
                next
            }
            None => multiplicative_step(q, &st, &mut step),
        };
    }
    let input = InputDistribution(st.p);
    let capacity = mutual_information_of(q, &input)?;
    if !converged {
        log::warn!("Blahut-Arimoto stopped after {iterations} iterations without reaching {tol:e}");
    }
    Ok(CapacityResult {
        capacity,
        upper_bound: upper.max(capacity),
        optimal_input: input,
        iterations,
        converged,
        objective: Objective::MutualInformation,
    })
}

/// Capacity of `matrix` by Blahut-Arimoto; the matrix must be stochastic.
pub fn blahut_arimoto(matrix: &CrosstalkMatrix, tol: f64, max_iter: usize) -> Result<CapacityResult> {
    blahut_arimoto_of(matrix_view(matrix)?, tol, max_iter)
}

/// `log2 N - H(column)` for a circulant (symmetric) channel.
pub fn symmetric_channel_capacity(q: &Array2<f64>) -> f64 {
    let h: f64 = q.column(0).iter().map(|&v| -xlog2x(v)).sum();
    (q.nrows() as f64).log2() - h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn binary_entropy(p: f64) -> f64 {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }

    #[test]
    fn binary_symmetric_channel() {
        let f = 0.11;
        let q = Array2::from_shape_vec((2, 2), vec![1.0 - f, f, f, 1.0 - f]).unwrap();
        let want = 1.0 - binary_entropy(f);
        let mi = mutual_information_of(q.view(), &InputDistribution::uniform(2)).unwrap();
        assert_abs_diff_eq!(mi, want, epsilon = 1e-12);
        assert_abs_diff_eq!(mi, 0.5, epsilon = 1e-4);
        let ba = blahut_arimoto_of(q.view(), 1e-12, 10_000).unwrap();
        assert!(ba.converged);
        assert_abs_diff_eq!(ba.capacity, want, epsilon = 1e-12);
    }

    #[test]
    fn identity_and_uniform_channels() {
        for n in [2, 3, 11] {
            let id = Array2::<f64>::eye(n);
            let ba = blahut_arimoto_of(id.view(), 1e-9, 100).unwrap();
            assert_abs_diff_eq!(ba.capacity, (n as f64).log2(), epsilon = 1e-12);
            for &p in ba.optimal_input.probabilities() {
                assert_abs_diff_eq!(p, 1.0 / n as f64, epsilon = 1e-12);
            }
            let u = Array2::from_elem((n, n), 1.0 / n as f64);
            let skew = InputDistribution::new((0..n).map(|i| (i + 1) as f64 / (n * (n + 1) / 2) as f64).collect()).unwrap();
            assert_abs_diff_eq!(mutual_information_of(u.view(), &skew).unwrap(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(entropy_difference_of(u.view(), &InputDistribution::uniform(n)).unwrap(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(
                entropy_difference_of(id.view(), &InputDistribution::uniform(n)).unwrap(),
                (n as f64).log2(),
                epsilon = 1e-12
            );
        }
        assert_abs_diff_eq!(
            mutual_information_of(Array2::<f64>::eye(11).view(), &InputDistribution::uniform(11)).unwrap(),
            3.4594316186,
            epsilon = 1e-9
        );
    }

    #[test]
    fn rejects_non_stochastic_input() {
        let q = Array2::from_shape_vec((2, 2), vec![0.5, 0.0, 0.3, 1.0]).unwrap();
        assert!(matches!(
            blahut_arimoto_of(q.view(), 1e-9, 10),
            Err(Error::NotStochastic { column: 0, .. })
        ));
        assert!(InputDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(InputDistribution::new(vec![-0.5, 1.5]).is_err());
        let id = Array2::<f64>::eye(3);
        assert!(mutual_information_of(id.view(), &InputDistribution::uniform(2)).is_err());
    }

    #[test]
    fn objectives_differ_off_symmetry() {
        // a Z-channel has H(Y) != H(X), so the two functionals disagree
        let q = Array2::from_shape_vec((2, 2), vec![1.0, 0.4, 0.0, 0.6]).unwrap();
        let u = InputDistribution::uniform(2);
        let mi = mutual_information_of(q.view(), &u).unwrap();
        let ed = entropy_difference_of(q.view(), &u).unwrap();
        assert!((mi - ed).abs() > 1e-3);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let q = Array2::from_shape_vec((2, 2), vec![1.0, 0.4, 0.0, 0.6]).unwrap();
        let r = blahut_arimoto_of(q.view(), 1e-12, 2).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 2);
        assert!(r.capacity <= r.upper_bound);
    }

    #[test]
    fn nearly_useless_and_boundary_channels_converge() {
        // columns differ by 1e-3, so the classical update barely moves
        let n = 7;
        let flat = Array2::from_shape_fn((n, n), |(d, s)| {
            let w = if d == s { 1e-3 } else { 0.0 };
            (1.0 - 1e-3) / n as f64 + w
        });
        let r = blahut_arimoto_of(flat.view(), 1e-12, 200).unwrap();
        assert!(r.converged, "{} iterations", r.iterations);
        assert!(r.capacity > 0.0 && r.capacity < 1e-4);
        assert!((r.capacity - symmetric_channel_capacity(&flat)).abs() < 1e-12);

        // the optimum leaves out two inputs whose divergences sit just below it
        let raw = [
            0.7739398741648871, 0.7463200556770277, 0.8658737287685653, 0.5159224733491995, 0.8280613380830365,
            0.813711028351088, 0.40811570785464907, 0.2219173016779096, 0.526339518966378, 0.3789717149506103,
            0.667067608403738, 0.11801329315128012, 0.7285197403001978, 0.06494806921021255, 0.585190735408148,
            0.19550841822624, 0.9809888699260746, 0.8744916716040274, 0.4439354663030129, 0.6917660167520019,
            0.4368613820171682, 0.4688259003629722, 0.5106284029401243, 0.4797229818265338, 0.4379213937014646,
        ];
        let raw: Vec<f64> = raw.iter().map(|x| x + 1e-3).collect();
        let q = random_stochastic(5, 5, &raw);
        let r = blahut_arimoto_of(q.view(), 1e-12, 200).unwrap();
        assert!(r.converged, "{} iterations", r.iterations);
        let p = r.optimal_input.probabilities();
        assert!(p[3] == 0.0 && p[4] == 0.0);
    }

    #[test]
    fn erasure_row_keeps_capacity_below_log_n() {
        let e = 0.3;
        // binary erasure channel: capacity 1 - e
        let q = Array2::from_shape_vec((3, 2), vec![1.0 - e, 0.0, 0.0, 1.0 - e, e, e]).unwrap();
        let r = blahut_arimoto_of(q.view(), 1e-12, 10_000).unwrap();
        assert_abs_diff_eq!(r.capacity, 1.0 - e, epsilon = 1e-10);
    }

    #[test]
    fn agrees_with_simplex_grid_search() {
        let q = Array2::from_shape_vec((3, 3), vec![0.7, 0.2, 0.05, 0.2, 0.5, 0.15, 0.1, 0.3, 0.8]).unwrap();
        let step = 1e-3;
        let k = (1.0 / step) as usize;
        let mut best: f64 = 0.0;
        for i in 0..=k {
            for j in 0..=(k - i) {
                let p = [i as f64 * step, j as f64 * step, (k - i - j) as f64 * step];
                let r: Vec<f64> = (0..3).map(|d| (0..3).map(|s| q[[d, s]] * p[s]).sum()).collect();
                let mut mi = 0.0;
                for s in 0..3 {
                    for d in 0..3 {
                        if p[s] > 0.0 {
                            mi += p[s] * q[[d, s]] * (q[[d, s]] / r[d]).log2();
                        }
                    }
                }
                best = best.max(mi);
            }
        }
        let ba = blahut_arimoto_of(q.view(), 1e-9, 10_000).unwrap();
        assert!(ba.capacity >= best - 1e-9);
        assert_abs_diff_eq!(ba.capacity, best, epsilon = 1e-3);
    }

    fn random_stochastic(n_out: usize, n_in: usize, raw: &[f64]) -> Array2<f64> {
        let mut q = Array2::from_shape_vec((n_out, n_in), raw[..n_out * n_in].to_vec()).unwrap();
        for mut col in q.axis_iter_mut(Axis(1)) {
            let s = col.sum();
            col /= s;
        }
        q
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn circulant_channels_match_closed_form(n in 2usize..9, raw in prop::collection::vec(0.01f64..1.0, 9)) {
            let mut first: Vec<f64> = raw[..n].to_vec();
            let s: f64 = first.iter().sum();
            first.iter_mut().for_each(|x| *x /= s);
            let q = Array2::from_shape_fn((n, n), |(d, t)| first[(d + n - t) % n]);
            let r = blahut_arimoto_of(q.view(), 1e-10, 10_000).unwrap();
            prop_assert!(r.converged);
            prop_assert!((r.capacity - symmetric_channel_capacity(&q)).abs() < 1e-9);
            let u = InputDistribution::uniform(n);
            let mi = mutual_information_of(q.view(), &u).unwrap();
            let ed = entropy_difference_of(q.view(), &u).unwrap();
            prop_assert!((mi - ed).abs() < 1e-12);
        }

        #[test]
        fn capacity_is_bounded(n in 2usize..7, raw in prop::collection::vec(0.0f64..1.0, 49)) {
            let raw: Vec<f64> = raw.iter().map(|x| x + 1e-3).collect();
            let q = random_stochastic(n, n, &raw);
            let r = blahut_arimoto_of(q.view(), 1e-9, 10_000).unwrap();
            prop_assert!(r.capacity >= 0.0);
            prop_assert!(r.capacity <= r.upper_bound);
            prop_assert!(r.capacity <= (n as f64).log2() + 1e-9);
            prop_assert!(r.converged, "{} iterations", r.iterations);
            prop_assert!(r.upper_bound - r.capacity < 1e-9);
        }

        #[test]
        fn post_processing_never_helps(n in 2usize..7, a in prop::collection::vec(0.0f64..1.0, 36), b in prop::collection::vec(0.0f64..1.0, 36)) {
            let a: Vec<f64> = a.iter().map(|x| x * x + 1e-4).collect();
            let b: Vec<f64> = b.iter().map(|x| x * x + 1e-4).collect();
            let q = random_stochastic(n, n, &a);
            let s = random_stochastic(n, n, &b);
            // the attained rate after processing stays below the bound before it
            let before = blahut_arimoto_of(q.view(), 1e-10, 10_000).unwrap();
            let after = blahut_arimoto_of(s.dot(&q).view(), 1e-10, 10_000).unwrap();
            prop_assert!(before.converged && after.converged);
            prop_assert!(after.capacity <= before.upper_bound + 1e-12, "{} > {}", after.capacity, before.upper_bound);
        }
    }
}
