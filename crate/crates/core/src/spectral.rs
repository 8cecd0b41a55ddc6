//! Eigenvalue curves of the discrete `B_lambda`, bound states via the
//! Birman–Schwinger principle, and eigenvalue counting.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::assembly::{b_lambda_matrix, circle_b0_modes, circle_b_modes, SymMatrix};
use crate::curve::{d_sigma, make_circle, ArcGrid, Curve};
use crate::error::{Error, Result};

/// Eigenvalues closer than this are reported as one multiple eigenvalue.
pub const PAIRING_TOL: f64 = 1e-9;
/// Residual `|nu_k(lambda_k) - alpha|` accepted for a bound state.
pub const ROOT_TOL: f64 = 1e-10;
/// Slack in the monotonicity checks along `lambda`.
pub const MONOTONE_TOL: f64 = 1e-10;
/// Euler–Mascheroni constant, to the six digits used in the counting bounds.
pub const EULER_GAMMA: f64 = 0.577216;
/// Maximum number of doublings when searching a spectral floor.
pub const MAX_DOUBLINGS: usize = 60;
/// Distance to an interval endpoint below which a count is flagged.
pub const ENDPOINT_TOL: f64 = 1e-12;

/// Number of eigenpairs regarded as resolved on an `n`-node grid.
pub fn trusted_count(n: usize) -> usize {
    n / 4
}

/// Eigenvalues in nonincreasing order with orthonormal eigenvector columns.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    trusted_count: usize,
}

impl EigenSystem {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }

    pub fn trusted_count(&self) -> usize {
        self.trusted_count
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Groups of consecutive indices whose eigenvalues agree within `tol`.
    pub fn multiplicities(&self, tol: f64) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.values.len() {
            if i == self.values.len() || self.values[i - 1] - self.values[i] > tol {
                out.push(start..i);
                start = i;
            }
        }
        out
    }

    /// `||B v_k - nu_k v_k||` for the k-th pair (0-based).
    pub fn residual(&self, b: &SymMatrix, k: usize) -> f64 {
        let v = self.vectors.column(k);
        (b.entries() * v - v * self.values[k]).norm()
    }
}

/// Mode index and kind of the j-th sorted circle eigenvector: `(k, is_sine)`.
fn circle_order(modes: &[f64]) -> Vec<(usize, bool, f64)> {
    let half = modes.len() - 1;
    let mut list = Vec::with_capacity(2 * half);
    list.push((0, false, modes[0]));
    for (k, &m) in modes.iter().enumerate().take(half).skip(1) {
        list.push((k, false, m));
        list.push((k, true, m));
    }
    list.push((half, false, modes[half]));
    // stable sort keeps cos before sin and lower modes first among ties
    list.sort_by(|a, b| b.2.total_cmp(&a.2));
    list
}

fn fourier_vector(n: usize, k: usize, sine: bool) -> DVector<f64> {
    if k == 0 {
        return DVector::from_element(n, 1.0 / (n as f64).sqrt());
    }
    if 2 * k == n {
        return DVector::from_fn(
            n,
            |j, _| if j % 2 == 0 { 1.0 } else { -1.0 } / (n as f64).sqrt(),
        );
    }
    let scale = (2.0 / n as f64).sqrt();
    DVector::from_fn(n, |j, _| {
        let t = 2.0 * PI * ((k * j) % n) as f64 / n as f64;
        scale * if sine { t.sin() } else { t.cos() }
    })
}

fn orient(v: &mut DVector<f64>) {
    let idx = v.iamax();
    if v[idx] < 0.0 {
        v.neg_mut();
    }
}

/// Full eigendecomposition, sorted nonincreasingly.
///
/// Circulant matrices are diagonalized in the real Fourier basis, so
/// degenerate pairs come out exactly equal.
pub fn eigen(b: &SymMatrix) -> Result<EigenSystem> {
    let n = b.dim();
    if let Some(c) = b.circulant() {
        let order = circle_order(&c.modes);
        let mut vectors = DMatrix::zeros(n, n);
        let mut values = Vec::with_capacity(n);
        for (col, &(k, sine, value)) in order.iter().enumerate() {
            vectors.set_column(col, &fourier_vector(n, k, sine));
            values.push(value);
        }
        return Ok(EigenSystem {
            values,
            vectors,
            trusted_count: trusted_count(n),
        });
    }
    let se = SymmetricEigen::try_new(b.entries().clone(), f64::EPSILON, 0)
        .ok_or(Error::EigenNonConvergence(n))?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        se.eigenvalues[j]
            .total_cmp(&se.eigenvalues[i])
            .then(i.cmp(&j))
    });
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (col, &i) in idx.iter().enumerate() {
        let mut v = se.eigenvectors.column(i).into_owned();
        orient(&mut v);
        vectors.set_column(col, &v);
        values.push(se.eigenvalues[i]);
    }
    Ok(EigenSystem {
        values,
        vectors,
        trusted_count: trusted_count(n),
    })
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn expand_modes(modes: &[f64]) -> Vec<f64> {
    circle_order(modes).into_iter().map(|x| x.2).collect()
}

/// All eigenvalues of the discrete `B_lambda`, nonincreasing.
pub fn spectrum(curve: &Curve, grid: &ArcGrid, lambda: f64) -> Result<Vec<f64>> {
    if curve.is_circle() {
        let modes = circle_b_modes(curve.equivalent_radius(), lambda, grid)?;
        return Ok(expand_modes(&modes));
    }
    let b = b_lambda_matrix(curve, lambda, grid)?;
    let values = b.into_entries().symmetric_eigenvalues();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenNonConvergence(grid.len()));
    }
    Ok(sorted_desc(values.iter().copied().collect()))
}

/// Closed-form eigenvalues of the circle's `B_0` on an `n`-node grid, nonincreasing.
pub fn circle_closed_form(radius: f64, n: usize) -> Vec<f64> {
    expand_modes(&circle_b0_modes(radius, n))
}

fn check_mode(k: usize, grid: &ArcGrid) -> Result<()> {
    let trusted = trusted_count(grid.len());
    if k == 0 || k > trusted {
        return Err(Error::InvalidInput(format!(
            "mode index {k} outside 1..={trusted}"
        )));
    }
    Ok(())
}

/// `nu_k(lambda)` at each sample (1-based `k`), in the order given. Fails if
/// the values do not increase with `lambda`.
pub fn nu_curve(
    curve: &Curve,
    grid: &ArcGrid,
    k: usize,
    lambdas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    check_mode(k, grid)?;
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let s = spectrum(curve, grid, lambda)?;
        out.push((lambda, s[k - 1]));
    }
    let mut sorted = out.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        let ((lo, v_lo), (hi, v_hi)) = (w[0], w[1]);
        if lo < hi && v_hi - v_lo < -MONOTONE_TOL {
            return Err(Error::Monotonicity {
                k,
                lo,
                hi,
                v_lo,
                v_hi,
            });
        }
    }
    Ok(out)
}

/// One bound state: `alpha` is an eigenvalue of `B_lambda` at `lambda`.
#[derive(Clone, Debug)]
pub struct BoundState {
    /// 1-based index of the eigenvalue curve `nu_k`.
    pub k: usize,
    pub lambda: f64,
    pub alpha: f64,
    /// Normalized eigenvector of `B_lambda` for the eigenvalue `alpha`.
    pub h: DVector<f64>,
    pub residual: f64,
}

struct Ladder<'a> {
    curve: &'a Curve,
    grid: &'a ArcGrid,
    points: Vec<(f64, Vec<f64>)>,
}

impl<'a> Ladder<'a> {
    fn new(curve: &'a Curve, grid: &'a ArcGrid) -> Self {
        Self {
            curve,
            grid,
            points: Vec::new(),
        }
    }

    fn eval(&mut self, lambda: f64) -> Result<&[f64]> {
        let pos = self.points.partition_point(|p| p.0 < lambda);
        if pos < self.points.len() && self.points[pos].0 == lambda {
            return Ok(&self.points[pos].1);
        }
        let s = spectrum(self.curve, self.grid, lambda)?;
        self.points.insert(pos, (lambda, s));
        Ok(&self.points[pos].1)
    }

    /// Extends downwards from `start` by doubling until `nu_1 < alpha`.
    fn floor(&mut self, alpha: f64, start: f64) -> Result<f64> {
        let mut lambda = start;
        for _ in 0..=MAX_DOUBLINGS {
            if self.eval(lambda)?[0] < alpha {
                return Ok(lambda);
            }
            lambda *= 2.0;
        }
        Err(Error::FloorNotFound {
            alpha,
            doublings: MAX_DOUBLINGS,
        })
    }

    /// Tightest cached bracket `(lo, f_lo, hi, f_hi)` with `f = nu_k - alpha`.
    fn bracket(&self, k: usize, alpha: f64) -> Option<(f64, f64, f64, f64)> {
        let mut lo = None;
        let mut hi = None;
        for (lambda, s) in &self.points {
            let f = s[k] - alpha;
            if f < 0.0 {
                lo = Some((*lambda, f));
            } else if hi.is_none() {
                hi = Some((*lambda, f));
            }
        }
        match (lo, hi) {
            (Some((a, fa)), Some((b, fb))) if a < b => Some((a, fa, b, fb)),
            _ => None,
        }
    }

    /// Root of `nu_k(lambda) = alpha` by Illinois-modified regula falsi.
    fn root(&mut self, k: usize, alpha: f64) -> Result<(f64, f64)> {
        let (mut lo, mut f_lo, mut hi, mut f_hi) = self
            .bracket(k, alpha)
            .ok_or_else(|| Error::NoBoundState(format!("no sign change for nu_{}", k + 1)))?;
        if f_hi == 0.0 {
            return Ok((hi, 0.0));
        }
        let mut side = 0i8;
        for _ in 0..200 {
            let mut mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            if !(mid > lo && mid < hi) {
                mid = 0.5 * (lo + hi);
            }
            let f = self.eval(mid)?[k] - alpha;
            if f < f_lo - MONOTONE_TOL || f > f_hi + MONOTONE_TOL {
                return Err(Error::Monotonicity {
                    k: k + 1,
                    lo,
                    hi,
                    v_lo: f_lo + alpha,
                    v_hi: f_hi + alpha,
                });
            }
            let width = hi - lo;
            if f.abs() < ROOT_TOL || width <= 4.0 * f64::EPSILON * mid.abs() {
                return Ok((mid, f.abs()));
            }
            if f < 0.0 {
                lo = mid;
                f_lo = f;
                if side == -1 {
                    f_hi *= 0.5;
                }
                side = -1;
            } else {
                hi = mid;
                f_hi = f;
                if side == 1 {
                    f_lo *= 0.5;
                }
                side = 1;
            }
        }
        let mid = 0.5 * (lo + hi);
        let f = self.eval(mid)?[k] - alpha;
        Ok((mid, f.abs()))
    }
}

/// Eigenvector of `B_lambda` for the k-th (0-based) eigenvalue.
fn eigenvector(curve: &Curve, grid: &ArcGrid, lambda: f64, k: usize) -> Result<DVector<f64>> {
    if curve.is_circle() {
        let modes = circle_b_modes(curve.equivalent_radius(), lambda, grid)?;
        let (mode, sine, _) = circle_order(&modes)[k];
        return Ok(fourier_vector(grid.len(), mode, sine));
    }
    let b = b_lambda_matrix(curve, lambda, grid)?;
    Ok(eigen(&b)?.vector(k))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!(
            "alpha must be finite and nonzero, got {alpha}"
        )));
    }
    Ok(())
}

fn count_above(values: &[f64], alpha: f64, trusted: usize) -> Result<usize> {
    let count = values.iter().take_while(|&&v| v > alpha).count();
    if count >= trusted {
        return Err(Error::GridTooCoarse { count, trusted });
    }
    Ok(count)
}

/// All bound states of the operator with coupling `alpha`, sorted by energy.
///
/// `lambda_floor` is the first trial point of the downward doubling search.
pub fn find_bound_states(
    curve: &Curve,
    grid: &ArcGrid,
    alpha: f64,
    lambda_floor: f64,
) -> Result<Vec<BoundState>> {
    check_alpha(alpha)?;
    if !(lambda_floor < 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda_floor must be negative, got {lambda_floor}"
        )));
    }
    let mut ladder = Ladder::new(curve, grid);
    let count = count_above(ladder.eval(0.0)?, alpha, trusted_count(grid.len()))?;
    if count == 0 {
        return Ok(Vec::new());
    }
    ladder.floor(alpha, lambda_floor)?;
    let mut states = Vec::with_capacity(count);
    for k in 0..count {
        let (lambda, residual) = ladder.root(k, alpha)?;
        states.push(BoundState {
            k: k + 1,
            lambda,
            alpha,
            h: eigenvector(curve, grid, lambda, k)?,
            residual,
        });
    }
    states.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.k.cmp(&b.k)));
    Ok(states)
}

/// Lowest bound state (on the curve `nu_1`).
pub fn principal_bound_state(curve: &Curve, grid: &ArcGrid, alpha: f64) -> Result<BoundState> {
    check_alpha(alpha)?;
    let mut ladder = Ladder::new(curve, grid);
    if ladder.eval(0.0)?[0] <= alpha {
        return Err(Error::NoBoundState(format!("nu_1(0) <= alpha = {alpha}")));
    }
    ladder.floor(alpha, -1.0)?;
    let (lambda, residual) = ladder.root(0, alpha)?;
    Ok(BoundState {
        k: 1,
        lambda,
        alpha,
        h: eigenvector(curve, grid, lambda, 0)?,
        residual,
    })
}

/// Distance from `alpha` to the spectrum of the discrete `B_lambda`.
pub fn spectral_distance(curve: &Curve, grid: &ArcGrid, lambda: f64, alpha: f64) -> Result<f64> {
    let s = spectrum(curve, grid, lambda)?;
    Ok(s.iter()
        .map(|v| (v - alpha).abs())
        .fold(f64::INFINITY, f64::min))
}

/// Top of the circle spectrum, `ln(4R) / (2 pi)`.
pub fn circle_threshold(radius: f64) -> f64 {
    (4.0 * radius).ln() / (2.0 * PI)
}

/// Sum `sum_{j=1}^k 1/(2j - 1)` for large `k` from the harmonic-number
/// expansion `H_{2k} - H_k / 2`.
fn odd_harmonic_asymptotic(k: f64) -> f64 {
    let h = |n: f64| {
        n.ln() + 0.577_215_664_901_532_9 + 1.0 / (2.0 * n) - 1.0 / (12.0 * n * n)
            + 1.0 / (120.0 * n.powi(4))
    };
    h(2.0 * k) - 0.5 * h(k)
}

const EXACT_INTERVALS: usize = 1 << 20;

/// Index `r >= -1` of the half-open interval containing `x`:
/// `I_{-1} = [c, inf)` and `I_r = [c - H_{r+1}/pi, c - H_r/pi)` with
/// `c = ln(4R) / (2 pi)` and `H_r` the odd harmonic sums.
pub fn interval_index(x: f64, radius: f64) -> i64 {
    let c = circle_threshold(radius);
    if x >= c {
        return -1;
    }
    // endpoints are formed exactly as the circle eigenvalues are
    let mut h = 0.0;
    for r in 0..EXACT_INTERVALS {
        h += 1.0 / (2 * r + 1) as f64;
        if x >= c - h / PI {
            return r as i64;
        }
    }
    // beyond the exact table: invert the asymptotic sum by bisection on r
    let target = (c - x) * PI;
    let (mut lo, mut hi) = (EXACT_INTERVALS as f64, EXACT_INTERVALS as f64);
    while odd_harmonic_asymptotic(hi + 1.0) <= target {
        lo = hi;
        hi *= 2.0;
        if hi > 4e18 {
            return i64::MAX;
        }
    }
    while hi - lo > 1.0 {
        let mid = (0.5 * (lo + hi)).floor();
        if odd_harmonic_asymptotic(mid + 1.0) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo as i64
}

fn interval_endpoint_gap(x: f64, radius: f64) -> f64 {
    let r = interval_index(x, radius);
    let c = circle_threshold(radius);
    if r == -1 {
        return x - c;
    }
    if r as usize >= EXACT_INTERVALS {
        return f64::INFINITY;
    }
    let modes = circle_b0_modes(radius, 2 * (r as usize + 2));
    let left = modes[r as usize + 1];
    let right = modes[r as usize];
    (x - left).min(right - x)
}

/// Counting bounds `(lower, upper)` for the number of bound states.
pub fn asymptotic_count_bounds(radius: f64, alpha: f64, d_sigma: f64) -> Result<(f64, f64)> {
    let limit = circle_threshold(radius) - 1.0 / PI;
    if !(alpha + d_sigma < limit) {
        return Err(Error::InvalidInput(format!(
            "alpha + d_sigma = {} must be below {limit}",
            alpha + d_sigma
        )));
    }
    let c = (2.0 * PI * d_sigma).exp();
    let base = 2.0 * radius * (-2.0 * PI * alpha - EULER_GAMMA).exp();
    let lower = base / c - 1.0 - 4.0 * ((1.0f64 / 92.0).exp() - 1.0);
    let upper = base * c + 1.0;
    Ok((lower, upper))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountReport {
    pub alpha: f64,
    /// Number of eigenvalues of `B_0` above `alpha`.
    pub count: usize,
    pub d_sigma: f64,
    /// Interval index of `alpha + d_sigma`.
    pub r: i64,
    /// Interval index of `alpha - d_sigma`.
    pub l: i64,
    pub lower: usize,
    pub upper: usize,
    pub sandwich_holds: bool,
    pub asymptotic_bounds: Option<(f64, f64)>,
    /// Exact circle count `2r + 1` (or 0), only for circles.
    pub closed_form: Option<usize>,
    /// `alpha +- d_sigma` lies within [`ENDPOINT_TOL`] of an interval endpoint.
    pub near_endpoint: bool,
}

fn odd_count(r: i64) -> usize {
    if r < 0 {
        0
    } else {
        (2 * r + 1) as usize
    }
}

/// Number of bound states for coupling `alpha`, with interval bounds.
pub fn count_negative(curve: &Curve, grid: &ArcGrid, alpha: f64) -> Result<CountReport> {
    check_alpha(alpha)?;
    let radius = curve.equivalent_radius();
    let d = d_sigma(curve, grid);
    let s0 = spectrum(curve, grid, 0.0)?;
    let count = count_above(&s0, alpha, trusted_count(grid.len()))?;
    let r = interval_index(alpha + d, radius);
    let l = interval_index(alpha - d, radius);
    let (lower, upper) = (odd_count(r), odd_count(l));
    let near_endpoint = interval_endpoint_gap(alpha + d, radius) < ENDPOINT_TOL
        || interval_endpoint_gap(alpha - d, radius) < ENDPOINT_TOL;
    Ok(CountReport {
        alpha,
        count,
        d_sigma: d,
        r,
        l,
        lower,
        upper,
        sandwich_holds: lower <= count && count <= upper,
        asymptotic_bounds: asymptotic_count_bounds(radius, alpha, d).ok(),
        closed_form: curve
            .is_circle()
            .then(|| odd_count(interval_index(alpha, radius))),
        near_endpoint,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsoperimetricReport {
    pub curve_min: f64,
    pub circle_min: f64,
    /// `circle_min - curve_min`.
    pub gap: f64,
}

/// Lowest bound-state energy of the curve against the circle of equal length.
pub fn isoperimetric_compare(
    curve: &Curve,
    alpha: f64,
    grid: &ArcGrid,
) -> Result<IsoperimetricReport> {
    let radius = curve.equivalent_radius();
    if alpha >= circle_threshold(radius) {
        return Err(Error::NoBoundState(format!(
            "alpha = {alpha} is not below ln(4R)/(2 pi) = {}",
            circle_threshold(radius)
        )));
    }
    let circle = make_circle(radius)?;
    let circle_grid = ArcGrid::new(&circle, grid.len())?;
    let curve_min = principal_bound_state(curve, grid, alpha)?.lambda;
    let circle_min = principal_bound_state(&circle, &circle_grid, alpha)?.lambda;
    Ok(IsoperimetricReport {
        curve_min,
        circle_min,
        gap: circle_min - curve_min,
    })
}
