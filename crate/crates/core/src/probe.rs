//! Off-curve quantities: the single-layer map `gamma_lambda`, the perturbed
//! Green function from the Krein resolvent formula, and singular values of
//! the resolvent correction sampled on a box.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::b_lambda_matrix;
use crate::curve::{dist, ArcGrid, Curve, Vec3};
use crate::error::{Error, Result};
use crate::kernels::green_real;

/// Largest number of entries allowed in the box-by-curve matrix.
pub const MAX_ENTRIES: usize = 20_000_000;
/// Condition estimate above which `alpha - B_lambda` counts as singular.
pub const MAX_CONDITION: f64 = 1e12;
/// Fit window for the singular-value slopes (1-based, inclusive).
pub const FIT_WINDOW: (usize, usize) = (8, 48);

/// Cell-centred samples of a cube, minus a tube around the curve.
#[derive(Clone, Debug)]
pub struct BoxGrid {
    lo: f64,
    hi: f64,
    n: usize,
    points: Vec<Vec3>,
    cell_volume: f64,
    exclusion_radius: f64,
    excluded: usize,
    min_distance: f64,
}

fn distance_to_nodes(x: &Vec3, grid: &ArcGrid) -> f64 {
    grid.points()
        .iter()
        .map(|p| dist(x, p))
        .fold(f64::INFINITY, f64::min)
}

impl BoxGrid {
    /// `n^3` cells on `[lo, hi]^3`; cells within two spacings of the curve are dropped.
    pub fn new(grid: &ArcGrid, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) || n == 0 {
            return Err(Error::InvalidInput(format!(
                "bad box [{lo}, {hi}] with n = {n}"
            )));
        }
        Self::with_exclusion(grid, lo, hi, n, 2.0 * (hi - lo) / n as f64)
    }

    /// As [`BoxGrid::new`] with an explicit tube radius.
    pub fn with_exclusion(
        grid: &ArcGrid,
        lo: f64,
        hi: f64,
        n: usize,
        exclusion_radius: f64,
    ) -> Result<Self> {
        if !(hi > lo) || n == 0 || !(exclusion_radius > 0.0) {
            return Err(Error::InvalidInput(format!(
                "bad box [{lo}, {hi}] with n = {n}, exclusion radius {exclusion_radius}"
            )));
        }
        let h = (hi - lo) / n as f64;
        let mut points = Vec::new();
        let mut excluded = 0;
        let mut min_distance = f64::INFINITY;
        let c = |i: usize| lo + (i as f64 + 0.5) * h;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let x = [c(i), c(j), c(k)];
                    let d = distance_to_nodes(&x, grid);
                    if d > exclusion_radius {
                        min_distance = min_distance.min(d);
                        points.push(x);
                    } else {
                        excluded += 1;
                    }
                }
            }
        }
        Ok(Self {
            lo,
            hi,
            n,
            points,
            cell_volume: h * h * h,
            exclusion_radius,
            excluded,
            min_distance,
        })
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn exclusion_radius(&self) -> f64 {
        self.exclusion_radius
    }

    pub fn excluded(&self) -> usize {
        self.excluded
    }

    /// Smallest distance from a kept sample to the curve nodes.
    pub fn min_distance(&self) -> f64 {
        self.min_distance
    }
}

fn decay(lambda: f64) -> Result<f64> {
    if !(lambda < 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be negative, got {lambda}"
        )));
    }
    Ok((-lambda).sqrt())
}

fn check_off_curve(x: &Vec3, grid: &ArcGrid) -> Result<()> {
    let d = distance_to_nodes(x, grid);
    let radius = grid.weight();
    if !(d > radius) {
        return Err(Error::TooClose {
            distance: d,
            radius,
        });
    }
    Ok(())
}

/// Kernel column `(G_lambda(|x - x_j|))_j` over the curve nodes.
fn kernel_column(a: f64, x: &Vec3, grid: &ArcGrid) -> DVector<f64> {
    DVector::from_iterator(
        grid.len(),
        grid.points().iter().map(|p| green_real(a, dist(x, p))),
    )
}

/// `(gamma_lambda h)(x)` by the trapezoid rule; `x` must stay farther than
/// one grid spacing from the curve nodes.
pub fn gamma_apply(grid: &ArcGrid, lambda: f64, h: &DVector<f64>, x: &Vec3) -> Result<f64> {
    let a = decay(lambda)?;
    if h.len() != grid.len() {
        return Err(Error::InvalidInput(format!(
            "h has length {}, grid has {}",
            h.len(),
            grid.len()
        )));
    }
    check_off_curve(x, grid)?;
    Ok(grid.weight() * kernel_column(a, x, grid).dot(h))
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max)
}

/// `(alpha - B_lambda)^{-1}` with a condition check.
fn resolvent_core(curve: &Curve, grid: &ArcGrid, lambda: f64, alpha: f64) -> Result<DMatrix<f64>> {
    let b = b_lambda_matrix(curve, lambda, grid)?;
    let n = grid.len();
    let m = DMatrix::identity(n, n) * alpha - b.entries();
    let norm = one_norm(&m);
    let inv = m.lu().try_inverse().ok_or(Error::Singular(f64::INFINITY))?;
    let cond = norm * one_norm(&inv);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::Singular(cond));
    }
    Ok(inv)
}

/// Free kernel and Krein correction of the perturbed Green function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenValue {
    pub free: f64,
    pub correction: f64,
}

impl GreenValue {
    pub fn total(&self) -> f64 {
        self.free + self.correction
    }
}

/// Perturbed Green function `G_alpha(x, y; lambda)` for `lambda < 0` in the
/// resolvent set, split into free part and correction.
pub fn perturbed_green(
    curve: &Curve,
    grid: &ArcGrid,
    lambda: f64,
    alpha: f64,
    x: &Vec3,
    y: &Vec3,
) -> Result<GreenValue> {
    let a = decay(lambda)?;
    check_off_curve(x, grid)?;
    check_off_curve(y, grid)?;
    let r = dist(x, y);
    if !(r > 0.0) {
        return Err(Error::InvalidInput("x and y must differ".into()));
    }
    let core = resolvent_core(curve, grid, lambda, alpha)?;
    let gx = kernel_column(a, x, grid) * grid.weight();
    let gy = kernel_column(a, y, grid);
    Ok(GreenValue {
        free: green_real(a, r),
        correction: gx.dot(&(core * gy)),
    })
}

/// Singular values of the box-sampled single-layer map and of the resolvent correction.
#[derive(Clone, Debug)]
pub struct ProbeResult {
    /// Singular values of `K = G (alpha - B)^{-1} G^T`, nonincreasing.
    pub correction: Vec<f64>,
    /// Singular values of `G`, nonincreasing.
    pub gamma: Vec<f64>,
    pub box_points: usize,
    pub excluded: usize,
}

fn sorted_desc(v: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = v.collect();
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

/// Singular values of the discretized resolvent correction on the box.
///
/// With `G_ij = sqrt(v w) G_lambda(|x_i - y_j|)` (cell volume `v`, node
/// weight `w`) the operators are represented in orthonormal coordinates;
/// a thin QR `G = QR` reduces `K` to the small matrix `R C R^T`.
pub fn correction_singular_values(
    curve: &Curve,
    grid: &ArcGrid,
    boxg: &BoxGrid,
    lambda: f64,
    alpha: f64,
) -> Result<ProbeResult> {
    let a = decay(lambda)?;
    let m = boxg.points().len();
    let n = grid.len();
    let entries = m.saturating_mul(n);
    if entries > MAX_ENTRIES {
        return Err(Error::TooLarge {
            entries,
            cap: MAX_ENTRIES,
        });
    }
    if m < n {
        return Err(Error::InvalidInput(format!(
            "box has {m} points, fewer than the {n} curve nodes"
        )));
    }
    let scale = (boxg.cell_volume() * grid.weight()).sqrt();
    let rows: Vec<Vec<f64>> = boxg
        .points()
        .par_iter()
        .map(|x| {
            grid.points()
                .iter()
                .map(|p| scale * green_real(a, dist(x, p)))
                .collect()
        })
        .collect();
    let g = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
    drop(rows);
    let core = resolvent_core(curve, grid, lambda, alpha)?;
    let r = g.qr().r();
    let gamma = sorted_desc(r.clone().singular_values().iter().copied());
    let k = &r * core * r.transpose();
    let correction = sorted_desc(k.singular_values().iter().copied());
    Ok(ProbeResult {
        correction,
        gamma,
        box_points: m,
        excluded: boxg.excluded(),
    })
}

/// Least-squares slope of `ln s_k` against `ln k` over `k in [first, last]` (1-based).
pub fn loglog_slope(values: &[f64], first: usize, last: usize) -> Result<f64> {
    if first == 0 || last <= first || last > values.len() {
        return Err(Error::InvalidInput(format!(
            "fit window [{first}, {last}] invalid for {} values",
            values.len()
        )));
    }
    let pts: Vec<(f64, f64)> = (first..=last)
        .map(|k| ((k as f64).ln(), values[k - 1].ln()))
        .collect();
    if pts.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::InvalidInput(
            "nonpositive singular value in the fit window".into(),
        ));
    }
    let count = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / count;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / count;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::make_circle;
    use std::f64::consts::PI;

    fn circle(n: usize) -> (Curve, ArcGrid) {
        let c = make_circle(1.0).unwrap();
        let g = ArcGrid::new(&c, n).unwrap();
        (c, g)
    }

    #[test]
    fn gamma_on_axis_is_single_kernel_value() {
        let (_, g) = circle(64);
        let ones = DVector::from_element(64, 1.0);
        for z in [0.0, 0.7, 2.0] {
            let v = gamma_apply(&g, -1.5, &ones, &[0.0, 0.0, z]).unwrap();
            let expect = 2.0 * PI * green_real(1.5f64.sqrt(), (1.0 + z * z).sqrt());
            assert!((v - expect).abs() < 1e-14 * expect);
        }
    }

    #[test]
    fn gamma_is_linear_and_guards() {
        let (_, g) = circle(64);
        let h = DVector::from_fn(64, |i, _| (i as f64).sin());
        let x = [0.3, -0.2, 0.5];
        let one = gamma_apply(&g, -1.0, &h, &x).unwrap();
        let two = gamma_apply(&g, -1.0, &(&h * 2.0), &x).unwrap();
        assert_eq!(two, 2.0 * one);
        assert_eq!(gamma_apply(&g, -1.0, &DVector::zeros(64), &x).unwrap(), 0.0);
        assert!(matches!(
            gamma_apply(&g, -1.0, &h, &[1.0, 0.0, 0.0]),
            Err(Error::TooClose { .. })
        ));
        assert!(gamma_apply(&g, 1.0, &h, &x).is_err());
    }

    #[test]
    fn green_symmetry_and_large_coupling() {
        let (c, g) = circle(128);
        let x = [0.2, 0.1, 0.4];
        let y = [-0.5, 0.8, -0.3];
        let gxy = perturbed_green(&c, &g, -2.0, -0.5, &x, &y).unwrap().total();
        let gyx = perturbed_green(&c, &g, -2.0, -0.5, &y, &x).unwrap().total();
        assert!((gxy - gyx).abs() < 1e-10 * gxy.abs());
        let big = perturbed_green(&c, &g, -2.0, 1e6, &x, &y).unwrap();
        assert!(big.correction.abs() < 1e-4 * big.free.abs());
    }

    #[test]
    fn loglog_slope_recovers_power_law() {
        let v: Vec<f64> = (1..=60).map(|k| 3.0 * (k as f64).powf(-2.5)).collect();
        assert!((loglog_slope(&v, 8, 48).unwrap() + 2.5).abs() < 1e-12);
        assert!(loglog_slope(&v, 0, 8).is_err());
        assert!(loglog_slope(&v, 8, 61).is_err());
    }

    #[test]
    fn box_grid_excludes_tube() {
        let (_, g) = circle(64);
        let b = BoxGrid::new(&g, -2.0, 2.0, 8).unwrap();
        assert_eq!(b.points().len() + b.excluded(), 512);
        assert!(b.min_distance() > b.exclusion_radius());
        assert!(b.excluded() > 0);
    }

    #[test]
    fn memory_guard() {
        let (c, g) = circle(512);
        let b = BoxGrid::new(&g, -3.0, 3.0, 40).unwrap();
        assert!(matches!(
            correction_singular_values(&c, &g, &b, -1.0, -0.5),
            Err(Error::TooLarge { .. })
        ));
    }
}
