//! Nyström matrices of the boundary operators on an [`ArcGrid`].
//!
//! The log-singular operator `B_0` of the comparison circle is never
//! quadrated: it is diagonal in the discrete Fourier basis with known
//! eigenvalues. Everything else is a bounded kernel handled by the periodic
//! trapezoid rule with corrected diagonal entries.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::curve::{ArcGrid, Curve};
use crate::error::{Error, Result};
use crate::kernels::{coulomb_difference_diagonal, d_kernel_chords, m_expansion, m_kernel_rate};

/// Eigen-data of a circulant symmetric matrix: first row and the eigenvalue
/// of each Fourier mode pair `k = 0..=N/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Circulant {
    pub row: Vec<f64>,
    pub modes: Vec<f64>,
}

impl Circulant {
    fn from_modes(modes: Vec<f64>) -> Self {
        let n = 2 * (modes.len() - 1);
        let table = CosTable::new(n);
        let row = (0..n)
            .map(|d| {
                let mut acc = modes[0] + modes[n / 2] * if d % 2 == 0 { 1.0 } else { -1.0 };
                for (k, &m) in modes.iter().enumerate().take(n / 2).skip(1) {
                    acc += 2.0 * m * table.get(k * d);
                }
                acc / n as f64
            })
            .collect();
        Self { row, modes }
    }

    fn from_row(row: Vec<f64>) -> Self {
        let n = row.len();
        let table = CosTable::new(n);
        let modes = (0..=n / 2)
            .map(|k| {
                let mut acc = row[0] + row[n / 2] * if k % 2 == 0 { 1.0 } else { -1.0 };
                for (d, &c) in row.iter().enumerate().take(n / 2).skip(1) {
                    acc += 2.0 * c * table.get(k * d);
                }
                acc
            })
            .collect();
        Self { row, modes }
    }

    fn sub(&self, other: &Circulant) -> Circulant {
        Circulant {
            row: self
                .row
                .iter()
                .zip(&other.row)
                .map(|(a, b)| a - b)
                .collect(),
            modes: self
                .modes
                .iter()
                .zip(&other.modes)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    fn dense(&self) -> DMatrix<f64> {
        let n = self.row.len();
        DMatrix::from_fn(n, n, |i, j| {
            let d = i.abs_diff(j);
            self.row[d.min(n - d)]
        })
    }
}

/// `cos(2 pi m / N)` for `m mod N`.
pub(crate) struct CosTable {
    values: Vec<f64>,
}

impl CosTable {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            values: (0..n)
                .map(|m| (2.0 * PI * m as f64 / n as f64).cos())
                .collect(),
        }
    }

    #[inline]
    pub(crate) fn get(&self, m: usize) -> f64 {
        self.values[m % self.values.len()]
    }
}

/// Dense real symmetric matrix on a grid, with provenance metadata.
#[derive(Clone, Debug)]
pub struct SymMatrix {
    entries: DMatrix<f64>,
    lambda: f64,
    curve_id: String,
    grid_id: String,
    circulant: Option<Circulant>,
}

impl SymMatrix {
    fn from_circulant(c: Circulant, lambda: f64, curve_id: String, grid_id: String) -> Self {
        Self {
            entries: c.dense(),
            lambda,
            curve_id,
            grid_id,
            circulant: Some(c),
        }
    }

    /// Wraps an arbitrary square matrix after replacing it by its symmetric part.
    pub fn from_dense(
        mut entries: DMatrix<f64>,
        lambda: f64,
        curve_id: &str,
        grid_id: &str,
    ) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::InvalidInput("matrix must be square".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        symmetrize(&mut entries);
        Ok(Self {
            entries,
            lambda,
            curve_id: curve_id.to_string(),
            grid_id: grid_id.to_string(),
            circulant: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn curve_id(&self) -> &str {
        &self.curve_id
    }

    pub fn grid_id(&self) -> &str {
        &self.grid_id
    }

    /// Mode eigenvalues when the matrix is circulant (circle grids).
    pub fn circulant(&self) -> Option<&Circulant> {
        self.circulant.as_ref()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..j {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)]).abs());
            }
        }
        worst
    }

    /// Writes the entries as CSV with a `#` header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# N={},lambda={:.14e},curve={},grid={}",
            self.dim(),
            self.lambda,
            self.curve_id,
            self.grid_id
        )?;
        for i in 0..self.dim() {
            let line: Vec<String> = self
                .entries
                .row(i)
                .iter()
                .map(|v| format!("{v:.14e}"))
                .collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Replaces `a` by `(a + a^T) / 2`; the result is bit-exactly symmetric.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

fn check_lambda(lambda: f64) -> Result<f64> {
    if !(lambda <= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be <= 0, got {lambda}"
        )));
    }
    Ok((-lambda).sqrt())
}

fn check_circle_grid(radius: f64, grid: &ArcGrid) -> Result<()> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if !grid.len().is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "grid size must be even, got {}",
            grid.len()
        )));
    }
    let l = 2.0 * PI * radius;
    if (grid.length() - l).abs() > 1e-12 * l {
        return Err(Error::InvalidInput(format!(
            "grid length {} does not match circle of radius {radius}",
            grid.length()
        )));
    }
    Ok(())
}

/// Sum of the odd-denominator harmonic series `sum_{j=1}^k 1/(2j-1)`.
pub fn odd_harmonic(k: usize) -> f64 {
    // summed from the small end to limit rounding
    (1..=k).rev().map(|j| 1.0 / (2 * j - 1) as f64).sum()
}

/// Circle `B_0` eigenvalues for mode pairs `k = 0..=n/2`.
pub fn circle_b0_modes(radius: f64, n: usize) -> Vec<f64> {
    let top = (4.0 * radius).ln() / (2.0 * PI);
    let mut h = 0.0;
    let mut out = Vec::with_capacity(n / 2 + 1);
    out.push(top);
    for k in 1..=n / 2 {
        h += 1.0 / (2 * k - 1) as f64;
        out.push(top - h / PI);
    }
    out
}

fn circle_b0(radius: f64, n: usize) -> Circulant {
    Circulant::from_modes(circle_b0_modes(radius, n))
}

fn circle_m(radius: f64, a: f64, grid: &ArcGrid) -> Circulant {
    let n = grid.len();
    let w = grid.weight();
    if a == 0.0 {
        return Circulant {
            row: vec![0.0; n],
            modes: vec![0.0; n / 2 + 1],
        };
    }
    let mut row: Vec<f64> = (0..n)
        .map(|d| {
            let dd = d.min(n - d);
            w * m_kernel_rate(a, grid.circle_chord(0, dd))
        })
        .collect();
    row[0] = m_expansion(a).diagonal(w, 1.0 / radius).re;
    Circulant::from_row(row)
}

/// `B_0` of the circle of radius `radius`, in the real Fourier basis of the grid.
pub fn circle_b0_matrix(radius: f64, grid: &ArcGrid) -> Result<SymMatrix> {
    check_circle_grid(radius, grid)?;
    let c = circle_b0(radius, grid.len());
    Ok(SymMatrix::from_circulant(
        c,
        0.0,
        format!("circle(R={radius})"),
        grid.id(),
    ))
}

/// Nyström matrix of the `M_lambda` kernel on the circle of radius `radius`.
pub fn m_lambda_matrix(radius: f64, lambda: f64, grid: &ArcGrid) -> Result<SymMatrix> {
    let a = check_lambda(lambda)?;
    check_circle_grid(radius, grid)?;
    Ok(SymMatrix::from_circulant(
        circle_m(radius, a, grid),
        lambda,
        format!("circle(R={radius})"),
        grid.id(),
    ))
}

fn d_entries(curve: &Curve, a: f64, grid: &ArcGrid) -> DMatrix<f64> {
    let n = grid.len();
    let w = grid.weight();
    let mut m = DMatrix::zeros(n, n);
    if curve.is_circle() {
        return m;
    }
    let radius = curve.equivalent_radius();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| w * d_kernel_chords(a, grid.chord(i, j), grid.circle_chord(i, j)))
                .collect()
        })
        .collect();
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let smooth = m_expansion(a);
    for i in 0..n {
        let kappa = grid.curvature()[i];
        let coulomb = coulomb_difference_diagonal(w, kappa, radius);
        // smooth part of the Green kernel is -M
        let g = -(smooth.diagonal(w, kappa).re - smooth.diagonal(w, 1.0 / radius).re);
        m[(i, i)] = coulomb + g;
    }
    m
}

/// Nyström matrix of `D_lambda` (curve kernel minus same-length circle kernel).
pub fn d_lambda_matrix(curve: &Curve, lambda: f64, grid: &ArcGrid) -> Result<SymMatrix> {
    let a = check_lambda(lambda)?;
    let entries = d_entries(curve, a, grid);
    SymMatrix::from_dense(entries, lambda, &curve.label(), &grid.id())
}

/// Discrete `B_lambda = D_lambda + B_0(circle) - M_lambda(circle)`.
pub fn b_lambda_matrix(curve: &Curve, lambda: f64, grid: &ArcGrid) -> Result<SymMatrix> {
    let a = check_lambda(lambda)?;
    let radius = curve.equivalent_radius();
    check_circle_grid(radius, grid)?;
    let circ = circle_b0(radius, grid.len()).sub(&circle_m(radius, a, grid));
    if curve.is_circle() {
        return Ok(SymMatrix::from_circulant(
            circ,
            lambda,
            curve.label(),
            grid.id(),
        ));
    }
    let mut entries = d_entries(curve, a, grid);
    entries += circ.dense();
    SymMatrix::from_dense(entries, lambda, &curve.label(), &grid.id())
}

/// Mode eigenvalues of the circle's `B_lambda` on a grid of `n` nodes.
pub(crate) fn circle_b_modes(radius: f64, lambda: f64, grid: &ArcGrid) -> Result<Vec<f64>> {
    let a = check_lambda(lambda)?;
    check_circle_grid(radius, grid)?;
    let b0 = circle_b0_modes(radius, grid.len());
    let m = circle_m(radius, a, grid);
    Ok(b0.iter().zip(&m.modes).map(|(b, m)| b - m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::make_circle;

    fn circle_grid(r: f64, n: usize) -> (Curve, ArcGrid) {
        let c = make_circle(r).unwrap();
        let g = ArcGrid::new(&c, n).unwrap();
        (c, g)
    }

    #[test]
    fn b0_matrix_has_closed_form_action_on_fourier_modes() {
        let (_, g) = circle_grid(1.0, 64);
        let b0 = circle_b0_matrix(1.0, &g).unwrap();
        let n = 64;
        let modes = circle_b0_modes(1.0, n);
        for k in [0usize, 1, 5, 31, 32] {
            let v =
                nalgebra::DVector::from_fn(n, |j, _| (2.0 * PI * (k * j) as f64 / n as f64).cos());
            let bv = b0.entries() * &v;
            assert!((bv - &v * modes[k]).amax() < 1e-12, "k={k}");
        }
        let ones = nalgebra::DVector::from_element(n, 1.0);
        let b1 = b0.entries() * &ones;
        assert!((b1 - &ones * (4f64.ln() / (2.0 * PI))).amax() < 1e-13);
        assert_eq!(b0.max_asymmetry(), 0.0);
    }

    #[test]
    fn b0_rejects_mismatched_grid() {
        let (_, g) = circle_grid(1.0, 32);
        assert!(circle_b0_matrix(2.0, &g).is_err());
        assert!(circle_b0_matrix(-1.0, &g).is_err());
    }

    #[test]
    fn m_matrix_zero_at_lambda_zero_and_bounded() {
        let (_, g) = circle_grid(1.0, 64);
        assert!(m_lambda_matrix(1.0, 0.0, &g).unwrap().entries().amax() == 0.0);
        let m = m_lambda_matrix(1.0, -1.0, &g).unwrap();
        let cap = g.weight() / (4.0 * PI);
        assert!(m.entries().iter().all(|&v| (0.0..=cap).contains(&v)));
        assert!(m_lambda_matrix(1.0, 0.5, &g).is_err());
    }

    #[test]
    fn m_row_sums_converge() {
        let sum = |n| {
            let (_, g) = circle_grid(1.0, n);
            let m = m_lambda_matrix(1.0, -1.0, &g).unwrap();
            m.entries().row(0).sum()
        };
        let (s256, s512) = (sum(256), sum(512));
        assert!((s256 - s512).abs() < 1e-8, "{}", s256 - s512);
    }

    #[test]
    fn circle_b_is_b0_minus_m() {
        let (c, g) = circle_grid(1.0, 64);
        let b = b_lambda_matrix(&c, -1.0, &g).unwrap();
        let b0 = circle_b0_matrix(1.0, &g).unwrap();
        let m = m_lambda_matrix(1.0, -1.0, &g).unwrap();
        let diff = b.entries() - (b0.entries() - m.entries());
        assert!(diff.amax() < 1e-14);
        let b_zero = b_lambda_matrix(&c, 0.0, &g).unwrap();
        assert_eq!(b_zero.entries(), b0.entries());
    }

    #[test]
    fn d_matrix_vanishes_on_circle() {
        let (c, g) = circle_grid(1.5, 32);
        assert_eq!(d_lambda_matrix(&c, -2.0, &g).unwrap().entries().amax(), 0.0);
    }

    #[test]
    fn ellipse_matrices_exactly_symmetric() {
        let e = Curve::ellipse_with_length(2.0, 2.0 * PI).unwrap();
        let g = ArcGrid::new(&e, 64).unwrap();
        for lam in [0.0, -1.0, -10.0] {
            let b = b_lambda_matrix(&e, lam, &g).unwrap();
            assert_eq!(b.max_asymmetry(), 0.0);
            assert!(b.entries().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let (_, g) = circle_grid(1.0, 16);
        let b0 = circle_b0_matrix(1.0, &g).unwrap();
        let mut buf = Vec::new();
        b0.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# N=16,"));
        assert_eq!(lines.len(), 17);
        assert_eq!(lines[1].split(',').count(), 16);
    }

    #[test]
    fn odd_harmonic_values() {
        assert_eq!(odd_harmonic(0), 0.0);
        assert_eq!(odd_harmonic(1), 1.0);
        assert!((odd_harmonic(3) - (1.0 + 1.0 / 3.0 + 0.2)).abs() < 1e-16);
    }
}
