//! Discrete `N(lambda + i0)` and the scattering block `S'(lambda)`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::assembly::b_lambda_matrix;
use crate::curve::{ArcGrid, Curve};
use crate::error::{Error, Result};
use crate::kernels::{n_expansion, SpectralParameter};
use crate::spectral::spectrum;

/// Relative eigenvalue cutoff defining the retained channel space of `Im N`.
pub const RANK_TOL: f64 = 1e-10;
/// Minimum distance of `alpha` from the spectrum of `B_eta`.
pub const ETA_MARGIN: f64 = 1e-6;
/// Condition estimate above which `N + B_eta - alpha` counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Complex symmetric Nyström matrix of the `N(lambda)` kernel.
pub fn n_matrix(
    curve: &Curve,
    grid: &ArcGrid,
    lambda: SpectralParameter,
    eta: f64,
) -> Result<DMatrix<Complex64>> {
    let kernel = n_expansion(lambda, eta)?;
    let n = grid.len();
    let w = grid.weight();
    let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let circle = curve.is_circle();
    for j in 0..n {
        for i in 0..j {
            let v = kernel.eval(grid.chord(i, j)) * w;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        let kappa = if circle {
            1.0 / curve.equivalent_radius()
        } else {
            grid.curvature()[j]
        };
        m[(j, j)] = kernel.diagonal(w, kappa);
    }
    Ok(m)
}

/// `(N - N^*) / (2i)`; real symmetric when `N` is complex symmetric.
pub fn imaginary_part(n: &DMatrix<Complex64>) -> DMatrix<f64> {
    let dim = n.nrows();
    DMatrix::from_fn(dim, dim, |i, j| {
        let v = (n[(i, j)] - n[(j, i)].conj()) / Complex64::new(0.0, 2.0);
        v.re
    })
}

/// First candidate `eta` whose `B_eta` keeps `alpha` at least [`ETA_MARGIN`] from its spectrum.
pub fn choose_eta(curve: &Curve, grid: &ArcGrid, alpha: f64, candidates: &[f64]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no eta candidates given".into()));
    }
    for &eta in candidates {
        if !(eta < 0.0) {
            return Err(Error::InvalidInput(format!(
                "eta must be negative, got {eta}"
            )));
        }
        let s = spectrum(curve, grid, eta)?;
        let margin = s
            .iter()
            .map(|v| (v - alpha).abs())
            .fold(f64::INFINITY, f64::min);
        if margin > ETA_MARGIN {
            return Ok(eta);
        }
    }
    Err(Error::NoAdmissibleEta)
}

#[derive(Clone, Debug)]
pub struct ScatteringBlock {
    pub lambda: f64,
    pub eta: f64,
    pub alpha: f64,
    /// Eigenvalues of `Im N`, nonincreasing.
    pub im_eigenvalues: Vec<f64>,
    /// `max |Im N - (Im N)^T|`.
    pub im_asymmetry: f64,
    /// `S'` on the retained subspace, `g x g`.
    pub s_prime: DMatrix<Complex64>,
    /// Spectral norm of `S'^* S' - I`.
    pub unitarity_defect: f64,
    /// One-norm condition estimate of `N + B_eta - alpha`.
    pub condition: f64,
}

impl ScatteringBlock {
    /// Dimension `g` of the retained channel space.
    pub fn dim(&self) -> usize {
        self.s_prime.nrows()
    }
}

fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn spectral_norm_hermitian(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Scattering block `S'(lambda) = I - 2i sqrt(Im N) (N + B_eta - alpha)^{-1} sqrt(Im N)`
/// for `lambda >= 0`, restricted to the numerical range of `Im N`.
pub fn s_prime(
    curve: &Curve,
    grid: &ArcGrid,
    lambda: f64,
    alpha: f64,
    eta: f64,
) -> Result<ScatteringBlock> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let p = SpectralParameter::real(lambda);
    let n = n_matrix(curve, grid, p, eta)?;
    let im = imaginary_part(&n);
    let im_asymmetry = (&im - im.transpose()).amax();

    let dim = grid.len();
    let se = SymmetricEigen::try_new(im, f64::EPSILON, 0).ok_or(Error::EigenNonConvergence(dim))?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| {
        se.eigenvalues[j]
            .total_cmp(&se.eigenvalues[i])
            .then(i.cmp(&j))
    });
    let im_eigenvalues: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let top = im_eigenvalues.first().copied().unwrap_or(0.0);
    let kept: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| top > 0.0 && se.eigenvalues[i] > RANK_TOL * top)
        .collect();
    let g = kept.len();

    // columns V_g Lambda_g^{1/2}
    let mut root = DMatrix::from_element(dim, g, Complex64::new(0.0, 0.0));
    for (c, &i) in kept.iter().enumerate() {
        let s = se.eigenvalues[i].sqrt();
        for r in 0..dim {
            root[(r, c)] = Complex64::new(se.eigenvectors[(r, i)] * s, 0.0);
        }
    }

    let b = b_lambda_matrix(curve, eta, grid)?;
    let mut a = n;
    for j in 0..dim {
        for i in 0..dim {
            a[(i, j)] += b.entries()[(i, j)];
        }
        a[(j, j)] -= alpha;
    }
    let a_norm = one_norm(&a);
    let lu = a.lu();
    let inv = lu.try_inverse().ok_or(Error::Singular(f64::INFINITY))?;
    let condition = a_norm * one_norm(&inv);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular(condition));
    }

    let solved = &inv * &root;
    let inner = root.transpose() * solved;
    let mut s = DMatrix::identity(g, g);
    s -= inner * Complex64::new(0.0, 2.0);
    let defect = spectral_norm_hermitian(&(s.adjoint() * &s - DMatrix::identity(g, g)));

    Ok(ScatteringBlock {
        lambda,
        eta,
        alpha,
        im_eigenvalues,
        im_asymmetry,
        s_prime: s,
        unitarity_defect: defect,
        condition,
    })
}

/// Relative tail `sum_{k >= m} mu_k / sum_k mu_k` of nonnegative eigenvalues.
pub fn relative_tail(values: &[f64], m: usize) -> f64 {
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    if total == 0.0 {
        return 0.0;
    }
    values.iter().skip(m).map(|v| v.max(0.0)).sum::<f64>() / total
}

/// Max entrywise difference between two blocks of equal dimension.
pub fn block_distance(a: &ScatteringBlock, b: &ScatteringBlock) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidInput(format!(
            "block dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok((&a.s_prime - &b.s_prime)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}
