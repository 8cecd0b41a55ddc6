//! Closed space curves, arc-length reparametrization and purely geometric
//! quantities on them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, integrate_adaptive};

pub type Vec3 = [f64; 3];

#[inline]
pub(crate) fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn norm(a: &Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

#[inline]
pub(crate) fn dist(a: &Vec3, b: &Vec3) -> f64 {
    norm(&sub(a, b))
}

#[inline]
fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Wire format for curve configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CurveSpec {
    Circle {
        radius: f64,
    },
    Fourier {
        a0: Vec3,
        cos: Vec<Vec3>,
        sin: Vec<Vec3>,
        period: f64,
    },
}

impl CurveSpec {
    /// Builds the unit-speed curve described by this spec.
    pub fn build(&self, reparam_tol: f64) -> Result<Curve> {
        match self {
            CurveSpec::Circle { radius } => make_circle(*radius),
            CurveSpec::Fourier {
                a0,
                cos,
                sin,
                period,
            } => {
                let raw = FourierCurve::new(*a0, cos.clone(), sin.clone(), *period)?;
                reparametrize_arclength(&raw, reparam_tol)
            }
        }
    }
}

/// Truncated Fourier parametrization `a0 + sum_m cos_m cos(m w t) + sin_m sin(m w t)`
/// with `w = 2 pi / period`. Not unit speed in general.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierCurve {
    a0: Vec3,
    cos: Vec<Vec3>,
    sin: Vec<Vec3>,
    period: f64,
}

impl FourierCurve {
    pub fn new(a0: Vec3, mut cos: Vec<Vec3>, mut sin: Vec<Vec3>, period: f64) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidInput(format!(
                "period must be positive, got {period}"
            )));
        }
        let all = a0
            .iter()
            .chain(cos.iter().flatten())
            .chain(sin.iter().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite Fourier coefficient".into()));
        }
        let m = cos.len().max(sin.len());
        if m == 0 {
            return Err(Error::InvalidInput(
                "curve needs at least one harmonic".into(),
            ));
        }
        cos.resize(m, [0.0; 3]);
        sin.resize(m, [0.0; 3]);
        Ok(Self {
            a0,
            cos,
            sin,
            period,
        })
    }

    /// Planar ellipse with semi-axes `a` (x) and `b` (y), period 2 pi.
    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        Self::new([0.0; 3], vec![[a, 0.0, 0.0]], vec![[0.0, b, 0.0]], 2.0 * PI)
    }

    /// Applies `x -> rotation * x + translation` to the curve.
    pub fn transformed(&self, rotation: [[f64; 3]; 3], translation: Vec3) -> Self {
        let rot = |v: &Vec3| -> Vec3 {
            [
                dot(&rotation[0], v),
                dot(&rotation[1], v),
                dot(&rotation[2], v),
            ]
        };
        let mut a0 = rot(&self.a0);
        for (a, t) in a0.iter_mut().zip(translation) {
            *a += t;
        }
        Self {
            a0,
            cos: self.cos.iter().map(rot).collect(),
            sin: self.sin.iter().map(rot).collect(),
            period: self.period,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let sc = |v: &Vec3| [v[0] * factor, v[1] * factor, v[2] * factor];
        Self {
            a0: sc(&self.a0),
            cos: self.cos.iter().map(sc).collect(),
            sin: self.sin.iter().map(sc).collect(),
            period: self.period,
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn spec(&self) -> CurveSpec {
        CurveSpec::Fourier {
            a0: self.a0,
            cos: self.cos.clone(),
            sin: self.sin.clone(),
            period: self.period,
        }
    }

    /// Position and the first two parameter derivatives at `t`.
    pub fn eval(&self, t: f64) -> (Vec3, Vec3, Vec3) {
        let w = 2.0 * PI / self.period;
        let mut p = self.a0;
        let mut d1 = [0.0; 3];
        let mut d2 = [0.0; 3];
        for (m, (c, s)) in self.cos.iter().zip(&self.sin).enumerate() {
            let k = (m + 1) as f64 * w;
            let (sn, cs) = (k * t).sin_cos();
            for i in 0..3 {
                p[i] += c[i] * cs + s[i] * sn;
                d1[i] += k * (-c[i] * sn + s[i] * cs);
                d2[i] += -k * k * (c[i] * cs + s[i] * sn);
            }
        }
        (p, d1, d2)
    }

    pub fn speed(&self, t: f64) -> f64 {
        norm(&self.eval(t).1)
    }

    /// Total length by adaptive quadrature of the speed.
    pub fn length(&self) -> f64 {
        integrate_adaptive(|t| self.speed(t), 0.0, self.period, 1e-13).0
    }
}

/// Lookup table for the map from arc length to curve parameter.
#[derive(Clone, Debug)]
struct ArcTable {
    panel_t: Vec<f64>,
    panel_s: Vec<f64>,
    gl_nodes: Vec<f64>,
    gl_weights: Vec<f64>,
}

const GL_ORDER: usize = 10;
const DEFAULT_PANELS: usize = 16 * 256;

impl ArcTable {
    fn build(curve: &FourierCurve, panels: usize) -> Self {
        let (gl_nodes, gl_weights) = gauss_legendre(GL_ORDER);
        let h = curve.period / panels as f64;
        let panel_t: Vec<f64> = (0..=panels).map(|k| k as f64 * h).collect();
        let mut panel_s = Vec::with_capacity(panels + 1);
        let mut acc = 0.0;
        let mut comp = 0.0;
        panel_s.push(0.0);
        for k in 0..panels {
            let piece = gl_integrate(curve, &gl_nodes, &gl_weights, panel_t[k], panel_t[k + 1]);
            // Neumaier summation keeps the table monotone to the last bit
            let t = acc + piece;
            if acc.abs() >= piece.abs() {
                comp += (acc - t) + piece;
            } else {
                comp += (piece - t) + acc;
            }
            acc = t;
            panel_s.push(acc + comp);
        }
        Self {
            panel_t,
            panel_s,
            gl_nodes,
            gl_weights,
        }
    }

    fn length(&self) -> f64 {
        *self.panel_s.last().unwrap()
    }

    /// Parameter value at arc length `s` in [0, L].
    fn param_at(&self, curve: &FourierCurve, s: f64) -> f64 {
        let k = match self.panel_s.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(k) => return self.panel_t[k],
            Err(k) => k.clamp(1, self.panel_s.len() - 1) - 1,
        };
        let (mut lo, mut hi) = (self.panel_t[k], self.panel_t[k + 1]);
        let base = self.panel_s[k];
        let span = self.panel_s[k + 1] - base;
        let t0 = self.panel_t[k];
        let arc = |t: f64| base + gl_integrate(curve, &self.gl_nodes, &self.gl_weights, t0, t);
        // linear guess, then safeguarded Newton; bisection when Newton leaves the bracket
        let mut t = lo + (hi - lo) * ((s - base) / span).clamp(0.0, 1.0);
        for _ in 0..100 {
            let f = arc(t) - s;
            if f == 0.0 {
                return t;
            }
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let step = f / curve.speed(t);
            let mut next = t - step;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() <= 1e-15 * (1.0 + t.abs()) || hi - lo < 1e-15 {
                return next;
            }
            t = next;
        }
        t
    }
}

fn gl_integrate(curve: &FourierCurve, nodes: &[f64], weights: &[f64], a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    nodes
        .iter()
        .zip(weights)
        .map(|(x, w)| w * curve.speed(c + h * x))
        .sum::<f64>()
        * h
}

#[derive(Clone, Debug)]
enum Shape {
    Circle { radius: f64 },
    Fourier { raw: FourierCurve, table: ArcTable },
}

/// A closed regular curve in unit-speed (arc-length) parametrization.
#[derive(Clone, Debug)]
pub struct Curve {
    shape: Shape,
    length: f64,
    curvature_bound: f64,
}

/// Planar circle of radius `radius` centred at the origin in the xy-plane.
pub fn make_circle(radius: f64) -> Result<Curve> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidInput(format!(
            "circle radius must be positive, got {radius}"
        )));
    }
    Ok(Curve {
        shape: Shape::Circle { radius },
        length: 2.0 * PI * radius,
        curvature_bound: 1.0 / radius,
    })
}

/// Reparametrizes a Fourier curve by arc length.
///
/// Arc length is tabulated with composite Gauss–Legendre quadrature of the
/// speed and inverted by safeguarded Newton iteration. The result is checked
/// for regularity, self-intersections and unit speed (fourth-order finite
/// differences at 1024 check nodes, against `tol`).
pub fn reparametrize_arclength(raw: &FourierCurve, tol: f64) -> Result<Curve> {
    let probes = 4096;
    let dt = raw.period / probes as f64;
    let speeds: Vec<f64> = (0..probes).map(|i| raw.speed(i as f64 * dt)).collect();
    let max_speed = speeds.iter().cloned().fold(0.0, f64::max);
    let min_speed = speeds.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_speed > 1e-9 * max_speed) {
        return Err(Error::NotRegular { min_speed });
    }

    let table = ArcTable::build(raw, DEFAULT_PANELS);
    let length = table.length();
    let mut curve = Curve {
        shape: Shape::Fourier {
            raw: raw.clone(),
            table,
        },
        length,
        curvature_bound: 0.0,
    };

    check_self_intersection(&curve)?;

    let checks = 4 * 256;
    let h = 1e-3 * length / (2.0 * PI);
    let mut defect: f64 = 0.0;
    let mut second = [0.0f64; 3];
    for j in 0..checks {
        let s = j as f64 * length / checks as f64;
        let p = |d: f64| curve.position(s + d);
        let (a, b, c, d) = (p(-2.0 * h), p(-h), p(h), p(2.0 * h));
        let mut v = [0.0; 3];
        for i in 0..3 {
            v[i] = (a[i] - 8.0 * b[i] + 8.0 * c[i] - d[i]) / (12.0 * h);
        }
        defect = defect.max((norm(&v) - 1.0).abs());
        let acc = curve.acceleration(s);
        for i in 0..3 {
            second[i] = second[i].max(acc[i].abs());
        }
    }
    if !(defect < tol) {
        return Err(Error::Reparametrization { defect, tol });
    }
    curve.curvature_bound = norm(&second);
    Ok(curve)
}

fn check_self_intersection(curve: &Curve) -> Result<()> {
    let m = 512;
    let l = curve.length;
    let pts: Vec<Vec3> = (0..m)
        .map(|j| curve.position(j as f64 * l / m as f64))
        .collect();
    let band = m / 64;
    let mut best = (f64::INFINITY, 0, 0);
    for i in 0..m {
        for j in i + band + 1..m {
            if i + m - j <= band {
                continue;
            }
            let c = dist(&pts[i], &pts[j]);
            if c < best.0 {
                best = (c, i, j);
            }
        }
    }
    if !(best.0 > 1e-9 * l) {
        return Err(Error::SelfIntersection {
            min_chord: best.0,
            s: best.1 as f64 * l / m as f64,
            t: best.2 as f64 * l / m as f64,
        });
    }
    Ok(())
}

impl Curve {
    /// Ellipse with axis ratio `aspect : 1`, scaled to total length `length`.
    pub fn ellipse_with_length(aspect: f64, length: f64) -> Result<Curve> {
        let raw = FourierCurve::ellipse(aspect, 1.0)?;
        let raw = raw.scaled(length / raw.length());
        reparametrize_arclength(&raw, 1e-8)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Radius of the circle with the same length.
    pub fn equivalent_radius(&self) -> f64 {
        self.length / (2.0 * PI)
    }

    pub fn circle_radius(&self) -> Option<f64> {
        match self.shape {
            Shape::Circle { radius } => Some(radius),
            _ => None,
        }
    }

    pub fn is_circle(&self) -> bool {
        self.circle_radius().is_some()
    }

    /// `C_sigma`: Euclidean norm of the componentwise sup of the second arc-length derivative.
    pub fn curvature_bound(&self) -> f64 {
        self.curvature_bound
    }

    pub fn spec(&self) -> CurveSpec {
        match &self.shape {
            Shape::Circle { radius } => CurveSpec::Circle { radius: *radius },
            Shape::Fourier { raw, .. } => raw.spec(),
        }
    }

    pub fn label(&self) -> String {
        match &self.shape {
            Shape::Circle { radius } => format!("circle(R={radius})"),
            Shape::Fourier { raw, .. } => {
                format!("fourier(M={},L={:.12})", raw.cos.len(), self.length)
            }
        }
    }

    fn wrap(&self, s: f64) -> f64 {
        let r = s.rem_euclid(self.length);
        if r >= self.length {
            0.0
        } else {
            r
        }
    }

    /// Parameter of the underlying Fourier parametrization at arc length `s`.
    fn param(&self, s: f64) -> Option<(&FourierCurve, f64)> {
        match &self.shape {
            Shape::Circle { .. } => None,
            Shape::Fourier { raw, table } => Some((raw, table.param_at(raw, self.wrap(s)))),
        }
    }

    pub fn position(&self, s: f64) -> Vec3 {
        match &self.shape {
            Shape::Circle { radius } => {
                let (sn, cs) = (s / radius).sin_cos();
                [radius * cs, radius * sn, 0.0]
            }
            Shape::Fourier { .. } => {
                let (raw, t) = self.param(s).unwrap();
                raw.eval(t).0
            }
        }
    }

    /// Second derivative with respect to arc length.
    pub fn acceleration(&self, s: f64) -> Vec3 {
        match &self.shape {
            Shape::Circle { radius } => {
                let (sn, cs) = (s / radius).sin_cos();
                [-cs / radius, -sn / radius, 0.0]
            }
            Shape::Fourier { .. } => {
                let (raw, t) = self.param(s).unwrap();
                let (_, d1, d2) = raw.eval(t);
                let v = norm(&d1);
                let tan = [d1[0] / v, d1[1] / v, d1[2] / v];
                let along = dot(&d2, &tan);
                let mut a = [0.0; 3];
                for i in 0..3 {
                    a[i] = (d2[i] - along * tan[i]) / (v * v);
                }
                a
            }
        }
    }

    pub fn curvature(&self, s: f64) -> f64 {
        match &self.shape {
            Shape::Circle { radius } => 1.0 / radius,
            Shape::Fourier { .. } => norm(&self.acceleration(s)),
        }
    }
}

/// Equispaced arc-length discretization of a curve.
#[derive(Clone, Debug)]
pub struct ArcGrid {
    length: f64,
    nodes: Vec<f64>,
    points: Vec<Vec3>,
    curvature: Vec<f64>,
    circle_radius: Option<f64>,
}

impl ArcGrid {
    pub fn new(curve: &Curve, n: usize) -> Result<Self> {
        if n < 16 || !n.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "grid size must be even and >= 16, got {n}"
            )));
        }
        let length = curve.length();
        let nodes: Vec<f64> = (0..n).map(|j| j as f64 * length / n as f64).collect();
        let points = nodes.iter().map(|&s| curve.position(s)).collect();
        let curvature = nodes.iter().map(|&s| curve.curvature(s)).collect();
        Ok(Self {
            length,
            nodes,
            points,
            curvature,
            circle_radius: curve.circle_radius(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature weight `L / N`.
    pub fn weight(&self) -> f64 {
        self.length / self.nodes.len() as f64
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    pub fn is_circle(&self) -> bool {
        self.circle_radius.is_some()
    }

    pub fn id(&self) -> String {
        format!("arc(N={},L={:.12})", self.len(), self.length)
    }

    /// Chord of the same-length comparison circle between nodes i and j.
    #[inline]
    pub fn circle_chord(&self, i: usize, j: usize) -> f64 {
        let n = self.len();
        let d = i.abs_diff(j);
        let d = d.min(n - d);
        let r = self.length / (2.0 * PI);
        2.0 * r * (PI * d as f64 / n as f64).sin()
    }

    /// Chord of the curve itself between nodes i and j.
    #[inline]
    pub fn chord(&self, i: usize, j: usize) -> f64 {
        if self.circle_radius.is_some() {
            self.circle_chord(i, j)
        } else {
            dist(&self.points[i], &self.points[j])
        }
    }
}

/// Euclidean distance `|sigma(s) - sigma(t)|` for arc-length positions.
pub fn chord(curve: &Curve, s: f64, t: f64) -> f64 {
    match curve.circle_radius() {
        Some(r) => {
            let l = curve.length();
            let d = (s - t).rem_euclid(l);
            let d = d.min(l - d);
            2.0 * r * (d / (2.0 * r)).sin().abs()
        }
        None => dist(&curve.position(s), &curve.position(t)),
    }
}

/// Double integral of the squared difference between the curve's and the
/// same-length circle's `1/(4 pi r)` kernels (tensor trapezoid, diagonal 0).
pub fn d_sigma(curve: &Curve, grid: &ArcGrid) -> f64 {
    if curve.is_circle() {
        return 0.0;
    }
    let n = grid.len();
    let w = grid.weight();
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let diff =
                1.0 / (4.0 * PI * grid.chord(i, j)) - 1.0 / (4.0 * PI * grid.circle_chord(i, j));
            row += diff * diff;
        }
        total += row;
    }
    total * w * w
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChordAverage {
    /// `int_0^L |sigma(s+u) - sigma(s)| ds`
    pub lhs: f64,
    /// `(L^2/pi) sin(pi u / L)`
    pub rhs: f64,
}

pub fn chord_average_inequality(curve: &Curve, grid: &ArcGrid, u: f64) -> ChordAverage {
    let l = curve.length();
    let lhs = grid
        .nodes()
        .iter()
        .map(|&s| chord(curve, s + u, s))
        .sum::<f64>()
        * grid.weight();
    let rhs = l * l / PI * (PI * u / l).sin();
    ChordAverage { lhs, rhs }
}
