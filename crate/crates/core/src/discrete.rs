//! Grids, stencils, periodic convolution and the discrete energy.
//!
//! Stencil storage convention: offset `l` in `-R..=R` lives at position
//! `l + R` of the coefficient vector. Every other module (regression rows,
//! symbols, constraints) uses the same mapping.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Uniform periodic grid on `[0, L)` with `N` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct Grid1D {
    n: usize,
    length: f64,
    dx: f64,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    n: usize,
    length: f64,
}

impl TryFrom<GridRepr> for Grid1D {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        Grid1D::new(r.n, r.length)
    }
}

impl From<Grid1D> for GridRepr {
    fn from(g: Grid1D) -> Self {
        GridRepr { n: g.n, length: g.length }
    }
}

impl Grid1D {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidConfig(format!(
                "grid needs at least 3 points, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "domain length must be positive and finite, got {length}"
            )));
        }
        Ok(Self {
            n,
            length,
            dx: length / n as f64,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Node coordinate `x_i = i * dx`.
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|i| f(self.x(i))).collect()
    }
}

/// Convolution stencil of radius `R` (2R+1 coefficients, units 1/length).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StencilRepr")]
pub struct Stencil {
    #[serde(rename = "R")]
    radius: usize,
    w: Vec<f64>,
    /// Grid spacing the stencil was built for, if known.
    #[serde(default)]
    dx: Option<f64>,
}

#[derive(Deserialize)]
struct StencilRepr {
    #[serde(rename = "R")]
    radius: usize,
    w: Vec<f64>,
    #[serde(default)]
    dx: Option<f64>,
}

impl TryFrom<StencilRepr> for Stencil {
    type Error = Error;

    fn try_from(raw: StencilRepr) -> Result<Self> {
        check_len("stencil coefficients (2R+1)", 2 * raw.radius + 1, raw.w.len())?;
        let mut s = Stencil::new(raw.w)?;
        s.dx = raw.dx;
        Ok(s)
    }
}

impl Stencil {
    /// Builds a stencil from coefficients ordered `w_{-R}, ..., w_{R}`.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.len() < 3 || w.len().is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "stencil needs an odd number (>= 3) of coefficients, got {}",
                w.len()
            )));
        }
        if let Some(bad) = w.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "stencil coefficient at position {bad} is not finite"
            )));
        }
        Ok(Self {
            radius: (w.len() - 1) / 2,
            w,
            dx: None,
        })
    }

    pub fn zeros(radius: usize) -> Self {
        Self {
            radius,
            w: vec![0.0; 2 * radius + 1],
            dx: None,
        }
    }

    pub fn with_dx(mut self, dx: f64) -> Self {
        self.dx = Some(dx);
        self
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn dx(&self) -> Option<f64> {
        self.dx
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.w
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.w
    }

    /// Coefficient at signed offset `l`.
    ///
    /// # Panics
    /// If `|l| > R`.
    pub fn at(&self, l: isize) -> f64 {
        let r = self.radius as isize;
        assert!(l.abs() <= r, "offset {l} outside stencil radius {r}");
        self.w[(l + r) as usize]
    }

    /// `sqrt(w_0^2 + sum_l (w_{-l} + w_l)^2)`, the norm of the skew-constraint residual.
    pub fn skew_residual(&self) -> f64 {
        let r = self.radius as isize;
        let mut acc = self.at(0).powi(2);
        for l in 1..=r {
            acc += (self.at(-l) + self.at(l)).powi(2);
        }
        acc.sqrt()
    }

    pub fn is_skew(&self, tol: f64) -> bool {
        self.skew_residual() <= tol
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            radius: self.radius,
            w: self.w.iter().map(|c| c * factor).collect(),
            dx: self.dx,
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.w.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Euclidean distance between coefficient vectors of equal radius.
    pub fn distance(&self, other: &Stencil) -> Result<f64> {
        check_len("stencil length", self.len(), other.len())?;
        Ok(self
            .w
            .iter()
            .zip(&other.w)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt())
    }

    fn check_fits(&self, n: usize) -> Result<()> {
        if n < self.len() {
            Err(Error::StencilTooWide {
                radius: self.radius,
                n,
            })
        } else {
            Ok(())
        }
    }
}

/// Electric and magnetic nodal values on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPair {
    pub e: Vec<f64>,
    pub h: Vec<f64>,
}

impl FieldPair {
    pub fn new(e: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        check_len("field pair (H vs E)", e.len(), h.len())?;
        Ok(Self { e, h })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            e: vec![0.0; n],
            h: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    pub(crate) fn check_grid(&self, grid: &Grid1D) -> Result<()> {
        check_len("E field", grid.n(), self.e.len())?;
        check_len("H field", grid.n(), self.h.len())
    }
}

/// Discrete electromagnetic energy, always nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Energy(f64);

impl Energy {
    pub fn new(value: f64) -> Result<Self> {
        if value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidConfig(format!("energy must be >= 0, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Periodic convolution `(Du)_i = sum_l w_l u_{(i+l) mod N}`.
pub fn apply_stencil(w: &Stencil, u: &[f64], grid: &Grid1D) -> Result<Vec<f64>> {
    check_len("field", grid.n(), u.len())?;
    w.check_fits(u.len())?;
    Ok(convolve(w, u))
}

/// Unchecked convolution; caller guarantees `u.len() >= 2R+1`.
pub(crate) fn convolve(w: &Stencil, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let r = w.radius();
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (pos, c) in w.coeffs().iter().enumerate() {
            // offset l = pos - R
            acc += c * u[(i + n + pos - r) % n];
        }
        *o = acc;
    }
    out
}

/// Dense circulant matrix of the convolution: row `i` carries `w_l` in
/// column `(i + l) mod N`, so `D * u == apply_stencil(w, u)`.
pub fn operator_matrix(w: &Stencil, n: usize) -> Result<DMatrix<f64>> {
    w.check_fits(n)?;
    let r = w.radius() as isize;
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for l in -r..=r {
            let j = (i as isize + l).rem_euclid(n as isize) as usize;
            d[(i, j)] += w.at(l);
        }
    }
    Ok(d)
}

/// Weighted inner product `dx * sum_i u_i v_i`.
pub fn inner_product(u: &[f64], v: &[f64], grid: &Grid1D) -> Result<f64> {
    check_len("inner product lhs", grid.n(), u.len())?;
    check_len("inner product rhs", grid.n(), v.len())?;
    Ok(grid.dx() * dot(u, v))
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Weighted norm `sqrt(<u, u>)`.
pub fn weighted_norm(u: &[f64], grid: &Grid1D) -> Result<f64> {
    inner_product(u, u, grid).map(f64::sqrt)
}

/// `1/2 ||E||^2 + 1/2 ||H||^2` in the dx-weighted norm.
pub fn discrete_energy(f: &FieldPair, grid: &Grid1D) -> Result<Energy> {
    f.check_grid(grid)?;
    Ok(Energy(0.5 * grid.dx() * (dot(&f.e, &f.e) + dot(&f.h, &f.h))))
}

/// The radius-1 centered difference `(-1, 0, 1) / (2 dx)`.
pub fn centered_difference_stencil(grid: &Grid1D) -> Stencil {
    let c = 1.0 / (2.0 * grid.dx());
    Stencil {
        radius: 1,
        w: vec![-c, 0.0, c],
        dx: Some(grid.dx()),
    }
}

/// Standard centered difference of order `2R` for the first derivative.
///
/// `w_l = (-1)^(l+1) (R!)^2 / (l (R-l)! (R+l)!) / dx` for `l = 1..R`,
/// `w_{-l} = -w_l`, `w_0 = 0`.
pub fn centered_difference_of_radius(grid: &Grid1D, radius: usize) -> Result<Stencil> {
    if radius == 0 {
        return Err(Error::InvalidConfig("stencil radius must be >= 1".into()));
    }
    let ln_fact = |k: usize| (1..=k).map(|j| (j as f64).ln()).sum::<f64>();
    let mut w = vec![0.0; 2 * radius + 1];
    for l in 1..=radius {
        let mag = (2.0 * ln_fact(radius) - ln_fact(radius - l) - ln_fact(radius + l)).exp()
            / l as f64;
        let sign = if l % 2 == 1 { 1.0 } else { -1.0 };
        let c = sign * mag / grid.dx();
        w[radius + l] = c;
        w[radius - l] = -c;
    }
    Ok(Stencil {
        radius,
        w,
        dx: Some(grid.dx()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn grid64() -> Grid1D {
        Grid1D::new(64, 1.0).unwrap()
    }

    #[test]
    fn grid_spacing_and_points() {
        let g = Grid1D::new(64, 1.0).unwrap();
        assert_eq!(g.dx(), 1.0 / 64.0);
        assert_eq!(g.x(3), 3.0 / 64.0);
        assert!(Grid1D::new(2, 1.0).is_err());
        assert!(Grid1D::new(8, 0.0).is_err());
    }

    #[test]
    fn stencil_rejects_even_or_nonfinite() {
        assert!(Stencil::new(vec![1.0, 2.0]).is_err());
        assert!(Stencil::new(vec![1.0, f64::NAN, 2.0]).is_err());
        let s = Stencil::new(vec![-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(s.radius(), 1);
        assert_eq!(s.at(-1), -1.0);
    }

    #[test]
    fn constant_field_has_zero_derivative() {
        let g = grid64();
        let w = Stencil::new(vec![-32.0, 0.0, 32.0]).unwrap();
        let out = apply_stencil(&w, &vec![3.5; 64], &g).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn centered_difference_of_sine() {
        let g = grid64();
        let w = Stencil::new(vec![-32.0, 0.0, 32.0]).unwrap();
        let u = g.sample(|x| (2.0 * PI * x).sin());
        let v = apply_stencil(&w, &u, &g).unwrap();
        for i in 0..64 {
            // direct evaluation of the sum
            let direct = 32.0 * (u[(i + 1) % 64] - u[(i + 63) % 64]);
            assert_relative_eq!(v[i], direct, epsilon = 1e-12);
            let closed = 64.0 * (2.0 * PI / 64.0).sin() * (2.0 * PI * g.x(i)).cos();
            assert_relative_eq!(v[i], closed, epsilon = 1e-11);
        }
    }

    #[test]
    fn identity_scaling_stencil() {
        let g = Grid1D::new(8, 1.0).unwrap();
        let w = Stencil::new(vec![0.0, 5.0, 0.0]).unwrap();
        let u: Vec<f64> = (0..8).map(|i| i as f64 - 2.5).collect();
        let v = apply_stencil(&w, &u, &g).unwrap();
        for (a, b) in v.iter().zip(&u) {
            assert_eq!(*a, 5.0 * b);
        }
    }

    #[test]
    fn apply_rejects_bad_dimensions() {
        let g = Grid1D::new(4, 1.0).unwrap();
        let w = Stencil::new(vec![1.0, 0.0, 0.0, 0.0, -1.0]).unwrap();
        assert!(matches!(
            apply_stencil(&w, &[0.0; 4], &g),
            Err(Error::StencilTooWide { .. })
        ));
        let w1 = Stencil::new(vec![-1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            apply_stencil(&w1, &[0.0; 5], &g),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(operator_matrix(&w, 4).is_err());
    }

    #[test]
    fn operator_matrix_small_case() {
        let w = Stencil::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let d = operator_matrix(&w, 4).unwrap();
        let expected = [
            [0.0, 1.0, 0.0, -1.0],
            [-1.0, 0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0, 1.0],
            [1.0, 0.0, -1.0, 0.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d[(i, j)], expected[i][j], "entry ({i},{j})");
            }
        }
        assert_eq!(d.transpose(), -d);
    }

    #[test]
    fn inner_product_cases() {
        let g = grid64();
        let ones = vec![1.0; 64];
        assert_relative_eq!(inner_product(&ones, &ones, &g).unwrap(), 1.0, epsilon = 1e-15);
        let s = g.sample(|x| (2.0 * PI * 3.0 * x).sin());
        let c = g.sample(|x| (2.0 * PI * 3.0 * x).cos());
        assert!(inner_product(&s, &c, &g).unwrap().abs() < 1e-15);
        assert!(inner_product(&s, &c[..10], &g).is_err());
    }

    #[test]
    fn energy_cases() {
        let g = grid64();
        assert_eq!(discrete_energy(&FieldPair::zeros(64), &g).unwrap().value(), 0.0);
        let f = FieldPair::new(
            g.sample(|x| (2.0 * PI * x).sin()),
            g.sample(|x| (2.0 * PI * x).cos()),
        )
        .unwrap();
        let e = discrete_energy(&f, &g).unwrap().value();
        assert_relative_eq!(e, 0.5, epsilon = 1e-14);
        let f2 = FieldPair::new(
            f.e.iter().map(|v| 2.0 * v).collect(),
            f.h.iter().map(|v| 2.0 * v).collect(),
        )
        .unwrap();
        assert_relative_eq!(discrete_energy(&f2, &g).unwrap().value(), 4.0 * e, epsilon = 1e-14);
        assert!(discrete_energy(&FieldPair::zeros(10), &g).is_err());
        assert!(Energy::new(-1.0).is_err());
    }

    #[test]
    fn centered_difference_values() {
        let w = centered_difference_stencil(&grid64());
        assert_eq!(w.coeffs(), &[-32.0, 0.0, 32.0]);
        assert_eq!(w.skew_residual(), 0.0);
        let w128 = centered_difference_stencil(&Grid1D::new(128, 1.0).unwrap());
        assert_eq!(w128.coeffs(), &[-64.0, 0.0, 64.0]);
    }

    #[test]
    fn higher_order_centered_differences() {
        let g = Grid1D::new(12, 1.0).unwrap();
        let dx = g.dx();
        let w2 = centered_difference_of_radius(&g, 2).unwrap();
        let expect2 = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w2.coeffs().iter().zip(expect2) {
            assert_relative_eq!(*a, b / dx, epsilon = 1e-12);
        }
        let w3 = centered_difference_of_radius(&g, 3).unwrap();
        assert_relative_eq!(w3.at(1), 0.75 / dx, epsilon = 1e-12);
        assert_relative_eq!(w3.at(2), -0.15 / dx, epsilon = 1e-12);
        assert_relative_eq!(w3.at(3), 1.0 / 60.0 / dx, epsilon = 1e-12);
        assert_eq!(centered_difference_of_radius(&g, 1).unwrap(), centered_difference_stencil(&g));
    }

    #[test]
    fn stencil_json_shape() {
        let w = centered_difference_stencil(&grid64());
        let json = serde_json::to_value(&w).unwrap();
        assert_eq!(json["R"], 1);
        assert_eq!(json["dx"], 1.0 / 64.0);
        assert_eq!(json["w"][2], 32.0);
        let back: Stencil = serde_json::from_value(json).unwrap();
        assert_eq!(back, w);
    }
}
