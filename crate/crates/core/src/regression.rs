//! Least-squares assembly, skew-symmetry constraints and the affine projection.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::discrete::Stencil;
use crate::error::{check_len, Error, Result};
use crate::par;
use crate::training::TrainingSet;

/// Default Tikhonov weight.
pub const DEFAULT_LAMBDA: f64 = 1e-6;
/// Default box bound on every stencil coefficient.
pub const DEFAULT_BOX: f64 = 100.0;

/// `min 1/2 ||Aw - b||^2 + lambda/2 ||w||^2` data, with the Gram form cached.
#[derive(Debug, Clone)]
pub struct RegressionSystem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    lambda: f64,
    box_bound: f64,
    gram: DMatrix<f64>,
    atb: DVector<f64>,
    /// Unconstrained minimizer and its objective, when `A^T A + lambda I` is
    /// positive definite. Lets `objective` run in O(p^2) without the
    /// cancellation of expanding `||Aw - b||^2`.
    anchor: Option<(DVector<f64>, f64)>,
}

impl RegressionSystem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, lambda: f64, box_bound: f64) -> Result<Self> {
        check_len("regression targets", a.nrows(), b.len())?;
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidConfig("design matrix is empty".into()));
        }
        let gram = a.tr_mul(&a);
        let atb = a.tr_mul(&b);
        Self::from_parts(a, b, gram, atb, lambda, box_bound)
    }

    fn from_parts(
        a: DMatrix<f64>,
        b: DVector<f64>,
        gram: DMatrix<f64>,
        atb: DVector<f64>,
        lambda: f64,
        box_bound: f64,
    ) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(box_bound.is_finite() && box_bound > 0.0) {
            return Err(Error::InvalidConfig(format!("box bound M must be > 0, got {box_bound}")));
        }
        let mut sys = Self {
            a,
            b,
            lambda,
            box_bound,
            gram,
            atb,
            anchor: None,
        };
        sys.anchor = sys
            .hessian()
            .cholesky()
            .map(|ch| ch.solve(&sys.atb))
            .map(|w| {
                let f = sys.objective_direct(&w);
                (w, f)
            });
        Ok(sys)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn box_bound(&self) -> f64 {
        self.box_bound
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn atb(&self) -> &DVector<f64> {
        &self.atb
    }

    /// `A^T A + lambda I`.
    pub fn hessian(&self) -> DMatrix<f64> {
        &self.gram + DMatrix::identity(self.dim(), self.dim()) * self.lambda
    }

    /// Copy of the system with a different box bound.
    pub fn with_box_bound(&self, box_bound: f64) -> Result<Self> {
        Self::from_parts(
            self.a.clone(),
            self.b.clone(),
            self.gram.clone(),
            self.atb.clone(),
            self.lambda,
            box_bound,
        )
    }

    /// Objective evaluated from the residual `Aw - b` directly.
    pub fn objective_direct(&self, w: &DVector<f64>) -> f64 {
        let r = &self.a * w - &self.b;
        0.5 * r.norm_squared() + 0.5 * self.lambda * w.norm_squared()
    }

    pub fn objective(&self, w: &DVector<f64>) -> f64 {
        match &self.anchor {
            Some((w_star, f_star)) => {
                let e = w - w_star;
                let he = &self.gram * &e + &e * self.lambda;
                f_star + 0.5 * e.dot(&he)
            }
            None => self.objective_direct(w),
        }
    }

    pub fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.gram * w - &self.atb + w * self.lambda
    }

    /// Diagnostic summary (dimensions and Gram matrix).
    pub fn gram_dump(&self) -> GramDump {
        GramDump {
            rows: self.rows(),
            cols: self.dim(),
            lambda: self.lambda,
            box_bound: self.box_bound,
            gram: (0..self.dim())
                .map(|i| self.gram.row(i).iter().copied().collect())
                .collect(),
            atb: self.atb.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GramDump {
    pub rows: usize,
    pub cols: usize,
    pub lambda: f64,
    pub box_bound: f64,
    pub gram: Vec<Vec<f64>>,
    pub atb: Vec<f64>,
}

/// `(f(w), grad f(w))` for `f(w) = 1/2 ||Aw-b||^2 + lambda/2 ||w||^2`.
pub fn objective_and_gradient(sys: &RegressionSystem, w: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    check_len("stencil vector", sys.dim(), w.len())?;
    Ok((sys.objective(w), sys.gradient(w)))
}

/// Stacks periodic patches of every training sample into `(A, b)`.
///
/// Row order: sample-major; within a sample, the N H-patch rows (targets
/// dE/dt) come first, then the N E-patch rows (targets dH/dt), each in
/// ascending grid index.
pub fn assemble_regression(
    ts: &TrainingSet,
    radius: usize,
    lambda: f64,
    box_bound: f64,
) -> Result<RegressionSystem> {
    let n = ts.n();
    let p = 2 * radius + 1;
    if radius == 0 {
        return Err(Error::InvalidConfig("stencil radius must be >= 1".into()));
    }
    if p > n {
        return Err(Error::StencilTooWide { radius, n });
    }
    let block_rows = 2 * n;

    // per-sample rows plus Gram partials, summed below in sample order
    let blocks = par::map_range(ts.n_sims(), |s| {
        let mut rows = Vec::with_capacity(block_rows * p);
        let mut targets = Vec::with_capacity(block_rows);
        // (state channel feeding the patch, derivative channel holding the target)
        for (state_ch, target_ch) in [(1, 0), (0, 1)] {
            let u = ts.state(s, state_ch);
            let y = ts.derivative(s, target_ch);
            for i in 0..n {
                for pos in 0..p {
                    rows.push(u[(i + n + pos - radius) % n]);
                }
                targets.push(y[i]);
            }
        }
        let mut gram = vec![0.0; p * p];
        let mut atb = vec![0.0; p];
        for (row, t) in rows.chunks_exact(p).zip(&targets) {
            for j in 0..p {
                atb[j] += row[j] * t;
                for k in 0..p {
                    gram[j * p + k] += row[j] * row[k];
                }
            }
        }
        (rows, targets, gram, atb)
    });

    let total = ts.n_sims() * block_rows;
    let mut a = DMatrix::zeros(total, p);
    let mut b = DVector::zeros(total);
    let mut gram = DMatrix::zeros(p, p);
    let mut atb = DVector::zeros(p);
    for (s, (rows, targets, g, v)) in blocks.into_iter().enumerate() {
        let base = s * block_rows;
        for (r, (row, t)) in rows.chunks_exact(p).zip(&targets).enumerate() {
            for (j, val) in row.iter().enumerate() {
                a[(base + r, j)] = *val;
            }
            b[base + r] = *t;
        }
        for j in 0..p {
            atb[j] += v[j];
            for k in 0..p {
                gram[(j, k)] += g[j * p + k];
            }
        }
    }
    RegressionSystem::from_parts(a, b, gram, atb, lambda, box_bound)
}

/// Linear equality constraints `Cw = d` with `(C C^T)^{-1}` cached.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    c: DMatrix<f64>,
    d: DVector<f64>,
    cct_inv: DMatrix<f64>,
}

impl ConstraintSet {
    pub fn new(c: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        check_len("constraint rhs", c.nrows(), d.len())?;
        if c.nrows() == 0 {
            return Ok(Self::none(c.ncols()));
        }
        let cct = &c * c.transpose();
        let chol = cct
            .cholesky()
            .ok_or(Error::Singular("constraint matrix C is not of full row rank"))?;
        let cct_inv = chol.inverse();
        Ok(Self { c, d, cct_inv })
    }

    /// No equality constraints on a `dim`-dimensional variable.
    pub fn none(dim: usize) -> Self {
        Self {
            c: DMatrix::zeros(0, dim),
            d: DVector::zeros(0),
            cct_inv: DMatrix::zeros(0, 0),
        }
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn rows(&self) -> usize {
        self.c.nrows()
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn dim(&self) -> usize {
        self.c.ncols()
    }

    /// `||Cw - d||_2`.
    pub fn residual(&self, w: &DVector<f64>) -> f64 {
        if self.rows() == 0 {
            return 0.0;
        }
        (&self.c * w - &self.d).norm()
    }
}

/// Rows `w_0 = 0` and `w_{-l} + w_{+l} = 0` for `l = 1..R`.
pub fn build_skew_constraints(radius: usize) -> Result<ConstraintSet> {
    if radius == 0 {
        return Err(Error::InvalidConfig("stencil radius must be >= 1".into()));
    }
    let p = 2 * radius + 1;
    let mut c = DMatrix::zeros(radius + 1, p);
    c[(0, radius)] = 1.0;
    for l in 1..=radius {
        c[(l, radius - l)] = 1.0;
        c[(l, radius + l)] = 1.0;
    }
    ConstraintSet::new(c, DVector::zeros(radius + 1))
}

/// Euclidean projection `z - C^T (C C^T)^{-1} (Cz - d)`.
pub fn project_affine(z: &DVector<f64>, cs: &ConstraintSet) -> Result<DVector<f64>> {
    check_len("projection input", cs.dim(), z.len())?;
    if cs.rows() == 0 {
        return Ok(z.clone());
    }
    let viol = &cs.c * z - &cs.d;
    Ok(z - cs.c.tr_mul(&(&cs.cct_inv * viol)))
}

/// Power iteration on `A^T A` (30 steps), padded by 1%, plus lambda.
pub fn lipschitz_estimate(sys: &RegressionSystem) -> f64 {
    let p = sys.dim();
    // slightly uneven start so it is never orthogonal to a symmetric top eigenvector
    let mut v = DVector::from_fn(p, |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    let mut rayleigh = 0.0;
    for _ in 0..30 {
        let gv = sys.gram() * &v;
        rayleigh = v.dot(&gv);
        let norm = gv.norm();
        if norm == 0.0 {
            break;
        }
        v = gv / norm;
    }
    rayleigh * 1.01 + sys.lambda()
}

/// Ridge solution of the unconstrained problem via the normal equations.
#[derive(Debug, Clone)]
pub struct UnconstrainedFit {
    pub stencil: Stencil,
    /// Ratio of extreme eigenvalues of `A^T A + lambda I`.
    pub condition_number: f64,
}

pub fn solve_unconstrained(sys: &RegressionSystem) -> Result<UnconstrainedFit> {
    let h = sys.hessian();
    let eig = h.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let w = h
        .lu()
        .solve(sys.atb())
        .ok_or(Error::Singular("normal equations of the unconstrained fit"))?;
    Ok(UnconstrainedFit {
        stencil: Stencil::new(w.iter().copied().collect())?,
        condition_number: if min > 0.0 { max / min } else { f64::INFINITY },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{centered_difference_stencil, operator_matrix, Grid1D};
    use crate::training::{generate_training_set, TrainingConfig, TrainingHeader};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn single_sample_set(grid: &Grid1D, e: Vec<f64>, h: Vec<f64>, de: Vec<f64>, dh: Vec<f64>) -> TrainingSet {
        let mut states = e;
        states.extend(h);
        let mut derivatives = de;
        derivatives.extend(dh);
        TrainingSet {
            header: TrainingHeader {
                n_sims: 1,
                n: grid.n(),
                length: grid.length(),
                m_max: 1,
                seed: 0,
                sigma: 0.0,
            },
            states,
            derivatives,
        }
    }

    #[test]
    fn default_problem_dimensions() {
        let ts = generate_training_set(&TrainingConfig::default()).unwrap();
        let sys = assemble_regression(&ts, 1, DEFAULT_LAMBDA, DEFAULT_BOX).unwrap();
        assert_eq!((sys.rows(), sys.dim()), (25_600, 3));
        let direct = sys.a().tr_mul(sys.a());
        for (x, y) in direct.iter().zip(sys.gram().iter()) {
            assert_relative_eq!(*x, *y, max_relative = 1e-12);
        }
    }

    #[test]
    fn constant_h_gives_flat_rows() {
        let g = Grid1D::new(8, 1.0).unwrap();
        let ts = single_sample_set(&g, vec![0.0; 8], vec![2.5; 8], vec![0.0; 8], vec![0.0; 8]);
        let sys = assemble_regression(&ts, 1, 0.0, 1.0).unwrap();
        for i in 0..8 {
            for j in 0..3 {
                assert_eq!(sys.a()[(i, j)], 2.5);
            }
            assert_eq!(sys.b()[i], 0.0);
        }
    }

    #[test]
    fn single_mode_optimal_stencil_fits_exactly() {
        let g = Grid1D::new(64, 1.0).unwrap();
        let k = 2.0 * PI;
        let e = g.sample(|x| (k * x + 0.4).sin());
        let h = g.sample(|x| 0.7 * (k * x - 1.1).sin());
        let de = g.sample(|x| 0.7 * k * (k * x - 1.1).cos());
        let dh = g.sample(|x| k * (k * x + 0.4).cos());
        let ts = single_sample_set(&g, e, h, de, dh);
        let sys = assemble_regression(&ts, 1, 0.0, 1e3).unwrap();
        // oracle: w_{+-1} = +-k / (2 sin(k dx))
        let c = k / (2.0 * (k * g.dx()).sin());
        let w = DVector::from_vec(vec![-c, 0.0, c]);
        let resid = (sys.a() * &w - sys.b()).amax();
        assert!(resid <= 1e-10, "residual {resid}");
    }

    #[test]
    fn radius_too_large() {
        let g = Grid1D::new(4, 1.0).unwrap();
        let ts = single_sample_set(&g, vec![0.0; 4], vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]);
        assert!(matches!(
            assemble_regression(&ts, 2, 0.0, 1.0),
            Err(Error::StencilTooWide { .. })
        ));
    }

    #[test]
    fn skew_constraints_r1() {
        let cs = build_skew_constraints(1).unwrap();
        let expect = [[0.0, 1.0, 0.0], [1.0, 0.0, 1.0]];
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(cs.c()[(i, j)], expect[i][j]);
            }
        }
        assert_eq!(cs.d().as_slice(), &[0.0, 0.0]);
        let cd = DVector::from_vec(vec![-32.0, 0.0, 32.0]);
        assert_eq!((cs.c() * &cd).as_slice(), &[0.0, 0.0]);
        let sym = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        assert_eq!((cs.c() * &sym).as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn rank_deficient_constraints_rejected() {
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert!(matches!(
            ConstraintSet::new(c, DVector::zeros(2)),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn projection_hand_example() {
        let cs = build_skew_constraints(1).unwrap();
        let z = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let pz = project_affine(&z, &cs).unwrap();
        for (a, b) in pz.iter().zip([-1.0, 0.0, 1.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        let again = project_affine(&pz, &cs).unwrap();
        assert_relative_eq!((again - &pz).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn projection_matches_antisymmetrization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for r in 1..=4 {
            let cs = build_skew_constraints(r).unwrap();
            for _ in 0..20 {
                let z = DVector::from_fn(2 * r + 1, |_, _| rng.gen_range(-10.0..10.0));
                let pz = project_affine(&z, &cs).unwrap();
                assert!(cs.residual(&pz) <= 1e-13);
                // closed form: w_0 = 0, w_{+l} = (z_{+l} - z_{-l}) / 2
                assert!(pz[r].abs() <= 1e-13);
                for l in 1..=r {
                    let anti = 0.5 * (z[r + l] - z[r - l]);
                    assert_relative_eq!(pz[r + l], anti, epsilon = 1e-13);
                    assert_relative_eq!(pz[r - l], -anti, epsilon = 1e-13);
                }
                let d = operator_matrix(&Stencil::new(pz.iter().copied().collect()).unwrap(), 16).unwrap();
                assert!((d.transpose() + &d).amax() <= 1e-13);
            }
        }
    }

    fn random_system(rng: &mut ChaCha8Rng, rows: usize, p: usize, lambda: f64) -> RegressionSystem {
        let a = DMatrix::from_fn(rows, p, |_, _| rng.gen_range(-1.0..1.0));
        let b = DVector::from_fn(rows, |_, _| rng.gen_range(-1.0..1.0));
        RegressionSystem::new(a, b, lambda, 100.0).unwrap()
    }

    #[test]
    fn objective_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sys = random_system(&mut rng, 40, 5, 0.3);
        let (f, g) = objective_and_gradient(&sys, &DVector::zeros(5)).unwrap();
        assert_relative_eq!(f, 0.5 * sys.b().norm_squared(), max_relative = 1e-12);
        let want = -sys.a().tr_mul(sys.b());
        assert_relative_eq!((g - want).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_vanishes_at_normal_equations_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sys = random_system(&mut rng, 60, 5, 0.0);
        let w = sys.gram().clone().lu().solve(sys.atb()).unwrap();
        let (_, g) = objective_and_gradient(&sys, &w).unwrap();
        assert!(g.norm() <= 1e-8 * sys.atb().norm());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sys = random_system(&mut rng, 50, 5, 1e-2);
        for _ in 0..5 {
            let w = DVector::from_fn(5, |_, _| rng.gen_range(-2.0..2.0));
            let (_, g) = objective_and_gradient(&sys, &w).unwrap();
            let h = 1e-6;
            let fd = DVector::from_fn(5, |j, _| {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += h;
                wm[j] -= h;
                (sys.objective_direct(&wp) - sys.objective_direct(&wm)) / (2.0 * h)
            });
            assert!((&fd - &g).norm() / g.norm() <= 1e-5);
        }
    }

    #[test]
    fn stable_objective_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sys = random_system(&mut rng, 30, 3, 1e-3);
        let w = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
        assert_relative_eq!(sys.objective(&w), sys.objective_direct(&w), max_relative = 1e-12);
    }

    #[test]
    fn lipschitz_identity_and_diag() {
        let sys = RegressionSystem::new(DMatrix::identity(3, 3), DVector::zeros(3), 0.0, 1.0).unwrap();
        assert_relative_eq!(lipschitz_estimate(&sys), 1.01, epsilon = 1e-12);
        let a = DMatrix::from_diagonal_element(4, 4, 3.0);
        let sys = RegressionSystem::new(a, DVector::zeros(4), 1.0, 1.0).unwrap();
        assert_relative_eq!(lipschitz_estimate(&sys), 9.0 * 1.01 + 1.0, epsilon = 1e-10);
    }

    #[test]
    fn lipschitz_bounds_dense_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let sys = random_system(&mut rng, 20, 5, 0.1);
            let top = sys.gram().clone().symmetric_eigen().eigenvalues.max();
            assert!(lipschitz_estimate(&sys) >= top + 0.1);
        }
        let ts = generate_training_set(&TrainingConfig::default()).unwrap();
        let sys = assemble_regression(&ts, 3, DEFAULT_LAMBDA, DEFAULT_BOX).unwrap();
        let top = sys.gram().clone().symmetric_eigen().eigenvalues.max();
        assert!(lipschitz_estimate(&sys) >= top + DEFAULT_LAMBDA);
    }

    #[test]
    fn unconstrained_fit_close_to_centered_difference() {
        let ts = generate_training_set(&TrainingConfig::default()).unwrap();
        let sys = assemble_regression(&ts, 1, DEFAULT_LAMBDA, DEFAULT_BOX).unwrap();
        let fit = solve_unconstrained(&sys).unwrap();
        let cd = centered_difference_stencil(&ts.grid().unwrap());
        assert!(fit.stencil.distance(&cd).unwrap() / cd.l2_norm() < 0.05);
        assert!(fit.condition_number > 1.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(RegressionSystem::new(DMatrix::identity(2, 2), DVector::zeros(2), -1.0, 1.0).is_err());
        assert!(RegressionSystem::new(DMatrix::identity(2, 2), DVector::zeros(2), 0.0, 0.0).is_err());
        assert!(RegressionSystem::new(DMatrix::identity(2, 2), DVector::zeros(3), 0.0, 1.0).is_err());
    }
}
