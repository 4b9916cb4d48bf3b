//! Rank-one decoupling and block diagonalization of the assembled operator.
//!
//! The full operator couples the zero mode to every other mode through its
//! first row and first column. A similarity transformation built from two
//! quadratic fixed-point solves removes that coupling, leaving a scalar
//! eigenvalue together with a complement acting on the zero-average grid.
//! The complement is then conjugated toward block-diagonal form by an
//! iterative homological construction, after which its spectrum is read off
//! from `2x2` blocks that pair the modes `+j` and `-j`.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{inner_product, FourierFunction, ShearProfile};
use crate::linalg::{eigenvalues_2x2, infinity_norm, lu_inverse, lu_solve_matrix, matrix_2norm};
use crate::operators::{
    assemble, from_reduced_vector, full_index, mode_of_full, mode_of_reduced, reduced_index,
    to_reduced_vector, OperatorKind,
};

/// Relative stopping tolerance of the quadratic fixed-point iteration.
pub const FIXED_POINT_TOL: f64 = 1e-13;

/// Iteration budget of the quadratic fixed-point solver.
pub const MAX_FIXED_POINT_ITER: usize = 100;

/// Largest admissible contraction constant; above this the perturbative
/// constructions are refused rather than iterated outside their regime.
pub const CONTRACTION_LIMIT: f64 = 0.9;

/// Smallest admissible magnitude of the pairing denominator `1 - <Y, X>`.
pub const TRANSFORMATION_FLOOR: f64 = 1e-6;

/// Decay index used by default for block-operator norms.
pub const DEFAULT_DECAY_INDEX: f64 = 1.0;

/// Solves `u = u0 + Q(u, u)` for a bilinear map `Q` by direct iteration.
///
/// `c` must bound `||Q(f, g)|| <= c ||f|| ||g||`; the iteration is only run
/// when the contraction constant `4 c ||u0||` stays below
/// [`CONTRACTION_LIMIT`], and the returned point satisfies
/// `||u - u0 - Q(u, u)|| <= tol * max(1, ||u||)`.
pub fn quadratic_fixed_point<Q>(
    u0: &DVector<Complex64>,
    q: Q,
    c: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<Complex64>>
where
    Q: Fn(&DVector<Complex64>, &DVector<Complex64>) -> DVector<Complex64>,
{
    if u0.is_empty() {
        return Err(Error::Domain("fixed-point seed is empty".into()));
    }
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!(
            "quadratic bound must be finite and nonnegative, got {}",
            c
        )));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::Domain(format!(
            "tolerance {} and iteration budget {} must be positive",
            tol, max_iter
        )));
    }
    let kappa = 4.0 * c * u0.norm();
    if !kappa.is_finite() || kappa >= CONTRACTION_LIMIT {
        return Err(Error::Regime(format!(
            "fixed-point contraction constant {:.3e} is not below {}",
            kappa, CONTRACTION_LIMIT
        )));
    }
    let mut u = u0.clone();
    for k in 1..=max_iter {
        let next = u0 + q(&u, &u);
        if !next.norm().is_finite() {
            return Err(Error::NonConvergence {
                iterations: k,
                defect: f64::INFINITY,
            });
        }
        let change = (&next - &u).norm();
        u = next;
        let scale = u.norm().max(1.0);
        if change <= tol * scale {
            let defect = (&u - u0 - q(&u, &u)).norm();
            if defect <= tol * scale {
                return Ok(u);
            }
        }
    }
    let defect = (&u - u0 - q(&u, &u)).norm();
    Err(Error::NonConvergence {
        iterations: max_iter,
        defect,
    })
}

/// Coefficients of `(d_yy - eps^2)^{-1} U` on the zero-average grid.
fn smoothed_profile(u: &ShearProfile, eps: f64, max_mode: usize) -> DVector<Complex64> {
    let e2 = eps * eps;
    DVector::from_fn(2 * max_mode, |p, _| {
        let j = mode_of_reduced(p, max_mode);
        let jj = (j * j) as f64;
        u.function().coeff(j) * (-1.0 / (jj + e2))
    })
}

/// Coefficients of `(i/eps) U'' + i eps U`, the forcing carried by the first
/// column of the assembled operator (with its sign flipped).
fn column_forcing(u: &ShearProfile, eps: f64, max_mode: usize) -> DVector<Complex64> {
    DVector::from_fn(2 * max_mode, |p, _| {
        let j = mode_of_reduced(p, max_mode);
        let jj = (j * j) as f64;
        u.function().coeff(j) * Complex64::new(0.0, eps - jj / eps)
    })
}

/// Coefficients of `-i eps^3 (d_yy - eps^2)^{-1} U`, the function whose
/// pairing functional is the first row of the assembled operator.
fn first_row_profile(u: &ShearProfile, eps: f64, max_mode: usize) -> DVector<Complex64> {
    smoothed_profile(u, eps, max_mode) * Complex64::new(0.0, -eps.powi(3))
}

/// Zero-average function `Y` that empties the first column of the conjugated
/// operator.
///
/// `Y` solves `A Y = -g + eps^3 <Y, i w> Y` with `A` the reduced operator,
/// `g = (i/eps) U'' + i eps U` and `w = (d_yy - eps^2)^{-1} U`; to leading
/// order `Y ~ -i U / (nu eps)`.
pub fn solve_vertical_y(
    u: &ShearProfile,
    nu: f64,
    eps: f64,
    max_mode: usize,
) -> Result<FourierFunction> {
    let a = assemble(OperatorKind::Reduced, u, nu, eps, max_mode)?;
    let a_inv = lu_inverse(a.entries())?;
    let bound = matrix_2norm(&a_inv);
    let w = smoothed_profile(u, eps, max_mode);
    let iw = w.map(|z| z * Complex64::new(0.0, 1.0));
    let forcing = column_forcing(u, eps, max_mode);
    let u0 = -(&a_inv * &forcing);
    let e3 = eps.powi(3);
    let c = e3.abs() * w.norm() * bound;
    let q = |f: &DVector<Complex64>, g: &DVector<Complex64>| {
        let coef = Complex64::new(e3, 0.0) * iw.dotc(f);
        (&a_inv * g) * coef
    };
    let y = quadratic_fixed_point(&u0, q, c, FIXED_POINT_TOL, MAX_FIXED_POINT_ITER)?;
    Ok(from_reduced_vector(&y, max_mode))
}

/// Zero-average function `X` that empties the first row of the conjugated
/// operator.
///
/// `X` solves `A* X = -b - <X, g> X` with `A*` the adjoint reduced operator,
/// `b = -i eps^3 (d_yy - eps^2)^{-1} U` and `g = (i/eps) U'' + i eps U`; to
/// leading order `X ~ i eps^3 [A*]^{-1} (d_yy - eps^2)^{-1} U`.
pub fn solve_horizontal_x(
    u: &ShearProfile,
    nu: f64,
    eps: f64,
    max_mode: usize,
) -> Result<FourierFunction> {
    let astar = assemble(OperatorKind::ReducedAdjoint, u, nu, eps, max_mode)?;
    let astar_inv = lu_inverse(astar.entries())?;
    let bound = matrix_2norm(&astar_inv);
    let w = smoothed_profile(u, eps, max_mode);
    let forcing = column_forcing(u, eps, max_mode);
    let u0 = (&astar_inv * &w) * Complex64::new(0.0, eps.powi(3));
    let c = forcing.norm() * bound;
    let q = |f: &DVector<Complex64>, g: &DVector<Complex64>| {
        let coef = -forcing.dotc(f);
        (&astar_inv * g) * coef
    };
    let x = quadratic_fixed_point(&u0, q, c, FIXED_POINT_TOL, MAX_FIXED_POINT_ITER)?;
    Ok(from_reduced_vector(&x, max_mode))
}

/// Outcome of decoupling the zero mode from the zero-average complement.
#[derive(Debug, Clone)]
pub struct DecoupledForm {
    /// Scalar eigenvalue carried by the decoupled zero mode.
    pub lambda0: Complex64,
    /// Row generator of the transformation.
    pub x: FourierFunction,
    /// Column generator of the transformation.
    pub y: FourierFunction,
    /// Pairing `<Y, X>` between the generators.
    pub pairing: Complex64,
    /// Norm of the residual first-row forcing after conjugation.
    pub residual_b: f64,
    /// Norm of the residual first-column forcing after conjugation.
    pub residual_c: f64,
    /// Complement acting on the zero-average grid.
    pub l1: DMatrix<Complex64>,
    /// Viscosity of the decoupled operator.
    pub nu: f64,
    /// Wavenumber parameter of the decoupled operator.
    pub eps: f64,
    /// Grid cutoff of the decoupled operator.
    pub max_mode: usize,
}

impl DecoupledForm {
    /// Denominator `1 - <Y, X>` of the scalar block.
    pub fn denominator(&self) -> Complex64 {
        Complex64::new(1.0, 0.0) - self.pairing
    }

    /// Conjugating matrix on the full grid.
    pub fn transformation(&self) -> Result<DMatrix<Complex64>> {
        transformation_matrix(&self.x, &self.y, self.max_mode)
    }

    /// Inverse of the conjugating matrix on the full grid.
    pub fn inverse_transformation(&self) -> Result<DMatrix<Complex64>> {
        transformation_inverse(&self.x, &self.y, self.max_mode)
    }

    /// Unstable eigenvalue and eigenfunction, normalized so that the
    /// eigenfunction approaches `U - i nu eps` in the perturbative limit.
    pub fn unstable_eigenpair(&self) -> (Complex64, FourierFunction) {
        let scale = Complex64::new(0.0, -self.nu * self.eps) / self.denominator();
        let mut v = FourierFunction::zeros(self.max_mode);
        v.set_coeff(0, scale);
        for j in 1..=(self.max_mode as i64) {
            v.set_coeff(j, -scale * self.y.coeff(j));
            v.set_coeff(-j, -scale * self.y.coeff(-j));
        }
        (self.lambda0, v)
    }
}

/// Decouples the zero mode of the assembled operator around the profile `u`.
///
/// Solves for both generators, forms the scalar eigenvalue
/// `lambda0 = a / (1 - <Y, X>)` and the complement
/// `L1 = (L# + A X^T + Y b^T)(Id + Y X^T / (1 - <Y, X>))`, and reports the
/// residual norms of the row and column forcings that the generators were
/// built to annihilate.
pub fn decouple(u: &ShearProfile, nu: f64, eps: f64, max_mode: usize) -> Result<DecoupledForm> {
    let x = solve_horizontal_x(u, nu, eps, max_mode)?;
    let y = solve_vertical_y(u, nu, eps, max_mode)?;
    let xv = to_reduced_vector(&x, max_mode);
    let yv = to_reduced_vector(&y, max_mode);
    let pairing = xv.dotc(&yv);
    let denom = Complex64::new(1.0, 0.0) - pairing;
    if denom.norm() < TRANSFORMATION_FLOOR {
        return Err(Error::SingularUpdate {
            defect: denom.norm(),
        });
    }
    let lsharp = assemble(OperatorKind::ReducedShifted, u, nu, eps, max_mode)?;
    let w = smoothed_profile(u, eps, max_mode);
    let iw = w.map(|z| z * Complex64::new(0.0, 1.0));
    let forcing = column_forcing(u, eps, max_mode);
    let brow = first_row_profile(u, eps, max_mode);
    let shift = Complex64::new(nu * eps * eps, 0.0);
    let e3 = Complex64::new(eps.powi(3), 0.0);
    let lsharp_y = lsharp.entries() * &yv;
    let a_y = &lsharp_y + &yv * shift;
    let astar_x = lsharp.entries().adjoint() * &xv + &xv * shift;
    let y_iw = iw.dotc(&yv);
    let scalar = -shift - xv.dotc(&forcing) + e3 * y_iw - xv.dotc(&lsharp_y);
    let lambda0 = scalar / denom;
    let b_res = &brow + &astar_x + &xv * xv.dotc(&forcing);
    let c_res = -&forcing - &a_y + &yv * (e3 * y_iw);
    let dim = 2 * max_mode;
    let a_col = &yv * shift + &forcing;
    let middle = DMatrix::identity(dim, dim) + (&yv * xv.adjoint()) / denom;
    let l1 = (lsharp.entries() + &a_col * xv.adjoint() + &yv * brow.adjoint()) * middle;
    Ok(DecoupledForm {
        lambda0,
        x,
        y,
        pairing,
        residual_b: b_res.norm(),
        residual_c: c_res.norm(),
        l1,
        nu,
        eps,
        max_mode,
    })
}

fn check_generators(x: &FourierFunction, y: &FourierFunction, max_mode: usize) -> Result<()> {
    for (label, f) in [("row", x), ("column", y)] {
        if !f.has_zero_average(1e-12) {
            return Err(Error::Domain(format!(
                "{} generator must have zero average",
                label
            )));
        }
        for j in (max_mode as i64 + 1)..=(f.max_mode() as i64) {
            if f.coeff(j).norm() > 0.0 || f.coeff(-j).norm() > 0.0 {
                return Err(Error::Domain(format!(
                    "{} generator carries modes beyond the grid cutoff {}",
                    label, max_mode
                )));
            }
        }
    }
    Ok(())
}

/// Full-grid matrix of the decoupling transformation: the identity with the
/// first row extended by the pairing functional of `x` and the first column
/// extended by `y`.
pub fn transformation_matrix(
    x: &FourierFunction,
    y: &FourierFunction,
    max_mode: usize,
) -> Result<DMatrix<Complex64>> {
    check_generators(x, y, max_mode)?;
    let dim = 2 * max_mode + 1;
    let mid = full_index(0, max_mode);
    let mut t = DMatrix::identity(dim, dim);
    for p in 0..dim {
        let j = mode_of_full(p, max_mode);
        if j == 0 {
            continue;
        }
        t[(mid, p)] = x.coeff(j).conj();
        t[(p, mid)] = y.coeff(j);
    }
    Ok(t)
}

/// Exact inverse of [`transformation_matrix`], valid while the pairing
/// denominator `1 - <Y, X>` stays away from zero.
pub fn transformation_inverse(
    x: &FourierFunction,
    y: &FourierFunction,
    max_mode: usize,
) -> Result<DMatrix<Complex64>> {
    check_generators(x, y, max_mode)?;
    let pairing = inner_product(y, x);
    let denom = Complex64::new(1.0, 0.0) - pairing;
    if denom.norm() < TRANSFORMATION_FLOOR {
        return Err(Error::SingularUpdate {
            defect: denom.norm(),
        });
    }
    let dim = 2 * max_mode + 1;
    let mid = full_index(0, max_mode);
    let mut left = DMatrix::identity(dim, dim);
    let mut right = DMatrix::identity(dim, dim);
    right[(mid, mid)] = Complex64::new(1.0, 0.0) / denom;
    for p in 0..dim {
        let j = mode_of_full(p, max_mode);
        if j == 0 {
            continue;
        }
        left[(mid, p)] = -x.coeff(j).conj();
        left[(p, mid)] = -y.coeff(j);
        for q in 0..dim {
            let jp = mode_of_full(q, max_mode);
            if jp == 0 {
                continue;
            }
            right[(p, q)] += y.coeff(j) * x.coeff(jp).conj() / denom;
        }
    }
    Ok(left * right)
}

/// Matrix on the zero-average grid equipped with the block decay norm
/// `sup_{j'} (sum_j <j - j'>^{2s} ||P_j T P_{j'}||_HS^2)^{1/2}`, where
/// `P_j` keeps the modes `+j` and `-j`.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    entries: DMatrix<Complex64>,
    max_mode: usize,
    s: f64,
    decay_norm: f64,
}

fn decay_norm_of(entries: &DMatrix<Complex64>, max_mode: usize, s: f64) -> f64 {
    let mut sup = 0.0f64;
    for jp in 1..=max_mode {
        let cp = reduced_index(jp as i64, max_mode);
        let cm = reduced_index(-(jp as i64), max_mode);
        let mut sum = 0.0;
        for j in 1..=max_mode {
            let rp = reduced_index(j as i64, max_mode);
            let rm = reduced_index(-(j as i64), max_mode);
            let hs = entries[(rp, cp)].norm_sqr()
                + entries[(rp, cm)].norm_sqr()
                + entries[(rm, cp)].norm_sqr()
                + entries[(rm, cm)].norm_sqr();
            let d = j as f64 - jp as f64;
            sum += (1.0 + d * d).powf(s) * hs;
        }
        sup = sup.max(sum.sqrt());
    }
    sup
}

impl BlockOperator {
    /// Wraps a zero-average-grid matrix and computes its decay norm.
    pub fn new(entries: DMatrix<Complex64>, max_mode: usize, s: f64) -> Result<Self> {
        if max_mode == 0 {
            return Err(Error::Domain("block operator needs max_mode >= 1".into()));
        }
        if entries.nrows() != 2 * max_mode || entries.ncols() != 2 * max_mode {
            return Err(Error::Domain(format!(
                "entry matrix is {}x{} but the zero-average grid needs {}x{}",
                entries.nrows(),
                entries.ncols(),
                2 * max_mode,
                2 * max_mode
            )));
        }
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::Domain(format!(
                "decay index must be finite and nonnegative, got {}",
                s
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("entry matrix has nonfinite values".into()));
        }
        let decay_norm = decay_norm_of(&entries, max_mode, s);
        Ok(Self {
            entries,
            max_mode,
            s,
            decay_norm,
        })
    }

    /// Zero operator on the grid `1 <= |j| <= max_mode`.
    pub fn zeros(max_mode: usize, s: f64) -> Self {
        Self::new(DMatrix::zeros(2 * max_mode, 2 * max_mode), max_mode, s)
            .expect("zero matrix is a valid block operator")
    }

    /// Identity operator on the grid `1 <= |j| <= max_mode`.
    pub fn identity(max_mode: usize, s: f64) -> Self {
        Self::new(DMatrix::identity(2 * max_mode, 2 * max_mode), max_mode, s)
            .expect("identity matrix is a valid block operator")
    }

    /// Underlying matrix.
    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// Grid cutoff.
    pub fn max_mode(&self) -> usize {
        self.max_mode
    }

    /// Decay index of the stored norm.
    pub fn s(&self) -> f64 {
        self.s
    }

    /// Cached decay norm.
    pub fn decay_norm(&self) -> f64 {
        self.decay_norm
    }

    /// The `2x2` block coupling modes `(+j, -j)` to `(+jp, -jp)`.
    pub fn block(&self, j: usize, jp: usize) -> Matrix2<Complex64> {
        let n = self.max_mode;
        assert!(
            (1..=n).contains(&j) && (1..=n).contains(&jp),
            "block indices must lie in 1..=max_mode"
        );
        let rp = reduced_index(j as i64, n);
        let rm = reduced_index(-(j as i64), n);
        let cp = reduced_index(jp as i64, n);
        let cm = reduced_index(-(jp as i64), n);
        Matrix2::new(
            self.entries[(rp, cp)],
            self.entries[(rp, cm)],
            self.entries[(rm, cp)],
            self.entries[(rm, cm)],
        )
    }

    /// Projection onto the diagonal blocks `j = jp`.
    pub fn block_diagonal_part(&self) -> Self {
        let n = self.max_mode;
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for j in 1..=n {
            let rp = reduced_index(j as i64, n);
            let rm = reduced_index(-(j as i64), n);
            for &r in &[rp, rm] {
                for &c in &[rp, rm] {
                    m[(r, c)] = self.entries[(r, c)];
                }
            }
        }
        Self::new(m, n, self.s).expect("projection preserves the grid shape")
    }

    /// Projection onto the blocks `j != jp`.
    pub fn off_diagonal_part(&self) -> Self {
        Self::new(
            &self.entries - self.block_diagonal_part().entries(),
            self.max_mode,
            self.s,
        )
        .expect("projection preserves the grid shape")
    }

    /// True when every diagonal block entry has magnitude at most `tol`.
    pub fn is_off_diagonal(&self, tol: f64) -> bool {
        (1..=self.max_mode).all(|j| self.block(j, j).iter().all(|z| z.norm() <= tol))
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.max_mode != other.max_mode || self.s != other.s {
            return Err(Error::Domain(format!(
                "block operators disagree on grid or decay index: ({}, {}) vs ({}, {})",
                self.max_mode, self.s, other.max_mode, other.s
            )));
        }
        Ok(())
    }

    /// Operator composition `self * other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Self::new(&self.entries * &other.entries, self.max_mode, self.s)
    }

    /// Entrywise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Self::new(&self.entries + &other.entries, self.max_mode, self.s)
    }

    /// Entrywise difference.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Self::new(&self.entries - &other.entries, self.max_mode, self.s)
    }

    /// Scalar multiple.
    pub fn scale(&self, a: Complex64) -> Result<Self> {
        Self::new(&self.entries * a, self.max_mode, self.s)
    }

    /// Contribution of the widest stored band `|j - jp| = max_mode - 1` to
    /// the decay norm, a proxy for what the truncation discards.
    pub fn tail_weight(&self) -> f64 {
        let n = self.max_mode;
        if n == 1 {
            return 0.0;
        }
        let d = (n - 1) as f64;
        let w = (1.0 + d * d).powf(self.s);
        let mut sup = 0.0f64;
        for (j, jp) in [(n, 1), (1, n)] {
            let hs: f64 = self.block(j, jp).iter().map(|z| z.norm_sqr()).sum();
            sup = sup.max((w * hs).sqrt());
        }
        sup
    }

    /// Writes the per-pair block table as CSV with header
    /// `j,jp,weight,block_hs`, rows ordered by `j` and then `jp`.
    pub fn write_block_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "j,jp,weight,block_hs")?;
        for j in 1..=self.max_mode {
            for jp in 1..=self.max_mode {
                let d = j as f64 - jp as f64;
                let weight = (1.0 + d * d).powf(self.s);
                let hs: f64 = self.block(j, jp).iter().map(|z| z.norm_sqr()).sum();
                writeln!(w, "{},{},{:.17e},{:.17e}", j, jp, weight, hs.sqrt())?;
            }
        }
        Ok(())
    }
}

/// Decay norm of a raw zero-average-grid matrix.
pub fn block_decay_norm(entries: &DMatrix<Complex64>, max_mode: usize, s: f64) -> Result<f64> {
    Ok(BlockOperator::new(entries.clone(), max_mode, s)?.decay_norm())
}

/// Remainder `Q = L1 - nu d_yy` of the decoupled complement: the complement
/// with the diffusive diagonal `-nu j^2` removed entrywise.
pub fn assemble_q_remainder(form: &DecoupledForm, s: f64) -> Result<BlockOperator> {
    let n = form.max_mode;
    let dim = 2 * n;
    if form.l1.nrows() != dim || form.l1.ncols() != dim {
        return Err(Error::Domain(format!(
            "complement matrix is {}x{} but max_mode {} needs {}x{}",
            form.l1.nrows(),
            form.l1.ncols(),
            n,
            dim,
            dim
        )));
    }
    let mut q = form.l1.clone();
    for p in 0..dim {
        let j = mode_of_reduced(p, n);
        q[(p, p)] += Complex64::new(form.nu * ((j * j) as f64), 0.0);
    }
    BlockOperator::new(q, n, s)
}

/// Solves the commutator equation `[nu d_yy, Psi] = -R` blockwise for an
/// off-diagonal right-hand side, dividing the `(j, jp)` block by
/// `nu (j^2 - jp^2)`; the solution gains one order of decay,
/// `|Psi|_{s+1} <= (sqrt(2)/3) |R|_s / nu`.
pub fn homological_solve(r: &BlockOperator, nu: f64) -> Result<BlockOperator> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Domain(format!(
            "viscosity must be positive, got {}",
            nu
        )));
    }
    let n = r.max_mode();
    let scale = infinity_norm(r.entries()).max(1.0);
    for j in 1..=n {
        let worst = r
            .block(j, j)
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        if worst > 1e-12 * scale {
            return Err(Error::Domain(format!(
                "diagonal block {} is nonzero; the commutator only reaches off-diagonal blocks",
                j
            )));
        }
    }
    let mut psi = DMatrix::zeros(2 * n, 2 * n);
    for j in 1..=n {
        let rp = reduced_index(j as i64, n);
        let rm = reduced_index(-(j as i64), n);
        for jp in 1..=n {
            if j == jp {
                continue;
            }
            let cp = reduced_index(jp as i64, n);
            let cm = reduced_index(-(jp as i64), n);
            let divisor = nu * (((j * j) as f64) - ((jp * jp) as f64));
            for (row, col) in [(rp, cp), (rp, cm), (rm, cp), (rm, cm)] {
                psi[(row, col)] = r.entries()[(row, col)] / divisor;
            }
        }
    }
    BlockOperator::new(psi, n, r.s())
}

/// Outcome of conjugating the complement to block-diagonal form.
#[derive(Debug, Clone)]
pub struct BlockDiagonalization {
    /// Off-diagonal generator of the conjugation `Id + Psi`.
    pub psi: BlockOperator,
    /// Block-diagonal part retained alongside the diffusive diagonal.
    pub z: BlockOperator,
    /// Conjugated complement `(Id + Psi)^{-1} L1 (Id + Psi)`.
    pub n_final: DMatrix<Complex64>,
    /// Decay norm of the off-diagonal part left in `n_final`.
    pub off_diagonal_residual: f64,
    /// Fixed-point iterations performed.
    pub iterations: usize,
}

impl BlockDiagonalization {
    /// Eigenvalue pair of each diagonal `2x2` block of the conjugated
    /// complement, indexed by the mode magnitude `j`.
    pub fn block_eigenvalues(&self) -> Vec<(usize, [Complex64; 2])> {
        let n = self.psi.max_mode();
        (1..=n)
            .map(|j| {
                let rp = reduced_index(j as i64, n);
                let rm = reduced_index(-(j as i64), n);
                let vals = eigenvalues_2x2(
                    self.n_final[(rp, rp)],
                    self.n_final[(rp, rm)],
                    self.n_final[(rm, rp)],
                    self.n_final[(rm, rm)],
                );
                (j, vals)
            })
            .collect()
    }
}

/// Conjugates the complement `L1 = nu d_yy + Q` toward block-diagonal form.
///
/// Iterates `Psi_{k+1} = T(P_od Q + P_od(Q Psi_k) - Psi_k Z_k)` with
/// `Z_k = P_bd(Q + Q Psi_k)` and `T` the blockwise commutator inverse, then
/// forms `(Id + Psi)^{-1} L1 (Id + Psi)` and reports how much off-diagonal
/// content is left. Refused when the contraction constant
/// `(sqrt(2)/3) |Q|_s / nu` reaches [`CONTRACTION_LIMIT`].
pub fn block_diagonalize(
    l1: &DMatrix<Complex64>,
    nu: f64,
    max_mode: usize,
    s: f64,
    tol: f64,
    max_iter: usize,
) -> Result<BlockDiagonalization> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Domain(format!(
            "viscosity must be positive, got {}",
            nu
        )));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::Domain(format!(
            "tolerance {} and iteration budget {} must be positive",
            tol, max_iter
        )));
    }
    let dim = 2 * max_mode;
    if max_mode == 0 || l1.nrows() != dim || l1.ncols() != dim {
        return Err(Error::Domain(format!(
            "complement matrix is {}x{} but max_mode {} needs {}x{}",
            l1.nrows(),
            l1.ncols(),
            max_mode,
            dim,
            dim
        )));
    }
    let mut q_mat = l1.clone();
    for p in 0..dim {
        let j = mode_of_reduced(p, max_mode);
        q_mat[(p, p)] += Complex64::new(nu * ((j * j) as f64), 0.0);
    }
    let q_op = BlockOperator::new(q_mat, max_mode, s)?;
    let kappa = 2.0f64.sqrt() / 3.0 * q_op.decay_norm() / nu;
    if !kappa.is_finite() || kappa >= CONTRACTION_LIMIT {
        return Err(Error::Regime(format!(
            "homological contraction constant {:.3e} is not below {}",
            kappa, CONTRACTION_LIMIT
        )));
    }
    let q_od = q_op.off_diagonal_part();
    let mut psi = BlockOperator::zeros(max_mode, s);
    let mut prev_change = f64::INFINITY;
    let mut growing = 0usize;
    let mut iterations = 0usize;
    loop {
        iterations += 1;
        let q_psi = q_op.compose(&psi)?;
        let z = q_op.add(&q_psi)?.block_diagonal_part();
        let rhs = q_od
            .add(&q_psi.off_diagonal_part())?
            .sub(&psi.compose(&z)?)?;
        let next = homological_solve(&rhs, nu)?;
        let change = next.sub(&psi)?.decay_norm();
        psi = next;
        if !change.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                defect: change,
            });
        }
        if change <= tol * psi.decay_norm().max(1.0) {
            break;
        }
        if change >= prev_change {
            growing += 1;
            if growing >= 2 {
                return Err(Error::NonConvergence {
                    iterations,
                    defect: change,
                });
            }
        } else {
            growing = 0;
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence {
                iterations,
                defect: change,
            });
        }
        prev_change = change;
    }
    let q_psi = q_op.compose(&psi)?;
    let z = q_op.add(&q_psi)?.block_diagonal_part();
    let id = DMatrix::identity(dim, dim);
    let id_psi = &id + psi.entries();
    let n_final = lu_solve_matrix(&id_psi, &(l1 * &id_psi))?;
    let off_diagonal_residual = BlockOperator::new(n_final.clone(), max_mode, s)?
        .off_diagonal_part()
        .decay_norm();
    Ok(BlockDiagonalization {
        psi,
        z,
        n_final,
        off_diagonal_residual,
        iterations,
    })
}
