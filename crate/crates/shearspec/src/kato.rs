//! Spectral projections by contour quadrature and eigenpairs on their ranges.
//!
//! Each spectral block of the linearized operator is isolated by a circular
//! contour in the rescaled variable `zeta` (the spectral parameter divided by
//! `nu`). The projection onto the block is the trapezoidal quadrature of
//! `-(nu/2*pi*i) * integral of (Op - nu*zeta)^{-1} d zeta`. For the dominant
//! operator the resolvent has a closed form, a diagonal plus a rank-one
//! column update; for the full linearized operator each node is a dense
//! solve. The exchange map `Id - P - Q` between the two projections
//! certifies that their ranges are isomorphic, which justifies reading the
//! long-wave eigenpair off the projected shifted profile.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::FourierFunction;
use crate::fourier::ShearProfile;
use crate::linalg::{
    eigenvalues_2x2, frobenius, infinity_norm, matrix_2norm, min_singular_value,
    numerical_rank, orthonormalize_two,
};
use crate::operators::{
    assemble, from_full_vector, full_index, mode_of_full, regime_small, to_full_vector,
    validate, OperatorKind,
};

/// Starting node count for adaptive contour quadrature.
pub const DEFAULT_NODES: usize = 64;

/// Hard cap on contour nodes during adaptive refinement.
pub const MAX_NODES: usize = 1024;

/// Idempotency defect at which adaptive refinement stops.
pub const TARGET_DEFECT: f64 = 1e-13;

/// A quadrature node closer than this to a pole is a collision.
pub const COLLISION_TOL: f64 = 1e-8;

/// Resolvent evaluation closer than this to a pole is refused.
pub const NEAR_POLE_TOL: f64 = 1e-6;

/// Relative singular-value threshold for numerical rank decisions.
pub const RANK_REL_TOL: f64 = 1e-8;

/// Circular contour in the rescaled spectral variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contour {
    /// Center of the circle.
    pub center: Complex64,
    /// Radius of the circle.
    pub radius: f64,
    /// Number of equispaced quadrature nodes.
    pub nodes: usize,
}

impl Contour {
    /// Node `zeta_m = center + radius * exp(2*pi*i*m/nodes)`.
    pub fn node(&self, m: usize) -> Complex64 {
        self.center + Complex64::from_polar(self.radius, self.angle(m))
    }

    /// Unit phase `exp(2*pi*i*m/nodes)` attached to node `m`.
    pub fn phase(&self, m: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.angle(m))
    }

    fn angle(&self, m: usize) -> f64 {
        2.0 * std::f64::consts::PI * m as f64 / self.nodes as f64
    }
}

/// Contour around the block of pair frequency `j`: center `-(j^2+eps^2)`, radius 1/2.
pub fn contour_for_block(j: usize, eps: f64, nodes: usize) -> Contour {
    let jj = (j * j) as f64;
    Contour {
        center: Complex64::new(-(jj + eps * eps), 0.0),
        radius: 0.5,
        nodes,
    }
}

/// Which operator's resolvent feeds the contour quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionSource {
    /// Closed-form resolvent of the dominant operator.
    Dominant,
    /// Dense solves against the full linearized operator.
    Linearized,
}

impl ProjectionSource {
    /// Stable lower-case name for reports.
    pub fn label(self) -> &'static str {
        match self {
            ProjectionSource::Dominant => "dominant",
            ProjectionSource::Linearized => "linearized",
        }
    }
}

/// Solver for `(A + f g*) x = rhs` built from an applicator of `A^{-1}`,
/// using `A^{-1}rhs - A^{-1}f <A^{-1}rhs, g> / (1 + <A^{-1}f, g>)`.
pub fn sherman_morrison_solve<F>(
    apply_a_inv: F,
    f: &DVector<Complex64>,
    g: &DVector<Complex64>,
) -> Result<impl Fn(&DVector<Complex64>) -> DVector<Complex64>>
where
    F: Fn(&DVector<Complex64>) -> DVector<Complex64>,
{
    let ainv_f = apply_a_inv(f);
    let denom = Complex64::new(1.0, 0.0) + g.dotc(&ainv_f);
    let scale = (ainv_f.norm() * g.norm()).max(1.0);
    if denom.norm() < 1e-10 * scale {
        return Err(Error::SingularUpdate {
            defect: denom.norm(),
        });
    }
    let g = g.clone_owned();
    Ok(move |rhs: &DVector<Complex64>| {
        let y = apply_a_inv(rhs);
        let w = g.dotc(&y) / denom;
        &y - &ainv_f * w
    })
}

/// Closed-form resolvent of the dominant operator at one spectral point,
/// stored as a diagonal plus a single update on the average column.
#[derive(Debug, Clone)]
pub struct MResolvent {
    max_mode: usize,
    diag: DVector<Complex64>,
    column: DVector<Complex64>,
}

impl MResolvent {
    /// Grid half-width the resolvent was built on.
    pub fn max_mode(&self) -> usize {
        self.max_mode
    }

    /// Applies the resolvent to a full-grid coefficient vector.
    pub fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let mid = full_index(0, self.max_mode);
        let mut out = self.diag.component_mul(v);
        out += &self.column * v[mid];
        out
    }

    /// Dense matrix form of the resolvent.
    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        let d = self.diag.len();
        let mid = full_index(0, self.max_mode);
        let mut m = DMatrix::zeros(d, d);
        for p in 0..d {
            m[(p, p)] = self.diag[p];
        }
        for p in 0..d {
            m[(p, mid)] += self.column[p];
        }
        m
    }
}

/// Auxiliary profile with coefficients `j^2 U_j / (j^2 + eps^2 + zeta)`;
/// it equals the profile itself at `zeta = -eps^2` and has zero average.
pub fn u_eps_vector(
    u: &ShearProfile,
    eps: f64,
    max_mode: usize,
    zeta: Complex64,
) -> DVector<Complex64> {
    let d = 2 * max_mode + 1;
    DVector::from_fn(d, |p, _| {
        let j = mode_of_full(p, max_mode);
        if j == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let jj = (j * j) as f64;
        u.function().coeff(j) * jj / (Complex64::new(jj + eps * eps, 0.0) + zeta)
    })
}

/// Distance from `zeta` to the nearest rescaled pole `-(j^2+eps^2)` on the grid.
pub fn pole_distance(eps: f64, max_mode: usize, zeta: Complex64) -> f64 {
    (0..=max_mode)
        .map(|j| {
            let jj = (j * j) as f64;
            (zeta + Complex64::new(jj + eps * eps, 0.0)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Closed-form resolvent `(M - nu*zeta)^{-1}` of the dominant operator:
/// `-(1/nu) diag(1/(j^2+eps^2+zeta))` plus the column update
/// `-(i/(nu^2 eps (eps^2+zeta))) u_eps` on the average component.
pub fn resolvent_m(
    u: &ShearProfile,
    nu: f64,
    eps: f64,
    max_mode: usize,
    zeta: Complex64,
) -> Result<MResolvent> {
    resolvent_m_with_tol(u, nu, eps, max_mode, zeta, NEAR_POLE_TOL)
}

fn resolvent_m_with_tol(
    u: &ShearProfile,
    nu: f64,
    eps: f64,
    max_mode: usize,
    zeta: Complex64,
    pole_tol: f64,
) -> Result<MResolvent> {
    validate(u, nu, eps, max_mode)?;
    let dist = pole_distance(eps, max_mode, zeta);
    if dist < pole_tol {
        return Err(Error::NearPole { distance: dist });
    }
    let d = 2 * max_mode + 1;
    let e2 = eps * eps;
    let diag = DVector::from_fn(d, |p, _| {
        let j = mode_of_full(p, max_mode) as f64;
        -Complex64::new(1.0 / nu, 0.0) / (Complex64::new(j * j + e2, 0.0) + zeta)
    });
    let coeff = Complex64::new(0.0, -1.0) / ((Complex64::new(e2, 0.0) + zeta) * (nu * nu * eps));
    let column = u_eps_vector(u, eps, max_mode, zeta) * coeff;
    Ok(MResolvent {
        max_mode,
        diag,
        column,
    })
}

/// Spectral projection obtained from contour quadrature of a resolvent.
#[derive(Debug, Clone)]
pub struct RieszProjection {
    /// Resolvent family the quadrature used.
    pub source: ProjectionSource,
    /// Pair frequency of the enclosed spectral block.
    pub block_index: usize,
    /// Contour actually used, including the final node count.
    pub contour: Contour,
    /// Dense projection matrix on the full grid.
    pub matrix: DMatrix<Complex64>,
    /// Frobenius norm of `P^2 - P`.
    pub idempotency_defect: f64,
    /// Count of singular values above `RANK_REL_TOL` times the largest.
    pub numerical_rank: usize,
    /// Whether the profile satisfies the long-wave smallness condition.
    pub regime_small: bool,
}

fn project_on_contour(
    source: ProjectionSource,
    contour: Contour,
    block_index: usize,
    u: &ShearProfile,
    nu: f64,
    eps: f64,
    max_mode: usize,
) -> Result<RieszProjection> {
    validate(u, nu, eps, max_mode)?;
    if contour.nodes < 8 || contour.nodes % 2 != 0 {
        return Err(Error::Domain(format!(
            "contour nodes must be even and at least 8, got {}",
            contour.nodes
        )));
    }
    let d = 2 * max_mode + 1;
    let linearized = match source {
        ProjectionSource::Linearized => {
            Some(assemble(OperatorKind::Linearized, u, nu, eps, max_mode)?)
        }
        ProjectionSource::Dominant => None,
    };
    let identity = DMatrix::<Complex64>::identity(d, d);
    let mut sum = DMatrix::<Complex64>::zeros(d, d);
    for m in 0..contour.nodes {
        let zeta = contour.node(m);
        let resolvent = match source {
            ProjectionSource::Dominant => {
                resolvent_m_with_tol(u, nu, eps, max_mode, zeta, COLLISION_TOL)
                    .map_err(|e| match e {
                        Error::NearPole { distance } => Error::ContourCollision {
                            node: m,
                            distance,
                        },
                        other => other,
                    })?
                    .to_matrix()
            }
            ProjectionSource::Linearized => {
                let mut a = linearized.as_ref().unwrap().entries().clone();
                for p in 0..d {
                    a[(p, p)] -= nu * zeta;
                }
                let scale = infinity_norm(&a).max(f64::MIN_POSITIVE);
                let lu = a.lu();
                let pivot = lu
                    .u()
                    .diagonal()
                    .iter()
                    .map(|z| z.norm())
                    .fold(f64::INFINITY, f64::min);
                // dense targets have no pole list; the relative pivot is the
                // collision proxy and is what `distance` reports
                if pivot < 1e-9 * scale {
                    return Err(Error::ContourCollision {
                        node: m,
                        distance: pivot / scale,
                    });
                }
                lu.solve(&identity).ok_or_else(|| {
                    Error::Solve(format!("resolvent solve failed at contour node {}", m))
                })?
            }
        };
        sum += resolvent * contour.phase(m);
    }
    let weight = Complex64::new(-nu * contour.radius / contour.nodes as f64, 0.0);
    let p = sum * weight;
    let idempotency_defect = frobenius(&(&p * &p - &p));
    let rank = numerical_rank(&p, RANK_REL_TOL);
    Ok(RieszProjection {
        source,
        block_index,
        contour,
        matrix: p,
        idempotency_defect,
        numerical_rank: rank,
        regime_small: regime_small(u, nu, eps),
    })
}

/// Riesz projection for block `j` with a fixed node count.
pub fn riesz_projection_with_nodes(
    source: ProjectionSource,
    j: usize,
    u: &ShearProfile,
    nu: f64,
    eps: f64,
    max_mode: usize,
    nodes: usize,
) -> Result<RieszProjection> {
    if j >= max_mode {
        return Err(Error::Domain(format!(
            "block index {} outside 0..={}",
            j,
            max_mode - 1
        )));
    }
    project_on_contour(
        source,
        contour_for_block(j, eps, nodes),
        j,
        u,
        nu,
        eps,
        max_mode,
    )
}

/// Riesz projection for block `j`, doubling the node count from
/// `DEFAULT_NODES` until the idempotency defect reaches `TARGET_DEFECT`,
/// stops improving, or `MAX_NODES` is hit. The defect is reported; callers
/// enforce their own tolerance.
pub fn riesz_projection(
    source: ProjectionSource,
    j: usize,
    u: &ShearProfile,
    nu: f64,
    eps: f64,
    max_mode: usize,
) -> Result<RieszProjection> {
    let mut best = riesz_projection_with_nodes(source, j, u, nu, eps, max_mode, DEFAULT_NODES)?;
    let mut nodes = DEFAULT_NODES;
    while best.idempotency_defect > TARGET_DEFECT && nodes < MAX_NODES {
        nodes *= 2;
        let next = riesz_projection_with_nodes(source, j, u, nu, eps, max_mode, nodes)?;
        let stagnated = next.idempotency_defect >= 0.5 * best.idempotency_defect;
        if next.idempotency_defect < best.idempotency_defect {
            best = next;
        }
        if stagnated {
            break;
        }
    }
    Ok(best)
}

/// Conditioning report for the exchange map between the two block projections.
#[derive(Debug, Clone, Copy)]
pub struct KatoDiagnostics {
    /// Pair frequency of the block.
    pub block_index: usize,
    /// Spectral norm of `P - Q`; order one in general, it does not vanish.
    pub difference_norm: f64,
    /// Smallest singular value of the exchange map `Id - P - Q`.
    pub exchange_min_sv: f64,
    /// Smallest singular value of `Id - (P-Q)^2`.
    pub square_min_sv: f64,
}

/// Diagnostics for a pair of projection matrices; refuses a numerically
/// singular exchange map.
pub fn isomorphism_diagnostics(
    p: &DMatrix<Complex64>,
    q: &DMatrix<Complex64>,
    block_index: usize,
) -> Result<KatoDiagnostics> {
    if p.nrows() != p.ncols() || p.shape() != q.shape() {
        return Err(Error::Domain(format!(
            "projection shapes {:?} and {:?} must be equal and square",
            p.shape(),
            q.shape()
        )));
    }
    let d = p.nrows();
    let diff = p - q;
    let difference_norm = matrix_2norm(&diff);
    let identity = DMatrix::<Complex64>::identity(d, d);
    let exchange = &identity - p - q;
    let exchange_min_sv = min_singular_value(&exchange);
    let square = &identity - &diff * &diff;
    let square_min_sv = min_singular_value(&square);
    let floor = exchange_min_sv.min(square_min_sv);
    if floor < 1e-6 {
        return Err(Error::Regime(format!(
            "exchange map for block {} singular to {:.3e}; projections too far apart",
            block_index, floor
        )));
    }
    Ok(KatoDiagnostics {
        block_index,
        difference_norm,
        exchange_min_sv,
        square_min_sv,
    })
}

/// Computes both projections for block `j` and checks the exchange map.
pub fn kato_isomorphism_check(
    j: usize,
    u: &ShearProfile,
    nu: f64,
    eps: f64,
    max_mode: usize,
) -> Result<KatoDiagnostics> {
    let p = riesz_projection(ProjectionSource::Linearized, j, u, nu, eps, max_mode)?;
    let q = riesz_projection(ProjectionSource::Dominant, j, u, nu, eps, max_mode)?;
    isomorphism_diagnostics(&p.matrix, &q.matrix, j)
}

/// Long-wave eigenpair reconstructed from the block-zero projection.
#[derive(Debug, Clone)]
pub struct KatoEigenpair {
    /// Rayleigh-quotient eigenvalue on the projected range.
    pub lambda: Complex64,
    /// Projected shifted profile, unnormalized.
    pub eigenfunction: FourierFunction,
    /// Relative eigenpair residual.
    pub residual: f64,
    /// Distance from the eigenfunction to the shifted profile ansatz.
    pub ansatz_distance: f64,
    /// Exchange-map report for block zero.
    pub diagnostics: KatoDiagnostics,
    /// Idempotency defect of the block-zero projection.
    pub projection_defect: f64,
}

fn eigenpair_on_range(
    l: &DMatrix<Complex64>,
    projection: &DMatrix<Complex64>,
    ansatz: &DVector<Complex64>,
    residual_tol: f64,
) -> Result<(Complex64, DVector<Complex64>, f64, f64)> {
    let v = projection * ansatz;
    if v.norm() < 1e-12 * ansatz.norm().max(1.0) {
        return Err(Error::RankDefect {
            expected: 1,
            got: 0,
        });
    }
    let lv = l * &v;
    let lambda = v.dotc(&lv) / Complex64::new(v.norm_squared(), 0.0);
    let residual = (&lv - &v * lambda).norm() / v.norm();
    if residual > residual_tol {
        return Err(Error::NonEigenvector { residual });
    }
    let distance = (&v - ansatz).norm();
    Ok((lambda, v, residual, distance))
}

/// Eigenpair of the linearized operator on the range of the block-zero
/// projection: `V = P[U - i*nu*eps]` and `lambda = <L V, V>/|V|^2`.
pub fn kato_unstable_eigenpair(
    u: &ShearProfile,
    nu: f64,
    eps: f64,
    max_mode: usize,
    residual_tol: f64,
) -> Result<KatoEigenpair> {
    let p = riesz_projection(ProjectionSource::Linearized, 0, u, nu, eps, max_mode)?;
    let q = riesz_projection(ProjectionSource::Dominant, 0, u, nu, eps, max_mode)?;
    let diagnostics = isomorphism_diagnostics(&p.matrix, &q.matrix, 0)?;
    let l = assemble(OperatorKind::Linearized, u, nu, eps, max_mode)?;
    let mut ansatz = to_full_vector(u.function(), max_mode);
    ansatz[full_index(0, max_mode)] = Complex64::new(0.0, -nu * eps);
    let (lambda, v, residual, ansatz_distance) =
        eigenpair_on_range(l.entries(), &p.matrix, &ansatz, residual_tol)?;
    Ok(KatoEigenpair {
        lambda,
        eigenfunction: from_full_vector(&v, max_mode),
        residual,
        ansatz_distance,
        diagnostics,
        projection_defect: p.idempotency_defect,
    })
}

/// Eigenvalues of the linearized operator on one projected pair block.
#[derive(Debug, Clone)]
pub struct StableBlockEigs {
    /// Pair frequency of the block.
    pub block_index: usize,
    /// Both eigenvalues, sorted by descending real then imaginary part.
    pub eigenvalues: [Complex64; 2],
    /// Distance between the two eigenvalues.
    pub separation: f64,
    /// Whether the pair is numerically a double eigenvalue.
    pub degenerate: bool,
    /// Idempotency defect of the block projection.
    pub idempotency_defect: f64,
    /// Exchange-map report for the block.
    pub diagnostics: KatoDiagnostics,
}

/// Eigenvalues on every pair block `1..=j_max`, each read off the
/// orthonormalized range of its projection as a 2x2 compressed problem.
pub fn stable_block_eigenvalues_kato(
    u: &ShearProfile,
    nu: f64,
    eps: f64,
    max_mode: usize,
    j_max: usize,
) -> Result<Vec<StableBlockEigs>> {
    if j_max < 1 || j_max >= max_mode {
        return Err(Error::Domain(format!(
            "pair frequency cap {} outside 1..={}",
            j_max,
            max_mode - 1
        )));
    }
    let l = assemble(OperatorKind::Linearized, u, nu, eps, max_mode)?;
    let d = 2 * max_mode + 1;
    let mut out = Vec::with_capacity(j_max);
    for j in 0..=j_max {
        let p = riesz_projection(ProjectionSource::Linearized, j, u, nu, eps, max_mode)?;
        let q = riesz_projection(ProjectionSource::Dominant, j, u, nu, eps, max_mode)?;
        let diagnostics = isomorphism_diagnostics(&p.matrix, &q.matrix, j)?;
        if j == 0 {
            continue;
        }
        if p.numerical_rank != 2 {
            return Err(Error::RankDefect {
                expected: 2,
                got: p.numerical_rank,
            });
        }
        let mut e_plus = DVector::<Complex64>::zeros(d);
        e_plus[full_index(j as i64, max_mode)] = Complex64::new(1.0, 0.0);
        let mut e_minus = DVector::<Complex64>::zeros(d);
        e_minus[full_index(-(j as i64), max_mode)] = Complex64::new(1.0, 0.0);
        let (q1, q2) = orthonormalize_two(&(&p.matrix * &e_plus), &(&p.matrix * &e_minus))?;
        let lq1 = l.entries() * &q1;
        let lq2 = l.entries() * &q2;
        let eigenvalues = eigenvalues_2x2(
            q1.dotc(&lq1),
            q1.dotc(&lq2),
            q2.dotc(&lq1),
            q2.dotc(&lq2),
        );
        let separation = (eigenvalues[0] - eigenvalues[1]).norm();
        out.push(StableBlockEigs {
            block_index: j,
            eigenvalues,
            separation,
            degenerate: separation < 1e-10,
            idempotency_defect: p.idempotency_defect,
            diagnostics,
        });
    }
    Ok(out)
}
