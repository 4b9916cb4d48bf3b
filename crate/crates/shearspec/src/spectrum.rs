//! Spectral reports, scaling studies, and cross-validation of the three
//! eigenvalue routes.
//!
//! The dense route decomposes an assembled matrix and tags every eigenvalue
//! with the diffusive pair block it perturbs. The contour route and the
//! rank-one reduction recompute the distinguished eigenpair independently;
//! `cross_validate` demands that all three agree and that the stable blocks
//! match per pair frequency. The module also carries the long-wave growth
//! prediction `(eps^2/nu)(|dy^{-1}U|^2 - nu^2)`, its advection-diffusion
//! counterpart, log-log convergence fits, and physical-space sampling of
//! eigenfunctions.

use std::time::{Duration, Instant};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{inner_product, l2_norm, partial_y_inverse, FourierFunction, ShearProfile};
use crate::kato::kato_unstable_eigenpair;
use crate::kato::stable_block_eigenvalues_kato;
use crate::linalg::{eigen_decompose, eigenpair_residual};
use crate::normal_form::{block_diagonalize, decouple};
use crate::operators::{
    assemble, from_full_vector, from_reduced_vector, regime_small, OperatorKind, OperatorMatrix,
};

/// Relative residual every dense eigenpair must satisfy.
pub const DENSE_RESIDUAL_TOL: f64 = 1e-9;

/// Relative tolerance for agreement between eigenvalue routes.
pub const CROSS_VALIDATION_TOL: f64 = 1e-8;

/// Minimum normalized overlap between independently computed eigenvectors.
pub const ALIGNMENT_FLOOR: f64 = 1.0 - 1e-6;

/// Smallest admissible field grid, per axis.
pub const MIN_FIELD_GRID: usize = 16;

/// Pair blocks compared when cross-validating stable spectra.
pub const STABLE_BLOCKS_COMPARED: usize = 4;

/// Slope threshold for a scaling fit to count as first order.
pub const FIRST_ORDER_SLOPE: f64 = 0.9;

/// Route that produced a spectral report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralMethod {
    /// Dense eigendecomposition of the assembled matrix.
    Dense,
    /// Contour-projection reconstruction.
    Kato,
    /// Rank-one reduction followed by block diagonalization.
    NormalForm,
}

impl SpectralMethod {
    /// Stable lowercase identifier used in reports.
    pub fn label(self) -> &'static str {
        match self {
            SpectralMethod::Dense => "dense",
            SpectralMethod::Kato => "kato",
            SpectralMethod::NormalForm => "normal-form",
        }
    }
}

/// One eigenvalue with its pair-block tag and stability flag.
#[derive(Debug, Clone, Copy)]
pub struct TaggedEigenvalue {
    /// The eigenvalue.
    pub value: Complex64,
    /// Pair frequency whose diffusive level `-nu (j^2 + eps^2)` is nearest.
    pub block: usize,
    /// Whether the real part is positive.
    pub unstable: bool,
}

/// Eigenpair attached to a report when a growing mode exists.
#[derive(Debug, Clone)]
pub struct UnstablePair {
    /// The positive-real-part eigenvalue.
    pub value: Complex64,
    /// Unit right eigenvector.
    pub eigenvector: FourierFunction,
    /// Relative eigenpair residual.
    pub residual: f64,
}

/// Spectrum of one assembled operator with block tags, the distinguished
/// eigenpair, and the long-wave prediction once a profile is attached.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// Route that produced the eigenvalues.
    pub method: SpectralMethod,
    /// Viscosity.
    pub nu: f64,
    /// Aspect ratio.
    pub eps: f64,
    /// Truncation frequency.
    pub max_mode: usize,
    /// Label of the operator the spectrum belongs to.
    pub label: String,
    /// All computed eigenvalues, sorted by descending real part.
    pub eigenvalues: Vec<TaggedEigenvalue>,
    /// Eigenpair of the leading eigenvalue when its real part is positive.
    pub unstable: Option<UnstablePair>,
    /// Predicted long-wave growth rate; zero until a profile is attached.
    pub prediction: Complex64,
    /// Distance from the leading eigenvalue to the prediction; NaN until a
    /// profile is attached.
    pub deviation: f64,
    /// Wall-clock time of the eigendecomposition.
    pub runtime: Duration,
}

impl SpectralReport {
    /// Largest-real-part eigenvalue.
    pub fn leading(&self) -> Option<Complex64> {
        self.eigenvalues.first().map(|t| t.value)
    }

    /// Number of eigenvalues tagged unstable.
    pub fn unstable_count(&self) -> usize {
        self.eigenvalues.iter().filter(|t| t.unstable).count()
    }

    /// Fills the long-wave prediction for `u` and the deviation of the
    /// leading eigenvalue from it.
    pub fn attach_prediction(&mut self, u: &ShearProfile) -> Result<()> {
        self.prediction = asymptotic_prediction(u, self.nu, self.eps)?;
        if let Some(leading) = self.leading() {
            self.deviation = (leading - self.prediction).norm();
        }
        Ok(())
    }
}

fn nearest_block(value: Complex64, nu: f64, eps: f64, max_mode: usize, with_zero: bool) -> usize {
    let lo = if with_zero { 0 } else { 1 };
    let mut best = lo;
    let mut best_gap = f64::INFINITY;
    for j in lo..=max_mode {
        let level = -nu * ((j * j) as f64 + eps * eps);
        let gap = (value - Complex64::new(level, 0.0)).norm();
        if gap < best_gap {
            best_gap = gap;
            best = j;
        }
    }
    best
}

/// Dense spectrum of an assembled operator with right eigenvectors checked
/// pair by pair against `DENSE_RESIDUAL_TOL`.
pub fn dense_spectrum(op: &OperatorMatrix) -> Result<SpectralReport> {
    let start = Instant::now();
    let eig = eigen_decompose(op.entries())?;
    let with_zero = !op.on_zero_average();
    let mut eigenvalues = Vec::with_capacity(eig.values.len());
    for (k, &value) in eig.values.iter().enumerate() {
        let v = eig.vectors.column(k).into_owned();
        let residual = eigenpair_residual(op.entries(), value, &v);
        if !(residual <= DENSE_RESIDUAL_TOL) {
            return Err(Error::NonEigenvector { residual });
        }
        eigenvalues.push(TaggedEigenvalue {
            value,
            block: nearest_block(value, op.nu(), op.eps(), op.max_mode(), with_zero),
            unstable: value.re > 0.0,
        });
    }
    let unstable = if !eig.values.is_empty() && eig.values[0].re > 0.0 {
        let v = eig.vectors.column(0).into_owned();
        let eigenvector = if with_zero {
            from_full_vector(&v, op.max_mode())
        } else {
            from_reduced_vector(&v, op.max_mode())
        };
        Some(UnstablePair {
            value: eig.values[0],
            eigenvector,
            residual: eigenpair_residual(op.entries(), eig.values[0], &v),
        })
    } else {
        None
    };
    Ok(SpectralReport {
        method: SpectralMethod::Dense,
        nu: op.nu(),
        eps: op.eps(),
        max_mode: op.max_mode(),
        label: op.label().to_string(),
        eigenvalues,
        unstable,
        prediction: Complex64::new(0.0, 0.0),
        deviation: f64::NAN,
        runtime: start.elapsed(),
    })
}

/// Predicted long-wave eigenvalue `(eps^2/nu)(|dy^{-1}U|^2 - nu^2)`.
pub fn asymptotic_prediction(u: &ShearProfile, nu: f64, eps: f64) -> Result<Complex64> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Domain(format!(
            "viscosity must be positive and finite, got {}",
            nu
        )));
    }
    if !eps.is_finite() {
        return Err(Error::Domain("aspect ratio must be finite".into()));
    }
    let anti = partial_y_inverse(u.function())?;
    let margin = l2_norm(&anti).powi(2) - nu * nu;
    Ok(Complex64::new(eps * eps / nu * margin, 0.0))
}

/// One resolved point of a scaling study.
#[derive(Debug, Clone, Copy)]
pub struct ScalingPoint {
    /// Aspect ratio of the point.
    pub eps: f64,
    /// Leading eigenvalue at this aspect ratio.
    pub lambda: Complex64,
    /// `|lambda nu / eps^2 - (|dy^{-1}U|^2 - nu^2)|`.
    pub normalized_error: f64,
    /// Whether the long-wave smallness condition held.
    pub in_regime: bool,
}

/// Log-log convergence fit of the normalized eigenvalue error.
#[derive(Debug, Clone)]
pub struct ScalingReport {
    /// Per-aspect-ratio results, in the requested order.
    pub points: Vec<ScalingPoint>,
    /// Least-squares slope of `log error` against `log eps` over the
    /// in-regime points.
    pub slope: f64,
    /// Whether the fitted slope reaches `FIRST_ORDER_SLOPE`.
    pub first_order: bool,
    /// Whether out-of-regime points were excluded from the fit.
    pub partial: bool,
}

/// Least-squares slope of `y` against `x` over the given pairs.
pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for &(x, y) in points {
        cov += (x - mean_x) * (y - mean_y);
        var += (x - mean_x) * (x - mean_x);
    }
    cov / var
}

/// Leading eigenvalues of the full operator across decreasing aspect ratios,
/// fitted against the long-wave prediction in log-log coordinates.
pub fn scaling_study(
    u: &ShearProfile,
    nu: f64,
    eps_list: &[f64],
    max_mode: usize,
) -> Result<ScalingReport> {
    if eps_list.len() < 3 {
        return Err(Error::Domain(format!(
            "scaling study needs at least 3 aspect ratios, got {}",
            eps_list.len()
        )));
    }
    for w in eps_list.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Domain(
                "aspect ratios must be strictly decreasing".into(),
            ));
        }
    }
    let anti = partial_y_inverse(u.function())?;
    let target = l2_norm(&anti).powi(2) - nu * nu;
    let mut points = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let op = assemble(OperatorKind::Linearized, u, nu, eps, max_mode)?;
        let report = dense_spectrum(&op)?;
        let lambda = report
            .leading()
            .ok_or_else(|| Error::Eigensolver("empty spectrum".into()))?;
        let normalized = lambda * Complex64::new(nu / (eps * eps), 0.0)
            - Complex64::new(target, 0.0);
        points.push(ScalingPoint {
            eps,
            lambda,
            normalized_error: normalized.norm(),
            in_regime: regime_small(u, nu, eps),
        });
    }
    let fit: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.in_regime && p.normalized_error > 0.0)
        .map(|p| (p.eps.ln(), p.normalized_error.ln()))
        .collect();
    let partial = points.iter().any(|p| !p.in_regime);
    if fit.len() < 2 {
        return Err(Error::Regime(
            "fewer than two in-regime points, cannot fit a convergence slope".into(),
        ));
    }
    let slope = least_squares_slope(&fit);
    Ok(ScalingReport {
        points,
        slope,
        first_order: slope >= FIRST_ORDER_SLOPE,
        partial,
    })
}

/// Leading eigenvalue of the advection-diffusion comparison operator paired
/// with its dispersion prediction `-(eps^2/nu)(nu^2 + |dy^{-1}U|^2)`.
pub fn taylor_dispersion_eigenvalue(
    u: &ShearProfile,
    nu: f64,
    eps: f64,
    max_mode: usize,
) -> Result<(Complex64, Complex64)> {
    let op = assemble(OperatorKind::TaylorApprox, u, nu, eps, max_mode)?;
    let report = dense_spectrum(&op)?;
    let mu = report
        .leading()
        .ok_or_else(|| Error::Eigensolver("empty spectrum".into()))?;
    let anti = partial_y_inverse(u.function())?;
    let prediction = -eps * eps / nu * (nu * nu + l2_norm(&anti).powi(2));
    Ok((mu, Complex64::new(prediction, 0.0)))
}

/// The long-wave ansatz `U - i nu eps` on the truncation grid.
pub fn shifted_profile(u: &ShearProfile, nu: f64, eps: f64, max_mode: usize) -> FourierFunction {
    let mut f = u.function().pad_to(max_mode);
    f.set_coeff(0, Complex64::new(0.0, -nu * eps));
    f
}

/// Normalized overlap `|<f, g>| / (|f| |g|)` between two functions.
pub fn normalized_overlap(f: &FourierFunction, g: &FourierFunction) -> f64 {
    let nf = l2_norm(f);
    let ng = l2_norm(g);
    if nf == 0.0 || ng == 0.0 {
        return 0.0;
    }
    inner_product(f, g).norm() / (nf * ng)
}

/// Rescales `v` by the least-squares scalar bringing it closest to `target`;
/// the inner product of the result against `target` is real and nonnegative.
pub fn fit_to_target(v: &FourierFunction, target: &FourierFunction) -> Result<FourierFunction> {
    let norm_sq = l2_norm(v).powi(2);
    if norm_sq == 0.0 {
        return Err(Error::Domain("cannot rescale the zero function".into()));
    }
    let scale = inner_product(target, v) / Complex64::new(norm_sq, 0.0);
    Ok(v.scale(scale))
}

fn pair_gap(a: [Complex64; 2], b: [Complex64; 2]) -> f64 {
    let direct = (a[0] - b[0]).norm().max((a[1] - b[1]).norm());
    let swapped = (a[0] - b[1]).norm().max((a[1] - b[0]).norm());
    direct.min(swapped)
}

/// Agreement report between the dense, contour-projection, and rank-one
/// reduction routes at one parameter point.
#[derive(Debug, Clone)]
pub struct CrossValidation {
    /// Dense report with the prediction attached.
    pub dense: SpectralReport,
    /// Leading eigenvalue from the contour projection.
    pub kato_value: Complex64,
    /// Leading eigenvalue from the rank-one reduction.
    pub normal_form_value: Complex64,
    /// `|lambda_dense - lambda_kato|`.
    pub kato_gap: f64,
    /// `|lambda_dense - lambda_nf|`.
    pub normal_form_gap: f64,
    /// Normalized overlap between the dense and contour eigenvectors.
    pub kato_alignment: f64,
    /// Normalized overlap between the dense and reduced eigenvectors.
    pub normal_form_alignment: f64,
    /// Distance from the rescaled dense eigenvector to `U - i nu eps`.
    pub dense_ansatz_distance: f64,
    /// Distance from the contour eigenvector to `U - i nu eps`.
    pub kato_ansatz_distance: f64,
    /// Distance from the reduced-route eigenvector to `U - i nu eps`.
    pub normal_form_ansatz_distance: f64,
    /// Worst per-block stable eigenvalue mismatch over the compared blocks.
    pub stable_block_gap: f64,
    /// Number of pair blocks compared.
    pub blocks_compared: usize,
}

/// Computes the distinguished eigenpair by all three routes and the stable
/// pair blocks by dense, contour, and block-diagonal readings, failing with
/// a divergence error naming the first method pair that disagrees.
pub fn cross_validate(
    u: &ShearProfile,
    nu: f64,
    eps: f64,
    max_mode: usize,
) -> Result<CrossValidation> {
    if !regime_small(u, nu, eps) {
        return Err(Error::Regime(format!(
            "long-wave smallness fails at nu={}, eps={}",
            nu, eps
        )));
    }
    let op = assemble(OperatorKind::Linearized, u, nu, eps, max_mode)?;
    let mut dense = dense_spectrum(&op)?;
    dense.attach_prediction(u)?;
    let lambda_dense = dense
        .leading()
        .ok_or_else(|| Error::Eigensolver("empty spectrum".into()))?;
    let dense_vector = match &dense.unstable {
        Some(pair) => pair.eigenvector.clone(),
        None => {
            let vec = eigen_decompose(op.entries())?.vectors.column(0).into_owned();
            from_full_vector(&vec, max_mode)
        }
    };
    let value_tol = CROSS_VALIDATION_TOL * lambda_dense.norm().max(nu);

    let kato = kato_unstable_eigenpair(u, nu, eps, max_mode, DENSE_RESIDUAL_TOL)?;
    let kato_gap = (lambda_dense - kato.lambda).norm();
    if kato_gap > value_tol {
        return Err(Error::Divergence {
            first: "dense",
            second: "kato",
            gap: kato_gap,
            tolerance: value_tol,
        });
    }

    let form = decouple(u, nu, eps, max_mode)?;
    let (lambda_nf, nf_vector) = form.unstable_eigenpair();
    let normal_form_gap = (lambda_dense - lambda_nf).norm();
    if normal_form_gap > value_tol {
        return Err(Error::Divergence {
            first: "dense",
            second: "normal-form",
            gap: normal_form_gap,
            tolerance: value_tol,
        });
    }

    let kato_alignment = normalized_overlap(&dense_vector, &kato.eigenfunction);
    if kato_alignment < ALIGNMENT_FLOOR {
        return Err(Error::Divergence {
            first: "dense",
            second: "kato",
            gap: 1.0 - kato_alignment,
            tolerance: 1.0 - ALIGNMENT_FLOOR,
        });
    }
    let normal_form_alignment = normalized_overlap(&dense_vector, &nf_vector);
    if normal_form_alignment < ALIGNMENT_FLOOR {
        return Err(Error::Divergence {
            first: "dense",
            second: "normal-form",
            gap: 1.0 - normal_form_alignment,
            tolerance: 1.0 - ALIGNMENT_FLOOR,
        });
    }

    let ansatz = shifted_profile(u, nu, eps, max_mode);
    let dense_fit = fit_to_target(&dense_vector, &ansatz)?;
    let dense_ansatz_distance = l2_norm(&dense_fit.sub(&ansatz));
    let kato_ansatz_distance = kato.ansatz_distance;
    let normal_form_ansatz_distance = l2_norm(&nf_vector.sub(&ansatz));

    let blocks_compared = STABLE_BLOCKS_COMPARED.min(max_mode.saturating_sub(1));
    let kato_blocks = stable_block_eigenvalues_kato(u, nu, eps, max_mode, blocks_compared)?;
    let diag = block_diagonalize(&form.l1, nu, max_mode, 1.0, 1e-11, 40)?;
    let nf_blocks = diag.block_eigenvalues();
    let mut stable_block_gap: f64 = 0.0;
    for j in 1..=blocks_compared {
        let dense_pair: Vec<Complex64> = dense
            .eigenvalues
            .iter()
            .filter(|t| t.block == j)
            .map(|t| t.value)
            .collect();
        if dense_pair.len() != 2 {
            return Err(Error::RankDefect {
                expected: 2,
                got: dense_pair.len(),
            });
        }
        let dense_pair = [dense_pair[0], dense_pair[1]];
        let block_tol = CROSS_VALIDATION_TOL * dense_pair[0].norm().max(nu);
        let kato_pair = kato_blocks
            .iter()
            .find(|b| b.block_index == j)
            .ok_or(Error::RankDefect {
                expected: 2,
                got: 0,
            })?
            .eigenvalues;
        let gap_kato = pair_gap(dense_pair, kato_pair);
        if gap_kato > block_tol {
            return Err(Error::Divergence {
                first: "dense",
                second: "kato",
                gap: gap_kato,
                tolerance: block_tol,
            });
        }
        let nf_pair = nf_blocks
            .iter()
            .find(|(jj, _)| *jj == j)
            .ok_or(Error::RankDefect {
                expected: 2,
                got: 0,
            })?
            .1;
        let gap_nf = pair_gap(dense_pair, nf_pair);
        if gap_nf > block_tol {
            return Err(Error::Divergence {
                first: "dense",
                second: "normal-form",
                gap: gap_nf,
                tolerance: block_tol,
            });
        }
        stable_block_gap = stable_block_gap.max(gap_kato).max(gap_nf);
    }

    Ok(CrossValidation {
        dense,
        kato_value: kato.lambda,
        normal_form_value: lambda_nf,
        kato_gap,
        normal_form_gap,
        kato_alignment,
        normal_form_alignment,
        dense_ansatz_distance,
        kato_ansatz_distance,
        normal_form_ansatz_distance,
        stable_block_gap,
        blocks_compared,
    })
}

/// Worst matched-eigenvalue distance between two truncations, over blocks up
/// to `j_cap` of the coarser grid.
pub fn truncation_gap(
    u: &ShearProfile,
    nu: f64,
    eps: f64,
    n_small: usize,
    n_large: usize,
    j_cap: usize,
) -> Result<f64> {
    if n_small >= n_large {
        return Err(Error::Domain(format!(
            "truncations must be nested, got {} and {}",
            n_small, n_large
        )));
    }
    if j_cap > n_small {
        return Err(Error::Domain(format!(
            "block cap {} exceeds the coarse truncation {}",
            j_cap, n_small
        )));
    }
    let coarse = dense_spectrum(&assemble(OperatorKind::Linearized, u, nu, eps, n_small)?)?;
    let fine = dense_spectrum(&assemble(OperatorKind::Linearized, u, nu, eps, n_large)?)?;
    let mut worst: f64 = 0.0;
    for tagged in coarse.eigenvalues.iter().filter(|t| t.block <= j_cap) {
        let nearest = fine
            .eigenvalues
            .iter()
            .map(|t| (t.value - tagged.value).norm())
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    Ok(worst)
}

/// Real scalar field sampled on an evenly spaced grid over the torus.
#[derive(Debug, Clone)]
pub struct ScalarField {
    nx: usize,
    ny: usize,
    eps_over_k: f64,
    values: Vec<f64>,
}

impl ScalarField {
    /// Number of samples along the streamwise axis.
    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Number of samples along the cross-stream axis.
    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Aspect ratio the sampled eigenfunction belongs to.
    pub fn eps_over_k(&self) -> f64 {
        self.eps_over_k
    }

    /// Streamwise coordinate of column `ix`.
    pub fn x_coord(&self, ix: usize) -> f64 {
        std::f64::consts::TAU * ix as f64 / self.nx as f64
    }

    /// Cross-stream coordinate of row `iy`.
    pub fn y_coord(&self, iy: usize) -> f64 {
        std::f64::consts::TAU * iy as f64 / self.ny as f64
    }

    /// Sample at grid indices `(ix, iy)`.
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[ix * self.ny + iy]
    }

    /// Writes the field as `x,y,value` rows with full precision.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "x,y,value")?;
        for ix in 0..self.nx {
            for iy in 0..self.ny {
                writeln!(
                    w,
                    "{:.17e},{:.17e},{:.17e}",
                    self.x_coord(ix),
                    self.y_coord(iy),
                    self.value(ix, iy)
                )?;
            }
        }
        Ok(())
    }
}

/// Samples `Re(e^{ix} V(y))` on an `nx` by `ny` grid over the torus.
pub fn eigenfunction_field(
    v: &FourierFunction,
    eps_over_k: f64,
    grid: (usize, usize),
) -> Result<ScalarField> {
    let (nx, ny) = grid;
    if nx < MIN_FIELD_GRID || ny < MIN_FIELD_GRID {
        return Err(Error::Domain(format!(
            "field grid must be at least {} per axis, got {}x{}",
            MIN_FIELD_GRID, nx, ny
        )));
    }
    if !eps_over_k.is_finite() {
        return Err(Error::Domain("aspect ratio must be finite".into()));
    }
    let column: Vec<Complex64> = (0..ny)
        .map(|iy| v.evaluate(std::f64::consts::TAU * iy as f64 / ny as f64))
        .collect();
    let mut values = Vec::with_capacity(nx * ny);
    for ix in 0..nx {
        let phase = Complex64::from_polar(1.0, std::f64::consts::TAU * ix as f64 / nx as f64);
        for sample in &column {
            values.push((phase * sample).re);
        }
    }
    Ok(ScalarField {
        nx,
        ny,
        eps_over_k,
        values,
    })
}

/// Cosine similarity between two fields on identical grids.
pub fn field_correlation(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    if a.nx != b.nx || a.ny != b.ny {
        return Err(Error::Domain(format!(
            "field grids differ: {}x{} vs {}x{}",
            a.nx, a.ny, b.nx, b.ny
        )));
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let na: f64 = a.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("cannot correlate a zero field".into()));
    }
    Ok(dot / (na * nb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::ShearProfile;
    use crate::operators::{full_index, to_full_vector};
    use proptest::prelude::*;

    fn kolmogorov() -> ShearProfile {
        ShearProfile::preset("kolmogorov").unwrap()
    }

    fn sin1cos5() -> ShearProfile {
        ShearProfile::preset("sin1cos5").unwrap()
    }

    fn linearized(nu: f64, eps: f64, n: usize) -> OperatorMatrix {
        assemble(OperatorKind::Linearized, &kolmogorov(), nu, eps, n).unwrap()
    }

    #[test]
    fn dominant_spectrum_matches_diffusive_levels_exactly() {
        let n = 16;
        let (nu, eps) = (0.5, 0.01);
        let op = assemble(OperatorKind::Dominant, &kolmogorov(), nu, eps, n).unwrap();
        let report = dense_spectrum(&op).unwrap();
        assert_eq!(report.eigenvalues.len(), 2 * n + 1);
        let mut expected: Vec<f64> = (-(n as i64)..=(n as i64))
            .map(|j| -nu * ((j * j) as f64 + eps * eps))
            .collect();
        expected.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (tagged, want) in report.eigenvalues.iter().zip(&expected) {
            assert!((tagged.value - Complex64::new(*want, 0.0)).norm() <= 1e-10);
            assert!(!tagged.unstable);
        }
        assert!(report.unstable.is_none());
        let zero_blocks = report.eigenvalues.iter().filter(|t| t.block == 0).count();
        assert_eq!(zero_blocks, 1);
        for j in 1..=n {
            let count = report.eigenvalues.iter().filter(|t| t.block == j).count();
            assert_eq!(count, 2, "block {} multiplicity", j);
        }
    }

    #[test]
    fn diffusion_spectrum_is_its_diagonal() {
        let n = 8;
        let eps = 0.1;
        let op = assemble(OperatorKind::Diffusion, &kolmogorov(), 0.5, eps, n).unwrap();
        let report = dense_spectrum(&op).unwrap();
        let mut expected: Vec<f64> = (-(n as i64)..=(n as i64))
            .map(|j| -((j * j) as f64 + eps * eps))
            .collect();
        expected.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (tagged, want) in report.eigenvalues.iter().zip(&expected) {
            assert!((tagged.value - Complex64::new(*want, 0.0)).norm() <= 1e-13);
        }
    }

    #[test]
    fn kolmogorov_has_exactly_one_unstable_eigenvalue() {
        let report = dense_spectrum(&linearized(0.5, 0.005, 32)).unwrap();
        assert_eq!(report.eigenvalues.len(), 65);
        assert_eq!(report.unstable_count(), 1);
        assert!(report.eigenvalues[0].unstable);
        assert_eq!(report.eigenvalues[0].block, 0);
        let pair = report.unstable.as_ref().expect("growing mode");
        assert!(pair.value.re > 0.0);
        assert!(pair.residual <= DENSE_RESIDUAL_TOL);
        for w in report.eigenvalues.windows(2) {
            assert!(w[0].value.re >= w[1].value.re);
        }
    }

    #[test]
    fn stable_part_localizes_left_of_half_nu() {
        let nu = 0.5;
        let report = dense_spectrum(&linearized(nu, 0.005, 32)).unwrap();
        for tagged in report.eigenvalues.iter().skip(1) {
            assert!(
                tagged.value.re <= -nu / 2.0,
                "eigenvalue {} escapes the stable half plane",
                tagged.value
            );
        }
    }

    #[test]
    fn spectrum_conjugates_under_sign_of_eps() {
        let plus = dense_spectrum(&linearized(0.5, 0.01, 12)).unwrap();
        let minus = dense_spectrum(&linearized(0.5, -0.01, 12)).unwrap();
        let mut reflected: Vec<Complex64> =
            minus.eigenvalues.iter().map(|t| t.value.conj()).collect();
        reflected.sort_by(|a, b| {
            b.re.partial_cmp(&a.re)
                .unwrap()
                .then(b.im.partial_cmp(&a.im).unwrap())
        });
        for (tagged, want) in plus.eigenvalues.iter().zip(&reflected) {
            let scale = tagged.value.norm().max(1.0);
            assert!((tagged.value - want).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn reduced_operators_report_two_n_eigenvalues() {
        let op = assemble(OperatorKind::Reduced, &kolmogorov(), 0.5, 0.01, 8).unwrap();
        let report = dense_spectrum(&op).unwrap();
        assert_eq!(report.eigenvalues.len(), 16);
        assert!(report.eigenvalues.iter().all(|t| t.block >= 1));
    }

    #[test]
    fn truncation_is_inert_beyond_band_plus_two() {
        let gap = truncation_gap(&kolmogorov(), 0.5, 0.1, 8, 16, 6).unwrap();
        assert!(gap <= 1e-12, "truncation moved eigenvalues by {}", gap);
        let tight = truncation_gap(&kolmogorov(), 0.5, 0.005, 8, 16, 6).unwrap();
        assert!(
            tight <= 1e-11,
            "truncation at the operating point moved eigenvalues by {}",
            tight
        );
    }

    #[test]
    fn truncation_gap_rejects_bad_nesting() {
        let err = truncation_gap(&kolmogorov(), 0.5, 0.005, 16, 8, 4).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        let err = truncation_gap(&kolmogorov(), 0.5, 0.005, 8, 16, 9).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn prediction_matches_hand_value_for_kolmogorov() {
        let p = asymptotic_prediction(&kolmogorov(), 0.5, 0.005).unwrap();
        assert!((p.re - 1.25e-5).abs() <= 1e-19);
        assert_eq!(p.im, 0.0);
    }

    #[test]
    fn prediction_vanishes_at_marginal_viscosity() {
        let nu = 0.5_f64.sqrt();
        let p = asymptotic_prediction(&kolmogorov(), nu, 0.005).unwrap();
        assert!(p.norm() <= 1e-18);
    }

    #[test]
    fn prediction_vanishes_at_zero_eps() {
        let p = asymptotic_prediction(&kolmogorov(), 0.5, 0.0).unwrap();
        assert_eq!(p, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn prediction_rejects_bad_viscosity() {
        assert!(asymptotic_prediction(&kolmogorov(), 0.0, 0.01).is_err());
        assert!(asymptotic_prediction(&kolmogorov(), -1.0, 0.01).is_err());
    }

    #[test]
    fn attach_prediction_fills_deviation() {
        let mut report = dense_spectrum(&linearized(0.5, 0.005, 32)).unwrap();
        assert!(report.deviation.is_nan());
        report.attach_prediction(&kolmogorov()).unwrap();
        assert!((report.prediction.re - 1.25e-5).abs() <= 1e-19);
        assert!(report.deviation <= 0.1 * 1.25e-5);
    }

    #[test]
    fn scaling_study_reaches_first_order_for_kolmogorov() {
        let report = scaling_study(&kolmogorov(), 0.5, &[1e-2, 5e-3, 2.5e-3], 32).unwrap();
        assert_eq!(report.points.len(), 3);
        assert!(!report.partial);
        assert!(report.points.iter().all(|p| p.in_regime));
        assert!(
            report.slope >= 0.9 && report.slope <= 2.1,
            "slope {} outside the expected window",
            report.slope
        );
        assert!(report.first_order);
    }

    #[test]
    fn scaling_study_stays_negative_for_stable_viscosity() {
        let nu = 0.8;
        let report = scaling_study(&kolmogorov(), nu, &[1e-2, 5e-3, 2.5e-3], 32).unwrap();
        for point in &report.points {
            assert!(point.lambda.re < 0.0, "eps {} grew", point.eps);
            let normalized = point.lambda * Complex64::new(nu / (point.eps * point.eps), 0.0);
            assert!(
                (normalized.re + 0.14).abs() <= 0.05,
                "normalized limit {} far from -0.14",
                normalized.re
            );
        }
    }

    #[test]
    fn scaling_study_rejects_bad_lists() {
        let err = scaling_study(&kolmogorov(), 0.5, &[1e-2], 16).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        let err = scaling_study(&kolmogorov(), 0.5, &[1e-3, 5e-3, 1e-2], 16).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn scaling_study_flags_out_of_regime_points() {
        let report = scaling_study(&kolmogorov(), 0.05, &[1e-2, 5e-3, 2.5e-3], 16).unwrap();
        assert!(report.partial);
        assert!(!report.points[0].in_regime);
        assert!(report.points[1].in_regime);
        assert!(report.slope.is_finite());
    }

    #[test]
    fn taylor_eigenvalue_matches_dispersion_prediction() {
        let (mu, prediction) = taylor_dispersion_eigenvalue(&kolmogorov(), 0.5, 0.005, 32).unwrap();
        assert!((prediction.re + 3.75e-5).abs() <= 1e-19);
        assert_eq!(prediction.im, 0.0);
        assert!(mu.re < 0.0);
        assert!(mu.im.abs() <= 1e-12);
        assert!((mu - prediction).norm() <= 1e-6);
    }

    #[test]
    fn taylor_deviation_scales_at_least_first_order() {
        let nu = 0.5;
        let mut pts = Vec::new();
        for &eps in &[1e-2, 5e-3, 2.5e-3] {
            let (mu, prediction) =
                taylor_dispersion_eigenvalue(&kolmogorov(), nu, eps, 32).unwrap();
            let err = (mu - prediction).norm() * nu / (eps * eps);
            assert!(err > 0.0);
            pts.push((eps.ln(), err.ln()));
        }
        let slope = least_squares_slope(&pts);
        assert!(slope >= 0.9, "taylor deviation slope {}", slope);
    }

    #[test]
    fn cross_validation_agrees_three_ways_for_kolmogorov() {
        let (nu, eps, n) = (0.5, 5e-3, 32);
        let cv = cross_validate(&kolmogorov(), nu, eps, n).unwrap();
        let lambda = cv.dense.leading().unwrap();
        let tol = CROSS_VALIDATION_TOL * lambda.norm().max(nu);
        assert!(cv.kato_gap <= tol);
        assert!(cv.normal_form_gap <= tol);
        assert!(cv.kato_alignment >= ALIGNMENT_FLOOR);
        assert!(cv.normal_form_alignment >= ALIGNMENT_FLOOR);
        assert_eq!(cv.blocks_compared, 4);
        assert!(cv.stable_block_gap <= tol.max(1e-8));
        assert!(cv.dense.deviation <= 0.1 * 1.25e-5);
        assert!(
            cv.kato_ansatz_distance <= 5.0 * eps / nu,
            "contour route distance {}",
            cv.kato_ansatz_distance
        );
        let refined = eps * eps / (nu * nu) + eps * eps;
        assert!(
            cv.normal_form_ansatz_distance <= 5.0 * refined,
            "reduced route distance {}",
            cv.normal_form_ansatz_distance
        );
        assert!(
            cv.dense_ansatz_distance <= 5.0 * refined,
            "dense distance {}",
            cv.dense_ansatz_distance
        );
    }

    #[test]
    fn cross_validation_holds_on_a_wide_band_profile() {
        let (nu, eps, n) = (0.5, 5e-3, 12);
        let cv = cross_validate(&sin1cos5(), nu, eps, n).unwrap();
        assert!(cv.kato_ansatz_distance <= 5.0 * eps / nu);
        assert!(cv.normal_form_ansatz_distance <= 5.0 * eps / nu);
        let ratio = cv.normal_form_ansatz_distance / cv.kato_ansatz_distance;
        assert!(
            (ratio - 1.0).abs() <= 0.1,
            "routes measure different correctors: {}",
            ratio
        );
    }

    #[test]
    fn reduced_vector_distance_scales_linearly_on_a_wide_band() {
        let u = sin1cos5();
        let nu = 0.5;
        let mut constants = Vec::new();
        for &eps in &[1e-2, 5e-3, 2.5e-3] {
            let form = decouple(&u, nu, eps, 12).unwrap();
            let (_, v) = form.unstable_eigenpair();
            let ansatz = shifted_profile(&u, nu, eps, 12);
            constants.push(l2_norm(&v.sub(&ansatz)) / (eps / nu));
        }
        let max = constants.iter().cloned().fold(0.0_f64, f64::max);
        let min = constants.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max <= 1.5, "distance constant {}", max);
        assert!(max / min <= 1.3, "constant drifts: {:?}", constants);
    }

    #[test]
    fn cross_validation_rejects_out_of_regime_parameters() {
        let err = cross_validate(&kolmogorov(), 0.05, 1e-2, 16).unwrap_err();
        assert!(matches!(err, Error::Regime(_)));
    }

    #[test]
    fn fitted_vector_has_real_positive_overlap() {
        let v = FourierFunction::from_modes(
            3,
            &[
                (0, Complex64::new(0.3, -0.4)),
                (1, Complex64::new(-0.2, 0.9)),
                (-2, Complex64::new(0.5, 0.1)),
            ],
        )
        .unwrap();
        let target = shifted_profile(&kolmogorov(), 0.5, 0.01, 3);
        let fitted = fit_to_target(&v, &target).unwrap();
        let overlap = inner_product(&fitted, &target);
        assert!(overlap.im.abs() <= 1e-15 * overlap.re.abs().max(1.0));
        assert!(overlap.re >= 0.0);
    }

    #[test]
    fn fit_rejects_zero_vector() {
        let zero = FourierFunction::zeros(3);
        let target = shifted_profile(&kolmogorov(), 0.5, 0.01, 3);
        assert!(fit_to_target(&zero, &target).is_err());
    }

    #[test]
    fn shifted_profile_sets_only_the_mean_mode() {
        let f = shifted_profile(&kolmogorov(), 0.5, 0.01, 4);
        assert_eq!(f.coeff(0), Complex64::new(0.0, -0.005));
        assert_eq!(f.coeff(1), Complex64::new(0.0, -0.5));
        assert_eq!(f.coeff(2), Complex64::new(0.0, 0.0));
        let v = to_full_vector(&f, 4);
        assert_eq!(v[full_index(0, 4)], Complex64::new(0.0, -0.005));
    }

    #[test]
    fn field_matches_separable_product() {
        let v = sin1cos5().function().clone();
        let field = eigenfunction_field(&v, 0.01, (32, 32)).unwrap();
        for ix in 0..32 {
            let x = field.x_coord(ix);
            for iy in 0..32 {
                let y = field.y_coord(iy);
                let want = x.cos() * (y.sin() + (5.0 * y).cos());
                assert!(
                    (field.value(ix, iy) - want).abs() <= 1e-12,
                    "sample ({}, {})",
                    ix,
                    iy
                );
            }
        }
        assert!((field.value(0, 8) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn field_is_even_in_x_for_real_functions() {
        let v = sin1cos5().function().clone();
        let field = eigenfunction_field(&v, 0.01, (24, 24)).unwrap();
        for ix in 1..24 {
            for iy in 0..24 {
                assert!((field.value(ix, iy) - field.value(24 - ix, iy)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn field_refinement_is_pure_sampling() {
        let v = sin1cos5().function().clone();
        let coarse = eigenfunction_field(&v, 0.01, (16, 16)).unwrap();
        let fine = eigenfunction_field(&v, 0.01, (32, 32)).unwrap();
        for ix in 0..16 {
            for iy in 0..16 {
                assert_eq!(coarse.value(ix, iy), fine.value(2 * ix, 2 * iy));
            }
        }
    }

    #[test]
    fn field_rejects_small_grids() {
        let v = kolmogorov().function().clone();
        assert!(eigenfunction_field(&v, 0.01, (8, 32)).is_err());
        assert!(eigenfunction_field(&v, 0.01, (32, 15)).is_err());
    }

    #[test]
    fn field_csv_has_header_and_full_grid() {
        let v = kolmogorov().function().clone();
        let field = eigenfunction_field(&v, 0.01, (16, 16)).unwrap();
        let mut buf = Vec::new();
        field.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,value");
        assert_eq!(lines.len(), 1 + 16 * 16);
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[0].parse::<f64>().unwrap(), 0.0);
        assert_eq!(first[1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(first[2].parse::<f64>().unwrap(), field.value(0, 0));
    }

    #[test]
    fn correlation_is_one_against_itself() {
        let v = sin1cos5().function().clone();
        let field = eigenfunction_field(&v, 0.01, (20, 20)).unwrap();
        let again = eigenfunction_field(&v.scale(Complex64::new(2.0, 0.0)), 0.01, (20, 20)).unwrap();
        let corr = field_correlation(&field, &again).unwrap();
        assert!((corr - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn correlation_rejects_mismatched_grids() {
        let v = kolmogorov().function().clone();
        let a = eigenfunction_field(&v, 0.01, (16, 16)).unwrap();
        let b = eigenfunction_field(&v, 0.01, (16, 20)).unwrap();
        assert!(field_correlation(&a, &b).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn prop_prediction_sign_tracks_instability_margin(
            a in 0.1_f64..1.0,
            b in 0.0_f64..1.0,
            nu in 0.1_f64..1.5,
            eps in 1e-4_f64..0.05,
        ) {
            let f = FourierFunction::from_modes(2, &[
                (1, Complex64::new(0.0, -a / 2.0)),
                (-1, Complex64::new(0.0, a / 2.0)),
                (2, Complex64::new(b / 2.0, 0.0)),
                (-2, Complex64::new(b / 2.0, 0.0)),
            ]).unwrap();
            let u = ShearProfile::new(f, 2.0).unwrap();
            let anti = partial_y_inverse(u.function()).unwrap();
            let margin = l2_norm(&anti).powi(2) - nu * nu;
            prop_assume!(margin.abs() > 1e-9);
            let p = asymptotic_prediction(&u, nu, eps).unwrap();
            prop_assert_eq!(p.im, 0.0);
            prop_assert_eq!(p.re > 0.0, margin > 0.0);
        }

        #[test]
        fn prop_field_even_in_x_for_real_profiles(
            a in -1.0_f64..1.0,
            b in -1.0_f64..1.0,
            m in 1_i64..4,
        ) {
            prop_assume!(a.abs() + b.abs() > 1e-3);
            let f = FourierFunction::from_modes(4, &[
                (m, Complex64::new(a / 2.0, -b / 2.0)),
                (-m, Complex64::new(a / 2.0, b / 2.0)),
            ]).unwrap();
            let field = eigenfunction_field(&f, 0.01, (16, 16)).unwrap();
            for ix in 1..16 {
                for iy in 0..16 {
                    prop_assert!((field.value(ix, iy) - field.value(16 - ix, iy)).abs() <= 1e-12);
                }
            }
        }
    }
}
