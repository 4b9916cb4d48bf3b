//! Assembly of the linearized operators at one horizontal wavenumber: the
//! vertical diffusion matrix, the transport remainder with its long-wave
//! cancellation on the zero mode, the dominant part with a rank-one coupling
//! to the average, the full linearized operator, its restriction to the
//! zero-average subspace, and the advection-diffusion comparison operator.
//!
//! All matrices act on Fourier coefficients. The full grid stores modes
//! `j = -N..N` at position `p = j + N`; the zero-average grid deletes `j = 0`
//! and stores `p = j + N` for `j < 0`, `p = j + N - 1` for `j > 0`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{FourierFunction, ShearProfile, STRUCTURE_TOL};

/// Which operator to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// Vertical diffusion `dyy - eps^2`: diagonal `-(j^2 + eps^2)`.
    Diffusion,
    /// Transport remainder coupling modes through the profile, with the
    /// inverse-diffusion correction on columns `j' != 0`.
    TransportRemainder,
    /// Viscous diffusion plus the rank-one forcing of the average column.
    Dominant,
    /// Full linearized operator, dominant part minus `i eps` times the
    /// transport remainder.
    Linearized,
    /// Zero-average restriction with the diagonal `-nu j^2`.
    Reduced,
    /// Adjoint of the zero-average restriction, assembled from its own
    /// entry formula.
    ReducedAdjoint,
    /// Zero-average restriction keeping the full diagonal `-nu (j^2+eps^2)`.
    ReducedShifted,
    /// Advection-diffusion comparison operator `nu (dyy - eps^2) - i eps U`.
    TaylorApprox,
}

impl OperatorKind {
    /// Stable lowercase label used in reports and file output.
    pub fn label(self) -> &'static str {
        match self {
            OperatorKind::Diffusion => "diffusion",
            OperatorKind::TransportRemainder => "transport-remainder",
            OperatorKind::Dominant => "dominant",
            OperatorKind::Linearized => "linearized",
            OperatorKind::Reduced => "reduced",
            OperatorKind::ReducedAdjoint => "reduced-adjoint",
            OperatorKind::ReducedShifted => "reduced-shifted",
            OperatorKind::TaylorApprox => "taylor",
        }
    }

    /// True for operators living on the zero-average grid.
    pub fn on_zero_average(self) -> bool {
        matches!(
            self,
            OperatorKind::Reduced | OperatorKind::ReducedAdjoint | OperatorKind::ReducedShifted
        )
    }
}

/// A dense assembled operator together with the parameters that produced it.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    kind: OperatorKind,
    max_mode: usize,
    nu: f64,
    eps: f64,
    entries: DMatrix<Complex64>,
    regime_small: Option<bool>,
}

impl OperatorMatrix {
    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn label(&self) -> &'static str {
        self.kind.label()
    }

    pub fn max_mode(&self) -> usize {
        self.max_mode
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn on_zero_average(&self) -> bool {
        self.kind.on_zero_average()
    }

    /// Matrix dimension: `2N+1` on the full grid, `2N` on the zero-average
    /// grid.
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<Complex64> {
        self.entries
    }

    /// Whether `|eps| ||U||_{H^2} / nu < 1/4` held at assembly; `None` for
    /// profile-independent operators.
    pub fn regime_small(&self) -> Option<bool> {
        self.regime_small
    }

    /// Applies the operator to a function, padding it to the grid first.
    pub fn apply(&self, f: &FourierFunction) -> Result<FourierFunction> {
        if f.max_mode() > self.max_mode {
            return Err(Error::Domain(format!(
                "function has modes up to {} but the operator grid stops at {}",
                f.max_mode(),
                self.max_mode
            )));
        }
        let g = f.pad_to(self.max_mode);
        if self.on_zero_average() {
            if !g.has_zero_average(STRUCTURE_TOL) {
                return Err(Error::Domain(
                    "zero-average operator applied to a function with nonzero average".into(),
                ));
            }
            let v = to_reduced_vector(&g, self.max_mode);
            Ok(from_reduced_vector(&(&self.entries * v), self.max_mode))
        } else {
            let v = to_full_vector(&g, self.max_mode);
            Ok(from_full_vector(&(&self.entries * v), self.max_mode))
        }
    }

    /// Writes the entries as CSV rows `row,col,re,im`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "row,col,re,im")?;
        for i in 0..self.entries.nrows() {
            for j in 0..self.entries.ncols() {
                let z = self.entries[(i, j)];
                writeln!(w, "{},{},{:.17e},{:.17e}", i, j, z.re, z.im)?;
            }
        }
        Ok(())
    }
}

/// Storage position of mode `j` on the full grid.
pub fn full_index(j: i64, max_mode: usize) -> usize {
    let n = max_mode as i64;
    assert!(j.abs() <= n, "mode {} outside |j| <= {}", j, n);
    (j + n) as usize
}

/// Mode at storage position `p` on the full grid.
pub fn mode_of_full(p: usize, max_mode: usize) -> i64 {
    assert!(p < 2 * max_mode + 1);
    p as i64 - max_mode as i64
}

/// Storage position of mode `j != 0` on the zero-average grid.
pub fn reduced_index(j: i64, max_mode: usize) -> usize {
    let n = max_mode as i64;
    assert!(j != 0 && j.abs() <= n, "mode {} outside the zero-average grid", j);
    if j < 0 {
        (j + n) as usize
    } else {
        (j + n - 1) as usize
    }
}

/// Mode at storage position `p` on the zero-average grid.
pub fn mode_of_reduced(p: usize, max_mode: usize) -> i64 {
    assert!(p < 2 * max_mode);
    let n = max_mode as i64;
    let j = p as i64 - n;
    if j < 0 {
        j
    } else {
        j + 1
    }
}

/// Coefficients of `f` as a full-grid vector.
pub fn to_full_vector(f: &FourierFunction, max_mode: usize) -> DVector<Complex64> {
    let g = f.pad_to(max_mode);
    DVector::from_fn(2 * max_mode + 1, |p, _| g.coeff(mode_of_full(p, max_mode)))
}

/// Function with the coefficients of a full-grid vector.
pub fn from_full_vector(v: &DVector<Complex64>, max_mode: usize) -> FourierFunction {
    assert_eq!(v.len(), 2 * max_mode + 1);
    let mut f = FourierFunction::zeros(max_mode);
    for p in 0..v.len() {
        f.set_coeff(mode_of_full(p, max_mode), v[p]);
    }
    f
}

/// Nonzero-mode coefficients of `f` as a zero-average-grid vector.
pub fn to_reduced_vector(f: &FourierFunction, max_mode: usize) -> DVector<Complex64> {
    let g = f.pad_to(max_mode);
    DVector::from_fn(2 * max_mode, |p, _| g.coeff(mode_of_reduced(p, max_mode)))
}

/// Zero-average function with the coefficients of a reduced vector.
pub fn from_reduced_vector(v: &DVector<Complex64>, max_mode: usize) -> FourierFunction {
    assert_eq!(v.len(), 2 * max_mode);
    let mut f = FourierFunction::zeros(max_mode);
    for p in 0..v.len() {
        f.set_coeff(mode_of_reduced(p, max_mode), v[p]);
    }
    f
}

/// True when `|eps| ||U||_{H^2} / nu < 1/4`, the smallness condition under
/// which the perturbative constructions are justified.
pub fn regime_small(u: &ShearProfile, nu: f64, eps: f64) -> bool {
    eps.abs() * u.h_norm(2.0) / nu < 0.25
}

pub(crate) fn validate(u: &ShearProfile, nu: f64, eps: f64, max_mode: usize) -> Result<()> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Domain(format!("viscosity must be positive, got {}", nu)));
    }
    if eps == 0.0 || !eps.is_finite() {
        return Err(Error::Domain(format!(
            "wavenumber parameter must be nonzero and finite, got {}",
            eps
        )));
    }
    if max_mode < u.band() + 2 {
        return Err(Error::Domain(format!(
            "grid max_mode {} below profile band {} + 2",
            max_mode,
            u.band()
        )));
    }
    if max_mode > 4096 {
        return Err(Error::Domain(format!("grid max_mode {} too large", max_mode)));
    }
    Ok(())
}

/// Assembles the requested operator on the grid `|j| <= max_mode`.
pub fn assemble(
    kind: OperatorKind,
    u: &ShearProfile,
    nu: f64,
    eps: f64,
    max_mode: usize,
) -> Result<OperatorMatrix> {
    validate(u, nu, eps, max_mode)?;
    let i_unit = Complex64::new(0.0, 1.0);
    let e2 = eps * eps;
    let uc = |m: i64| u.function().coeff(m);
    let entry_full = |j: i64, jp: i64| -> Complex64 {
        let jj = (j * j) as f64;
        let um = uc(j - jp);
        let d2 = ((j - jp) * (j - jp)) as f64;
        match kind {
            OperatorKind::Diffusion => {
                if j == jp {
                    Complex64::new(-(jj + e2), 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            OperatorKind::TransportRemainder => {
                if jp == 0 {
                    um
                } else {
                    um * (1.0 - d2 / ((jp * jp) as f64 + e2))
                }
            }
            OperatorKind::Dominant => {
                let mut e = Complex64::new(0.0, 0.0);
                if j == jp {
                    e += Complex64::new(-nu * (jj + e2), 0.0);
                }
                if jp == 0 {
                    e += i_unit / eps * jj * um;
                }
                e
            }
            OperatorKind::Linearized => {
                let mut e = Complex64::new(0.0, 0.0);
                if j == jp {
                    e += Complex64::new(-nu * (jj + e2), 0.0);
                }
                if jp == 0 {
                    e += i_unit / eps * jj * um;
                }
                e -= i_unit * eps * um;
                if jp != 0 {
                    e += i_unit * eps * d2 * um / ((jp * jp) as f64 + e2);
                }
                e
            }
            OperatorKind::TaylorApprox => {
                let mut e = -i_unit * eps * um;
                if j == jp {
                    e += Complex64::new(-nu * (jj + e2), 0.0);
                }
                e
            }
            OperatorKind::Reduced | OperatorKind::ReducedAdjoint | OperatorKind::ReducedShifted => {
                unreachable!("zero-average kinds are assembled on the reduced grid")
            }
        }
    };
    let entry_reduced = |j: i64, jp: i64| -> Complex64 {
        let jj = (j * j) as f64;
        let um = uc(j - jp);
        let d2 = ((j - jp) * (j - jp)) as f64;
        match kind {
            OperatorKind::Reduced => {
                let mut e = -i_unit * eps * um * (1.0 - d2 / ((jp * jp) as f64 + e2));
                if j == jp {
                    e += Complex64::new(-nu * jj, 0.0);
                }
                e
            }
            OperatorKind::ReducedShifted => {
                let mut e = -i_unit * eps * um * (1.0 - d2 / ((jp * jp) as f64 + e2));
                if j == jp {
                    e += Complex64::new(-nu * (jj + e2), 0.0);
                }
                e
            }
            OperatorKind::ReducedAdjoint => {
                let mut e = i_unit * eps * um * (1.0 - d2 / (jj + e2));
                if j == jp {
                    e += Complex64::new(-nu * jj, 0.0);
                }
                e
            }
            _ => unreachable!("full-grid kinds are assembled on the full grid"),
        }
    };
    let entries = if kind.on_zero_average() {
        let dim = 2 * max_mode;
        DMatrix::from_fn(dim, dim, |p, q| {
            entry_reduced(mode_of_reduced(p, max_mode), mode_of_reduced(q, max_mode))
        })
    } else {
        let dim = 2 * max_mode + 1;
        DMatrix::from_fn(dim, dim, |p, q| {
            entry_full(mode_of_full(p, max_mode), mode_of_full(q, max_mode))
        })
    };
    let regime = if kind == OperatorKind::Diffusion {
        None
    } else {
        Some(regime_small(u, nu, eps))
    };
    Ok(OperatorMatrix {
        kind,
        max_mode,
        nu,
        eps,
        entries,
        regime_small: regime,
    })
}

/// The mode-reversal conjugation: returns the operator with entries
/// `conj(A[-j, -j'])`, which equals the assembly at `-eps` for every kind.
pub fn reflect_conjugate(op: &OperatorMatrix) -> OperatorMatrix {
    let d = op.entries.nrows();
    let entries = DMatrix::from_fn(d, d, |p, q| op.entries[(d - 1 - p, d - 1 - q)].conj());
    OperatorMatrix {
        kind: op.kind,
        max_mode: op.max_mode,
        nu: op.nu,
        eps: -op.eps,
        entries,
        regime_small: op.regime_small,
    }
}
