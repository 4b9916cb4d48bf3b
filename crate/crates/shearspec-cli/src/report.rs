//! Serializable report types with deterministic field order, plus the
//! emission helpers shared by every subcommand.

use num_complex::Complex64;
use serde::Serialize;
use shearspec::fourier::{FourierFunction, ShearProfile};
use shearspec::spectrum::SpectralReport;
use shearspec::{Error, Result};

use crate::config::RunConfig;

/// Complex scalar split into parts.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComplexEntry {
    pub re: f64,
    pub im: f64,
}

impl ComplexEntry {
    /// Wraps a complex number.
    pub fn new(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

/// One Fourier coefficient of a function on the torus.
#[derive(Debug, Clone, Serialize)]
pub struct ModeEntry {
    pub j: i64,
    pub re: f64,
    pub im: f64,
}

/// Profile echo: name plus the nonzero coefficients in ascending mode order.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileReport {
    pub name: String,
    pub modes: Vec<ModeEntry>,
}

/// Resolved run parameters echoed into every report.
#[derive(Debug, Clone, Serialize)]
pub struct ParamsOut {
    pub nu: Option<f64>,
    pub eps: Option<f64>,
    #[serde(rename = "N")]
    pub max_mode: usize,
    pub s: f64,
    pub nodes: usize,
    pub k: Option<i64>,
}

/// One eigenvalue with its block tag.
#[derive(Debug, Clone, Serialize)]
pub struct EigenvalueEntry {
    pub re: f64,
    pub im: f64,
    pub block: usize,
    pub tag: &'static str,
}

/// Complex scalar, conjugated when the run maps a negative wavenumber.
pub fn complex_entry(z: Complex64, conjugate: bool) -> ComplexEntry {
    if conjugate {
        ComplexEntry::new(z.conj())
    } else {
        ComplexEntry::new(z)
    }
}

/// Nonzero coefficients in ascending mode order; a negative wavenumber run
/// reports the reflected conjugate `conj(f(-j))` at mode `j`.
pub fn mode_entries(f: &FourierFunction, conjugate: bool) -> Vec<ModeEntry> {
    let n = f.max_mode() as i64;
    (-n..=n)
        .map(|j| {
            let c = if conjugate { f.coeff(-j).conj() } else { f.coeff(j) };
            (j, c)
        })
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(j, c)| ModeEntry { j, re: c.re, im: c.im })
        .collect()
}

/// Profile echo for the report header.
pub fn profile_report(name: &str, u: &ShearProfile) -> ProfileReport {
    ProfileReport {
        name: name.to_string(),
        modes: mode_entries(u.function(), false),
    }
}

/// Parameter echo for the report header.
pub fn params_out(cfg: &RunConfig) -> ParamsOut {
    ParamsOut {
        nu: cfg.nu,
        eps: cfg.eps,
        max_mode: cfg.max_mode,
        s: cfg.s,
        nodes: cfg.nodes,
        k: cfg.wavenumber,
    }
}

/// Tagged eigenvalue table sorted by descending real then imaginary part.
pub fn eigenvalue_entries(report: &SpectralReport, conjugate: bool) -> Vec<EigenvalueEntry> {
    let mut rows: Vec<EigenvalueEntry> = report
        .eigenvalues
        .iter()
        .map(|e| {
            let z = if conjugate { e.value.conj() } else { e.value };
            EigenvalueEntry {
                re: z.re,
                im: z.im,
                block: e.block,
                tag: if e.unstable { "unstable" } else { "stable" },
            }
        })
        .collect();
    if conjugate {
        rows.sort_by(|a, b| {
            b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im))
        });
    }
    rows
}

/// Sorts a conjugated 2-block pair back to descending real then imaginary.
pub fn pair_entries(pair: [Complex64; 2], conjugate: bool) -> [ComplexEntry; 2] {
    let mut vals = pair;
    if conjugate {
        for v in &mut vals {
            *v = v.conj();
        }
        vals.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    }
    [ComplexEntry::new(vals[0]), ComplexEntry::new(vals[1])]
}

/// Serializes a report as pretty JSON with a trailing newline.
pub fn to_json_text<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Domain(format!("output: cannot encode JSON: {}", e)))?;
    text.push('\n');
    Ok(text)
}

/// Writes report text to the configured output file or standard output.
pub fn emit(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.output {
        Some(path) => std::fs::write(path, text).map_err(|e| {
            Error::Domain(format!("output: cannot write '{}': {}", path.display(), e))
        }),
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_entries_reflect_under_conjugation() {
        let mut f = FourierFunction::zeros(2);
        f.set_coeff(1, Complex64::new(1.0, 2.0));
        f.set_coeff(-2, Complex64::new(0.5, -0.25));
        let plain = mode_entries(&f, false);
        assert_eq!(plain.len(), 2);
        assert_eq!(plain[0].j, -2);
        assert_eq!(plain[1].j, 1);
        let reflected = mode_entries(&f, true);
        assert_eq!(reflected.len(), 2);
        assert_eq!(reflected[0].j, -1);
        assert_eq!(reflected[0].re, 1.0);
        assert_eq!(reflected[0].im, -2.0);
        assert_eq!(reflected[1].j, 2);
        assert_eq!(reflected[1].re, 0.5);
        assert_eq!(reflected[1].im, 0.25);
    }

    #[test]
    fn profile_modes_come_out_ascending() {
        let u = ShearProfile::preset("sin1cos5").unwrap();
        let report = profile_report("sin1cos5", &u);
        let js: Vec<i64> = report.modes.iter().map(|m| m.j).collect();
        assert_eq!(js, vec![-5, -1, 1, 5]);
    }

    #[test]
    fn conjugated_pairs_stay_sorted() {
        let pair = [Complex64::new(-1.0, 2.0), Complex64::new(-1.0, -2.0)];
        let out = pair_entries(pair, true);
        assert_eq!(out[0].im, 2.0);
        assert_eq!(out[1].im, -2.0);
    }

    #[test]
    fn json_text_is_stable() {
        #[derive(Serialize)]
        struct Demo {
            b: f64,
            a: f64,
        }
        let one = to_json_text(&Demo { b: 0.1, a: 1.25e-5 }).unwrap();
        let two = to_json_text(&Demo { b: 0.1, a: 1.25e-5 }).unwrap();
        assert_eq!(one, two);
        assert!(one.ends_with('\n'));
        assert!(one.find("\"b\"").unwrap() < one.find("\"a\"").unwrap());
    }
}
