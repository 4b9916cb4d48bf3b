//! Layered run configuration: command-line flags and environment variables
//! over an optional TOML file over built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;
use shearspec::fourier::{FourierFunction, ShearProfile};
use shearspec::kato::DEFAULT_NODES;
use shearspec::normal_form::DEFAULT_DECAY_INDEX;
use shearspec::{Error, Result};

/// Tolerance knobs honored by the subcommands, with their defaults.
pub const TOLERANCE_KEYS: [(&str, f64); 2] = [("block-diag", 1e-11), ("kato-residual", 1e-9)];

/// Parameter flags shared by every subcommand. Each flag falls back to the
/// environment variable named after it with the `SHEARSPEC_` prefix, then to
/// the config file, then to the built-in default.
#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Shear profile: preset name or comma-separated j:re:im triples
    #[arg(long, env = "SHEARSPEC_PROFILE", allow_hyphen_values = true)]
    pub profile: Option<String>,

    /// Viscosity, positive
    #[arg(long, env = "SHEARSPEC_NU", allow_hyphen_values = true)]
    pub nu: Option<f64>,

    /// Wavenumber parameter, positive; exclusive with --alpha/--k
    #[arg(long, env = "SHEARSPEC_EPS", allow_hyphen_values = true)]
    pub eps: Option<f64>,

    /// Aspect ratio entering eps = alpha * |k|; requires --k
    #[arg(long, env = "SHEARSPEC_ALPHA", allow_hyphen_values = true)]
    pub alpha: Option<f64>,

    /// Streamwise wavenumber, nonzero integer; requires --alpha
    #[arg(long, env = "SHEARSPEC_K", allow_hyphen_values = true)]
    pub k: Option<i64>,

    /// Fourier truncation; defaults to max(32, band + 2)
    #[arg(long = "N", env = "SHEARSPEC_N")]
    pub n: Option<usize>,

    /// Decay index for block norms
    #[arg(long, env = "SHEARSPEC_S", allow_hyphen_values = true)]
    pub s: Option<f64>,

    /// Contour quadrature node count
    #[arg(long, env = "SHEARSPEC_NODES")]
    pub nodes: Option<usize>,

    /// Tolerance override as NAME=VALUE; repeatable
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    pub tol: Vec<String>,

    /// TOML config file merged below flags and environment
    #[arg(long, env = "SHEARSPEC_CONFIG")]
    pub config: Option<PathBuf>,

    /// Output file; standard output when absent
    #[arg(long, short = 'o', env = "SHEARSPEC_OUTPUT")]
    pub output: Option<PathBuf>,

    /// Output format: json or csv
    #[arg(long, env = "SHEARSPEC_FORMAT")]
    pub format: Option<String>,
}

/// Report serialization format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

/// Which of the physical parameters a subcommand requires; sweeps supply the
/// swept parameter themselves.
#[derive(Debug, Clone, Copy)]
pub struct Needs {
    pub nu: bool,
    pub eps: bool,
}

/// Both physical parameters required, the default for point commands.
pub const NEEDS_ALL: Needs = Needs { nu: true, eps: true };

/// `[params]` section of the config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileParams {
    pub profile: Option<String>,
    pub nu: Option<f64>,
    pub eps: Option<f64>,
    pub alpha: Option<f64>,
    pub k: Option<i64>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub s: Option<f64>,
    pub nodes: Option<usize>,
}

/// `[output]` section of the config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileOutput {
    pub path: Option<PathBuf>,
    pub format: Option<String>,
}

/// Full config file: `[params]`, `[tolerances]`, and `[output]` sections.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub params: FileParams,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output: FileOutput,
}

/// Fully resolved parameters for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub profile: ShearProfile,
    pub profile_name: String,
    pub nu: Option<f64>,
    pub eps: Option<f64>,
    pub wavenumber: Option<i64>,
    pub conjugate: bool,
    pub max_mode: usize,
    pub s: f64,
    pub nodes: usize,
    pub tolerances: BTreeMap<String, f64>,
    pub output: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

impl RunConfig {
    /// Viscosity; the merge step guarantees presence for commands that need it.
    pub fn nu(&self) -> f64 {
        self.nu.expect("nu resolved during merge")
    }

    /// Wavenumber parameter; the merge step guarantees presence when needed.
    pub fn eps(&self) -> f64 {
        self.eps.expect("eps resolved during merge")
    }

    /// Resolved tolerance for one of the known keys.
    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances[name]
    }
}

/// Merges flags and environment over the config file over defaults, then
/// validates the result.
pub fn merge(args: &CommonArgs, need: Needs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(path) => load_file(path)?,
        None => FileConfig::default(),
    };

    let profile_text = args
        .profile
        .clone()
        .or_else(|| file.params.profile.clone())
        .ok_or_else(|| Error::Domain("profile: required, a preset name or j:re:im triples".into()))?;
    let (profile_name, profile) = parse_profile(&profile_text)?;

    let nu = args.nu.or(file.params.nu);
    if let Some(v) = nu {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("nu: must be positive and finite, got {}", v)));
        }
    } else if need.nu {
        return Err(Error::Domain("nu: required".into()));
    }

    let (eps, wavenumber) = resolve_eps(args, &file, need.eps)?;
    let conjugate = wavenumber.map_or(false, |k| k < 0);

    let band = profile.band();
    let max_mode = args.n.or(file.params.n).unwrap_or_else(|| 32.max(band + 2));
    if max_mode < band + 2 {
        return Err(Error::Domain(format!(
            "N: must be at least band + 2 = {}, got {}",
            band + 2,
            max_mode
        )));
    }
    if max_mode > 4096 {
        return Err(Error::Domain(format!("N: must be at most 4096, got {}", max_mode)));
    }

    let s = args.s.or(file.params.s).unwrap_or(DEFAULT_DECAY_INDEX);
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("s: must be nonnegative, got {}", s)));
    }

    let nodes = args.nodes.or(file.params.nodes).unwrap_or(DEFAULT_NODES);
    if nodes < 4 {
        return Err(Error::Domain(format!("nodes: must be at least 4, got {}", nodes)));
    }

    let tolerances = resolve_tolerances(&args.tol, &file.tolerances)?;

    let output = args.output.clone().or(file.output.path);
    let format = match args.format.clone().or(file.output.format) {
        Some(text) => Some(parse_format(&text)?),
        None => None,
    };

    Ok(RunConfig {
        profile,
        profile_name,
        nu,
        eps,
        wavenumber,
        conjugate,
        max_mode,
        s,
        nodes,
        tolerances,
        output,
        format,
    })
}

/// Parses a preset name or comma-separated `j:re:im` triples.
pub fn parse_profile(text: &str) -> Result<(String, ShearProfile)> {
    if !text.contains(':') {
        return Ok((text.to_string(), ShearProfile::preset(text)?));
    }
    let mut modes: Vec<(i64, Complex64)> = Vec::new();
    let mut band: usize = 1;
    for item in text.split(',') {
        let item = item.trim();
        let parts: Vec<&str> = item.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Domain(format!(
                "profile: expected j:re:im triples, got '{}'",
                item
            )));
        }
        let j: i64 = parts[0].trim().parse().map_err(|_| {
            Error::Domain(format!("profile: cannot parse mode index '{}'", parts[0].trim()))
        })?;
        let re: f64 = parts[1].trim().parse().map_err(|_| {
            Error::Domain(format!("profile: cannot parse real part '{}'", parts[1].trim()))
        })?;
        let im: f64 = parts[2].trim().parse().map_err(|_| {
            Error::Domain(format!("profile: cannot parse imaginary part '{}'", parts[2].trim()))
        })?;
        band = band.max(j.unsigned_abs() as usize);
        modes.push((j, Complex64::new(re, im)));
    }
    let base = FourierFunction::from_modes(band, &modes)?;
    let profile = ShearProfile::new(base, 2.0)?;
    Ok(("custom".to_string(), profile))
}

fn resolve_eps(args: &CommonArgs, file: &FileConfig, required: bool) -> Result<(Option<f64>, Option<i64>)> {
    let cli_given = args.eps.is_some() || args.alpha.is_some() || args.k.is_some();
    let (eps, alpha, k) = if cli_given {
        (args.eps, args.alpha, args.k)
    } else {
        (file.params.eps, file.params.alpha, file.params.k)
    };
    match (eps, alpha, k) {
        (Some(e), None, None) => {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::Domain(format!("eps: must be positive and finite, got {}", e)));
            }
            Ok((Some(e), None))
        }
        (None, Some(a), Some(kk)) => {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::Domain(format!(
                    "alpha: must be positive and finite, got {}",
                    a
                )));
            }
            if kk == 0 {
                return Err(Error::Domain("k: must be a nonzero integer".into()));
            }
            Ok((Some(a * kk.unsigned_abs() as f64), Some(kk)))
        }
        (None, None, None) => {
            if required {
                Err(Error::Domain("eps: required, directly or through alpha and k".into()))
            } else {
                Ok((None, None))
            }
        }
        (None, Some(_), None) => Err(Error::Domain("k: required when alpha is given".into())),
        (None, None, Some(_)) => Err(Error::Domain("alpha: required when k is given".into())),
        _ => Err(Error::Domain(
            "eps, alpha, k: give either eps or the pair alpha and k, not both".into(),
        )),
    }
}

fn resolve_tolerances(
    cli: &[String],
    file: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, f64> = TOLERANCE_KEYS
        .iter()
        .map(|&(name, value)| (name.to_string(), value))
        .collect();
    for (name, &value) in file {
        check_tolerance(name, value)?;
        out.insert(name.clone(), value);
    }
    for item in cli {
        let (name, text) = item.split_once('=').ok_or_else(|| {
            Error::Domain(format!("tol: expected NAME=VALUE, got '{}'", item))
        })?;
        let value: f64 = text.parse().map_err(|_| {
            Error::Domain(format!("tol: cannot parse value '{}' for '{}'", text, name))
        })?;
        check_tolerance(name, value)?;
        out.insert(name.to_string(), value);
    }
    Ok(out)
}

fn check_tolerance(name: &str, value: f64) -> Result<()> {
    if !TOLERANCE_KEYS.iter().any(|&(known, _)| known == name) {
        return Err(Error::Domain(format!(
            "tolerances: unknown key '{}', known keys are block-diag and kato-residual",
            name
        )));
    }
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::Domain(format!(
            "tolerances: '{}' must be positive and finite, got {}",
            name, value
        )));
    }
    Ok(())
}

fn load_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Domain(format!("config: cannot read '{}': {}", path.display(), e))
    })?;
    toml::from_str(&text).map_err(|e| Error::Domain(format!("config: {}", e)))
}

fn parse_format(text: &str) -> Result<OutputFormat> {
    match text {
        "json" => Ok(OutputFormat::Json),
        "csv" => Ok(OutputFormat::Csv),
        other => Err(Error::Domain(format!("format: must be json or csv, got '{}'", other))),
    }
}
