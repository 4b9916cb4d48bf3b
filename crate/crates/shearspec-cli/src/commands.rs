//! Subcommand runners: each resolves its inputs, calls the library, and
//! emits one report in the configured format.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use shearspec::fourier::{l2_norm, partial_y_inverse};
use shearspec::kato::{
    kato_unstable_eigenpair, riesz_projection_with_nodes, stable_block_eigenvalues_kato,
    ProjectionSource,
};
use shearspec::normal_form::{block_diagonalize, decouple};
use shearspec::operators::{assemble, regime_small, to_full_vector, OperatorKind};
use shearspec::spectrum::{
    asymptotic_prediction, cross_validate, dense_spectrum, eigenfunction_field,
    least_squares_slope, shifted_profile, SpectralMethod, FIRST_ORDER_SLOPE,
};
use shearspec::{Error, Result};

use crate::config::{OutputFormat, RunConfig};
use crate::report::{
    complex_entry, eigenvalue_entries, emit, mode_entries, pair_entries, params_out,
    profile_report, to_json_text, ComplexEntry, EigenvalueEntry, ModeEntry, ParamsOut,
    ProfileReport,
};

/// Iteration cap for the block-diagonalizing fixed point.
const MAX_BLOCK_ITER: usize = 40;

/// Parameter axis a sweep walks along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Eps,
    Nu,
}

/// Picks the sweep axis from the two exclusive list flags.
pub fn sweep_axis(eps_list: &[f64], nu_list: &[f64]) -> Result<SweepAxis> {
    match (eps_list.is_empty(), nu_list.is_empty()) {
        (false, true) => Ok(SweepAxis::Eps),
        (true, false) => Ok(SweepAxis::Nu),
        (false, false) => Err(Error::Domain(
            "eps-list, nu-list: give exactly one of the two".into(),
        )),
        (true, true) => Err(Error::Domain(
            "eps-list: required for a sweep, or nu-list for a viscosity sweep".into(),
        )),
    }
}

fn operator_kind(label: &str) -> Result<OperatorKind> {
    let known = [
        OperatorKind::Diffusion,
        OperatorKind::TransportRemainder,
        OperatorKind::Dominant,
        OperatorKind::Linearized,
        OperatorKind::Reduced,
        OperatorKind::ReducedAdjoint,
        OperatorKind::ReducedShifted,
        OperatorKind::TaylorApprox,
    ];
    known.iter().copied().find(|k| k.label() == label).ok_or_else(|| {
        let names: Vec<&str> = known.iter().map(|k| k.label()).collect();
        Error::Domain(format!(
            "operator: unknown label '{}', known labels are {}",
            label,
            names.join(", ")
        ))
    })
}

fn resolved_format(cfg: &RunConfig, default: OutputFormat) -> OutputFormat {
    cfg.format.unwrap_or(default)
}

#[derive(Serialize)]
struct SpectrumOutput {
    command: &'static str,
    operator: String,
    method: &'static str,
    params: ParamsOut,
    profile: ProfileReport,
    leading: Option<ComplexEntry>,
    unstable_count: usize,
    prediction: Option<ComplexEntry>,
    deviation: Option<f64>,
    eigenvalues: Vec<EigenvalueEntry>,
}

/// Dense spectrum of one assembled operator.
pub fn run_spectrum(cfg: &RunConfig, operator: &str) -> Result<()> {
    let kind = operator_kind(operator)?;
    let op = assemble(kind, &cfg.profile, cfg.nu(), cfg.eps(), cfg.max_mode)?;
    let mut report = dense_spectrum(&op)?;
    let (prediction, deviation) = if kind == OperatorKind::Linearized {
        report.attach_prediction(&cfg.profile)?;
        (
            Some(complex_entry(report.prediction, cfg.conjugate)),
            Some(report.deviation),
        )
    } else {
        (None, None)
    };
    let out = SpectrumOutput {
        command: "spectrum",
        operator: kind.label().to_string(),
        method: SpectralMethod::Dense.label(),
        params: params_out(cfg),
        profile: profile_report(&cfg.profile_name, &cfg.profile),
        leading: report.leading().map(|z| complex_entry(z, cfg.conjugate)),
        unstable_count: report.unstable_count(),
        prediction,
        deviation,
        eigenvalues: eigenvalue_entries(&report, cfg.conjugate),
    };
    match resolved_format(cfg, OutputFormat::Json) {
        OutputFormat::Json => emit(cfg, &to_json_text(&out)?),
        OutputFormat::Csv => {
            let mut text = String::from("re,im,block,tag\n");
            for e in &out.eigenvalues {
                text.push_str(&format!("{},{},{},{}\n", e.re, e.im, e.block, e.tag));
            }
            emit(cfg, &text)
        }
    }
}

#[derive(Serialize)]
struct MethodOutput {
    method: &'static str,
    lambda: ComplexEntry,
    gap: f64,
    alignment: f64,
    ansatz_distance: f64,
}

#[derive(Serialize)]
struct AgreementOutput {
    stable_block_gap: f64,
    blocks_compared: usize,
}

#[derive(Serialize)]
struct UnstableEntryOut {
    re: f64,
    im: f64,
    residual: f64,
}

#[derive(Serialize)]
struct UnstableOutput {
    command: &'static str,
    params: ParamsOut,
    profile: ProfileReport,
    methods: Vec<MethodOutput>,
    agreement: AgreementOutput,
    unstable: Option<UnstableEntryOut>,
    prediction: ComplexEntry,
    deviation: f64,
    eigenvalues: Vec<EigenvalueEntry>,
}

/// Unstable eigenpair by three routes, checked against the dispersion
/// prediction.
pub fn run_unstable(cfg: &RunConfig) -> Result<()> {
    let cv = cross_validate(&cfg.profile, cfg.nu(), cfg.eps(), cfg.max_mode)?;
    let dense = &cv.dense;
    let dense_leading = dense
        .leading()
        .ok_or_else(|| Error::Eigensolver("empty spectrum".into()))?;
    let methods = vec![
        MethodOutput {
            method: SpectralMethod::Dense.label(),
            lambda: complex_entry(dense_leading, cfg.conjugate),
            gap: 0.0,
            alignment: 1.0,
            ansatz_distance: cv.dense_ansatz_distance,
        },
        MethodOutput {
            method: SpectralMethod::Kato.label(),
            lambda: complex_entry(cv.kato_value, cfg.conjugate),
            gap: cv.kato_gap,
            alignment: cv.kato_alignment,
            ansatz_distance: cv.kato_ansatz_distance,
        },
        MethodOutput {
            method: SpectralMethod::NormalForm.label(),
            lambda: complex_entry(cv.normal_form_value, cfg.conjugate),
            gap: cv.normal_form_gap,
            alignment: cv.normal_form_alignment,
            ansatz_distance: cv.normal_form_ansatz_distance,
        },
    ];
    let out = UnstableOutput {
        command: "unstable",
        params: params_out(cfg),
        profile: profile_report(&cfg.profile_name, &cfg.profile),
        methods,
        agreement: AgreementOutput {
            stable_block_gap: cv.stable_block_gap,
            blocks_compared: cv.blocks_compared,
        },
        unstable: dense.unstable.as_ref().map(|p| {
            let z = complex_entry(p.value, cfg.conjugate);
            UnstableEntryOut {
                re: z.re,
                im: z.im,
                residual: p.residual,
            }
        }),
        prediction: complex_entry(dense.prediction, cfg.conjugate),
        deviation: dense.deviation,
        eigenvalues: eigenvalue_entries(dense, cfg.conjugate),
    };
    match resolved_format(cfg, OutputFormat::Json) {
        OutputFormat::Json => emit(cfg, &to_json_text(&out)?),
        OutputFormat::Csv => {
            let mut text = String::from("method,lambda_re,lambda_im,gap,alignment,ansatz_distance\n");
            for m in &out.methods {
                text.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    m.method, m.lambda.re, m.lambda.im, m.gap, m.alignment, m.ansatz_distance
                ));
            }
            emit(cfg, &text)
        }
    }
}

#[derive(Serialize)]
struct KatoPairOutput {
    lambda: ComplexEntry,
    residual: f64,
    ansatz_distance: f64,
    projection_defect: f64,
    difference_norm: f64,
    exchange_min_sv: f64,
    square_min_sv: f64,
    eigenfunction: Vec<ModeEntry>,
}

#[derive(Serialize)]
struct KatoBlockOutput {
    block: usize,
    eigenvalues: [ComplexEntry; 2],
    separation: f64,
    degenerate: bool,
    idempotency_defect: f64,
    difference_norm: f64,
    exchange_min_sv: f64,
    square_min_sv: f64,
}

#[derive(Serialize)]
struct ProjectionOutput {
    source: &'static str,
    block: usize,
    center: ComplexEntry,
    radius: f64,
    nodes: usize,
    idempotency_defect: f64,
    rank: usize,
}

#[derive(Serialize)]
struct KatoOutput {
    command: &'static str,
    params: ParamsOut,
    profile: ProfileReport,
    unstable: KatoPairOutput,
    blocks: Vec<KatoBlockOutput>,
    projections: Vec<ProjectionOutput>,
}

/// Contour projections with their exchange diagnostics, block by block.
pub fn run_kato(cfg: &RunConfig, blocks: usize) -> Result<()> {
    if blocks == 0 || blocks >= cfg.max_mode {
        return Err(Error::Domain(format!(
            "blocks: must be between 1 and N - 1 = {}, got {}",
            cfg.max_mode - 1,
            blocks
        )));
    }
    let u = &cfg.profile;
    let pair = kato_unstable_eigenpair(
        u,
        cfg.nu(),
        cfg.eps(),
        cfg.max_mode,
        cfg.tolerance("kato-residual"),
    )?;
    let stable = stable_block_eigenvalues_kato(u, cfg.nu(), cfg.eps(), cfg.max_mode, blocks)?;
    let mut projections = Vec::new();
    for j in 0..=blocks {
        let p = riesz_projection_with_nodes(
            ProjectionSource::Linearized,
            j,
            u,
            cfg.nu(),
            cfg.eps(),
            cfg.max_mode,
            cfg.nodes,
        )?;
        projections.push(ProjectionOutput {
            source: p.source.label(),
            block: p.block_index,
            center: ComplexEntry::new(p.contour.center),
            radius: p.contour.radius,
            nodes: p.contour.nodes,
            idempotency_defect: p.idempotency_defect,
            rank: p.numerical_rank,
        });
    }
    let out = KatoOutput {
        command: "kato",
        params: params_out(cfg),
        profile: profile_report(&cfg.profile_name, &cfg.profile),
        unstable: KatoPairOutput {
            lambda: complex_entry(pair.lambda, cfg.conjugate),
            residual: pair.residual,
            ansatz_distance: pair.ansatz_distance,
            projection_defect: pair.projection_defect,
            difference_norm: pair.diagnostics.difference_norm,
            exchange_min_sv: pair.diagnostics.exchange_min_sv,
            square_min_sv: pair.diagnostics.square_min_sv,
            eigenfunction: mode_entries(&pair.eigenfunction, cfg.conjugate),
        },
        blocks: stable
            .iter()
            .map(|b| KatoBlockOutput {
                block: b.block_index,
                eigenvalues: pair_entries(b.eigenvalues, cfg.conjugate),
                separation: b.separation,
                degenerate: b.degenerate,
                idempotency_defect: b.idempotency_defect,
                difference_norm: b.diagnostics.difference_norm,
                exchange_min_sv: b.diagnostics.exchange_min_sv,
                square_min_sv: b.diagnostics.square_min_sv,
            })
            .collect(),
        projections,
    };
    match resolved_format(cfg, OutputFormat::Json) {
        OutputFormat::Json => emit(cfg, &to_json_text(&out)?),
        OutputFormat::Csv => {
            let mut text =
                String::from("source,block,center_re,center_im,radius,nodes,idempotency_defect,rank\n");
            for p in &out.projections {
                text.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    p.source,
                    p.block,
                    p.center.re,
                    p.center.im,
                    p.radius,
                    p.nodes,
                    p.idempotency_defect,
                    p.rank
                ));
            }
            emit(cfg, &text)
        }
    }
}

#[derive(Serialize)]
struct BlockEigsOutput {
    block: usize,
    eigenvalues: [ComplexEntry; 2],
}

#[derive(Serialize)]
struct NormalFormOutput {
    command: &'static str,
    params: ParamsOut,
    profile: ProfileReport,
    lambda0: ComplexEntry,
    denominator: ComplexEntry,
    residual_b: f64,
    residual_c: f64,
    x: Vec<ModeEntry>,
    y: Vec<ModeEntry>,
    eigenvector: Vec<ModeEntry>,
    blocks: Vec<BlockEigsOutput>,
    off_diagonal_residual: f64,
    psi_decay_norm: f64,
    iterations: usize,
}

/// Normal-form reduction: generators, decoupled eigenvalue, block spectra.
pub fn run_normalform(cfg: &RunConfig, blocks: usize) -> Result<()> {
    if blocks == 0 {
        return Err(Error::Domain("blocks: must be at least 1".into()));
    }
    let form = decouple(&cfg.profile, cfg.nu(), cfg.eps(), cfg.max_mode)?;
    let (_, eigenvector) = form.unstable_eigenpair();
    let bd = block_diagonalize(
        &form.l1,
        cfg.nu(),
        cfg.max_mode,
        cfg.s,
        cfg.tolerance("block-diag"),
        MAX_BLOCK_ITER,
    )?;
    let block_rows: Vec<BlockEigsOutput> = bd
        .block_eigenvalues()
        .into_iter()
        .filter(|(j, _)| *j <= blocks)
        .map(|(j, pair)| BlockEigsOutput {
            block: j,
            eigenvalues: pair_entries(pair, cfg.conjugate),
        })
        .collect();
    let out = NormalFormOutput {
        command: "normalform",
        params: params_out(cfg),
        profile: profile_report(&cfg.profile_name, &cfg.profile),
        lambda0: complex_entry(form.lambda0, cfg.conjugate),
        denominator: complex_entry(form.denominator(), cfg.conjugate),
        residual_b: form.residual_b,
        residual_c: form.residual_c,
        x: mode_entries(&form.x, cfg.conjugate),
        y: mode_entries(&form.y, cfg.conjugate),
        eigenvector: mode_entries(&eigenvector, cfg.conjugate),
        blocks: block_rows,
        off_diagonal_residual: bd.off_diagonal_residual,
        psi_decay_norm: bd.psi.decay_norm(),
        iterations: bd.iterations,
    };
    match resolved_format(cfg, OutputFormat::Json) {
        OutputFormat::Json => emit(cfg, &to_json_text(&out)?),
        OutputFormat::Csv => {
            let mut text = String::from("block,eig1_re,eig1_im,eig2_re,eig2_im\n");
            for b in &out.blocks {
                text.push_str(&format!(
                    "{},{},{},{},{}\n",
                    b.block,
                    b.eigenvalues[0].re,
                    b.eigenvalues[0].im,
                    b.eigenvalues[1].re,
                    b.eigenvalues[1].im
                ));
            }
            emit(cfg, &text)
        }
    }
}

#[derive(Serialize)]
struct TaylorOutput {
    command: &'static str,
    params: ParamsOut,
    profile: ProfileReport,
    mu: ComplexEntry,
    prediction: ComplexEntry,
    deviation: f64,
    normalized_error: f64,
}

/// Leading eigenvalue of the dispersion comparison operator against its
/// closed form.
pub fn run_taylor(cfg: &RunConfig) -> Result<()> {
    let (mu, prediction) = shearspec::spectrum::taylor_dispersion_eigenvalue(
        &cfg.profile,
        cfg.nu(),
        cfg.eps(),
        cfg.max_mode,
    )?;
    let deviation = (mu - prediction).norm();
    let out = TaylorOutput {
        command: "taylor",
        params: params_out(cfg),
        profile: profile_report(&cfg.profile_name, &cfg.profile),
        mu: complex_entry(mu, cfg.conjugate),
        prediction: complex_entry(prediction, cfg.conjugate),
        deviation,
        normalized_error: deviation / prediction.norm(),
    };
    match resolved_format(cfg, OutputFormat::Json) {
        OutputFormat::Json => emit(cfg, &to_json_text(&out)?),
        OutputFormat::Csv => {
            let text = format!(
                "mu_re,mu_im,prediction_re,prediction_im,deviation,normalized_error\n{},{},{},{},{},{}\n",
                out.mu.re,
                out.mu.im,
                out.prediction.re,
                out.prediction.im,
                out.deviation,
                out.normalized_error
            );
            emit(cfg, &text)
        }
    }
}

#[derive(Serialize)]
struct SweepPointOutput {
    nu: f64,
    eps: f64,
    lambda: ComplexEntry,
    prediction: ComplexEntry,
    normalized_error: f64,
    in_regime: bool,
}

#[derive(Serialize)]
struct SweepOutput {
    command: &'static str,
    parameter: &'static str,
    params: ParamsOut,
    profile: ProfileReport,
    points: Vec<SweepPointOutput>,
    slope: Option<f64>,
    first_order: Option<bool>,
    in_regime_points: usize,
}

fn sweep_point(
    cfg: &RunConfig,
    axis: SweepAxis,
    value: f64,
    anti_sq: f64,
) -> Result<SweepPointOutput> {
    let (nu, eps) = match axis {
        SweepAxis::Eps => (cfg.nu(), value),
        SweepAxis::Nu => (value, cfg.eps()),
    };
    let op = assemble(OperatorKind::Linearized, &cfg.profile, nu, eps, cfg.max_mode)?;
    let report = dense_spectrum(&op)?;
    let lambda = report
        .leading()
        .ok_or_else(|| Error::Eigensolver("empty spectrum".into()))?;
    let prediction = asymptotic_prediction(&cfg.profile, nu, eps)?;
    let target = anti_sq - nu * nu;
    let normalized_error =
        (lambda * Complex64::new(nu / (eps * eps), 0.0) - Complex64::new(target, 0.0)).norm();
    Ok(SweepPointOutput {
        nu,
        eps,
        lambda: complex_entry(lambda, cfg.conjugate),
        prediction: complex_entry(prediction, cfg.conjugate),
        normalized_error,
        in_regime: regime_small(&cfg.profile, nu, eps),
    })
}

/// Grid sweep over one parameter with a scaling fit, computed on a worker
/// pool and merged in ascending parameter order.
pub fn run_sweep(
    cfg: &RunConfig,
    axis: SweepAxis,
    eps_list: &[f64],
    nu_list: &[f64],
    jobs: Option<usize>,
) -> Result<()> {
    if jobs == Some(0) {
        return Err(Error::Domain("jobs: must be at least 1".into()));
    }
    let (mut values, list_name) = match axis {
        SweepAxis::Eps => (eps_list.to_vec(), "eps-list"),
        SweepAxis::Nu => (nu_list.to_vec(), "nu-list"),
    };
    for &v in &values {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!(
                "{}: values must be positive and finite, got {}",
                list_name, v
            )));
        }
    }
    values.sort_by(f64::total_cmp);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Domain(format!("jobs: cannot build worker pool: {}", e)))?;
    let anti = partial_y_inverse(cfg.profile.function())?;
    let anti_sq = l2_norm(&anti).powi(2);
    let points: Vec<SweepPointOutput> = pool.install(|| {
        values
            .par_iter()
            .map(|&v| sweep_point(cfg, axis, v, anti_sq))
            .collect::<Result<Vec<_>>>()
    })?;
    let (slope, first_order) = match axis {
        SweepAxis::Eps => {
            let fit: Vec<(f64, f64)> = points
                .iter()
                .filter(|p| p.in_regime && p.normalized_error > 0.0)
                .map(|p| (p.eps.ln(), p.normalized_error.ln()))
                .collect();
            if fit.len() < 2 {
                (None, None)
            } else {
                let s = least_squares_slope(&fit);
                (Some(s), Some(s >= FIRST_ORDER_SLOPE))
            }
        }
        SweepAxis::Nu => {
            let fit: Vec<(f64, f64)> = points
                .iter()
                .filter(|p| p.in_regime)
                .map(|p| (p.prediction.re, p.lambda.re))
                .collect();
            let lo = fit.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
            let hi = fit.iter().map(|f| f.0).fold(f64::NEG_INFINITY, f64::max);
            if fit.len() < 2 || !(hi - lo > 0.0) {
                (None, None)
            } else {
                (Some(least_squares_slope(&fit)), None)
            }
        }
    };
    let mut params = params_out(cfg);
    match axis {
        SweepAxis::Eps => params.eps = None,
        SweepAxis::Nu => params.nu = None,
    }
    let in_regime_points = points.iter().filter(|p| p.in_regime).count();
    let out = SweepOutput {
        command: "sweep",
        parameter: match axis {
            SweepAxis::Eps => "eps",
            SweepAxis::Nu => "nu",
        },
        params,
        profile: profile_report(&cfg.profile_name, &cfg.profile),
        points,
        slope,
        first_order,
        in_regime_points,
    };
    match resolved_format(cfg, OutputFormat::Json) {
        OutputFormat::Json => emit(cfg, &to_json_text(&out)?),
        OutputFormat::Csv => {
            let mut text = String::from(
                "nu,eps,lambda_re,lambda_im,prediction_re,prediction_im,normalized_error,in_regime\n",
            );
            for p in &out.points {
                text.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    p.nu,
                    p.eps,
                    p.lambda.re,
                    p.lambda.im,
                    p.prediction.re,
                    p.prediction.im,
                    p.normalized_error,
                    p.in_regime
                ));
            }
            emit(cfg, &text)
        }
    }
}

#[derive(Serialize)]
struct TruncationRow {
    #[serde(rename = "N")]
    max_mode: usize,
    leading: ComplexEntry,
    gap_to_finest: f64,
}

#[derive(Serialize)]
struct QuadratureRow {
    nodes: usize,
    lambda: ComplexEntry,
    idempotency_defect: f64,
    gap_to_finest: f64,
}

#[derive(Serialize)]
struct ConvergenceOutput {
    command: &'static str,
    params: ParamsOut,
    profile: ProfileReport,
    truncation: Vec<TruncationRow>,
    quadrature: Vec<QuadratureRow>,
}

/// Refinement tables: leading eigenvalue against the truncation, projected
/// Rayleigh quotient against the quadrature node count.
pub fn run_convergence(cfg: &RunConfig, n_list: &[usize], nodes_list: &[usize]) -> Result<()> {
    let band = cfg.profile.band();
    let mut ns: Vec<usize> = if n_list.is_empty() {
        [
            cfg.max_mode / 4,
            cfg.max_mode / 2,
            3 * cfg.max_mode / 4,
            cfg.max_mode,
        ]
        .iter()
        .map(|&n| n.max(band + 2))
        .collect()
    } else {
        for &n in n_list {
            if n < band + 2 {
                return Err(Error::Domain(format!(
                    "n-list: entries must be at least band + 2 = {}, got {}",
                    band + 2,
                    n
                )));
            }
            if n > 4096 {
                return Err(Error::Domain(format!(
                    "n-list: entries must be at most 4096, got {}",
                    n
                )));
            }
        }
        n_list.to_vec()
    };
    ns.sort_unstable();
    ns.dedup();
    let mut node_counts: Vec<usize> = if nodes_list.is_empty() {
        vec![32, 64, 128, 256]
    } else {
        for &m in nodes_list {
            if m < 4 {
                return Err(Error::Domain(format!(
                    "nodes-list: entries must be at least 4, got {}",
                    m
                )));
            }
        }
        nodes_list.to_vec()
    };
    node_counts.sort_unstable();
    node_counts.dedup();

    let u = &cfg.profile;
    let mut leaders = Vec::with_capacity(ns.len());
    for &n in &ns {
        let op = assemble(OperatorKind::Linearized, u, cfg.nu(), cfg.eps(), n)?;
        let report = dense_spectrum(&op)?;
        leaders.push(
            report
                .leading()
                .ok_or_else(|| Error::Eigensolver("empty spectrum".into()))?,
        );
    }
    let finest = *leaders.last().expect("at least one truncation");
    let truncation: Vec<TruncationRow> = ns
        .iter()
        .zip(&leaders)
        .map(|(&n, &z)| TruncationRow {
            max_mode: n,
            leading: complex_entry(z, cfg.conjugate),
            gap_to_finest: (z - finest).norm(),
        })
        .collect();

    let op = assemble(OperatorKind::Linearized, u, cfg.nu(), cfg.eps(), cfg.max_mode)?;
    let ansatz = to_full_vector(
        &shifted_profile(u, cfg.nu(), cfg.eps(), cfg.max_mode),
        cfg.max_mode,
    );
    let mut quotients = Vec::with_capacity(node_counts.len());
    let mut defects = Vec::with_capacity(node_counts.len());
    for &m in &node_counts {
        let p = riesz_projection_with_nodes(
            ProjectionSource::Linearized,
            0,
            u,
            cfg.nu(),
            cfg.eps(),
            cfg.max_mode,
            m,
        )?;
        let v = &p.matrix * &ansatz;
        let denom = v.dotc(&v).re;
        if !(denom > 1e-300) {
            return Err(Error::Eigensolver(
                "projected ansatz vanished, cannot form a Rayleigh quotient".into(),
            ));
        }
        let lv = op.entries() * &v;
        quotients.push(v.dotc(&lv) / Complex64::new(denom, 0.0));
        defects.push(p.idempotency_defect);
    }
    let finest_q = *quotients.last().expect("at least one node count");
    let quadrature: Vec<QuadratureRow> = node_counts
        .iter()
        .zip(quotients.iter().zip(&defects))
        .map(|(&m, (&z, &defect))| QuadratureRow {
            nodes: m,
            lambda: complex_entry(z, cfg.conjugate),
            idempotency_defect: defect,
            gap_to_finest: (z - finest_q).norm(),
        })
        .collect();

    let out = ConvergenceOutput {
        command: "convergence",
        params: params_out(cfg),
        profile: profile_report(&cfg.profile_name, &cfg.profile),
        truncation,
        quadrature,
    };
    match resolved_format(cfg, OutputFormat::Json) {
        OutputFormat::Json => emit(cfg, &to_json_text(&out)?),
        OutputFormat::Csv => {
            let mut text =
                String::from("stage,parameter,lambda_re,lambda_im,idempotency_defect,gap_to_finest\n");
            for r in &out.truncation {
                text.push_str(&format!(
                    "truncation,{},{},{},,{}\n",
                    r.max_mode, r.leading.re, r.leading.im, r.gap_to_finest
                ));
            }
            for r in &out.quadrature {
                text.push_str(&format!(
                    "quadrature,{},{},{},{},{}\n",
                    r.nodes, r.lambda.re, r.lambda.im, r.idempotency_defect, r.gap_to_finest
                ));
            }
            emit(cfg, &text)
        }
    }
}

#[derive(Serialize)]
struct FieldRow {
    x: f64,
    y: f64,
    value: f64,
}

#[derive(Serialize)]
struct FieldOutput {
    command: &'static str,
    params: ParamsOut,
    profile: ProfileReport,
    lambda: ComplexEntry,
    nx: usize,
    ny: usize,
    eps_over_k: f64,
    rows: Vec<FieldRow>,
}

fn parse_grid(text: &str) -> Result<(usize, usize)> {
    let (a, b) = text
        .split_once('x')
        .ok_or_else(|| Error::Domain(format!("grid: expected <nx>x<ny>, got '{}'", text)))?;
    let nx: usize = a
        .trim()
        .parse()
        .map_err(|_| Error::Domain(format!("grid: cannot parse x count '{}'", a.trim())))?;
    let ny: usize = b
        .trim()
        .parse()
        .map_err(|_| Error::Domain(format!("grid: cannot parse y count '{}'", b.trim())))?;
    Ok((nx, ny))
}

/// Samples the reconstructed unstable eigenfunction on an x-y grid.
pub fn run_field(cfg: &RunConfig, grid: &str) -> Result<()> {
    let (nx, ny) = parse_grid(grid)?;
    let form = decouple(&cfg.profile, cfg.nu(), cfg.eps(), cfg.max_mode)?;
    let (lambda, eigenfunction) = form.unstable_eigenpair();
    let eps_over_k = match cfg.wavenumber {
        Some(k) => cfg.eps() / k.unsigned_abs() as f64,
        None => cfg.eps(),
    };
    let field = eigenfunction_field(&eigenfunction, eps_over_k, (nx, ny))?;
    match resolved_format(cfg, OutputFormat::Csv) {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            field
                .write_csv(&mut buf)
                .map_err(|e| Error::Domain(format!("output: cannot encode CSV: {}", e)))?;
            let text = String::from_utf8(buf)
                .map_err(|e| Error::Domain(format!("output: CSV is not UTF-8: {}", e)))?;
            emit(cfg, &text)
        }
        OutputFormat::Json => {
            let mut rows = Vec::with_capacity(nx * ny);
            for ix in 0..nx {
                for iy in 0..ny {
                    rows.push(FieldRow {
                        x: field.x_coord(ix),
                        y: field.y_coord(iy),
                        value: field.value(ix, iy),
                    });
                }
            }
            let out = FieldOutput {
                command: "field",
                params: params_out(cfg),
                profile: profile_report(&cfg.profile_name, &cfg.profile),
                lambda: complex_entry(lambda, cfg.conjugate),
                nx,
                ny,
                eps_over_k,
                rows,
            };
            emit(cfg, &to_json_text(&out)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operator_labels_resolve() {
        assert_eq!(operator_kind("linearized").unwrap(), OperatorKind::Linearized);
        assert_eq!(operator_kind("taylor").unwrap(), OperatorKind::TaylorApprox);
        assert_eq!(
            operator_kind("reduced-adjoint").unwrap(),
            OperatorKind::ReducedAdjoint
        );
        let err = operator_kind("laplacian").unwrap_err().to_string();
        assert!(err.contains("laplacian") && err.contains("linearized"), "{}", err);
    }

    #[test]
    fn grid_strings_parse() {
        assert_eq!(parse_grid("64x48").unwrap(), (64, 48));
        assert_eq!(parse_grid("128x128").unwrap(), (128, 128));
        assert!(parse_grid("64").is_err());
        assert!(parse_grid("axb").is_err());
    }

    #[test]
    fn sweep_axis_is_exclusive() {
        assert_eq!(sweep_axis(&[1e-2], &[]).unwrap(), SweepAxis::Eps);
        assert_eq!(sweep_axis(&[], &[0.5]).unwrap(), SweepAxis::Nu);
        assert!(sweep_axis(&[1e-2], &[0.5]).is_err());
        assert!(sweep_axis(&[], &[]).is_err());
    }
}
