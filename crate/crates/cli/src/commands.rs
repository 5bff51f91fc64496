//! The four subcommands: degrade, restore, evaluate and sweep.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use svsnltv::metrics::scielab_count_with;
use svsnltv::{
    add_noise, build_channel_graphs, build_graph, convolve_periodic, load_image, psnr, qssim,
    read_graph, save_image, solve, ssim, write_graph, ColorImage, ConvolutionMethod, GraphSet,
    MetricsReport, NonlocalGraph, PatchParams, RestoreResult,
};

use crate::config::{Method, RunConfig};
use crate::CliError;

type Image = ColorImage<f64>;

/// Graphs for either regularizer, owned.
#[derive(Clone, Debug)]
pub enum Graphs {
    Svs(NonlocalGraph<f64>),
    Nltv(Box<[NonlocalGraph<f64>; 3]>),
}

impl Graphs {
    pub fn set(&self) -> GraphSet<'_, f64> {
        match self {
            Graphs::Svs(g) => GraphSet::SaturationValue(g),
            Graphs::Nltv(gs) => GraphSet::PerChannel(gs),
        }
    }

    fn records(&self) -> Vec<&NonlocalGraph<f64>> {
        match self {
            Graphs::Svs(g) => vec![g],
            Graphs::Nltv(gs) => gs.iter().collect(),
        }
    }
}

fn mean_intensity(f: &Image) -> f64 {
    let total: f64 = f.planes().iter().map(|p| p.sum()).sum();
    total / (3 * f.pixel_count()) as f64
}

/// Patch parameters with `h0` resolved against the observation.
pub fn resolved_patch(f: &Image, cfg: &RunConfig) -> PatchParams {
    PatchParams {
        h0: cfg.resolved_h0(mean_intensity(f)),
        ..cfg.patch.clone()
    }
}

/// Builds the graph(s) the configured method regularizes with.
pub fn build_graphs(f: &Image, cfg: &RunConfig) -> Result<Graphs, CliError> {
    let patch = resolved_patch(f, cfg);
    Ok(match cfg.method {
        Method::Svs => Graphs::Svs(build_graph(f, &patch)?),
        Method::Nltv => Graphs::Nltv(Box::new(build_channel_graphs(f, &patch)?)),
    })
}

fn read_cache(path: &Path, f: &Image, method: Method) -> Result<Graphs, CliError> {
    let (h, w) = f.dims();
    let file = File::open(path)
        .map_err(|e| CliError::Io(format!("cannot read graph cache {}: {e}", path.display())))?;
    let mut reader = BufReader::new(file);
    let graphs = match method {
        Method::Svs => Graphs::Svs(read_graph(&mut reader, h, w)?),
        Method::Nltv => Graphs::Nltv(Box::new([
            read_graph(&mut reader, h, w)?,
            read_graph(&mut reader, h, w)?,
            read_graph(&mut reader, h, w)?,
        ])),
    };
    let mut rest = [0u8; 1];
    if reader.read(&mut rest)? != 0 {
        return Err(svsnltv::Error::CorruptGraph(format!(
            "{} holds more graphs than the {:?} method uses",
            path.display(),
            method
        ))
        .into());
    }
    Ok(graphs)
}

fn write_cache(path: &Path, graphs: &Graphs) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::Io(format!("cannot write graph cache {}: {e}", path.display())))?;
    let mut writer = BufWriter::new(file);
    for g in graphs.records() {
        write_graph(g, &mut writer)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads graphs from `cache` when it exists, otherwise builds them and, if a
/// cache path was given, stores them there.
pub fn load_or_build_graphs(
    f: &Image,
    cfg: &RunConfig,
    cache: Option<&Path>,
) -> Result<Graphs, CliError> {
    match cache {
        Some(path) if path.exists() => read_cache(path, f, cfg.method),
        Some(path) => {
            let graphs = build_graphs(f, cfg)?;
            write_cache(path, &graphs)?;
            Ok(graphs)
        }
        None => build_graphs(f, cfg),
    }
}

/// Blur (if configured) followed by noise (if configured).
pub fn degrade(clean: &Image, cfg: &RunConfig) -> Result<Image, CliError> {
    let kernel = cfg.blur.kernel()?;
    let blurred = if kernel.is_identity() {
        clean.clone()
    } else {
        convolve_periodic(clean, &kernel, ConvolutionMethod::Spatial)?
    };
    Ok(match cfg.noise_spec() {
        Some(spec) => add_noise(&blurred, &spec)?,
        None => blurred,
    })
}

pub fn restore(
    f: &Image,
    graphs: &Graphs,
    cfg: &RunConfig,
) -> Result<RestoreResult<f64>, CliError> {
    let kernel = cfg.blur.kernel()?;
    let solver = cfg.solver_config(&resolved_patch(f, cfg));
    Ok(solve(f, &kernel, graphs.set(), &solver, cfg.fidelity)?)
}

pub fn evaluate_pair(a: &Image, b: &Image, cfg: &RunConfig) -> Result<MetricsReport, CliError> {
    Ok(MetricsReport {
        psnr: psnr(a, b)?,
        ssim: ssim(a, b)?,
        qssim: qssim(a, b)?,
        scielab_count: scielab_count_with(a, b, cfg.scielab_threshold, cfg.samples_per_degree)?,
    })
}

fn fmt_real(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        v.to_string()
    }
}

fn metrics_cells(m: &MetricsReport) -> String {
    format!(
        "{},{},{},{}",
        fmt_real(m.psnr),
        fmt_real(m.ssim),
        fmt_real(m.qssim),
        m.scielab_count
    )
}

fn header(cfg: &RunConfig) -> String {
    let mut s = cfg.echo();
    s.push_str("# ssim_mode = per-channel mean\n");
    s
}

pub fn trace_csv(cfg: &RunConfig, result: &RestoreResult<f64>) -> String {
    let mut s = cfg.echo();
    s.push_str("iter,objective,rel_err\n");
    for (k, (obj, rel)) in result
        .objective_trace
        .iter()
        .zip(&result.rel_err_trace)
        .enumerate()
    {
        s.push_str(&format!(
            "{},{},{}\n",
            k + 1,
            fmt_real(*obj),
            fmt_real(*rel)
        ));
    }
    s
}

pub const EVALUATE_HEADER: &str = "restored,reference,psnr,ssim,qssim,scielab_count";
pub const SWEEP_HEADER: &str = "kind,alpha,psnr,ssim,qssim,scielab_count";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub metrics: MetricsReport,
}

/// `lo, lo + step, ...` up to `hi` inclusive.
pub fn alpha_range(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || !(step > 0.0) || lo > hi {
        return Err(CliError::Usage(format!(
            "empty alpha range {lo}:{hi}:{step}"
        )));
    }
    if lo < 0.0 {
        return Err(CliError::Usage(format!(
            "alpha range starts below zero at {lo}"
        )));
    }
    let count = ((hi - lo) / step * (1.0 + 1e-12)).floor() as usize + 1;
    // Round off the accumulated representation error so 0.1 + 2 * 0.1 prints as 0.3.
    Ok((0..count)
        .map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// `[sqrt(N)/1000, sqrt(N)/10]` with `N` the pixel count.
pub fn paper_range(height: usize, width: usize) -> (f64, f64) {
    let root = ((height * width) as f64).sqrt();
    (root / 1000.0, root / 10.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SweepRange {
    Explicit { lo: f64, hi: f64, step: f64 },
    Paper { step: f64 },
}

impl SweepRange {
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = spec.split(':').collect();
        let [lo, hi, step] = parts.as_slice() else {
            return Err(CliError::Usage(format!(
                "range '{spec}' must be lo:hi:step"
            )));
        };
        Ok(SweepRange::Explicit {
            lo: crate::config::parse_real(lo)?,
            hi: crate::config::parse_real(hi)?,
            step: crate::config::parse_real(step)?,
        })
    }

    pub fn alphas(&self, height: usize, width: usize) -> Result<Vec<f64>, CliError> {
        match *self {
            SweepRange::Explicit { lo, hi, step } => alpha_range(lo, hi, step),
            SweepRange::Paper { step } => {
                let (lo, hi) = paper_range(height, width);
                alpha_range(lo, hi, step)
            }
        }
    }
}

/// Restores once per `alpha` with shared graphs and scores each result.
pub fn sweep(
    f: &Image,
    reference: &Image,
    graphs: &Graphs,
    cfg: &RunConfig,
    alphas: &[f64],
) -> Result<Vec<SweepRow>, CliError> {
    if alphas.is_empty() {
        return Err(CliError::Usage("empty alpha range".into()));
    }
    f.check_same_dims(reference)?;
    alphas
        .par_iter()
        .map(|&alpha| {
            let mut run = cfg.clone();
            run.solver.alpha = alpha;
            let result = restore(f, graphs, &run)?;
            Ok(SweepRow {
                alpha,
                metrics: evaluate_pair(&result.restored, reference, cfg)?,
            })
        })
        .collect()
}

/// Row with the largest PSNR; the first such row on ties.
pub fn best_row(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter()
        .fold(None, |best: Option<&SweepRow>, r| match best {
            Some(b) if b.metrics.psnr >= r.metrics.psnr => Some(b),
            _ => Some(r),
        })
}

pub fn sweep_csv(cfg: &RunConfig, rows: &[SweepRow]) -> String {
    let mut s = header(cfg);
    s.push_str(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "point,{},{}\n",
            r.alpha,
            metrics_cells(&r.metrics)
        ));
    }
    if let Some(b) = best_row(rows) {
        s.push_str(&format!("best,{},{}\n", b.alpha, metrics_cells(&b.metrics)));
    }
    s
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn cmd_degrade(input: &Path, output: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let clean: Image = load_image(input)?;
    save_image(&degrade(&clean, cfg)?, output)?;
    Ok(())
}

pub fn cmd_restore(
    input: &Path,
    output: &Path,
    trace: Option<&Path>,
    graph_cache: Option<&Path>,
    cfg: &RunConfig,
) -> Result<RestoreResult<f64>, CliError> {
    cfg.validate()?;
    let f: Image = load_image(input)?;
    let graphs = load_or_build_graphs(&f, cfg, graph_cache)?;
    let result = restore(&f, &graphs, cfg)?;
    save_image(&result.restored, output)?;
    if let Some(path) = trace {
        write_text(path, &trace_csv(cfg, &result))?;
    }
    Ok(result)
}

pub fn cmd_evaluate(
    restored: &Path,
    reference: &Path,
    cfg: &RunConfig,
    out: &mut impl Write,
) -> Result<MetricsReport, CliError> {
    cfg.validate()?;
    let a: Image = load_image(restored)?;
    let b: Image = load_image(reference)?;
    let report = evaluate_pair(&a, &b, cfg)?;
    let mut s = header(cfg);
    s.push_str(EVALUATE_HEADER);
    s.push('\n');
    s.push_str(&format!(
        "{},{},{}\n",
        restored.display(),
        reference.display(),
        metrics_cells(&report)
    ));
    out.write_all(s.as_bytes())?;
    Ok(report)
}

pub fn cmd_sweep(
    input: &Path,
    reference: &Path,
    range: SweepRange,
    graph_cache: Option<&Path>,
    best_output: Option<&Path>,
    cfg: &RunConfig,
    out: &mut impl Write,
) -> Result<Vec<SweepRow>, CliError> {
    cfg.validate()?;
    let f: Image = load_image(input)?;
    let reference_img: Image = load_image(reference)?;
    let alphas = range.alphas(f.height(), f.width())?;
    let graphs = load_or_build_graphs(&f, cfg, graph_cache)?;
    let rows = sweep(&f, &reference_img, &graphs, cfg, &alphas)?;
    out.write_all(sweep_csv(cfg, &rows).as_bytes())?;
    if let (Some(path), Some(best)) = (best_output, best_row(&rows)) {
        let mut run = cfg.clone();
        run.solver.alpha = best.alpha;
        save_image(&restore(&f, &graphs, &run)?.restored, path)?;
    }
    Ok(rows)
}
