//! Job execution. Every command returns its files as bytes; the caller
//! writes them, so compute threads never touch the filesystem.

use anyhow::Context;
use epmap::braid::{ascending_ranks, swap_orders};
use epmap::census::{
    density_profile, localize_eps, swap_order_profile, write_eps_csv, write_swap_order_csv, Binning,
    CensusOptions, EpLocation,
};
use epmap::ergodicity::{eth_scatter, gap_ratios, gue_reference, poisson_control, Window};
use epmap::model::{build_model_capped, hermiticity_defect, ModelMatrices};
use epmap::spectral::{distance_grid, hermitian_eigen, spectrum_at, GridHeader, Region};
use epmap::tracking::{perturbative_prediction, track_closed_path, TrackOptions};
use epmap::{Complex64, PauliString};
use serde_json::json;

use crate::config::{BraidJob, CensusJob, ErgodicityJob, Job, MindistJob, RunConfig, ToyJob};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

/// Files, diagnostics and console lines produced by one job.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: serde_json::Value,
    pub report: Vec<String>,
    pub exit_code: i32,
}

impl Outcome {
    fn file(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }
}

pub fn run(config: &RunConfig) -> anyhow::Result<Outcome> {
    match &config.job {
        Job::Mindist(j) => mindist(j, config.max_length),
        Job::Braid(j) => braid(j, config.max_length),
        Job::Census(j) => census(j, config.max_length),
        Job::Ergodicity(j) => ergodicity(j, config.max_length, config.seed),
        Job::Toy(j) => toy(j),
    }
}

fn csv<F>(write: F) -> anyhow::Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> epmap::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn json_bytes<T: serde::Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn mindist(job: &MindistJob, max_length: usize) -> anyhow::Result<Outcome> {
    let model = build_model_capped(&job.model, max_length)?;
    let region = Region::new(job.re[0], job.re[1], job.im[0], job.im[1]);
    let grid = distance_grid(&model, region, (job.res[0], job.res[1]))?;
    let header = GridHeader {
        region,
        resolution: grid.resolution,
        length: job.model.length,
        parameter_hash: job.model.hash(),
        layout: "row-major, Re fastest, Im rows ascending".into(),
    };
    let mut out = Outcome::default();
    out.file("mindist.csv", csv(|w| grid.write_csv(w))?);
    out.file("mindist.bin", csv(|w| grid.write_binary(w, &header))?);
    let symmetric = job.im[0] == -job.im[1];
    let conj_defect = symmetric.then(|| grid.conjugation_defect());
    let argmin = grid.argmin();
    if let Some((z, d)) = argmin {
        out.report.push(format!("min delta {d:.6e} at z = {:.6} {:+.6}i", z.re, z.im));
    }
    if let Some(c) = conj_defect {
        out.report.push(format!("conjugation defect {c:.3e}"));
    }
    if !grid.failures.is_empty() {
        let mut s = String::from("re_z,im_z\n");
        for z in &grid.failures {
            s.push_str(&format!("{:.16e},{:.16e}\n", z.re, z.im));
        }
        out.file("failures.csv", s.into_bytes());
        out.report.push(format!("{} grid nodes failed", grid.failures.len()));
        out.exit_code = EXIT_PARTIAL;
    }
    out.summary = json!({
        "nodes": grid.values.len(),
        "failures": grid.failures.len(),
        "argmin": argmin.map(|(z, d)| json!({"re": z.re, "im": z.im, "delta": d})),
        "conjugation_defect": conj_defect,
    });
    Ok(out)
}

fn describe_cycles(cycles: &[Vec<usize>]) -> String {
    cycles
        .iter()
        .map(|c| {
            let inner: Vec<String> = c.iter().map(usize::to_string).collect();
            format!("({})", inner.join(" "))
        })
        .collect::<Vec<_>>()
        .join("")
}

fn braid(job: &BraidJob, max_length: usize) -> anyhow::Result<Outcome> {
    let model = match &job.model {
        Some(p) => build_model_capped(p, max_length)?,
        None => ModelMatrices::toy(),
    };
    let opts = TrackOptions {
        max_depth: job.max_depth,
        safety: job.safety,
        record_samples: true,
        ..TrackOptions::default()
    };
    let mut out = Outcome::default();
    let trace = match track_closed_path(&model, &job.path, &opts) {
        Ok(t) => t,
        Err(e) => {
            out.report.push(format!("tracking failed: {e}"));
            out.summary = json!({ "failure": e.to_string() });
            out.exit_code = EXIT_PARTIAL;
            return Ok(out);
        }
    };
    let pi = &trace.permutation;
    let cycles = pi.nontrivial_cycles();
    let n_ep = pi.transposition_count();
    if cycles.is_empty() {
        out.report.push("identity, 0 EPs".into());
    } else {
        let noun = if n_ep == 1 { "transposition" } else { "transpositions" };
        out.report.push(format!("{}, {n_ep} {noun}", describe_cycles(&cycles)));
    }
    out.report.push(format!("discriminant winding {}", trace.winding_count()));

    // Swap orders are only meaningful against a real, ordered spectrum.
    let start = &trace.start.eigenvalues;
    let real_start = job.path.point(0.0).im == 0.0 && start.iter().all(|e| e.im.abs() < 1e-9);
    let swap = if real_start {
        let ranks = ascending_ranks(&start.iter().map(|e| e.re).collect::<Vec<_>>());
        Some(swap_orders(pi, &ranks)?)
    } else {
        None
    };
    out.file("trace.csv", csv(|w| trace.write_csv(w))?);
    let doc = json!({
        "permutation": pi.as_slice(),
        "cycles": cycles,
        "transpositions": n_ep,
        "winding": trace.winding_count(),
        "stats": trace.stats,
        "swap_orders": swap,
    });
    out.file("braid.json", json_bytes(&doc)?);
    out.summary = json!({
        "transpositions": n_ep,
        "winding": trace.winding_count(),
        "diagonalizations": trace.stats.diagonalizations,
        "max_depth_reached": trace.stats.max_depth_reached,
    });
    Ok(out)
}

fn census(job: &CensusJob, max_length: usize) -> anyhow::Result<Outcome> {
    let opts = CensusOptions {
        base_steps: job.base_steps,
        split_above: job.split_above,
        ..CensusOptions::default()
    };
    let multi = job.lengths.len() > 1;
    let mut out = Outcome::default();
    let mut per_length = Vec::new();
    let mut collapse_rows = Vec::new();
    for &length in &job.lengths {
        let params = job.model.clone().with_length(length);
        let model = build_model_capped(&params, max_length)?;
        let prefix = if multi { format!("L{length}/") } else { String::new() };
        let im_max = job.im_max.unwrap_or(1.5 * length as f64);
        let re_window = (job.re[0], job.re[1]);
        let mut binning = Binning::standard(length, job.re[1] - job.re[0], im_max)?;
        if let Some(c) = job.columns {
            binning.re_columns = c;
        }
        let profile = density_profile(&model, length, re_window, &binning, &opts)?;
        out.file(format!("{prefix}density.csv"), csv(|w| profile.write_csv(w))?);
        let mut failures = profile.failures.len();

        let mut eps: Vec<EpLocation> = Vec::new();
        let mut unresolved = 0;
        let mut loc_failures = 0;
        if job.localize {
            let top = job.localize_im_max.unwrap_or(im_max).min(im_max);
            let region = Region::new(job.re[0], job.re[1], 0.0, top);
            match localize_eps(&model, &region, job.tol, &opts) {
                Ok(loc) => {
                    eps = loc.eps;
                    unresolved = loc.unresolved.iter().map(|c| c.count).sum();
                    loc_failures = loc.failures.len();
                }
                Err(e) => {
                    log::warn!("L={length}: localization failed: {e}");
                    loc_failures = 1;
                }
            }
            eps.sort_by(|a, b| a.position.im.total_cmp(&b.position.im).then(a.position.re.total_cmp(&b.position.re)));
            if job.classify {
                for ep in &mut eps {
                    if epmap::census::classify_ep(&model, ep, &opts).is_err() {
                        loc_failures += 1;
                    }
                }
            }
            out.file(format!("{prefix}eps.csv"), csv(|w| write_eps_csv(&eps, w))?);
        }
        failures += loc_failures;

        let mut swap_failures = 0;
        if !job.heights.is_empty() {
            let points = swap_order_profile(&model, (job.anchor[0], job.anchor[1]), &job.heights, &opts)?;
            swap_failures = points.iter().filter(|p| p.failure.is_some()).count();
            out.file(format!("{prefix}swap_order.csv"), csv(|w| write_swap_order_csv(&points, w))?);
        }
        failures += swap_failures;

        let total = profile.total_count();
        let winding: i64 = profile.bins.iter().map(|b| b.winding).sum();
        let area = (job.re[1] - job.re[0]) * im_max;
        let bulk = total as f64 / area;
        let lowest = eps.first().map(|e| e.position.im);
        out.report.push(format!(
            "L={length}: {total} EPs (winding {winding}), {} loops, {} retries, {failures} failures, {unresolved} unresolved",
            profile.loops, profile.retries
        ));
        collapse_rows.push((length, bulk, lowest));
        per_length.push(json!({
            "L": length,
            "ep_count": total,
            "winding": winding,
            "bulk_density": bulk,
            "lowest_ep_im": lowest,
            "localized": eps.len(),
            "unresolved": unresolved,
            "loops": profile.loops,
            "retries": profile.retries,
            "diagonalizations": profile.diagonalizations,
            "inconsistencies": profile.inconsistencies.len(),
            "mismatched_leaves": profile.mismatched_leaves,
            "failed_cells": profile.failures,
            "localization_failures": loc_failures,
            "swap_order_failures": swap_failures,
        }));
        if failures > 0 {
            out.exit_code = EXIT_PARTIAL;
        }
    }
    if multi {
        let pairs: Vec<_> = collapse_rows
            .windows(2)
            .map(|w| {
                let ((la, ba, ga), (lb, bb, gb)) = (w[0], w[1]);
                json!({
                    "L_small": la,
                    "L_large": lb,
                    "bulk_density_ratio": bb / ba,
                    "lowest_ep_ratio": match (ga, gb) { (Some(a), Some(b)) => Some(b / a), _ => None },
                })
            })
            .collect();
        for p in &pairs {
            out.report.push(format!("collapse {p}"));
        }
        out.file("collapse.json", json_bytes(&pairs)?);
    }
    out.summary = json!({ "lengths": per_length });
    Ok(out)
}

fn ergodicity(job: &ErgodicityJob, max_length: usize, seed: u64) -> anyhow::Result<Outcome> {
    let model = build_model_capped(&job.model, max_length)?;
    let h = model.evaluate(Complex64::new(job.z, 0.0));
    let defect = hermiticity_defect(&h);
    if defect > epmap::ergodicity::HERMITIAN_TOLERANCE {
        anyhow::bail!("H(z) at z = {} is not hermitian (defect {defect:.3e})", job.z);
    }
    let window = if job.window >= 1.0 { Window::Full } else { Window::Central(job.window) };
    let mut out = Outcome::default();
    let (levels, _) = hermitian_eigen(&h, false)?;
    let stats = gap_ratios(&levels, window, job.bins)?;
    out.file("r_hist.csv", csv(|w| stats.histogram.write_csv(w))?);
    out.report.push(format!("mean r = {:.6} +- {:.6} ({} ratios)", stats.mean, stats.std_err, stats.ratios.len()));

    let gue = if job.gue_samples > 0 {
        let r = gue_reference(job.gue_dim, job.gue_samples, window, seed)?;
        out.report.push(format!("GUE reference {:.6} +- {:.6}", r.mean, r.std_err));
        Some(r)
    } else {
        None
    };
    let poisson = if job.poisson {
        let p = poisson_control(job.poisson_n, seed, job.bins)?;
        out.report.push(format!("Poisson control {:.6}", p.mean));
        Some(p)
    } else {
        None
    };
    let eth = match &job.observable {
        Some(o) => {
            let op: PauliString = o.parse().with_context(|| format!("observable {o:?}"))?;
            let s = eth_scatter(&h, &op, job.model.length)?;
            out.file("eth.csv", csv(|w| s.write_csv(w))?);
            let width = s.scatter_width(window)?;
            out.report.push(format!("ETH {}: pearson {:.4}, scatter width {:.4e}", s.observable, s.pearson(), width));
            Some(json!({
                "observable": s.observable,
                "points": s.energies.len(),
                "pearson": s.pearson(),
                "scatter_width": width,
                "max_imaginary": s.max_imaginary,
            }))
        }
        None => None,
    };
    let summary = json!({
        "L": job.model.length,
        "z": job.z,
        "window": window,
        "mean_r": stats.mean,
        "std_err": stats.std_err,
        "ratios": stats.ratios.len(),
        "skipped": stats.skipped,
        "gue": gue.as_ref().map(|g| json!({
            "mean": g.mean,
            "std_err": g.std_err,
            "samples": g.samples,
            "dimension": g.dimension,
            "within_0_01": (stats.mean - g.mean).abs() <= 0.01,
        })),
        "poisson": poisson.as_ref().map(|p| json!({
            "mean": p.mean,
            "std_err": p.std_err,
            "reference": epmap::ergodicity::POISSON_MEAN_RATIO,
        })),
        "eth": eth,
    });
    out.file("summary.json", json_bytes(&summary)?);
    out.summary = summary;
    Ok(out)
}

/// Exact eigenvalues of the 2x2 model, `+-sqrt(1 + z^2)`.
fn toy_exact(z: Complex64) -> [Complex64; 2] {
    let s = (Complex64::new(1.0, 0.0) + z * z).sqrt();
    [s, -s]
}

fn toy(job: &ToyJob) -> anyhow::Result<Outcome> {
    let model = ModelMatrices::toy();
    let center = Complex64::new(job.center[0], job.center[1]);
    let r = job.radius;
    let mut out = Outcome::default();

    let path = epmap::tracking::PathSpec::circle(center, r, 32);
    let trace = track_closed_path(&model, &path, &TrackOptions::default())?;
    let n_ep = trace.permutation.transposition_count();
    out.report.push(format!("circle |z - ({})| = {r}: {n_ep} transposition(s)", center));

    let region = Region::new(center.re - r, center.re + r, center.im - r, center.im + r);
    let loc = localize_eps(&model, &region, job.tol, &CensusOptions::default())?;
    let exact = [Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0)];
    let located: Vec<_> = loc
        .eps
        .iter()
        .map(|e| {
            let err = exact.iter().map(|x| (e.position - x).norm()).fold(f64::INFINITY, f64::min);
            json!({"re": e.position.re, "im": e.position.im, "uncertainty": e.uncertainty, "error": err})
        })
        .collect();
    for (e, v) in loc.eps.iter().zip(&located) {
        out.report.push(format!("EP at {:.9} {:+.9}i, error {:.2e}", e.position.re, e.position.im, v["error"].as_f64().unwrap_or(f64::NAN)));
    }

    // Perturbative convergence at z0 = 0.5 along the imaginary direction.
    let z0 = Complex64::new(0.5, 0.0);
    let s0 = spectrum_at(&model, z0)?;
    let mut points = Vec::new();
    for k in 0..5 {
        let eps = Complex64::new(0.0, 1e-2 * 0.5f64.powi(k));
        let pred = perturbative_prediction(&s0, &model.g, eps).values;
        let exact = toy_exact(z0 + eps);
        let err = pred
            .iter()
            .map(|p| exact.iter().map(|x| (p - x).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        points.push((eps.norm(), err));
    }
    let slope = loglog_slope(&points);
    out.report.push(format!("perturbative log-log slope {slope:.3}"));
    let doc = json!({
        "transpositions": n_ep,
        "winding": trace.winding_count(),
        "eps": located,
        "unresolved": loc.unresolved.len(),
        "convergence": points.iter().map(|(e, d)| json!({"eps": e, "error": d})).collect::<Vec<_>>(),
        "slope": slope,
    });
    out.file("toy.json", json_bytes(&doc)?);
    out.summary = doc;
    Ok(out)
}

/// Least-squares slope of `ln y` against `ln x`.
fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
