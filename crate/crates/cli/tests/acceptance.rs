//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each. Exits non-zero on any failure not listed in
//! `KNOWN_FAILURES`.
//!
//! `cargo test -p epmap-cli --test acceptance` runs everything; a trailing
//! argument such as `c4` runs only the criteria whose id starts with it.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use epmap::braid::{ep_count, Permutation};
use epmap::census::{density_profile, localize_eps, lowest_ep, swap_order_profile, Binning, CensusOptions};
use epmap::ergodicity::{eth_scatter, gap_ratios, gue_reference, poisson_control, Window, POISSON_MEAN_RATIO};
use epmap::model::{build_model, ModelMatrices};
use epmap::spectral::{distance_grid, hermitian_eigen, spectrum_at, Region};
use epmap::tracking::{perturbative_prediction, track_closed_path, PathSpec, TrackOptions};
use epmap::{Complex64, ModelParams, PauliString};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria expected to fail; see the README for the measured values.
const KNOWN_FAILURES: &[&str] = &["c4b"];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Vec<(&'static str, &'static str, Verdict)>;

fn c(z_re: f64, z_im: f64) -> Complex64 {
    Complex64::new(z_re, z_im)
}

fn chain(length: usize) -> ModelMatrices {
    build_model(&ModelParams::reference(length)).expect("reference model builds")
}

fn within(t: Duration, limit_s: f64) -> bool {
    t.as_secs_f64() < limit_s
}

// 1. toy oracle
fn toy_oracle() -> Vec<(&'static str, &'static str, Verdict)> {
    let t = Instant::now();
    let toy = ModelMatrices::toy();
    let trace = track_closed_path(&toy, &PathSpec::circle(c(0.0, 1.0), 0.3, 32), &TrackOptions::default())
        .expect("toy loop tracks");
    let swaps = trace.permutation.transposition_count();

    let loc = localize_eps(&toy, &Region::new(-0.3, 0.3, 0.7, 1.3), 1e-6, &CensusOptions::default())
        .expect("toy localization");
    let err = match loc.eps.as_slice() {
        [ep] => (ep.position - c(0.0, 1.0)).norm(),
        _ => f64::INFINITY,
    };

    let z0 = c(0.5, 0.0);
    let s0 = spectrum_at(&toy, z0).unwrap();
    let pts: Vec<(f64, f64)> = (0..5)
        .map(|k| {
            let eps = c(0.0, 1e-2 * 0.5f64.powi(k));
            let s = (c(1.0, 0.0) + (z0 + eps) * (z0 + eps)).sqrt();
            let worst = perturbative_prediction(&s0, &toy.g, eps)
                .values
                .iter()
                .map(|p| (p - s).norm().min((p + s).norm()))
                .fold(0.0, f64::max);
            (eps.norm(), worst)
        })
        .collect();
    let slope = loglog_slope(&pts);
    let time = t.elapsed();
    vec![(
        "c1",
        "toy oracle: one transposition, EP at i within 1e-6, slope >= 2.7, < 1 s",
        verdict(
            swaps == 1 && err <= 1e-6 && slope >= 2.7 && within(time, 1.0),
            format!("{swaps} transposition, EP error {err:.2e}, slope {slope:.3}, {:.3} s", time.as_secs_f64()),
        ),
    )]
}

fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

// 2. conjugation suite
fn conjugation() -> Vec<(&'static str, &'static str, Verdict)> {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut h_defect = 0.0f64;
    for l in 2..=6 {
        let m = chain(l);
        for _ in 0..5 {
            let z = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let a = m.evaluate(z.conj());
            let b = m.evaluate(z);
            let n = m.dimension();
            for i in 0..n {
                for j in 0..n {
                    h_defect = h_defect.max((a[(i, j)] - b[(j, i)].conj()).norm());
                }
            }
        }
    }
    let m6 = chain(6);
    let grid = distance_grid(&m6, Region::new(0.0, 1.0, -0.5, 0.5), (50, 50)).unwrap();
    let d_defect = grid.conjugation_defect();

    let mut non_identity = 0;
    let mut loops = 0;
    let mut enclosed = 0;
    for l in [4, 5, 6] {
        let m = chain(l);
        let paths = [
            PathSpec::rectangle(Region::new(0.4, 0.6, -0.1, 0.1), 16),
            PathSpec::rectangle(Region::new(0.4, 0.6, -0.5, 0.5), 16),
            PathSpec::rectangle(Region::new(0.3, 0.7, -1.0, 1.0), 16),
            PathSpec::circle(c(0.5, 0.0), 0.3, 32),
        ];
        for p in &paths {
            let trace = track_closed_path(&m, p, &TrackOptions::default()).expect("symmetric loop tracks");
            loops += 1;
            enclosed += trace.winding_count();
            if !trace.permutation.is_identity() {
                non_identity += 1;
            }
        }
    }
    let time = t.elapsed();
    vec![
        (
            "c2a",
            "H(z*) = H(z)^dagger entrywise to 1e-13, L <= 6",
            verdict(h_defect <= 1e-13, format!("max defect {h_defect:.2e}")),
        ),
        (
            "c2b",
            "delta(z*) = delta(z) on a 50x50 grid to 1e-10, L = 6",
            verdict(d_defect <= 1e-10, format!("max defect {d_defect:.2e}")),
        ),
        (
            "c2c",
            "real-axis-symmetric loops give the identity, < 5 min",
            verdict(
                non_identity == 0 && within(time, 300.0),
                format!(
                    "{non_identity} of {loops} loops non-identity; {enclosed} EPs enclosed in total; {:.1} s",
                    time.as_secs_f64()
                ),
            ),
        ),
    ]
}

// 3. braid robustness
fn split_loops(r: &Region, steps: usize) -> (PathSpec, PathSpec, PathSpec) {
    let m = 0.5 * (r.re0 + r.re1);
    let parent = vec![
        c(m, r.im0),
        c(r.re1, r.im0),
        c(r.re1, r.im1),
        c(m, r.im1),
        c(r.re0, r.im1),
        c(r.re0, r.im0),
    ];
    let right = vec![c(m, r.im0), c(r.re1, r.im0), c(r.re1, r.im1), c(m, r.im1)];
    let left = vec![c(m, r.im0), c(m, r.im1), c(r.re0, r.im1), c(r.re0, r.im0)];
    (
        PathSpec::polygon(parent, steps),
        PathSpec::polygon(right, steps),
        PathSpec::polygon(left, steps),
    )
}

struct RobustnessCase {
    refined: bool,
    reversed: bool,
    split: bool,
    swaps: usize,
}

fn robustness_case(m: &ModelMatrices, r: &Region) -> epmap::Result<RobustnessCase> {
    let opts = TrackOptions::default();
    let base = PathSpec::rectangle(*r, 16);
    let p1 = track_closed_path(m, &base, &opts)?.permutation;
    let p2 = track_closed_path(m, &base.with_base_steps(32), &opts)?.permutation;
    let p4 = track_closed_path(m, &base.with_base_steps(64), &opts)?.permutation;
    let rev = track_closed_path(m, &base.reversed(), &opts)?.permutation;
    let (parent, right, left) = split_loops(r, 16);
    let pp = track_closed_path(m, &parent, &opts)?.permutation;
    let pr = track_closed_path(m, &right, &opts)?.permutation;
    let pl = track_closed_path(m, &left, &opts)?.permutation;
    Ok(RobustnessCase {
        refined: p1 == p2 && p1 == p4,
        reversed: rev == p1.inverse(),
        split: pp == pr.compose(&pl)?,
        swaps: p1.transposition_count(),
    })
}

fn braid_robustness() -> Vec<(&'static str, &'static str, Verdict)> {
    let t = Instant::now();
    let m = chain(5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut refined, mut reversed, mut split, mut swaps, mut redrawn) = (0, 0, 0, 0, 0);
    let mut done = 0;
    while done < 20 {
        let re0 = rng.random_range(0.0..0.9);
        let im0 = rng.random_range(0.01..1.0);
        let r = Region::new(
            re0,
            re0 + rng.random_range(0.05..0.3),
            im0,
            im0 + rng.random_range(0.05..0.3),
        );
        match robustness_case(&m, &r) {
            Ok(case) => {
                done += 1;
                refined += case.refined as usize;
                reversed += case.reversed as usize;
                split += case.split as usize;
                swaps += case.swaps;
            }
            // A boundary passing within tracking resolution of an EP; the
            // census would nudge it, here the rectangle is redrawn.
            Err(_) => redrawn += 1,
        }
    }
    let time = t.elapsed();
    let ok = refined == 20 && reversed == 20 && split == 20 && within(time, 1800.0);
    vec![(
        "c3",
        "20 random L=5 rectangles: refinement, reversal and splitting invariants, < 30 min",
        verdict(
            ok,
            format!(
                "refinement {refined}/20, reversal {reversed}/20, split {split}/20; {swaps} transpositions in total; {redrawn} redrawn; {:.1} s",
                time.as_secs_f64()
            ),
        ),
    )]
}

// 4. density scalings
fn density_scalings() -> Vec<(&'static str, &'static str, Verdict)> {
    let t = Instant::now();
    let opts = CensusOptions::default();
    let mut bulk = Vec::new();
    let mut lowest = Vec::new();
    let mut counts = Vec::new();
    for l in [4usize, 5, 6] {
        let m = chain(l);
        let im_max = 1.5 * l as f64;
        let binning = Binning::standard(l, 0.2, im_max).unwrap();
        let p = density_profile(&m, l, (0.4, 0.6), &binning, &opts).unwrap();
        counts.push((p.total_count(), p.failures.len()));
        bulk.push(p.total_count() as f64 / (0.2 * im_max));
        let ep = lowest_ep(&m, (0.4, 0.6), &binning.im_edges, 1e-6, &opts)
            .unwrap()
            .expect("window holds EPs");
        lowest.push(ep.position.im);
    }
    let time = t.elapsed();
    let amp: Vec<f64> = bulk.windows(2).map(|w| w[1] / w[0]).collect();
    let gap: Vec<f64> = lowest.windows(2).map(|w| w[1] / w[0]).collect();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ");
    vec![
        (
            "c4a",
            "bulk density amplitude ratio between consecutive L in [2.5, 6]",
            verdict(
                amp.iter().all(|r| (2.5..=6.0).contains(r)),
                format!(
                    "EP counts (L=4,5,6) {:?}, ratios [{}], {:.1} s",
                    counts.iter().map(|c| c.0).collect::<Vec<_>>(),
                    fmt(&amp),
                    time.as_secs_f64()
                ),
            ),
        ),
        (
            "c4b",
            "lowest-EP Im ratio between consecutive L in [0.35, 0.7]",
            verdict(
                gap.iter().all(|r| (0.35..=0.7).contains(r)),
                format!("lowest Im (L=4,5,6) [{}], ratios [{}]", fmt(&lowest), fmt(&gap)),
            ),
        ),
    ]
}

// 5. swap-order profile
fn swap_order() -> Vec<(&'static str, &'static str, Verdict)> {
    let t = Instant::now();
    let m = chain(8);
    let opts = CensusOptions::default();
    let anchor = (0.49, 0.51);
    let edges = Binning::standard(8, 0.02, 0.5).unwrap().im_edges;
    let g = lowest_ep(&m, anchor, &edges, 1e-5, &opts)
        .unwrap()
        .expect("anchor window holds an EP")
        .position
        .im;
    let mut heights = vec![1.5 * g, 2.0 * g, 0.05, 0.1, 0.2];
    heights.sort_by(f64::total_cmp);
    heights.dedup();
    let points = swap_order_profile(&m, anchor, &heights, &opts).unwrap();
    let failures = points.iter().filter(|p| p.failure.is_some()).count();

    let below: Vec<_> = points.iter().filter(|p| p.height <= 2.0 * g + 1e-15 && p.transpositions > 0).collect();
    let n_below: usize = below.iter().map(|p| p.transpositions).sum();
    let avg_below = below
        .iter()
        .map(|p| p.average_order.unwrap() * p.transpositions as f64)
        .sum::<f64>()
        / n_below.max(1) as f64;

    let fit: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.average_order.map(|o| (p.height, o)))
        .collect();
    let slope = linear_slope(&fit);
    let time = t.elapsed();
    let table = points
        .iter()
        .map(|p| match p.average_order {
            Some(o) => format!("{:.4}:{o:.3}/{}", p.height, p.transpositions),
            None => format!("{:.4}:-/0", p.height),
        })
        .collect::<Vec<_>>()
        .join(" ");
    vec![(
        "c5",
        "L=8 average swap order: positive slope vs height, < 2 below twice the gap, < 2 h",
        verdict(
            failures == 0 && n_below > 0 && avg_below < 2.0 && slope > 0.0 && within(time, 7200.0),
            format!(
                "gap {g:.5}; order below 2 gap {avg_below:.3} over {n_below} swaps; slope {slope:.3}; height:order/swaps {table}; {:.1} s",
                time.as_secs_f64()
            ),
        ),
    )]
}

fn linear_slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return f64::NAN;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

// 6. ergodicity
fn ergodicity() -> Vec<(&'static str, &'static str, Verdict)> {
    let t = Instant::now();
    let window = Window::Central(0.5);
    let h12 = chain(12).evaluate(c(0.5, 0.0));
    let (levels, _) = hermitian_eigen(&h12, false).unwrap();
    let r = gap_ratios(&levels, window, 50).unwrap();
    let gue = gue_reference(1024, 200, window, 6).unwrap();
    let poisson = poisson_control(200_000, 6, 50).unwrap();

    let x4x5: PauliString = "x4x5".parse().unwrap();
    let mut widths = Vec::new();
    let mut pearson10 = f64::NAN;
    for l in [8usize, 9, 10] {
        let h = chain(l).evaluate(c(0.5, 0.0));
        let s = eth_scatter(&h, &x4x5, l).unwrap();
        widths.push(s.scatter_width(window).unwrap());
        if l == 10 {
            pearson10 = s.pearson();
        }
    }
    let time = t.elapsed();
    let decreasing = widths.windows(2).all(|w| w[1] < w[0]);
    vec![
        (
            "c6a",
            "L=12, z=0.5 mean gap ratio within 0.01 of the sampled GUE reference",
            verdict(
                (r.mean - gue.mean).abs() <= 0.01,
                format!(
                    "<r> = {:.4} +- {:.4}, GUE {:.4} +- {:.4} ({} x {})",
                    r.mean, r.std_err, gue.mean, gue.std_err, gue.samples, gue.dimension
                ),
            ),
        ),
        (
            "c6b",
            "Poisson control 0.3863 +- 0.01",
            verdict(
                (poisson.mean - 0.3863).abs() <= 0.01,
                format!("{:.4} (analytic {POISSON_MEAN_RATIO:.4})", poisson.mean),
            ),
        ),
        (
            "c6c",
            "x4x5 eigenstate values: Pearson > 0.5 at L=10, scatter width decreasing L=8..10, < 1 h",
            verdict(
                pearson10 > 0.5 && decreasing && within(time, 3600.0),
                format!(
                    "pearson {pearson10:.3}; widths L=8,9,10 {:.4} {:.4} {:.4}; {:.1} s",
                    widths[0],
                    widths[1],
                    widths[2],
                    time.as_secs_f64()
                ),
            ),
        ),
    ]
}

// 7. permutation algebra
fn transposition_distances(n: usize) -> HashMap<Vec<u8>, usize> {
    let start: Vec<u8> = (0..n as u8).collect();
    let mut dist = HashMap::from([(start.clone(), 0)]);
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        let d = dist[&p];
        for i in 0..n {
            for j in i + 1..n {
                let mut q = p.clone();
                q.swap(i, j);
                if !dist.contains_key(&q) {
                    dist.insert(q.clone(), d + 1);
                    queue.push_back(q);
                }
            }
        }
    }
    dist
}

fn permutation_algebra() -> Vec<(&'static str, &'static str, Verdict)> {
    let t = Instant::now();
    let tables: Vec<HashMap<Vec<u8>, usize>> = (0..=8).map(transposition_distances).collect();
    let mut checked = 0;
    let mut wrong = 0;
    let mut check = |p: &[u8]| {
        let perm = Permutation::new(p.iter().map(|&v| v as usize).collect()).unwrap();
        checked += 1;
        if ep_count(&perm) != tables[p.len()][p] {
            wrong += 1;
        }
    };
    for n in 1..=6 {
        for p in tables[n].keys() {
            check(p);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let mut p: Vec<u8> = (0..n as u8).collect();
        p.shuffle(&mut rng);
        check(&p);
    }
    let time = t.elapsed();
    vec![(
        "c7",
        "minimal transposition factorization = N - n_cycles, all N <= 6 and 1000 random N <= 8, < 1 min",
        verdict(
            wrong == 0 && within(time, 60.0),
            format!("{checked} permutations, {wrong} mismatches, {:.2} s", time.as_secs_f64()),
        ),
    )]
}

// 8. determinism
fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn census_values(l: usize) -> Vec<f64> {
    let m = chain(l);
    let opts = CensusOptions::default();
    let binning = Binning::standard(l, 0.2, 1.5 * l as f64).unwrap();
    let p = density_profile(&m, l, (0.4, 0.6), &binning, &opts).unwrap();
    let loc = localize_eps(&m, &Region::new(0.4, 0.6, 0.0, 1.0), 1e-4, &opts).unwrap();
    let mut v: Vec<f64> = p.bins.iter().flat_map(|b| [b.count as f64, b.rho]).collect();
    v.extend(loc.eps.iter().flat_map(|e| [e.position.re, e.position.im]));
    v
}

fn grid_values() -> Vec<f64> {
    distance_grid(&chain(6), Region::new(0.0, 1.0, -0.5, 0.5), (40, 40)).unwrap().values
}

fn run_cli(out: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_epmap"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> bool {
    names
        .iter()
        .all(|n| matches!((std::fs::read(a.join(n)), std::fs::read(b.join(n))), (Ok(x), Ok(y)) if x == y))
}

fn determinism() -> Vec<(&'static str, &'static str, Verdict)> {
    let census1 = in_pool(1, || census_values(5));
    let grid1 = in_pool(1, grid_values);
    let mut worst = 0.0f64;
    for threads in [4, 8] {
        worst = worst.max(max_diff(&census1, &in_pool(threads, || census_values(5))));
        worst = worst.max(max_diff(&grid1, &in_pool(threads, grid_values)));
    }

    let dir = tempfile::tempdir().unwrap();
    let (a, b, c8) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let files = ["density.csv", "eps.csv", "swap_order.csv", "manifest.json"];
    let ran = run_cli(&a, &["--threads", "4", "census", "--L", "4", "--heights", "0.1", "0.4"]);
    let manifest = a.join("manifest.json");
    let replay = ran && run_cli(&b, &["replay", "--check", manifest.to_str().unwrap()]);
    let byte_identical = replay && same_files(&a, &b, &files);
    let cross = ran
        && run_cli(&c8, &["--threads", "1", "replay", manifest.to_str().unwrap()])
        && same_files(&a, &c8, &files[..3]);
    vec![
        (
            "c8a",
            "census and grid values identical to 1e-12 across 1, 4 and 8 threads",
            verdict(worst <= 1e-12, format!("max difference {worst:.1e} over {} census and {} grid values", census1.len(), grid1.len())),
        ),
        (
            "c8b",
            "manifest replay byte-identical at fixed thread count",
            verdict(byte_identical, format!("replay ran: {replay}; outputs equal: {byte_identical}; 1-thread replay equal: {cross}")),
        ),
    ]
}

fn main() {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let checks: [(&str, Check); 8] = [
        ("c1", toy_oracle),
        ("c2", conjugation),
        ("c3", braid_robustness),
        ("c4", density_scalings),
        ("c5", swap_order),
        ("c6", ergodicity),
        ("c7", permutation_algebra),
        ("c8", determinism),
    ];
    let mut unexpected = Vec::new();
    let mut known = Vec::new();
    for (id, check) in checks {
        if filter.as_deref().is_some_and(|f| !id.starts_with(f) && !f.starts_with(id)) {
            continue;
        }
        for (cid, name, v) in check() {
            let status = if v.pass { "PASS" } else { "FAIL" };
            println!("{status} {cid} {name}: {}", v.detail);
            if !v.pass {
                if KNOWN_FAILURES.contains(&cid) {
                    known.push(cid);
                } else {
                    unexpected.push(cid);
                }
            }
        }
    }
    println!(
        "acceptance: {} unexpected failure(s) {:?}, {} known failure(s) {:?}",
        unexpected.len(),
        unexpected,
        known.len(),
        known
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
