//! Counting, localizing and histogramming exceptional points.
//!
//! A rectangle in one half-plane is counted by tracking its boundary and
//! taking the number of transpositions of the resulting permutation. Distinct
//! EPs can generate transpositions that cancel within one loop, so the same
//! loop also yields the winding number of the discriminant, which counts every
//! enclosed EP. Cells where the two disagree, or that hold several EPs, are
//! split into quadrants.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::braid::{ascending_ranks, ep_count, swap_orders, Permutation};
use crate::error::{Error, Result};
use crate::model::ModelMatrices;
use crate::spectral::{spectrum_at, Region};
use crate::tracking::{track_closed_path, PathSpec, Shape, TrackOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusOptions {
    pub track: TrackOptions,
    /// Base samples per cell boundary loop.
    pub base_steps: usize,
    /// Relative jitter applied on successive retries after a tracking failure.
    pub nudges: Vec<f64>,
    /// Cells counting more EPs than this are split into quadrants and the
    /// children counts are used instead.
    pub split_above: usize,
    /// Maximum quadtree depth, for both splitting and localization.
    pub max_levels: u32,
}

impl Default for CensusOptions {
    fn default() -> Self {
        Self {
            track: TrackOptions::default(),
            base_steps: 16,
            nudges: vec![0.01, -0.02, 0.04],
            split_above: 2,
            max_levels: 40,
        }
    }
}

/// A counted rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Rectangle as requested.
    pub region: Region,
    /// Rectangle actually tracked (differs after a nudge).
    pub tracked: Region,
    /// EPs attributed to the cell, `N - n_cycles` of `permutation`.
    pub count: usize,
    /// Boundary-loop permutation, counter-clockwise from `(re0, im0)`.
    pub permutation: Permutation,
    /// Discriminant winding number of the boundary loop.
    pub winding: i64,
    pub retries: u32,
    pub diagonalizations: usize,
}

impl Cell {
    /// Upper bound on the number of EPs inside: the larger of the two counts.
    pub fn enclosed(&self) -> usize {
        self.count.max(self.winding.max(0) as usize)
    }

    /// Transposition count and winding agree, so no swaps cancelled.
    pub fn is_consistent(&self) -> bool {
        self.winding == self.count as i64
    }
}

fn check_half_plane(region: &Region) -> Result<()> {
    if region.im0 * region.im1 < 0.0 {
        return Err(Error::StraddlesRealAxis {
            im0: region.im0,
            im1: region.im1,
        });
    }
    if region.is_degenerate() {
        return Err(Error::InvalidPath(format!("degenerate cell {region:?}")));
    }
    Ok(())
}

/// Shifts `region` by `f` times its size; edges on the real axis stay put.
pub fn nudge(region: &Region, f: f64) -> Region {
    let dre = f * region.width();
    let dim = f * region.height();
    let shift = |v: f64| if v == 0.0 { 0.0 } else { v + dim };
    Region::new(region.re0 + dre, region.re1 + dre, shift(region.im0), shift(region.im1))
}

/// Counts EPs inside one rectangle by tracking its boundary.
///
/// On a tracking failure the cell is nudged by each of `opts.nudges` in turn.
pub fn count_in_cell(model: &ModelMatrices, region: &Region, opts: &CensusOptions) -> Result<Cell> {
    check_half_plane(region)?;
    let mut tracked = *region;
    let mut retries = 0;
    let mut diagonalizations = 0;
    loop {
        let path = PathSpec::rectangle(tracked, opts.base_steps);
        match track_closed_path(model, &path, &opts.track) {
            Ok(trace) if !trace.parity_consistent() => {
                diagonalizations += trace.stats.diagonalizations;
                let e = Error::ParityMismatch {
                    transpositions: ep_count(&trace.permutation),
                    winding: trace.winding_count(),
                };
                let Some(&f) = opts.nudges.get(retries as usize) else {
                    return Err(e);
                };
                retries += 1;
                tracked = nudge(region, f);
                log::debug!("retrying cell {region:?} nudged by {f}: {e}");
            }
            Ok(trace) => {
                diagonalizations += trace.stats.diagonalizations;
                return Ok(Cell {
                    region: *region,
                    tracked,
                    count: ep_count(&trace.permutation),
                    winding: trace.winding_count(),
                    permutation: trace.permutation,
                    retries,
                    diagonalizations,
                });
            }
            Err(e @ (Error::MaxDepthExceeded { .. } | Error::NoConvergence { .. })) => {
                let Some(&f) = opts.nudges.get(retries as usize) else {
                    return Err(e);
                };
                retries += 1;
                tracked = nudge(region, f);
                log::debug!("retrying cell {region:?} nudged by {f}");
            }
            Err(e) => return Err(e),
        }
    }
}

/// Quadrants in the order lower-left, lower-right, upper-left, upper-right.
pub fn quadrants(r: &Region) -> [Region; 4] {
    let rm = 0.5 * (r.re0 + r.re1);
    let im = 0.5 * (r.im0 + r.im1);
    [
        Region::new(r.re0, rm, r.im0, im),
        Region::new(rm, r.re1, r.im0, im),
        Region::new(r.re0, rm, im, r.im1),
        Region::new(rm, r.re1, im, r.im1),
    ]
}

/// Parent count differing from the sum of its children's counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inconsistency {
    pub region: Region,
    pub parent: usize,
    pub children: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub region: Region,
    pub message: String,
}

/// Count of a region refined until no leaf exceeds `split_above` and every
/// leaf's transposition count agrees with its winding.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinedCount {
    /// Sum of leaf transposition counts.
    pub count: usize,
    /// Sum of leaf windings.
    pub winding: i64,
    /// Count of the unsplit top-level loop.
    pub coarse: usize,
    /// Leaves where the counts still disagree at the depth limit.
    pub mismatched_leaves: usize,
    pub loops: usize,
    pub retries: u32,
    pub diagonalizations: usize,
    pub inconsistencies: Vec<Inconsistency>,
    pub failures: Vec<CellFailure>,
}

impl RefinedCount {
    fn absorb(&mut self, other: RefinedCount) {
        self.count += other.count;
        self.winding += other.winding;
        self.mismatched_leaves += other.mismatched_leaves;
        self.loops += other.loops;
        self.retries += other.retries;
        self.diagonalizations += other.diagonalizations;
        self.inconsistencies.extend(other.inconsistencies);
        self.failures.extend(other.failures);
    }
}

/// Counts a region, splitting cells that hold more than `opts.split_above`
/// EPs so that cancelling transpositions are less likely.
pub fn refined_count(model: &ModelMatrices, region: &Region, opts: &CensusOptions) -> RefinedCount {
    match count_in_cell(model, region, opts) {
        Ok(cell) => refine(model, cell, opts, 0),
        Err(e) => RefinedCount {
            failures: vec![CellFailure {
                region: *region,
                message: e.to_string(),
            }],
            loops: 1,
            ..Default::default()
        },
    }
}

fn refine(model: &ModelMatrices, cell: Cell, opts: &CensusOptions, level: u32) -> RefinedCount {
    let mut out = RefinedCount {
        count: cell.count,
        winding: cell.winding,
        coarse: cell.count,
        loops: 1,
        retries: cell.retries,
        diagonalizations: cell.diagonalizations,
        ..Default::default()
    };
    let settled = cell.enclosed() <= opts.split_above && cell.is_consistent();
    if settled || level >= opts.max_levels {
        out.mismatched_leaves = usize::from(!cell.is_consistent());
        return out;
    }
    let children: Vec<RefinedCount> = quadrants(&cell.region)
        .par_iter()
        .map(|q| match count_in_cell(model, q, opts) {
            Ok(c) => refine(model, c, opts, level + 1),
            Err(e) => RefinedCount {
                failures: vec![CellFailure {
                    region: *q,
                    message: e.to_string(),
                }],
                loops: 1,
                ..Default::default()
            },
        })
        .collect();
    if children.iter().any(|c| !c.failures.is_empty()) {
        // Keep the parent's count; a failed quadrant would lose EPs.
        for c in children {
            out.loops += c.loops;
            out.retries += c.retries;
            out.diagonalizations += c.diagonalizations;
            out.failures.extend(c.failures);
            out.inconsistencies.extend(c.inconsistencies);
        }
        return out;
    }
    let direct: usize = children.iter().map(|c| c.coarse).sum();
    if direct != cell.count {
        out.inconsistencies.push(Inconsistency {
            region: cell.region,
            parent: cell.count,
            children: direct,
        });
    }
    out.count = 0;
    out.winding = 0;
    for c in children {
        out.absorb(c);
    }
    out
}

/// One localized exceptional point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpLocation {
    pub position: Complex64,
    /// Half the diagonal of the final cell.
    pub uncertainty: f64,
    /// Swapped eigenvalues as ranks in the real-axis ordering at
    /// `Re(position)`, when computed.
    pub pair: Option<(usize, usize)>,
    /// Number of levels between the swapped pair in that ordering.
    pub order: Option<usize>,
}

/// Cell at the tolerance scale still holding more than one EP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub region: Region,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub eps: Vec<EpLocation>,
    pub unresolved: Vec<Cluster>,
    pub inconsistencies: Vec<Inconsistency>,
    pub failures: Vec<CellFailure>,
    pub loops: usize,
}

impl Localization {
    fn absorb(&mut self, other: Localization) {
        self.eps.extend(other.eps);
        self.unresolved.extend(other.unresolved);
        self.inconsistencies.extend(other.inconsistencies);
        self.failures.extend(other.failures);
        self.loops += other.loops;
    }
}

/// Localizes every EP in `region` by quadtree subdivision until each leaf
/// holds at most one EP and has diameter at most `tol`.
pub fn localize_eps(
    model: &ModelMatrices,
    region: &Region,
    tol: f64,
    opts: &CensusOptions,
) -> Result<Localization> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    let cell = count_in_cell(model, region, opts)?;
    Ok(localize_cell(model, cell, tol, opts, 0))
}

fn localize_cell(
    model: &ModelMatrices,
    cell: Cell,
    tol: f64,
    opts: &CensusOptions,
    level: u32,
) -> Localization {
    let mut out = Localization {
        loops: 1,
        ..Default::default()
    };
    if cell.enclosed() == 0 {
        return out;
    }
    let r = cell.region;
    if r.diameter() <= tol || level >= opts.max_levels {
        if cell.enclosed() == 1 {
            out.eps.push(EpLocation {
                position: r.center(),
                uncertainty: 0.5 * r.diameter(),
                pair: None,
                order: None,
            });
        } else {
            out.unresolved.push(Cluster {
                region: r,
                count: cell.enclosed(),
            });
        }
        return out;
    }
    let children: Vec<std::result::Result<Cell, CellFailure>> = quadrants(&r)
        .par_iter()
        .map(|q| {
            count_in_cell(model, q, opts).map_err(|e| CellFailure {
                region: *q,
                message: e.to_string(),
            })
        })
        .collect();
    out.loops += children.len();
    let sum: usize = children.iter().flatten().map(Cell::enclosed).sum();
    let failed = children.iter().any(|c| c.is_err());
    if !failed && sum != cell.enclosed() {
        out.inconsistencies.push(Inconsistency {
            region: r,
            parent: cell.enclosed(),
            children: sum,
        });
    }
    let parts: Vec<Localization> = children
        .into_par_iter()
        .map(|c| match c {
            Ok(c) => {
                let mut l = localize_cell(model, c, tol, opts, level + 1);
                l.loops -= 1;
                l
            }
            Err(f) => Localization {
                failures: vec![f],
                ..Default::default()
            },
        })
        .collect();
    for p in parts {
        out.absorb(p);
    }
    out
}

/// Keyhole loop from the real axis at `Re(ep.position)` up to a small square
/// around the EP and back. Its permutation is the EP's transposition written
/// in the real-axis labels, which gives the swap order.
pub fn keyhole_path(ep: &EpLocation, base_steps: usize) -> PathSpec {
    let z = ep.position;
    let h = (2.0 * ep.uncertainty).max(1e-12);
    let x = z.re;
    let sign = if z.im < 0.0 { -1.0 } else { 1.0 };
    let near = z.im - sign * h;
    let far = z.im + sign * h;
    let c = Complex64::new;
    let vertices = vec![
        c(x, 0.0),
        c(x, near),
        c(x + sign * h, near),
        c(x + sign * h, far),
        c(x - sign * h, far),
        c(x - sign * h, near),
        c(x, near),
        c(x, 0.0),
    ];
    PathSpec::new(
        Shape::Polyline {
            vertices,
            closed: true,
        },
        base_steps,
    )
}

/// Fills in `pair` and `order` by tracking [`keyhole_path`].
pub fn classify_ep(model: &ModelMatrices, ep: &mut EpLocation, opts: &CensusOptions) -> Result<()> {
    let path = keyhole_path(ep, opts.base_steps.max(32));
    let trace = track_closed_path(model, &path, &opts.track)?;
    let ranks = ascending_ranks(&trace.start.eigenvalues.iter().map(|e| e.re).collect::<Vec<_>>());
    let report = swap_orders(&trace.permutation, &ranks)?;
    if let [cycle] = report.cycles.as_slice() {
        if cycle.cycle.len() == 2 {
            let (a, b) = (ranks[cycle.cycle[0]], ranks[cycle.cycle[1]]);
            ep.pair = Some((a.min(b), a.max(b)));
            ep.order = Some(cycle.order as usize);
        }
    }
    Ok(())
}

/// The EP closest to the real axis within `[re0, re1] x [im_edges[0],
/// last edge]`: bins are counted bottom-up and only the first non-empty one
/// is localized, to `tol`.
pub fn lowest_ep(
    model: &ModelMatrices,
    re_window: (f64, f64),
    im_edges: &[f64],
    tol: f64,
    opts: &CensusOptions,
) -> Result<Option<EpLocation>> {
    for w in im_edges.windows(2) {
        let region = Region::new(re_window.0, re_window.1, w[0], w[1]);
        let cell = count_in_cell(model, &region, opts)?;
        if cell.enclosed() == 0 {
            continue;
        }
        let counted = cell.enclosed();
        let loc = localize_cell(model, cell, tol, opts, 0);
        if let Some(f) = loc.failures.first() {
            return Err(Error::InvalidPath(format!("cell {:?}: {}", f.region, f.message)));
        }
        let mut candidates = loc.eps;
        candidates.extend(loc.unresolved.iter().map(|c| EpLocation {
            position: c.region.center(),
            uncertainty: 0.5 * c.region.diameter(),
            pair: None,
            order: None,
        }));
        // A bin whose EPs all vanish on refinement is not trusted; go on.
        if let Some(lowest) = candidates
            .into_iter()
            .min_by(|a, b| a.position.im.total_cmp(&b.position.im))
        {
            return Ok(Some(lowest));
        }
        log::warn!("bin {region:?} counted {counted} EPs that localization did not find");
    }
    Ok(None)
}

/// Im(z) bin edges and the number of Re(z) columns per bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub im_edges: Vec<f64>,
    pub re_columns: usize,
}

impl Binning {
    /// Geometric edges from `im_min` up to `im_switch`, then `n_linear`
    /// equal bins up to `im_max`. The first bin starts at 0.
    pub fn mixed(im_min: f64, im_switch: f64, n_geometric: usize, im_max: f64, n_linear: usize, re_columns: usize) -> Result<Self> {
        if !(0.0 < im_min && im_min < im_switch && im_switch < im_max) || n_linear == 0 || re_columns == 0 {
            return Err(Error::InvalidParameter(format!(
                "bad binning: 0 < {im_min} < {im_switch} < {im_max}, {n_linear} linear bins, {re_columns} columns"
            )));
        }
        let mut edges = vec![0.0];
        let n_geo = n_geometric.max(1);
        let ratio = (im_switch / im_min).powf(1.0 / n_geo as f64);
        for k in 0..n_geo {
            edges.push(im_min * ratio.powi(k as i32));
        }
        for k in 0..=n_linear {
            edges.push(im_switch + (im_max - im_switch) * k as f64 / n_linear as f64);
        }
        Ok(Self {
            im_edges: edges,
            re_columns,
        })
    }

    /// Default binning for chain length `length` over `im_max`: a geometric
    /// stack below `0.25` resolving the `2^-L` gap, linear bins of width
    /// `0.25` above, and Re columns of width `~ 2^-L`.
    pub fn standard(length: usize, re_width: f64, im_max: f64) -> Result<Self> {
        let scale = 2f64.powi(-(length as i32));
        let im_switch = 0.25f64.min(0.5 * im_max);
        let im_min = (0.25 * scale).min(0.5 * im_switch);
        let n_geo = ((im_switch / im_min).log2().ceil() as usize).max(1);
        let n_lin = ((im_max - im_switch) / 0.25).ceil().max(1.0) as usize;
        let cols = ((re_width / (3.2 * scale)).round() as usize).max(1);
        Self::mixed(im_min, im_switch, n_geo, im_max, n_lin, cols)
    }

    pub fn n_bins(&self) -> usize {
        self.im_edges.len() - 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityBin {
    pub im_lo: f64,
    pub im_hi: f64,
    pub area: f64,
    pub count: usize,
    /// Sum of leaf discriminant windings, an independent EP count.
    pub winding: i64,
    pub rho: f64,
    pub failed_cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub length: usize,
    pub re_window: (f64, f64),
    pub bins: Vec<DensityBin>,
    pub loops: usize,
    pub retries: u32,
    pub diagonalizations: usize,
    pub inconsistencies: Vec<Inconsistency>,
    /// Leaves whose transposition count and winding still differ.
    pub mismatched_leaves: usize,
    pub failures: Vec<CellFailure>,
}

/// One row of the rescaled views of a profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaledBin {
    pub im_mid: f64,
    /// `rho / 2^(2L)`
    pub rho_rescaled_2l: f64,
    /// `Im z / L`
    pub im_over_l: f64,
    /// `Im z * 2^L`
    pub im_times_2l: f64,
}

impl DensityProfile {
    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn rescaled(&self) -> Vec<RescaledBin> {
        let l = self.length as i32;
        self.bins
            .iter()
            .map(|b| {
                let im_mid = 0.5 * (b.im_lo + b.im_hi);
                RescaledBin {
                    im_mid,
                    rho_rescaled_2l: b.rho * 2f64.powi(-2 * l),
                    im_over_l: im_mid / self.length as f64,
                    im_times_2l: im_mid * 2f64.powi(l),
                }
            })
            .collect()
    }

    /// Lower edge of the lowest non-empty bin.
    pub fn lowest_nonempty(&self) -> Option<&DensityBin> {
        self.bins.iter().find(|b| b.count > 0)
    }

    /// Mean density over `Im z in [im_lo, im_hi]` (whole bins only).
    pub fn mean_density(&self, im_lo: f64, im_hi: f64) -> f64 {
        let (mut count, mut area) = (0usize, 0.0);
        for b in &self.bins {
            if b.im_lo >= im_lo && b.im_hi <= im_hi {
                count += b.count;
                area += b.area;
            }
        }
        if area > 0.0 {
            count as f64 / area
        } else {
            0.0
        }
    }

    /// `im_lo, im_hi, area, count, rho, rho_rescaled_2L, im_over_L, im_times_2L`
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "im_lo,im_hi,area,count,rho,rho_rescaled_2L,im_over_L,im_times_2L")?;
        for (b, r) in self.bins.iter().zip(self.rescaled()) {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                b.im_lo, b.im_hi, b.area, b.count, b.rho, r.rho_rescaled_2l, r.im_over_l, r.im_times_2l
            )?;
        }
        Ok(())
    }
}

/// Histogram of EP counts along Im(z) over the Re window, in cells of
/// `binning.re_columns` columns per Im bin.
pub fn density_profile(
    model: &ModelMatrices,
    length: usize,
    re_window: (f64, f64),
    binning: &Binning,
    opts: &CensusOptions,
) -> Result<DensityProfile> {
    let (re0, re1) = re_window;
    if !(re0 < re1) || binning.im_edges.len() < 2 {
        return Err(Error::InvalidParameter("empty census window".into()));
    }
    if binning.im_edges.windows(2).any(|w| !(w[0] < w[1])) || binning.im_edges[0] < 0.0 {
        return Err(Error::InvalidParameter("Im bin edges must increase from >= 0".into()));
    }
    let cols = binning.re_columns;
    let jobs: Vec<(usize, Region)> = (0..binning.n_bins())
        .flat_map(|b| {
            let (lo, hi) = (binning.im_edges[b], binning.im_edges[b + 1]);
            (0..cols).map(move |c| {
                let a = re0 + (re1 - re0) * c as f64 / cols as f64;
                let z = if c + 1 == cols {
                    re1
                } else {
                    re0 + (re1 - re0) * (c + 1) as f64 / cols as f64
                };
                (b, Region::new(a, z, lo, hi))
            })
        })
        .collect();
    let counted: Vec<RefinedCount> = jobs
        .par_iter()
        .map(|(_, r)| refined_count(model, r, opts))
        .collect();

    let mut profile = DensityProfile {
        length,
        re_window,
        bins: (0..binning.n_bins())
            .map(|b| {
                let (lo, hi) = (binning.im_edges[b], binning.im_edges[b + 1]);
                DensityBin {
                    im_lo: lo,
                    im_hi: hi,
                    area: (re1 - re0) * (hi - lo),
                    count: 0,
                    winding: 0,
                    rho: 0.0,
                    failed_cells: 0,
                }
            })
            .collect(),
        mismatched_leaves: 0,
        loops: 0,
        retries: 0,
        diagonalizations: 0,
        inconsistencies: Vec::new(),
        failures: Vec::new(),
    };
    for ((b, _), c) in jobs.iter().zip(counted) {
        let bin = &mut profile.bins[*b];
        bin.count += c.count;
        bin.winding += c.winding;
        profile.mismatched_leaves += c.mismatched_leaves;
        bin.failed_cells += c.failures.len();
        profile.loops += c.loops;
        profile.retries += c.retries;
        profile.diagonalizations += c.diagonalizations;
        profile.inconsistencies.extend(c.inconsistencies);
        profile.failures.extend(c.failures);
    }
    for b in &mut profile.bins {
        b.rho = b.count as f64 / b.area;
    }
    Ok(profile)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapOrderPoint {
    pub height: f64,
    /// Transposition-weighted mean swap order; `None` without swaps.
    pub average_order: Option<f64>,
    pub transpositions: usize,
    pub failure: Option<String>,
}

/// Average swap order of rectangles `[re0, re1] x [0, h]` for each height,
/// against the ascending order of the real spectrum at `re0`.
pub fn swap_order_profile(
    model: &ModelMatrices,
    anchor: (f64, f64),
    heights: &[f64],
    opts: &CensusOptions,
) -> Result<Vec<SwapOrderPoint>> {
    let (re0, re1) = anchor;
    if !(re0 < re1) || heights.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidParameter("swap-order loops need re0 < re1 and heights > 0".into()));
    }
    let start = spectrum_at(model, Complex64::new(re0, 0.0))?;
    let ranks = ascending_ranks(&start.eigenvalues.iter().map(|e| e.re).collect::<Vec<_>>());
    Ok(heights
        .par_iter()
        .map(|&h| {
            let region = Region::new(re0, re1, 0.0, h);
            match count_in_cell(model, &region, opts) {
                Ok(cell) if cell.tracked.re0 == re0 => {
                    let report = swap_orders(&cell.permutation, &ranks).expect("sizes agree");
                    SwapOrderPoint {
                        height: h,
                        average_order: report.overall_average,
                        transpositions: report.ep_count,
                        failure: None,
                    }
                }
                // A nudged loop starts elsewhere on the real axis; re-rank there.
                Ok(cell) => match spectrum_at(model, Complex64::new(cell.tracked.re0, 0.0)) {
                    Ok(s) => {
                        let r = ascending_ranks(&s.eigenvalues.iter().map(|e| e.re).collect::<Vec<_>>());
                        let report = swap_orders(&cell.permutation, &r).expect("sizes agree");
                        SwapOrderPoint {
                            height: h,
                            average_order: report.overall_average,
                            transpositions: report.ep_count,
                            failure: None,
                        }
                    }
                    Err(e) => SwapOrderPoint {
                        height: h,
                        average_order: None,
                        transpositions: cell.count,
                        failure: Some(e.to_string()),
                    },
                },
                Err(e) => SwapOrderPoint {
                    height: h,
                    average_order: None,
                    transpositions: 0,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// `im_height, avg_order, n_transpositions`; empty order field without swaps.
pub fn write_swap_order_csv<W: Write>(points: &[SwapOrderPoint], mut w: W) -> Result<()> {
    writeln!(w, "im_height,avg_order,n_transpositions")?;
    for p in points {
        let order = p.average_order.map(|o| format!("{o:.16e}")).unwrap_or_default();
        writeln!(w, "{:.16e},{},{}", p.height, order, p.transpositions)?;
    }
    Ok(())
}

/// `re, im, uncertainty, order`; empty order field when not classified.
pub fn write_eps_csv<W: Write>(eps: &[EpLocation], mut w: W) -> Result<()> {
    writeln!(w, "re,im,uncertainty,order")?;
    for e in eps {
        let order = e.order.map(|o| o.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{}",
            e.position.re, e.position.im, e.uncertainty, order
        )?;
    }
    Ok(())
}
