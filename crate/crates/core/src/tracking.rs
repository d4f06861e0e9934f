//! Eigenvalue continuation along closed loops in the complex parameter plane.
//!
//! From the biorthonormal eigensystem at `z0` the eigenvalues at `z0 + eps`
//! are predicted to second order,
//!
//! ```text
//! E_n(z0 + eps) ~ E_n + eps G_nn + eps^2 sum_{m != n} G_nm G_mn / (E_n - E_m),
//! G_nm = <n~| G |m>,
//! ```
//!
//! which is exact through second order because `H` is affine in `z`. The
//! spectrum at `z0 + eps` is then diagonalized and each computed eigenvalue is
//! attached to the label of the prediction it matches. A step whose matching
//! is ambiguous, or whose expansion parameter is too large, is replaced by two
//! half steps, recursively.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::braid::Permutation;
use crate::error::{Error, Result};
use crate::model::{CMat, ModelMatrices};
use crate::spectral::{spectrum_at, Region, Spectrum};

/// Above this size the assignment starts from nearest neighbours and only
/// solves the optimal assignment on the conflicting subset.
pub const OPTIMAL_ASSIGNMENT_MAX: usize = 256;

/// Minimum number of base samples along a path.
pub const MIN_BASE_STEPS: usize = 8;

/// Geometry of a loop `g(phi)`, `phi in [0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    /// Counter-clockwise boundary starting at the corner `(re0, im0)`,
    /// parameterized by arc length.
    Rectangle(Region),
    /// `center + rx cos(2 pi phi) + i ry sin(2 pi phi)`.
    Ellipse { center: Complex64, rx: f64, ry: f64 },
    /// Straight segments through `vertices`, parameterized by arc length.
    /// When `closed`, a final segment returns to the first vertex.
    Polyline { vertices: Vec<Complex64>, closed: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub shape: Shape,
    pub base_steps: usize,
    /// Traverse `g(1 - phi)` instead of `g(phi)`.
    #[serde(default)]
    pub reversed: bool,
}

impl PathSpec {
    pub fn new(shape: Shape, base_steps: usize) -> Self {
        Self {
            shape,
            base_steps,
            reversed: false,
        }
    }

    pub fn rectangle(region: Region, base_steps: usize) -> Self {
        Self::new(Shape::Rectangle(region), base_steps)
    }

    pub fn circle(center: Complex64, radius: f64, base_steps: usize) -> Self {
        Self::new(
            Shape::Ellipse {
                center,
                rx: radius,
                ry: radius,
            },
            base_steps,
        )
    }

    pub fn polygon(vertices: Vec<Complex64>, base_steps: usize) -> Self {
        Self::new(
            Shape::Polyline {
                vertices,
                closed: true,
            },
            base_steps,
        )
    }

    pub fn is_closed(&self) -> bool {
        match &self.shape {
            Shape::Rectangle(_) | Shape::Ellipse { .. } => true,
            Shape::Polyline { vertices, closed } => {
                *closed || (vertices.len() > 1 && vertices.first() == vertices.last())
            }
        }
    }

    pub fn reversed(&self) -> Self {
        Self {
            reversed: !self.reversed,
            ..self.clone()
        }
    }

    /// Same loop with every point replaced by its complex conjugate.
    pub fn conjugated(&self) -> Self {
        let shape = match &self.shape {
            Shape::Rectangle(r) => Shape::Polyline {
                vertices: rectangle_vertices(r).iter().map(|z| z.conj()).collect(),
                closed: true,
            },
            Shape::Ellipse { center, rx, ry } => Shape::Ellipse {
                center: center.conj(),
                rx: *rx,
                ry: -ry,
            },
            Shape::Polyline { vertices, closed } => Shape::Polyline {
                vertices: vertices.iter().map(|z| z.conj()).collect(),
                closed: *closed,
            },
        };
        Self {
            shape,
            ..self.clone()
        }
    }

    pub fn with_base_steps(&self, base_steps: usize) -> Self {
        Self {
            base_steps,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_steps < MIN_BASE_STEPS {
            return Err(Error::InvalidPath(format!(
                "base_steps = {} is below {MIN_BASE_STEPS}",
                self.base_steps
            )));
        }
        match &self.shape {
            Shape::Rectangle(r) if r.is_degenerate() => {
                Err(Error::InvalidPath(format!("degenerate rectangle {r:?}")))
            }
            Shape::Ellipse { rx, ry, center }
                if *rx == 0.0
                    || *ry == 0.0
                    || ![rx.abs(), ry.abs(), center.re, center.im].iter().all(|v| v.is_finite()) =>
            {
                Err(Error::InvalidPath("degenerate ellipse".into()))
            }
            Shape::Polyline { vertices, .. } if vertices.len() < 2 => {
                Err(Error::InvalidPath("polyline needs at least two vertices".into()))
            }
            Shape::Polyline { vertices, .. }
                if vertices.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) =>
            {
                Err(Error::InvalidPath("non-finite polyline vertex".into()))
            }
            _ => Ok(()),
        }
    }

    /// `g(phi)`. For closed paths `g(1)` returns exactly `g(0)`.
    pub fn point(&self, phi: f64) -> Complex64 {
        let mut t = if self.reversed { 1.0 - phi } else { phi };
        if self.is_closed() && (t >= 1.0 || t <= 0.0) {
            t = 0.0;
        }
        match &self.shape {
            Shape::Rectangle(r) => polyline_point(&rectangle_vertices(r), true, t),
            Shape::Ellipse { center, rx, ry } => {
                let a = std::f64::consts::TAU * t;
                center + Complex64::new(rx * a.cos(), ry * a.sin())
            }
            Shape::Polyline { vertices, closed } => polyline_point(vertices, *closed, t),
        }
    }

    /// Number of times the loop winds counter-clockwise around `z`.
    pub fn winding_number(&self, z: Complex64) -> i64 {
        let n = 4096;
        let mut total = 0.0;
        let mut prev = self.point(0.0) - z;
        for k in 1..=n {
            let cur = self.point(k as f64 / n as f64) - z;
            total += (cur / prev).arg();
            prev = cur;
        }
        (total / std::f64::consts::TAU).round() as i64
    }
}

fn rectangle_vertices(r: &Region) -> [Complex64; 4] {
    [
        Complex64::new(r.re0, r.im0),
        Complex64::new(r.re1, r.im0),
        Complex64::new(r.re1, r.im1),
        Complex64::new(r.re0, r.im1),
    ]
}

fn polyline_point(vertices: &[Complex64], closed: bool, t: f64) -> Complex64 {
    let mut segs: Vec<(Complex64, Complex64)> = vertices.windows(2).map(|w| (w[0], w[1])).collect();
    if closed && vertices.first() != vertices.last() {
        segs.push((vertices[vertices.len() - 1], vertices[0]));
    }
    let total: f64 = segs.iter().map(|(a, b)| (b - a).norm()).sum();
    let mut s = t.clamp(0.0, 1.0) * total;
    for &(a, b) in &segs {
        let len = (b - a).norm();
        if s <= len && len > 0.0 {
            return a + (b - a) * (s / len);
        }
        s -= len;
    }
    segs.last().map(|&(_, b)| b).unwrap_or(vertices[0])
}

/// Parses `rect re0 re1 im0 im1` or `ellipse cx cy rx ry`; polylines come
/// from vertex files, see [`read_vertices_csv`].
impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let kind = parts.next().unwrap_or_default().to_ascii_lowercase();
        let nums: Vec<f64> = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidPath(format!("{s:?}: {e}")))?;
        match (kind.as_str(), nums.as_slice()) {
            ("rect" | "rectangle", &[re0, re1, im0, im1]) => {
                Ok(Shape::Rectangle(Region::new(re0, re1, im0, im1)))
            }
            ("ellipse", &[cx, cy, rx, ry]) => Ok(Shape::Ellipse {
                center: Complex64::new(cx, cy),
                rx,
                ry,
            }),
            ("circle", &[cx, cy, r]) => Ok(Shape::Ellipse {
                center: Complex64::new(cx, cy),
                rx: r,
                ry: r,
            }),
            _ => Err(Error::InvalidPath(format!("cannot parse path {s:?}"))),
        }
    }
}

/// Reads `re,im` vertex rows; a header line and `#` comments are skipped.
pub fn read_vertices_csv(text: &str) -> Result<Vec<Complex64>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [a, b] => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some((re, im)) => out.push(Complex64::new(re, im)),
            None if lineno == 0 => continue,
            None => {
                return Err(Error::InvalidPath(format!(
                    "line {}: expected `re,im`, got {line:?}",
                    lineno + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Second-order perturbative eigenvalue predictions around one spectrum.
#[derive(Clone, Debug)]
pub struct Perturbation {
    energies: Vec<Complex64>,
    first: Vec<Complex64>,
    second: Vec<Complex64>,
    /// `max_{m != n} sqrt|G_nm G_mn| / |E_n - E_m|`; the expansion parameter
    /// for a step `eps` is `|eps| * coupling[n]`.
    coupling: Vec<f64>,
}

impl Perturbation {
    pub fn new(spectrum: &Spectrum, g: &CMat) -> Self {
        let n = spectrum.len();
        let gt = spectrum.transform(g);
        let e = &spectrum.eigenvalues;
        let mut first = Vec::with_capacity(n);
        let mut second = Vec::with_capacity(n);
        let mut coupling = Vec::with_capacity(n);
        for a in 0..n {
            first.push(gt[(a, a)]);
            let mut s = Complex64::new(0.0, 0.0);
            let mut k = 0.0f64;
            for b in 0..n {
                if a == b {
                    continue;
                }
                let num = gt[(a, b)] * gt[(b, a)];
                if num == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let den = e[a] - e[b];
                if den.norm() == 0.0 {
                    k = f64::INFINITY;
                    continue;
                }
                s += num / den;
                k = k.max(num.norm().sqrt() / den.norm());
            }
            second.push(s);
            coupling.push(k);
        }
        Self {
            energies: e.clone(),
            first,
            second,
            coupling,
        }
    }

    pub fn predict(&self, eps: Complex64) -> Prediction {
        let values = (0..self.energies.len())
            .map(|a| self.energies[a] + eps * self.first[a] + eps * eps * self.second[a])
            .collect();
        let expansion = eps.norm() * self.coupling.iter().copied().fold(0.0, f64::max);
        Prediction { values, expansion }
    }
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub values: Vec<Complex64>,
    /// Largest `|eps| sqrt|G_nm G_mn| / |E_n - E_m|`. Values of order one or
    /// more mean the step lies outside the range of the expansion.
    pub expansion: f64,
}

impl Prediction {
    pub fn low_confidence(&self, limit: f64) -> bool {
        !(self.expansion <= limit)
    }
}

/// Second-order predictions for `H(z0 + eps)` from the spectrum at `z0`.
pub fn perturbative_prediction(spectrum: &Spectrum, g: &CMat, eps: Complex64) -> Prediction {
    Perturbation::new(spectrum, g).predict(eps)
}

/// A label-to-index bijection.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `map[n]` is the computed eigenvalue assigned to prediction `n`.
    pub map: Vec<usize>,
    pub total_distance: f64,
}

/// Assigns computed eigenvalues to predictions.
///
/// The assignment minimizes the total distance (exactly for up to
/// [`OPTIMAL_ASSIGNMENT_MAX`] eigenvalues). It is accepted only if every
/// matched distance is below `safety` times the distance from the prediction
/// to its second-nearest computed eigenvalue; otherwise
/// [`Error::AmbiguousMatching`] is returned.
pub fn match_eigenvalues(
    predicted: &[Complex64],
    computed: &[Complex64],
    safety: f64,
) -> Result<Assignment> {
    let n = predicted.len();
    if computed.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            got: computed.len(),
        });
    }
    let map = if n <= OPTIMAL_ASSIGNMENT_MAX {
        let cost: Vec<f64> = predicted
            .iter()
            .flat_map(|p| computed.iter().map(move |c| (p - c).norm()))
            .collect();
        optimal_assignment(&cost, n)
    } else {
        nearest_then_optimal(predicted, computed)
    };

    let mut total = 0.0;
    for (a, &k) in map.iter().enumerate() {
        let d = (predicted[a] - computed[k]).norm();
        total += d;
        let second = second_nearest(predicted[a], computed);
        if !(d < safety * second) {
            return Err(Error::AmbiguousMatching);
        }
    }
    Ok(Assignment {
        map,
        total_distance: total,
    })
}

fn second_nearest(p: Complex64, pts: &[Complex64]) -> f64 {
    let (mut d1, mut d2) = (f64::INFINITY, f64::INFINITY);
    for c in pts {
        let d = (p - c).norm();
        if d < d1 {
            d2 = d1;
            d1 = d;
        } else if d < d2 {
            d2 = d;
        }
    }
    d2
}

fn nearest_then_optimal(predicted: &[Complex64], computed: &[Complex64]) -> Vec<usize> {
    let n = predicted.len();
    let nearest: Vec<usize> = predicted
        .iter()
        .map(|p| {
            (0..n)
                .min_by(|&a, &b| (p - computed[a]).norm().total_cmp(&(p - computed[b]).norm()))
                .expect("non-empty")
        })
        .collect();
    let mut claims = vec![0usize; n];
    for &k in &nearest {
        claims[k] += 1;
    }
    let mut map = vec![usize::MAX; n];
    let mut free_rows = Vec::new();
    let mut taken = vec![false; n];
    for a in 0..n {
        if claims[nearest[a]] == 1 {
            map[a] = nearest[a];
            taken[nearest[a]] = true;
        } else {
            free_rows.push(a);
        }
    }
    if free_rows.is_empty() {
        return map;
    }
    let free_cols: Vec<usize> = (0..n).filter(|&k| !taken[k]).collect();
    let m = free_rows.len();
    let cost: Vec<f64> = free_rows
        .iter()
        .flat_map(|&a| free_cols.iter().map(move |&k| (predicted[a] - computed[k]).norm()))
        .collect();
    let sub = optimal_assignment(&cost, m);
    for (r, &c) in sub.iter().enumerate() {
        map[free_rows[r]] = free_cols[c];
    }
    map
}

/// Minimum-cost perfect matching on a dense `n x n` cost matrix (row-major),
/// by the shortest augmenting path method with potentials. Returns the
/// column assigned to each row.
pub(crate) fn optimal_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    debug_assert_eq!(cost.len(), n * n);
    let inf = f64::INFINITY;
    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[p[j] - 1] = j - 1;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackOptions {
    /// Maximum number of successive step halvings below a base step.
    pub max_depth: u32,
    /// Matching safety factor `c`.
    pub safety: f64,
    /// Largest accepted perturbative expansion parameter.
    pub expansion_limit: f64,
    /// Largest accepted change of `arg (E_i - E_j)^2` over one step, for
    /// any pair. Keeps the discriminant winding number well defined.
    #[serde(default = "default_rotation")]
    pub max_pair_rotation: f64,
    /// Keep every accepted sample in the trace.
    pub record_samples: bool,
}

fn default_rotation() -> f64 {
    std::f64::consts::FRAC_PI_2
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            max_depth: 20,
            safety: 0.5,
            expansion_limit: 0.5,
            max_pair_rotation: default_rotation(),
            record_samples: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted_steps: usize,
    pub halvings: usize,
    pub diagonalizations: usize,
    /// Smallest accepted step in `phi`.
    pub min_step: f64,
    pub max_depth_reached: u32,
}

/// Labeled eigenvalues at one accepted point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub phi: f64,
    pub z: Complex64,
    /// `eigenvalues[n]` belongs to label `n`.
    pub eigenvalues: Vec<Complex64>,
}

/// Result of following every eigenvalue once around a closed loop.
#[derive(Clone, Debug)]
pub struct BraidTrace {
    pub samples: Vec<Sample>,
    /// `E_n(0) = E_{pi(n)}(1)`.
    pub permutation: Permutation,
    pub stats: StepStats,
    /// Winding number of the discriminant `prod_{i<j} (E_i - E_j)^2` along
    /// the loop, unrounded. Every simple EP enclosed counter-clockwise adds
    /// one, independently of which pair it swaps.
    pub winding: f64,
    /// Spectrum at `g(0)`; labels are its eigenvalue indices.
    pub start: Arc<Spectrum>,
}

impl BraidTrace {
    /// Number of EPs enclosed according to the discriminant winding. Unlike
    /// the transposition count it does not lose EPs whose swaps cancel.
    pub fn winding_count(&self) -> i64 {
        self.winding.round() as i64
    }

    /// The Vandermonde product `prod_{i<j} (E_i - E_j)` returns multiplied
    /// by `sign(pi)`, so the winding and the transposition count always
    /// have equal parity. A mismatch means some step was mislabelled.
    pub fn parity_consistent(&self) -> bool {
        (self.permutation.transposition_count() as i64 - self.winding_count()).rem_euclid(2) == 0
    }

    /// `phi, re_z, im_z, label, re_lambda, im_lambda` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "phi,re_z,im_z,label,re_lambda,im_lambda")?;
        for s in &self.samples {
            for (label, e) in s.eigenvalues.iter().enumerate() {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e}",
                    s.phi, s.z.re, s.z.im, label, e.re, e.im
                )?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for BraidTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} transpositions, {} diagonalizations)",
            self.permutation,
            self.permutation.transposition_count(),
            self.stats.diagonalizations
        )
    }
}

struct Tracker<'a> {
    model: &'a ModelMatrices,
    path: &'a PathSpec,
    opts: TrackOptions,
    start: Arc<Spectrum>,
    current: Arc<Spectrum>,
    pert: Perturbation,
    phi: f64,
    /// `labels[n]` is the index of label `n` in `current`.
    labels: Vec<usize>,
    stats: StepStats,
    samples: Vec<Sample>,
    winding: f64,
}

impl Tracker<'_> {
    fn record(&mut self) {
        if self.opts.record_samples {
            let ev = &self.current.eigenvalues;
            self.samples.push(Sample {
                phi: self.phi,
                z: self.current.z.unwrap_or_default(),
                eigenvalues: self.labels.iter().map(|&k| ev[k]).collect(),
            });
        }
    }

    fn spectrum(&mut self, phi: f64) -> Result<Arc<Spectrum>> {
        if self.path.is_closed() && phi >= 1.0 {
            return Ok(self.start.clone());
        }
        self.stats.diagonalizations += 1;
        Ok(Arc::new(spectrum_at(self.model, self.path.point(phi))?))
    }

    fn advance(&mut self, phi_b: f64, target: Option<Arc<Spectrum>>, depth: u32) -> Result<()> {
        let phi_a = self.phi;
        let target = match target {
            Some(t) => t,
            None => self.spectrum(phi_b)?,
        };
        let z_a = self.current.z.unwrap_or_default();
        let z_b = target.z.unwrap_or_default();
        let pred = self.pert.predict(z_b - z_a);
        // Predictions are indexed like `current`; reorder to labels.
        let by_label: Vec<Complex64> = self.labels.iter().map(|&k| pred.values[k]).collect();
        let matched = if pred.low_confidence(self.opts.expansion_limit) {
            None
        } else {
            match_eigenvalues(&by_label, &target.eigenvalues, self.opts.safety).ok()
        };
        if let Some(assignment) = matched {
            let before: Vec<Complex64> = self.labels.iter().map(|&k| self.current.eigenvalues[k]).collect();
            let after: Vec<Complex64> = assignment.map.iter().map(|&k| target.eigenvalues[k]).collect();
            let (turn, largest) = pair_rotation(&before, &after);
            if largest <= self.opts.max_pair_rotation {
                self.winding += turn;
                self.labels = assignment.map;
                self.phi = phi_b;
                self.stats.accepted_steps += 1;
                let step = phi_b - phi_a;
                if self.stats.min_step == 0.0 || step < self.stats.min_step {
                    self.stats.min_step = step;
                }
                self.stats.max_depth_reached = self.stats.max_depth_reached.max(depth);
                let finished = Arc::ptr_eq(&target, &self.start);
                self.current = target;
                if !finished {
                    self.pert = Perturbation::new(&self.current, &self.model.g);
                }
                self.record();
                return Ok(());
            }
        }
        if depth >= self.opts.max_depth {
            return Err(Error::MaxDepthExceeded {
                phi_start: phi_a,
                phi_end: phi_b,
            });
        }
        self.stats.halvings += 1;
        let mid = 0.5 * (phi_a + phi_b);
        self.advance(mid, None, depth + 1)?;
        self.advance(phi_b, Some(target), depth + 1)
    }
}

/// Total and largest absolute change of `arg (a_i - a_j)^2` from `a` to `b`
/// over all pairs, each change taken as twice the turn of `a_i - a_j` in
/// `(-pi, pi]`.
pub(crate) fn pair_rotation(a: &[Complex64], b: &[Complex64]) -> (f64, f64) {
    let mut total = 0.0;
    let mut largest = 0.0f64;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let r = (b[i] - b[j]) / (a[i] - a[j]);
            // Twice the turn of the difference itself, not the turn of its
            // square: a pair passing through each other (r = -1, e.g. a
            // mislabelled avoided crossing on the real axis) reads 2 pi.
            let d = if r.is_finite() && r.norm() > 0.0 {
                2.0 * r.arg()
            } else {
                f64::INFINITY
            };
            total += d;
            largest = largest.max(d.abs());
        }
    }
    (total, largest)
}

/// Follows all eigenvalues of `H(g(phi))` once around a closed path.
///
/// The base discretization is uniform in `phi`; each base step is halved
/// recursively (up to `opts.max_depth` times) until the perturbative
/// prediction is within range and the matching is unambiguous.
pub fn track_closed_path(
    model: &ModelMatrices,
    path: &PathSpec,
    opts: &TrackOptions,
) -> Result<BraidTrace> {
    path.validate()?;
    if !path.is_closed() {
        return Err(Error::InvalidPath("braid extraction needs a closed path".into()));
    }
    let start = Arc::new(spectrum_at(model, path.point(0.0))?);
    let n = start.len();
    let mut tracker = Tracker {
        model,
        path,
        opts: *opts,
        pert: Perturbation::new(&start, &model.g),
        current: start.clone(),
        start,
        phi: 0.0,
        labels: (0..n).collect(),
        stats: StepStats {
            diagonalizations: 1,
            ..Default::default()
        },
        samples: Vec::new(),
        winding: 0.0,
    };
    tracker.record();
    let steps = path.base_steps;
    for k in 1..=steps {
        let phi = k as f64 / steps as f64;
        tracker.advance(phi, None, 0)?;
    }
    // Label n ends on start index labels[n], i.e. E_{labels[n]}(0) = E_n(1).
    let permutation = Permutation::new(tracker.labels)?.inverse();
    Ok(BraidTrace {
        samples: tracker.samples,
        permutation,
        stats: tracker.stats,
        winding: tracker.winding / std::f64::consts::TAU,
        start: tracker.start,
    })
}
