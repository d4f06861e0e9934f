//! Dense non-hermitian eigendecomposition and minimal eigenvalue distances.

use std::io::Write;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::Par;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CMat, ModelMatrices};

/// Overlap below which a right/left pair is reported as nearly defective.
pub const DEFECTIVE_OVERLAP: f64 = 1e-12;

/// Eigenvalues with biorthonormal right and left eigenvectors.
///
/// Column `n` of `right` is a unit-norm right eigenvector and column `n` of
/// `left` satisfies `left[:, n]^dagger right[:, m] = delta_nm`.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub z: Option<Complex64>,
    pub eigenvalues: Vec<Complex64>,
    pub right: CMat,
    pub left: CMat,
    /// Smallest `|<n~|n>|` over unit-norm pairs before rescaling. This is the
    /// inverse of the worst eigenvalue condition number.
    pub min_overlap: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn near_defective(&self) -> bool {
        self.min_overlap < DEFECTIVE_OVERLAP
    }

    /// `left^dagger A right`, the matrix elements of `a` in the eigenbasis.
    pub fn transform(&self, a: &CMat) -> CMat {
        let ar = matmul(a, &self.right);
        let mut out = CMat::zeros(self.len(), self.len());
        faer::linalg::matmul::matmul(
            out.as_mut(),
            faer::Accum::Replace,
            self.left.adjoint(),
            ar.as_ref(),
            Complex64::new(1.0, 0.0),
            Par::Seq,
        );
        out
    }
}

fn check_square_finite(h: &CMat) -> Result<()> {
    if h.nrows() != h.ncols() {
        return Err(Error::BadMatrix);
    }
    for j in 0..h.ncols() {
        for i in 0..h.nrows() {
            let v = h[(i, j)];
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::BadMatrix);
            }
        }
    }
    Ok(())
}

/// Full eigendecomposition of a general complex matrix.
///
/// Right vectors are unit norm; left vectors are rescaled so that
/// `<n~|m> = delta_nm`. Eigenvalues come in the solver's order.
pub fn full_spectrum(h: &CMat) -> Result<Spectrum> {
    check_square_finite(h)?;
    let n = h.nrows();
    let mut s = faer::diag::Diag::<Complex64>::zeros(n);
    let mut ul = CMat::zeros(n, n);
    let mut ur = CMat::zeros(n, n);
    let par = Par::Seq;
    let req = evd::evd_scratch::<Complex64>(
        n,
        ComputeEigenvectors::Yes,
        ComputeEigenvectors::Yes,
        par,
        Default::default(),
    );
    let mut buf = MemBuffer::new(req);
    evd::evd_cplx::<f64>(
        h.as_ref(),
        s.as_mut(),
        Some(ul.as_mut()),
        Some(ur.as_mut()),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|_| Error::NoConvergence {
        z: Complex64::new(f64::NAN, f64::NAN),
    })?;

    let eigenvalues: Vec<Complex64> = (0..n).map(|i| s[i]).collect();
    if eigenvalues.iter().any(|e| !(e.re.is_finite() && e.im.is_finite())) {
        return Err(Error::NoConvergence {
            z: Complex64::new(f64::NAN, f64::NAN),
        });
    }
    let mut min_overlap = f64::INFINITY;
    for k in 0..n {
        let rn = ur.col(k).norm_l2();
        let ln = ul.col(k).norm_l2();
        for i in 0..n {
            ur[(i, k)] /= rn;
            ul[(i, k)] /= ln;
        }
        let overlap: Complex64 = (0..n).map(|i| ul[(i, k)].conj() * ur[(i, k)]).sum();
        min_overlap = min_overlap.min(overlap.norm());
        let scale = overlap.conj();
        for i in 0..n {
            ul[(i, k)] /= scale;
        }
    }
    Ok(Spectrum {
        z: None,
        eigenvalues,
        right: ur,
        left: ul,
        min_overlap,
    })
}

/// [`full_spectrum`] of `H(z)`, with `z` attached to the result and to errors.
pub fn spectrum_at(model: &ModelMatrices, z: Complex64) -> Result<Spectrum> {
    let mut s = full_spectrum(&model.evaluate(z)).map_err(|e| match e {
        Error::NoConvergence { .. } => Error::NoConvergence { z },
        other => other,
    })?;
    s.z = Some(z);
    Ok(s)
}

/// Eigenvalues only.
pub fn eigenvalues(h: &CMat) -> Result<Vec<Complex64>> {
    check_square_finite(h)?;
    let n = h.nrows();
    let mut s = faer::diag::Diag::<Complex64>::zeros(n);
    let par = Par::Seq;
    let req = evd::evd_scratch::<Complex64>(
        n,
        ComputeEigenvectors::No,
        ComputeEigenvectors::No,
        par,
        Default::default(),
    );
    let mut buf = MemBuffer::new(req);
    evd::evd_cplx::<f64>(
        h.as_ref(),
        s.as_mut(),
        None,
        None,
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|_| Error::NoConvergence {
        z: Complex64::new(f64::NAN, f64::NAN),
    })?;
    Ok((0..n).map(|i| s[i]).collect())
}

/// Ascending eigenvalues (and optionally orthonormal eigenvectors) of a
/// hermitian matrix. Only the lower triangle is read.
pub fn hermitian_eigen(h: &CMat, vectors: bool) -> Result<(Vec<f64>, Option<CMat>)> {
    check_square_finite(h)?;
    let n = h.nrows();
    let par = Par::Seq;
    let want = if vectors {
        ComputeEigenvectors::Yes
    } else {
        ComputeEigenvectors::No
    };
    let mut s = faer::diag::Diag::<Complex64>::zeros(n);
    let mut u = vectors.then(|| CMat::zeros(n, n));
    let req = evd::self_adjoint_evd_scratch::<Complex64>(n, want, par, Default::default());
    let mut buf = MemBuffer::new(req);
    evd::self_adjoint_evd(
        h.as_ref(),
        s.as_mut(),
        u.as_mut().map(|u| u.as_mut()),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|_| Error::NoConvergence {
        z: Complex64::new(f64::NAN, f64::NAN),
    })?;
    Ok(((0..n).map(|i| s[i].re).collect(), u))
}

/// `a * b` on the calling thread.
pub(crate) fn matmul(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows(), b.ncols());
    faer::linalg::matmul::matmul(
        out.as_mut(),
        faer::Accum::Replace,
        a.as_ref(),
        b.as_ref(),
        Complex64::new(1.0, 0.0),
        Par::Seq,
    );
    out
}

/// Exact `min_{i != j} |l_i - l_j|`.
///
/// Sweeps the eigenvalues in order of real part and prunes pairs whose real
/// parts are already farther apart than the best distance found.
pub fn min_pair_distance(eigenvalues: &[Complex64]) -> Result<f64> {
    if eigenvalues.len() < 2 {
        return Err(Error::TooFewEigenvalues {
            needed: 2,
            got: eigenvalues.len(),
        });
    }
    let mut sorted = eigenvalues.to_vec();
    sorted.sort_by(|a, b| a.re.total_cmp(&b.re));
    let mut best = f64::INFINITY;
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            if sorted[j].re - sorted[i].re >= best {
                break;
            }
            best = best.min((sorted[j] - sorted[i]).norm());
        }
    }
    Ok(best)
}

/// Axis-aligned rectangle in the complex plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub re0: f64,
    pub re1: f64,
    pub im0: f64,
    pub im1: f64,
}

impl Region {
    pub fn new(re0: f64, re1: f64, im0: f64, im1: f64) -> Self {
        Self { re0, re1, im0, im1 }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.re1 > self.re0 && self.im1 > self.im0)
            || ![self.re0, self.re1, self.im0, self.im1]
                .iter()
                .all(|v| v.is_finite())
    }

    pub fn width(&self) -> f64 {
        self.re1 - self.re0
    }

    pub fn height(&self) -> f64 {
        self.im1 - self.im0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.re0 + self.re1), 0.5 * (self.im0 + self.im1))
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn conj(&self) -> Self {
        Self::new(self.re0, self.re1, -self.im1, -self.im0)
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re0 && z.re <= self.re1 && z.im >= self.im0 && z.im <= self.im1
    }
}

/// Grid node `k` of `n` along `[a, b]`, computed so that mirrored intervals
/// give exactly mirrored nodes.
pub(crate) fn node(a: f64, b: f64, k: usize, n: usize) -> f64 {
    if k == 0 {
        return a;
    }
    if k + 1 == n {
        return b;
    }
    let m = (n - 1) as f64;
    ((n - 1 - k) as f64 * a + k as f64 * b) / m
}

/// Minimal eigenvalue distance sampled on a rectangular grid.
///
/// `values` is row-major with one row per imaginary-part node:
/// `values[j * n_re + i]` belongs to `z = re_i + i im_j`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistanceGrid {
    pub region: Region,
    pub resolution: (usize, usize),
    pub values: Vec<f64>,
    /// Nodes where the eigensolver failed; their value is NaN.
    pub failures: Vec<Complex64>,
}

impl DistanceGrid {
    pub fn z_at(&self, i: usize, j: usize) -> Complex64 {
        let (n_re, n_im) = self.resolution;
        Complex64::new(
            node(self.region.re0, self.region.re1, i, n_re),
            node(self.region.im0, self.region.im1, j, n_im),
        )
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.resolution.0 + i]
    }

    /// Node with the smallest finite value.
    pub fn argmin(&self) -> Option<(Complex64, f64)> {
        let (n_re, n_im) = self.resolution;
        let mut best: Option<(Complex64, f64)> = None;
        for j in 0..n_im {
            for i in 0..n_re {
                let v = self.value(i, j);
                if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
                    best = Some((self.z_at(i, j), v));
                }
            }
        }
        best
    }

    /// Largest `|delta(z) - delta(z*)|` over node pairs mirrored through the
    /// real axis. Only meaningful when the region is symmetric.
    pub fn conjugation_defect(&self) -> f64 {
        let (n_re, n_im) = self.resolution;
        let mut worst = 0.0f64;
        for j in 0..n_im {
            for i in 0..n_re {
                let a = self.value(i, j);
                let b = self.value(i, n_im - 1 - j);
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "re_z,im_z,delta")?;
        let (n_re, n_im) = self.resolution;
        for j in 0..n_im {
            for i in 0..n_re {
                let z = self.z_at(i, j);
                writeln!(w, "{:.16e},{:.16e},{:.16e}", z.re, z.im, self.value(i, j))?;
            }
        }
        Ok(())
    }

    /// One line of JSON header followed by little-endian `f64` values in
    /// row-major order.
    pub fn write_binary<W: Write>(&self, mut w: W, header: &GridHeader) -> Result<()> {
        serde_json::to_writer(&mut w, header)?;
        w.write_all(b"\n")?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(bytes: &[u8]) -> Result<(GridHeader, Vec<f64>)> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Config("missing grid header".into()))?;
        let header: GridHeader = serde_json::from_slice(&bytes[..nl])?;
        let body = &bytes[nl + 1..];
        let expected = header.resolution.0 * header.resolution.1;
        if body.len() != expected * 8 {
            return Err(Error::SizeMismatch {
                expected: expected * 8,
                got: body.len(),
            });
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok((header, values))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub region: Region,
    pub resolution: (usize, usize),
    #[serde(rename = "L")]
    pub length: usize,
    pub parameter_hash: String,
    pub layout: String,
}

/// Samples `delta(z)` on an `n_re x n_im` grid including the region's edges.
///
/// Rows are distributed over the current rayon pool; every node is computed
/// independently so the output does not depend on the thread count.
pub fn distance_grid(
    model: &ModelMatrices,
    region: Region,
    resolution: (usize, usize),
) -> Result<DistanceGrid> {
    let (n_re, n_im) = resolution;
    if region.is_degenerate() {
        return Err(Error::InvalidParameter(format!("degenerate region {region:?}")));
    }
    if n_re < 2 || n_im < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid resolution {n_re}x{n_im} must be at least 2x2"
        )));
    }
    if model.dimension() < 2 {
        return Err(Error::TooFewEigenvalues {
            needed: 2,
            got: model.dimension(),
        });
    }
    let rows: Vec<Vec<(f64, Option<Complex64>)>> = (0..n_im)
        .into_par_iter()
        .map(|j| {
            let im = node(region.im0, region.im1, j, n_im);
            (0..n_re)
                .map(|i| {
                    let z = Complex64::new(node(region.re0, region.re1, i, n_re), im);
                    match eigenvalues(&model.evaluate(z)) {
                        Ok(ev) => (min_pair_distance(&ev).unwrap_or(f64::NAN), None),
                        Err(_) => (f64::NAN, Some(z)),
                    }
                })
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(n_re * n_im);
    let mut failures = Vec::new();
    for row in rows {
        for (v, f) in row {
            values.push(v);
            failures.extend(f);
        }
    }
    Ok(DistanceGrid {
        region,
        resolution,
        values,
        failures,
    })
}
