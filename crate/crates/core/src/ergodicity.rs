//! Hermitian-limit diagnostics: adjacent gap ratios and eigenstate
//! expectation values.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{hermiticity_defect, pauli_string_operator, CMat, PauliString};
use crate::spectral::{hermitian_eigen, matmul};

/// Mean gap ratio of uncorrelated levels, `2 ln 2 - 1`.
pub const POISSON_MEAN_RATIO: f64 = 0.386_294_361_119_890_6;

/// Which part of a sorted spectrum enters the statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Full,
    /// Keep this fraction of levels around the middle of the spectrum.
    Central(f64),
}

impl Default for Window {
    fn default() -> Self {
        Window::Central(0.5)
    }
}

impl Window {
    /// Index range `[lo, hi)` of the kept levels out of `n`.
    pub fn range(self, n: usize) -> Result<(usize, usize)> {
        match self {
            Window::Full => Ok((0, n)),
            Window::Central(f) if f > 0.0 && f <= 1.0 => {
                let keep = ((n as f64 * f).round() as usize).min(n);
                let lo = (n - keep) / 2;
                Ok((lo, lo + keep))
            }
            Window::Central(f) => Err(Error::InvalidParameter(format!(
                "window fraction {f} not in (0, 1]"
            ))),
        }
    }
}

/// Density histogram on fixed bin edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Histogram {
    /// Normalized histogram of `values` on `bins` equal bins over `[lo, hi]`.
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|k| lo + width * k as f64).collect();
        let mut counts = vec![0usize; bins];
        for &v in values {
            if v >= lo && v <= hi {
                counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let density = counts
            .iter()
            .map(|&c| if total > 0 { c as f64 / (total as f64 * width) } else { 0.0 })
            .collect();
        Self { edges, density }
    }

    pub fn integral(&self) -> f64 {
        self.density
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }

    /// `bin_lo, bin_hi, density`
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_lo,bin_hi,density")?;
        for (d, e) in self.density.iter().zip(self.edges.windows(2)) {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", e[0], e[1], d)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRatioStats {
    pub ratios: Vec<f64>,
    pub mean: f64,
    /// Naive standard error `sd / sqrt(n)`.
    pub std_err: f64,
    /// Ratios dropped because a gap was zero.
    pub skipped: usize,
    pub histogram: Histogram,
}

/// Adjacent gap ratios `r_n = min(s_n / s_{n-1}, s_{n-1} / s_n)` of a sorted
/// real spectrum, restricted to `window`.
pub fn gap_ratios(sorted: &[f64], window: Window, bins: usize) -> Result<GapRatioStats> {
    if sorted.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidParameter("eigenvalues must be sorted ascending and finite".into()));
    }
    let (lo, hi) = window.range(sorted.len())?;
    let levels = &sorted[lo..hi];
    if levels.len() < 3 {
        return Err(Error::TooFewEigenvalues {
            needed: 3,
            got: levels.len(),
        });
    }
    let mut ratios = Vec::with_capacity(levels.len() - 2);
    let mut skipped = 0;
    for w in levels.windows(3) {
        let (a, b) = (w[1] - w[0], w[2] - w[1]);
        if a == 0.0 || b == 0.0 {
            skipped += 1;
            continue;
        }
        ratios.push(a.min(b) / a.max(b));
    }
    if ratios.is_empty() {
        return Err(Error::InvalidParameter("all gaps degenerate".into()));
    }
    let (mean, std_err) = mean_and_error(&ratios);
    let histogram = Histogram::new(&ratios, 0.0, 1.0, bins.max(1));
    Ok(GapRatioStats {
        ratios,
        mean,
        std_err,
        skipped,
        histogram,
    })
}

fn mean_and_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// GUE matrix `(A + A^dagger) / 2` with standard complex Gaussian `A`.
pub fn sample_gue<R: Rng>(n: usize, rng: &mut R) -> CMat {
    let mut a = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            a[(i, j)] = Complex64::new(re, im);
        }
    }
    CMat::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// Sampled reference value of the mean gap ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub mean: f64,
    /// Standard error from the spread of per-sample means.
    pub std_err: f64,
    pub samples: usize,
    pub dimension: usize,
    pub seed: u64,
}

/// Mean gap ratio of `samples` GUE matrices of size `dimension` with the
/// estimator settings of [`gap_ratios`]. Sample `k` uses stream `k` of a
/// ChaCha8 generator seeded with `seed`, so the result does not depend on
/// the thread count.
pub fn gue_reference(dimension: usize, samples: usize, window: Window, seed: u64) -> Result<Reference> {
    if samples == 0 || dimension < 3 {
        return Err(Error::InvalidParameter("need samples >= 1 and dimension >= 3".into()));
    }
    let means: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let h = sample_gue(dimension, &mut rng);
            let (e, _) = hermitian_eigen(&h, false)?;
            Ok(gap_ratios(&e, window, 1)?.mean)
        })
        .collect::<Result<_>>()?;
    let (mean, std_err) = mean_and_error(&means);
    Ok(Reference {
        mean,
        std_err,
        samples,
        dimension,
        seed,
    })
}

/// Gap-ratio statistics of `n` i.i.d. uniform levels on the full window.
pub fn poisson_control(n: usize, seed: u64, bins: usize) -> Result<GapRatioStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    levels.sort_by(f64::total_cmp);
    gap_ratios(&levels, Window::Full, bins)
}

/// Eigenstate expectation values of one observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EthScatter {
    pub observable: String,
    /// Ascending eigenenergies.
    pub energies: Vec<f64>,
    pub expectations: Vec<f64>,
    /// Largest imaginary part discarded from an expectation value.
    pub max_imaginary: f64,
}

impl EthScatter {
    /// Pearson correlation between energy and expectation value.
    pub fn pearson(&self) -> f64 {
        pearson(&self.energies, &self.expectations)
    }

    /// Eigenstate-to-eigenstate fluctuation `sd(O_{n+1} - O_n) / sqrt 2`
    /// within `window`; smooth energy dependence cancels in the differences.
    pub fn scatter_width(&self, window: Window) -> Result<f64> {
        let (lo, hi) = window.range(self.expectations.len())?;
        let d: Vec<f64> = self.expectations[lo..hi].windows(2).map(|w| w[1] - w[0]).collect();
        if d.len() < 2 {
            return Err(Error::TooFewEigenvalues {
                needed: 3,
                got: hi - lo,
            });
        }
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok((var / 2.0).sqrt())
    }

    /// `E_n, expectation`
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "E_n,expectation")?;
        for (e, o) in self.energies.iter().zip(&self.expectations) {
            writeln!(w, "{e:.16e},{o:.16e}")?;
        }
        Ok(())
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Relative tolerance for accepting a matrix as hermitian.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

/// `<n|O|n>` for every eigenvector of the hermitian matrix `h`.
pub fn eigenstate_expectations(h: &CMat, observable: &CMat, label: &str) -> Result<EthScatter> {
    let scale = (0..h.nrows())
        .flat_map(|i| (0..h.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| h[(i, j)].norm())
        .fold(1.0f64, f64::max);
    let defect = hermiticity_defect(h);
    if defect > HERMITIAN_TOLERANCE * scale {
        return Err(Error::NotHermitian { defect });
    }
    if observable.nrows() != h.nrows() || observable.ncols() != h.ncols() {
        return Err(Error::SizeMismatch {
            expected: h.nrows(),
            got: observable.nrows(),
        });
    }
    let (energies, vectors) = hermitian_eigen(h, true)?;
    let v = vectors.expect("requested eigenvectors");
    let ov = matmul(observable, &v);
    let mut expectations = Vec::with_capacity(energies.len());
    let mut max_imaginary = 0.0f64;
    for n in 0..energies.len() {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..v.nrows() {
            acc += v[(i, n)].conj() * ov[(i, n)];
        }
        max_imaginary = max_imaginary.max(acc.im.abs());
        expectations.push(acc.re);
    }
    Ok(EthScatter {
        observable: label.to_string(),
        energies,
        expectations,
        max_imaginary,
    })
}

/// [`eigenstate_expectations`] for a Pauli-string observable on `length` sites.
pub fn eth_scatter(h: &CMat, observable: &PauliString, length: usize) -> Result<EthScatter> {
    let o = pauli_string_operator(observable, length)?;
    eigenstate_expectations(h, &o, &observable.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelMatrices, ModelParams};
    use proptest::prelude::*;

    #[test]
    fn equally_spaced_levels_have_unit_ratios() {
        let s = gap_ratios(&[0.0, 1.0, 2.0, 3.0], Window::Full, 10).unwrap();
        assert_eq!(s.ratios, vec![1.0, 1.0]);
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.skipped, 0);
    }

    #[test]
    fn three_levels() {
        let s = gap_ratios(&[0.0, 1.0, 3.0], Window::Full, 4).unwrap();
        assert_eq!(s.ratios, vec![0.5]);
        assert!((s.histogram.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_gaps_are_skipped() {
        let s = gap_ratios(&[0.0, 1.0, 1.0, 2.0, 4.0], Window::Full, 4).unwrap();
        assert_eq!(s.skipped, 2);
        assert_eq!(s.ratios, vec![0.5]);
        assert!(gap_ratios(&[0.0, 1.0], Window::Full, 4).is_err());
        assert!(gap_ratios(&[1.0, 0.0, 2.0], Window::Full, 4).is_err());
        assert!(gap_ratios(&[0.0, 1.0, 2.0], Window::Central(0.0), 4).is_err());
    }

    #[test]
    fn central_window_indices() {
        assert_eq!(Window::Central(0.5).range(100).unwrap(), (25, 75));
        assert_eq!(Window::Central(0.5).range(7).unwrap(), (1, 5));
        assert_eq!(Window::Full.range(7).unwrap(), (0, 7));
    }

    proptest! {
        #[test]
        fn ratios_are_bounded_and_affine_invariant(
            mut levels in proptest::collection::vec(-100.0f64..100.0, 3..60),
            a in 0.01f64..50.0,
            b in -20.0f64..20.0,
        ) {
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            prop_assume!(levels.len() >= 3);
            let s = gap_ratios(&levels, Window::Full, 20).unwrap();
            for r in &s.ratios {
                prop_assert!((0.0..=1.0).contains(r));
            }
            prop_assert!((s.histogram.integral() - 1.0).abs() < 1e-6);
            let mapped: Vec<f64> = levels.iter().map(|e| a * e + b).collect();
            let t = gap_ratios(&mapped, Window::Full, 20).unwrap();
            prop_assert_eq!(s.ratios.len(), t.ratios.len());
            for (x, y) in s.ratios.iter().zip(&t.ratios) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn poisson_control_matches_the_closed_form() {
        // P(r) = 2 / (1 + r)^2 on [0, 1] gives <r> = 2 ln 2 - 1.
        let n = 200_000;
        let s = poisson_control(n, 7, 50).unwrap();
        assert!((s.mean - POISSON_MEAN_RATIO).abs() < 0.01, "{}", s.mean);
        assert!((s.mean - POISSON_MEAN_RATIO).abs() < 5.0 * s.std_err);
        let quadrature: f64 = (0..100_000)
            .map(|k| {
                let r = (k as f64 + 0.5) / 100_000.0;
                r * 2.0 / (1.0 + r).powi(2) / 100_000.0
            })
            .sum();
        assert!((quadrature - POISSON_MEAN_RATIO).abs() < 1e-9);
    }

    #[test]
    fn small_gue_reference_is_in_the_gue_range() {
        let r = gue_reference(64, 40, Window::default(), 3).unwrap();
        assert!((r.mean - 0.60).abs() < 0.03, "{r:?}");
        let again = gue_reference(64, 40, Window::default(), 3).unwrap();
        assert_eq!(r, again);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = sample_gue(8, &mut rng);
        assert!(hermiticity_defect(&h) == 0.0);
    }

    #[test]
    fn identity_and_hamiltonian_observables() {
        let m = build_model(&ModelParams::reference(4)).unwrap();
        let h = m.evaluate(Complex64::new(0.5, 0.0));
        let id = eth_scatter(&h, &"3*I".parse().unwrap(), 4).unwrap();
        for o in &id.expectations {
            assert!((o - 3.0).abs() < 1e-12);
        }
        let own = eigenstate_expectations(&h, &h, "H").unwrap();
        for (e, o) in own.energies.iter().zip(&own.expectations) {
            assert!((e - o).abs() < 1e-9);
        }
        assert!(own.max_imaginary < 1e-10);
        let x = eth_scatter(&h, &"x4x5".parse().unwrap(), 6);
        assert!(x.is_err());
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let m = ModelMatrices::toy();
        let h = m.evaluate(Complex64::new(0.5, 0.3));
        assert!(matches!(
            eigenstate_expectations(&h, &m.g, "G"),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn pauli_observable_is_bounded() {
        let m = build_model(&ModelParams::reference(6)).unwrap();
        let h = m.evaluate(Complex64::new(0.5, 0.0));
        let s = eth_scatter(&h, &"x4x5".parse().unwrap(), 6).unwrap();
        assert_eq!(s.expectations.len(), 64);
        assert!(s.max_imaginary < 1e-10);
        assert!(s.expectations.iter().all(|o| o.abs() <= 1.0 + 1e-12));
        assert!(s.scatter_width(Window::default()).unwrap() > 0.0);
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
    }
}
