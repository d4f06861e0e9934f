//! Spin-1/2 chain with a complex coupling parameter.
//!
//! The Hamiltonian is affine in the complex parameter `z`:
//!
//! ```text
//! H(z) = H0 + z G
//! H0   = sum_{i=1}^{L-1} (Jx X_i X_{i+1} + Jy Y_i Y_{i+1} + Jz Z_i Z_{i+1}) + h1.sigma_1 + hL.sigma_L
//! G    = sum_{i=1}^{L}   (gxz X_i Z_{i+1} + gxy X_i Y_{i+1} + gyz Y_i Z_{i+1})      (site L+1 == 1)
//! ```
//!
//! The `J` bonds are open while the `g` bonds wrap around the chain.
//!
//! Basis convention: tensor-product basis with site 1 as the most significant
//! qubit. Bit value 0 is spin up (`Z = +1`), bit value 1 is spin down. Basis
//! index `b` therefore holds site `s` (1-based) in bit `L - s`.

use std::fmt;
use std::str::FromStr;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default upper bound on the chain length (Hilbert dimension 4096).
pub const DEFAULT_MAX_LENGTH: usize = 12;

/// Dense complex matrix used throughout the crate.
pub type CMat = Mat<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Coupling constants, boundary fields and chain length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(rename = "L")]
    pub length: usize,
    #[serde(rename = "Jx")]
    pub jx: f64,
    #[serde(rename = "Jy")]
    pub jy: f64,
    #[serde(rename = "Jz")]
    pub jz: f64,
    pub gxz: f64,
    pub gxy: f64,
    pub gyz: f64,
    pub h1: [f64; 3],
    #[serde(rename = "hL")]
    pub hl: [f64; 3],
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::reference(6)
    }
}

impl ModelParams {
    /// The generic, symmetry-free parameter set used throughout the analysis.
    pub fn reference(length: usize) -> Self {
        Self {
            length,
            jx: 1.2,
            jy: 1.0,
            jz: 0.7,
            gxz: 0.91,
            gxy: 0.7,
            gyz: 1.0,
            h1: [0.0291241, 0.02341097, 0.0567],
            hl: [0.091241, 0.018924, 0.0781652],
        }
    }

    /// All couplings and fields zero.
    pub fn zero(length: usize) -> Self {
        Self {
            length,
            jx: 0.0,
            jy: 0.0,
            jz: 0.0,
            gxz: 0.0,
            gxy: 0.0,
            gyz: 0.0,
            h1: [0.0; 3],
            hl: [0.0; 3],
        }
    }

    pub fn with_length(mut self, length: usize) -> Self {
        self.length = length;
        self
    }

    pub fn dimension(&self) -> usize {
        1usize << self.length
    }

    /// Checks finiteness and `2 <= L <= max_length`.
    pub fn validate(&self, max_length: usize) -> Result<()> {
        if self.length < 2 {
            return Err(Error::InvalidParameter(format!(
                "chain length L = {} must be at least 2",
                self.length
            )));
        }
        if self.length > max_length {
            return Err(Error::DimensionOverflow {
                length: self.length,
                max: max_length,
            });
        }
        let scalars = [
            ("Jx", self.jx),
            ("Jy", self.jy),
            ("Jz", self.jz),
            ("gxz", self.gxz),
            ("gxy", self.gxy),
            ("gyz", self.gyz),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {v} is not finite")));
            }
        }
        for (name, v) in [("h1", self.h1), ("hL", self.hl)] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v:?} is not finite")));
            }
        }
        Ok(())
    }

    /// Parses the plain-text `key = value` format. Missing keys keep their
    /// default values; unknown keys are rejected.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let defaults = toml::Table::try_from(Self::default())
            .map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in defaults {
            table.entry(k).or_insert(v);
        }
        // Integers are accepted where floats are expected.
        for (k, v) in table.iter_mut() {
            if k != "L" {
                promote_ints(v);
            }
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn to_config_string(&self) -> String {
        format!(
            "L = {}\nJx = {:?}\nJy = {:?}\nJz = {:?}\ngxz = {:?}\ngxy = {:?}\ngyz = {:?}\nh1 = [{:?}, {:?}, {:?}]\nhL = [{:?}, {:?}, {:?}]\n",
            self.length,
            self.jx,
            self.jy,
            self.jz,
            self.gxz,
            self.gxy,
            self.gyz,
            self.h1[0],
            self.h1[1],
            self.h1[2],
            self.hl[0],
            self.hl[1],
            self.hl[2],
        )
    }

    /// Hex SHA-256 over the bit patterns of all parameters.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.length as u64).to_le_bytes());
        for v in [self.jx, self.jy, self.jz, self.gxz, self.gxy, self.gyz]
            .into_iter()
            .chain(self.h1)
            .chain(self.hl)
        {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn promote_ints(v: &mut toml::Value) {
    match v {
        toml::Value::Integer(i) => *v = toml::Value::Float(*i as f64),
        toml::Value::Array(a) => a.iter_mut().for_each(promote_ints),
        _ => {}
    }
}

/// Single-site Pauli axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_lowercase() {
            'x' => Some(Axis::X),
            'y' => Some(Axis::Y),
            'z' => Some(Axis::Z),
            _ => None,
        }
    }

    /// 2x2 matrix in the `{up, down}` basis.
    pub fn matrix(self) -> [[Complex64; 2]; 2] {
        match self {
            Axis::X => [[ZERO, ONE], [ONE, ZERO]],
            Axis::Y => [[ZERO, -I], [I, ZERO]],
            Axis::Z => [[ONE, ZERO], [ZERO, -ONE]],
        }
    }
}

/// A product of single-site Paulis times a real coefficient.
///
/// Site indices are 1-based and reduced modulo the chain length when the
/// operator is built, so site `L + 1` refers to site 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliString {
    pub factors: Vec<(usize, Axis)>,
    pub coefficient: f64,
}

impl PauliString {
    pub fn new(factors: Vec<(usize, Axis)>, coefficient: f64) -> Self {
        Self { factors, coefficient }
    }

    pub fn identity(coefficient: f64) -> Self {
        Self::new(Vec::new(), coefficient)
    }

    /// Reduces site indices into `[1, length]` and checks for repeats.
    fn resolved(&self, length: usize) -> Result<Vec<(usize, Axis)>> {
        let mut out = Vec::with_capacity(self.factors.len());
        for &(site, axis) in &self.factors {
            if site == 0 || length == 0 {
                return Err(Error::SiteOutOfRange { site, length });
            }
            let s = (site - 1) % length + 1;
            if out.iter().any(|&(t, _)| t == s) {
                return Err(Error::InvalidParameter(format!(
                    "site {s} appears twice in Pauli string"
                )));
            }
            out.push((s, axis));
        }
        Ok(out)
    }

    /// Masks and phase of the string's action on computational basis states.
    fn action(&self, length: usize) -> Result<StringAction> {
        let mut flip = 0usize;
        let mut y_mask = 0usize;
        let mut z_mask = 0usize;
        for (site, axis) in self.resolved(length)? {
            let bit = 1usize << (length - site);
            match axis {
                Axis::X => flip |= bit,
                Axis::Y => {
                    flip |= bit;
                    y_mask |= bit;
                }
                Axis::Z => z_mask |= bit,
            }
        }
        Ok(StringAction {
            flip,
            y_mask,
            z_mask,
            coefficient: self.coefficient,
        })
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "{}*I", self.coefficient);
        }
        if self.coefficient != 1.0 {
            write!(f, "{}*", self.coefficient)?;
        }
        for (site, axis) in &self.factors {
            let c = match axis {
                Axis::X => 'x',
                Axis::Y => 'y',
                Axis::Z => 'z',
            };
            write!(f, "{c}{site}")?;
        }
        Ok(())
    }
}

/// Parses strings like `x4x5`, `z1`, `0.5*x1y2` or `2*I`.
impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse Pauli string {s:?}"));
        let (coefficient, body) = match s.split_once('*') {
            Some((c, b)) => (c.trim().parse::<f64>().map_err(|_| bad())?, b.trim()),
            None => (1.0, s.trim()),
        };
        if body.eq_ignore_ascii_case("i") || body.is_empty() {
            return Ok(Self::identity(coefficient));
        }
        let mut factors = Vec::new();
        let mut chars = body.chars().peekable();
        while let Some(c) = chars.next() {
            let axis = Axis::from_char(c).ok_or_else(bad)?;
            let mut digits = String::new();
            while let Some(d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                digits.push(*d);
                chars.next();
            }
            let site = digits.parse::<usize>().map_err(|_| bad())?;
            factors.push((site, axis));
        }
        Ok(Self::new(factors, coefficient))
    }
}

#[derive(Clone, Copy, Debug)]
struct StringAction {
    flip: usize,
    y_mask: usize,
    z_mask: usize,
    coefficient: f64,
}

impl StringAction {
    /// `P |b> = amplitude(b) |b ^ flip>`.
    #[inline]
    fn amplitude(&self, b: usize) -> Complex64 {
        // Y|0> = i|1>, Y|1> = -i|0>, Z|1> = -|1>
        let ys = self.y_mask.count_ones();
        let y_down = (b & self.y_mask).count_ones();
        let z_down = (b & self.z_mask).count_ones();
        // i^(#Y) * (-1)^(#Y on down) * (-1)^(#Z on down)
        let sign_flips = y_down + z_down;
        let phase = match ys % 4 {
            0 => ONE,
            1 => I,
            2 => -ONE,
            _ => -I,
        };
        let s = if sign_flips % 2 == 0 { 1.0 } else { -1.0 };
        phase * (s * self.coefficient)
    }

    fn accumulate(&self, target: &mut CMat, scale: f64) {
        for b in 0..target.ncols() {
            let row = b ^ self.flip;
            let v = self.amplitude(b) * scale;
            let cur = target[(row, b)];
            target[(row, b)] = cur + v;
        }
    }
}

/// Dense operator for `spec` on a chain of `length` sites.
pub fn pauli_string_operator(spec: &PauliString, length: usize) -> Result<CMat> {
    if length > usize::BITS as usize - 2 {
        return Err(Error::DimensionOverflow {
            length,
            max: usize::BITS as usize - 2,
        });
    }
    let n = 1usize << length;
    let action = spec.action(length)?;
    let mut m = CMat::zeros(n, n);
    action.accumulate(&mut m, 1.0);
    Ok(m)
}

/// The affine pair `(H0, G)` with `H(z) = H0 + z G`.
#[derive(Clone, Debug)]
pub struct ModelMatrices {
    pub h0: CMat,
    pub g: CMat,
}

impl ModelMatrices {
    pub fn dimension(&self) -> usize {
        self.h0.nrows()
    }

    /// `H0 + z G`.
    pub fn evaluate(&self, z: Complex64) -> CMat {
        let n = self.dimension();
        CMat::from_fn(n, n, |i, j| self.h0[(i, j)] + z * self.g[(i, j)])
    }

    /// The 2x2 model `[[1, z], [z, -1]]` with exceptional points at `z = +-i`.
    pub fn toy() -> Self {
        let h0 = CMat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => ONE,
            (1, 1) => -ONE,
            _ => ZERO,
        });
        let g = CMat::from_fn(2, 2, |i, j| if i != j { ONE } else { ZERO });
        Self { h0, g }
    }
}

/// Builds `(H0, G)` for the spin chain, rejecting `L > DEFAULT_MAX_LENGTH`.
pub fn build_model(params: &ModelParams) -> Result<ModelMatrices> {
    build_model_capped(params, DEFAULT_MAX_LENGTH)
}

pub fn build_model_capped(params: &ModelParams, max_length: usize) -> Result<ModelMatrices> {
    params.validate(max_length)?;
    let l = params.length;
    let n = params.dimension();
    let mut h0 = CMat::zeros(n, n);
    let mut g = CMat::zeros(n, n);

    let bond = |i: usize, a: Axis, b: Axis, c: f64| PauliString::new(vec![(i, a), (i + 1, b)], c);
    let field = |site: usize, h: [f64; 3]| {
        [Axis::X, Axis::Y, Axis::Z]
            .into_iter()
            .zip(h)
            .map(move |(a, c)| PauliString::new(vec![(site, a)], c))
    };

    let mut h0_terms = Vec::new();
    for i in 1..l {
        h0_terms.push(bond(i, Axis::X, Axis::X, params.jx));
        h0_terms.push(bond(i, Axis::Y, Axis::Y, params.jy));
        h0_terms.push(bond(i, Axis::Z, Axis::Z, params.jz));
    }
    h0_terms.extend(field(1, params.h1));
    h0_terms.extend(field(l, params.hl));

    let mut g_terms = Vec::new();
    for i in 1..=l {
        g_terms.push(bond(i, Axis::X, Axis::Z, params.gxz));
        g_terms.push(bond(i, Axis::X, Axis::Y, params.gxy));
        g_terms.push(bond(i, Axis::Y, Axis::Z, params.gyz));
    }

    for term in h0_terms.iter().filter(|t| t.coefficient != 0.0) {
        term.action(l)?.accumulate(&mut h0, 1.0);
    }
    for term in g_terms.iter().filter(|t| t.coefficient != 0.0) {
        term.action(l)?.accumulate(&mut g, 1.0);
    }
    Ok(ModelMatrices { h0, g })
}

/// Largest entrywise deviation `|A - A^dagger|`.
pub fn hermiticity_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn trace(a: &CMat) -> Complex64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}
