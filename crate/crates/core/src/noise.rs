//! One-dimensional noise densities: Gaussian, erf-mixtures and tabulated PDFs.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad::{adaptive_simpson, trapezoid_uniform};
use crate::rng::RngSeed;

/// Allowed deviation of the integrated mass from 1.
pub const MASS_TOL: f64 = 1e-6;
/// Minimum number of grid points of a tabulated density.
pub const MIN_TABLE_POINTS: usize = 128;
/// Minimum number of knots in an inverse-CDF sampling table.
pub const MIN_CDF_KNOTS: usize = 4096;
/// Half-width of the integration support in standard deviations.
pub const SUPPORT_SIGMAS: f64 = 12.0;

const QUAD_PANELS: usize = 64;
const QUAD_TOL: f64 = 1e-13;
const SAMPLER_KNOTS: usize = 16384;

/// A density sampled on a uniform, strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfTable {
    xs: Vec<f64>,
    ps: Vec<f64>,
}

impl PdfTable {
    pub fn new(xs: Vec<f64>, ps: Vec<f64>) -> Result<Self> {
        if xs.len() != ps.len() {
            return Err(Error::ShapeMismatch {
                what: "density column",
                expected: xs.len(),
                actual: ps.len(),
            });
        }
        if xs.len() < MIN_TABLE_POINTS {
            return Err(invalid(
                "grid",
                format!("{} points, need at least {MIN_TABLE_POINTS}", xs.len()),
            ));
        }
        if let Some(i) = xs.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(invalid("grid", format!("not strictly increasing at index {}", i + 1)));
        }
        let h = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        if let Some(i) = xs
            .windows(2)
            .position(|w| ((w[1] - w[0]) - h).abs() > 1e-6 * h)
        {
            return Err(invalid("grid", format!("non-uniform spacing at index {}", i + 1)));
        }
        if let Some(i) = ps.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid("density", format!("negative or non-finite value at index {i}")));
        }
        Ok(Self { xs, ps })
    }

    /// Tabulates `pdf` on `n` uniform points over `[lo, hi]`.
    pub fn from_fn(lo: f64, hi: f64, n: usize, pdf: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(invalid("grid", "need n >= 2 and hi > lo"));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
        let ps = xs.iter().map(|&x| pdf(x)).collect();
        Self::new(xs, ps)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ps(&self) -> &[f64] {
        &self.ps
    }

    pub fn step(&self) -> f64 {
        (self.xs[self.xs.len() - 1] - self.xs[0]) / (self.xs.len() - 1) as f64
    }

    /// Piecewise-linear interpolation, zero outside the grid.
    pub fn density(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if !(x >= self.xs[0] && x <= self.xs[n - 1]) {
            return 0.0;
        }
        let i = match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return self.ps[i],
            Err(i) => i - 1,
        };
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ps[i] + t * (self.ps[i + 1] - self.ps[i])
    }

    fn trapezoid(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let vals: Vec<f64> = self.xs.iter().zip(&self.ps).map(|(&x, &p)| f(x, p)).collect();
        trapezoid_uniform(&vals, self.step())
    }

    /// Reads the two-column `x p` text format; `#` starts a comment.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ps = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let mut cols = body.split_whitespace();
            let (Some(x), Some(p), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Parse {
                    line: k + 1,
                    reason: "expected exactly two columns".into(),
                });
            };
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: k + 1,
                    reason: format!("{s:?}: {e}"),
                })
            };
            xs.push(parse(x)?);
            ps.push(parse(p)?);
        }
        Self::new(xs, ps)
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }

    /// Writes the table with shortest round-trip float formatting, so a
    /// read/write cycle reproduces the file byte for byte.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut out = String::with_capacity(self.xs.len() * 40);
        for (x, p) in self.xs.iter().zip(&self.ps) {
            writeln!(out, "{x} {p}").expect("writing to a String cannot fail");
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseKind {
    Gaussian { variance: f64 },
    /// `p(x) = c * (erf(a - b x) + erf(a + b x))`.
    ErfMixture { a: f64, b: f64, c: f64 },
    Tabulated(PdfTable),
}

/// A zero- or nonzero-mean scalar noise density with cached moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    kind: NoiseKind,
    mass: f64,
    mean: f64,
    variance: f64,
}

impl NoiseModel {
    pub fn gaussian(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(invalid("variance", format!("{variance} is not positive and finite")));
        }
        Ok(Self {
            kind: NoiseKind::Gaussian { variance },
            mass: 1.0,
            mean: 0.0,
            variance,
        })
    }

    /// Erf-mixture density; rejects triples whose mass is not 1.
    pub fn erf_mixture(a: f64, b: f64, c: f64) -> Result<Self> {
        let model = Self::erf_mixture_unnormalized(a, b, c)?;
        if (model.mass - 1.0).abs() > MASS_TOL {
            return Err(Error::MassMismatch {
                mass: model.mass,
                tol: MASS_TOL,
            });
        }
        Ok(model)
    }

    /// Erf-mixture density taken verbatim, without the unit-mass check.
    ///
    /// The measured mass is kept in [`NoiseModel::mass`]; nothing is rescaled.
    pub fn erf_mixture_unnormalized(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid("a", format!("{a} is not positive")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(invalid("b", format!("{b} is not positive")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid("c", format!("{c} is not positive")));
        }
        let kind = NoiseKind::ErfMixture { a, b, c };
        let (lo, hi) = erf_support(a, b);
        let pdf = |x: f64| erf_mixture_density(a, b, c, x);
        let mass = adaptive_simpson(pdf, lo, hi, QUAD_PANELS, QUAD_TOL);
        let mean = adaptive_simpson(|x| x * pdf(x), lo, hi, QUAD_PANELS, QUAD_TOL);
        let variance =
            adaptive_simpson(|x| (x - mean).powi(2) * pdf(x), lo, hi, QUAD_PANELS, QUAD_TOL);
        Ok(Self {
            kind,
            mass,
            mean,
            variance,
        })
    }

    pub fn tabulated(table: PdfTable) -> Result<Self> {
        let mass = table.trapezoid(|_, p| p);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(if mass < 1.0 {
                Error::TailMass {
                    tail_mass: 1.0 - mass,
                }
            } else {
                Error::MassMismatch { mass, tol: MASS_TOL }
            });
        }
        let mean = table.trapezoid(|x, p| x * p);
        let variance = table.trapezoid(|x, p| (x - mean).powi(2) * p);
        Ok(Self {
            kind: NoiseKind::Tabulated(table),
            mass,
            mean,
            variance,
        })
    }

    /// Density with unit variance whose shape is uniform convolved with a
    /// Gaussian, used as the first non-Gaussian reference noise.
    pub fn q1() -> Self {
        Self::erf_mixture(
            std::f64::consts::FRAC_1_SQRT_2,
            (2.0f64 / 3.0).sqrt(),
            1.0 / (2.0 * 3f64.sqrt()),
        )
        .expect("q1 constants are normalized")
    }

    /// Second reference density with its published constants, which
    /// integrate to 1.2 rather than 1.
    pub fn q2_published() -> Self {
        Self::erf_mixture_unnormalized(
            3.0 * std::f64::consts::SQRT_2 / 5.0,
            (2.0f64 / 3.0).sqrt(),
            1.0 / (2.0 * 3f64.sqrt()),
        )
        .expect("parameters are positive")
    }

    /// The published `q2` shape rescaled to unit mass.
    pub fn q2_normalized() -> Self {
        let a = 3.0 * std::f64::consts::SQRT_2 / 5.0;
        let b = (2.0f64 / 3.0).sqrt();
        Self::erf_mixture(a, b, b / (4.0 * a)).expect("normalized by construction")
    }

    /// Additive non-Gaussian channel noise used for the PSNR sweeps:
    /// a uniform on [-0.1, 0.1] convolved with a unit Gaussian.
    pub fn angc() -> Self {
        Self::erf_mixture(1.0 / (10.0 * std::f64::consts::SQRT_2), std::f64::consts::FRAC_1_SQRT_2, 2.5)
            .expect("constants are normalized")
    }

    /// Parses `gaussian:VAR`, `q1`, `q2`, `q2-normalized`, `angc`,
    /// `erf:A,B,C` or `table:PATH`.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let (head, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let num = |s: &str, name: &'static str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| invalid(name, format!("{s:?}: {e}")))
        };
        match head {
            "gaussian" | "normal" => {
                let v = if rest.is_empty() { 1.0 } else { num(rest, "variance")? };
                Self::gaussian(v)
            }
            "q1" => Ok(Self::q1()),
            "q2" => Ok(Self::q2_published()),
            "q2-normalized" => Ok(Self::q2_normalized()),
            "angc" => Ok(Self::angc()),
            "erf" => {
                let parts: Vec<&str> = rest.split(',').collect();
                if parts.len() != 3 {
                    return Err(invalid("noise", "erf needs three parameters a,b,c"));
                }
                Self::erf_mixture(num(parts[0], "a")?, num(parts[1], "b")?, num(parts[2], "c")?)
            }
            "table" => Self::tabulated(PdfTable::read_path(rest)?),
            other => Err(invalid("noise", format!("unknown noise model {other:?}"))),
        }
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.kind, NoiseKind::Gaussian { .. })
    }

    /// Integrated total mass (1 for every checked constructor).
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn density(&self, x: f64) -> f64 {
        match &self.kind {
            NoiseKind::Gaussian { variance } => gaussian_density(x, 0.0, *variance),
            NoiseKind::ErfMixture { a, b, c } => erf_mixture_density(*a, *b, *c, x),
            NoiseKind::Tabulated(t) => t.density(x),
        }
    }

    /// Integration interval: `mean ± 12 sd` for closed forms, the grid for tables.
    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            NoiseKind::Gaussian { variance } => {
                let s = SUPPORT_SIGMAS * variance.sqrt();
                (-s, s)
            }
            NoiseKind::ErfMixture { a, b, .. } => erf_support(*a, *b),
            NoiseKind::Tabulated(t) => (t.xs[0], t.xs[t.xs.len() - 1]),
        }
    }
}

/// Second central moment of the density.
pub fn noise_variance(model: &NoiseModel) -> Result<f64> {
    if let NoiseKind::Tabulated(_) = model.kind {
        let tail_mass = 1.0 - model.mass;
        if tail_mass > MASS_TOL {
            return Err(Error::TailMass { tail_mass });
        }
    }
    Ok(model.variance)
}

pub fn gaussian_density(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / variance).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

fn erf_mixture_density(a: f64, b: f64, c: f64, x: f64) -> f64 {
    // erf(a - b|x|) + erf(a + b|x|) = erfc(b|x| - a) - erfc(b|x| + a), which
    // keeps full relative precision in the tails.
    let u = b * x.abs();
    let s = if u > a {
        libm::erfc(u - a) - libm::erfc(u + a)
    } else {
        libm::erf(a - u) + libm::erf(a + u)
    };
    c * s.max(0.0)
}

fn erf_support(a: f64, b: f64) -> (f64, f64) {
    // Uniform half-width a/b plus a Gaussian of variance 1/(2 b^2).
    let half = a / b;
    let sd = (half * half / 3.0 + 0.5 / (b * b)).sqrt();
    let s = SUPPORT_SIGMAS * sd;
    (-s, s)
}

/// Draws from a [`NoiseModel`]: Gaussians directly, everything else by
/// inverting a tabulated CDF with linear interpolation.
#[derive(Debug, Clone)]
pub enum NoiseSampler {
    Gaussian { sd: f64 },
    InverseCdf { xs: Vec<f64>, cdf: Vec<f64> },
}

impl NoiseSampler {
    pub fn new(model: &NoiseModel) -> Result<Self> {
        match &model.kind {
            NoiseKind::Gaussian { variance } => Ok(Self::Gaussian { sd: variance.sqrt() }),
            NoiseKind::ErfMixture { .. } => {
                let (lo, hi) = model.support();
                let n = SAMPLER_KNOTS;
                let h = (hi - lo) / (n - 1) as f64;
                let xs: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
                let mut cdf = Vec::with_capacity(n);
                let mut acc = 0.0;
                cdf.push(0.0);
                for w in xs.windows(2) {
                    let m = 0.5 * (w[0] + w[1]);
                    acc += h / 6.0
                        * (model.density(w[0]) + 4.0 * model.density(m) + model.density(w[1]));
                    cdf.push(acc);
                }
                Self::from_cdf(xs, cdf)
            }
            NoiseKind::Tabulated(t) => {
                // Exact CDF of the piecewise-linear density on a refined grid.
                let cells = t.xs.len() - 1;
                let sub = SAMPLER_KNOTS.div_ceil(cells).max(1);
                let mut xs = Vec::with_capacity(cells * sub + 1);
                let mut cdf = Vec::with_capacity(cells * sub + 1);
                let mut acc = 0.0;
                xs.push(t.xs[0]);
                cdf.push(0.0);
                for i in 0..cells {
                    let (x0, x1) = (t.xs[i], t.xs[i + 1]);
                    let (p0, p1) = (t.ps[i], t.ps[i + 1]);
                    let h = x1 - x0;
                    let cell_cdf = |s: f64| p0 * s + (p1 - p0) * s * s / (2.0 * h);
                    for k in 1..=sub {
                        let s = h * k as f64 / sub as f64;
                        xs.push(if k == sub { x1 } else { x0 + s });
                        cdf.push(acc + cell_cdf(s));
                    }
                    acc += cell_cdf(h);
                }
                Self::from_cdf(xs, cdf)
            }
        }
    }

    /// Normalizes an accumulated CDF and checks it is monotone.
    pub fn from_cdf(xs: Vec<f64>, mut cdf: Vec<f64>) -> Result<Self> {
        if xs.len() != cdf.len() {
            return Err(Error::ShapeMismatch {
                what: "cdf table",
                expected: xs.len(),
                actual: cdf.len(),
            });
        }
        if xs.len() < MIN_CDF_KNOTS {
            return Err(invalid(
                "cdf table",
                format!("{} knots, need at least {MIN_CDF_KNOTS}", xs.len()),
            ));
        }
        if let Some(i) = cdf.windows(2).position(|w| !(w[1] >= w[0])) {
            return Err(Error::NonMonotoneCdf { index: i + 1 });
        }
        let total = cdf[cdf.len() - 1] - cdf[0];
        if !(total > 0.0 && total.is_finite()) {
            return Err(invalid("cdf table", "no probability mass"));
        }
        let base = cdf[0];
        for v in &mut cdf {
            *v = (*v - base) / total;
        }
        let last = cdf.len() - 1;
        cdf[last] = 1.0;
        Ok(Self::InverseCdf { xs, cdf })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian { sd } => {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            }
            Self::InverseCdf { xs, cdf } => {
                let u: f64 = rng.gen();
                // First knot with cdf > u; the cell [i-1, i] holds u.
                let i = cdf.partition_point(|&c| c <= u).clamp(1, cdf.len() - 1);
                let (c0, c1) = (cdf[i - 1], cdf[i]);
                let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
                xs[i - 1] + t * (xs[i] - xs[i - 1])
            }
        }
    }

    /// CDF implied by the sampler (linear between knots).
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { sd } => 0.5 * libm::erfc(-x / (sd * std::f64::consts::SQRT_2)),
            Self::InverseCdf { xs, cdf } => {
                if x <= xs[0] {
                    return 0.0;
                }
                if x >= xs[xs.len() - 1] {
                    return 1.0;
                }
                let i = xs.partition_point(|&v| v <= x);
                let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                cdf[i - 1] + t * (cdf[i] - cdf[i - 1])
            }
        }
    }
}

/// `n` i.i.d. draws from `model`.
pub fn sample_noise(model: &NoiseModel, n: usize, seed: RngSeed) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("n", "need at least one sample"));
    }
    let sampler = NoiseSampler::new(model)?;
    let mut rng = seed.derive("noise").rng();
    Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
}
