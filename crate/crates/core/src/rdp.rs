//! Distortion allocation across independent Gaussian sources under a total
//! squared-error budget and a total KL perception budget.
//!
//! For fixed multipliers the stationarity condition
//! `-1/(2 D) + lambda_D + lambda_P * D / (2 s (s - D)) = 0` has a unique root
//! in `(0, s)` per source (`s` is the source variance). The dual is concave,
//! so for each `lambda_D` the inner search fixes `lambda_P` by complementary
//! slackness on the perception budget, and the total distortion along that
//! path is non-increasing in `lambda_D`, which the outer bisection exploits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative margin kept below each source variance, where the perception
/// term diverges.
pub const DISTORTION_MARGIN: f64 = 1e-9;

const MAX_BISECTIONS: usize = 400;
const MAX_ROOT_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSourceSet {
    variances: Vec<f64>,
}

impl GaussianSourceSet {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(invalid("variances", "need at least one source"));
        }
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(invalid("variances", format!("{v} is not positive and finite")));
        }
        Ok(Self { variances })
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn len(&self) -> usize {
        self.variances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variances.is_empty()
    }

    pub fn total_variance(&self) -> f64 {
        self.variances.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub sources: GaussianSourceSet,
    pub total_distortion: f64,
    /// KL budget in nats.
    pub total_perception: f64,
}

impl AllocationProblem {
    pub fn new(sources: GaussianSourceSet, total_distortion: f64, total_perception: f64) -> Result<Self> {
        if !(total_distortion > 0.0 && total_distortion.is_finite()) {
            return Err(invalid("total_distortion", format!("{total_distortion} is not positive")));
        }
        if !(total_perception >= 0.0) || total_perception.is_nan() {
            return Err(invalid("total_perception", format!("{total_perception} is negative")));
        }
        Ok(Self {
            sources,
            total_distortion,
            total_perception,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RateUnit {
    #[default]
    Nats,
    Bits,
}

impl RateUnit {
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            Self::Nats => nats,
            Self::Bits => nats / std::f64::consts::LN_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub distortion: f64,
    pub perception: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveConstraints {
    pub distortion: bool,
    pub perception: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `max_i |2 D_i g_i(D_i)|` over sources below the variance cap.
    pub stationarity: f64,
    pub distortion_slackness: f64,
    pub perception_slackness: f64,
    pub distortion_violation: f64,
    pub perception_violation: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [
            self.stationarity,
            self.distortion_slackness,
            self.perception_slackness,
            self.distortion_violation,
            self.perception_violation,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSolution {
    pub distortions: Vec<f64>,
    pub multipliers: Multipliers,
    /// Per-source rates in nats.
    pub rates: Vec<f64>,
    pub total_rate: f64,
    pub distortion_sum: f64,
    pub perception_sum: f64,
    pub active: ActiveConstraints,
    pub residuals: KktResiduals,
}

impl AllocationSolution {
    pub fn rates_in(&self, unit: RateUnit) -> Vec<f64> {
        self.rates.iter().map(|&r| unit.from_nats(r)).collect()
    }
}

/// `max(0, ln(variance / distortion) / 2)` in nats.
pub fn rate_of(variance: f64, distortion: f64) -> f64 {
    debug_assert!(variance > 0.0 && distortion > 0.0);
    (0.5 * (variance / distortion).ln()).max(0.0)
}

/// KL between the zero-mean Gaussian reconstruction of variance
/// `variance - distortion` and the source.
pub fn perception_of(variance: f64, distortion: f64) -> Result<f64> {
    if !(distortion > 0.0 && distortion < variance) {
        return Err(Error::PerceptionDomain {
            variance,
            distortion,
        });
    }
    Ok(perception_unchecked(variance, distortion))
}

fn perception_unchecked(s: f64, d: f64) -> f64 {
    let r = (s - d) / s;
    0.5 * (-r.ln() + r - 1.0)
}

fn cap(variance: f64) -> f64 {
    variance * (1.0 - DISTORTION_MARGIN)
}

fn stationarity(s: f64, d: f64, m: Multipliers) -> f64 {
    -0.5 / d + m.distortion + m.perception * d / (2.0 * s * (s - d))
}

/// Unique stationary distortion of one source at the given multipliers,
/// clamped to the variance cap.
fn stationary_distortion(s: f64, m: Multipliers) -> f64 {
    let top = cap(s);
    if stationarity(s, top, m) <= 0.0 {
        return top;
    }
    // g is increasing on (0, top); g(lo) < 0 < g(hi).
    let mut lo = 0.0f64;
    let mut hi = top;
    let mut d = if m.distortion > 0.0 {
        (0.5 / m.distortion).min(0.5 * top)
    } else {
        0.5 * top
    };
    for _ in 0..MAX_ROOT_ITERS {
        let g = stationarity(s, d, m);
        if g == 0.0 {
            return d;
        }
        if g < 0.0 {
            lo = d;
        } else {
            hi = d;
        }
        let slope = 0.5 / (d * d) + m.perception / (2.0 * (s - d) * (s - d));
        let newton = d - g / slope;
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - d).abs() <= 4.0 * f64::EPSILON * d || hi - lo <= 4.0 * f64::EPSILON * hi {
            return next;
        }
        d = next;
    }
    d
}

struct Evaluation {
    distortions: Vec<f64>,
    distortion_sum: f64,
    perception_sum: f64,
}

fn evaluate(variances: &[f64], m: Multipliers) -> Evaluation {
    let distortions: Vec<f64> = variances.iter().map(|&s| stationary_distortion(s, m)).collect();
    let distortion_sum = distortions.iter().sum();
    let perception_sum = variances
        .iter()
        .zip(&distortions)
        .map(|(&s, &d)| perception_unchecked(s, d))
        .sum();
    Evaluation {
        distortions,
        distortion_sum,
        perception_sum,
    }
}

/// Bisection for the boundary of a monotone predicate on `[0, inf)`:
/// returns `x` with `ok(x)` true and `x` minimal up to relative precision.
/// `ok` must be false at 0 and eventually true.
fn monotone_boundary(mut ok: impl FnMut(f64) -> bool, start: f64) -> Option<f64> {
    let mut hi = start.max(f64::MIN_POSITIVE);
    let mut lo = 0.0;
    let mut grow = 0;
    while !ok(hi) {
        lo = hi;
        hi *= 4.0;
        grow += 1;
        if grow > 600 || !hi.is_finite() {
            return None;
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
        if mid <= lo || mid >= hi || hi - lo <= 2.0 * f64::EPSILON * hi {
            break;
        }
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Optimal allocation; `tol` bounds the reported KKT residuals.
pub fn solve(problem: &AllocationProblem, tol: f64) -> Result<AllocationSolution> {
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(invalid("tol", format!("{tol} outside (0, 1e-3]")));
    }
    if problem.total_perception == 0.0 {
        return Err(invalid(
            "total_perception",
            "a zero KL budget forces zero distortion and an unbounded rate",
        ));
    }
    let vars = problem.sources.variances();
    let d_budget = problem.total_distortion;
    let p_budget = problem.total_perception;

    // Smallest lambda_P meeting the perception budget for a given lambda_D.
    let perception_multiplier = |lambda_d: f64| -> Option<f64> {
        let free = Multipliers {
            distortion: lambda_d,
            perception: 0.0,
        };
        if evaluate(vars, free).perception_sum <= p_budget {
            return Some(0.0);
        }
        monotone_boundary(
            |lp| {
                evaluate(
                    vars,
                    Multipliers {
                        distortion: lambda_d,
                        perception: lp,
                    },
                )
                .perception_sum
                    <= p_budget
            },
            1.0,
        )
    };

    let at = |lambda_d: f64| -> Option<(Multipliers, Evaluation)> {
        let lp = perception_multiplier(lambda_d)?;
        let m = Multipliers {
            distortion: lambda_d,
            perception: lp,
        };
        Some((m, evaluate(vars, m)))
    };

    let non_converged = |iterations| Error::NonConvergence {
        iterations,
        distortion_residual: f64::NAN,
        perception_residual: f64::NAN,
    };

    let (m0, e0) = at(0.0).ok_or_else(|| non_converged(MAX_BISECTIONS))?;
    let (multipliers, eval) = if e0.distortion_sum <= d_budget {
        (m0, e0)
    } else {
        let start = vars.len() as f64 / (2.0 * d_budget);
        let lambda_d = monotone_boundary(
            |ld| at(ld).is_some_and(|(_, e)| e.distortion_sum <= d_budget),
            start,
        )
        .ok_or_else(|| non_converged(MAX_BISECTIONS))?;
        at(lambda_d).ok_or_else(|| non_converged(MAX_BISECTIONS))?
    };

    let residuals = kkt_residuals(vars, &eval, multipliers, d_budget, p_budget);
    if residuals.max() > tol {
        return Err(Error::NonConvergence {
            iterations: MAX_BISECTIONS,
            distortion_residual: residuals.distortion_slackness.max(residuals.distortion_violation),
            perception_residual: residuals.perception_slackness.max(residuals.perception_violation),
        });
    }
    let rates: Vec<f64> = vars
        .iter()
        .zip(&eval.distortions)
        .map(|(&s, &d)| rate_of(s, d))
        .collect();
    Ok(AllocationSolution {
        total_rate: rates.iter().sum(),
        rates,
        active: ActiveConstraints {
            distortion: multipliers.distortion > 0.0,
            perception: multipliers.perception > 0.0,
        },
        distortions: eval.distortions,
        distortion_sum: eval.distortion_sum,
        perception_sum: eval.perception_sum,
        multipliers,
        residuals,
    })
}

fn kkt_residuals(
    vars: &[f64],
    eval: &Evaluation,
    m: Multipliers,
    d_budget: f64,
    p_budget: f64,
) -> KktResiduals {
    let stationarity = vars
        .iter()
        .zip(&eval.distortions)
        .filter(|(&s, &d)| d < cap(s))
        .map(|(&s, &d)| (2.0 * d * stationarity(s, d, m)).abs())
        .fold(0.0, f64::max);
    KktResiduals {
        stationarity,
        distortion_slackness: (m.distortion * (eval.distortion_sum - d_budget)).abs(),
        perception_slackness: (m.perception * (eval.perception_sum - p_budget)).abs(),
        distortion_violation: (eval.distortion_sum - d_budget).max(0.0),
        perception_violation: (eval.perception_sum - p_budget).max(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub total_distortion: f64,
    pub total_perception: f64,
    pub solution: AllocationSolution,
}

/// One solve per `(D, P_kl)` pair, in row-major order over `d_values`.
pub fn sweep(
    sources: &GaussianSourceSet,
    d_values: &[f64],
    p_values: &[f64],
    tol: f64,
) -> Result<Vec<SweepRow>> {
    if d_values.is_empty() || p_values.is_empty() {
        return Err(invalid("grid", "distortion and perception grids must be nonempty"));
    }
    let pairs: Vec<(f64, f64)> = d_values
        .iter()
        .flat_map(|&d| p_values.iter().map(move |&p| (d, p)))
        .collect();
    pairs
        .par_iter()
        .map(|&(d, p)| {
            let problem = AllocationProblem::new(sources.clone(), d, p)?;
            Ok(SweepRow {
                total_distortion: d,
                total_perception: p,
                solution: solve(&problem, tol)?,
            })
        })
        .collect()
}

pub fn sweep_header(sources: usize) -> Vec<String> {
    let mut h = vec!["D".to_string(), "P_kl".to_string()];
    h.extend((1..=sources).map(|i| format!("D_{i}")));
    h.extend((1..=sources).map(|i| format!("R_{i}")));
    h.extend(["lambda_D", "lambda_P", "total_rate"].map(String::from));
    h
}

/// Writes the sweep as CSV with rates in `unit`.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], sources: usize, unit: RateUnit, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(sweep_header(sources))?;
    for row in rows {
        let s = &row.solution;
        let mut rec = vec![row.total_distortion.to_string(), row.total_perception.to_string()];
        rec.extend(s.distortions.iter().map(f64::to_string));
        rec.extend(s.rates_in(unit).iter().map(f64::to_string));
        rec.push(s.multipliers.distortion.to_string());
        rec.push(s.multipliers.perception.to_string());
        rec.push(unit.from_nats(s.total_rate).to_string());
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}
