//! Sampling-based checks of the six structural hypotheses on a potential:
//!
//! * V1 evenness, `V(-q) = V(q)`
//! * V2 `V'(q).q > 0` for `q != 0`
//! * V3 `3 V'(q).q + (V''(q) q, q)` keeps one sign for `q != 0`
//! * V4 `V'(q).q >= mu1 V(q) - mu2`
//! * V5 `limsup V(q) + V'(q).q / 2 <= A` (heuristic: outer shells only)
//! * V6 `mu2/mu1 < h < A` (exact arithmetic)
//!
//! A pass only means no counterexample was found among the samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::potentials::{dot, GrowthParams, Potential};

/// Samples with `|q| < EXCLUSION_FRACTION * box_radius` are skipped for V2/V3.
pub const EXCLUSION_FRACTION: f64 = 0.01;
const V5_SHELLS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub q: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass { note: String },
    Fail { counterexample: Counterexample },
    NotChecked { reason: String },
}

impl Verdict {
    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail { .. })
    }

    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass { .. })
    }

    fn short(&self) -> &'static str {
        match self {
            Verdict::Pass { .. } => "pass",
            Verdict::Fail { .. } => "FAIL",
            Verdict::NotChecked { .. } => "not-checked",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingInfo {
    pub box_radius: f64,
    pub samples: usize,
    pub seed: u64,
    pub exclusion_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub potential: String,
    pub h: f64,
    pub params: GrowthParams,
    pub v1: Verdict,
    pub v2: Verdict,
    pub v3: Verdict,
    pub v4: Verdict,
    pub v5: Verdict,
    pub v6: Verdict,
    pub sampling: SamplingInfo,
}

impl ConditionReport {
    pub fn verdicts(&self) -> [(&'static str, &Verdict); 6] {
        [("V1", &self.v1), ("V2", &self.v2), ("V3", &self.v3), ("V4", &self.v4), ("V5", &self.v5), ("V6", &self.v6)]
    }

    pub fn any_fail(&self) -> bool {
        self.verdicts().iter().any(|(_, v)| v.is_fail())
    }

    /// Plain-text table for terminals.
    pub fn table(&self) -> String {
        let mut out = format!(
            "potential {}  h = {}  mu1 = {}  mu2 = {}  A = {}\n",
            self.potential, self.h, self.params.mu1, self.params.mu2, self.params.ceiling
        );
        out += &format!(
            "{} samples in |q| <= {} (seed {})\n",
            self.sampling.samples, self.sampling.box_radius, self.sampling.seed
        );
        for (name, v) in self.verdicts() {
            let detail = match v {
                Verdict::Pass { note } => note.clone(),
                Verdict::NotChecked { reason } => reason.clone(),
                Verdict::Fail { counterexample: c } => {
                    format!("q = {:?}: {} (lhs {:.6e}, rhs {:.6e})", c.q, c.relation, c.lhs, c.rhs)
                }
            };
            out += &format!("  {name}  {:<12} {detail}\n", v.short());
        }
        out
    }
}

/// Van der Corput radical inverse in base 2.
fn van_der_corput(mut i: u64) -> f64 {
    let mut x = 0.0;
    let mut f = 0.5;
    while i > 0 {
        if i & 1 == 1 {
            x += f;
        }
        i >>= 1;
        f *= 0.5;
    }
    x
}

/// Low-discrepancy radii in `(0, R]` times uniformly random directions.
fn sample_points(dim: usize, box_radius: f64, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|i| {
            let r = box_radius * van_der_corput(i as u64 + 1);
            let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = dot(&dir, &dir).sqrt();
            if n == 0.0 {
                dir[0] = 1.0;
            } else {
                dir.iter_mut().for_each(|d| *d /= n);
            }
            dir.into_iter().map(|d| d * r).collect()
        })
        .collect()
}

fn pass(n: usize) -> Verdict {
    Verdict::Pass { note: format!("no counterexample found among {n} samples") }
}

fn fail(q: &[f64], lhs: f64, rhs: f64, relation: &str) -> Verdict {
    Verdict::Fail { counterexample: Counterexample { q: q.to_vec(), lhs, rhs, relation: relation.into() } }
}

struct Sample<'a> {
    q: &'a [f64],
    r: f64,
    value: f64,
    force: f64,
    second: f64,
}

pub fn check_conditions<P: Potential + ?Sized>(
    model: &P,
    params: &GrowthParams,
    h: f64,
    box_radius: f64,
    samples: usize,
    seed: u64,
) -> ConditionReport {
    let dim = model.dim();
    let exclusion = EXCLUSION_FRACTION * box_radius;
    let points = sample_points(dim, box_radius, samples.max(1), seed);
    let mut grad = vec![0.0; dim];
    let mut hq = vec![0.0; dim];
    let evals: Vec<Sample> = points
        .iter()
        .map(|q| {
            model.gradient(q, &mut grad);
            model.hess_vec(q, q, &mut hq);
            Sample { q, r: dot(q, q).sqrt(), value: model.value(q), force: dot(&grad, q), second: dot(&hq, q) }
        })
        .collect();
    let n = evals.len();

    let v1 = evals
        .iter()
        .find_map(|s| {
            let neg: Vec<f64> = s.q.iter().map(|x| -x).collect();
            let vn = model.value(&neg);
            ((s.value - vn).abs() > 1e-12 * (1.0 + s.value.abs())).then(|| fail(s.q, s.value, vn, "V(q) = V(-q)"))
        })
        .unwrap_or_else(|| pass(n));

    let outer: Vec<&Sample> = evals.iter().filter(|s| s.r >= exclusion).collect();

    let v2 = outer
        .iter()
        .find_map(|s| (!(s.force > 0.0)).then(|| fail(s.q, s.force, 0.0, "V'(q).q > 0")))
        .unwrap_or_else(|| pass(outer.len()));

    let v3 = match outer.first() {
        None => Verdict::NotChecked { reason: "no samples outside the exclusion ball".into() },
        Some(first) => {
            let sign = (3.0 * first.force + first.second).signum();
            outer
                .iter()
                .find_map(|s| {
                    let x = 3.0 * s.force + s.second;
                    (x == 0.0 || x.is_nan() || x.signum() != sign)
                        .then(|| fail(s.q, x, 0.0, "3V'(q).q + (V''(q)q,q) has constant sign"))
                })
                .unwrap_or_else(|| pass(outer.len()))
        }
    };

    let v4 = evals
        .iter()
        .find_map(|s| {
            let rhs = params.mu1 * s.value - params.mu2;
            let slack = 1e-12 * (1.0 + s.force.abs() + (params.mu1 * s.value).abs());
            (!(s.force >= rhs - slack)).then(|| fail(s.q, s.force, rhs, "V'(q).q >= mu1 V(q) - mu2"))
        })
        .unwrap_or_else(|| pass(n));

    let v5 = check_asymptotic_ceiling(&evals, box_radius, params.ceiling);

    let v6 = if params.energy_floor() < h && h < params.ceiling {
        Verdict::Pass { note: format!("{} < {} < {}", params.energy_floor(), h, params.ceiling) }
    } else {
        let q = vec![0.0; dim];
        if !(params.energy_floor() < h) {
            fail(&q, params.energy_floor(), h, "mu2/mu1 < h")
        } else {
            fail(&q, h, params.ceiling, "h < A")
        }
    };

    ConditionReport {
        potential: model.label(),
        h,
        params: *params,
        v1,
        v2,
        v3,
        v4,
        v5,
        v6,
        sampling: SamplingInfo { box_radius, samples: n, seed, exclusion_radius: exclusion },
    }
}

/// Looks at `V + V'q/2` on radial shells covering the outer half of the box.
/// A ceiling exceeded on an increasing trend is a failure; a ceiling exceeded
/// on a decreasing or irregular trend is inconclusive.
fn check_asymptotic_ceiling(evals: &[Sample], box_radius: f64, ceiling: f64) -> Verdict {
    if ceiling == f64::INFINITY {
        return Verdict::Pass { note: "A = +inf".into() };
    }
    let inner = 0.5 * box_radius;
    let width = (box_radius - inner) / V5_SHELLS as f64;
    let mut shells: Vec<Option<(f64, &Sample)>> = vec![None; V5_SHELLS];
    let mut counted = 0;
    for s in evals.iter().filter(|s| s.r >= inner) {
        let idx = (((s.r - inner) / width) as usize).min(V5_SHELLS - 1);
        let level = s.value + 0.5 * s.force;
        counted += 1;
        match shells[idx] {
            Some((best, _)) if best >= level => {}
            _ => shells[idx] = Some((level, s)),
        }
    }
    let maxima: Vec<(f64, &Sample)> = shells.into_iter().flatten().collect();
    if maxima.len() < 2 {
        return Verdict::NotChecked { reason: "too few samples in the outer shells".into() };
    }
    let tol = |x: f64| 1e-12 * (1.0 + x.abs());
    let rising = maxima.windows(2).all(|w| w[1].0 >= w[0].0 - tol(w[0].0));
    let falling = maxima.windows(2).all(|w| w[1].0 <= w[0].0 + tol(w[0].0));
    let (last, sample) = *maxima.last().unwrap();
    let exceeded = last > ceiling + tol(ceiling);
    match (rising, falling, exceeded) {
        (_, _, false) if rising || falling => Verdict::Pass {
            note: format!(
                "heuristic: outer-shell maximum {last:.6e} <= A over {counted} samples ({} trend)",
                if rising { "rising" } else { "falling" }
            ),
        },
        (true, _, true) => fail(sample.q, last, ceiling, "V(q) + V'(q).q/2 <= A at large |q|"),
        (false, false, _) => Verdict::NotChecked { reason: "outer-shell trend is not monotone".into() },
        _ => Verdict::NotChecked { reason: "ceiling exceeded on a falling trend; limit undetermined".into() },
    }
}
