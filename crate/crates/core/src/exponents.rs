//! Closed-form exponent algebra behind the L^p bootstrap.
//!
//! Two recursions drive the a-priori estimates on the density: a contracting
//! linear map `p -> 2p/3 + 3(m-1)` whose fixed point is `9(m-1)`, and the
//! quadratic map [`psi`] which pushes exponents past `9(m-1)` towards infinity
//! exactly when `m > 9/8`. Everything here is a pure function of `(p, m)`.

use crate::error::{Error, Result};

/// `m` above which the quadratic ladder escapes to infinity.
pub const PSI_THRESHOLD: f64 = 9.0 / 8.0;
/// `m` above which `rho(9(m-1)) > 0`.
pub const RHO_THRESHOLD: f64 = 215.0 / 192.0;
/// Lower bound on `m` for the linear ladder.
pub const LINEAR_THRESHOLD: f64 = 10.0 / 9.0;

const LINEAR_TOL: f64 = 1e-12;
const MAX_STEPS: usize = 10_000;
const CERT_SLACK: f64 = 1e-12;

/// Diffusion exponent `m > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentParams {
    m: f64,
}

impl ExponentParams {
    pub fn new(m: f64) -> Result<Self> {
        if !(m > 1.0) || !m.is_finite() {
            return Err(Error::domain("m", m, "m > 1"));
        }
        Ok(Self { m })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// The critical exponent `9(m-1)`.
    pub fn critical(&self) -> f64 {
        critical_exponent(self.m)
    }
}

#[inline]
pub fn critical_exponent(m: f64) -> f64 {
    9.0 * (m - 1.0)
}

/// `rho(p) = 20p^2 - (33 - 12m)p - 18(m-1)`.
pub fn rho(p: f64, m: f64) -> f64 {
    20.0 * p * p - (33.0 - 12.0 * m) * p - 18.0 * (m - 1.0)
}

/// Distance from `9(m-1)` down to the larger root of `rho(., m)`.
///
/// `rho(p) > 0` for every `p > 9(m-1) - delta1(m)`.
pub fn delta1(m: f64) -> Result<f64> {
    if !(m > RHO_THRESHOLD) {
        return Err(Error::domain("m", m, "m > 215/192 (rho(9(m-1)) > 0)"));
    }
    let b = 33.0 - 12.0 * m;
    let disc = b * b + 4.0 * 20.0 * 18.0 * (m - 1.0);
    let p_plus = (b + disc.sqrt()) / 40.0;
    Ok(critical_exponent(m) - p_plus)
}

/// Integrability exponent `q = 2(5p + 3m - 3)/3` gained for the velocity.
pub fn q_of(p: f64, m: f64) -> f64 {
    2.0 * (5.0 * p + 3.0 * m - 3.0) / 3.0
}

/// Space-time exponent `(5p + 3m - 3)/3`, i.e. half of [`q_of`].
pub fn space_time_exponent(p: f64, m: f64) -> f64 {
    (5.0 * p + 3.0 * m - 3.0) / 3.0
}

/// Largest `p` reachable from `p_star` with velocity integrability `q`.
pub fn admissibility_bound(p_star: f64, q: f64, m: f64) -> f64 {
    2.0 * (q - 1.0) / 3.0 * p_star + (2.0 * q - 1.0) * (m - 1.0)
}

/// Whether an `L^{p_star}` bound together with `L^q` velocity control can be
/// upgraded to an `L^p` bound: `p <= 2(q-1)/3 * p_star + (2q-1)(m-1)`.
pub fn step_admissible(p_star: f64, p: f64, q: f64, m: f64) -> Result<bool> {
    if !(q >= 2.0) {
        return Err(Error::domain("q", q, "q >= 2"));
    }
    Ok(p <= admissibility_bound(p_star, q, m))
}

/// `psi(p) = (10p^2 + (36m - 42)p + (m-1)(18m - 27)) / 9`.
pub fn psi(p: f64, m: f64) -> f64 {
    (10.0 * p * p + (36.0 * m - 42.0) * p + (m - 1.0) * (18.0 * m - 27.0)) / 9.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdCertificate {
    pub above_9_8: bool,
    /// `psi(9(m-1)) - 9(m-1)`; equals `16(8m-9)(m-1)`.
    pub fixed_point_gap: f64,
    pub above_215_192: bool,
}

pub fn threshold_certificate(m: f64) -> ThresholdCertificate {
    let crit = critical_exponent(m);
    let fixed_point_gap = psi(crit, m) - crit;
    // signs from the factored forms 16(8m-9)(m-1) and 9(m-1)(192m-215), which
    // stay exact at the thresholds where the expanded polynomials round
    ThresholdCertificate {
        above_9_8: m > 1.0 && 8.0 * m - 9.0 > 0.0,
        fixed_point_gap,
        above_215_192: m > 1.0 && 192.0 * m - 215.0 > 0.0,
    }
}

/// Growth factor `1 + (psi(9(m-1))/(9(m-1)) - 1)/2` of the quadratic ladder.
pub fn gamma_of(m: f64) -> Result<f64> {
    if !(m > PSI_THRESHOLD) {
        return Err(Error::domain("m", m, "m > 9/8 (psi has no super-fixed-point otherwise)"));
    }
    let crit = critical_exponent(m);
    let c1 = psi(crit, m) / crit - 1.0;
    Ok(1.0 + c1 / 2.0)
}

/// Largest `delta` in `(0, 9(m-1) - 1]` such that `psi(p)/p >= gamma_of(m)` on a
/// 1000-point scan of `(9(m-1) - delta, 9(m-1)]`, bisected to `1e-9`.
pub fn delta2(m: f64) -> Result<f64> {
    let gamma = gamma_of(m)?;
    let crit = critical_exponent(m);
    let ok = |delta: f64| {
        (0..1000).all(|i| {
            let p = crit - delta * i as f64 / 1000.0;
            psi(p, m) / p >= gamma
        })
    };
    let max_delta = crit - 1.0;
    if ok(max_delta) {
        return Ok(max_delta);
    }
    let (mut lo, mut hi) = (0.0, max_delta);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderKind {
    Linear,
    Psi,
}

impl std::str::FromStr for LadderKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "linear" => Ok(LadderKind::Linear),
            "psi" => Ok(LadderKind::Psi),
            other => Err(format!("unknown ladder `{other}` (expected linear|psi)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ReachedCap,
    Converged,
    Inadmissible,
}

/// Per-step record: which bound the step was checked against and whether it held.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCertificate {
    /// `Gamma^k p_0` for the quadratic ladder; `None` for the linear one.
    pub gamma_bound: Option<f64>,
    pub admissibility_bound: f64,
    pub admissible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderEntry {
    pub k: usize,
    pub p: f64,
    pub certificate: StepCertificate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapLadder {
    pub kind: LadderKind,
    pub entries: Vec<LadderEntry>,
    pub terminated: Termination,
}

impl BootstrapLadder {
    pub fn last(&self) -> f64 {
        self.entries.last().map(|e| e.p).unwrap_or(f64::NAN)
    }

    /// CSV with columns `k,p_k,gamma_bound,admissible`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,p_k,gamma_bound,admissible\n");
        for e in &self.entries {
            let gamma = e
                .certificate
                .gamma_bound
                .map(|g| format!("{g:.17e}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{:.17e},{},{}\n",
                e.k, e.p, gamma, e.certificate.admissible
            ));
        }
        out
    }
}

fn slack_le(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + CERT_SLACK * rhs.abs().max(1.0)
}

/// Iterates `p_{k+1} = 2p_k/3 + 3(m-1)` towards `9(m-1)`.
///
/// Each step is the `q = 2` instance of [`step_admissible`], recorded as the
/// step certificate.
pub fn run_linear_ladder(m: f64, p0: f64, cap: f64) -> Result<BootstrapLadder> {
    if !(m > LINEAR_THRESHOLD) {
        return Err(Error::domain("m", m, "m > 10/9 for the linear ladder"));
    }
    if !(p0 >= 1.0) {
        return Err(Error::domain("p0", p0, "p0 >= 1"));
    }
    if !(cap > p0) {
        return Err(Error::domain("cap", cap, "cap > p0"));
    }
    let limit = critical_exponent(m);
    let first = StepCertificate {
        gamma_bound: None,
        admissibility_bound: p0,
        admissible: true,
    };
    let mut entries = vec![LadderEntry {
        k: 0,
        p: p0,
        certificate: first,
    }];
    let mut p = p0;
    let mut terminated = Termination::ReachedCap;
    for k in 1..=MAX_STEPS {
        if (p - limit).abs() < LINEAR_TOL {
            terminated = Termination::Converged;
            break;
        }
        let next = 2.0 / 3.0 * p + 3.0 * (m - 1.0);
        let bound = admissibility_bound(p, 2.0, m);
        let admissible = slack_le(next, bound);
        entries.push(LadderEntry {
            k,
            p: next,
            certificate: StepCertificate {
                gamma_bound: None,
                admissibility_bound: bound,
                admissible,
            },
        });
        p = next;
        if !admissible {
            terminated = Termination::Inadmissible;
            break;
        }
        if p > cap {
            terminated = Termination::ReachedCap;
            break;
        }
    }
    if terminated == Termination::ReachedCap && (p - limit).abs() < LINEAR_TOL {
        terminated = Termination::Converged;
    }
    Ok(BootstrapLadder {
        kind: LadderKind::Linear,
        entries,
        terminated,
    })
}

/// Starting exponent `max(1 + 1e-6, 9(m-1) - min(delta1, delta2)/2)`.
pub fn psi_ladder_start(m: f64) -> Result<f64> {
    let d = delta1(m)?.min(delta2(m)?);
    let crit = critical_exponent(m);
    Ok((crit - 0.5 * d).max(1.0 + 1e-6).min(crit))
}

/// Iterates `p_k = psi(p_{k-1})` until `p_k > cap`, certifying `p_k >= Gamma^k p_0`
/// and the admissibility of every step.
pub fn run_psi_ladder(m: f64, cap: f64) -> Result<BootstrapLadder> {
    if !(m > PSI_THRESHOLD) {
        let gap = threshold_certificate(m).fixed_point_gap;
        return Err(Error::domain(
            "m",
            m,
            if gap == 0.0 {
                "m > 9/8: psi(9(m-1)) = 9(m-1) exactly, the ladder cannot escape"
            } else {
                "m > 9/8: psi(9(m-1)) < 9(m-1), the ladder cannot escape"
            },
        ));
    }
    if !(cap > 0.0) {
        return Err(Error::domain("cap", cap, "cap > 0"));
    }
    let gamma = gamma_of(m)?;
    let p0 = psi_ladder_start(m)?;
    let mut entries = vec![LadderEntry {
        k: 0,
        p: p0,
        certificate: StepCertificate {
            gamma_bound: Some(p0),
            admissibility_bound: p0,
            admissible: true,
        },
    }];
    let mut p = p0;
    let mut bound = p0;
    let mut terminated = Termination::ReachedCap;
    if p > cap {
        return Ok(BootstrapLadder {
            kind: LadderKind::Psi,
            entries,
            terminated,
        });
    }
    for k in 1..=MAX_STEPS {
        let next = psi(p, m);
        bound *= gamma;
        let adm_bound = admissibility_bound(p, q_of(p, m), m);
        let admissible = slack_le(next, adm_bound) && next >= bound * (1.0 - CERT_SLACK);
        entries.push(LadderEntry {
            k,
            p: next,
            certificate: StepCertificate {
                gamma_bound: Some(bound),
                admissibility_bound: adm_bound,
                admissible,
            },
        });
        p = next;
        if !admissible {
            terminated = Termination::Inadmissible;
            break;
        }
        if p > cap {
            break;
        }
    }
    Ok(BootstrapLadder {
        kind: LadderKind::Psi,
        entries,
        terminated,
    })
}

/// Piecewise-linear function through `(times[i], values[i])`, constant outside.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Config("sampled function needs matching, non-empty samples".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("sample times must be strictly increasing".into()));
        }
        Ok(Self { times, values })
    }

    pub fn eval(&self, s: f64) -> f64 {
        let n = self.times.len();
        if s <= self.times[0] {
            return self.values[0];
        }
        if s >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let j = self.times.partition_point(|&t| t <= s);
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let w = (s - t0) / (t1 - t0);
        self.values[j - 1] * (1.0 - w) + self.values[j] * w
    }
}

const GL8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];
const CONV_PANELS: usize = 4096;

/// `int_0^t (t-s)^(-beta) e^(-lambda (t-s)) h(s) ds`.
///
/// Substituting `w = sigma^(1-beta)/(1-beta)` with `sigma = t - s` removes the
/// endpoint singularity; uniform Gauss-Legendre panels in `w` form a mesh graded
/// towards `s = t` in the original variable.
pub fn convolution_decay<H: Fn(f64) -> f64>(beta: f64, lambda: f64, h: H, t: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain("beta", beta, "0 < beta < 1 (integrable singularity)"));
    }
    if !(lambda > 0.0) {
        return Err(Error::domain("lambda", lambda, "lambda > 0"));
    }
    if !(t >= 0.0) {
        return Err(Error::domain("t", t, "t >= 0"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let a = 1.0 - beta;
    let w_end = t.powf(a) / a;
    let width = w_end / CONV_PANELS as f64;
    let integrand = |w: f64| {
        let sigma = (a * w).powf(1.0 / a).min(t);
        (-lambda * sigma).exp() * h(t - sigma)
    };
    let mut total = 0.0;
    for panel in 0..CONV_PANELS {
        let mid = (panel as f64 + 0.5) * width;
        let half = 0.5 * width;
        let mut acc = 0.0;
        for &(x, wt) in &GL8 {
            acc += wt * (integrand(mid - half * x) + integrand(mid + half * x));
        }
        total += acc * half;
    }
    Ok(total)
}
