//! Phase thresholds, growth exponents, the exponent budget functions and the
//! hierarchy parameter chooser.
//!
//! Infinite parameters are `f64::INFINITY` and every formula follows the
//! convention `inf * 0 = 0`.

use crate::model::ModelParams;
use serde::{Serialize, Serializer};
use thiserror::Error;

const INF: f64 = f64::INFINITY;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("tau must lie in (2, 3), got {0}")]
    TauOutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("{what} is undefined in this regime ({phase:?})")]
    Undefined { what: &'static str, phase: Phase },
    #[error("no hierarchy parameters for phase {0:?}")]
    NoCandidate(Phase),
}

/// The parameters the phase map depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseParams {
    pub d: usize,
    pub tau: f64,
    #[serde(serialize_with = "ext")]
    pub alpha: f64,
    #[serde(serialize_with = "ext")]
    pub beta: f64,
    pub mu: f64,
}

impl PhaseParams {
    pub fn new(d: usize, tau: f64, alpha: f64, beta: f64, mu: f64) -> Self {
        PhaseParams { d, tau, alpha, beta, mu }
    }

    fn check(&self) -> Result<(), TheoryError> {
        if !(self.tau > 2.0 && self.tau < 3.0) {
            return Err(TheoryError::TauOutOfRange(self.tau));
        }
        if self.d == 0 || !(self.alpha > 1.0) || !(self.beta > 0.0) || !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(TheoryError::InvalidParam(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn limit_case(&self) -> LimitCase {
        match (self.alpha.is_infinite(), self.beta.is_infinite()) {
            (false, false) => LimitCase::Finite,
            (true, false) => LimitCase::AlphaInf,
            (false, true) => LimitCase::BetaInf,
            (true, true) => LimitCase::BothInf,
        }
    }
}

impl From<&ModelParams> for PhaseParams {
    fn from(p: &ModelParams) -> Self {
        PhaseParams { d: p.d, tau: p.tau, alpha: p.alpha, beta: p.beta(), mu: p.mu }
    }
}

/// Writes infinite values as the string `"inf"`.
fn ext<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_infinite() {
        s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*x)
    }
}

fn ext_opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => ext(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LimitCase {
    Finite,
    AlphaInf,
    BetaInf,
    BothInf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Explosive,
    Polylog,
    Polynomial,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Explosive,
    Polylog,
    Polynomial,
    Linear,
    /// Exactly on the threshold between two regimes.
    Boundary(Regime, Regime),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    #[serde(serialize_with = "ext")]
    pub mu_expl: f64,
    #[serde(serialize_with = "ext")]
    pub mu_log: f64,
    #[serde(serialize_with = "ext")]
    pub mu_pol: f64,
    #[serde(serialize_with = "ext")]
    pub mu_pol_alpha: f64,
    #[serde(serialize_with = "ext")]
    pub mu_pol_beta: f64,
}

pub fn thresholds(par: &PhaseParams) -> Result<Thresholds, TheoryError> {
    par.check()?;
    let d = par.d as f64;
    let (mu_expl, mu_log, mu_pol_beta) = if par.beta.is_infinite() {
        (0.0, 0.0, 1.0 / d)
    } else {
        let s = (3.0 - par.tau) / par.beta;
        (s / 2.0, s, 1.0 / d + s)
    };
    let mu_pol_alpha = if par.alpha.is_infinite() {
        1.0 / d
    } else if par.alpha <= 2.0 {
        INF
    } else {
        (par.alpha - (par.tau - 1.0)) / (d * (par.alpha - 2.0))
    };
    Ok(Thresholds { mu_expl, mu_log, mu_pol: mu_pol_alpha.max(mu_pol_beta), mu_pol_alpha, mu_pol_beta })
}

pub fn classify_phase(par: &PhaseParams) -> Result<Phase, TheoryError> {
    let t = thresholds(par)?;
    let mu = par.mu;
    use Regime::*;
    if mu < t.mu_expl {
        return Ok(Phase::Explosive);
    }
    if mu == t.mu_expl && t.mu_expl > 0.0 {
        return Ok(Phase::Boundary(Explosive, Polylog));
    }
    if par.alpha < 2.0 {
        return Ok(Phase::Polylog);
    }
    if par.alpha == 2.0 {
        return Ok(if mu < t.mu_log { Phase::Polylog } else { Phase::Boundary(Polylog, Polynomial) });
    }
    Ok(if mu < t.mu_log {
        Phase::Polylog
    } else if mu == t.mu_log {
        Phase::Boundary(Polylog, Polynomial)
    } else if mu < t.mu_pol {
        Phase::Polynomial
    } else if mu == t.mu_pol {
        Phase::Boundary(Polynomial, Linear)
    } else {
        Phase::Linear
    })
}

fn delta_of(x: f64) -> f64 {
    1.0 / (1.0 - x.log2())
}

/// Polylogarithmic growth exponent.
pub fn delta0(par: &PhaseParams) -> Result<f64, TheoryError> {
    let t = thresholds(par)?;
    let phase = classify_phase(par)?;
    let undefined = Err(TheoryError::Undefined { what: "delta0", phase });
    if par.mu <= t.mu_expl && t.mu_expl > 0.0 {
        return undefined;
    }
    let alpha_ok = par.alpha < 2.0;
    let beta_ok = par.mu > t.mu_expl && par.mu < t.mu_log;
    let d_alpha = if alpha_ok { delta_of(par.alpha) } else { INF };
    let d_beta = if beta_ok { delta_of(par.tau - 1.0 + par.mu * par.beta) } else { INF };
    match (alpha_ok, beta_ok) {
        (false, false) => undefined,
        _ => Ok(d_alpha.min(d_beta)),
    }
}

/// The two candidates of the polynomial exponent: (eta_beta, eta_alpha).
pub fn eta_candidates(par: &PhaseParams) -> Result<(f64, f64), TheoryError> {
    let t = thresholds(par)?;
    let d = par.d as f64;
    Ok((d * (par.mu - t.mu_log), par.mu / t.mu_pol_alpha))
}

/// Polynomial growth exponent.
pub fn eta0(par: &PhaseParams) -> Result<f64, TheoryError> {
    let t = thresholds(par)?;
    let phase = classify_phase(par)?;
    if !(par.alpha > 2.0) || !(par.mu > t.mu_log) {
        return Err(TheoryError::Undefined { what: "eta0", phase });
    }
    if par.mu > t.mu_pol {
        return Ok(1.0);
    }
    let (eb, ea) = eta_candidates(par)?;
    Ok(eb.min(ea).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseReport {
    pub params: PhaseParams,
    #[serde(flatten)]
    pub thresholds: Thresholds,
    #[serde(serialize_with = "ext_opt")]
    pub delta0: Option<f64>,
    #[serde(serialize_with = "ext_opt")]
    pub eta0: Option<f64>,
    pub phase: Phase,
    pub limit_case: LimitCase,
}

pub fn phase_report(par: &PhaseParams) -> Result<PhaseReport, TheoryError> {
    Ok(PhaseReport {
        params: *par,
        thresholds: thresholds(par)?,
        delta0: delta0(par).ok(),
        eta0: eta0(par).ok(),
        phase: classify_phase(par)?,
        limit_case: par.limit_case(),
    })
}

/// `min(0, beta * x)` with `inf * 0 = 0`.
fn beta_term(beta: f64, x: f64) -> f64 {
    if beta.is_infinite() {
        if x >= 0.0 {
            0.0
        } else {
            -INF
        }
    } else {
        (beta * x).min(0.0)
    }
}

/// `Lambda(eta, z) = 2 d gamma - alpha (d - z) - z (tau - 1) + min(0, beta (eta - mu z))`.
pub fn lambda_fn(eta: f64, z: f64, gamma: f64, par: &PhaseParams) -> f64 {
    let d = par.d as f64;
    let alpha_term = if par.alpha.is_infinite() {
        if z >= d {
            0.0
        } else {
            INF
        }
    } else {
        par.alpha * (d - z)
    };
    2.0 * d * gamma - alpha_term - z * (par.tau - 1.0) + beta_term(par.beta, eta - par.mu * z)
}

/// `Phi(eta, z) = min(d gamma, z / 2) + min(0, beta (eta - mu z / 2))`.
pub fn phi_fn(eta: f64, z: f64, gamma: f64, par: &PhaseParams) -> f64 {
    let d = par.d as f64;
    (d * gamma).min(z / 2.0) + beta_term(par.beta, eta - par.mu * z / 2.0)
}

/// `log` applied `k` times; `None` as soon as an argument is not positive.
pub fn iterated_log(x: f64, k: usize) -> Option<f64> {
    let mut v = x;
    for _ in 0..k {
        if !(v > 0.0) {
            return None;
        }
        v = v.ln();
    }
    Some(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Candidate {
    /// `gamma = alpha/2 + eps'`, `z = 0`, `eta = 0`.
    PolylogAlpha,
    /// `gamma = (tau - 1 + mu beta)/2 + eps'`, `z = d`, `eta = 0`.
    PolylogBeta,
    /// `gamma = 1 - eps'`, `z = d`, `eta = eta_beta + sqrt(eps')`.
    PolynomialBeta,
    /// `gamma = 1 - eps'`, `z = eta / mu`, `eta = eta_alpha + sqrt(eps')`.
    PolynomialAlpha,
    /// `alpha = beta = inf`: `gamma = 1 - eps'`, `z = d`, `eta = eta_0 + sqrt(eps')`.
    BothInfinite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyParams {
    pub candidate: Candidate,
    pub gamma: f64,
    pub z: f64,
    pub eta: f64,
    pub r: u32,
    /// Value of the round formula before rounding and clamping to `>= 2`.
    pub r_formula: f64,
    pub d: usize,
    pub xi: f64,
    pub delta: f64,
    pub eps: f64,
    pub eps_prime: f64,
    pub w_bar: f64,
    pub w_under: f64,
    pub c_h: u64,
    pub ln_k: f64,
    pub ln_a: f64,
    /// The 4-fold iterated log in the round formula was undefined and taken as 0.
    pub logstar_clamped: bool,
}

impl HierarchyParams {
    /// Recomputes the weight scales for an explicit number of rounds.
    pub fn with_rounds(mut self, r: u32) -> Self {
        self.r = r.max(2);
        self.refresh_scales();
        self
    }

    fn refresh_scales(&mut self) {
        let g = self.gamma.powi(self.r as i32 - 1);
        self.w_bar = self.xi.powf(g * self.d as f64 / 2.0);
        self.w_under = self.xi.powf(g * self.delta);
    }
}

/// Hierarchy constant `c_H = 8 (1 + ceil(log(d/delta) / log(1/(tau - 2 + 2 d tau delta))))`.
pub fn c_h(d: usize, tau: f64, delta: f64) -> Result<u64, TheoryError> {
    let b = tau - 2.0 + 2.0 * d as f64 * tau * delta;
    if !(b > 0.0 && b < 1.0) || !(delta > 0.0) {
        return Err(TheoryError::InvalidParam(format!("tau - 2 + 2 d tau delta = {b} must lie in (0, 1)")));
    }
    let q = ((d as f64 / delta).ln() / (1.0 / b).ln()).ceil().max(0.0);
    Ok(8 * (1 + q as u64))
}

/// Round count of the polylogarithmic choices:
/// `ceil((log log xi - (log^{*4} xi)^2) / log(1/gamma))`; returns (raw, clamped flag).
pub fn polylog_rounds(xi: f64, gamma: f64) -> (f64, bool) {
    let ll = iterated_log(xi, 2).unwrap_or(0.0);
    let (l4, clamped) = match iterated_log(xi, 4) {
        Some(v) => (v, false),
        None => (0.0, true),
    };
    ((ll - l4 * l4) / (1.0 / gamma).ln(), clamped)
}

/// Chooses `(gamma, z, eta, R)` for the regime of `par` at scale `xi`.
pub fn choose_hierarchy_params(
    par: &PhaseParams,
    xi: f64,
    eps: f64,
    eps_prime: f64,
    delta: f64,
) -> Result<HierarchyParams, TheoryError> {
    let t = thresholds(par)?;
    let phase = classify_phase(par)?;
    if !(xi > std::f64::consts::E.powf(std::f64::consts::E)) {
        return Err(TheoryError::InvalidParam("xi must exceed e^e".into()));
    }
    if !(eps > 0.0 && eps_prime > 0.0 && eps_prime < 1.0 && delta > 0.0) {
        return Err(TheoryError::InvalidParam("eps, eps', delta must be positive".into()));
    }
    let d = par.d as f64;
    let lnxi = xi.ln();
    let lnlnxi = lnxi.ln();
    let mut cands: Vec<(Candidate, f64, f64, f64)> = Vec::new();
    let (ln_k, ln_a, polylog) = match phase {
        Phase::Polylog => {
            if par.alpha < 2.0 {
                cands.push((Candidate::PolylogAlpha, par.alpha / 2.0 + eps_prime, 0.0, 0.0));
            }
            if par.mu > t.mu_expl && par.mu < t.mu_log {
                let g = (par.tau - 1.0 + par.mu * par.beta) / 2.0 + eps_prime;
                cands.push((Candidate::PolylogBeta, g, d, 0.0));
            }
            let dl = delta0(par)?;
            (dl * lnlnxi, eps * lnlnxi, true)
        }
        Phase::Polynomial | Phase::Linear => {
            let g = 1.0 - eps_prime;
            let s = eps_prime.sqrt();
            if par.alpha.is_infinite() && par.beta.is_infinite() {
                cands.push((Candidate::BothInfinite, g, d, (d * par.mu).min(1.0) + s));
            } else {
                let (eb, ea) = eta_candidates(par)?;
                cands.push((Candidate::PolynomialBeta, g, d, eb + s));
                if par.alpha.is_finite() && par.mu > 0.0 {
                    let z = (ea + s) / par.mu;
                    if z <= d {
                        cands.push((Candidate::PolynomialAlpha, g, z, ea + s));
                    }
                }
            }
            let e0 = if phase == Phase::Linear { 1.0 } else { eta0(par)? };
            (e0 * lnxi, eps * lnxi, false)
        }
        other => return Err(TheoryError::NoCandidate(other)),
    };
    let best = if polylog {
        cands.iter().min_by(|a, b| a.1.total_cmp(&b.1))
    } else {
        cands.iter().min_by(|a, b| a.3.total_cmp(&b.3))
    }
    .copied()
    .ok_or(TheoryError::NoCandidate(phase))?;
    let (candidate, gamma, z, eta) = best;
    let (r_formula, logstar_clamped) = if polylog {
        polylog_rounds(xi, gamma)
    } else {
        (1.0 / (eps_prime * eps_prime), false)
    };
    let r = (r_formula.ceil().max(2.0)).min(u32::MAX as f64) as u32;
    let mut hp = HierarchyParams {
        candidate,
        gamma,
        z,
        eta,
        r,
        r_formula,
        d: par.d,
        xi,
        delta,
        eps,
        eps_prime,
        w_bar: 0.0,
        w_under: 0.0,
        c_h: c_h(par.d, par.tau, delta)?,
        ln_k,
        ln_a,
        logstar_clamped,
    };
    hp.refresh_scales();
    Ok(hp)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityReport {
    pub trivial: bool,
    pub rounds: bool,
    pub weights: bool,
    pub budget: bool,
    pub lambda: bool,
    pub phi: bool,
    pub logstar_clamped: bool,
    pub reasons: Vec<&'static str>,
}

impl ValidityReport {
    pub fn valid(&self) -> bool {
        self.reasons.is_empty()
    }
}

/// Evaluates the five validity conditions at `xi` (compared on log scale).
pub fn check_validity(hp: &HierarchyParams, xi: f64, par: &PhaseParams) -> ValidityReport {
    let d = par.d as f64;
    let lnxi = xi.ln();
    let l2 = iterated_log(xi, 2);
    let l3 = iterated_log(xi, 3);
    let mut reasons = Vec::new();

    let trivial = hp.gamma > 0.0 && hp.gamma < 1.0 && hp.z >= 0.0 && hp.z <= d && hp.eta >= 0.0;
    if !trivial {
        reasons.push("trivial");
    }
    let rounds = match l2 {
        Some(ll) if ll > 0.0 => hp.r >= 2 && (hp.r as f64) <= ll * ll / 4.0,
        _ => false,
    };
    if !rounds {
        reasons.push("R-range");
    }
    let g = hp.gamma.powi(hp.r as i32 - 1);
    let ln_wbar2 = g * d * lnxi;
    let ln_ll = l2.filter(|v| *v > 0.0).map(f64::ln);
    let weights = match (l3, ln_ll) {
        (Some(l3), Some(lll)) => ln_wbar2 >= l3 * l3 && ln_wbar2 <= hp.ln_a - lll,
        _ => false,
    };
    if !weights {
        reasons.push("weight-range");
    }
    let ln_lhs = hp.r as f64 * 2f64.ln() + 4.0 * par.mu * ln_wbar2 / 2.0 + hp.eta * lnxi;
    let budget = match ln_ll {
        Some(lll) => ln_lhs <= hp.ln_k + hp.ln_a - lll,
        None => false,
    };
    if !budget {
        reasons.push("budget");
    }
    let lam = lambda_fn(hp.eta, hp.z, hp.gamma, par);
    let lambda = lam > 0.0;
    if !lambda {
        reasons.push("lambda");
    }
    let phi = hp.z == 0.0 || phi_fn(hp.eta, hp.z, hp.gamma, par) > 0.0;
    if !phi {
        reasons.push("phi");
    }
    ValidityReport { trivial, rounds, weights, budget, lambda, phi, logstar_clamped: hp.logstar_clamped, reasons }
}
