//! Explicit constants of the non-asymptotic SGHMC analysis.
//!
//! Every function here is a direct evaluation of a closed-form expression in
//! the problem parameters. Constants that can leave the range of `f64`
//! (exponentials of the problem size) are carried as [`Quantity`], which keeps
//! the natural logarithm alongside the value.

use std::f64::consts::{E, LN_10};
use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("parameter {name} = {value} violates {rule}")]
    Invalid {
        name: &'static str,
        value: f64,
        rule: &'static str,
    },
    #[error("contraction rate {0} must be below 1/2")]
    LambdaTooLarge(f64),
}

fn require(name: &'static str, value: f64, ok: bool, rule: &'static str) -> Result<(), ParamError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ParamError::Invalid { name, value, rule })
    }
}

/// Inputs of the generalization bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizationInputs {
    /// Log-Sobolev constant of the Gibbs measure.
    pub c_ls: f64,
    /// Lipschitz constant of the per-sample loss.
    pub l1_prime: f64,
    pub b1: f64,
    /// Training-set size.
    pub sample_size: f64,
}

/// Symbol table feeding every constant formula.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemParams {
    /// Lipschitz constant of `H` in the parameter.
    pub l1: f64,
    /// Lipschitz constant of `H` in the data.
    pub l2: f64,
    /// Growth exponent of the data dependence.
    pub rho: f64,
    /// `E[(1 + |X|)^(4(rho + 1))]`.
    pub c_rho: f64,
    /// `|H(0, 0)|`.
    pub big_h0: f64,
    /// `|h(0)|`.
    pub h0: f64,
    /// `U(0)`.
    pub u0: f64,
    /// `L1 * E[(1 + |X|)^rho]`, the Lipschitz constant of the full gradient.
    pub l1_bar: f64,
    /// Dissipativity: `<h(t), t> >= a |t|^2 - b`.
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub beta: f64,
    pub dim: usize,
    /// `E[(1 + |X| + |EX|)^(2 rho) |X - EX|^2]`.
    pub sigma_z: f64,
    /// Expected Lyapunov value of the initial law.
    pub m0: f64,
    /// Free parameter of the reflection-coupling semimetric.
    pub alpha: f64,
    /// Initial distance to the extended target in the coupling semimetric.
    pub w_rho0: Option<f64>,
    /// Constant of the `eta^(1/4)` term; no closed form exists, so it is user-supplied.
    pub c2_star: Option<f64>,
    pub generalization: Option<GeneralizationInputs>,
}

impl ProblemParams {
    /// Reference parameter set used throughout the tests.
    pub fn reference() -> Self {
        Self {
            l1: 1.0,
            l2: 1.0,
            rho: 0.0,
            c_rho: 1.0,
            big_h0: 1.0,
            h0: 1.0,
            u0: 0.0,
            l1_bar: 1.0,
            a: 1.0,
            b: 1.0,
            gamma: 2.0,
            beta: 1.0,
            dim: 1,
            sigma_z: 1.0,
            m0: 0.0,
            alpha: 1.0,
            w_rho0: None,
            c2_star: None,
            generalization: None,
        }
    }

    pub fn d(&self) -> f64 {
        self.dim as f64
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        require("L1", self.l1, self.l1 > 0.0, "> 0")?;
        require("L2", self.l2, self.l2 >= 0.0, ">= 0")?;
        require("rho", self.rho, self.rho >= 0.0, ">= 0")?;
        require("C_rho", self.c_rho, self.c_rho >= 1.0, ">= 1")?;
        require("H0", self.big_h0, self.big_h0 >= 0.0, ">= 0")?;
        require("h0", self.h0, self.h0 >= 0.0, ">= 0")?;
        require("u0", self.u0, self.u0 >= 0.0, ">= 0")?;
        require("L1_bar", self.l1_bar, self.l1_bar > 0.0, "> 0")?;
        require("a", self.a, self.a > 0.0, "> 0")?;
        require("b", self.b, self.b > 0.0, "> 0")?;
        require("gamma", self.gamma, self.gamma > 0.0, "> 0")?;
        require("beta", self.beta, self.beta > 0.0, "> 0")?;
        require("d", self.d(), self.dim >= 1, ">= 1")?;
        require("sigma_Z", self.sigma_z, self.sigma_z >= 0.0, ">= 0")?;
        require("m0", self.m0, self.m0 >= 0.0, ">= 0")?;
        require("alpha", self.alpha, self.alpha > 0.0, "> 0")?;
        if let Some(w) = self.w_rho0 {
            require("W_rho0", w, w >= 0.0, ">= 0")?;
        }
        if let Some(c) = self.c2_star {
            require("C2_star", c, c >= 0.0, ">= 0")?;
        }
        if let Some(g) = &self.generalization {
            require("c_LS", g.c_ls, g.c_ls > 0.0, "> 0")?;
            require("L1_prime", g.l1_prime, g.l1_prime >= 0.0, ">= 0")?;
            require("B1", g.b1, g.b1 >= 0.0, ">= 0")?;
            require("M_gen", g.sample_size, g.sample_size > 0.0, "> 0")?;
        }
        Ok(())
    }
}

/// A positive constant carried in log space.
///
/// `value` saturates to `inf` or `0` when the true number leaves the `f64`
/// range; `ln` stays exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub ln: f64,
}

impl Quantity {
    pub fn from_ln(ln: f64) -> Self {
        Self { value: ln.exp(), ln }
    }

    pub fn from_value(value: f64) -> Self {
        Self { value, ln: value.ln() }
    }

    pub fn log10(&self) -> f64 {
        self.ln / LN_10
    }

    pub fn overflowed(&self) -> bool {
        self.value.is_infinite() && self.ln.is_finite()
    }

    pub fn underflowed(&self) -> bool {
        self.value == 0.0 && self.ln.is_finite()
    }

    fn sqrt(self) -> Self {
        Self::from_ln(0.5 * self.ln)
    }

    fn mul(self, other: Self) -> Self {
        Self::from_ln(self.ln + other.ln)
    }

    fn add(self, other: Self) -> Self {
        let (hi, lo) = if self.ln >= other.ln { (self.ln, other.ln) } else { (other.ln, self.ln) };
        if hi == f64::NEG_INFINITY {
            return Self::from_ln(hi);
        }
        Self::from_ln(hi + (lo - hi).exp().ln_1p())
    }
}

/// Contraction rate and drift offset of the Lyapunov function.
pub fn lambda_ac(p: &ProblemParams) -> (f64, f64) {
    let lambda = 0.25_f64.min(p.a / (p.l1_bar + 2.0 * p.l1_bar * p.b + p.gamma * p.gamma / 2.0));
    let a_c = p.beta / 2.0 * (p.b + 2.0 * lambda * p.u0 + 2.0 * lambda * p.l1_bar * p.b);
    (lambda, a_c)
}

/// Constants of the first-moment drift inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KConstants {
    pub l1_tilde: f64,
    pub c1_tilde: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

fn check_lambda(lambda: f64) -> Result<(), ParamError> {
    if lambda > 0.0 && lambda < 0.5 {
        Ok(())
    } else {
        Err(ParamError::LambdaTooLarge(lambda))
    }
}

pub fn k_constants(p: &ProblemParams, lambda: f64, a_c: f64) -> Result<KConstants, ParamError> {
    check_lambda(lambda)?;
    let (g, l1, cr) = (p.gamma, p.l1, p.c_rho);
    let l1_tilde = 2.0 * l1 * l1 * cr;
    let c1_tilde = 4.0 * p.l2 * p.l2 * cr + 4.0 * p.big_h0 * p.big_h0;
    let k1 = f64::max(
        (l1 * cr / 2.0 + g * g / 4.0 - g * g * lambda / 4.0 + g / 4.0) / ((1.0 - 2.0 * lambda) / 8.0),
        (l1_tilde / 2.0 + g / 2.0 * l1 * cr * cr) / ((1.0 - 2.0 * lambda) * g * g / 16.0),
    );
    let k2 = (c1_tilde + g * p.h0 * p.h0) / 2.0;
    let k3 = (a_c + p.d()) * g / p.beta;
    Ok(KConstants { l1_tilde, c1_tilde, k1, k2, k3 })
}

/// Constants of the second-moment (squared Lyapunov) drift inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftConstants {
    pub k1_tilde: f64,
    /// `c_tilde[i]` holds the constant with subscript `i + 1`.
    pub c_tilde: [f64; 11],
    pub c_hat_1: f64,
    pub c_hat_3: f64,
    pub c_hat_4: f64,
    /// Evaluated with `L2` standing in for the undefined `L4`.
    pub c_hat_5: f64,
    pub k2_tilde: f64,
    pub k_bar: f64,
    pub d_const: f64,
}

pub fn kbar_and_d(p: &ProblemParams, lambda: f64, a_c: f64) -> Result<DriftConstants, ParamError> {
    check_lambda(lambda)?;
    let (g, l1, l2, cr, d, beta) = (p.gamma, p.l1, p.l2, p.c_rho, p.d(), p.beta);
    let (hh0, h0) = (p.big_h0, p.h0);
    let shrink = 1.0 - 2.0 * lambda;
    let k1_tilde = f64::max(
        (l1 * cr / 2.0 + g * g / 4.0 - g * g * lambda / 4.0) / (shrink / 8.0),
        l1 * l1 * cr / (shrink * g * g / 16.0),
    );
    let mut c = [0.0; 11];
    c[0] = g * a_c + g * d;
    let c_hat_1 = 2.0 * l2 * cr + 2.0 * hh0 * hh0;
    c[1] = 6.0 * g * g * a_c * a_c;
    c[2] = 9.0 * g * g / 8.0 + 18.0 * (g + 2.0).powi(2) * (l1.powi(4) * cr.powi(4) + l1.powi(4) * cr);
    let c_hat_3 = 18.0 * l1.powi(4) * cr;
    c[3] = 6.0 * (1.0 + lambda * g - g).powi(2) / 4.0;
    let c_hat_4 = 6.0 * (l1 * cr / 2.0 + g / 4.0 + 0.5).powi(2);
    c[4] = (g + 2.0).powi(2)
        * (30.0 * h0.powi(4) + 120.0 * l2.powi(4) + 120.0 * hh0.powi(4) + 30.0 * l2.powi(4) * cr + 30.0 * hh0.powi(4));
    let c_hat_5 = 48.0 * (l2.powi(4) + hh0.powi(4));
    c[5] = g * g * d * (d + 2.0);
    c[6] = f64::max(
        10.0 * g * d / (shrink / 8.0),
        2.0 * g * d * (6.0 * l1 * l1 * cr + 3.0 * g * g + 9.0 * l1 * l1 * cr) / (shrink * g * g / 16.0),
    );
    c[7] = 30.0 * g * d * l2 * l2 * cr + 30.0 * g * d * hh0 * hh0;
    c[8] = f64::max(
        (c[2] + c_hat_3) / (shrink * shrink * g.powi(4) / 128.0),
        (c_hat_4 + c[3]) / (shrink * shrink / 32.0),
    );
    let k2_tilde = k1_tilde + c[8];
    let k_bar = 2.0 * k2_tilde;
    c[9] = 2.0 * c[0] + c[6];
    c[10] = p.m0 + 4.0 * (a_c + d) / (g * lambda);
    let d_const = c[9] * c[10]
        + 2.0 * c_hat_1 * beta
        + c[1]
        + (c_hat_5 + c[4]) * beta * beta
        + c[5]
        + c[7] * beta;
    Ok(DriftConstants { k1_tilde, c_tilde: c, c_hat_1, c_hat_3, c_hat_4, c_hat_5, k2_tilde, k_bar, d_const })
}

/// Largest certified step size together with the five candidates it is the minimum of.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaMax {
    pub value: f64,
    pub branches: [f64; 5],
}

pub fn eta_max(p: &ProblemParams) -> Result<EtaMax, ParamError> {
    p.validate()?;
    let (lambda, a_c) = lambda_ac(p);
    let k = k_constants(p, lambda, a_c)?;
    let dc = kbar_and_d(p, lambda, a_c)?;
    let gl = p.gamma * lambda;
    let branches = [1.0, 2.0 / gl, gl / (2.0 * k.k1), k.k3 / k.k2, gl / (2.0 * dc.k_bar)];
    let value = branches.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(EtaMax { value, branches })
}

/// Uniform second-moment bounds for the continuous process (`theta_c`, `v_c`),
/// the SGHMC chain (`theta`, `v`) and the auxiliary interpolation (`zeta`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentBounds {
    pub theta_c: f64,
    pub v_c: f64,
    pub theta: f64,
    pub v: f64,
    pub zeta: f64,
}

pub fn moment_bounds(p: &ProblemParams, lambda: f64, a_c: f64) -> Result<MomentBounds, ParamError> {
    check_lambda(lambda)?;
    let shrink = 1.0 - 2.0 * lambda;
    let theta_den = shrink * p.beta * p.gamma * p.gamma / 8.0;
    let v_den = shrink * p.beta / 4.0;
    let drift = (a_c + p.d()) / lambda;
    Ok(MomentBounds {
        theta_c: (p.m0 + drift) / theta_den,
        v_c: (p.m0 + drift) / v_den,
        theta: (p.m0 + 4.0 * drift) / theta_den,
        v: (p.m0 + 4.0 * drift) / v_den,
        zeta: (p.m0 + 8.0 * drift) / theta_den,
    })
}

/// Variance proxies of the stochastic gradient and of the velocity increment.
pub fn sigma_constants(p: &ProblemParams, c_zeta: f64, c_theta: f64, c_v: f64, eta: f64) -> (f64, f64) {
    let l1_tilde = 2.0 * p.l1 * p.l1 * p.c_rho;
    let c1_tilde = 4.0 * p.l2 * p.l2 * p.c_rho + 4.0 * p.big_h0 * p.big_h0;
    let sigma_h = 8.0 * p.l2 * p.l2 * p.sigma_z * (1.0 + c_zeta);
    let sigma_v = 4.0 * eta * p.gamma * p.gamma * c_v
        + 4.0 * eta * (l1_tilde * c_theta + c1_tilde)
        + 4.0 * p.gamma * p.d() / p.beta;
    (sigma_h, sigma_v)
}

/// Contraction constants of the reflection coupling for the continuous dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingConstants {
    pub big_lambda: f64,
    pub r1: f64,
    /// Contraction rate.
    pub c_dot: Quantity,
    /// Prefactor.
    pub c_big_dot: Quantity,
}

pub fn coupling_constants(p: &ProblemParams, lambda: f64, a_c: f64) -> Result<CouplingConstants, ParamError> {
    check_lambda(lambda)?;
    let (g, beta, al, lb) = (p.gamma, p.beta, p.alpha, p.l1_bar);
    let poly = 1.0 + 2.0 * al + 2.0 * al * al;
    let big_lambda =
        12.0 / 5.0 * poly * (p.d() + a_c) * lb / (beta * g * g * lambda * (1.0 - 2.0 * lambda));
    let r1 = (8.0 * big_lambda / lb).sqrt();
    let ln_tail = 0.5 * big_lambda.ln() - big_lambda;
    let ln_min = [
        (lambda * lb / (beta * g * g)).ln(),
        ln_tail + (lb / (beta * g * g)).ln(),
        ln_tail,
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    let c_dot = Quantity::from_ln((g / 384.0).ln() + ln_min);
    let ln_inner = (4.0 * poly * (p.d() + a_c) / g).ln() - c_dot.ln - (r1.min(1.0) * beta).ln();
    let ln_cbd = 2f64.ln() + 2.0 + big_lambda + 2.0 * (1.0 + g).ln() - 2.0 * al.min(1.0).ln() + ln_inner.max(0.0);
    Ok(CouplingConstants { big_lambda, r1, c_dot, c_big_dot: Quantity::from_ln(ln_cbd) })
}

/// Constants of the uniform Wasserstein-2 error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceConstants {
    pub c1: Quantity,
    pub c_star_11: Quantity,
    pub c_star_12: Quantity,
    /// Coefficient of the `eta^(1/2)` term.
    pub c_star_1: Quantity,
    /// Coefficient of the transient term; requires the initial semimetric distance.
    pub c_star_3: Option<Quantity>,
    /// Rate of the transient term.
    pub c_star_4: Quantity,
}

pub fn convergence_constants(p: &ProblemParams, eta: f64) -> Result<ConvergenceConstants, ParamError> {
    p.validate()?;
    require("eta", eta, eta > 0.0 && eta <= 1.0, "in (0, 1]")?;
    let (lambda, a_c) = lambda_ac(p);
    let mb = moment_bounds(p, lambda, a_c)?;
    let (sigma_h, sigma_v) = sigma_constants(p, mb.zeta, mb.theta, mb.v, eta);
    let eb = coupling_constants(p, lambda, a_c)?;
    Ok(convergence_from_parts(p, eta, sigma_h, sigma_v, &eb))
}

fn convergence_from_parts(p: &ProblemParams, eta: f64, sigma_h: f64, sigma_v: f64, eb: &CouplingConstants) -> ConvergenceConstants {
    let g2 = p.gamma * p.gamma;
    let c1 = Quantity::from_ln(4.0 * g2);
    let spread = sigma_v + sigma_h + eta * sigma_h;
    let c_star_11 = Quantity::from_ln(0.5 * (4.0 * p.l1 * p.l1 * p.c_rho + 4f64.ln() + c1.ln + spread.ln()));
    let c_star_12 = Quantity::from_ln(0.5 * (2.0 * g2 + sigma_h.ln() + eta.ln_1p()));
    let c_star_3 = p.w_rho0.map(|w| eb.c_big_dot.mul(Quantity::from_value(w)).sqrt());
    ConvergenceConstants {
        c1,
        c_star_11,
        c_star_12,
        c_star_1: c_star_11.add(c_star_12),
        c_star_3,
        c_star_4: Quantity::from_ln(eb.c_dot.ln - 2f64.ln()),
    }
}

/// Gap between the Gibbs-measure mean of `U` and its minimum.
pub fn gibbs_gap(p: &ProblemParams) -> f64 {
    let d = p.d();
    d / (2.0 * p.beta) * (E * p.l1_bar / p.a * (p.b * p.beta / d + 1.0)).ln()
}

/// Stability term of the generalization bound; `None` without its inputs.
pub fn generalization_b2(p: &ProblemParams) -> Option<f64> {
    p.generalization.map(|g| {
        4.0 * p.beta * g.c_ls / g.sample_size * (g.l1_prime / p.a * (p.b + p.d() / p.beta) + g.b1)
    })
}

/// All constants for one parameter set and one step size.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsReport {
    pub params: ProblemParams,
    pub eta: f64,
    pub lambda: f64,
    pub a_c: f64,
    pub k: KConstants,
    pub drift: DriftConstants,
    pub eta_max: EtaMax,
    pub moments: MomentBounds,
    pub sigma_h: f64,
    pub sigma_v: f64,
    pub coupling: CouplingConstants,
    pub convergence: ConvergenceConstants,
    /// `max(C_theta_c, C_theta)`.
    pub c_m: f64,
    pub c_bar_1: Quantity,
    pub c_bar_2: Option<Quantity>,
    pub c_bar_3: Option<Quantity>,
    pub gibbs_gap: f64,
    pub b2: Option<f64>,
}

/// One row of the serialized report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub name: &'static str,
    pub value: f64,
    pub log10_value: f64,
    pub formula: String,
}

impl ConstantsReport {
    /// Evaluates every constant; `eta` enters the step-size dependent ones.
    pub fn evaluate(p: &ProblemParams, eta: f64) -> Result<Self, ParamError> {
        p.validate()?;
        require("eta", eta, eta > 0.0 && eta <= 1.0, "in (0, 1]")?;
        let (lambda, a_c) = lambda_ac(p);
        let k = k_constants(p, lambda, a_c)?;
        let drift = kbar_and_d(p, lambda, a_c)?;
        let eta_max = eta_max(p)?;
        let moments = moment_bounds(p, lambda, a_c)?;
        let (sigma_h, sigma_v) = sigma_constants(p, moments.zeta, moments.theta, moments.v, eta);
        let coupling = coupling_constants(p, lambda, a_c)?;
        let convergence = convergence_from_parts(p, eta, sigma_h, sigma_v, &coupling);
        let c_m = moments.theta_c.max(moments.theta);
        let mult = Quantity::from_value(c_m * p.l1_bar + p.h0);
        // The step-size terms pick up a sqrt(d) when converted to function values.
        let root_d = Quantity::from_value(p.d().sqrt());
        Ok(Self {
            params: p.clone(),
            eta,
            lambda,
            a_c,
            k,
            drift,
            eta_max,
            moments,
            sigma_h,
            sigma_v,
            coupling,
            convergence,
            c_m,
            c_bar_1: convergence.c_star_1.mul(mult).mul(root_d),
            c_bar_2: p.c2_star.map(|c| Quantity::from_value(c).mul(mult).mul(root_d)),
            c_bar_3: convergence.c_star_3.map(|c| c.mul(mult)),
            gibbs_gap: gibbs_gap(p),
            b2: generalization_b2(p),
        })
    }

    pub fn entries(&self) -> Vec<ReportEntry> {
        fn plain(name: &'static str, value: f64, formula: &str) -> ReportEntry {
            ReportEntry { name, value, log10_value: value.log10(), formula: formula.to_string() }
        }
        fn logged(name: &'static str, q: Quantity, formula: &str) -> ReportEntry {
            let mut formula = formula.to_string();
            if q.overflowed() {
                formula.push_str(" [overflow: value saturated, log10 exact]");
            } else if q.underflowed() {
                formula.push_str(" [underflow: value saturated, log10 exact]");
            }
            ReportEntry { name, value: q.value, log10_value: q.log10(), formula }
        }
        let c = &self.drift.c_tilde;
        let mut out = vec![
            plain("lambda", self.lambda, "min(1/4, a/(L1_bar + 2 L1_bar b + gamma^2/2))"),
            plain("A_c", self.a_c, "(beta/2)(b + 2 lambda u0 + 2 lambda L1_bar b)"),
            plain("L1_tilde", self.k.l1_tilde, "2 L1^2 C_rho"),
            plain("C1_tilde", self.k.c1_tilde, "4 L2^2 C_rho + 4 H0^2"),
            plain("K1", self.k.k1, "max((L1 C_rho/2 + gamma^2/4 - gamma^2 lambda/4 + gamma/4)/((1-2 lambda)/8), (L1_tilde/2 + gamma L1 C_rho^2/2)/((1-2 lambda) gamma^2/16))"),
            plain("K2", self.k.k2, "(C1_tilde + gamma h0^2)/2"),
            plain("K3", self.k.k3, "(A_c + d) gamma/beta"),
            plain("K1_tilde", self.drift.k1_tilde, "max((L1 C_rho/2 + gamma^2/4 - gamma^2 lambda/4)/((1-2 lambda)/8), L1^2 C_rho/((1-2 lambda) gamma^2/16))"),
            plain("c1_tilde", c[0], "gamma A_c + gamma d"),
            plain("c1_hat", self.drift.c_hat_1, "2 L2 C_rho + 2 H0^2 [suspected typo: L2 appears unsquared]"),
            plain("c2_tilde", c[1], "6 gamma^2 A_c^2"),
            plain("c3_tilde", c[2], "9 gamma^2/8 + 18 (gamma+2)^2 (L1^4 C_rho^4 + L1^4 C_rho)"),
            plain("c3_hat", self.drift.c_hat_3, "18 L1^4 C_rho"),
            plain("c4_tilde", c[3], "6 (1 + lambda gamma - gamma)^2/4"),
            plain("c4_hat", self.drift.c_hat_4, "6 (L1 C_rho/2 + gamma/4 + 1/2)^2"),
            plain("c5_tilde", c[4], "(gamma+2)^2 (30 h0^4 + 120 L2^4 + 120 H0^4 + 30 L2^4 C_rho + 30 H0^4)"),
            plain("c5_hat", self.drift.c_hat_5, "48 (L2^4 + H0^4) [suspected typo: undefined L4 replaced by L2]"),
            plain("c6_tilde", c[5], "gamma^2 d (d+2)"),
            plain("c7_tilde", c[6], "max(10 gamma d/((1-2 lambda)/8), 2 gamma d (6 L1^2 C_rho + 3 gamma^2 + 9 L1^2 C_rho)/((1-2 lambda) gamma^2/16))"),
            plain("c8_tilde", c[7], "30 gamma d L2^2 C_rho + 30 gamma d H0^2"),
            plain("c9_tilde", c[8], "max((c3_tilde + c3_hat)/((1-2 lambda)^2 gamma^4/128), (c4_hat + c4_tilde)/((1-2 lambda)^2/32))"),
            plain("c10_tilde", c[9], "2 c1_tilde + c7_tilde"),
            plain("c11_tilde", c[10], "m0 + 4 (A_c + d)/(gamma lambda)"),
            plain("K2_tilde", self.drift.k2_tilde, "K1_tilde + c9_tilde"),
            plain("K_bar", self.drift.k_bar, "2 K2_tilde"),
            plain("D", self.drift.d_const, "c10_tilde c11_tilde + 2 c1_hat beta + c2_tilde + (c5_hat + c5_tilde) beta^2 + c6_tilde + c8_tilde beta"),
            plain("eta_max", self.eta_max.value, "min(1, 2/(gamma lambda), gamma lambda/(2 K1), K3/K2, gamma lambda/(2 K_bar))"),
            plain("C_theta_c", self.moments.theta_c, "(m0 + (A_c + d)/lambda)/((1-2 lambda) beta gamma^2/8)"),
            plain("C_v_c", self.moments.v_c, "(m0 + (A_c + d)/lambda)/((1-2 lambda) beta/4)"),
            plain("C_theta", self.moments.theta, "(m0 + 4 (A_c + d)/lambda)/((1-2 lambda) beta gamma^2/8)"),
            plain("C_v", self.moments.v, "(m0 + 4 (A_c + d)/lambda)/((1-2 lambda) beta/4)"),
            plain("C_zeta", self.moments.zeta, "(m0 + 8 (A_c + d)/lambda)/((1-2 lambda) beta gamma^2/8)"),
            plain("sigma_H", self.sigma_h, "8 L2^2 sigma_Z (1 + C_zeta)"),
            plain("sigma_V", self.sigma_v, "4 eta gamma^2 C_v + 4 eta (L1_tilde C_theta + C1_tilde) + 4 gamma d/beta"),
            plain("Lambda", self.coupling.big_lambda, "(12/5)(1 + 2 alpha + 2 alpha^2)(d + A_c) L1_bar/(beta gamma^2 lambda (1-2 lambda))"),
            plain("R1", self.coupling.r1, "sqrt(8 Lambda/L1_bar)"),
            logged("c_dot", self.coupling.c_dot, "(gamma/384) min(lambda L1_bar/(beta gamma^2), sqrt(Lambda) exp(-Lambda) L1_bar/(beta gamma^2), sqrt(Lambda) exp(-Lambda))"),
            logged("C_dot", self.coupling.c_big_dot, "2 exp(2 + Lambda)(1+gamma)^2/min(1,alpha)^2 max(1, 4 (1 + 2 alpha + 2 alpha^2)(d + A_c)/(gamma c_dot min(1,R1) beta))"),
            logged("c1", self.convergence.c1, "exp(4 gamma^2)"),
            logged("C_star_11", self.convergence.c_star_11, "sqrt(exp(4 L1^2 C_rho)(4 c1 sigma_V + 4 c1 sigma_H + 4 c1 eta sigma_H))"),
            logged("C_star_12", self.convergence.c_star_12, "sqrt(exp(2 gamma^2) sigma_H (1 + eta))"),
            logged("C_star_1", self.convergence.c_star_1, "C_star_11 + C_star_12"),
        ];
        if let Some(q) = self.convergence.c_star_3 {
            out.push(logged("C_star_3", q, "sqrt(C_dot W_rho0)"));
        }
        out.push(logged("C_star_4", self.convergence.c_star_4, "c_dot/2"));
        out.push(plain("C_m", self.c_m, "max(C_theta_c, C_theta)"));
        out.push(logged("C_bar_1", self.c_bar_1, "C_star_1 d^(1/2) (C_m L1_bar + h0)"));
        if let Some(q) = self.c_bar_2 {
            out.push(logged("C_bar_2", q, "C2_star d^(1/2) (C_m L1_bar + h0)"));
        }
        if let Some(q) = self.c_bar_3 {
            out.push(logged("C_bar_3", q, "C_star_3 (C_m L1_bar + h0)"));
        }
        out.push(plain("gibbs_gap", self.gibbs_gap, "(d/(2 beta)) ln(e L1_bar/a (b beta/d + 1))"));
        if let Some(b2) = self.b2 {
            out.push(plain("B2", b2, "(4 beta c_LS/M_gen)(L1_prime/a (b + d/beta) + B1)"));
        }
        out
    }

    /// Looks up a report row by name.
    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries().into_iter().find(|e| e.name == name).map(|e| e.value)
    }

    /// Writes the report as CSV with columns `name,value,log10_value,formula_ref`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["name", "value", "log10_value", "formula_ref"])?;
        for e in self.entries() {
            wr.write_record([e.name.to_string(), e.value.to_string(), e.log10_value.to_string(), e.formula])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Addends of the bound on `E U(theta_n) - min U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationBound {
    /// `C_bar_1 eta^(1/2)`.
    pub sqrt_term: f64,
    /// `C_bar_2 eta^(1/4)`, present only with a supplied `C2_star`.
    pub quarter_term: Option<f64>,
    /// `C_bar_3 exp(-C_star_4 eta n)`, present only with a supplied `W_rho0`.
    pub transient_term: Option<f64>,
    pub gibbs_gap: f64,
    pub total: f64,
}

impl OptimizationBound {
    /// Sum of the step-size and transient terms, without the Gibbs gap.
    pub fn sampling_part(&self) -> f64 {
        self.sqrt_term + self.quarter_term.unwrap_or(0.0) + self.transient_term.unwrap_or(0.0)
    }
}

/// Bound after `n` iterations at step `eta`, using the report's constants as evaluated.
pub fn optimization_bound(eta: f64, n: f64, report: &ConstantsReport) -> OptimizationBound {
    let sqrt_term = Quantity::from_ln(report.c_bar_1.ln + 0.5 * eta.ln()).value;
    let quarter_term = report.c_bar_2.map(|c| Quantity::from_ln(c.ln + 0.25 * eta.ln()).value);
    let transient_term = report
        .c_bar_3
        .map(|c| Quantity::from_ln(c.ln - report.convergence.c_star_4.value * eta * n).value);
    let gibbs_gap = report.gibbs_gap;
    let total = sqrt_term + quarter_term.unwrap_or(0.0) + transient_term.unwrap_or(0.0) + gibbs_gap;
    OptimizationBound { sqrt_term, quarter_term, transient_term, gibbs_gap, total }
}

/// Three-way split of the expected excess population risk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizationBound {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub total: f64,
}

pub fn generalization_bound(eta: f64, n: f64, report: &ConstantsReport) -> Option<GeneralizationBound> {
    let b2 = report.b2?;
    let b1 = optimization_bound(eta, n, report).sampling_part();
    let b3 = report.gibbs_gap;
    Some(GeneralizationBound { b1, b2, b3, total: b1 + b2 + b3 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lambda_saturates_at_quarter() {
        let p = ProblemParams { a: 100.0, ..ProblemParams::reference() };
        assert_eq!(lambda_ac(&p).0, 0.25);
    }

    #[test]
    fn reference_lambda_and_offset() {
        let (l, ac) = lambda_ac(&ProblemParams::reference());
        assert_relative_eq!(l, 0.2, max_relative = 1e-15);
        assert_relative_eq!(ac, 0.7, max_relative = 1e-15);
        let p = ProblemParams { beta: 2.0, ..ProblemParams::reference() };
        assert_relative_eq!(lambda_ac(&p).1, 1.4, max_relative = 1e-15);
    }

    #[test]
    fn k_constants_reference() {
        let p = ProblemParams::reference();
        let k = k_constants(&p, 0.2, 0.7).unwrap();
        assert_relative_eq!(k.l1_tilde, 2.0);
        assert_relative_eq!(k.c1_tilde, 8.0);
        assert_relative_eq!(k.k1, 24.0, max_relative = 1e-12);
        assert_relative_eq!(k.k2, 5.0);
        assert_relative_eq!(k.k3, 3.4, max_relative = 1e-12);
        let p2 = ProblemParams { beta: 2.0, ..p };
        let (l, ac) = lambda_ac(&p2);
        assert_relative_eq!(k_constants(&p2, l, ac).unwrap().k3, 2.4, max_relative = 1e-12);
    }

    #[test]
    fn no_gradient_noise_floor_without_offsets() {
        let p = ProblemParams { big_h0: 0.0, l2: 0.0, ..ProblemParams::reference() };
        assert_eq!(k_constants(&p, 0.2, 0.7).unwrap().c1_tilde, 0.0);
    }

    #[test]
    fn eta_max_reference_branches() {
        let e = eta_max(&ProblemParams::reference()).unwrap();
        let want = [1.0, 5.0, 0.4 / 48.0, 0.68, 0.4 / (2.0 * 26634.666666666668)];
        for (b, w) in e.branches.iter().zip(want) {
            assert_relative_eq!(*b, w, max_relative = 1e-12);
        }
        assert_relative_eq!(e.value, 7.509e-6, max_relative = 1e-3);
    }

    #[test]
    fn quantity_addition_handles_zero() {
        let z = Quantity::from_value(0.0);
        let q = Quantity::from_value(3.0);
        assert_relative_eq!(z.add(q).value, 3.0, max_relative = 1e-15);
        assert_eq!(z.add(z).value, 0.0);
    }

    #[test]
    fn zero_initial_distance_kills_transient_constant() {
        let p = ProblemParams { w_rho0: Some(0.0), ..ProblemParams::reference() };
        assert_eq!(convergence_constants(&p, 0.01).unwrap().c_star_3.unwrap().value, 0.0);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let p = ProblemParams { a: 0.0, ..ProblemParams::reference() };
        assert!(matches!(p.validate(), Err(ParamError::Invalid { name: "a", .. })));
    }
}
