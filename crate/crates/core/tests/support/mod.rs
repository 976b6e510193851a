//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::{E, LN_10};

use kinetic_gibbs::constants::ProblemParams;
use kinetic_gibbs::wasserstein::EmpiricalCloud;
use nalgebra::{Matrix2, Vector2};

/// Name -> (value, log10 value). Huge or tiny constants are built in log space.
pub fn oracle(p: &ProblemParams, eta: f64) -> BTreeMap<&'static str, (f64, f64)> {
    let mut out = BTreeMap::new();
    let mut put = |name: &'static str, v: f64| {
        out.insert(name, (v, v.log10()));
    };
    let (l1, l2, cr, hh, h0, g, be, d) = (p.l1, p.l2, p.c_rho, p.big_h0, p.h0, p.gamma, p.beta, p.dim as f64);
    let lb = p.l1_bar;

    let lam = f64::min(0.25, p.a / (lb + 2.0 * lb * p.b + g * g / 2.0));
    let ac = be / 2.0 * (p.b + 2.0 * lam * p.u0 + 2.0 * lam * lb * p.b);
    put("lambda", lam);
    put("A_c", ac);
    let om = 1.0 - 2.0 * lam;

    let l1t = 2.0 * l1 * l1 * cr;
    let c1t = 4.0 * l2 * l2 * cr + 4.0 * hh * hh;
    let k1a = (l1 * cr / 2.0 + g * g / 4.0 - g * g * lam / 4.0 + g / 4.0) / (om / 8.0);
    let k1b = (l1t / 2.0 + g / 2.0 * l1 * cr * cr) / (om * g * g / 16.0);
    let k1 = k1a.max(k1b);
    let k2 = (c1t + g * h0 * h0) / 2.0;
    let k3 = (ac + d) * g / be;
    put("L1_tilde", l1t);
    put("C1_tilde", c1t);
    put("K1", k1);
    put("K2", k2);
    put("K3", k3);

    let kt1 = f64::max((l1 * cr / 2.0 + g * g / 4.0 - g * g * lam / 4.0) / (om / 8.0), l1 * l1 * cr / (om * g * g / 16.0));
    let ct1 = g * ac + g * d;
    let ch1 = 2.0 * l2 * cr + 2.0 * hh * hh;
    let ct2 = 6.0 * g * g * ac * ac;
    let ct3 = 9.0 * g * g / 8.0 + 18.0 * (g + 2.0).powi(2) * (l1.powi(4) * cr.powi(4) + l1.powi(4) * cr);
    let ch3 = 18.0 * l1.powi(4) * cr;
    let ct4 = 6.0 * (1.0 + lam * g - g).powi(2) / 4.0;
    let ch4 = 6.0 * (l1 * cr / 2.0 + g / 4.0 + 0.5).powi(2);
    let ct5 = (g + 2.0).powi(2) * (30.0 * h0.powi(4) + 120.0 * l2.powi(4) + 120.0 * hh.powi(4) + 30.0 * l2.powi(4) * cr + 30.0 * hh.powi(4));
    let ch5 = 48.0 * (l2.powi(4) + hh.powi(4));
    let ct6 = g * g * d * (d + 2.0);
    let ct7 = f64::max(
        10.0 * g * d / (om / 8.0),
        2.0 * g * d * (6.0 * l1 * l1 * cr + 3.0 * g * g + 9.0 * l1 * l1 * cr) / (om * g * g / 16.0),
    );
    let ct8 = 30.0 * g * d * l2 * l2 * cr + 30.0 * g * d * hh * hh;
    let ct9 = f64::max((ct3 + ch3) / (om * om * g.powi(4) / 128.0), (ch4 + ct4) / (om * om / 32.0));
    let ct10 = 2.0 * ct1 + ct7;
    let ct11 = p.m0 + 4.0 * (ac + d) / (g * lam);
    let kt2 = kt1 + ct9;
    let kbar = 2.0 * kt2;
    let dd = ct10 * ct11 + 2.0 * ch1 * be + ct2 + (ch5 + ct5) * be * be + ct6 + ct8 * be;
    for (n, v) in [
        ("K1_tilde", kt1),
        ("c1_tilde", ct1),
        ("c1_hat", ch1),
        ("c2_tilde", ct2),
        ("c3_tilde", ct3),
        ("c3_hat", ch3),
        ("c4_tilde", ct4),
        ("c4_hat", ch4),
        ("c5_tilde", ct5),
        ("c5_hat", ch5),
        ("c6_tilde", ct6),
        ("c7_tilde", ct7),
        ("c8_tilde", ct8),
        ("c9_tilde", ct9),
        ("c10_tilde", ct10),
        ("c11_tilde", ct11),
        ("K2_tilde", kt2),
        ("K_bar", kbar),
        ("D", dd),
    ] {
        put(n, v);
    }
    let gl = g * lam;
    put("eta_max", [1.0, 2.0 / gl, gl / (2.0 * k1), k3 / k2, gl / (2.0 * kbar)].into_iter().fold(f64::INFINITY, f64::min));

    let num4 = p.m0 + 4.0 * (ac + d) / lam;
    let c_theta_c = (p.m0 + (d + ac) / lam) / (om * be * g * g / 8.0);
    let c_theta = num4 / (om * be * g * g / 8.0);
    let c_v = num4 / (om * be / 4.0);
    let c_zeta = (p.m0 + 8.0 * (d + ac) / lam) / (om * be * g * g / 8.0);
    put("C_theta_c", c_theta_c);
    put("C_v_c", (p.m0 + (d + ac) / lam) / (om * be / 4.0));
    put("C_theta", c_theta);
    put("C_v", c_v);
    put("C_zeta", c_zeta);
    let s_h = 8.0 * l2 * l2 * p.sigma_z * (1.0 + c_zeta);
    let s_v = 4.0 * eta * g * g * c_v + 4.0 * eta * (l1t * c_theta + c1t) + 4.0 * g * d / be;
    put("sigma_H", s_h);
    put("sigma_V", s_v);

    let al = p.alpha;
    let poly = 1.0 + 2.0 * al + 2.0 * al * al;
    let big_l = 12.0 / 5.0 * poly * (d + ac) * lb / (be * g * g * lam * om);
    let r1 = (8.0 * big_l / lb).sqrt();
    put("Lambda", big_l);
    put("R1", r1);
    let ln_cdot = (g / 384.0).ln()
        + [
            (lam * lb / (be * g * g)).ln(),
            0.5 * big_l.ln() - big_l + (lb / (be * g * g)).ln(),
            0.5 * big_l.ln() - big_l,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let ln_inner = (4.0 * poly * (d + ac) / (g * r1.min(1.0) * be)).ln() - ln_cdot;
    let ln_cbig = 2f64.ln() + 2.0 + big_l + 2.0 * (1.0 + g).ln() - 2.0 * al.min(1.0).ln() + ln_inner.max(0.0);
    let mut put_ln = |name: &'static str, ln: f64| {
        out.insert(name, (ln.exp(), ln / LN_10));
    };
    put_ln("c_dot", ln_cdot);
    put_ln("C_dot", ln_cbig);
    let ln_c1 = 4.0 * g * g;
    put_ln("c1", ln_c1);
    let ln_s11 = 0.5 * (4.0 * l1 * l1 * cr + (4.0 * s_v + 4.0 * s_h + 4.0 * eta * s_h).ln() + ln_c1);
    let ln_s12 = 0.5 * (2.0 * g * g + (s_h * (1.0 + eta)).ln());
    put_ln("C_star_11", ln_s11);
    put_ln("C_star_12", ln_s12);
    let ln_s1 = ln_s11.max(ln_s12) + (1.0 + (-(ln_s11 - ln_s12).abs()).exp()).ln();
    put_ln("C_star_1", ln_s1);
    if let Some(w) = p.w_rho0 {
        put_ln("C_star_3", 0.5 * (ln_cbig + w.ln()));
    }
    put_ln("C_star_4", ln_cdot - 2f64.ln());
    let c_m = c_theta_c.max(c_theta);
    let ln_mult = (c_m * lb + h0).ln();
    out.insert("C_m", (c_m, c_m.log10()));
    out.insert("C_bar_1", ((ln_s1 + ln_mult + 0.5 * d.ln()).exp(), (ln_s1 + ln_mult + 0.5 * d.ln()) / LN_10));
    if let Some(c2) = p.c2_star {
        let v = c2 * d.sqrt() * (c_m * lb + h0);
        out.insert("C_bar_2", (v, v.log10()));
    }
    if let Some(w) = p.w_rho0 {
        let ln = 0.5 * (ln_cbig + w.ln()) + ln_mult;
        out.insert("C_bar_3", (ln.exp(), ln / LN_10));
    }
    let gap = d / (2.0 * be) * (E * lb / p.a * (p.b * be / d + 1.0)).ln();
    out.insert("gibbs_gap", (gap, gap.log10()));
    if let Some(gi) = p.generalization {
        let b2 = 4.0 * be * gi.c_ls / gi.sample_size * (gi.l1_prime / p.a * (p.b + d / be) + gi.b1);
        out.insert("B2", (b2, b2.log10()));
    }
    out
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Moment ODE `m' = A m`, `S' = A S + S A^T + Q` integrated by classical RK4.
pub fn brute_force_moments(kappa: f64, gamma: f64, beta: f64, t: f64, m0: Vector2<f64>, s0: Matrix2<f64>, h: f64) -> (Vector2<f64>, Matrix2<f64>) {
    let a = Matrix2::new(0.0, 1.0, -kappa, -gamma);
    let q = Matrix2::new(0.0, 0.0, 0.0, 2.0 * gamma / beta);
    let fm = |m: &Vector2<f64>| a * m;
    let fs = |s: &Matrix2<f64>| a * s + s * a.transpose() + q;
    let steps = (t / h).round() as usize;
    let (mut m, mut s) = (m0, s0);
    for _ in 0..steps {
        let (k1, l1) = (fm(&m), fs(&s));
        let (k2, l2) = (fm(&(m + k1 * (h / 2.0))), fs(&(s + l1 * (h / 2.0))));
        let (k3, l3) = (fm(&(m + k2 * (h / 2.0))), fs(&(s + l2 * (h / 2.0))));
        let (k4, l4) = (fm(&(m + k3 * h)), fs(&(s + l3 * h)));
        m += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        s += (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
    }
    (m, s)
}

pub fn mean_cost(a: &EmpiricalCloud, b: &EmpiricalCloud, perm: &[usize]) -> f64 {
    perm.iter()
        .enumerate()
        .map(|(i, &j)| a.point(i).iter().zip(b.point(j)).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
        .sum::<f64>()
        / perm.len() as f64
}

/// Heap's algorithm over all permutations.
pub fn brute_force_w2(a: &EmpiricalCloud, b: &EmpiricalCloud) -> f64 {
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0; n];
    let mut best = mean_cost(a, b, &perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(mean_cost(a, b, &perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best.sqrt()
}

pub fn sorted_coupling_w2(x: &[f64], y: &[f64]) -> f64 {
    let (mut x, mut y) = (x.to_vec(), y.to_vec());
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    (x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}
