//! Independent audit of perturbation certificates.
//!
//! [`audit_certificate`] re-verifies from scratch that a certificate
//! witnesses exact optimality of an iterate for the perturbed problem:
//! stationarity, multiplier signs, both complementarity products, the
//! widened box, the equality constraint, and the advertised caps on the
//! perturbation magnitudes. It shares no code with the certificate
//! constructor — all matrix products are dense loops over the raw entries.

use svmpath::dataset::QMatrix;
use svmpath::perturb::PerturbationCertificate;

/// One audited condition: the measured quantity and the bound it must obey.
#[derive(Debug, Clone)]
pub struct Condition {
    pub name: &'static str,
    pub measured: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Outcome of a full certificate audit.
#[derive(Debug, Clone)]
pub struct AuditReport {
    pub conditions: Vec<Condition>,
    pub pass: bool,
}

impl AuditReport {
    /// Human-readable list of the failed conditions.
    pub fn failures(&self) -> Vec<String> {
        self.conditions
            .iter()
            .filter(|c| !c.ok)
            .map(|c| format!("{}: {:.3e} exceeds {:.3e}", c.name, c.measured, c.bound))
            .collect()
    }
}

/// Verify every optimality condition of the perturbed problem at the
/// iterate `(alpha, alpha0)` with box `[-q, c + q]` and linear term
/// `1 + p`, plus the caps `|p|_inf <= eps1 + 1e-9` and
/// `0 <= q_i <= eps2 + 1e-9`.
#[allow(clippy::too_many_arguments)]
pub fn audit_certificate(
    alpha: &[f64],
    alpha0: f64,
    c: &[f64],
    y: &[f64],
    qm: &QMatrix,
    cert: &PerturbationCertificate,
    eps1: f64,
    eps2: f64,
) -> AuditReport {
    let n = alpha.len();
    assert!(
        c.len() == n && y.len() == n && cert.p.len() == n && cert.q.len() == n,
        "audit inputs must share one dimension"
    );
    let qa: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| qm.get(i, j) * alpha[j]).sum())
        .collect();

    let mut conditions = Vec::new();
    let mut push = |name: &'static str, measured: f64, bound: f64| {
        conditions.push(Condition {
            name,
            measured,
            bound,
            ok: measured <= bound,
        });
    };

    // Stationarity of the perturbed Lagrangian in alpha.
    let mut stat = 0.0f64;
    let mut stat_scale = 1.0f64;
    for i in 0..n {
        let r = -qa[i] + 1.0 + cert.p[i] + cert.xi_minus[i] - cert.xi_plus[i]
            + cert.kappa * y[i];
        stat = stat.max(r.abs());
        stat_scale = stat_scale.max(
            qa[i].abs() + cert.p[i].abs() + cert.xi_minus[i] + cert.xi_plus[i]
                + cert.kappa.abs(),
        );
    }
    push("stationarity", stat, 1e-8 * stat_scale);

    // Multiplier signs.
    let min_xi = (0..n)
        .map(|i| cert.xi_minus[i].min(cert.xi_plus[i]))
        .fold(f64::INFINITY, f64::min);
    push("multiplier sign", -min_xi, 0.0);

    // Complementarity with the widened box faces.
    let mut compl_lo = 0.0f64;
    let mut compl_lo_bound = 0.0f64;
    let mut compl_hi = 0.0f64;
    let mut compl_hi_bound = 0.0f64;
    for i in 0..n {
        let lo = (cert.xi_minus[i] * (alpha[i] + cert.q[i])).abs();
        let lo_b = 1e-9 * (1.0 + cert.xi_minus[i]) * (1.0 + alpha[i].abs() + cert.q[i].abs());
        if lo - lo_b > compl_lo - compl_lo_bound {
            compl_lo = lo;
            compl_lo_bound = lo_b;
        }
        let hi = (cert.xi_plus[i] * (c[i] + cert.q[i] - alpha[i])).abs();
        let hi_b = 1e-9
            * (1.0 + cert.xi_plus[i])
            * (1.0 + c[i].abs() + cert.q[i].abs() + alpha[i].abs());
        if hi - hi_b > compl_hi - compl_hi_bound {
            compl_hi = hi;
            compl_hi_bound = hi_b;
        }
    }
    push("lower complementarity", compl_lo, compl_lo_bound.max(1e-9));
    push("upper complementarity", compl_hi, compl_hi_bound.max(1e-9));

    // Widened box feasibility.
    let mut box_viol = 0.0f64;
    let mut box_bound = 0.0f64;
    for i in 0..n {
        let slack = 1e-12 * (1.0 + c[i].abs() + alpha[i].abs());
        let v = (-cert.q[i] - alpha[i]).max(alpha[i] - c[i] - cert.q[i]);
        if v - slack > box_viol - box_bound {
            box_viol = v;
            box_bound = slack;
        }
    }
    push("box feasibility", box_viol, box_bound.max(1e-12));

    // Equality constraint on the iterate.
    let eq: f64 = (0..n).map(|i| y[i] * alpha[i]).sum();
    let eq_scale: f64 = 1.0 + alpha.iter().map(|a| a.abs()).sum::<f64>();
    push("equality", eq.abs(), 1e-9 * eq_scale);

    // Perturbation magnitude caps.
    let p_norm = cert.p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    push("linear perturbation cap", p_norm, eps1 + 1e-9);
    let q_max = cert.q.iter().fold(0.0f64, |m, &v| m.max(v));
    push("box perturbation cap", q_max, eps2 + 1e-9);
    let q_min = cert.q.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    push("box perturbation sign", -q_min, 0.0);

    // The equality multiplier must be the negated bias.
    push(
        "equality multiplier",
        (cert.kappa + alpha0).abs(),
        1e-12 * (1.0 + alpha0.abs()),
    );

    let pass = conditions.iter().all(|c| c.ok);
    AuditReport { conditions, pass }
}
