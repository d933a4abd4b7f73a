//! Sampling audit of the growth and sign hypotheses on `g`.

use serde::{Deserialize, Serialize};

use super::Nonlinearity;

/// Where the hypotheses are sampled: a log-spaced t-grid on `[t_min, t_max]`
/// (both signs) at each of the x-samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub points_per_sign: usize,
    pub x_samples: Vec<Vec<f64>>,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            t_min: 1e-6,
            t_max: 1e3,
            points_per_sign: 181,
            x_samples: vec![vec![0.5]],
        }
    }
}

impl SampleSpec {
    pub fn t_grid(&self) -> Vec<f64> {
        let n = self.points_per_sign.max(2);
        let (lo, hi) = (self.t_min.ln(), self.t_max.ln());
        let pos: Vec<f64> = (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect();
        pos.iter().rev().map(|t| -t).chain(pos.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    /// Worst observed margin; negative values indicate violation except for
    /// the ratio-type checks documented in `detail`.
    pub worst_margin: f64,
    pub worst_t: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub p: f64,
    pub c1: f64,
    /// Least-squares fit of `|g| ≈ a1 + a2 |t|^{p−1}` over the sample.
    pub fitted_a1: f64,
    pub fitted_a2: f64,
    pub checks: Vec<HypothesisCheck>,
    pub all_passed: bool,
}

const REL_SLACK: f64 = 1e-12;
/// Allowed growth of `|g| / (1 + |t|^{p−1})` over the top decade.
const GROWTH_SLACK: f64 = 1e-2;

pub fn validate_hypotheses(nl: &Nonlinearity, spec: &SampleSpec) -> HypothesisReport {
    let p = nl.p();
    let c1 = nl.c1();
    let ts = spec.t_grid();
    let xs: Vec<Vec<f64>> = if spec.x_samples.is_empty() { vec![vec![0.5]] } else { spec.x_samples.clone() };
    let mut checks = Vec::new();

    // G(x, 0) = 0
    let g0 = xs.iter().map(|x| nl.big_g(x, 0.0).abs()).fold(0.0, f64::max);
    checks.push(HypothesisCheck {
        name: "G(x,0)=0".into(),
        passed: g0 == 0.0,
        worst_margin: -g0,
        worst_t: 0.0,
        detail: "max |G(x,0)| over x-samples".into(),
    });

    // (g2): |g| ≤ a1 + a2|t|^{p−1}. Existential constants; audit the growth
    // rate of |g| / (1 + |t|^{p−1}) over the top decade of |t|.
    let ratio = |x: &[f64], t: f64| nl.g(x, t).abs() / (1.0 + t.abs().powf(p - 1.0));
    let mut growth: f64 = f64::NEG_INFINITY;
    let mut growth_t = spec.t_max;
    for x in &xs {
        for &t in &[spec.t_max, -spec.t_max] {
            let r_hi = ratio(x, t);
            let r_lo = ratio(x, t / 10.0);
            let g = if r_lo > 0.0 { r_hi / r_lo - 1.0 } else if r_hi > 0.0 { f64::INFINITY } else { 0.0 };
            if g > growth {
                growth = g;
                growth_t = t;
            }
        }
    }
    checks.push(HypothesisCheck {
        name: "g2".into(),
        passed: growth <= GROWTH_SLACK,
        worst_margin: GROWTH_SLACK - growth,
        worst_t: growth_t,
        detail: format!("relative growth of |g|/(1+|t|^(p-1)) over the top decade: {growth:e}"),
    });

    // (g3): g(x,t)/|t| → 0 as t → 0.
    let mut g3_ok = true;
    let mut g3_worst: f64 = 0.0;
    for x in &xs {
        for &t in &[spec.t_min, -spec.t_min] {
            let small = (nl.g(x, t) / t).abs();
            let larger = (nl.g(x, 10.0 * t) / (10.0 * t)).abs();
            g3_worst = g3_worst.max(small);
            if !(small <= 1e-12 || small < larger * (1.0 - 1e-9)) {
                g3_ok = false;
            }
        }
    }
    checks.push(HypothesisCheck {
        name: "g3".into(),
        passed: g3_ok,
        worst_margin: -g3_worst,
        worst_t: spec.t_min,
        detail: format!("|g/t| at |t| = {:e} must vanish or decrease toward 0", spec.t_min),
    });

    // (g4): 0 < pG ≤ g t for t ≠ 0.
    let mut g4_margin = f64::INFINITY;
    let mut g4_t = 0.0;
    for x in &xs {
        for &t in &ts {
            let pg = p * nl.big_g(x, t);
            let gt = nl.g(x, t) * t;
            let scale = gt.abs().max(pg.abs()).max(f64::MIN_POSITIVE);
            let m = (pg / scale).min((gt - pg) / scale + REL_SLACK);
            if m < g4_margin {
                g4_margin = m;
                g4_t = t;
            }
        }
    }
    checks.push(HypothesisCheck {
        name: "g4".into(),
        passed: g4_margin > 0.0,
        worst_margin: g4_margin,
        worst_t: g4_t,
        detail: "min over samples of min(pG, gt - pG) / max(|gt|, |pG|)".into(),
    });

    // (g5): G ≥ c1 |t|^p.
    let mut g5_margin = f64::INFINITY;
    let mut g5_t = 0.0;
    for x in &xs {
        for &t in &ts {
            let bound = c1 * t.abs().powf(p);
            let m = (nl.big_g(x, t) - bound) / bound;
            if m < g5_margin {
                g5_margin = m;
                g5_t = t;
            }
        }
    }
    checks.push(HypothesisCheck {
        name: "g5".into(),
        passed: g5_margin >= -REL_SLACK,
        worst_margin: g5_margin,
        worst_t: g5_t,
        detail: format!("min over samples of (G - c1|t|^p) / (c1|t|^p), c1 = {c1}"),
    });

    let (fitted_a1, fitted_a2) = fit_growth(nl, &xs, &ts);
    let all_passed = checks.iter().all(|c| c.passed);
    HypothesisReport {
        p,
        c1,
        fitted_a1,
        fitted_a2,
        checks,
        all_passed,
    }
}

/// Ordinary least squares for `|g| ≈ a1 + a2 |t|^{p−1}`.
fn fit_growth(nl: &Nonlinearity, xs: &[Vec<f64>], ts: &[f64]) -> (f64, f64) {
    let p = nl.p();
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for x in xs {
        for &t in ts {
            let a = t.abs().powf(p - 1.0);
            let y = nl.g(x, t).abs();
            n += 1.0;
            sx += a;
            sy += y;
            sxx += a * a;
            sxy += a * y;
        }
    }
    let det = n * sxx - sx * sx;
    if det.abs() < f64::MIN_POSITIVE {
        return (sy / n.max(1.0), 0.0);
    }
    ((sxx * sy - sx * sxy) / det, (n * sxy - sx * sy) / det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::NonlinearitySpec;

    fn table(g: impl Fn(f64) -> f64) -> Nonlinearity {
        let t = vec![-1e4, 0.0, 1e4];
        let gv = t.iter().map(|&x| g(x)).collect();
        Nonlinearity::from_spec(&NonlinearitySpec::CustomTable { p: 3.0, t, g: gv, c1: None }).unwrap()
    }

    fn check<'a>(r: &'a HypothesisReport, name: &str) -> &'a HypothesisCheck {
        r.checks.iter().find(|c| c.name == name).unwrap()
    }

    #[test]
    fn power_passes_everything() {
        let nl = Nonlinearity::power(3.0).unwrap();
        let r = validate_hypotheses(&nl, &SampleSpec::default());
        assert!(r.all_passed, "{r:#?}");
        assert!((r.c1 - 1.0 / 3.0).abs() < 1e-15);
        // pG = g t exactly for the power law
        assert!(check(&r, "g4").worst_margin < 1e-11);
        assert!((r.fitted_a2 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn linear_g_fails_g5_at_large_t() {
        let r = validate_hypotheses(&table(|t| t), &SampleSpec::default());
        let g5 = check(&r, "g5");
        assert!(!g5.passed);
        assert!(g5.worst_t.abs() > 1.5);
        assert!(!r.all_passed);
    }

    #[test]
    fn zero_g_fails_g4() {
        let r = validate_hypotheses(&table(|_| 0.0), &SampleSpec::default());
        assert!(!check(&r, "g4").passed);
        assert!(check(&r, "g3").passed);
    }

    #[test]
    fn supercritical_growth_is_flagged() {
        let nl = Nonlinearity::power(3.0).unwrap();
        let steep = Nonlinearity::power(4.0).unwrap();
        let spec = SampleSpec::default();
        assert!(check(&validate_hypotheses(&nl, &spec), "g2").passed);
        // declared p = 3 but g grows like |t|^3
        let t: Vec<f64> = (-60..=60).map(|i| i as f64 * 20.0).collect();
        let g: Vec<f64> = t.iter().map(|&x| steep.g(&[0.0], x)).collect();
        let fake = Nonlinearity::from_spec(&NonlinearitySpec::CustomTable { p: 3.0, t, g, c1: None }).unwrap();
        assert!(!check(&validate_hypotheses(&fake, &spec), "g2").passed);
    }
}
