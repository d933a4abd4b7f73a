use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Configuration form of a nonlinearity, e.g. `{"kind":"power","p":3.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NonlinearitySpec {
    /// `g(t) = |t|^{p−2} t`, `G(t) = |t|^p / p`.
    Power { p: f64 },
    /// Piecewise-linear `g` through the points `(t, g)`, extended linearly
    /// beyond the table. `c1` defaults to `1/p`.
    CustomTable {
        p: f64,
        t: Vec<f64>,
        g: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c1: Option<f64>,
    },
}

#[derive(Debug, Clone)]
enum Kind {
    Power,
    Table(Table),
}

#[derive(Debug, Clone)]
struct Table {
    t: Vec<f64>,
    g: Vec<f64>,
    /// Antiderivative of g at each knot, anchored so that `G(0) = 0`.
    big_g: Vec<f64>,
}

impl Table {
    fn new(t: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        if t.len() < 2 || t.len() != g.len() {
            return Err(Error::InvalidParameter("custom table needs at least two (t, g) pairs of equal length".into()));
        }
        if t.windows(2).any(|w| !(w[0] < w[1])) || t.iter().chain(&g).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("custom table t-values must be finite and strictly increasing".into()));
        }
        let mut table = Self {
            big_g: vec![0.0; t.len()],
            t,
            g,
        };
        // Integrate outward from 0 so that G is accurate near the origin.
        let n = table.t.len();
        for s in 0..n {
            table.big_g[s] = table.from_zero(table.t[s]);
        }
        Ok(table)
    }

    /// `∫_0^x g`, exact for the interpolant: trapezoids between knots.
    fn from_zero(&self, x: f64) -> f64 {
        let (lo, hi) = if x >= 0.0 { (0.0, x) } else { (x, 0.0) };
        let mut cuts = vec![lo];
        cuts.extend(self.t.iter().copied().filter(|&k| lo < k && k < hi));
        cuts.push(hi);
        let area: f64 = cuts.windows(2).map(|w| 0.5 * (self.value(w[0]) + self.value(w[1])) * (w[1] - w[0])).sum();
        if x >= 0.0 {
            area
        } else {
            -area
        }
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.t.len();
        match self.t.partition_point(|&k| k <= x) {
            0 => 0,
            s if s >= n => n - 2,
            s => s - 1,
        }
    }

    fn slope(&self, s: usize) -> f64 {
        (self.g[s + 1] - self.g[s]) / (self.t[s + 1] - self.t[s])
    }

    fn value(&self, x: f64) -> f64 {
        let s = self.segment(x);
        self.g[s] + self.slope(s) * (x - self.t[s])
    }

    fn antiderivative(&self, x: f64) -> f64 {
        let s = self.segment(x);
        if s == self.segment(0.0) {
            let g0 = self.value(0.0);
            return g0 * x + 0.5 * self.slope(s) * x * x;
        }
        // expand from the knot on the origin side of x
        let knot = if x > 0.0 { s } else { s + 1 };
        let h = x - self.t[knot];
        self.big_g[knot] + 0.5 * (self.g[knot] + self.value(x)) * h
    }
}

/// A nonlinearity `g(x, t)` with primitive `G`, growth exponent `p` and the
/// lower-bound constant `c1` in `G ≥ c1 |t|^p`.
#[derive(Debug, Clone)]
pub struct Nonlinearity {
    kind: Kind,
    p: f64,
    c1: f64,
    spec: NonlinearitySpec,
}

impl Nonlinearity {
    pub fn power(p: f64) -> Result<Self> {
        Self::from_spec(&NonlinearitySpec::Power { p })
    }

    pub fn from_spec(spec: &NonlinearitySpec) -> Result<Self> {
        let (kind, p, c1) = match spec {
            NonlinearitySpec::Power { p } => (Kind::Power, *p, 1.0 / *p),
            NonlinearitySpec::CustomTable { p, t, g, c1 } => {
                (Kind::Table(Table::new(t.clone(), g.clone())?), *p, c1.unwrap_or(1.0 / *p))
            }
        };
        if !(p.is_finite() && p > 2.0) {
            return Err(Error::InvalidParameter(format!("exponent p must satisfy p > 2, got {p}")));
        }
        if !(c1.is_finite() && c1 > 0.0) {
            return Err(Error::InvalidParameter(format!("c1 must be positive, got {c1}")));
        }
        Ok(Self {
            kind,
            p,
            c1,
            spec: spec.clone(),
        })
    }

    pub fn spec(&self) -> &NonlinearitySpec {
        &self.spec
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    /// Whether `g(−t) = −g(t)`, so that `−u` solves whenever `u` does.
    pub fn is_odd(&self) -> bool {
        match &self.kind {
            Kind::Power => true,
            Kind::Table(tb) => [0.5, 1.0, 2.0, 10.0]
                .iter()
                .all(|&s| (tb.value(s) + tb.value(-s)).abs() <= 1e-14 * (1.0 + tb.value(s).abs())),
        }
    }

    /// Checks the exponent range `p < 2N/(N−1)`. For `N = 1` the range is
    /// unbounded and a warning is returned instead.
    pub fn check_exponent(&self, dim: usize) -> Result<Option<String>> {
        if dim <= 1 {
            return Ok(Some(format!(
                "N = 1: exponent range check relaxed to p > 2 (p = {}); multiplicity results are not claimed on intervals",
                self.p
            )));
        }
        let n = dim as f64;
        let crit = 2.0 * n / (n - 1.0);
        if self.p >= crit {
            return Err(Error::InvalidParameter(format!(
                "p = {} is not below the critical exponent 2N/(N-1) = {crit}",
                self.p
            )));
        }
        Ok(None)
    }

    #[inline]
    pub fn g(&self, _x: &[f64], t: f64) -> f64 {
        match &self.kind {
            Kind::Power => {
                if self.p == 3.0 {
                    t.abs() * t
                } else {
                    t.abs().powf(self.p - 2.0) * t
                }
            }
            Kind::Table(tb) => tb.value(t),
        }
    }

    /// Primitive `G(x, t) = ∫_0^t g(x, s) ds`.
    #[inline]
    pub fn big_g(&self, _x: &[f64], t: f64) -> f64 {
        match &self.kind {
            Kind::Power => {
                if self.p == 3.0 {
                    t.abs() * t * t / 3.0
                } else {
                    t.abs().powf(self.p) / self.p
                }
            }
            Kind::Table(tb) => tb.antiderivative(t),
        }
    }

    /// `∂g/∂t` where available.
    #[inline]
    pub fn g_t(&self, _x: &[f64], t: f64) -> Option<f64> {
        match &self.kind {
            Kind::Power => Some(if self.p == 3.0 {
                2.0 * t.abs()
            } else {
                (self.p - 1.0) * t.abs().powf(self.p - 2.0)
            }),
            Kind::Table(tb) => Some(tb.slope(tb.segment(t))),
        }
    }
}
