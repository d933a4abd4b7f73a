use std::ops::{Add, Deref, DerefMut, Mul, Neg, Sub};

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A function `u = Σ a_k φ_k` stored by its spectral coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefVec(DVector<f64>);

impl CoefVec {
    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    /// Unit coefficient on mode `k` (zero-based).
    pub fn unit(n: usize, k: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[k] = 1.0;
        Self(v)
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Self(DVector::from_vec(v))
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &CoefVec) -> Self {
        Self(&self.0 + &other.0 * s)
    }
}

impl From<DVector<f64>> for CoefVec {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

impl Deref for CoefVec {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl DerefMut for CoefVec {
    fn deref_mut(&mut self) -> &mut DVector<f64> {
        &mut self.0
    }
}

impl Add for &CoefVec {
    type Output = CoefVec;
    fn add(self, rhs: &CoefVec) -> CoefVec {
        CoefVec(&self.0 + &rhs.0)
    }
}

impl Sub for &CoefVec {
    type Output = CoefVec;
    fn sub(self, rhs: &CoefVec) -> CoefVec {
        CoefVec(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &CoefVec {
    type Output = CoefVec;
    fn mul(self, rhs: f64) -> CoefVec {
        CoefVec(&self.0 * rhs)
    }
}

impl Neg for &CoefVec {
    type Output = CoefVec;
    fn neg(self) -> CoefVec {
        CoefVec(-&self.0)
    }
}

impl Serialize for CoefVec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for CoefVec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Vec::<f64>::deserialize(d).map(CoefVec::from_vec)
    }
}
