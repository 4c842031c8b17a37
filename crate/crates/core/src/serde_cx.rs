//! JSON layout for complex data: a scalar is `[re, im]`, a vector is a list
//! of scalars and a matrix is a list of rows.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{CMat, CVec};

type Pair = [f64; 2];

fn pair(z: &Complex64) -> Pair {
    [z.re, z.im]
}

fn vec_pairs(v: &CVec) -> Vec<Pair> {
    v.iter().map(pair).collect()
}

fn mat_rows(m: &CMat) -> Vec<Vec<Pair>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| pair(&m[(i, j)])).collect())
        .collect()
}

fn from_pairs(p: Vec<Pair>) -> CVec {
    DVector::from_iterator(p.len(), p.into_iter().map(|[re, im]| Complex64::new(re, im)))
}

fn from_rows<E: serde::de::Error>(rows: Vec<Vec<Pair>>) -> Result<CMat, E> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != c) {
        return Err(E::custom("ragged matrix"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| {
        Complex64::new(rows[i][j][0], rows[i][j][1])
    }))
}

pub mod vector {
    use super::*;
    pub fn serialize<S: Serializer>(v: &CVec, s: S) -> Result<S::Ok, S::Error> {
        vec_pairs(v).serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CVec, D::Error> {
        Ok(from_pairs(Vec::<Pair>::deserialize(d)?))
    }
}

pub mod vectors {
    use super::*;
    pub fn serialize<S: Serializer>(v: &[CVec], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(vec_pairs).collect::<Vec<_>>().serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CVec>, D::Error> {
        Ok(Vec::<Vec<Pair>>::deserialize(d)?
            .into_iter()
            .map(from_pairs)
            .collect())
    }
}

pub mod matrix {
    use super::*;
    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        mat_rows(m).serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        from_rows(Vec::<Vec<Pair>>::deserialize(d)?)
    }
}

pub mod matrices {
    use super::*;
    pub fn serialize<S: Serializer>(m: &[CMat], s: S) -> Result<S::Ok, S::Error> {
        m.iter().map(mat_rows).collect::<Vec<_>>().serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
        Vec::<Vec<Vec<Pair>>>::deserialize(d)?
            .into_iter()
            .map(from_rows)
            .collect()
    }
}

/// Non-finite values are written as `null` and read back as `+∞`.
pub mod thresholds {
    use super::*;
    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.is_finite().then_some(*x))
            .collect::<Vec<_>>()
            .serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<Option<f64>>::deserialize(d)?;
        if raw.iter().flatten().any(|x| *x <= 0.0) {
            return Err(D::Error::custom("thresholds must be positive"));
        }
        Ok(raw.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

/// One real that may be `+∞`, written as `null`.
pub mod extended_real {
    use super::*;
    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        v.is_finite().then_some(*v).serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
