//! JSON instance files.
//!
//! ```text
//! {
//!   "kind": "least_squares" | "logistic",
//!   "n": 2, "d": 3, "L": 1.0, "mu": 0.1,
//!   "regularizer": {"kind": "none"} | {"kind": "l1", "lambda": 0.1} | {"kind": "l2sq", "lambda": 0.1},
//!   "a": [[[row], ...], ...], "b": [[...], ...],          // least_squares, k x d per component
//!   "features": [[row], ...], "labels": [...], "lambda": 0.0,  // logistic
//!   "certificate": {"v": [...], "t": [[...]], "delta": [[...]], "beta": 0.1, "alpha_used": 0.5}
//! }
//! ```
//!
//! Matrices are row-major nested arrays; `certificate` is optional.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::HeterogeneityCertificate;
use crate::error::{invalid, Result};
use crate::model::{Components, ProblemInstance, Regularizer, Vector};

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Kind {
    LeastSquares,
    Logistic,
}

#[derive(Serialize, Deserialize)]
struct CertificateFile {
    v: Vec<f64>,
    t: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    beta: f64,
    alpha_used: f64,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    kind: Kind,
    n: usize,
    d: usize,
    #[serde(rename = "L")]
    l_smooth: f64,
    mu: f64,
    regularizer: Regularizer,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    a: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    b: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    features: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    labels: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    certificate: Option<CertificateFile>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(invalid(format!("{what}: every row needs {cols} entries")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn vec_of(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Serializes an instance, with its certificate when given.
pub fn instance_to_json(p: &ProblemInstance, cert: Option<&HeterogeneityCertificate>) -> Result<String> {
    let mut file = InstanceFile {
        kind: Kind::LeastSquares,
        n: p.n(),
        d: p.d(),
        l_smooth: p.l_smooth(),
        mu: p.mu(),
        regularizer: p.regularizer(),
        a: None,
        b: None,
        features: None,
        labels: None,
        lambda: None,
        certificate: cert.map(|c| CertificateFile {
            v: vec_of(&c.v),
            t: c.t.iter().map(vec_of).collect(),
            delta: c.delta.iter().map(vec_of).collect(),
            beta: c.beta,
            alpha_used: c.alpha_used,
        }),
    };
    match p.components() {
        Components::LeastSquares { a, b } => {
            file.a = Some(a.iter().map(rows_of).collect());
            file.b = Some(b.iter().map(vec_of).collect());
        }
        Components::Logistic { features, labels, lambda } => {
            file.kind = Kind::Logistic;
            file.features = Some(rows_of(features));
            file.labels = Some(labels.clone());
            file.lambda = Some(*lambda);
        }
    }
    Ok(serde_json::to_string(&file)?)
}

pub fn instance_from_json(text: &str) -> Result<(ProblemInstance, Option<HeterogeneityCertificate>)> {
    let file: InstanceFile = serde_json::from_str(text)?;
    let d = file.d;
    let components = match file.kind {
        Kind::LeastSquares => {
            let a = file.a.ok_or_else(|| invalid("least_squares instance needs \"a\""))?;
            let b = file.b.ok_or_else(|| invalid("least_squares instance needs \"b\""))?;
            Components::LeastSquares {
                a: a.iter().map(|m| matrix_of(m, d, "a")).collect::<Result<_>>()?,
                b: b.into_iter().map(Vector::from_vec).collect(),
            }
        }
        Kind::Logistic => Components::Logistic {
            features: matrix_of(
                &file.features.ok_or_else(|| invalid("logistic instance needs \"features\""))?,
                d,
                "features",
            )?,
            labels: file.labels.ok_or_else(|| invalid("logistic instance needs \"labels\""))?,
            lambda: file.lambda.unwrap_or(0.0),
        },
    };
    let p = ProblemInstance::new(components, file.regularizer, file.l_smooth, file.mu)?;
    if p.n() != file.n || p.d() != file.d {
        return Err(invalid(format!(
            "declared shape ({}, {}) does not match data ({}, {})",
            file.n,
            file.d,
            p.n(),
            p.d()
        )));
    }
    let cert = file.certificate.map(|c| HeterogeneityCertificate {
        v: Vector::from_vec(c.v),
        t: c.t.into_iter().map(Vector::from_vec).collect(),
        delta: c.delta.into_iter().map(Vector::from_vec).collect(),
        beta: c.beta,
        alpha_used: c.alpha_used,
    });
    if let Some(c) = &cert {
        if c.t.len() != p.n() || c.delta.len() != p.n() || c.v.len() != p.d() {
            return Err(invalid("certificate shape does not match the instance"));
        }
    }
    Ok((p, cert))
}

pub fn save_instance(
    path: impl AsRef<Path>,
    p: &ProblemInstance,
    cert: Option<&HeterogeneityCertificate>,
) -> Result<()> {
    std::fs::write(path, instance_to_json(p, cert)?)?;
    Ok(())
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<(ProblemInstance, Option<HeterogeneityCertificate>)> {
    instance_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ZTable;
    use crate::problems::{gen_heterogeneous, gen_least_squares, gen_logistic, synthetic_classification};

    #[test]
    fn least_squares_round_trip() {
        let p = gen_least_squares(1, 3, 4, 5, 2.0, 0.1).unwrap().with_regularizer(Regularizer::L1(0.3)).unwrap();
        let (q, c) = instance_from_json(&instance_to_json(&p, None).unwrap()).unwrap();
        assert_eq!(p, q);
        assert!(c.is_none());
    }

    #[test]
    fn logistic_and_certificate_round_trip() {
        let (w, y) = synthetic_classification(2, 10, 3, 1.0).unwrap();
        let p = gen_logistic(w, y, 0.01).unwrap();
        let (q, _) = instance_from_json(&instance_to_json(&p, None).unwrap()).unwrap();
        assert_eq!(p, q);

        let z0 = ZTable::zeros(4, 2);
        let (h, cert) = gen_heterogeneous(3, 4, 2, 2, 0.1, 1.0, 0.5, 0.2, &z0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        save_instance(&path, &h, Some(&cert)).unwrap();
        let (h2, c2) = load_instance(&path).unwrap();
        assert_eq!(h, h2);
        assert_eq!(c2.unwrap(), cert);
    }

    #[test]
    fn rejects_inconsistent_files() {
        let p = gen_least_squares(1, 2, 2, 2, 1.0, 0.1).unwrap();
        let json = instance_to_json(&p, None).unwrap().replace("\"n\":2", "\"n\":3");
        assert!(instance_from_json(&json).is_err());
        assert!(instance_from_json("{\"kind\":\"logistic\"}").is_err());
        assert!(instance_from_json("not json").is_err());
    }
}
