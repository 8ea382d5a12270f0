//! JSON and CSV formats for elements, operators and reports.
//!
//! An element is `{"space": {...}, "coords": [...]}`; quantum elements may
//! instead give `"matrix_re"`/`"matrix_im"`. An operator is
//! `{"space": {...}, "matrix": [[...]]}` with row-major rows, or for quantum
//! spaces `{"space": {...}, "kraus": [{"re": [[...]], "im": [[...]]}, ...]}`.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::operators::{validate_markov, MarkovOperator, Violation, DEFAULT_VALIDATION_SAMPLES};
use crate::spaces::hermitian::{CMatrix, C64};
use crate::spaces::{Element, SpaceDescriptor};

#[derive(Serialize, Deserialize)]
struct ElementRepr {
    space: SpaceDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coords: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix_re: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix_im: Option<Vec<Vec<f64>>>,
}

impl Serialize for Element {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ElementRepr {
            space: self.space(),
            coords: Some(self.coords().as_slice().to_vec()),
            matrix_re: None,
            matrix_im: None,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Element {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = ElementRepr::deserialize(d)?;
        element_from_repr(repr).map_err(D::Error::custom)
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Malformed(format!("{what} has ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn complex_matrix(re: &[Vec<f64>], im: Option<&[Vec<f64>]>, what: &str) -> Result<CMatrix> {
    let re = rows_to_matrix(re, what)?;
    let im = match im {
        Some(rows) => rows_to_matrix(rows, what)?,
        None => DMatrix::zeros(re.nrows(), re.ncols()),
    };
    if re.shape() != im.shape() {
        return Err(Error::Malformed(format!("{what}: real and imaginary parts differ in shape")));
    }
    Ok(CMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)])))
}

fn element_from_repr(repr: ElementRepr) -> Result<Element> {
    repr.space.validate()?;
    match (repr.coords, repr.matrix_re) {
        (Some(c), None) => Element::new(repr.space, DVector::from_vec(c)),
        (None, Some(re)) => {
            if !matches!(repr.space, SpaceDescriptor::Quantum { .. }) {
                return Err(Error::Malformed("matrix_re/matrix_im need a quantum space".into()));
            }
            let h = complex_matrix(&re, repr.matrix_im.as_deref(), "element matrix")?;
            Element::from_hermitian(repr.space, &h)
        }
        _ => Err(Error::Malformed("element needs exactly one of coords or matrix_re".into())),
    }
}

#[derive(Deserialize)]
struct KrausRepr {
    re: Vec<Vec<f64>>,
    #[serde(default)]
    im: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorIn {
    space: SpaceDescriptor,
    #[serde(default)]
    matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    kraus: Option<Vec<KrausRepr>>,
    // accepted and recomputed on read
    #[serde(default)]
    #[allow(dead_code)]
    validated: Option<bool>,
    #[serde(default)]
    #[allow(dead_code)]
    validation_report: Option<serde_json::Value>,
    #[serde(default)]
    #[allow(dead_code)]
    cp_certified: Option<bool>,
}

#[derive(Serialize)]
struct OperatorOut<'a> {
    space: SpaceDescriptor,
    matrix: Vec<Vec<f64>>,
    validated: bool,
    validation_report: &'a [Violation],
    cp_certified: bool,
}

impl Serialize for MarkovOperator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OperatorOut {
            space: self.space(),
            matrix: matrix_to_rows(self.matrix()),
            validated: self.validated(),
            validation_report: self.validation_report(),
            cp_certified: self.cp_certified(),
        }
        .serialize(s)
    }
}

fn malformed(e: serde_json::Error) -> Error {
    Error::Malformed(e.to_string())
}

pub fn parse_element(text: &str) -> Result<Element> {
    let repr: ElementRepr = serde_json::from_str(text).map_err(malformed)?;
    element_from_repr(repr)
}

/// Parses and validates an operator. Cone preservation off the classical
/// space is checked on `samples` sampled extreme points drawn from `seed`.
pub fn parse_operator_with(text: &str, samples: usize, seed: u64) -> Result<MarkovOperator> {
    let repr: OperatorIn = serde_json::from_str(text).map_err(malformed)?;
    repr.space.validate()?;
    match (repr.matrix, repr.kraus) {
        (Some(rows), None) => validate_markov(rows_to_matrix(&rows, "operator matrix")?, repr.space, samples, seed),
        (None, Some(ks)) => {
            let kraus = ks
                .iter()
                .map(|k| complex_matrix(&k.re, k.im.as_deref(), "Kraus operator"))
                .collect::<Result<Vec<_>>>()?;
            MarkovOperator::from_kraus(repr.space, &kraus)
        }
        _ => Err(Error::Malformed("operator needs exactly one of matrix or kraus".into())),
    }
}

pub fn parse_operator(text: &str) -> Result<MarkovOperator> {
    parse_operator_with(text, DEFAULT_VALIDATION_SAMPLES, 0)
}

pub fn read_operator(path: impl AsRef<Path>) -> Result<MarkovOperator> {
    parse_operator(&fs::read_to_string(path)?)
}

pub fn read_element(path: impl AsRef<Path>) -> Result<Element> {
    parse_element(&fs::read_to_string(path)?)
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_json(value)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

/// CSV text from serializable rows, header taken from the field names.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Malformed(e.to_string()))
}
