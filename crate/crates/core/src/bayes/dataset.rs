use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Regression records `(x_i, y_i)` with independent Gaussian noise of
/// standard deviation `σ_i` per record.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    responses: Option<DVector<f64>>,
    noise_stddev: DVector<f64>,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        responses: Option<DVector<f64>>,
        noise_stddev: DVector<f64>,
    ) -> Result<Self> {
        let n = features.nrows();
        if noise_stddev.len() != n {
            return Err(Error::DimensionMismatch {
                context: "noise standard deviations",
                expected: n,
                found: noise_stddev.len(),
            });
        }
        if let Some(y) = &responses {
            if y.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "responses",
                    expected: n,
                    found: y.len(),
                });
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("responses must be finite"));
            }
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
        if let Some((index, &value)) = noise_stddev
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.is_finite() && **s > 0.0))
        {
            return Err(Error::NonPositiveNoise { index, value });
        }
        Ok(Self {
            features,
            responses,
            noise_stddev,
        })
    }

    /// A design-only dataset (no responses).
    pub fn design(features: DMatrix<f64>, noise_stddev: DVector<f64>) -> Result<Self> {
        Self::new(features, None, noise_stddev)
    }

    /// Design-only dataset with the same noise level on every row.
    pub fn homoskedastic(features: DMatrix<f64>, sigma: f64) -> Result<Self> {
        let n = features.nrows();
        Self::new(features, None, DVector::from_element(n, sigma))
    }

    /// Builds from row slices; all rows must share the same length.
    pub fn from_rows(rows: &[Vec<f64>], responses: Option<Vec<f64>>, noise: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        Self::from_rows_with_dim(d, rows, responses, noise)
    }

    pub fn from_rows_with_dim(
        d: usize,
        rows: &[Vec<f64>],
        responses: Option<Vec<f64>>,
        noise: Vec<f64>,
    ) -> Result<Self> {
        let mut flat = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "feature row",
                    expected: d,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Self::new(
            DMatrix::from_row_slice(rows.len(), d, &flat),
            responses.map(DVector::from_vec),
            DVector::from_vec(noise),
        )
    }

    pub fn empty(d: usize) -> Self {
        Self {
            features: DMatrix::zeros(0, d),
            responses: Some(DVector::zeros(0)),
            noise_stddev: DVector::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn responses(&self) -> Option<&DVector<f64>> {
        self.responses.as_ref()
    }

    pub fn noise_stddev(&self) -> &DVector<f64> {
        &self.noise_stddev
    }

    /// `diag(σ²)`.
    pub fn noise_covariance(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.noise_stddev.map(|s| s * s))
    }

    /// `Σ^{-1/2} X`, each row divided by its noise standard deviation.
    pub fn normalized_features(&self) -> DMatrix<f64> {
        let mut z = self.features.clone();
        for (i, s) in self.noise_stddev.iter().enumerate() {
            z.row_mut(i).scale_mut(1.0 / s);
        }
        z
    }

    pub fn normalized_responses(&self) -> Option<DVector<f64>> {
        self.responses.as_ref().map(|y| y.component_div(&self.noise_stddev))
    }

    /// `Xᵀ Σ⁻¹ X`.
    pub fn information(&self) -> DMatrix<f64> {
        let z = self.normalized_features();
        z.transpose() * z
    }

    pub fn with_responses(mut self, responses: DVector<f64>) -> Result<Self> {
        if responses.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "responses",
                expected: self.len(),
                found: responses.len(),
            });
        }
        self.responses = Some(responses);
        Ok(self)
    }

    pub fn without_responses(&self) -> Self {
        Self {
            responses: None,
            ..self.clone()
        }
    }

    pub fn with_noise_scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.features.clone(),
            self.responses.clone(),
            &self.noise_stddev * factor,
        )
    }

    /// Records at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let d = self.dim();
        let mut features = DMatrix::zeros(indices.len(), d);
        for (r, &i) in indices.iter().enumerate() {
            features.row_mut(r).copy_from(&self.features.row(i));
        }
        Self {
            features,
            responses: self
                .responses
                .as_ref()
                .map(|y| DVector::from_iterator(indices.len(), indices.iter().map(|&i| y[i]))),
            noise_stddev: DVector::from_iterator(
                indices.len(),
                indices.iter().map(|&i| self.noise_stddev[i]),
            ),
        }
    }

    /// Rows of `self` followed by rows of `other`. Responses survive only
    /// when both sides carry them.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                context: "dataset concatenation",
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let (n1, n2, d) = (self.len(), other.len(), self.dim());
        let mut features = DMatrix::zeros(n1 + n2, d);
        features.rows_mut(0, n1).copy_from(&self.features);
        features.rows_mut(n1, n2).copy_from(&other.features);
        let responses = match (&self.responses, &other.responses) {
            (Some(a), Some(b)) => Some(DVector::from_iterator(
                n1 + n2,
                a.iter().chain(b.iter()).copied(),
            )),
            _ => None,
        };
        let noise = DVector::from_iterator(
            n1 + n2,
            self.noise_stddev.iter().chain(other.noise_stddev.iter()).copied(),
        );
        Ok(Self {
            features,
            responses,
            noise_stddev: noise,
        })
    }

    /// Writes the `x_1,...,x_d,y,sigma` CSV form. Missing responses are
    /// written as empty fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim()).map(|j| format!("x_{j}")).collect();
        header.push("y".into());
        header.push("sigma".into());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.features.row(i).iter().map(|v| fmt_num(*v)).collect();
            rec.push(self.responses.as_ref().map_or(String::new(), |y| fmt_num(y[i])));
            rec.push(fmt_num(self.noise_stddev[i]));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Reads the CSV form. The response column must be either filled on
    /// every row or empty on every row.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = r.headers().map_err(csv_err)?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let k = cols.len();
        if k < 3 || cols[k - 2] != "y" || cols[k - 1] != "sigma" {
            return Err(Error::Parse {
                what: "dataset CSV",
                message: "header must be x_1,...,x_d,y,sigma".into(),
            });
        }
        let d = k - 2;
        for (j, name) in cols[..d].iter().enumerate() {
            if *name != format!("x_{}", j + 1) {
                return Err(Error::Parse {
                    what: "dataset CSV",
                    message: format!("column {} should be x_{}, found {name}", j + 1, j + 1),
                });
            }
        }
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        let mut noise = Vec::new();
        let mut missing_y = 0usize;
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != k {
                return Err(Error::Parse {
                    what: "dataset CSV",
                    message: format!("record {} has {} fields, expected {k}", line + 1, rec.len()),
                });
            }
            let parse = |s: &str, col: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    what: "dataset CSV",
                    message: format!("record {} column {col}: {e}", line + 1),
                })
            };
            let mut row = Vec::with_capacity(d);
            for j in 0..d {
                row.push(parse(&rec[j], cols[j])?);
            }
            rows.push(row);
            if rec[d].is_empty() {
                missing_y += 1;
            } else {
                ys.push(parse(&rec[d], "y")?);
            }
            noise.push(parse(&rec[d + 1], "sigma")?);
        }
        let responses = if missing_y == 0 {
            Some(ys)
        } else if missing_y == rows.len() {
            None
        } else {
            return Err(Error::Parse {
                what: "dataset CSV",
                message: "responses must be present on all rows or on none".into(),
            });
        };
        Self::from_rows_with_dim(d, &rows, responses, noise)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        Self::read_csv(text.as_bytes())
    }
}

fn fmt_num(v: f64) -> String {
    // 17 significant digits round-trip every f64.
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        what: "dataset CSV",
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_zero_noise() {
        let err = Dataset::from_rows(&[vec![1.0, 0.0]], None, vec![0.0]).unwrap_err();
        assert!(matches!(err, Error::NonPositiveNoise { index: 0, .. }));
    }

    #[test]
    fn rejects_response_length_mismatch() {
        let err = Dataset::from_rows(&[vec![1.0], vec![2.0]], Some(vec![1.0]), vec![1.0, 1.0]);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn design_only_csv_has_empty_response_column() {
        let ds = Dataset::from_rows(&[vec![1.0, 3.0]], None, vec![1.0]).unwrap();
        let text = ds.to_csv_string();
        assert!(text.starts_with("x_1,x_2,y,sigma\n"));
        let back = Dataset::from_csv_str(&text).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn mixed_response_presence_rejected() {
        let text = "x_1,y,sigma\n1.0,2.0,1.0\n1.0,,1.0\n";
        assert!(Dataset::from_csv_str(text).is_err());
    }

    #[test]
    fn bad_header_rejected() {
        assert!(Dataset::from_csv_str("a,b,c\n1,2,3\n").is_err());
    }

    #[test]
    fn concat_and_subset() {
        let a = Dataset::from_rows(&[vec![1.0, 0.0]], Some(vec![1.0]), vec![1.0]).unwrap();
        let b = Dataset::from_rows(&[vec![0.0, 1.0]], Some(vec![2.0]), vec![2.0]).unwrap();
        let ab = a.concat(&b).unwrap();
        assert_eq!(ab.len(), 2);
        assert_eq!(ab.subset(&[1]), b);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(
            rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 0..8),
            seed in 0.001f64..50.0,
        ) {
            let n = rows.len();
            let y: Vec<f64> = (0..n).map(|i| i as f64 * seed - 1.0 / seed).collect();
            let noise: Vec<f64> = (0..n).map(|i| seed + i as f64).collect();
            let ds = Dataset::from_rows_with_dim(3, &rows, Some(y), noise).unwrap();
            let back = Dataset::from_csv_str(&ds.to_csv_string()).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
