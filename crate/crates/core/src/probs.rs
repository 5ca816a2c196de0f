//! Per-pixel class tables: logits before softmax, probabilities after.

use crate::error::{Error, Result};

macro_rules! pixel_table {
    ($name:ident, $what:literal) => {
        #[doc = concat!("Row-major `[pixels, classes]` table of ", $what, ".")]
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            pixels: usize,
            classes: usize,
            data: Vec<f64>,
        }

        impl $name {
            pub fn new(pixels: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
                if classes == 0 || pixels == 0 {
                    return Err(Error::Shape(format!(
                        "{} needs at least one pixel and class, got {pixels}x{classes}",
                        stringify!($name)
                    )));
                }
                if data.len() != pixels * classes {
                    return Err(Error::Shape(format!(
                        "{} of {pixels}x{classes} given {} values",
                        stringify!($name),
                        data.len()
                    )));
                }
                Ok(Self {
                    pixels,
                    classes,
                    data,
                })
            }

            pub fn pixels(&self) -> usize {
                self.pixels
            }

            pub fn classes(&self) -> usize {
                self.classes
            }

            pub fn data(&self) -> &[f64] {
                &self.data
            }

            pub fn into_data(self) -> Vec<f64> {
                self.data
            }

            pub fn row(&self, i: usize) -> &[f64] {
                &self.data[i * self.classes..(i + 1) * self.classes]
            }

            pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
                self.data.chunks_exact(self.classes)
            }

            pub fn same_shape(&self, other: &Self) -> bool {
                self.pixels == other.pixels && self.classes == other.classes
            }
        }
    };
}

pixel_table!(LogitTensor, "unnormalised class scores");
pixel_table!(ProbTensor, "class probabilities");

impl LogitTensor {
    pub fn softmax(&self) -> ProbTensor {
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.classes) {
            softmax_in_place(row);
        }
        ProbTensor {
            pixels: self.pixels,
            classes: self.classes,
            data,
        }
    }
}

impl ProbTensor {
    /// Checks every row is a distribution within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for (i, row) in self.rows().enumerate() {
            if row.iter().any(|&p| !(p >= -tol) || !p.is_finite()) {
                return Err(Error::Input(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::Input(format!("row {i} sums to {s}")));
            }
        }
        Ok(())
    }

    /// Per-pixel argmax, ties broken toward the smallest class id.
    pub fn argmax(&self) -> Vec<i32> {
        self.rows().map(|r| argmax(r) as i32).collect()
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

/// Writes `log softmax(row)` into `out` and returns nothing; `out.len() == row.len()`.
pub fn log_softmax(row: &[f64], out: &mut [f64]) {
    let lse = log_sum_exp(row);
    for (o, &v) in out.iter_mut().zip(row) {
        *o = v - lse;
    }
}
