//! Transfer functions sampled on the uniform unit-circle grid
//! `z_k = exp(j 2π k / N)`, `k = 0..N`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Grid point `k` of an `n`-point grid.
pub fn grid_point(k: usize, n: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64)
}

pub fn grid_omega(k: usize, n: usize) -> f64 {
    2.0 * PI * k as f64 / n as f64
}

pub fn check_grid_size(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::invalid(format!("grid size {n} is not a power of two >= 2")));
    }
    Ok(())
}

/// Values of a matrix-valued function on the unit-circle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSamples {
    label: String,
    rows: usize,
    cols: usize,
    values: Vec<CMat>,
}

impl GridSamples {
    pub fn new(label: impl Into<String>, values: Vec<CMat>) -> Result<Self> {
        check_grid_size(values.len())?;
        let (rows, cols) = values[0].shape();
        if let Some(k) = values.iter().position(|v| v.shape() != (rows, cols)) {
            return Err(Error::dim(format!(
                "sample {k} has shape {:?}, expected {:?}",
                values[k].shape(),
                (rows, cols)
            )));
        }
        Ok(Self { label: label.into(), rows, cols, values })
    }

    /// Builds samples from `f(k, z_k)`.
    pub fn from_fn<F>(label: impl Into<String>, n: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, Complex64) -> Result<CMat>,
    {
        check_grid_size(n)?;
        let values = (0..n).map(|k| f(k, grid_point(k, n))).collect::<Result<Vec<_>>>()?;
        Self::new(label, values)
    }

    pub fn constant(label: impl Into<String>, n: usize, value: CMat) -> Result<Self> {
        Self::from_fn(label, n, |_, _| Ok(value.clone()))
    }

    pub fn scalar_fn<F>(label: impl Into<String>, n: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(Complex64) -> Complex64,
    {
        Self::from_fn(label, n, |_, z| Ok(CMat::from_element(1, 1, f(z))))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn z(&self, k: usize) -> Complex64 {
        grid_point(k, self.len())
    }

    pub fn values(&self) -> &[CMat] {
        &self.values
    }

    pub fn into_values(self) -> Vec<CMat> {
        self.values
    }

    pub fn get(&self, k: usize) -> &CMat {
        &self.values[k]
    }

    /// Entry (0,0) of sample `k`; the natural accessor for scalar functions.
    pub fn scalar(&self, k: usize) -> Complex64 {
        self.values[k][(0, 0)]
    }

    pub fn scalars(&self) -> Vec<Complex64> {
        self.values.iter().map(|v| v[(0, 0)]).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CMat> {
        self.values.iter()
    }

    pub fn map<F>(&self, label: impl Into<String>, f: F) -> Result<Self>
    where
        F: FnMut(&CMat) -> CMat,
    {
        Self::new(label, self.values.iter().map(f).collect())
    }

    /// Pointwise combination of two sample sets on the same grid.
    pub fn zip_with<F>(&self, other: &GridSamples, label: impl Into<String>, mut f: F) -> Result<Self>
    where
        F: FnMut(&CMat, &CMat) -> CMat,
    {
        self.check_same_grid(other)?;
        Self::new(
            label,
            self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect(),
        )
    }

    pub fn check_same_grid(&self, other: &GridSamples) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::dim(format!(
                "grid mismatch: {} ({} samples) vs {} ({} samples)",
                self.label,
                self.len(),
                other.label,
                other.len()
            )));
        }
        Ok(())
    }

    /// max_k ‖self(z_k) − other(z_k)‖ (Frobenius).
    pub fn max_distance(&self, other: &GridSamples) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest violation of `value(N−k) = conj(value(k))`.
    pub fn conjugate_symmetry_residual(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|k| (&self.values[(n - k) % n] - self.values[k].map(|v| v.conj())).norm())
            .fold(0.0, f64::max)
    }

    /// CSV with header `k,omega,re(v_11),im(v_11),...`, entries row-major.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = String::from("k,omega");
        for i in 1..=self.rows {
            for j in 1..=self.cols {
                write!(header, ",re(v_{i}{j}),im(v_{i}{j})").unwrap();
            }
        }
        writeln!(out, "{header}")?;
        let n = self.len();
        for (k, v) in self.values.iter().enumerate() {
            let mut line = format!("{k},{:.17e}", grid_omega(k, n));
            for i in 0..self.rows {
                for j in 0..self.cols {
                    let c = v[(i, j)];
                    write!(line, ",{:.17e},{:.17e}", c.re, c.im).unwrap();
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Reads the format written by [`GridSamples::write_csv`].
    pub fn read_csv<R: BufRead>(label: impl Into<String>, input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty CSV".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        let fields: Vec<&str> = header.split(',').map(str::trim).collect();
        if fields.len() < 4 || fields[0] != "k" || fields[1] != "omega" || (fields.len() - 2) % 2 != 0 {
            return Err(Error::Parse(format!("unexpected CSV header '{header}'")));
        }
        let (mut rows, mut cols) = (0usize, 0usize);
        for f in fields[2..].iter().step_by(2) {
            let idx = f
                .strip_prefix("re(v_")
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(|| Error::Parse(format!("bad column '{f}'")))?;
            let (i, j) = split_index(idx).ok_or_else(|| Error::Parse(format!("bad column '{f}'")))?;
            rows = rows.max(i);
            cols = cols.max(j);
        }
        if rows * cols * 2 != fields.len() - 2 {
            return Err(Error::Parse("CSV columns do not form a full matrix".into()));
        }
        let mut values = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let nums = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
            if nums.len() != fields.len() {
                return Err(Error::Parse(format!("line {}: wrong field count", lineno + 2)));
            }
            if nums[0] as usize != values.len() {
                return Err(Error::Parse(format!("line {}: samples out of order", lineno + 2)));
            }
            let m = CMat::from_fn(rows, cols, |i, j| {
                let at = 2 + 2 * (i * cols + j);
                Complex64::new(nums[at], nums[at + 1])
            });
            values.push(m);
        }
        Self::new(label, values)
    }
}

fn split_index(s: &str) -> Option<(usize, usize)> {
    // Indices are single digits for the small shapes handled here; allow
    // an explicit separator for larger ones.
    if let Some((a, b)) = s.split_once('_') {
        return Some((a.parse().ok()?, b.parse().ok()?));
    }
    if s.len() == 2 {
        let a = s[..1].parse().ok()?;
        let b = s[1..].parse().ok()?;
        return Some((a, b));
    }
    None
}
