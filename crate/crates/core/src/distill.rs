//! Correlation-distillation and Charbonnier losses with analytic gradients.
//!
//! A feature map `C′ × H′ × W′` is projected channel-wise, flattened to one
//! column per pixel, normalized per column and turned into the cosine Gram
//! matrix of all pixel pairs. The distillation loss compares the Gram
//! matrices of two maps through a Charbonnier envelope.

use crate::{Error, Result};

/// Default Charbonnier constant.
pub const EPSILON: f64 = 1e-3;

const MIN_COLUMN_NORM: f64 = 1e-12;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Matrix {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Feature tensor stored channel-major: `values[(c * h + y) * w + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument("feature dims must be >= 1".into()));
        }
        if values.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {channels}x{height}x{width} map",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "feature values must be finite".into(),
            ));
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Symmetric cosine-similarity matrix over pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    n: usize,
    values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Applies `p` (`C′ × C`) at every pixel; column `y * W + x` of the result
/// is the projected channel vector of pixel `(x, y)`.
pub fn project_and_flatten(f: &FeatureMap, p: &Matrix) -> Result<Matrix> {
    if p.cols != f.channels {
        return Err(Error::InvalidArgument(format!(
            "projection has {} columns, feature map has {} channels",
            p.cols, f.channels
        )));
    }
    let n = f.pixels();
    let mut out = vec![0.0; p.rows * n];
    for o in 0..p.rows {
        let row = &mut out[o * n..(o + 1) * n];
        for c in 0..f.channels {
            let w = p.get(o, c);
            if w == 0.0 {
                continue;
            }
            for (dst, v) in row.iter_mut().zip(&f.values[c * n..(c + 1) * n]) {
                *dst += w * v;
            }
        }
    }
    Matrix::new(p.rows, n, out)
}

/// Column-normalized copy of `m` and the original column norms.
fn normalize_columns(m: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let norms: Vec<f64> = (0..m.cols)
        .map(|j| (0..m.rows).map(|i| m.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    if let Some(j) = norms.iter().position(|&n| n <= MIN_COLUMN_NORM) {
        return Err(Error::DegenerateFeature(format!(
            "column {j} has zero norm"
        )));
    }
    let mut data = m.data.clone();
    for i in 0..m.rows {
        for j in 0..m.cols {
            data[i * m.cols + j] /= norms[j];
        }
    }
    Ok((Matrix::new(m.rows, m.cols, data)?, norms))
}

fn gram(n: &Matrix) -> CorrelationMatrix {
    let k = n.cols;
    let mut values = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let v = (0..n.rows).map(|r| n.get(r, i) * n.get(r, j)).sum::<f64>();
            let v = v.clamp(-1.0, 1.0);
            values[i * k + j] = v;
            values[j * k + i] = v;
        }
        values[i * k + i] = 1.0;
    }
    CorrelationMatrix { n: k, values }
}

/// Cosine Gram matrix of the columns of `m`.
pub fn self_correlation(m: &Matrix) -> Result<CorrelationMatrix> {
    Ok(gram(&normalize_columns(m)?.0))
}

fn check_spatial(fs: &FeatureMap, fr: &FeatureMap) -> Result<()> {
    if (fs.height, fs.width) != (fr.height, fr.width) {
        return Err(Error::ShapeMismatch(format!(
            "spatial dims {}x{} vs {}x{}",
            fs.height, fs.width, fr.height, fr.width
        )));
    }
    Ok(())
}

fn frobenius_sq(a: &CorrelationMatrix, b: &CorrelationMatrix) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).powi(2))
        .sum()
}

/// `√(‖C_s − C_r‖²_F + ε²)`.
pub fn cd_loss(
    fs: &FeatureMap,
    fr: &FeatureMap,
    ps: &Matrix,
    pr: &Matrix,
    eps: f64,
) -> Result<f64> {
    check_spatial(fs, fr)?;
    let cs = self_correlation(&project_and_flatten(fs, ps)?)?;
    let cr = self_correlation(&project_and_flatten(fr, pr)?)?;
    Ok(frobenius_sq(&cs, &cr).sqrt().hypot(eps))
}

/// Loss value and gradients with respect to both feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct CdGradient {
    pub loss: f64,
    pub d_student: FeatureMap,
    pub d_reference: FeatureMap,
}

/// Pulls `dL/dC` (symmetric, `N × N`) back to the feature map.
fn backprop(
    f: &FeatureMap,
    p: &Matrix,
    normalized: &Matrix,
    norms: &[f64],
    d_c: &[f64],
) -> FeatureMap {
    let (rows, n) = (normalized.rows, normalized.cols);
    // dL/dN = 2 N G
    let mut d_n = vec![0.0; rows * n];
    for r in 0..rows {
        for j in 0..n {
            d_n[r * n + j] = 2.0
                * (0..n)
                    .map(|k| normalized.get(r, k) * d_c[k * n + j])
                    .sum::<f64>();
        }
    }
    // through m / ‖m‖
    let mut d_m = vec![0.0; rows * n];
    for j in 0..n {
        let dot: f64 = (0..rows)
            .map(|r| normalized.get(r, j) * d_n[r * n + j])
            .sum();
        for r in 0..rows {
            d_m[r * n + j] = (d_n[r * n + j] - normalized.get(r, j) * dot) / norms[j];
        }
    }
    // through the projection
    let mut d_f = vec![0.0; f.values.len()];
    for c in 0..f.channels {
        for o in 0..p.rows {
            let w = p.get(o, c);
            if w == 0.0 {
                continue;
            }
            for j in 0..n {
                d_f[c * n + j] += w * d_m[o * n + j];
            }
        }
    }
    FeatureMap {
        channels: f.channels,
        height: f.height,
        width: f.width,
        values: d_f,
    }
}

pub fn cd_loss_grad(
    fs: &FeatureMap,
    fr: &FeatureMap,
    ps: &Matrix,
    pr: &Matrix,
    eps: f64,
) -> Result<CdGradient> {
    check_spatial(fs, fr)?;
    let (ns, norms_s) = normalize_columns(&project_and_flatten(fs, ps)?)?;
    let (nr, norms_r) = normalize_columns(&project_and_flatten(fr, pr)?)?;
    // unclamped Gram products keep the gradient consistent with the chain rule
    let raw = |m: &Matrix| {
        let k = m.cols;
        let mut v = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                v[i * k + j] = (0..m.rows).map(|r| m.get(r, i) * m.get(r, j)).sum();
            }
        }
        v
    };
    let (cs, cr) = (raw(&ns), raw(&nr));
    let diff: Vec<f64> = cs.iter().zip(&cr).map(|(a, b)| a - b).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>().sqrt().hypot(eps);
    let g: Vec<f64> = diff.iter().map(|d| d / loss).collect();
    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
    Ok(CdGradient {
        loss,
        d_student: backprop(fs, ps, &ns, &norms_s, &g),
        d_reference: backprop(fr, pr, &nr, &norms_r, &neg),
    })
}

/// Mean of `√((aᵢ − bᵢ)² + ε²)`.
pub fn charbonnier(a: &[f64], b: &[f64], eps: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} elements",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty tensors".into()));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y).hypot(eps)).sum();
    Ok(sum / a.len() as f64)
}
