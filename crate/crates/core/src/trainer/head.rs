//! Trainable affine map with L2-normalised output.
//!
//! Head file layout (little-endian):
//!
//! ```text
//! magic  "RFHEAD01"        8 bytes
//! dim    u32               4 bytes
//! W      dim*dim f64       row-major
//! b      dim f64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::retrieval::embedding::NORM_EPS;

pub const HEAD_MAGIC: &[u8; 8] = b"RFHEAD01";

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterHead {
    dim: usize,
    /// Row-major `dim × dim`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Result of applying the head to one vector, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct HeadOutput {
    pub out: Vec<f64>,
    /// ‖W·v + b‖.
    pub norm: f64,
    /// True when the norm fell below the threshold and division was skipped.
    pub degenerate: bool,
}

/// Gradient with respect to (W, b), same layout as the head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl HeadGrad {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w: vec![0.0; dim * dim],
            b: vec![0.0; dim],
        }
    }

    pub fn norm(&self) -> f64 {
        self.w.iter().chain(&self.b).map(|g| g * g).sum::<f64>().sqrt()
    }
}

impl AdapterHead {
    pub fn identity(dim: usize) -> Self {
        let mut w = vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        Self {
            dim,
            w,
            b: vec![0.0; dim],
        }
    }

    pub fn from_parts(dim: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if w.len() != dim * dim || b.len() != dim {
            return Err(Error::invalid(format!(
                "head of dim {dim} needs {} weights and {dim} biases, got {} and {}",
                dim * dim,
                w.len(),
                b.len()
            )));
        }
        if w.iter().chain(&b).any(|x| !x.is_finite()) {
            return Err(Error::invalid("head parameters must be finite"));
        }
        Ok(Self { dim, w, b })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_count(&self) -> usize {
        self.dim * (self.dim + 1)
    }

    /// normalize(W·v + b).
    pub fn forward(&self, v: &[f64]) -> HeadOutput {
        debug_assert_eq!(v.len(), self.dim);
        let mut u = self.b.clone();
        for (i, ui) in u.iter_mut().enumerate() {
            let row = &self.w[i * self.dim..(i + 1) * self.dim];
            *ui += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let degenerate = norm < NORM_EPS;
        if !degenerate {
            for x in &mut u {
                *x /= norm;
            }
        }
        HeadOutput {
            out: u,
            norm,
            degenerate,
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.forward(v).out
    }

    /// Adds the contribution of one application to `grad`, given the input
    /// `v`, its forward output and dL/d(output).
    ///
    /// Through the normalisation, dL/du = (g − h·(h·g)) / ‖u‖.
    pub fn backward(&self, v: &[f64], fwd: &HeadOutput, g: &[f64], grad: &mut HeadGrad) {
        let du: Vec<f64> = if fwd.degenerate {
            g.to_vec()
        } else {
            let hg: f64 = fwd.out.iter().zip(g).map(|(h, g)| h * g).sum();
            fwd.out.iter().zip(g).map(|(h, g)| (g - h * hg) / fwd.norm).collect()
        };
        for (i, dui) in du.iter().enumerate() {
            if *dui == 0.0 {
                continue;
            }
            let row = &mut grad.w[i * self.dim..(i + 1) * self.dim];
            for (r, vj) in row.iter_mut().zip(v) {
                *r += dui * vj;
            }
            grad.b[i] += dui;
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let ctx = |e| Error::io("writing head", e);
        w.write_all(HEAD_MAGIC).map_err(ctx)?;
        let dim = u32::try_from(self.dim).map_err(|_| Error::invalid("head dim exceeds u32"))?;
        w.write_all(&dim.to_le_bytes()).map_err(ctx)?;
        for x in self.w.iter().chain(&self.b) {
            w.write_all(&x.to_le_bytes()).map_err(ctx)?;
        }
        w.flush().map_err(ctx)
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let ctx = |e| Error::io("reading head", e);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(ctx)?;
        if &magic != HEAD_MAGIC {
            return Err(Error::invalid("not a head file (bad magic)"));
        }
        let mut dim = [0u8; 4];
        r.read_exact(&mut dim).map_err(ctx)?;
        let dim = u32::from_le_bytes(dim) as usize;
        let mut values = vec![0.0; dim * dim + dim];
        let mut buf = [0u8; 8];
        for x in &mut values {
            r.read_exact(&mut buf).map_err(ctx)?;
            *x = f64::from_le_bytes(buf);
        }
        let b = values.split_off(dim * dim);
        Self::from_parts(dim, values, b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}
