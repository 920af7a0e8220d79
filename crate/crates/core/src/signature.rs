//! Truncated signatures of piecewise-linear paths.
//!
//! A path's signature is the sequence of its iterated integrals. For a
//! piecewise-linear path the signature of each segment is the tensor
//! exponential of the segment increment (level i equals ΔX^⊗i / i!), and the
//! signature of the whole path is the Chen product of the segment signatures,
//! so no quadrature is involved.
//!
//! Coefficients are stored level-major with lexicographic multi-index order
//! inside each level: `(1), (2), …, (d), (1,1), (1,2), …`. The constant
//! coefficient 1 sits at position 0 and is dropped by [`TruncatedSignature::features`]
//! when signatures are used as regression features.

use crate::error::{Error, Result};
use crate::paths::Path;

/// Number of coefficients of a signature truncated at order `m` in dimension
/// `d`: Σ_{i=0..m} d^i.
pub fn sig_dim(d: usize, m: usize) -> Result<usize> {
    if d == 0 {
        return Err(Error::RejectedInput("signature dimension must be at least 1".into()));
    }
    let overflow = || Error::Overflow(format!("sig_dim({d}, {m})"));
    let mut total: usize = 0;
    let mut power: usize = 1;
    for i in 0..=m {
        total = total.checked_add(power).ok_or_else(overflow)?;
        if i < m {
            power = power.checked_mul(d).ok_or_else(overflow)?;
        }
    }
    Ok(total)
}

/// A signature truncated at tensor level `order`, flat level-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSignature {
    dim: usize,
    order: usize,
    coeffs: Vec<f64>,
}

impl TruncatedSignature {
    /// The unit of the truncated tensor algebra: (1, 0, …, 0).
    pub fn unit(dim: usize, order: usize) -> Result<Self> {
        let len = sig_dim(dim, order)?;
        let mut coeffs = vec![0.0; len];
        coeffs[0] = 1.0;
        Ok(TruncatedSignature { dim, order, coeffs })
    }

    /// Signature of a single linear segment with increment `dx`:
    /// the truncated tensor exponential, level i = dx^⊗i / i!.
    pub fn from_increment(dx: &[f64], order: usize) -> Result<Self> {
        let dim = dx.len();
        let mut sig = TruncatedSignature::unit(dim, order)?;
        let mut prev_start = 0usize;
        let mut prev_len = 1usize;
        let mut offset = 1usize;
        for level in 1..=order {
            let len = prev_len * dim;
            for a in 0..prev_len {
                let base = sig.coeffs[prev_start + a] / level as f64;
                for (i, dxi) in dx.iter().enumerate() {
                    sig.coeffs[offset + a * dim + i] = base * dxi;
                }
            }
            prev_start = offset;
            prev_len = len;
            offset += len;
        }
        Ok(sig)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficients with the constant term dropped (regression features).
    pub fn features(&self) -> &[f64] {
        &self.coeffs[1..]
    }

    fn level_offset(&self, level: usize) -> usize {
        // Σ_{i<level} d^i; orders in use are small, recompute directly.
        let mut offset = 0usize;
        let mut power = 1usize;
        for _ in 0..level {
            offset += power;
            power *= self.dim;
        }
        offset
    }

    /// Slice holding level `level` (d^level entries).
    pub fn level(&self, level: usize) -> &[f64] {
        let start = self.level_offset(level);
        let len = self.dim.pow(level as u32);
        &self.coeffs[start..start + len]
    }

    /// Coefficient for a multi-index given as 1-based letters.
    pub fn coeff(&self, index: &[usize]) -> f64 {
        let mut pos = 0usize;
        for &i in index {
            debug_assert!((1..=self.dim).contains(&i));
            pos = pos * self.dim + (i - 1);
        }
        self.coeffs[self.level_offset(index.len()) + pos]
    }
}

/// Chen's relation: the signature of a concatenated path is the truncated
/// tensor product of the pieces' signatures. Level ℓ of the output is
/// Σ_{i+j=ℓ} a_i ⊗ b_j.
pub fn chen_concat(a: &TruncatedSignature, b: &TruncatedSignature) -> Result<TruncatedSignature> {
    if a.dim != b.dim || a.order != b.order {
        return Err(Error::DimensionMismatch(format!(
            "cannot concatenate signatures with (d={}, m={}) and (d={}, m={})",
            a.dim, a.order, b.dim, b.order
        )));
    }
    let d = a.dim;
    let mut out = TruncatedSignature::unit(d, a.order)?;
    out.coeffs[0] = 0.0;
    for level in 0..=a.order {
        let out_start = out.level_offset(level);
        for i in 0..=level {
            let j = level - i;
            let left = a.level(i);
            let right = b.level(j);
            let right_len = right.len();
            for (x, lv) in left.iter().enumerate() {
                if *lv == 0.0 {
                    continue;
                }
                let base = out_start + x * right_len;
                for (y, rv) in right.iter().enumerate() {
                    out.coeffs[base + y] += lv * rv;
                }
            }
        }
    }
    Ok(out)
}

/// Truncated signature of a piecewise-linear path: Chen product of the
/// per-segment tensor exponentials.
pub fn truncated_signature(p: &Path, order: usize) -> Result<TruncatedSignature> {
    if order < 1 {
        return Err(Error::RejectedInput(
            "signature truncation order must be at least 1".into(),
        ));
    }
    // Fail early if the coefficient count overflows.
    sig_dim(p.dim(), order)?;
    let mut sig = TruncatedSignature::unit(p.dim(), order)?;
    for j in 0..p.num_segments() {
        let segment = TruncatedSignature::from_increment(&p.increment(j), order)?;
        sig = chen_concat(&sig, &segment)?;
    }
    Ok(sig)
}
