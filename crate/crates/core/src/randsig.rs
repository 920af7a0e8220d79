//! Randomized signatures: a k-dimensional path feature driven by random
//! linear maps and an activation, plus Johnson–Lindenstrauss dimension and
//! distortion utilities.
//!
//! The state follows the Euler recursion
//! `Z_n = Z_{n-1} + Σ_i σ(A_i Z_{n-1} + b_i) (X^i_n − X^i_{n-1})`
//! with A_i, b_i, Z_0 drawn once from a seeded generator; the recursion itself
//! is the model, not an approximation of an ODE solve.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::paths::Path;

/// Magnitude at which the state recursion is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Activation applied elementwise inside the state recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// σ(x) = scale · x. The default scale is 1/(d·√k).
    Linear { scale: f64 },
    Tanh,
    /// σ(x) = x.
    Identity,
    /// σ(x) = value regardless of the argument. The state then ignores its
    /// own feedback entirely; kept for sensitivity checks.
    Constant { value: f64 },
}

impl Activation {
    /// The default linear activation with slope 1/(d·√k).
    pub fn default_linear(d: usize, k: usize) -> Activation {
        Activation::Linear {
            scale: 1.0 / (d as f64 * (k as f64).sqrt()),
        }
    }

    #[inline]
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Linear { scale } => scale * x,
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
            Activation::Constant { value } => *value,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Activation::Linear { scale } => format!("linear({scale})"),
            Activation::Tanh => "tanh".to_string(),
            Activation::Identity => "identity".to_string(),
            Activation::Constant { value } => format!("constant({value})"),
        }
    }
}

/// Frozen random parameters of the recursion.
///
/// Regenerating from the same `(d, k, seed, activation)` reproduces every
/// entry bit-identically: draws come from ChaCha12 seeded with `seed` in the
/// normative order A_1 (row-major), …, A_d, then b_1, …, b_d, then z0, each
/// entry a standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct RandSigParams {
    k: usize,
    d: usize,
    seed: u64,
    activation: Activation,
    init_mode: InitMode,
    matrices: Vec<DMatrix<f64>>,
    shifts: Vec<DVector<f64>>,
    z0: DVector<f64>,
}

/// How the initial state is chosen: a standard-normal draw (default) or zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    Normal,
    Zero,
}

/// Draw recursion parameters from the seeded generator.
pub fn sample_params(d: usize, k: usize, seed: u64, activation: Activation) -> Result<RandSigParams> {
    sample_params_with_init(d, k, seed, activation, InitMode::Normal)
}

pub fn sample_params_with_init(
    d: usize,
    k: usize,
    seed: u64,
    activation: Activation,
    init_mode: InitMode,
) -> Result<RandSigParams> {
    if d == 0 || k == 0 {
        return Err(Error::RejectedInput(format!(
            "randomized signature needs d ≥ 1 and k ≥ 1 (got d={d}, k={k})"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut matrices = Vec::with_capacity(d);
    for _ in 0..d {
        // Row-major draw order.
        let mut rows = Vec::with_capacity(k * k);
        for _ in 0..k * k {
            rows.push(normal());
        }
        matrices.push(DMatrix::from_row_slice(k, k, &rows));
    }
    let mut shifts = Vec::with_capacity(d);
    for _ in 0..d {
        shifts.push(DVector::from_fn(k, |_, _| normal()));
    }
    let z0 = match init_mode {
        InitMode::Normal => DVector::from_fn(k, |_, _| normal()),
        InitMode::Zero => DVector::zeros(k),
    };
    Ok(RandSigParams {
        k,
        d,
        seed,
        activation,
        init_mode,
        matrices,
        shifts,
        z0,
    })
}

impl RandSigParams {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn matrix(&self, i: usize) -> &DMatrix<f64> {
        &self.matrices[i]
    }

    pub fn shift(&self, i: usize) -> &DVector<f64> {
        &self.shifts[i]
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.z0
    }

    /// Override the initial state (used by the linearity diagnostics and the
    /// zero-start option).
    pub fn with_initial_state(mut self, z0: DVector<f64>) -> Result<Self> {
        if z0.len() != self.k {
            return Err(Error::DimensionMismatch(format!(
                "initial state has length {}, expected k={}",
                z0.len(),
                self.k
            )));
        }
        self.z0 = z0;
        Ok(self)
    }

    /// Zero out the shifts, leaving the homogeneous system (diagnostics).
    pub fn homogeneous(mut self) -> Self {
        for b in &mut self.shifts {
            b.fill(0.0);
        }
        self
    }

    /// Content hash of every parameter, truncated SHA-256.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.k as u64).to_le_bytes());
        hasher.update((self.d as u64).to_le_bytes());
        hasher.update(self.seed.to_le_bytes());
        hasher.update(self.activation.label().as_bytes());
        for a in &self.matrices {
            for v in a.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        for b in &self.shifts {
            for v in b.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        for v in self.z0.iter() {
            hasher.update(v.to_le_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Terminal state of the recursion together with the parameter fingerprint
/// it was produced under.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedSignature {
    state: DVector<f64>,
    params_fingerprint: String,
}

impl RandomizedSignature {
    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    pub fn params_fingerprint(&self) -> &str {
        &self.params_fingerprint
    }
}

/// Run the recursion over the path and return the terminal state.
pub fn randomized_signature(p: &Path, params: &RandSigParams) -> Result<RandomizedSignature> {
    let trajectory = run_recursion(p, params, false)?;
    Ok(RandomizedSignature {
        state: trajectory.into_iter().next_back().expect("non-empty trajectory"),
        params_fingerprint: params.fingerprint(),
    })
}

/// As [`randomized_signature`] but retaining the whole state trajectory
/// (Z_{t_0} … Z_{t_N}); opt-in debugging aid.
pub fn randomized_signature_trajectory(
    p: &Path,
    params: &RandSigParams,
) -> Result<Vec<DVector<f64>>> {
    run_recursion(p, params, true)
}

fn run_recursion(p: &Path, params: &RandSigParams, keep_all: bool) -> Result<Vec<DVector<f64>>> {
    if p.dim() != params.d {
        return Err(Error::DimensionMismatch(format!(
            "path dimension {} does not match parameter dimension {}",
            p.dim(),
            params.d
        )));
    }
    let mut state = params.z0.clone();
    let mut out = Vec::with_capacity(if keep_all { p.len() } else { 1 });
    if keep_all {
        out.push(state.clone());
    }
    let mut drive = DVector::zeros(params.k);
    for n in 1..p.len() {
        let dx = p.increment(n - 1);
        let mut next = state.clone();
        for i in 0..params.d {
            if dx[i] == 0.0 {
                continue;
            }
            drive.copy_from(&params.shifts[i]);
            // drive = A_i z + b_i
            drive.gemv(1.0, &params.matrices[i], &state, 1.0);
            for (slot, v) in next.iter_mut().zip(drive.iter()) {
                *slot += params.activation.apply(*v) * dx[i];
            }
        }
        if next.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::Diverged {
                step: n,
                limit: DIVERGENCE_LIMIT,
            });
        }
        state = next;
        if keep_all {
            out.push(state.clone());
        }
    }
    if !keep_all {
        out.push(state);
    }
    Ok(out)
}

/// Smallest integer k satisfying k > 4·ln(N) / (3ε² − 2ε³).
pub fn jl_min_dimension(n_points: usize, eps: f64) -> Result<usize> {
    if n_points < 2 {
        return Err(Error::RejectedInput(format!(
            "distance preservation needs at least 2 points, got {n_points}"
        )));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::RejectedInput(format!(
            "distortion must lie strictly inside (0, 1), got {eps}"
        )));
    }
    let bound = 4.0 * (n_points as f64).ln() / (3.0 * eps * eps - 2.0 * eps * eps * eps);
    Ok(bound.floor() as usize + 1)
}

/// Gaussian projection matrix (k × dim_in) with i.i.d. N(0, 1/k) entries,
/// drawn row-major from the seeded generator.
pub fn gaussian_projection(dim_in: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let scale = 1.0 / (k as f64).sqrt();
    let mut rows = Vec::with_capacity(k * dim_in);
    for _ in 0..k * dim_in {
        let v: f64 = StandardNormal.sample(&mut rng);
        rows.push(v * scale);
    }
    DMatrix::from_row_slice(k, dim_in, &rows)
}
