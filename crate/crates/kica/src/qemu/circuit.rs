//! Explicit desk-scale assembly of the kernel-entry oracle and of the
//! block-encoding unitary of a centered Gram matrix.
//!
//! States are real vectors over the computational basis; every factor of the
//! construction is a real orthogonal operator, applied as a structured pass
//! over the state vector, so layouts beyond the dense cap remain checkable.
//!
//! Register layout of the block encoding, least significant bits first:
//! right projector flag, left projector flag, rotation ancilla, the `s`-bit
//! kernel value register, the `n`-bit column register, the `n`-bit row
//! register. The encoded block sits at ancilla pattern `(value = 0,
//! rotation = 0, flags = 1)`:
//!
//! `N * <j, 0, 1, 1 | U | k, 0, 1, 1> = (K_centered)_{jk}` up to kernel
//! quantization.
//!
//! The two projector flags realize the row-space centering exactly: one
//! projector ancilla per side, each implementing `I - |uniform><uniform|`
//! through a flag-controlled reflection sandwiched between Hadamards.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gram::KernelSpec;
use crate::rng;

/// Hard cap on structured (matrix-free) assembly.
pub const MAX_TOTAL_QUBITS: usize = 22;
/// Cap for dense materialization.
pub const DENSE_QUBIT_CAP: usize = 14;

/// Qubit budget of one block-encoding circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CircuitLayout {
    /// Index-register width; the circuit addresses `N = 2^n` samples.
    pub n: usize,
    /// Fixed-point fraction bits of the kernel value register.
    pub s: usize,
}

impl CircuitLayout {
    pub fn new(n: usize, s: usize) -> Result<Self> {
        let layout = Self { n, s };
        if n < 1 || s < 1 {
            return Err(Error::invalid("layout needs n >= 1 and s >= 1"));
        }
        if layout.total_qubits() > MAX_TOTAL_QUBITS {
            return Err(Error::LayoutTooLarge {
                qubits: layout.total_qubits(),
                cap: MAX_TOTAL_QUBITS,
            });
        }
        Ok(layout)
    }

    pub fn n_points(&self) -> usize {
        1 << self.n
    }

    /// Qubits of the standalone entry oracle: two index registers plus value.
    pub fn oracle_qubits(&self) -> usize {
        2 * self.n + self.s
    }

    /// Qubits of the block encoding: oracle plus rotation ancilla plus two
    /// projector flags.
    pub fn total_qubits(&self) -> usize {
        2 * self.n + self.s + 3
    }
}

/// Quantized-kernel entry oracle: `|j>|k>|z> -> |j>|k>|z XOR Kq(j,k)>`.
#[derive(Debug, Clone)]
pub struct KernelOracle {
    layout: CircuitLayout,
    /// Quantized kernel values, row-major over `(j, k)`.
    kq: Vec<u64>,
}

/// Build the entry oracle for samples `z`; requires `z.len() == 2^n`.
pub fn build_oracle(z: &[f64], layout: CircuitLayout, kernel: &KernelSpec) -> Result<KernelOracle> {
    let n_points = layout.n_points();
    if z.len() != n_points {
        return Err(Error::dim(format!(
            "oracle needs exactly 2^n = {} samples, got {}",
            n_points,
            z.len()
        )));
    }
    let scale = (1u64 << layout.s) as f64;
    let max_code = (1u64 << layout.s) - 1;
    let mut kq = Vec::with_capacity(n_points * n_points);
    for &zj in z {
        for &zk in z {
            let v = kernel.eval(zj, zk);
            let code = ((v * scale).round() as u64).min(max_code);
            kq.push(code);
        }
    }
    Ok(KernelOracle { layout, kq })
}

impl KernelOracle {
    pub fn layout(&self) -> CircuitLayout {
        self.layout
    }

    /// Quantized kernel value as a real number in `[0, 1)`.
    pub fn quantized(&self, j: usize, k: usize) -> f64 {
        self.kq[j * self.layout.n_points() + k] as f64 / (1u64 << self.layout.s) as f64
    }

    /// State length of the standalone oracle space `|j>|k>|z>`.
    pub fn state_len(&self) -> usize {
        1 << self.layout.oracle_qubits()
    }

    /// Basis index in the oracle space.
    pub fn pack(&self, j: usize, k: usize, z: u64) -> usize {
        let n = self.layout.n;
        let s = self.layout.s;
        (((j << n) | k) << s) | z as usize
    }

    /// Apply the oracle permutation to a state over `|j>|k>|z>`.
    pub fn apply_to_state(&self, state: &mut [f64]) {
        debug_assert_eq!(state.len(), self.state_len());
        let n = self.layout.n;
        let s = self.layout.s;
        let z_mask = (1usize << s) - 1;
        let k_mask = (1usize << n) - 1;
        for idx in 0..state.len() {
            let z = idx & z_mask;
            let k = (idx >> s) & k_mask;
            let j = idx >> (s + n);
            let q = self.kq[j * self.layout.n_points() + k] as usize;
            let z2 = z ^ q;
            if z2 > z {
                state.swap(idx, (idx & !z_mask) | z2);
            }
        }
    }

    /// Dense permutation matrix; only for layouts under the dense cap.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.layout.oracle_qubits() > DENSE_QUBIT_CAP {
            return Err(Error::LayoutTooLarge {
                qubits: self.layout.oracle_qubits(),
                cap: DENSE_QUBIT_CAP,
            });
        }
        let len = self.state_len();
        let mut m = DMatrix::zeros(len, len);
        let mut state = vec![0.0; len];
        for col in 0..len {
            state.iter_mut().for_each(|v| *v = 0.0);
            state[col] = 1.0;
            self.apply_to_state(&mut state);
            for (row, &v) in state.iter().enumerate() {
                if v != 0.0 {
                    m[(row, col)] = v;
                }
            }
        }
        Ok(m)
    }
}

/// Block encoding of the centered, quantized Gram matrix over `N` samples.
#[derive(Debug, Clone)]
pub struct BlockEncoding {
    oracle: KernelOracle,
}

/// Assemble the block-encoding circuit for samples `z`.
pub fn build_block_encoding(
    z: &[f64],
    layout: CircuitLayout,
    kernel: &KernelSpec,
) -> Result<BlockEncoding> {
    Ok(BlockEncoding { oracle: build_oracle(z, layout, kernel)? })
}

// bit positions inside the block-encoding state index
const BIT_FLAG_R: usize = 0;
const BIT_FLAG_L: usize = 1;
const BIT_ROT: usize = 2;
const BIT_VALUE: usize = 3;

impl BlockEncoding {
    pub fn layout(&self) -> CircuitLayout {
        self.oracle.layout()
    }

    pub fn state_len(&self) -> usize {
        1 << self.layout().total_qubits()
    }

    fn bit_k(&self) -> usize {
        BIT_VALUE + self.layout().s
    }

    fn bit_j(&self) -> usize {
        self.bit_k() + self.layout().n
    }

    /// Basis index with row register `j`, column register `k`, value `z`,
    /// ancilla bits as given.
    #[allow(clippy::too_many_arguments)]
    fn pack(&self, j: usize, k: usize, z: usize, rot: usize, fl: usize, fr: usize) -> usize {
        (j << self.bit_j())
            | (k << self.bit_k())
            | (z << BIT_VALUE)
            | (rot << BIT_ROT)
            | (fl << BIT_FLAG_L)
            | (fr << BIT_FLAG_R)
    }

    /// Index of the flagged block state for sample index `j`.
    pub fn success_index(&self, j: usize) -> usize {
        self.pack(j, 0, 0, 0, 1, 1)
    }

    fn apply_h_bit(&self, state: &mut [f64], bit: usize) {
        let mask = 1usize << bit;
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        for idx in 0..state.len() {
            if idx & mask == 0 {
                let a = state[idx];
                let b = state[idx | mask];
                state[idx] = (a + b) * inv;
                state[idx | mask] = (a - b) * inv;
            }
        }
    }

    fn apply_x_bit(&self, state: &mut [f64], bit: usize) {
        let mask = 1usize << bit;
        for idx in 0..state.len() {
            if idx & mask == 0 {
                state.swap(idx, idx | mask);
            }
        }
    }

    /// Hadamard layer over the column register.
    fn apply_h_column_register(&self, state: &mut [f64]) {
        for q in 0..self.layout().n {
            self.apply_h_bit(state, self.bit_k() + q);
        }
    }

    /// Oracle XOR of the quantized kernel value, across all ancilla settings.
    fn apply_oracle(&self, state: &mut [f64]) {
        let layout = self.layout();
        let z_mask = ((1usize << layout.s) - 1) << BIT_VALUE;
        let reg_mask = (1usize << layout.n) - 1;
        for idx in 0..state.len() {
            let z = (idx & z_mask) >> BIT_VALUE;
            let k = (idx >> self.bit_k()) & reg_mask;
            let j = idx >> self.bit_j();
            let q = self.oracle.kq[j * layout.n_points() + k] as usize;
            let z2 = z ^ q;
            if z2 > z {
                state.swap(idx, (idx & !z_mask) | (z2 << BIT_VALUE));
            }
        }
    }

    /// Value-controlled rotation of the rotation ancilla:
    /// `|a>|0> -> |a>(a|0> + sqrt(1-a^2)|1>)`.
    fn apply_value_rotation(&self, state: &mut [f64], adjoint: bool) {
        let layout = self.layout();
        let rot_mask = 1usize << BIT_ROT;
        let z_mask = ((1usize << layout.s) - 1) << BIT_VALUE;
        let scale = 1.0 / (1u64 << layout.s) as f64;
        for idx in 0..state.len() {
            if idx & rot_mask == 0 {
                let a = ((idx & z_mask) >> BIT_VALUE) as f64 * scale;
                let c = (1.0 - a * a).max(0.0).sqrt();
                let v0 = state[idx];
                let v1 = state[idx | rot_mask];
                if adjoint {
                    state[idx] = a * v0 + c * v1;
                    state[idx | rot_mask] = -c * v0 + a * v1;
                } else {
                    state[idx] = a * v0 - c * v1;
                    state[idx | rot_mask] = c * v0 + a * v1;
                }
            }
        }
    }

    /// Swap of the row and column registers.
    fn apply_register_swap(&self, state: &mut [f64]) {
        let layout = self.layout();
        let reg_mask = (1usize << layout.n) - 1;
        for idx in 0..state.len() {
            let k = (idx >> self.bit_k()) & reg_mask;
            let j = idx >> self.bit_j();
            if j < k {
                let low = idx & ((1usize << self.bit_k()) - 1);
                let swapped = (k << self.bit_j()) | (j << self.bit_k()) | low;
                state.swap(idx, swapped);
            }
        }
    }

    /// Flag-controlled reflection `I - 2|uniform><uniform|` on the row
    /// register, applied where the flag bit is set.
    fn apply_controlled_reflection(&self, state: &mut [f64], flag_bit: usize) {
        let layout = self.layout();
        let n_points = layout.n_points();
        let stride = 1usize << self.bit_j();
        let flag_mask = 1usize << flag_bit;
        for low in 0..stride {
            if low & flag_mask != 0 {
                let mut sum = 0.0;
                for j in 0..n_points {
                    sum += state[low + j * stride];
                }
                let corr = 2.0 * sum / n_points as f64;
                for j in 0..n_points {
                    state[low + j * stride] -= corr;
                }
            }
        }
    }

    /// Projector gate on one flag: `<1| gate |1> = I - |uniform><uniform|`
    /// on the row register. Symmetric, so it is its own adjoint.
    fn apply_projector_gate(&self, state: &mut [f64], flag_bit: usize) {
        self.apply_x_bit(state, flag_bit);
        self.apply_h_bit(state, flag_bit);
        self.apply_controlled_reflection(state, flag_bit);
        self.apply_h_bit(state, flag_bit);
        self.apply_x_bit(state, flag_bit);
    }

    /// Apply the full block-encoding unitary.
    pub fn apply(&self, state: &mut [f64]) {
        debug_assert_eq!(state.len(), self.state_len());
        self.apply_projector_gate(state, BIT_FLAG_R);
        self.apply_h_column_register(state);
        self.apply_oracle(state);
        self.apply_value_rotation(state, false);
        self.apply_oracle(state);
        self.apply_register_swap(state);
        self.apply_h_column_register(state);
        self.apply_projector_gate(state, BIT_FLAG_L);
    }

    /// Apply the adjoint of the block-encoding unitary.
    pub fn apply_adjoint(&self, state: &mut [f64]) {
        debug_assert_eq!(state.len(), self.state_len());
        self.apply_projector_gate(state, BIT_FLAG_L);
        self.apply_h_column_register(state);
        self.apply_register_swap(state);
        self.apply_oracle(state);
        self.apply_value_rotation(state, true);
        self.apply_oracle(state);
        self.apply_h_column_register(state);
        self.apply_projector_gate(state, BIT_FLAG_R);
    }

    /// Matrix element `<j, 0, 1, 1 | U | k, 0, 1, 1>`.
    pub fn block_element(&self, j: usize, k: usize) -> f64 {
        let mut state = vec![0.0; self.state_len()];
        state[self.success_index(k)] = 1.0;
        self.apply(&mut state);
        state[self.success_index(j)]
    }

    /// The encoded `N x N` block, one circuit application per column.
    pub fn extracted_block(&self) -> DMatrix<f64> {
        let n_points = self.layout().n_points();
        let mut out = DMatrix::zeros(n_points, n_points);
        let mut state = vec![0.0; self.state_len()];
        for k in 0..n_points {
            state.iter_mut().for_each(|v| *v = 0.0);
            state[self.success_index(k)] = 1.0;
            self.apply(&mut state);
            for j in 0..n_points {
                out[(j, k)] = state[self.success_index(j)];
            }
        }
        out
    }

    /// Max deviation from unitarity over probe vectors: checks both norm
    /// preservation of `U` and `U^T U v = v`.
    pub fn unitarity_residual(&self, probes: usize) -> f64 {
        let len = self.state_len();
        let mut worst = 0.0f64;
        for p in 0..probes {
            let mut v = vec![0.0; len];
            if p < self.layout().n_points() {
                v[self.success_index(p)] = 1.0;
            } else {
                let mut stream = rng::stream(0xB10C, &[p as u64, len as u64]);
                let mut norm2 = 0.0;
                for x in v.iter_mut() {
                    *x = stream.gen::<f64>() - 0.5;
                    norm2 += *x * *x;
                }
                let inv = 1.0 / norm2.sqrt();
                v.iter_mut().for_each(|x| *x *= inv);
            }
            let original = v.clone();
            self.apply(&mut v);
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            worst = worst.max((norm - 1.0).abs());
            self.apply_adjoint(&mut v);
            let mut diff = 0.0f64;
            for (a, b) in v.iter().zip(&original) {
                diff = diff.max((a - b).abs());
            }
            worst = worst.max(diff);
        }
        worst
    }

    /// Dense materialization; only for layouts under the dense cap.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let total = self.layout().total_qubits();
        if total > DENSE_QUBIT_CAP {
            return Err(Error::LayoutTooLarge { qubits: total, cap: DENSE_QUBIT_CAP });
        }
        let len = self.state_len();
        let mut m = DMatrix::zeros(len, len);
        let mut state = vec![0.0; len];
        for col in 0..len {
            state.iter_mut().for_each(|v| *v = 0.0);
            state[col] = 1.0;
            self.apply(&mut state);
            for (row, &v) in state.iter().enumerate() {
                m[(row, col)] = v;
            }
        }
        Ok(m)
    }
}
