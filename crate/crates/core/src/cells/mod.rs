//! LSTM and GRU cells: one forward step over a column batch plus the exact
//! reverse-mode step used by backpropagation through time.

mod gru;
mod lstm;

pub use gru::{GruCache, GruParams, GruStepGrads};
pub use lstm::{LstmCache, LstmParams, LstmStepGrads};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Recurrent state carried between steps. `c` is the LSTM memory cell and is
/// `None` for GRU.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub h: Matrix,
    pub c: Option<Matrix>,
}

impl CellState {
    pub fn lstm_zeros(hidden: usize, batch: usize) -> Self {
        CellState {
            h: Matrix::zeros(hidden, batch),
            c: Some(Matrix::zeros(hidden, batch)),
        }
    }

    pub fn gru_zeros(hidden: usize, batch: usize) -> Self {
        CellState {
            h: Matrix::zeros(hidden, batch),
            c: None,
        }
    }
}

/// Named parameter matrices in a fixed order, used by the optimizer,
/// serialization and gradient checks.
pub trait ParamTensors {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;
}

pub(crate) fn check_dims(input_dim: usize, hidden_dim: usize) -> Result<()> {
    if input_dim == 0 || hidden_dim == 0 {
        return Err(Error::invalid(format!(
            "cell dimensions must be >= 1 (input {input_dim}, hidden {hidden_dim})"
        )));
    }
    Ok(())
}

/// Glorot-uniform gate weights: `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches shape")
}

pub(crate) fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Validates an input step and previous hidden state against a cell.
pub(crate) fn check_step_shapes(
    op: &'static str,
    input_dim: usize,
    hidden: usize,
    x: &Matrix,
    h: &Matrix,
) -> Result<()> {
    if x.rows() != input_dim {
        return Err(Error::shape(op, (input_dim, x.cols()), x.shape()));
    }
    if h.shape() != (hidden, x.cols()) {
        return Err(Error::shape(op, (hidden, x.cols()), h.shape()));
    }
    Ok(())
}

/// `W^T . d` split back into the `[h, x]` halves.
pub(crate) fn split_concat_grad(d_concat: Matrix, hidden: usize) -> (Matrix, Matrix) {
    d_concat
        .split_rows(hidden)
        .expect("concat gradient has hidden + input rows")
}
