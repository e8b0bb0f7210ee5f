use crate::error::{Error, Result};
use crate::tensor::{Activation, Matrix};

use super::{check_dims, check_step_shapes, glorot, seeded, split_concat_grad, CellState, ParamTensors};

/// Gate weights act on the concatenation `[h_{t-1}; x_t]`, so every `w_*` is
/// `hidden x (hidden + input)` and every `b_*` is `hidden x 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_f: Matrix,
    pub w_i: Matrix,
    pub w_c: Matrix,
    pub w_o: Matrix,
    pub b_f: Matrix,
    pub b_i: Matrix,
    pub b_c: Matrix,
    pub b_o: Matrix,
}

/// Activations of one forward step. Gates are stored post-activation.
#[derive(Clone, Debug)]
pub struct LstmCache {
    pub concat: Matrix,
    pub c_prev: Matrix,
    pub f: Matrix,
    pub i: Matrix,
    pub c_tilde: Matrix,
    pub o: Matrix,
    pub c: Matrix,
    pub tanh_c: Matrix,
    pub h: Matrix,
}

#[derive(Clone, Debug)]
pub struct LstmStepGrads {
    pub params: LstmParams,
    pub d_x: Matrix,
    pub d_prev: CellState,
}

impl LstmParams {
    /// Glorot-uniform weights, zero biases except the forget bias, which
    /// starts at 1.
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Result<Self> {
        check_dims(input_dim, hidden_dim)?;
        let mut rng = seeded(seed);
        let cols = hidden_dim + input_dim;
        let w_f = glorot(&mut rng, hidden_dim, cols);
        let w_i = glorot(&mut rng, hidden_dim, cols);
        let w_c = glorot(&mut rng, hidden_dim, cols);
        let w_o = glorot(&mut rng, hidden_dim, cols);
        Ok(LstmParams {
            w_f,
            w_i,
            w_c,
            w_o,
            b_f: Matrix::filled(hidden_dim, 1, 1.0),
            b_i: Matrix::zeros(hidden_dim, 1),
            b_c: Matrix::zeros(hidden_dim, 1),
            b_o: Matrix::zeros(hidden_dim, 1),
        })
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let cols = hidden_dim + input_dim;
        let w = Matrix::zeros(hidden_dim, cols);
        let b = Matrix::zeros(hidden_dim, 1);
        LstmParams {
            w_f: w.clone(),
            w_i: w.clone(),
            w_c: w.clone(),
            w_o: w,
            b_f: b.clone(),
            b_i: b.clone(),
            b_c: b.clone(),
            b_o: b,
        }
    }

    /// Tensors in file order, by value.
    pub fn into_tensors(self) -> Vec<Matrix> {
        vec![self.w_f, self.w_i, self.w_c, self.w_o, self.b_f, self.b_i, self.b_c, self.b_o]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_f.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_f.cols() - self.w_f.rows()
    }

    /// Checks that all eight matrices agree on one `(input, hidden)` pair.
    pub fn validate(&self) -> Result<()> {
        let hidden = self.w_f.rows();
        if hidden == 0 || self.w_f.cols() <= hidden {
            return Err(Error::invalid(format!(
                "lstm weight shape {:?} does not encode hidden x (hidden + input)",
                self.w_f.shape()
            )));
        }
        for w in [&self.w_i, &self.w_c, &self.w_o] {
            if w.shape() != self.w_f.shape() {
                return Err(Error::shape("lstm weights", self.w_f.shape(), w.shape()));
            }
        }
        for b in [&self.b_f, &self.b_i, &self.b_c, &self.b_o] {
            if b.shape() != (hidden, 1) {
                return Err(Error::shape("lstm bias", (hidden, 1), b.shape()));
            }
        }
        Ok(())
    }

    /// One step: forget, input, candidate, cell, output and hidden, in that order.
    pub fn step(&self, x: &Matrix, prev: &CellState) -> Result<(CellState, LstmCache)> {
        let hidden = self.hidden_dim();
        check_step_shapes("lstm_step", self.input_dim(), hidden, x, &prev.h)?;
        let c_prev = prev
            .c
            .as_ref()
            .ok_or_else(|| Error::invalid("lstm_step needs a memory cell in the previous state"))?;
        if c_prev.shape() != prev.h.shape() {
            return Err(Error::shape("lstm_step", prev.h.shape(), c_prev.shape()));
        }

        let concat = Matrix::concat_rows(&prev.h, x)?;
        let gate = |w: &Matrix, b: &Matrix, act: Activation| -> Result<Matrix> {
            Ok(w.matmul(&concat)?.add_bias(b)?.map_fn(act))
        };
        let f = gate(&self.w_f, &self.b_f, Activation::Sigmoid)?;
        let i = gate(&self.w_i, &self.b_i, Activation::Sigmoid)?;
        let c_tilde = gate(&self.w_c, &self.b_c, Activation::Tanh)?;
        let c = f.hadamard(c_prev)?.add(&i.hadamard(&c_tilde)?)?;
        let o = gate(&self.w_o, &self.b_o, Activation::Sigmoid)?;
        let tanh_c = c.map_fn(Activation::Tanh);
        let h = o.hadamard(&tanh_c)?;

        let next = CellState {
            h: h.clone(),
            c: Some(c.clone()),
        };
        let cache = LstmCache {
            concat,
            c_prev: c_prev.clone(),
            f,
            i,
            c_tilde,
            o,
            c,
            tanh_c,
            h,
        };
        Ok((next, cache))
    }

    /// Reverse of [`LstmParams::step`] given upstream gradients on `h_t` and
    /// `C_t`. `d_c` is the gradient arriving through the cell path from step
    /// `t + 1`; the contribution through `h_t = o * tanh(C_t)` is added here.
    pub fn backward(&self, cache: &LstmCache, d_h: &Matrix, d_c: &Matrix) -> Result<LstmStepGrads> {
        let mut params = LstmParams::zeros(self.input_dim(), self.hidden_dim());
        let (d_x, d_prev) = self.backward_into(cache, d_h, d_c, &mut params)?;
        Ok(LstmStepGrads { params, d_x, d_prev })
    }

    /// As [`LstmParams::backward`], but adds the parameter gradients into
    /// `acc` and returns `(d_x, d_prev)`.
    pub fn backward_into(
        &self,
        cache: &LstmCache,
        d_h: &Matrix,
        d_c: &Matrix,
        acc: &mut LstmParams,
    ) -> Result<(Matrix, CellState)> {
        if d_h.shape() != cache.h.shape() {
            return Err(Error::shape("lstm_backward d_h", cache.h.shape(), d_h.shape()));
        }
        if d_c.shape() != cache.c.shape() {
            return Err(Error::shape("lstm_backward d_c", cache.c.shape(), d_c.shape()));
        }
        let hidden = self.hidden_dim();
        if cache.concat.rows() != self.w_f.cols() || cache.h.rows() != hidden {
            return Err(Error::shape("lstm_backward cache", self.w_f.shape(), cache.concat.shape()));
        }
        if acc.w_f.shape() != self.w_f.shape() {
            return Err(Error::shape("lstm_backward acc", self.w_f.shape(), acc.w_f.shape()));
        }

        let d_o = d_h.hadamard(&cache.tanh_c)?;
        let d_o_pre = d_o.hadamard(&cache.o.map_fn(Activation::SigmoidDerivFromOutput))?;

        let d_tanh_c = d_h.hadamard(&cache.o)?;
        let d_cell = d_c.add(&d_tanh_c.hadamard(&cache.tanh_c.map_fn(Activation::TanhDerivFromOutput))?)?;

        let d_f_pre = d_cell
            .hadamard(&cache.c_prev)?
            .hadamard(&cache.f.map_fn(Activation::SigmoidDerivFromOutput))?;
        let d_i_pre = d_cell
            .hadamard(&cache.c_tilde)?
            .hadamard(&cache.i.map_fn(Activation::SigmoidDerivFromOutput))?;
        let d_ct_pre = d_cell
            .hadamard(&cache.i)?
            .hadamard(&cache.c_tilde.map_fn(Activation::TanhDerivFromOutput))?;
        let d_c_prev = d_cell.hadamard(&cache.f)?;

        d_f_pre.matmul_t_acc(&cache.concat, &mut acc.w_f)?;
        d_i_pre.matmul_t_acc(&cache.concat, &mut acc.w_i)?;
        d_ct_pre.matmul_t_acc(&cache.concat, &mut acc.w_c)?;
        d_o_pre.matmul_t_acc(&cache.concat, &mut acc.w_o)?;
        d_f_pre.sum_cols_acc(&mut acc.b_f)?;
        d_i_pre.sum_cols_acc(&mut acc.b_i)?;
        d_ct_pre.sum_cols_acc(&mut acc.b_c)?;
        d_o_pre.sum_cols_acc(&mut acc.b_o)?;

        let mut d_concat = self.w_f.t_matmul(&d_f_pre)?;
        self.w_i.t_matmul_acc(&d_i_pre, &mut d_concat)?;
        self.w_c.t_matmul_acc(&d_ct_pre, &mut d_concat)?;
        self.w_o.t_matmul_acc(&d_o_pre, &mut d_concat)?;
        let (d_h_prev, d_x) = split_concat_grad(d_concat, hidden);

        Ok((
            d_x,
            CellState {
                h: d_h_prev,
                c: Some(d_c_prev),
            },
        ))
    }
}

impl ParamTensors for LstmParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("w_f", &self.w_f),
            ("w_i", &self.w_i),
            ("w_c", &self.w_c),
            ("w_o", &self.w_o),
            ("b_f", &self.b_f),
            ("b_i", &self.b_i),
            ("b_c", &self.b_c),
            ("b_o", &self.b_o),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_c,
            &mut self.w_o,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_c,
            &mut self.b_o,
        ]
    }
}
