use crate::error::{Error, Result};
use crate::tensor::{Activation, Matrix};

use super::{check_dims, check_step_shapes, glorot, seeded, split_concat_grad, CellState, ParamTensors};

/// Reset (`r`), update (`z`) and candidate (`h`) gate parameters. The update
/// gate weights the *previous* state: `h_t = z * h_{t-1} + (1 - z) * h~`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub w_r: Matrix,
    pub w_z: Matrix,
    pub w_h: Matrix,
    pub b_r: Matrix,
    pub b_z: Matrix,
    pub b_h: Matrix,
}

#[derive(Clone, Debug)]
pub struct GruCache {
    /// `[h_{t-1}; x_t]`, input of the reset and update gates.
    pub concat: Matrix,
    /// `[h_{t-1} * r; x_t]`, input of the candidate.
    pub concat_reset: Matrix,
    pub h_prev: Matrix,
    pub r: Matrix,
    pub z: Matrix,
    pub h_tilde: Matrix,
    pub h: Matrix,
}

#[derive(Clone, Debug)]
pub struct GruStepGrads {
    pub params: GruParams,
    pub d_x: Matrix,
    pub d_h_prev: Matrix,
}

impl GruParams {
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Result<Self> {
        check_dims(input_dim, hidden_dim)?;
        let mut rng = seeded(seed);
        let cols = hidden_dim + input_dim;
        let w_r = glorot(&mut rng, hidden_dim, cols);
        let w_z = glorot(&mut rng, hidden_dim, cols);
        let w_h = glorot(&mut rng, hidden_dim, cols);
        Ok(GruParams {
            w_r,
            w_z,
            w_h,
            b_r: Matrix::zeros(hidden_dim, 1),
            b_z: Matrix::zeros(hidden_dim, 1),
            b_h: Matrix::zeros(hidden_dim, 1),
        })
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = Matrix::zeros(hidden_dim, hidden_dim + input_dim);
        let b = Matrix::zeros(hidden_dim, 1);
        GruParams {
            w_r: w.clone(),
            w_z: w.clone(),
            w_h: w,
            b_r: b.clone(),
            b_z: b.clone(),
            b_h: b,
        }
    }

    /// Tensors in file order, by value.
    pub fn into_tensors(self) -> Vec<Matrix> {
        vec![self.w_r, self.w_z, self.w_h, self.b_r, self.b_z, self.b_h]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_r.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_r.cols() - self.w_r.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let hidden = self.w_r.rows();
        if hidden == 0 || self.w_r.cols() <= hidden {
            return Err(Error::invalid(format!(
                "gru weight shape {:?} does not encode hidden x (hidden + input)",
                self.w_r.shape()
            )));
        }
        for w in [&self.w_z, &self.w_h] {
            if w.shape() != self.w_r.shape() {
                return Err(Error::shape("gru weights", self.w_r.shape(), w.shape()));
            }
        }
        for b in [&self.b_r, &self.b_z, &self.b_h] {
            if b.shape() != (hidden, 1) {
                return Err(Error::shape("gru bias", (hidden, 1), b.shape()));
            }
        }
        Ok(())
    }

    /// Reset gate, update gate, candidate, new state. `prev.c` is ignored.
    pub fn step(&self, x: &Matrix, prev: &CellState) -> Result<(CellState, GruCache)> {
        let hidden = self.hidden_dim();
        check_step_shapes("gru_step", self.input_dim(), hidden, x, &prev.h)?;
        let h_prev = &prev.h;

        let concat = Matrix::concat_rows(h_prev, x)?;
        let r = self.w_r.matmul(&concat)?.add_bias(&self.b_r)?.map_fn(Activation::Sigmoid);
        let z = self.w_z.matmul(&concat)?.add_bias(&self.b_z)?.map_fn(Activation::Sigmoid);
        let concat_reset = Matrix::concat_rows(&h_prev.hadamard(&r)?, x)?;
        let h_tilde = self
            .w_h
            .matmul(&concat_reset)?
            .add_bias(&self.b_h)?
            .map_fn(Activation::Tanh);

        let mut h = Matrix::zeros(hidden, x.cols());
        for (((out, &zv), &hp), &ht) in h
            .as_mut_slice()
            .iter_mut()
            .zip(z.as_slice())
            .zip(h_prev.as_slice())
            .zip(h_tilde.as_slice())
        {
            *out = zv * hp + (1.0 - zv) * ht;
        }

        let cache = GruCache {
            concat,
            concat_reset,
            h_prev: h_prev.clone(),
            r,
            z,
            h_tilde,
            h: h.clone(),
        };
        Ok((CellState { h, c: None }, cache))
    }

    /// Reverse of [`GruParams::step`]. The gradient on `h_{t-1}` collects the
    /// direct `z * h_{t-1}` term, the reset-gated path through the candidate,
    /// and the paths through both gate pre-activations.
    pub fn backward(&self, cache: &GruCache, d_h: &Matrix) -> Result<GruStepGrads> {
        let mut params = GruParams::zeros(self.input_dim(), self.hidden_dim());
        let (d_x, d_h_prev) = self.backward_into(cache, d_h, &mut params)?;
        Ok(GruStepGrads {
            params,
            d_x,
            d_h_prev,
        })
    }

    /// As [`GruParams::backward`], but adds the parameter gradients into
    /// `acc` and returns `(d_x, d_h_prev)`.
    pub fn backward_into(&self, cache: &GruCache, d_h: &Matrix, acc: &mut GruParams) -> Result<(Matrix, Matrix)> {
        if d_h.shape() != cache.h.shape() {
            return Err(Error::shape("gru_backward d_h", cache.h.shape(), d_h.shape()));
        }
        let hidden = self.hidden_dim();
        if cache.concat.rows() != self.w_r.cols() || cache.h.rows() != hidden {
            return Err(Error::shape("gru_backward cache", self.w_r.shape(), cache.concat.shape()));
        }
        if acc.w_r.shape() != self.w_r.shape() {
            return Err(Error::shape("gru_backward acc", self.w_r.shape(), acc.w_r.shape()));
        }

        let d_z = d_h.hadamard(&cache.h_prev.sub(&cache.h_tilde)?)?;
        let d_z_pre = d_z.hadamard(&cache.z.map_fn(Activation::SigmoidDerivFromOutput))?;

        let d_tilde = d_h.hadamard(&cache.z.map(|v| 1.0 - v))?;
        let d_tilde_pre = d_tilde.hadamard(&cache.h_tilde.map_fn(Activation::TanhDerivFromOutput))?;

        let d_concat_reset = self.w_h.t_matmul(&d_tilde_pre)?;
        let (d_h_reset, d_x_candidate) = split_concat_grad(d_concat_reset, hidden);

        let d_r = d_h_reset.hadamard(&cache.h_prev)?;
        let d_r_pre = d_r.hadamard(&cache.r.map_fn(Activation::SigmoidDerivFromOutput))?;

        let mut d_concat = self.w_r.t_matmul(&d_r_pre)?;
        self.w_z.t_matmul_acc(&d_z_pre, &mut d_concat)?;
        let (d_h_gates, mut d_x) = split_concat_grad(d_concat, hidden);
        d_x.add_assign(&d_x_candidate)?;

        let mut d_h_prev = d_h.hadamard(&cache.z)?;
        d_h_prev.add_assign(&d_h_reset.hadamard(&cache.r)?)?;
        d_h_prev.add_assign(&d_h_gates)?;

        d_r_pre.matmul_t_acc(&cache.concat, &mut acc.w_r)?;
        d_z_pre.matmul_t_acc(&cache.concat, &mut acc.w_z)?;
        d_tilde_pre.matmul_t_acc(&cache.concat_reset, &mut acc.w_h)?;
        d_r_pre.sum_cols_acc(&mut acc.b_r)?;
        d_z_pre.sum_cols_acc(&mut acc.b_z)?;
        d_tilde_pre.sum_cols_acc(&mut acc.b_h)?;
        Ok((d_x, d_h_prev))
    }
}

impl ParamTensors for GruParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("w_r", &self.w_r),
            ("w_z", &self.w_z),
            ("w_h", &self.w_h),
            ("b_r", &self.b_r),
            ("b_z", &self.b_z),
            ("b_h", &self.b_h),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_r,
            &mut self.w_z,
            &mut self.w_h,
            &mut self.b_r,
            &mut self.b_z,
            &mut self.b_h,
        ]
    }
}
