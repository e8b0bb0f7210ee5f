//! Hourly traffic-volume forecasting with stacked LSTM / GRU networks trained
//! by hand-written backpropagation through time.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense `f64` matrices, batch-as-columns.
//! - [`cells`]: LSTM and GRU steps with exact analytic backward passes.
//! - [`network`]: stacked cells, linear head, Adam, the training loop and
//!   the text model format.
//! - [`datapipe`]: CSV ingestion, encoding, IQR outlier removal, min-max
//!   scaling, chronological split and gap-aware windows.
//! - [`metrics`]: MSE, MAE and ε-guarded MAPE on original-scale values.
//! - [`cli`]: the `trafficast` command-line driver.

pub mod cells;
pub mod cli;
pub mod datapipe;
pub mod error;
pub mod fsutil;
pub mod metrics;
pub mod network;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Matrix;
