//! Neural components: the stacked LSTM outcome model, Adam, the training
//! loop with early stopping, and the time-feature autoencoder.

mod adam;
mod autoencoder;
pub mod linalg;
mod lstm;
mod train;

pub use adam::Adam;
pub use autoencoder::{train_time_autoencoder, Activation, AutoencoderConfig, Dense, TimeAutoencoder};
pub use lstm::{
    bce_with_logit, gradients, init_model, mean_bce, ForwardCache, InitScheme, LstmLayerParams, LstmModel,
    LstmParams, TensorShape, GATE_NAMES, UNIFORM_INIT_RANGE,
};
pub use train::{train, EarlyStopping, EpochRecord, History, TrainConfig};

/// A set of trainable tensors visited in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}
