use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Model, ModelConfig, Params};
use crate::correlation::CorrSequence;
use crate::error::{Error, Result};

/// Shuffle stream is decorrelated from the initialization stream.
const SHUFFLE_SEED_SALT: u64 = 0x5eed_0f_5ba7c4;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: Model,
    /// Mean per-window reconstruction loss of each epoch, measured on the
    /// forward passes of that epoch.
    pub loss_trace: Vec<f64>,
}

/// Mini-batch SGD with heavy-ball momentum on the mean squared reconstruction
/// error. Single-threaded and fully determined by `config.seed`.
pub fn train(model: &Model, sequence: &CorrSequence, config: &ModelConfig) -> Result<TrainedModel> {
    config.validate()?;
    if sequence.is_empty() {
        return Err(Error::Config("cannot train on an empty correlation sequence".into()));
    }
    let mut model = model.clone();
    let mut velocity = Params::zeros_like(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_SEED_SALT);
    let mut order: Vec<usize> = (0..sequence.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grad = Params::zeros_like(&model.params);
            for &i in batch {
                let (loss, g) = model.loss_and_gradient(&sequence.matrices[i].padded)?;
                epoch_loss += loss;
                grad.add_scaled(&g, 1.0);
            }
            grad.scale(1.0 / batch.len() as f64);
            velocity.scale(config.momentum);
            velocity.add_scaled(&grad, 1.0);
            model.params.add_scaled(&velocity, -config.learning_rate);
        }
        let mean = epoch_loss / sequence.len() as f64;
        if !mean.is_finite() || !model.params.all_finite() {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        trace.push(mean);
    }
    Ok(TrainedModel {
        model,
        loss_trace: trace,
    })
}
