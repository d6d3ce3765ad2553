//! The two-branch autoencoder: a shared convolutional encoder feeding both a
//! deconvolutional decoder and a two-layer classifier.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use forward::{
    backward, classify, decode, encode, forward_joint, forward_traced, softmax, ForwardPass, ModelOutput,
};
pub use params::{
    Architecture, Classifier, ConvBlock, Decoder, DeconvBlock, Dense, Encoder, Gradients, Group, JdfdParams,
    OutputConv, SlotInfo, CLASSIFIER_HIDDEN, DECODER_CHANNELS, DOWNSAMPLE, ENCODER_CHANNELS, NUM_CLASSES,
};
