//! Dense numerical core: matrices, affine layers, activations, losses,
//! Adam and a finite-difference gradient checker. Everything runs in `f64`.

mod adam;
mod gradcheck;
mod layers;
mod loss;
mod matrix;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::grad_check;
pub use layers::{
    dropout, dropout_mask, relu, relu_backward, sigmoid, sigmoid_scalar, AffineLayer, Param,
};
pub use loss::{bce, bce_with_logits, kl_gauss, kl_gauss_backward};
pub use matrix::{dot, Matrix};
