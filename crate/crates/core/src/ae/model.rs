use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp};
use crate::error::{Error, Result};
use crate::rng::RngSeed;
use crate::schema::{LatentCode, LatentSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input: usize,
    pub hidden: usize,
    pub users: usize,
    pub activation: Activation,
}

/// One shared encoder and one decoder per user.
#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    pub schema: Arc<LatentSchema>,
    pub encoder: Mlp,
    pub decoders: Vec<Mlp>,
}

/// Gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct AeGrads {
    pub encoder: Mlp,
    pub decoders: Vec<Mlp>,
}

impl AeModel {
    pub fn new(shape: ModelShape, schema: Arc<LatentSchema>, seed: RngSeed) -> Result<Self> {
        if shape.input == 0 || shape.hidden == 0 || shape.users == 0 {
            return Err(crate::error::invalid("shape", "dimensions and user count must be positive"));
        }
        let latent = schema.total_width();
        let mut rng = seed.derive("ae-init").rng();
        let encoder = Mlp::random(shape.input, shape.hidden, latent, shape.activation, &mut rng);
        let decoders = (0..shape.users)
            .map(|_| Mlp::random(latent, shape.hidden, shape.input, shape.activation, &mut rng))
            .collect();
        Ok(Self {
            schema,
            encoder,
            decoders,
        })
    }

    pub fn from_parts(schema: Arc<LatentSchema>, encoder: Mlp, decoders: Vec<Mlp>) -> Result<Self> {
        let latent = schema.total_width();
        if encoder.output != latent {
            return Err(Error::ShapeMismatch {
                what: "encoder output",
                expected: latent,
                actual: encoder.output,
            });
        }
        if decoders.is_empty() {
            return Err(crate::error::invalid("decoders", "need at least one user"));
        }
        for d in &decoders {
            if d.input != latent || d.output != encoder.input {
                return Err(Error::ShapeMismatch {
                    what: "decoder shape",
                    expected: latent,
                    actual: d.input,
                });
            }
        }
        Ok(Self {
            schema,
            encoder,
            decoders,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output
    }

    pub fn users(&self) -> usize {
        self.decoders.len()
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoders.iter().map(Mlp::param_count).sum::<usize>()
    }

    pub fn encode(&self, x: &[f64]) -> Result<LatentCode> {
        self.check_input(x)?;
        LatentCode::new(self.schema.clone(), self.encoder.apply(x))
    }

    pub fn decode(&self, user: usize, z: &[f64]) -> Result<Vec<f64>> {
        let dec = self.decoders.get(user).ok_or(Error::ShapeMismatch {
            what: "user index",
            expected: self.users(),
            actual: user,
        })?;
        if z.len() != dec.input {
            return Err(Error::ShapeMismatch {
                what: "latent code",
                expected: dec.input,
                actual: z.len(),
            });
        }
        Ok(dec.apply(z))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                what: "input sample",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> AeGrads {
        AeGrads {
            encoder: self.encoder.zeros_like(),
            decoders: self.decoders.iter().map(Mlp::zeros_like).collect(),
        }
    }

    /// Every parameter tensor, encoder first.
    pub fn param_tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v: Vec<&mut Vec<f64>> = self.encoder.tensors_mut().into_iter().collect();
        for d in &mut self.decoders {
            v.extend(d.tensors_mut());
        }
        v
    }

    pub fn all_finite(&self) -> bool {
        self.encoder.all_finite() && self.decoders.iter().all(Mlp::all_finite)
    }
}

impl AeGrads {
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v: Vec<&mut Vec<f64>> = self.encoder.tensors_mut().into_iter().collect();
        for d in &mut self.decoders {
            v.extend(d.tensors_mut());
        }
        v
    }

    pub fn flatten(&mut self) -> Vec<f64> {
        self.tensors_mut().into_iter().flat_map(|t| t.iter().copied()).collect()
    }
}
