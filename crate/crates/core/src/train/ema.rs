//! Exponential moving average of model parameters. The shadow copy is used
//! for evaluations and final predictions.

use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::{Element, Tensor};

pub struct EmaState<E: Element> {
    decay: f64,
    shadow: Vec<(String, Tensor<E>)>,
}

impl<E: Element> EmaState<E> {
    /// Start the shadow at the model's current parameters.
    pub fn new(model: &Model<E>, decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::parameter(format!(
                "EMA decay must be in [0, 1), got {decay}"
            )));
        }
        let shadow = model
            .params()
            .iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        Ok(Self { decay, shadow })
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn shadow(&self, name: &str) -> Option<&Tensor<E>> {
        self.shadow.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// `shadow ← β·shadow + (1−β)·param` for every parameter.
    pub fn update(&mut self, model: &Model<E>) -> Result<()> {
        let beta = E::from_f64(self.decay);
        let one_minus = E::from_f64(1.0 - self.decay);
        for ((name, shadow), (pname, param)) in self.shadow.iter_mut().zip(model.params().iter()) {
            if name != pname || shadow.dims() != param.dims() {
                return Err(Error::shape(format!(
                    "EMA shadow `{name}` does not match model parameter `{pname}`"
                )));
            }
            let data: Vec<E> = shadow
                .data()
                .iter()
                .zip(param.data())
                .map(|(&s, &p)| s * beta + p * one_minus)
                .collect();
            *shadow = Tensor::from_vec(shadow.dims().to_vec(), data)?;
        }
        Ok(())
    }

    /// Copy the shadow parameters into a model of the same architecture.
    pub fn write_to(&self, model: &mut Model<E>) -> Result<()> {
        for (name, t) in &self.shadow {
            model.set_param(name, t.clone())?;
        }
        Ok(())
    }

    /// A model carrying the shadow parameters.
    pub fn shadow_model(&self, reference: &Model<E>) -> Result<Model<E>> {
        let mut model = Model::build(reference.config().clone(), 0)?;
        self.write_to(&mut model)?;
        Ok(model)
    }
}
