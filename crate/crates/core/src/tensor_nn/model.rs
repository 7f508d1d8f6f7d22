use rand::Rng;

use super::{Layer, LayerKind, Tensor};
use crate::{Error, Result};

/// Activations recorded by one forward pass: `activations[i]` is the input of
/// layer `i`, the last entry is the model output.
#[derive(Clone, Debug)]
pub struct Tape {
    activations: Vec<Tensor>,
}

impl Tape {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("tape always holds the input")
    }

    pub fn input(&self) -> &Tensor {
        &self.activations[0]
    }
}

/// Sequential network: an ordered layer list with a declared per-sample
/// input shape.
///
/// [`Model::forward`] keeps the most recent tape inside the model so that a
/// following [`Model::backward`] can consume it. When the same model is
/// applied more than once before backpropagating (the cycle-consistency
/// terms do this), use [`Model::forward_traced`] / [`Model::backward_traced`]
/// with explicit tapes instead.
#[derive(Clone, Debug)]
pub struct Model {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    tape: Option<Tape>,
    input_grad: Option<Tensor>,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }
}

impl Model {
    /// Builds a model, checking that consecutive layer shapes chain.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::shape(format!("invalid input shape {input_shape:?}")));
        }
        let mut shape = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(&shape).ok_or_else(|| Error::LayerShape {
                layer: i,
                expected: expected_input(layer),
                actual: shape.clone(),
            })?;
        }
        Ok(Self {
            input_shape,
            layers,
            tape: None,
            input_grad: None,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> Vec<usize> {
        let mut shape = self.input_shape.clone();
        for l in &self.layers {
            shape = l.output_shape(&shape).expect("validated at construction");
        }
        shape
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(Layer::kind).collect()
    }

    pub fn has_activation_layers(&self) -> bool {
        self.layers.iter().any(|l| l.kind().is_activation())
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Flattened copy of every parameter value, in layer order.
    pub fn param_vector(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| p.data().iter().copied())
            .collect()
    }

    /// Flattened copy of every parameter gradient (zeros where unset).
    pub fn grad_vector(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| match p.grad() {
                Some(g) => g.to_vec(),
                None => vec![0.0; p.len()],
            })
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
        self.input_grad = None;
    }

    /// Gradient with respect to the most recent input, set by [`Model::backward`].
    pub fn input_grad(&self) -> Option<&Tensor> {
        self.input_grad.as_ref()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.rank() < 2 || x.sample_shape() != self.input_shape.as_slice() {
            let actual = if x.rank() < 2 {
                x.shape().to_vec()
            } else {
                x.sample_shape().to_vec()
            };
            return Err(Error::LayerShape {
                layer: 0,
                expected: self.input_shape.clone(),
                actual,
            });
        }
        x.check_finite("model input")
    }

    /// Forward pass returning the output together with its tape.
    pub fn forward_traced(&self, x: &Tensor) -> Result<(Tensor, Tape)> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let y = layer.forward(activations.last().expect("non-empty"))?;
            if !y.is_finite() {
                return Err(Error::NonFinite(format!("output of layer {i}")));
            }
            activations.push(y);
        }
        let out = activations.last().expect("non-empty").clone();
        Ok((out, Tape { activations }))
    }

    /// Forward pass that records the tape for a later [`Model::backward`].
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (out, tape) = self.forward_traced(x)?;
        self.tape = Some(tape);
        Ok(out)
    }

    /// Forward pass without recording anything.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_traced(x)?.0)
    }

    /// Backpropagates through the tape recorded by the last [`Model::forward`],
    /// accumulating into parameter gradient slots and storing the input
    /// gradient. Returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let tape = self.tape.take().ok_or(Error::BackwardBeforeForward)?;
        let result = self.backward_traced(&tape, grad_out);
        self.tape = Some(tape);
        let g = result?;
        self.input_grad = Some(g.clone());
        Ok(g)
    }

    /// Backpropagates through an explicit tape.
    pub fn backward_traced(&mut self, tape: &Tape, grad_out: &Tensor) -> Result<Tensor> {
        if tape.activations.len() != self.layers.len() + 1 {
            return Err(Error::shape("tape does not belong to this model"));
        }
        tape.output().expect_same_shape(grad_out, "backward: upstream gradient")?;
        grad_out.check_finite("upstream gradient")?;
        let mut grad = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            let input = &tape.activations[i];
            let output = &tape.activations[i + 1];
            grad = self.layers[i].backward(input, output, &grad)?;
            if !grad.is_finite() {
                return Err(Error::NonFinite(format!("gradient at layer {i}")));
            }
        }
        Ok(grad)
    }

    /// Drops the recorded tape.
    pub fn clear_tape(&mut self) {
        self.tape = None;
    }
}

fn expected_input(layer: &Layer) -> Vec<usize> {
    match layer {
        Layer::Dense { weight, .. } => vec![weight.shape()[0]],
        Layer::Conv2d { kernel, .. } => vec![kernel.shape()[1], 0, 0],
        _ => Vec::new(),
    }
}

/// Incremental constructor tracking the current per-sample shape.
pub struct ModelBuilder {
    input_shape: Vec<usize>,
    current: Vec<usize>,
    layers: Vec<Layer>,
}

impl ModelBuilder {
    pub fn new(input_shape: &[usize]) -> Self {
        Self {
            input_shape: input_shape.to_vec(),
            current: input_shape.to_vec(),
            layers: Vec::new(),
        }
    }

    fn push(mut self, layer: Layer) -> Self {
        if let Some(s) = layer.output_shape(&self.current) {
            self.current = s;
        }
        self.layers.push(layer);
        self
    }

    pub fn current_shape(&self) -> &[usize] {
        &self.current
    }

    pub fn flatten(self) -> Self {
        self.push(Layer::Flatten)
    }

    pub fn reshape(self, shape: &[usize]) -> Self {
        self.push(Layer::Reshape {
            shape: shape.to_vec(),
        })
    }

    /// Dense layer from the current (flat) width to `out`.
    pub fn dense(self, out: usize, rng: &mut impl Rng) -> Self {
        let n_in = self.current.iter().product();
        self.push(Layer::dense(n_in, out, rng))
    }

    pub fn conv2d(
        self,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let c_in = self.current.first().copied().unwrap_or(1);
        self.push(Layer::conv2d(c_in, out_channels, kernel, stride, padding, rng))
    }

    pub fn layer(self, layer: Layer) -> Self {
        self.push(layer)
    }

    pub fn relu(self) -> Self {
        self.push(Layer::Relu)
    }

    pub fn sigmoid(self) -> Self {
        self.push(Layer::Sigmoid)
    }

    pub fn tanh(self) -> Self {
        self.push(Layer::Tanh)
    }

    pub fn power_norm(self) -> Self {
        self.push(Layer::PowerNorm)
    }

    pub fn build(self) -> Result<Model> {
        Model::new(self.input_shape, self.layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reshape_only_model_is_identity() {
        let mut m = Model::new(vec![3], vec![Layer::Reshape { shape: vec![3] }]).unwrap();
        let x = Tensor::row(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.forward(&x).unwrap().data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let mut rng = crate::seeded_rng(1);
        let err = Model::new(vec![4], vec![Layer::dense(4, 3, &mut rng), Layer::dense(2, 1, &mut rng)])
            .unwrap_err();
        match err {
            Error::LayerShape {
                layer,
                expected,
                actual,
            } => {
                assert_eq!(layer, 1);
                assert_eq!(expected, vec![2]);
                assert_eq!(actual, vec![3]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut m = Model::new(vec![4], vec![Layer::dense(4, 3, &mut rng)]).unwrap();
        assert!(matches!(
            m.forward(&Tensor::row(&[1.0, 2.0]).unwrap()),
            Err(Error::LayerShape { layer: 0, .. })
        ));
    }

    #[test]
    fn backward_before_forward_is_an_error() {
        let mut rng = crate::seeded_rng(2);
        let mut m = ModelBuilder::new(&[2]).dense(1, &mut rng).build().unwrap();
        assert!(matches!(
            m.backward(&Tensor::row(&[1.0]).unwrap()),
            Err(Error::BackwardBeforeForward)
        ));
    }

    #[test]
    fn scalar_product_rule() {
        // y = w x with w = 1.5, x = 2, upstream 1 => dw = 2, dx = w
        let layer = Layer::dense_from(Tensor::new(vec![1, 1], vec![1.5]).unwrap(), Tensor::zeros(&[1])).unwrap();
        let mut m = Model::new(vec![1], vec![layer]).unwrap();
        m.forward(&Tensor::row(&[2.0]).unwrap()).unwrap();
        let dx = m.backward(&Tensor::row(&[1.0]).unwrap()).unwrap();
        assert_eq!(dx.data(), &[1.5]);
        assert_eq!(m.params()[0].grad().unwrap(), &[2.0]);
        assert_eq!(m.input_grad().unwrap().data(), &[1.5]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = crate::seeded_rng(3);
        let mut m = ModelBuilder::new(&[3])
            .dense(4, &mut rng)
            .tanh()
            .dense(2, &mut rng)
            .build()
            .unwrap();
        let x = Tensor::new(vec![2, 3], vec![0.1, -0.2, 0.3, 0.5, 0.4, -0.6]).unwrap();
        m.forward(&x).unwrap();
        m.backward(&Tensor::zeros(&[2, 2])).unwrap();
        assert!(m.grad_vector().iter().all(|&g| g == 0.0));
    }
}
