use crate::{AdError, Gradients, NamedTensor, Result, Tape, Var};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
struct Param {
    name: String,
    shape: Vec<usize>,
    value: Vec<f64>,
}

/// Named trainable tensors that outlive any single tape.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

/// Tape handles of every parameter for one forward pass.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], value: Vec<f64>) -> Result<ParamId> {
        let name = name.into();
        if value.len() != shape.iter().product::<usize>() {
            return Err(AdError::Shape(format!("parameter {name}: {} values for {shape:?}", value.len())));
        }
        if self.find(&name).is_some() {
            return Err(AdError::Shape(format!("duplicate parameter {name}")));
        }
        self.params.push(Param {
            name,
            shape: shape.to_vec(),
            value,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.params[id.0].shape
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].value
    }

    /// Places every parameter on `tape` as a gradient-tracking leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|p| tape.param(p.value.clone(), &p.shape).expect("validated on insert"))
            .collect();
        BoundParams { vars }
    }

    /// Places every parameter on `tape` as a constant.
    pub fn bind_frozen(&self, tape: &mut Tape) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|p| tape.constant(p.value.clone(), &p.shape).expect("validated on insert"))
            .collect();
        BoundParams { vars }
    }

    /// Gradients aligned with the store, zero where a parameter was unused.
    pub fn collect_grads(&self, tape: &Tape, bound: &BoundParams, grads: &Gradients) -> Vec<Vec<f64>> {
        bound.vars.iter().map(|&v| grads.wrt(tape, v)).collect()
    }

    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        self.params
            .iter()
            .map(|p| NamedTensor {
                name: p.name.clone(),
                shape: p.shape.clone(),
                values: p.value.clone(),
            })
            .collect()
    }

    /// Overwrites parameters from tensors with matching names and shapes.
    /// Tensors that name no parameter are ignored; missing parameters are an
    /// error.
    pub fn load_tensors(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        for p in &mut self.params {
            let t = tensors
                .iter()
                .find(|t| t.name == p.name)
                .ok_or_else(|| AdError::UnknownParam(p.name.clone()))?;
            if t.shape != p.shape {
                return Err(AdError::Shape(format!(
                    "parameter {}: stored {:?}, expected {:?}",
                    p.name, t.shape, p.shape
                )));
            }
            p.value.clone_from(&t.values);
        }
        Ok(())
    }
}
