use std::collections::{BTreeMap, HashMap};

use super::EmbedError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Entity,
    Relation,
}

/// Row-wise parameter update rule.
pub trait Optimizer: Send {
    fn name(&self) -> &'static str;
    fn step(&mut self, group: ParamGroup, row: usize, params: &mut [f64], grad: &[f64]);
}

#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn name(&self) -> &'static str {
        "sgd"
    }

    fn step(&mut self, _group: ParamGroup, _row: usize, params: &mut [f64], grad: &[f64]) {
        for (p, g) in params.iter_mut().zip(grad) {
            *p -= self.lr * g;
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Adaptive-moments update with per-row (lazy) state: a row's bias
/// correction counts only the steps in which that row received a gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    state: HashMap<(ParamGroup, usize), Moments>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, state: HashMap::new() }
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn step(&mut self, group: ParamGroup, row: usize, params: &mut [f64], grad: &[f64]) {
        let s = self.state.entry((group, row)).or_insert_with(|| Moments {
            m: vec![0.0; grad.len()],
            v: vec![0.0; grad.len()],
            t: 0,
        });
        s.t += 1;
        let c1 = 1.0 - self.beta1.powi(s.t);
        let c2 = 1.0 - self.beta2.powi(s.t);
        for i in 0..params.len() {
            s.m[i] = self.beta1 * s.m[i] + (1.0 - self.beta1) * grad[i];
            s.v[i] = self.beta2 * s.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (s.m[i] / c1) / ((s.v[i] / c2).sqrt() + self.eps);
        }
    }
}

pub type OptimizerFactory = fn(f64) -> Box<dyn Optimizer>;

#[derive(Clone)]
pub struct OptimizerRegistry {
    factories: BTreeMap<String, OptimizerFactory>,
}

impl OptimizerRegistry {
    pub fn builtin() -> Self {
        let mut r = Self { factories: BTreeMap::new() };
        r.register("sgd", |lr| Box::new(Sgd { lr }));
        let adam: OptimizerFactory = |lr| Box::new(Adam::new(lr));
        r.register("adam", adam);
        r.register("adaptive-moments", adam);
        r
    }

    pub fn register(&mut self, name: &str, f: OptimizerFactory) {
        self.factories.insert(name.to_string(), f);
    }

    pub fn build(&self, name: &str, lr: f64) -> Result<Box<dyn Optimizer>, EmbedError> {
        self.factories
            .get(name)
            .map(|f| f(lr))
            .ok_or_else(|| EmbedError::UnknownStrategy(format!("unknown optimizer {name:?}")))
    }
}
