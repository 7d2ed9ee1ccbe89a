//! Layer structs generic over their parameter handle: `Tensor<T>` when
//! owned by a model, [`Var`](crate::autodiff::Var) once bound to a graph.

#[derive(Clone, Debug, PartialEq)]
pub struct Conv<P> {
    /// `Cout × Cin × 3 × 3`.
    pub weight: P,
    pub bias: P,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResBlock<P> {
    pub conv1: Conv<P>,
    pub conv2: Conv<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage<P> {
    pub entry: Conv<P>,
    pub blocks: Vec<ResBlock<P>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<P> {
    pub stages: Vec<Stage<P>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<P> {
    /// `D × M`.
    pub weight: P,
    pub bias: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Head<P> {
    pub layers: Vec<Dense<P>>,
}

impl<P> Conv<P> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        f(format!("{prefix}.weight"), &self.weight);
        f(format!("{prefix}.bias"), &self.bias);
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut P)) {
        let Conv { weight, bias, .. } = self;
        f(weight);
        f(bias);
    }

    fn map<Q>(&self, f: &mut dyn FnMut(&P) -> Q) -> Conv<Q> {
        Conv {
            weight: f(&self.weight),
            bias: f(&self.bias),
            stride: self.stride,
        }
    }
}

impl<P> Encoder<P> {
    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        for (s, stage) in self.stages.iter().enumerate() {
            let sp = format!("{prefix}.stage{}", s + 1);
            stage.entry.visit(&format!("{sp}.entry"), f);
            for (b, block) in stage.blocks.iter().enumerate() {
                block.conv1.visit(&format!("{sp}.block{}.conv1", b + 1), f);
                block.conv2.visit(&format!("{sp}.block{}.conv2", b + 1), f);
            }
        }
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut P)) {
        for Stage { entry, blocks } in &mut self.stages {
            entry.visit_mut(f);
            for ResBlock { conv1, conv2 } in blocks {
                conv1.visit_mut(f);
                conv2.visit_mut(f);
            }
        }
    }

    pub fn map<Q>(&self, f: &mut dyn FnMut(&P) -> Q) -> Encoder<Q> {
        Encoder {
            stages: self
                .stages
                .iter()
                .map(|s| Stage {
                    entry: s.entry.map(f),
                    blocks: s
                        .blocks
                        .iter()
                        .map(|b| ResBlock {
                            conv1: b.conv1.map(f),
                            conv2: b.conv2.map(f),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl<P> Head<P> {
    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        for (i, layer) in self.layers.iter().enumerate() {
            f(format!("{prefix}.fc{}.weight", i + 1), &layer.weight);
            f(format!("{prefix}.fc{}.bias", i + 1), &layer.bias);
        }
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut P)) {
        for Dense { weight, bias } in &mut self.layers {
            f(weight);
            f(bias);
        }
    }

    pub fn map<Q>(&self, f: &mut dyn FnMut(&P) -> Q) -> Head<Q> {
        Head {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: f(&l.weight),
                    bias: f(&l.bias),
                })
                .collect(),
        }
    }
}
