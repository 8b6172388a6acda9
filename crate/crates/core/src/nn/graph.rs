//! Linear layer programs with skip slots, and reverse-mode execution over them.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::nn::ops::{self, BridgeKind, Mode, PoolIndex};
use crate::nn::params::ParamStore;
use crate::tensor::{Scalar, Tensor4};

/// One node of a layer program. The program runs top to bottom on a single
/// current tensor; `Save` stashes it in a skip slot that a later `Bridge` reads.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// Kernel at `param`, bias at `param + 1`.
    Conv { param: usize },
    Relu,
    Dropout { rate: f64 },
    Pool,
    Upsample,
    Save { slot: usize },
    Bridge { slot: usize, kind: BridgeKind },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Graph {
    pub ops: Vec<Op>,
    pub slots: usize,
}

enum Record<T> {
    Conv { input: Tensor4<T> },
    Relu { output: Tensor4<T> },
    Dropout { mask: Option<Vec<T>> },
    Pool { index: PoolIndex },
    Upsample,
    Save,
    Bridge { skip_channels: usize },
}

impl Graph {
    pub fn count(&self, pred: impl Fn(&Op) -> bool) -> usize {
        self.ops.iter().filter(|op| pred(op)).count()
    }

    /// Walk the program symbolically and return the output channel count,
    /// rejecting convs whose kernels do not fit and bridges that cannot merge.
    pub fn channel_flow<T: Scalar>(&self, params: &ParamStore<T>, input_channels: usize) -> Result<usize> {
        let mut c = input_channels;
        let mut saved = vec![None; self.slots];
        for op in &self.ops {
            match *op {
                Op::Conv { param } => {
                    let k = params.get(param).dims();
                    if k.c != c {
                        return Err(Error::Config(format!(
                            "conv {param} expects {} input channels, program supplies {c}",
                            k.c
                        )));
                    }
                    c = k.n;
                }
                Op::Save { slot } => saved[slot] = Some(c),
                Op::Bridge { slot, kind } => {
                    let s = saved[slot]
                        .take()
                        .ok_or_else(|| Error::Config(format!("bridge reads unsaved slot {slot}")))?;
                    match kind {
                        BridgeKind::Sum if s != c => {
                            return Err(Error::Config(format!(
                                "sum bridge at slot {slot}: encoder {s} vs decoder {c} channels"
                            )))
                        }
                        BridgeKind::Concat => c += s,
                        _ => {}
                    }
                }
                _ => {}
            }
        }
        Ok(c)
    }

    /// Forward pass without recording anything for backward.
    pub fn forward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        input: &Tensor4<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<Tensor4<T>> {
        self.run(params, input.clone(), mode, rng, None)
    }

    fn run<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        mut x: Tensor4<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
        mut tape: Option<&mut Vec<Record<T>>>,
    ) -> Result<Tensor4<T>> {
        let mut skips: Vec<Option<Tensor4<T>>> = vec![None; self.slots];
        for op in &self.ops {
            let (next, rec) = match *op {
                Op::Conv { param } => {
                    let y = ops::conv2d_forward(&x, params.get(param), params.get(param + 1).data())?;
                    (y, Record::Conv { input: x })
                }
                Op::Relu => {
                    let y = ops::relu(&x);
                    let rec = Record::Relu {
                        output: if tape.is_some() { y.clone() } else { x },
                    };
                    (y, rec)
                }
                Op::Dropout { rate } => {
                    let (y, mask) = ops::dropout(&x, rate, mode, rng)?;
                    (y, Record::Dropout { mask })
                }
                Op::Pool => {
                    let (y, index) = ops::maxpool2(&x)?;
                    (y, Record::Pool { index })
                }
                Op::Upsample => (ops::upsample2(&x), Record::Upsample),
                Op::Save { slot } => {
                    skips[slot] = Some(x.clone());
                    (x, Record::Save)
                }
                Op::Bridge { slot, kind } => {
                    let skip = skips[slot]
                        .take()
                        .ok_or_else(|| Error::State(format!("bridge reads empty skip slot {slot}")))?;
                    let y = ops::bridge_combine(&skip, &x, kind)?;
                    (y, Record::Bridge { skip_channels: skip.dims().c })
                }
            };
            if let Some(t) = tape.as_deref_mut() {
                t.push(rec);
            }
            x = next;
        }
        Ok(x)
    }
}

/// Records one forward pass and differentiates it.
pub struct GradSession<'a, T: Scalar> {
    graph: &'a Graph,
    params: &'a ParamStore<T>,
    tape: Option<Vec<Record<T>>>,
}

impl<'a, T: Scalar> GradSession<'a, T> {
    pub fn new(graph: &'a Graph, params: &'a ParamStore<T>) -> Self {
        GradSession {
            graph,
            params,
            tape: None,
        }
    }

    pub fn forward(
        &mut self,
        input: &Tensor4<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<Tensor4<T>> {
        let mut tape = Vec::with_capacity(self.graph.ops.len());
        let out = self
            .graph
            .run(self.params, input.clone(), mode, rng, Some(&mut tape))?;
        self.tape = Some(tape);
        Ok(out)
    }

    /// Parameter gradients for the last forward pass. Consumes the recording.
    pub fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<ParamStore<T>> {
        Ok(self.backward_full(grad_out)?.0)
    }

    /// Like [`backward`](Self::backward) but also returns the input gradient.
    pub fn backward_full(&mut self, grad_out: &Tensor4<T>) -> Result<(ParamStore<T>, Tensor4<T>)> {
        let tape = self
            .tape
            .take()
            .ok_or_else(|| Error::State("backward called without a recorded forward pass".into()))?;
        let mut grads = self.params.zeros_like();
        let mut skip_grads: Vec<Option<Tensor4<T>>> = vec![None; self.graph.slots];
        let mut g = grad_out.clone();
        for (op, rec) in self.graph.ops.iter().zip(tape).rev() {
            g = match (op, rec) {
                (Op::Conv { param }, Record::Conv { input }) => {
                    let cg = ops::conv2d_backward(&input, self.params.get(*param), &g)?;
                    grads.get_mut(*param).add_assign(&cg.kernel)?;
                    for (b, d) in grads.get_mut(param + 1).data_mut().iter_mut().zip(cg.bias) {
                        *b = *b + d;
                    }
                    cg.input
                }
                (Op::Relu, Record::Relu { output }) => ops::relu_backward(&output, &g)?,
                (Op::Dropout { .. }, Record::Dropout { mask }) => {
                    ops::dropout_backward(&g, mask.as_deref())
                }
                (Op::Pool, Record::Pool { index }) => ops::maxpool2_backward(&g, &index)?,
                (Op::Upsample, Record::Upsample) => ops::upsample2_backward(&g)?,
                (Op::Save { slot }, Record::Save) => {
                    if let Some(sg) = skip_grads[*slot].take() {
                        g.add_assign(&sg)?;
                    }
                    g
                }
                (Op::Bridge { slot, kind }, Record::Bridge { skip_channels }) => {
                    let (sg, ug) = ops::bridge_backward(&g, skip_channels, *kind)?;
                    skip_grads[*slot] = sg;
                    ug
                }
                _ => return Err(Error::State("tape does not match layer program".into())),
            };
        }
        Ok((grads, g))
    }
}
