//! Encoder-decoder variants: depth, filter width and bridge type.
//!
//! A network with `blocks = 2L + 1` has `L` encoder blocks, one bottleneck
//! block and `L` decoder blocks. Each block is two 3x3 conv + relu layers.
//! Encoder blocks end in a 2x2 max-pool; decoder blocks start with a 2x
//! nearest-neighbour upsample followed by a conv that maps the channel count
//! down to the level width, then the bridge. A final 3x3 conv with linear
//! activation produces one output channel.

use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::graph::{GradSession, Graph, Op};
use crate::nn::ops::{check_dropout_rate, BridgeKind, Mode, KERNEL};
use crate::nn::params::ParamStore;
use crate::tensor::{Dims, Scalar, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelGrowth {
    Constant,
    Doubling,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub blocks: usize,
    pub base_filters: usize,
    pub bridge: BridgeKind,
    #[serde(default)]
    pub dropout_rate: f64,
    #[serde(default = "default_growth")]
    pub channel_growth: ChannelGrowth,
}

fn default_growth() -> ChannelGrowth {
    ChannelGrowth::Doubling
}

/// The four (blocks, filters) archetypes compared in the bake-off.
pub const ARCHETYPES: [(usize, usize); 4] = [(5, 5), (5, 10), (9, 9), (9, 18)];

const MAX_BLOCKS: usize = 15;

impl ModelSpec {
    pub fn new(blocks: usize, base_filters: usize, bridge: BridgeKind) -> Self {
        ModelSpec {
            blocks,
            base_filters,
            bridge,
            dropout_rate: 0.0,
            channel_growth: ChannelGrowth::Doubling,
        }
    }

    /// All twelve archetype x bridge variants, archetype-major.
    pub fn bakeoff_variants() -> Vec<ModelSpec> {
        ARCHETYPES
            .iter()
            .flat_map(|&(b, f)| BridgeKind::ALL.map(|k| ModelSpec::new(b, f, k)))
            .collect()
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn with_growth(mut self, growth: ChannelGrowth) -> Self {
        self.channel_growth = growth;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks < 3 || self.blocks.is_multiple_of(2) || self.blocks > MAX_BLOCKS {
            return Err(Error::Config(format!(
                "blocks must be odd and within 3..={MAX_BLOCKS}, got {}",
                self.blocks
            )));
        }
        if self.base_filters == 0 {
            return Err(Error::Config("base_filters must be positive".into()));
        }
        check_dropout_rate(self.dropout_rate)?;
        Ok(())
    }

    /// Number of pooling levels.
    pub fn levels(&self) -> usize {
        (self.blocks - 1) / 2
    }

    /// Input height and width must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << self.levels()
    }

    /// Channel width at each level, bottleneck last.
    pub fn widths(&self) -> Vec<usize> {
        (0..=self.levels())
            .map(|l| match self.channel_growth {
                ChannelGrowth::Constant => self.base_filters,
                ChannelGrowth::Doubling => self.base_filters << l,
            })
            .collect()
    }

    pub fn label(&self) -> String {
        let mut s = format!("b{}-f{}-{}", self.blocks, self.base_filters, self.bridge.name());
        if self.channel_growth == ChannelGrowth::Constant {
            s.push_str("-const");
        }
        s
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn conv_count(cin: usize, cout: usize) -> usize {
    KERNEL * KERNEL * cin * cout + cout
}

/// Closed-form trainable parameter count.
pub fn count_params(spec: &ModelSpec) -> usize {
    let w = spec.widths();
    let levels = spec.levels();
    let mut total = 0;
    let mut cin = 1;
    for &c in &w[..levels] {
        total += conv_count(cin, c) + conv_count(c, c);
        cin = c;
    }
    total += conv_count(cin, w[levels]) + conv_count(w[levels], w[levels]);
    for l in (0..levels).rev() {
        let merged = if spec.bridge == BridgeKind::Concat { 2 * w[l] } else { w[l] };
        total += conv_count(w[l + 1], w[l]) + conv_count(merged, w[l]) + conv_count(w[l], w[l]);
    }
    total + conv_count(w[0], 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T = f32> {
    pub spec: ModelSpec,
    pub graph: Graph,
    pub params: ParamStore<T>,
}

struct Builder<'r, T> {
    graph: Graph,
    params: ParamStore<T>,
    rng: &'r mut ChaCha8Rng,
    dropout: f64,
}

impl<T: Scalar> Builder<'_, T> {
    fn conv(&mut self, name: &str, cin: usize, cout: usize) {
        let bound = (6.0 / (cin * KERNEL * KERNEL) as f64).sqrt();
        let rng = &mut *self.rng;
        let kernel = Tensor4::from_fn(Dims::new(cout, cin, KERNEL, KERNEL), |_, _, _, _| {
            T::from_f64(rng.gen_range(-bound..bound))
        });
        let param = self.params.push(format!("{name}.weight"), kernel);
        self.params
            .push(format!("{name}.bias"), Tensor4::zeros(Dims::new(1, cout, 1, 1)));
        self.graph.ops.push(Op::Conv { param });
    }

    fn conv_relu(&mut self, name: &str, cin: usize, cout: usize) {
        self.conv(name, cin, cout);
        self.graph.ops.push(Op::Relu);
    }

    fn maybe_dropout(&mut self) {
        if self.dropout > 0.0 {
            self.graph.ops.push(Op::Dropout { rate: self.dropout });
        }
    }
}

/// Build and He-initialize a network; identical seeds give identical weights.
pub fn build_model<T: Scalar>(spec: &ModelSpec, seed: u64) -> Result<Network<T>> {
    spec.validate()?;
    let w = spec.widths();
    let levels = spec.levels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder::<T> {
        graph: Graph {
            ops: Vec::new(),
            slots: levels,
        },
        params: ParamStore::new(),
        rng: &mut rng,
        dropout: spec.dropout_rate,
    };
    let bridged = spec.bridge != BridgeKind::None;
    let mut cin = 1;
    for (l, &c) in w[..levels].iter().enumerate() {
        b.conv_relu(&format!("enc{l}.conv0"), cin, c);
        b.conv_relu(&format!("enc{l}.conv1"), c, c);
        b.maybe_dropout();
        if bridged {
            b.graph.ops.push(Op::Save { slot: l });
        }
        b.graph.ops.push(Op::Pool);
        cin = c;
    }
    b.conv_relu("bottleneck.conv0", cin, w[levels]);
    b.conv_relu("bottleneck.conv1", w[levels], w[levels]);
    b.maybe_dropout();
    for l in (0..levels).rev() {
        b.graph.ops.push(Op::Upsample);
        b.conv_relu(&format!("dec{l}.up"), w[l + 1], w[l]);
        let merged = if bridged {
            b.graph.ops.push(Op::Bridge {
                slot: l,
                kind: spec.bridge,
            });
            if spec.bridge == BridgeKind::Concat { 2 * w[l] } else { w[l] }
        } else {
            w[l]
        };
        b.conv_relu(&format!("dec{l}.conv0"), merged, w[l]);
        b.conv_relu(&format!("dec{l}.conv1"), w[l], w[l]);
    }
    b.conv("head", w[0], 1);
    let out_channels = b.graph.channel_flow(&b.params, 1)?;
    debug_assert_eq!(out_channels, 1);
    Ok(Network {
        spec: *spec,
        graph: b.graph,
        params: b.params,
    })
}

impl<T: Scalar> Network<T> {
    pub fn check_input(&self, dims: Dims) -> Result<()> {
        let div = self.spec.divisor();
        if dims.c != 1 || !dims.h.is_multiple_of(div) || !dims.w.is_multiple_of(div) {
            return Err(Error::Shape(format!(
                "network {} needs 1-channel input with h, w divisible by {div}, got {dims}",
                self.spec
            )));
        }
        Ok(())
    }

    /// Deterministic inference pass (dropout disabled).
    pub fn predict(&self, input: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(input.dims())?;
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        self.graph.forward(&self.params, input, Mode::Infer, &mut unused)
    }

    pub fn session(&self) -> GradSession<'_, T> {
        GradSession::new(&self.graph, &self.params)
    }

    /// Forward in `mode`, then MSE loss and parameter gradients.
    pub fn loss_and_grads(
        &self,
        input: &Tensor4<T>,
        target: &Tensor4<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<(T, ParamStore<T>)> {
        self.check_input(input.dims())?;
        let mut session = self.session();
        let pred = session.forward(input, mode, rng)?;
        let (loss, grad) = crate::nn::ops::mse_loss(&pred, target)?;
        Ok((loss, session.backward(&grad)?))
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            spec: self.spec,
            graph: self.graph.clone(),
            params: self.params.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_conv_has_fifty_params() {
        assert_eq!(conv_count(1, 5), 50);
    }

    #[test]
    fn count_matches_built_store_for_all_variants() {
        for spec in ModelSpec::bakeoff_variants() {
            let net = build_model::<f32>(&spec, 1).unwrap();
            assert_eq!(count_params(&spec), net.params.total_count(), "{spec}");
            let c = spec.with_growth(ChannelGrowth::Constant);
            assert_eq!(count_params(&c), build_model::<f32>(&c, 1).unwrap().params.total_count());
        }
    }

    #[test]
    fn structure_invariants() {
        for spec in ModelSpec::bakeoff_variants() {
            let net = build_model::<f32>(&spec, 3).unwrap();
            let l = spec.levels();
            assert_eq!(net.graph.count(|o| *o == Op::Pool), l);
            assert_eq!(net.graph.count(|o| *o == Op::Upsample), l);
            let bridges = net.graph.count(|o| matches!(o, Op::Bridge { .. }));
            assert_eq!(bridges, if spec.bridge == BridgeKind::None { 0 } else { l });
            // linear head: last op is a conv, no relu after it
            assert!(matches!(net.graph.ops.last(), Some(Op::Conv { .. })));
        }
    }

    #[test]
    fn bridge_ordering_of_counts() {
        for (b, f) in ARCHETYPES {
            let none = count_params(&ModelSpec::new(b, f, BridgeKind::None));
            let sum = count_params(&ModelSpec::new(b, f, BridgeKind::Sum));
            let cat = count_params(&ModelSpec::new(b, f, BridgeKind::Concat));
            assert!(cat > sum && sum >= none);
        }
    }

    #[test]
    fn rejects_illegal_specs() {
        for (b, f) in [(4, 5), (1, 5), (5, 0), (17, 5)] {
            let s = ModelSpec::new(b, f, BridgeKind::None);
            assert!(matches!(build_model::<f32>(&s, 0), Err(Error::Config(_))));
        }
        let s = ModelSpec::new(5, 5, BridgeKind::None).with_dropout(1.0);
        assert!(build_model::<f32>(&s, 0).is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        let s = ModelSpec::new(5, 10, BridgeKind::Concat);
        let a = build_model::<f32>(&s, 9).unwrap();
        let b = build_model::<f32>(&s, 9).unwrap();
        let c = build_model::<f32>(&s, 10).unwrap();
        assert_eq!(a.params, b.params);
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn resolution_preserving_and_divisibility() {
        let s = ModelSpec::new(5, 5, BridgeKind::None);
        let net = build_model::<f32>(&s, 0).unwrap();
        let x = Tensor4::full(Dims::new(1, 1, 384, 128), 0.5f32);
        assert_eq!(net.predict(&x).unwrap().dims(), Dims::new(1, 1, 384, 128));
        let deep = build_model::<f32>(&ModelSpec::new(9, 18, BridgeKind::Concat), 0).unwrap();
        assert!(deep.check_input(Dims::new(1, 1, 384, 128)).is_ok());
        assert!(deep.check_input(Dims::new(1, 1, 40, 128)).is_err());
        assert!(deep.check_input(Dims::new(1, 2, 384, 128)).is_err());
    }
}
