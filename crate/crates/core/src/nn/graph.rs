//! Layer stacks ("subnets") wired into a directed acyclic graph.
//!
//! A subnet consumes the concatenation of its sources, each either an
//! external input stream or the output of an earlier subnet. A frame stream
//! (images) must be the sole source of a subnet whose layers begin with
//! convolutions; the conv stack runs once per distinct frame and its
//! flattened output is gathered onto sequence rows through the stream's
//! index, which is how a slower video rate is held onto the model step rate.

use super::layer::{Layer, LayerSpec, Pass};
use super::param::Parameter;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum StreamKind {
    Sequence { dim: usize },
    Frames { channels: usize, height: usize, width: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: StreamKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Stream(usize),
    Subnet(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubnetSpec {
    pub name: String,
    pub sources: Vec<Source>,
    pub layers: Vec<LayerSpec>,
    pub frozen: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Objective {
    /// Softmax cross-entropy against per-step labels.
    Classify,
    /// Mean squared reconstruction of an input stream.
    Reconstruct { stream: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub streams: Vec<StreamSpec>,
    pub subnets: Vec<SubnetSpec>,
    pub objective: Objective,
    pub rng_seed: u64,
}

/// Input for one stream, `steps * batch` rows in time-major order.
#[derive(Clone, Debug)]
pub enum StreamData {
    Sequence(Tensor),
    /// `frames` is `[n, c, h, w]`; `index[row]` selects the frame for each row.
    Frames { frames: Tensor, index: Vec<usize> },
}

#[derive(Clone, Debug)]
pub struct GraphInput {
    pub steps: usize,
    pub batch: usize,
    pub streams: Vec<StreamData>,
}

impl GraphInput {
    pub fn rows(&self) -> usize {
        self.steps * self.batch
    }
}

#[derive(Clone, Debug, Default)]
struct SubnetCache {
    source_dims: Vec<usize>,
    /// Frame count and row index when the subnet reads a frame stream.
    gather: Option<(usize, Vec<usize>)>,
    /// `[c, h, w]` of the last conv output.
    conv_out: Option<[usize; 3]>,
    recorded: bool,
}

#[derive(Clone, Debug)]
struct SubnetState {
    layers: Vec<Layer>,
    cache: SubnetCache,
}

/// Instantiated model: specification plus live layers.
#[derive(Clone, Debug)]
pub struct ModelGraph {
    spec: GraphSpec,
    subnets: Vec<SubnetState>,
}

fn subnet_output_dim(spec: &SubnetSpec) -> Option<usize> {
    spec.layers.iter().rev().find_map(LayerSpec::output_dim)
}

impl GraphSpec {
    pub fn subnet_output_dim(&self, i: usize) -> usize {
        subnet_output_dim(&self.subnets[i]).unwrap_or(0)
    }

    pub fn source_dim(&self, s: Source) -> Result<usize> {
        match s {
            Source::Stream(k) => match self.streams.get(k).map(|st| &st.kind) {
                Some(StreamKind::Sequence { dim }) => Ok(*dim),
                Some(StreamKind::Frames { .. }) => Err(Error::Dimension(
                    "frame streams cannot be concatenated".into(),
                )),
                None => Err(Error::Input(format!("unknown stream {k}"))),
            },
            Source::Subnet(j) => Ok(self.subnet_output_dim(j)),
        }
    }

    /// Checks acyclic wiring and that every declared width chains.
    pub fn validate(&self) -> Result<()> {
        if self.subnets.is_empty() {
            return Err(Error::Input("graph has no subnets".into()));
        }
        for (i, sn) in self.subnets.iter().enumerate() {
            if sn.sources.is_empty() {
                return Err(Error::Input(format!("subnet {} has no sources", sn.name)));
            }
            for l in &sn.layers {
                l.validate()?;
            }
            for s in &sn.sources {
                if let Source::Subnet(j) = *s {
                    if j >= i {
                        return Err(Error::Input(format!(
                            "subnet {} reads subnet {j}, which does not precede it",
                            sn.name
                        )));
                    }
                }
            }
            let frame_src = sn.sources.iter().find_map(|s| match *s {
                Source::Stream(k) => match self.streams.get(k).map(|st| &st.kind) {
                    Some(StreamKind::Frames { channels, height, width }) => Some((*channels, *height, *width)),
                    _ => None,
                },
                _ => None,
            });
            let mut width = if let Some((c, h, w)) = frame_src {
                if sn.sources.len() != 1 {
                    return Err(Error::Dimension(format!("subnet {} mixes frames with other sources", sn.name)));
                }
                match sn.layers.first() {
                    Some(LayerSpec::Conv2d {
                        in_channels,
                        in_height,
                        in_width,
                        ..
                    }) if (*in_channels, *in_height, *in_width) == (c, h, w) => {}
                    _ => {
                        return Err(Error::Dimension(format!(
                            "subnet {} must start with a conv layer taking {c}x{h}x{w}",
                            sn.name
                        )))
                    }
                }
                c * h * w
            } else {
                let mut sum = 0;
                for s in &sn.sources {
                    sum += self.source_dim(*s)?;
                }
                sum
            };
            let mut seen_dense = false;
            for l in &sn.layers {
                if l.is_conv() {
                    if seen_dense {
                        return Err(Error::Dimension(format!("conv after dense layer in {}", sn.name)));
                    }
                } else if !matches!(l, LayerSpec::Dropout { .. }) {
                    seen_dense = true;
                }
                if let Some(d) = l.input_dim() {
                    if d != width {
                        return Err(Error::Dimension(format!(
                            "subnet {}: layer {l:?} takes {d}, receives {width}",
                            sn.name
                        )));
                    }
                }
                if let Some(d) = l.output_dim() {
                    width = d;
                }
            }
        }
        let last = self.subnets.last().expect("non-empty");
        match self.objective {
            Objective::Classify => {
                if !matches!(last.layers.last(), Some(LayerSpec::SoftmaxXent { .. })) {
                    return Err(Error::Input("classifier graph must end in a softmax layer".into()));
                }
            }
            Objective::Reconstruct { stream } => {
                let want = self.source_dim(Source::Stream(stream))?;
                if subnet_output_dim(last) != Some(want) {
                    return Err(Error::Dimension("reconstruction output width differs from its target".into()));
                }
            }
        }
        Ok(())
    }
}

fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.len() == 1 {
        return Ok(parts[0].clone());
    }
    let rows = parts[0].rows();
    if parts.iter().any(|p| p.rows() != rows) {
        return Err(Error::Dimension("concatenated sources differ in row count".into()));
    }
    let width: usize = parts.iter().map(|p| p.row_len()).sum();
    let mut out = Vec::with_capacity(rows * width);
    for r in 0..rows {
        for p in parts {
            out.extend_from_slice(p.row(r));
        }
    }
    Tensor::from_vec(&[rows, width], out)
}

impl ModelGraph {
    /// Validates `spec` and instantiates parameters from `spec.rng_seed`.
    pub fn new(spec: GraphSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        let mut subnets = Vec::with_capacity(spec.subnets.len());
        for sn in &spec.subnets {
            let mut layers = Vec::with_capacity(sn.layers.len());
            for (k, l) in sn.layers.iter().enumerate() {
                let mut layer = l.instantiate(&format!("{}.{k}", sn.name), &mut rng)?;
                for p in layer.params_mut() {
                    p.frozen = sn.frozen;
                }
                layers.push(layer);
            }
            subnets.push(SubnetState {
                layers,
                cache: SubnetCache::default(),
            });
        }
        Ok(ModelGraph { spec, subnets })
    }

    pub fn spec(&self) -> &GraphSpec {
        &self.spec
    }

    pub fn subnet_index(&self, name: &str) -> Option<usize> {
        self.spec.subnets.iter().position(|s| s.name == name)
    }

    pub fn set_frozen(&mut self, subnet: usize, frozen: bool) {
        self.spec.subnets[subnet].frozen = frozen;
        for l in &mut self.subnets[subnet].layers {
            for p in l.params_mut() {
                p.frozen = frozen;
            }
        }
    }

    pub fn is_frozen(&self, subnet: usize) -> bool {
        self.spec.subnets[subnet].frozen
    }

    pub fn params(&self) -> impl Iterator<Item = &Parameter> {
        self.subnets.iter().flat_map(|s| s.layers.iter().flat_map(|l| l.params()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.subnets
            .iter_mut()
            .flat_map(|s| s.layers.iter_mut().flat_map(|l| l.params_mut()))
    }

    pub fn subnet_params(&self, subnet: usize) -> impl Iterator<Item = &Parameter> {
        self.subnets[subnet].layers.iter().flat_map(|l| l.params())
    }

    pub fn subnet_params_mut(&mut self, subnet: usize) -> impl Iterator<Item = &mut Parameter> {
        self.subnets[subnet].layers.iter_mut().flat_map(|l| l.params_mut())
    }

    pub fn param_count(&self) -> usize {
        self.params().map(Parameter::len).sum()
    }

    pub fn subnet_param_count(&self, subnet: usize) -> usize {
        self.subnet_params(subnet).map(Parameter::len).sum()
    }

    pub fn layers(&self, subnet: usize) -> &[Layer] {
        &self.subnets[subnet].layers
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().for_each(Parameter::zero_grad);
    }

    /// Subnets whose parameters (or upstream parameters) are trainable.
    fn trainable_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.subnets.len()];
        for i in 0..self.subnets.len() {
            let own = self.subnet_params(i).any(|p| !p.frozen);
            let up = self.spec.subnets[i].sources.iter().any(|s| match *s {
                Source::Subnet(j) => flags[j],
                Source::Stream(_) => false,
            });
            flags[i] = own || up;
        }
        flags
    }

    fn check_input(&self, input: &GraphInput) -> Result<()> {
        if input.streams.len() != self.spec.streams.len() {
            return Err(Error::Dimension(format!(
                "model takes {} input streams, got {}",
                self.spec.streams.len(),
                input.streams.len()
            )));
        }
        let rows = input.rows();
        for (st, data) in self.spec.streams.iter().zip(&input.streams) {
            match (&st.kind, data) {
                (StreamKind::Sequence { dim }, StreamData::Sequence(t)) => {
                    if t.shape() != [rows, *dim] {
                        return Err(Error::Dimension(format!(
                            "stream {} expects [{rows}, {dim}], got {:?}",
                            st.name,
                            t.shape()
                        )));
                    }
                }
                (StreamKind::Frames { channels, height, width }, StreamData::Frames { frames, index }) => {
                    if frames.shape().len() != 4 || frames.shape()[1..] != [*channels, *height, *width] {
                        return Err(Error::Dimension(format!(
                            "stream {} expects [n, {channels}, {height}, {width}] frames, got {:?}",
                            st.name,
                            frames.shape()
                        )));
                    }
                    if index.len() != rows || index.iter().any(|&i| i >= frames.rows()) {
                        return Err(Error::Dimension(format!("stream {} has a bad frame index", st.name)));
                    }
                }
                _ => {
                    return Err(Error::Dimension(format!("stream {} has the wrong data kind", st.name)));
                }
            }
        }
        Ok(())
    }

    /// Runs the graph and returns the last subnet's output rows.
    ///
    /// With `record` set, caches are kept for [`ModelGraph::backward`].
    /// Subnets with nothing trainable at or above them always run in
    /// inference mode.
    pub fn forward<R: Rng>(&mut self, input: &GraphInput, training: bool, record: bool, rng: &mut R) -> Result<Tensor> {
        self.check_input(input)?;
        let trainable = self.trainable_flags();
        let mut outputs: Vec<Option<Tensor>> = vec![None; self.subnets.len()];
        for i in 0..self.subnets.len() {
            let rec = record && trainable[i];
            let mut pass = Pass {
                training: training && trainable[i],
                record: rec,
                steps: input.steps,
                batch: input.batch,
                rng: &mut *rng,
            };
            let sources = self.spec.subnets[i].sources.clone();
            let mut cache = SubnetCache {
                recorded: rec,
                ..SubnetCache::default()
            };
            let state = &mut self.subnets[i];
            let mut first_dense = 0;
            let mut x = match sources.as_slice() {
                [Source::Stream(k)] if matches!(input.streams[*k], StreamData::Frames { .. }) => {
                    let StreamData::Frames { frames, index } = &input.streams[*k] else {
                        unreachable!()
                    };
                    let mut h = frames.clone();
                    while first_dense < state.layers.len() && state.layers[first_dense].is_conv() {
                        h = state.layers[first_dense].forward(h, &mut pass)?;
                        first_dense += 1;
                    }
                    let n = h.rows();
                    let s = [h.shape()[1], h.shape()[2], h.shape()[3]];
                    cache.conv_out = Some(s);
                    let h = h.reshape(&[n, s[0] * s[1] * s[2]])?;
                    let w = h.row_len();
                    let mut g = Vec::with_capacity(index.len() * w);
                    for &f in index {
                        g.extend_from_slice(h.row(f));
                    }
                    cache.gather = Some((n, index.clone()));
                    Tensor::from_vec(&[index.len(), w], g)?
                }
                _ => {
                    let mut parts = Vec::with_capacity(sources.len());
                    for s in &sources {
                        let t = match *s {
                            Source::Stream(k) => match &input.streams[k] {
                                StreamData::Sequence(t) => t,
                                StreamData::Frames { .. } => {
                                    return Err(Error::Dimension("frames mixed into concatenation".into()))
                                }
                            },
                            Source::Subnet(j) => outputs[j].as_ref().expect("topological order"),
                        };
                        cache.source_dims.push(t.row_len());
                        parts.push(t);
                    }
                    concat_rows(&parts)?
                }
            };
            for layer in &mut state.layers[first_dense..] {
                x = layer.forward(x, &mut pass)?;
            }
            x.ensure_finite(&self.spec.subnets[i].name)?;
            state.cache = cache;
            outputs[i] = Some(x);
        }
        Ok(outputs.pop().flatten().expect("non-empty graph"))
    }

    /// Backpropagates `d_out` (gradient of the loss with respect to the
    /// output rows) and accumulates gradients into every unfrozen parameter.
    pub fn backward(&mut self, d_out: &Tensor) -> Result<()> {
        let trainable = self.trainable_flags();
        let n = self.subnets.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[n - 1] = Some(d_out.clone());
        for i in (0..n).rev() {
            let Some(dy) = grads[i].take() else { continue };
            if !trainable[i] {
                continue;
            }
            if !self.subnets[i].cache.recorded {
                return Err(Error::Sequencing("backward without a recorded forward pass".into()));
            }
            let sources = self.spec.subnets[i].sources.clone();
            let need_input = sources.iter().any(|s| matches!(*s, Source::Subnet(j) if trainable[j]));
            let state = &mut self.subnets[i];
            let first_dense = state.layers.iter().take_while(|l| l.is_conv()).count();
            let mut g = dy;
            for k in (first_dense..state.layers.len()).rev() {
                let need = k > 0 || need_input;
                match state.layers[k].backward(&g, need) {
                    Some(d) => g = d,
                    None => break,
                }
            }
            if let Some((frames, index)) = state.cache.gather.clone() {
                let [c, h, w] = state.cache.conv_out.expect("conv output shape");
                let width = c * h * w;
                let mut acc = vec![0.0; frames * width];
                for (r, &f) in index.iter().enumerate() {
                    for (a, b) in acc[f * width..(f + 1) * width].iter_mut().zip(g.row(r)) {
                        *a += b;
                    }
                }
                let mut gc = Tensor::from_vec(&[frames, c, h, w], acc)?;
                for k in (0..first_dense).rev() {
                    match state.layers[k].backward(&gc, k > 0) {
                        Some(d) => {
                            let shape = state.layers[k]
                                .conv_input()
                                .expect("conv prefix");
                            gc = d.reshape(&[frames, shape[0], shape[1], shape[2]])?;
                        }
                        None => break,
                    }
                }
                continue;
            }
            if !need_input {
                continue;
            }
            let dims = state.cache.source_dims.clone();
            let mut offset = 0;
            for (s, d) in sources.iter().zip(&dims) {
                if let Source::Subnet(j) = *s {
                    if trainable[j] {
                        let rows = g.rows();
                        let mut part = Vec::with_capacity(rows * d);
                        for r in 0..rows {
                            part.extend_from_slice(&g.row(r)[offset..offset + d]);
                        }
                        let part = Tensor::from_vec(&[rows, *d], part)?;
                        grads[j] = Some(match grads[j].take() {
                            Some(mut prev) => {
                                for (a, b) in prev.data_mut().iter_mut().zip(part.data()) {
                                    *a += b;
                                }
                                prev
                            }
                            None => part,
                        });
                    }
                }
                offset += d;
            }
        }
        Ok(())
    }

    /// Sets the rate of every dropout layer.
    pub fn set_dropout(&mut self, p: f64) {
        for (sn, state) in self.spec.subnets.iter_mut().zip(&mut self.subnets) {
            for (ls, l) in sn.layers.iter_mut().zip(&mut state.layers) {
                if let (LayerSpec::Dropout { p: sp }, Layer::Dropout(d)) = (ls, l) {
                    *sp = p;
                    d.p = p;
                }
            }
        }
    }

    /// Copies parameter values of subnet `from` in `src` into subnet `to`.
    pub fn copy_subnet_from(&mut self, to: usize, src: &ModelGraph, from: usize) -> Result<()> {
        let a: Vec<&[usize]> = self.subnet_params(to).map(|p| p.value.shape()).collect();
        let b: Vec<&[usize]> = src.subnet_params(from).map(|p| p.value.shape()).collect();
        if a != b {
            return Err(Error::Dimension(format!(
                "subnet {} does not match subnet {} of the source model",
                self.spec.subnets[to].name, src.spec.subnets[from].name
            )));
        }
        let values: Vec<Tensor> = src.subnet_params(from).map(|p| p.value.clone()).collect();
        for (p, v) in self.subnet_params_mut(to).zip(values) {
            p.value = v;
        }
        Ok(())
    }

    /// Hash of every max/ReLU switching decision in the last recorded pass.
    pub fn switch_signature(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for s in &self.subnets {
            for l in &s.layers {
                l.hash_switches(&mut h);
            }
        }
        h
    }
}
