use super::{ModelKind, ModelMeta, TrainedModel};
use crate::error::{Error, Result};
use crate::features::{FeatureContract, FeatureKind, StreamContract, CONTEXT};
use crate::nn::{GraphSpec, LayerSpec, ModelGraph, Objective, Source, StreamKind, StreamSpec, SubnetSpec};
use crate::video::ROI;
use serde::{Deserialize, Serialize};

/// Smallest width any scaled layer may take.
pub const MIN_WIDTH: usize = 8;

pub fn scaled_width(width: usize, scale: f64) -> usize {
    ((width as f64 * scale).round() as usize).max(MIN_WIDTH)
}

/// Settings shared by every builder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub width_scale: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            width_scale: 1.0,
            dropout: 0.1,
            seed: 1,
        }
    }
}

impl BuildOptions {
    fn w(&self, width: usize) -> usize {
        scaled_width(width, self.width_scale)
    }
}

/// Acoustic input of the A-RNN.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frontend {
    Mel,
    Spectrogram,
    Sadjadi,
}

impl Frontend {
    pub fn feature(self) -> FeatureKind {
        match self {
            Frontend::Mel => FeatureKind::Mel,
            Frontend::Spectrogram => FeatureKind::Spec,
            Frontend::Sadjadi => FeatureKind::Sadjadi,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrnnConfig {
    pub frontend: Frontend,
    pub audio_fc: usize,
    pub audio_lstm: usize,
    pub video_conv: usize,
    pub video_lstm: usize,
    pub fusion_lstm: usize,
    pub fusion_fc: usize,
    pub options: BuildOptions,
}

impl Default for BrnnConfig {
    fn default() -> Self {
        BrnnConfig {
            frontend: Frontend::Mel,
            audio_fc: 512,
            audio_lstm: 512,
            video_conv: 64,
            video_lstm: 64,
            fusion_lstm: 512,
            fusion_fc: 512,
            options: BuildOptions::default(),
        }
    }
}

impl BrnnConfig {
    /// Paper-size configuration for a front-end: the A-RNN has 4096 units
    /// per layer over the spectrogram and 256 over the 5D features.
    pub fn for_frontend(frontend: Frontend, options: BuildOptions) -> Self {
        let audio = match frontend {
            Frontend::Mel => 512,
            Frontend::Spectrogram => 4096,
            Frontend::Sadjadi => 256,
        };
        BrnnConfig {
            frontend,
            audio_fc: audio,
            audio_lstm: audio,
            options,
            ..BrnnConfig::default()
        }
    }

    pub fn with_scale(width_scale: f64) -> Self {
        let mut c = BrnnConfig::default();
        c.options.width_scale = width_scale;
        c
    }

    pub fn contract(&self) -> FeatureContract {
        FeatureContract {
            streams: vec![
                StreamContract::new("audio", &[(self.frontend.feature(), CONTEXT)]),
                StreamContract::new("video", &[(FeatureKind::Roi, 1)]),
            ],
        }
    }
}

fn seq(name: &str, dim: usize) -> StreamSpec {
    StreamSpec {
        name: name.into(),
        kind: StreamKind::Sequence { dim },
    }
}

fn roi_stream() -> StreamSpec {
    StreamSpec {
        name: "video".into(),
        kind: StreamKind::Frames {
            channels: 1,
            height: ROI,
            width: ROI,
        },
    }
}

/// Layer list builder that follows every hidden layer with dropout.
struct Stack {
    layers: Vec<LayerSpec>,
    width: usize,
    dropout: f64,
}

impl Stack {
    fn new(input: usize, dropout: f64) -> Self {
        Stack {
            layers: Vec::new(),
            width: input,
            dropout,
        }
    }

    fn maxout(mut self, out: usize) -> Self {
        self.layers.push(LayerSpec::maxout(self.width, out));
        self.layers.push(LayerSpec::Dropout { p: self.dropout });
        self.width = out;
        self
    }

    fn lstm(mut self, hidden: usize) -> Self {
        self.layers.push(LayerSpec::lstm(self.width, hidden));
        self.layers.push(LayerSpec::Dropout { p: self.dropout });
        self.width = hidden;
        self
    }

    fn plain_maxout(mut self, out: usize) -> Self {
        self.layers.push(LayerSpec::maxout(self.width, out));
        self.width = out;
        self
    }

    fn softmax(mut self) -> Vec<LayerSpec> {
        self.layers.push(LayerSpec::softmax(self.width));
        self.layers
    }

    fn done(self) -> Vec<LayerSpec> {
        self.layers
    }
}

fn subnet(name: &str, sources: Vec<Source>, layers: Vec<LayerSpec>) -> SubnetSpec {
    SubnetSpec {
        name: name.into(),
        sources,
        layers,
        frozen: false,
    }
}

/// Three 5x5 stride-2 conv layers take the 32x32 ROI to 1x1.
fn cnn_layers(channels: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(1, channels, ROI),
        LayerSpec::conv(channels, channels, 14),
        LayerSpec::conv(channels, channels, 5),
    ]
}

/// Fusion-style head: two LSTMs, one maxout layer and the softmax.
fn head(input: usize, lstm: usize, fc: usize, dropout: f64) -> Vec<LayerSpec> {
    Stack::new(input, dropout).lstm(lstm).lstm(lstm).maxout(fc).softmax()
}

pub fn build_brnn(cfg: &BrnnConfig) -> Result<ModelGraph> {
    let o = &cfg.options;
    let audio_dim = cfg.frontend.feature().dim() * CONTEXT;
    let (afc, al) = (o.w(cfg.audio_fc), o.w(cfg.audio_lstm));
    let (vc, vl) = (o.w(cfg.video_conv), o.w(cfg.video_lstm));
    let a = Stack::new(audio_dim, o.dropout).maxout(afc).maxout(afc).lstm(al).lstm(al).done();
    let mut v = cnn_layers(vc);
    v.extend(Stack::new(vc, o.dropout).lstm(vl).lstm(vl).done());
    let av = head(al + vl, o.w(cfg.fusion_lstm), o.w(cfg.fusion_fc), o.dropout);
    ModelGraph::new(GraphSpec {
        streams: vec![seq("audio", audio_dim), roi_stream()],
        subnets: vec![
            subnet("a-rnn", vec![Source::Stream(0)], a),
            subnet("v-rnn", vec![Source::Stream(1)], v),
            subnet("av-rnn", vec![Source::Subnet(0), Source::Subnet(1)], av),
        ],
        objective: Objective::Classify,
        rng_seed: o.seed,
    })
}

/// Static MFCC-context classifier with four maxout layers.
pub fn build_ryant_dnn(o: &BuildOptions) -> Result<ModelGraph> {
    let dim = FeatureKind::Mfcc.dim() * CONTEXT;
    let w = o.w(256);
    let layers = Stack::new(dim, o.dropout).maxout(w).maxout(w).maxout(w).maxout(w).softmax();
    ModelGraph::new(GraphSpec {
        streams: vec![seq("audio", dim)],
        subnets: vec![subnet("dnn", vec![Source::Stream(0)], layers)],
        objective: Objective::Classify,
        rng_seed: o.seed,
    })
}

pub fn build_tao2017(o: &BuildOptions) -> Result<ModelGraph> {
    let adim = FeatureKind::Sadjadi.dim() * CONTEXT;
    let vdim = FeatureKind::Visual26.dim();
    let (aw, vw) = (o.w(256), o.w(64));
    let a = Stack::new(adim, o.dropout).maxout(aw).maxout(aw).lstm(aw).lstm(aw).done();
    let v = Stack::new(vdim, o.dropout).maxout(vw).maxout(vw).lstm(vw).lstm(vw).done();
    let av = head(aw + vw, o.w(512), o.w(512), o.dropout);
    ModelGraph::new(GraphSpec {
        streams: vec![seq("audio", adim), seq("video", vdim)],
        subnets: vec![
            subnet("audio-rnn", vec![Source::Stream(0)], a),
            subnet("video-rnn", vec![Source::Stream(1)], v),
            subnet("fusion", vec![Source::Subnet(0), Source::Subnet(1)], av),
        ],
        objective: Objective::Classify,
        rng_seed: o.seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AriavStage {
    Autoencoder,
    Classifier,
}

fn ariav_dim() -> usize {
    FeatureKind::Mfcc.dim() * CONTEXT + FeatureKind::FlowVar.dim()
}

/// Stage one is the 146-256-64-256-146 autoencoder. Stage two copies its
/// trained encoder, frozen, under a recurrent classifier, so it needs the
/// stage-one model.
pub fn build_ariav(stage: AriavStage, autoencoder: Option<&ModelGraph>, o: &BuildOptions) -> Result<ModelGraph> {
    let dim = ariav_dim();
    let (hid, code) = (o.w(256), 64);
    let encoder = subnet(
        "encoder",
        vec![Source::Stream(0)],
        Stack::new(dim, 0.0).plain_maxout(hid).plain_maxout(code).done(),
    );
    let streams = vec![seq("audiovisual", dim)];
    match stage {
        AriavStage::Autoencoder => ModelGraph::new(GraphSpec {
            streams,
            subnets: vec![
                encoder,
                subnet(
                    "decoder",
                    vec![Source::Subnet(0)],
                    Stack::new(code, 0.0).plain_maxout(hid).plain_maxout(dim).done(),
                ),
            ],
            objective: Objective::Reconstruct { stream: 0 },
            rng_seed: o.seed,
        }),
        AriavStage::Classifier => {
            let ae = autoencoder
                .ok_or_else(|| Error::Sequencing("the Ariav classifier needs a trained autoencoder".into()))?;
            let src = ae
                .subnet_index("encoder")
                .filter(|_| matches!(ae.spec().objective, Objective::Reconstruct { .. }))
                .ok_or_else(|| Error::Sequencing("source model is not an Ariav autoencoder".into()))?;
            let mut encoder = encoder;
            encoder.frozen = true;
            let w = o.w(256);
            let mut g = ModelGraph::new(GraphSpec {
                streams,
                subnets: vec![encoder, subnet("classifier", vec![Source::Subnet(0)], head(code, w, w, o.dropout))],
                objective: Objective::Classify,
                rng_seed: o.seed,
            })?;
            g.copy_subnet_from(0, ae, src)?;
            Ok(g)
        }
    }
}

/// Copies the pretrained BRNN's A-RNN (or V-RNN), frozen, under a fresh
/// head sized like the AV-RNN.
pub fn build_unimodal(kind: ModelKind, pretrained: Option<&TrainedModel>, o: &BuildOptions) -> Result<TrainedModel> {
    let src = pretrained.ok_or_else(|| Error::Sequencing(format!("{kind} needs a trained BRNN")))?;
    if src.meta.kind != ModelKind::BrnnE2e {
        return Err(Error::Sequencing(format!("{kind} must start from a brnn-e2e model, got {}", src.meta.kind)));
    }
    let (name, stream) = match kind {
        ModelKind::AudioOnly => ("a-rnn", 0),
        ModelKind::VideoOnly => ("v-rnn", 1),
        other => return Err(Error::Input(format!("{other} is not a unimodal model"))),
    };
    let spec = src.graph.spec();
    let idx = src
        .graph
        .subnet_index(name)
        .ok_or_else(|| Error::Sequencing(format!("pretrained model has no {name} subnet")))?;
    let fusion = src
        .graph
        .subnet_index("av-rnn")
        .ok_or_else(|| Error::Sequencing("pretrained model has no av-rnn subnet".into()))?;
    let mut lstm = None;
    let mut fc = None;
    for l in &spec.subnets[fusion].layers {
        match *l {
            LayerSpec::Lstm { hidden, .. } => lstm = lstm.or(Some(hidden)),
            LayerSpec::MaxoutFc { output_dim, .. } => fc = Some(output_dim),
            _ => {}
        }
    }
    let (lstm, fc) = lstm.zip(fc).ok_or_else(|| Error::Sequencing("unexpected av-rnn layout".into()))?;
    let mut frozen = spec.subnets[idx].clone();
    frozen.sources = vec![Source::Stream(0)];
    frozen.frozen = true;
    let width = spec.subnet_output_dim(idx);
    let mut graph = ModelGraph::new(GraphSpec {
        streams: vec![spec.streams[stream].clone()],
        subnets: vec![frozen, subnet("head", vec![Source::Subnet(0)], head(width, lstm, fc, o.dropout))],
        objective: Objective::Classify,
        rng_seed: o.seed,
    })?;
    graph.copy_subnet_from(0, &src.graph, idx)?;
    let contract = FeatureContract {
        streams: vec![src.meta.contract.streams[stream].clone()],
    };
    let want = contract.features();
    let meta = ModelMeta {
        kind,
        normalizers: src.meta.normalizers.iter().filter(|n| want.contains(&n.feature)).cloned().collect(),
        contract,
        width_scale: src.meta.width_scale,
    };
    TrainedModel::new(graph, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Parameter;

    /// Parameter count recomputed from the layer algebra.
    fn algebra(l: &LayerSpec) -> usize {
        match *l {
            LayerSpec::MaxoutFc {
                input_dim,
                output_dim,
                pieces,
            } => pieces * output_dim * (input_dim + 1),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * (in_channels * kernel * kernel + 1),
            LayerSpec::Lstm { input_dim, hidden } => 4 * hidden * (input_dim + hidden + 1),
            LayerSpec::SoftmaxXent { input_dim, classes } => classes * (input_dim + 1),
            LayerSpec::Dropout { .. } => 0,
        }
    }

    fn audit(g: &ModelGraph) {
        let want: usize = g.spec().subnets.iter().flat_map(|s| &s.layers).map(algebra).sum();
        assert_eq!(g.param_count(), want);
    }

    fn widths(g: &ModelGraph, subnet: &str) -> Vec<usize> {
        let i = g.subnet_index(subnet).unwrap();
        g.spec().subnets[i].layers.iter().filter_map(LayerSpec::output_dim).collect()
    }

    #[test]
    fn brnn_topology_at_full_width() {
        let g = build_brnn(&BrnnConfig::default()).unwrap();
        let s = g.spec();
        assert_eq!(s.streams[0].kind, StreamKind::Sequence { dim: 286 });
        assert_eq!(widths(&g, "a-rnn"), vec![512, 512, 512, 512]);
        assert_eq!(s.subnet_output_dim(1), 64);
        let v = &s.subnets[1].layers;
        assert!(matches!(v[2], LayerSpec::Conv2d { out_channels: 64, in_height: 5, .. }));
        assert_eq!(s.source_dim(Source::Subnet(0)).unwrap() + s.source_dim(Source::Subnet(1)).unwrap(), 576);
        assert_eq!(s.subnets[2].layers[0].input_dim(), Some(576));
        assert_eq!(widths(&g, "av-rnn"), vec![512, 512, 512, 2]);
        audit(&g);
    }

    #[test]
    fn frontends_change_only_the_audio_input() {
        for (f, dim, width) in [(Frontend::Spectrogram, 3520, 4096), (Frontend::Sadjadi, 55, 256)] {
            let cfg = BrnnConfig::for_frontend(f, BuildOptions::default());
            let g = build_brnn(&cfg).unwrap();
            assert_eq!(g.spec().streams[0].kind, StreamKind::Sequence { dim });
            assert_eq!(widths(&g, "a-rnn"), vec![width; 4]);
            assert_eq!(widths(&g, "av-rnn"), vec![512, 512, 512, 2]);
            cfg.contract().check(g.spec()).unwrap();
            audit(&g);
        }
    }

    #[test]
    fn scaled_widths_stay_above_floor() {
        let g = build_brnn(&BrnnConfig::with_scale(0.125)).unwrap();
        assert_eq!(widths(&g, "a-rnn"), vec![64, 64, 64, 64]);
        assert_eq!(widths(&g, "v-rnn"), vec![8 * 14 * 14, 8 * 5 * 5, 8, 8, 8]);
        let g = build_brnn(&BrnnConfig::with_scale(0.01)).unwrap();
        assert!(g
            .spec()
            .subnets
            .iter()
            .flat_map(|s| &s.layers)
            .filter_map(LayerSpec::output_dim)
            .all(|w| w >= MIN_WIDTH || w == 2));
    }

    #[test]
    fn baseline_topologies() {
        let o = BuildOptions::default();
        let r = build_ryant_dnn(&o).unwrap();
        assert_eq!(r.spec().streams[0].kind, StreamKind::Sequence { dim: 143 });
        assert_eq!(widths(&r, "dnn"), vec![256, 256, 256, 256, 2]);
        assert!(!r.spec().subnets[0].layers.iter().any(|l| matches!(l, LayerSpec::Lstm { .. })));
        audit(&r);

        let t = build_tao2017(&o).unwrap();
        assert_eq!(t.spec().streams[0].kind, StreamKind::Sequence { dim: 55 });
        assert_eq!(t.spec().streams[1].kind, StreamKind::Sequence { dim: 26 });
        assert_eq!(widths(&t, "audio-rnn"), vec![256; 4]);
        assert_eq!(widths(&t, "video-rnn"), vec![64; 4]);
        assert_eq!(t.spec().subnets[2].layers[0].input_dim(), Some(320));
        assert_eq!(widths(&t, "fusion"), vec![512, 512, 512, 2]);
        audit(&t);

        let ae = build_ariav(AriavStage::Autoencoder, None, &o).unwrap();
        assert_eq!(ae.spec().streams[0].kind, StreamKind::Sequence { dim: 146 });
        assert_eq!(widths(&ae, "encoder"), vec![256, 64]);
        assert_eq!(widths(&ae, "decoder"), vec![256, 146]);
        audit(&ae);
        let c = build_ariav(AriavStage::Classifier, Some(&ae), &o).unwrap();
        assert_eq!(c.spec().subnets[1].layers[0].input_dim(), Some(64));
        assert_eq!(widths(&c, "classifier"), vec![256, 256, 256, 2]);
        audit(&c);
    }

    #[test]
    fn ariav_classifier_requires_autoencoder() {
        let o = BuildOptions::default();
        let err = build_ariav(AriavStage::Classifier, None, &o).unwrap_err();
        assert!(matches!(err, Error::Sequencing(_)));
        let not_ae = build_ryant_dnn(&o).unwrap();
        assert!(matches!(
            build_ariav(AriavStage::Classifier, Some(&not_ae), &o),
            Err(Error::Sequencing(_))
        ));
    }

    #[test]
    fn ariav_classifier_copies_encoder_frozen() {
        let o = BuildOptions {
            width_scale: 0.125,
            ..BuildOptions::default()
        };
        let mut ae = build_ariav(AriavStage::Autoencoder, None, &o).unwrap();
        for p in ae.subnet_params_mut(0) {
            p.value.data_mut().iter_mut().for_each(|v| *v += 0.5);
        }
        let c = build_ariav(AriavStage::Classifier, Some(&ae), &o).unwrap();
        let a: Vec<&Parameter> = ae.subnet_params(0).collect();
        let b: Vec<&Parameter> = c.subnet_params(0).collect();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.value, y.value);
            assert!(y.frozen);
        }
    }

    fn brnn_model(scale: f64) -> TrainedModel {
        let cfg = BrnnConfig::with_scale(scale);
        let meta = ModelMeta {
            kind: ModelKind::BrnnE2e,
            contract: cfg.contract(),
            normalizers: Vec::new(),
            width_scale: scale,
        };
        TrainedModel::new(build_brnn(&cfg).unwrap(), meta).unwrap()
    }

    #[test]
    fn unimodal_heads_wrap_frozen_subnets() {
        let src = brnn_model(1.0);
        let o = BuildOptions::default();
        let a = build_unimodal(ModelKind::AudioOnly, Some(&src), &o).unwrap();
        let v = build_unimodal(ModelKind::VideoOnly, Some(&src), &o).unwrap();
        assert_eq!(a.graph.subnet_param_count(0), src.graph.subnet_param_count(0));
        assert_eq!(v.graph.subnet_param_count(0), src.graph.subnet_param_count(1));
        assert_eq!(a.graph.spec().subnets[1].layers[0].input_dim(), Some(512));
        assert_eq!(v.graph.spec().subnets[1].layers[0].input_dim(), Some(64));
        assert_eq!(widths(&a.graph, "head"), vec![512, 512, 512, 2]);
        assert!(a.graph.subnet_params(0).all(|p| p.frozen));
        assert!(a.graph.subnet_params(1).all(|p| !p.frozen));
        for (x, y) in src.graph.subnet_params(1).zip(v.graph.subnet_params(0)) {
            assert_eq!(x.value, y.value);
        }
        audit(&a.graph);
        audit(&v.graph);
    }

    #[test]
    fn unimodal_requires_pretrained_brnn() {
        let o = BuildOptions::default();
        assert!(matches!(build_unimodal(ModelKind::AudioOnly, None, &o), Err(Error::Sequencing(_))));
        let mut m = brnn_model(0.125);
        m.meta.kind = ModelKind::Tao2017Brnn;
        assert!(matches!(build_unimodal(ModelKind::VideoOnly, Some(&m), &o), Err(Error::Sequencing(_))));
    }
}
