//! The learned gate field: a strided-conv depth encoder producing a latent
//! code, a positional-encoded MLP head predicting SDF values in the camera
//! frame, and an auxiliary transposed-conv decoder reconstructing clean
//! depth (used only while training).

use super::layers::{relu, relu_backward, Conv2d, ConvT2d, Dense, TensorGrad};
use super::LatentCode;
use crate::geometry::{encoding_len, positional_encoding_into, RngStream, Vec3};
use crate::perception::DepthImage;
use ndarray::{Array1, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

/// Fixed architecture family: 4 stride-2 convolutions, a dense projection
/// to the latent, a 4-hidden-layer MLP head, and the transposed stack for
/// reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub width: usize,
    pub height: usize,
    pub latent_dim: usize,
    pub pe_bands: usize,
    /// Depth values are multiplied by this before entering the encoder.
    pub depth_scale: f64,
    pub conv_channels: [usize; 4],
    pub hidden: usize,
    pub hidden_layers: usize,
}

impl NetConfig {
    pub fn desk(latent_dim: usize) -> Self {
        Self {
            width: 64,
            height: 48,
            latent_dim,
            pe_bands: 4,
            depth_scale: 0.1,
            conv_channels: [8, 16, 32, 64],
            hidden: 128,
            hidden_layers: 4,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.width % 16 != 0 || self.height % 16 != 0 {
            return Err("image dimensions must be divisible by 16".into());
        }
        if self.latent_dim == 0 || self.hidden == 0 || self.hidden_layers == 0 {
            return Err("layer sizes must be positive".into());
        }
        Ok(())
    }

    /// (channels, h, w) of the final conv feature map.
    pub fn feature_dims(&self) -> (usize, usize, usize) {
        (self.conv_channels[3], self.height / 16, self.width / 16)
    }

    pub fn flat_dim(&self) -> usize {
        let (c, h, w) = self.feature_dims();
        c * h * w
    }

    pub fn sdf_in_dim(&self) -> usize {
        self.latent_dim + encoding_len(self.pe_bands)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub convs: Vec<Conv2d>,
    pub dense: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    /// Hidden layers carry ReLU; the last entry is the linear head.
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderWeights {
    pub dense: Dense,
    pub deconvs: Vec<ConvT2d>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateSdfModel {
    pub cfg: NetConfig,
    pub encoder: EncoderWeights,
    pub sdf: MlpWeights,
    pub recon: DecoderWeights,
}

impl GateSdfModel {
    pub fn init(cfg: NetConfig, rng: &mut RngStream) -> Self {
        cfg.validate().expect("invalid net config");
        let ch = cfg.conv_channels;
        let convs = vec![
            Conv2d::init(1, ch[0], 3, 2, 1, rng),
            Conv2d::init(ch[0], ch[1], 3, 2, 1, rng),
            Conv2d::init(ch[1], ch[2], 3, 2, 1, rng),
            Conv2d::init(ch[2], ch[3], 3, 2, 1, rng),
        ];
        let enc_dense = Dense::init(cfg.flat_dim(), cfg.latent_dim, rng);

        let mut layers = Vec::new();
        let mut in_dim = cfg.sdf_in_dim();
        for _ in 0..cfg.hidden_layers {
            layers.push(Dense::init(in_dim, cfg.hidden, rng));
            in_dim = cfg.hidden;
        }
        layers.push(Dense::init(in_dim, 1, rng));

        let recon_dense = Dense::init(cfg.latent_dim, cfg.flat_dim(), rng);
        let deconvs = vec![
            ConvT2d::init(ch[3], ch[2], 3, 2, 1, rng),
            ConvT2d::init(ch[2], ch[1], 3, 2, 1, rng),
            ConvT2d::init(ch[1], ch[0], 3, 2, 1, rng),
            ConvT2d::init(ch[0], 1, 3, 2, 1, rng),
        ];

        Self {
            cfg,
            encoder: EncoderWeights { convs, dense: enc_dense },
            sdf: MlpWeights { layers },
            recon: DecoderWeights { dense: recon_dense, deconvs },
        }
    }

    /// Depth image as a normalized (1, h, w) tensor.
    fn image_tensor(&self, img: &DepthImage) -> Array3<f64> {
        assert_eq!(img.width, self.cfg.width, "image width mismatch");
        assert_eq!(img.height, self.cfg.height, "image height mismatch");
        let mut x = Array3::zeros((1, img.height, img.width));
        for v in 0..img.height {
            for u in 0..img.width {
                x[[0, v, u]] = img.at(u, v) as f64 * self.cfg.depth_scale;
            }
        }
        x
    }

    pub fn encode(&self, img: &DepthImage) -> LatentCode {
        let (z, _) = self.encode_trace(img);
        z.to_vec()
    }

    pub fn encode_trace(&self, img: &DepthImage) -> (Array1<f64>, EncodeTrace) {
        let x0 = self.image_tensor(img);
        let mut inputs = Vec::with_capacity(4);
        let mut cols = Vec::with_capacity(4);
        let mut pre = Vec::with_capacity(4);
        let mut x = x0;
        for conv in &self.encoder.convs {
            let (y, c) = conv.forward(&x);
            inputs.push(x);
            cols.push(c);
            pre.push(y.clone());
            let mut a = y;
            relu(&mut a);
            x = a;
        }
        let flat = x.into_shape((1, self.cfg.flat_dim())).unwrap();
        let z = self.encoder.dense.forward(&flat);
        (z.row(0).to_owned(), EncodeTrace { inputs, cols, pre, flat })
    }

    /// Backpropagate a latent gradient through the encoder.
    pub fn encoder_backward(&self, trace: &EncodeTrace, grad_z: &Array1<f64>) -> EncoderGrads {
        let gz = grad_z.view().insert_axis(Axis(0)).to_owned();
        let (gdense, gflat) = self.encoder.dense.backward(&trace.flat, &gz);
        let (c, h, w) = self.cfg.feature_dims();
        let mut grad = gflat.into_shape((c, h, w)).unwrap();
        let mut convs = vec![None, None, None, None];
        for i in (0..self.encoder.convs.len()).rev() {
            relu_backward(&trace.pre[i], &mut grad);
            let dims = trace.inputs[i].dim();
            let (g, gx) = self.encoder.convs[i].backward(&trace.cols[i], dims, &grad);
            convs[i] = Some(g);
            grad = gx;
        }
        EncoderGrads { convs: convs.into_iter().map(Option::unwrap).collect(), dense: gdense }
    }

    /// Assemble the MLP input rows: latent concatenated with the positional
    /// encoding of each camera-frame point.
    pub fn sdf_inputs(&self, z: &[f64], points_cam: &[Vec3]) -> Array2<f64> {
        assert_eq!(z.len(), self.cfg.latent_dim, "latent dimension mismatch");
        let pe_len = encoding_len(self.cfg.pe_bands);
        let mut rows = Array2::zeros((points_cam.len(), z.len() + pe_len));
        let mut pe = Vec::with_capacity(pe_len);
        for (i, &p) in points_cam.iter().enumerate() {
            for (j, &zj) in z.iter().enumerate() {
                rows[[i, j]] = zj;
            }
            pe.clear();
            positional_encoding_into(p, self.cfg.pe_bands, &mut pe);
            for (j, &e) in pe.iter().enumerate() {
                rows[[i, z.len() + j]] = e;
            }
        }
        rows
    }

    pub fn sdf_forward(&self, inputs: &Array2<f64>) -> (Array1<f64>, MlpTrace) {
        mlp_forward(&self.sdf, inputs)
    }

    pub fn decode_batch(&self, z: &[f64], points_cam: &[Vec3]) -> Vec<f64> {
        let inputs = self.sdf_inputs(z, points_cam);
        let (out, _) = self.sdf_forward(&inputs);
        out.to_vec()
    }

    pub fn decode(&self, z: &[f64], p_cam: Vec3) -> f64 {
        self.decode_batch(z, &[p_cam])[0]
    }

    /// Reconstruction forward pass in normalized units.
    pub fn recon_forward(&self, z: &Array1<f64>) -> (Array3<f64>, ReconTrace) {
        let z_row = z.view().insert_axis(Axis(0)).to_owned();
        let dense_pre = self.recon.dense.forward(&z_row);
        let mut act = dense_pre.clone();
        relu(&mut act);
        let (c, h, w) = self.cfg.feature_dims();
        let mut x = act.into_shape((c, h, w)).unwrap();
        let mut deconv_inputs = Vec::with_capacity(4);
        let mut deconv_pre = Vec::with_capacity(3);
        let last = self.recon.deconvs.len() - 1;
        for (i, deconv) in self.recon.deconvs.iter().enumerate() {
            let y = deconv.forward(&x);
            deconv_inputs.push(x);
            if i < last {
                deconv_pre.push(y.clone());
                let mut a = y;
                relu(&mut a);
                x = a;
            } else {
                x = y;
            }
        }
        (x, ReconTrace { z_row, dense_pre, deconv_inputs, deconv_pre })
    }

    pub fn recon_backward(&self, trace: &ReconTrace, grad_img: &Array3<f64>) -> (DecoderGrads, Array1<f64>) {
        let last = self.recon.deconvs.len() - 1;
        let mut grad = grad_img.clone();
        let mut deconvs = vec![None, None, None, None];
        for i in (0..self.recon.deconvs.len()).rev() {
            if i < last {
                relu_backward(&trace.deconv_pre[i], &mut grad);
            }
            let (g, gx) = self.recon.deconvs[i].backward(&trace.deconv_inputs[i], &grad);
            deconvs[i] = Some(g);
            grad = gx;
        }
        let (c, h, w) = self.cfg.feature_dims();
        let mut gflat = grad.into_shape((1, c * h * w)).unwrap();
        relu_backward(&trace.dense_pre, &mut gflat);
        let (gdense, gz) = self.recon.dense.backward(&trace.z_row, &gflat);
        (
            DecoderGrads { dense: gdense, deconvs: deconvs.into_iter().map(Option::unwrap).collect() },
            gz.row(0).to_owned(),
        )
    }

    /// User-facing reconstruction in meters.
    pub fn reconstruct(&self, z: &[f64]) -> DepthImage {
        let z = Array1::from_vec(z.to_vec());
        let (img_norm, _) = self.recon_forward(&z);
        let mut out = DepthImage::zeros(self.cfg.width, self.cfg.height);
        for v in 0..self.cfg.height {
            for u in 0..self.cfg.width {
                let m = img_norm[[0, v, u]] / self.cfg.depth_scale;
                out.set(u, v, m.max(0.0) as f32);
            }
        }
        out
    }

    /// Weight/bias pairs in a stable declaration order.
    fn tensor_pairs(&self) -> Vec<(&Array2<f64>, &Array1<f64>)> {
        let mut out = Vec::new();
        for c in &self.encoder.convs {
            out.push((&c.w, &c.b));
        }
        out.push((&self.encoder.dense.w, &self.encoder.dense.b));
        for l in &self.sdf.layers {
            out.push((&l.w, &l.b));
        }
        out.push((&self.recon.dense.w, &self.recon.dense.b));
        for d in &self.recon.deconvs {
            out.push((&d.w, &d.b));
        }
        out
    }

    fn tensor_pairs_mut(&mut self) -> Vec<(&mut Array2<f64>, &mut Array1<f64>)> {
        let mut out: Vec<(&mut Array2<f64>, &mut Array1<f64>)> = Vec::new();
        for c in &mut self.encoder.convs {
            out.push((&mut c.w, &mut c.b));
        }
        out.push((&mut self.encoder.dense.w, &mut self.encoder.dense.b));
        for l in &mut self.sdf.layers {
            out.push((&mut l.w, &mut l.b));
        }
        out.push((&mut self.recon.dense.w, &mut self.recon.dense.b));
        for d in &mut self.recon.deconvs {
            out.push((&mut d.w, &mut d.b));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensor_pairs().iter().map(|(w, b)| w.len() + b.len()).sum()
    }

    /// All parameters in a stable declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.tensor_pairs() {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for (w, b) in self.tensor_pairs_mut() {
            w.iter_mut().for_each(|v| *v = it.next().expect("flat too short"));
            b.iter_mut().for_each(|v| *v = it.next().expect("flat too short"));
        }
        assert!(it.next().is_none(), "flat parameter vector too long");
    }

    /// Round every parameter through f32, matching the persisted precision
    /// so that save / load reproduces forward outputs exactly.
    pub fn quantize_f32(&mut self) {
        let flat: Vec<f64> = self.flatten().iter().map(|&v| v as f32 as f64).collect();
        self.unflatten(&flat);
    }
}

pub struct EncodeTrace {
    inputs: Vec<Array3<f64>>,
    cols: Vec<Array2<f64>>,
    pre: Vec<Array3<f64>>,
    flat: Array2<f64>,
}

pub struct MlpTrace {
    /// Input to each layer, in order.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of each hidden layer.
    pre: Vec<Array2<f64>>,
}

pub struct ReconTrace {
    z_row: Array2<f64>,
    dense_pre: Array2<f64>,
    deconv_inputs: Vec<Array3<f64>>,
    deconv_pre: Vec<Array3<f64>>,
}

pub fn mlp_forward(mlp: &MlpWeights, x: &Array2<f64>) -> (Array1<f64>, MlpTrace) {
    let last = mlp.layers.len() - 1;
    let mut inputs = Vec::with_capacity(mlp.layers.len());
    let mut pre = Vec::with_capacity(last);
    let mut h = x.clone();
    for (i, layer) in mlp.layers.iter().enumerate() {
        let y = layer.forward(&h);
        inputs.push(h);
        if i < last {
            pre.push(y.clone());
            let mut a = y;
            relu(&mut a);
            h = a;
        } else {
            h = y;
        }
    }
    (h.column(0).to_owned(), MlpTrace { inputs, pre })
}

/// Backward through the MLP; returns per-layer grads and the gradient with
/// respect to the input rows.
pub fn mlp_backward(mlp: &MlpWeights, trace: &MlpTrace, grad_out: &Array1<f64>) -> (Vec<TensorGrad>, Array2<f64>) {
    let last = mlp.layers.len() - 1;
    let mut grad = grad_out.view().insert_axis(Axis(1)).to_owned();
    let mut grads = vec![None; mlp.layers.len()];
    for i in (0..mlp.layers.len()).rev() {
        if i < last {
            relu_backward(&trace.pre[i], &mut grad);
        }
        let (g, gx) = mlp.layers[i].backward(&trace.inputs[i], &grad);
        grads[i] = Some(g);
        grad = gx;
    }
    (grads.into_iter().map(Option::unwrap).collect(), grad)
}

#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub convs: Vec<TensorGrad>,
    pub dense: TensorGrad,
}

#[derive(Debug, Clone)]
pub struct DecoderGrads {
    pub dense: TensorGrad,
    pub deconvs: Vec<TensorGrad>,
}

/// Full gradient mirror of [`GateSdfModel`], flattened in the same order
/// as [`GateSdfModel::flatten`].
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub encoder: EncoderGrads,
    pub sdf: Vec<TensorGrad>,
    pub recon: DecoderGrads,
}

impl ModelGrads {
    pub fn zeros(model: &GateSdfModel) -> Self {
        Self {
            encoder: EncoderGrads {
                convs: model.encoder.convs.iter().map(|c| c.zero_grad()).collect(),
                dense: model.encoder.dense.zero_grad(),
            },
            sdf: model.sdf.layers.iter().map(|l| l.zero_grad()).collect(),
            recon: DecoderGrads {
                dense: model.recon.dense.zero_grad(),
                deconvs: model.recon.deconvs.iter().map(|d| d.zero_grad()).collect(),
            },
        }
    }

    pub fn add_encoder(&mut self, g: &EncoderGrads, scale: f64) {
        for (a, b) in self.encoder.convs.iter_mut().zip(&g.convs) {
            a.w.scaled_add(scale, &b.w);
            a.b.scaled_add(scale, &b.b);
        }
        self.encoder.dense.w.scaled_add(scale, &g.dense.w);
        self.encoder.dense.b.scaled_add(scale, &g.dense.b);
    }

    pub fn add_sdf(&mut self, g: &[TensorGrad], scale: f64) {
        for (a, b) in self.sdf.iter_mut().zip(g) {
            a.w.scaled_add(scale, &b.w);
            a.b.scaled_add(scale, &b.b);
        }
    }

    pub fn add_recon(&mut self, g: &DecoderGrads, scale: f64) {
        self.recon.dense.w.scaled_add(scale, &g.dense.w);
        self.recon.dense.b.scaled_add(scale, &g.dense.b);
        for (a, b) in self.recon.deconvs.iter_mut().zip(&g.deconvs) {
            a.w.scaled_add(scale, &b.w);
            a.b.scaled_add(scale, &b.b);
        }
    }

    pub fn add(&mut self, other: &ModelGrads) {
        self.add_encoder(&other.encoder, 1.0);
        self.add_sdf(&other.sdf, 1.0);
        self.add_recon(&other.recon, 1.0);
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut push = |g: &TensorGrad| {
            out.extend(g.w.iter());
            out.extend(g.b.iter());
        };
        for g in &self.encoder.convs {
            push(g);
        }
        push(&self.encoder.dense);
        for g in &self.sdf {
            push(g);
        }
        push(&self.recon.dense);
        for g in &self.recon.deconvs {
            push(g);
        }
        out
    }
}

/// Encoder half of the trained model, usable as a perception-side depth
/// encoder behind the latent cache.
pub struct NeuralDepthEncoder {
    pub model: std::sync::Arc<GateSdfModel>,
}

impl crate::perception::DepthEncoder for NeuralDepthEncoder {
    fn encode(&self, img: &DepthImage, _world_to_camera: &crate::geometry::RigidTransform) -> LatentCode {
        self.model.encode(img)
    }
}

/// Decoder half: predicts SDF values for camera-frame points.
pub struct NeuralSdfDecoder {
    pub model: std::sync::Arc<GateSdfModel>,
}

impl crate::perception::LatentDecoder for NeuralSdfDecoder {
    fn decode_batch(&self, z: &LatentCode, points_cam: &[Vec3]) -> Vec<f64> {
        self.model.decode_batch(z, points_cam)
    }
}
