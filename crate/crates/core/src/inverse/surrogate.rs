//! Dense autoencoder with a coordinate head.
//!
//! The encoder compresses the two normalized field channels into a latent
//! vector; the decoder mirrors it back and the head maps the latent vector
//! to normalized scatterer coordinates, which are returned in metres.

use std::io::Read;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{Activation, ForwardCache, Mlp};
use crate::dataset::write_atomic;
use crate::error::{Error, Result};
use crate::losses::StageMask;
use crate::problems::NormStats;

/// Training stage a model has reached or is being trained in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Not trained yet.
    Untrained,
    /// Data losses plus the force loss, all parameters trainable.
    One,
    /// Sparse loss added, field reconstruction dropped, decoder frozen.
    Two,
    /// Sparse loss only, against synthetic targets.
    Transfer,
}

impl Stage {
    pub fn mask(self) -> StageMask {
        match self {
            Stage::Untrained | Stage::One => StageMask {
                fields: true,
                coords: true,
                force: true,
                sparse: false,
            },
            Stage::Two => StageMask {
                fields: false,
                coords: true,
                force: true,
                sparse: true,
            },
            Stage::Transfer => StageMask {
                fields: false,
                coords: false,
                force: false,
                sparse: true,
            },
        }
    }

    pub fn trains_decoder(self) -> bool {
        matches!(self, Stage::Untrained | Stage::One)
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "i" | "one" => Ok(Stage::One),
            "2" | "ii" | "two" => Ok(Stage::Two),
            "transfer" => Ok(Stage::Transfer),
            _ => Err(Error::InvalidParameter(format!("unknown stage {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct SurrogateArch {
    /// Flattened input length, `2 W H`.
    pub input_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub latent: usize,
    pub head_hidden: Vec<usize>,
    /// Twice the scatterer count.
    pub n_coords: usize,
    /// Activation of the autoencoder layers.
    pub act_encoder: Activation,
    /// Activation of the head layers.
    pub act_head: Activation,
}

impl SurrogateArch {
    /// 8192 -> 1024 -> 256 -> 64 for a 64x64 raster, head 64 -> 128 -> 64 -> 2n.
    pub fn desk(input_dim: usize, n_coords: usize) -> Self {
        Self {
            input_dim,
            encoder_hidden: vec![1024, 256],
            latent: 64,
            head_hidden: vec![128, 64],
            n_coords,
            act_encoder: Activation::Elu,
            act_head: Activation::Elu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.input_dim, self.latent, self.n_coords];
        if dims.contains(&0) || self.encoder_hidden.contains(&0) || self.head_hidden.contains(&0) {
            return Err(Error::InvalidParameter("zero-width layer".into()));
        }
        Ok(())
    }

    pub fn encoder_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim];
        s.extend(&self.encoder_hidden);
        s.push(self.latent);
        s
    }

    pub fn decoder_sizes(&self) -> Vec<usize> {
        let mut s = self.encoder_sizes();
        s.reverse();
        s
    }

    pub fn head_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.latent];
        s.extend(&self.head_hidden);
        s.push(self.n_coords);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub arch: SurrogateArch,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub head: Mlp,
    pub norm: NormStats,
    pub stage: Stage,
}

/// Caches of one batched forward pass.
#[derive(Debug, Clone)]
pub struct SurrogatePass {
    encoder: ForwardCache,
    decoder: Option<ForwardCache>,
    head: ForwardCache,
}

impl SurrogatePass {
    /// Reconstructed (normalized) channels, when the decoder ran.
    pub fn reconstruction(&self) -> Option<&Array2<f64>> {
        self.decoder.as_ref().map(|c| &c.output)
    }

    pub fn latent(&self) -> &Array2<f64> {
        &self.encoder.output
    }

    pub fn normalized_coords(&self) -> &Array2<f64> {
        &self.head.output
    }
}

/// Parameter gradients; the decoder part is absent when it was frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub encoder: Vec<f64>,
    pub decoder: Option<Vec<f64>>,
    pub head: Vec<f64>,
}

impl ParamGrads {
    /// Concatenation in encoder, decoder, head order, zeros for a frozen decoder.
    pub fn flatten(&self, decoder_len: usize) -> Vec<f64> {
        let mut v = self.encoder.clone();
        match &self.decoder {
            Some(d) => v.extend(d),
            None => v.extend(std::iter::repeat_n(0.0, decoder_len)),
        }
        v.extend(&self.head);
        v
    }
}

impl SurrogateModel {
    pub fn new<R: Rng>(arch: SurrogateArch, norm: NormStats, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let a = arch.act_encoder;
        let encoder = Mlp::random(&arch.encoder_sizes(), a, Activation::Linear, rng)?;
        let decoder = Mlp::random(&arch.decoder_sizes(), a, Activation::Linear, rng)?;
        let head = Mlp::random(&arch.head_sizes(), arch.act_head, Activation::Linear, rng)?;
        Self::assemble(arch, encoder, decoder, head, norm)
    }

    pub fn zeros(arch: SurrogateArch, norm: NormStats) -> Result<Self> {
        arch.validate()?;
        let a = arch.act_encoder;
        let encoder = Mlp::zeros(&arch.encoder_sizes(), a, Activation::Linear)?;
        let decoder = Mlp::zeros(&arch.decoder_sizes(), a, Activation::Linear)?;
        let head = Mlp::zeros(&arch.head_sizes(), arch.act_head, Activation::Linear)?;
        Self::assemble(arch, encoder, decoder, head, norm)
    }

    fn assemble(arch: SurrogateArch, encoder: Mlp, decoder: Mlp, head: Mlp, norm: NormStats) -> Result<Self> {
        if norm.coord_center.len() != arch.n_coords || norm.coord_half_range.len() != arch.n_coords {
            return Err(Error::Shape(format!(
                "normalization covers {} coordinates, head predicts {}",
                norm.coord_center.len(),
                arch.n_coords
            )));
        }
        Ok(Self {
            arch,
            encoder,
            decoder,
            head,
            norm,
            stage: Stage::Untrained,
        })
    }

    pub fn n_params(&self) -> usize {
        self.encoder.n_params() + self.decoder.n_params() + self.head.n_params()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.encoder.params.clone();
        v.extend(&self.decoder.params);
        v.extend(&self.head.params);
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape("parameter vector length".into()));
        }
        let (e, rest) = flat.split_at(self.encoder.n_params());
        let (d, h) = rest.split_at(self.decoder.n_params());
        self.encoder.params.copy_from_slice(e);
        self.decoder.params.copy_from_slice(d);
        self.head.params.copy_from_slice(h);
        Ok(())
    }

    pub fn forward_pass(&self, input: ArrayView2<f64>, with_decoder: bool) -> Result<SurrogatePass> {
        let encoder = self.encoder.forward_cached(input)?;
        let decoder = if with_decoder {
            Some(self.decoder.forward_cached(encoder.output.view())?)
        } else {
            None
        };
        let head = self.head.forward_cached(encoder.output.view())?;
        Ok(SurrogatePass {
            encoder,
            decoder,
            head,
        })
    }

    /// Predicted coordinates of every sample in metres.
    pub fn physical_coords(&self, pass: &SurrogatePass) -> Vec<Vec<f64>> {
        pass.head
            .output
            .rows()
            .into_iter()
            .map(|r| self.norm.coords_to_physical(r.as_slice().expect("contiguous row")))
            .collect()
    }

    /// Reconstruction and physical coordinates of a normalized input batch.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, Vec<Vec<f64>>)> {
        let pass = self.forward_pass(input, true)?;
        let coords = self.physical_coords(&pass);
        Ok((pass.decoder.expect("decoder ran").output, coords))
    }

    /// Backpropagates `d loss / d reconstruction` (normalized units) and
    /// `d loss / d coordinates` (metres) through the networks.
    pub fn backward(
        &self,
        pass: &SurrogatePass,
        grad_recon: Option<ArrayView2<f64>>,
        grad_coords: &[Vec<f64>],
    ) -> Result<ParamGrads> {
        let b = pass.head.output.nrows();
        if grad_coords.len() != b || grad_coords.iter().any(|g| g.len() != self.arch.n_coords) {
            return Err(Error::Shape("coordinate gradient shape".into()));
        }
        let half = &self.norm.coord_half_range;
        let g_head = Array2::from_shape_fn((b, self.arch.n_coords), |(i, j)| grad_coords[i][j] * half[j]);
        let (head, g_latent) = self.head.backward(&pass.head, g_head.view(), true)?;
        let mut g_latent = g_latent.expect("input gradient requested");
        let decoder = match (grad_recon, &pass.decoder) {
            (Some(g), Some(cache)) => {
                let (gd, gz) = self.decoder.backward(cache, g, true)?;
                g_latent += &gz.expect("input gradient requested");
                Some(gd)
            }
            (Some(_), None) => {
                return Err(Error::StageMismatch("reconstruction gradient without a decoder pass".into()))
            }
            _ => None,
        };
        let (encoder, _) = self.encoder.backward(&pass.encoder, g_latent.view(), false)?;
        Ok(ParamGrads {
            encoder,
            decoder,
            head,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &encode_checkpoint(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        decode_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    arch: SurrogateArch,
    stage: Stage,
    norm: NormStats,
    n_params: [usize; 3],
}

/// `"MSCK"`, u32 version, u64 header length, JSON header, then the
/// encoder, decoder and head parameters as little-endian f64.
pub fn encode_checkpoint(model: &SurrogateModel) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&CheckpointHeader {
        arch: model.arch.clone(),
        stage: model.stage,
        norm: model.norm.clone(),
        n_params: [
            model.encoder.n_params(),
            model.decoder.n_params(),
            model.head.n_params(),
        ],
    })?;
    let mut out = Vec::with_capacity(16 + header.len() + 8 * model.n_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for p in model.flat_params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(mut r: impl Read) -> Result<SurrogateModel> {
    let mut fixed = [0u8; 16];
    r.read_exact(&mut fixed)
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    if &fixed[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(fixed[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(fixed[8..16].try_into().expect("8 bytes")) as usize;
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let header: CheckpointHeader = serde_json::from_slice(&header)?;
    let mut model = SurrogateModel::zeros(header.arch, header.norm)?;
    if header.n_params
        != [
            model.encoder.n_params(),
            model.decoder.n_params(),
            model.head.n_params(),
        ]
    {
        return Err(Error::Format("parameter counts do not match the architecture".into()));
    }
    let mut bytes = Vec::with_capacity(8 * model.n_params());
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * model.n_params() {
        return Err(Error::Format("parameter block length".into()));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if flat.iter().any(|p| !p.is_finite()) {
        return Err(Error::Format("non-finite parameter".into()));
    }
    model.set_flat_params(&flat)?;
    model.stage = header.stage;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::stream_rng;

    pub(crate) fn tiny_norm(n_coords: usize) -> NormStats {
        NormStats {
            channel_mean: [0.5, 2.0],
            channel_std: [1.5, 0.5],
            coord_center: (0..n_coords).map(|i| i as f64 - 1.0).collect(),
            coord_half_range: (0..n_coords).map(|i| 2.0 + i as f64).collect(),
        }
    }

    fn tiny_arch() -> SurrogateArch {
        SurrogateArch {
            input_dim: 8,
            encoder_hidden: vec![5],
            latent: 3,
            head_hidden: vec![4],
            n_coords: 4,
            act_encoder: Activation::Elu,
            act_head: Activation::LeakyRelu,
        }
    }

    #[test]
    fn zero_model_returns_the_coordinate_centre() {
        let m = SurrogateModel::zeros(tiny_arch(), tiny_norm(4)).unwrap();
        let (recon, coords) = m.predict(Array2::zeros((2, 8)).view()).unwrap();
        assert!(recon.iter().all(|v| *v == 0.0));
        assert_eq!(coords[1], m.norm.coord_center);
    }

    #[test]
    fn desk_sizes() {
        let a = SurrogateArch::desk(8192, 10);
        assert_eq!(a.encoder_sizes(), vec![8192, 1024, 256, 64]);
        assert_eq!(a.decoder_sizes(), vec![64, 256, 1024, 8192]);
        assert_eq!(a.head_sizes(), vec![64, 128, 64, 10]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut m = SurrogateModel::new(tiny_arch(), tiny_norm(4), &mut stream_rng(5, 0)).unwrap();
        let x = Array2::from_shape_fn((2, 8), |(i, j)| ((i * 8 + j) as f64 * 0.37).sin());
        let target = Array2::from_shape_fn((2, 4), |(i, j)| (i + j) as f64);
        // L = 0.5 |recon - x|^2 + 0.5 |coords - target|^2
        let objective = |m: &SurrogateModel| {
            let (r, c) = m.predict(x.view()).unwrap();
            let mut l = 0.5 * (&r - &x).mapv(|v| v * v).sum();
            for (i, row) in c.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    l += 0.5 * (v - target[(i, j)]).powi(2);
                }
            }
            l
        };
        let pass = m.forward_pass(x.view(), true).unwrap();
        let gr = pass.reconstruction().unwrap() - &x;
        let gc: Vec<Vec<f64>> = m
            .physical_coords(&pass)
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().enumerate().map(|(j, v)| v - target[(i, j)]).collect())
            .collect();
        let g = m.backward(&pass, Some(gr.view()), &gc).unwrap();
        let flat = g.flatten(m.decoder.n_params());
        let mut params = m.flat_params();
        let h = 1e-6;
        for p in 0..params.len() {
            let orig = params[p];
            params[p] = orig + h;
            m.set_flat_params(&params).unwrap();
            let lp = objective(&m);
            params[p] = orig - h;
            m.set_flat_params(&params).unwrap();
            let lm = objective(&m);
            params[p] = orig;
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - flat[p]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {p}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = SurrogateModel::new(tiny_arch(), tiny_norm(4), &mut stream_rng(2, 0)).unwrap();
        m.stage = Stage::Two;
        let bytes = encode_checkpoint(&m).unwrap();
        assert_eq!(&bytes[..4], b"MSCK");
        let back = decode_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 8]).is_err());
    }
}
