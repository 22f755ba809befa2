//! Versioned binary container for trained models.
//!
//! Layout (little endian): magic `SETREC\0\x01`, format version `u32`,
//! vocabulary fingerprint `u64`, item count `u64`, JSON header length `u32`
//! and bytes, tensor count `u32`, then per tensor: name length `u16`, name,
//! rows `u64`, cols `u64`, `rows·cols` values as `f64`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::BlockLayout;
use crate::tensor::{AffineLayer, Matrix, Param};

use super::network::{AuthorEmbedding, Conditioner, Mlp2};
use super::{
    Autoencoder, CoocModel, MlpModel, ModelKind, ModelState, RecommenderSpec, SvdModel,
    TrainedModel, TruncatedSvd, Variant,
};

const MAGIC: &[u8; 8] = b"SETREC\0\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: RecommenderSpec,
    loss_history: Vec<f64>,
    notes: Vec<String>,
    #[serde(default)]
    layout: Option<Vec<BlockLayout>>,
    #[serde(default)]
    condition_dim: usize,
    #[serde(default)]
    svd_requested_rank: usize,
    #[serde(default)]
    svd_with_text: bool,
    #[serde(default)]
    variant: Option<Variant>,
}

fn put_mlp(tensors: &mut Vec<(String, Matrix)>, prefix: &str, net: &Mlp2) {
    for (i, layer) in net.layers().iter().enumerate() {
        tensors.push((format!("{prefix}.{i}.weight"), layer.weight.value.clone()));
        tensors.push((format!("{prefix}.{i}.bias"), layer.bias.value.clone()));
    }
}

fn put_conditioner(tensors: &mut Vec<(String, Matrix)>, c: &Conditioner) {
    if let Some(a) = &c.authors {
        tensors.push(("authors".into(), a.table.value.clone()));
    }
}

pub fn encode(model: &TrainedModel) -> Vec<u8> {
    let mut header = Header {
        spec: model.spec.clone(),
        loss_history: model.loss_history.clone(),
        notes: model.notes.clone(),
        layout: None,
        condition_dim: 0,
        svd_requested_rank: 0,
        svd_with_text: false,
        variant: None,
    };
    let mut tensors: Vec<(String, Matrix)> = Vec::new();
    match &model.state {
        ModelState::Cooc(m) => tensors.push(("cooc".into(), m.counts.clone())),
        ModelState::Svd(SvdModel::Plain {
            factors,
            requested_rank,
        }) => {
            header.svd_requested_rank = *requested_rank;
            tensors.push(("svd.u".into(), factors.u.clone()));
            tensors.push((
                "svd.sigma".into(),
                Matrix::from_vec(1, factors.sigma.len(), factors.sigma.clone())
                    .expect("row vector"),
            ));
            tensors.push(("svd.v".into(), factors.v.clone()));
        }
        ModelState::Svd(SvdModel::WithText {
            right,
            requested_rank,
            ..
        }) => {
            header.svd_requested_rank = *requested_rank;
            header.svd_with_text = true;
            tensors.push(("svd.v".into(), right.clone()));
        }
        ModelState::Mlp(m) => {
            header.layout = Some(m.conditioner.layout.clone());
            header.condition_dim = m.conditioner.dim;
            put_mlp(&mut tensors, "mlp", &m.net);
            put_conditioner(&mut tensors, &m.conditioner);
        }
        ModelState::Autoencoder(m) => {
            header.variant = Some(m.variant);
            if let Some(c) = &m.conditioner {
                header.layout = Some(c.layout.clone());
                header.condition_dim = c.dim;
                put_conditioner(&mut tensors, c);
            }
            put_mlp(&mut tensors, "encoder", &m.encoder);
            put_mlp(&mut tensors, "decoder", &m.decoder);
            if let Some(d) = &m.discriminator {
                put_mlp(&mut tensors, "discriminator", d);
            }
        }
    }
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&model.vocab_hash.to_le_bytes());
    out.extend_from_slice(&(model.n_items as u64).to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, m) in &tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Container(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Container("size overflow".into()))
    }
}

struct Tensors(BTreeMap<String, Matrix>);

impl Tensors {
    fn take(&mut self, name: &str) -> Result<Matrix> {
        self.0
            .remove(name)
            .ok_or_else(|| Error::Container(format!("missing tensor {name:?}")))
    }

    fn mlp(&mut self, prefix: &str, dropout: f64) -> Result<Mlp2> {
        let mut layer = |i: usize| -> Result<AffineLayer> {
            let w = self.take(&format!("{prefix}.{i}.weight"))?;
            let b = self.take(&format!("{prefix}.{i}.bias"))?;
            AffineLayer::from_parts(w, b.into_vec())
        };
        let layers = [layer(0)?, layer(1)?, layer(2)?];
        Mlp2::from_layers(layers, dropout)
    }

    fn conditioner(&mut self, layout: Vec<BlockLayout>, dim: usize) -> Conditioner {
        let authors = self.0.remove("authors").map(|t| AuthorEmbedding {
            table: Param::new(t),
        });
        Conditioner {
            layout,
            dim,
            authors,
        }
    }
}

pub fn decode(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Container("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Container(format!(
            "format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let vocab_hash = r.u64()?;
    let n_items = r.usize()?;
    let header_len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| Error::Container(format!("header: {e}")))?;
    let count = r.u32()?;
    let mut map = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Container("tensor name is not UTF-8".into()))?
            .to_string();
        let rows = r.usize()?;
        let cols = r.usize()?;
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Container("tensor size overflow".into()))?;
        let data = r
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        map.insert(name, Matrix::from_vec(rows, cols, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Container(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let mut t = Tensors(map);
    let spec = header.spec;
    let dropout = spec.hyper.dropout;
    let state = match spec.kind {
        ModelKind::Cooc => ModelState::Cooc(CoocModel {
            counts: t.take("cooc")?,
        }),
        ModelKind::Svd if header.svd_with_text => ModelState::Svd(SvdModel::WithText {
            right: t.take("svd.v")?,
            n_items,
            requested_rank: header.svd_requested_rank,
        }),
        ModelKind::Svd => ModelState::Svd(SvdModel::Plain {
            factors: TruncatedSvd {
                u: t.take("svd.u")?,
                sigma: t.take("svd.sigma")?.into_vec(),
                v: t.take("svd.v")?,
            },
            requested_rank: header.svd_requested_rank,
        }),
        ModelKind::Mlp => {
            let layout = header
                .layout
                .ok_or_else(|| Error::Container("mlp without condition layout".into()))?;
            let conditioner = t.conditioner(layout, header.condition_dim);
            ModelState::Mlp(MlpModel {
                net: t.mlp("mlp", dropout)?,
                conditioner,
            })
        }
        kind => {
            let variant = header
                .variant
                .or(kind.variant())
                .ok_or_else(|| Error::Container("missing autoencoder variant".into()))?;
            let conditioner = header
                .layout
                .map(|l| t.conditioner(l, header.condition_dim));
            let encoder = t.mlp("encoder", dropout)?;
            let decoder = t.mlp("decoder", dropout)?;
            let discriminator = if variant == Variant::Aae {
                Some(t.mlp("discriminator", dropout)?)
            } else {
                None
            };
            let h = &spec.hyper;
            ModelState::Autoencoder(Autoencoder {
                variant,
                code: h.code,
                encoder,
                decoder,
                conditioner,
                discriminator,
                dae_noise: h.dae_noise,
                kl_weight: h.kl_weight,
                literal_sign: h.aae_literal_sign,
            })
        }
    };
    if let Some(extra) = t.0.keys().next() {
        return Err(Error::Container(format!("unexpected tensor {extra:?}")));
    }
    Ok(TrainedModel {
        spec,
        vocab_hash,
        n_items,
        state,
        loss_history: header.loss_history,
        notes: header.notes,
    })
}
