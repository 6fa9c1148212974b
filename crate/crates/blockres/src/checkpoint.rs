//! Binary checkpoint: the bytes `BGNET1`, a little-endian `u64` header
//! length, a JSON header describing every network's layers, then each conv
//! layer's weights and biases as little-endian `f32` in declaration order.

use std::fs;
use std::path::Path;

use blockres_core::nn::{Conv2d, Layer, Network};
use blockres_core::policy::{Model, PolicyNet};
use blockres_core::Scalar;
use serde::{Deserialize, Serialize};

use crate::error::{format_err, io_err, Result};

pub const MAGIC: &[u8; 6] = b"BGNET1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum LayerSpec {
    #[serde(rename = "conv2d")]
    Conv {
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
    },
    #[serde(rename = "relu")]
    Relu,
    #[serde(rename = "maxpool2")]
    MaxPool2,
    #[serde(rename = "upsample2")]
    Upsample2,
    #[serde(rename = "residual_add")]
    ResidualAdd { skip: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub name: String,
    pub in_channels: usize,
    /// Policy output grid `(rows, cols)`; absent for the segmentation network.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<[usize; 2]>,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub networks: Vec<NetworkSpec>,
}

fn describe<T: Scalar>(name: &str, net: &Network<T>, grid: Option<(usize, usize)>) -> NetworkSpec {
    let layers = net
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Conv(c) => LayerSpec::Conv {
                cin: c.cin,
                cout: c.cout,
                k: c.k,
                stride: c.stride,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::MaxPool2 => LayerSpec::MaxPool2,
            Layer::Upsample2 => LayerSpec::Upsample2,
            Layer::ResidualAdd { skip } => LayerSpec::ResidualAdd { skip: *skip },
        })
        .collect();
    NetworkSpec {
        name: name.into(),
        in_channels: net.in_channels(),
        grid: grid.map(|(a, b)| [a, b]),
        layers,
    }
}

fn build<T: Scalar>(spec: &NetworkSpec) -> blockres_core::Result<Network<T>> {
    let layers = spec
        .layers
        .iter()
        .map(|l| {
            Ok(match *l {
                LayerSpec::Conv { cin, cout, k, stride } => Layer::Conv(Conv2d::zeros(cin, cout, k, stride)?),
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool2 => Layer::MaxPool2,
                LayerSpec::Upsample2 => Layer::Upsample2,
                LayerSpec::ResidualAdd { skip } => Layer::ResidualAdd { skip },
            })
        })
        .collect::<blockres_core::Result<Vec<_>>>()?;
    Network::new(spec.in_channels, layers)
}

/// Serializes the segmentation and policy networks of `model`.
pub fn encode<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let header = Header {
        networks: vec![
            describe("seg", &model.seg, None),
            describe("policy", model.policy.network(), Some(model.policy.grid_dims())),
        ],
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = MAGIC.to_vec();
    out.extend((json.len() as u64).to_le_bytes());
    out.extend(json);
    for net in [&model.seg, model.policy.network()] {
        for slice in net.param_slices() {
            for v in slice {
                out.extend((v.as_f64() as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Rebuilds a model with fresh optimizer state.
pub fn decode<T: Scalar>(bytes: &[u8]) -> std::result::Result<Model<T>, String> {
    if bytes.len() < 14 || &bytes[..6] != MAGIC {
        return Err("not a BGNET1 checkpoint".into());
    }
    let len = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes"));
    let end = usize::try_from(len)
        .ok()
        .and_then(|l| l.checked_add(14))
        .filter(|&e| e <= bytes.len());
    let end = end.ok_or("truncated header")?;
    let header: Header = serde_json::from_slice(&bytes[14..end]).map_err(|e| format!("header: {e}"))?;
    let [seg_spec, policy_spec] = &header.networks[..] else {
        return Err(format!("expected 2 networks, found {}", header.networks.len()));
    };
    let mut seg = build::<T>(seg_spec).map_err(|e| e.to_string())?;
    let mut body = build::<T>(policy_spec).map_err(|e| e.to_string())?;
    let mut floats = bytes[end..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let need = seg.param_count() + body.param_count();
    if bytes.len() - end != 4 * need {
        return Err(format!("expected {need} parameters, found {} bytes", bytes.len() - end));
    }
    for net in [&mut seg, &mut body] {
        let flat: Vec<T> = floats
            .by_ref()
            .take(net.param_count())
            .map(|v| T::of(v as f64))
            .collect();
        net.set_params(&flat).map_err(|e| e.to_string())?;
    }
    let [gy, gx] = policy_spec.grid.ok_or("policy network lacks a grid")?;
    let policy = PolicyNet::from_network(body, (gy, gx)).map_err(|e| e.to_string())?;
    Ok(Model::new(seg, policy))
}

pub fn save<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(io_err(path))
}

pub fn load<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes).map_err(|m| format_err(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use blockres_core::Rng;

    fn model() -> Model<f32> {
        Model::init(3, 4, 64, 64, 16, 4, &mut Rng::new(3)).unwrap()
    }

    #[test]
    fn round_trip_is_exact_in_f32() {
        let m = model();
        let bytes = encode(&m);
        assert_eq!(&bytes[..6], MAGIC);
        let back: Model<f32> = decode(&bytes).unwrap();
        assert_eq!(back.seg, m.seg);
        assert_eq!(back.policy.network(), m.policy.network());
        assert_eq!(back.policy.grid_dims(), m.policy.grid_dims());
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn layout_is_header_then_floats() {
        let m = model();
        let bytes = encode(&m);
        let len = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(&bytes[14..14 + len]).unwrap();
        assert_eq!(header.networks[0].name, "seg");
        assert_eq!(
            header.networks[0].layers[0],
            LayerSpec::Conv {
                cin: 3,
                cout: 16,
                k: 3,
                stride: 1
            }
        );
        assert_eq!(header.networks[1].grid, Some([4, 4]));
        let first = f32::from_le_bytes(bytes[14 + len..18 + len].try_into().unwrap());
        assert_eq!(first, m.seg.param_slices()[0][0]);
        assert_eq!(
            bytes.len(),
            14 + len + 4 * (m.seg.param_count() + m.policy.network().param_count())
        );
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = encode(&model());
        assert!(decode::<f32>(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode::<f32>(b"BGNET2\0\0\0\0\0\0\0\0").is_err());
        let mut long = bytes.clone();
        long[6..14].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode::<f32>(&long).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        let m = model();
        save(&m, &p).unwrap();
        assert_eq!(load::<f32>(&p).unwrap().seg, m.seg);
    }
}
