//! Parameter files: a text manifest `<stem>.manifest` of `key = value` lines
//! plus a payload `<stem>.bin` of little-endian `f32`s (weights then biases,
//! layer by layer, in declaration order).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::layers::{LayerKind, LayerParams};
use super::network::Network;
use crate::error::{Error, Result};

pub const FORMAT: &str = "surfrl-params";
pub const FORMAT_VERSION: u32 = 1;

pub fn manifest_path(stem: &Path) -> PathBuf {
    with_suffix(stem, "manifest")
}

pub fn payload_path(stem: &Path) -> PathBuf {
    with_suffix(stem, "bin")
}

fn with_suffix(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn layer_line(kind: &LayerKind) -> String {
    match *kind {
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
        } => format!("conv2d {in_channels} {out_channels} {kernel} {stride}"),
        LayerKind::Dense { inputs, outputs } => format!("dense {inputs} {outputs}"),
    }
}

fn parse_layer(line: &str) -> Option<LayerKind> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    let nums: Option<Vec<usize>> = parts.iter().skip(1).map(|p| p.parse().ok()).collect();
    match (parts.first().copied(), nums?.as_slice()) {
        (Some("conv2d"), &[in_channels, out_channels, kernel, stride]) => Some(LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
        }),
        (Some("dense"), &[inputs, outputs]) => Some(LayerKind::Dense { inputs, outputs }),
        _ => None,
    }
}

pub fn payload_bytes(net: &Network) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(net.num_params() * 4);
    for layer in net.layers() {
        for v in layer.weights().data().iter().chain(layer.biases().data()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `<stem>.manifest` and `<stem>.bin`. `extra` keys are appended to
/// the manifest and must not collide with the reserved ones.
pub fn save(stem: &Path, net: &Network, extra: &BTreeMap<String, String>) -> Result<()> {
    let payload = payload_bytes(net);
    let mut manifest = String::new();
    let mut put = |k: &str, v: String| {
        manifest.push_str(k);
        manifest.push_str(" = ");
        manifest.push_str(&v);
        manifest.push('\n');
    };
    put("format", FORMAT.to_string());
    put("format_version", FORMAT_VERSION.to_string());
    put("seed", net.seed().to_string());
    put(
        "input_shape",
        net.input_shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","),
    );
    put("layer_count", net.layers().len().to_string());
    for (i, layer) in net.layers().iter().enumerate() {
        put(&format!("layer.{i}"), layer_line(&layer.kind()));
    }
    put("payload_floats", net.num_params().to_string());
    put("payload_sha256", sha256_hex(&payload));
    for (k, v) in extra {
        if RESERVED.contains(&k.as_str()) || k.starts_with("layer.") {
            return Err(Error::Config(format!("manifest key `{k}` is reserved")));
        }
        put(k, v.clone());
    }
    if let Some(parent) = stem.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mp = manifest_path(stem);
    fs::write(&mp, manifest).map_err(|e| Error::io(&mp, e))?;
    let pp = payload_path(stem);
    fs::write(&pp, payload).map_err(|e| Error::io(&pp, e))?;
    Ok(())
}

const RESERVED: &[&str] = &[
    "format",
    "format_version",
    "seed",
    "input_shape",
    "layer_count",
    "payload_floats",
    "payload_sha256",
];

pub fn read_manifest(stem: &Path) -> Result<BTreeMap<String, String>> {
    let mp = manifest_path(stem);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Corrupt {
                path: mp.clone(),
                reason: format!("line {} is not `key = value`", n + 1),
            });
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Loads a network and the full manifest.
pub fn load(stem: &Path) -> Result<(Network, BTreeMap<String, String>)> {
    let manifest = read_manifest(stem)?;
    let mp = manifest_path(stem);
    let corrupt = |reason: String| Error::Corrupt {
        path: mp.clone(),
        reason,
    };
    let get = |k: &str| {
        manifest
            .get(k)
            .ok_or_else(|| corrupt(format!("missing key `{k}`")))
    };
    if get("format")? != FORMAT {
        return Err(corrupt("not a parameter manifest".into()));
    }
    if get("format_version")? != &FORMAT_VERSION.to_string() {
        return Err(corrupt(format!("unsupported version {}", get("format_version")?)));
    }
    let seed: u64 = get("seed")?.parse().map_err(|_| corrupt("bad seed".into()))?;
    let input_shape: Vec<usize> = get("input_shape")?
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| corrupt("bad input_shape".into()))?;
    let count: usize = get("layer_count")?
        .parse()
        .map_err(|_| corrupt("bad layer_count".into()))?;
    let kinds: Vec<LayerKind> = (0..count)
        .map(|i| {
            parse_layer(get(&format!("layer.{i}"))?).ok_or_else(|| corrupt(format!("bad layer.{i}")))
        })
        .collect::<Result<_>>()?;

    let pp = payload_path(stem);
    let bytes = fs::read(&pp).map_err(|e| Error::io(&pp, e))?;
    if &sha256_hex(&bytes) != get("payload_sha256")? {
        return Err(Error::Corrupt {
            path: pp,
            reason: "payload checksum mismatch".into(),
        });
    }
    if bytes.len() % 4 != 0 {
        return Err(Error::Corrupt {
            path: pp,
            reason: "payload length not a multiple of 4".into(),
        });
    }
    let floats: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut offset = 0;
    let mut layers = Vec::with_capacity(count);
    for kind in kinds {
        let nw: usize = kind.weight_shape().iter().product();
        let nb = kind.bias_len();
        if offset + nw + nb > floats.len() {
            return Err(Error::Corrupt {
                path: pp,
                reason: "payload shorter than manifest shapes".into(),
            });
        }
        let w = floats[offset..offset + nw].to_vec();
        let b = floats[offset + nw..offset + nw + nb].to_vec();
        offset += nw + nb;
        layers.push(LayerParams::from_parts(kind, w, b)?);
    }
    if offset != floats.len() {
        return Err(Error::Corrupt {
            path: pp,
            reason: "payload longer than manifest shapes".into(),
        });
    }
    let net = Network::from_layers(input_shape, layers, seed).map_err(|e| corrupt(e.to_string()))?;
    Ok((net, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::tensor::Tensor;

    fn net() -> Network {
        let kinds = [
            LayerKind::Conv2d {
                in_channels: 2,
                out_channels: 4,
                kernel: 3,
                stride: 2,
            },
            LayerKind::Dense { inputs: 4, outputs: 3 },
        ];
        Network::new(vec![2, 3, 3], &kinds, &mut stream(9, Stream::Init), 9).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("p");
        let original = net();
        let mut extra = BTreeMap::new();
        extra.insert("d".to_string(), "3".to_string());
        save(&stem, &original, &extra).unwrap();
        let (loaded, manifest) = load(&stem).unwrap();
        assert_eq!(manifest["d"], "3");
        assert_eq!(loaded.seed(), 9);
        let x = Tensor::new(vec![2, 3, 3], (0..18).map(|i| i as f32 * 0.1).collect()).unwrap();
        let a = original.forward(&x).unwrap();
        let b = loaded.forward(&x).unwrap();
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn detects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("p");
        save(&stem, &net(), &BTreeMap::new()).unwrap();
        let mut bytes = fs::read(payload_path(&stem)).unwrap();
        bytes[0] ^= 0xff;
        fs::write(payload_path(&stem), &bytes).unwrap();
        assert!(matches!(load(&stem), Err(Error::Corrupt { .. })));
        assert!(load(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn reserved_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut extra = BTreeMap::new();
        extra.insert("seed".to_string(), "1".to_string());
        assert!(save(&dir.path().join("p"), &net(), &extra).is_err());
    }
}
