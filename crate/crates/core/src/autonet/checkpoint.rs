//! Model checkpoint: a single binary file with a versioned header, the
//! serialized network config as key=value text, and the parameter blobs in
//! layer-name-sorted order as little-endian f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{build_network, ConnectionMode, Network, NetworkConfig, RouterConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"SKELNET1";

pub fn config_to_text(cfg: &NetworkConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("input_channels={}\n", cfg.input_channels));
    out.push_str(&format!("stem_channels={}\n", cfg.stem_channels));
    out.push_str(&format!(
        "stage_channels={}\n",
        join(&cfg.stage_channels.to_vec())
    ));
    out.push_str(&format!("aspp_rates={}\n", join(&cfg.aspp_rates)));
    out.push_str(&format!("aspp_channels={}\n", cfg.aspp_channels));
    out.push_str(&format!("fusion_channels={}\n", cfg.fusion_channels));
    match &cfg.router {
        None => out.push_str("router=none\n"),
        Some(rc) => {
            out.push_str(&format!("router={}\n", rc.mode.as_str()));
            out.push_str(&format!(
                "router_kernel_lengths={}\n",
                join(&rc.kernel_lengths)
            ));
            out.push_str(&format!(
                "router_branch_channels={}\n",
                join(&rc.branch_channels)
            ));
        }
    }
    out.push_str(&format!(
        "final_activation={}\n",
        cfg.final_activation.as_str()
    ));
    out
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::config(format!("bad integer list entry: {p}")))
        })
        .collect()
}

pub fn config_from_text(text: &str) -> Result<NetworkConfig> {
    let mut cfg = NetworkConfig::default();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("bad config line: {line}")))?;
        apply_config_kv(&mut cfg, key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Applies one key=value override onto a network config; returns false when
/// the key is not a network key (callers may own other keys).
pub fn apply_config_kv(cfg: &mut NetworkConfig, key: &str, value: &str) -> Result<bool> {
    let parse_usize = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| Error::config(format!("bad integer for {key}: {v}")))
    };
    match key {
        "input_channels" => cfg.input_channels = parse_usize(value)?,
        "stem_channels" => cfg.stem_channels = parse_usize(value)?,
        "stage_channels" => {
            let list = parse_list(value)?;
            if list.len() != 3 {
                return Err(Error::config("stage_channels takes 3 entries"));
            }
            cfg.stage_channels = [list[0], list[1], list[2]];
        }
        "aspp_rates" => cfg.aspp_rates = parse_list(value)?,
        "aspp_channels" => cfg.aspp_channels = parse_usize(value)?,
        "fusion_channels" => cfg.fusion_channels = parse_usize(value)?,
        "router" => {
            if value == "none" {
                cfg.router = None;
            } else {
                let mode = ConnectionMode::parse(value)?;
                cfg.router
                    .get_or_insert_with(RouterConfig::default)
                    .mode = mode;
            }
        }
        "router_kernel_lengths" => {
            cfg.router
                .get_or_insert_with(RouterConfig::default)
                .kernel_lengths = parse_list(value)?;
        }
        "router_branch_channels" => {
            cfg.router
                .get_or_insert_with(RouterConfig::default)
                .branch_channels = parse_list(value)?;
        }
        "final_activation" => cfg.final_activation = super::Activation::parse(value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

pub fn save<S: Scalar>(net: &Network<S>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let cfg_text = config_to_text(&net.cfg);
    w.write_all(&(cfg_text.len() as u32).to_le_bytes())?;
    w.write_all(cfg_text.as_bytes())?;
    let params = net.params();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, tensor) in params {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
        w.write_all(name_bytes)?;
        let shape = tensor.shape();
        w.write_all(&[4u8])?;
        for dim in [shape.n, shape.c, shape.h, shape.w] {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&(v.to_f64c() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load<S: Scalar>(path: impl AsRef<Path>) -> Result<Network<S>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let cfg_len = read_u32(&mut r)? as usize;
    let mut cfg_bytes = vec![0u8; cfg_len];
    r.read_exact(&mut cfg_bytes)?;
    let cfg_text =
        String::from_utf8(cfg_bytes).map_err(|_| Error::Checkpoint("config not utf-8".into()))?;
    let cfg = config_from_text(&cfg_text)?;
    let mut net: Network<S> = build_network(&cfg, 0)?;

    let count = read_u32(&mut r)? as usize;
    let mut params = net.params_mut();
    if count != params.len() {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} != expected {}",
            params.len()
        )));
    }
    for (name, tensor) in params.iter_mut() {
        let name_len = read_u16(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let file_name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Checkpoint("name not utf-8".into()))?;
        if file_name != *name {
            return Err(Error::Checkpoint(format!(
                "parameter order mismatch: file has {file_name}, expected {name}"
            )));
        }
        let mut ndim = [0u8; 1];
        r.read_exact(&mut ndim)?;
        if ndim[0] != 4 {
            return Err(Error::Checkpoint(format!("bad ndim {}", ndim[0])));
        }
        let shape = tensor.shape();
        for expected in [shape.n, shape.c, shape.h, shape.w] {
            let dim = read_u32(&mut r)? as usize;
            if dim != expected {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for {name}: file {dim}, expected {expected}"
                )));
            }
        }
        for v in tensor.data_mut().iter_mut() {
            let mut buf = [0u8; 4];
            r.read_exact(&mut buf)?;
            *v = S::from_f64c(f32::from_le_bytes(buf) as f64);
        }
    }
    Ok(net)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf)?;
    Ok(u16::from_le_bytes(buf))
}
