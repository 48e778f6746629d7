//! Dataset and checkpoint containers: a magic line, `key = value` metadata,
//! a `BINARY` marker line, then little-endian f64 payload.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use opres_core::basis::BasisSpec;
use opres_core::eval::Estimator;
use opres_core::fnn::{FnnParams, MultiIndexSpec, Network, TrainedNetwork};
use opres_core::pca::PcaModel;
use opres_core::problems::ProblemSpec;
use opres_core::quadrature::{GridFunction, QuadratureGrid};
use opres_core::train::{Dataset, DatasetMeta, EncoderPair};

use crate::error::CliError;

pub const DATA_MAGIC: &str = "OPRESDATA v1";
pub const MODEL_MAGIC: &str = "OPRESMODEL v1";
const MARKER: &str = "BINARY";

fn bad(kind: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("malformed {kind} file: {msg}"))
}

/// Ordered metadata; keys are written in insertion order.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Header {
    entries: Vec<(String, String)>,
}

impl Header {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        let v = value.to_string();
        debug_assert!(!v.contains('\n'));
        self.entries.push((key.to_string(), v));
    }

    fn map(&self) -> BTreeMap<&str, &str> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect()
    }
}

struct Fields<'a> {
    kind: &'static str,
    map: BTreeMap<&'a str, &'a str>,
}

impl<'a> Fields<'a> {
    fn raw(&self, key: &str) -> Result<&'a str, CliError> {
        self.map
            .get(key)
            .copied()
            .ok_or_else(|| bad(self.kind, format!("missing key `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)?
            .parse()
            .map_err(|e| bad(self.kind, format!("key `{key}`: {e}")))
    }

    fn json<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T, CliError> {
        serde_json::from_str(self.raw(key)?).map_err(|e| bad(self.kind, format!("key `{key}`: {e}")))
    }

    fn list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        self.raw(key)?
            .split(',')
            .map(|s| s.parse().map_err(|e| bad(self.kind, format!("key `{key}`: {e}"))))
            .collect()
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("metadata serializes")
}

pub fn write_container(magic: &str, header: &Header, payload: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(256 + payload.len() * 8);
    out.extend_from_slice(magic.as_bytes());
    out.push(b'\n');
    for (k, v) in &header.entries {
        out.extend_from_slice(format!("{k} = {v}\n").as_bytes());
    }
    out.extend_from_slice(format!("payload_bytes = {}\n{MARKER}\n", payload.len() * 8).as_bytes());
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_container(bytes: &[u8], magic: &str, kind: &'static str) -> Result<(Header, Vec<f64>), CliError> {
    let mut pos = 0;
    let mut next_line = || -> Result<&str, CliError> {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad(kind, "unterminated header"))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| bad(kind, "header is not UTF-8"))
    };
    if next_line()? != magic {
        return Err(bad(kind, format!("expected `{magic}` on the first line")));
    }
    let mut header = Header::default();
    let mut declared = None;
    loop {
        let line = next_line()?;
        if line == MARKER {
            break;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| bad(kind, format!("bad header line `{line}`")))?;
        if k == "payload_bytes" {
            declared = Some(v.parse::<usize>().map_err(|e| bad(kind, e))?);
        } else {
            header.push(k, v);
        }
    }
    let body = &bytes[pos..];
    let declared = declared.ok_or_else(|| bad(kind, "missing payload_bytes"))?;
    if declared != body.len() || declared % 8 != 0 {
        return Err(bad(
            kind,
            format!("payload is {} bytes, header declares {declared}", body.len()),
        ));
    }
    let payload = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, payload))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn encode_dataset_file(ds: &Dataset) -> Vec<u8> {
    let g = ds.grid();
    let meta = ds.meta();
    let mut h = Header::default();
    h.push("dim", g.dim());
    h.push("grid_order", g.order());
    h.push("n_pairs", ds.len());
    h.push("operator", meta.operator_id());
    h.push("sigma", meta.sigma());
    h.push("seed", meta.seed);
    h.push("problem", to_json(&meta.problem));
    let mut payload = Vec::with_capacity(2 * ds.len() * g.len());
    for (u, v) in ds.pairs() {
        payload.extend_from_slice(u.values());
        payload.extend_from_slice(v.values());
    }
    write_container(DATA_MAGIC, &h, &payload)
}

pub fn decode_dataset_file(bytes: &[u8]) -> Result<Dataset, CliError> {
    const KIND: &str = "dataset";
    let (h, payload) = read_container(bytes, DATA_MAGIC, KIND)?;
    let f = Fields {
        kind: KIND,
        map: h.map(),
    };
    let dim: usize = f.parse("dim")?;
    let order: usize = f.parse("grid_order")?;
    let n_pairs: usize = f.parse("n_pairs")?;
    let seed: u64 = f.parse("seed")?;
    let problem: ProblemSpec = f.json("problem")?;
    let grid = QuadratureGrid::new(dim, order).map_err(|e| bad(KIND, e))?;
    let npts = grid.len();
    if payload.len() != 2 * n_pairs * npts {
        return Err(bad(
            KIND,
            format!("expected 2·{n_pairs}·{npts} values, found {}", payload.len()),
        ));
    }
    let pairs = payload
        .chunks_exact(2 * npts)
        .map(|c| {
            Ok((
                GridFunction::new(grid.clone(), c[..npts].to_vec())?,
                GridFunction::new(grid.clone(), c[npts..].to_vec())?,
            ))
        })
        .collect::<opres_core::Result<Vec<_>>>()
        .map_err(|e| bad(KIND, e))?;
    Dataset::new(pairs, DatasetMeta { seed, problem }).map_err(|e| bad(KIND, e))
}

/// Trained estimator plus a human-readable architecture line.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub estimator: Estimator,
    pub arch: String,
}

fn widths_of(net: &FnnParams) -> String {
    let mut w = vec![net.input_dim()];
    w.extend(net.layers().iter().map(|l| l.outputs));
    w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn push_pca(h: &mut Header, payload: &mut Vec<f64>, tag: &str, m: &PcaModel) {
    h.push(&format!("pca_{tag}_dim"), m.encode_dim());
    h.push(&format!("pca_{tag}_eigenvalues"), to_json(&m.eigenvalues()));
    h.push(&format!("pca_{tag}_trailing_energy"), m.trailing_energy());
    for phi in m.eigenfunctions() {
        payload.extend_from_slice(phi.values());
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let est = &ck.estimator;
    let mut h = Header::default();
    let mut payload = est.network.flat_params();
    h.push("arch", &ck.arch);
    match &est.network {
        TrainedNetwork::Dense(net) => {
            h.push("network", "dense");
            h.push("widths", widths_of(net));
        }
        TrainedNetwork::MultiIndex(net) => {
            h.push("network", "multi_index");
            h.push("input_dim", Network::input_dim(net));
            h.push("d0", net.d0());
            h.push("heads", net.heads().len());
            h.push("head_depth", net.head_depth());
            h.push("head_width", net.head_width());
        }
    }
    h.push("clip", est.network.clip());
    h.push("param_count", est.network.param_count());
    match &est.encoders {
        EncoderPair::Basis { x, y } => {
            h.push("encoder", "basis");
            h.push("grid_dim", x.grid().dim());
            h.push("grid_order", x.grid().order());
            h.push("encoder_x", to_json(x.spec()));
            h.push("encoder_y", to_json(y.spec()));
        }
        EncoderPair::Pca { x, y } => {
            h.push("encoder", "pca");
            h.push("grid_dim", x.grid().dim());
            h.push("grid_order", x.grid().order());
            push_pca(&mut h, &mut payload, "x", x);
            push_pca(&mut h, &mut payload, "y", y);
        }
    }
    write_container(MODEL_MAGIC, &h, &payload)
}

fn take<'a>(payload: &'a [f64], off: &mut usize, n: usize) -> Result<&'a [f64], CliError> {
    let s = payload
        .get(*off..*off + n)
        .ok_or_else(|| bad("checkpoint", "payload too short"))?;
    *off += n;
    Ok(s)
}

fn read_pca(
    f: &Fields,
    payload: &[f64],
    off: &mut usize,
    tag: &str,
    grid: &Arc<QuadratureGrid>,
) -> Result<PcaModel, CliError> {
    let d: usize = f.parse(&format!("pca_{tag}_dim"))?;
    let eig: Vec<f64> = f.json(&format!("pca_{tag}_eigenvalues"))?;
    let trailing: f64 = f.parse(&format!("pca_{tag}_trailing_energy"))?;
    let mut funcs = Vec::with_capacity(d);
    for _ in 0..d {
        let vals = take(payload, off, grid.len())?.to_vec();
        funcs.push(GridFunction::new(grid.clone(), vals).map_err(|e| bad("checkpoint", e))?);
    }
    PcaModel::from_parts(eig, funcs, trailing).map_err(|e| bad("checkpoint", e))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CliError> {
    const KIND: &str = "checkpoint";
    let (h, payload) = read_container(bytes, MODEL_MAGIC, KIND)?;
    let f = Fields {
        kind: KIND,
        map: h.map(),
    };
    let clip: f64 = f.parse("clip")?;
    let mut network = match f.raw("network")? {
        "dense" => {
            let widths = f.list("widths")?;
            TrainedNetwork::Dense(FnnParams::zeros(&widths, clip).map_err(|e| bad(KIND, e))?)
        }
        "multi_index" => {
            let spec = MultiIndexSpec {
                d0: f.parse("d0")?,
                head_depth: f.parse("head_depth")?,
                head_width: f.parse("head_width")?,
                clip,
            };
            let net = spec
                .init(f.parse("input_dim")?, f.parse("heads")?, 0)
                .map_err(|e| bad(KIND, e))?;
            TrainedNetwork::MultiIndex(net)
        }
        other => return Err(bad(KIND, format!("unknown network `{other}`"))),
    };
    let np = network.param_count();
    if f.parse::<usize>("param_count")? != np {
        return Err(bad(KIND, "param_count does not match the declared shape"));
    }
    let mut off = 0;
    network
        .set_flat_params(take(&payload, &mut off, np)?)
        .map_err(|e| bad(KIND, e))?;
    let grid = QuadratureGrid::new(f.parse("grid_dim")?, f.parse("grid_order")?).map_err(|e| bad(KIND, e))?;
    let encoders = match f.raw("encoder")? {
        "basis" => {
            let x: BasisSpec = f.json("encoder_x")?;
            let y: BasisSpec = f.json("encoder_y")?;
            EncoderPair::Basis {
                x: x.encoder(&grid).map_err(|e| bad(KIND, e))?,
                y: y.encoder(&grid).map_err(|e| bad(KIND, e))?,
            }
        }
        "pca" => {
            let x = read_pca(&f, &payload, &mut off, "x", &grid)?;
            let y = read_pca(&f, &payload, &mut off, "y", &grid)?;
            EncoderPair::Pca { x, y }
        }
        other => return Err(bad(KIND, format!("unknown encoder `{other}`"))),
    };
    if off != payload.len() {
        return Err(bad(KIND, "trailing payload values"));
    }
    Ok(Checkpoint {
        estimator: Estimator::new(encoders, network).map_err(|e| bad(KIND, e))?,
        arch: f.raw("arch")?.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_roundtrip() {
        let mut h = Header::default();
        h.push("a", 1);
        h.push("b", "x y");
        let payload = [0.1, -2.5, f64::MIN_POSITIVE];
        let bytes = write_container("MAGIC v1", &h, &payload);
        let (h2, p2) = read_container(&bytes, "MAGIC v1", "test").unwrap();
        assert_eq!(h2, h);
        assert_eq!(p2, payload);
        assert_eq!(write_container("MAGIC v1", &h2, &p2), bytes);
    }

    #[test]
    fn container_rejects_damage() {
        let bytes = write_container("MAGIC v1", &Header::default(), &[1.0, 2.0]);
        assert!(read_container(&bytes[..bytes.len() - 3], "MAGIC v1", "test").is_err());
        assert!(read_container(&bytes, "OTHER v1", "test").is_err());
        assert!(read_container(b"MAGIC v1\nno marker", "MAGIC v1", "test").is_err());
    }
}
