//! Binary checkpoints: `NSPLCHK1`, a little-endian u32 header length, a JSON
//! header, then the raw little-endian f64 payload of every field in order.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acoustic::ModeField;
use crate::limits::IncompressibleState;
use crate::nsp::FluidState;
use crate::waveguide::GridSpec;
use crate::{Error, Result, VectorField};

pub const MAGIC: &[u8; 8] = b"NSPLCHK1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub kind: String,
    pub grid: GridSpec,
    pub params: serde_json::Value,
    pub time: f64,
    pub endianness: String,
    pub fields: Vec<String>,
    pub shape: (usize, usize),
    /// Hex SHA-256 of the payload bytes.
    pub sha256: String,
}

/// States that flatten to a list of equally shaped real arrays.
pub trait Checkpointable: Sized {
    const KIND: &'static str;
    fn time(&self) -> f64;
    fn fields(&self) -> Vec<(String, Array2<f64>)>;
    fn from_fields(time: f64, fields: Vec<Array2<f64>>) -> Result<Self>;
}

fn vector_fields(prefix: &str, v: &VectorField) -> Vec<(String, Array2<f64>)> {
    v.components().iter().enumerate().map(|(i, c)| (format!("{prefix}{i}"), c.clone())).collect()
}

impl Checkpointable for FluidState {
    const KIND: &'static str = "nsp";

    fn time(&self) -> f64 {
        self.t
    }

    fn fields(&self) -> Vec<(String, Array2<f64>)> {
        let mut out = vec![("density".to_string(), self.density.clone())];
        out.extend(vector_fields("momentum", &self.momentum));
        out
    }

    fn from_fields(time: f64, mut fields: Vec<Array2<f64>>) -> Result<Self> {
        if fields.len() < 2 {
            return Err(Error::Checkpoint("nsp checkpoint needs density and momentum".into()));
        }
        let density = fields.remove(0);
        Ok(FluidState { t: time, density, momentum: VectorField::from_components(fields) })
    }
}

impl Checkpointable for IncompressibleState {
    const KIND: &'static str = "limit";

    fn time(&self) -> f64 {
        self.t
    }

    fn fields(&self) -> Vec<(String, Array2<f64>)> {
        vector_fields("velocity", &self.velocity)
    }

    fn from_fields(time: f64, fields: Vec<Array2<f64>>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::Checkpoint("limit checkpoint has no velocity".into()));
        }
        Ok(IncompressibleState { t: time, velocity: VectorField::from_components(fields) })
    }
}

impl Checkpointable for ModeField {
    const KIND: &'static str = "acoustic";

    fn time(&self) -> f64 {
        self.t
    }

    fn fields(&self) -> Vec<(String, Array2<f64>)> {
        let parts = |a: &Array2<Complex64>| (a.mapv(|c| c.re), a.mapv(|c| c.im));
        let (sr, si) = parts(&self.s_hat);
        let (pr, pi) = parts(&self.psi_hat);
        vec![("s_re".into(), sr), ("s_im".into(), si), ("psi_re".into(), pr), ("psi_im".into(), pi)]
    }

    fn from_fields(time: f64, fields: Vec<Array2<f64>>) -> Result<Self> {
        let [sr, si, pr, pi]: [Array2<f64>; 4] =
            fields.try_into().map_err(|_| Error::Checkpoint("acoustic checkpoint needs 4 fields".into()))?;
        let join = |re: &Array2<f64>, im: &Array2<f64>| {
            ndarray::Zip::from(re).and(im).map_collect(|&a, &b| Complex64::new(a, b))
        };
        Ok(ModeField { t: time, s_hat: join(&sr, &si), psi_hat: join(&pr, &pi) })
    }
}

pub fn encode<T: Checkpointable>(state: &T, grid: GridSpec, params: serde_json::Value) -> Result<Vec<u8>> {
    let fields = state.fields();
    let shape = fields.first().map(|(_, a)| a.dim()).unwrap_or((0, 0));
    let mut payload = Vec::with_capacity(fields.len() * shape.0 * shape.1 * 8);
    for (name, array) in &fields {
        if array.dim() != shape {
            return Err(Error::Checkpoint(format!("field {name} has a different shape")));
        }
        for v in array.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        version: VERSION,
        kind: T::KIND.to_string(),
        grid,
        params,
        time: state.time(),
        endianness: "little".into(),
        fields: fields.into_iter().map(|(n, _)| n).collect(),
        shape,
        sha256: hex::encode(Sha256::digest(&payload)),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode<T: Checkpointable>(bytes: &[u8]) -> Result<(T, Header)> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + len).ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(body)?;
    if header.version != VERSION {
        return Err(Error::Checkpoint(format!("checkpoint version {} is not {VERSION}", header.version)));
    }
    if header.kind != T::KIND {
        return Err(Error::Checkpoint(format!("checkpoint holds `{}`, expected `{}`", header.kind, T::KIND)));
    }
    if header.endianness != "little" {
        return Err(Error::Checkpoint("only little-endian payloads are supported".into()));
    }
    let payload = &bytes[12 + len..];
    if hex::encode(Sha256::digest(payload)) != header.sha256 {
        return Err(Error::Checkpoint("payload hash mismatch".into()));
    }
    let (ny, nz) = header.shape;
    let per = ny * nz * 8;
    if payload.len() != per * header.fields.len() {
        return Err(Error::Checkpoint("payload size does not match the header".into()));
    }
    let fields = payload
        .chunks_exact(per.max(1))
        .take(header.fields.len())
        .map(|chunk| {
            let values = chunk.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            Array2::from_shape_vec((ny, nz), values).map_err(|e| Error::Checkpoint(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((T::from_fields(header.time, fields)?, header))
}

pub fn save<T: Checkpointable>(path: &Path, state: &T, grid: GridSpec, params: serde_json::Value) -> Result<()> {
    fs::write(path, encode(state, grid, params)?)?;
    Ok(())
}

/// Loads a checkpoint, requiring its grid to equal `grid` when given.
pub fn load<T: Checkpointable>(path: &Path, grid: Option<GridSpec>) -> Result<(T, Header)> {
    let (state, header) = decode::<T>(&fs::read(path)?)?;
    if let Some(expected) = grid {
        if header.grid != expected {
            return Err(Error::GridMismatch(format!("checkpoint grid {:?} differs from {:?}", header.grid, expected)));
        }
    }
    Ok((state, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveguide::WaveguideGrid;

    fn grid() -> WaveguideGrid {
        WaveguideGrid::new(GridSpec::strip(2.0, 16, 1.0, 5)).unwrap()
    }

    #[test]
    fn fluid_state_round_trip_is_bit_exact() {
        let g = grid();
        let state = FluidState {
            t: 0.125,
            density: g.sample(|y, z| 1.0 + 0.1 * (y * 1.3).sin() * z.cos()),
            momentum: VectorField::from_components(vec![g.sample(|y, _| y.cos() / 3.0), g.sample(|y, z| y * z)]),
        };
        let bytes = encode(&state, *g.spec(), serde_json::json!({"epsilon": 0.1})).unwrap();
        let (back, header): (FluidState, _) = decode(&bytes).unwrap();
        assert_eq!(header.time, 0.125);
        assert_eq!(back.density, state.density);
        assert_eq!(back.momentum.components(), state.momentum.components());
    }

    #[test]
    fn mode_and_limit_round_trips() {
        let g = grid();
        let modes = ModeField {
            t: 2.0,
            s_hat: g.sample(|y, z| y + z).mapv(|v| Complex64::new(v, -v / 7.0)),
            psi_hat: g.sample(|y, _| y.sin()).mapv(|v| Complex64::new(0.0, v)),
        };
        let (back, _): (ModeField, _) = decode(&encode(&modes, *g.spec(), serde_json::Value::Null).unwrap()).unwrap();
        assert_eq!(back.s_hat, modes.s_hat);
        assert_eq!(back.psi_hat, modes.psi_hat);
        let lim = IncompressibleState { t: 1.0, velocity: g.zero_vector() };
        let (back, _): (IncompressibleState, _) = decode(&encode(&lim, *g.spec(), serde_json::Value::Null).unwrap()).unwrap();
        assert_eq!(back.velocity.components(), lim.velocity.components());
    }

    #[test]
    fn corruption_and_version_are_detected() {
        let g = grid();
        let lim = IncompressibleState { t: 1.0, velocity: g.zero_vector() };
        let mut bytes = encode(&lim, *g.spec(), serde_json::Value::Null).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        let err = decode::<IncompressibleState>(&bytes).unwrap_err();
        assert!(err.to_string().contains("hash"));

        let good = encode(&lim, *g.spec(), serde_json::Value::Null).unwrap();
        let text = String::from_utf8_lossy(&good).replace("\"version\":1", "\"version\":9");
        assert!(decode::<IncompressibleState>(text.as_bytes()).unwrap_err().to_string().contains("version"));
        assert!(decode::<FluidState>(&good).unwrap_err().to_string().contains("expected"));
    }

    #[test]
    fn load_rejects_other_grid() {
        let g = grid();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.chk");
        let lim = IncompressibleState { t: 0.0, velocity: g.zero_vector() };
        save(&path, &lim, *g.spec(), serde_json::Value::Null).unwrap();
        assert!(load::<IncompressibleState>(&path, Some(*g.spec())).is_ok());
        let other = GridSpec::strip(2.0, 32, 1.0, 5);
        assert!(matches!(load::<IncompressibleState>(&path, Some(other)), Err(Error::GridMismatch(_))));
    }
}
