//! Binary field-grid and dataset-shard files plus the dataset manifest.
//!
//! All multi-byte values are little-endian.
//!
//! Field grid: `"MSFG"`, u32 version, u32 W, u32 H, f64 x_min, x_max,
//! y_min, y_max, u8 channel kind, then `W*H` f64 values row-major with the
//! row index along y.
//!
//! Dataset shard: `"MSDS"`, u32 version, u64 n_samples, u32 n_scatterers,
//! u32 W, u32 H, then per record the f64 block
//! `[k, x0_x, x0_y, f0, X (2n), Re psi0 (W*H), |psi| (W*H)]`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::grid::{ChannelKind, FieldGrid, GridSpec};
use crate::plate::GreensRoute;
use crate::problems::{compute_norm_stats, generate_samples, train_test_split, NormStats, ProblemSpec, SampleRecord};

pub const GRID_MAGIC: &[u8; 4] = b"MSFG";
pub const SHARD_MAGIC: &[u8; 4] = b"MSDS";
pub const FORMAT_VERSION: u32 = 1;
pub const SHARD_SIZE: usize = 1000;
pub const TRAIN_FRACTION: f64 = 0.8;
pub const MANIFEST_NAME: &str = "dataset.json";

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; 8 * n];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn check_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let got = read_exact::<4>(r)?;
    if &got != magic {
        return Err(Error::Format(format!(
            "bad magic {:?} (expected {:?})",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

pub fn encode_field_grid(grid: &FieldGrid) -> Vec<u8> {
    let s = &grid.spec;
    let mut out = Vec::with_capacity(45 + 8 * grid.values.len());
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(s.width as u32).to_le_bytes());
    out.extend_from_slice(&(s.height as u32).to_le_bytes());
    put_f64s(
        &mut out,
        &[s.window.x_min, s.window.x_max, s.window.y_min, s.window.y_max],
    );
    out.push(grid.kind.code());
    put_f64s(&mut out, &grid.values);
    out
}

pub fn decode_field_grid(mut r: impl Read) -> Result<FieldGrid> {
    check_magic(&mut r, GRID_MAGIC)?;
    let w = read_u32(&mut r)? as usize;
    let h = read_u32(&mut r)? as usize;
    let window = Rect::new(
        read_f64(&mut r)?,
        read_f64(&mut r)?,
        read_f64(&mut r)?,
        read_f64(&mut r)?,
    );
    let kind = ChannelKind::from_code(read_exact::<1>(&mut r)?[0])?;
    let spec = GridSpec::new(window, w, h)?;
    let values = read_f64s(&mut r, w * h)?;
    FieldGrid::new(spec, kind, values)
}

pub fn read_field_grid(path: &Path) -> Result<FieldGrid> {
    decode_field_grid(fs::File::open(path)?)
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn encode_shard(records: &[SampleRecord], n_scatterers: usize, grid: &GridSpec) -> Result<Vec<u8>> {
    let cells = grid.len();
    let per = 4 + 2 * n_scatterers + 2 * cells;
    let mut out = Vec::with_capacity(28 + 8 * per * records.len());
    out.extend_from_slice(SHARD_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    out.extend_from_slice(&(n_scatterers as u32).to_le_bytes());
    out.extend_from_slice(&(grid.width as u32).to_le_bytes());
    out.extend_from_slice(&(grid.height as u32).to_le_bytes());
    for r in records {
        if r.positions.len() != 2 * n_scatterers
            || r.incident.values.len() != cells
            || r.amplitude.values.len() != cells
        {
            return Err(Error::Shape("record does not match shard layout".into()));
        }
        put_f64s(&mut out, &[r.k, r.x0[0], r.x0[1], r.f0]);
        put_f64s(&mut out, &r.positions);
        put_f64s(&mut out, &r.incident.values);
        put_f64s(&mut out, &r.amplitude.values);
    }
    Ok(out)
}

/// Decodes a shard; the window is not stored in the shard and comes from
/// the manifest's problem spec.
pub fn decode_shard(mut r: impl Read, window: Rect) -> Result<Vec<SampleRecord>> {
    check_magic(&mut r, SHARD_MAGIC)?;
    let n = read_u64(&mut r)? as usize;
    let ns = read_u32(&mut r)? as usize;
    let w = read_u32(&mut r)? as usize;
    let h = read_u32(&mut r)? as usize;
    let grid = GridSpec::new(window, w, h)?;
    let cells = grid.len();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let head = read_f64s(&mut r, 4)?;
        let positions = read_f64s(&mut r, 2 * ns)?;
        let inc = read_f64s(&mut r, cells)?;
        let amp = read_f64s(&mut r, cells)?;
        out.push(SampleRecord {
            k: head[0],
            x0: [head[1], head[2]],
            f0: head[3],
            positions,
            incident: FieldGrid::new(grid, ChannelKind::IncidentReal, inc)?,
            amplitude: FieldGrid::new(grid, ChannelKind::Amplitude, amp)?,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShardInfo {
    pub file: String,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub spec: ProblemSpec,
    pub seed: u64,
    pub n_samples: usize,
    pub shards: Vec<ShardInfo>,
    /// Statistics of the training split; absent for an empty dataset.
    pub norm_stats: Option<NormStats>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// A loaded dataset with its manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Vec<SampleRecord>,
}

impl Dataset {
    /// Builds the in-memory form of a freshly generated record set.
    pub fn from_records(spec: ProblemSpec, seed: u64, records: Vec<SampleRecord>) -> Result<Self> {
        let (train, validation) = train_test_split(records.len(), TRAIN_FRACTION, seed);
        let norm_stats = if train.is_empty() {
            None
        } else {
            let refs: Vec<&SampleRecord> = train.iter().map(|&i| &records[i]).collect();
            Some(compute_norm_stats(&refs)?)
        };
        Ok(Self {
            manifest: DatasetManifest {
                format_version: FORMAT_VERSION,
                spec,
                seed,
                n_samples: records.len(),
                shards: Vec::new(),
                norm_stats,
                train,
                validation,
            },
            records,
        })
    }

    pub fn generate(spec: &ProblemSpec, n: usize, seed: u64, route: &GreensRoute) -> Result<Self> {
        let records = generate_samples(spec, n, seed, route)?;
        Self::from_records(spec.clone(), seed, records)
    }

    pub fn train_records(&self) -> Vec<&SampleRecord> {
        self.manifest.train.iter().map(|&i| &self.records[i]).collect()
    }

    pub fn validation_records(&self) -> Vec<&SampleRecord> {
        self.manifest.validation.iter().map(|&i| &self.records[i]).collect()
    }

    pub fn norm_stats(&self) -> Result<&NormStats> {
        self.manifest
            .norm_stats
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("dataset has no training samples".into()))
    }

    /// Writes shards and `dataset.json` into `dir`; returns the written paths.
    pub fn save(&mut self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let grid = self.manifest.spec.grid()?;
        let ns = self.manifest.spec.n_scatterers();
        let mut written = Vec::new();
        self.manifest.shards.clear();
        for (i, chunk) in self.records.chunks(SHARD_SIZE).enumerate() {
            let file = format!("shard_{i:04}.msds");
            let path = dir.join(&file);
            write_atomic(&path, &encode_shard(chunk, ns, &grid)?)?;
            written.push(path);
            self.manifest.shards.push(ShardInfo {
                file,
                n_samples: chunk.len(),
            });
        }
        let path = dir.join(MANIFEST_NAME);
        write_atomic(&path, serde_json::to_string_pretty(&self.manifest)?.as_bytes())?;
        written.push(path);
        Ok(written)
    }

    /// Path of `dataset.json` given it or its directory.
    pub fn manifest_path(path: &Path) -> PathBuf {
        if path.is_dir() {
            path.join(MANIFEST_NAME)
        } else {
            path.to_path_buf()
        }
    }

    /// Reads and checks the manifest alone.
    pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
        let manifest: DatasetManifest = serde_json::from_slice(&fs::read(Self::manifest_path(path))?)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "dataset format version {}",
                manifest.format_version
            )));
        }
        Ok(manifest)
    }

    /// Loads from a manifest path or from the directory containing `dataset.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let manifest_path = Self::manifest_path(path);
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let manifest = Self::load_manifest(&manifest_path)?;
        let mut records = Vec::with_capacity(manifest.n_samples);
        for shard in &manifest.shards {
            let recs = decode_shard(
                std::io::BufReader::new(fs::File::open(dir.join(&shard.file))?),
                manifest.spec.window,
            )?;
            if recs.len() != shard.n_samples {
                return Err(Error::Format(format!("shard {} record count", shard.file)));
            }
            records.extend(recs);
        }
        if records.len() != manifest.n_samples {
            return Err(Error::Format("manifest sample count mismatch".into()));
        }
        Ok(Self { manifest, records })
    }
}

/// Forward-solves `n` instances and writes them under `out_dir`.
pub fn generate_dataset(
    spec: &ProblemSpec,
    n: usize,
    seed: u64,
    out_dir: &Path,
    route: &GreensRoute,
) -> Result<DatasetManifest> {
    let mut ds = Dataset::generate(spec, n, seed, route)?;
    ds.save(out_dir)?;
    Ok(ds.manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{preset, ProblemClass};

    #[test]
    fn grid_round_trip() {
        let spec = GridSpec::new(Rect::new(-1.0, 2.0, 0.5, 4.0), 3, 2).unwrap();
        let g = FieldGrid::new(spec, ChannelKind::ScatteredReal, vec![1.0, -2.5, 3.0, 1e-300, f64::MAX, 0.0]).unwrap();
        let bytes = encode_field_grid(&g);
        assert_eq!(&bytes[..4], b"MSFG");
        assert_eq!(bytes.len(), 4 + 4 + 8 + 32 + 1 + 48);
        assert_eq!(decode_field_grid(bytes.as_slice()).unwrap(), g);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_field_grid(bad.as_slice()).is_err());
        assert!(decode_field_grid(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn dataset_round_trip_and_determinism() {
        let mut spec = preset(ProblemClass::NearFar);
        spec.resolution = [8, 8];
        let dir = tempfile::tempdir().unwrap();
        let route = GreensRoute::Analytic;
        let m1 = generate_dataset(&spec, 5, 42, dir.path(), &route).unwrap();
        let loaded = Dataset::load(dir.path()).unwrap();
        assert_eq!(loaded.manifest, m1);
        let again = Dataset::generate(&spec, 5, 42, &route).unwrap();
        assert_eq!(loaded.records, again.records);
        let bytes1 = fs::read(dir.path().join("shard_0000.msds")).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        generate_dataset(&spec, 5, 42, dir2.path(), &route).unwrap();
        assert_eq!(bytes1, fs::read(dir2.path().join("shard_0000.msds")).unwrap());
    }

    #[test]
    fn empty_dataset() {
        let spec = preset(ProblemClass::Incident);
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&spec, 0, 1, dir.path(), &GreensRoute::Analytic).unwrap();
        assert_eq!(m.n_samples, 0);
        assert!(m.norm_stats.is_none());
        let loaded = Dataset::load(&dir.path().join(MANIFEST_NAME)).unwrap();
        assert!(loaded.records.is_empty());
    }
}
