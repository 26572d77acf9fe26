//! Binary dataset container.
//!
//! Layout (little-endian):
//!
//! ```text
//! "LMIR" u32:version u32:n_d u32:n_s u32:k u64:shape_count
//! shape_count × { u32:len utf8:source f64:alpha_p f64:beta f64:hole_radius
//!                 u64:n_points u64:n_queries u64:seed u64:offset }
//! at each offset: u64:count, then count × sample
//! sample = f32×3 query, f32 target, f32×3·n_d patch, f32×3·n_s subsample,
//!          f32×3·n_d·k neighbours
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::QuerySample;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"LMIR";
pub const DATASET_VERSION: u32 = 1;

/// Provenance of one shape's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRecord {
    pub source: String,
    pub alpha_p: f64,
    pub beta: f64,
    /// Radius of the punched hole, 0 when none.
    pub hole_radius: f64,
    /// Points in the (noisy, holed) cloud the samples were built from.
    pub n_points: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSamples {
    pub record: ShapeRecord,
    pub samples: Vec<QuerySample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_d: usize,
    pub n_s: usize,
    pub k: usize,
    pub shapes: Vec<ShapeSamples>,
}

impl Dataset {
    pub fn new(n_d: usize, n_s: usize, k: usize) -> Self {
        Self {
            n_d,
            n_s,
            k,
            shapes: Vec::new(),
        }
    }

    pub fn sample_count(&self) -> usize {
        self.shapes.iter().map(|s| s.samples.len()).sum()
    }

    pub fn samples(&self) -> impl Iterator<Item = &QuerySample> {
        self.shapes.iter().flat_map(|s| s.samples.iter())
    }
}

/// Manifest entry as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub record: ShapeRecord,
    pub n_queries: u64,
    pub offset: u64,
}

fn sample_floats(n_d: usize, n_s: usize, k: usize) -> usize {
    4 + 3 * n_d + 3 * n_s + 3 * n_d * k
}

/// Writes `dataset` to `path` via a temporary file and rename.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    for (i, shape) in dataset.shapes.iter().enumerate() {
        for s in &shape.samples {
            s.check_dims(dataset.n_d, dataset.n_s, dataset.k)
                .map_err(|e| Error::Contract(format!("shape {i}: {e}")))?;
        }
    }
    let tmp = tmp_path(path);
    let write = || -> io::Result<()> {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(DATASET_MAGIC)?;
        w.write_u32::<LE>(DATASET_VERSION)?;
        for d in [dataset.n_d, dataset.n_s, dataset.k] {
            w.write_u32::<LE>(d as u32)?;
        }
        w.write_u64::<LE>(dataset.shapes.len() as u64)?;

        let header_len = 4 + 4 + 12 + 8;
        let manifest_len: usize = dataset
            .shapes
            .iter()
            .map(|s| 4 + s.record.source.len() + 3 * 8 + 4 * 8)
            .sum();
        let block_bytes = 4 * sample_floats(dataset.n_d, dataset.n_s, dataset.k) as u64;
        let mut offset = (header_len + manifest_len) as u64;
        for s in &dataset.shapes {
            let r = &s.record;
            w.write_u32::<LE>(r.source.len() as u32)?;
            w.write_all(r.source.as_bytes())?;
            w.write_f64::<LE>(r.alpha_p)?;
            w.write_f64::<LE>(r.beta)?;
            w.write_f64::<LE>(r.hole_radius)?;
            w.write_u64::<LE>(r.n_points)?;
            w.write_u64::<LE>(s.samples.len() as u64)?;
            w.write_u64::<LE>(r.seed)?;
            w.write_u64::<LE>(offset)?;
            offset += 8 + block_bytes * s.samples.len() as u64;
        }
        for s in &dataset.shapes {
            w.write_u64::<LE>(s.samples.len() as u64)?;
            for q in &s.samples {
                write_sample(&mut w, q)?;
            }
        }
        w.into_inner().map_err(|e| e.into_error())?.sync_all()
    };
    write().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

fn write_sample(w: &mut impl Write, s: &QuerySample) -> io::Result<()> {
    for c in s.query {
        w.write_f32::<LE>(c)?;
    }
    w.write_f32::<LE>(s.target)?;
    for p in s.patch.iter().chain(&s.subsample).chain(&s.knn) {
        for c in p {
            w.write_f32::<LE>(*c)?;
        }
    }
    Ok(())
}

/// Streaming reader: the manifest is loaded eagerly, samples per shape on
/// demand.
pub struct DatasetReader {
    path: PathBuf,
    file: BufReader<File>,
    file_len: u64,
    pub n_d: usize,
    pub n_s: usize,
    pub k: usize,
    pub manifest: Vec<ManifestEntry>,
}

fn truncated(e: io::Error, what: &str) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format(format!("truncated file while reading {what}"))
    } else {
        Error::Format(format!("{what}: {e}"))
    }
}

impl DatasetReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| truncated(e, "magic"))?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, not a dataset file")));
        }
        let version = r.read_u32::<LE>().map_err(|e| truncated(e, "version"))?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset version {version} (expected {DATASET_VERSION})"
            )));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = r.read_u32::<LE>().map_err(|e| truncated(e, "header"))? as usize;
        }
        let count = r.read_u64::<LE>().map_err(|e| truncated(e, "header"))?;
        // Each manifest entry takes at least 60 bytes.
        if count > file_len / 60 {
            return Err(Error::Format(format!("shape count {count} exceeds file size")));
        }
        let mut manifest = Vec::with_capacity(count as usize);
        let mut prev_offset = 0u64;
        for i in 0..count {
            let what = format!("manifest entry {i}");
            let len = r.read_u32::<LE>().map_err(|e| truncated(e, &what))? as u64;
            if len > file_len {
                return Err(Error::Format(format!("{what}: source length {len} exceeds file size")));
            }
            let mut name = vec![0u8; len as usize];
            r.read_exact(&mut name).map_err(|e| truncated(e, &what))?;
            let source = String::from_utf8(name)
                .map_err(|_| Error::Format(format!("{what}: source path is not UTF-8")))?;
            let mut f = [0f64; 3];
            for v in &mut f {
                *v = r.read_f64::<LE>().map_err(|e| truncated(e, &what))?;
            }
            let mut u = [0u64; 4];
            for v in &mut u {
                *v = r.read_u64::<LE>().map_err(|e| truncated(e, &what))?;
            }
            let [n_points, n_queries, seed, offset] = u;
            if offset <= prev_offset || offset >= file_len {
                return Err(Error::Format(format!("{what}: offset {offset} out of order or past end")));
            }
            prev_offset = offset;
            manifest.push(ManifestEntry {
                record: ShapeRecord {
                    source,
                    alpha_p: f[0],
                    beta: f[1],
                    hole_radius: f[2],
                    n_points,
                    seed,
                },
                n_queries,
                offset,
            });
        }
        Ok(Self {
            path: path.to_path_buf(),
            file: r,
            file_len,
            n_d: dims[0],
            n_s: dims[1],
            k: dims[2],
            manifest,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Reads the samples of shape `i`.
    pub fn read_shape(&mut self, i: usize) -> Result<ShapeSamples> {
        let entry = self
            .manifest
            .get(i)
            .ok_or_else(|| Error::Contract(format!("shape index {i} out of range")))?
            .clone();
        let what = format!("shape {i}");
        self.file
            .seek(SeekFrom::Start(entry.offset))
            .map_err(|e| truncated(e, &what))?;
        let count = self.file.read_u64::<LE>().map_err(|e| truncated(e, &what))?;
        if count != entry.n_queries {
            return Err(Error::Format(format!(
                "{what}: block holds {count} samples but the manifest says {}",
                entry.n_queries
            )));
        }
        let floats = sample_floats(self.n_d, self.n_s, self.k) as u64;
        let available = self.file_len.saturating_sub(entry.offset + 8);
        if count.checked_mul(4 * floats).is_none_or(|b| b > available) {
            return Err(Error::Format(format!("{what}: {count} samples do not fit in the file")));
        }
        let mut buf = vec![0f32; floats as usize];
        let mut samples = Vec::with_capacity(count as usize);
        for _ in 0..count {
            self.file
                .read_f32_into::<LE>(&mut buf)
                .map_err(|e| truncated(e, &what))?;
            samples.push(self.decode(&buf));
        }
        Ok(ShapeSamples {
            record: entry.record,
            samples,
        })
    }

    fn decode(&self, buf: &[f32]) -> QuerySample {
        let pts = |range: &[f32]| -> Vec<[f32; 3]> { range.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect() };
        let a = 4;
        let b = a + 3 * self.n_d;
        let c = b + 3 * self.n_s;
        QuerySample {
            query: [buf[0], buf[1], buf[2]],
            target: buf[3],
            patch: pts(&buf[a..b]),
            subsample: pts(&buf[b..c]),
            knn: pts(&buf[c..]),
        }
    }

    /// Reads every shape.
    pub fn read_all(mut self) -> Result<Dataset> {
        let mut shapes = Vec::with_capacity(self.manifest.len());
        for i in 0..self.manifest.len() {
            shapes.push(self.read_shape(i)?);
        }
        Ok(Dataset {
            n_d: self.n_d,
            n_s: self.n_s,
            k: self.k,
            shapes,
        })
    }
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    DatasetReader::open(path)?.read_all()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(seed: u32, n_d: usize, n_s: usize, k: usize) -> QuerySample {
        let f = |i: usize| ((seed as usize * 31 + i) % 97) as f32 * 0.01 - 0.3;
        QuerySample {
            query: [f(0), f(1), f(2)],
            patch: (0..n_d).map(|i| [f(3 * i), f(3 * i + 1), f(3 * i + 2)]).collect(),
            subsample: (0..n_s).map(|i| [f(i + 5), f(i + 7), f(i + 11)]).collect(),
            knn: (0..n_d * k).map(|i| [f(i + 13), f(i), f(i + 2)]).collect(),
            target: (seed % 10) as f32 / 10.0,
        }
    }

    fn record(name: &str) -> ShapeRecord {
        ShapeRecord {
            source: name.into(),
            alpha_p: 0.25,
            beta: 0.03,
            hole_radius: 0.0,
            n_points: 20_000,
            seed: 42,
        }
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.lmir");
        let d = Dataset::new(4, 8, 2);
        write_dataset(&p, &d).unwrap();
        assert_eq!(read_dataset(&p).unwrap(), d);
    }

    #[test]
    fn thousand_sample_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.lmir");
        let mut d = Dataset::new(6, 10, 3);
        d.shapes.push(ShapeSamples {
            record: record("meshes/a.obj"),
            samples: (0..1000).map(|i| sample(i, 6, 10, 3)).collect(),
        });
        write_dataset(&p, &d).unwrap();
        assert_eq!(read_dataset(&p).unwrap(), d);
    }

    #[test]
    fn streaming_reads_single_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.lmir");
        let mut d = Dataset::new(2, 3, 1);
        for (j, name) in ["a", "b", "c"].iter().enumerate() {
            d.shapes.push(ShapeSamples {
                record: record(name),
                samples: (0..j as u32 + 1).map(|i| sample(i, 2, 3, 1)).collect(),
            });
        }
        write_dataset(&p, &d).unwrap();
        let mut r = DatasetReader::open(&p).unwrap();
        assert!(r.manifest.windows(2).all(|w| w[0].offset < w[1].offset));
        assert_eq!(r.read_shape(2).unwrap(), d.shapes[2]);
        assert_eq!(r.read_shape(0).unwrap(), d.shapes[0]);
    }

    #[test]
    fn corrupted_length_and_truncation_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.lmir");
        let mut d = Dataset::new(2, 3, 1);
        d.shapes.push(ShapeSamples {
            record: record("x"),
            samples: (0..5).map(|i| sample(i, 2, 3, 1)).collect(),
        });
        write_dataset(&p, &d).unwrap();
        let good = std::fs::read(&p).unwrap();

        let mut bad = good.clone();
        bad[28..32].copy_from_slice(&u32::MAX.to_le_bytes());
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::Format(_))));

        let mut bad = good.clone();
        let offset_pos = 28 + 4 + 1 + 24 + 24;
        let offset = u64::from_le_bytes(good[offset_pos..offset_pos + 8].try_into().unwrap()) as usize;
        bad[offset..offset + 8].copy_from_slice(&u64::MAX.to_le_bytes());
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::Format(_))));

        std::fs::write(&p, &good[..good.len() - 10]).unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::Format(_))));

        std::fs::write(&p, b"NOPE").unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::Format(_))));
    }
}
