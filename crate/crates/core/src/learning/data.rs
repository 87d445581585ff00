//! Dataset sources: IDX directories, a seeded synthetic task, RBF
//! embedding and a binary cache of embedded splits.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{idx, DataError, Dataset, RbfSampler};

const CACHE_MAGIC: &[u8; 8] = b"CDFLDATA";
const CACHE_VERSION: u32 = 1;

/// Training and test data with identical feature widths.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSplit {
    pub train: Dataset,
    pub test: Dataset,
}

impl DataSplit {
    pub fn features(&self) -> usize {
        self.train.d
    }

    pub fn classes(&self) -> usize {
        self.train.c
    }
}

fn locate(dir: &Path, stem: &str) -> Result<PathBuf, DataError> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(DataError::Io(
        dir.join(stem).display().to_string(),
        "file not found (also tried .gz)".into(),
    ))
}

fn load_pair(dir: &Path, prefix: &str, limit: Option<usize>) -> Result<Dataset, DataError> {
    let (img, lab) = idx::load_idx(
        &locate(dir, &format!("{prefix}-images-idx3-ubyte"))?,
        &locate(dir, &format!("{prefix}-labels-idx1-ubyte"))?,
    )?;
    let n = limit.unwrap_or(img.count).min(img.count);
    let d = img.features();
    let labels: Vec<usize> = lab[..n].iter().map(|&l| l as usize).collect();
    Dataset::new(img.pixels[..n * d].to_vec(), d, labels, 10)
}

/// Loads the standard `train-*`/`t10k-*` IDX pair from `dir` (MNIST and
/// Fashion-MNIST share the layout), keeping the first `limit` rows of each.
pub fn load_mnist_dir(
    dir: &Path,
    train_limit: Option<usize>,
    test_limit: Option<usize>,
) -> Result<DataSplit, DataError> {
    Ok(DataSplit {
        train: load_pair(dir, "train", train_limit)?,
        test: load_pair(dir, "t10k", test_limit)?,
    })
}

/// Gaussian class clusters for quick experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub features: usize,
    pub classes: usize,
    pub train: usize,
    pub test: usize,
    /// Standard deviation of the class centres relative to the unit noise.
    pub separation: f64,
}

/// Draws `features`-dimensional points around `classes` random centres and
/// rescales every row so that `‖x‖² ≤ 1/4` on the training set.
pub fn synthetic(spec: &SyntheticSpec, seed: u64) -> Result<DataSplit, DataError> {
    if spec.features == 0 || spec.classes == 0 || spec.train == 0 {
        return Err(DataError::Malformed(
            "synthetic spec needs positive sizes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.features;
    let centres: Vec<f64> = (0..spec.classes * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            spec.separation * z
        })
        .collect();
    let draw = |n: usize, rng: &mut ChaCha8Rng| {
        let mut x = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let l = rng.random_range(0..spec.classes);
            for j in 0..d {
                let z: f64 = StandardNormal.sample(rng);
                x.push(centres[l * d + j] + z);
            }
            labels.push(l);
        }
        (x, labels)
    };
    let (mut xtr, ltr) = draw(spec.train, &mut rng);
    let (mut xte, lte) = draw(spec.test, &mut rng);
    let max_sq = xtr
        .chunks_exact(d)
        .map(|r| r.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0f64, f64::max);
    let scale = if max_sq > 0.0 {
        0.5 / max_sq.sqrt()
    } else {
        1.0
    };
    xtr.iter_mut().for_each(|v| *v *= scale);
    xte.iter_mut().for_each(|v| *v *= scale);
    Ok(DataSplit {
        train: Dataset::new(xtr, d, ltr, spec.classes)?,
        test: Dataset::new(xte, d, lte, spec.classes)?,
    })
}

/// Maps both halves through the same random Fourier feature map.
pub fn embed_split(split: &DataSplit, gamma: f64, features: usize, seed: u64) -> DataSplit {
    let sampler = RbfSampler::new(split.features(), gamma, features, seed);
    let map = |ds: &Dataset| Dataset {
        m: ds.m,
        d: features,
        c: ds.c,
        x: sampler.transform(&ds.x),
        y: ds.y.clone(),
        labels: ds.labels.clone(),
    };
    DataSplit {
        train: map(&split.train),
        test: map(&split.test),
    }
}

fn put_u64<W: Write>(w: &mut W, v: usize) -> std::io::Result<()> {
    w.write_all(&(v as u64).to_le_bytes())
}

fn write_dataset<W: Write>(w: &mut W, ds: &Dataset) -> std::io::Result<()> {
    put_u64(w, ds.m)?;
    put_u64(w, ds.d)?;
    put_u64(w, ds.c)?;
    for v in &ds.x {
        w.write_all(&v.to_le_bytes())?;
    }
    for &l in &ds.labels {
        w.write_all(&(l as u32).to_le_bytes())?;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.bytes.len() - self.pos < n {
            return Err(DataError::Malformed("cache file truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize)
    }

    fn dataset(&mut self) -> Result<Dataset, DataError> {
        let (m, d, c) = (self.u64()?, self.u64()?, self.u64()?);
        let n = m
            .checked_mul(d)
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= self.bytes.len()))
            .ok_or_else(|| DataError::Malformed("cache dimensions too large".into()))?;
        let x = self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let labels = self
            .take(m * 4)?
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
            .collect();
        Dataset::new(x, d, labels, c)
    }
}

/// Writes a versioned little-endian dump of `split`.
pub fn write_cache(path: &Path, split: &DataSplit) -> Result<(), DataError> {
    let io = |e: std::io::Error| DataError::Io(path.display().to_string(), e.to_string());
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    write_dataset(&mut buf, &split.train).map_err(io)?;
    write_dataset(&mut buf, &split.test).map_err(io)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &buf).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn read_cache(path: &Path) -> Result<DataSplit, DataError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| DataError::Io(path.display().to_string(), e.to_string()))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if cur.take(8)? != CACHE_MAGIC {
        return Err(DataError::Malformed("not a dataset cache".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(DataError::Malformed(format!(
            "cache version {version}, expected {CACHE_VERSION}"
        )));
    }
    let train = cur.dataset()?;
    let test = cur.dataset()?;
    if cur.pos != bytes.len() {
        return Err(DataError::Malformed("trailing bytes in cache".into()));
    }
    Ok(DataSplit { train, test })
}
