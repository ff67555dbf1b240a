//! Binary model files.
//!
//! Layout: a text header of `key = value` lines opened by the magic line and
//! closed by `end`, then little-endian `f64`s for `w0`, `w` and the row-major
//! factor matrix, then length-prefixed (`u64` LE) UTF-8 strings for the
//! feature table, the user and item id maps and the run fingerprint.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fm::FmParams;
use crate::model::{Feature, FeatureSet, IdMap};

pub const MAGIC: &str = "KGFM-MODEL";
pub const VERSION: u32 = 1;

/// Everything stored next to the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub features: FeatureSet,
    pub users: IdMap,
    pub items: IdMap,
    pub fingerprint: BTreeMap<String, String>,
}

pub fn encode(params: &FmParams, meta: &ModelMeta) -> Result<Vec<u8>> {
    if meta.users.len() != params.num_users() || meta.items.len() != params.num_items() {
        return Err(Error::DimensionMismatch {
            left: meta.users.len() + meta.items.len(),
            right: params.n(),
        });
    }
    let mut out = format!(
        "{MAGIC}\nversion = {VERSION}\nusers = {}\nitems = {}\nfactors = {}\nfeatures = {}\nfingerprint = {}\nend\n",
        params.num_users(),
        params.num_items(),
        params.k(),
        meta.features.len(),
        meta.fingerprint.len()
    )
    .into_bytes();
    out.extend_from_slice(&params.w0.to_le_bytes());
    for x in params.w.iter().chain(params.factors()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let mut put = |s: &str| {
        out.extend_from_slice(&(s.len() as u64).to_le_bytes());
        out.extend_from_slice(s.as_bytes());
    };
    for f in meta.features.iter() {
        put(&f.predicate);
        put(&f.object);
    }
    for s in meta.users.externals().iter().chain(meta.items.externals()) {
        put(s);
    }
    for (k, v) in &meta.fingerprint {
        put(k);
        put(v);
    }
    Ok(out)
}

pub fn save_model(params: &FmParams, meta: &ModelMeta, path: &Path) -> Result<()> {
    let bytes = encode(params, meta)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(FmParams, ModelMeta)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| self.fail("truncated header"))?;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| self.fail("header is not UTF-8"))?;
        self.pos += end + 1;
        Ok(line)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let start = self.pos;
        let len = u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes"));
        let len = usize::try_from(len).map_err(|_| self.fail(format!("{what} length overflows")))?;
        let b = self.take(len, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Format {
            offset: start,
            message: format!("{what} is not UTF-8"),
        })
    }
}

pub fn decode(bytes: &[u8]) -> Result<(FmParams, ModelMeta)> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.line()? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "not a model file (bad magic)".into(),
        });
    }
    let mut header = BTreeMap::new();
    loop {
        let at = c.pos;
        let line = c.line()?;
        if line == "end" {
            break;
        }
        let (k, v) = line.split_once(" = ").ok_or(Error::Format {
            offset: at,
            message: format!("bad header line `{line}`"),
        })?;
        let v: u64 = v.parse().map_err(|_| Error::Format {
            offset: at,
            message: format!("bad header value for `{k}`"),
        })?;
        header.insert(k.to_owned(), (v, at));
    }
    let field = |k: &str| -> Result<usize> {
        header
            .get(k)
            .map(|&(v, _)| v as usize)
            .ok_or_else(|| c.fail(format!("header lacks `{k}`")))
    };
    let version = field("version")?;
    if version != VERSION as usize {
        return Err(Error::Format {
            offset: header["version"].1,
            message: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let (nu, ni, k, nf, np) = (
        field("users")?,
        field("items")?,
        field("factors")?,
        field("features")?,
        field("fingerprint")?,
    );
    let n = nu.checked_add(ni).ok_or_else(|| c.fail("header sizes overflow"))?;
    let floats = n
        .checked_mul(k)
        .and_then(|nk| nk.checked_add(n + 1))
        .ok_or_else(|| c.fail("header sizes overflow"))?;
    if (bytes.len() - c.pos) / 8 < floats {
        return Err(c.fail("truncated parameter block"));
    }
    let w0 = c.f64("w0")?;
    let w = (0..n).map(|_| c.f64("w")).collect::<Result<Vec<_>>>()?;
    let factors = (0..n * k).map(|_| c.f64("factors")).collect::<Result<Vec<_>>>()?;
    let params = FmParams::from_parts(nu, ni, k, w0, w, factors)?;

    let mut features = Vec::with_capacity(nf);
    for _ in 0..nf {
        let at = c.pos;
        let p = c.string("feature predicate")?;
        let o = c.string("feature object")?;
        features.push(Feature::new(p, o).map_err(|e| Error::Format {
            offset: at,
            message: e.to_string(),
        })?);
    }
    let at = c.pos;
    let features = FeatureSet::from_ordered(features).map_err(|e| Error::Format {
        offset: at,
        message: e.to_string(),
    })?;
    let users = read_map(&mut c, nu, "user id")?;
    let items = read_map(&mut c, ni, "item id")?;
    let mut fingerprint = BTreeMap::new();
    for _ in 0..np {
        let key = c.string("fingerprint key")?;
        let value = c.string("fingerprint value")?;
        fingerprint.insert(key, value);
    }
    if c.pos != bytes.len() {
        return Err(c.fail("trailing bytes after model"));
    }
    Ok((
        params,
        ModelMeta {
            features,
            users,
            items,
            fingerprint,
        },
    ))
}

fn read_map(c: &mut Cursor<'_>, count: usize, what: &str) -> Result<IdMap> {
    let at = c.pos;
    let ids = (0..count).map(|_| c.string(what)).collect::<Result<Vec<_>>>()?;
    IdMap::from_external(ids).map_err(|e| Error::Format {
        offset: at,
        message: e.to_string(),
    })
}
