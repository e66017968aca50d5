//! Checkpoint files: one ASCII header line followed by the raw parameters.
//!
//! ```text
//! coteach-ckpt kind=<kind> vocab=<V> d=<d> h=<h> params=<n>\n
//! <n little-endian f64 values>
//! ```

use std::fs;
use std::path::Path;

use super::{MatcherError, MatcherSpec, ModelState};

pub const CHECKPOINT_MAGIC: &str = "coteach-ckpt";

pub fn to_bytes(model: &ModelState) -> Vec<u8> {
    let spec = model.spec();
    let header = format!(
        "{CHECKPOINT_MAGIC} kind={} vocab={} d={} h={} params={}\n",
        spec.kind,
        spec.vocab_size,
        spec.embedding_dim,
        spec.hidden_dim,
        model.params().len()
    );
    let mut out = Vec::with_capacity(header.len() + 8 * model.params().len());
    out.extend_from_slice(header.as_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelState, MatcherError> {
    let bad = |m: String| MatcherError::Checkpoint(m);
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8".into()))?;
    let mut fields = header.split(' ');
    if fields.next() != Some(CHECKPOINT_MAGIC) {
        return Err(bad("not a coteach checkpoint".into()));
    }
    let (mut kind, mut vocab, mut d, mut h, mut n) = (None, None, None, None, None);
    for field in fields {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header field {field:?}")))?;
        let int = || v.parse::<usize>().map_err(|_| bad(format!("invalid value for {k}: {v:?}")));
        match k {
            "kind" => kind = Some(v.parse()?),
            "vocab" => vocab = Some(int()?),
            "d" => d = Some(int()?),
            "h" => h = Some(int()?),
            "params" => n = Some(int()?),
            _ => return Err(bad(format!("unknown header key {k:?}"))),
        }
    }
    let (Some(kind), Some(vocab_size), Some(embedding_dim), Some(hidden_dim), Some(n)) = (kind, vocab, d, h, n)
    else {
        return Err(bad("header is missing a field".into()));
    };
    let spec = MatcherSpec {
        kind,
        vocab_size,
        embedding_dim,
        hidden_dim,
    };
    let body = &bytes[nl + 1..];
    if body.len() != 8 * n {
        return Err(bad(format!("expected {} parameter bytes, found {}", 8 * n, body.len())));
    }
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    ModelState::from_params(spec, params)
}

pub fn save_checkpoint(model: &ModelState, path: &Path) -> Result<(), MatcherError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState, MatcherError> {
    let bytes = fs::read(path)?;
    from_bytes(&bytes).map_err(|e| match e {
        MatcherError::Checkpoint(m) => MatcherError::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}
