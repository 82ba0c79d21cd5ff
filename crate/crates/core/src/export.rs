//! Provenance header shared by every file the tool writes: tool version, a
//! digest of the inputs and settings, and the seed. Identical inputs give
//! byte-identical outputs.

use std::io::Write;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 over length-prefixed parts, so part boundaries matter.
pub fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// Comment lines written before the payload of an output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metadata {
    pub digest: String,
    pub seed: u64,
    /// Extra `key=value` lines recording defaults that shaped the output.
    pub notes: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(digest: String, seed: u64) -> Self {
        Metadata {
            digest,
            seed,
            notes: Vec::new(),
        }
    }

    pub fn note(mut self, key: &str, value: impl ToString) -> Self {
        self.notes.push((key.to_string(), value.to_string()));
        self
    }

    pub fn header_line(&self) -> String {
        format!("# {TOOL_NAME} {TOOL_VERSION} digest={} seed={}", self.digest, self.seed)
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        let io = |e| Error::io("<output>", e);
        writeln!(out, "{}", self.header_line()).map_err(io)?;
        for (k, v) in &self.notes {
            writeln!(out, "# {k}={v}").map_err(io)?;
        }
        Ok(())
    }

    /// Header followed by `body`, written to `path`.
    pub fn write_file(&self, path: &std::path::Path, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        body(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries_change_the_digest() {
        assert_ne!(digest(&[b"ab", b"c"]), digest(&[b"a", b"bc"]));
        assert_eq!(digest(&[b"x"]), digest(&[b"x"]));
        let m = Metadata::new(digest(&[b"x"]), 7).note("start", "full");
        let mut out = Vec::new();
        m.write(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with(&format!("# robust-dc {TOOL_VERSION} digest=")));
        assert!(text.ends_with("seed=7\n# start=full\n"));
    }
}
