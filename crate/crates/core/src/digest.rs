//! SHA-256 helpers producing lowercase hex.

use alloc::string::String;
use core::fmt::Write;

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// First `n` bytes of the SHA-256 of `bytes`, hex encoded.
pub fn short_hex(bytes: &[u8], n: usize) -> String {
    let d = Sha256::digest(bytes);
    hex(&d[..n.min(d.len())])
}

/// Streaming hasher over newline-terminated records.
#[derive(Default)]
pub struct LineHasher(Sha256);

impl LineHasher {
    pub fn push_line(&mut self, line: &str) {
        self.0.update(line.as_bytes());
        self.0.update(b"\n");
    }

    pub fn finish(self) -> String {
        hex(&self.0.finalize())
    }
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_digest_is_the_sha256_constant() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert_eq!(LineHasher::default().finish(), sha256_hex(b""));
    }

    #[test]
    fn line_hasher_matches_concatenation() {
        let mut h = LineHasher::default();
        h.push_line("a");
        h.push_line("bc");
        assert_eq!(h.finish(), sha256_hex(b"a\nbc\n"));
        assert_eq!(short_hex(b"", 4), "e3b0c442");
    }
}
