//! Key-derived keystream: ChaCha20 keyed by SHA-256 of the secret, all-zero nonce.

use chacha20::cipher::{KeyIvInit, StreamCipher};
use chacha20::ChaCha20;
use sha2::{Digest, Sha256};

/// An endless, deterministic bit source derived from a secret key.
///
/// The nonce is fixed, so the same key always yields the same sequence.
pub struct Keystream {
    cipher: ChaCha20,
    block: [u8; 64],
    next: usize,
}

impl Keystream {
    pub fn new(key: &[u8]) -> Self {
        let digest: [u8; 32] = Sha256::digest(key).into();
        Self::from_raw_key(digest)
    }

    fn from_raw_key(key: [u8; 32]) -> Self {
        let nonce = [0u8; 12];
        Keystream {
            cipher: ChaCha20::new(&key.into(), &nonce.into()),
            block: [0; 64],
            next: 64 * 8,
        }
    }

    /// Next keystream bit (0 or 1), MSB of each keystream byte first.
    pub fn next_bit(&mut self) -> u8 {
        if self.next == 64 * 8 {
            self.block = [0; 64];
            self.cipher.apply_keystream(&mut self.block);
            self.next = 0;
        }
        let bit = (self.block[self.next / 8] >> (7 - self.next % 8)) & 1;
        self.next += 1;
        bit
    }
}

impl Iterator for Keystream {
    type Item = u8;

    fn next(&mut self) -> Option<u8> {
        Some(self.next_bit())
    }
}

/// The first `n` keystream bits for `key`.
pub fn keystream_bits(key: &[u8], n: usize) -> Vec<u8> {
    Keystream::new(key).take(n).collect()
}
