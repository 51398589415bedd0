//! Fiat-Shamir transcripts over the canonical encoding.

use sha2::{Digest, Sha512};

use crate::group::{GroupElement, GroupScalar, PROTOCOL_VERSION};

#[derive(Clone)]
pub struct Transcript {
    hasher: Sha512,
}

impl Transcript {
    pub fn new(protocol: &[u8]) -> Self {
        let mut hasher = Sha512::new();
        hasher.update(b"partledger-transcript");
        hasher.update([PROTOCOL_VERSION]);
        hasher.update((protocol.len() as u64).to_le_bytes());
        hasher.update(protocol);
        Self { hasher }
    }

    pub fn append_bytes(&mut self, label: &[u8], bytes: &[u8]) {
        self.hasher.update((label.len() as u64).to_le_bytes());
        self.hasher.update(label);
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
    }

    pub fn append_u64(&mut self, label: &[u8], v: u64) {
        self.append_bytes(label, &v.to_le_bytes());
    }

    pub fn append_element(&mut self, label: &[u8], p: &GroupElement) {
        self.append_bytes(label, &p.to_bytes());
    }

    pub fn append_scalar(&mut self, label: &[u8], s: &GroupScalar) {
        self.append_bytes(label, &s.to_bytes());
    }

    pub fn challenge_scalar(&self, label: &[u8]) -> GroupScalar {
        let mut h = self.hasher.clone();
        h.update((label.len() as u64).to_le_bytes());
        h.update(label);
        let out: [u8; 64] = h.finalize().into();
        GroupScalar::from_wide_bytes(&out)
    }

    pub fn digest(&self) -> [u8; 32] {
        let out: [u8; 64] = self.hasher.clone().finalize().into();
        let mut d = [0u8; 32];
        d.copy_from_slice(&out[..32]);
        d
    }
}
