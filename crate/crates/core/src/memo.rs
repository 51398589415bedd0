//! Authenticated memo encryption keyed by a Diffie-Hellman shared point.
//!
//! The key is `SHA-256(domain ‖ encode(shared))`; every output uses a fresh
//! ephemeral key, so a fixed nonce never repeats under one key.

use alloc::vec::Vec;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use sha2::{Digest, Sha256};

use crate::encoding::{Decode, DecodeError, Encode, Reader, Writer};
use crate::group::{CryptoError, GroupElement, GroupScalar, TypeDomain, TypeTag, PROTOCOL_VERSION};

/// Poly1305 tag length.
pub const MEMO_TAG_LEN: usize = 16;

fn cipher(shared: &GroupElement) -> ChaCha20Poly1305 {
    let mut h = Sha256::new();
    h.update(b"partledger-memo");
    h.update([PROTOCOL_VERSION]);
    h.update(shared.to_bytes());
    let key: [u8; 32] = h.finalize().into();
    ChaCha20Poly1305::new(Key::from_slice(&key))
}

pub fn memo_seal(shared: &GroupElement, plaintext: &[u8]) -> Vec<u8> {
    cipher(shared)
        .encrypt(Nonce::from_slice(&[0u8; 12]), plaintext)
        .expect("in-memory encryption cannot fail")
}

pub fn memo_open(shared: &GroupElement, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    cipher(shared)
        .decrypt(Nonce::from_slice(&[0u8; 12]), ciphertext)
        .map_err(|_| CryptoError::MemoIntegrity)
}

/// The fixed memo plaintext: amount (8, LE) ‖ type domain (1) ‖ type
/// preimage hash (32) ‖ blinding scalar (32).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoPlaintext {
    pub amount: u64,
    pub ty: TypeTag,
    pub blinding: GroupScalar,
}

pub const MEMO_PLAINTEXT_LEN: usize = 8 + 1 + 32 + 32;

impl Encode for MemoPlaintext {
    fn encode_to(&self, w: &mut Writer) {
        w.put_u64(self.amount);
        w.put_u8(self.ty.domain().code());
        w.put_fixed(self.ty.preimage_hash());
        w.put(&self.blinding);
    }
}

impl Decode for MemoPlaintext {
    const MIN_ENCODED_LEN: usize = MEMO_PLAINTEXT_LEN;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let amount = r.get_u64()?;
        let code = r.get_u8()?;
        let domain = TypeDomain::from_code(code).ok_or(DecodeError::UnknownTag(code))?;
        let hash: [u8; 32] = r.take_array()?;
        let blinding = r.get()?;
        Ok(MemoPlaintext {
            amount,
            ty: TypeTag::from_digest(domain, hash),
            blinding,
        })
    }
}
