//! Bit-decomposition range proofs.
//!
//! For `C = a·H + r·G` with `a < 2^k`, the prover publishes one commitment
//! per bit, `C_i = b_i·H + r_i·G`, with `Σ 2^i·r_i = r`, and an OR proof that
//! each `C_i` commits to 0 or 1. The verifier checks `Σ 2^i·C_i = C`.
//! Proof size is linear in `k`.

use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};

use crate::encoding::{Decode, DecodeError, Encode, Reader, Writer};
use crate::group::{CryptoError, GroupElement, GroupScalar};
use crate::sigma::{Clause, Equation, OrProof};
use crate::transcript::Transcript;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeProof {
    pub bit_commitments: Vec<GroupElement>,
    pub bit_proofs: Vec<OrProof>,
}

fn range_context(
    commitment: &GroupElement,
    generator: &GroupElement,
    bits: u32,
    ctx: &[u8],
) -> [u8; 32] {
    let mut t = Transcript::new(b"range");
    t.append_bytes(b"ctx", ctx);
    t.append_element(b"commitment", commitment);
    t.append_element(b"generator", generator);
    t.append_u64(b"bits", bits as u64);
    t.digest()
}

fn bit_clauses(bit_commitment: &GroupElement, generator: &GroupElement) -> [Clause; 2] {
    let g = GroupElement::base();
    [
        Clause::new(1, alloc::vec![Equation::single(*bit_commitment, 0, g)]),
        Clause::new(
            1,
            alloc::vec![Equation::single(*bit_commitment - *generator, 0, g)],
        ),
    ]
}

fn bit_context(base_ctx: &[u8; 32], index: usize) -> [u8; 40] {
    let mut out = [0u8; 40];
    out[..32].copy_from_slice(base_ctx);
    out[32..].copy_from_slice(&(index as u64).to_le_bytes());
    out
}

fn power_of_two(i: usize) -> GroupScalar {
    GroupScalar::from_u64(1u64 << i)
}

impl RangeProof {
    /// Proves that `amount·generator + blinding·G` commits to a value below
    /// `2^bits`.
    pub fn prove<R: RngCore + CryptoRng>(
        amount: u64,
        generator: &GroupElement,
        blinding: &GroupScalar,
        bits: u32,
        ctx: &[u8],
        rng: &mut R,
    ) -> Result<Self, CryptoError> {
        if bits == 0 || bits > 64 {
            return Err(CryptoError::InvalidRangeWidth(bits));
        }
        if bits < 64 && amount >> bits != 0 {
            return Err(CryptoError::AmountOutOfRange { amount, bits });
        }
        let k = bits as usize;
        let commitment = GroupElement::multiscalar_mul(
            &[GroupScalar::from_u64(amount), *blinding],
            &[*generator, GroupElement::base()],
        );
        let base_ctx = range_context(&commitment, generator, bits, ctx);

        let mut blinds = Vec::with_capacity(k);
        let mut acc = GroupScalar::ZERO;
        for i in 0..k - 1 {
            let r = GroupScalar::random(rng);
            acc += power_of_two(i) * r;
            blinds.push(r);
        }
        let last_weight_inv = power_of_two(k - 1)
            .invert()
            .expect("power of two is nonzero");
        blinds.push((*blinding - acc) * last_weight_inv);

        let mut bit_commitments = Vec::with_capacity(k);
        let mut bit_proofs = Vec::with_capacity(k);
        for (i, r) in blinds.iter().enumerate() {
            let bit = (amount >> i) & 1;
            let mut c = GroupElement::mul_base(r);
            if bit == 1 {
                c += *generator;
            }
            let clauses = bit_clauses(&c, generator);
            let proof = OrProof::prove(
                &clauses,
                bit as usize,
                &[*r],
                &bit_context(&base_ctx, i),
                rng,
            )?;
            bit_commitments.push(c);
            bit_proofs.push(proof);
        }
        Ok(RangeProof {
            bit_commitments,
            bit_proofs,
        })
    }

    pub fn verify(
        &self,
        commitment: &GroupElement,
        generator: &GroupElement,
        bits: u32,
        ctx: &[u8],
    ) -> bool {
        let k = bits as usize;
        if bits == 0 || bits > 64 || self.bit_commitments.len() != k || self.bit_proofs.len() != k {
            return false;
        }
        let weights: Vec<GroupScalar> = (0..k).map(power_of_two).collect();
        if GroupElement::multiscalar_mul(&weights, &self.bit_commitments) != *commitment {
            return false;
        }
        let base_ctx = range_context(commitment, generator, bits, ctx);
        self.bit_commitments
            .iter()
            .zip(&self.bit_proofs)
            .enumerate()
            .all(|(i, (c, proof))| {
                proof.clause_count() == 2
                    && proof.verify(&bit_clauses(c, generator), &bit_context(&base_ctx, i))
            })
    }

    pub fn bits(&self) -> usize {
        self.bit_commitments.len()
    }
}

impl Encode for RangeProof {
    fn encode_to(&self, w: &mut Writer) {
        w.put_len(self.bit_commitments.len());
        for (c, p) in self.bit_commitments.iter().zip(&self.bit_proofs) {
            w.put(c);
            w.put(p);
        }
    }
}

impl Decode for RangeProof {
    const MIN_ENCODED_LEN: usize = 8;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let n = r.get_len(40)?;
        if n > 64 {
            return Err(DecodeError::LengthLimit(n as u64));
        }
        let mut bit_commitments = Vec::with_capacity(n);
        let mut bit_proofs = Vec::with_capacity(n);
        for _ in 0..n {
            bit_commitments.push(r.get()?);
            bit_proofs.push(r.get()?);
        }
        Ok(RangeProof {
            bit_commitments,
            bit_proofs,
        })
    }
}
