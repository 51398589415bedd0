//! Sigma protocols made non-interactive with Fiat-Shamir.
//!
//! [`DlogProof`] is the plain Schnorr proof of knowledge of `x` with
//! `P = x·B`. [`OrProof`] proves that the prover knows a witness for at
//! least one of several clauses, each clause being a conjunction of linear
//! equations `P_e = Σ_k w_k·B_{e,k}` over a shared witness vector. Proofs
//! for the clauses the prover cannot satisfy are simulated, so the
//! transcript does not reveal which clause was real.

use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};

use crate::encoding::{Decode, DecodeError, Encode, Reader, Writer};
use crate::group::{CryptoError, GroupElement, GroupScalar};
use crate::transcript::Transcript;

/// Schnorr proof of knowledge of a discrete logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DlogProof {
    pub challenge: GroupScalar,
    pub response: GroupScalar,
}

fn dlog_transcript(base: &GroupElement, image: &GroupElement, ctx: &[u8]) -> Transcript {
    let mut t = Transcript::new(b"dlog");
    t.append_bytes(b"ctx", ctx);
    t.append_element(b"base", base);
    t.append_element(b"image", image);
    t
}

impl DlogProof {
    pub fn prove<R: RngCore + CryptoRng>(
        base: &GroupElement,
        image: &GroupElement,
        secret: &GroupScalar,
        ctx: &[u8],
        rng: &mut R,
    ) -> Self {
        let nonce = GroupScalar::random(rng);
        let commitment = base * &nonce;
        let mut t = dlog_transcript(base, image, ctx);
        t.append_element(b"commitment", &commitment);
        let challenge = t.challenge_scalar(b"challenge");
        DlogProof {
            challenge,
            response: nonce + challenge * *secret,
        }
    }

    pub fn verify(&self, base: &GroupElement, image: &GroupElement, ctx: &[u8]) -> bool {
        let commitment =
            GroupElement::multiscalar_mul(&[self.response, -self.challenge], &[*base, *image]);
        let mut t = dlog_transcript(base, image, ctx);
        t.append_element(b"commitment", &commitment);
        t.challenge_scalar(b"challenge") == self.challenge
    }
}

impl Encode for DlogProof {
    fn encode_to(&self, w: &mut Writer) {
        w.put(&self.challenge);
        w.put(&self.response);
    }
}

impl Decode for DlogProof {
    const MIN_ENCODED_LEN: usize = 64;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(DlogProof {
            challenge: r.get()?,
            response: r.get()?,
        })
    }
}

/// `image = Σ witness[index]·base` over the listed terms.
#[derive(Debug, Clone)]
pub struct Equation {
    pub image: GroupElement,
    pub terms: Vec<(usize, GroupElement)>,
}

impl Equation {
    pub fn new(image: GroupElement, terms: Vec<(usize, GroupElement)>) -> Self {
        Self { image, terms }
    }

    /// `image = witness[index]·base`.
    pub fn single(image: GroupElement, index: usize, base: GroupElement) -> Self {
        Self {
            image,
            terms: alloc::vec![(index, base)],
        }
    }

    fn evaluate(&self, witness: &[GroupScalar]) -> Option<GroupElement> {
        let mut scalars = Vec::with_capacity(self.terms.len());
        let mut points = Vec::with_capacity(self.terms.len());
        for (idx, base) in &self.terms {
            scalars.push(*witness.get(*idx)?);
            points.push(*base);
        }
        Some(GroupElement::multiscalar_mul(&scalars, &points))
    }

    /// `Σ z_k·B_k − c·P`.
    fn commitment(
        &self,
        responses: &[GroupScalar],
        challenge: &GroupScalar,
    ) -> Option<GroupElement> {
        let mut scalars = Vec::with_capacity(self.terms.len() + 1);
        let mut points = Vec::with_capacity(self.terms.len() + 1);
        for (idx, base) in &self.terms {
            scalars.push(*responses.get(*idx)?);
            points.push(*base);
        }
        scalars.push(-*challenge);
        points.push(self.image);
        Some(GroupElement::multiscalar_mul(&scalars, &points))
    }
}

/// A conjunction of equations sharing one witness vector.
#[derive(Debug, Clone)]
pub struct Clause {
    pub witness_len: usize,
    pub equations: Vec<Equation>,
}

impl Clause {
    pub fn new(witness_len: usize, equations: Vec<Equation>) -> Self {
        Self {
            witness_len,
            equations,
        }
    }

    pub fn is_satisfied_by(&self, witness: &[GroupScalar]) -> bool {
        witness.len() == self.witness_len
            && self
                .equations
                .iter()
                .all(|eq| eq.evaluate(witness) == Some(eq.image))
    }

    fn well_formed(&self) -> bool {
        self.equations
            .iter()
            .all(|eq| eq.terms.iter().all(|(idx, _)| *idx < self.witness_len))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrProof {
    pub challenges: Vec<GroupScalar>,
    pub responses: Vec<Vec<GroupScalar>>,
}

fn or_transcript(clauses: &[Clause], ctx: &[u8]) -> Transcript {
    let mut t = Transcript::new(b"or");
    t.append_bytes(b"ctx", ctx);
    t.append_u64(b"clauses", clauses.len() as u64);
    for clause in clauses {
        t.append_u64(b"witness-len", clause.witness_len as u64);
        t.append_u64(b"equations", clause.equations.len() as u64);
        for eq in &clause.equations {
            t.append_element(b"image", &eq.image);
            t.append_u64(b"terms", eq.terms.len() as u64);
            for (idx, base) in &eq.terms {
                t.append_u64(b"index", *idx as u64);
                t.append_element(b"base", base);
            }
        }
    }
    t
}

impl OrProof {
    /// Proves knowledge of `witness` for `clauses[satisfied]`.
    pub fn prove<R: RngCore + CryptoRng>(
        clauses: &[Clause],
        satisfied: usize,
        witness: &[GroupScalar],
        ctx: &[u8],
        rng: &mut R,
    ) -> Result<Self, CryptoError> {
        let real = clauses.get(satisfied).ok_or(CryptoError::InvalidWitness)?;
        if !clauses.iter().all(Clause::well_formed) || !real.is_satisfied_by(witness) {
            return Err(CryptoError::InvalidWitness);
        }

        let mut challenges = Vec::with_capacity(clauses.len());
        let mut responses = Vec::with_capacity(clauses.len());
        let mut commitments = Vec::new();
        let nonces: Vec<GroupScalar> = (0..real.witness_len)
            .map(|_| GroupScalar::random(rng))
            .collect();

        for (i, clause) in clauses.iter().enumerate() {
            if i == satisfied {
                for eq in &clause.equations {
                    commitments.push(eq.evaluate(&nonces).ok_or(CryptoError::InvalidWitness)?);
                }
                challenges.push(GroupScalar::ZERO);
                responses.push(Vec::new());
            } else {
                let c = GroupScalar::random(rng);
                let z: Vec<GroupScalar> = (0..clause.witness_len)
                    .map(|_| GroupScalar::random(rng))
                    .collect();
                for eq in &clause.equations {
                    commitments.push(eq.commitment(&z, &c).ok_or(CryptoError::InvalidWitness)?);
                }
                challenges.push(c);
                responses.push(z);
            }
        }

        let mut t = or_transcript(clauses, ctx);
        for a in &commitments {
            t.append_element(b"commitment", a);
        }
        let total = t.challenge_scalar(b"challenge");
        let others: GroupScalar = challenges.iter().copied().sum();
        let c_real = total - others;
        challenges[satisfied] = c_real;
        responses[satisfied] = nonces
            .iter()
            .zip(witness)
            .map(|(r, w)| *r + c_real * *w)
            .collect();

        Ok(OrProof {
            challenges,
            responses,
        })
    }

    pub fn verify(&self, clauses: &[Clause], ctx: &[u8]) -> bool {
        if clauses.is_empty()
            || self.challenges.len() != clauses.len()
            || self.responses.len() != clauses.len()
        {
            return false;
        }
        let mut t = or_transcript(clauses, ctx);
        for ((clause, c), z) in clauses.iter().zip(&self.challenges).zip(&self.responses) {
            if z.len() != clause.witness_len || !clause.well_formed() {
                return false;
            }
            for eq in &clause.equations {
                match eq.commitment(z, c) {
                    Some(a) => t.append_element(b"commitment", &a),
                    None => return false,
                }
            }
        }
        let total: GroupScalar = self.challenges.iter().copied().sum();
        t.challenge_scalar(b"challenge") == total
    }

    pub fn clause_count(&self) -> usize {
        self.challenges.len()
    }
}

impl Encode for OrProof {
    fn encode_to(&self, w: &mut Writer) {
        w.put_len(self.challenges.len());
        for (c, z) in self.challenges.iter().zip(&self.responses) {
            w.put(c);
            w.put_seq(z);
        }
    }
}

impl Decode for OrProof {
    const MIN_ENCODED_LEN: usize = 8;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let n = r.get_len(40)?;
        let mut challenges = Vec::with_capacity(n);
        let mut responses = Vec::with_capacity(n);
        for _ in 0..n {
            challenges.push(r.get()?);
            responses.push(r.get_seq()?);
        }
        Ok(OrProof {
            challenges,
            responses,
        })
    }
}
