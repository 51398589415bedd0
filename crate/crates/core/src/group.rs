//! Prime-order group arithmetic, hashing into the group and the scalar
//! field, key derivation, type tags and Pedersen-style commitments.
//!
//! The group is Ristretto255 (order `2^252 + 27742317777372353535851937790883648493`,
//! cofactor-free, canonical 32-byte encodings).

use core::fmt;
use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_TABLE;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::{Identity, VartimeMultiscalarMul};
use rand_core::{CryptoRng, RngCore};
use sha2::{Digest, Sha256, Sha512};
use thiserror::Error;

use crate::encoding::{Decode, DecodeError, Encode, Reader, Writer};

/// Version byte mixed into every hash and Fiat-Shamir transcript.
pub const PROTOCOL_VERSION: u8 = 1;

const HASH_DOMAIN: &[u8] = b"partledger";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("unsupported security level {0} (only 128 is supported)")]
    UnsupportedSecurityLevel(u32),
    #[error("range width {0} must be between 1 and 64 bits")]
    InvalidRangeWidth(u32),
    #[error("ring size {0} is too small (minimum 2)")]
    RingTooSmall(usize),
    #[error("amount {amount} does not fit in {bits} bits")]
    AmountOutOfRange { amount: u64, bits: u32 },
    #[error("unknown key derivation label {0:?}")]
    UnknownKdfLabel(alloc::string::String),
    #[error("unknown type domain {0:?}")]
    UnknownTypeDomain(alloc::string::String),
    #[error("memo integrity check failed")]
    MemoIntegrity,
    #[error("witness does not satisfy the selected clause")]
    InvalidWitness,
}

// ---------------------------------------------------------------------------
// Scalars

#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct GroupScalar(pub(crate) Scalar);

impl GroupScalar {
    pub const ZERO: GroupScalar = GroupScalar(Scalar::ZERO);
    pub const ONE: GroupScalar = GroupScalar(Scalar::ONE);

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        Self(Scalar::from_bytes_mod_order_wide(&wide))
    }

    pub fn from_u64(v: u64) -> Self {
        Self(Scalar::from(v))
    }

    /// Reduces 64 uniformly random bytes into the field.
    pub fn from_wide_bytes(bytes: &[u8; 64]) -> Self {
        Self(Scalar::from_bytes_mod_order_wide(bytes))
    }

    /// Accepts only the canonical encoding (value < group order).
    pub fn from_canonical_bytes(bytes: [u8; 32]) -> Option<Self> {
        Option::from(Scalar::from_canonical_bytes(bytes)).map(Self)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn invert(&self) -> Option<Self> {
        if self.0 == Scalar::ZERO {
            None
        } else {
            Some(Self(self.0.invert()))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0 == Scalar::ZERO
    }
}

impl fmt::Debug for GroupScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // never print secret material
        f.write_str("GroupScalar(..)")
    }
}

impl Add for GroupScalar {
    type Output = GroupScalar;
    fn add(self, rhs: GroupScalar) -> GroupScalar {
        GroupScalar(self.0 + rhs.0)
    }
}

impl AddAssign for GroupScalar {
    fn add_assign(&mut self, rhs: GroupScalar) {
        self.0 += rhs.0;
    }
}

impl Sub for GroupScalar {
    type Output = GroupScalar;
    fn sub(self, rhs: GroupScalar) -> GroupScalar {
        GroupScalar(self.0 - rhs.0)
    }
}

impl SubAssign for GroupScalar {
    fn sub_assign(&mut self, rhs: GroupScalar) {
        self.0 -= rhs.0;
    }
}

impl Mul for GroupScalar {
    type Output = GroupScalar;
    fn mul(self, rhs: GroupScalar) -> GroupScalar {
        GroupScalar(self.0 * rhs.0)
    }
}

impl Neg for GroupScalar {
    type Output = GroupScalar;
    fn neg(self) -> GroupScalar {
        GroupScalar(-self.0)
    }
}

impl core::iter::Sum for GroupScalar {
    fn sum<I: Iterator<Item = GroupScalar>>(iter: I) -> GroupScalar {
        iter.fold(GroupScalar::ZERO, |acc, x| acc + x)
    }
}

impl Encode for GroupScalar {
    fn encode_to(&self, w: &mut Writer) {
        w.put_fixed(&self.to_bytes());
    }
}

impl Decode for GroupScalar {
    const MIN_ENCODED_LEN: usize = 32;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        GroupScalar::from_canonical_bytes(r.take_array()?).ok_or(DecodeError::InvalidScalar)
    }
}

// ---------------------------------------------------------------------------
// Group elements

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct GroupElement(pub(crate) RistrettoPoint);

impl GroupElement {
    pub fn identity() -> Self {
        Self(RistrettoPoint::identity())
    }

    /// The base generator `G`.
    pub fn base() -> Self {
        Self(curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT)
    }

    /// `x·G` using the precomputed base table.
    pub fn mul_base(x: &GroupScalar) -> Self {
        Self(&x.0 * RISTRETTO_BASEPOINT_TABLE)
    }

    pub fn is_identity(&self) -> bool {
        self.0 == RistrettoPoint::identity()
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.compress().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8; 32]) -> Option<Self> {
        CompressedRistretto(*bytes).decompress().map(Self)
    }

    /// `Σ scalars[i]·points[i]`, variable time. Only for public data.
    pub fn multiscalar_mul(scalars: &[GroupScalar], points: &[GroupElement]) -> Self {
        debug_assert_eq!(scalars.len(), points.len());
        Self(RistrettoPoint::vartime_multiscalar_mul(
            scalars.iter().map(|s| s.0),
            points.iter().map(|p| p.0),
        ))
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.to_bytes();
        write!(f, "GroupElement(")?;
        for byte in &b[..6] {
            write!(f, "{byte:02x}")?;
        }
        write!(f, "..)")
    }
}

impl core::hash::Hash for GroupElement {
    fn hash<H: core::hash::Hasher>(&self, state: &mut H) {
        self.to_bytes().hash(state);
    }
}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Orders by canonical encoding.
impl Ord for GroupElement {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.to_bytes().cmp(&other.to_bytes())
    }
}

impl Add for GroupElement {
    type Output = GroupElement;
    fn add(self, rhs: GroupElement) -> GroupElement {
        GroupElement(self.0 + rhs.0)
    }
}

impl AddAssign for GroupElement {
    fn add_assign(&mut self, rhs: GroupElement) {
        self.0 += rhs.0;
    }
}

impl Sub for GroupElement {
    type Output = GroupElement;
    fn sub(self, rhs: GroupElement) -> GroupElement {
        GroupElement(self.0 - rhs.0)
    }
}

impl SubAssign for GroupElement {
    fn sub_assign(&mut self, rhs: GroupElement) {
        self.0 -= rhs.0;
    }
}

impl Neg for GroupElement {
    type Output = GroupElement;
    fn neg(self) -> GroupElement {
        GroupElement(-self.0)
    }
}

impl Mul<GroupScalar> for GroupElement {
    type Output = GroupElement;
    fn mul(self, rhs: GroupScalar) -> GroupElement {
        GroupElement(self.0 * rhs.0)
    }
}

impl Mul<&GroupScalar> for &GroupElement {
    type Output = GroupElement;
    fn mul(self, rhs: &GroupScalar) -> GroupElement {
        GroupElement(self.0 * rhs.0)
    }
}

impl core::iter::Sum for GroupElement {
    fn sum<I: Iterator<Item = GroupElement>>(iter: I) -> GroupElement {
        iter.fold(GroupElement::identity(), |acc, x| acc + x)
    }
}

impl Encode for GroupElement {
    fn encode_to(&self, w: &mut Writer) {
        w.put_fixed(&self.to_bytes());
    }
}

impl Decode for GroupElement {
    const MIN_ENCODED_LEN: usize = 32;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        GroupElement::from_bytes(&r.take_array()?).ok_or(DecodeError::InvalidElement)
    }
}

// ---------------------------------------------------------------------------
// Hashing

fn domain_hasher(label: &[u8]) -> Sha512 {
    let mut h = Sha512::new();
    h.update(HASH_DOMAIN);
    h.update([PROTOCOL_VERSION]);
    h.update((label.len() as u64).to_le_bytes());
    h.update(label);
    h
}

fn wide_hash(label: &[u8], parts: &[&[u8]]) -> [u8; 64] {
    let mut h = domain_hasher(label);
    for part in parts {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    h.finalize().into()
}

/// Deterministic map into the group with unknown discrete log.
pub fn hash_to_group(label: &[u8], input: &[u8]) -> GroupElement {
    GroupElement(RistrettoPoint::from_uniform_bytes(&wide_hash(
        label,
        &[input],
    )))
}

/// Hash of several length-prefixed parts into the scalar field.
pub fn hash_to_scalar(label: &[u8], parts: &[&[u8]]) -> GroupScalar {
    GroupScalar::from_wide_bytes(&wide_hash(label, parts))
}

/// SHA-256 digest used for type preimages and file identities.
pub fn digest256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

// ---------------------------------------------------------------------------
// Key derivation

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KdfLabel {
    Track,
    View,
    /// Produces bytes that are mapped into the group by [`hash_to_group`],
    /// so no scalar preimage exists.
    Own,
    SpendSeed,
}

impl KdfLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            KdfLabel::Track => "track",
            KdfLabel::View => "view",
            KdfLabel::Own => "own",
            KdfLabel::SpendSeed => "spend-seed",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CryptoError> {
        match s {
            "track" => Ok(KdfLabel::Track),
            "view" => Ok(KdfLabel::View),
            "own" => Ok(KdfLabel::Own),
            "spend-seed" => Ok(KdfLabel::SpendSeed),
            other => Err(CryptoError::UnknownKdfLabel(other.into())),
        }
    }
}

/// Raw KDF output.
pub fn kdf_bytes(seed: &[u8], label: KdfLabel) -> [u8; 64] {
    wide_hash(b"kdf", &[label.as_str().as_bytes(), seed])
}

/// KDF output reduced into the scalar field.
pub fn kdf_scalar(seed: &[u8], label: KdfLabel) -> GroupScalar {
    GroupScalar::from_wide_bytes(&kdf_bytes(seed, label))
}

// ---------------------------------------------------------------------------
// Type tags

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TypeDomain {
    Design,
    Property,
    Attribute,
    Currency,
}

impl TypeDomain {
    pub const ALL: [TypeDomain; 4] = [
        TypeDomain::Design,
        TypeDomain::Property,
        TypeDomain::Attribute,
        TypeDomain::Currency,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            TypeDomain::Design => "design",
            TypeDomain::Property => "property",
            TypeDomain::Attribute => "attribute",
            TypeDomain::Currency => "currency",
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            TypeDomain::Design => 0,
            TypeDomain::Property => 1,
            TypeDomain::Attribute => 2,
            TypeDomain::Currency => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        TypeDomain::ALL.get(code as usize).copied()
    }

    pub fn parse(s: &str) -> Result<Self, CryptoError> {
        TypeDomain::ALL
            .into_iter()
            .find(|d| d.label() == s)
            .ok_or_else(|| CryptoError::UnknownTypeDomain(s.into()))
    }
}

impl fmt::Display for TypeDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A token type: a group generator derived from a domain label and the
/// digest of a preimage (CAD file, property label, ...). Nobody knows its
/// discrete log with respect to `G`.
#[derive(Clone, Copy)]
pub struct TypeTag {
    domain: TypeDomain,
    preimage_hash: [u8; 32],
    generator: GroupElement,
}

impl TypeTag {
    pub fn from_preimage(domain: TypeDomain, preimage: &[u8]) -> Self {
        Self::from_digest(domain, digest256(preimage))
    }

    pub fn from_digest(domain: TypeDomain, preimage_hash: [u8; 32]) -> Self {
        let generator = hash_to_group(b"type", &type_input(domain, &preimage_hash));
        Self {
            domain,
            preimage_hash,
            generator,
        }
    }

    pub fn domain(&self) -> TypeDomain {
        self.domain
    }

    pub fn preimage_hash(&self) -> &[u8; 32] {
        &self.preimage_hash
    }

    pub fn generator(&self) -> GroupElement {
        self.generator
    }

    /// Registry key: domain code followed by the preimage digest.
    pub fn id(&self) -> TypeId {
        TypeId {
            domain: self.domain,
            preimage_hash: self.preimage_hash,
        }
    }
}

fn type_input(domain: TypeDomain, preimage_hash: &[u8; 32]) -> alloc::vec::Vec<u8> {
    let mut v = alloc::vec::Vec::with_capacity(8 + domain.label().len() + 32);
    v.extend_from_slice(&(domain.label().len() as u64).to_le_bytes());
    v.extend_from_slice(domain.label().as_bytes());
    v.extend_from_slice(preimage_hash);
    v
}

impl PartialEq for TypeTag {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain && self.preimage_hash == other.preimage_hash
    }
}

impl Eq for TypeTag {}

impl fmt::Debug for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TypeTag({}:", self.domain)?;
        for b in &self.preimage_hash[..6] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

impl Encode for TypeTag {
    fn encode_to(&self, w: &mut Writer) {
        self.id().encode_to(w);
    }
}

impl Decode for TypeTag {
    const MIN_ENCODED_LEN: usize = 33;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let id = TypeId::decode_from(r)?;
        Ok(TypeTag::from_digest(id.domain, id.preimage_hash))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeId {
    pub domain: TypeDomain,
    pub preimage_hash: [u8; 32],
}

impl TypeId {
    pub fn tag(&self) -> TypeTag {
        TypeTag::from_digest(self.domain, self.preimage_hash)
    }
}

impl Encode for TypeId {
    fn encode_to(&self, w: &mut Writer) {
        w.put_u8(self.domain.code());
        w.put_fixed(&self.preimage_hash);
    }
}

impl Decode for TypeId {
    const MIN_ENCODED_LEN: usize = 33;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let code = r.get_u8()?;
        let domain = TypeDomain::from_code(code).ok_or(DecodeError::UnknownTag(code))?;
        Ok(TypeId {
            domain,
            preimage_hash: r.take_array()?,
        })
    }
}

// ---------------------------------------------------------------------------
// Parameters

/// System-wide public parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublicParams {
    pub security_level: u32,
    /// Width `k` of range proofs; amounts must be below `2^k`.
    pub range_bits: u32,
    /// Default anonymity set size for rings.
    pub ring_size: usize,
}

pub const DEFAULT_RANGE_BITS: u32 = 16;
pub const MAX_RANGE_BITS: u32 = 64;
pub const DEFAULT_RING_SIZE: usize = 27;

/// Builds the public parameters for a security level. Only 128 is
/// supported; the result is deterministic.
pub fn setup(security_level: u32) -> Result<PublicParams, CryptoError> {
    if security_level != 128 {
        return Err(CryptoError::UnsupportedSecurityLevel(security_level));
    }
    Ok(PublicParams {
        security_level,
        range_bits: DEFAULT_RANGE_BITS,
        ring_size: DEFAULT_RING_SIZE,
    })
}

impl PublicParams {
    /// Small parameters for fast tests: 16-bit amounts, rings of 8.
    pub fn test_profile() -> Self {
        PublicParams {
            security_level: 128,
            range_bits: 16,
            ring_size: 8,
        }
    }

    /// Full-width amounts and rings of 27.
    pub fn full_profile() -> Self {
        PublicParams {
            security_level: 128,
            range_bits: 64,
            ring_size: 27,
        }
    }

    pub fn with_range_bits(mut self, bits: u32) -> Result<Self, CryptoError> {
        if bits == 0 || bits > MAX_RANGE_BITS {
            return Err(CryptoError::InvalidRangeWidth(bits));
        }
        self.range_bits = bits;
        Ok(self)
    }

    pub fn with_ring_size(mut self, n: usize) -> Result<Self, CryptoError> {
        if n < 2 {
            return Err(CryptoError::RingTooSmall(n));
        }
        self.ring_size = n;
        Ok(self)
    }

    pub fn base(&self) -> GroupElement {
        GroupElement::base()
    }

    /// Largest representable amount, `2^k - 1`.
    pub fn max_amount(&self) -> u64 {
        if self.range_bits >= 64 {
            u64::MAX
        } else {
            (1u64 << self.range_bits) - 1
        }
    }

    pub fn check_amount(&self, amount: u64) -> Result<(), CryptoError> {
        if amount > self.max_amount() {
            Err(CryptoError::AmountOutOfRange {
                amount,
                bits: self.range_bits,
            })
        } else {
            Ok(())
        }
    }
}

impl Encode for PublicParams {
    fn encode_to(&self, w: &mut Writer) {
        w.put_u64(self.security_level as u64);
        w.put_u64(self.range_bits as u64);
        w.put_u64(self.ring_size as u64);
    }
}

impl Decode for PublicParams {
    const MIN_ENCODED_LEN: usize = 24;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let level = r.get_u64()?;
        let bits = r.get_u64()?;
        let ring = r.get_u64()?;
        if level != 128 || bits == 0 || bits > MAX_RANGE_BITS as u64 || !(2..=1024).contains(&ring)
        {
            return Err(DecodeError::OutOfRange);
        }
        Ok(PublicParams {
            security_level: level as u32,
            range_bits: bits as u32,
            ring_size: ring as usize,
        })
    }
}

// ---------------------------------------------------------------------------
// Commitments

/// `a·T + r·G` for amount `a`, type generator `T` and blinding `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Commitment(pub GroupElement);

impl Commitment {
    pub fn commit(
        params: &PublicParams,
        amount: u64,
        generator: &GroupElement,
        blinding: &GroupScalar,
    ) -> Result<Self, CryptoError> {
        params.check_amount(amount)?;
        Ok(Self::commit_unchecked(amount, generator, blinding))
    }

    /// Commits without the range check. Callers that build adversarial test
    /// vectors use this; honest code goes through [`Commitment::commit`].
    pub fn commit_unchecked(amount: u64, generator: &GroupElement, blinding: &GroupScalar) -> Self {
        Commitment(GroupElement::multiscalar_mul(
            &[GroupScalar::from_u64(amount), *blinding],
            &[*generator, GroupElement::base()],
        ))
    }

    pub fn verify_open(
        &self,
        amount: u64,
        generator: &GroupElement,
        blinding: &GroupScalar,
    ) -> bool {
        Self::commit_unchecked(amount, generator, blinding) == *self
    }

    pub fn point(&self) -> GroupElement {
        self.0
    }
}

impl Add for Commitment {
    type Output = Commitment;
    fn add(self, rhs: Commitment) -> Commitment {
        Commitment(self.0 + rhs.0)
    }
}

impl Sub for Commitment {
    type Output = Commitment;
    fn sub(self, rhs: Commitment) -> Commitment {
        Commitment(self.0 - rhs.0)
    }
}

impl Encode for Commitment {
    fn encode_to(&self, w: &mut Writer) {
        self.0.encode_to(w);
    }
}

impl Decode for Commitment {
    const MIN_ENCODED_LEN: usize = 32;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Commitment(GroupElement::decode_from(r)?))
    }
}
