//! Spend and CoinGen transactions.
//!
//! A spend is built as one or more *offers* that are *sealed* together.
//! Each offer carries its inputs and outputs with their proofs:
//!
//! * every input references a ring of ledger outputs and proves, for one
//!   undisclosed member `j`, knowledge of `sk` and `δ` such that
//!   `otpk_j = sk·G`, `KI = sk·Hp(otpk_j)` and `com_j − pseudo = δ·G`.
//!   The pseudo commitment therefore holds the same amount and type as the
//!   spent account under fresh blinding.
//! * every output proves that its blinded tag is `T_i + t·G` for one of a
//!   set of registered types (type ring) and that its commitment holds an
//!   amount below `2^k` with respect to the blinded tag.
//!
//! Sealing proves knowledge of the discrete log of
//! `Σ pseudo − Σ com` with respect to `G`. Since no discrete logs between
//! type generators and `G` are known, this forces per-type amount
//! conservation. Each offer's input proofs are bound to that offer's
//! outputs, so a sealer cannot redirect another party's outputs.
//!
//! CoinGen transactions reveal their types and prove `tag − T = t·G`
//! directly; the amounts stay hidden.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::accounts::{
    chk_key, chk_val, key_image, key_image_base, ot_gen, CoinKey, KeyImage, OneTimeAccount,
    PublicKeys,
};
use crate::encoding::{Decode, DecodeError, Encode, Reader, Writer};
use crate::group::{
    Commitment, CryptoError, GroupElement, GroupScalar, PublicParams, TypeId, TypeTag,
};
use crate::memo::{MEMO_PLAINTEXT_LEN, MEMO_TAG_LEN};
use crate::range::RangeProof;
use crate::sigma::{Clause, DlogProof, Equation, OrProof};
use crate::transcript::Transcript;

pub const MAX_RING_SIZE: usize = 128;
pub const MAX_INPUTS: usize = 64;
pub const MAX_OUTPUTS: usize = 64;
pub const MEMO_LEN: usize = MEMO_PLAINTEXT_LEN + MEMO_TAG_LEN;

/// Read access to the ledger needed to build and verify transactions.
pub trait LedgerView {
    fn params(&self) -> &PublicParams;
    fn output_count(&self) -> u64;
    fn output(&self, index: u64) -> Option<&OneTimeAccount>;
    fn contains_one_time_key(&self, key: &GroupElement) -> bool;
    fn is_spent(&self, image: &KeyImage) -> bool;
    fn type_count(&self) -> u64;
    fn registered_type(&self, index: u64) -> Option<&TypeTag>;
    fn type_index(&self, id: &TypeId) -> Option<u64>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("ring size {0} is too small (minimum 2)")]
    RingTooSmall(usize),
    #[error("transaction has no inputs")]
    NoInputs,
    #[error("transaction has no outputs")]
    NoOutputs,
    #[error("too many inputs or outputs")]
    TooLarge,
    #[error("input {0} is not owned by the provided keys or openings")]
    InputNotOwned(usize),
    #[error("input {0} is not in the ledger at the given position")]
    InputNotFound(usize),
    #[error("explicit ring for input {0} is invalid")]
    InvalidRing(usize),
    #[error("per-type input and output sums differ")]
    ConservationViolated,
    #[error("type appears twice in one issuance")]
    DuplicateType,
    #[error("output type is not registered")]
    UnregisteredType,
    #[error("the same key image appears twice")]
    DuplicateKeyImage,
    #[error("seal needs at least one offer")]
    EmptySeal,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

// ---------------------------------------------------------------------------
// Wire types

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputBundle {
    /// Ledger positions of the ring members, strictly increasing.
    pub ring: Vec<u64>,
    pub key_image: KeyImage,
    pub pseudo_commitment: Commitment,
    pub membership: OrProof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeProof {
    /// Registry positions of the candidate types, strictly increasing.
    pub ring: Vec<u64>,
    pub proof: OrProof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputBundle {
    pub account: OneTimeAccount,
    pub range_proof: RangeProof,
    pub type_proof: TypeProof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OfferBody {
    pub inputs: Vec<InputBundle>,
    pub outputs: Vec<OutputBundle>,
}

/// A CoinGen output: the type is public, the amount is not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssuedOutput {
    pub ty: TypeTag,
    pub account: OneTimeAccount,
    pub range_proof: RangeProof,
    /// Proof of knowledge of `t` with `tag − T = t·G`.
    pub tag_proof: DlogProof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxKind {
    Spend,
    CoinGen,
}

impl TxKind {
    pub fn code(&self) -> u8 {
        match self {
            TxKind::Spend => 1,
            TxKind::CoinGen => 2,
        }
    }
}

/// The published transaction `tx(S, T)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransactionBody {
    Spend { offers: Vec<OfferBody> },
    CoinGen { outputs: Vec<IssuedOutput> },
}

/// The transaction signature `σ`: a Schnorr proof over the excess of the
/// transaction, bound to every component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxSignature(pub DlogProof);

impl TransactionBody {
    pub fn kind(&self) -> TxKind {
        match self {
            TransactionBody::Spend { .. } => TxKind::Spend,
            TransactionBody::CoinGen { .. } => TxKind::CoinGen,
        }
    }

    pub fn inputs(&self) -> impl Iterator<Item = &InputBundle> {
        let offers: &[OfferBody] = match self {
            TransactionBody::Spend { offers } => offers,
            TransactionBody::CoinGen { .. } => &[],
        };
        offers.iter().flat_map(|o| o.inputs.iter())
    }

    /// Output accounts in ledger order.
    pub fn output_accounts(&self) -> Vec<&OneTimeAccount> {
        match self {
            TransactionBody::Spend { offers } => offers
                .iter()
                .flat_map(|o| o.outputs.iter().map(|b| &b.account))
                .collect(),
            TransactionBody::CoinGen { outputs } => outputs.iter().map(|o| &o.account).collect(),
        }
    }

    pub fn input_count(&self) -> usize {
        self.inputs().count()
    }

    pub fn output_count(&self) -> usize {
        match self {
            TransactionBody::Spend { offers } => offers.iter().map(|o| o.outputs.len()).sum(),
            TransactionBody::CoinGen { outputs } => outputs.len(),
        }
    }

    pub fn issued_types(&self) -> Vec<TypeTag> {
        match self {
            TransactionBody::Spend { .. } => Vec::new(),
            TransactionBody::CoinGen { outputs } => outputs.iter().map(|o| o.ty).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Encoding

impl Encode for InputBundle {
    fn encode_to(&self, w: &mut Writer) {
        w.put_seq(&self.ring);
        w.put(&self.key_image);
        w.put(&self.pseudo_commitment);
        w.put(&self.membership);
    }
}

impl Decode for InputBundle {
    const MIN_ENCODED_LEN: usize = 8 + 64 + 8;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(InputBundle {
            ring: r.get_seq()?,
            key_image: r.get()?,
            pseudo_commitment: r.get()?,
            membership: r.get()?,
        })
    }
}

impl Encode for TypeProof {
    fn encode_to(&self, w: &mut Writer) {
        w.put_seq(&self.ring);
        w.put(&self.proof);
    }
}

impl Decode for TypeProof {
    const MIN_ENCODED_LEN: usize = 16;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(TypeProof {
            ring: r.get_seq()?,
            proof: r.get()?,
        })
    }
}

impl Encode for OutputBundle {
    fn encode_to(&self, w: &mut Writer) {
        w.put(&self.account);
        w.put(&self.range_proof);
        w.put(&self.type_proof);
    }
}

impl Decode for OutputBundle {
    const MIN_ENCODED_LEN: usize = OneTimeAccount::MIN_ENCODED_LEN + 24;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(OutputBundle {
            account: r.get()?,
            range_proof: r.get()?,
            type_proof: r.get()?,
        })
    }
}

impl Encode for OfferBody {
    fn encode_to(&self, w: &mut Writer) {
        w.put_seq(&self.inputs);
        w.put_seq(&self.outputs);
    }
}

impl Decode for OfferBody {
    const MIN_ENCODED_LEN: usize = 16;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(OfferBody {
            inputs: r.get_seq()?,
            outputs: r.get_seq()?,
        })
    }
}

impl Encode for IssuedOutput {
    fn encode_to(&self, w: &mut Writer) {
        w.put(&self.ty);
        w.put(&self.account);
        w.put(&self.range_proof);
        w.put(&self.tag_proof);
    }
}

impl Decode for IssuedOutput {
    const MIN_ENCODED_LEN: usize = 33 + OneTimeAccount::MIN_ENCODED_LEN + 8 + 64;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(IssuedOutput {
            ty: r.get()?,
            account: r.get()?,
            range_proof: r.get()?,
            tag_proof: r.get()?,
        })
    }
}

impl Encode for TransactionBody {
    fn encode_to(&self, w: &mut Writer) {
        w.put_u8(self.kind().code());
        match self {
            TransactionBody::Spend { offers } => w.put_seq(offers),
            TransactionBody::CoinGen { outputs } => w.put_seq(outputs),
        }
    }
}

impl Decode for TransactionBody {
    const MIN_ENCODED_LEN: usize = 9;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.get_u8()? {
            1 => Ok(TransactionBody::Spend {
                offers: r.get_seq()?,
            }),
            2 => Ok(TransactionBody::CoinGen {
                outputs: r.get_seq()?,
            }),
            other => Err(DecodeError::UnknownTag(other)),
        }
    }
}

impl Encode for TxSignature {
    fn encode_to(&self, w: &mut Writer) {
        w.put(&self.0);
    }
}

impl Decode for TxSignature {
    const MIN_ENCODED_LEN: usize = 64;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(TxSignature(r.get()?))
    }
}

// ---------------------------------------------------------------------------
// Statements shared by prover and verifier

fn membership_clauses<V: LedgerView + ?Sized>(
    view: &V,
    ring: &[u64],
    image: &KeyImage,
    pseudo: &Commitment,
) -> Option<Vec<Clause>> {
    let g = GroupElement::base();
    ring.iter()
        .map(|&idx| {
            let member = view.output(idx)?;
            let ki_base = key_image_base(&member.one_time_key);
            Some(Clause::new(
                2,
                alloc::vec![
                    Equation::single(member.one_time_key, 0, g),
                    Equation::single(image.0, 0, ki_base),
                    Equation::single(member.commitment.point() - pseudo.point(), 1, g),
                ],
            ))
        })
        .collect()
}

fn type_clauses<V: LedgerView + ?Sized>(
    view: &V,
    ring: &[u64],
    tag: &GroupElement,
) -> Option<Vec<Clause>> {
    let g = GroupElement::base();
    ring.iter()
        .map(|&idx| {
            let ty = view.registered_type(idx)?;
            Some(Clause::new(
                1,
                alloc::vec![Equation::single(*tag - ty.generator(), 0, g)],
            ))
        })
        .collect()
}

fn output_context(account: &OneTimeAccount) -> [u8; 32] {
    let mut t = Transcript::new(b"output");
    t.append_bytes(b"account", &account.encode());
    t.digest()
}

fn issued_context(ty: &TypeTag, account: &OneTimeAccount) -> [u8; 32] {
    let mut t = Transcript::new(b"issued-output");
    t.append_bytes(b"type", &ty.encode());
    t.append_bytes(b"account", &account.encode());
    t.digest()
}

/// Digest of the public statement of an offer (everything but the proofs).
fn offer_statement_digest(
    inputs: &[(&[u64], &KeyImage, &Commitment)],
    outputs: &[&OneTimeAccount],
) -> [u8; 32] {
    let mut t = Transcript::new(b"offer-statement");
    t.append_u64(b"inputs", inputs.len() as u64);
    for (ring, image, pseudo) in inputs {
        let mut w = Writer::new();
        w.put_seq(ring);
        t.append_bytes(b"ring", w.as_slice());
        t.append_element(b"key-image", &image.0);
        t.append_element(b"pseudo", &pseudo.point());
    }
    t.append_u64(b"outputs", outputs.len() as u64);
    for acc in outputs {
        t.append_bytes(b"account", &acc.encode());
    }
    t.digest()
}

fn membership_context(statement: &[u8; 32], position: usize) -> [u8; 40] {
    let mut out = [0u8; 40];
    out[..32].copy_from_slice(statement);
    out[32..].copy_from_slice(&(position as u64).to_le_bytes());
    out
}

fn body_statement_digest(body: &OfferBody) -> [u8; 32] {
    let inputs: Vec<(&[u64], &KeyImage, &Commitment)> = body
        .inputs
        .iter()
        .map(|i| (i.ring.as_slice(), &i.key_image, &i.pseudo_commitment))
        .collect();
    let outputs: Vec<&OneTimeAccount> = body.outputs.iter().map(|o| &o.account).collect();
    offer_statement_digest(&inputs, &outputs)
}

/// Digest of a complete offer, proofs included.
pub fn offer_binding_digest(body: &OfferBody) -> [u8; 32] {
    let mut t = Transcript::new(b"offer-binding");
    t.append_bytes(b"statement", &body_statement_digest(body));
    t.append_bytes(b"body", &body.encode());
    t.digest()
}

fn seal_context(bindings: &[[u8; 32]]) -> [u8; 32] {
    let mut t = Transcript::new(b"seal");
    t.append_u64(b"offers", bindings.len() as u64);
    for b in bindings {
        t.append_bytes(b"binding", b);
    }
    t.digest()
}

fn coingen_context(outputs: &[IssuedOutput]) -> [u8; 32] {
    let mut t = Transcript::new(b"coingen");
    let mut w = Writer::new();
    w.put_seq(outputs);
    t.append_bytes(b"outputs", w.as_slice());
    t.digest()
}

fn offer_excess_point(body: &OfferBody) -> GroupElement {
    let pseudo: GroupElement = body
        .inputs
        .iter()
        .map(|i| i.pseudo_commitment.point())
        .sum();
    let out: GroupElement = body
        .outputs
        .iter()
        .map(|o| o.account.commitment.point())
        .sum();
    pseudo - out
}

// ---------------------------------------------------------------------------
// Builder inputs

/// One input `(a, ty, ck, sk, acc)` plus its ledger position.
#[derive(Debug, Clone)]
pub struct SpendInput {
    pub ledger_index: u64,
    pub account: OneTimeAccount,
    pub amount: u64,
    pub ty: TypeTag,
    pub coin_key: CoinKey,
    pub secret_key: GroupScalar,
    /// Use this ring instead of sampling decoys. Must contain
    /// `ledger_index`.
    pub ring: Option<Vec<u64>>,
}

/// An output `(ck, a, ty, acc)` created by [`crate::accounts::ot_gen`].
#[derive(Debug, Clone)]
pub struct PendingOutput {
    pub account: OneTimeAccount,
    pub coin_key: CoinKey,
    pub amount: u64,
    pub ty: TypeTag,
}

impl PendingOutput {
    /// Runs `OTGen` for `amount` of `ty` to `ltp`.
    pub fn new<R: RngCore + CryptoRng>(
        params: &PublicParams,
        ltp: &PublicKeys,
        ty: &TypeTag,
        amount: u64,
        output_index: u64,
        rng: &mut R,
    ) -> Result<Self, CryptoError> {
        let (account, coin_key) = ot_gen(params, ltp, ty, amount, output_index, rng)?;
        Ok(PendingOutput {
            account,
            coin_key,
            amount,
            ty: *ty,
        })
    }
}

/// Whether an offer must balance on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Balance {
    /// Per-type input and output sums must match (plain spend).
    Exact,
    /// One leg of a swap; the counter-offer makes up the difference.
    Open,
}

/// Checks per-type sums of inputs against outputs.
pub fn per_type_balanced(inputs: &[(TypeId, u64)], outputs: &[(TypeId, u64)]) -> bool {
    let mut totals: alloc::collections::BTreeMap<TypeId, i128> =
        alloc::collections::BTreeMap::new();
    for (ty, a) in inputs {
        *totals.entry(*ty).or_default() += *a as i128;
    }
    for (ty, a) in outputs {
        *totals.entry(*ty).or_default() -= *a as i128;
    }
    totals.values().all(|v| *v == 0)
}

/// Samples `count` distinct positions below `upper`, excluding `exclude`.
fn sample_distinct<R: RngCore + CryptoRng>(
    upper: u64,
    count: usize,
    exclude: u64,
    rng: &mut R,
) -> Vec<u64> {
    let mut picked = BTreeSet::new();
    picked.insert(exclude);
    let available = upper.saturating_sub(1) as usize;
    let count = count.min(available);
    while picked.len() < count + 1 {
        picked.insert(rng.next_u64() % upper);
    }
    picked.into_iter().collect()
}

// ---------------------------------------------------------------------------
// Offer construction

/// An offer whose inputs are prepared but not yet proven.
pub struct PreparedOffer {
    inputs: Vec<PreparedInput>,
    outputs: Vec<PendingOutput>,
    statement: [u8; 32],
    excess: GroupScalar,
}

struct PreparedInput {
    ring: Vec<u64>,
    position: usize,
    key_image: KeyImage,
    pseudo: Commitment,
    secret_key: GroupScalar,
    delta: GroupScalar,
}

/// Inputs proven; outputs not yet proven.
pub struct PreSpent {
    bundles: Vec<InputBundle>,
    outputs: Vec<PendingOutput>,
    excess: GroupScalar,
}

/// A finished offer. `excess` is the blinding contribution that the sealer
/// needs; hand it only to the party that seals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Offer {
    pub body: OfferBody,
    pub excess: GroupScalar,
    pub binding_digest: [u8; 32],
}

impl Encode for Offer {
    fn encode_to(&self, w: &mut Writer) {
        w.put(&self.body);
        w.put(&self.excess);
    }
}

impl Decode for Offer {
    const MIN_ENCODED_LEN: usize = 16 + 32;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let body: OfferBody = r.get()?;
        let excess = r.get()?;
        let binding_digest = offer_binding_digest(&body);
        Ok(Offer {
            body,
            excess,
            binding_digest,
        })
    }
}

/// Validates inputs and outputs, picks rings and pseudo commitments.
pub fn prepare_offer<V: LedgerView + ?Sized, R: RngCore + CryptoRng>(
    view: &V,
    inputs: &[SpendInput],
    outputs: &[PendingOutput],
    ring_size: usize,
    balance: Balance,
    rng: &mut R,
) -> Result<PreparedOffer, TxError> {
    let params = view.params();
    if ring_size < 2 {
        return Err(TxError::RingTooSmall(ring_size));
    }
    if inputs.is_empty() {
        return Err(TxError::NoInputs);
    }
    if inputs.len() > MAX_INPUTS || outputs.len() > MAX_OUTPUTS || ring_size > MAX_RING_SIZE {
        return Err(TxError::TooLarge);
    }
    for (i, input) in inputs.iter().enumerate() {
        params.check_amount(input.amount)?;
        if view.output(input.ledger_index) != Some(&input.account) {
            return Err(TxError::InputNotFound(i));
        }
        if !chk_key(&input.secret_key, &input.account)
            || !chk_val(&input.coin_key, &input.ty, input.amount, &input.account)
        {
            return Err(TxError::InputNotOwned(i));
        }
    }
    for out in outputs {
        params.check_amount(out.amount)?;
        if view.type_index(&out.ty.id()).is_none() {
            return Err(TxError::UnregisteredType);
        }
    }
    if balance == Balance::Exact {
        let ins: Vec<(TypeId, u64)> = inputs.iter().map(|i| (i.ty.id(), i.amount)).collect();
        let outs: Vec<(TypeId, u64)> = outputs.iter().map(|o| (o.ty.id(), o.amount)).collect();
        if !per_type_balanced(&ins, &outs) {
            return Err(TxError::ConservationViolated);
        }
    }
    prepare_offer_unchecked(view, inputs, outputs, ring_size, rng)
}

/// Like [`prepare_offer`] but skips ownership, range and balance checks.
/// Transactions built from unbalanced or out-of-range data are rejected by
/// [`verify`]; this exists so that can be tested.
pub fn prepare_offer_unchecked<V: LedgerView + ?Sized, R: RngCore + CryptoRng>(
    view: &V,
    inputs: &[SpendInput],
    outputs: &[PendingOutput],
    ring_size: usize,
    rng: &mut R,
) -> Result<PreparedOffer, TxError> {
    let mut prepared = Vec::with_capacity(inputs.len());
    let mut seen_images = BTreeSet::new();
    for (i, input) in inputs.iter().enumerate() {
        let ring = match &input.ring {
            Some(explicit) => {
                let mut ring = explicit.clone();
                ring.sort_unstable();
                ring.dedup();
                if ring.len() != explicit.len()
                    || ring.len() > MAX_RING_SIZE
                    || !ring.contains(&input.ledger_index)
                    || ring.iter().any(|&idx| view.output(idx).is_none())
                {
                    return Err(TxError::InvalidRing(i));
                }
                ring
            }
            None => sample_distinct(view.output_count(), ring_size - 1, input.ledger_index, rng),
        };
        let position = ring
            .iter()
            .position(|&idx| idx == input.ledger_index)
            .ok_or(TxError::InvalidRing(i))?;
        let key_image = key_image(&input.secret_key, &input.account);
        if !seen_images.insert(key_image.0.to_bytes()) {
            return Err(TxError::DuplicateKeyImage);
        }
        let pseudo_blinding = GroupScalar::random(rng);
        let pseudo =
            Commitment::commit_unchecked(input.amount, &input.ty.generator(), &pseudo_blinding);
        prepared.push((
            pseudo_blinding,
            PreparedInput {
                ring,
                position,
                key_image,
                pseudo,
                secret_key: input.secret_key,
                delta: input.coin_key.blinding - pseudo_blinding,
            },
        ));
    }
    prepared.sort_by_key(|(_, p)| p.key_image.0.to_bytes());

    let mut outputs = outputs.to_vec();
    outputs.sort_by_key(|o| o.account.one_time_key.to_bytes());

    let excess = prepared.iter().map(|(b, _)| *b).sum::<GroupScalar>()
        - outputs
            .iter()
            .map(|o| o.coin_key.blinding)
            .sum::<GroupScalar>();
    let inputs: Vec<PreparedInput> = prepared.into_iter().map(|(_, p)| p).collect();

    let statement = {
        let ins: Vec<(&[u64], &KeyImage, &Commitment)> = inputs
            .iter()
            .map(|p| (p.ring.as_slice(), &p.key_image, &p.pseudo))
            .collect();
        let outs: Vec<&OneTimeAccount> = outputs.iter().map(|o| &o.account).collect();
        offer_statement_digest(&ins, &outs)
    };

    Ok(PreparedOffer {
        inputs,
        outputs,
        statement,
        excess,
    })
}

impl PreparedOffer {
    /// The secret-key dependent part: ring membership proofs.
    pub fn prove_inputs<V: LedgerView + ?Sized, R: RngCore + CryptoRng>(
        self,
        view: &V,
        rng: &mut R,
    ) -> Result<PreSpent, TxError> {
        let mut bundles = Vec::with_capacity(self.inputs.len());
        for (pos, input) in self.inputs.iter().enumerate() {
            let clauses = membership_clauses(view, &input.ring, &input.key_image, &input.pseudo)
                .ok_or(TxError::InvalidRing(pos))?;
            let membership = OrProof::prove(
                &clauses,
                input.position,
                &[input.secret_key, input.delta],
                &membership_context(&self.statement, pos),
                rng,
            )?;
            bundles.push(InputBundle {
                ring: input.ring.clone(),
                key_image: input.key_image,
                pseudo_commitment: input.pseudo,
                membership,
            });
        }
        Ok(PreSpent {
            bundles,
            outputs: self.outputs,
            excess: self.excess,
        })
    }
}

impl PreSpent {
    /// Range and type proofs for the outputs. Needs no spend secrets.
    pub fn finish<V: LedgerView + ?Sized, R: RngCore + CryptoRng>(
        self,
        view: &V,
        ring_size: usize,
        rng: &mut R,
    ) -> Result<Offer, TxError> {
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for out in &self.outputs {
            outputs.push(prove_output(view, out, ring_size, rng)?);
        }
        let body = OfferBody {
            inputs: self.bundles,
            outputs,
        };
        let binding_digest = offer_binding_digest(&body);
        Ok(Offer {
            body,
            excess: self.excess,
            binding_digest,
        })
    }
}

fn prove_output<V: LedgerView + ?Sized, R: RngCore + CryptoRng>(
    view: &V,
    out: &PendingOutput,
    ring_size: usize,
    rng: &mut R,
) -> Result<OutputBundle, TxError> {
    let params = view.params();
    let ctx = output_context(&out.account);
    // com = a·T + ck·G = a·(T + t·G) + (ck − a·t)·G
    let range_blinding =
        out.coin_key.blinding - GroupScalar::from_u64(out.amount) * out.coin_key.tag_blinding;
    let range_proof = RangeProof::prove(
        out.amount,
        &out.account.tag,
        &range_blinding,
        params.range_bits,
        &ctx,
        rng,
    )?;
    let type_index = view
        .type_index(&out.ty.id())
        .ok_or(TxError::UnregisteredType)?;
    let ring = sample_distinct(view.type_count(), ring_size - 1, type_index, rng);
    let position = ring
        .iter()
        .position(|&i| i == type_index)
        .expect("true type in ring");
    let clauses = type_clauses(view, &ring, &out.account.tag).ok_or(TxError::UnregisteredType)?;
    let proof = OrProof::prove(&clauses, position, &[out.coin_key.tag_blinding], &ctx, rng)?;
    Ok(OutputBundle {
        account: out.account.clone(),
        range_proof,
        type_proof: TypeProof { ring, proof },
    })
}

/// Builds a balanced offer.
pub fn offer<V: LedgerView + ?Sized, R: RngCore + CryptoRng>(
    view: &V,
    inputs: &[SpendInput],
    outputs: &[PendingOutput],
    ring_size: usize,
    rng: &mut R,
) -> Result<Offer, TxError> {
    prepare_offer(view, inputs, outputs, ring_size, Balance::Exact, rng)?
        .prove_inputs(view, rng)?
        .finish(view, ring_size, rng)
}

/// Builds one leg of a swap. It need not balance by itself.
pub fn offer_leg<V: LedgerView + ?Sized, R: RngCore + CryptoRng>(
    view: &V,
    inputs: &[SpendInput],
    outputs: &[PendingOutput],
    ring_size: usize,
    rng: &mut R,
) -> Result<Offer, TxError> {
    prepare_offer(view, inputs, outputs, ring_size, Balance::Open, rng)?
        .prove_inputs(view, rng)?
        .finish(view, ring_size, rng)
}

/// Merges offers into one transaction and signs the combined excess.
pub fn seal<R: RngCore + CryptoRng>(
    offers: &[Offer],
    rng: &mut R,
) -> Result<(TransactionBody, TxSignature), TxError> {
    if offers.is_empty() {
        return Err(TxError::EmptySeal);
    }
    let mut images = BTreeSet::new();
    for o in offers {
        for i in &o.body.inputs {
            if !images.insert(i.key_image.0.to_bytes()) {
                return Err(TxError::DuplicateKeyImage);
            }
        }
    }
    let excess: GroupScalar = offers.iter().map(|o| o.excess).sum();
    let point: GroupElement = offers.iter().map(|o| offer_excess_point(&o.body)).sum();
    if point != GroupElement::mul_base(&excess) {
        return Err(TxError::ConservationViolated);
    }
    Ok(seal_unchecked(offers, rng))
}

/// Seals without checking that the offers balance. The resulting
/// signature only verifies when they do; exposed for adversarial tests.
pub fn seal_unchecked<R: RngCore + CryptoRng>(
    offers: &[Offer],
    rng: &mut R,
) -> (TransactionBody, TxSignature) {
    let mut sorted: Vec<&Offer> = offers.iter().collect();
    sorted.sort_by_key(|o| o.binding_digest);
    let excess: GroupScalar = sorted.iter().map(|o| o.excess).sum();
    let point: GroupElement = sorted.iter().map(|o| offer_excess_point(&o.body)).sum();
    let bindings: Vec<[u8; 32]> = sorted.iter().map(|o| o.binding_digest).collect();
    let sig = DlogProof::prove(
        &GroupElement::base(),
        &point,
        &excess,
        &seal_context(&bindings),
        rng,
    );
    (
        TransactionBody::Spend {
            offers: sorted.into_iter().map(|o| o.body.clone()).collect(),
        },
        TxSignature(sig),
    )
}

/// `Seal(Offer(S, T))`.
pub fn spend<V: LedgerView + ?Sized, R: RngCore + CryptoRng>(
    view: &V,
    inputs: &[SpendInput],
    outputs: &[PendingOutput],
    ring_size: usize,
    rng: &mut R,
) -> Result<(TransactionBody, TxSignature), TxError> {
    let o = offer(view, inputs, outputs, ring_size, rng)?;
    seal(core::slice::from_ref(&o), rng)
}

/// Token initiation: each output reveals its (pairwise distinct) type.
pub fn coin_gen<R: RngCore + CryptoRng>(
    params: &PublicParams,
    outputs: &[PendingOutput],
    rng: &mut R,
) -> Result<(TransactionBody, TxSignature), TxError> {
    if outputs.is_empty() {
        return Err(TxError::NoOutputs);
    }
    if outputs.len() > MAX_OUTPUTS {
        return Err(TxError::TooLarge);
    }
    let mut seen = BTreeSet::new();
    for o in outputs {
        params.check_amount(o.amount)?;
        if !seen.insert(o.ty.id()) {
            return Err(TxError::DuplicateType);
        }
    }
    let mut sorted = outputs.to_vec();
    sorted.sort_by_key(|o| o.account.one_time_key.to_bytes());
    let g = GroupElement::base();
    let mut issued = Vec::with_capacity(sorted.len());
    for o in &sorted {
        let ctx = issued_context(&o.ty, &o.account);
        let range_blinding =
            o.coin_key.blinding - GroupScalar::from_u64(o.amount) * o.coin_key.tag_blinding;
        let range_proof = RangeProof::prove(
            o.amount,
            &o.account.tag,
            &range_blinding,
            params.range_bits,
            &ctx,
            rng,
        )?;
        let tag_proof = DlogProof::prove(
            &g,
            &(o.account.tag - o.ty.generator()),
            &o.coin_key.tag_blinding,
            &ctx,
            rng,
        );
        issued.push(IssuedOutput {
            ty: o.ty,
            account: o.account.clone(),
            range_proof,
            tag_proof,
        });
    }
    let excess: GroupScalar = sorted.iter().map(|o| o.coin_key.tag_blinding).sum();
    let point: GroupElement = issued
        .iter()
        .map(|o| o.account.tag - o.ty.generator())
        .sum();
    let sig = DlogProof::prove(&g, &point, &excess, &coingen_context(&issued), rng);
    Ok((
        TransactionBody::CoinGen { outputs: issued },
        TxSignature(sig),
    ))
}

// ---------------------------------------------------------------------------
// Verification

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    DoubleSpend,
    BadProof,
    UnknownRingMember,
    TypeReuse,
    Malformed,
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::DoubleSpend => "double-spend",
            RejectReason::BadProof => "bad-proof",
            RejectReason::UnknownRingMember => "unknown-ring-member",
            RejectReason::TypeReuse => "type-reuse",
            RejectReason::Malformed => "malformed",
        }
    }
}

impl core::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{reason}: {detail}")]
pub struct Rejection {
    pub reason: RejectReason,
    pub detail: &'static str,
}

fn reject<T>(reason: RejectReason, detail: &'static str) -> Result<T, Rejection> {
    Err(Rejection { reason, detail })
}

/// Effects of a transaction that passed [`verify`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verified {
    pub key_images: Vec<KeyImage>,
    pub new_types: Vec<TypeTag>,
    pub outputs: Vec<OneTimeAccount>,
}

fn check_strictly_increasing(ring: &[u64]) -> bool {
    ring.windows(2).all(|w| w[0] < w[1])
}

fn check_output_shape<V: LedgerView + ?Sized>(
    view: &V,
    acc: &OneTimeAccount,
    seen: &mut BTreeSet<[u8; 32]>,
) -> Result<(), Rejection> {
    if acc.one_time_key.is_identity() || acc.ephemeral.is_identity() || acc.tag.is_identity() {
        return reject(RejectReason::Malformed, "identity element in output");
    }
    if acc.memo.len() != MEMO_LEN {
        return reject(RejectReason::Malformed, "memo length");
    }
    if !seen.insert(acc.one_time_key.to_bytes()) || view.contains_one_time_key(&acc.one_time_key) {
        return reject(RejectReason::Malformed, "duplicate one-time key");
    }
    Ok(())
}

/// Checks a transaction against a ledger snapshot. Pure: the same inputs
/// always produce the same result.
pub fn verify<V: LedgerView + ?Sized>(
    view: &V,
    body: &TransactionBody,
    sig: &TxSignature,
) -> Result<Verified, Rejection> {
    match body {
        TransactionBody::Spend { offers } => verify_spend(view, offers, sig),
        TransactionBody::CoinGen { outputs } => verify_coingen(view, outputs, sig),
    }
}

fn verify_spend<V: LedgerView + ?Sized>(
    view: &V,
    offers: &[OfferBody],
    sig: &TxSignature,
) -> Result<Verified, Rejection> {
    let params = view.params();
    if offers.is_empty() {
        return reject(RejectReason::Malformed, "no offers");
    }
    let n_in: usize = offers.iter().map(|o| o.inputs.len()).sum();
    let n_out: usize = offers.iter().map(|o| o.outputs.len()).sum();
    if n_out == 0 || n_in > MAX_INPUTS || n_out > MAX_OUTPUTS {
        return reject(RejectReason::Malformed, "input/output count");
    }

    // Structure first: cheap checks before any proof.
    let mut images = BTreeSet::new();
    let mut one_time_keys = BTreeSet::new();
    let mut key_images = Vec::with_capacity(n_in);
    for offer in offers {
        if offer.inputs.is_empty() {
            return reject(RejectReason::Malformed, "offer without inputs");
        }
        let ki_order: Vec<[u8; 32]> = offer
            .inputs
            .iter()
            .map(|i| i.key_image.0.to_bytes())
            .collect();
        if !ki_order.windows(2).all(|w| w[0] < w[1]) {
            return reject(RejectReason::Malformed, "inputs not in canonical order");
        }
        let out_order: Vec<[u8; 32]> = offer
            .outputs
            .iter()
            .map(|o| o.account.one_time_key.to_bytes())
            .collect();
        if !out_order.windows(2).all(|w| w[0] < w[1]) {
            return reject(RejectReason::Malformed, "outputs not in canonical order");
        }
        for input in &offer.inputs {
            if input.ring.is_empty()
                || input.ring.len() > MAX_RING_SIZE
                || !check_strictly_increasing(&input.ring)
            {
                return reject(RejectReason::Malformed, "ring shape");
            }
            if input.ring.iter().any(|&idx| idx >= view.output_count()) {
                return reject(RejectReason::UnknownRingMember, "ring member not in ledger");
            }
            if input.key_image.0.is_identity() {
                return reject(RejectReason::Malformed, "identity key image");
            }
            if view.is_spent(&input.key_image) || !images.insert(input.key_image.0.to_bytes()) {
                return reject(RejectReason::DoubleSpend, "key image already used");
            }
            key_images.push(input.key_image);
        }
        for out in &offer.outputs {
            check_output_shape(view, &out.account, &mut one_time_keys)?;
            let ring = &out.type_proof.ring;
            if ring.is_empty() || ring.len() > MAX_RING_SIZE || !check_strictly_increasing(ring) {
                return reject(RejectReason::Malformed, "type ring shape");
            }
            if ring.iter().any(|&idx| idx >= view.type_count()) {
                return reject(RejectReason::Malformed, "type ring references unknown type");
            }
            if out.range_proof.bits() != params.range_bits as usize {
                return reject(RejectReason::Malformed, "range proof width");
            }
        }
    }

    let mut bindings = Vec::with_capacity(offers.len());
    let mut excess_point = GroupElement::identity();
    for offer in offers {
        let statement = body_statement_digest(offer);
        for (pos, input) in offer.inputs.iter().enumerate() {
            let clauses = match membership_clauses(
                view,
                &input.ring,
                &input.key_image,
                &input.pseudo_commitment,
            ) {
                Some(c) => c,
                None => {
                    return reject(RejectReason::UnknownRingMember, "ring member not in ledger")
                }
            };
            if !input
                .membership
                .verify(&clauses, &membership_context(&statement, pos))
            {
                return reject(RejectReason::BadProof, "ring membership proof");
            }
        }
        for out in &offer.outputs {
            let ctx = output_context(&out.account);
            if !out.range_proof.verify(
                &out.account.commitment.point(),
                &out.account.tag,
                params.range_bits,
                &ctx,
            ) {
                return reject(RejectReason::BadProof, "range proof");
            }
            let clauses = match type_clauses(view, &out.type_proof.ring, &out.account.tag) {
                Some(c) => c,
                None => {
                    return reject(RejectReason::Malformed, "type ring references unknown type")
                }
            };
            if !out.type_proof.proof.verify(&clauses, &ctx) {
                return reject(RejectReason::BadProof, "type proof");
            }
        }
        bindings.push(offer_binding_digest(offer));
        excess_point += offer_excess_point(offer);
    }
    if !bindings.windows(2).all(|w| w[0] < w[1]) {
        return reject(RejectReason::Malformed, "offers not in canonical order");
    }
    if !sig.0.verify(
        &GroupElement::base(),
        &excess_point,
        &seal_context(&bindings),
    ) {
        return reject(RejectReason::BadProof, "conservation proof");
    }

    Ok(Verified {
        key_images,
        new_types: Vec::new(),
        outputs: offers
            .iter()
            .flat_map(|o| o.outputs.iter().map(|b| b.account.clone()))
            .collect(),
    })
}

fn verify_coingen<V: LedgerView + ?Sized>(
    view: &V,
    outputs: &[IssuedOutput],
    sig: &TxSignature,
) -> Result<Verified, Rejection> {
    let params = view.params();
    if outputs.is_empty() || outputs.len() > MAX_OUTPUTS {
        return reject(RejectReason::Malformed, "output count");
    }
    let order: Vec<[u8; 32]> = outputs
        .iter()
        .map(|o| o.account.one_time_key.to_bytes())
        .collect();
    if !order.windows(2).all(|w| w[0] < w[1]) {
        return reject(RejectReason::Malformed, "outputs not in canonical order");
    }
    let mut types = BTreeSet::new();
    let mut one_time_keys = BTreeSet::new();
    for o in outputs {
        if view.type_index(&o.ty.id()).is_some() || !types.insert(o.ty.id()) {
            return reject(RejectReason::TypeReuse, "type already registered");
        }
        check_output_shape(view, &o.account, &mut one_time_keys)?;
        if o.range_proof.bits() != params.range_bits as usize {
            return reject(RejectReason::Malformed, "range proof width");
        }
    }
    let g = GroupElement::base();
    for o in outputs {
        let ctx = issued_context(&o.ty, &o.account);
        if !o
            .tag_proof
            .verify(&g, &(o.account.tag - o.ty.generator()), &ctx)
        {
            return reject(RejectReason::BadProof, "tag proof");
        }
        if !o.range_proof.verify(
            &o.account.commitment.point(),
            &o.account.tag,
            params.range_bits,
            &ctx,
        ) {
            return reject(RejectReason::BadProof, "range proof");
        }
    }
    let point: GroupElement = outputs
        .iter()
        .map(|o| o.account.tag - o.ty.generator())
        .sum();
    if !sig.0.verify(&g, &point, &coingen_context(outputs)) {
        return reject(RejectReason::BadProof, "issuance signature");
    }
    Ok(Verified {
        key_images: Vec::new(),
        new_types: outputs.iter().map(|o| o.ty).collect(),
        outputs: outputs.iter().map(|o| o.account.clone()).collect(),
    })
}
