//! License management and part life-cycle workflows on top of the ledger.
//!
//! Designs, properties and transient attributes are token types. A part is
//! identified by its eID: tokens sent to `itemGen(eID)` are bound to it for
//! good, while `accGen(eID)` is a secondary account anyone holding the eID
//! can spend from.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::accounts::{acc_gen, detect, item_gen, AccountError, ItemId, LongTermKeys, PublicKeys};
use crate::encoding::{Decode, DecodeError, Encode, Reader, Writer};
use crate::group::{
    digest256, CryptoError, GroupElement, GroupScalar, TypeDomain, TypeId, TypeTag,
};
use crate::ledger::{LedgerClient, LedgerError, LedgerState, Receipt, ScanHit, SpentInfo};
use crate::sigma::{Clause, Equation, OrProof};
use crate::transactions::{coin_gen, spend, LedgerView, PendingOutput, TxError};
use crate::transcript::Transcript;

/// Prefix that turns a property label into its revocation label.
pub const NEGATION_PREFIX: &str = "¬";
/// Default number of parallel outputs in a certification pool.
pub const DEFAULT_POOL_WIDTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LicenseError {
    #[error("account holds a different token type")]
    TypeMismatch,
    #[error("insufficient balance: have {have}, need {need}")]
    InsufficientBalance { have: u64, need: u64 },
    #[error("no spendable output of the requested type")]
    NothingToSpend,
    #[error("output is not viewable with these keys")]
    NotViewable,
    #[error("pool width must be at least 1")]
    EmptyPool,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error(transparent)]
    Account(#[from] AccountError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// A design type: the identity of a CAD file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesignType {
    pub file_digest: [u8; 32],
    pub tag: TypeTag,
}

impl DesignType {
    pub fn from_file(cad: &[u8]) -> Self {
        let file_digest = digest256(cad);
        DesignType {
            file_digest,
            tag: TypeTag::from_digest(TypeDomain::Design, file_digest),
        }
    }
}

/// A property type named by a published label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyType {
    pub label: String,
    pub tag: TypeTag,
}

impl PropertyType {
    pub fn new(label: &str) -> Self {
        PropertyType {
            label: label.to_string(),
            tag: TypeTag::from_preimage(TypeDomain::Property, label.as_bytes()),
        }
    }

    /// The paired revocation property, `"¬" ‖ label`.
    pub fn negation(&self) -> PropertyType {
        let mut label = String::from(NEGATION_PREFIX);
        label.push_str(&self.label);
        PropertyType::new(&label)
    }

    pub fn is_negation(&self) -> bool {
        self.label.starts_with(NEGATION_PREFIX)
    }
}

/// Transient attribute type (e.g. "ready for pickup").
pub fn attribute_type(label: &str) -> TypeTag {
    TypeTag::from_preimage(TypeDomain::Attribute, label.as_bytes())
}

/// Same file, same identity.
pub fn verify_file_integrity(cad: &[u8], ty: &TypeTag) -> bool {
    ty.domain() == TypeDomain::Design && DesignType::from_file(cad).tag == *ty
}

/// The ledger accounts of a physical part.
#[derive(Debug, Clone)]
pub struct PartIdentity {
    pub eid: ItemId,
    pub proxy_salt: Option<Vec<u8>>,
    /// `itemGen(eID)`, or `itemGen(eID ‖ s)` in proxy mode.
    pub receive_only: LongTermKeys,
    /// `accGen(eID)`.
    pub transient: LongTermKeys,
}

impl PartIdentity {
    pub fn new(eid: ItemId) -> Result<Self, AccountError> {
        Ok(PartIdentity {
            receive_only: item_gen(eid.as_bytes())?,
            transient: acc_gen(eid.as_bytes()),
            eid,
            proxy_salt: None,
        })
    }

    pub fn with_proxy_salt(eid: ItemId, salt: &[u8]) -> Result<Self, AccountError> {
        Ok(PartIdentity {
            receive_only: item_gen(eid.salted(salt).as_bytes())?,
            transient: acc_gen(eid.as_bytes()),
            eid,
            proxy_salt: Some(salt.to_vec()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HistorySource {
    /// The receive-only account: bound to the part forever.
    Permanent,
    /// The spendable secondary account.
    Transient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryEntry {
    pub source: HistorySource,
    pub ledger_index: u64,
    pub ty: TypeTag,
    pub amount: u64,
    pub coin_key: crate::accounts::CoinKey,
    pub received_ms: u64,
    pub spent_ms: Option<u64>,
}

/// All tokens a part has ever received, in ledger order.
pub fn item_verification(state: &LedgerState, part: &PartIdentity) -> Vec<HistoryEntry> {
    let permanent = state
        .scan(&part.receive_only.view)
        .into_iter()
        .map(|h| entry(HistorySource::Permanent, h));
    let transient = state
        .scan_keys(&part.transient)
        .into_iter()
        .map(|h| entry(HistorySource::Transient, h));
    let mut all: Vec<HistoryEntry> = permanent.chain(transient).collect();
    all.sort_by_key(|e| e.ledger_index);
    all
}

fn entry(source: HistorySource, h: ScanHit) -> HistoryEntry {
    HistoryEntry {
        source,
        ledger_index: h.ledger_index,
        ty: h.output.ty,
        amount: h.output.amount,
        coin_key: h.output.coin_key,
        received_ms: h.received_ms,
        spent_ms: match h.spent {
            Some(SpentInfo::Spent { timestamp_ms, .. }) => Some(timestamp_ms),
            _ => None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropertyStatus {
    pub positive: u64,
    pub negated: u64,
    pub valid: bool,
    /// A revocation without the property it revokes.
    pub anomalous: bool,
}

impl PropertyStatus {
    pub fn from_counts(positive: u64, negated: u64) -> Self {
        PropertyStatus {
            positive,
            negated,
            valid: positive >= 1 && negated == 0,
            anomalous: positive == 0 && negated > 0,
        }
    }
}

/// Evaluates every property of `catalog` against a part's history. Token
/// counts are summed amounts of permanently bound tokens.
pub fn effective_properties(
    history: &[HistoryEntry],
    catalog: &[PropertyType],
) -> BTreeMap<String, PropertyStatus> {
    let mut held: BTreeMap<TypeId, u64> = BTreeMap::new();
    for e in history
        .iter()
        .filter(|e| e.source == HistorySource::Permanent)
    {
        let slot = held.entry(e.ty.id()).or_default();
        *slot = slot.saturating_add(e.amount);
    }
    let count = |p: &PropertyType| held.get(&p.tag.id()).copied().unwrap_or(0);
    catalog
        .iter()
        .filter(|p| !p.is_negation())
        .filter_map(|p| {
            let (pos, neg) = (count(p), count(&p.negation()));
            (pos + neg > 0).then(|| (p.label.clone(), PropertyStatus::from_counts(pos, neg)))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Workflows

/// A ledger handle plus the transaction settings used by workflows.
pub struct Session<L, R> {
    pub ledger: L,
    pub ring_size: usize,
    pub rng: R,
}

impl<L: LedgerClient, R: RngCore + CryptoRng> Session<L, R> {
    pub fn new(ledger: L, ring_size: usize, rng: R) -> Self {
        Session {
            ledger,
            ring_size,
            rng,
        }
    }

    pub fn state(&self) -> &LedgerState {
        self.ledger.state()
    }

    /// Registers `H(d ‖ p)` with a hidden initial supply of `a` to `ltp`.
    pub fn issue_token(
        &mut self,
        amount: u64,
        ty: TypeTag,
        ltp: &PublicKeys,
    ) -> Result<Receipt, LicenseError> {
        let params = *self.state().params();
        let out = PendingOutput::new(&params, ltp, &ty, amount, 0, &mut self.rng)?;
        let (body, sig) = coin_gen(&params, &[out], &mut self.rng)?;
        Ok(self.ledger.submit(body, sig)?)
    }

    /// Pays `amount` of `ty` from the single account `source`; any rest goes
    /// back to the sender.
    pub fn transfer_token(
        &mut self,
        amount: u64,
        ty: &TypeTag,
        source: &ScanHit,
        keys: &LongTermKeys,
        to: &PublicKeys,
    ) -> Result<Receipt, LicenseError> {
        let held = source.output.amount;
        if source.output.ty != *ty {
            return Err(LicenseError::TypeMismatch);
        }
        if held < amount {
            return Err(LicenseError::InsufficientBalance {
                have: held,
                need: amount,
            });
        }
        let input = source.spend_input(keys)?;
        let params = *self.state().params();
        let mut outputs = alloc::vec![PendingOutput::new(
            &params,
            to,
            ty,
            amount,
            0,
            &mut self.rng
        )?];
        if held > amount {
            outputs.push(PendingOutput::new(
                &params,
                &keys.public,
                ty,
                held - amount,
                1,
                &mut self.rng,
            )?);
        }
        let (body, sig) = spend(
            self.ledger.state(),
            &[input],
            &outputs,
            self.ring_size,
            &mut self.rng,
        )?;
        Ok(self.ledger.submit(body, sig)?)
    }

    /// The first unspent output of `ty` owned by `keys` holding at least
    /// `amount`.
    pub fn find_source(
        &self,
        keys: &LongTermKeys,
        ty: &TypeTag,
        amount: u64,
    ) -> Result<ScanHit, LicenseError> {
        let hits: Vec<ScanHit> = self
            .state()
            .spendable(keys)
            .into_iter()
            .filter(|h| h.output.ty == *ty)
            .collect();
        let best = hits.iter().map(|h| h.output.amount).max();
        match best {
            None => Err(LicenseError::NothingToSpend),
            Some(have) if have < amount => {
                Err(LicenseError::InsufficientBalance { have, need: amount })
            }
            Some(_) => Ok(hits
                .into_iter()
                .find(|h| h.output.amount >= amount)
                .expect("max exists")),
        }
    }

    /// Registers a CAD file; `amount` defaults to the maximum supply.
    pub fn issue_design(
        &mut self,
        amount: Option<u64>,
        cad: &[u8],
        designer: &PublicKeys,
    ) -> Result<(DesignType, Receipt), LicenseError> {
        let design = DesignType::from_file(cad);
        let amount = amount.unwrap_or(self.state().params().max_amount());
        let receipt = self.issue_token(amount, design.tag, designer)?;
        Ok((design, receipt))
    }

    /// Moves one license token of the design into the part's receive-only
    /// account.
    pub fn register_item(
        &mut self,
        part: &PartIdentity,
        design: &DesignType,
        source: &ScanHit,
        manufacturer: &LongTermKeys,
    ) -> Result<Receipt, LicenseError> {
        self.transfer_token(
            1,
            &design.tag,
            source,
            manufacturer,
            &part.receive_only.public,
        )
    }

    pub fn issue_certificate_tokens(
        &mut self,
        amount: u64,
        label: &str,
        certifier: &PublicKeys,
    ) -> Result<(PropertyType, Receipt), LicenseError> {
        let property = PropertyType::new(label);
        let receipt = self.issue_token(amount, property.tag, certifier)?;
        Ok((property, receipt))
    }

    /// Sends `amount` (1 by default) property tokens to the part.
    pub fn attest_post_processing(
        &mut self,
        part: &PartIdentity,
        property: &PropertyType,
        amount: Option<u64>,
        source: &ScanHit,
        certifier: &LongTermKeys,
    ) -> Result<Receipt, LicenseError> {
        self.transfer_token(
            amount.unwrap_or(1),
            &property.tag,
            source,
            certifier,
            &part.receive_only.public,
        )
    }

    /// Places transient tokens in the part's spendable account.
    pub fn apply_transient(
        &mut self,
        part: &PartIdentity,
        ty: &TypeTag,
        amount: u64,
        source: &ScanHit,
        operator: &LongTermKeys,
    ) -> Result<Receipt, LicenseError> {
        self.transfer_token(amount, ty, source, operator, &part.transient.public)
    }

    /// Claims `amount` transient tokens with knowledge of the eID alone.
    pub fn recover_transient(
        &mut self,
        eid: &ItemId,
        ty: &TypeTag,
        amount: u64,
        to: &PublicKeys,
    ) -> Result<Receipt, LicenseError> {
        let transient = acc_gen(eid.as_bytes());
        let source = self.find_source(&transient, ty, amount)?;
        self.transfer_token(amount, ty, &source, &transient, to)
    }

    /// Splits `source` into `width` outputs to the owner so that
    /// concurrent attestations need not wait for each other's change.
    pub fn split_pool(
        &mut self,
        source: &ScanHit,
        keys: &LongTermKeys,
        width: usize,
    ) -> Result<Receipt, LicenseError> {
        if width == 0 {
            return Err(LicenseError::EmptyPool);
        }
        let total = source.output.amount;
        let ty = source.output.ty;
        let input = source.spend_input(keys)?;
        let params = *self.state().params();
        let w = width as u64;
        let outputs = (0..w)
            .map(|i| {
                let share = total / w + u64::from(i < total % w);
                PendingOutput::new(&params, &keys.public, &ty, share, i, &mut self.rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (body, sig) = spend(
            self.ledger.state(),
            &[input],
            &outputs,
            self.ring_size,
            &mut self.rng,
        )?;
        Ok(self.ledger.submit(body, sig)?)
    }
}

/// Rotates over a certifier's pool outputs.
#[derive(Debug, Clone, Default)]
pub struct RoundRobin {
    next: usize,
}

impl RoundRobin {
    /// The next unspent output of `ty` with at least `amount`, cycling
    /// through the pool.
    pub fn pick(
        &mut self,
        state: &LedgerState,
        keys: &LongTermKeys,
        ty: &TypeTag,
        amount: u64,
    ) -> Option<ScanHit> {
        let pool: Vec<ScanHit> = state
            .spendable(keys)
            .into_iter()
            .filter(|h| h.output.ty == *ty && h.output.amount >= amount)
            .collect();
        if pool.is_empty() {
            return None;
        }
        let hit = pool[self.next % pool.len()].clone();
        self.next = self.next.wrapping_add(1);
        Some(hit)
    }
}

// ---------------------------------------------------------------------------
// Designated-verifier proxy proofs

/// Proof, for one designated verifier, that one of `ring` holds `amount`
/// tokens of `ty` addressed to the part key `item_key`.
///
/// Either the prover knows the opening of one ring account together with
/// its derivation offset from `item_key`, or it knows the verifier's spend
/// secret. Only the verifier can rule out the second case, so the proof
/// convinces nobody else.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyProof {
    pub ring: Vec<u64>,
    pub ty: TypeId,
    pub amount: u64,
    pub item_key: GroupElement,
    pub verifier_key: GroupElement,
    pub proof: OrProof,
}

impl Encode for ProxyProof {
    fn encode_to(&self, w: &mut Writer) {
        w.put_seq(&self.ring);
        w.put(&self.ty);
        w.put_u64(self.amount);
        w.put(&self.item_key);
        w.put(&self.verifier_key);
        w.put(&self.proof);
    }
}

impl Decode for ProxyProof {
    const MIN_ENCODED_LEN: usize = 8 + 33 + 8 + 64 + 16;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(ProxyProof {
            ring: r.get_seq()?,
            ty: r.get()?,
            amount: r.get_u64()?,
            item_key: r.get()?,
            verifier_key: r.get()?,
            proof: r.get()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProxyError {
    #[error("ring member {0} is not in the ledger")]
    UnknownRingMember(u64),
    #[error("target account is not in the ring")]
    TargetNotInRing,
    #[error("target account does not hold the stated tokens for this part")]
    WrongStatement,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

fn proxy_statement(
    state: &LedgerState,
    ring: &[u64],
    ty: &TypeTag,
    amount: u64,
    item_key: &GroupElement,
    verifier_key: &GroupElement,
) -> Result<(Vec<Clause>, [u8; 32]), ProxyError> {
    let g = GroupElement::base();
    let value = ty.generator() * GroupScalar::from_u64(amount);
    let mut t = Transcript::new(b"proxy-proof");
    t.append_bytes(b"type", &ty.encode());
    t.append_u64(b"amount", amount);
    t.append_element(b"item", item_key);
    t.append_element(b"verifier", verifier_key);
    let mut clauses = Vec::with_capacity(ring.len() + 1);
    for &idx in ring {
        let acc = state
            .output(idx)
            .ok_or(ProxyError::UnknownRingMember(idx))?;
        t.append_u64(b"member", idx);
        clauses.push(Clause::new(
            2,
            alloc::vec![
                Equation::single(acc.commitment.point() - value, 0, g),
                Equation::single(acc.one_time_key - *item_key, 1, g),
            ],
        ));
    }
    clauses.push(Clause::new(
        1,
        alloc::vec![Equation::single(*verifier_key, 0, g)],
    ));
    Ok((clauses, t.digest()))
}

fn canonical_ring(ring: &[u64]) -> Vec<u64> {
    let mut r = ring.to_vec();
    r.sort_unstable();
    r.dedup();
    r
}

/// Proves that the part owns the tokens in the account at `target`.
/// `ring` lists the other accounts to hide it among (it is added if
/// missing).
pub fn proxy_prove<R: RngCore + CryptoRng>(
    state: &LedgerState,
    part: &PartIdentity,
    target: u64,
    ring: &[u64],
    verifier: &PublicKeys,
    rng: &mut R,
) -> Result<ProxyProof, ProxyError> {
    let mut members = ring.to_vec();
    members.push(target);
    let ring = canonical_ring(&members);
    let acc = state
        .output(target)
        .ok_or(ProxyError::UnknownRingMember(target))?;
    let keys = &part.receive_only;
    let viewed = crate::accounts::view(&keys.view, acc).ok_or(ProxyError::WrongStatement)?;
    let offset = detect(&keys.view.track_secret, &keys.public.spend, acc)
        .ok_or(ProxyError::WrongStatement)?;
    let (clauses, ctx) = proxy_statement(
        state,
        &ring,
        &viewed.ty,
        viewed.amount,
        &keys.public.spend,
        &verifier.spend,
    )?;
    let position = ring
        .iter()
        .position(|&i| i == target)
        .ok_or(ProxyError::TargetNotInRing)?;
    let proof = OrProof::prove(
        &clauses,
        position,
        &[viewed.coin_key.blinding, offset],
        &ctx,
        rng,
    )?;
    Ok(ProxyProof {
        ring,
        ty: viewed.ty.id(),
        amount: viewed.amount,
        item_key: keys.public.spend,
        verifier_key: verifier.spend,
        proof,
    })
}

/// Checks a proof addressed to `verifier`.
pub fn proxy_verify(state: &LedgerState, verifier: &PublicKeys, proof: &ProxyProof) -> bool {
    if proof.verifier_key != verifier.spend
        || proof.ring.is_empty()
        || canonical_ring(&proof.ring) != proof.ring
    {
        return false;
    }
    match proxy_statement(
        state,
        &proof.ring,
        &proof.ty.tag(),
        proof.amount,
        &proof.item_key,
        &proof.verifier_key,
    ) {
        Ok((clauses, ctx)) => proof.proof.verify(&clauses, &ctx),
        Err(_) => false,
    }
}

/// What the designated verifier can produce for any statement on its own;
/// this is why the proof does not convince third parties.
#[allow(clippy::too_many_arguments)]
pub fn proxy_forge<R: RngCore + CryptoRng>(
    state: &LedgerState,
    ring: &[u64],
    ty: &TypeTag,
    amount: u64,
    item_key: &GroupElement,
    verifier: &LongTermKeys,
    rng: &mut R,
) -> Result<ProxyProof, ProxyError> {
    let secret = verifier.spend.ok_or(CryptoError::InvalidWitness)?;
    let ring = canonical_ring(ring);
    let (clauses, ctx) =
        proxy_statement(state, &ring, ty, amount, item_key, &verifier.public.spend)?;
    let proof = OrProof::prove(&clauses, ring.len(), &[secret], &ctx, rng)?;
    Ok(ProxyProof {
        ring,
        ty: ty.id(),
        amount,
        item_key: *item_key,
        verifier_key: verifier.public.spend,
        proof,
    })
}
