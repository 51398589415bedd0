//! The ledger state machine: an append-only log of verified transactions
//! and the sets derived from it.
//!
//! Outputs are never removed. Spending is recorded through key images, so
//! spent outputs stay visible to scans and remain valid ring members.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::accounts::{
    key_image, receive, view, AccountError, KeyImage, LongTermKeys, OneTimeAccount, ViewKey,
    ViewedOutput,
};
use crate::encoding::{Decode, DecodeError, Encode, Reader, Writer};
use crate::group::{GroupElement, PublicParams, TypeId, TypeTag};
use crate::transactions::{
    verify, LedgerView, RejectReason, Rejection, SpendInput, TransactionBody, TxSignature, Verified,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerRecord {
    /// Starts at 1 and increases by one per record.
    pub seq: u64,
    /// UTC milliseconds, assigned by the ledger; non-decreasing.
    pub timestamp_ms: u64,
    pub body: TransactionBody,
    pub signature: TxSignature,
}

impl Encode for LedgerRecord {
    fn encode_to(&self, w: &mut Writer) {
        w.put_u64(self.seq);
        w.put_u64(self.timestamp_ms);
        w.put(&self.body);
        w.put(&self.signature);
    }
}

impl Decode for LedgerRecord {
    const MIN_ENCODED_LEN: usize = 16 + 9 + 64;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(LedgerRecord {
            seq: r.get_u64()?,
            timestamp_ms: r.get_u64()?,
            body: r.get()?,
            signature: r.get()?,
        })
    }
}

/// A verified record waiting to be committed.
#[derive(Debug, Clone)]
pub struct StagedRecord {
    record: LedgerRecord,
    verified: Verified,
}

impl StagedRecord {
    pub fn record(&self) -> &LedgerRecord {
        &self.record
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Receipt {
    pub seq: u64,
    pub timestamp_ms: u64,
    /// Ledger position of the first output of this transaction.
    pub first_output: u64,
    pub output_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct StoredOutput {
    account: OneTimeAccount,
    seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerStats {
    pub records: u64,
    pub outputs: u64,
    pub spent: u64,
    pub unspent: u64,
    pub types: u64,
}

/// A received output found by a scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanHit {
    pub ledger_index: u64,
    pub account: OneTimeAccount,
    pub output: ViewedOutput,
    pub received_seq: u64,
    pub received_ms: u64,
    /// `None` when the scan had no spend capability and cannot tell.
    pub spent: Option<SpentInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpentInfo {
    Unspent,
    Spent { seq: u64, timestamp_ms: u64 },
}

impl ScanHit {
    /// Input data for spending this output with `keys`.
    pub fn spend_input(&self, keys: &LongTermKeys) -> Result<SpendInput, AccountError> {
        Ok(SpendInput {
            ledger_index: self.ledger_index,
            account: self.account.clone(),
            amount: self.output.amount,
            ty: self.output.ty,
            coin_key: self.output.coin_key,
            secret_key: receive(keys, &self.account)?,
            ring: None,
        })
    }

    pub fn is_spent(&self) -> bool {
        matches!(self.spent, Some(SpentInfo::Spent { .. }))
    }
}

#[derive(Debug, Clone)]
pub struct LedgerState {
    params: PublicParams,
    outputs: Vec<StoredOutput>,
    one_time_keys: BTreeMap<[u8; 32], u64>,
    spent: BTreeMap<[u8; 32], u64>,
    types: Vec<TypeTag>,
    type_index: BTreeMap<TypeId, u64>,
    records: Vec<LedgerRecord>,
}

impl LedgerView for LedgerState {
    fn params(&self) -> &PublicParams {
        &self.params
    }

    fn output_count(&self) -> u64 {
        self.outputs.len() as u64
    }

    fn output(&self, index: u64) -> Option<&OneTimeAccount> {
        self.outputs
            .get(usize::try_from(index).ok()?)
            .map(|o| &o.account)
    }

    fn contains_one_time_key(&self, key: &GroupElement) -> bool {
        self.one_time_keys.contains_key(&key.to_bytes())
    }

    fn is_spent(&self, image: &KeyImage) -> bool {
        self.spent.contains_key(&image.0.to_bytes())
    }

    fn type_count(&self) -> u64 {
        self.types.len() as u64
    }

    fn registered_type(&self, index: u64) -> Option<&TypeTag> {
        self.types.get(usize::try_from(index).ok()?)
    }

    fn type_index(&self, id: &TypeId) -> Option<u64> {
        self.type_index.get(id).copied()
    }
}

impl LedgerState {
    pub fn new(params: PublicParams) -> Self {
        LedgerState {
            params,
            outputs: Vec::new(),
            one_time_keys: BTreeMap::new(),
            spent: BTreeMap::new(),
            types: Vec::new(),
            type_index: BTreeMap::new(),
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn record(&self, seq: u64) -> Option<&LedgerRecord> {
        self.records.get(usize::try_from(seq.checked_sub(1)?).ok()?)
    }

    pub fn next_seq(&self) -> u64 {
        self.records.len() as u64 + 1
    }

    pub fn last_timestamp(&self) -> u64 {
        self.records.last().map_or(0, |r| r.timestamp_ms)
    }

    pub fn registered_types(&self) -> &[TypeTag] {
        &self.types
    }

    pub fn is_registered(&self, ty: &TypeTag) -> bool {
        self.type_index.contains_key(&ty.id())
    }

    /// Record sequence number that consumed `image`.
    pub fn spent_at(&self, image: &KeyImage) -> Option<u64> {
        self.spent.get(&image.0.to_bytes()).copied()
    }

    /// Sequence number of the record that created the output at `index`.
    pub fn output_seq(&self, index: u64) -> Option<u64> {
        self.outputs
            .get(usize::try_from(index).ok()?)
            .map(|o| o.seq)
    }

    pub fn stats(&self) -> LedgerStats {
        let outputs = self.outputs.len() as u64;
        let spent = self.spent.len() as u64;
        LedgerStats {
            records: self.records.len() as u64,
            outputs,
            spent,
            unspent: outputs - spent,
            types: self.types.len() as u64,
        }
    }

    pub fn check(&self, body: &TransactionBody, sig: &TxSignature) -> Result<Verified, Rejection> {
        verify(self, body, sig)
    }

    /// Verifies and appends. The timestamp is raised to the previous
    /// record's if the clock went backwards.
    pub fn apply(
        &mut self,
        body: TransactionBody,
        sig: TxSignature,
        now_ms: u64,
    ) -> Result<Receipt, Rejection> {
        let verified = verify(self, &body, &sig)?;
        self.apply_verified(body, sig, verified, now_ms)
    }

    /// Appends a transaction verified against an earlier snapshot of this
    /// ledger. Only the checks that later records can invalidate are
    /// repeated.
    pub fn apply_verified(
        &mut self,
        body: TransactionBody,
        sig: TxSignature,
        verified: Verified,
        now_ms: u64,
    ) -> Result<Receipt, Rejection> {
        let staged = self.stage(body, sig, verified, now_ms)?;
        Ok(self.commit_staged(staged))
    }

    /// Re-checks `verified` against the current sets and fixes the record's
    /// sequence number and timestamp without changing the state. Lets a
    /// store persist the record before [`commit_staged`](Self::commit_staged).
    pub fn stage(
        &self,
        body: TransactionBody,
        sig: TxSignature,
        verified: Verified,
        now_ms: u64,
    ) -> Result<StagedRecord, Rejection> {
        for ki in &verified.key_images {
            if self.is_spent(ki) {
                return Err(Rejection {
                    reason: RejectReason::DoubleSpend,
                    detail: "key image already used",
                });
            }
        }
        for ty in &verified.new_types {
            if self.is_registered(ty) {
                return Err(Rejection {
                    reason: RejectReason::TypeReuse,
                    detail: "type already registered",
                });
            }
        }
        for acc in &verified.outputs {
            if self.contains_one_time_key(&acc.one_time_key) {
                return Err(Rejection {
                    reason: RejectReason::Malformed,
                    detail: "duplicate one-time key",
                });
            }
        }
        Ok(StagedRecord {
            record: LedgerRecord {
                seq: self.next_seq(),
                timestamp_ms: now_ms.max(self.last_timestamp()),
                body,
                signature: sig,
            },
            verified,
        })
    }

    /// Applies a record staged against this exact state.
    ///
    /// # Panics
    /// If another record was committed since staging.
    pub fn commit_staged(&mut self, staged: StagedRecord) -> Receipt {
        assert_eq!(staged.record.seq, self.next_seq(), "stale staged record");
        let StagedRecord { record, verified } = staged;
        self.commit(record.body, record.signature, verified, record.timestamp_ms)
    }

    fn commit(
        &mut self,
        body: TransactionBody,
        sig: TxSignature,
        verified: Verified,
        timestamp_ms: u64,
    ) -> Receipt {
        let seq = self.next_seq();
        let first_output = self.outputs.len() as u64;
        for ki in &verified.key_images {
            self.spent.insert(ki.0.to_bytes(), seq);
        }
        for ty in verified.new_types {
            self.type_index.insert(ty.id(), self.types.len() as u64);
            self.types.push(ty);
        }
        let output_count = verified.outputs.len() as u64;
        for account in verified.outputs {
            self.one_time_keys
                .insert(account.one_time_key.to_bytes(), self.outputs.len() as u64);
            self.outputs.push(StoredOutput { account, seq });
        }
        self.records.push(LedgerRecord {
            seq,
            timestamp_ms,
            body,
            signature: sig,
        });
        Receipt {
            seq,
            timestamp_ms,
            first_output,
            output_count,
        }
    }

    /// Rebuilds a state by re-verifying every record in order.
    pub fn replay<I>(params: PublicParams, records: I) -> Result<Self, ReplayError>
    where
        I: IntoIterator<Item = LedgerRecord>,
    {
        let mut state = LedgerState::new(params);
        for record in records {
            if record.seq != state.next_seq() {
                return Err(ReplayError::Sequence {
                    expected: state.next_seq(),
                    found: record.seq,
                });
            }
            if record.timestamp_ms < state.last_timestamp() {
                return Err(ReplayError::Timestamp { seq: record.seq });
            }
            let verified =
                verify(&state, &record.body, &record.signature).map_err(|rejection| {
                    ReplayError::Rejected {
                        seq: record.seq,
                        rejection,
                    }
                })?;
            state.commit(record.body, record.signature, verified, record.timestamp_ms);
        }
        Ok(state)
    }

    /// SHA-256 over the parameters, every output with its origin, the spent
    /// key images with their spending record, the type registry and the
    /// record timestamps.
    pub fn state_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"partledger-state");
        h.update(self.params.encode());
        h.update((self.outputs.len() as u64).to_le_bytes());
        for o in &self.outputs {
            h.update(o.seq.to_le_bytes());
            h.update(o.account.encode());
        }
        h.update((self.spent.len() as u64).to_le_bytes());
        for (ki, seq) in &self.spent {
            h.update(ki);
            h.update(seq.to_le_bytes());
        }
        h.update((self.types.len() as u64).to_le_bytes());
        for t in &self.types {
            h.update(t.encode());
        }
        h.update((self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            h.update(r.seq.to_le_bytes());
            h.update(r.timestamp_ms.to_le_bytes());
        }
        h.finalize().into()
    }

    fn hit(&self, index: usize, output: ViewedOutput, spent: Option<SpentInfo>) -> ScanHit {
        let stored = &self.outputs[index];
        ScanHit {
            ledger_index: index as u64,
            account: stored.account.clone(),
            output,
            received_seq: stored.seq,
            received_ms: self.record(stored.seq).map_or(0, |r| r.timestamp_ms),
            spent,
        }
    }

    /// Every output, spent or not, that `ltv` can view.
    pub fn scan(&self, ltv: &ViewKey) -> Vec<ScanHit> {
        self.outputs
            .iter()
            .enumerate()
            .filter_map(|(i, o)| view(ltv, &o.account).map(|v| self.hit(i, v, None)))
            .collect()
    }

    /// Like [`scan`](Self::scan) but also reports spent status when `keys`
    /// can compute key images.
    pub fn scan_keys(&self, keys: &LongTermKeys) -> Vec<ScanHit> {
        self.outputs
            .iter()
            .enumerate()
            .filter_map(|(i, o)| {
                let viewed = view(&keys.view, &o.account)?;
                let spent = receive(keys, &o.account).ok().map(|sk| {
                    match self.spent_at(&key_image(&sk, &o.account)) {
                        Some(seq) => SpentInfo::Spent {
                            seq,
                            timestamp_ms: self.record(seq).map_or(0, |r| r.timestamp_ms),
                        },
                        None => SpentInfo::Unspent,
                    }
                });
                Some(self.hit(i, viewed, spent))
            })
            .collect()
    }

    /// Unspent outputs of `keys`; empty for receive-only keys.
    pub fn spendable(&self, keys: &LongTermKeys) -> Vec<ScanHit> {
        if keys.is_receive_only() {
            return Vec::new();
        }
        self.scan_keys(keys)
            .into_iter()
            .filter(|h| h.spent == Some(SpentInfo::Unspent))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("record sequence gap: expected {expected}, found {found}")]
    Sequence { expected: u64, found: u64 },
    #[error("record {seq} has a decreasing timestamp")]
    Timestamp { seq: u64 },
    #[error("record {seq} fails verification: {rejection}")]
    Rejected { seq: u64, rejection: Rejection },
}

/// Scan-only capability for an escrow agent. Holds the view key and
/// nothing that can spend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EscrowRecord {
    pub view_key: ViewKey,
}

impl EscrowRecord {
    pub fn export(keys: &LongTermKeys) -> Self {
        EscrowRecord {
            view_key: keys.view,
        }
    }

    pub fn scan(&self, state: &LedgerState) -> Vec<ScanHit> {
        state.scan(&self.view_key)
    }
}

impl Encode for EscrowRecord {
    fn encode_to(&self, w: &mut Writer) {
        w.put(&self.view_key.view_secret);
        w.put(&self.view_key.track_secret);
        w.put(&self.view_key.spend_public);
    }
}

impl Decode for EscrowRecord {
    const MIN_ENCODED_LEN: usize = 96;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(EscrowRecord {
            view_key: ViewKey {
                view_secret: r.get()?,
                track_secret: r.get()?,
                spend_public: r.get()?,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("transaction rejected: {0}")]
    Rejected(#[from] Rejection),
    #[error("storage failure: {0}")]
    Storage(alloc::string::String),
}

impl LedgerError {
    pub fn reason(&self) -> Option<RejectReason> {
        match self {
            LedgerError::Rejected(r) => Some(r.reason),
            LedgerError::Storage(_) => None,
        }
    }
}

/// A ledger that workflows can read and submit to.
pub trait LedgerClient {
    fn state(&self) -> &LedgerState;
    fn submit(&mut self, body: TransactionBody, sig: TxSignature) -> Result<Receipt, LedgerError>;
}

/// In-memory ledger with a pluggable clock.
pub struct MemoryLedger {
    state: LedgerState,
    clock: Box<dyn FnMut() -> u64 + Send>,
}

impl MemoryLedger {
    /// Uses a logical clock that advances by one millisecond per apply.
    pub fn new(params: PublicParams) -> Self {
        let mut t = 0u64;
        Self::with_clock(
            params,
            Box::new(move || {
                t += 1;
                t
            }),
        )
    }

    pub fn with_clock(params: PublicParams, clock: Box<dyn FnMut() -> u64 + Send>) -> Self {
        MemoryLedger {
            state: LedgerState::new(params),
            clock,
        }
    }

    pub fn snapshot(&self) -> LedgerState {
        self.state.clone()
    }
}

impl LedgerClient for MemoryLedger {
    fn state(&self) -> &LedgerState {
        &self.state
    }

    fn submit(&mut self, body: TransactionBody, sig: TxSignature) -> Result<Receipt, LedgerError> {
        let now = (self.clock)();
        Ok(self.state.apply(body, sig, now)?)
    }
}
