//! Long-term keys, one-time accounts and their opening checks.
//!
//! A long-term public key is `(vpk, tpk, pk)`. A sender creates a one-time
//! account for it with a fresh ephemeral scalar `e`:
//!
//! ```text
//! R     = e·G
//! h     = Hs("otk", e·tpk ‖ idx)          derivation offset
//! otpk  = pk + h·G
//! t     = Hs("tag", e·vpk ‖ idx)          type-tag blinding
//! tag   = T + t·G                         blinded type tag
//! com   = a·T + ck·G
//! memo  = Seal(e·vpk, a ‖ ty ‖ ck)
//! ```
//!
//! Detection needs only the tracking secret `tsk` (`tsk·R = e·tpk`), reading
//! the memo needs the view secret `vsk`, and spending needs the spend scalar
//! behind `pk`. Receive-only item accounts get `pk` from hash-to-group, so
//! that scalar does not exist.

use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::encoding::{Decode, DecodeError, Encode, Reader, Writer};
use crate::group::{
    hash_to_group, hash_to_scalar, kdf_bytes, kdf_scalar, Commitment, CryptoError, GroupElement,
    GroupScalar, KdfLabel, PublicParams, TypeTag,
};
use crate::memo::{memo_open, memo_seal, MemoPlaintext};

/// Minimum item identifier length: 96 bits.
pub const MIN_ITEM_ID_LEN: usize = 12;
/// Length of identifiers produced by [`ItemId::random`]: 128 bits.
pub const ITEM_ID_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AccountError {
    #[error("account has no spend key (receive-only)")]
    NoSpendKey,
    #[error("account is not addressed to these keys")]
    NotAddressed,
    #[error("item identifier is {0} bytes, at least {MIN_ITEM_ID_LEN} required")]
    ItemIdTooShort(usize),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Electronic identifier of a physical part.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemId(Vec<u8>);

impl ItemId {
    pub fn new(bytes: &[u8]) -> Result<Self, AccountError> {
        if bytes.len() < MIN_ITEM_ID_LEN {
            return Err(AccountError::ItemIdTooShort(bytes.len()));
        }
        Ok(Self(bytes.to_vec()))
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = alloc::vec![0u8; ITEM_ID_LEN];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    /// `eID ‖ s`, the seed of a proxy-salted part.
    pub fn salted(&self, salt: &[u8]) -> ItemId {
        let mut bytes = self.0.clone();
        bytes.extend_from_slice(salt);
        ItemId(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl core::fmt::Debug for ItemId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("ItemId(..)")
    }
}

/// Public half `ltp = (vpk, tpk, pk)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublicKeys {
    pub view: GroupElement,
    pub track: GroupElement,
    pub spend: GroupElement,
}

/// Address encoding: `vpk ‖ tpk ‖ pk`, 96 bytes.
impl Encode for PublicKeys {
    fn encode_to(&self, w: &mut Writer) {
        w.put(&self.view);
        w.put(&self.track);
        w.put(&self.spend);
    }
}

impl Decode for PublicKeys {
    const MIN_ENCODED_LEN: usize = 96;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(PublicKeys {
            view: r.get()?,
            track: r.get()?,
            spend: r.get()?,
        })
    }
}

/// `ltv = (vsk, tsk)`. Also carries the public spend key, which detection
/// compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewKey {
    pub view_secret: GroupScalar,
    pub track_secret: GroupScalar,
    pub spend_public: GroupElement,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LongTermKeys {
    /// `lts`; absent for receive-only item accounts.
    pub spend: Option<GroupScalar>,
    pub view: ViewKey,
    pub public: PublicKeys,
}

impl LongTermKeys {
    pub fn is_receive_only(&self) -> bool {
        self.spend.is_none()
    }
}

fn keys_from_parts(
    seed: &[u8],
    spend: Option<GroupScalar>,
    spend_public: GroupElement,
) -> LongTermKeys {
    let tsk = kdf_scalar(seed, KdfLabel::Track);
    let vsk = kdf_scalar(seed, KdfLabel::View);
    LongTermKeys {
        spend,
        view: ViewKey {
            view_secret: vsk,
            track_secret: tsk,
            spend_public,
        },
        public: PublicKeys {
            view: GroupElement::mul_base(&vsk),
            track: GroupElement::mul_base(&tsk),
            spend: spend_public,
        },
    }
}

/// Spendable long-term keys, deterministic in `seed`.
pub fn acc_gen(seed: &[u8]) -> LongTermKeys {
    let lts = kdf_scalar(seed, KdfLabel::SpendSeed);
    keys_from_parts(seed, Some(lts), GroupElement::mul_base(&lts))
}

/// Spendable long-term keys from a fresh random seed. Returns the seed so it
/// can be stored in a wallet.
pub fn acc_gen_random<R: RngCore + CryptoRng>(rng: &mut R) -> (LongTermKeys, [u8; 32]) {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    (acc_gen(&seed), seed)
}

/// Receive-only keys for a part. The spend public key is hashed into the
/// group, so no spend scalar exists for it.
pub fn item_gen(eid: &[u8]) -> Result<LongTermKeys, AccountError> {
    if eid.len() < MIN_ITEM_ID_LEN {
        return Err(AccountError::ItemIdTooShort(eid.len()));
    }
    let own = kdf_bytes(eid, KdfLabel::Own);
    Ok(keys_from_parts(eid, None, hash_to_group(b"own", &own)))
}

/// A published output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneTimeAccount {
    pub one_time_key: GroupElement,
    pub ephemeral: GroupElement,
    /// Blinded type tag `T + t·G`.
    pub tag: GroupElement,
    pub commitment: Commitment,
    pub memo: Vec<u8>,
    pub output_index: u64,
}

impl Encode for OneTimeAccount {
    fn encode_to(&self, w: &mut Writer) {
        w.put(&self.one_time_key);
        w.put(&self.ephemeral);
        w.put(&self.tag);
        w.put(&self.commitment);
        w.put_bytes(&self.memo);
        w.put_u64(self.output_index);
    }
}

impl Decode for OneTimeAccount {
    const MIN_ENCODED_LEN: usize = 4 * 32 + 16;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(OneTimeAccount {
            one_time_key: r.get()?,
            ephemeral: r.get()?,
            tag: r.get()?,
            commitment: r.get()?,
            memo: r.get_bytes()?,
            output_index: r.get_u64()?,
        })
    }
}

/// Opening randomness of an account: the commitment blinding `ck` and the
/// type-tag blinding `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoinKey {
    pub blinding: GroupScalar,
    pub tag_blinding: GroupScalar,
}

/// Plaintext recovered by [`view`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewedOutput {
    pub amount: u64,
    pub ty: TypeTag,
    pub coin_key: CoinKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyImage(pub GroupElement);

impl Encode for KeyImage {
    fn encode_to(&self, w: &mut Writer) {
        w.put(&self.0);
    }
}

impl Decode for KeyImage {
    const MIN_ENCODED_LEN: usize = 32;

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(KeyImage(r.get()?))
    }
}

fn derivation_offset(track_shared: &GroupElement, output_index: u64) -> GroupScalar {
    hash_to_scalar(
        b"otk",
        &[&track_shared.to_bytes(), &output_index.to_le_bytes()],
    )
}

fn tag_blinding(view_shared: &GroupElement, output_index: u64) -> GroupScalar {
    hash_to_scalar(
        b"tag",
        &[&view_shared.to_bytes(), &output_index.to_le_bytes()],
    )
}

/// Base point for key images of `one_time_key`.
pub fn key_image_base(one_time_key: &GroupElement) -> GroupElement {
    hash_to_group(b"ki", &one_time_key.to_bytes())
}

/// Creates a one-time account holding `amount` tokens of `ty` for `ltp`.
pub fn ot_gen<R: RngCore + CryptoRng>(
    params: &PublicParams,
    ltp: &PublicKeys,
    ty: &TypeTag,
    amount: u64,
    output_index: u64,
    rng: &mut R,
) -> Result<(OneTimeAccount, CoinKey), CryptoError> {
    params.check_amount(amount)?;
    let e = GroupScalar::random(rng);
    let ephemeral = GroupElement::mul_base(&e);
    let offset = derivation_offset(&(ltp.track * e), output_index);
    let view_shared = ltp.view * e;
    let t = tag_blinding(&view_shared, output_index);
    let ck = GroupScalar::random(rng);

    let memo = memo_seal(
        &view_shared,
        &MemoPlaintext {
            amount,
            ty: *ty,
            blinding: ck,
        }
        .encode(),
    );
    let account = OneTimeAccount {
        one_time_key: ltp.spend + GroupElement::mul_base(&offset),
        ephemeral,
        tag: ty.generator() + GroupElement::mul_base(&t),
        commitment: Commitment::commit(params, amount, &ty.generator(), &ck)?,
        memo,
        output_index,
    };
    Ok((
        account,
        CoinKey {
            blinding: ck,
            tag_blinding: t,
        },
    ))
}

/// Detection with the tracking secret alone. Returns the derivation offset
/// `h` with `otpk = pk + h·G` when the account is addressed to `pk`.
pub fn detect(
    track_secret: &GroupScalar,
    spend_public: &GroupElement,
    acc: &OneTimeAccount,
) -> Option<GroupScalar> {
    let offset = derivation_offset(&(acc.ephemeral * *track_secret), acc.output_index);
    if acc.one_time_key - GroupElement::mul_base(&offset) == *spend_public {
        Some(offset)
    } else {
        None
    }
}

/// Detects and decrypts an account. `None` when it is not addressed to
/// `ltv` or its memo does not match the public commitment and tag.
pub fn view(ltv: &ViewKey, acc: &OneTimeAccount) -> Option<ViewedOutput> {
    detect(&ltv.track_secret, &ltv.spend_public, acc)?;
    let view_shared = acc.ephemeral * ltv.view_secret;
    let plain = memo_open(&view_shared, &acc.memo).ok()?;
    let memo = MemoPlaintext::decode(&plain).ok()?;
    let t = tag_blinding(&view_shared, acc.output_index);
    if acc.tag != memo.ty.generator() + GroupElement::mul_base(&t) {
        return None;
    }
    if !acc
        .commitment
        .verify_open(memo.amount, &memo.ty.generator(), &memo.blinding)
    {
        return None;
    }
    Some(ViewedOutput {
        amount: memo.amount,
        ty: memo.ty,
        coin_key: CoinKey {
            blinding: memo.blinding,
            tag_blinding: t,
        },
    })
}

/// Recovers the one-time secret key `sk = lts + h` of an account.
pub fn receive(keys: &LongTermKeys, acc: &OneTimeAccount) -> Result<GroupScalar, AccountError> {
    let lts = keys.spend.ok_or(AccountError::NoSpendKey)?;
    let offset = detect(&keys.view.track_secret, &keys.public.spend, acc)
        .ok_or(AccountError::NotAddressed)?;
    let sk = lts + offset;
    debug_assert!(chk_key(&sk, acc));
    Ok(sk)
}

pub fn chk_key(sk: &GroupScalar, acc: &OneTimeAccount) -> bool {
    GroupElement::mul_base(sk) == acc.one_time_key
}

pub fn chk_val(ck: &CoinKey, ty: &TypeTag, amount: u64, acc: &OneTimeAccount) -> bool {
    acc.commitment
        .verify_open(amount, &ty.generator(), &ck.blinding)
        && acc.tag == ty.generator() + GroupElement::mul_base(&ck.tag_blinding)
}

/// `sk·Hp(otpk)`; deterministic per account. Meaningful only when
/// `chk_key(sk, acc)` holds.
pub fn key_image(sk: &GroupScalar, acc: &OneTimeAccount) -> KeyImage {
    KeyImage(key_image_base(&acc.one_time_key) * *sk)
}
