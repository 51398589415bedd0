//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Run with `cargo test --release -p partledger --test acceptance`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::Parser;
use partledger::bench;
use partledger::cli::Cli;
use partledger::scenario;
use partledger::store::FileLedger;
use partledger::wallet::{Role, WalletFile};
use partledger_core::accounts::{
    acc_gen, acc_gen_random, chk_key, chk_val, item_gen, key_image, ot_gen, receive, view, ItemId,
    LongTermKeys, PublicKeys, ViewedOutput,
};
use partledger_core::encoding::{Decode, Encode};
use partledger_core::group::{Commitment, GroupScalar, PublicParams, TypeDomain, TypeId, TypeTag};
use partledger_core::ledger::{
    LedgerClient, LedgerError, LedgerState, MemoryLedger, Receipt, ScanHit, SpentInfo,
};
use partledger_core::license::{
    attribute_type, effective_properties, item_verification, proxy_forge, proxy_prove,
    proxy_verify, DesignType, HistorySource, PartIdentity, ProxyProof, Session,
};
use partledger_core::transactions::{
    coin_gen, offer_leg, prepare_offer_unchecked, seal, seal_unchecked, spend, verify, LedgerView,
    PendingOutput, RejectReason, Rejection, SpendInput, TransactionBody, TxSignature,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestError, TestRunner};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Randomized cases per correctness clause.
const CASES: u32 = 1000;
/// Single-byte mutations per proof kind.
const MUTATIONS: usize = 1000;
/// Adversarial proxy-proof trials.
const PROXY_TRIALS: usize = 1000;
const UNLINKABILITY_OUTPUTS: usize = 10_000;
const LEAKAGE_SPENDS: usize = 1000;
const CRASH_POINTS: usize = 10;

// ---------------------------------------------------------------------------
// Harness

#[derive(Default)]
struct Checks {
    notes: Vec<String>,
    failures: Vec<String>,
}

impl Checks {
    fn check(&mut self, name: &str, ok: bool, detail: impl std::fmt::Display) {
        let line = format!("{name}: {detail}");
        if ok {
            self.notes.push(line);
        } else {
            self.failures.push(line);
        }
    }

    fn runner(
        &mut self,
        name: &str,
        result: Result<(), TestError<impl std::fmt::Debug>>,
        cases: u32,
    ) {
        match result {
            Ok(()) => self.check(name, true, format!("{cases}/{cases} cases")),
            Err(e) => self.check(name, false, format!("{e}")),
        }
    }
}

struct Outcome {
    id: &'static str,
    title: &'static str,
    passed: bool,
    tolerated: Option<String>,
    elapsed: Duration,
    checks: Checks,
}

fn criterion(id: &'static str, title: &'static str, f: impl FnOnce(&mut Checks)) -> Outcome {
    let start = Instant::now();
    let mut checks = Checks::default();
    let result = panic::catch_unwind(AssertUnwindSafe(|| f(&mut checks)));
    if let Err(p) = result {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        checks.failures.push(format!("panicked: {msg}"));
    }
    let outcome = Outcome {
        id,
        title,
        passed: checks.failures.is_empty(),
        tolerated: None,
        elapsed: start.elapsed(),
        checks,
    };
    print_outcome(&outcome);
    outcome
}

fn print_outcome(o: &Outcome) {
    let verdict = if o.passed { "PASS" } else { "FAIL" };
    println!(
        "{verdict} {:<3} {} ({:.1} s)",
        o.id,
        o.title,
        o.elapsed.as_secs_f64()
    );
    for n in &o.checks.notes {
        println!("       {n}");
    }
    for f in &o.checks.failures {
        println!("    !! {f}");
    }
}

/// In-memory ledger with a logical clock.
struct World {
    ledger: MemoryLedger,
    rng: ChaCha20Rng,
    ring: usize,
}

impl World {
    fn new(seed: u64) -> Self {
        Self::with_params(PublicParams::test_profile(), seed)
    }

    fn with_params(params: PublicParams, seed: u64) -> Self {
        let clock = AtomicU64::new(1_700_000_000_000);
        World {
            ledger: MemoryLedger::with_clock(
                params,
                Box::new(move || clock.fetch_add(1, Ordering::SeqCst)),
            ),
            rng: ChaCha20Rng::seed_from_u64(seed),
            ring: params.ring_size,
        }
    }

    fn params(&self) -> PublicParams {
        *self.ledger.state().params()
    }

    fn state(&self) -> &LedgerState {
        self.ledger.state()
    }

    fn keys(&mut self) -> LongTermKeys {
        acc_gen_random(&mut self.rng).0
    }

    fn out(&mut self, to: &PublicKeys, ty: &TypeTag, amount: u64, index: u64) -> PendingOutput {
        let params = self.params();
        PendingOutput::new(&params, to, ty, amount, index, &mut self.rng).expect("output")
    }

    fn issue(&mut self, to: &PublicKeys, label: &str, amount: u64) -> TypeTag {
        let ty = TypeTag::from_preimage(TypeDomain::Currency, label.as_bytes());
        let o = self.out(to, &ty, amount, 0);
        let (body, sig) = coin_gen(&self.params(), &[o], &mut self.rng).expect("coingen");
        self.ledger.submit(body, sig).expect("issuance accepted");
        ty
    }

    /// Decoy outputs of unrelated types.
    fn pad(&mut self, n: usize) {
        let k = self.keys();
        for _ in 0..n {
            let label = format!("pad-{:016x}", self.rng.next_u64());
            self.issue(&k.public, &label, 1);
        }
    }

    fn holding(&self, keys: &LongTermKeys, ty: &TypeTag) -> ScanHit {
        self.state()
            .spendable(keys)
            .into_iter()
            .find(|h| h.output.ty == *ty)
            .expect("holding")
    }

    /// Spends `hit` back to its owner as outputs of `amounts`.
    fn split(&mut self, keys: &LongTermKeys, hit: &ScanHit, amounts: &[u64]) -> Receipt {
        let input = hit.spend_input(keys).expect("own input");
        let outs: Vec<_> = amounts
            .iter()
            .enumerate()
            .map(|(i, &a)| self.out(&keys.public, &hit.output.ty, a, i as u64))
            .collect();
        let (body, sig) = spend(
            self.ledger.state(),
            &[input],
            &outs,
            self.ring,
            &mut self.rng,
        )
        .expect("split");
        self.ledger.submit(body, sig).expect("split accepted")
    }
}

/// Random composition of `total` into `n` parts, each at least `min`.
fn composition(rng: &mut impl Rng, total: u64, n: usize, min: u64) -> Vec<u64> {
    assert!(total >= min * n as u64);
    let mut spare = total - min * n as u64;
    let mut parts = Vec::with_capacity(n);
    for i in 0..n {
        let take = if i + 1 == n {
            spare
        } else {
            rng.gen_range(0..=spare)
        };
        spare -= take;
        parts.push(min + take);
    }
    parts
}

/// Random composition of `total` into `n` parts of at most `cap`.
fn capped_composition(rng: &mut impl Rng, total: u64, n: usize, cap: u64) -> Vec<u64> {
    assert!(total <= cap * n as u64);
    let mut left = total;
    (0..n)
        .map(|i| {
            let rest = cap * (n - i - 1) as u64;
            let take = if i + 1 == n {
                left
            } else {
                rng.gen_range(left.saturating_sub(rest)..=left.min(cap))
            };
            left -= take;
            take
        })
        .collect()
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    find(haystack, needle).is_some()
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn config(cases: u32) -> Config {
    Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    }
}

fn submit_rejected_with(r: Result<Receipt, LedgerError>, want: RejectReason) -> bool {
    matches!(r, Err(LedgerError::Rejected(e)) if e.reason == want)
}

// ---------------------------------------------------------------------------
// 1. Correctness

fn correctness(c: &mut Checks) {
    let start = Instant::now();
    let params = PublicParams::test_profile();
    let max = params.max_amount();

    let result = TestRunner::new(config(CASES)).run(
        &(
            any::<[u8; 32]>(),
            any::<[u8; 32]>(),
            0..=max,
            0usize..4,
            0u64..64,
            any::<[u8; 32]>(),
        ),
        |(seed, label, amount, d, index, rs)| {
            let keys = acc_gen(&seed);
            let ty = TypeTag::from_preimage(TypeDomain::ALL[d], &label);
            let mut rng = ChaCha20Rng::from_seed(rs);
            let (acc, ck) = ot_gen(&params, &keys.public, &ty, amount, index, &mut rng).unwrap();
            prop_assert_eq!(
                view(&keys.view, &acc),
                Some(ViewedOutput {
                    amount,
                    ty,
                    coin_key: ck
                })
            );
            prop_assert!(chk_val(&ck, &ty, amount, &acc));
            Ok(())
        },
    );
    c.runner("viewability, accGen keys", result, CASES);

    let result = TestRunner::new(config(CASES)).run(
        &(
            proptest::collection::vec(any::<u8>(), 12..=32),
            any::<[u8; 32]>(),
            0..=max,
            any::<[u8; 32]>(),
        ),
        |(eid, label, amount, rs)| {
            let keys = item_gen(&eid).unwrap();
            prop_assert!(keys.is_receive_only());
            let ty = TypeTag::from_preimage(TypeDomain::Property, &label);
            let mut rng = ChaCha20Rng::from_seed(rs);
            let (acc, ck) = ot_gen(&params, &keys.public, &ty, amount, 0, &mut rng).unwrap();
            let seen = view(&keys.view, &acc);
            prop_assert_eq!(
                seen,
                Some(ViewedOutput {
                    amount,
                    ty,
                    coin_key: ck
                })
            );
            Ok(())
        },
    );
    c.runner("viewability, itemGen keys", result, CASES);

    let result = TestRunner::new(config(CASES)).run(
        &(any::<[u8; 32]>(), 0..=max, 0u64..64, any::<[u8; 32]>()),
        |(seed, amount, index, rs)| {
            let keys = acc_gen(&seed);
            let ty = TypeTag::from_preimage(TypeDomain::Currency, b"receivability");
            let mut rng = ChaCha20Rng::from_seed(rs);
            let (acc, _) = ot_gen(&params, &keys.public, &ty, amount, index, &mut rng).unwrap();
            let sk = receive(&keys, &acc).unwrap();
            prop_assert!(chk_key(&sk, &acc));
            prop_assert_eq!(
                key_image(&sk, &acc),
                key_image(&receive(&keys, &acc).unwrap(), &acc)
            );
            Ok(())
        },
    );
    c.runner("receivability, accGen keys", result, CASES);

    // Honest spends over a ledger with four types in 24 outputs.
    let mut w = World::new(11);
    w.pad(8);
    let owner = w.keys();
    for t in 0..4 {
        let ty = w.issue(&owner.public, &format!("asset-{t}"), 60_000);
        let hit = w.holding(&owner, &ty);
        let parts = composition(&mut w.rng, 60_000, 6, 4096);
        w.split(&owner, &hit, &parts);
    }
    let hits = w.state().spendable(&owner);
    let state = w.ledger.snapshot();
    let ring = w.ring;
    let result = TestRunner::new(config(CASES)).run(&any::<u64>(), |seed| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=2);
        let picks = rand::seq::index::sample(&mut rng, hits.len(), k);
        let inputs: Vec<SpendInput> = picks
            .iter()
            .map(|i| hits[i].spend_input(&owner).unwrap())
            .collect();
        let mut totals: BTreeMap<TypeId, (TypeTag, u64)> = BTreeMap::new();
        for i in &inputs {
            totals.entry(i.ty.id()).or_insert((i.ty, 0)).1 += i.amount;
        }
        let mut outs = Vec::new();
        for (ty, total) in totals.values() {
            let parts = if rng.gen_bool(0.5) {
                composition(&mut rng, *total, 2, 1024)
            } else {
                vec![*total]
            };
            for a in parts {
                let to = acc_gen_random(&mut rng).0.public;
                outs.push(
                    PendingOutput::new(&params, &to, ty, a, outs.len() as u64, &mut rng).unwrap(),
                );
            }
        }
        let (body, sig) = spend(&state, &inputs, &outs, ring, &mut rng).unwrap();
        let v = verify(&state, &body, &sig);
        prop_assert!(v.is_ok(), "honest spend rejected: {:?}", v.err());
        let v = v.unwrap();
        prop_assert_eq!(v.key_images.len(), k);
        prop_assert_eq!(v.outputs.len(), outs.len());
        Ok(())
    });
    c.runner("honest spends verify", result, CASES);

    let registered = w.ledger.snapshot();
    let result = TestRunner::new(config(CASES)).run(&(1usize..=3, any::<u64>()), |(n, seed)| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut outs = Vec::new();
        for i in 0..n {
            let mut label = [0u8; 32];
            rng.fill_bytes(&mut label);
            let ty = TypeTag::from_preimage(TypeDomain::ALL[rng.gen_range(0..4)], &label);
            let to = acc_gen_random(&mut rng).0.public;
            let amount = rng.gen_range(0..=max);
            outs.push(PendingOutput::new(&params, &to, &ty, amount, i as u64, &mut rng).unwrap());
        }
        let (body, sig) = coin_gen(&params, &outs, &mut rng).unwrap();
        let v = verify(&registered, &body, &sig);
        prop_assert!(v.is_ok(), "fresh coingen rejected: {:?}", v.err());
        let got: BTreeSet<TypeId> = v.unwrap().new_types.iter().map(|t| t.id()).collect();
        let want: BTreeSet<TypeId> = outs.iter().map(|o| o.ty.id()).collect();
        prop_assert_eq!(got, want);
        Ok(())
    });
    c.runner("fresh-type coingen verifies", result, CASES);

    let elapsed = start.elapsed();
    c.check(
        "runtime",
        elapsed < Duration::from_secs(300),
        format!("{:.1} s (limit 300 s)", elapsed.as_secs_f64()),
    );
}

// ---------------------------------------------------------------------------
// 2. Soundness

#[derive(Default)]
struct Tally {
    trials: usize,
    false_accepts: usize,
    wrong_reason: usize,
    reasons: BTreeMap<&'static str, usize>,
}

impl Tally {
    fn record(&mut self, verdict: Result<(), RejectReason>, allowed: &[RejectReason]) {
        self.trials += 1;
        match verdict {
            Ok(()) => self.false_accepts += 1,
            Err(r) => {
                *self.reasons.entry(r.code()).or_default() += 1;
                if !allowed.contains(&r) {
                    self.wrong_reason += 1;
                }
            }
        }
    }

    fn ok(&self) -> bool {
        self.false_accepts == 0 && self.wrong_reason == 0
    }

    fn summary(&self) -> String {
        format!(
            "{} trials, {} false accepts, {} wrong reasons {:?}",
            self.trials, self.false_accepts, self.wrong_reason, self.reasons
        )
    }
}

fn verdict_of(r: Result<impl Sized, Rejection>) -> Result<(), RejectReason> {
    r.map(|_| ()).map_err(|e| e.reason)
}

fn soundness(c: &mut Checks) {
    let mut w = World::new(21);
    w.pad(8);
    let ring = w.ring;
    let owner = w.keys();

    // Double spends: replaying an accepted transaction, and a fresh
    // transaction over an already spent input.
    let ty = w.issue(&owner.public, "double-spend", 40_000);
    let hit = w.holding(&owner, &ty);
    w.split(&owner, &hit, &[2000; 20]);
    let mut tally = Tally::default();
    for hit in w.state().spendable(&owner) {
        let input = hit.spend_input(&owner).unwrap();
        let (a, b) = (w.keys(), w.keys());
        let out_a = w.out(&a.public, &ty, 2000, 0);
        let out_b = w.out(&b.public, &ty, 2000, 0);
        let first = spend(
            w.ledger.state(),
            std::slice::from_ref(&input),
            &[out_a],
            ring,
            &mut w.rng,
        )
        .unwrap();
        let second = spend(w.ledger.state(), &[input], &[out_b], ring, &mut w.rng).unwrap();
        w.ledger
            .submit(first.0.clone(), first.1)
            .expect("first spend accepted");
        let replay = w.ledger.submit(first.0, first.1);
        tally.record(
            if submit_rejected_with(replay, RejectReason::DoubleSpend) {
                Err(RejectReason::DoubleSpend)
            } else {
                Ok(())
            },
            &[RejectReason::DoubleSpend],
        );
        tally.record(
            verdict_of(verify(w.state(), &second.0, &second.1)),
            &[RejectReason::DoubleSpend],
        );
    }
    c.check(
        "double spend",
        tally.ok() && tally.trials == 40,
        tally.summary(),
    );

    // Re-registering a type, alone or next to a fresh one.
    let mut tally = Tally::default();
    let registered: Vec<TypeTag> = w.state().registered_types().to_vec();
    let params = w.params();
    for (i, ty) in registered.iter().cycle().enumerate().take(20) {
        let k = w.keys();
        let mut outs = vec![w.out(&k.public, ty, 5, 0)];
        if i % 2 == 1 {
            let fresh =
                TypeTag::from_preimage(TypeDomain::Property, format!("fresh-{i}").as_bytes());
            outs.push(w.out(&k.public, &fresh, 5, 1));
        }
        let (body, sig) = coin_gen(&params, &outs, &mut w.rng).unwrap();
        tally.record(
            verdict_of(verify(w.state(), &body, &sig)),
            &[RejectReason::TypeReuse],
        );
    }
    c.check(
        "type re-registration",
        tally.ok() && tally.trials == 20,
        tally.summary(),
    );

    // Conservation against a plaintext oracle: four types, amounts < 2^8.
    let mut w = World::new(22);
    w.pad(8);
    let holder = w.keys();
    let mut universe = Vec::new();
    for t in 0..4 {
        let ty = w.issue(&holder.public, &format!("small-{t}"), 250);
        let hit = w.holding(&holder, &ty);
        let parts = composition(&mut w.rng, 250, 5, 1);
        w.split(&holder, &hit, &parts);
        universe.push(ty);
    }
    let hits = w.state().spendable(&holder);
    let state = w.ledger.snapshot();
    let (mut accepts, mut rejects, mut false_accepts, mut false_rejects, mut wrong_reason) =
        (0, 0, 0, 0, 0);
    let mut rng = ChaCha20Rng::seed_from_u64(23);
    for inst in 0..400 {
        let k = rng.gen_range(1..=3);
        let inputs: Vec<SpendInput> = rand::seq::index::sample(&mut rng, hits.len(), k)
            .iter()
            .map(|i| hits[i].spend_input(&holder).unwrap())
            .collect();
        let mut plan: Vec<(TypeTag, u64)> = Vec::new();
        let mut sums: BTreeMap<TypeId, (TypeTag, u64)> = BTreeMap::new();
        for i in &inputs {
            sums.entry(i.ty.id()).or_insert((i.ty, 0)).1 += i.amount;
        }
        if inst % 4 == 1 {
            for _ in 0..rng.gen_range(1..=4) {
                plan.push((universe[rng.gen_range(0..4)], rng.gen_range(0..256)));
            }
        } else {
            for (ty, s) in sums.values() {
                let n = (*s as usize).div_ceil(255) + rng.gen_range(0..2);
                for a in capped_composition(&mut rng, *s, n, 255) {
                    plan.push((*ty, a));
                }
            }
            let j = rng.gen_range(0..plan.len());
            match inst % 4 {
                2 => plan[j].1 = if plan[j].1 == 0 { 1 } else { plan[j].1 - 1 },
                3 => {
                    let other = universe.iter().find(|t| **t != plan[j].0).unwrap();
                    plan[j] = (*other, plan[j].1.max(1));
                }
                _ => {}
            }
        }
        let balanced = {
            let mut net: BTreeMap<TypeId, i128> = BTreeMap::new();
            for i in &inputs {
                *net.entry(i.ty.id()).or_default() += i.amount as i128;
            }
            for (ty, a) in &plan {
                *net.entry(ty.id()).or_default() -= *a as i128;
            }
            net.values().all(|v| *v == 0)
        };
        let outs: Vec<PendingOutput> = plan
            .iter()
            .enumerate()
            .map(|(i, (ty, a))| {
                let to = acc_gen_random(&mut rng).0.public;
                PendingOutput::new(&params, &to, ty, *a, i as u64, &mut rng).unwrap()
            })
            .collect();
        let offer = prepare_offer_unchecked(&state, &inputs, &outs, ring, &mut rng)
            .unwrap()
            .prove_inputs(&state, &mut rng)
            .unwrap()
            .finish(&state, ring, &mut rng)
            .unwrap();
        let (body, sig) = seal_unchecked(&[offer], &mut rng);
        match (verify(&state, &body, &sig), balanced) {
            (Ok(_), true) => accepts += 1,
            (Ok(_), false) => false_accepts += 1,
            (Err(_), true) => false_rejects += 1,
            (Err(e), false) => {
                rejects += 1;
                if e.reason != RejectReason::BadProof {
                    wrong_reason += 1;
                }
            }
        }
    }
    c.check(
        "conservation oracle",
        false_accepts == 0 && false_rejects == 0 && wrong_reason == 0 && accepts > 0 && rejects > 0,
        format!(
            "400 instances: {accepts} balanced accepted, {rejects} unbalanced rejected (bad-proof), \
             {false_accepts} false accepts, {false_rejects} false rejects, {wrong_reason} wrong reasons"
        ),
    );

    // Out-of-range amounts: shifting δ·T between two outputs preserves the
    // sum, so only the range proofs stand in the way.
    let refused = PendingOutput::new(
        &params,
        &holder.public,
        &universe[0],
        params.max_amount() + 1,
        0,
        &mut rng,
    );
    let mut tally = Tally::default();
    for _ in 0..100 {
        let hit = &hits[rng.gen_range(0..hits.len())];
        let input = hit.spend_input(&holder).unwrap();
        let x = rng.gen_range(0..=input.amount);
        let outs: Vec<PendingOutput> = [x, input.amount - x]
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let to = acc_gen_random(&mut rng).0.public;
                PendingOutput::new(&params, &to, &input.ty, *a, i as u64, &mut rng).unwrap()
            })
            .collect();
        let (body, sig) =
            spend(&state, std::slice::from_ref(&input), &outs, ring, &mut rng).unwrap();
        let TransactionBody::Spend { mut offers } = body else {
            unreachable!()
        };
        let delta = rng.gen_range(params.max_amount() + 1..=3 << params.range_bits);
        let shift = input.ty.generator() * GroupScalar::from_u64(delta);
        let o = &mut offers[0].outputs;
        o[0].account.commitment = Commitment(o[0].account.commitment.point() + shift);
        o[1].account.commitment = Commitment(o[1].account.commitment.point() - shift);
        let shifted = TransactionBody::Spend { offers };
        tally.record(
            verdict_of(verify(&state, &shifted, &sig)),
            &[RejectReason::BadProof],
        );
    }
    c.check(
        "out-of-range amounts",
        tally.ok() && refused.is_err(),
        format!(
            "builder refuses 2^k: {}; {}",
            refused.is_err(),
            tally.summary()
        ),
    );

    // Single-byte mutations inside each kind of proof.
    let mut picks = rand::seq::index::sample(&mut rng, hits.len(), 2).into_iter();
    let inputs: Vec<SpendInput> = (&mut picks)
        .map(|i| hits[i].spend_input(&holder).unwrap())
        .collect();
    let total: u64 = inputs.iter().map(|i| i.amount).sum();
    let same_type = inputs[0].ty == inputs[1].ty;
    let outs: Vec<PendingOutput> = if same_type {
        vec![
            PendingOutput::new(
                &params,
                &owner.public,
                &inputs[0].ty,
                total / 2,
                0,
                &mut rng,
            )
            .unwrap(),
            PendingOutput::new(
                &params,
                &owner.public,
                &inputs[0].ty,
                total - total / 2,
                1,
                &mut rng,
            )
            .unwrap(),
        ]
    } else {
        inputs
            .iter()
            .enumerate()
            .map(|(i, inp)| {
                PendingOutput::new(
                    &params,
                    &owner.public,
                    &inp.ty,
                    inp.amount,
                    i as u64,
                    &mut rng,
                )
                .unwrap()
            })
            .collect()
    };
    let (spend_body, spend_sig) = spend(&state, &inputs, &outs, ring, &mut rng).unwrap();
    let fresh: Vec<PendingOutput> = (0..2)
        .map(|i| {
            let ty =
                TypeTag::from_preimage(TypeDomain::Property, format!("mutation-{i}").as_bytes());
            PendingOutput::new(&params, &owner.public, &ty, 7, i, &mut rng).unwrap()
        })
        .collect();
    let (gen_body, gen_sig) = coin_gen(&params, &fresh, &mut rng).unwrap();
    c.check(
        "mutation baselines verify",
        verify(&state, &spend_body, &spend_sig).is_ok()
            && verify(&state, &gen_body, &gen_sig).is_ok(),
        "2-in/2-out spend and 2-type coingen",
    );
    let TransactionBody::Spend { offers } = &spend_body else {
        unreachable!()
    };
    let TransactionBody::CoinGen { outputs: issued } = &gen_body else {
        unreachable!()
    };
    let kinds: Vec<(&str, &TransactionBody, &TxSignature, Option<Vec<u8>>)> = vec![
        (
            "membership",
            &spend_body,
            &spend_sig,
            Some(offers[0].inputs[0].membership.encode()),
        ),
        (
            "range",
            &spend_body,
            &spend_sig,
            Some(offers[0].outputs[0].range_proof.encode()),
        ),
        (
            "type",
            &spend_body,
            &spend_sig,
            Some(offers[0].outputs[0].type_proof.proof.encode()),
        ),
        ("seal signature", &spend_body, &spend_sig, None),
        (
            "coingen range",
            &gen_body,
            &gen_sig,
            Some(issued[0].range_proof.encode()),
        ),
        (
            "coingen tag",
            &gen_body,
            &gen_sig,
            Some(issued[0].tag_proof.encode()),
        ),
        ("coingen signature", &gen_body, &gen_sig, None),
    ];
    for (name, body, sig, proof) in kinds {
        let body_bytes = body.encode();
        let sig_bytes = sig.encode();
        let (in_body, start, len) = match &proof {
            Some(p) => (
                true,
                find(&body_bytes, p).expect("proof bytes inside body"),
                p.len(),
            ),
            None => (false, 0, sig_bytes.len()),
        };
        let mut tally = Tally::default();
        for _ in 0..MUTATIONS {
            let pos = start + rng.gen_range(0..len);
            let flip = rng.gen_range(1..=255u8);
            let (mut b, mut s) = (body_bytes.clone(), sig_bytes.clone());
            if in_body {
                b[pos] ^= flip;
            } else {
                s[pos] ^= flip;
            }
            let verdict = match (TransactionBody::decode(&b), TxSignature::decode(&s)) {
                (Ok(b), Ok(s)) => verdict_of(verify(&state, &b, &s)),
                _ => Err(RejectReason::Malformed),
            };
            tally.record(verdict, &[RejectReason::BadProof, RejectReason::Malformed]);
        }
        c.check(&format!("mutations, {name}"), tally.ok(), tally.summary());
    }
}

// ---------------------------------------------------------------------------
// 3. Confidentiality and anonymity

fn confidentiality(c: &mut Checks) {
    // With 16-bit amounts any two-byte value turns up in a 30 kB encoding by
    // chance, so this scan uses the full 64-bit range: a plaintext amount
    // would then be an unmistakable 8-byte pattern.
    let wide = PublicParams::test_profile().with_range_bits(64).unwrap();
    let mut w = World::with_params(wide, 30);
    w.pad(8);
    let owner = w.keys();
    let mut held = Vec::new();
    for t in 0..4 {
        let amount = w.rng.gen_range(1u64 << 60..1 << 62);
        let ty = w.issue(&owner.public, &format!("wide-{t}"), amount);
        let hit = w.holding(&owner, &ty);
        let parts = composition(&mut w.rng, amount, 4, 1 << 40);
        w.split(&owner, &hit, &parts);
        held.push(ty);
    }
    let hits = w.state().spendable(&owner);
    let state = w.ledger.snapshot();
    let mut leaks = 0;
    for _ in 0..LEAKAGE_SPENDS {
        let k = w.rng.gen_range(1..=2);
        let inputs: Vec<SpendInput> = rand::seq::index::sample(&mut w.rng, hits.len(), k)
            .iter()
            .map(|i| hits[i].spend_input(&owner).unwrap())
            .collect();
        let mut totals: BTreeMap<TypeId, (TypeTag, u64)> = BTreeMap::new();
        for i in &inputs {
            let e = totals.entry(i.ty.id()).or_insert((i.ty, 0));
            e.1 = e.1.checked_add(i.amount).unwrap();
        }
        let mut outs = Vec::new();
        for (ty, total) in totals.values() {
            for a in composition(&mut w.rng, *total, 2, 1 << 32) {
                let to = w.keys().public;
                outs.push(w.out(&to, ty, a, outs.len() as u64));
            }
        }
        let (body, sig) = spend(&state, &inputs, &outs, w.ring, &mut w.rng).unwrap();
        let mut bytes = body.encode();
        bytes.extend(sig.encode());
        let secrets = inputs
            .iter()
            .map(|i| (i.ty, i.amount))
            .chain(outs.iter().map(|o| (o.ty, o.amount)))
            .flat_map(|(ty, a)| {
                [
                    a.to_le_bytes().to_vec(),
                    a.to_be_bytes().to_vec(),
                    ty.preimage_hash().to_vec(),
                    ty.generator().to_bytes().to_vec(),
                ]
            });
        leaks += usize::from(secrets.into_iter().any(|p| contains(&bytes, &p)));
    }
    c.check(
        "no plaintext amounts or types",
        leaks == 0,
        format!("{LEAKAGE_SPENDS} encoded spends (64-bit amounts) scanned, {leaks} contain an amount or type"),
    );

    // Every placement of the real input in a fixed ring.
    let mut w = World::new(31);
    w.pad(4);
    let owner = w.keys();
    let n = w.ring;
    let ty = w.issue(&owner.public, "positions", 8000);
    let hit = w.holding(&owner, &ty);
    let receipt = w.split(&owner, &hit, &vec![1000; n]);
    let ring: Vec<u64> = (receipt.first_output..receipt.first_output + n as u64).collect();
    let mut shapes = BTreeSet::new();
    let mut verified = 0;
    for &real in &ring {
        let hit = w
            .state()
            .spendable(&owner)
            .into_iter()
            .find(|h| h.ledger_index == real)
            .unwrap();
        let mut input = hit.spend_input(&owner).unwrap();
        input.ring = Some(ring.clone());
        let (a, b) = (w.keys(), w.keys());
        let outs = [w.out(&a.public, &ty, 600, 0), w.out(&b.public, &ty, 400, 1)];
        let (body, sig) = spend(w.ledger.state(), &[input], &outs, n, &mut w.rng).unwrap();
        verified += usize::from(verify(w.state(), &body, &sig).is_ok());
        let TransactionBody::Spend { offers } = &body else {
            unreachable!()
        };
        let i = &offers[0].inputs[0];
        shapes.insert((
            body.encode().len(),
            sig.encode().len(),
            i.ring.clone(),
            i.membership.clause_count(),
            i.membership.encode().len(),
            offers[0]
                .outputs
                .iter()
                .map(|o| o.range_proof.bits())
                .collect::<Vec<_>>(),
        ));
    }
    c.check(
        "ring positions",
        verified == n && shapes.len() == 1,
        format!(
            "{verified}/{n} placements verify, {} distinct field structures",
            shapes.len()
        ),
    );

    // Many outputs to one recipient.
    let params = w.params();
    let recipient = w.keys();
    let outsider = w.keys();
    let ty = TypeTag::from_preimage(TypeDomain::Currency, b"unlinkability");
    let mut fields: [BTreeSet<[u8; 32]>; 4] = Default::default();
    let mut memos = BTreeSet::new();
    let (mut embeds_address, mut recipient_sees, mut outsider_sees) = (0, 0, 0);
    let address = [
        recipient.public.view.to_bytes(),
        recipient.public.track.to_bytes(),
        recipient.public.spend.to_bytes(),
    ];
    for i in 0..UNLINKABILITY_OUTPUTS {
        let (acc, _) = ot_gen(
            &params,
            &recipient.public,
            &ty,
            100,
            i as u64 % 4,
            &mut w.rng,
        )
        .unwrap();
        let bytes = acc.encode();
        if address.iter().any(|a| contains(&bytes, a)) {
            embeds_address += 1;
        }
        fields[0].insert(acc.one_time_key.to_bytes());
        fields[1].insert(acc.ephemeral.to_bytes());
        fields[2].insert(acc.tag.to_bytes());
        fields[3].insert(acc.commitment.point().to_bytes());
        memos.insert(acc.memo.clone());
        recipient_sees += usize::from(view(&recipient.view, &acc).is_some());
        outsider_sees += usize::from(view(&outsider.view, &acc).is_some());
    }
    let distinct = fields.iter().all(|f| f.len() == UNLINKABILITY_OUTPUTS)
        && memos.len() == UNLINKABILITY_OUTPUTS;
    c.check(
        "output unlinkability",
        distinct && embeds_address == 0 && recipient_sees == UNLINKABILITY_OUTPUTS && outsider_sees == 0,
        format!(
            "{UNLINKABILITY_OUTPUTS} outputs of equal amount and type: all fields distinct {distinct}, \
             {embeds_address} embed the address, recipient detects {recipient_sees}, outsider {outsider_sees}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. End-to-end part life cycle

type Planted = (HistorySource, TypeId, u64, u64, Option<u64>);

fn life_cycle(c: &mut Checks) {
    let params = PublicParams::test_profile();
    let clock = Arc::new(AtomicU64::new(0));
    let cl = clock.clone();
    let ledger = MemoryLedger::with_clock(params, Box::new(move || cl.load(Ordering::SeqCst)));
    let mut s = Session::new(ledger, params.ring_size, ChaCha20Rng::seed_from_u64(41));
    let mut now = 1_750_000_000_000u64;
    let mut tick = |clock: &AtomicU64| {
        now += 60_000;
        clock.store(now, Ordering::SeqCst);
        now
    };
    let gen = |s: &mut Session<MemoryLedger, ChaCha20Rng>| acc_gen_random(&mut s.rng).0;
    let (designer, client, printer, certifier) =
        (gen(&mut s), gen(&mut s), gen(&mut s), gen(&mut s));
    let part = PartIdentity::new(ItemId::random(&mut s.rng)).unwrap();
    let mut planted: Vec<Planted> = Vec::new();

    let decoy = gen(&mut s);
    for i in 0..8 {
        tick(&clock);
        let ty = TypeTag::from_preimage(TypeDomain::Currency, format!("decoy-{i}").as_bytes());
        s.issue_token(1, ty, &decoy.public).unwrap();
    }

    // Purchase: license for currency, as one sealed swap.
    let eur = TypeTag::from_preimage(TypeDomain::Currency, b"EUR");
    tick(&clock);
    s.issue_token(1000, eur, &client.public).unwrap();
    let cad = b"solid bracket; rev A; 40x20x5 mm".to_vec();
    tick(&clock);
    let (design, _) = s.issue_design(Some(50), &cad, &designer.public).unwrap();
    let legs = [
        (&designer, design.tag, 1u64, eur, 120u64),
        (&client, eur, 120, design.tag, 1),
    ];
    let mut offers = Vec::new();
    for (keys, give, give_amount, want, want_amount) in legs {
        let source = s.find_source(keys, &give, give_amount).unwrap();
        let input = source.spend_input(keys).unwrap();
        let mut outs =
            vec![
                PendingOutput::new(&params, &keys.public, &want, want_amount, 0, &mut s.rng)
                    .unwrap(),
            ];
        let change = source.output.amount - give_amount;
        if change > 0 {
            outs.push(
                PendingOutput::new(&params, &keys.public, &give, change, 1, &mut s.rng).unwrap(),
            );
        }
        offers.push(offer_leg(s.ledger.state(), &[input], &outs, s.ring_size, &mut s.rng).unwrap());
    }
    let (body, sig) = seal(&offers, &mut s.rng).unwrap();
    tick(&clock);
    s.ledger.submit(body, sig).unwrap();
    let designer_eur = s
        .state()
        .spendable(&designer)
        .iter()
        .filter(|h| h.output.ty == eur)
        .map(|h| h.output.amount)
        .sum::<u64>();
    c.check(
        "license purchase",
        designer_eur == 120,
        format!("designer received {designer_eur} EUR"),
    );

    // Client orders the print; printer binds the license to the part.
    let source = s.find_source(&client, &design.tag, 1).unwrap();
    tick(&clock);
    s.transfer_token(1, &design.tag, &source, &client, &printer.public)
        .unwrap();
    let source = s.find_source(&printer, &design.tag, 1).unwrap();
    let t = tick(&clock);
    s.register_item(&part, &design, &source, &printer).unwrap();
    planted.push((HistorySource::Permanent, design.tag.id(), 1, t, None));

    // Certification from a pool.
    let label = "Quality Assured by A. Inc.";
    tick(&clock);
    let (quality, _) = s
        .issue_certificate_tokens(100, label, &certifier.public)
        .unwrap();
    let source = s.find_source(&certifier, &quality.tag, 0).unwrap();
    tick(&clock);
    s.split_pool(&source, &certifier, 4).unwrap();
    let source = s.find_source(&certifier, &quality.tag, 1).unwrap();
    let t = tick(&clock);
    s.attest_post_processing(&part, &quality, Some(1), &source, &certifier)
        .unwrap();
    planted.push((HistorySource::Permanent, quality.tag.id(), 1, t, None));

    // Hand-over via a transient token.
    let pickup = attribute_type("ready for pickup");
    tick(&clock);
    s.issue_token(10, pickup, &printer.public).unwrap();
    let source = s.find_source(&printer, &pickup, 1).unwrap();
    let applied = tick(&clock);
    s.apply_transient(&part, &pickup, 1, &source, &printer)
        .unwrap();
    let recovered = tick(&clock);
    s.recover_transient(&part.eid, &pickup, 1, &client.public)
        .unwrap();
    planted.push((
        HistorySource::Transient,
        pickup.id(),
        1,
        applied,
        Some(recovered),
    ));
    let claimed: Vec<_> = s
        .state()
        .scan_keys(&client)
        .into_iter()
        .filter(|h| h.output.ty == pickup)
        .map(|h| (h.output.amount, h.received_ms, h.spent))
        .collect();
    c.check(
        "transient round trip",
        claimed == [(1, recovered, Some(SpentInfo::Unspent))],
        format!("client holds {claimed:?}"),
    );

    let observed = |s: &Session<MemoryLedger, ChaCha20Rng>| {
        let mut v: Vec<Planted> = item_verification(s.state(), &part)
            .into_iter()
            .map(|e| (e.source, e.ty.id(), e.amount, e.received_ms, e.spent_ms))
            .collect();
        v.sort();
        v
    };
    let mut want = planted.clone();
    want.sort();
    let got = observed(&s);
    c.check(
        "item verification before revocation",
        got == want,
        format!("{} entries, planted {}", got.len(), want.len()),
    );
    let catalog = [quality.clone()];
    let before = effective_properties(&item_verification(s.state(), &part), &catalog);
    let valid_before = before.get(label).is_some_and(|p| p.valid);

    // Revocation.
    let negation = quality.negation();
    tick(&clock);
    s.issue_certificate_tokens(10, &negation.label, &certifier.public)
        .unwrap();
    let source = s.find_source(&certifier, &negation.tag, 1).unwrap();
    let t = tick(&clock);
    s.attest_post_processing(&part, &negation, Some(1), &source, &certifier)
        .unwrap();
    planted.push((HistorySource::Permanent, negation.tag.id(), 1, t, None));
    planted.sort();
    let got = observed(&s);
    let after = effective_properties(&item_verification(s.state(), &part), &catalog);
    let valid_after = after.get(label).is_some_and(|p| p.valid);
    c.check(
        "item verification after revocation",
        got == planted,
        format!(
            "{} entries match the planted tokens and timestamps",
            got.len()
        ),
    );
    c.check(
        "revocation flips validity",
        valid_before && !valid_after,
        format!("valid before {valid_before}, after {valid_after}"),
    );
    let file_ok = DesignType::from_file(&cad).tag == design.tag
        && DesignType::from_file(b"rev B").tag != design.tag;
    c.check(
        "design identity",
        file_ok,
        "CAD bytes determine the design type",
    );

    // The same flow through the command line.
    let dir = tempfile::tempdir().unwrap();
    let text =
        fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/lifecycle.toml"))
            .unwrap();
    let global = Cli::parse_from(["partledger", "ledger", "stats"]);
    let reports = scenario::run(&scenario::parse(&text).unwrap(), dir.path(), &global).unwrap();
    let bad: Vec<String> = reports
        .iter()
        .filter(|r| !r.problems.is_empty())
        .map(|r| format!("{}: {}", r.name, r.problems.join("; ")))
        .collect();
    c.check(
        "scenario file",
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} steps as expected", reports.len())
        } else {
            bad.join(" | ")
        },
    );
}

// ---------------------------------------------------------------------------
// 5. Designated-verifier proofs

fn proxy(c: &mut Checks) {
    let params = PublicParams::test_profile();
    let mut s = Session::new(
        MemoryLedger::new(params),
        params.ring_size,
        ChaCha20Rng::seed_from_u64(51),
    );
    let gen = |s: &mut Session<MemoryLedger, ChaCha20Rng>| acc_gen_random(&mut s.rng).0;
    let (certifier, verifier, other_verifier, attacker) =
        (gen(&mut s), gen(&mut s), gen(&mut s), gen(&mut s));
    let part = PartIdentity::new(ItemId::random(&mut s.rng)).unwrap();
    let other_part = PartIdentity::new(ItemId::random(&mut s.rng)).unwrap();
    let decoy = gen(&mut s);
    for i in 0..24 {
        let ty = TypeTag::from_preimage(TypeDomain::Currency, format!("decoy-{i}").as_bytes());
        s.issue_token(3, ty, &decoy.public).unwrap();
    }
    let (quality, _) = s
        .issue_certificate_tokens(20, "ISO 9001", &certifier.public)
        .unwrap();
    for p in [&part, &other_part] {
        let source = s.find_source(&certifier, &quality.tag, 1).unwrap();
        s.attest_post_processing(p, &quality, Some(1), &source, &certifier)
            .unwrap();
    }
    let state = s.ledger.snapshot();
    let target = state.scan(&part.receive_only.view)[0].ledger_index;
    let n = state.output_count();
    let mut rng = ChaCha20Rng::seed_from_u64(52);
    let decoys = |rng: &mut ChaCha20Rng| -> Vec<u64> {
        let mut r = BTreeSet::new();
        while r.len() < params.ring_size - 1 {
            let i = rng.gen_range(0..n);
            if i != target {
                r.insert(i);
            }
        }
        r.into_iter().collect()
    };
    let honest = |rng: &mut ChaCha20Rng, ring: &[u64], to: &PublicKeys| {
        proxy_prove(&state, &part, target, ring, to, rng).unwrap()
    };

    let mut ok = 0;
    for _ in 0..50 {
        let ring = decoys(&mut rng);
        let p = honest(&mut rng, &ring, &verifier.public);
        ok += usize::from(
            proxy_verify(&state, &verifier.public, &p) && p.ty == quality.tag.id() && p.amount == 1,
        );
    }
    c.check("honest proofs verify", ok == 50, format!("{ok}/50"));

    let mut forged = 0;
    for i in 0..50 {
        let ring = decoys(&mut rng);
        let ty =
            TypeTag::from_preimage(TypeDomain::Property, format!("never issued {i}").as_bytes());
        let p = proxy_forge(
            &state,
            &ring,
            &ty,
            rng.gen_range(1..1000),
            &part.receive_only.public.spend,
            &verifier,
            &mut rng,
        )
        .unwrap();
        forged += usize::from(proxy_verify(&state, &verifier.public, &p));
    }
    c.check(
        "verifier can forge (designated-verifier property)",
        forged == 50,
        format!("{forged}/50 statements of the verifier's choosing verify"),
    );

    let other_ty = state.registered_types()[0].id();
    let mut accepted = 0;
    let mut per_strategy = [0usize; 7];
    for trial in 0..PROXY_TRIALS {
        let ring = decoys(&mut rng);
        let strategy = trial % 7;
        per_strategy[strategy] += 1;
        let candidate: Option<ProxyProof> = match strategy {
            0 => {
                let mut p = proxy_forge(
                    &state,
                    &ring,
                    &quality.tag,
                    1,
                    &part.receive_only.public.spend,
                    &attacker,
                    &mut rng,
                )
                .unwrap();
                p.verifier_key = verifier.public.spend;
                Some(p)
            }
            1 => {
                let mut p = honest(&mut rng, &ring, &verifier.public);
                p.amount += rng.gen_range(1..100);
                Some(p)
            }
            2 => {
                let mut p = honest(&mut rng, &ring, &verifier.public);
                p.ty = other_ty;
                Some(p)
            }
            3 => {
                let mut p = honest(&mut rng, &ring, &verifier.public);
                p.item_key = other_part.receive_only.public.spend;
                Some(p)
            }
            4 => {
                let mut p = honest(&mut rng, &ring, &verifier.public);
                let i = loop {
                    let i = rng.gen_range(0..n);
                    if !p.ring.contains(&i) {
                        break i;
                    }
                };
                let j = rng.gen_range(0..p.ring.len());
                p.ring[j] = i;
                p.ring.sort_unstable();
                Some(p)
            }
            5 => {
                let mut p = honest(&mut rng, &ring, &other_verifier.public);
                if rng.gen_bool(0.5) {
                    p.verifier_key = verifier.public.spend;
                }
                Some(p)
            }
            _ => {
                let mut bytes = honest(&mut rng, &ring, &verifier.public).encode();
                let pos = rng.gen_range(0..bytes.len());
                bytes[pos] ^= rng.gen_range(1..=255u8);
                ProxyProof::decode(&bytes).ok()
            }
        };
        if candidate.is_some_and(|p| proxy_verify(&state, &verifier.public, &p)) {
            accepted += 1;
        }
    }
    c.check(
        "third parties cannot forge",
        accepted == 0,
        format!("{PROXY_TRIALS} adversarial trials over 7 strategies {per_strategy:?}, {accepted} accepted"),
    );
}

// ---------------------------------------------------------------------------
// 6. Performance

fn rate(rows: &[bench::BenchRow], threads: usize) -> f64 {
    rows.iter()
        .find(|r| r.threads == threads)
        .and_then(|r| r.throughput_per_s)
        .unwrap_or(0.0)
}

struct Perf {
    verify_rows: Vec<bench::BenchRow>,
    started: Instant,
}

/// Repetitions per size for the generation-time shape.
const GENERATION_REPETITIONS: usize = 20;

fn perf_generation(c: &mut Checks) {
    let params = PublicParams::test_profile();
    let rows = bench::generate(params, 1..=6, params.ring_size, GENERATION_REPETITIONS, 61);
    // The minimum over repetitions estimates the intrinsic cost; medians
    // on a shared machine carry scheduler noise of the order of the step
    // between neighbouring sizes.
    let series = |op: &str, f: fn(&bench::BenchRow) -> f64| -> Vec<f64> {
        rows.iter().filter(|r| r.operation == op).map(f).collect()
    };
    let (pre, full) = (
        series("pre-spend", |r| r.min_ms),
        series("spend", |r| r.min_ms),
    );
    let (pre_med, full_med) = (
        series("pre-spend", |r| r.median_ms),
        series("spend", |r| r.median_ms),
    );
    let monotone = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.1}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    c.check(
        "pre-spend nondecreasing",
        monotone(&pre),
        format!("m=1..6 min ms: {} (medians {})", fmt(&pre), fmt(&pre_med)),
    );
    c.check(
        "spend nondecreasing",
        monotone(&full),
        format!("m=1..6 min ms: {} (medians {})", fmt(&full), fmt(&full_med)),
    );
    c.check(
        "pre-spend < spend at every m",
        pre.len() == full.len()
            && pre.iter().zip(&full).all(|(p, f)| p < f)
            && pre_med.iter().zip(&full_med).all(|(p, f)| p < f),
        format!("{} points, minima and medians", pre.len()),
    );
}

fn perf_scaling(c: &mut Checks, perf: &mut Perf) {
    let params = PublicParams::test_profile();
    perf.verify_rows = bench::verify_throughput(
        params,
        params.ring_size,
        &[1, 4],
        64,
        bench::MIN_REPETITIONS,
        62,
    );
    let (one, four) = (rate(&perf.verify_rows, 1), rate(&perf.verify_rows, 4));
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    c.check(
        "1 -> 4 threads >= 2x",
        four >= 2.0 * one,
        format!(
            "{one:.1}/s -> {four:.1}/s = {:.2}x on {cpus} available CPU(s)",
            four / one
        ),
    );
}

fn perf_scan(c: &mut Checks, perf: &Perf) {
    let params = PublicParams::test_profile();
    let row = bench::scan_throughput(params, 10_000, bench::MIN_REPETITIONS, 63);
    let scan = row.throughput_per_s.unwrap_or(0.0);
    let verify = rate(&perf.verify_rows, 1);
    c.check(
        "scan >= 10x verify",
        scan >= 10.0 * verify,
        format!(
            "scan {scan:.0}/s vs 2-in/2-out verify {verify:.1}/s = {:.0}x",
            scan / verify
        ),
    );
    let total = perf.started.elapsed();
    c.check(
        "bench runtime",
        total < Duration::from_secs(600),
        format!("{:.1} s (limit 600 s)", total.as_secs_f64()),
    );
}

// ---------------------------------------------------------------------------
// 7. Persistence

fn persistence(c: &mut Checks) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("main.ledger");
    let params = PublicParams::test_profile();
    let mut rng = ChaCha20Rng::seed_from_u64(71);
    let mut s = Session::new(
        FileLedger::create(&path, params).unwrap(),
        params.ring_size,
        ChaCha20Rng::seed_from_u64(72),
    );
    let len = |p: &Path| fs::metadata(p).unwrap().len();
    // (file length, digest) after each record
    let mut checkpoints = vec![(len(&path), s.state().state_digest())];
    let (alice, bob) = (acc_gen_random(&mut rng).0, acc_gen_random(&mut rng).0);
    for i in 0..8 {
        let ty = TypeTag::from_preimage(TypeDomain::Currency, format!("c{i}").as_bytes());
        s.issue_token(500 + i, ty, &alice.public).unwrap();
        checkpoints.push((len(&path), s.state().state_digest()));
    }
    for i in 0..4 {
        let ty = TypeTag::from_preimage(TypeDomain::Currency, format!("c{i}").as_bytes());
        let source = s.find_source(&alice, &ty, 100).unwrap();
        s.transfer_token(100, &ty, &source, &alice, &bob.public)
            .unwrap();
        checkpoints.push((len(&path), s.state().state_digest()));
    }
    drop(s);
    let full = fs::read(&path).unwrap();
    let header = checkpoints[0].0;

    // Torn writes at random byte offsets.
    let mut matched = 0;
    for k in 0..CRASH_POINTS {
        let cut = rng.gen_range(header..=full.len() as u64);
        let p = dir.path().join(format!("crash-{k}.ledger"));
        fs::write(&p, &full[..cut as usize]).unwrap();
        let (n, (good_len, want)) = checkpoints
            .iter()
            .enumerate()
            .rfind(|(_, (l, _))| *l <= cut)
            .map(|(i, x)| (i, *x))
            .unwrap();
        let ledger = FileLedger::open(&p).unwrap();
        let ok_open = ledger.state().state_digest() == want
            && ledger.state().records().len() == n
            && ledger.recovered_bytes() == cut - good_len;
        // appending after recovery, then reopening, reproduces the state
        let mut s = Session::new(
            ledger,
            params.ring_size,
            ChaCha20Rng::seed_from_u64(k as u64),
        );
        let ty = TypeTag::from_preimage(TypeDomain::Currency, format!("after-{k}").as_bytes());
        s.issue_token(1, ty, &bob.public).unwrap();
        let live = s.state().state_digest();
        drop(s);
        let reopened = FileLedger::open(&p).unwrap().state().state_digest();
        matched += usize::from(ok_open && reopened == live);
    }
    c.check(
        "torn-write crash points",
        matched == CRASH_POINTS,
        format!("{matched}/{CRASH_POINTS} truncated files replay to the recorded digest"),
    );

    // Killing the command-line tool mid-submission.
    let wallet = dir.path().join("alice.json");
    WalletFile::generate(Role::Client, "alice", &mut rng)
        .save_new(&wallet)
        .unwrap();
    let n = checkpoints.len() - 1;
    let final_digest = checkpoints[n].1;
    let issue = |p: &Path, label: &str| {
        Command::new(env!("CARGO_BIN_EXE_partledger"))
            .args([
                "--ledger",
                p.to_str().unwrap(),
                "--wallet",
                wallet.to_str().unwrap(),
            ])
            .args([
                "issue-token",
                "--type",
                &format!("currency={label}"),
                "--amount",
                "5",
            ])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap()
    };
    // an uninterrupted run sets the window the kills are spread over
    let p = dir.path().join("calibration.ledger");
    fs::write(&p, &full).unwrap();
    let t = Instant::now();
    let finished = issue(&p, "calibration").wait().unwrap().success();
    let window = t.elapsed().as_micros() as u64 * 5 / 4;
    c.check(
        "uninterrupted run",
        finished,
        format!("{:.0} ms", window as f64 / 1250.0),
    );
    let mut consistent = 0;
    let mut landed = 0;
    for k in 0..CRASH_POINTS {
        let p = dir.path().join(format!("kill-{k}.ledger"));
        fs::write(&p, &full).unwrap();
        let mut child = issue(&p, &format!("k{k}"));
        std::thread::sleep(Duration::from_micros(rng.gen_range(0..window)));
        let _ = child.kill();
        let _ = child.wait();
        let Ok(ledger) = FileLedger::open(&p) else {
            continue;
        };
        let records = ledger.state().records().to_vec();
        let digest = ledger.state().state_digest();
        drop(ledger);
        let prefix_ok = fs::read(&p).unwrap().starts_with(&full);
        let base = LedgerState::replay(params, records[..n.min(records.len())].to_vec())
            .map(|s| s.state_digest());
        let again = FileLedger::open(&p).map(|l| l.state().state_digest());
        let ok = match records.len() {
            r if r == n => digest == final_digest,
            r if r == n + 1 => base.as_ref().ok() == Some(&final_digest) && prefix_ok,
            _ => false,
        };
        landed += usize::from(records.len() == n + 1);
        consistent += usize::from(ok && again.ok() == Some(digest));
    }
    c.check(
        "killed process crash points",
        consistent == CRASH_POINTS,
        format!("{consistent}/{CRASH_POINTS} reopen with byte-identical digests ({landed} kills after commit)"),
    );
}

// ---------------------------------------------------------------------------

fn main() {
    println!("partledger acceptance suite (test profile)");
    let started = Instant::now();
    let mut outcomes = vec![
        criterion("1", "correctness", correctness),
        criterion("2", "soundness", soundness),
        criterion("3", "confidentiality and anonymity", confidentiality),
        criterion("4", "part life cycle end to end", life_cycle),
        criterion("5", "designated-verifier proxy proofs", proxy),
    ];
    let mut perf = Perf {
        verify_rows: Vec::new(),
        started: Instant::now(),
    };
    outcomes.push(criterion("6a", "generation time shape", perf_generation));
    let mut scaling = criterion("6b", "verification scales with threads", |c| {
        perf_scaling(c, &mut perf)
    });
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    if !scaling.passed && cpus < 4 {
        scaling.tolerated = Some(format!("needs 4 CPUs, {cpus} available"));
    }
    outcomes.push(scaling);
    outcomes.push(criterion("6c", "scan vs verification throughput", |c| {
        perf_scan(c, &perf)
    }));
    outcomes.push(criterion("7", "persistence across crashes", persistence));

    println!();
    println!("summary ({:.0} s):", started.elapsed().as_secs_f64());
    let mut hard_failures = 0;
    for o in &outcomes {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        match &o.tolerated {
            Some(why) => println!("{verdict} {:<3} {} (not counted: {why})", o.id, o.title),
            None => println!("{verdict} {:<3} {}", o.id, o.title),
        }
        if !o.passed && o.tolerated.is_none() {
            hard_failures += 1;
        }
    }
    if hard_failures > 0 {
        std::process::exit(1);
    }
}
