//! Benchmark harness: transaction generation (Pre-Spend and full Spend),
//! verification throughput and scan throughput.
//!
//! CSV columns: `operation, io_count, ring_size, range_bits, threads,
//! repetitions, median_ms, min_ms, max_ms, throughput_per_s`. For
//! generation rows throughput is transactions per second at the median;
//! for verify and scan rows it is the aggregate rate of the run.

use std::io;
use std::time::{Duration, Instant};

use partledger_core::accounts::{acc_gen_random, ot_gen, view, LongTermKeys, OneTimeAccount};
use partledger_core::group::{PublicParams, TypeDomain, TypeTag};
use partledger_core::ledger::{LedgerClient, LedgerState, MemoryLedger};
use partledger_core::transactions::{
    coin_gen, prepare_offer, seal, spend, verify, Balance, LedgerView, PendingOutput, SpendInput,
    TransactionBody, TxSignature,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

pub const MIN_REPETITIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub operation: String,
    pub io_count: usize,
    pub ring_size: usize,
    pub range_bits: u32,
    pub threads: usize,
    pub repetitions: usize,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    /// Empty when undefined (nothing was measured).
    pub throughput_per_s: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct Stats {
    pub median: Duration,
    pub min: Duration,
    pub max: Duration,
}

pub fn stats(samples: &[Duration]) -> Stats {
    assert!(!samples.is_empty(), "no samples");
    let mut s = samples.to_vec();
    s.sort();
    let n = s.len();
    let median = if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2
    };
    Stats {
        median,
        min: s[0],
        max: s[n - 1],
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// A ledger with `inputs` spendable outputs of one type owned by `owner`
/// and enough further outputs to fill rings of size `ring`.
pub struct Fixture {
    pub ledger: MemoryLedger,
    pub owner: LongTermKeys,
    pub recipient: LongTermKeys,
    pub ty: TypeTag,
    pub rng: ChaCha20Rng,
}

impl Fixture {
    pub fn new(params: PublicParams, inputs: usize, ring: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut ledger = MemoryLedger::new(params);
        let owner = acc_gen_random(&mut rng).0;
        let recipient = acc_gen_random(&mut rng).0;
        let ty = TypeTag::from_preimage(TypeDomain::Currency, b"bench");
        let per_input = 1000u64;
        let supply = per_input * inputs as u64;
        let out = PendingOutput::new(&params, &owner.public, &ty, supply, 0, &mut rng)
            .expect("supply fits");
        let (body, sig) = coin_gen(&params, &[out], &mut rng).expect("coingen");
        ledger.submit(body, sig).expect("issue");

        if inputs > 1 {
            let hit = ledger.state().spendable(&owner)[0].clone();
            let outs: Vec<PendingOutput> = (0..inputs as u64)
                .map(|i| {
                    PendingOutput::new(&params, &owner.public, &ty, per_input, i, &mut rng)
                        .expect("split")
                })
                .collect();
            let input = hit.spend_input(&owner).expect("owned");
            let (body, sig) =
                spend(ledger.state(), &[input], &outs, 2, &mut rng).expect("split spend");
            ledger.submit(body, sig).expect("split");
        }
        let filler = acc_gen_random(&mut rng).0;
        let mut i = 0u64;
        while (ledger.state().output_count() as usize) < ring + inputs {
            let t = TypeTag::from_preimage(TypeDomain::Attribute, &i.to_le_bytes());
            let out =
                PendingOutput::new(&params, &filler.public, &t, 1, 0, &mut rng).expect("filler");
            let (body, sig) = coin_gen(&params, &[out], &mut rng).expect("filler coingen");
            ledger.submit(body, sig).expect("filler");
            i += 1;
        }
        Fixture {
            ledger,
            owner,
            recipient,
            ty,
            rng,
        }
    }

    pub fn params(&self) -> PublicParams {
        *self.ledger.state().params()
    }

    pub fn inputs(&self, m: usize) -> Vec<SpendInput> {
        self.ledger
            .state()
            .spendable(&self.owner)
            .iter()
            .take(m)
            .map(|h| h.spend_input(&self.owner).expect("owned"))
            .collect()
    }

    /// `m` outputs to the recipient that exactly use up `inputs`.
    pub fn outputs(&mut self, inputs: &[SpendInput], m: usize) -> Vec<PendingOutput> {
        let total: u64 = inputs.iter().map(|i| i.amount).sum();
        let params = self.params();
        (0..m as u64)
            .map(|i| {
                let share = total / m as u64 + u64::from(i < total % m as u64);
                PendingOutput::new(
                    &params,
                    &self.recipient.public,
                    &self.ty,
                    share,
                    i,
                    &mut self.rng,
                )
                .expect("output")
            })
            .collect()
    }

    /// An `m`-in/`m`-out transaction.
    pub fn transaction(&mut self, m: usize, ring: usize) -> (TransactionBody, TxSignature) {
        let inputs = self.inputs(m);
        let outputs = self.outputs(&inputs, m);
        spend(self.ledger.state(), &inputs, &outputs, ring, &mut self.rng).expect("spend")
    }
}

/// Pre-Spend and Spend timings for `m` inputs and `m` outputs, `m` in
/// `io_counts`.
pub fn generate(
    params: PublicParams,
    io_counts: std::ops::RangeInclusive<usize>,
    ring: usize,
    repetitions: usize,
    seed: u64,
) -> Vec<BenchRow> {
    let repetitions = repetitions.max(MIN_REPETITIONS);
    let counts: Vec<usize> = io_counts.collect();
    let largest = counts.iter().copied().max().unwrap_or(1);
    let mut fixture = Fixture::new(params, largest, ring, seed);
    let mut pre = vec![Vec::with_capacity(repetitions); counts.len()];
    let mut full = vec![Vec::with_capacity(repetitions); counts.len()];
    // Rounds visit every size in turn so that drift in machine speed
    // affects all sizes alike.
    for _ in 0..repetitions {
        for (slot, &m) in counts.iter().enumerate() {
            let inputs = fixture.inputs(m);
            let outputs = fixture.outputs(&inputs, m);
            let state = fixture.ledger.state();
            let rng = &mut fixture.rng;
            let start = Instant::now();
            let prepared = prepare_offer(state, &inputs, &outputs, ring, Balance::Exact, rng)
                .expect("prepare");
            let pre_spent = prepared.prove_inputs(state, rng).expect("inputs");
            pre[slot].push(start.elapsed());
            let offer = pre_spent.finish(state, ring, rng).expect("outputs");
            let tx = seal(&[offer], rng).expect("seal");
            full[slot].push(start.elapsed());
            std::hint::black_box(tx);
        }
    }
    let mut rows = Vec::new();
    for (slot, &m) in counts.iter().enumerate() {
        let (pre, full) = (&pre[slot], &full[slot]);
        for (name, samples) in [("pre-spend", &pre), ("spend", &full)] {
            let s = stats(samples);
            rows.push(BenchRow {
                operation: name.into(),
                io_count: m,
                ring_size: ring,
                range_bits: params.range_bits,
                threads: 1,
                repetitions,
                median_ms: ms(s.median),
                min_ms: ms(s.min),
                max_ms: ms(s.max),
                throughput_per_s: Some(1.0 / s.median.as_secs_f64()),
            });
        }
    }
    rows
}

/// Verifies every transaction `rounds` times, spread over `threads`
/// workers. Returns the wall-clock time.
pub fn verify_parallel(
    state: &LedgerState,
    txs: &[(TransactionBody, TxSignature)],
    rounds: usize,
    threads: usize,
) -> Duration {
    let threads = threads.max(1);
    let jobs: Vec<&(TransactionBody, TxSignature)> = (0..rounds).flat_map(|_| txs.iter()).collect();
    let chunk = jobs.len().div_ceil(threads).max(1);
    let start = Instant::now();
    std::thread::scope(|scope| {
        for part in jobs.chunks(chunk) {
            scope.spawn(move || {
                for (body, sig) in part {
                    assert!(
                        verify(state, body, sig).is_ok(),
                        "benchmark transaction must verify"
                    );
                }
            });
        }
    });
    start.elapsed()
}

/// Aggregate 2-in/2-out verification rate for each thread count.
pub fn verify_throughput(
    params: PublicParams,
    ring: usize,
    thread_counts: &[usize],
    verifications: usize,
    repetitions: usize,
    seed: u64,
) -> Vec<BenchRow> {
    let mut fixture = Fixture::new(params, 2, ring, seed);
    let txs: Vec<_> = (0..4).map(|_| fixture.transaction(2, ring)).collect();
    let state = fixture.ledger.snapshot();
    let rounds = verifications.div_ceil(txs.len()).max(1);
    let total = rounds * txs.len();
    let repetitions = repetitions.max(1);
    let mut samples = vec![Vec::with_capacity(repetitions); thread_counts.len()];
    for _ in 0..repetitions {
        for (slot, &threads) in thread_counts.iter().enumerate() {
            samples[slot].push(verify_parallel(&state, &txs, rounds, threads));
        }
    }
    thread_counts
        .iter()
        .zip(&samples)
        .map(|(&threads, samples)| {
            let s = stats(samples);
            BenchRow {
                operation: "verify".into(),
                io_count: 2,
                ring_size: ring,
                range_bits: params.range_bits,
                threads,
                repetitions,
                median_ms: ms(s.median),
                min_ms: ms(s.min),
                max_ms: ms(s.max),
                throughput_per_s: Some(total as f64 / s.median.as_secs_f64()),
            }
        })
        .collect()
}

/// One-time accounts addressed to random recipients.
pub fn scan_corpus(params: &PublicParams, outputs: usize, seed: u64) -> Vec<OneTimeAccount> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let ty = TypeTag::from_preimage(TypeDomain::Property, b"scan");
    (0..outputs)
        .map(|i| {
            let to = acc_gen_random(&mut rng).0;
            ot_gen(params, &to.public, &ty, 1, i as u64, &mut rng)
                .expect("output")
                .0
        })
        .collect()
}

/// Outputs checked per second by a scanner that owns none of them.
pub fn scan_throughput(
    params: PublicParams,
    outputs: usize,
    repetitions: usize,
    seed: u64,
) -> BenchRow {
    let corpus = scan_corpus(&params, outputs, seed);
    let scanner = acc_gen_random(&mut ChaCha20Rng::seed_from_u64(seed ^ 1)).0;
    let samples: Vec<Duration> = (0..repetitions.max(1))
        .map(|_| {
            let start = Instant::now();
            let hits = corpus
                .iter()
                .filter(|a| view(&scanner.view, a).is_some())
                .count();
            std::hint::black_box(hits);
            start.elapsed()
        })
        .collect();
    let s = stats(&samples);
    BenchRow {
        operation: "scan".into(),
        io_count: outputs,
        ring_size: 0,
        range_bits: params.range_bits,
        threads: 1,
        repetitions: samples.len(),
        median_ms: ms(s.median),
        min_ms: ms(s.min),
        max_ms: ms(s.max),
        throughput_per_s: (outputs > 0).then(|| outputs as f64 / s.median.as_secs_f64()),
    }
}

pub fn write_csv<W: io::Write>(out: W, rows: &[BenchRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
