//! Command-line interface. Each command maps to one license or ledger
//! operation; failures exit nonzero with a reason code and leave the
//! ledger untouched.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use partledger_core::accounts::{AccountError, ItemId, LongTermKeys, PublicKeys};
use partledger_core::encoding::{Decode, Encode};
use partledger_core::group::{CryptoError, PublicParams, TypeDomain, TypeId, TypeTag};
use partledger_core::ledger::{
    EscrowRecord, LedgerClient, LedgerError, LedgerState, Receipt, ScanHit,
};
use partledger_core::license::{
    self, effective_properties, item_verification, proxy_prove, proxy_verify, DesignType,
    HistorySource, LicenseError, PartIdentity, PropertyType, ProxyProof, Session,
};
use partledger_core::transactions::{offer_leg, seal, LedgerView, Offer, PendingOutput, TxError};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};

use crate::bench;
use crate::store::{FileLedger, StoreError};
use crate::wallet::{
    address_hex, parse_address, part_identity, resolve_recipient, Role, Secret, WalletError,
    WalletFile,
};

pub const DEFAULT_LEDGER: &str = "partledger.ledger";
pub const LEDGER_ENV: &str = "PARTLEDGER_LEDGER";

#[derive(Debug, Parser)]
#[command(
    name = "partledger",
    version,
    about = "Confidential license and part life-cycle ledger"
)]
pub struct Cli {
    /// Ledger file.
    #[arg(long, global = true, env = LEDGER_ENV, default_value = DEFAULT_LEDGER)]
    pub ledger: PathBuf,
    /// Wallet file of the acting party.
    #[arg(long, global = true)]
    pub wallet: Option<PathBuf>,
    /// Parameter profile for a new ledger; must match an existing one.
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    /// Ring size for spends (defaults to the ledger's parameter).
    #[arg(long, global = true)]
    pub ring: Option<usize>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// k = 16, ring 8.
    Test,
    /// k = 64, ring 27.
    Full,
}

impl Profile {
    pub fn params(self) -> PublicParams {
        match self {
            Profile::Test => PublicParams::test_profile(),
            Profile::Full => PublicParams::full_profile(),
        }
    }
}

/// A token type on the command line: `design=<cad file>`,
/// `property=<label>`, `attribute=<label>` or `currency=<label>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeSpec {
    Design(PathBuf),
    Named(TypeDomain, String),
}

impl FromStr for TypeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (domain, value) = s
            .split_once('=')
            .ok_or_else(|| format!("expected <domain>=<value>, got {s:?}"))?;
        let domain = TypeDomain::parse(domain).map_err(|e| e.to_string())?;
        Ok(match domain {
            TypeDomain::Design => TypeSpec::Design(PathBuf::from(value)),
            d => TypeSpec::Named(d, value.to_string()),
        })
    }
}

impl TypeSpec {
    pub fn tag(&self) -> Result<TypeTag, CliError> {
        match self {
            TypeSpec::Design(path) => Ok(DesignType::from_file(&read_file(path)?).tag),
            TypeSpec::Named(domain, label) => Ok(TypeTag::from_preimage(*domain, label.as_bytes())),
        }
    }
}

/// Identifies a part either by a part wallet or by its eID.
#[derive(Debug, Clone, Args)]
pub struct PartArgs {
    /// Part wallet written by `item-id --wallet`.
    #[arg(long, conflicts_with_all = ["eid", "salt"])]
    pub part: Option<PathBuf>,
    /// eID as hex.
    #[arg(long)]
    pub eid: Option<String>,
    /// Proxy salt as hex.
    #[arg(long, requires = "eid")]
    pub salt: Option<String>,
}

impl PartArgs {
    fn identity(&self) -> Result<PartIdentity, CliError> {
        if let Some(path) = &self.part {
            return Ok(WalletFile::load(path)?.part()?);
        }
        let eid = self
            .eid
            .as_deref()
            .ok_or_else(|| CliError::usage("either --part or --eid is required"))?;
        Ok(part_identity(eid, self.salt.as_deref())?)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a wallet with fresh long-term keys.
    Keygen {
        #[arg(long, value_enum)]
        role: Role,
        #[arg(long, default_value = "")]
        label: String,
    },
    /// Print the address (public keys) of a wallet.
    Address,
    /// Generate a random 128-bit eID; with --wallet, save a part wallet.
    ItemId {
        /// Also draw a 128-bit proxy salt.
        #[arg(long)]
        salt: bool,
    },
    /// Register a new token type with a hidden supply.
    IssueToken {
        #[arg(long = "type")]
        ty: TypeSpec,
        #[arg(long)]
        amount: u64,
    },
    /// Register a CAD file as a design type.
    IssueDesign {
        #[arg(long)]
        cad: PathBuf,
        /// Defaults to the maximum supply.
        #[arg(long)]
        amount: Option<u64>,
    },
    /// Send tokens from one of the wallet's outputs.
    Transfer {
        /// Address or wallet file of the recipient.
        #[arg(long)]
        to: String,
        #[arg(long = "type")]
        ty: TypeSpec,
        #[arg(long)]
        amount: u64,
    },
    /// Atomic exchange built from two offers.
    #[command(subcommand)]
    Swap(SwapCommand),
    /// Bind one license token of a design to a part.
    RegisterItem {
        #[command(flatten)]
        part: PartArgs,
        #[arg(long)]
        cad: PathBuf,
    },
    /// Issue property (certificate) tokens.
    IssueCert {
        #[arg(long)]
        label: String,
        #[arg(long)]
        amount: u64,
        /// Split the supply into this many outputs afterwards.
        #[arg(long)]
        pool_width: Option<usize>,
    },
    /// Send property tokens to a part.
    Attest {
        #[command(flatten)]
        part: PartArgs,
        #[arg(long)]
        label: String,
        #[arg(long, default_value_t = 1)]
        amount: u64,
        /// Send the revocation token "¬<label>" instead.
        #[arg(long)]
        negate: bool,
    },
    /// List every token a part has received and evaluate its properties.
    VerifyItem {
        #[command(flatten)]
        part: PartArgs,
        /// Property labels to evaluate.
        #[arg(long = "label")]
        labels: Vec<String>,
        /// CAD files to name design tokens.
        #[arg(long = "cad")]
        cads: Vec<PathBuf>,
    },
    /// Put transient attribute tokens in a part's secondary account.
    ApplyTransient {
        #[command(flatten)]
        part: PartArgs,
        #[arg(long)]
        attribute: String,
        #[arg(long, default_value_t = 1)]
        amount: u64,
    },
    /// Claim transient tokens using the part's eID.
    RecoverTransient {
        #[command(flatten)]
        part: PartArgs,
        #[arg(long)]
        attribute: String,
        #[arg(long, default_value_t = 1)]
        amount: u64,
        #[arg(long)]
        to: String,
    },
    /// Designated-verifier proof that a part holds tokens of a type.
    ProxyProve {
        #[command(flatten)]
        part: PartArgs,
        #[arg(long = "type")]
        ty: TypeSpec,
        /// Address or wallet file of the verifier.
        #[arg(long)]
        verifier: String,
        /// Number of accounts to hide the part's account among.
        #[arg(long, default_value_t = 8)]
        anonymity: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a proxy proof with the verifier's wallet.
    ProxyVerify {
        #[arg(long)]
        proof: PathBuf,
    },
    /// List outputs received by the wallet (or an escrow view key).
    Scan {
        #[arg(long)]
        escrow: Option<PathBuf>,
    },
    /// Write the wallet's view key for an escrow agent.
    ExportViewKey {
        #[arg(long)]
        out: PathBuf,
    },
    /// Inspect the ledger file
    #[command(subcommand)]
    Ledger(LedgerCommand),
    /// Run a scenario file.
    Scenario {
        file: PathBuf,
        /// Working directory for wallets and the ledger (default: a new
        /// directory under the system temp dir).
        #[arg(long)]
        workdir: Option<PathBuf>,
    },
    /// Time proof generation, verification and scanning
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Subcommand)]
pub enum SwapCommand {
    /// Create this party's leg: give one type, receive another.
    Offer {
        #[arg(long)]
        give: TypeSpec,
        #[arg(long)]
        give_amount: u64,
        #[arg(long)]
        want: TypeSpec,
        #[arg(long)]
        want_amount: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine offers into one transaction and submit it.
    Seal {
        #[arg(long = "offer", required = true)]
        offers: Vec<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum LedgerCommand {
    /// Record, output and type counts and the state digest.
    Stats,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Pre-Spend and Spend generation time for m inputs and m outputs.
    Generate {
        #[arg(long, default_value_t = 1)]
        min_io: usize,
        #[arg(long, default_value_t = 8)]
        max_io: usize,
        #[arg(long, default_value_t = bench::MIN_REPETITIONS)]
        repetitions: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// 2-in/2-out verification throughput per thread count.
    Verify {
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 4])]
        threads: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        verifications: usize,
        #[arg(long, default_value_t = bench::MIN_REPETITIONS)]
        repetitions: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Output scanning throughput.
    Scan {
        #[arg(long, default_value_t = 10_000)]
        outputs: usize,
        #[arg(long, default_value_t = bench::MIN_REPETITIONS)]
        repetitions: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

// ---------------------------------------------------------------------------
// Errors and exit codes

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: String,
    pub exit: i32,
    pub message: String,
}

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_REJECTED: i32 = 3;
pub const EXIT_WALLET: i32 = 4;
pub const EXIT_LOCKED: i32 = 5;
pub const EXIT_STORAGE: i32 = 6;
pub const EXIT_REFUSED: i32 = 7;
pub const EXIT_INVALID_PROOF: i32 = 8;

impl CliError {
    fn new(code: &str, exit: i32, message: impl Into<String>) -> Self {
        CliError {
            code: code.into(),
            exit,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("malformed-arguments", EXIT_USAGE, message)
    }

    fn refused(code: &str, message: impl Into<String>) -> Self {
        Self::new(code, EXIT_REFUSED, message)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

impl From<WalletError> for CliError {
    fn from(e: WalletError) -> Self {
        let code = match &e {
            WalletError::Missing(_) => "wallet-missing",
            WalletError::Exists(_) => "wallet-exists",
            WalletError::NotAccount => "no-spend-key",
            WalletError::Account(AccountError::ItemIdTooShort(_)) => {
                return CliError::usage(e.to_string())
            }
            _ => "wallet-invalid",
        };
        CliError::new(code, EXIT_WALLET, e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match &e {
            StoreError::Locked(_) => CliError::new("ledger-locked", EXIT_LOCKED, e.to_string()),
            StoreError::ParamsMismatch => {
                CliError::new("profile-mismatch", EXIT_USAGE, e.to_string())
            }
            StoreError::BadHeader | StoreError::Corrupt { .. } | StoreError::Replay(_) => {
                CliError::new("ledger-corrupt", EXIT_STORAGE, e.to_string())
            }
            StoreError::Io(_) => CliError::new("storage", EXIT_STORAGE, e.to_string()),
        }
    }
}

impl From<LedgerError> for CliError {
    fn from(e: LedgerError) -> Self {
        match &e {
            LedgerError::Rejected(r) => {
                CliError::new(r.reason.code(), EXIT_REJECTED, e.to_string())
            }
            LedgerError::Storage(_) => CliError::new("storage", EXIT_STORAGE, e.to_string()),
        }
    }
}

impl From<TxError> for CliError {
    fn from(e: TxError) -> Self {
        let code = match &e {
            TxError::ConservationViolated => "conservation-violated",
            TxError::RingTooSmall(_) | TxError::TooLarge => return CliError::usage(e.to_string()),
            TxError::Crypto(CryptoError::AmountOutOfRange { .. }) => "amount-out-of-range",
            TxError::UnregisteredType => "unregistered-type",
            _ => "build-failed",
        };
        CliError::refused(code, e.to_string())
    }
}

impl From<LicenseError> for CliError {
    fn from(e: LicenseError) -> Self {
        match e {
            LicenseError::Ledger(l) => l.into(),
            LicenseError::Tx(t) => t.into(),
            LicenseError::TypeMismatch => CliError::refused("type-mismatch", e.to_string()),
            LicenseError::InsufficientBalance { .. } => {
                CliError::refused("insufficient-balance", e.to_string())
            }
            LicenseError::NothingToSpend => CliError::refused("nothing-to-spend", e.to_string()),
            LicenseError::NotViewable => CliError::refused("not-viewable", e.to_string()),
            LicenseError::EmptyPool => CliError::usage(e.to_string()),
            LicenseError::Account(AccountError::NoSpendKey) => {
                CliError::refused("no-spend-key", e.to_string())
            }
            LicenseError::Account(_) => CliError::usage(e.to_string()),
            LicenseError::Crypto(CryptoError::AmountOutOfRange { .. }) => {
                CliError::refused("amount-out-of-range", e.to_string())
            }
            LicenseError::Crypto(_) => CliError::refused("build-failed", e.to_string()),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_new(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::new("storage", EXIT_STORAGE, format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Output

/// Result of a command: JSON for `--json`, text otherwise.
#[derive(Debug, Clone)]
pub struct Output {
    pub json: Value,
    pub text: String,
}

impl Output {
    fn new(json: Value, text: impl Into<String>) -> Self {
        Output {
            json,
            text: text.into(),
        }
    }

    pub fn render(&self, as_json: bool) -> String {
        if as_json {
            self.json.to_string()
        } else {
            self.text.clone()
        }
    }
}

fn receipt_json(r: &Receipt) -> Value {
    json!({
        "seq": r.seq,
        "timestamp_ms": r.timestamp_ms,
        "first_output": r.first_output,
        "output_count": r.output_count,
    })
}

fn receipt_text(what: &str, r: &Receipt) -> String {
    format!(
        "{what}: record {} at {} ms, outputs {}..{}",
        r.seq,
        r.timestamp_ms,
        r.first_output,
        r.first_output + r.output_count
    )
}

fn type_json(ty: &TypeId, name: Option<&str>) -> Value {
    json!({
        "domain": ty.domain.label(),
        "id": hex::encode(ty.preimage_hash),
        "name": name,
    })
}

fn type_text(ty: &TypeId, name: Option<&str>) -> String {
    match name {
        Some(n) => format!("{}:{n}", ty.domain.label()),
        None => format!(
            "{}:{}",
            ty.domain.label(),
            &hex::encode(ty.preimage_hash)[..16]
        ),
    }
}

// ---------------------------------------------------------------------------
// Context

struct Context<'a> {
    cli: &'a Cli,
}

type FileSession = Session<FileLedger, ChaCha20Rng>;

impl Context<'_> {
    fn wallet(&self) -> Result<WalletFile, CliError> {
        let path =
            self.cli.wallet.as_ref().ok_or_else(|| {
                CliError::new("wallet-missing", EXIT_WALLET, "--wallet is required")
            })?;
        Ok(WalletFile::load(path)?)
    }

    fn spend_keys(&self) -> Result<LongTermKeys, CliError> {
        Ok(self.wallet()?.spend_keys()?)
    }

    fn open_ledger(&self) -> Result<FileLedger, CliError> {
        let path = &self.cli.ledger;
        let ledger = if path.exists() {
            FileLedger::open(path)?
        } else {
            FileLedger::create(path, self.cli.profile.unwrap_or(Profile::Test).params())?
        };
        if let Some(p) = self.cli.profile {
            if *ledger.state().params() != p.params() {
                return Err(StoreError::ParamsMismatch.into());
            }
        }
        Ok(ledger)
    }

    /// Read-only view; a missing ledger reads as empty.
    fn read_state(&self) -> Result<LedgerState, CliError> {
        if self.cli.ledger.exists() {
            Ok(FileLedger::open(&self.cli.ledger)?.snapshot())
        } else {
            Ok(LedgerState::new(
                self.cli.profile.unwrap_or(Profile::Test).params(),
            ))
        }
    }

    fn session(&self) -> Result<FileSession, CliError> {
        let ledger = self.open_ledger()?;
        let ring = self.cli.ring.unwrap_or(ledger.state().params().ring_size);
        Ok(Session::new(ledger, ring, ChaCha20Rng::from_entropy()))
    }
}

/// Parses and runs one invocation.
pub fn run(cli: &Cli) -> Result<Output, CliError> {
    let ctx = Context { cli };
    match &cli.command {
        Command::Keygen { role, label } => keygen(&ctx, *role, label),
        Command::Address => {
            let w = ctx.wallet()?;
            let addr = w.address()?;
            Ok(Output::new(
                json!({ "address": addr, "role": w.role.to_string() }),
                addr,
            ))
        }
        Command::ItemId { salt } => item_id(&ctx, *salt),
        Command::IssueToken { ty, amount } => {
            let keys = ctx.spend_keys()?;
            let tag = ty.tag()?;
            let mut s = ctx.session()?;
            let r = s.issue_token(*amount, tag, &keys.public)?;
            Ok(Output::new(receipt_json(&r), receipt_text("issued", &r)))
        }
        Command::IssueDesign { cad, amount } => {
            let keys = ctx.spend_keys()?;
            let file = read_file(cad)?;
            let mut s = ctx.session()?;
            let (design, r) = s.issue_design(*amount, &file, &keys.public)?;
            let mut j = receipt_json(&r);
            j["design"] = json!(hex::encode(design.file_digest));
            let text = format!(
                "{}\ndesign {}",
                receipt_text("design issued", &r),
                hex::encode(design.file_digest)
            );
            Ok(Output::new(j, text))
        }
        Command::Transfer { to, ty, amount } => {
            let keys = ctx.spend_keys()?;
            let to = resolve_recipient(to)?;
            let tag = ty.tag()?;
            let mut s = ctx.session()?;
            let source = s.find_source(&keys, &tag, *amount)?;
            let r = s.transfer_token(*amount, &tag, &source, &keys, &to)?;
            Ok(Output::new(
                receipt_json(&r),
                receipt_text("transferred", &r),
            ))
        }
        Command::Swap(cmd) => swap(&ctx, cmd),
        Command::RegisterItem { part, cad } => {
            let keys = ctx.spend_keys()?;
            let part = part.identity()?;
            let design = DesignType::from_file(&read_file(cad)?);
            let mut s = ctx.session()?;
            let source = s.find_source(&keys, &design.tag, 1)?;
            let r = s.register_item(&part, &design, &source, &keys)?;
            Ok(Output::new(
                receipt_json(&r),
                receipt_text("registered", &r),
            ))
        }
        Command::IssueCert {
            label,
            amount,
            pool_width,
        } => {
            let keys = ctx.spend_keys()?;
            let mut s = ctx.session()?;
            let (property, r) = s.issue_certificate_tokens(*amount, label, &keys.public)?;
            let mut text = receipt_text("certificate issued", &r);
            let mut j = receipt_json(&r);
            if let Some(w) = pool_width {
                let source = s.find_source(&keys, &property.tag, 0)?;
                let split = s.split_pool(&source, &keys, *w)?;
                text.push('\n');
                text.push_str(&receipt_text("pool split", &split));
                j["pool"] = receipt_json(&split);
            }
            Ok(Output::new(j, text))
        }
        Command::Attest {
            part,
            label,
            amount,
            negate,
        } => {
            let keys = ctx.spend_keys()?;
            let part = part.identity()?;
            let mut property = PropertyType::new(label);
            if *negate {
                property = property.negation();
            }
            let mut s = ctx.session()?;
            let source = s.find_source(&keys, &property.tag, *amount)?;
            let r = s.attest_post_processing(&part, &property, Some(*amount), &source, &keys)?;
            Ok(Output::new(receipt_json(&r), receipt_text("attested", &r)))
        }
        Command::VerifyItem { part, labels, cads } => verify_item(&ctx, part, labels, cads),
        Command::ApplyTransient {
            part,
            attribute,
            amount,
        } => {
            let keys = ctx.spend_keys()?;
            let part = part.identity()?;
            let ty = license::attribute_type(attribute);
            let mut s = ctx.session()?;
            let source = s.find_source(&keys, &ty, *amount)?;
            let r = s.apply_transient(&part, &ty, *amount, &source, &keys)?;
            Ok(Output::new(
                receipt_json(&r),
                receipt_text("transient applied", &r),
            ))
        }
        Command::RecoverTransient {
            part,
            attribute,
            amount,
            to,
        } => {
            let part = part.identity()?;
            let to = resolve_recipient(to)?;
            let ty = license::attribute_type(attribute);
            let mut s = ctx.session()?;
            let r = s.recover_transient(&part.eid, &ty, *amount, &to)?;
            Ok(Output::new(
                receipt_json(&r),
                receipt_text("transient recovered", &r),
            ))
        }
        Command::ProxyProve {
            part,
            ty,
            verifier,
            anonymity,
            out,
        } => proxy_prove_cmd(&ctx, part, ty, verifier, *anonymity, out),
        Command::ProxyVerify { proof } => {
            let verifier = ctx.wallet()?.keys()?;
            let text = fs::read_to_string(proof)
                .map_err(|e| CliError::usage(format!("{}: {e}", proof.display())))?;
            let bytes =
                hex::decode(text.trim()).map_err(|e| CliError::usage(format!("proof: {e}")))?;
            let proof =
                ProxyProof::decode(&bytes).map_err(|e| CliError::usage(format!("proof: {e}")))?;
            let state = ctx.read_state()?;
            if proxy_verify(&state, &verifier.public, &proof) {
                let j = json!({ "valid": true, "type": type_json(&proof.ty, None), "amount": proof.amount });
                Ok(Output::new(
                    j,
                    format!("valid: {} of {}", proof.amount, type_text(&proof.ty, None)),
                ))
            } else {
                Err(CliError::new(
                    "invalid-proof",
                    EXIT_INVALID_PROOF,
                    "proof does not verify",
                ))
            }
        }
        Command::Scan { escrow } => scan(&ctx, escrow.as_deref()),
        Command::ExportViewKey { out } => {
            let keys = ctx.wallet()?.keys()?;
            write_new(out, &hex::encode(EscrowRecord::export(&keys).encode()))?;
            Ok(Output::new(
                json!({ "written": out }),
                format!("view key written to {}", out.display()),
            ))
        }
        Command::Ledger(LedgerCommand::Stats) => {
            let state = ctx.read_state()?;
            let st = state.stats();
            let digest = hex::encode(state.state_digest());
            let j = json!({
                "records": st.records,
                "outputs": st.outputs,
                "unspent": st.unspent,
                "spent": st.spent,
                "types": st.types,
                "range_bits": state.params().range_bits,
                "ring_size": state.params().ring_size,
                "digest": digest,
            });
            let text = format!(
                "records {}\noutputs {} (unspent {}, spent {})\ntypes {}\ndigest {digest}",
                st.records, st.outputs, st.unspent, st.spent, st.types
            );
            Ok(Output::new(j, text))
        }
        Command::Scenario { file, workdir } => {
            crate::scenario::run_file(file, workdir.as_deref(), cli)
        }
        Command::Bench(cmd) => bench_cmd(&ctx, cmd),
    }
}

fn keygen(ctx: &Context<'_>, role: Role, label: &str) -> Result<Output, CliError> {
    let path = ctx
        .cli
        .wallet
        .as_ref()
        .ok_or_else(|| CliError::usage("--wallet is required"))?;
    let w = WalletFile::generate(role, label, &mut ChaCha20Rng::from_entropy());
    w.save_new(path)?;
    let addr = w.address()?;
    Ok(Output::new(
        json!({ "wallet": path, "role": role.to_string(), "address": addr }),
        format!(
            "{role} wallet written to {}\naddress {addr}",
            path.display()
        ),
    ))
}

fn item_id(ctx: &Context<'_>, with_salt: bool) -> Result<Output, CliError> {
    let mut rng = ChaCha20Rng::from_entropy();
    let eid = ItemId::random(&mut rng);
    let salt = with_salt.then(|| {
        let mut s = [0u8; 16];
        rng.fill_bytes(&mut s);
        hex::encode(s)
    });
    let eid_hex = hex::encode(eid.as_bytes());
    if let Some(path) = &ctx.cli.wallet {
        WalletFile {
            format: crate::wallet::WALLET_FORMAT,
            role: Role::Client,
            label: "part".into(),
            secret: Secret::Item {
                eid: eid_hex.clone(),
                salt: salt.clone(),
            },
        }
        .save_new(path)?;
    }
    let mut text = format!("eid {eid_hex}");
    if let Some(s) = &salt {
        let _ = write!(text, "\nsalt {s}");
    }
    Ok(Output::new(json!({ "eid": eid_hex, "salt": salt }), text))
}

fn swap(ctx: &Context<'_>, cmd: &SwapCommand) -> Result<Output, CliError> {
    match cmd {
        SwapCommand::Offer {
            give,
            give_amount,
            want,
            want_amount,
            out,
        } => {
            let keys = ctx.spend_keys()?;
            let (give, want) = (give.tag()?, want.tag()?);
            let mut s = ctx.session()?;
            let source = s.find_source(&keys, &give, *give_amount)?;
            let input = source.spend_input(&keys).map_err(LicenseError::from)?;
            let params = *s.state().params();
            let mut outputs =
                vec![
                    PendingOutput::new(&params, &keys.public, &want, *want_amount, 0, &mut s.rng)
                        .map_err(LicenseError::from)?,
                ];
            let change = source.output.amount - give_amount;
            if change > 0 {
                outputs.push(
                    PendingOutput::new(&params, &keys.public, &give, change, 1, &mut s.rng)
                        .map_err(LicenseError::from)?,
                );
            }
            let offer = offer_leg(
                s.ledger.state(),
                &[input],
                &outputs,
                s.ring_size,
                &mut s.rng,
            )?;
            write_new(out, &hex::encode(offer.encode()))?;
            Ok(Output::new(
                json!({ "offer": out, "binding": hex::encode(offer.binding_digest) }),
                format!("offer written to {}", out.display()),
            ))
        }
        SwapCommand::Seal { offers } => {
            let parsed = offers
                .iter()
                .map(|p| {
                    let text = fs::read_to_string(p)
                        .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
                    let bytes = hex::decode(text.trim())
                        .map_err(|e| CliError::usage(format!("offer: {e}")))?;
                    Offer::decode(&bytes).map_err(|e| CliError::usage(format!("offer: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut s = ctx.session()?;
            let (body, sig) = seal(&parsed, &mut s.rng)?;
            let r = s.ledger.submit(body, sig)?;
            Ok(Output::new(
                receipt_json(&r),
                receipt_text("swap sealed", &r),
            ))
        }
    }
}

fn verify_item(
    ctx: &Context<'_>,
    part: &PartArgs,
    labels: &[String],
    cads: &[PathBuf],
) -> Result<Output, CliError> {
    let part = part.identity()?;
    let state = ctx.read_state()?;
    let history = item_verification(&state, &part);
    let catalog: Vec<PropertyType> = labels.iter().map(|l| PropertyType::new(l)).collect();
    let mut names: std::collections::BTreeMap<TypeId, String> = std::collections::BTreeMap::new();
    for p in &catalog {
        names.insert(p.tag.id(), p.label.clone());
        let n = p.negation();
        names.insert(n.tag.id(), n.label);
    }
    for cad in cads {
        names.insert(
            DesignType::from_file(&read_file(cad)?).tag.id(),
            cad.display().to_string(),
        );
    }
    let mut text = String::new();
    let mut entries = Vec::new();
    for e in &history {
        let id = e.ty.id();
        let name = names.get(&id).map(String::as_str);
        let source = match e.source {
            HistorySource::Permanent => "permanent",
            HistorySource::Transient => "transient",
        };
        entries.push(json!({
            "ledger_index": e.ledger_index,
            "source": source,
            "type": type_json(&id, name),
            "amount": e.amount,
            "received_ms": e.received_ms,
            "spent_ms": e.spent_ms,
        }));
        let _ = write!(
            text,
            "#{} {source} {} amount {} received {}",
            e.ledger_index,
            type_text(&id, name),
            e.amount,
            e.received_ms
        );
        if let Some(t) = e.spent_ms {
            let _ = write!(text, " spent {t}");
        }
        text.push('\n');
    }
    let props = effective_properties(&history, &catalog);
    let mut pj = serde_json::Map::new();
    for (label, st) in &props {
        pj.insert(
            label.clone(),
            json!({ "positive": st.positive, "negated": st.negated, "valid": st.valid, "anomalous": st.anomalous }),
        );
        let verdict = match (st.valid, st.anomalous) {
            (true, _) => "valid",
            (false, true) => "invalid (revocation without property)",
            (false, false) => "invalid (revoked)",
        };
        let _ = writeln!(text, "property {label}: {verdict}");
    }
    if history.is_empty() {
        text.push_str("no tokens\n");
    }
    Ok(Output::new(
        json!({ "entries": entries, "properties": pj }),
        text.trim_end().to_string(),
    ))
}

fn proxy_prove_cmd(
    ctx: &Context<'_>,
    part: &PartArgs,
    ty: &TypeSpec,
    verifier: &str,
    anonymity: usize,
    out: &Path,
) -> Result<Output, CliError> {
    let part = part.identity()?;
    let tag = ty.tag()?;
    let verifier: PublicKeys = resolve_recipient(verifier)?;
    let state = ctx.read_state()?;
    let target = state
        .scan(&part.receive_only.view)
        .into_iter()
        .find(|h| h.output.ty == tag)
        .ok_or_else(|| {
            CliError::refused("nothing-to-prove", "the part holds no token of this type")
        })?;
    let mut rng = ChaCha20Rng::from_entropy();
    let n = state.output_count();
    let want = anonymity
        .saturating_sub(1)
        .min(n.saturating_sub(1) as usize);
    let mut ring = std::collections::BTreeSet::new();
    while ring.len() < want {
        let i = rng.next_u64() % n;
        if i != target.ledger_index {
            ring.insert(i);
        }
    }
    let ring: Vec<u64> = ring.into_iter().collect();
    let proof = proxy_prove(
        &state,
        &part,
        target.ledger_index,
        &ring,
        &verifier,
        &mut rng,
    )
    .map_err(|e| CliError::refused("build-failed", e.to_string()))?;
    write_new(out, &hex::encode(proof.encode()))?;
    Ok(Output::new(
        json!({ "proof": out, "ring": proof.ring.len(), "amount": proof.amount }),
        format!(
            "proof over {} accounts written to {}",
            proof.ring.len(),
            out.display()
        ),
    ))
}

fn hit_json(h: &ScanHit) -> Value {
    json!({
        "ledger_index": h.ledger_index,
        "type": type_json(&h.output.ty.id(), None),
        "amount": h.output.amount,
        "received_ms": h.received_ms,
        "spent": h.spent.map(|s| matches!(s, partledger_core::ledger::SpentInfo::Spent { .. })),
    })
}

fn scan(ctx: &Context<'_>, escrow: Option<&Path>) -> Result<Output, CliError> {
    let state = ctx.read_state()?;
    let hits = match escrow {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            let bytes =
                hex::decode(text.trim()).map_err(|e| CliError::usage(format!("view key: {e}")))?;
            EscrowRecord::decode(&bytes)
                .map_err(|e| CliError::usage(format!("view key: {e}")))?
                .scan(&state)
        }
        None => {
            let keys = ctx.wallet()?.keys()?;
            if keys.is_receive_only() {
                state.scan(&keys.view)
            } else {
                state.scan_keys(&keys)
            }
        }
    };
    let mut text = String::new();
    for h in &hits {
        let status = match h.spent {
            Some(partledger_core::ledger::SpentInfo::Spent { .. }) => "spent",
            Some(_) => "unspent",
            None => "unknown",
        };
        let _ = writeln!(
            text,
            "#{} {} amount {} {status}",
            h.ledger_index,
            type_text(&h.output.ty.id(), None),
            h.output.amount
        );
    }
    if hits.is_empty() {
        text.push_str("no outputs");
    }
    Ok(Output::new(
        json!({ "hits": hits.iter().map(hit_json).collect::<Vec<_>>() }),
        text.trim_end().to_string(),
    ))
}

fn bench_cmd(ctx: &Context<'_>, cmd: &BenchCommand) -> Result<Output, CliError> {
    let params = ctx.cli.profile.unwrap_or(Profile::Test).params();
    let ring = ctx.cli.ring.unwrap_or(params.ring_size);
    let seed = rand::random::<u64>();
    let (rows, csv_path) = match cmd {
        BenchCommand::Generate {
            min_io,
            max_io,
            repetitions,
            csv,
        } => {
            if *min_io == 0 || min_io > max_io {
                return Err(CliError::usage("need 1 <= min-io <= max-io"));
            }
            (
                bench::generate(params, *min_io..=*max_io, ring, *repetitions, seed),
                csv,
            )
        }
        BenchCommand::Verify {
            threads,
            verifications,
            repetitions,
            csv,
        } => (
            bench::verify_throughput(params, ring, threads, *verifications, *repetitions, seed),
            csv,
        ),
        BenchCommand::Scan {
            outputs,
            repetitions,
            csv,
        } => (
            vec![bench::scan_throughput(params, *outputs, *repetitions, seed)],
            csv,
        ),
    };
    let mut buf = Vec::new();
    bench::write_csv(&mut buf, &rows)
        .map_err(|e| CliError::new("storage", EXIT_STORAGE, e.to_string()))?;
    let text = String::from_utf8(buf).expect("csv is utf-8");
    if let Some(path) = csv_path {
        write_new(path, &text)?;
    }
    Ok(Output::new(
        serde_json::to_value(&rows).expect("rows serialize"),
        text.trim_end().to_string(),
    ))
}

/// Address helper for tests and scripts.
pub fn wallet_address(path: &Path) -> Result<String, CliError> {
    Ok(address_hex(&WalletFile::load(path)?.keys()?.public))
}

/// Parses a hex address, mapping errors to CLI errors.
pub fn address(s: &str) -> Result<PublicKeys, CliError> {
    Ok(parse_address(s)?)
}
