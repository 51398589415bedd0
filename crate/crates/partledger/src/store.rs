//! Append-only ledger file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! header:  magic "PLEDGER\0" | format u32 | params_len u32 | params | crc32 u32
//! record:  len u32 | crc32(payload) u32 | payload (encoded LedgerRecord)
//! ```
//!
//! On open every record is re-verified in order. A final record that is
//! incomplete or fails its checksum is a torn write and is cut off; a bad
//! record followed by further data is corruption and refuses to open.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use partledger_core::encoding::{Decode, Encode};
use partledger_core::group::PublicParams;
use partledger_core::ledger::{
    LedgerClient, LedgerError, LedgerRecord, LedgerState, Receipt, ReplayError,
};
use partledger_core::transactions::{LedgerView, TransactionBody, TxSignature};
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"PLEDGER\0";
pub const FORMAT_VERSION: u32 = 1;
const FRAME_HEADER_LEN: usize = 8;
/// Upper bound on one encoded record; larger frames are treated as damage.
pub const MAX_RECORD_LEN: u32 = 64 << 20;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("ledger locked by another process ({0})")]
    Locked(PathBuf),
    #[error("not a ledger file or unsupported format")]
    BadHeader,
    #[error("ledger file corrupt at byte {offset}")]
    Corrupt { offset: u64 },
    #[error("ledger replay failed: {0}")]
    Replay(#[from] ReplayError),
    #[error("ledger parameters differ from the requested profile")]
    ParamsMismatch,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Exclusive lock held for the lifetime of a [`FileLedger`]. The lock file
/// records the owner's PID so a lock left behind by a killed process can be
/// taken over.
#[derive(Debug)]
struct LockFile {
    path: PathBuf,
}

impl LockFile {
    fn acquire(ledger: &Path) -> Result<Self, StoreError> {
        let path = lock_path(ledger);
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    writeln!(f, "{}", std::process::id())?;
                    return Ok(LockFile { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    if lock_is_stale(&path) {
                        let _ = fs::remove_file(&path);
                        continue;
                    }
                    return Err(StoreError::Locked(path));
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(StoreError::Locked(path))
    }
}

impl Drop for LockFile {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn lock_path(ledger: &Path) -> PathBuf {
    let mut name = ledger.as_os_str().to_owned();
    name.push(".lock");
    PathBuf::from(name)
}

fn lock_is_stale(path: &Path) -> bool {
    let Ok(text) = fs::read_to_string(path) else {
        return false;
    };
    let Ok(pid) = text.trim().parse::<u32>() else {
        return false;
    };
    if pid == std::process::id() {
        return false;
    }
    // Only Linux exposes liveness cheaply; elsewhere a lock is never stale.
    cfg!(target_os = "linux")
        && Path::new("/proc").is_dir()
        && !Path::new(&format!("/proc/{pid}")).exists()
}

fn header_bytes(params: &PublicParams) -> Vec<u8> {
    let p = params.encode();
    let mut h = Vec::with_capacity(20 + p.len());
    h.extend_from_slice(MAGIC);
    h.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    h.extend_from_slice(&(p.len() as u32).to_le_bytes());
    h.extend_from_slice(&p);
    let crc = crc32fast::hash(&h);
    h.extend_from_slice(&crc.to_le_bytes());
    h
}

fn frame(payload: &[u8]) -> Vec<u8> {
    let mut f = Vec::with_capacity(FRAME_HEADER_LEN + payload.len());
    f.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    f.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    f.extend_from_slice(payload);
    f
}

/// Parses the header and returns the params and header length.
fn parse_header(bytes: &[u8]) -> Result<(PublicParams, usize), StoreError> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(StoreError::BadHeader);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let plen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    if version != FORMAT_VERSION || bytes.len() < 16 + plen + 4 {
        return Err(StoreError::BadHeader);
    }
    let end = 16 + plen;
    let crc = u32::from_le_bytes(bytes[end..end + 4].try_into().expect("4 bytes"));
    if crc32fast::hash(&bytes[..end]) != crc {
        return Err(StoreError::BadHeader);
    }
    let params = PublicParams::decode(&bytes[16..end]).map_err(|_| StoreError::BadHeader)?;
    Ok((params, end + 4))
}

/// Splits the record area into payloads. Returns the payloads and the
/// length of the intact prefix.
pub fn read_frames(bytes: &[u8], base_offset: u64) -> Result<(Vec<&[u8]>, usize), StoreError> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let rest = &bytes[pos..];
        if rest.len() < FRAME_HEADER_LEN {
            break;
        }
        let len = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes"));
        let crc = u32::from_le_bytes(rest[4..8].try_into().expect("4 bytes"));
        let end = FRAME_HEADER_LEN + len as usize;
        if len > MAX_RECORD_LEN || rest.len() < end {
            // runs past the end of the file: torn final write, or a damaged
            // length field that cannot be told apart from one
            break;
        }
        let payload = &rest[FRAME_HEADER_LEN..end];
        if crc32fast::hash(payload) != crc {
            if rest.len() == end {
                break;
            }
            return Err(StoreError::Corrupt {
                offset: base_offset + pos as u64,
            });
        }
        out.push(payload);
        pos += end;
    }
    Ok((out, pos))
}

/// A ledger persisted to a single append-only file.
pub struct FileLedger {
    path: PathBuf,
    file: File,
    state: LedgerState,
    _lock: LockFile,
    /// Bytes cut from a torn tail when the file was opened.
    recovered_bytes: u64,
}

impl std::fmt::Debug for FileLedger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FileLedger")
            .field("path", &self.path)
            .field("records", &self.state.records().len())
            .finish()
    }
}

impl FileLedger {
    /// Creates a new ledger file. Fails if it exists.
    pub fn create(path: &Path, params: PublicParams) -> Result<Self, StoreError> {
        let lock = LockFile::acquire(path)?;
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create_new(true)
            .open(path)?;
        file.write_all(&header_bytes(&params))?;
        file.sync_all()?;
        Ok(FileLedger {
            path: path.to_path_buf(),
            file,
            state: LedgerState::new(params),
            _lock: lock,
            recovered_bytes: 0,
        })
    }

    /// Opens and replays an existing ledger file.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let lock = LockFile::acquire(path)?;
        let mut file = OpenOptions::new().read(true).write(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (params, header_len) = parse_header(&bytes)?;
        let (payloads, intact) = read_frames(&bytes[header_len..], header_len as u64)?;
        let mut records = Vec::with_capacity(payloads.len());
        let mut offset = header_len;
        for p in payloads {
            records.push(LedgerRecord::decode(p).map_err(|_| StoreError::Corrupt {
                offset: offset as u64,
            })?);
            offset += FRAME_HEADER_LEN + p.len();
        }
        let state = LedgerState::replay(params, records)?;
        let good_len = (header_len + intact) as u64;
        let recovered_bytes = bytes.len() as u64 - good_len;
        if recovered_bytes > 0 {
            file.set_len(good_len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok(FileLedger {
            path: path.to_path_buf(),
            file,
            state,
            _lock: lock,
            recovered_bytes,
        })
    }

    /// Opens `path`, creating it with `params` if missing. An existing
    /// ledger must have been created with the same parameters.
    pub fn open_or_create(path: &Path, params: PublicParams) -> Result<Self, StoreError> {
        if path.exists() {
            let ledger = Self::open(path)?;
            if *ledger.state.params() != params {
                return Err(StoreError::ParamsMismatch);
            }
            Ok(ledger)
        } else {
            Self::create(path, params)
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn recovered_bytes(&self) -> u64 {
        self.recovered_bytes
    }

    pub fn snapshot(&self) -> LedgerState {
        self.state.clone()
    }

    fn append(&mut self, payload: &[u8]) -> io::Result<()> {
        let start = self.file.seek(SeekFrom::End(0))?;
        let result = self
            .file
            .write_all(&frame(payload))
            .and_then(|_| self.file.sync_data());
        if result.is_err() {
            // leave no partial frame behind
            let _ = self.file.set_len(start);
        }
        result
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl LedgerClient for FileLedger {
    fn state(&self) -> &LedgerState {
        &self.state
    }

    fn submit(&mut self, body: TransactionBody, sig: TxSignature) -> Result<Receipt, LedgerError> {
        let verified = self.state.check(&body, &sig)?;
        let staged = self.state.stage(body, sig, verified, now_ms())?;
        self.append(&staged.record().encode())
            .map_err(|e| LedgerError::Storage(e.to_string()))?;
        Ok(self.state.commit_staged(staged))
    }
}
