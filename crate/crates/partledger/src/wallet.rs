//! JSON wallet files.
//!
//! A wallet holds either a 32-byte account seed (keys via `accGen`) or a
//! part's eID with an optional proxy salt. Secrets are hex strings and are
//! never printed; files are created with owner-only permissions.

use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use partledger_core::accounts::{
    acc_gen, acc_gen_random, AccountError, ItemId, LongTermKeys, PublicKeys,
};
use partledger_core::encoding::{Decode, Encode};
use partledger_core::license::PartIdentity;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const WALLET_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Designer,
    Client,
    Printer,
    Certifier,
    Verifier,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Designer => "designer",
            Role::Client => "client",
            Role::Printer => "printer",
            Role::Certifier => "certifier",
            Role::Verifier => "verifier",
        };
        f.write_str(s)
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Secret {
    Account {
        seed: String,
    },
    Item {
        eid: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        salt: Option<String>,
    },
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Secret::Account { .. } => f.write_str("Account(..)"),
            Secret::Item { .. } => f.write_str("Item(..)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalletFile {
    pub format: u32,
    pub role: Role,
    pub label: String,
    pub secret: Secret,
}

#[derive(Debug, Error)]
pub enum WalletError {
    #[error("wallet not found: {0}")]
    Missing(String),
    #[error("wallet already exists: {0}")]
    Exists(String),
    #[error("invalid wallet file: {0}")]
    Invalid(String),
    #[error("wallet holds a part identity, not spendable keys")]
    NotAccount,
    #[error(transparent)]
    Account(#[from] AccountError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl WalletFile {
    pub fn generate<R: RngCore + CryptoRng>(role: Role, label: &str, rng: &mut R) -> Self {
        let (_, seed) = acc_gen_random(rng);
        WalletFile {
            format: WALLET_FORMAT,
            role,
            label: label.to_string(),
            secret: Secret::Account {
                seed: hex::encode(seed),
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self, WalletError> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => WalletError::Missing(path.display().to_string()),
            _ => WalletError::Io(e),
        })?;
        let w: WalletFile =
            serde_json::from_str(&text).map_err(|e| WalletError::Invalid(e.to_string()))?;
        if w.format != WALLET_FORMAT {
            return Err(WalletError::Invalid(format!(
                "unsupported format {}",
                w.format
            )));
        }
        w.keys()?;
        Ok(w)
    }

    /// Writes a new wallet file readable only by its owner.
    pub fn save_new(&self, path: &Path) -> Result<(), WalletError> {
        let mut opts = OpenOptions::new();
        opts.write(true).create_new(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut f = opts.open(path).map_err(|e| match e.kind() {
            io::ErrorKind::AlreadyExists => WalletError::Exists(path.display().to_string()),
            _ => WalletError::Io(e),
        })?;
        let json =
            serde_json::to_string_pretty(self).map_err(|e| WalletError::Invalid(e.to_string()))?;
        f.write_all(json.as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
        Ok(())
    }

    /// Long-term keys. For a part wallet these are the receive-only keys.
    pub fn keys(&self) -> Result<LongTermKeys, WalletError> {
        match &self.secret {
            Secret::Account { seed } => {
                let seed = decode_hex(seed)?;
                if seed.len() != 32 {
                    return Err(WalletError::Invalid("seed must be 32 bytes".into()));
                }
                Ok(acc_gen(&seed))
            }
            Secret::Item { .. } => Ok(self.part()?.receive_only),
        }
    }

    /// Keys able to spend; fails for part wallets.
    pub fn spend_keys(&self) -> Result<LongTermKeys, WalletError> {
        match self.secret {
            Secret::Account { .. } => self.keys(),
            Secret::Item { .. } => Err(WalletError::NotAccount),
        }
    }

    pub fn part(&self) -> Result<PartIdentity, WalletError> {
        match &self.secret {
            Secret::Item { eid, salt } => part_identity(eid, salt.as_deref()),
            Secret::Account { .. } => Err(WalletError::Invalid("not a part wallet".into())),
        }
    }

    pub fn address(&self) -> Result<String, WalletError> {
        Ok(address_hex(&self.keys()?.public))
    }
}

fn decode_hex(s: &str) -> Result<Vec<u8>, WalletError> {
    hex::decode(s.trim()).map_err(|e| WalletError::Invalid(e.to_string()))
}

pub fn part_identity(eid_hex: &str, salt_hex: Option<&str>) -> Result<PartIdentity, WalletError> {
    let eid = ItemId::new(&decode_hex(eid_hex)?)?;
    Ok(match salt_hex {
        Some(s) => PartIdentity::with_proxy_salt(eid, &decode_hex(s)?)?,
        None => PartIdentity::new(eid)?,
    })
}

pub fn address_hex(keys: &PublicKeys) -> String {
    hex::encode(keys.encode())
}

pub fn parse_address(s: &str) -> Result<PublicKeys, WalletError> {
    PublicKeys::decode(&decode_hex(s)?).map_err(|e| WalletError::Invalid(format!("address: {e}")))
}

/// Accepts an address or the path of a wallet file.
pub fn resolve_recipient(s: &str) -> Result<PublicKeys, WalletError> {
    let path = Path::new(s);
    if path.exists() {
        return Ok(WalletFile::load(path)?.keys()?.public);
    }
    parse_address(s)
}
