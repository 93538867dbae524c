//! One-way time-key evolution and an emulated key vault.
//!
//! Window keys form a SHA-256 hash chain `K_t = H(K_{t-1})`. The vault holds
//! the whole history and polices reads by role: the generation provider sees
//! only the current window's key, the supervising authority may read any
//! reached window. Every access attempt is appended to the audit log.
//!
//! Keys are pulled through [`KeyVault::read_key`]; there is no push channel.

use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A 32-byte window key.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeKey([u8; 32]);

impl TimeKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| Error::Shape {
            what: "time key",
            expected: 32,
            actual: bytes.len(),
        })?;
        Ok(Self(arr))
    }

    /// Root key derived from an explicit seed value.
    pub fn from_seed(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"timemark/root-key");
        h.update(seed.to_be_bytes());
        Self(h.finalize().into())
    }

    /// Root key from operating-system entropy.
    pub fn random() -> Self {
        Self(rand::random())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::InvalidInput(format!("bad key hex: {e}")))?;
        Self::from_slice(&bytes)
    }

    /// SHA-256 of the key, safe to publish as a fingerprint.
    pub fn digest_hex(&self) -> String {
        hex::encode(Sha256::digest(self.0))
    }
}

impl fmt::Debug for TimeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TimeKey(#{})", &self.digest_hex()[..12])
    }
}

/// K_t = SHA-256(K_{t-1}).
pub fn evolve(key: &TimeKey) -> TimeKey {
    TimeKey(Sha256::digest(key.0).into())
}

/// Key of window `index` reached from the root by repeated evolution.
pub fn derive_key(root: &TimeKey, index: u64) -> TimeKey {
    (0..index).fold(*root, |k, _| evolve(&k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    pub index: u64,
    pub granularity_seconds: u64,
}

impl TimeWindow {
    pub fn new(index: u64, granularity_seconds: u64) -> Result<Self> {
        if granularity_seconds == 0 {
            return Err(Error::Config("window granularity must be positive".into()));
        }
        Ok(Self {
            index,
            granularity_seconds,
        })
    }

    /// Window containing `epoch_seconds`, counting from `origin_seconds`.
    /// Times before the origin map to window 0.
    pub fn from_epoch_seconds(
        epoch_seconds: u64,
        origin_seconds: u64,
        granularity_seconds: u64,
    ) -> Result<Self> {
        let index = epoch_seconds.saturating_sub(origin_seconds) / granularity_seconds.max(1);
        Self::new(index, granularity_seconds)
    }

    pub fn start_seconds(&self, origin_seconds: u64) -> u64 {
        origin_seconds + self.index * self.granularity_seconds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Provider,
    Authority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    Advance,
    ReadKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub action: AuditAction,
    /// `None` for clock advances, which are not role requests.
    pub requester_role: Option<Role>,
    pub requested_index: u64,
    pub granted: bool,
    pub wall_time: u64,
}

/// Source of audit timestamps (unix seconds).
pub trait Clock: Send + Sync {
    fn now_unix(&self) -> u64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_unix(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub u64);

impl Clock for FixedClock {
    fn now_unix(&self) -> u64 {
        self.0
    }
}

/// Emulated hardware key store.
pub struct KeyVault {
    root: TimeKey,
    granularity_seconds: u64,
    history: Vec<TimeKey>,
    audit: Vec<AuditRecord>,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for KeyVault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyVault")
            .field("current_index", &self.current_index())
            .field("granularity_seconds", &self.granularity_seconds)
            .field("audit_len", &self.audit.len())
            .finish_non_exhaustive()
    }
}

impl KeyVault {
    pub fn new(root: TimeKey, granularity_seconds: u64, clock: Arc<dyn Clock>) -> Result<Self> {
        if granularity_seconds == 0 {
            return Err(Error::Config("window granularity must be positive".into()));
        }
        Ok(Self {
            root,
            granularity_seconds,
            history: vec![root],
            audit: Vec::new(),
            clock,
        })
    }

    pub fn current_index(&self) -> u64 {
        self.history.len() as u64 - 1
    }

    pub fn current_window(&self) -> TimeWindow {
        TimeWindow {
            index: self.current_index(),
            granularity_seconds: self.granularity_seconds,
        }
    }

    pub fn granularity_seconds(&self) -> u64 {
        self.granularity_seconds
    }

    pub fn audit_log(&self) -> &[AuditRecord] {
        &self.audit
    }

    fn record(&mut self, action: AuditAction, role: Option<Role>, index: u64, granted: bool) {
        let rec = AuditRecord {
            seq: self.audit.len() as u64,
            action,
            requester_role: role,
            requested_index: index,
            granted,
            wall_time: self.clock.now_unix(),
        };
        self.audit.push(rec);
    }

    /// Moves to the next window.
    pub fn advance(&mut self) -> TimeWindow {
        let next = evolve(self.history.last().expect("history is never empty"));
        self.history.push(next);
        let idx = self.current_index();
        self.record(AuditAction::Advance, None, idx, true);
        self.current_window()
    }

    pub fn read_key(&mut self, role: Role, window: u64) -> Result<TimeKey> {
        let current = self.current_index();
        let outcome = if window > current {
            Err(Error::WindowNotYetReached {
                requested: window,
                current,
            })
        } else if role == Role::Provider && window < current {
            Err(Error::ProviderPastAccessDenied {
                requested: window,
                current,
            })
        } else {
            Ok(self.history[window as usize])
        };
        self.record(AuditAction::ReadKey, Some(role), window, outcome.is_ok());
        outcome
    }

    pub fn to_file(&self) -> VaultFile {
        VaultFile {
            granularity_seconds: self.granularity_seconds,
            current_index: self.current_index(),
            root_hex: self.root.to_hex(),
            current_key_digest: self.history.last().expect("non-empty").digest_hex(),
            audit: self.audit.clone(),
        }
    }

    /// Rebuilds a vault from its file form, re-deriving the key history from
    /// the root and checking it against the stored digest of the current key.
    pub fn from_file(file: VaultFile, clock: Arc<dyn Clock>) -> Result<Self> {
        let root = TimeKey::from_hex(&file.root_hex)?;
        let mut vault = Self::new(root, file.granularity_seconds, clock)?;
        for _ in 0..file.current_index {
            let next = evolve(vault.history.last().expect("non-empty"));
            vault.history.push(next);
        }
        let digest = vault.history.last().expect("non-empty").digest_hex();
        if digest != file.current_key_digest {
            return Err(Error::VaultCorrupt(format!(
                "current key digest {digest} does not match stored {}",
                file.current_key_digest
            )));
        }
        for (i, rec) in file.audit.iter().enumerate() {
            if rec.seq != i as u64 {
                return Err(Error::VaultCorrupt(format!(
                    "audit record {i} carries sequence number {}",
                    rec.seq
                )));
            }
        }
        vault.audit = file.audit;
        Ok(vault)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(&self.to_file())?;
        json.push('\n');
        let mut opts = std::fs::OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        std::os::unix::fs::OpenOptionsExt::mode(&mut opts, 0o600);
        let mut file = opts.open(path)?;
        std::io::Write::write_all(&mut file, json.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path, clock: Arc<dyn Clock>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file(serde_json::from_str(&text)?, clock)
    }
}

/// On-disk vault layout. The file holds the root secret in clear; restrict
/// its permissions accordingly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaultFile {
    pub granularity_seconds: u64,
    pub current_index: u64,
    pub root_hex: String,
    pub current_key_digest: String,
    pub audit: Vec<AuditRecord>,
}

/// A vault shared between threads; all access is serialized.
#[derive(Clone)]
pub struct SharedVault(Arc<Mutex<KeyVault>>);

impl SharedVault {
    pub fn new(vault: KeyVault) -> Self {
        Self(Arc::new(Mutex::new(vault)))
    }

    pub fn lock(&self) -> MutexGuard<'_, KeyVault> {
        self.0.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn advance(&self) -> TimeWindow {
        self.lock().advance()
    }

    pub fn read_key(&self, role: Role, window: u64) -> Result<TimeKey> {
        self.lock().read_key(role, window)
    }
}
