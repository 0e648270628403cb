//! Group secrets, the on-disk credential store, and per-session padded arrays.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::RngCore;
use thiserror::Error;

pub const SECRET_LEN: usize = 32;

const MAX_MEMBERSHIPS_KEY: &str = "max_memberships";

#[derive(Debug, Error)]
pub enum CredentialError {
    #[error("{count} memberships exceed the cap of {cap}")]
    Capacity { count: usize, cap: usize },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid group id {0:?}")]
    InvalidId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Possession of `secret` is membership of the group. `id` is a local alias
/// and never leaves the node.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupSecret {
    id: String,
    secret: [u8; SECRET_LEN],
}

impl GroupSecret {
    pub fn from_bytes(id: impl Into<String>, secret: [u8; SECRET_LEN]) -> Self {
        Self {
            id: id.into(),
            secret,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn bytes(&self) -> &[u8; SECRET_LEN] {
        &self.secret
    }

    /// Same secret under a different local alias.
    pub fn aliased(&self, id: impl Into<String>) -> Self {
        Self::from_bytes(id, self.secret)
    }
}

impl fmt::Debug for GroupSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupSecret").field("id", &self.id).finish_non_exhaustive()
    }
}

pub fn new_group_secret(rng: &mut (impl RngCore + ?Sized), id: impl Into<String>) -> GroupSecret {
    let mut secret = [0u8; SECRET_LEN];
    rng.fill_bytes(&mut secret);
    GroupSecret::from_bytes(id, secret)
}

fn check_id(id: &str) -> Result<(), CredentialError> {
    if id.is_empty() || id.contains(':') || id.chars().any(char::is_whitespace) {
        return Err(CredentialError::InvalidId(id.to_string()));
    }
    Ok(())
}

/// Contents of a credential file: `id:hex(secret)` records, one per line,
/// plus an optional `max_memberships = m` setting. Blank lines and lines
/// starting with `#` are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CredentialStore {
    pub secrets: Vec<GroupSecret>,
    pub max_memberships: Option<usize>,
}

impl CredentialStore {
    pub fn parse(text: &str) -> Result<Self, CredentialError> {
        let mut store = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                if key.trim() != MAX_MEMBERSHIPS_KEY {
                    return Err(CredentialError::Parse {
                        line: line_no,
                        reason: format!("unknown setting {:?}", key.trim()),
                    });
                }
                let m = value.trim().parse().map_err(|e| CredentialError::Parse {
                    line: line_no,
                    reason: format!("{MAX_MEMBERSHIPS_KEY}: {e}"),
                })?;
                store.max_memberships = Some(m);
                continue;
            }
            let (id, hex_secret) = line.split_once(':').ok_or_else(|| CredentialError::Parse {
                line: line_no,
                reason: "expected id:hex".into(),
            })?;
            check_id(id)?;
            let bytes = hex::decode(hex_secret).map_err(|e| CredentialError::Parse {
                line: line_no,
                reason: e.to_string(),
            })?;
            let secret: [u8; SECRET_LEN] =
                bytes.try_into().map_err(|b: Vec<u8>| CredentialError::Parse {
                    line: line_no,
                    reason: format!("secret is {} bytes, expected {SECRET_LEN}", b.len()),
                })?;
            if store.secrets.iter().any(|s| s.id == id) {
                return Err(CredentialError::Parse {
                    line: line_no,
                    reason: format!("duplicate id {id:?}"),
                });
            }
            store.secrets.push(GroupSecret::from_bytes(id, secret));
        }
        Ok(store)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(m) = self.max_memberships {
            out.push_str(&format!("{MAX_MEMBERSHIPS_KEY} = {m}\n"));
        }
        for s in &self.secrets {
            out.push_str(&format!("{}:{}\n", s.id, hex::encode(s.secret)));
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CredentialError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Writes the store readable by the owner only.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CredentialError> {
        let path = path.as_ref();
        std::fs::write(path, self.render())?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600))?;
        }
        Ok(())
    }
}

/// One entry of a padded array. `id` is set only for real memberships.
#[derive(Clone, PartialEq, Eq)]
pub struct Slot {
    pub secret: [u8; SECRET_LEN],
    pub id: Option<String>,
}

impl Slot {
    pub fn is_real(&self) -> bool {
        self.id.is_some()
    }
}

impl fmt::Debug for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.id {
            Some(id) => write!(f, "Slot({id})"),
            None => f.write_str("Slot(padding)"),
        }
    }
}

/// Exactly `m` slots in random order; hidden and unused slots hold fresh
/// random values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedArray {
    slots: Vec<Slot>,
}

impl PaddedArray {
    /// Uses `slots` in the given order. Intended for replaying recorded
    /// sessions; live sessions use [`build_padded_array`].
    pub fn from_slots(slots: Vec<Slot>) -> Self {
        Self { slots }
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn real_ids(&self) -> BTreeSet<String> {
        self.slots.iter().filter_map(|s| s.id.clone()).collect()
    }
}

pub fn build_padded_array(
    memberships: &[GroupSecret],
    hidden: &BTreeSet<String>,
    m: usize,
    rng: &mut (impl RngCore + ?Sized),
) -> Result<PaddedArray, CredentialError> {
    if memberships.len() > m {
        return Err(CredentialError::Capacity {
            count: memberships.len(),
            cap: m,
        });
    }
    let mut slots = Vec::with_capacity(m);
    for membership in memberships {
        if hidden.contains(&membership.id) {
            slots.push(padding_slot(rng));
        } else {
            slots.push(Slot {
                secret: membership.secret,
                id: Some(membership.id.clone()),
            });
        }
    }
    while slots.len() < m {
        slots.push(padding_slot(rng));
    }
    slots.shuffle(rng);
    Ok(PaddedArray { slots })
}

fn padding_slot(rng: &mut (impl RngCore + ?Sized)) -> Slot {
    let mut secret = [0u8; SECRET_LEN];
    rng.fill_bytes(&mut secret);
    Slot { secret, id: None }
}
