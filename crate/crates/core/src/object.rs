//! Git object model: identifiers, kinds, and the binary encodings of trees
//! and commits.
//!
//! Everything here works on raw bytes. Names, identities and messages are
//! never assumed to be UTF-8.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha1::{Digest, Sha1};

use crate::error::ObjectError;

pub const DIGEST_LEN: usize = 20;
pub const HEX_LEN: usize = DIGEST_LEN * 2;

/// SHA-1 content address of a git object.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectId([u8; DIGEST_LEN]);

impl ObjectId {
    /// The id git assigns to a tree with no entries.
    pub const EMPTY_TREE: ObjectId = ObjectId([
        0x4b, 0x82, 0x5d, 0xc6, 0x42, 0xcb, 0x6e, 0xb9, 0xa0, 0x60, 0xe5, 0x4b, 0xf8, 0xd6, 0x92,
        0x88, 0xfb, 0xee, 0x49, 0x04,
    ]);

    pub const fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, ObjectError> {
        let digest: [u8; DIGEST_LEN] = bytes
            .try_into()
            .map_err(|_| ObjectError::BadId(format!("expected 20 bytes, got {}", bytes.len())))?;
        Ok(Self(digest))
    }

    /// Parses the canonical 40-character lowercase form.
    pub fn from_hex(text: &[u8]) -> Result<Self, ObjectError> {
        if text.len() != HEX_LEN || !text.iter().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(ObjectError::BadId(String::from_utf8_lossy(text).into_owned()));
        }
        let mut digest = [0u8; DIGEST_LEN];
        hex::decode_to_slice(text, &mut digest)
            .map_err(|e| ObjectError::BadId(e.to_string()))?;
        Ok(Self(digest))
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn first_byte(&self) -> u8 {
        self.0[0]
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ObjectId({})", self.to_hex())
    }
}

impl FromStr for ObjectId {
    type Err = ObjectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s.as_bytes())
    }
}

impl Serialize for ObjectId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ObjectId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectKind {
    Blob,
    Tree,
    Commit,
    Tag,
}

impl ObjectKind {
    pub fn from_bytes(name: &[u8]) -> Result<Self, ObjectError> {
        match name {
            b"blob" => Ok(Self::Blob),
            b"tree" => Ok(Self::Tree),
            b"commit" => Ok(Self::Commit),
            b"tag" => Ok(Self::Tag),
            other => Err(ObjectError::UnknownKind(String::from_utf8_lossy(other).into_owned())),
        }
    }

    pub fn as_bytes(&self) -> &'static [u8] {
        match self {
            Self::Blob => b"blob",
            Self::Tree => b"tree",
            Self::Commit => b"commit",
            Self::Tag => b"tag",
        }
    }
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // as_bytes is always ASCII
        f.write_str(std::str::from_utf8(self.as_bytes()).unwrap_or("?"))
    }
}

/// Header git prepends before hashing: `"<kind> <decimal size>\0"`.
pub fn object_header(kind: ObjectKind, len: usize) -> Vec<u8> {
    let mut header = Vec::with_capacity(16);
    header.extend_from_slice(kind.as_bytes());
    header.push(b' ');
    header.extend_from_slice(len.to_string().as_bytes());
    header.push(0);
    header
}

pub fn object_id(kind: ObjectKind, payload: &[u8]) -> ObjectId {
    let digest = Sha1::new()
        .chain_update(object_header(kind, payload.len()))
        .chain_update(payload)
        .finalize();
    ObjectId(digest.into())
}

/// Git SHA-1 of file content.
pub fn blob_id(content: &[u8]) -> ObjectId {
    object_id(ObjectKind::Blob, content)
}

/// Splits an encoded object (`header + payload`) into its kind and payload,
/// checking the declared size.
pub fn split_encoded(data: &[u8]) -> Result<(ObjectKind, &[u8]), ObjectError> {
    let nul = data
        .iter()
        .position(|&b| b == 0)
        .ok_or_else(|| ObjectError::Malformed("object header lacks NUL".into()))?;
    let header = &data[..nul];
    let space = header
        .iter()
        .position(|&b| b == b' ')
        .ok_or_else(|| ObjectError::Malformed("object header lacks size".into()))?;
    let kind = ObjectKind::from_bytes(&header[..space])?;
    let size: usize = std::str::from_utf8(&header[space + 1..])
        .ok()
        .filter(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ObjectError::Malformed("object header size is not decimal".into()))?;
    let payload = &data[nul + 1..];
    if payload.len() != size {
        return Err(ObjectError::Malformed(format!(
            "header declares {size} bytes, payload has {}",
            payload.len()
        )));
    }
    Ok((kind, payload))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntryKind {
    Blob,
    Tree,
    Submodule,
}

/// One line of a tree object.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TreeEntry {
    /// Octal mode exactly as stored (git writes directories as `40000`).
    pub mode: Vec<u8>,
    pub name: Vec<u8>,
    pub child: ObjectId,
}

impl TreeEntry {
    pub fn new(mode: &[u8], name: &[u8], child: ObjectId) -> Result<Self, ObjectError> {
        validate_mode(mode)?;
        validate_name(name)?;
        Ok(Self { mode: mode.to_vec(), name: name.to_vec(), child })
    }

    fn mode_value(&self) -> u32 {
        self.mode.iter().fold(0u32, |acc, &d| acc.wrapping_mul(8).wrapping_add(u32::from(d - b'0')))
    }

    pub fn kind(&self) -> EntryKind {
        match self.mode_value() & 0o170000 {
            0o040000 => EntryKind::Tree,
            0o160000 => EntryKind::Submodule,
            // regular files and symlinks both carry blob content
            _ => EntryKind::Blob,
        }
    }

    pub fn is_tree(&self) -> bool {
        self.kind() == EntryKind::Tree
    }

    fn sort_key(&self) -> Vec<u8> {
        let mut key = self.name.clone();
        if self.is_tree() {
            key.push(b'/');
        }
        key
    }
}

fn validate_mode(mode: &[u8]) -> Result<(), ObjectError> {
    if mode.is_empty() || mode.len() > 7 || !mode.iter().all(|b| (b'0'..=b'7').contains(b)) {
        return Err(ObjectError::Malformed(format!(
            "bad tree entry mode {:?}",
            String::from_utf8_lossy(mode)
        )));
    }
    Ok(())
}

fn validate_name(name: &[u8]) -> Result<(), ObjectError> {
    if name.is_empty() || name.contains(&b'/') || name.contains(&0) {
        return Err(ObjectError::Malformed(format!(
            "bad tree entry name {:?}",
            String::from_utf8_lossy(name)
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeRecord {
    pub id: ObjectId,
    pub entries: Vec<TreeEntry>,
}

impl TreeRecord {
    /// Builds a tree from entries in any order, sorting them the way git does
    /// (directories compare as if their name ended in `/`).
    pub fn from_entries(mut entries: Vec<TreeEntry>) -> Self {
        entries.sort_by_key(TreeEntry::sort_key);
        let id = object_id(ObjectKind::Tree, &serialize_tree(&entries));
        Self { id, entries }
    }

    pub fn serialize(&self) -> Vec<u8> {
        serialize_tree(&self.entries)
    }
}

pub fn serialize_tree(entries: &[TreeEntry]) -> Vec<u8> {
    let mut out = Vec::with_capacity(entries.len() * 40);
    for entry in entries {
        out.extend_from_slice(&entry.mode);
        out.push(b' ');
        out.extend_from_slice(&entry.name);
        out.push(0);
        out.extend_from_slice(entry.child.as_bytes());
    }
    out
}

/// Decodes a tree payload; entries keep their stored order.
pub fn parse_tree(payload: &[u8]) -> Result<TreeRecord, ObjectError> {
    let id = object_id(ObjectKind::Tree, payload);
    let mut entries = Vec::new();
    let mut rest = payload;
    while !rest.is_empty() {
        let space = rest
            .iter()
            .position(|&b| b == b' ')
            .ok_or_else(|| ObjectError::Malformed("tree entry lacks mode separator".into()))?;
        let mode = &rest[..space];
        rest = &rest[space + 1..];
        let nul = rest
            .iter()
            .position(|&b| b == 0)
            .ok_or_else(|| ObjectError::Malformed("tree entry name lacks NUL".into()))?;
        let name = &rest[..nul];
        rest = &rest[nul + 1..];
        if rest.len() < DIGEST_LEN {
            return Err(ObjectError::Malformed("tree entry truncated inside digest".into()));
        }
        let child = ObjectId::from_slice(&rest[..DIGEST_LEN])?;
        rest = &rest[DIGEST_LEN..];
        entries.push(TreeEntry::new(mode, name, child)?);
    }
    Ok(TreeRecord { id, entries })
}

/// Seconds since the epoch plus the zone offset in minutes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp {
    pub seconds: i64,
    pub offset_minutes: i32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitRecord {
    pub id: ObjectId,
    pub tree: ObjectId,
    pub parents: Vec<ObjectId>,
    pub author_ident: Vec<u8>,
    pub author_time: Timestamp,
    pub committer_ident: Vec<u8>,
    pub committer_time: Timestamp,
    pub message: Vec<u8>,
}

fn parse_hex_field(value: &[u8], field: &str) -> Result<ObjectId, ObjectError> {
    ObjectId::from_hex(value)
        .map_err(|_| ObjectError::Malformed(format!("bad hex in '{field}' header")))
}

/// Splits `Name <email> 1700000000 +0100` into the identity and its time.
fn parse_signature(value: &[u8], field: &str) -> Result<(Vec<u8>, Timestamp), ObjectError> {
    let bad = || ObjectError::Malformed(format!("bad '{field}' line"));
    let tz_start = value.iter().rposition(|&b| b == b' ').ok_or_else(bad)?;
    let tz = &value[tz_start + 1..];
    let head = &value[..tz_start];
    let time_start = head.iter().rposition(|&b| b == b' ').ok_or_else(bad)?;
    let seconds: i64 = std::str::from_utf8(&head[time_start + 1..])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(bad)?;
    let offset_minutes = parse_tz(tz).ok_or_else(bad)?;
    Ok((head[..time_start].to_vec(), Timestamp { seconds, offset_minutes }))
}

fn parse_tz(tz: &[u8]) -> Option<i32> {
    if tz.len() != 5 || !tz[1..].iter().all(u8::is_ascii_digit) {
        return None;
    }
    let sign = match tz[0] {
        b'+' => 1,
        b'-' => -1,
        _ => return None,
    };
    let digit = |i: usize| i32::from(tz[i] - b'0');
    let hours = digit(1) * 10 + digit(2);
    let minutes = digit(3) * 10 + digit(4);
    Some(sign * (hours * 60 + minutes))
}

/// Parses a commit payload. Unknown headers (`encoding`, `gpgsig`,
/// `mergetag`, ...) and their continuation lines are skipped.
pub fn parse_commit(payload: &[u8]) -> Result<CommitRecord, ObjectError> {
    let id = object_id(ObjectKind::Commit, payload);
    let split = payload
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| ObjectError::Malformed("commit lacks blank line before message".into()))?;
    let headers = &payload[..split];
    let message = payload[split + 2..].to_vec();

    let mut tree = None;
    let mut parents: Vec<ObjectId> = Vec::new();
    let mut author = None;
    let mut committer = None;
    for line in headers.split(|&b| b == b'\n') {
        if line.first() == Some(&b' ') {
            continue;
        }
        let (key, value) = match line.iter().position(|&b| b == b' ') {
            Some(i) => (&line[..i], &line[i + 1..]),
            None => (line, &b""[..]),
        };
        match key {
            b"tree" if tree.is_none() => tree = Some(parse_hex_field(value, "tree")?),
            b"parent" => {
                let parent = parse_hex_field(value, "parent")?;
                if !parents.contains(&parent) {
                    parents.push(parent);
                }
            }
            b"author" if author.is_none() => author = Some(parse_signature(value, "author")?),
            b"committer" if committer.is_none() => {
                committer = Some(parse_signature(value, "committer")?)
            }
            _ => {}
        }
    }
    let tree = tree.ok_or_else(|| ObjectError::Malformed("commit lacks 'tree' header".into()))?;
    let (committer_ident, committer_time) = committer
        .ok_or_else(|| ObjectError::Malformed("commit lacks 'committer' header".into()))?;
    let (author_ident, author_time) = author
        .ok_or_else(|| ObjectError::Malformed("commit lacks 'author' header".into()))?;
    Ok(CommitRecord {
        id,
        tree,
        parents,
        author_ident,
        author_time,
        committer_ident,
        committer_time,
        message,
    })
}

/// The object an annotated tag points at.
pub fn parse_tag_target(payload: &[u8]) -> Result<(ObjectId, ObjectKind), ObjectError> {
    let mut target = None;
    let mut kind = None;
    for line in payload.split(|&b| b == b'\n') {
        if line.is_empty() {
            break;
        }
        if let Some(value) = line.strip_prefix(b"object ") {
            target = Some(parse_hex_field(value, "object")?);
        } else if let Some(value) = line.strip_prefix(b"type ") {
            kind = Some(ObjectKind::from_bytes(value)?);
        }
    }
    match (target, kind) {
        (Some(target), Some(kind)) => Ok((target, kind)),
        _ => Err(ObjectError::Malformed("tag lacks 'object' or 'type' header".into())),
    }
}

/// A project in the corpus: a repository URL or a corpus-local label.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ProjectId(String);

impl ProjectId {
    pub fn new(name: impl Into<String>) -> Result<Self, ObjectError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ObjectError::EmptyProjectName);
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ProjectId {
    type Error = ObjectError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<ProjectId> for String {
    fn from(value: ProjectId) -> Self {
        value.0
    }
}

impl fmt::Display for ProjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Renders raw bytes for human-facing output, escaping anything that is not
/// printable ASCII.
pub fn escape_display(bytes: &[u8]) -> String {
    bytes.escape_ascii().to_string()
}
