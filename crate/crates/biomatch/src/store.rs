//! Directory-backed template store.
//!
//! ```text
//! <dir>/index                      "biomatch-index v1", then "<hash> <user id hex>" per user
//! <dir>/templates/<hash>.tpl       group code u8, then the template wire encoding
//! ```
//!
//! `<hash>` is the hex SHA-256 of the user id. Files are replaced by rename,
//! so a reader always sees a complete template. Writes for the same user are
//! serialized; the last write wins.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use biomatch_core::protocol::{SecureTemplate, TemplateSource, UserId};
use biomatch_core::PrimeGroup;
use sha2::{Digest, Sha256};

use crate::wire;
use crate::Error;

const INDEX_HEADER: &str = "biomatch-index v1";

pub fn user_hash(user: &UserId) -> String {
    hex::encode(Sha256::digest(user.as_str().as_bytes()))
}

pub struct FileStore<G: PrimeGroup> {
    dir: PathBuf,
    index: Mutex<BTreeMap<String, UserId>>,
    user_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    tmp_counter: AtomicU64,
    _group: PhantomData<G>,
}

impl<G: PrimeGroup> FileStore<G> {
    /// Opens or creates a store in `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, Error> {
        let dir = dir.into();
        fs::create_dir_all(dir.join("templates"))?;
        let index = match fs::read_to_string(dir.join("index")) {
            Ok(text) => parse_index(&text)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            dir,
            index: Mutex::new(index),
            user_locks: Mutex::new(HashMap::new()),
            tmp_counter: AtomicU64::new(0),
            _group: PhantomData,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn template_path(&self, hash: &str) -> PathBuf {
        self.dir.join("templates").join(format!("{hash}.tpl"))
    }

    /// Users currently in the index.
    pub fn users(&self) -> Vec<UserId> {
        self.index.lock().expect("index lock").values().cloned().collect()
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> io::Result<()> {
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = path.with_extension(format!("tmp{}-{n}", std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)
    }

    pub fn store(&self, template: &SecureTemplate<G>) -> Result<(), Error> {
        let hash = user_hash(template.user());
        let lock = {
            let mut locks = self.user_locks.lock().expect("lock table");
            locks.entry(hash.clone()).or_default().clone()
        };
        let _guard = lock.lock().expect("user lock");
        let mut bytes = vec![G::ID.code()];
        wire::encode_template(template, &mut bytes);
        self.write_atomic(&self.template_path(&hash), &bytes)?;
        let mut index = self.index.lock().expect("index lock");
        if let std::collections::btree_map::Entry::Vacant(slot) = index.entry(hash) {
            slot.insert(template.user().clone());
            self.write_atomic(&self.dir.join("index"), render_index(&index).as_bytes())?;
        }
        Ok(())
    }

    /// `Ok(None)` when the user was never enrolled.
    pub fn fetch(&self, user: &UserId) -> Result<Option<SecureTemplate<G>>, Error> {
        let bytes = match fs::read(self.template_path(&user_hash(user))) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let (&group, body) = bytes.split_first().ok_or_else(|| Error::Format("empty template file".into()))?;
        if group != G::ID.code() {
            return Err(Error::Format("template file belongs to another group".into()));
        }
        let template = wire::decode_template::<G>(body)?;
        if template.user() != user {
            return Err(Error::Format("template file names a different user".into()));
        }
        Ok(Some(template))
    }

    /// Raw bytes of a stored template, for auditing.
    pub fn raw(&self, user: &UserId) -> Result<Option<Vec<u8>>, Error> {
        match fs::read(self.template_path(&user_hash(user))) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

fn parse_index(text: &str) -> Result<BTreeMap<String, UserId>, Error> {
    let mut lines = text.lines();
    if lines.next() != Some(INDEX_HEADER) {
        return Err(Error::Format("template index has an unknown header".into()));
    }
    let mut out = BTreeMap::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let (hash, user_hex) = line.split_once(' ').ok_or_else(|| Error::Format("bad index line".into()))?;
        let raw = hex::decode(user_hex).map_err(|_| Error::Format("bad user id in index".into()))?;
        let user = UserId::new(String::from_utf8(raw).map_err(|_| Error::Format("user id is not UTF-8".into()))?)?;
        if user_hash(&user) != hash {
            return Err(Error::Format("index hash does not match its user id".into()));
        }
        out.insert(hash.to_string(), user);
    }
    Ok(out)
}

fn render_index(index: &BTreeMap<String, UserId>) -> String {
    let mut out = format!("{INDEX_HEADER}\n");
    for (hash, user) in index {
        out.push_str(&format!("{hash} {}\n", hex::encode(user.as_str())));
    }
    out
}

impl<G: PrimeGroup> TemplateSource<G> for FileStore<G> {
    type Error = Error;

    fn fetch(&self, user: &UserId) -> Result<Option<SecureTemplate<G>>, Error> {
        FileStore::fetch(self, user)
    }

    fn put(&self, template: &SecureTemplate<G>) -> Result<(), Error> {
        self.store(template)
    }
}
