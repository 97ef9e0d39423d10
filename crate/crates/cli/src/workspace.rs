//! Project-local state under `.warden/`, guarded by a lock file so that
//! concurrent invocations on one project run one after another.

use std::fs::{self, File, OpenOptions};
use std::path::Path;

use warden_server::{Store, StoreOptions};

use crate::error::CliError;

pub const STATE_DIR: &str = ".warden";
const LOCK_FILE: &str = "lock";
/// The single project id used inside a local store.
pub const PROJECT_ID: &str = "local";

pub struct Workspace {
    pub store: Store,
    // Held for the lifetime of the invocation; closing the file releases it.
    _lock: File,
}

impl Workspace {
    pub fn open(project: &Path, repair: bool) -> Result<Self, CliError> {
        if !project.is_dir() {
            return Err(CliError::Io(format!("project directory {} does not exist", project.display())));
        }
        let dir = project.join(STATE_DIR);
        fs::create_dir_all(&dir)?;
        let lock = OpenOptions::new().create(true).truncate(false).write(true).open(dir.join(LOCK_FILE))?;
        lock.lock()?;
        let store = Store::open(&dir, StoreOptions { repair, ..StoreOptions::default() })?;
        Ok(Self { store, _lock: lock })
    }
}
