//! Whole-platform snapshots as one JSON document.
//!
//! Only hashed passwords and sealed provider keys are written. Login
//! sessions and live connections are not persisted.

use std::path::Path;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::auth::{Account, Secrets};
use crate::clock::Clock;
use crate::engine::{RoomRecord, RoomRuntime};
use crate::registry::Study;
use crate::survey::{QuestionLibraryEntry, SurveyDefinition};

use super::{JobSink, Platform, PlatformConfig, PlatformError, Result};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformSnapshot {
    pub version: u32,
    pub accounts: Vec<Account>,
    pub studies: Vec<Study>,
    pub rooms: Vec<RoomRecord>,
    pub surveys: Vec<SurveyDefinition>,
    pub library: Vec<QuestionLibraryEntry>,
}

impl Platform {
    pub fn snapshot(&self) -> PlatformSnapshot {
        let cells: Vec<_> = self.rooms.read().values().cloned().collect();
        let mut rooms: Vec<RoomRecord> = cells.iter().map(|c| c.lock().record()).collect();
        rooms.sort_by_key(|r| r.room.id);
        PlatformSnapshot {
            version: SNAPSHOT_VERSION,
            accounts: self.auth.accounts(),
            studies: self.registry.studies(),
            rooms,
            surveys: self.surveys.read().values().map(|d| (**d).clone()).collect(),
            library: self.library.all(),
        }
    }

    /// Writes the snapshot next to `path` and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(&self.snapshot()).map_err(|e| PlatformError::Storage(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json).map_err(|e| PlatformError::Storage(format!("{}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, path).map_err(|e| PlatformError::Storage(format!("{}: {e}", path.display())))
    }

    pub fn restore(
        config: PlatformConfig,
        secrets: &Secrets,
        clock: Arc<dyn Clock>,
        jobs: Arc<dyn JobSink>,
        snapshot: PlatformSnapshot,
    ) -> Result<Self> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(PlatformError::Storage(format!("unsupported snapshot version {}", snapshot.version)));
        }
        let platform = Self::new(config, secrets, clock, jobs);
        platform.auth.restore(snapshot.accounts);
        for study in snapshot.studies {
            platform.registry.insert_study(study);
        }
        platform.library.restore(snapshot.library);
        {
            let mut surveys = platform.surveys.write();
            for def in snapshot.surveys {
                surveys.insert(def.id, Arc::new(def));
            }
        }
        for record in snapshot.rooms {
            platform.registry.restore_room(&record.room);
            let id = record.room.id;
            let mut rt = RoomRuntime::restore(record, platform.next_seed());
            rt.set_injector_name(platform.config.injector_name.clone());
            platform.rooms.write().insert(id, Arc::new(Mutex::new(rt)));
        }
        Ok(platform)
    }

    /// Loads a snapshot file, or starts empty when it does not exist.
    pub fn open(
        config: PlatformConfig,
        secrets: &Secrets,
        clock: Arc<dyn Clock>,
        jobs: Arc<dyn JobSink>,
        path: &Path,
    ) -> Result<Self> {
        match std::fs::read(path) {
            Ok(bytes) => {
                let snapshot: PlatformSnapshot =
                    serde_json::from_slice(&bytes).map_err(|e| PlatformError::Storage(format!("{}: {e}", path.display())))?;
                Self::restore(config, secrets, clock, jobs, snapshot)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new(config, secrets, clock, jobs)),
            Err(e) => Err(PlatformError::Storage(format!("{}: {e}", path.display()))),
        }
    }
}
