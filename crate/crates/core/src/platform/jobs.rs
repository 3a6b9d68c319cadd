//! Slow work outside the room step: provider calls for bot turns and
//! suggestion rounds.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use parking_lot::Mutex;
use tokio::sync::mpsc::UnboundedSender;

use crate::bot::{
    run_reply_job, run_suggestion_job, BotError, ChatProvider, ModelBackend, ProviderError, ProviderKind, Purpose,
    RemoteProvider, ScriptSource, ScriptedProvider,
};
use crate::engine::Job;
use crate::ids::{RoomId, SlotIndex};

use super::Platform;

/// Receives jobs emitted by rooms.
pub trait JobSink: Send + Sync {
    fn submit(&self, job: Job);
}

/// Collects jobs for a driver that runs them itself, as the scenario runner
/// does between clock steps.
#[derive(Debug, Default)]
pub struct QueuedJobs(Mutex<Vec<Job>>);

impl QueuedJobs {
    pub fn take(&self) -> Vec<Job> {
        std::mem::take(&mut *self.0.lock())
    }

    pub fn len(&self) -> usize {
        self.0.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.lock().is_empty()
    }
}

impl JobSink for QueuedJobs {
    fn submit(&self, job: Job) {
        self.0.lock().push(job);
    }
}

impl JobSink for UnboundedSender<Job> {
    fn submit(&self, job: Job) {
        if self.send(job).is_err() {
            tracing::warn!("job worker has stopped; dropping job");
        }
    }
}

type ProviderKey = (RoomId, SlotIndex, Purpose);

/// Scripted providers keep a reply cursor, so one instance serves each
/// (room, slot, purpose) for the life of the process.
#[derive(Default)]
pub(super) struct ProviderCache(Mutex<HashMap<ProviderKey, Arc<dyn ChatProvider>>>);

impl Platform {
    fn provider_for(
        &self,
        room: RoomId,
        slot: SlotIndex,
        purpose: Purpose,
        backend: &ModelBackend,
    ) -> Result<Arc<dyn ChatProvider>, BotError> {
        if backend.provider == ProviderKind::Scripted {
            let mut cache = self.providers.0.lock();
            if let Some(p) = cache.get(&(room, slot, purpose)) {
                return Ok(p.clone());
            }
            let provider: Arc<dyn ChatProvider> = match &backend.script {
                Some(ScriptSource::Inline(text)) => Arc::new(ScriptedProvider::parse(text)),
                Some(ScriptSource::File(path)) => Arc::new(ScriptedProvider::from_file(Path::new(path))?),
                None => return Err(BotError::MissingScript),
            };
            cache.insert((room, slot, purpose), provider.clone());
            return Ok(provider);
        }
        let owner = self
            .registry
            .study_of(room)
            .and_then(|s| self.registry.study(s))
            .map(|s| s.owner_account_id)
            .ok_or(ProviderError::MissingKey(backend.provider.as_str()))?;
        let key = self
            .auth
            .load_provider_key(owner, backend.provider)
            .map_err(|_| ProviderError::MissingKey(backend.provider.as_str()))?;
        Ok(Arc::new(RemoteProvider::new(backend.provider, key)))
    }

    /// Runs one job to completion and feeds its result back into the room.
    pub async fn run_job(&self, job: Job) {
        match job {
            Job::BotReply {
                room_id,
                slot,
                generation,
                backend,
                request,
                ..
            } => {
                let result = match self.provider_for(room_id, slot, Purpose::Reply, &backend) {
                    Ok(p) => run_reply_job(&*p, &request).await,
                    Err(e) => Err(e),
                };
                let _ = self.step(room_id, |rt, now| rt.bot_reply_ready(slot, generation, result, now));
            }
            Job::Suggestions {
                room_id,
                slot,
                generation,
                backend,
                request,
            } => {
                let result = match self.provider_for(room_id, slot, Purpose::Suggestions, &backend) {
                    Ok(p) => run_suggestion_job(&*p, &request).await,
                    Err(e) => Err(e),
                };
                let _ = self.step(room_id, |rt, now| rt.suggestions_ready(slot, generation, result, now));
            }
        }
    }
}
