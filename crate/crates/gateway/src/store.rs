//! In-memory session store.
//!
//! Live sessions sit behind their own async mutex so sends within a session
//! are serialized while distinct sessions proceed in parallel. Ending a
//! session drops it from the live map and remembers only its id.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use npc_spatial::ChatSession;
use tokio::sync::Mutex;

pub type SharedSession = Arc<Mutex<ChatSession>>;

pub enum Lookup {
    Live(SharedSession),
    Ended,
    Missing,
}

#[derive(Default)]
pub struct SessionStore {
    live: RwLock<HashMap<String, SharedSession>>,
    ended: RwLock<HashSet<String>>,
    created: AtomicU64,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, session: ChatSession) -> String {
        let id = session.id().to_string();
        self.live
            .write()
            .unwrap()
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        self.created.fetch_add(1, Ordering::Relaxed);
        id
    }

    pub fn get(&self, id: &str) -> Lookup {
        if let Some(s) = self.live.read().unwrap().get(id) {
            return Lookup::Live(s.clone());
        }
        if self.ended.read().unwrap().contains(id) {
            Lookup::Ended
        } else {
            Lookup::Missing
        }
    }

    /// End a session, waiting for any in-flight send to finish first.
    /// Returns false for unknown ids; ending twice is fine.
    pub async fn end(&self, id: &str) -> bool {
        let removed = self.live.write().unwrap().remove(id);
        match removed {
            Some(session) => {
                session.lock().await.end();
                self.ended.write().unwrap().insert(id.to_string());
                true
            }
            None => self.ended.read().unwrap().contains(id),
        }
    }

    /// Messages still held for a session; zero once it has ended.
    pub async fn retained_messages(&self, id: &str) -> Option<usize> {
        match self.get(id) {
            Lookup::Live(s) => Some(s.lock().await.history().len()),
            Lookup::Ended => Some(0),
            Lookup::Missing => None,
        }
    }

    pub fn live_count(&self) -> usize {
        self.live.read().unwrap().len()
    }

    pub fn created_count(&self) -> u64 {
        self.created.load(Ordering::Relaxed)
    }
}
