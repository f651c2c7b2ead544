use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;

use super::{BackendError, ChatBackend, ChatRequest};

type DelayFn = Arc<dyn Fn(&str) -> Duration + Send + Sync>;

/// Deterministic offline backend keyed by paragraph id.
///
/// Besides the lookup table it can script failures (consumed one per call)
/// and per-item delays, and it records call counts and the peak number of
/// concurrent calls.
pub struct MockBackend {
    table: HashMap<String, String>,
    default: String,
    delay: Option<DelayFn>,
    scripted: Mutex<HashMap<String, VecDeque<BackendError>>>,
    persistent: HashMap<String, BackendError>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

pub fn make_mock_backend(table: HashMap<String, String>, default: String) -> MockBackend {
    MockBackend {
        table,
        default,
        delay: None,
        scripted: Mutex::new(HashMap::new()),
        persistent: HashMap::new(),
        calls: AtomicUsize::new(0),
        in_flight: AtomicUsize::new(0),
        max_in_flight: AtomicUsize::new(0),
    }
}

impl MockBackend {
    pub fn with_delay(mut self, delay: impl Fn(&str) -> Duration + Send + Sync + 'static) -> Self {
        self.delay = Some(Arc::new(delay));
        self
    }

    /// Errors returned, in order, by the next calls for `paragraph_id`.
    pub fn with_script(self, paragraph_id: &str, errors: Vec<BackendError>) -> Self {
        self.scripted
            .lock()
            .expect("mock script lock")
            .insert(paragraph_id.to_string(), errors.into());
        self
    }

    /// `paragraph_id` fails on every call.
    pub fn with_persistent_failure(mut self, paragraph_id: &str, error: BackendError) -> Self {
        self.persistent.insert(paragraph_id.to_string(), error);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn lookup(&self, paragraph_id: &str) -> &str {
        self.table
            .get(paragraph_id)
            .map(String::as_str)
            .unwrap_or(&self.default)
    }
}

struct InFlight<'a>(&'a AtomicUsize);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

#[async_trait]
impl ChatBackend for MockBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        let _guard = InFlight(&self.in_flight);
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);

        let id = request.paragraph_id.as_str();
        if let Some(delay) = &self.delay {
            tokio::time::sleep(delay(id)).await;
        } else {
            tokio::task::yield_now().await;
        }
        if let Some(err) = self.persistent.get(id) {
            return Err(err.clone());
        }
        let scripted = self
            .scripted
            .lock()
            .expect("mock script lock")
            .get_mut(id)
            .and_then(VecDeque::pop_front);
        if let Some(err) = scripted {
            return Err(err);
        }
        Ok(self.lookup(id).to_string())
    }
}
