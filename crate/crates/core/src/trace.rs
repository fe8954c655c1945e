//! Optional JSON-lines trace sink shared by the solver layers.

use std::io::Write;
use std::sync::{Arc, Mutex};

use serde_json::Value;

/// Cloneable handle to a JSON-lines writer; a disabled tracer drops records.
#[derive(Clone, Default)]
pub struct Tracer {
    sink: Option<Arc<Mutex<dyn Write + Send>>>,
}

impl std::fmt::Debug for Tracer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tracer").field("enabled", &self.enabled()).finish()
    }
}

impl Tracer {
    pub fn disabled() -> Self {
        Self { sink: None }
    }

    pub fn new(sink: Arc<Mutex<dyn Write + Send>>) -> Self {
        Self { sink: Some(sink) }
    }

    pub fn enabled(&self) -> bool {
        self.sink.is_some()
    }

    /// Writes one record as a single line. Write errors are ignored.
    pub fn emit(&self, record: impl FnOnce() -> Value) {
        if let Some(sink) = &self.sink {
            let line = record().to_string();
            if let Ok(mut w) = sink.lock() {
                let _ = writeln!(w, "{line}");
            }
        }
    }
}
