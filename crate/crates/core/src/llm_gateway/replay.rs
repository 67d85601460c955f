use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ChatClient, ChatRequest, GatewayError, TemplateId};

/// One line of a replay log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub template_id: TemplateId,
    pub prompt: String,
    pub response: String,
    pub latency_ms: u64,
}

/// Answers each (template, prompt) pair from a log, in recorded order.
#[derive(Debug, Default)]
pub struct ReplayClient {
    queues: Mutex<HashMap<(TemplateId, String), VecDeque<String>>>,
}

impl ReplayClient {
    pub fn from_records(records: impl IntoIterator<Item = LogRecord>) -> Self {
        let mut queues: HashMap<(TemplateId, String), VecDeque<String>> = HashMap::new();
        for r in records {
            queues.entry((r.template_id, r.prompt)).or_default().push_back(r.response);
        }
        ReplayClient { queues: Mutex::new(queues) }
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let reader = BufReader::new(File::open(path)?);
        let mut records = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: LogRecord = serde_json::from_str(&line)
                .map_err(|e| GatewayError::InvalidScript(format!("{}:{}: {e}", path.display(), n + 1)))?;
            records.push(record);
        }
        Ok(ReplayClient::from_records(records))
    }

    pub fn remaining(&self) -> usize {
        self.queues.lock().unwrap().values().map(VecDeque::len).sum()
    }
}

impl ChatClient for ReplayClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut queues = self.queues.lock().unwrap();
        queues
            .get_mut(&(request.template, request.prompt.clone()))
            .and_then(VecDeque::pop_front)
            .ok_or(GatewayError::ReplayExhausted { template: request.template })
    }
}

/// Wraps a client and appends every exchange to a JSON-lines log.
pub struct RecordingClient<C> {
    inner: C,
    log: Mutex<File>,
}

impl<C: ChatClient> RecordingClient<C> {
    pub fn new(inner: C, path: &Path) -> Result<Self, GatewayError> {
        let log = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RecordingClient { inner, log: Mutex::new(log) })
    }
}

impl<C: ChatClient> ChatClient for RecordingClient<C> {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let start = Instant::now();
        let response = self.inner.complete(request)?;
        let record = LogRecord {
            template_id: request.template,
            prompt: request.prompt.clone(),
            response: response.clone(),
            latency_ms: start.elapsed().as_millis() as u64,
        };
        let mut line = serde_json::to_string(&record).expect("log record serializes");
        line.push('\n');
        let mut log = self.log.lock().unwrap();
        log.write_all(line.as_bytes())?;
        log.flush()?;
        Ok(response)
    }
}
