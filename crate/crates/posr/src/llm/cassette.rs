//! Record/replay store mapping request hashes to responses.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::client::{ChatClient, ChatError, ChatRequest, ChatResponse};
use crate::io::{read_json, write_json, IoError};

/// Hex SHA-256 of the request's canonical JSON.
pub fn request_key(request: &ChatRequest) -> String {
    let bytes = serde_json::to_vec(request).expect("request serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cassette {
    pub entries: BTreeMap<String, ChatResponse>,
}

impl Cassette {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write_json(path, self)
    }

    pub fn insert(&mut self, request: &ChatRequest, response: ChatResponse) {
        self.entries.insert(request_key(request), response);
    }

    pub fn get(&self, request: &ChatRequest) -> Option<&ChatResponse> {
        self.entries.get(&request_key(request))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Replays recorded responses; a miss is an error. With an upstream client
/// it records misses instead.
pub struct CassetteClient {
    cassette: Mutex<Cassette>,
    upstream: Option<Box<dyn ChatClient>>,
}

impl CassetteClient {
    pub fn replay(cassette: Cassette) -> Self {
        Self {
            cassette: Mutex::new(cassette),
            upstream: None,
        }
    }

    pub fn record(cassette: Cassette, upstream: Box<dyn ChatClient>) -> Self {
        Self {
            cassette: Mutex::new(cassette),
            upstream: Some(upstream),
        }
    }

    pub fn into_cassette(self) -> Cassette {
        self.cassette.into_inner().expect("cassette lock")
    }

    pub fn snapshot(&self) -> Cassette {
        self.cassette.lock().expect("cassette lock").clone()
    }
}

impl ChatClient for CassetteClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        if let Some(hit) = self.cassette.lock().expect("cassette lock").get(request) {
            return Ok(hit.clone());
        }
        match &self.upstream {
            None => Err(ChatError::CassetteMiss(request_key(request))),
            Some(up) => {
                let response = up.complete(request)?;
                self.cassette
                    .lock()
                    .expect("cassette lock")
                    .insert(request, response.clone());
                Ok(response)
            }
        }
    }
}
