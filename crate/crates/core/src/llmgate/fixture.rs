use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{prompt_digest, CompletionRequest, LlmError, Provider, ProviderError, ProviderId};
use crate::json::write_atomic;

/// Serves responses from a directory of `<prompt digest>.txt` files.
#[derive(Debug, Clone)]
pub struct FixtureProvider {
    dir: PathBuf,
}

impl FixtureProvider {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(LlmError::Fixture {
                path: dir.display().to_string(),
                source: io::Error::new(io::ErrorKind::NotFound, "fixture directory not found"),
            });
        }
        Ok(Self { dir })
    }

    pub fn path_for(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.txt"))
    }
}

impl Provider for FixtureProvider {
    fn id(&self) -> ProviderId {
        ProviderId::Fixture
    }

    fn call(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        let digest = req.prompt_digest();
        let path = self.path_for(&digest);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(text),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                Err(LlmError::FixtureMiss { digest }.into())
            }
            Err(source) => Err(LlmError::Fixture {
                path: path.display().to_string(),
                source,
            }
            .into()),
        }
    }
}

/// Wraps a provider and stores each response as a fixture file, so a run
/// against any provider can be replayed later with [`FixtureProvider`].
pub struct RecordingProvider {
    inner: Arc<dyn Provider>,
    dir: PathBuf,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn Provider>, dir: &Path) -> Result<Self, LlmError> {
        fs::create_dir_all(dir).map_err(|source| LlmError::Fixture {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self {
            inner,
            dir: dir.to_path_buf(),
        })
    }
}

impl Provider for RecordingProvider {
    fn id(&self) -> ProviderId {
        self.inner.id()
    }

    fn is_remote(&self) -> bool {
        self.inner.is_remote()
    }

    fn call(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        let text = self.inner.call(req)?;
        let path = self.dir.join(format!("{}.txt", prompt_digest(&req.prompt)));
        write_atomic(&path, text.as_bytes()).map_err(|source| LlmError::Fixture {
            path: path.display().to_string(),
            source,
        })?;
        Ok(text)
    }
}
