use std::path::PathBuf;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use typeforge::tokenizer::Vocabulary;

pub const CACHE_ENV: &str = "TYPEFORGE_CACHE";

/// Content-addressed vocabulary cache under `$TYPEFORGE_CACHE`.
///
/// The key hashes everything the vocabulary is built from, so a hit is
/// always the vocabulary a fresh build would produce.
pub struct VocabCache {
    dir: Option<PathBuf>,
    hasher: Sha256,
}

impl VocabCache {
    pub fn from_env() -> Self {
        Self {
            dir: std::env::var_os(CACHE_ENV).map(PathBuf::from),
            hasher: Sha256::new(),
        }
    }

    pub fn feed(&mut self, part: &[u8]) {
        self.hasher.update((part.len() as u64).to_le_bytes());
        self.hasher.update(part);
    }

    pub fn get_or_build(self, build: impl FnOnce() -> Vocabulary) -> Result<Vocabulary> {
        let Some(dir) = self.dir else {
            return Ok(build());
        };
        let key = format!("{:x}", self.hasher.finalize());
        let path = dir.join(format!("vocab-{key}.txt"));
        if path.exists() {
            log::info!("vocabulary cache hit {}", path.display());
            return Vocabulary::load(&path).with_context(|| format!("cached {}", path.display()));
        }
        let vocab = build();
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        // Write then rename so a concurrent reader never sees a partial file.
        let tmp = dir.join(format!("vocab-{key}.tmp{}", std::process::id()));
        std::fs::write(&tmp, vocab.to_text())
            .with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
        Ok(vocab)
    }
}
