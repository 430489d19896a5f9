//! Trained model directory: three codebooks, the phone models and the
//! frontend settings they were trained with.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::frontend::{FrontendConfig, NUM_STREAMS};
use crate::hmm::{HmmError, PhoneModelSet};
use crate::vq::{Codebook, CodebookSet, VqError};

pub const FRONTEND_FILE: &str = "frontend.conf";
pub const PHONES_FILE: &str = "phones.hmm";

pub fn codebook_file(stream: usize) -> String {
    format!("codebook{stream}.cb")
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Codebook {
        path: PathBuf,
        #[source]
        source: VqError,
    },
    #[error("{path}: {source}")]
    Phones {
        path: PathBuf,
        #[source]
        source: HmmError,
    },
    #[error("{path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: ConfigError,
    },
    #[error("phone models use codebook sizes {models:?} but the codebooks have {codebooks:?}")]
    SizeMismatch {
        models: [usize; NUM_STREAMS],
        codebooks: [usize; NUM_STREAMS],
    },
}

fn read(path: &Path) -> Result<String, ModelError> {
    std::fs::read_to_string(path).map_err(|source| ModelError::Read { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<(), ModelError> {
    std::fs::write(path, text).map_err(|source| ModelError::Write { path: path.to_path_buf(), source })
}

/// Codebooks and frontend settings, the part of a model fixed before HMM training.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerModel {
    pub frontend: FrontendConfig,
    pub codebooks: CodebookSet,
}

impl QuantizerModel {
    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let path = dir.join(FRONTEND_FILE);
        let frontend = KeyValues::parse(&read(&path)?)
            .and_then(|kv| FrontendConfig::from_key_values(&kv))
            .map_err(|source| ModelError::Config { path, source })?;
        let mut books = Vec::with_capacity(NUM_STREAMS);
        for s in 0..NUM_STREAMS {
            let path = dir.join(codebook_file(s));
            books.push(Codebook::parse(&read(&path)?).map_err(|source| ModelError::Codebook { path, source })?);
        }
        let codebooks = CodebookSet::from_books(books)
            .map_err(|source| ModelError::Codebook { path: dir.to_path_buf(), source })?;
        Ok(Self { frontend, codebooks })
    }

    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        std::fs::create_dir_all(dir).map_err(|source| ModelError::Write { path: dir.to_path_buf(), source })?;
        write(&dir.join(FRONTEND_FILE), &self.frontend.to_config_text())?;
        for (s, book) in self.codebooks.books.iter().enumerate() {
            write(&dir.join(codebook_file(s)), &book.to_text())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    pub quantizer: QuantizerModel,
    pub phones: PhoneModelSet,
}

impl AcousticModel {
    pub fn new(quantizer: QuantizerModel, phones: PhoneModelSet) -> Result<Self, ModelError> {
        let codebooks = quantizer.codebooks.sizes();
        if let Some(m) = phones.iter().find(|m| m.ks() != codebooks) {
            return Err(ModelError::SizeMismatch { models: m.ks(), codebooks });
        }
        Ok(Self { quantizer, phones })
    }

    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let quantizer = QuantizerModel::load(dir)?;
        let phones = load_phones(dir)?;
        Self::new(quantizer, phones)
    }

    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        self.quantizer.save(dir)?;
        save_phones(dir, &self.phones)
    }
}

pub fn load_phones(dir: &Path) -> Result<PhoneModelSet, ModelError> {
    let path = dir.join(PHONES_FILE);
    PhoneModelSet::parse(&read(&path)?).map_err(|source| ModelError::Phones { path, source })
}

pub fn save_phones(dir: &Path, phones: &PhoneModelSet) -> Result<(), ModelError> {
    write(&dir.join(PHONES_FILE), &phones.to_text())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::init_flat;

    fn quantizer() -> QuantizerModel {
        let books = (0..3).map(|s| Codebook::new(s, vec![vec![0.0, 1.0], vec![2.0, -1.5]]).unwrap()).collect();
        QuantizerModel { frontend: FrontendConfig::default(), codebooks: CodebookSet::from_books(books).unwrap() }
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut phones = PhoneModelSet::default();
        phones.insert(init_flat("a", [2, 2, 2]));
        let model = AcousticModel::new(quantizer(), phones).unwrap();
        model.save(dir.path()).unwrap();
        assert_eq!(AcousticModel::load(dir.path()).unwrap(), model);
    }

    #[test]
    fn errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        quantizer().save(dir.path()).unwrap();
        let err = AcousticModel::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains(PHONES_FILE), "{err}");
        std::fs::write(dir.path().join("codebook1.cb"), "junk").unwrap();
        let err = QuantizerModel::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("codebook1.cb"), "{err}");
    }

    #[test]
    fn size_mismatch() {
        let mut phones = PhoneModelSet::default();
        phones.insert(init_flat("a", [4, 2, 2]));
        assert!(matches!(AcousticModel::new(quantizer(), phones), Err(ModelError::SizeMismatch { .. })));
    }
}
