use std::path::Path;

use crate::error::{Error, Result};
use crate::io::oracle_store::OracleStore;
use crate::mask_oracle::{MaskOracle, OracleResponse, PromptSet};
use crate::model::CameraView;

/// Serves responses exported offline by a real promptable segmenter.
/// Prompts are not re-run: the stored answer for (view, superpoint) is
/// returned as is.
#[derive(Debug, Clone)]
pub struct FileOracle {
    store: OracleStore,
}

impl FileOracle {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        Ok(FileOracle {
            store: OracleStore::load(dir)?,
        })
    }

    pub fn from_store(store: OracleStore) -> Self {
        FileOracle { store }
    }

    pub fn store(&self) -> &OracleStore {
        &self.store
    }
}

impl MaskOracle for FileOracle {
    fn query(&self, view: &CameraView, prompt: &PromptSet) -> Result<OracleResponse> {
        let resp = self.store.get(view.view_id, prompt.sp_id)?;
        let m = &resp.candidates[0].mask;
        if (m.width(), m.height()) != (view.width, view.height) {
            return Err(Error::Format(format!(
                "oracle entry (view {}, superpoint {}) is {}x{}, camera is {}x{}",
                view.view_id,
                prompt.sp_id,
                m.width(),
                m.height(),
                view.width,
                view.height
            )));
        }
        Ok(resp)
    }
}
