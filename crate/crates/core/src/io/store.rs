//! Whole-directory checks over the files an export produces: the oracle
//! store, feature maps and instance maps.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::imap::InstanceMapStore;
use crate::io::oracle_store::OracleStore;
use crate::mask_oracle::{FeatureStore, PromptSet};
use crate::model::CameraView;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StoreReport {
    pub oracle_entries: usize,
    pub feature_maps: usize,
    pub instance_maps: usize,
    /// Prompts from the dump with no stored answer.
    pub missing_answers: usize,
    pub problems: Vec<String>,
}

impl StoreReport {
    pub fn is_ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Checks every file in `dir`. With `cameras`, image sizes and per-view
/// coverage are checked too; with `prompts`, every prompt must have an
/// oracle answer. Problems are collected rather than returned early.
pub fn validate_store(dir: impl AsRef<Path>, cameras: Option<&[CameraView]>, prompts: Option<&[PromptSet]>) -> StoreReport {
    let dir = dir.as_ref();
    let mut report = StoreReport::default();
    let views: Option<Vec<(u32, u32, u32)>> =
        cameras.map(|c| c.iter().map(|v| (v.view_id, v.height, v.width)).collect());
    let size_of = |id: u32| views.as_ref().and_then(|v| v.iter().find(|x| x.0 == id)).map(|x| (x.1, x.2));

    match OracleStore::load(dir) {
        Ok(store) => {
            report.oracle_entries = store.len();
            if let Err(e) = store.validate() {
                report.problems.push(format!("oracle store: {e}"));
            }
            if views.is_some() {
                for e in &store.index.entries {
                    match size_of(e.view_id) {
                        None => report
                            .problems
                            .push(format!("oracle entry for unknown view {}", e.view_id)),
                        Some(hw) if hw != (e.height, e.width) => report.problems.push(format!(
                            "oracle entry (view {}, superpoint {}) is {}x{}, camera is {}x{}",
                            e.view_id, e.sp_id, e.height, e.width, hw.0, hw.1
                        )),
                        _ => {}
                    }
                }
            }
            if let Some(prompts) = prompts {
                let missing: Vec<&PromptSet> = prompts.iter().filter(|p| !store.contains(p.view_id, p.sp_id)).collect();
                report.missing_answers = missing.len();
                if let Some(p) = missing.first() {
                    report.problems.push(format!(
                        "{} prompts have no oracle answer, first (view {}, superpoint {})",
                        missing.len(),
                        p.view_id,
                        p.sp_id
                    ));
                }
            }
        }
        Err(e) => report.problems.push(format!("oracle store: {e}")),
    }

    match FeatureStore::load_dir(dir) {
        Ok(features) => {
            report.feature_maps = features.len();
            for fm in features.iter() {
                if let Err(e) = fm.validate() {
                    report.problems.push(e.to_string());
                }
            }
            let have: BTreeSet<u32> = features.iter().map(|f| f.view_id).collect();
            check_coverage(&mut report, "feature map", &have, views.as_deref());
        }
        Err(e) => report.problems.push(format!("feature maps: {e}")),
    }

    match InstanceMapStore::load_dir(dir) {
        Ok(maps) => {
            report.instance_maps = maps.len();
            for m in maps.iter() {
                if let Some(hw) = size_of(m.view_id) {
                    if hw != (m.height, m.width) {
                        report.problems.push(format!(
                            "instance map {} is {}x{}, camera is {}x{}",
                            m.view_id, m.height, m.width, hw.0, hw.1
                        ));
                    }
                }
            }
            let have: BTreeSet<u32> = maps.iter().map(|m| m.view_id).collect();
            check_coverage(&mut report, "instance map", &have, views.as_deref());
        }
        Err(e) => report.problems.push(format!("instance maps: {e}")),
    }
    report
}

fn check_coverage(report: &mut StoreReport, what: &str, have: &BTreeSet<u32>, views: Option<&[(u32, u32, u32)]>) {
    let Some(views) = views else { return };
    let missing: Vec<u32> = views.iter().map(|v| v.0).filter(|id| !have.contains(id)).collect();
    if !missing.is_empty() {
        report
            .problems
            .push(format!("no {what} for {} views, first view {}", missing.len(), missing[0]));
    }
}
