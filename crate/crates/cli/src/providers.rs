//! Provider construction from the config's role bindings.

use std::sync::Arc;

use wkm_core::env::TaskSuite;
use wkm_core::provider::{OracleProvider, Provider, ProviderRole, RemoteProvider};

use crate::config::{ProviderBlock, ProviderSource};

pub fn make_provider(
    block: &ProviderBlock,
    role: ProviderRole,
    suite: &Arc<TaskSuite>,
) -> Box<dyn Provider> {
    match block.source {
        ProviderSource::Oracle => Box::new(OracleProvider::new(role, suite.clone())),
        ProviderSource::Remote => Box::new(RemoteProvider::new(
            role,
            block.endpoint.clone().expect("validated"),
        )),
    }
}
