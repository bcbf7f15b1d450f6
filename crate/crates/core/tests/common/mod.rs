#![allow(dead_code)]

pub mod laws;
pub mod traces;

use std::collections::BTreeMap;
use std::sync::Arc;

use itemsmith_core::pipeline::{GenerationInput, Pipeline};
use itemsmith_core::prompts::Templates;
use itemsmith_core::providers::{MockBackend, ProviderHub, RetryPolicy, Role};
use itemsmith_core::samples;

pub struct Rig {
    pub hub: Arc<ProviderHub>,
    pub mocks: BTreeMap<Role, Arc<MockBackend>>,
    pub pipeline: Pipeline,
}

pub fn standard_roles() -> Vec<Role> {
    let mut roles = vec![Role::ConceptMapper, Role::QuestionWriter, Role::Evaluator, Role::FeatureExtractor];
    roles.extend(Role::item_writers(4));
    roles
}

/// Builtin fixtures, one mock per role, no retry delay.
pub fn rig() -> Rig {
    rig_with(|_| Vec::new())
}

pub fn rig_with(extra: impl Fn(&Role) -> Vec<itemsmith_core::providers::Fixture>) -> Rig {
    let mut hub = ProviderHub::new().with_retry(RetryPolicy::immediate(1));
    let mut mocks = BTreeMap::new();
    for role in standard_roles() {
        let mock = Arc::new(MockBackend::new("mock"));
        mock.load(samples::builtin_fixtures(&role)).unwrap();
        mock.load(extra(&role)).unwrap();
        hub = hub.with_role(role.clone(), mock.clone());
        mocks.insert(role, mock);
    }
    let hub = Arc::new(hub);
    let pipeline = Pipeline::new(hub.clone(), Arc::new(Templates::bundled()));
    Rig { hub, mocks, pipeline }
}

pub fn lo_input() -> GenerationInput {
    GenerationInput::learning_objective(
        samples::LEARNING_OBJECTIVE,
        samples::PHOTOSYNTHESIS_DISCIPLINE,
        samples::PHOTOSYNTHESIS_LEVEL,
    )
}

pub fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
