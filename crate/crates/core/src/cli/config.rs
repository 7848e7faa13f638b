use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::engine::{RoleBackends, RunConfig};
use crate::roles::{BackendError, ModelBackend, RemoteChatBackend, RemoteChatConfig, Role, ScriptedBackend, TemplateSet};

/// How one role's backend is built.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    Scripted {
        script: PathBuf,
    },
    Remote {
        endpoint: String,
        model: String,
        #[serde(default)]
        temperature: f64,
        /// Name of the environment variable holding the key. The key itself never goes here.
        api_key_env: String,
        #[serde(default)]
        timeout_secs: Option<u64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    /// Used for any role without its own entry.
    pub default: Option<BackendSpec>,
    pub supervisor: Option<BackendSpec>,
    pub planner: Option<BackendSpec>,
    pub executor: Option<BackendSpec>,
}

/// Contents of a run configuration file (TOML).
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunConfig,
    pub template_dir: Option<PathBuf>,
    pub trace_dir: Option<PathBuf>,
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub backends: BackendsConfig,
}

impl FileConfig {
    /// Parses the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("config `{}`: {e}", path.display()))?;
        let mut config: FileConfig =
            toml::from_str(&text).map_err(|e| format!("config `{}`: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        config.template_dir.as_mut().map(resolve);
        config.trace_dir.as_mut().map(resolve);
        for spec in [
            &mut config.backends.default,
            &mut config.backends.supervisor,
            &mut config.backends.planner,
            &mut config.backends.executor,
        ]
        .into_iter()
        .flatten()
        {
            if let BackendSpec::Scripted { script } = spec {
                resolve(script);
            }
        }
        if let Some(dir) = &config.template_dir {
            config.run.templates = TemplateSet::load_dir(dir).map_err(|e| e.to_string())?;
        }
        config.run.validate().map_err(|e| format!("config `{}`: {e}", path.display()))?;
        Ok(config)
    }

    fn spec_for(&self, role: Role) -> Option<&BackendSpec> {
        let own = match role {
            Role::Supervisor => &self.backends.supervisor,
            Role::Planner => &self.backends.planner,
            Role::Executor => &self.backends.executor,
        };
        own.as_ref().or(self.backends.default.as_ref())
    }

    /// Builds every role backend. Remote credentials are checked here, before any run starts.
    pub fn build_backends(&self) -> Result<RoleBackends, String> {
        let mut built: BTreeMap<String, Arc<dyn ModelBackend>> = BTreeMap::new();
        let mut pick = |role: Role| -> Result<Arc<dyn ModelBackend>, String> {
            let spec = self
                .spec_for(role)
                .ok_or_else(|| format!("no backend configured for the {role} role"))?;
            let key = format!("{spec:?}");
            if let Some(existing) = built.get(&key) {
                return Ok(existing.clone());
            }
            let backend = build_backend(spec).map_err(|e| format!("{role} backend: {e}"))?;
            built.insert(key, backend.clone());
            Ok(backend)
        };
        Ok(RoleBackends {
            supervisor: pick(Role::Supervisor)?,
            planner: pick(Role::Planner)?,
            executor: pick(Role::Executor)?,
        })
    }
}

fn build_backend(spec: &BackendSpec) -> Result<Arc<dyn ModelBackend>, BackendError> {
    match spec {
        BackendSpec::Scripted { script } => Ok(Arc::new(ScriptedBackend::from_file(script)?)),
        BackendSpec::Remote {
            endpoint,
            model,
            temperature,
            api_key_env,
            timeout_secs,
        } => {
            let mut config = RemoteChatConfig {
                endpoint: endpoint.clone(),
                model: model.clone(),
                temperature: *temperature,
                api_key_env: api_key_env.clone(),
                timeout_secs: 120,
            };
            if let Some(t) = timeout_secs {
                config.timeout_secs = *t;
            }
            Ok(Arc::new(RemoteChatBackend::from_env(config)?))
        }
    }
}
