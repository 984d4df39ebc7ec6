use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use claim_match::embedding::{EmbeddingProvider, FileProvider, HashedNGramEncoder, OutputMode, RemoteProvider, ToyProvider};

use crate::args::ProviderArgs;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    File(PathBuf),
    Remote(String),
    Toy(PathBuf),
}

impl FromStr for ProviderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_once(':').ok_or_else(|| format!("`{s}`: expected file:PATH, remote:URL or toy:PATH"))?;
        if rest.is_empty() {
            return Err(format!("`{s}`: nothing after `{kind}:`"));
        }
        match kind {
            "file" => Ok(ProviderSpec::File(rest.into())),
            "remote" => Ok(ProviderSpec::Remote(rest.into())),
            "toy" => Ok(ProviderSpec::Toy(rest.into())),
            _ => Err(format!("unknown provider kind `{kind}` (expected file, remote or toy)")),
        }
    }
}

impl fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderSpec::File(p) => write!(f, "file:{}", p.display()),
            ProviderSpec::Remote(u) => write!(f, "remote:{u}"),
            ProviderSpec::Toy(p) => write!(f, "toy:{}", p.display()),
        }
    }
}

impl ProviderArgs {
    /// The spec after applying the URL override.
    pub fn resolve(&self) -> Result<ProviderSpec, CliError> {
        match (&self.provider, &self.provider_url) {
            (Some(ProviderSpec::Remote(_)) | None, Some(url)) => Ok(ProviderSpec::Remote(url.clone())),
            (Some(spec), _) => Ok(spec.clone()),
            (None, None) => Err(CliError::Usage("an embedding provider is required (--provider or CLAIM_MATCH_PROVIDER)".into())),
        }
    }

    pub fn open(&self) -> Result<Arc<dyn EmbeddingProvider>, CliError> {
        open(&self.resolve()?)
    }
}

pub fn open(spec: &ProviderSpec) -> Result<Arc<dyn EmbeddingProvider>, CliError> {
    let provider: Arc<dyn EmbeddingProvider> = match spec {
        ProviderSpec::File(path) => {
            Arc::new(FileProvider::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?)
        }
        ProviderSpec::Remote(url) => Arc::new(RemoteProvider::new(url, None).map_err(CliError::data)?),
        ProviderSpec::Toy(path) => {
            let encoder = HashedNGramEncoder::<f32>::load(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            Arc::new(ToyProvider::new(spec.to_string(), encoder, OutputMode::Normalized))
        }
    };
    tracing::info!(provider = provider.name(), dim = provider.dim(), "provider ready");
    Ok(provider)
}
