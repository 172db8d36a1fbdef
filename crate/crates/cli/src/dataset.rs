//! Dataset files and the embedded benchmarks.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use ppsynth::datasets::{self, BUILTIN_NAMES};
use ppsynth::decoder::builtin::builtin_response;
use ppsynth::Dataset;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub name: String,
    pub columns: IndexMap<String, Vec<f64>>,
    pub meta: Meta,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    #[serde(default)]
    pub description: String,
    /// Columns holding counts. Every other column is real-valued.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub integer_columns: Vec<String>,
    /// Column the builtin generator should treat as the response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
}

impl DatasetFile {
    pub fn into_dataset(self) -> Result<(Dataset, Option<String>), CliError> {
        for c in &self.meta.integer_columns {
            if !self.columns.contains_key(c) {
                return Err(CliError::input(format!("integer column `{c}` is not in the dataset")));
            }
        }
        if let Some(r) = &self.meta.response {
            if !self.columns.contains_key(r) {
                return Err(CliError::input(format!("response column `{r}` is not in the dataset")));
            }
        }
        let mut ds = Dataset::new(self.name, self.meta.description);
        for (name, values) in self.columns {
            ds = if self.meta.integer_columns.contains(&name) { ds.int(&name, values) } else { ds.real(&name, values) };
        }
        ds.validate().map_err(|e| CliError::input(e.to_string()))?;
        Ok((ds, self.meta.response))
    }

    pub fn from_dataset(ds: &Dataset, response: Option<&str>) -> DatasetFile {
        DatasetFile {
            name: ds.name.clone(),
            columns: ds.columns.iter().map(|(k, c)| (k.clone(), c.values.clone())).collect(),
            meta: Meta {
                description: ds.description.clone(),
                integer_columns: ds.columns.iter().filter(|(_, c)| c.integer).map(|(k, _)| k.clone()).collect(),
                response: response.map(str::to_string),
            },
        }
    }
}

/// A loaded dataset with the response column hint used by the builtin
/// generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub dataset: Dataset,
    pub response: Option<String>,
}

/// Resolves a builtin name first, then a file path.
pub fn load_dataset(source: &str) -> Result<Loaded, CliError> {
    if let Some(dataset) = datasets::builtin(source) {
        return Ok(Loaded { dataset, response: builtin_response(source).map(str::to_string) });
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(CliError::input(format!(
            "`{source}` is neither a builtin dataset ({}) nor an existing file",
            BUILTIN_NAMES.join(", ")
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{source}: {e}")))?;
    let file: DatasetFile = serde_json::from_str(&text).map_err(|e| CliError::input(format!("{source}: {e}")))?;
    let (dataset, response) = file.into_dataset()?;
    Ok(Loaded { dataset, response })
}
