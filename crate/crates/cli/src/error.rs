use std::fmt;

use serde::Serialize;

/// Failure reported on stderr as one JSON object.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
    #[serde(skip)]
    pub exit_code: i32,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        CliError {
            error: kind.to_string(),
            message: message.into(),
            details: Vec::new(),
            exit_code: 1,
        }
    }

    pub fn details(mut self, details: Vec<String>) -> Self {
        self.details = details;
        self
    }

    pub fn exit(mut self, code: i32) -> Self {
        self.exit_code = code;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", self.error))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.error, self.message)
    }
}

macro_rules! from_error {
    ($ty:ty, $kind:literal) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::new($kind, e.to_string())
            }
        }
    };
}

from_error!(std::io::Error, "io");
from_error!(cityometrics::record::IngestError, "ingest");
from_error!(cityometrics::gazetteer::GazetteerError, "gazetteer");
from_error!(cityometrics::delineation::DelineationError, "delineation");
from_error!(cityometrics::collab::CollabError, "collab");
from_error!(cityometrics::report::ReportError, "report");

impl From<cityometrics::counting::CountError> for CliError {
    fn from(e: cityometrics::counting::CountError) -> Self {
        use cityometrics::counting::CountError;
        let details = match &e {
            CountError::UnresolvedAffiliations { sample, .. } => sample
                .iter()
                .map(|(id, i)| format!("record {id} affiliation {i}"))
                .collect(),
            _ => Vec::new(),
        };
        CliError::new("count", e.to_string()).details(details)
    }
}
