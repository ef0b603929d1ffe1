use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

pub const SYSTEM_PROMPT: &str = "You are a medical professional who has excellent medical knowledge and is happy to review and annotate medical notes.";

const OUTPUT_SPEC: &str = "The output should have:\n1. the text of entity: entity\n2. the entity type: entity_type";

/// The three shared-task benchmarks that ship with a built-in schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Benchmark {
    #[serde(rename = "2012")]
    Temporal2012,
    #[serde(rename = "2014")]
    Deid2014,
    #[serde(rename = "2018")]
    Medication2018,
}

impl Benchmark {
    pub const ALL: [Benchmark; 3] = [
        Benchmark::Temporal2012,
        Benchmark::Deid2014,
        Benchmark::Medication2018,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Benchmark::Temporal2012 => "2012",
            Benchmark::Deid2014 => "2014",
            Benchmark::Medication2018 => "2018",
        }
    }

    pub fn schema(self) -> TaskSchema {
        match self {
            Benchmark::Temporal2012 => TaskSchema {
                task_id: "2012".into(),
                entity_types: vec!["EVENT".into(), "TIMEX3".into()],
                instruction: format!(
                    "This is a named entity recognition task. Given a medical note, annotate the events (EVENT) and time expressions (TIMEX3):\n{OUTPUT_SPEC}"
                ),
                system_prompt: SYSTEM_PROMPT.into(),
            },
            Benchmark::Deid2014 => {
                let groups: [(&str, &[&str]); 7] = [
                    ("NAME", &["PATIENT", "DOCTOR", "USERNAME"]),
                    ("PROFESSION", &[]),
                    (
                        "LOCATION",
                        &[
                            "HOSPITAL",
                            "ORGANIZATION",
                            "STREET",
                            "CITY",
                            "STATE",
                            "COUNTRY",
                            "ZIP",
                            "LOCATION-OTHER",
                        ],
                    ),
                    ("AGE", &[]),
                    ("DATE", &[]),
                    ("CONTACT", &["PHONE", "FAX", "EMAIL", "URL"]),
                    ("ID", &["BIOID", "DEVICE", "HEALTHPLAN", "IDNUM", "MEDICALRECORD"]),
                ];
                let mut types = Vec::new();
                let mut listing = String::new();
                for (i, (group, subs)) in groups.iter().enumerate() {
                    listing.push_str(&format!("{}. {}\n", i + 1, group));
                    if subs.is_empty() {
                        types.push(group.to_string());
                    }
                    for (j, sub) in subs.iter().enumerate() {
                        let name = format!("{group}_{sub}");
                        let letter = (b'a' + j as u8) as char;
                        listing.push_str(&format!(" - {letter}. {name}\n"));
                        types.push(name);
                    }
                }
                TaskSchema {
                    task_id: "2014".into(),
                    entity_types: types,
                    instruction: format!(
                        "This is a named entity recognition task. Given a medical note, annotate the Protected Health Information (PHI):\n{listing}{OUTPUT_SPEC}"
                    ),
                    system_prompt: SYSTEM_PROMPT.into(),
                }
            }
            Benchmark::Medication2018 => TaskSchema {
                task_id: "2018".into(),
                entity_types: [
                    "Drug", "Form", "Strength", "Frequency", "Route", "Dosage", "Reason", "ADE",
                    "Duration",
                ]
                .iter()
                .map(|s| s.to_string())
                .collect(),
                instruction: format!(
                    "This is a named entity recognition task. Given a medical note, annotate the Drug, Form, Strength, Frequency, Route, Dosage, Reason, ADE, and Duration.\n{OUTPUT_SPEC}"
                ),
                system_prompt: SYSTEM_PROMPT.into(),
            },
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Benchmark {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "2012" => Ok(Benchmark::Temporal2012),
            "2014" => Ok(Benchmark::Deid2014),
            "2018" => Ok(Benchmark::Medication2018),
            other => Err(CorpusError::Schema(format!("unknown benchmark {other:?}"))),
        }
    }
}

/// Entity-type inventory and prompt text for one labeling task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSchema {
    pub task_id: String,
    pub entity_types: Vec<String>,
    pub instruction: String,
    pub system_prompt: String,
}

impl TaskSchema {
    /// Build a custom schema. Types must be non-empty and unique.
    pub fn new(
        task_id: impl Into<String>,
        entity_types: Vec<String>,
        instruction: impl Into<String>,
        system_prompt: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let schema = TaskSchema {
            task_id: task_id.into(),
            entity_types,
            instruction: instruction.into(),
            system_prompt: system_prompt.into(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.entity_types.is_empty() {
            return Err(CorpusError::Schema("entity type list is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for t in &self.entity_types {
            if t.is_empty() {
                return Err(CorpusError::Schema("empty entity type name".into()));
            }
            if !seen.insert(t.as_str()) {
                return Err(CorpusError::Schema(format!("duplicate entity type {t:?}")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, entity_type: &str) -> bool {
        self.entity_types.iter().any(|t| t == entity_type)
    }
}
