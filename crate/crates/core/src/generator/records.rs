use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{EditScenario, KnowledgeSet, QuestionPlan, Setting};
use crate::jsonl::{self, LineError};

/// One line of a generated-set file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetRecord {
    Kset(KnowledgeSet),
    Scenario(EditScenario),
    Plan(QuestionPlan),
}

/// A knowledge set with its scenarios and one plan per setting.
#[derive(Clone, Debug, PartialEq)]
pub struct SetBundle {
    pub kset: KnowledgeSet,
    pub scenarios: Vec<EditScenario>,
    pub plans: BTreeMap<Setting, QuestionPlan>,
}

impl SetBundle {
    pub fn plan(&self, setting: Setting) -> Option<&QuestionPlan> {
        self.plans.get(&setting)
    }

    pub fn records(&self) -> impl Iterator<Item = SetRecord> + '_ {
        std::iter::once(SetRecord::Kset(self.kset.clone()))
            .chain(self.scenarios.iter().cloned().map(SetRecord::Scenario))
            .chain(self.plans.values().cloned().map(SetRecord::Plan))
    }
}

pub fn write_set_records<W: Write>(bundles: &[SetBundle], mut writer: W) -> std::io::Result<()> {
    for b in bundles {
        for r in b.records() {
            jsonl::write_record(&mut writer, &r)?;
        }
    }
    writer.flush()
}

/// Groups records by knowledge set. Scenario and plan records must follow
/// the `kset` record they reference.
pub fn read_set_records<R: BufRead>(reader: R) -> Result<Vec<SetBundle>, LineError> {
    let mut out: Vec<SetBundle> = Vec::new();
    for (line, record) in jsonl::read_records::<SetRecord, _>(reader)? {
        let owner = |id: &str, out: &mut Vec<SetBundle>| -> Result<usize, LineError> {
            out.iter()
                .rposition(|b| b.kset.id == id)
                .ok_or_else(|| LineError {
                    line,
                    message: format!("record references unknown knowledge set `{id}`"),
                })
        };
        match record {
            SetRecord::Kset(kset) => out.push(SetBundle {
                kset,
                scenarios: Vec::new(),
                plans: BTreeMap::new(),
            }),
            SetRecord::Scenario(s) => {
                let i = owner(&s.kset, &mut out)?;
                out[i].scenarios.push(s);
            }
            SetRecord::Plan(p) => {
                let i = owner(&p.kset, &mut out)?;
                out[i].plans.insert(p.setting, p);
            }
        }
    }
    Ok(out)
}
