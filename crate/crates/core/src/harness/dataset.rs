use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::HarnessError;

/// Task category labels used by the category-conditioned baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    AlgorithmDesign,
    StringManipulation,
    ListProcessing,
    MathematicalComputation,
    ParsingFormatting,
    LogicalConditions,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::AlgorithmDesign,
        Category::StringManipulation,
        Category::ListProcessing,
        Category::MathematicalComputation,
        Category::ParsingFormatting,
        Category::LogicalConditions,
    ];
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        let found = match norm.as_str() {
            "algorithmdesign" => Category::AlgorithmDesign,
            "stringmanipulation" => Category::StringManipulation,
            "listprocessing" => Category::ListProcessing,
            "mathematicalcomputation" => Category::MathematicalComputation,
            "parsingformatting" => Category::ParsingFormatting,
            "logicalconditions" => Category::LogicalConditions,
            _ => return Err(format!("unknown category {s:?}")),
        };
        Ok(found)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub prompt: String,
    pub reference_solution: String,
    pub tests: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Mbpp,
    #[serde(alias = "human_eval")]
    HumanEval,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mbpp" => Ok(DatasetFormat::Mbpp),
            "humaneval" | "human_eval" => Ok(DatasetFormat::HumanEval),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

fn field<'a>(row: &'a Value, name: &'static str, idx: usize) -> Result<&'a Value, HarnessError> {
    row.get(name).filter(|v| !v.is_null()).ok_or(HarnessError::Schema { field: name, row: idx })
}

fn text(row: &Value, name: &'static str, idx: usize) -> Result<String, HarnessError> {
    field(row, name, idx)?.as_str().map(str::to_string).ok_or(HarnessError::Schema { field: name, row: idx })
}

fn id_of(row: &Value, idx: usize) -> Result<String, HarnessError> {
    match field(row, "task_id", idx)? {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(HarnessError::Schema { field: "task_id", row: idx }),
    }
}

fn category_of(row: &Value, idx: usize) -> Result<Option<Category>, HarnessError> {
    match row.get("category") {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => s.parse().map(Some).map_err(|_| HarnessError::Schema { field: "category", row: idx }),
        Some(_) => Err(HarnessError::Schema { field: "category", row: idx }),
    }
}

fn mbpp_row(row: &Value, idx: usize) -> Result<TaskInstance, HarnessError> {
    let id = id_of(row, idx)?;
    let prompt = text(row, "text", idx)?;
    let reference_solution = text(row, "code", idx)?;
    let list = field(row, "test_list", idx)?.as_array().ok_or(HarnessError::Schema { field: "test_list", row: idx })?;
    let setup = row.get("test_setup_code").and_then(Value::as_str).map(str::trim).unwrap_or_default();
    let tests = list
        .iter()
        .map(|t| {
            let t = t.as_str().ok_or(HarnessError::Schema { field: "test_list", row: idx })?;
            Ok(if setup.is_empty() { t.to_string() } else { format!("{setup}\n{t}") })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(TaskInstance { id, prompt, reference_solution, tests, category: category_of(row, idx)? })
}

fn humaneval_row(row: &Value, idx: usize) -> Result<TaskInstance, HarnessError> {
    let id = id_of(row, idx)?;
    let prompt = text(row, "prompt", idx)?;
    let entry_point = text(row, "entry_point", idx)?;
    let canonical = text(row, "canonical_solution", idx)?;
    let test = text(row, "test", idx)?;
    Ok(TaskInstance {
        id,
        prompt: format!("{}\nEntry point: {entry_point}", prompt.trim_end()),
        reference_solution: format!("{prompt}{canonical}"),
        tests: vec![format!("{}\ncheck({entry_point})", test.trim_end())],
        category: category_of(row, idx)?,
    })
}

/// Loads a JSONL benchmark file. Rows are indexed from 0 in error reports.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<TaskInstance>, HarnessError> {
    let content = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_dataset(&content, format)
}

pub fn parse_dataset(content: &str, format: DatasetFormat) -> Result<Vec<TaskInstance>, HarnessError> {
    let mut tasks = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in content.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let row: Value =
            serde_json::from_str(line).map_err(|e| HarnessError::Json(format!("dataset row {idx}: {e}")))?;
        let task = match format {
            DatasetFormat::Mbpp => mbpp_row(&row, idx)?,
            DatasetFormat::HumanEval => humaneval_row(&row, idx)?,
        };
        if task.tests.is_empty() {
            return Err(HarnessError::Schema { field: "tests", row: idx });
        }
        if !seen.insert(task.id.clone()) {
            return Err(HarnessError::Schema { field: "task_id", row: idx });
        }
        tasks.push(task);
    }
    Ok(tasks)
}

/// Reads a `{task_id: category}` annotation file.
pub fn load_categories(path: &Path) -> Result<BTreeMap<String, Category>, HarnessError> {
    let content = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let raw: BTreeMap<String, String> =
        serde_json::from_str(&content).map_err(|e| HarnessError::Json(format!("{}: {e}", path.display())))?;
    raw.into_iter()
        .map(|(id, c)| c.parse().map(|c| (id, c)).map_err(HarnessError::Json))
        .collect()
}

pub fn apply_categories(tasks: &mut [TaskInstance], categories: &BTreeMap<String, Category>) {
    for t in tasks {
        if let Some(c) = categories.get(&t.id) {
            t.category = Some(*c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MBPP_ROW: &str = r#"{"task_id": 11, "text": "Write a python function to remove first and last occurrence of a given character from the string.", "code": "def remove_Occ(s,ch):\n    return s", "test_list": ["assert remove_Occ(\"hello\",\"l\") == \"heo\"", "assert remove_Occ(\"abcda\",\"a\") == \"bcd\"", "assert remove_Occ(\"PHP\",\"P\") == \"H\""], "test_setup_code": "", "challenge_test_list": []}"#;

    #[test]
    fn mbpp_mapping() {
        let tasks = parse_dataset(MBPP_ROW, DatasetFormat::Mbpp).unwrap();
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].id, "11");
        assert_eq!(tasks[0].tests.len(), 3);
        assert!(tasks[0].prompt.starts_with("Write a python function"));
        assert!(tasks[0].reference_solution.starts_with("def remove_Occ"));
    }

    #[test]
    fn humaneval_mapping() {
        let row = r#"{"task_id": "HumanEval/0", "prompt": "def add(a, b):\n    \"\"\"Add.\"\"\"\n", "canonical_solution": "    return a + b\n", "test": "def check(candidate):\n    assert candidate(1, 2) == 3\n", "entry_point": "add"}"#;
        let tasks = parse_dataset(row, DatasetFormat::HumanEval).unwrap();
        let t = &tasks[0];
        assert_eq!(t.id, "HumanEval/0");
        assert!(t.prompt.ends_with("Entry point: add"));
        assert!(t.reference_solution.contains("return a + b"));
        assert!(t.tests[0].ends_with("check(add)"));
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        assert!(parse_dataset("", DatasetFormat::Mbpp).unwrap().is_empty());
        assert!(parse_dataset("\n\n", DatasetFormat::HumanEval).unwrap().is_empty());
    }

    #[test]
    fn missing_field_names_field_and_row() {
        let bad = r#"{"task_id": 2, "text": "t", "code": "c"}"#;
        let content = format!("{MBPP_ROW}\n{bad}");
        match parse_dataset(&content, DatasetFormat::Mbpp) {
            Err(HarnessError::Schema { field, row }) => assert_eq!((field, row), ("test_list", 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let content = format!("{MBPP_ROW}\n{MBPP_ROW}");
        assert!(matches!(
            parse_dataset(&content, DatasetFormat::Mbpp),
            Err(HarnessError::Schema { field: "task_id", row: 1 })
        ));
    }

    #[test]
    fn category_spellings() {
        assert_eq!("Algorithm Design".parse::<Category>().unwrap(), Category::AlgorithmDesign);
        assert_eq!("parsing_formatting".parse::<Category>().unwrap(), Category::ParsingFormatting);
        assert_eq!(Category::ListProcessing.to_string(), "list_processing");
        assert!("poetry".parse::<Category>().is_err());
    }
}
