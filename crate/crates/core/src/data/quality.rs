//! Text sidecars: the class vocabulary JSON and the per-class label quality
//! CSV.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ClassMap;
use crate::error::{Error, Result};

/// Human-verified label quality in `[0, 1]`, keyed by class index.
pub type QualityMap = ClassMap<f64>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Vocabulary {
    classes: Vec<String>,
}

/// Parses `{"classes": [...]}`. Names must be non-empty and unique.
pub fn parse_vocabulary(text: &str) -> Result<Vec<String>> {
    let vocab: Vocabulary = serde_json::from_str(text).map_err(|e| {
        let offset = line_col_offset(text, e.line(), e.column());
        Error::format(offset, format!("vocabulary: {e}"))
    })?;
    if vocab.classes.is_empty() {
        return Err(Error::format(0, "vocabulary lists no classes"));
    }
    for (i, name) in vocab.classes.iter().enumerate() {
        if name.is_empty() || name.contains(['\n', '\r']) {
            return Err(Error::format(0, format!("class {i} has an unusable name")));
        }
        if vocab.classes[..i].contains(name) {
            return Err(Error::format(0, format!("class name {name:?} repeated")));
        }
    }
    Ok(vocab.classes)
}

pub fn vocabulary_json(classes: &[String]) -> String {
    let vocab = Vocabulary {
        classes: classes.to_vec(),
    };
    serde_json::to_string_pretty(&vocab).expect("strings always serialise") + "\n"
}

pub fn read_vocabulary(path: impl AsRef<Path>) -> Result<Vec<String>> {
    parse_vocabulary(&fs::read_to_string(path)?)
}

pub fn write_vocabulary(path: impl AsRef<Path>, classes: &[String]) -> Result<()> {
    fs::write(path, vocabulary_json(classes))?;
    Ok(())
}

fn line_col_offset(text: &str, line: usize, col: usize) -> u64 {
    let before: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (before + col.saturating_sub(1)) as u64
}

/// Parses `class_name,quality` lines against a class vocabulary.
///
/// A leading `class_name,quality` header and blank lines are skipped.
pub fn parse_quality(text: &str, classes: &[String]) -> Result<QualityMap> {
    let mut map = QualityMap::new();
    let mut offset = 0u64;
    for (lineno, raw) in text.split_inclusive('\n').enumerate() {
        let at = offset;
        offset += raw.len() as u64;
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() || (lineno == 0 && line.trim() == "class_name,quality") {
            continue;
        }
        let (name, value) = line.rsplit_once(',').ok_or_else(|| {
            Error::format(
                at,
                format!("line {}: expected class_name,quality", lineno + 1),
            )
        })?;
        let name = name.trim();
        let k = classes.iter().position(|c| c == name).ok_or_else(|| {
            Error::format(at, format!("line {}: unknown class {name:?}", lineno + 1))
        })?;
        let q: f64 = value.trim().parse().map_err(|_| {
            Error::format(
                at,
                format!("line {}: quality {value:?} is not a number", lineno + 1),
            )
        })?;
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::format(
                at,
                format!("line {}: quality {q} outside [0, 1]", lineno + 1),
            ));
        }
        if map.insert(k, q).is_some() {
            return Err(Error::format(
                at,
                format!("line {}: class {name:?} listed twice", lineno + 1),
            ));
        }
    }
    Ok(map)
}

pub fn load_quality_file(path: impl AsRef<Path>, classes: &[String]) -> Result<QualityMap> {
    parse_quality(&fs::read_to_string(path)?, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        ["harpsichord", "hiccup", "speech"]
            .map(String::from)
            .to_vec()
    }

    #[test]
    fn quality_loads_known_classes() {
        let q = parse_quality(
            "class_name,quality\nharpsichord,0.4\nhiccup,1.0\n",
            &names(),
        )
        .unwrap();
        assert_eq!(q.get(&0), Some(&0.4));
        assert_eq!(q.get(&1), Some(&1.0));
        assert_eq!(q.len(), 2);
    }

    #[test]
    fn quality_out_of_range_rejected() {
        let e = parse_quality("speech,1.2\n", &names()).unwrap_err();
        assert!(matches!(e, Error::Format { offset: 0, .. }));
        assert!(parse_quality("speech,-0.1", &names()).is_err());
        assert!(parse_quality("speech,NaN", &names()).is_err());
    }

    #[test]
    fn quality_unknown_class_reports_line_offset() {
        let e = parse_quality("speech,0.5\nbanjo,0.3\n", &names()).unwrap_err();
        match e {
            Error::Format { offset, message } => {
                assert_eq!(offset, 11);
                assert!(message.contains("banjo"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_quality_file_is_empty_map() {
        assert!(parse_quality("", &names()).unwrap().is_empty());
        assert!(parse_quality("class_name,quality\n", &names())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn vocabulary_round_trip() {
        let text = vocabulary_json(&names());
        assert_eq!(parse_vocabulary(&text).unwrap(), names());
    }

    #[test]
    fn vocabulary_rejects_bad_input() {
        assert!(parse_vocabulary("{\"classes\": []}").is_err());
        assert!(parse_vocabulary("{\"classes\": [\"a\", \"a\"]}").is_err());
        assert!(parse_vocabulary("{\"classes\": [\"a\"], \"x\": 1}").is_err());
        assert!(matches!(
            parse_vocabulary("{\"classes\": [1]"),
            Err(Error::Format { .. })
        ));
    }
}
