use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Segment-level content type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContentLabel {
    #[serde(rename = "NS")]
    Neutral,
    #[serde(rename = "L")]
    Laughter,
    #[serde(rename = "SL")]
    SpeechLaugh,
}

impl ContentLabel {
    pub const ALL: [ContentLabel; 3] = [ContentLabel::Neutral, ContentLabel::Laughter, ContentLabel::SpeechLaugh];

    pub fn as_str(self) -> &'static str {
        match self {
            ContentLabel::Neutral => "NS",
            ContentLabel::Laughter => "L",
            ContentLabel::SpeechLaugh => "SL",
        }
    }
}

impl fmt::Display for ContentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Utterance-level label: the set of segment labels it contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CompositeLabel {
    neutral: bool,
    laughter: bool,
    speech_laugh: bool,
}

impl CompositeLabel {
    pub const NS: CompositeLabel = CompositeLabel::new(true, false, false);
    pub const L: CompositeLabel = CompositeLabel::new(false, true, false);
    pub const SL: CompositeLabel = CompositeLabel::new(false, false, true);

    pub const fn new(neutral: bool, laughter: bool, speech_laugh: bool) -> Self {
        Self {
            neutral,
            laughter,
            speech_laugh,
        }
    }

    /// Set union of segment labels. `None` for an empty list.
    pub fn from_segments(segments: &[ContentLabel]) -> Option<Self> {
        if segments.is_empty() {
            return None;
        }
        let mut out = CompositeLabel::new(false, false, false);
        for s in segments {
            match s {
                ContentLabel::Neutral => out.neutral = true,
                ContentLabel::Laughter => out.laughter = true,
                ContentLabel::SpeechLaugh => out.speech_laugh = true,
            }
        }
        Some(out)
    }

    pub fn contains(&self, label: ContentLabel) -> bool {
        match label {
            ContentLabel::Neutral => self.neutral,
            ContentLabel::Laughter => self.laughter,
            ContentLabel::SpeechLaugh => self.speech_laugh,
        }
    }

    /// Member labels in canonical NS, L, SL order.
    pub fn members(&self) -> Vec<ContentLabel> {
        ContentLabel::ALL.into_iter().filter(|l| self.contains(*l)).collect()
    }
}

impl fmt::Display for CompositeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.members().iter().map(|l| l.as_str()).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for CompositeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut segments = Vec::new();
        for part in s.split('+') {
            let label = match part.trim() {
                "NS" => ContentLabel::Neutral,
                "L" => ContentLabel::Laughter,
                "SL" => ContentLabel::SpeechLaugh,
                other => return Err(Error::InvalidInput(format!("unknown content label `{other}`"))),
            };
            if segments.contains(&label) {
                return Err(Error::InvalidInput(format!("repeated content label in `{s}`")));
            }
            segments.push(label);
        }
        CompositeLabel::from_segments(&segments).ok_or_else(|| Error::InvalidInput("empty content label".into()))
    }
}

impl TryFrom<String> for CompositeLabel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CompositeLabel> for String {
    fn from(c: CompositeLabel) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SplitRole {
    Enroll,
    Test,
    /// Speakers reserved for UBM / T / back-end training.
    Background,
}

/// The seven dataset groupings of the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetTag {
    #[serde(rename = "DSET1")]
    Dset1,
    #[serde(rename = "DSET2")]
    Dset2,
    #[serde(rename = "DSET3")]
    Dset3,
    #[serde(rename = "DSET4")]
    Dset4,
    #[serde(rename = "DSET5")]
    Dset5,
    #[serde(rename = "DSET6")]
    Dset6,
    #[serde(rename = "DSET7")]
    Dset7,
}

impl DatasetTag {
    pub const ALL: [DatasetTag; 7] = [
        DatasetTag::Dset1,
        DatasetTag::Dset2,
        DatasetTag::Dset3,
        DatasetTag::Dset4,
        DatasetTag::Dset5,
        DatasetTag::Dset6,
        DatasetTag::Dset7,
    ];

    /// 1-based dataset number.
    pub fn index(self) -> usize {
        self as usize + 1
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i.wrapping_sub(1)).copied()
    }

    /// Content of every test utterance in this dataset.
    pub fn test_content(self) -> CompositeLabel {
        match self {
            DatasetTag::Dset1 => CompositeLabel::NS,
            DatasetTag::Dset2 => CompositeLabel::new(true, true, false),
            DatasetTag::Dset3 => CompositeLabel::new(true, false, true),
            DatasetTag::Dset4 => CompositeLabel::new(true, true, true),
            DatasetTag::Dset5 => CompositeLabel::L,
            DatasetTag::Dset6 => CompositeLabel::SL,
            DatasetTag::Dset7 => CompositeLabel::new(false, true, true),
        }
    }

    pub fn test_set_name(self) -> String {
        format!("TS{}", self.index())
    }
}

impl fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DSET{}", self.index())
    }
}

impl FromStr for DatasetTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.strip_prefix("DSET")
            .and_then(|n| n.parse::<usize>().ok())
            .and_then(DatasetTag::from_index)
            .ok_or_else(|| Error::InvalidInput(format!("unknown dataset tag `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_is_union_of_segments() {
        use ContentLabel::*;
        let c = CompositeLabel::from_segments(&[Neutral, Laughter, Neutral]).unwrap();
        assert_eq!(c, CompositeLabel::new(true, true, false));
        assert_eq!(c.to_string(), "NS+L");
        assert!(CompositeLabel::from_segments(&[]).is_none());
    }

    #[test]
    fn composite_parses_all_seven_forms() {
        for tag in DatasetTag::ALL {
            let c = tag.test_content();
            assert_eq!(c.to_string().parse::<CompositeLabel>().unwrap(), c);
        }
        assert!("NS+XX".parse::<CompositeLabel>().is_err());
        assert!("NS+NS".parse::<CompositeLabel>().is_err());
    }

    #[test]
    fn dataset_tags_serialize_as_dsetn() {
        assert_eq!(serde_json::to_string(&DatasetTag::Dset4).unwrap(), "\"DSET4\"");
        assert_eq!("DSET7".parse::<DatasetTag>().unwrap(), DatasetTag::Dset7);
        assert!("DSET8".parse::<DatasetTag>().is_err());
        assert!("DSET0".parse::<DatasetTag>().is_err());
        assert_eq!(serde_json::to_string(&SplitRole::Enroll).unwrap(), "\"ENROLL\"");
    }
}
