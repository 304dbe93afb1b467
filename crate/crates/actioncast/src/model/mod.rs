//! The structured action recognizer: three 3D-CNN stream encoders feeding
//! a fused embedding, two classifier heads (command, widget) and an LSTM
//! location-phrase decoder, trainable in multi-task, independent or
//! unstructured-sentence modes.

mod net;
mod train;
mod vocab;

pub use net::{
    backward_loss, forward_loss, ActionModel, EncoderSpec, Prediction, Sample, StreamTensors,
    Task,
};
pub use train::{
    evaluate, kfold_evaluate, load_dataset, train, DatasetSample, EvalOutcome, FoldReport,
    TrainConfig, TrainOutcome,
};
pub use vocab::Vocabulary;

use crate::error::{Error, Result};

macro_rules! closed_class {
    ($name:ident, $count:literal, [$(($variant:ident, $label:literal)),+ $(,)?]) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord,
                 serde::Serialize, serde::Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: [$name; $count] = [$($name::$variant),+];
            pub const COUNT: usize = $count;

            pub fn id(self) -> usize {
                Self::ALL.iter().position(|&c| c == self).unwrap()
            }

            pub fn from_id(id: usize) -> Option<Self> {
                Self::ALL.get(id).copied()
            }

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            pub fn parse(s: &str) -> Option<Self> {
                let norm = s.trim().to_lowercase().replace(['_', '-'], " ");
                Self::ALL
                    .iter()
                    .copied()
                    .find(|c| c.label().to_lowercase() == norm)
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

closed_class!(CommandClass, 11, [
    (Click, "click"),
    (Drag, "drag"),
    (Hover, "hover"),
    (ScrollDown, "scroll down"),
    (ScrollUp, "scroll up"),
    (Select, "select"),
    (Type, "type"),
    (ZoomIn, "zoom in"),
    (ZoomOut, "zoom out"),
    (Appear, "appear"),
    (Disappear, "disappear"),
]);

closed_class!(WidgetClass, 11, [
    (Button, "Button"),
    (Checkbox, "Checkbox"),
    (Dropdown, "Dropdown"),
    (Icon, "Icon"),
    (Image, "Image"),
    (Text, "Text"),
    (Window, "Window"),
    (Page, "Page"),
    (Tab, "Tab"),
    (Popup, "Popup"),
    (Others, "Others"),
]);

impl CommandClass {
    /// Lowercase word sequence, e.g. `["scroll", "down"]`.
    pub fn words(self) -> Vec<String> {
        self.label().split_whitespace().map(str::to_string).collect()
    }
}

impl WidgetClass {
    pub fn word(self) -> String {
        self.label().to_lowercase()
    }
}

/// One recognized action: how / what / where.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StructuredAction {
    pub command: CommandClass,
    pub widget: WidgetClass,
    pub location: Vec<String>,
}

impl StructuredAction {
    /// Surface form `[command] [Widget] [location words]`.
    pub fn surface(&self) -> String {
        format!(
            "[{}] [{}] [{}]",
            self.command.label(),
            self.widget.label(),
            self.location.join(" ")
        )
    }
}

/// The three model input streams, in the fixed fusion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash,
         serde::Serialize, serde::Deserialize)]
pub enum StreamKind {
    /// Cropped change regions.
    CropCR,
    /// Original frames.
    Origin,
    /// Similarity maps.
    SimMap,
}

impl StreamKind {
    pub const ALL: [StreamKind; 3] = [StreamKind::CropCR, StreamKind::Origin, StreamKind::SimMap];

    pub fn channels(self) -> usize {
        match self {
            StreamKind::SimMap => 1,
            _ => 3,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            StreamKind::CropCR => "crop",
            StreamKind::Origin => "origin",
            StreamKind::SimMap => "simmap",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().as_str() {
            "crop" | "cropcr" | "change" => Some(StreamKind::CropCR),
            "origin" | "original" | "orig" => Some(StreamKind::Origin),
            "simmap" | "sim" | "map" => Some(StreamKind::SimMap),
            _ => None,
        }
    }
}

/// How the three prediction tasks are optimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// One encoder set, summed loss over all three tasks.
    Multitask,
    /// Separate encoder copies per task, three separate update passes.
    Independent,
    /// Single decoder emitting "command widget location..." as one sentence.
    UnsentGen,
}

impl TrainMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().as_str() {
            "multitask" | "multi" => Some(TrainMode::Multitask),
            "independent" | "indep" => Some(TrainMode::Independent),
            "unsent_gen" | "unsentgen" | "unsent" => Some(TrainMode::UnsentGen),
            _ => None,
        }
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainMode::Multitask => "multitask",
            TrainMode::Independent => "independent",
            TrainMode::UnsentGen => "unsent_gen",
        })
    }
}

/// Everything needed to rebuild the model besides the parameter payload.
/// Saved as a JSON sidecar next to the parameter file.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ModelMeta {
    pub version: String,
    pub mode: TrainMode,
    /// Active streams in fusion order.
    pub streams: Vec<StreamKind>,
    pub side: usize,
    /// Normalized fragment length.
    pub s: usize,
    pub feat_dim: usize,
    pub head_hidden: usize,
    pub embed_dim: usize,
    pub lstm_hidden: usize,
    /// Location decoder cap.
    pub max_len: usize,
    pub command_classes: Vec<String>,
    pub widget_classes: Vec<String>,
    pub vocab: Vocabulary,
    pub seed: u64,
}

impl ModelMeta {
    pub fn new(
        mode: TrainMode,
        streams: &[StreamKind],
        side: usize,
        s: usize,
        vocab: Vocabulary,
        seed: u64,
    ) -> Result<Self> {
        let ordered: Vec<StreamKind> = StreamKind::ALL
            .iter()
            .copied()
            .filter(|k| streams.contains(k))
            .collect();
        if ordered.is_empty() {
            return Err(Error::EmptyStreams);
        }
        Ok(ModelMeta {
            version: crate::VERSION.to_string(),
            mode,
            streams: ordered,
            side,
            s,
            feat_dim: 512,
            head_hidden: 256,
            embed_dim: 64,
            lstm_hidden: 128,
            max_len: 6,
            command_classes: CommandClass::ALL.iter().map(|c| c.label().to_string()).collect(),
            widget_classes: WidgetClass::ALL.iter().map(|c| c.label().to_string()).collect(),
            vocab,
            seed,
        })
    }

    /// Fused embedding length: 512 per active stream.
    pub fn fused_len(&self) -> usize {
        self.feat_dim * self.streams.len()
    }

    /// Decoder step cap: location-only phrases use `max_len`; whole
    /// sentences need room for command and widget words too.
    pub fn decoder_steps(&self) -> usize {
        match self.mode {
            TrainMode::UnsentGen => self.max_len + 3,
            _ => self.max_len,
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("meta serialize: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("meta parse: {e}")))
    }
}

/// Parses an unstructured "command widget location..." sentence back into
/// a structured action. Two-word commands are matched greedily; returns
/// `None` when no command/widget prefix fits (a malformed sentence).
pub fn parse_unsent_sentence(tokens: &[String]) -> Option<StructuredAction> {
    let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    for take in (1..=2.min(lower.len())).rev() {
        let head = lower[..take].join(" ");
        let Some(command) = CommandClass::parse(&head) else {
            continue;
        };
        let Some(widget_tok) = lower.get(take) else {
            continue;
        };
        let Some(widget) = WidgetClass::parse(widget_tok) else {
            continue;
        };
        let location: Vec<String> = lower[take + 1..].to_vec();
        return Some(StructuredAction {
            command,
            widget,
            location,
        });
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_sets_are_closed_at_eleven() {
        assert_eq!(CommandClass::COUNT, 11);
        assert_eq!(WidgetClass::COUNT, 11);
        assert_eq!(CommandClass::ALL.len(), 11);
        assert_eq!(WidgetClass::ALL.len(), 11);
    }

    #[test]
    fn class_ids_round_trip() {
        for c in CommandClass::ALL {
            assert_eq!(CommandClass::from_id(c.id()), Some(c));
            assert_eq!(CommandClass::parse(c.label()), Some(c));
        }
        for w in WidgetClass::ALL {
            assert_eq!(WidgetClass::from_id(w.id()), Some(w));
            assert_eq!(WidgetClass::parse(w.label()), Some(w));
        }
        assert_eq!(CommandClass::parse("Scroll_Down"), Some(CommandClass::ScrollDown));
        assert_eq!(CommandClass::parse("bogus"), None);
    }

    #[test]
    fn unsent_parser_handles_multiword_commands() {
        let toks = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        let parsed = parse_unsent_sentence(&toks("scroll down page in window")).unwrap();
        assert_eq!(parsed.command, CommandClass::ScrollDown);
        assert_eq!(parsed.widget, WidgetClass::Page);
        assert_eq!(parsed.location, toks("in window"));

        let parsed = parse_unsent_sentence(&toks("click button in popup")).unwrap();
        assert_eq!(parsed.command, CommandClass::Click);
        assert_eq!(parsed.widget, WidgetClass::Button);

        assert!(parse_unsent_sentence(&toks("button click in popup")).is_none());
        assert!(parse_unsent_sentence(&toks("click in popup")).is_none());
        assert!(parse_unsent_sentence(&toks("")).is_none());
    }

    #[test]
    fn surface_form_matches_script_layout() {
        let a = StructuredAction {
            command: CommandClass::Click,
            widget: WidgetClass::Button,
            location: vec!["in".into(), "popup".into()],
        };
        assert_eq!(a.surface(), "[click] [Button] [in popup]");
    }
}
