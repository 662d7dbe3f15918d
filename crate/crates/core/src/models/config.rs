use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::labels::PHONEME_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Acoustic,
    Visual,
    AudioVisual,
    AudioVisualAttention,
}

impl Modality {
    pub fn is_fused(self) -> bool {
        matches!(self, Modality::AudioVisual | Modality::AudioVisualAttention)
    }

    pub fn uses_audio(self) -> bool {
        self != Modality::Visual
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Acoustic => "acoustic",
            Modality::Visual => "visual",
            Modality::AudioVisual => "audiovisual",
            Modality::AudioVisualAttention => "audiovisual_attention",
        })
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "acoustic" => Modality::Acoustic,
            "visual" => Modality::Visual,
            "audiovisual" => Modality::AudioVisual,
            "audiovisual_attention" => Modality::AudioVisualAttention,
            other => return Err(Error::Config(format!("unknown modality `{other}`"))),
        })
    }
}

/// What the sub-networks hand to the fusion stage at each midpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FusionInput {
    /// Final-layer activations before the softmax.
    #[default]
    Logits,
    /// Softmax posteriors.
    Probabilities,
}

impl fmt::Display for FusionInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionInput::Logits => "logits",
            FusionInput::Probabilities => "probabilities",
        })
    }
}

impl FromStr for FusionInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logits" => Ok(FusionInput::Logits),
            "probabilities" => Ok(FusionInput::Probabilities),
            other => Err(Error::Config(format!("unknown fusion_input `{other}`"))),
        }
    }
}

/// One element of a convolution stack, written `c<k>x<k>x<channels>[s<stride>]`
/// (same padding) or `p<size>[s<stride>]` (max pool, stride defaults to size).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvSpec {
    Conv { kernel: usize, channels: usize, stride: usize },
    Pool { size: usize, stride: usize },
}

impl fmt::Display for ConvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ConvSpec::Conv { kernel, channels, stride } => {
                write!(f, "c{kernel}x{kernel}x{channels}")?;
                if stride != 1 {
                    write!(f, "s{stride}")?;
                }
                Ok(())
            }
            ConvSpec::Pool { size, stride } => {
                write!(f, "p{size}")?;
                if stride != size {
                    write!(f, "s{stride}")?;
                }
                Ok(())
            }
        }
    }
}

fn split_stride(s: &str) -> Result<(&str, Option<usize>)> {
    match s.split_once('s') {
        None => Ok((s, None)),
        Some((head, st)) => Ok((head, Some(parse_pos(st, s)?))),
    }
}

fn parse_pos(v: &str, ctx: &str) -> Result<usize> {
    match v.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(Error::Config(format!("bad number `{v}` in conv spec `{ctx}`"))),
    }
}

impl FromStr for ConvSpec {
    type Err = Error;

    fn from_str(raw: &str) -> Result<Self> {
        let s = raw.trim();
        if let Some(rest) = s.strip_prefix('c') {
            let (body, stride) = split_stride(rest)?;
            let parts: Vec<&str> = body.split('x').collect();
            let [kh, kw, ch] = parts[..] else {
                return Err(Error::Config(format!("conv spec `{s}` must look like c3x3x16")));
            };
            let (kh, kw) = (parse_pos(kh, s)?, parse_pos(kw, s)?);
            if kh != kw {
                return Err(Error::Config(format!("conv spec `{s}`: only square kernels are supported")));
            }
            Ok(ConvSpec::Conv { kernel: kh, channels: parse_pos(ch, s)?, stride: stride.unwrap_or(1) })
        } else if let Some(rest) = s.strip_prefix('p') {
            let (body, stride) = split_stride(rest)?;
            let size = parse_pos(body, s)?;
            Ok(ConvSpec::Pool { size, stride: stride.unwrap_or(size) })
        } else {
            Err(Error::Config(format!("unknown conv spec `{s}`")))
        }
    }
}

pub fn parse_conv_stack(s: &str) -> Result<Vec<ConvSpec>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

pub fn conv_stack_string(stack: &[ConvSpec]) -> String {
    stack.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Declarative architecture description.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub modality: Modality,
    /// Bidirectional LSTM layers (N_L).
    pub layers: usize,
    /// Units per LSTM sublayer (N_h).
    pub hidden: usize,
    pub classes: usize,
    pub conv_stack: Vec<ConvSpec>,
    pub image_size: usize,
    /// CNN-FC-LSTM when set, CNN-LSTM otherwise.
    pub use_fc_bottleneck: bool,
    pub bottleneck_units: usize,
    /// Hidden relu widths of the fused classifier.
    pub fc_head: Vec<usize>,
    /// Hidden relu widths of the attention network.
    pub attention_hidden: Vec<usize>,
    pub fusion_input: FusionInput,
    pub acoustic: Option<Box<ModelConfig>>,
    pub visual: Option<Box<ModelConfig>>,
}

pub const DEFAULT_CONV_STACK: &str = "c3x3x16,p2,c3x3x32,p2,c3x3x64,p2";
pub const IMAGE_SIZE: usize = 120;

const KEYS: &[&str] = &[
    "modality",
    "layers",
    "hidden",
    "classes",
    "conv_stack",
    "image_size",
    "fc_bottleneck",
    "bottleneck_units",
    "fc_head",
    "attention",
    "fusion_input",
];

impl ModelConfig {
    pub fn acoustic(layers: usize, hidden: usize, classes: usize) -> Self {
        ModelConfig {
            modality: Modality::Acoustic,
            layers,
            hidden,
            classes,
            conv_stack: Vec::new(),
            image_size: IMAGE_SIZE,
            use_fc_bottleneck: false,
            bottleneck_units: PHONEME_COUNT,
            fc_head: Vec::new(),
            attention_hidden: Vec::new(),
            fusion_input: FusionInput::Logits,
            acoustic: None,
            visual: None,
        }
    }

    pub fn visual(layers: usize, hidden: usize, classes: usize, conv_stack: Vec<ConvSpec>, use_fc_bottleneck: bool) -> Self {
        ModelConfig {
            modality: Modality::Visual,
            conv_stack,
            use_fc_bottleneck,
            ..Self::acoustic(layers, hidden, classes)
        }
    }

    pub fn audiovisual(acoustic: ModelConfig, visual: ModelConfig, fc_head: Vec<usize>, attention: Option<Vec<usize>>) -> Self {
        let classes = acoustic.classes;
        ModelConfig {
            modality: if attention.is_some() { Modality::AudioVisualAttention } else { Modality::AudioVisual },
            fc_head,
            attention_hidden: attention.unwrap_or_default(),
            acoustic: Some(Box::new(acoustic)),
            visual: Some(Box::new(visual)),
            ..Self::acoustic(1, 1, classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        match self.modality {
            Modality::Acoustic | Modality::Visual => {
                if self.layers == 0 || self.hidden == 0 {
                    return Err(Error::Config("layers and hidden must be at least 1".into()));
                }
                if self.modality == Modality::Visual {
                    if self.image_size == 0 {
                        return Err(Error::Config("image_size must be positive".into()));
                    }
                    if self.use_fc_bottleneck && self.bottleneck_units == 0 {
                        return Err(Error::Config("bottleneck_units must be positive".into()));
                    }
                }
            }
            Modality::AudioVisual | Modality::AudioVisualAttention => {
                let (Some(a), Some(v)) = (&self.acoustic, &self.visual) else {
                    return Err(Error::Config("audiovisual configs need acoustic.* and visual.* sections".into()));
                };
                if a.modality != Modality::Acoustic || v.modality != Modality::Visual {
                    return Err(Error::Config("sub-configs must be acoustic and visual".into()));
                }
                a.validate()?;
                v.validate()?;
                if a.classes != self.classes || v.classes != self.classes {
                    return Err(Error::Config("sub-networks must predict the same classes".into()));
                }
                if self.fc_head.iter().any(|&w| w == 0) || self.attention_hidden.iter().any(|&w| w == 0) {
                    return Err(Error::Config("layer widths must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        doc.reject_unknown(KEYS, &["acoustic", "visual"])?;
        let modality: Modality = doc
            .get("modality")
            .ok_or_else(|| Error::Config("missing `modality`".into()))?
            .parse()?;
        let classes = doc.parse_or("classes", PHONEME_COUNT)?;
        let cfg = if modality.is_fused() {
            let mut a = doc.section("acoustic");
            let mut v = doc.section("visual");
            a.set("modality", "acoustic");
            v.set("modality", "visual");
            for sub in [&mut a, &mut v] {
                if sub.get("classes").is_none() {
                    sub.set("classes", classes.to_string());
                }
            }
            let fc_head = doc.parse_list("fc_head")?.unwrap_or_else(|| vec![512, 512, 512]);
            let attention = if modality == Modality::AudioVisualAttention {
                Some(doc.parse_list("attention")?.unwrap_or_else(|| vec![512, 512, 512]))
            } else {
                None
            };
            let mut c = ModelConfig::audiovisual(Self::from_kv(&a)?, Self::from_kv(&v)?, fc_head, attention);
            c.classes = classes;
            c.fusion_input = doc.parse_or("fusion_input", FusionInput::Logits)?;
            c
        } else {
            let mut c = ModelConfig::acoustic(doc.parse_or("layers", 2)?, doc.parse_or("hidden", 256)?, classes);
            c.modality = modality;
            if modality == Modality::Visual {
                c.conv_stack = parse_conv_stack(doc.get("conv_stack").unwrap_or(DEFAULT_CONV_STACK))?;
                c.image_size = doc.parse_or("image_size", IMAGE_SIZE)?;
                c.use_fc_bottleneck = doc.parse_or("fc_bottleneck", true)?;
                c.bottleneck_units = doc.parse_or("bottleneck_units", PHONEME_COUNT)?;
            }
            c
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvDoc::parse_str(text, "<config>")?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KvDoc::load(path)?)
    }

    fn write_kv(&self, prefix: &str, out: &mut String) {
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{prefix}{k} = {v}");
        };
        if prefix.is_empty() {
            put("modality", self.modality.to_string());
        }
        put("classes", self.classes.to_string());
        let list = |v: &[usize]| if v.is_empty() { "none".to_string() } else { v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",") };
        match self.modality {
            Modality::Acoustic => {
                put("layers", self.layers.to_string());
                put("hidden", self.hidden.to_string());
            }
            Modality::Visual => {
                put("layers", self.layers.to_string());
                put("hidden", self.hidden.to_string());
                put("conv_stack", conv_stack_string(&self.conv_stack));
                put("image_size", self.image_size.to_string());
                put("fc_bottleneck", self.use_fc_bottleneck.to_string());
                put("bottleneck_units", self.bottleneck_units.to_string());
            }
            Modality::AudioVisual | Modality::AudioVisualAttention => {
                put("fc_head", list(&self.fc_head));
                if self.fusion_input != FusionInput::Logits {
                    put("fusion_input", self.fusion_input.to_string());
                }
                if self.modality == Modality::AudioVisualAttention {
                    put("attention", list(&self.attention_hidden));
                }
                if let Some(a) = &self.acoustic {
                    a.write_kv(&format!("{prefix}acoustic."), out);
                }
                if let Some(v) = &self.visual {
                    v.write_kv(&format!("{prefix}visual."), out);
                }
            }
        }
    }

    /// Canonical, fully resolved text form.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        self.write_kv("", &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_spec_grammar() {
        assert_eq!("c3x3x16".parse::<ConvSpec>().unwrap(), ConvSpec::Conv { kernel: 3, channels: 16, stride: 1 });
        assert_eq!("c5x5x8s2".parse::<ConvSpec>().unwrap(), ConvSpec::Conv { kernel: 5, channels: 8, stride: 2 });
        assert_eq!("p2".parse::<ConvSpec>().unwrap(), ConvSpec::Pool { size: 2, stride: 2 });
        assert_eq!("p3s2".parse::<ConvSpec>().unwrap(), ConvSpec::Pool { size: 3, stride: 2 });
        for bad in ["c3x3", "c3x5x2", "q2", "p0", "c3x3x0", "cxx"] {
            assert!(bad.parse::<ConvSpec>().is_err(), "{bad}");
        }
        let stack = parse_conv_stack(DEFAULT_CONV_STACK).unwrap();
        assert_eq!(conv_stack_string(&stack), DEFAULT_CONV_STACK);
    }

    #[test]
    fn kv_round_trip() {
        let text = "modality = audiovisual_attention\nclasses = 12\nfc_head = 32,32\nattention = 16\n\
                    acoustic.layers = 1\nacoustic.hidden = 8\nvisual.layers = 1\nvisual.hidden = 8\n\
                    visual.conv_stack = p4,c3x3x4,p2\nvisual.fc_bottleneck = false\n";
        let c = ModelConfig::parse(text).unwrap();
        assert_eq!(c.classes, 12);
        assert_eq!(c.visual.as_ref().unwrap().classes, 12);
        assert_eq!(c.attention_hidden, vec![16]);
        assert_eq!(ModelConfig::parse(&c.to_kv_string()).unwrap(), c);
    }

    #[test]
    fn invalid_configs() {
        assert!(ModelConfig::parse("modality = acoustic\nlayers = 0\n").is_err());
        assert!(ModelConfig::parse("modality = acoustic\nclasses = 1\n").is_err());
        assert!(ModelConfig::parse("modality = sonar\n").is_err());
        assert!(ModelConfig::parse("modality = acoustic\nbogus = 1\n").is_err());
        assert!(ModelConfig::parse("layers = 1\n").is_err());
    }
}
