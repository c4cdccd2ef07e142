//! Checkpoint container: magic bytes `CCLK1`, a length-prefixed text
//! metadata block of `key=value` lines, then little-endian `f64` parameter
//! arrays in the order declared by the metadata's `arrays` key. Round-trips
//! bit-exactly.

use std::path::Path;

use crate::error::{Error, Result};

use super::{AdamWState, EncoderArch, Gradients, Model, TextEncoder, TrainConfig, VisionEncoder};

const MAGIC: &[u8; 5] = b"CCLK1";
const FORMAT_VERSION: u32 = 1;

/// Everything needed to resume or evaluate a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: AdamWState,
    pub epoch: usize,
    pub config: TrainConfig,
    pub class_names: Vec<String>,
}

impl Checkpoint {
    /// Fresh checkpoint at initialization, before any updates.
    pub fn initial(model: Model, config: TrainConfig, class_names: Vec<String>) -> Self {
        let optimizer = AdamWState::new(&model);
        Self {
            model,
            optimizer,
            epoch: 0,
            config,
            class_names,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Validation(msg) => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: msg,
            },
            other => other,
        })
    }

    /// Arrays in declared order, paired with their names.
    fn arrays(&self) -> Vec<(&'static str, Vec<f64>)> {
        let scalar = |v: f64| vec![v];
        vec![
            ("w1", self.model.vision.w1.clone()),
            ("b1", self.model.vision.b1.clone()),
            ("w2", self.model.vision.w2.clone()),
            ("b2", self.model.vision.b2.clone()),
            ("text", self.model.text.table.clone()),
            ("logit_scale", scalar(self.model.logit_scale)),
            ("m_w1", self.optimizer.m.w1.clone()),
            ("m_b1", self.optimizer.m.b1.clone()),
            ("m_w2", self.optimizer.m.w2.clone()),
            ("m_b2", self.optimizer.m.b2.clone()),
            ("m_text", self.optimizer.m.text.clone()),
            ("m_logit_scale", scalar(self.optimizer.m.logit_scale)),
            ("v_w1", self.optimizer.v.w1.clone()),
            ("v_b1", self.optimizer.v.b1.clone()),
            ("v_w2", self.optimizer.v.w2.clone()),
            ("v_b2", self.optimizer.v.b2.clone()),
            ("v_text", self.optimizer.v.text.clone()),
            ("v_logit_scale", scalar(self.optimizer.v.logit_scale)),
        ]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self
            .class_names
            .iter()
            .any(|n| n.contains(',') || n.contains('\n'))
        {
            return Err(Error::validation(
                "class names must not contain commas or newlines".to_string(),
            ));
        }
        let arch = &self.model.vision.arch;
        let arrays = self.arrays();
        let manifest: Vec<String> = arrays
            .iter()
            .map(|(name, data)| format!("{name}:{}", data.len()))
            .collect();
        let config_json = serde_json::to_string(&self.config)
            .map_err(|e| Error::validation(format!("config serialization failed: {e}")))?;

        let mut meta = String::new();
        meta.push_str(&format!("format={FORMAT_VERSION}\n"));
        meta.push_str(&format!("epoch={}\n", self.epoch));
        meta.push_str(&format!("opt_step={}\n", self.optimizer.step));
        meta.push_str(&format!("classes={}\n", self.class_names.join(",")));
        meta.push_str(&format!(
            "arch={},{},{},{},{},{}\n",
            arch.frame_height,
            arch.frame_width,
            arch.channels,
            arch.patch_size,
            arch.hidden_dim,
            arch.embed_dim
        ));
        meta.push_str(&format!("config={config_json}\n"));
        meta.push_str(&format!("arrays={}\n", manifest.join(",")));

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        for (_, data) in &arrays {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::validation(format!("checkpoint: {msg}"));
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("missing CCLK1 magic"));
        }
        let meta_len = u32::from_le_bytes(bytes[5..9].try_into().expect("sized slice")) as usize;
        let meta_end = 9 + meta_len;
        if bytes.len() < meta_end {
            return Err(bad("truncated metadata block"));
        }
        let meta =
            std::str::from_utf8(&bytes[9..meta_end]).map_err(|_| bad("metadata is not UTF-8"))?;

        let mut format = None;
        let mut epoch = None;
        let mut opt_step = None;
        let mut classes = None;
        let mut arch_fields = None;
        let mut config = None;
        let mut arrays_decl = None;
        for line in meta.lines() {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(&format!("metadata line without '=': {line:?}")))?;
            match key {
                "format" => format = Some(value.parse::<u32>().map_err(|_| bad("bad format"))?),
                "epoch" => epoch = Some(value.parse::<usize>().map_err(|_| bad("bad epoch"))?),
                "opt_step" => {
                    opt_step = Some(value.parse::<u64>().map_err(|_| bad("bad opt_step"))?)
                }
                "classes" => {
                    classes = Some(value.split(',').map(str::to_string).collect::<Vec<_>>())
                }
                "arch" => {
                    let nums: Vec<usize> = value
                        .split(',')
                        .map(|v| v.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("bad arch"))?;
                    if nums.len() != 6 {
                        return Err(bad("arch must have six fields"));
                    }
                    arch_fields = Some(nums);
                }
                "config" => {
                    config = Some(
                        serde_json::from_str::<TrainConfig>(value)
                            .map_err(|e| bad(&format!("bad config: {e}")))?,
                    )
                }
                "arrays" => arrays_decl = Some(value.to_string()),
                _ => return Err(bad(&format!("unknown metadata key {key:?}"))),
            }
        }
        match format {
            Some(FORMAT_VERSION) => {}
            other => return Err(bad(&format!("unsupported format version {other:?}"))),
        }
        let epoch = epoch.ok_or_else(|| bad("missing epoch"))?;
        let opt_step = opt_step.ok_or_else(|| bad("missing opt_step"))?;
        let class_names = classes.ok_or_else(|| bad("missing classes"))?;
        let arch_fields = arch_fields.ok_or_else(|| bad("missing arch"))?;
        let config = config.ok_or_else(|| bad("missing config"))?;
        let arrays_decl = arrays_decl.ok_or_else(|| bad("missing arrays"))?;

        let arch = EncoderArch {
            frame_height: arch_fields[0],
            frame_width: arch_fields[1],
            channels: arch_fields[2],
            patch_size: arch_fields[3],
            hidden_dim: arch_fields[4],
            embed_dim: arch_fields[5],
        };

        let mut cursor = meta_end;
        let mut read_array = |expected_name: &str, declared: &str| -> Result<Vec<f64>> {
            let (name, len) = declared
                .split_once(':')
                .ok_or_else(|| bad(&format!("bad array declaration {declared:?}")))?;
            if name != expected_name {
                return Err(bad(&format!(
                    "expected array {expected_name:?}, found {name:?}"
                )));
            }
            let len: usize = len.parse().map_err(|_| bad("bad array length"))?;
            let end = cursor + len * 8;
            if bytes.len() < end {
                return Err(bad(&format!("truncated array {name:?}")));
            }
            let mut data = Vec::with_capacity(len);
            while cursor < end {
                data.push(f64::from_le_bytes(
                    bytes[cursor..cursor + 8].try_into().expect("sized slice"),
                ));
                cursor += 8;
            }
            Ok(data)
        };

        let declared: Vec<&str> = arrays_decl.split(',').collect();
        let expected = [
            "w1",
            "b1",
            "w2",
            "b2",
            "text",
            "logit_scale",
            "m_w1",
            "m_b1",
            "m_w2",
            "m_b2",
            "m_text",
            "m_logit_scale",
            "v_w1",
            "v_b1",
            "v_w2",
            "v_b2",
            "v_text",
            "v_logit_scale",
        ];
        if declared.len() != expected.len() {
            return Err(bad(&format!(
                "expected {} arrays, found {}",
                expected.len(),
                declared.len()
            )));
        }
        let mut arrays = Vec::with_capacity(expected.len());
        for (name, decl) in expected.iter().zip(&declared) {
            arrays.push(read_array(name, decl)?);
        }
        if cursor != bytes.len() {
            return Err(bad("trailing bytes after arrays"));
        }

        let scalar = |v: &Vec<f64>| -> Result<f64> {
            if v.len() != 1 {
                return Err(bad("scalar array must have length 1"));
            }
            Ok(v[0])
        };
        let mut it = arrays.into_iter();
        let (w1, b1, w2, b2, text, logit_scale) = (
            it.next().expect("checked count"),
            it.next().expect("checked count"),
            it.next().expect("checked count"),
            it.next().expect("checked count"),
            it.next().expect("checked count"),
            it.next().expect("checked count"),
        );
        let model = Model {
            vision: VisionEncoder {
                arch,
                w1,
                b1,
                w2,
                b2,
            },
            text: TextEncoder {
                n_classes: class_names.len(),
                dim: arch.embed_dim,
                table: text,
            },
            logit_scale: scalar(&logit_scale)?,
        };
        if model.text.table.len() != model.text.n_classes * model.text.dim
            || model.vision.w1.len() != arch.hidden_dim * arch.feature_dim()
        {
            return Err(bad("array lengths do not match the architecture"));
        }

        let grads_from = |it: &mut std::vec::IntoIter<Vec<f64>>| -> Result<Gradients> {
            Ok(Gradients {
                w1: it.next().expect("checked count"),
                b1: it.next().expect("checked count"),
                w2: it.next().expect("checked count"),
                b2: it.next().expect("checked count"),
                text: it.next().expect("checked count"),
                logit_scale: scalar(&it.next().expect("checked count"))?,
            })
        };
        let m = grads_from(&mut it)?;
        let v = grads_from(&mut it)?;

        Ok(Checkpoint {
            model,
            optimizer: AdamWState {
                m,
                v,
                step: opt_step,
            },
            epoch,
            config,
            class_names,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::test_arch;
    use super::*;

    fn sample_checkpoint() -> Checkpoint {
        let model = Model::init(test_arch(), 3, 77).unwrap();
        let mut cp = Checkpoint::initial(
            model,
            TrainConfig::default(),
            vec!["disc".into(), "square".into(), "cross".into()],
        );
        cp.epoch = 4;
        cp.optimizer.step = 12;
        cp.optimizer.m.w1[0] = 0.125;
        cp.optimizer.v.text[1] = 3.5e-9;
        cp
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let cp = sample_checkpoint();
        let bytes = cp.to_bytes().unwrap();
        assert_eq!(&bytes[..5], b"CCLK1");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, cp);
        // Bit-exact: re-serialization yields identical bytes.
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.cclk");
        let cp = sample_checkpoint();
        cp.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), cp);
    }

    #[test]
    fn rejects_corrupt_input() {
        let cp = sample_checkpoint();
        let bytes = cp.to_bytes().unwrap();

        assert!(Checkpoint::from_bytes(b"NOPE!").is_err());

        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong_magic).is_err());

        let truncated = &bytes[..bytes.len() - 3];
        assert!(Checkpoint::from_bytes(truncated).is_err());

        let mut trailing = bytes;
        trailing.extend_from_slice(&[0u8; 8]);
        assert!(Checkpoint::from_bytes(&trailing).is_err());
    }
}
