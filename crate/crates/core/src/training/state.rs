use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainingConfig;
use crate::autograd::Tensor;
use crate::codec::{Reader, Writer};
use crate::datagen::{decode_segmenter, encode_segmenter};
use crate::domain::ensure_parent;
use crate::error::{Error, Result};
use crate::networks::{
    img_discriminator, seg_discriminator, Adam, ImgDiscriminator, RefinementNet, RestorationNet,
    SegDiscriminator, Segmenter,
};

const MAGIC: &[u8; 8] = b"SGRSCKP1";
const VERSION: u32 = 1;

/// Where a run stands: stage 1..=3, or 4 once every stage has finished.
pub const STAGE_DONE: u8 = 4;

/// Complete resumable training state.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: TrainingConfig,
    pub num_classes: usize,
    pub stage: u8,
    /// Completed iterations across all stages.
    pub iteration: u64,
    pub g1: RefinementNet,
    pub g2: RestorationNet,
    pub d1: SegDiscriminator,
    pub d2: ImgDiscriminator,
    pub opt_g1: Adam,
    pub opt_g2: Adam,
    pub opt_d1: Adam,
    pub opt_d2: Adam,
    pub rng: ChaCha8Rng,
    /// Clean segmenter used for `restore --auto`; never trained here.
    pub segmenter: Option<Segmenter>,
}

fn stage_after(config: &TrainingConfig, iteration: u64) -> u8 {
    if iteration >= config.total_iterations() {
        STAGE_DONE
    } else {
        config.stage_of(iteration)
    }
}

impl TrainState {
    pub fn new(config: TrainingConfig, num_classes: usize, segmenter: Option<Segmenter>) -> Result<Self> {
        config.validate()?;
        if let Some(s) = &segmenter {
            if s.num_classes() != num_classes {
                return Err(Error::ClassMismatch(format!(
                    "segmenter predicts {} classes, data has {num_classes}",
                    s.num_classes()
                )));
            }
        }
        let seed = config.seed;
        let arch = config.arch;
        let g1 = RefinementNet::new(num_classes, &arch, seed.wrapping_add(1));
        let g2 = RestorationNet::new(num_classes, &arch, seed.wrapping_add(2));
        let d1 = seg_discriminator(num_classes, &arch, seed.wrapping_add(3));
        let d2 = img_discriminator(&arch, seed.wrapping_add(4));
        let o = config.optim;
        Ok(Self {
            opt_g1: o.g1.build(g1.net.params()),
            opt_g2: o.g2.build(g2.net.params()),
            opt_d1: o.d1.build(d1.params()),
            opt_d2: o.d2.build(d2.params()),
            g1,
            g2,
            d1,
            d2,
            rng: ChaCha8Rng::seed_from_u64(seed),
            stage: stage_after(&config, 0),
            iteration: 0,
            num_classes,
            config,
            segmenter,
        })
    }

    pub fn is_done(&self) -> bool {
        self.stage == STAGE_DONE
    }

    /// Recompute `stage` from `iteration`.
    pub(crate) fn sync_stage(&mut self) {
        self.stage = stage_after(&self.config, self.iteration);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.bytes(MAGIC);
        w.u32(VERSION);
        let cfg = serde_json::to_string(&self.config).map_err(|e| Error::Format(e.to_string()))?;
        w.str(&cfg);
        w.u64(self.num_classes as u64);
        w.u8(self.stage);
        w.u64(self.iteration);
        w.bytes(&self.rng.get_seed());
        w.u64(self.rng.get_stream());
        w.bytes(&self.rng.get_word_pos().to_le_bytes());
        w.params(self.g1.net.params());
        w.params(self.g2.net.params());
        w.params(self.d1.params());
        w.params(self.d2.params());
        for d in [&self.d1, &self.d2] {
            w.u32(d.sn_state().len() as u32);
            for u in d.sn_state() {
                w.f32s(u);
            }
        }
        for opt in [&self.opt_g1, &self.opt_g2, &self.opt_d1, &self.opt_d2] {
            w.f32s(&[opt.lr, opt.beta1, opt.beta2, opt.eps]);
            w.u64(opt.step);
            w.tensors(&opt.m);
            w.tensors(&opt.v);
        }
        match &self.segmenter {
            Some(s) => {
                w.u8(1);
                encode_segmenter(s, &mut w);
            }
            None => w.u8(0),
        }
        Ok(w.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("checkpoint version {version}, expected {VERSION}")));
        }
        let config: TrainingConfig =
            serde_json::from_str(&r.str()?).map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
        let num_classes = r.u64()? as usize;
        if !(2..=16).contains(&num_classes) {
            return Err(Error::Format(format!("checkpoint class count {num_classes}")));
        }
        let stage = r.u8()?;
        let iteration = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let mut state = Self::new(config, num_classes, None)?;
        if stage != stage_after(&state.config, iteration) {
            return Err(Error::Format(format!("stage {stage} inconsistent with iteration {iteration}")));
        }
        state.stage = stage;
        state.iteration = iteration;
        state.rng = ChaCha8Rng::from_seed(seed);
        state.rng.set_stream(stream);
        state.rng.set_word_pos(word_pos);
        r.params_into(state.g1.net.params_mut())?;
        r.params_into(state.g2.net.params_mut())?;
        r.params_into(state.d1.params_mut())?;
        r.params_into(state.d2.params_mut())?;
        for d in [&mut state.d1, &mut state.d2] {
            let n = r.u32()? as usize;
            if n != d.sn_state().len() {
                return Err(Error::Format(format!("{n} spectral-norm vectors, expected {}", d.sn_state().len())));
            }
            let mut us = Vec::with_capacity(n);
            for expect in d.sn_state() {
                let u = r.f32s()?;
                if u.len() != expect.len() {
                    return Err(Error::Format("spectral-norm vector length".into()));
                }
                us.push(u);
            }
            d.set_sn_state(us);
        }
        for opt in [&mut state.opt_g1, &mut state.opt_g2, &mut state.opt_d1, &mut state.opt_d2] {
            let h = r.f32s()?;
            if h.len() != 4 {
                return Err(Error::Format("optimizer header".into()));
            }
            (opt.lr, opt.beta1, opt.beta2, opt.eps) = (h[0], h[1], h[2], h[3]);
            opt.step = r.u64()?;
            let m = r.tensors()?;
            let v = r.tensors()?;
            let shapes_match = |ts: &[Tensor<f32>], like: &[Tensor<f32>]| {
                ts.len() == like.len() && ts.iter().zip(like).all(|(a, b)| a.shape() == b.shape())
            };
            if !shapes_match(&m, &opt.m) || !shapes_match(&v, &opt.v) {
                return Err(Error::Format("optimizer moments do not match parameters".into()));
            }
            opt.m = m;
            opt.v = v;
        }
        state.segmenter = match r.u8()? {
            0 => None,
            1 => {
                let s = decode_segmenter(&mut r)?;
                if s.num_classes() != num_classes {
                    return Err(Error::Format("bundled segmenter class count".into()));
                }
                Some(s)
            }
            t => return Err(Error::Format(format!("segmenter tag {t}"))),
        };
        if !r.is_done() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
