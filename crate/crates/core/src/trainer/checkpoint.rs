//! Checkpointing and resumption.
//!
//! A checkpoint archives every *trainable* parameter group together with
//! its optimizer moments, the step counters, and the sampling RNG state —
//! everything needed to continue a run bit-for-bit. Frozen feature-extractor
//! weights are deliberately absent: they are a pure function of the config
//! (identity, archive file, or seeded random) and are rebuilt on load.
//!
//! The run directory keeps a `latest` file naming the newest checkpoint, so
//! resumption needs only the directory.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::archive::Archive;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::adam::Adam;
use super::{TrainConfig, Trainer};

const GROUPS: [&str; 5] = ["G", "F", "D_X", "D_Y", "D_Z"];

fn seed_to_hex(seed: &[u8; 32]) -> String {
    seed.iter().map(|b| format!("{:02x}", b)).collect()
}

fn seed_from_hex(s: &str) -> Result<[u8; 32]> {
    if s.len() != 64 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::Incompatible(format!(
            "rng seed must be 64 hex digits, got `{}`",
            s
        )));
    }
    let mut seed = [0u8; 32];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        let hex = std::str::from_utf8(chunk).expect("ascii checked above");
        seed[i] = u8::from_str_radix(hex, 16).expect("hex checked above");
    }
    Ok(seed)
}

fn parse_meta<T: std::str::FromStr>(ar: &Archive, key: &str) -> Result<T> {
    ar.meta(key)?
        .parse()
        .map_err(|_| Error::Incompatible(format!("metadata `{}` is not a valid number", key)))
}

fn save_group(ar: &mut Archive, name: &str, opt: &Adam) {
    let (ms, vs) = opt.moments();
    for (i, p) in opt.params().iter().enumerate() {
        let pname = p.name();
        let shape = p.shape();
        ar.insert(&pname, p.value_clone());
        ar.insert(format!("adam.m.{}", pname), Tensor::new(&shape, ms[i].clone()));
        ar.insert(format!("adam.v.{}", pname), Tensor::new(&shape, vs[i].clone()));
    }
    ar.metadata
        .insert(format!("adam_t.{}", name), opt.t().to_string());
}

fn load_group(ar: &Archive, name: &str, opt: &mut Adam) -> Result<()> {
    let mut ms = Vec::with_capacity(opt.params().len());
    let mut vs = Vec::with_capacity(opt.params().len());
    for p in opt.params() {
        let pname = p.name();
        let want = p.shape();
        for key in [
            pname.clone(),
            format!("adam.m.{}", pname),
            format!("adam.v.{}", pname),
        ] {
            let got = ar.tensor(&key)?;
            if got.shape() != want.as_slice() {
                return Err(Error::Incompatible(format!(
                    "checkpoint tensor `{}` has shape {:?}, model expects {:?}",
                    key,
                    got.shape(),
                    want
                )));
            }
        }
        p.set_value(ar.tensor(&pname)?.clone());
        ms.push(ar.tensor(&format!("adam.m.{}", pname))?.data().to_vec());
        vs.push(ar.tensor(&format!("adam.v.{}", pname))?.data().to_vec());
    }
    let t = parse_meta(ar, &format!("adam_t.{}", name))?;
    opt.restore_state(ms, vs, t);
    Ok(())
}

impl Trainer {
    /// Write `ckpt_<style_step>.safetensors` into `run_dir` and repoint
    /// `latest` at it. Returns the checkpoint path.
    pub fn save_checkpoint(&self, run_dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let mut ar = Archive::new();
        for (name, opt) in self.groups() {
            save_group(&mut ar, name, opt);
        }
        ar.metadata
            .insert("style_steps".into(), self.style_steps.to_string());
        ar.metadata
            .insert("res_steps".into(), self.res_steps.to_string());
        ar.metadata
            .insert("rng_seed".into(), seed_to_hex(&self.rng.get_seed()));
        ar.metadata
            .insert("rng_stream".into(), self.rng.get_stream().to_string());
        ar.metadata
            .insert("rng_word_pos".into(), self.rng.get_word_pos().to_string());

        let file = format!("ckpt_{:06}.safetensors", self.style_steps);
        let path = run_dir.join(&file);
        ar.write(&path)?;
        let latest = run_dir.join("latest");
        std::fs::write(&latest, format!("{}\n", file)).map_err(|e| Error::io(&latest, e))?;
        Ok(path)
    }

    /// Restore parameters, optimizer state, counters, and RNG position
    /// from a checkpoint produced by [`Trainer::save_checkpoint`] with the
    /// same config.
    pub fn load_checkpoint(&mut self, path: &Path) -> Result<()> {
        let ar = Archive::read(path)?;
        for (name, opt) in self.groups_mut() {
            load_group(&ar, name, opt)?;
        }
        self.style_steps = parse_meta(&ar, "style_steps")?;
        self.res_steps = parse_meta(&ar, "res_steps")?;
        let seed = seed_from_hex(ar.meta("rng_seed")?)?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(parse_meta(&ar, "rng_stream")?);
        rng.set_word_pos(parse_meta(&ar, "rng_word_pos")?);
        self.rng = rng;
        self.consecutive_aborts = 0;
        Ok(())
    }

    /// Rebuild a trainer from a run directory: `config.json` for the
    /// config, `latest` for the newest checkpoint.
    pub fn resume(run_dir: &Path) -> Result<Trainer> {
        let cfg_path = run_dir.join("config.json");
        let text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let cfg: TrainConfig = serde_json::from_str(&text)?;
        let mut trainer = Trainer::new(cfg)?;
        let latest_path = run_dir.join("latest");
        let name = std::fs::read_to_string(&latest_path)
            .map_err(|e| Error::io(&latest_path, e))?;
        trainer.load_checkpoint(&run_dir.join(name.trim()))?;
        Ok(trainer)
    }

    fn groups(&self) -> [(&'static str, &Adam); 5] {
        [
            (GROUPS[0], &self.opt_g),
            (GROUPS[1], &self.opt_f),
            (GROUPS[2], &self.opt_d_x),
            (GROUPS[3], &self.opt_d_y),
            (GROUPS[4], &self.opt_d_z),
        ]
    }

    fn groups_mut(&mut self) -> [(&'static str, &mut Adam); 5] {
        [
            (GROUPS[0], &mut self.opt_g),
            (GROUPS[1], &mut self.opt_f),
            (GROUPS[2], &mut self.opt_d_x),
            (GROUPS[3], &mut self.opt_d_y),
            (GROUPS[4], &mut self.opt_d_z),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{tiny_config, tiny_dataset};
    use super::*;
    use crate::hash::hash_params;

    #[test]
    fn resume_continues_bit_for_bit() {
        let (_d, manifest) = tiny_dataset(3, 24);

        // Straight run: 4 cycles.
        let run_a = tempfile::tempdir().unwrap();
        let mut a = Trainer::new(tiny_config(21)).unwrap();
        a.run(&manifest, run_a.path(), 4).unwrap();
        let hash_a = hash_params(&a.models.trainable_params());

        // Split run: 2 cycles, drop the trainer, resume, 2 more.
        let run_b = tempfile::tempdir().unwrap();
        {
            let mut b = Trainer::new(tiny_config(21)).unwrap();
            b.run(&manifest, run_b.path(), 2).unwrap();
        }
        let mut b = Trainer::resume(run_b.path()).unwrap();
        assert_eq!(b.style_steps(), 2);
        b.run(&manifest, run_b.path(), 2).unwrap();
        assert_eq!(hash_params(&b.models.trainable_params()), hash_a);

        // The stitched log matches the straight one byte for byte.
        let log_a = std::fs::read(run_a.path().join("log.jsonl")).unwrap();
        let log_b = std::fs::read(run_b.path().join("log.jsonl")).unwrap();
        assert_eq!(log_a, log_b);
    }

    #[test]
    fn checkpoint_excludes_frozen_feature_weights() {
        let (_d, manifest) = tiny_dataset(3, 24);
        let run = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(22);
        // A real (non-identity) tap gives the extractor weights to exclude.
        cfg.model.feature_tap = "conv1_1".into();
        let mut t = Trainer::new(cfg).unwrap();
        let ckpt = t.run(&manifest, run.path(), 1).unwrap();
        let ar = Archive::read(&ckpt).unwrap();
        assert!(
            !ar.tensors.keys().any(|k| k.contains("vgg")),
            "feature weights are rebuilt from config, not checkpointed"
        );
        // But every trainable group is present.
        for g in ["G.", "F.", "D_X.", "D_Y.", "D_Z."] {
            assert!(ar.tensors.keys().any(|k| k.starts_with(g)));
        }
    }

    #[test]
    fn loading_a_mismatched_checkpoint_is_rejected() {
        let (_d, manifest) = tiny_dataset(3, 24);
        let run = tempfile::tempdir().unwrap();
        let mut t = Trainer::new(tiny_config(23)).unwrap();
        let ckpt = t.run(&manifest, run.path(), 1).unwrap();

        let mut bigger = tiny_config(23);
        bigger.model.base_channels = 8;
        let mut other = Trainer::new(bigger).unwrap();
        match other.load_checkpoint(&ckpt) {
            Err(Error::Incompatible(msg)) => assert!(msg.contains("shape")),
            other => panic!("expected incompatible, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn rng_state_survives_the_hex_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        rng.set_stream(3);
        rng.set_word_pos(12345);
        let seed = seed_from_hex(&seed_to_hex(&rng.get_seed())).unwrap();
        assert_eq!(seed, rng.get_seed());
        assert!(seed_from_hex("zz").is_err());
        assert!(seed_from_hex(&"a".repeat(63)).is_err());
    }
}
