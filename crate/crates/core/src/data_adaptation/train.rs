use serde::{Deserialize, Serialize};

use super::{discriminator_accuracy, mean_log, mean_log_one_minus, CganBundle, CganConfig, CganLosses};
use crate::datasets_metrics::{epoch_batches, Dataset};
use crate::tensor_nn::{l1_loss, AdamState, Tensor};
use crate::{Error, Result};

/// Alternating optimiser state for a bundle.
#[derive(Clone, Debug)]
pub struct CganTrainer {
    pub bundle: CganBundle,
    cfg: CganConfig,
    opt_gk: AdamState,
    opt_gs: AdamState,
    opt_dk: AdamState,
    opt_ds: AdamState,
}

/// Output of one generator update: the objective measured before the
/// update and the fakes it was computed from.
#[derive(Clone, Debug)]
pub struct GeneratorStep {
    pub before: CganLosses,
    pub fake_k: Tensor,
    pub fake_s: Tensor,
}

impl CganTrainer {
    pub fn new(bundle: CganBundle, cfg: CganConfig) -> Result<Self> {
        cfg.validate()?;
        bundle.validate()?;
        Ok(Self {
            bundle,
            opt_gk: AdamState::new(cfg.adam_g)?,
            opt_gs: AdamState::new(cfg.adam_g)?,
            opt_dk: AdamState::new(cfg.adam_d)?,
            opt_ds: AdamState::new(cfg.adam_d)?,
            cfg,
        })
    }

    /// One descent step of both generators on the full objective with the
    /// discriminators held fixed.
    pub fn generator_step(&mut self, k: &Tensor, s: &Tensor) -> Result<GeneratorStep> {
        let w = self.cfg.cycle_weight;
        let b = &mut self.bundle;
        b.g_k.zero_grad();
        b.g_s.zero_grad();
        let (fake_k, t_fake_k) = b.g_k.forward_traced(s)?;
        let (fake_s, t_fake_s) = b.g_s.forward_traced(k)?;
        let (rec_k, t_rec_k) = b.g_k.forward_traced(&fake_s)?;
        let (rec_s, t_rec_s) = b.g_s.forward_traced(&fake_k)?;
        let (p_fake_k, t_dk) = b.d_k.forward_traced(&fake_k)?;
        let (p_fake_s, t_ds) = b.d_s.forward_traced(&fake_s)?;
        let (real_k, _) = mean_log(&b.d_k.infer(k)?)?;
        let (real_s, _) = mean_log(&b.d_s.infer(s)?)?;
        let (adv_k, g_adv_k) = mean_log_one_minus(&p_fake_k)?;
        let (adv_s, g_adv_s) = mean_log_one_minus(&p_fake_s)?;
        let cyc_k = l1_loss(&rec_k, k)?;
        let cyc_s = l1_loss(&rec_s, s)?;

        let g_fake_k = b.d_k.backward_traced(&t_dk, &g_adv_k)?;
        let g_fake_s = b.d_s.backward_traced(&t_ds, &g_adv_s)?;
        b.d_k.zero_grad();
        b.d_s.zero_grad();
        let g_fake_s = g_fake_s.add(&b.g_k.backward_traced(&t_rec_k, &cyc_k.grad.scale(w))?)?;
        let g_fake_k = g_fake_k.add(&b.g_s.backward_traced(&t_rec_s, &cyc_s.grad.scale(w))?)?;
        b.g_k.backward_traced(&t_fake_k, &g_fake_k)?;
        b.g_s.backward_traced(&t_fake_s, &g_fake_s)?;
        self.opt_gk.step_model(&mut b.g_k)?;
        self.opt_gs.step_model(&mut b.g_s)?;

        let gan_k = real_k + adv_k;
        let gan_s = real_s + adv_s;
        let cycle = cyc_k.value + cyc_s.value;
        Ok(GeneratorStep {
            before: CganLosses {
                gan_s,
                gan_k,
                cycle,
                total: gan_s + gan_k + w * cycle,
            },
            fake_k,
            fake_s,
        })
    }

    /// One ascent step of both discriminators on their adversarial terms.
    pub fn discriminator_step(&mut self, k: &Tensor, s: &Tensor, fake_k: &Tensor, fake_s: &Tensor) -> Result<()> {
        let b = &mut self.bundle;
        for (d, opt, real, fake) in [
            (&mut b.d_k, &mut self.opt_dk, k, fake_k),
            (&mut b.d_s, &mut self.opt_ds, s, fake_s),
        ] {
            d.zero_grad();
            let (p_real, t_real) = d.forward_traced(real)?;
            let (p_fake, t_fake) = d.forward_traced(fake)?;
            let (_, g_real) = mean_log(&p_real)?;
            let (_, g_fake) = mean_log_one_minus(&p_fake)?;
            // Adam descends, so feed it the negated gradient to ascend.
            d.backward_traced(&t_real, &g_real.scale(-1.0))?;
            d.backward_traced(&t_fake, &g_fake.scale(-1.0))?;
            opt.step_model(d)?;
        }
        Ok(())
    }

    pub fn into_bundle(self) -> CganBundle {
        self.bundle
    }
}

/// Free-function form of [`CganTrainer::generator_step`].
pub fn generator_step(trainer: &mut CganTrainer, k: &Tensor, s: &Tensor) -> Result<GeneratorStep> {
    trainer.generator_step(k, s)
}

/// Free-function form of [`CganTrainer::discriminator_step`].
pub fn discriminator_step(
    trainer: &mut CganTrainer,
    k: &Tensor,
    s: &Tensor,
    fake_k: &Tensor,
    fake_s: &Tensor,
) -> Result<()> {
    trainer.discriminator_step(k, s, fake_k, fake_s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CganEpochStats {
    pub epoch: usize,
    /// Batch means of the objective terms, measured before each generator
    /// update.
    pub losses: CganLosses,
    /// `D_K` accuracy on the epoch's last library batch vs its adapted
    /// observed batch.
    pub disc_accuracy_k: f64,
}

#[derive(Clone, Debug)]
pub struct CganOutcome {
    pub bundle: CganBundle,
    pub history: Vec<CganEpochStats>,
}

/// Alternating training on unpaired library (`lib`) and observed (`obs`)
/// images. Labels are never read. Each step updates the generators, then
/// the discriminators against the fakes produced before that update.
pub fn train_cgan(bundle: CganBundle, lib: &Dataset, obs: &Dataset, cfg: &CganConfig) -> Result<CganOutcome> {
    if lib.is_empty() || obs.is_empty() {
        return Err(Error::invalid("data adaptation needs non-empty library and observed sets"));
    }
    if lib.image_shape() != bundle.library_shape() || obs.image_shape() != bundle.observed_shape() {
        return Err(Error::shape(format!(
            "bundle expects library {:?} / observed {:?}, got {:?} / {:?}",
            bundle.library_shape(),
            bundle.observed_shape(),
            lib.image_shape(),
            obs.image_shape()
        )));
    }
    let mut trainer = CganTrainer::new(bundle, *cfg)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let e = epoch as u64;
        let lib_batches = epoch_batches(lib.len(), cfg.batch_size, cfg.seed ^ (2 * e + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let obs_batches = epoch_batches(obs.len(), cfg.batch_size, cfg.seed ^ (2 * e + 2).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let steps = lib_batches.len().min(obs_batches.len());
        let mut sum = CganLosses {
            gan_s: 0.0,
            gan_k: 0.0,
            cycle: 0.0,
            total: 0.0,
        };
        let mut disc_accuracy_k = f64::NAN;
        for (i, (li, oi)) in lib_batches.iter().zip(&obs_batches).enumerate() {
            let k = lib.batch(li)?;
            let s = obs.batch(oi)?;
            let step = trainer.generator_step(&k, &s)?;
            trainer.discriminator_step(&k, &s, &step.fake_k, &step.fake_s)?;
            sum.gan_s += step.before.gan_s;
            sum.gan_k += step.before.gan_k;
            sum.cycle += step.before.cycle;
            sum.total += step.before.total;
            if i + 1 == steps {
                let fake = trainer.bundle.g_k.infer(&s)?;
                disc_accuracy_k = discriminator_accuracy(&trainer.bundle.d_k, &k, &fake)?;
            }
        }
        let n = steps as f64;
        let losses = CganLosses {
            gan_s: sum.gan_s / n,
            gan_k: sum.gan_k / n,
            cycle: sum.cycle / n,
            total: sum.total / n,
        };
        log::debug!("cgan epoch {epoch}: {losses:?} D_K accuracy {disc_accuracy_k:.3}");
        history.push(CganEpochStats {
            epoch,
            losses,
            disc_accuracy_k,
        });
    }
    Ok(CganOutcome {
        bundle: trainer.into_bundle(),
        history,
    })
}
