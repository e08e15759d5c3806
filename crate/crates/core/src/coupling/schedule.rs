use super::CouplingError;

/// Linear warm-up, constant hold, exponential decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriStageConfig {
    pub base_lr: f64,
    pub warmup_ratio: f64,
    pub hold_ratio: f64,
    pub decay_ratio: f64,
    pub init_scale: f64,
    pub final_scale: f64,
    pub total_steps: u64,
}

impl TriStageConfig {
    pub fn new(total_steps: u64) -> Self {
        Self {
            base_lr: 1e-4,
            warmup_ratio: 0.15,
            hold_ratio: 0.15,
            decay_ratio: 0.7,
            init_scale: 0.01,
            final_scale: 0.01,
            total_steps,
        }
    }

    pub fn validate(&self) -> Result<(), CouplingError> {
        let ratios = [self.warmup_ratio, self.hold_ratio, self.decay_ratio];
        if ratios.iter().any(|&r| r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CouplingError::Schedule(format!("phase ratios {ratios:?} must be non-negative and sum to 1")));
        }
        for (name, s) in [("init_scale", self.init_scale), ("final_scale", self.final_scale)] {
            if !(s > 0.0 && s <= 1.0) {
                return Err(CouplingError::Schedule(format!("{name} must be in (0, 1], got {s}")));
            }
        }
        if !(self.base_lr > 0.0) {
            return Err(CouplingError::Schedule("base_lr must be positive".into()));
        }
        Ok(())
    }
}

pub fn tri_stage_lr(step: u64, cfg: &TriStageConfig) -> Result<f64, CouplingError> {
    cfg.validate()?;
    if step > cfg.total_steps {
        return Err(CouplingError::StepOutOfRange {
            step,
            total: cfg.total_steps,
        });
    }
    let total = cfg.total_steps as f64;
    let warmup = cfg.warmup_ratio * total;
    let hold_end = warmup + cfg.hold_ratio * total;
    let decay = total - hold_end;
    let s = step as f64;
    let init = cfg.init_scale * cfg.base_lr;
    Ok(if s < warmup {
        init + (cfg.base_lr - init) * s / warmup
    } else if s <= hold_end {
        cfg.base_lr
    } else {
        let progress = ((s - hold_end) / decay).min(1.0);
        cfg.base_lr * (cfg.final_scale.ln() * progress).exp()
    })
}
