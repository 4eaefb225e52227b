//! Running observation normalization and return-based reward scaling.

pub const STD_FLOOR: f64 = 1e-8;
pub const OBS_CLIP: f64 = 10.0;

/// Per-dimension Welford accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMoments {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl RunningMoments {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim());
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &xi) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = xi - *m;
            *m += delta / n;
            *s += delta * (xi - *m);
        }
    }

    /// Population variance; zero until something has been seen.
    pub fn variance(&self, i: usize) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2[i] / self.count as f64).max(0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObsNormalizer {
    pub moments: RunningMoments,
    pub frozen: bool,
}

impl ObsNormalizer {
    pub fn new(dim: usize) -> Self {
        Self { moments: RunningMoments::new(dim), frozen: false }
    }

    /// Update (unless frozen) with the raw observation, then normalize it.
    pub fn normalize(&mut self, obs: &[f64]) -> Vec<f64> {
        if !self.frozen {
            self.moments.update(obs);
        }
        self.apply(obs)
    }

    /// Normalize without touching the statistics.
    pub fn apply(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let std = self.moments.variance(i).sqrt().max(STD_FLOOR);
                ((x - self.moments.mean[i]) / std).clamp(-OBS_CLIP, OBS_CLIP)
            })
            .collect()
    }
}

/// Divides rewards by the running std of the discounted return.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardScaler {
    pub gamma: f64,
    pub moments: RunningMoments,
    /// Discounted return in progress, one per environment.
    pub returns: Vec<f64>,
    pub frozen: bool,
}

impl RewardScaler {
    pub fn new(gamma: f64, n_envs: usize) -> Self {
        Self { gamma, moments: RunningMoments::new(1), returns: vec![0.0; n_envs], frozen: false }
    }

    /// Unit prior until two returns have been observed.
    pub fn return_std(&self) -> f64 {
        if self.moments.count < 2 {
            1.0
        } else {
            self.moments.variance(0).sqrt()
        }
    }

    pub fn scale(&mut self, env: usize, reward: f64, done: bool) -> f64 {
        if !self.frozen {
            let r = self.gamma * self.returns[env] + reward;
            self.returns[env] = r;
            self.moments.update(&[r]);
        }
        let scaled = reward / self.return_std().max(STD_FLOOR);
        if done {
            self.returns[env] = 0.0;
        }
        scaled
    }
}
