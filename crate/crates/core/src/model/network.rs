use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{relu, relu_backward, upsample2, upsample2_backward, Conv1d, Linear, Tensor};
use crate::biomarker::Biomarker;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FpnConfig {
    pub in_channels: usize,
    pub stem_kernel: usize,
    pub kernel: usize,
    pub base_width: usize,
    /// Output width of each stride-2 encoder stage; its length is the number
    /// of stages.
    pub stage_widths: Vec<usize>,
    pub pyramid_width: usize,
    pub targets: Vec<Biomarker>,
}

impl Default for FpnConfig {
    fn default() -> Self {
        Self {
            in_channels: 21,
            stem_kernel: 7,
            kernel: 3,
            base_width: 16,
            stage_widths: vec![16, 32, 64, 64],
            pyramid_width: 32,
            targets: Biomarker::MODEL_DEFAULT.to_vec(),
        }
    }
}

impl FpnConfig {
    /// Two stages of width 4, used for gradient checks and smoke tests.
    pub fn tiny(in_channels: usize, targets: Vec<Biomarker>) -> Self {
        Self {
            in_channels,
            stem_kernel: 3,
            kernel: 3,
            base_width: 4,
            stage_widths: vec![4, 4],
            pyramid_width: 4,
            targets,
        }
    }

    pub fn num_stages(&self) -> usize {
        self.stage_widths.len()
    }

    /// Input lengths are padded to a multiple of this.
    pub fn granularity(&self) -> usize {
        1 << self.num_stages()
    }

    pub fn validate(&self) -> Result<()> {
        let odd = |k: usize| k % 2 == 1;
        if self.in_channels == 0
            || self.base_width == 0
            || self.pyramid_width == 0
            || self.stage_widths.is_empty()
            || self.stage_widths.contains(&0)
            || !odd(self.stem_kernel)
            || !odd(self.kernel)
            || self.num_stages() > 16
        {
            return Err(Error::InvalidConfig(format!("bad model topology {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub ppg: Vec<f64>,
    /// Scaled target space.
    pub biomarkers: Vec<f64>,
}

/// Fully convolutional 1-D feature pyramid with a waveform head at full
/// resolution and pooled biomarker heads on the coarsest level.
///
/// Inputs are right-padded by reflection to a multiple of
/// [`FpnConfig::granularity`]. Every convolution is zero-padded by
/// `(kernel - 1) / 2` on each side and followed by a rectifier, except the
/// laterals and the heads.
///
/// The flat parameter vector holds, in order: the stem, the stride-2 stages,
/// one 1x1 lateral per level from the stem up, the 1x1 waveform head and the
/// linear biomarker head. Each convolution stores its weights as
/// `[out][in][kernel]` followed by its biases; the linear head stores
/// `[out][in]` then biases. The top lateral is averaged over time for the
/// biomarker head. Going down, each level adds its lateral to the coarser
/// level repeated twice; the sum at full resolution is rectified and fed to
/// the waveform head.
#[derive(Debug, Clone, PartialEq)]
pub struct FpnModel {
    config: FpnConfig,
    stem: Conv1d,
    stages: Vec<Conv1d>,
    laterals: Vec<Conv1d>,
    ppg_head: Conv1d,
    bio_head: Linear,
    params: Vec<f64>,
}

pub(crate) struct Cache {
    input: Tensor,
    /// Encoder activations, level 0 = stem.
    c: Vec<Tensor>,
    head_in: Tensor,
    pooled: Vec<f64>,
    len: usize,
}

impl Cache {
    /// Which rectifier outputs are active; equal masks on both sides of a
    /// perturbation mean the loss is smooth in between.
    pub(crate) fn active_mask(&self) -> Vec<bool> {
        self.c
            .iter()
            .chain(std::iter::once(&self.head_in))
            .flat_map(|t| t.data.iter().map(|v| *v > 0.0))
            .collect()
    }
}

fn layout(config: &FpnConfig) -> (Conv1d, Vec<Conv1d>, Vec<Conv1d>, Conv1d, Linear, usize) {
    let mut off = 0;
    let mut conv = |cin, cout, kernel, stride| {
        let c = Conv1d {
            cin,
            cout,
            kernel,
            stride,
            w_off: off,
            b_off: off + cin * cout * kernel,
        };
        off += c.num_params();
        c
    };
    let stem = conv(config.in_channels, config.base_width, config.stem_kernel, 1);
    let mut widths = vec![config.base_width];
    let mut stages = Vec::new();
    for &w in &config.stage_widths {
        stages.push(conv(*widths.last().unwrap(), w, config.kernel, 2));
        widths.push(w);
    }
    let laterals = widths.iter().map(|&w| conv(w, config.pyramid_width, 1, 1)).collect();
    let ppg_head = conv(config.pyramid_width, 1, 1, 1);
    let k = config.targets.len();
    let bio_head = Linear {
        cin: config.pyramid_width,
        cout: k,
        w_off: off,
        b_off: off + k * config.pyramid_width,
    };
    off += bio_head.num_params();
    (stem, stages, laterals, ppg_head, bio_head, off)
}

/// Right-pads by reflection (edge sample not repeated).
fn reflect_pad(x: &Tensor, len: usize) -> Tensor {
    let mut y = Tensor::zeros(x.channels, len);
    for c in 0..x.channels {
        let (xr, yr) = (x.row(c), y.row_mut(c));
        yr[..x.len].copy_from_slice(xr);
        for i in x.len..len {
            yr[i] = xr[2 * (x.len - 1) - i];
        }
    }
    y
}

impl FpnModel {
    /// He-uniform weights and zero biases, rounded to single precision so a
    /// checkpoint round trip is exact.
    pub fn new(config: FpnConfig, seed: u64) -> Result<Self> {
        let mut m = Self::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let convs: Vec<Conv1d> = std::iter::once(m.stem)
            .chain(m.stages.iter().copied())
            .chain(m.laterals.iter().copied())
            .chain(std::iter::once(m.ppg_head))
            .collect();
        for c in convs {
            let a = (6.0 / (c.cin * c.kernel) as f64).sqrt();
            for v in &mut m.params[c.w_off..c.b_off] {
                *v = rng.random_range(-a..a) as f32 as f64;
            }
        }
        let h = m.bio_head;
        let a = (3.0 / h.cin as f64).sqrt();
        for v in &mut m.params[h.w_off..h.b_off] {
            *v = rng.random_range(-a..a) as f32 as f64;
        }
        Ok(m)
    }

    pub fn zeroed(config: FpnConfig) -> Result<Self> {
        config.validate()?;
        let (stem, stages, laterals, ppg_head, bio_head, n) = layout(&config);
        Ok(Self {
            config,
            stem,
            stages,
            laterals,
            ppg_head,
            bio_head,
            params: vec![0.0; n],
        })
    }

    pub fn from_params(config: FpnConfig, params: Vec<f64>) -> Result<Self> {
        let mut m = Self::zeroed(config)?;
        if params.len() != m.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for a topology with {}",
                params.len(),
                m.params.len()
            )));
        }
        m.params = params;
        Ok(m)
    }

    pub fn config(&self) -> &FpnConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn min_len(&self) -> usize {
        self.config.granularity()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels != self.config.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "{} input channels, model expects {}",
                x.channels, self.config.in_channels
            )));
        }
        if x.len < self.min_len() {
            return Err(Error::InputTooShort {
                needed: self.min_len(),
                len: x.len,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<ModelOutput> {
        self.forward_cached(x).map(|(o, _)| o)
    }

    /// Which rectifier outputs are positive for input `x`. The loss is smooth
    /// between two parameter vectors with the same pattern.
    pub fn activation_pattern(&self, x: &Tensor) -> Result<Vec<bool>> {
        self.forward_cached(x).map(|(_, c)| c.active_mask())
    }

    pub(crate) fn forward_cached(&self, x: &Tensor) -> Result<(ModelOutput, Cache)> {
        self.check_input(x)?;
        let g = self.config.granularity();
        let padded = x.len.div_ceil(g) * g;
        let input = reflect_pad(x, padded);
        let p = &self.params;

        let mut c = Vec::with_capacity(self.stages.len() + 1);
        let mut a = self.stem.forward(p, &input);
        relu(&mut a);
        c.push(a);
        for s in &self.stages {
            let mut a = s.forward(p, c.last().unwrap());
            relu(&mut a);
            c.push(a);
        }

        let top = self.stages.len();
        let mut merged = self.laterals[top].forward(p, &c[top]);
        let pooled: Vec<f64> = (0..merged.channels)
            .map(|ch| merged.row(ch).iter().sum::<f64>() / merged.len as f64)
            .collect();
        for level in (0..top).rev() {
            let mut l = self.laterals[level].forward(p, &c[level]);
            l.add_assign(&upsample2(&merged, l.len));
            merged = l;
        }
        relu(&mut merged);
        let head = self.ppg_head.forward(p, &merged);
        let out = ModelOutput {
            ppg: head.data[..x.len].to_vec(),
            biomarkers: self.bio_head.forward(p, &pooled),
        };
        Ok((
            out,
            Cache {
                input,
                c,
                head_in: merged,
                pooled,
                len: x.len,
            },
        ))
    }

    /// Parameter gradient for output gradients `d_ppg` (length of the
    /// unpadded input) and `d_bio`.
    pub(crate) fn backward(&self, cache: &Cache, d_ppg: &[f64], d_bio: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let mut g = vec![0.0; p.len()];
        let top = self.stages.len();

        let d_pooled = self.bio_head.backward(p, &cache.pooled, d_bio, &mut g);
        let mut dy = Tensor::zeros(1, cache.head_in.len);
        dy.data[..cache.len].copy_from_slice(d_ppg);
        let mut d_merged = self.ppg_head.backward(p, &cache.head_in, &dy, &mut g);
        relu_backward(&cache.head_in, &mut d_merged);

        // walk the top-down path from fine to coarse
        let mut dc: Vec<Tensor> = cache.c.iter().map(|t| Tensor::zeros(t.channels, t.len)).collect();
        for level in 0..=top {
            if level == top {
                let n = d_merged.len as f64;
                for (ch, dp) in d_pooled.iter().enumerate() {
                    for v in d_merged.row_mut(ch) {
                        *v += dp / n;
                    }
                }
            }
            let d = self.laterals[level].backward(p, &cache.c[level], &d_merged, &mut g);
            dc[level].add_assign(&d);
            if level < top {
                d_merged = upsample2_backward(&d_merged, cache.c[level + 1].len);
            }
        }

        for level in (1..=top).rev() {
            let mut d = std::mem::replace(&mut dc[level], Tensor::zeros(0, 0));
            relu_backward(&cache.c[level], &mut d);
            let dprev = self.stages[level - 1].backward(p, &cache.c[level - 1], &d, &mut g);
            dc[level - 1].add_assign(&dprev);
        }
        let mut d0 = std::mem::replace(&mut dc[0], Tensor::zeros(0, 0));
        relu_backward(&cache.c[0], &mut d0);
        self.stem.backward(p, &cache.input, &d0, &mut g);
        g
    }
}

/// Per-sample loss: waveform MSE plus the squared error of every present
/// biomarker target.
pub fn loss(pred: &ModelOutput, target_ppg: &[f64], target_bio: &[Option<f64>]) -> Result<f64> {
    loss_and_grad(pred, target_ppg, target_bio).map(|(l, _, _)| l)
}

pub(crate) fn loss_and_grad(
    pred: &ModelOutput,
    target_ppg: &[f64],
    target_bio: &[Option<f64>],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if pred.ppg.len() != target_ppg.len() || pred.ppg.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "waveform length {} vs target {}",
            pred.ppg.len(),
            target_ppg.len()
        )));
    }
    if pred.biomarkers.len() != target_bio.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} biomarker outputs vs {} targets",
            pred.biomarkers.len(),
            target_bio.len()
        )));
    }
    let n = target_ppg.len() as f64;
    let mut total = 0.0;
    let d_ppg = pred
        .ppg
        .iter()
        .zip(target_ppg)
        .map(|(p, t)| {
            total += (p - t) * (p - t) / n;
            2.0 * (p - t) / n
        })
        .collect();
    let d_bio = pred
        .biomarkers
        .iter()
        .zip(target_bio)
        .map(|(p, t)| match t {
            Some(t) => {
                total += (p - t) * (p - t);
                2.0 * (p - t)
            }
            None => 0.0,
        })
        .collect();
    Ok((total, d_ppg, d_bio))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_input(channels: usize, len: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor {
            channels,
            len,
            data: (0..channels * len).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn output_length_matches_input() {
        let m = FpnModel::new(FpnConfig::default(), 0).unwrap();
        for t in [240, 600, 2048, 17, 16] {
            let o = m.forward(&random_input(21, t, 1)).unwrap();
            assert_eq!(o.ppg.len(), t);
            assert_eq!(o.biomarkers.len(), 11);
        }
        assert!(matches!(
            m.forward(&random_input(21, 15, 1)),
            Err(Error::InputTooShort { needed: 16, len: 15 })
        ));
        assert!(matches!(m.forward(&random_input(20, 64, 1)), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn zero_network_gives_zeros() {
        let m = FpnModel::zeroed(FpnConfig::default()).unwrap();
        let o = m.forward(&Tensor::zeros(21, 240)).unwrap();
        assert!(o.ppg.iter().chain(&o.biomarkers).all(|v| *v == 0.0));
    }

    #[test]
    fn default_model_is_small() {
        let m = FpnModel::new(FpnConfig::default(), 0).unwrap();
        assert!(m.num_params() * 4 < 3_900_000);
        assert!(m.params().iter().all(|v| *v == *v as f32 as f64));
    }

    #[test]
    fn loss_examples() {
        let pred = ModelOutput {
            ppg: vec![1.0, 2.0, 3.0],
            biomarkers: vec![0.5, 7.0],
        };
        assert_eq!(loss(&pred, &[1.0, 2.0, 3.0], &[Some(0.5), None]).unwrap(), 0.0);
        assert_eq!(loss(&pred, &[0.0, 1.0, 2.0], &[None, None]).unwrap(), 1.0);
        assert!(matches!(loss(&pred, &[0.0], &[None, None]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(loss(&pred, &[0.0; 3], &[None]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn loss_matches_hand_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut r = || rng.random_range(-2.0..2.0);
        let pred = ModelOutput {
            ppg: (0..50).map(|_| r()).collect(),
            biomarkers: (0..4).map(|_| r()).collect(),
        };
        let tp: Vec<f64> = (0..50).map(|_| r()).collect();
        let tb = vec![Some(r()), None, Some(r()), Some(r())];
        let mut hand = 0.0;
        for i in 0..50 {
            hand += (pred.ppg[i] - tp[i]).powi(2);
        }
        hand /= 50.0;
        for k in [0, 2, 3] {
            hand += (pred.biomarkers[k] - tb[k].unwrap()).powi(2);
        }
        assert!((loss(&pred, &tp, &tb).unwrap() - hand).abs() < 1e-12);
    }

    #[test]
    fn coarse_shift_equivariance() {
        let m = FpnModel::new(FpnConfig::default(), 3).unwrap();
        let x = random_input(21, 512, 4);
        let g = 16;
        let shifted = Tensor::from_rows(
            &(0..21)
                .map(|c| x.row(c)[g..].iter().chain(&x.row(c)[..g]).copied().collect())
                .collect::<Vec<_>>(),
        );
        let a = m.forward(&x).unwrap().ppg;
        let b = m.forward(&shifted).unwrap().ppg;
        // interior only: the receptive field is well under 100 samples
        for t in 100..400 {
            assert!((a[t] - b[t - g]).abs() <= 1e-5 * (1.0 + a[t].abs()), "{t}");
        }
    }

    #[test]
    fn longer_input_agrees_in_the_interior() {
        let m = FpnModel::new(FpnConfig::default(), 5).unwrap();
        let x2 = random_input(21, 1024, 6);
        let x1 = Tensor::from_rows(&(0..21).map(|c| x2.row(c)[..512].to_vec()).collect::<Vec<_>>());
        let a = m.forward(&x1).unwrap().ppg;
        let b = m.forward(&x2).unwrap().ppg;
        for t in 100..412 {
            assert!((a[t] - b[t]).abs() <= 1e-4);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn any_length_round_trips(t in 16usize..300, seed in 0u64..50) {
            let m = FpnModel::new(FpnConfig::tiny(6, vec![Biomarker::Age]), seed).unwrap();
            let o = m.forward(&random_input(6, t, seed)).unwrap();
            prop_assert_eq!(o.ppg.len(), t);
            prop_assert!(o.ppg.iter().all(|v| v.is_finite()));
        }
    }
}
