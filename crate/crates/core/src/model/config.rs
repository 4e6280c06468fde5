use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::ConvSpec;
use crate::signal::StftConfig;
use crate::{Error, Result};

/// Input feature construction. The network body is shared; only the
/// number of input planes changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Both microphones plus beams at the target and its two edges.
    Cdunet,
    /// Both microphones only.
    UnetPlain,
    /// Microphones plus the inter-microphone phase difference.
    UnetIpd,
    /// Microphones plus a single beam at the target.
    UnetBf,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [Self::Cdunet, Self::UnetPlain, Self::UnetIpd, Self::UnetBf];

    pub fn input_channels(self) -> usize {
        match self {
            Self::Cdunet => 10,
            Self::UnetPlain => 4,
            Self::UnetIpd => 5,
            Self::UnetBf => 6,
        }
    }

    /// How many of the leading input planes are magnitudes.
    pub fn magnitude_planes(self) -> usize {
        match self {
            Self::Cdunet => 5,
            Self::UnetPlain | Self::UnetIpd => 2,
            Self::UnetBf => 3,
        }
    }

    pub fn from_input_channels(c: usize) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.input_channels() == c)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Cdunet => "cdunet",
            Self::UnetPlain => "unet_plain",
            Self::UnetIpd => "unet_ipd",
            Self::UnetBf => "unet_bf",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model variant `{s}`")))
    }
}

/// Layer sizes of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    pub encoder_channels: [usize; 3],
    /// Encoder kernel as (frequency, time).
    pub kernel: (usize, usize),
    pub freq_stride: usize,
    /// Frequency taps of the transposed convolutions (time taps are 1).
    pub decoder_kernel_f: usize,
    /// Hidden size of the time-axis LSTM.
    pub lstm_hidden: usize,
    /// Hidden size per direction of the frequency-axis recurrence.
    pub freq_hidden: usize,
    pub cbam_reduction: usize,
    pub spatial_kernel: usize,
    pub norm_eps: f64,
    pub window_size: usize,
    pub hop_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: ModelVariant::Cdunet,
            encoder_channels: [16, 32, 48],
            kernel: (5, 3),
            freq_stride: 2,
            decoder_kernel_f: 3,
            lstm_hidden: 48,
            freq_hidden: 12,
            cbam_reduction: 4,
            spatial_kernel: 7,
            norm_eps: 1e-5,
            window_size: 512,
            hop_size: 256,
        }
    }
}

impl ModelConfig {
    pub fn for_variant(variant: ModelVariant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn stft(&self) -> Result<StftConfig> {
        StftConfig::hann(self.window_size, self.hop_size)
    }

    pub fn n_freq(&self) -> usize {
        self.window_size / 2 + 1
    }

    pub(crate) fn encoder_spec(&self) -> ConvSpec {
        ConvSpec::new(self.freq_stride, self.kernel.0 / 2)
    }

    pub(crate) fn decoder_spec(&self) -> ConvSpec {
        ConvSpec::new(self.freq_stride, self.decoder_kernel_f / 2)
    }

    pub(crate) fn spatial_spec(&self) -> ConvSpec {
        ConvSpec::new(1, self.spatial_kernel / 2)
    }

    /// Frequency sizes at the input and after each encoder block.
    pub fn freq_sizes(&self) -> Result<[usize; 4]> {
        let spec = self.encoder_spec();
        let mut f = [self.n_freq(), 0, 0, 0];
        for i in 0..3 {
            f[i + 1] = spec
                .conv_out(f[i], self.kernel.0)
                .filter(|&v| v > 0)
                .ok_or_else(|| Error::Config(format!("encoder block {} has no frequency bins left", i + 1)))?;
        }
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let odd = |k: usize| k % 2 == 1;
        if !odd(self.kernel.0) || !odd(self.decoder_kernel_f) || !odd(self.spatial_kernel) || self.kernel.1 == 0 {
            return Err(Error::Config("frequency kernels must be odd and time kernels non-zero".into()));
        }
        if self.freq_stride == 0 || self.lstm_hidden == 0 || self.freq_hidden == 0 {
            return Err(Error::Config("strides and hidden sizes must be positive".into()));
        }
        if self.encoder_channels.contains(&0) {
            return Err(Error::Config("encoder channels must be positive".into()));
        }
        if self.cbam_reduction == 0 {
            return Err(Error::Config("CBAM reduction must be positive".into()));
        }
        for &c in &self.encoder_channels {
            if c % self.cbam_reduction != 0 {
                return Err(Error::Config(format!(
                    "{c} channels not divisible by CBAM reduction {}",
                    self.cbam_reduction
                )));
            }
        }
        let f = self.freq_sizes()?;
        let dec = self.decoder_spec();
        for i in (1..4).rev() {
            let up = dec.transpose_out(f[i], self.decoder_kernel_f);
            if up != Some(f[i - 1]) {
                return Err(Error::Config(format!(
                    "decoder upsamples {} bins to {up:?}, expected {}",
                    f[i],
                    f[i - 1]
                )));
            }
        }
        self.stft()?;
        Ok(())
    }

    /// Names and shapes of every trainable tensor, in a fixed order.
    pub fn layer_plan(&self) -> Vec<(String, Vec<usize>)> {
        let mut plan = Vec::new();
        let mut add = |name: String, shape: Vec<usize>| plan.push((name, shape));
        let [c1, c2, c3] = self.encoder_channels;
        let (kf, kt) = self.kernel;
        let ins = [self.variant.input_channels(), c1, c2];
        for (i, (&cin, &cout)) in ins.iter().zip(&self.encoder_channels).enumerate() {
            let p = format!("enc{}", i + 1);
            add(format!("{p}.conv.weight"), vec![cout, cin, kf, kt]);
            add(format!("{p}.conv.bias"), vec![cout]);
            add(format!("{p}.norm.gamma"), vec![cout]);
            add(format!("{p}.norm.beta"), vec![cout]);
        }
        let (hf, ht) = (self.freq_hidden, self.lstm_hidden);
        for dir in ["fwd", "bwd"] {
            add(format!("bottleneck.freq.{dir}.w_ih"), vec![4 * hf, c3]);
            add(format!("bottleneck.freq.{dir}.w_hh"), vec![4 * hf, hf]);
            add(format!("bottleneck.freq.{dir}.bias"), vec![4 * hf]);
        }
        add("bottleneck.freq.proj.weight".into(), vec![c3, 2 * hf]);
        add("bottleneck.freq.proj.bias".into(), vec![c3]);
        add("bottleneck.freq.norm.gamma".into(), vec![c3]);
        add("bottleneck.freq.norm.beta".into(), vec![c3]);
        add("bottleneck.time.w_ih".into(), vec![4 * ht, c3]);
        add("bottleneck.time.w_hh".into(), vec![4 * ht, ht]);
        add("bottleneck.time.bias".into(), vec![4 * ht]);
        add("bottleneck.time.proj.weight".into(), vec![c3, ht]);
        add("bottleneck.time.proj.bias".into(), vec![c3]);
        add("bottleneck.time.norm.gamma".into(), vec![c3]);
        add("bottleneck.time.norm.beta".into(), vec![c3]);
        let ks = self.spatial_kernel;
        let cbam = |plan: &mut Vec<(String, Vec<usize>)>, p: &str, c: usize| {
            let r = c / self.cbam_reduction;
            plan.push((format!("{p}.w1.weight"), vec![r, c]));
            plan.push((format!("{p}.w1.bias"), vec![r]));
            plan.push((format!("{p}.w2.weight"), vec![c, r]));
            plan.push((format!("{p}.w2.bias"), vec![c]));
            plan.push((format!("{p}.spatial.weight"), vec![1, 2, ks, ks]));
            plan.push((format!("{p}.spatial.bias"), vec![1]));
        };
        cbam(&mut plan, "skip3.cbam", c3);
        cbam(&mut plan, "skip2.cbam", c2);
        cbam(&mut plan, "skip1.cbam", c1);
        cbam(&mut plan, "dec3.cbam", c2);
        cbam(&mut plan, "dec2.cbam", c1);
        let kd = self.decoder_kernel_f;
        for (name, cin, cout, norm) in [
            ("dec3", 2 * c3, c2, true),
            ("dec2", 2 * c2, c1, true),
            ("dec1", 2 * c1, 1, false),
        ] {
            plan.push((format!("{name}.convt.weight"), vec![cin, cout, kd, 1]));
            plan.push((format!("{name}.convt.bias"), vec![cout]));
            if norm {
                plan.push((format!("{name}.norm.gamma"), vec![cout]));
                plan.push((format!("{name}.norm.beta"), vec![cout]));
            }
        }
        plan
    }

    /// Trainable parameters of this configuration.
    pub fn param_count(&self) -> usize {
        self.layer_plan().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}
