use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Non-convolutional beamformer used after (or instead of) dereverberation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Beamformer {
    Wmpdr,
    Mpdr,
    Mvdr,
}

impl Beamformer {
    fn name(self) -> &'static str {
        match self {
            Beamformer::Wmpdr => "wmpdr",
            Beamformer::Mpdr => "mpdr",
            Beamformer::Mvdr => "mvdr",
        }
    }
}

impl FromStr for Beamformer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wmpdr" => Ok(Beamformer::Wmpdr),
            "mpdr" => Ok(Beamformer::Mpdr),
            "mvdr" => Ok(Beamformer::Mvdr),
            other => Err(Error::Config(format!("unknown beamformer '{other}'"))),
        }
    }
}

/// Enhancement method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Reference-channel pass-through.
    Obs,
    /// Unified convolutional beamformer on the stacked observation.
    Wpd,
    /// MIMO-WPE alone; outputs the reference channel of the dereverberated signal.
    WpeOnly,
    /// Beamformer on the raw observation.
    BfOnly(Beamformer),
    /// WPE followed by a beamformer, sharing one PSD estimate from the output.
    Joint(Beamformer),
    /// WPE iterated on its own PSD, then the beamformer iterated on its own.
    Separate(Beamformer),
}

impl Method {
    pub fn needs_steering(self) -> bool {
        !matches!(self, Method::Obs | Method::WpeOnly)
    }

    pub fn beamformer(self) -> Option<Beamformer> {
        match self {
            Method::BfOnly(b) | Method::Joint(b) | Method::Separate(b) => Some(b),
            Method::Wpd => None,
            Method::Obs | Method::WpeOnly => None,
        }
    }

    /// Whether the method uses past frames at all.
    pub fn is_convolutional(self) -> bool {
        matches!(self, Method::Wpd | Method::WpeOnly | Method::Joint(_) | Method::Separate(_))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Obs => f.write_str("obs"),
            Method::Wpd => f.write_str("wpd"),
            Method::WpeOnly => f.write_str("wpe"),
            Method::BfOnly(b) => f.write_str(b.name()),
            Method::Joint(b) => write!(f, "wpe+{}", b.name()),
            Method::Separate(b) => write!(f, "wpe+{}:separate", b.name()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "obs" | "observation" => Method::Obs,
            "wpd" | "wpd_unified" => Method::Wpd,
            "wpe" | "wpe_only" => Method::WpeOnly,
            "wpe_wmpdr_joint" => Method::Joint(Beamformer::Wmpdr),
            "wpe_then_bf_separate" => Method::Separate(Beamformer::Wmpdr),
            _ => {
                if let Some(bf) = s.strip_prefix("bf_only:") {
                    Method::BfOnly(bf.parse()?)
                } else if let Some(rest) = s.strip_prefix("wpe+") {
                    match rest.split_once(':') {
                        None => Method::Joint(rest.parse()?),
                        Some((bf, "joint")) => Method::Joint(bf.parse()?),
                        Some((bf, "separate")) => Method::Separate(bf.parse()?),
                        Some((_, scheme)) => return Err(Error::Config(format!("unknown optimization scheme '{scheme}'"))),
                    }
                } else {
                    Method::BfOnly(s.parse().map_err(|_| Error::Config(format!("unknown method '{s}'")))?)
                }
            }
        })
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Prediction-filter length for bins below `upper_hz` (`None`: up to Nyquist).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LwBand {
    pub upper_hz: Option<f64>,
    pub taps: usize,
}

/// Parses `"800:12,1500:10,8000:6"` (upper edge in Hz : taps) or a single
/// tap count such as `"7"`.
pub fn parse_lw_bands(s: &str) -> Result<Vec<LwBand>> {
    let mut bands = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let band = match part.split_once(':') {
            Some((hz, taps)) => LwBand {
                upper_hz: Some(hz.trim().parse().map_err(|_| Error::Config(format!("bad band edge '{hz}'")))?),
                taps: taps.trim().parse().map_err(|_| Error::Config(format!("bad tap count '{taps}'")))?,
            },
            None => LwBand {
                upper_hz: None,
                taps: part.parse().map_err(|_| Error::Config(format!("bad tap count '{part}'")))?,
            },
        };
        bands.push(band);
    }
    if bands.is_empty() {
        return Err(Error::Config("empty filter-length list".into()));
    }
    Ok(bands)
}

pub fn format_lw_bands(bands: &[LwBand]) -> String {
    bands
        .iter()
        .map(|b| match b.upper_hz {
            Some(hz) => format!("{hz}:{}", b.taps),
            None => b.taps.to_string(),
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// How the PSD is initialized from the observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaInit {
    ChannelMean,
    Reference,
}

impl FromStr for LambdaInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "channel_mean" => Ok(LambdaInit::ChannelMean),
            "reference" => Ok(LambdaInit::Reference),
            other => Err(Error::Config(format!("unknown PSD initialization '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub method: Method,
    /// Prediction delay `b` in frames.
    pub delay: usize,
    pub lw_bands: Vec<LwBand>,
    pub iterations: usize,
    /// WPE iterations of the separate scheme; defaults to `iterations`.
    pub separate_inner_iterations: Option<usize>,
    pub loading: f64,
    /// PSD floor relative to the mean observation power of each bin.
    pub lambda_floor: f64,
    pub reference_channel: usize,
    pub lambda_init: LambdaInit,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            method: Method::Joint(Beamformer::Wmpdr),
            delay: 4,
            lw_bands: vec![
                LwBand { upper_hz: Some(800.0), taps: 12 },
                LwBand { upper_hz: Some(1500.0), taps: 10 },
                LwBand { upper_hz: Some(8000.0), taps: 6 },
            ],
            iterations: 1,
            separate_inner_iterations: None,
            loading: 1e-10,
            lambda_floor: 1e-10,
            reference_channel: 0,
            lambda_init: LambdaInit::ChannelMean,
        }
    }
}

impl PipelineConfig {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    /// A single filter length for every bin.
    pub fn with_taps(mut self, delay: usize, taps: usize) -> Self {
        self.delay = delay;
        self.lw_bands = vec![LwBand { upper_hz: None, taps }];
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    /// Filter length for a bin at `freq_hz`; bands include their lower edge.
    pub fn taps_for(&self, freq_hz: f64) -> Option<usize> {
        self.lw_bands
            .iter()
            .find(|b| b.upper_hz.is_none_or(|hz| freq_hz < hz))
            .or_else(|| self.lw_bands.last().filter(|b| b.upper_hz.is_none_or(|hz| freq_hz <= hz)))
            .map(|b| b.taps)
    }

    pub fn validate(&self, sample_rate: u32, channels: usize) -> Result<()> {
        if self.iterations == 0 || self.separate_inner_iterations == Some(0) {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.delay == 0 {
            return Err(Error::Config("prediction delay must be at least one frame".into()));
        }
        if !(self.loading >= 0.0 && self.loading.is_finite()) {
            return Err(Error::Config("loading must be finite and non-negative".into()));
        }
        if !(self.lambda_floor > 0.0 && self.lambda_floor.is_finite()) {
            return Err(Error::Config("PSD floor must be positive".into()));
        }
        if self.reference_channel >= channels {
            return Err(Error::Config(format!(
                "reference channel {} out of range for {channels} channels",
                self.reference_channel
            )));
        }
        if self.method.needs_steering() && channels < 2 {
            return Err(Error::Config("need ≥2 channels".into()));
        }
        let mut last = 0.0;
        for band in &self.lw_bands {
            if band.taps < self.delay {
                return Err(Error::FilterShorterThanDelay);
            }
            match band.upper_hz {
                Some(hz) if hz <= last => return Err(Error::Config("band edges must increase".into())),
                Some(hz) => last = hz,
                None => last = f64::INFINITY,
            }
        }
        let nyquist = sample_rate as f64 / 2.0;
        if self.lw_bands.last().and_then(|b| b.upper_hz).is_some_and(|hz| hz < nyquist) {
            return Err(Error::Config(format!("filter-length bands stop below Nyquist ({nyquist} Hz)")));
        }
        Ok(())
    }
}
