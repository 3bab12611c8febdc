use crate::error::{Error, Result};

/// Frames per second of SSL features and units.
pub const FRAME_RATE: f64 = 50.0;
/// Default SSL feature width used for the accounting.
pub const SSL_DIM: usize = 1024;

const WAVEFORM_BITS_PER_SECOND: f64 = 16.0 * 16000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataFormat {
    /// 16-bit PCM at 16 kHz.
    Waveform,
    /// 32-bit float SSL features of the given width at 50 frames/s.
    Ssl { dim: usize },
    /// Discrete units from a quantizer with `clusters` centroids at 50 frames/s.
    Units { clusters: usize },
}

impl DataFormat {
    pub fn ssl() -> Self {
        DataFormat::Ssl { dim: SSL_DIM }
    }

    /// Bits needed to store one frame (or one second of samples for waveform).
    pub fn bits_per_frame(&self) -> f64 {
        match *self {
            DataFormat::Waveform => WAVEFORM_BITS_PER_SECOND,
            DataFormat::Ssl { dim } => 32.0 * dim as f64,
            DataFormat::Units { clusters } => ceil_log2(clusters) as f64,
        }
    }

    /// Parses `waveform`, `ssl`, `ssl:<dim>`, or `units:<clusters>`.
    pub fn parse(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>, default: Option<usize>| -> Result<usize> {
            match (a, default) {
                (Some(a), _) => a
                    .parse()
                    .map_err(|_| Error::Config(format!("bad number in format {s:?}"))),
                (None, Some(d)) => Ok(d),
                (None, None) => Err(Error::Config(format!("format {s:?} needs a value"))),
            }
        };
        match head {
            "waveform" | "wav" => Ok(DataFormat::Waveform),
            "ssl" => Ok(DataFormat::Ssl {
                dim: num(arg, Some(SSL_DIM))?,
            }),
            "units" => {
                let clusters = num(arg, None)?;
                if clusters == 0 {
                    return Err(Error::Config("units need at least one cluster".into()));
                }
                Ok(DataFormat::Units { clusters })
            }
            _ => Err(Error::Config(format!("unknown data format {s:?}"))),
        }
    }
}

fn ceil_log2(c: usize) -> u32 {
    if c <= 1 {
        0
    } else {
        usize::BITS - (c - 1).leading_zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataSize {
    pub bits: f64,
    /// Size relative to the 16 kHz, 16-bit waveform of the same duration.
    pub ratio_to_waveform: f64,
}

/// Storage needed for `seconds` of speech in `format`.
pub fn data_size_bits(format: DataFormat, seconds: f64) -> Result<DataSize> {
    if !(seconds >= 0.0) || !seconds.is_finite() {
        return Err(Error::Config(format!("duration must be >= 0, got {seconds}")));
    }
    let bits = match format {
        DataFormat::Waveform => WAVEFORM_BITS_PER_SECOND * seconds,
        _ => format.bits_per_frame() * FRAME_RATE * seconds,
    };
    let ratio_to_waveform = match format {
        DataFormat::Waveform => 1.0,
        _ => format.bits_per_frame() * FRAME_RATE / WAVEFORM_BITS_PER_SECOND,
    };
    Ok(DataSize {
        bits,
        ratio_to_waveform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_second_sizes() {
        assert_eq!(data_size_bits(DataFormat::Waveform, 1.0).unwrap().bits, 256_000.0);
        let ssl = data_size_bits(DataFormat::ssl(), 1.0).unwrap();
        assert_eq!(ssl.bits, 1_638_400.0);
        assert_eq!(ssl.ratio_to_waveform, 6.4);
        let u100 = data_size_bits(DataFormat::Units { clusters: 100 }, 1.0).unwrap();
        assert_eq!(u100.bits, 350.0);
        assert!((u100.ratio_to_waveform - 1.367e-3).abs() < 1e-5);
        let u1000 = data_size_bits(DataFormat::Units { clusters: 1000 }, 2.0).unwrap();
        assert_eq!(u1000.bits, 1000.0);
    }

    #[test]
    fn ceil_log2_edges() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(100), 7);
        assert_eq!(ceil_log2(128), 7);
        assert_eq!(ceil_log2(129), 8);
        assert_eq!(ceil_log2(1000), 10);
    }

    #[test]
    fn negative_duration_rejected() {
        assert!(data_size_bits(DataFormat::Waveform, -1.0).is_err());
        assert!(data_size_bits(DataFormat::Waveform, f64::NAN).is_err());
    }

    #[test]
    fn format_parsing() {
        assert_eq!(DataFormat::parse("waveform").unwrap(), DataFormat::Waveform);
        assert_eq!(DataFormat::parse("ssl").unwrap(), DataFormat::Ssl { dim: 1024 });
        assert_eq!(DataFormat::parse("ssl:768").unwrap(), DataFormat::Ssl { dim: 768 });
        assert_eq!(
            DataFormat::parse("units:100").unwrap(),
            DataFormat::Units { clusters: 100 }
        );
        assert!(DataFormat::parse("units").is_err());
        assert!(DataFormat::parse("mp3").is_err());
    }
}
