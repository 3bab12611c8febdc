//! Storage cost of one second of speech as waveform, SSL features and units.

use anyhow::Result;
use unitprompt::unitizer::{data_size_bits, DataFormat};

fn main() -> Result<()> {
    let seconds = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1.0);
    let formats = [
        ("waveform", DataFormat::Waveform),
        ("ssl (1024-dim)", DataFormat::ssl()),
        ("ssl (768-dim)", DataFormat::Ssl { dim: 768 }),
        ("units, 100 clusters", DataFormat::Units { clusters: 100 }),
        ("units, 500 clusters", DataFormat::Units { clusters: 500 }),
        ("units, 1000 clusters", DataFormat::Units { clusters: 1000 }),
    ];
    println!("{:<22} {:>14} {:>12}", "format", "bits", "vs waveform");
    for (name, format) in formats {
        let size = data_size_bits(format, seconds)?;
        println!("{name:<22} {:>14} {:>12.3e}", size.bits, size.ratio_to_waveform);
    }
    Ok(())
}
