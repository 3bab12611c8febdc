use super::{LmConfig, ParamSet, UnitLm};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::numcore::Real;

/// Serializes the backbone into an "LM" container.
pub fn save_checkpoint<T: Real>(lm: &UnitLm<T>) -> Vec<u8> {
    let model = toml::to_string(lm.config()).expect("config serializes");
    let mut c = Container::new(format!(
        "component = \"LM\"\ndtype = \"{}\"\nfrozen = {}\n\n[model]\n{model}",
        T::DTYPE.name(),
        lm.is_frozen()
    ));
    for (name, t) in lm.params().iter() {
        c.push_tensor(name, t);
    }
    c.to_bytes()
}

/// Parses an "LM" container, converting parameters to `T` when the stored
/// dtype differs.
pub fn load_checkpoint<T: Real>(bytes: &[u8]) -> Result<UnitLm<T>> {
    let c = Container::from_bytes(bytes)?;
    let table = c.config_table("LM")?;
    let model = table
        .get("model")
        .cloned()
        .ok_or_else(|| Error::CorruptCheckpoint("missing [model] table".into()))?;
    let config: LmConfig = model
        .try_into()
        .map_err(|e| Error::CorruptCheckpoint(format!("model config: {e}")))?;
    config
        .validate()
        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    let frozen = table.get("frozen").and_then(|v| v.as_bool()).unwrap_or(false);
    let mut params = ParamSet::default();
    for rec in &c.records {
        params.push(rec.name.clone(), c.tensor::<T>(&rec.name)?);
    }
    UnitLm::from_parts(config, params, frozen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unitlm::{LmInput, Variant};

    fn lm() -> UnitLm<f32> {
        let config = LmConfig {
            variant: Variant::EncoderDecoder,
            n_layers: 1,
            n_heads: 2,
            d_model: 8,
            d_ff: 8,
            n_units: 6,
            max_positions: 16,
            dropout: 0.1,
        };
        UnitLm::new(config, 2).unwrap()
    }

    #[test]
    fn save_load_save_is_identical() {
        let mut m = lm();
        m.freeze();
        let bytes = save_checkpoint(&m);
        let back: UnitLm<f32> = load_checkpoint(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(save_checkpoint(&back), bytes);
        let input = LmInput::EncoderDecoder {
            source: &[1, 2, 3],
            target: &[10, 4],
        };
        assert_eq!(m.forward(input, None).unwrap(), back.forward(input, None).unwrap());
    }

    #[test]
    fn truncated_and_wrong_component_rejected() {
        let bytes = save_checkpoint(&lm());
        assert!(matches!(
            load_checkpoint::<f32>(&bytes[..bytes.len() / 2]),
            Err(Error::CorruptCheckpoint(_))
        ));
        let other = Container::new("component = \"VERB\"\n").to_bytes();
        assert!(matches!(load_checkpoint::<f32>(&other), Err(Error::CorruptCheckpoint(_))));
    }
}
