//! Side-by-side comparison of the core classifier with the brute-force oracle.

use jpegveil_core::{analyze, ByteClass, Components};

use crate::oracle::{brute_force_oracle, OracleClass};

pub fn oracle_class(class: OracleClass) -> ByteClass {
    match class {
        OracleClass::CodeOnly => ByteClass::AllHuffman,
        OracleClass::ExtraOnly => ByteClass::AllAdditional,
        OracleClass::StuffedZero => ByteClass::StuffedZero,
        OracleClass::OnesOnlyCode => ByteClass::AllOnesHuffman,
        OracleClass::Encrypt => ByteClass::Eligible,
        OracleClass::BandOff => ByteClass::ComponentDisabled,
        OracleClass::Other => ByteClass::NonData,
    }
}

/// Checks that both implementations agree on every byte class and on the
/// exact set of encrypted bit positions. Returns a description of the first
/// disagreement.
pub fn compare(file: &[u8], components: Components) -> Result<(), String> {
    let (dc, ac) = match components {
        Components::DcOnly => (true, false),
        Components::AcOnly => (false, true),
        Components::Both => (true, true),
    };
    let trace = brute_force_oracle(file, dc, ac).map_err(|e| e.to_string())?;
    let analysis = analyze(file, components).map_err(|e| e.to_string())?;
    if analysis.jpeg.entropy.offset != trace.entropy_offset {
        return Err(format!(
            "entropy offset {} vs oracle {}",
            analysis.jpeg.entropy.offset, trace.entropy_offset
        ));
    }
    if analysis.bytes.classes.len() != trace.classes.len() {
        return Err(format!(
            "{} classified bytes vs oracle {}",
            analysis.bytes.classes.len(),
            trace.classes.len()
        ));
    }
    for (i, (&got, &want)) in analysis.bytes.classes.iter().zip(&trace.classes).enumerate() {
        if got != oracle_class(want) {
            return Err(format!("byte {i}: {got:?} vs oracle {want:?}"));
        }
    }
    if analysis.encrypted_bit_positions() != trace.encrypted {
        return Err("encrypted bit positions differ".to_string());
    }
    Ok(())
}
