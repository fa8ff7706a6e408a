use jpegveil_core::Components;
use jpegveil_harness::equivalence::compare;
use jpegveil_harness::tiny::hand_built;

#[test]
fn core_matches_oracle_on_hand_built_images() {
    let images = hand_built(250);
    let mut failures = Vec::new();
    for (name, img) in &images {
        let file = img.encode();
        for c in [Components::Both, Components::DcOnly, Components::AcOnly] {
            if let Err(e) = compare(&file, c) {
                failures.push(format!("{name} ({c}): {e}"));
            }
        }
    }
    assert!(failures.is_empty(), "{} mismatches:\n{}", failures.len(), failures.join("\n"));
}

#[test]
fn hand_built_images_decode() {
    for (name, img) in hand_built(40) {
        let file = img.encode();
        jpegveil_harness::decode::decode(&file).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn hand_built_images_cover_every_byte_class() {
    use jpegveil_core::{analyze, ByteClass};
    let mut seen = std::collections::BTreeMap::new();
    for (_, img) in hand_built(250) {
        let file = img.encode();
        for c in [Components::Both, Components::DcOnly] {
            for (class, n) in analyze(&file, c).unwrap().bytes.histogram.iter() {
                *seen.entry(class).or_insert(0u64) += n;
            }
        }
    }
    for class in ByteClass::ALL {
        assert!(seen.get(&class).copied().unwrap_or(0) > 0, "{class:?} never produced: {seen:?}");
    }
}
