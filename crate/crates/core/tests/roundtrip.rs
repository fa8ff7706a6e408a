use jpeg_encoder::{ColorType, Encoder, SamplingFactor};
use jpegveil_core::{analyze, classify_byte, encrypt_jpeg, CipherConfig, Components, TokenKind};
use proptest::prelude::*;

fn encode(w: u16, h: u16, pixels: &[u8], color: bool, quality: u8, restart: u16, subsample: bool) -> Vec<u8> {
    let mut out = Vec::new();
    let mut enc = Encoder::new(&mut out, quality);
    if restart > 0 {
        enc.set_restart_interval(restart);
    }
    if subsample {
        enc.set_sampling_factor(SamplingFactor::R_4_2_0);
    }
    let ct = if color { ColorType::Rgb } else { ColorType::Luma };
    enc.encode(pixels, w, h, ct).unwrap();
    out
}

prop_compose! {
    fn jpeg()(w in 1u16..48, h in 1u16..48, color in any::<bool>())
        (pixels in proptest::collection::vec(any::<u8>(), w as usize * h as usize * if color { 3 } else { 1 }),
         w in Just(w), h in Just(h), color in Just(color),
         quality in 10u8..=100, restart in 0u16..4, subsample in any::<bool>()) -> Vec<u8> {
        encode(w, h, &pixels, color, quality, restart, subsample)
    }
}

fn components() -> impl Strategy<Value = Components> {
    prop_oneof![Just(Components::DcOnly), Just(Components::AcOnly), Just(Components::Both)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encryption_is_a_size_preserving_involution(
        file in jpeg(),
        key in proptest::collection::vec(any::<u8>(), 16..=64),
        comps in components(),
    ) {
        let cfg = CipherConfig::new(key, comps).unwrap();
        let enc = encrypt_jpeg(&file, &cfg).unwrap();
        prop_assert_eq!(enc.bytes.len(), file.len());
        let back = encrypt_jpeg(&enc.bytes, &cfg).unwrap();
        prop_assert_eq!(back.bytes, file);
    }

    #[test]
    fn only_eligible_bits_change(file in jpeg(), comps in components()) {
        let cfg = CipherConfig::new(vec![0xA5; 32], comps).unwrap();
        let enc = encrypt_jpeg(&file, &cfg).unwrap();
        let a = analyze(&file, comps).unwrap();
        let allowed = a.encrypted_bit_positions();
        let mut flipped = 0;
        for (i, (x, y)) in file.iter().zip(&enc.bytes).enumerate() {
            for j in 0..8 {
                if (x ^ y) & (0x80 >> j) != 0 {
                    prop_assert!(allowed.binary_search(&(i as u64 * 8 + j)).is_ok());
                    flipped += 1;
                }
            }
        }
        prop_assert_eq!(flipped, enc.report.flipped_bit_count);
    }

    #[test]
    fn ciphertext_tokenizes_like_plaintext(file in jpeg()) {
        let cfg = CipherConfig::new(vec![7; 16], Components::Both).unwrap();
        let enc = encrypt_jpeg(&file, &cfg).unwrap().bytes;
        let a = analyze(&file, Components::Both).unwrap();
        let b = analyze(&enc, Components::Both).unwrap();
        let shape = |t: &jpegveil_core::EntropyToken| (t.kind, t.bit_start, t.bit_len, t.symbol);
        prop_assert!(a.tokens.iter().map(shape).eq(b.tokens.iter().map(shape)));
        prop_assert_eq!(&a.bytes.classes, &b.bytes.classes);
        prop_assert!(a.tokens.iter().filter(|t| t.kind == TokenKind::StuffedByte).count() == a.tokens.stuffed.len());
    }

    #[test]
    fn single_byte_classification_matches_bulk(file in jpeg(), comps in components()) {
        let a = analyze(&file, comps).unwrap();
        let data = a.jpeg.entropy_bytes(&file);
        for (i, &class) in a.bytes.classes.iter().enumerate() {
            prop_assert_eq!(classify_byte(data, i, &a.tokens, comps).unwrap(), class);
        }
        prop_assert!(classify_byte(data, data.len(), &a.tokens, comps).is_err());
    }
}
