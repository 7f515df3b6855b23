//! File-level integration: image files in, containers out, and back.

use qvrf::codec::{account_bits, decode_image, encode_image};
use qvrf::rate_control::FitConfig;
use qvrf::transform::Image;
use qvrf::{pnm, synth, Regulator};

#[test]
fn pgm_to_container_and_back() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("input.pgm");
    let packed = dir.path().join("input.qvrf");
    let out = dir.path().join("recon.pgm");

    let img = synth::synthetic_natural(200, 144, 77);
    pnm::write_pgm(&src, &img).unwrap();

    let loaded = pnm::read(&src).unwrap();
    assert_eq!(loaded, img);

    let a = Regulator::new(3.0).unwrap();
    let outcome = encode_image(&loaded, &a, 8).unwrap();
    std::fs::write(&packed, &outcome.bytes).unwrap();

    let decoded = decode_image(&std::fs::read(&packed).unwrap()).unwrap();
    assert_eq!(decoded, outcome.reconstruction);
    pnm::write_pgm(&out, &decoded).unwrap();
    assert_eq!(pnm::read(&out).unwrap(), decoded);

    let breakdown = account_bits(&outcome.bytes).unwrap();
    assert!(breakdown.total_bpp > 0.0);
}

#[test]
fn all_block_sizes_roundtrip() {
    let img = synth::synthetic_natural(100, 68, 5);
    for block in [4usize, 8, 16] {
        let outcome = encode_image(&img, &Regulator::new(2.0).unwrap(), block).unwrap();
        let decoded = decode_image(&outcome.bytes).unwrap();
        assert_eq!(decoded, outcome.reconstruction, "block {block}");
        assert_eq!(decoded.width(), 100);
        assert_eq!(decoded.height(), 68);
    }
}

#[test]
fn ppm_color_input_encodes() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("color.ppm");
    let mut data = b"P6\n24 16\n255\n".to_vec();
    for i in 0..24 * 16 {
        data.extend_from_slice(&[
            (i % 256) as u8,
            ((i * 7) % 256) as u8,
            ((i * 13) % 256) as u8,
        ]);
    }
    std::fs::write(&src, data).unwrap();
    let img = pnm::read(&src).unwrap();
    assert_eq!((img.width(), img.height()), (24, 16));
    let outcome = encode_image(&img, &Regulator::new(1.0).unwrap(), 8).unwrap();
    assert_eq!(
        decode_image(&outcome.bytes).unwrap(),
        outcome.reconstruction
    );
}

#[test]
fn fit_config_survives_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fit.txt");
    let lambdas = qvrf::LambdaSet::new(vec![1.0, 4.0, 9.0, 16.0]).unwrap();
    let vector = qvrf::init_regulators(&lambdas).unwrap();
    let cfg = FitConfig::from_ladder(&lambdas, &vector).unwrap();
    std::fs::write(&path, cfg.to_text()).unwrap();
    let back = FitConfig::from_text(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, cfg);
    let a = qvrf::lambda_to_regulator(9.0, &back.fit);
    assert!((a.value() - 3.0).abs() < 1e-9);
}

#[test]
fn tiny_images_survive() {
    for (w, h) in [(1usize, 1usize), (3, 17), (8, 8), (9, 9)] {
        let img = Image::from_fn(w, h, |x, y| ((x * 37 + y * 11) % 256) as u8).unwrap();
        let outcome = encode_image(&img, &Regulator::new(4.0).unwrap(), 8).unwrap();
        let decoded = decode_image(&outcome.bytes).unwrap();
        assert_eq!(decoded, outcome.reconstruction, "{w}x{h}");
    }
}
