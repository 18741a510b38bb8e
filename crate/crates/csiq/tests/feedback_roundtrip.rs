//! End-to-end over-the-air contract: the user quantizes, serializes the
//! payload bits, and a separate receiver instance reconstructs from those
//! bits alone (plus the shared configuration). The receiver's basis,
//! amplitudes and per-subband channel estimates must match the user side
//! bit for bit, and every payload must be exactly as long as its reported
//! bit count.

use csiq::channel::{generate_user_channels, normalized_sample_covariance, ArrayGeometry, ClusterModelConfig, PolarizationMode};
use csiq::codebook::{binary_chirp_2d, dft_oversampled, random_lines, tensored, ProductCodebook};
use csiq::subband::{
    effective_channels, quantize_ext2, quantize_int5, quantize_pcb_subband, read_payload,
    reconstruct, reconstruct_coordinates, reconstruct_pcb_coordinates, write_payload,
    BitAllocationParams, SubbandScheme,
};
use csiq::wideband::{
    build_feedback, read_feedback, AmplitudeCodebook, WidebandScheme, WidebandShared,
};

#[test]
fn full_feedback_chain_is_bit_reproducible() {
    let geom = ArrayGeometry { n_h: 4, n_v: 2, n_p: 2, spacing: 0.5 };
    let cfg = ClusterModelConfig { n_subbands: 8, ..Default::default() };
    let h = dft_oversampled(4, 4).unwrap();
    let v = dft_oversampled(2, 2).unwrap();
    let p = binary_chirp_2d();
    let full_cb = tensored(&[&p, &h, &v]).unwrap();
    let block_cb = tensored(&[&h, &v]).unwrap();
    let amp_cb = AmplitudeCodebook::default();
    let k = 4;
    let ext2 = BitAllocationParams::ext2(2, 3, 2);
    let int5 = BitAllocationParams::int5(1, 3, 2);
    let comp = random_lines(2, 16, 99).unwrap();
    let pcb = ProductCodebook::new(comp, 2, 3).unwrap();

    for (mode, cb) in [
        (PolarizationMode::Full, &full_cb),
        (PolarizationMode::B00B, &block_cb),
        (PolarizationMode::BplusBminus, &block_cb),
    ] {
        for scheme in [WidebandScheme::Owp, WidebandScheme::Swp] {
            for user in 0..6u64 {
                let set = generate_user_channels(&geom, &cfg, 2024, user).unwrap();
                let r = normalized_sample_covariance(&set).unwrap();

                // user side
                let fb = match build_feedback(&r, scheme, mode, k, cb, &amp_cb) {
                    Ok(fb) => fb,
                    // codeword collisions legitimately abort a user
                    Err(csiq::wideband::WidebandError::RankDeficient { .. }) => continue,
                    Err(e) => panic!("{e}"),
                };
                let wb_payload = fb.write_payload(cb.index_bits());
                assert_eq!(wb_payload.bit_len(), fb.total_bits());

                // receiver side: shared config + payload bits only
                let shared = WidebandShared {
                    scheme,
                    pol_mode: mode,
                    k,
                    n_t: geom.n_t(),
                    cb,
                    amp_cb: &amp_cb,
                };
                let rx = read_feedback(wb_payload.as_bytes(), &shared).unwrap();
                assert_eq!(rx.w, fb.w, "{mode:?}/{scheme:?} user {user}: basis mismatch");
                assert_eq!(rx.sigma_hat, fb.sigma_hat);

                // subband records for each scheme, through their payloads
                for h_s in &set.subbands {
                    let eff = effective_channels(&fb.w, &fb.sigma_hat, h_s).unwrap();

                    let sfb = quantize_ext2(&eff.c, &fb.sigma_hat, &ext2).unwrap();
                    let payload = write_payload(&sfb, Some(&ext2), None).unwrap();
                    assert_eq!(payload.bit_len(), sfb.payload_bits);
                    let record = read_payload(
                        payload.as_bytes(),
                        SubbandScheme::Ext2,
                        k,
                        Some(&ext2),
                        None,
                    )
                    .unwrap();
                    assert_eq!(record, sfb.record);
                    let c_user =
                        reconstruct_coordinates(&sfb.record, k, &fb.sigma_hat, &ext2).unwrap();
                    let c_bs = reconstruct_coordinates(&record, k, &rx.sigma_hat, &ext2).unwrap();
                    assert_eq!(c_user, c_bs);
                    let h_user = reconstruct(&fb.w, &fb.sigma_hat, &c_user).unwrap();
                    let h_bs = reconstruct(&rx.w, &rx.sigma_hat, &c_bs).unwrap();
                    assert_eq!(h_user, h_bs, "reconstructed direction differs across ends");

                    let sfb = quantize_int5(&eff.c, &fb.sigma_hat, &int5).unwrap();
                    let payload = write_payload(&sfb, Some(&int5), None).unwrap();
                    assert_eq!(payload.bit_len(), sfb.payload_bits);
                    let record = read_payload(
                        payload.as_bytes(),
                        SubbandScheme::Int5,
                        k,
                        Some(&int5),
                        None,
                    )
                    .unwrap();
                    assert_eq!(record, sfb.record);

                    let sfb = quantize_pcb_subband(&eff.b, &fb.sigma_hat, &pcb).unwrap();
                    let payload = write_payload(&sfb, None, Some(&pcb)).unwrap();
                    assert_eq!(payload.bit_len(), sfb.payload_bits);
                    let record =
                        read_payload(payload.as_bytes(), SubbandScheme::Pcb, k, None, Some(&pcb))
                            .unwrap();
                    assert_eq!(record, sfb.record);
                    let c_bs = reconstruct_pcb_coordinates(&record, &pcb).unwrap();
                    let h_bs = reconstruct(&rx.w, &rx.sigma_hat, &c_bs).unwrap();
                    assert!((h_bs.norm() - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn payload_bits_match_reported_counts_across_budgets() {
    let k = 8;
    let sigma = [1.0, 0.7071, 0.5, 0.5, 0.3536, 0.25, 0.25, 0.125];
    let mut entries = Vec::new();
    for m in [5, 6, 7] {
        entries.push((SubbandScheme::Ext2, BitAllocationParams::ext2(m, 3, 2)));
    }
    for m in [2, 4, 6] {
        entries.push((SubbandScheme::Int5, BitAllocationParams::int5(m, 3, 2)));
    }
    let c = csiq::linalg::CVec::from_fn(k, |i| {
        csiq::linalg::C64::new(0.3 + 0.1 * i as f64, 0.2 - 0.05 * i as f64)
    });
    for (scheme, params) in entries {
        let fb = match scheme {
            SubbandScheme::Ext2 => quantize_ext2(&c, &sigma, &params).unwrap(),
            SubbandScheme::Int5 => quantize_int5(&c, &sigma, &params).unwrap(),
            SubbandScheme::Pcb => unreachable!(),
        };
        let payload = write_payload(&fb, Some(&params), None).unwrap();
        assert_eq!(
            payload.bit_len(),
            fb.payload_bits,
            "{scheme:?} m={} payload length mismatch",
            params.m
        );
        assert_eq!(fb.bit_count, params.bit_count(scheme, k).unwrap());
    }
}
