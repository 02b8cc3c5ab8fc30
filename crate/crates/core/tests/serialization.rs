use caps_core::analysis::{estimate_index_size, CostModelParams};
use caps_core::datagen::{gen_attributes, AttributeSpec, MixtureSpec};
use caps_core::io::{self, HEADER_LEN};
use caps_core::{CapsIndex, IndexConfig, QueryFilter, WILDCARD};

fn build(n: usize, b: usize, h: usize, cardinality: u32) -> CapsIndex {
    let mix = MixtureSpec {
        d: 8,
        clusters: 10,
        center_scale: 40.0,
        spread: 5.0,
        quantize: false,
        intrinsic_dim: 0,
        seed: 1,
    };
    let spec = AttributeSpec {
        cardinalities: vec![cardinality; 4],
        ..AttributeSpec::default_l3()
    };
    let config = IndexConfig {
        partitions: Some(b),
        height: h,
        ..IndexConfig::default()
    };
    CapsIndex::build(mix.sample(n, 0).unwrap(), gen_attributes(n, &spec).unwrap(), &config).unwrap()
}

#[test]
fn overhead_matches_size_formula() {
    for (n, b, h, c) in [
        (500, 4, 0, 3),
        (2000, 16, 4, 12),
        (1200, 7, 9, 300),
        (300, 1, 2, 70_000),
    ] {
        let index = build(n, b, h, c);
        let p = CostModelParams::for_index(&index, 1, 0.1);
        let lean = index.to_bytes(false);
        let full = index.to_bytes(true);
        assert_eq!((lean.len() - HEADER_LEN) as u64, estimate_index_size(&p, false));
        assert_eq!((full.len() - HEADER_LEN) as u64, estimate_index_size(&p, true));
    }
}

#[test]
fn file_round_trip_preserves_search() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.caps");
    let index = build(2000, 8, 3, 5);
    index.save(&path).unwrap();
    let back = io::load(&path).unwrap();
    let lean = dir.path().join("lean.caps");
    index.save_with(&lean, false).unwrap();
    let attached = io::load_with_dataset(&lean, index.shared_vectors(), index.shared_attributes()).unwrap();
    for i in 0..50 {
        let q = index.vectors().row(i * 7);
        let f = QueryFilter::new(vec![(i % 5) as u32, WILDCARD, WILDCARD, (i % 3) as u32]);
        let a = index.search(q, &f, 10, 3).unwrap();
        assert_eq!(a, back.search(q, &f, 10, 3).unwrap());
        assert_eq!(a, attached.search(q, &f, 10, 3).unwrap());
    }
}

#[test]
fn every_single_byte_flip_is_rejected() {
    let index = build(200, 3, 2, 4);
    let bytes = index.to_bytes(true);
    for at in 0..bytes.len() {
        let mut bad = bytes.clone();
        bad[at] ^= 0x10;
        assert!(io::from_bytes(&bad, None).is_err(), "flip at byte {at} accepted");
    }
    for len in 0..bytes.len() {
        assert!(io::from_bytes(&bytes[..len], None).is_err());
    }
}
