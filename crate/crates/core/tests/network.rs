mod common;

use std::sync::Arc;

use common::{assets, lenet, random_split, random_tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use splitnoise::fixture::init_weights;
use splitnoise::network::{valid_cuts, Network, NetworkSpec, Split, Weights};
use splitnoise::tensor_core::Tensor;
use splitnoise::Error;

#[test]
fn bundled_networks_have_expected_cuts_and_shapes() {
    let net = lenet();
    assert_eq!(valid_cuts(net.spec()), vec![3, 7, 9, 11]);
    assert_eq!(net.input_shape(), &[1, 28, 28]);
    assert_eq!(net.classes(), 10);
    assert_eq!(
        Split::new(net.clone(), 7).unwrap().activation_shape(),
        &[256]
    );
    let dual = NetworkSpec::load(assets().join("dual/net.toml")).unwrap();
    assert_eq!(valid_cuts(&dual), vec![4, 6]);
}

#[test]
fn invalid_cuts_list_the_valid_positions() {
    let net = lenet();
    for cut in [0, 1, 2, 4, 12, 40] {
        match Split::new(net.clone(), cut) {
            Err(Error::InvalidSplit(msg)) => assert!(msg.contains("[3, 7, 9, 11]"), "{msg}"),
            other => panic!("cut {cut}: {other:?}"),
        }
    }
}

#[test]
fn every_valid_cut_composes_to_the_full_network() {
    let net = lenet();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_tensor(net.input_shape(), 0.3, &mut rng);
    let full = net.forward(&x).unwrap();
    for cut in valid_cuts(net.spec()) {
        let split = Split::new(net.clone(), cut).unwrap();
        let a = split.run_edge(&x).unwrap();
        assert_eq!(
            split.run_cloud(&a).unwrap().data(),
            full.data(),
            "cut {cut}"
        );
    }
}

#[test]
fn cloud_rejects_wrong_activation_shape() {
    let split = Split::new(lenet(), 7).unwrap();
    assert!(matches!(
        split.run_cloud(&Tensor::zeros(&[255])),
        Err(Error::ShapeMismatch { .. })
    ));
}

#[test]
fn weights_file_round_trips_bit_exactly() {
    let bytes = std::fs::read(assets().join("lenet5.weights")).unwrap();
    let w = Weights::decode(&bytes).unwrap();
    assert_eq!(w.encode().unwrap(), bytes);
    assert_eq!(lenet().weights().encode().unwrap(), bytes);
    for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(Weights::decode(&bytes[..cut]).is_err());
    }
}

#[test]
fn parameter_checksum_is_sha256_of_the_buffers() {
    let net = lenet();
    let mut h = Sha256::new();
    for layer in net.layers() {
        if let Some(p) = layer.params() {
            for t in [&p.weight, &p.bias] {
                for v in t.data() {
                    h.update(v.to_le_bytes());
                }
            }
        }
    }
    let expected: [u8; 32] = h.finalize().into();
    assert_eq!(net.parameter_checksum(), expected);
}

#[test]
fn hash_tracks_topology_and_parameters() {
    let spec = NetworkSpec::load(assets().join("lenet5.toml")).unwrap();
    let w = init_weights(&spec, 1).unwrap();
    let a = Network::new(spec.clone(), &w).unwrap();
    let b = Network::new(spec.clone(), &w).unwrap();
    assert_eq!(a.hash(), b.hash());
    let mut w2 = w.clone();
    let (name, t) = w
        .iter()
        .next()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .unwrap();
    let mut data = t.data().to_vec();
    data[0] += 1e-3;
    w2.insert(name, Tensor::new(t.shape().to_vec(), data).unwrap());
    assert_ne!(Network::new(spec, &w2).unwrap().hash(), a.hash());
}

#[test]
fn missing_or_misshapen_parameters_are_rejected() {
    let spec = NetworkSpec::load(assets().join("lenet5.toml")).unwrap();
    let w = init_weights(&spec, 1).unwrap();
    let mut partial = Weights::new();
    for (name, t) in w.iter().skip(1) {
        partial.insert(name, t.clone());
    }
    assert!(Network::new(spec.clone(), &partial).is_err());
    let mut wrong = w.clone();
    let (name, _) = w.iter().next().unwrap();
    wrong.insert(name, Tensor::zeros(&[3]));
    assert!(Network::new(spec, &wrong).is_err());
}

#[test]
fn spec_text_round_trips() {
    for seed in 0..20 {
        let split = random_split(seed);
        let spec = split.network().spec();
        let again = NetworkSpec::from_toml_str(&spec.to_toml_string()).unwrap();
        assert_eq!(&again, spec);
        assert!(!valid_cuts(spec).is_empty());
    }
}

#[test]
fn malformed_specs_are_rejected() {
    for text in [
        "name = \"x\"\ninput_shape = [1, 4, 4]\nclasses = 2\n",
        "name = \"x\"\ninput_shape = [1, 4, 4]\nclasses = 2\n[[layer]]\nkind = \"conv2d\"\nout_channels = 1\nkernel = 9\n",
        "name = \"x\"\ninput_shape = [4]\nclasses = 2\n[[layer]]\nkind = \"fc\"\nout_features = 3\n",
        "name = \"x\"\ninput_shape = [4]\nclasses = 2\n[[layer]]\nkind = \"softmax\"\n",
    ] {
        assert!(NetworkSpec::from_toml_str(text).is_err(), "{text}");
    }
}

#[test]
fn network_is_shared_read_only_across_threads() {
    let net = lenet();
    let before = net.parameter_checksum();
    let x = Tensor::full(net.input_shape(), 0.2);
    let expected = net.forward(&x).unwrap();
    std::thread::scope(|s| {
        for cut in [3, 7, 9, 11] {
            let net = Arc::clone(&net);
            let (x, expected) = (&x, &expected);
            s.spawn(move || {
                let split = Split::new(net, cut).unwrap();
                let out = split.run_cloud(&split.run_edge(x).unwrap()).unwrap();
                assert_eq!(out.data(), expected.data());
            });
        }
    });
    assert_eq!(net.parameter_checksum(), before);
}
