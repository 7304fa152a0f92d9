mod common;

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;
use std::time::Duration;

use common::{assets, lenet};
use splitnoise::collector::{CollectorConfig, DistributionCollection};
use splitnoise::data::Dataset;
use splitnoise::network::{valid_cuts, Split};
use splitnoise::runtime::{
    infer_local, prepare_request, respond, serve, EdgeClient, LinkSimulator, NoiseSource,
    ServerConfig,
};
use splitnoise::tensor_core::Tensor;
use splitnoise::wire::{decode_message, encode_message, read_frame, Frame, Message, KIND_ERROR};
use splitnoise::Error;

fn mnist(n: usize) -> Dataset {
    let a = assets().join("mnist10k");
    Dataset::load_idx(
        a.join("images-idx3-ubyte.gz"),
        a.join("labels-idx1-ubyte.gz"),
    )
    .unwrap()
    .take(n)
}

fn collection_for(split: &Split, scale: f64) -> DistributionCollection {
    let mut c = DistributionCollection::for_split(split);
    let n: usize = split.activation_shape().iter().product();
    let cfg = CollectorConfig {
        sse_threshold: f64::INFINITY,
        bins: 10,
    };
    for seed in 0..3 {
        let t = Tensor::new(
            split.activation_shape().to_vec(),
            common::laplace_draws(0.0, scale, n, seed),
        )
        .unwrap();
        c.try_collect(&t, 1.0, 0, &cfg).unwrap();
    }
    c
}

fn read_reply(stream: &mut TcpStream) -> Message {
    match read_frame(stream, 1 << 20).unwrap() {
        Frame::Message(m) => m,
        other => panic!("{other:?}"),
    }
}

#[test]
fn zero_noise_remote_matches_local_full_network() {
    let split = Arc::new(Split::new(lenet(), 7).unwrap());
    let server = serve(split.clone(), "127.0.0.1:0", ServerConfig::default()).unwrap();
    let mut client =
        EdgeClient::connect(split.clone(), NoiseSource::Zero, server.local_addr(), None).unwrap();
    for ex in mnist(100).examples {
        let remote = client.infer(&ex.input).unwrap();
        let local = split.network().forward(&ex.input).unwrap();
        assert_eq!(remote.label, local.argmax());
        assert_eq!(remote.logits, local.data());
        assert!(remote.timing.total_ms() >= remote.timing.round_trip_ms);
    }
    client.close();
    server.shutdown();
}

#[test]
fn transmitted_frame_carries_the_noisy_activation_only() {
    let split = Split::new(lenet(), 7).unwrap();
    let mut noise = NoiseSource::sampled(collection_for(&split, 1.0), &split, 3).unwrap();
    let x = &mnist(1).examples[0].input;
    let req = prepare_request(&split, &mut noise, x).unwrap();
    assert_ne!(req.noisy.data(), req.activation.data());
    assert_eq!(
        req.frame,
        encode_message(&Message::Activation(req.noisy.clone())).unwrap()
    );
    match decode_message(&req.frame).unwrap() {
        Message::Activation(t) => assert_eq!(t.data(), req.noisy.data()),
        other => panic!("{other:?}"),
    }
    let clean = encode_message(&Message::Activation(req.activation.clone())).unwrap();
    assert_ne!(&req.frame[11..], &clean[11..]);
    let again = prepare_request(&split, &mut noise, x).unwrap();
    assert_ne!(again.frame, req.frame);
}

#[test]
fn bad_frames_get_error_replies_and_the_connection_survives() {
    let split = Arc::new(Split::new(lenet(), 7).unwrap());
    let cfg = ServerConfig {
        max_frame_bytes: 4096,
        ..ServerConfig::default()
    };
    let server = serve(split.clone(), "127.0.0.1:0", cfg).unwrap();
    let mut s = TcpStream::connect(server.local_addr()).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();

    let good = encode_message(&Message::Activation(Tensor::full(&[256], 0.1))).unwrap();
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    s.write_all(&bad_magic).unwrap();
    assert!(matches!(read_reply(&mut s), Message::Error(_)));

    let oversize = encode_message(&Message::Activation(Tensor::zeros(&[2000]))).unwrap();
    s.write_all(&oversize).unwrap();
    match read_reply(&mut s) {
        Message::Error(reason) => assert!(reason.contains("4096"), "{reason}"),
        other => panic!("{other:?}"),
    }

    let wrong_shape = encode_message(&Message::Activation(Tensor::zeros(&[255]))).unwrap();
    s.write_all(&wrong_shape).unwrap();
    assert!(matches!(read_reply(&mut s), Message::Error(_)));

    s.write_all(&good).unwrap();
    assert!(matches!(read_reply(&mut s), Message::Response { .. }));
    drop(s);
    server.shutdown();
}

#[test]
fn replayed_frames_get_identical_replies() {
    let split = Arc::new(Split::new(lenet(), 9).unwrap());
    let server = serve(split.clone(), "127.0.0.1:0", ServerConfig::default()).unwrap();
    let mut noise = NoiseSource::sampled(collection_for(&split, 0.5), &split, 1).unwrap();
    let req = prepare_request(&split, &mut noise, &mnist(1).examples[0].input).unwrap();
    let mut replies = Vec::new();
    for _ in 0..2 {
        let mut s = TcpStream::connect(server.local_addr()).unwrap();
        for _ in 0..3 {
            s.write_all(&req.frame).unwrap();
            let mut head = [0u8; 10];
            s.read_exact(&mut head).unwrap();
            let len = u32::from_le_bytes(head[6..10].try_into().unwrap()) as usize;
            let mut body = vec![0u8; len];
            s.read_exact(&mut body).unwrap();
            replies.push([head.to_vec(), body].concat());
        }
    }
    assert!(replies.windows(2).all(|w| w[0] == w[1]));
    assert_ne!(replies[0][5], KIND_ERROR);
    server.shutdown();
}

#[test]
fn respond_matches_local_cloud_run() {
    let split = Split::new(lenet(), 3).unwrap();
    let a = split.run_edge(&mnist(1).examples[0].input).unwrap();
    match respond(&split, Frame::Message(Message::Activation(a.clone()))).unwrap() {
        Message::Response { label, logits } => {
            let local = split.run_cloud(&a).unwrap();
            assert_eq!(label as usize, local.argmax());
            assert_eq!(logits, local.data());
        }
        other => panic!("{other:?}"),
    }
    assert!(respond(&split, Frame::Closed).is_none());
    assert!(matches!(
        respond(&split, Frame::Message(Message::Error("x".into()))),
        Some(Message::Error(_))
    ));
}

#[test]
fn mismatched_collection_is_refused_before_connecting() {
    let net = lenet();
    let at7 = Split::new(net.clone(), 7).unwrap();
    let at9 = Arc::new(Split::new(net, 9).unwrap());
    let c = collection_for(&at7, 1.0);
    assert!(matches!(
        NoiseSource::sampled(c.clone(), &at9, 0),
        Err(Error::CollectionMismatch(_))
    ));
    let noise = NoiseSource::Sampled(splitnoise::sampler::Sampler::new(c, 0).unwrap());
    let r = EdgeClient::connect(at9, noise, "127.0.0.1:1", None);
    assert!(matches!(r, Err(Error::CollectionMismatch(_))));
}

#[test]
fn connection_failure_is_an_io_error() {
    let split = Arc::new(Split::new(lenet(), 7).unwrap());
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let r = EdgeClient::connect(split, NoiseSource::Zero, addr, Some(Duration::from_secs(1)));
    assert!(matches!(r, Err(Error::Io(_))));
}

#[test]
fn simulated_transmit_time_follows_frame_size() {
    let net = lenet();
    let link = LinkSimulator::new(2.0e5, 2.0).unwrap();
    let server = serve(
        Arc::new(Split::new(net.clone(), 7).unwrap()),
        "127.0.0.1:0",
        ServerConfig::default(),
    )
    .unwrap();
    let x = mnist(1).examples.remove(0).input;
    let mut previous = None;
    let mut cuts = valid_cuts(net.spec());
    cuts.sort_by_key(|&c| std::cmp::Reverse(net.activation_shape(c).iter().product::<usize>()));
    for cut in cuts {
        let split = Arc::new(Split::new(net.clone(), cut).unwrap());
        let bytes = splitnoise::wire::activation_frame_len(split.activation_shape());
        let expected = link.delay(bytes).as_secs_f64() * 1000.0;
        if let Some((prev_bytes, prev_expected)) = previous {
            if bytes < prev_bytes {
                assert!(expected < prev_expected);
            }
        }
        previous = Some((bytes, expected));
        if cut == 7 {
            let mut client =
                EdgeClient::connect(split, NoiseSource::Zero, server.local_addr(), None)
                    .unwrap()
                    .with_link(link);
            let r = client.infer(&x).unwrap();
            assert_eq!(r.frame_bytes, bytes);
            assert!(
                r.timing.transmit_ms >= expected,
                "{} < {expected}",
                r.timing.transmit_ms
            );
            assert!(r.timing.transmit_ms < expected + 50.0);
            client.close();
        }
    }
    server.shutdown();
}

#[test]
fn local_inference_with_sampled_noise_runs() {
    let split = Split::new(lenet(), 7).unwrap();
    let mut noise = NoiseSource::sampled(collection_for(&split, 0.01), &split, 4).unwrap();
    let ex = &mnist(1).examples[0];
    let logits = infer_local(&split, &mut noise, &ex.input).unwrap();
    assert_eq!(logits.len(), 10);
    assert_eq!(
        logits.argmax(),
        split.network().forward(&ex.input).unwrap().argmax()
    );
}
