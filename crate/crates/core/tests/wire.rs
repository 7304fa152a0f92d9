use std::io::Cursor;
use std::panic::catch_unwind;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitnoise::tensor_core::Tensor;
use splitnoise::wire::{
    activation_frame_len, decode_message, encode_message, read_frame, Frame, Message, HEADER_LEN,
    KIND_ACTIVATION, KIND_ERROR, KIND_RESPONSE, MAX_FRAME_BYTES,
};

fn random_message(rng: &mut impl Rng) -> Message {
    match rng.random_range(0..3) {
        0 => {
            let rank = rng.random_range(1..=4);
            let shape: Vec<usize> = (0..rank).map(|_| rng.random_range(1..=6)).collect();
            let n = shape.iter().product();
            let data = (0..n)
                .map(|_| f32::from_bits(rng.random::<u32>() & 0x7F7F_FFFF))
                .collect();
            Message::Activation(Tensor::new(shape, data).unwrap())
        }
        1 => Message::Response {
            label: rng.random(),
            logits: (0..rng.random_range(0..12))
                .map(|_| rng.random_range(-50.0..50.0))
                .collect(),
        },
        _ => Message::Error(
            (0..rng.random_range(0..40))
                .map(|_| rng.random_range('a'..='z'))
                .collect(),
        ),
    }
}

#[test]
fn activation_frame_layout_is_bit_exact() {
    let t = Tensor::new(vec![1, 2], vec![1.5, -2.0]).unwrap();
    let bytes = encode_message(&Message::Activation(t)).unwrap();
    let mut expected = b"SHRP".to_vec();
    expected.extend_from_slice(&[0x01, KIND_ACTIVATION]);
    expected.extend_from_slice(&17u32.to_le_bytes());
    expected.push(2);
    expected.extend_from_slice(&1u32.to_le_bytes());
    expected.extend_from_slice(&2u32.to_le_bytes());
    expected.extend_from_slice(&1.5f32.to_le_bytes());
    expected.extend_from_slice(&(-2.0f32).to_le_bytes());
    assert_eq!(bytes, expected);
    assert_eq!(bytes.len(), activation_frame_len(&[1, 2]));
}

#[test]
fn response_and_error_layouts() {
    let r = encode_message(&Message::Response {
        label: 7,
        logits: vec![0.5],
    })
    .unwrap();
    assert_eq!(r[5], KIND_RESPONSE);
    assert_eq!(&r[6..10], &8u32.to_le_bytes());
    assert_eq!(&r[10..14], &7u32.to_le_bytes());
    let e = encode_message(&Message::Error("bad".into())).unwrap();
    assert_eq!(e[5], KIND_ERROR);
    assert_eq!(&e[HEADER_LEN..], b"bad");
}

#[test]
fn ten_thousand_valid_frames_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let m = random_message(&mut rng);
        let bytes = encode_message(&m).unwrap();
        let back = decode_message(&bytes).unwrap();
        assert_eq!(encode_message(&back).unwrap(), bytes);
        if let (Message::Activation(a), Message::Activation(b)) = (&m, &back) {
            assert_eq!(a.shape(), b.shape());
            assert!(a
                .data()
                .iter()
                .zip(b.data())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn every_truncation_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let bytes = encode_message(&random_message(&mut rng)).unwrap();
        for cut in 0..bytes.len() {
            assert!(decode_message(&bytes[..cut]).is_err());
        }
    }
}

#[test]
fn header_faults_are_rejected() {
    let good = encode_message(&Message::Activation(Tensor::from_vec(vec![1.0]))).unwrap();
    let mut magic = good.clone();
    magic[1] = b'X';
    let mut version = good.clone();
    version[4] = 9;
    let mut kind = good.clone();
    kind[5] = 0x33;
    let mut long = good.clone();
    long[6] += 1;
    let mut rank0 = good.clone();
    rank0[HEADER_LEN] = 0;
    let mut zero_extent = good.clone();
    zero_extent[HEADER_LEN + 1..HEADER_LEN + 5].copy_from_slice(&0u32.to_le_bytes());
    for (name, bytes) in [
        ("magic", magic),
        ("version", version),
        ("kind", kind),
        ("length", long),
        ("rank", rank0),
        ("extent", zero_extent),
    ] {
        assert!(decode_message(&bytes).is_err(), "{name}");
    }
}

#[test]
fn fuzzed_frames_never_panic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut decoded = 0;
    for i in 0..100_000 {
        let bytes: Vec<u8> = match i % 4 {
            0 => (0..rng.random_range(0..64)).map(|_| rng.random()).collect(),
            1 => {
                let b = encode_message(&random_message(&mut rng)).unwrap();
                let cut = rng.random_range(0..=b.len());
                b[..cut].to_vec()
            }
            2 => {
                let mut b = encode_message(&random_message(&mut rng)).unwrap();
                for _ in 0..rng.random_range(1..4) {
                    let at = rng.random_range(0..b.len());
                    b[at] = rng.random();
                }
                b
            }
            _ => {
                let mut b = b"SHRP\x01".to_vec();
                b.push(rng.random_range(0..3u8).max(1));
                b.extend_from_slice(&rng.random::<u32>().to_le_bytes());
                b.extend((0..rng.random_range(0..32)).map(|_| rng.random::<u8>()));
                b
            }
        };
        let outcome = catch_unwind(|| {
            let direct = decode_message(&bytes).is_ok();
            let mut cursor = Cursor::new(&bytes);
            let _ = read_frame(&mut cursor, 4096);
            direct
        });
        decoded += usize::from(outcome.expect("decoder panicked"));
    }
    assert!(decoded > 0);
}

#[test]
fn stream_stays_aligned_after_a_rejected_frame() {
    let mut stream = Vec::new();
    let mut bad = encode_message(&Message::Error("x".into())).unwrap();
    bad[0] = b'Z';
    stream.extend_from_slice(&bad);
    let big = encode_message(&Message::Activation(Tensor::zeros(&[64]))).unwrap();
    stream.extend_from_slice(&big);
    let ok = Message::Response {
        label: 1,
        logits: vec![2.0],
    };
    stream.extend_from_slice(&encode_message(&ok).unwrap());
    let mut cursor = Cursor::new(stream);
    assert!(matches!(
        read_frame(&mut cursor, 100).unwrap(),
        Frame::Rejected(_)
    ));
    assert!(matches!(
        read_frame(&mut cursor, 100).unwrap(),
        Frame::Rejected(_)
    ));
    match read_frame(&mut cursor, 100).unwrap() {
        Frame::Message(m) => assert_eq!(m, ok),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        read_frame(&mut cursor, 100).unwrap(),
        Frame::Closed
    ));
}

#[test]
fn declared_length_beyond_cap_is_rejected_without_allocation() {
    let mut b = b"SHRP\x01\x01".to_vec();
    b.extend_from_slice(&((MAX_FRAME_BYTES + 1) as u32).to_le_bytes());
    assert!(decode_message(&b).is_err());
    let mut cursor = Cursor::new(b);
    assert!(read_frame(&mut cursor, MAX_FRAME_BYTES).is_err());
}
