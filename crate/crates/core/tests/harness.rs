use std::io::Write;
use std::net::{TcpListener, TcpStream};

use sbc_core::ae::DeskScale;
use sbc_core::net::{receive, serve, PayloadMode, ReceiveConfig, ServeConfig};
use sbc_core::{InterestSet, RngSeed};

#[test]
fn malformed_hello_drops_only_that_connection() {
    let desk = DeskScale::default();
    let model = desk.model(RngSeed(1)).unwrap();
    let (_, test) = desk.datasets(RngSeed(1)).unwrap();
    let samples = &test.samples[..50];
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let config = ServeConfig {
        model: &model,
        samples,
        users: 2,
        mode: PayloadMode::Semantic,
        pacing: None,
    };
    std::thread::scope(|s| {
        let server = s.spawn(|| serve(&listener, &config).unwrap());
        let mut bad = TcpStream::connect(addr).unwrap();
        bad.write_all(b"definitely not a frame").unwrap();
        drop(bad);
        let good = receive(
            addr,
            &ReceiveConfig {
                user_id: 1,
                interest: InterestSet::new(&[1, 2], 3).unwrap(),
                model: &model,
                donor: &test.samples[60],
                truth: Some(samples),
            },
        )
        .unwrap();
        let report = server.join().unwrap();
        assert_eq!(good.frames, 50);
        assert!(good.mean_psnr_db.unwrap().is_finite());
        assert_eq!(report.sessions.len(), 1);
        assert_eq!(report.dropped.len(), 1);
        let m = &report.sessions[0];
        assert_eq!(m.interest_bitmap, 0b110);
        assert_eq!(m.payload_bytes_per_frame, 32);
        assert_eq!(m.compression_ratio, 6.0);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"compression_ratio\":6.0"));
    });
}

#[test]
fn raw_mode_delivers_inputs_to_binary32_precision() {
    let desk = DeskScale::default();
    let model = desk.model(RngSeed(1)).unwrap();
    let (_, test) = desk.datasets(RngSeed(2)).unwrap();
    let samples = &test.samples[..20];
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let config = ServeConfig {
        model: &model,
        samples,
        users: 1,
        mode: PayloadMode::Raw,
        pacing: None,
    };
    std::thread::scope(|s| {
        let server = s.spawn(|| serve(&listener, &config).unwrap());
        let r = receive(
            addr,
            &ReceiveConfig {
                user_id: 0,
                interest: InterestSet::all(3),
                model: &model,
                donor: &test.samples[0],
                truth: None,
            },
        )
        .unwrap();
        server.join().unwrap();
        for (got, want) in r.reconstructions.iter().zip(samples) {
            for (g, w) in got.iter().zip(want) {
                assert_eq!(*g, *w as f32 as f64);
            }
        }
    });
}
