//! Shared helpers for the integration suites: an independent convolution
//! oracle, finite-difference gradient checking, small random tensors, a
//! scripted local webhook server, and synthetic dataset shorthand.

#![allow(dead_code)]

use std::io::{Read as _, Write as _};
use std::net::TcpListener;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use ar3d::data::{synth_generate, DatasetManifest, SynthConfig};
use ar3d::nn::{model_forward, Activation, LayerSpec, Mode, ModelSpec, ParamSet};
use ar3d::tensor::{softmax_cross_entropy, ConvGeom, Tensor};

/// Reference 3D convolution written as seven explicit loops over
/// [C,T,H,W] x [O,C,kT,kH,kW], all arithmetic in f64, stride 1, zero
/// padding of (k-1)/2 per axis. Deliberately shares no code with the
/// production kernel.
pub fn brute_force_conv3d(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Tensor {
    let (cin, t, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let (cout, kt, kh, kw) = (
        weights.shape()[0],
        weights.shape()[2],
        weights.shape()[3],
        weights.shape()[4],
    );
    assert_eq!(weights.shape()[1], cin);
    let (pt, ph, pw) = ((kt - 1) / 2, (kh - 1) / 2, (kw - 1) / 2);

    let x = input.data();
    let ker = weights.data();
    let mut out = vec![0.0f32; cout * t * h * w];
    for o in 0..cout {
        for ot in 0..t {
            for oh in 0..h {
                for ow in 0..w {
                    let mut acc = bias.data()[o] as f64;
                    for c in 0..cin {
                        for dt in 0..kt {
                            for dh in 0..kh {
                                for dw in 0..kw {
                                    let it = ot as isize + dt as isize - pt as isize;
                                    let ih = oh as isize + dh as isize - ph as isize;
                                    let iw = ow as isize + dw as isize - pw as isize;
                                    if it < 0
                                        || ih < 0
                                        || iw < 0
                                        || it >= t as isize
                                        || ih >= h as isize
                                        || iw >= w as isize
                                    {
                                        continue;
                                    }
                                    let xi = ((c * t + it as usize) * h + ih as usize) * w
                                        + iw as usize;
                                    let ki = (((o * cin + c) * kt + dt) * kh + dh) * kw + dw;
                                    acc += x[xi] as f64 * ker[ki] as f64;
                                }
                            }
                        }
                    }
                    out[((o * t + ot) * h + oh) * w + ow] = acc as f32;
                }
            }
        }
    }
    Tensor::new(vec![cout, t, h, w], out).unwrap()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Comparison used by the oracle and finite-difference suites: exact within
/// `abs_tol` near zero, within `rel_tol` otherwise.
pub fn close(a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> bool {
    let diff = (a - b).abs();
    diff <= abs_tol || diff <= rel_tol * a.abs().max(b.abs())
}

/// Small all-layer-kind model on a 1x4x6x6 input with 3 output classes.
pub fn tiny_spec() -> ModelSpec {
    ModelSpec {
        input_shape: [1, 4, 6, 6],
        num_classes: 3,
        layers: vec![
            LayerSpec::Conv3d {
                out_channels: 4,
                geom: ConvGeom::new((3, 3, 3)).unwrap(),
                activation: Activation::Relu,
            },
            LayerSpec::MaxPool3d,
            LayerSpec::Conv3d {
                out_channels: 6,
                geom: ConvGeom::new((1, 3, 3)).unwrap(),
                activation: Activation::Relu,
            },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                units: 16,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                units: 3,
                activation: Activation::None,
            },
        ],
    }
}

/// Mean cross-entropy of a batch under the model, via the forward pass only.
pub fn model_loss(spec: &ModelSpec, params: &ParamSet, batch: &Tensor, targets: &[usize]) -> f64 {
    let (logits, _) = model_forward(spec, params, batch, Mode::Train, 0).unwrap();
    let k = spec.num_classes;
    let mut total = 0.0;
    for (i, &target) in targets.iter().enumerate() {
        let row = Tensor::new(
            vec![k],
            logits.data()[i * k..(i + 1) * k].to_vec(),
        )
        .unwrap();
        total += softmax_cross_entropy(&row, target).unwrap().loss;
    }
    total / targets.len() as f64
}

/// Central finite difference of `model_loss` along one parameter coordinate.
pub fn fd_loss_slope(
    spec: &ModelSpec,
    params: &ParamSet,
    batch: &Tensor,
    targets: &[usize],
    entry: usize,
    coord: usize,
    eps: f32,
) -> f64 {
    let mut plus = params.clone();
    plus.tensors_mut().nth(entry).unwrap().data_mut()[coord] += eps;
    let mut minus = params.clone();
    minus.tensors_mut().nth(entry).unwrap().data_mut()[coord] -= eps;
    let lp = model_loss(spec, &plus, batch, targets);
    let lm = model_loss(spec, &minus, batch, targets);
    (lp - lm) / (2.0 * eps as f64)
}

/// Generates a synthetic dataset under `dir` and returns its manifest with
/// absolute clip paths.
pub fn synth_dataset(
    dir: &Path,
    classes: usize,
    clips_per_class: usize,
    frames: usize,
    side: usize,
    seed: u64,
) -> DatasetManifest {
    let cfg = SynthConfig {
        classes,
        clips_per_class,
        frames,
        height: side,
        width: side,
        seed,
        ..SynthConfig::default()
    };
    synth_generate(&cfg, dir).unwrap()
}

/// Local HTTP server that answers each request with the next scripted status
/// (repeating the last one forever) and records every request body.
pub struct MockWebhook {
    url: String,
    bodies: Arc<Mutex<Vec<String>>>,
    hits: Arc<Mutex<u32>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockWebhook {
    pub fn start(script: Vec<u16>) -> Self {
        assert!(!script.is_empty());
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/events", listener.local_addr().unwrap());
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let hits = Arc::new(Mutex::new(0u32));
        let stop = Arc::new(AtomicBool::new(false));

        let thread_bodies = bodies.clone();
        let thread_hits = hits.clone();
        let thread_stop = stop.clone();
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if thread_stop.load(Ordering::SeqCst) {
                    break;
                }
                let mut stream = match stream {
                    Ok(s) => s,
                    Err(_) => continue,
                };
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                let body = loop {
                    let n = match stream.read(&mut chunk) {
                        Ok(0) => break None,
                        Ok(n) => n,
                        Err(_) => break None,
                    };
                    buf.extend_from_slice(&chunk[..n]);
                    if let Some(split) = find_header_end(&buf) {
                        let expected = content_length(&buf[..split]);
                        while buf.len() < split + expected {
                            match stream.read(&mut chunk) {
                                Ok(0) => break,
                                Ok(n) => buf.extend_from_slice(&chunk[..n]),
                                Err(_) => break,
                            }
                        }
                        break Some(
                            String::from_utf8_lossy(&buf[split..split + expected]).to_string(),
                        );
                    }
                };
                let hit_index = {
                    let mut h = thread_hits.lock().unwrap();
                    *h += 1;
                    (*h - 1) as usize
                };
                let status = *script.get(hit_index).unwrap_or(script.last().unwrap());
                if status == 200 {
                    if let Some(b) = body {
                        thread_bodies.lock().unwrap().push(b);
                    }
                }
                let reason = if status == 200 { "OK" } else { "ERR" };
                let _ = stream.write_all(
                    format!(
                        "HTTP/1.1 {} {}\r\ncontent-length: 0\r\nconnection: close\r\n\r\n",
                        status, reason
                    )
                    .as_bytes(),
                );
            }
        });

        MockWebhook {
            url,
            bodies,
            hits,
            stop,
            handle: Some(handle),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn bodies(&self) -> Vec<String> {
        self.bodies.lock().unwrap().clone()
    }

    pub fn hits(&self) -> u32 {
        *self.hits.lock().unwrap()
    }
}

impl Drop for MockWebhook {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // unblock accept() so the thread can observe the flag
        let addr = self.url.trim_start_matches("http://");
        let addr = &addr[..addr.find('/').unwrap_or(addr.len())];
        let _ = std::net::TcpStream::connect(addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4)
}

fn content_length(head: &[u8]) -> usize {
    let text = String::from_utf8_lossy(head);
    for line in text.lines() {
        let lower = line.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("content-length:") {
            return rest.trim().parse().unwrap_or(0);
        }
    }
    0
}
