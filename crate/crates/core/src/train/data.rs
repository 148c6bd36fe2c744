use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chartsynth::{build_quadruple, fmt_num, Quadruple, CANVAS};
use crate::error::Result;
use crate::numkit::Matrix;
use crate::seed::{fnv1a, rng_for};
use crate::stack::ToyStack;

/// Which serialization of a chart an alignment task regresses toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignKind {
    Table,
    Json,
    Code,
    /// Non-chart images with caption stubs (the vanilla connector's data).
    General,
}

impl AlignKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlignKind::Table => "table",
            AlignKind::Json => "json",
            AlignKind::Code => "code",
            AlignKind::General => "general",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "table" => Some(AlignKind::Table),
            "json" => Some(AlignKind::Json),
            "code" => Some(AlignKind::Code),
            "general" => Some(AlignKind::General),
            _ => None,
        }
    }

    pub fn target(self, q: &Quadruple) -> String {
        match self {
            AlignKind::Table => q.table.to_csv(),
            AlignKind::Json => q.spec.canonical_json(),
            AlignKind::Code => q.code.clone(),
            AlignKind::General => String::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlignTask {
    pub kind: AlignKind,
    pub pairs: Vec<(RgbImage, String)>,
}

/// Chart seed `i` of a named stream; streams do not overlap in practice.
pub fn derive_seed(base: u64, stream: &str, i: u64) -> u64 {
    fnv1a(format!("{base}/{stream}/{i}").as_bytes()) >> 16
}

/// Alignment task over `n` synthesized charts.
pub fn chart_align_task(kind: AlignKind, data_seed: u64, n: usize) -> Result<AlignTask> {
    let pairs = (0..n as u64)
        .map(|i| {
            let q = build_quadruple(derive_seed(data_seed, "align", i))?;
            let target = kind.target(&q);
            Ok((q.raster, target))
        })
        .collect::<Result<_>>()?;
    Ok(AlignTask { kind, pairs })
}

const NAMED: [(&str, [u8; 3]); 8] = [
    ("red", [220, 40, 40]),
    ("green", [40, 170, 60]),
    ("blue", [40, 80, 210]),
    ("yellow", [235, 210, 50]),
    ("black", [10, 10, 10]),
    ("white", [250, 250, 250]),
    ("gray", [128, 128, 128]),
    ("orange", [240, 140, 30]),
];

/// One non-chart image and its caption stub.
pub fn general_image(seed: u64) -> (RgbImage, String) {
    let mut rng = rng_for(seed, "general-image");
    let size = CANVAS;
    let pick = |rng: &mut crate::seed::Rng| NAMED[rng.random_range(0..NAMED.len())];
    match rng.random_range(0..4) {
        0 => {
            let amp: u8 = [64, 128, 255][rng.random_range(0..3)];
            let colored = rng.random_bool(0.5);
            let mut img = RgbImage::new(size, size);
            for p in img.pixels_mut() {
                let g = || 128u8.saturating_sub(amp / 2);
                *p = if colored {
                    Rgb([
                        g().saturating_add(rng.random_range(0..=amp)),
                        g().saturating_add(rng.random_range(0..=amp)),
                        g().saturating_add(rng.random_range(0..=amp)),
                    ])
                } else {
                    let v = g().saturating_add(rng.random_range(0..=amp));
                    Rgb([v, v, v])
                };
            }
            let strength = match amp {
                64 => "faint",
                128 => "moderate",
                _ => "strong",
            };
            let tone = if colored { "colored" } else { "gray" };
            (img, format!("{strength} {tone} noise"))
        }
        1 => {
            let (a_name, a) = pick(&mut rng);
            let (b_name, b) = pick(&mut rng);
            let horizontal = rng.random_bool(0.5);
            let img = RgbImage::from_fn(size, size, |x, y| {
                let t = f64::from(if horizontal { x } else { y }) / f64::from(size - 1);
                Rgb(std::array::from_fn(|c| {
                    (f64::from(a[c]) * (1.0 - t) + f64::from(b[c]) * t).round() as u8
                }))
            });
            let dir = if horizontal { "horizontal" } else { "vertical" };
            (img, format!("{dir} gradient from {a_name} to {b_name}"))
        }
        2 => {
            let (name, c) = pick(&mut rng);
            (
                RgbImage::from_pixel(size, size, Rgb(c)),
                format!("solid {name} image"),
            )
        }
        _ => {
            let cells: u32 = [2, 4, 8, 16][rng.random_range(0..4)];
            let (a_name, a) = pick(&mut rng);
            let (b_name, b) = pick(&mut rng);
            let img = RgbImage::from_fn(size, size, |x, y| {
                let (cx, cy) = (x * cells / size, y * cells / size);
                Rgb(if (cx + cy) % 2 == 0 { a } else { b })
            });
            (
                img,
                format!("checkerboard of {cells} by {cells} cells in {a_name} and {b_name}"),
            )
        }
    }
}

pub fn general_task(data_seed: u64, n: usize) -> AlignTask {
    AlignTask {
        kind: AlignKind::General,
        pairs: (0..n as u64)
            .map(|i| general_image(derive_seed(data_seed, "general", i)))
            .collect(),
    }
}

/// Toy chart QA: the three answers are read from the first three head outputs.
pub const QA_OUTPUTS: usize = 3;
pub const MAX_SERIES_NORM: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QaTruth {
    pub max: f64,
    pub min: f64,
    pub series: usize,
    /// Upper end of the generator's value range, used for normalization.
    pub hi: f64,
}

impl QaTruth {
    pub fn targets(&self) -> [f64; QA_OUTPUTS] {
        [
            self.max / self.hi,
            self.min / self.hi,
            self.series as f64 / MAX_SERIES_NORM,
        ]
    }

    /// `(question, ground truth)` for each output.
    pub fn questions(&self) -> [(&'static str, String); QA_OUTPUTS] {
        [
            ("What is the largest value in the chart?", fmt_num(self.max)),
            (
                "What is the smallest value in the chart?",
                fmt_num(self.min),
            ),
            (
                "How many data series does the chart show?",
                self.series.to_string(),
            ),
        ]
    }

    /// Turn raw head outputs back into answer strings.
    pub fn answers(&self, outputs: &[f64]) -> [String; QA_OUTPUTS] {
        [
            fmt_num(outputs[0] * self.hi),
            fmt_num(outputs[1] * self.hi),
            format!("{}", (outputs[2] * MAX_SERIES_NORM).round()),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct QaSample {
    pub chart_seed: u64,
    pub tokens: Matrix,
    pub truth: QaTruth,
}

pub fn qa_sample(stack: &ToyStack, chart_seed: u64) -> Result<QaSample> {
    let q = build_quadruple(chart_seed)?;
    let all = q.table.values.iter().flatten();
    let max = all.clone().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let min = all.fold(f64::INFINITY, |m, &v| m.min(v));
    Ok(QaSample {
        chart_seed,
        tokens: stack.encoder.encode(&q.raster)?,
        truth: QaTruth {
            max,
            min,
            series: q.table.num_series(),
            hi: q.value_range.hi,
        },
    })
}

/// Sizes of the synthetic QA fixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QaPoolConfig {
    /// Charts per sub-pool, in table : JSON : code order.
    pub mix: [usize; 3],
    /// Every `anneal_stride`-th pool item forms the annealing slice.
    pub anneal_stride: usize,
    pub heldout: usize,
}

impl Default for QaPoolConfig {
    fn default() -> Self {
        Self {
            mix: [500, 200, 100],
            anneal_stride: 4,
            heldout: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QaData {
    /// Phase-1 pool: the three sub-pools concatenated.
    pub pool: Vec<QaSample>,
    pub anneal: Vec<QaSample>,
    pub heldout: Vec<QaSample>,
}

pub fn build_qa_data(stack: &ToyStack, data_seed: u64, cfg: &QaPoolConfig) -> Result<QaData> {
    let mut pool = Vec::new();
    for (stream, &n) in ["qa-table", "qa-json", "qa-code"].iter().zip(&cfg.mix) {
        for i in 0..n as u64 {
            pool.push(qa_sample(stack, derive_seed(data_seed, stream, i))?);
        }
    }
    let stride = cfg.anneal_stride.max(1);
    let anneal = pool.iter().step_by(stride).cloned().collect();
    let heldout = (0..cfg.heldout as u64)
        .map(|i| qa_sample(stack, derive_seed(data_seed, "qa-heldout", i)))
        .collect::<Result<_>>()?;
    Ok(QaData {
        pool,
        anneal,
        heldout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stack::StackDims;

    #[test]
    fn general_images_are_deterministic_and_captioned() {
        for s in 0..8 {
            let (a, ca) = general_image(s);
            let (b, cb) = general_image(s);
            assert_eq!(a, b);
            assert_eq!(ca, cb);
            assert!(!ca.is_empty());
        }
    }

    #[test]
    fn qa_targets_are_normalized() {
        let stack = ToyStack::new(StackDims::default(), 0).unwrap();
        for seed in 0..20 {
            let s = qa_sample(&stack, seed).unwrap();
            let t = s.truth.targets();
            assert!(t.iter().all(|v| (0.0..=1.0).contains(v)), "{t:?}");
            assert_eq!(s.tokens.shape(), (49, 32));
            let answers = s.truth.answers(&t);
            let questions = s.truth.questions();
            for (a, (_, gt)) in answers.iter().zip(&questions) {
                assert!(crate::evalkit::relaxed_match(a, gt, 0.05), "{a} vs {gt}");
            }
        }
    }

    #[test]
    fn pool_slices_follow_the_mix() {
        let stack = ToyStack::new(StackDims::default(), 0).unwrap();
        let cfg = QaPoolConfig {
            mix: [5, 2, 1],
            anneal_stride: 4,
            heldout: 3,
        };
        let d = build_qa_data(&stack, 0, &cfg).unwrap();
        assert_eq!((d.pool.len(), d.anneal.len(), d.heldout.len()), (8, 2, 3));
        assert_eq!(d.anneal[1].chart_seed, d.pool[4].chart_seed);
    }
}
