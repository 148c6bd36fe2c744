use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moe::{ExpertMLP, GateNet, MoEConnector};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    Random,
    CoUpcycle,
    Diverse,
}

impl InitStrategy {
    pub const ALL: [InitStrategy; 3] = [
        InitStrategy::Random,
        InitStrategy::CoUpcycle,
        InitStrategy::Diverse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InitStrategy::Random => "random",
            InitStrategy::CoUpcycle => "co_upcycle",
            InitStrategy::Diverse => "diverse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "random" => Some(InitStrategy::Random),
            "co_upcycle" | "co-upcycle" => Some(InitStrategy::CoUpcycle),
            "diverse" => Some(InitStrategy::Diverse),
            _ => None,
        }
    }
}

impl std::fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Connectors aligned on the three chart serializations.
#[derive(Debug, Clone, Default)]
pub struct AlignedExperts {
    pub table: Option<ExpertMLP>,
    pub json: Option<ExpertMLP>,
    pub code: Option<ExpertMLP>,
}

/// Build an MoE connector with a zero gate.
///
/// `Diverse` requires `num_experts == 4` and yields
/// `[vanilla, table, json, code]`; `CoUpcycle` copies `vanilla` into every
/// slot; `Random` draws fresh experts from `seed`.
pub fn init_moe(
    strategy: InitStrategy,
    aligned: &AlignedExperts,
    vanilla: &ExpertMLP,
    num_experts: usize,
    top_k: usize,
    renormalize: bool,
    seed: u64,
) -> Result<MoEConnector> {
    if num_experts == 0 {
        return Err(Error::Config(
            "an MoE connector needs at least one expert".into(),
        ));
    }
    let (d_in, d_hidden, d_out) = vanilla.dims();
    let (experts, labels): (Vec<ExpertMLP>, Vec<String>) = match strategy {
        InitStrategy::Random => {
            let mut rng = rng_for(seed, "init-random");
            (0..num_experts)
                .map(|j| {
                    (
                        ExpertMLP::random(d_in, d_hidden, d_out, &mut rng),
                        format!("random-{j}"),
                    )
                })
                .unzip()
        }
        InitStrategy::CoUpcycle => (0..num_experts)
            .map(|j| (vanilla.clone(), format!("vanilla-{j}")))
            .unzip(),
        InitStrategy::Diverse => {
            if num_experts != 4 {
                return Err(Error::Config(format!(
                    "diverse initialization needs 4 experts, got {num_experts}"
                )));
            }
            let need = |e: &Option<ExpertMLP>, kind: &str| {
                e.clone().ok_or_else(|| {
                    Error::Config(format!(
                        "diverse init is missing the {kind}-aligned connector"
                    ))
                })
            };
            (
                vec![
                    vanilla.clone(),
                    need(&aligned.table, "table")?,
                    need(&aligned.json, "json")?,
                    need(&aligned.code, "code")?,
                ],
                ["vanilla", "table", "json", "code"]
                    .map(String::from)
                    .to_vec(),
            )
        }
    };
    MoEConnector::new(
        experts,
        GateNet::zeros(d_in, num_experts),
        top_k,
        renormalize,
        labels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expert(tag: u64) -> ExpertMLP {
        ExpertMLP::random(4, 6, 3, &mut rng_for(tag, "t"))
    }

    fn aligned() -> AlignedExperts {
        AlignedExperts {
            table: Some(expert(1)),
            json: Some(expert(2)),
            code: Some(expert(3)),
        }
    }

    #[test]
    fn co_upcycle_copies_vanilla_everywhere() {
        let v = expert(0);
        let c = init_moe(
            InitStrategy::CoUpcycle,
            &AlignedExperts::default(),
            &v,
            4,
            2,
            true,
            0,
        )
        .unwrap();
        assert!(c.experts().iter().all(|e| *e == v));
        assert!(c.gate().w.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn diverse_maps_kinds_to_slots() {
        let a = aligned();
        let c = init_moe(InitStrategy::Diverse, &a, &expert(0), 4, 2, true, 0).unwrap();
        assert_eq!(c.experts()[0], expert(0));
        assert_eq!(Some(&c.experts()[1]), a.table.as_ref());
        assert_eq!(Some(&c.experts()[3]), a.code.as_ref());
        assert_eq!(c.labels(), ["vanilla", "table", "json", "code"]);
    }

    #[test]
    fn diverse_needs_everything() {
        let mut a = aligned();
        a.json = None;
        assert!(matches!(
            init_moe(InitStrategy::Diverse, &a, &expert(0), 4, 2, true, 0),
            Err(Error::Config(_))
        ));
        assert!(init_moe(InitStrategy::Diverse, &aligned(), &expert(0), 3, 2, true, 0).is_err());
    }

    #[test]
    fn random_differs_across_seeds() {
        let a = init_moe(
            InitStrategy::Random,
            &AlignedExperts::default(),
            &expert(0),
            4,
            2,
            true,
            1,
        )
        .unwrap();
        let b = init_moe(
            InitStrategy::Random,
            &AlignedExperts::default(),
            &expert(0),
            4,
            2,
            true,
            2,
        )
        .unwrap();
        assert_ne!(a.experts(), b.experts());
    }
}
