use std::fmt::Write;

use newsalign::evaluation::{MaskReport, ProbeResult};
use newsalign::pipeline::{Manifest, MrrReport, PplReport, ProbeReport};

fn probe_rows(out: &mut String, name: &str, r: &ProbeResult) {
    let f1: Vec<String> = r.per_class_f1.iter().map(|(k, v)| format!("{}={v:.3}", k.code())).collect();
    let _ = writeln!(
        out,
        "{name:<10} {:>8.3} {:>8.3}  {}  (train {}, test {})",
        r.accuracy,
        r.macro_f1,
        f1.join(" "),
        r.n_train,
        r.n_test
    );
}

pub fn probe_table(r: &ProbeReport) -> String {
    let mut out = format!("{:<10} {:>8} {:>8}  per-class F1\n", "encoder", "accuracy", "macro-F1");
    probe_rows(&mut out, "initial", &r.initial);
    probe_rows(&mut out, "trained", &r.trained);
    out
}

pub fn ppl_table(r: &PplReport) -> String {
    let mut out = format!("{:<9} {:>12}   ({} positions, |V| = {})\n", "ideology", "pseudo-ppl", r.positions, r.vocab_size);
    for (k, v) in &r.by_ideology {
        let _ = writeln!(out, "{:<9} {v:>12.3}", k.code());
    }
    out
}

pub fn mask_table(r: &MaskReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "sequences      {:>10}", r.sequences);
    let _ = writeln!(out, "tokens         {:>10}", r.tokens);
    let _ = writeln!(out, "masked         {:>10}  rate {:.4}", r.masked, r.masked_rate);
    let _ = writeln!(out, "entity masked  {:>10}  rate {:.4} of {}", r.entity_masked, r.entity_rate, r.entity_tokens);
    let _ = writeln!(out, "plain masked   {:>10}  rate {:.4} of {}", r.plain_masked, r.plain_rate, r.plain_tokens);
    let _ = writeln!(
        out,
        "actions        MASK {:.3}  RANDOM {:.3}  KEEP {:.3}",
        r.mask_share, r.random_share, r.keep_share
    );
    out
}

pub fn mrr_table(r: &MrrReport) -> String {
    let mut out = format!(
        "MRR {:.4} over {} gold groups ({} ids pruned, {} groups dropped)\n",
        r.mrr, r.gold_groups, r.pruned_ids, r.dropped_groups
    );
    if !r.grid.is_empty() {
        let _ = writeln!(out, "{:>6} {:>6} {:>8}", "alpha", "theta", "MRR");
        for row in &r.grid {
            let _ = writeln!(out, "{:>6.2} {:>6.2} {:>8.4}", row.alpha, row.theta, row.mrr);
        }
    }
    out
}

pub fn stage_line(m: &Manifest, path: &std::path::Path) -> String {
    format!("{}: {} -> {}", m.stage, m.summary, path.display())
}
