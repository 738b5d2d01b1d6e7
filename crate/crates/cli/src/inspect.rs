use std::fmt::Write;
use std::path::Path;

use negotiate_core::domain::{NegotiationOutcome, ParsedResponse, Provenance, TranscriptRecord};
use negotiate_core::evaluation::{read_records, SessionRecord};

use crate::CliError;

pub fn inspect(path: &Path, id: &str) -> Result<(), CliError> {
    let records = read_records(path)?;
    let hits: Vec<&SessionRecord> = records.iter().filter(|r| r.input.id == id).collect();
    if hits.is_empty() {
        return Err(CliError::NotFound(format!(
            "no session for input {id:?} in {}",
            path.display()
        )));
    }
    let pages: Vec<String> = hits.into_iter().map(render_session).collect();
    print!("{}", pages.join("\n"));
    Ok(())
}

fn outcome_line(outcome: &NegotiationOutcome) -> String {
    match outcome {
        NegotiationOutcome::Consensus { decision, turns_used } => {
            format!("consensus on {decision} after {turns_used} turn{}", if *turns_used == 1 { "" } else { "s" })
        }
        NegotiationOutcome::NoConsensus { turns_used } => format!("no consensus after {turns_used} turns"),
    }
}

fn render_transcript(out: &mut String, title: &str, t: &TranscriptRecord) {
    let roles = if t.turns.len() == 1 {
        format!("{} alone", t.gen_agent)
    } else {
        format!("generator {}, discriminator {}", t.gen_agent, t.disc_agent)
    };
    let _ = writeln!(out, "\n{title}: {roles}");
    for turn in &t.turns {
        match &turn.parsed {
            ParsedResponse::Generator { decision, reasoning } => {
                let _ = writeln!(out, "  [{}] {} (generator): {decision}", turn.index, turn.agent_id);
                for (i, step) in reasoning.iter().enumerate() {
                    let _ = writeln!(out, "        step {}: {step}", i + 1);
                }
            }
            ParsedResponse::Discriminator {
                attitude,
                explanation,
                decision,
            } => {
                let _ = writeln!(
                    out,
                    "  [{}] {} (discriminator): {} -> {decision}",
                    turn.index,
                    turn.agent_id,
                    attitude.as_str()
                );
                if !explanation.is_empty() {
                    let _ = writeln!(out, "        {explanation}");
                }
            }
        }
    }
    let _ = writeln!(out, "  => {}", outcome_line(&t.outcome));
}

pub fn render_session(r: &SessionRecord) -> String {
    let mut out = String::new();
    let gold = r.input.gold.as_ref().map_or("unlabeled".to_string(), |g| format!("gold {g}"));
    let _ = writeln!(out, "input {} ({gold})", r.input.id);
    let _ = writeln!(out, "  {}", r.input.text);
    if let Some(topic) = &r.input.topic {
        let _ = writeln!(out, "  topic: {topic}");
    }
    let _ = writeln!(out, "mode {} ({})", r.mode, r.agents.join("+"));

    if let Some(t) = &r.primary {
        render_transcript(&mut out, "negotiation", t);
    }
    if let Some(t) = &r.flipped {
        render_transcript(&mut out, "role-flipped negotiation", t);
    }
    for (i, t) in r.arbitration.iter().flatten().enumerate() {
        render_transcript(&mut out, &format!("arbitration {}", i + 1), t);
    }
    if let Some(tally) = &r.tally {
        let votes: Vec<String> = tally.counts.iter().map(|(l, c)| format!("{l} {c}")).collect();
        let _ = writeln!(out, "\nvotes: {}", if votes.is_empty() { "none".into() } else { votes.join(", ") });
    }
    if let Some(e) = &r.error {
        let _ = writeln!(out, "\nerror ({}): {}", e.kind, e.message);
        for turn in &e.partial {
            let _ = writeln!(out, "  [{}] {}: {}", turn.index, turn.agent_id, turn.response_raw.trim());
        }
    }
    let how = match r.provenance {
        Some(Provenance::Agreement) => "both orders agree",
        Some(Provenance::SingleConsensus) => "single consensus",
        Some(Provenance::Vote) => "vote",
        Some(Provenance::Fallback) => "fallback to first answer",
        None => "none",
    };
    let verdict = match r.correct {
        Some(true) => ", correct",
        Some(false) => ", wrong",
        None => "",
    };
    let decision = r.final_decision.as_ref().map_or("-".to_string(), |l| l.to_string());
    let _ = writeln!(out, "\nfinal: {decision} ({how}{verdict})");
    out
}
