//! Episode traces: JSON lines, a header with the initial session followed
//! by one record per step. Replays re-simulate and re-render each step and
//! refuse to continue when a state hash disagrees.

use super::eval::Policy;
use crate::environment::{render, Action, Observation, StepEvent, IMAGE_SIZE};
use crate::error::{Error, Result};
use crate::image::write_ppm;
use crate::teacher::{judge, Session, Teacher};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub session: Session,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    pub initial_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    /// Hash of the state after the step.
    pub hash: String,
    pub action: Action,
    pub event: StepEvent,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub steps: Vec<TraceStep>,
}

/// Plays one session with `policy` and records it.
pub fn record_episode(policy: &mut dyn Policy, teacher: &Teacher, session: Session, rng: &mut ChaCha8Rng) -> Result<Trace> {
    let header = TraceHeader {
        initial_hash: session.state.state_hash(),
        n_classes: teacher.n_classes(),
        class_names: teacher.vocab.class_names(),
        session: session.clone(),
    };
    let mut live = session;
    policy.begin(&live)?;
    let mut steps = Vec::new();
    loop {
        let action = policy.act(&live, rng)?;
        let event = live.state.step(action)?;
        let (reward, verdict) = judge(&event, live.state.agent, &live.target);
        if verdict.is_terminal() {
            live.state.terminate();
        }
        steps.push(TraceStep {
            t: live.state.t,
            hash: live.state.state_hash(),
            action,
            event,
            reward,
        });
        if verdict.is_terminal() {
            break;
        }
    }
    Ok(Trace { header, steps })
}

pub fn write_trace(trace: &Trace, out: &mut impl Write) -> Result<()> {
    serde_json::to_writer(&mut *out, &trace.header)?;
    writeln!(out)?;
    for s in &trace.steps {
        serde_json::to_writer(&mut *out, s)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_trace(input: impl BufRead) -> Result<Trace> {
    let mut lines = input.lines();
    let first = lines.next().ok_or_else(|| Error::Config("empty trace".into()))??;
    let header: TraceHeader = serde_json::from_str(&first)?;
    let mut steps = Vec::new();
    for l in lines {
        let l = l?;
        if !l.trim().is_empty() {
            steps.push(serde_json::from_str(&l)?);
        }
    }
    Ok(Trace { header, steps })
}

/// Re-simulated episode: one frame and one text grid per state.
#[derive(Debug, Clone)]
pub struct Replay {
    pub frames: Vec<Observation>,
    pub grids: Vec<String>,
    pub total_reward: f64,
}

impl Replay {
    /// `frame_0000.ppm ...` plus `grids.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, f) in self.frames.iter().enumerate() {
            let mut file = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("frame_{i:04}.ppm")))?);
            write_ppm(&mut file, IMAGE_SIZE, IMAGE_SIZE, &f.image)?;
            file.flush()?;
        }
        let mut text = String::new();
        for (i, g) in self.grids.iter().enumerate() {
            text += &format!("-- state {i}\n{g}\n");
        }
        std::fs::write(dir.join("grids.txt"), text)?;
        Ok(())
    }
}

pub fn replay_episode(trace: &Trace) -> Result<Replay> {
    let h = &trace.header;
    let mut state = h.session.state.clone();
    let check = |step: usize, expected: &str, actual: String| {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::ReplayMismatch {
                step,
                expected: expected.to_string(),
                actual,
            })
        }
    };
    check(0, &h.initial_hash, state.state_hash())?;
    let mut frames = vec![render(&state, h.n_classes)?];
    let mut grids = vec![state.ascii(&h.class_names)];
    let mut total = 0.0;
    for (i, s) in trace.steps.iter().enumerate() {
        let event = state.step(s.action)?;
        let (reward, verdict) = judge(&event, state.agent, &h.session.target);
        if verdict.is_terminal() {
            state.terminate();
        }
        check(i + 1, &s.hash, state.state_hash())?;
        if event != s.event || reward != s.reward {
            return Err(Error::ReplayMismatch {
                step: i + 1,
                expected: format!("{:?} {}", s.event, s.reward),
                actual: format!("{event:?} {reward}"),
            });
        }
        total += reward;
        frames.push(render(&state, h.n_classes)?);
        grids.push(state.ascii(&h.class_names));
    }
    Ok(Replay {
        frames,
        grids,
        total_reward: total,
    })
}
