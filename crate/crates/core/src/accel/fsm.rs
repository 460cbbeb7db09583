//! Layer sequencer with twelve named states.

use serde::{Deserialize, Serialize};

use super::schedule::{OpSchedule, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsmState {
    Idle,
    LoadDescriptor,
    ModeSwitch,
    LoadBias,
    LoadWeights,
    FillPipeline,
    Compute,
    Drain,
    Activate,
    Writeback,
    StateUpdate,
    Done,
}

impl FsmState {
    pub const ALL: [FsmState; 12] = [
        FsmState::Idle,
        FsmState::LoadDescriptor,
        FsmState::ModeSwitch,
        FsmState::LoadBias,
        FsmState::LoadWeights,
        FsmState::FillPipeline,
        FsmState::Compute,
        FsmState::Drain,
        FsmState::Activate,
        FsmState::Writeback,
        FsmState::StateUpdate,
        FsmState::Done,
    ];

    pub fn can_follow(self, prev: FsmState) -> bool {
        use FsmState::*;
        matches!(
            (prev, self),
            (Idle, LoadDescriptor)
                | (LoadDescriptor, ModeSwitch | LoadBias)
                | (ModeSwitch, LoadBias)
                | (LoadBias, LoadWeights)
                | (LoadWeights, FillPipeline)
                | (FillPipeline, Compute)
                | (Compute, Drain)
                | (Drain, Activate)
                | (Activate, Writeback)
                | (Writeback, StateUpdate | LoadDescriptor | Done)
                | (StateUpdate, LoadDescriptor | Done)
                | (Done, Idle)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmStep {
    pub state: FsmState,
    pub op: Option<String>,
    pub enter_cycle: u64,
    pub cycles: u64,
}

fn op_steps(op: &OpSchedule, cycle: &mut u64, out: &mut Vec<FsmStep>) {
    let o = &op.overheads;
    let mut seq = vec![(FsmState::LoadDescriptor, 0)];
    if o.mode_switch > 0 {
        seq.push((FsmState::ModeSwitch, o.mode_switch));
    }
    seq.extend([
        (FsmState::LoadBias, 0),
        (FsmState::LoadWeights, o.first_load),
        (FsmState::FillPipeline, o.fill),
        (FsmState::Compute, op.compute_cycles + op.stall_cycles),
        (FsmState::Drain, o.drain),
        (FsmState::Activate, o.activation),
        (FsmState::Writeback, 0),
    ]);
    if o.state_update > 0 {
        seq.push((FsmState::StateUpdate, o.state_update));
    }
    for (state, cycles) in seq {
        out.push(FsmStep { state, op: Some(op.name.clone()), enter_cycle: *cycle, cycles });
        *cycle += cycles;
    }
}

/// State sequence for one frame; dwell times sum to the schedule's cycles.
pub fn fsm_trace(schedule: &Schedule) -> Vec<FsmStep> {
    let mut out = vec![FsmStep { state: FsmState::Idle, op: None, enter_cycle: 0, cycles: 0 }];
    let mut cycle = 0;
    for op in schedule.ops() {
        op_steps(op, &mut cycle, &mut out);
    }
    out.push(FsmStep { state: FsmState::Done, op: None, enter_cycle: cycle, cycles: 0 });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accel::{build_schedule, HwConfig};
    use crate::network::ModelConfig;

    #[test]
    fn trace_is_legal_and_sums_to_latency() {
        let s = build_schedule(&ModelConfig::default(), &HwConfig::default()).unwrap();
        let t = fsm_trace(&s);
        for w in t.windows(2) {
            assert!(w[1].state.can_follow(w[0].state), "{:?} -> {:?}", w[0].state, w[1].state);
            assert_eq!(w[1].enter_cycle, w[0].enter_cycle + w[0].cycles);
        }
        assert_eq!(t.last().unwrap().enter_cycle, s.total_cycles);
        assert_eq!(t.iter().filter(|x| x.state == FsmState::ModeSwitch).count(), s.mode_switches);
        let mut seen: Vec<_> = t.iter().map(|x| x.state).collect();
        seen.sort_by_key(|s| FsmState::ALL.iter().position(|a| a == s));
        seen.dedup();
        assert_eq!(seen.len(), 12);
    }
}
