//! A simulation driven over the bridge.

use std::thread;
use std::time::{Duration, Instant};

use pps_sim::{Simulation, TickRecord};

use crate::protocol::{parse_command, AckPayload, ErrorPayload, Kind, StatePayload};
use crate::server::BridgeServer;
use crate::BridgeError;

/// What a [`LiveSession::step`] did.
#[derive(Debug)]
pub enum Step {
    Ran(Box<TickRecord>),
    Paused,
    Finished,
}

pub struct LiveSession {
    sim: Simulation,
    server: BridgeServer,
}

impl LiveSession {
    pub fn new(sim: Simulation, server: BridgeServer) -> Self {
        Self { sim, server }
    }

    pub fn sim(&self) -> &Simulation {
        &self.sim
    }

    pub fn server(&self) -> &BridgeServer {
        &self.server
    }

    /// Applies pending client commands in arrival order. Each one is
    /// answered to its sender with an `ack` or an `error`; a rejected
    /// command leaves the simulation untouched. Returns how many were applied.
    pub fn process_commands(&mut self) -> Result<usize, BridgeError> {
        let mut applied = 0;
        for msg in self.server.drain() {
            let reply = match parse_command(&msg.text) {
                Ok((seq, cmd)) => {
                    let name = cmd.name();
                    match self.sim.apply(cmd) {
                        Ok(()) => {
                            applied += 1;
                            log::debug!("client {}: {name} (seq {seq})", msg.client);
                            Ok(AckPayload {
                                ack_of: seq,
                                cmd: name.to_string(),
                                effect_tick: self.sim.tick(),
                            })
                        }
                        Err(e) => Err(ErrorPayload {
                            ack_of: Some(seq),
                            reason: e.to_string(),
                        }),
                    }
                }
                Err(e) => Err(ErrorPayload {
                    ack_of: e.seq,
                    reason: e.reason,
                }),
            };
            match reply {
                Ok(ack) => self.server.send_to(msg.client, Kind::Ack, &ack)?,
                Err(err) => {
                    log::info!("client {}: rejected command: {}", msg.client, err.reason);
                    self.server.send_to(msg.client, Kind::Error, &err)?
                }
            };
        }
        Ok(applied)
    }

    /// Handles commands, then runs and broadcasts one tick unless paused.
    pub fn step(&mut self) -> Result<Step, BridgeError> {
        self.process_commands()?;
        if self.sim.is_finished() {
            return Ok(Step::Finished);
        }
        if self.sim.is_paused() {
            return Ok(Step::Paused);
        }
        let record = self.sim.step()?;
        self.server
            .broadcast(Kind::State, &StatePayload::new(&record, &self.sim))?;
        Ok(Step::Ran(Box::new(record)))
    }

    /// Runs to the end of the scenario. With `realtime`, ticks are paced
    /// to the control period; otherwise they run back to back. While
    /// paused the session keeps serving commands at the control period.
    pub fn run(
        &mut self,
        realtime: bool,
        mut on_tick: impl FnMut(&TickRecord) -> Result<(), BridgeError>,
    ) -> Result<(), BridgeError> {
        let period = Duration::from_secs_f64(self.sim.period());
        let mut next = Instant::now();
        loop {
            match self.step()? {
                Step::Finished => return Ok(()),
                Step::Paused => {
                    thread::sleep(period);
                    next = Instant::now();
                }
                Step::Ran(record) => {
                    on_tick(&record)?;
                    if realtime {
                        next += period;
                        let now = Instant::now();
                        if next > now {
                            thread::sleep(next - now);
                        } else {
                            next = now;
                        }
                    }
                }
            }
        }
    }
}
