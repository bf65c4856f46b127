//! Multi-agent EV charging navigation.
//!
//! A discrete-event road simulator with charging stations, a future
//! charging competition (FCC) encoder, independent DQN agents, and a
//! CVAE-LSTM recommendation platform trained jointly with the agents
//! through a multiple-gradient-descent step.

pub mod cvae;
pub mod dqn;
pub mod env;
pub mod fcc;
pub mod graph;
pub mod harness;
pub mod method;
pub mod mgda;
pub mod nn;
pub mod oracle;
pub mod verify;
